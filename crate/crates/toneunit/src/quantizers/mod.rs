//! Trainable discretization: Gumbel-Softmax vector quantization and finite
//! scalar quantization, plus the codebook-usage metric and the diversity
//! loss that keeps VQ codebooks alive.

mod fsq;
mod vq;

pub use fsq::{
    fsq_bound, fsq_bound_backward, fsq_code_index, fsq_code_vector, fsq_quantize, FsqConfig,
    FsqQuantizer,
};
pub use vq::{vq_gumbel_select, vq_temperature, VqConfig, VqQuantizer};

use crate::numcore::Array2;
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Per-utterance quantizer result: one unit index and one codeword per
/// frame. The straight-through backward contract (rounding and hard
/// selection treated as identity around the stored soft quantities) is
/// honored by the model's backward pass.
#[derive(Debug, Clone)]
pub struct QuantizerOutput {
    pub units: Vec<usize>,
    /// Codeword vectors, one row per frame.
    pub quantized: Array2,
    /// Soft selection probabilities, one row per frame (VQ only).
    pub probs: Option<Array2>,
}

/// Occurrence counts of unit indices over an evaluation pass.
#[derive(Debug, Clone, Default)]
pub struct UsageCounter {
    counts: BTreeMap<usize, u64>,
    total: u64,
}

impl UsageCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, unit: usize) {
        *self.counts.entry(unit).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn observe_all<I: IntoIterator<Item = usize>>(&mut self, units: I) {
        for u in units {
            self.observe(u);
        }
    }

    pub fn count(&self, unit: usize) -> u64 {
        self.counts.get(&unit).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts.iter().map(|(&u, &c)| (u, c))
    }
}

/// Fraction of the codebook used at least `min_count` times.
pub fn codebook_usage(
    counter: &UsageCounter,
    codebook_size: usize,
    min_count: u64,
) -> Result<f64> {
    if codebook_size == 0 {
        return Err(Error::Config("codebook_usage: empty codebook".into()));
    }
    let used = counter
        .iter()
        .filter(|&(unit, count)| unit < codebook_size && count >= min_count)
        .count();
    Ok(used as f64 / codebook_size as f64)
}

/// Diversity loss over soft selection probabilities: (V - exp H(p_bar)) / V,
/// where p_bar is the batch-mean probability vector and H is natural-log
/// entropy. Zero when selections are uniform on average, (V-1)/V when the
/// codebook has collapsed to a single entry.
pub fn diversity_loss(probs: &Array2) -> Result<f64> {
    diversity_loss_with_grad(probs).map(|(loss, _)| loss)
}

/// Diversity loss plus its gradient with respect to every probability row.
pub fn diversity_loss_with_grad(probs: &Array2) -> Result<(f64, Array2)> {
    let (n, v) = probs.shape();
    if n == 0 || v == 0 {
        return Err(Error::Contract("diversity_loss: empty probabilities".into()));
    }
    let mut mean = vec![0.0f64; v];
    for r in 0..n {
        let row = probs.row(r);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "diversity_loss: row {r} sums to {sum}, expected 1"
            )));
        }
        for (m, &p) in mean.iter_mut().zip(row.iter()) {
            *m += p;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let entropy: f64 = mean
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    let perplexity = entropy.exp();
    let loss = (v as f64 - perplexity) / v as f64;

    // d loss / d p[r][j] = perplexity / V * (ln p_bar_j + 1) / N.
    let mut grad = Array2::zeros(n, v);
    let scale = perplexity / (v as f64 * n as f64);
    for r in 0..n {
        for (g, &m) in grad.row_mut(r).iter_mut().zip(mean.iter()) {
            *g = scale * (m.max(1e-300).ln() + 1.0);
        }
    }
    Ok((loss, grad))
}
