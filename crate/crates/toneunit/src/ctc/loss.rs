use super::BLANK;
use crate::numcore::Array2;
use crate::{Error, Result};

/// One CTC scoring problem: per-frame log-probability rows over the alphabet
/// (blank included) and a blank-free target label sequence.
#[derive(Debug, Clone)]
pub struct CtcInstance {
    pub log_probs: Array2,
    pub target: Vec<usize>,
}

impl CtcInstance {
    pub fn new(log_probs: Array2, target: Vec<usize>) -> Result<Self> {
        let s = log_probs.cols();
        if log_probs.rows() == 0 || s < 2 {
            return Err(Error::Contract(format!(
                "CTC instance needs T >= 1 frames and S >= 2 labels, got {}x{s}",
                log_probs.rows()
            )));
        }
        for &l in &target {
            if l == BLANK {
                return Err(Error::Contract("blank in CTC target".into()));
            }
            if l >= s {
                return Err(Error::OutOfRange {
                    what: "target label",
                    value: l,
                    bound: s,
                });
            }
        }
        Ok(Self { log_probs, target })
    }

    /// Minimum number of frames any valid alignment needs: one per label
    /// plus a separating blank between adjacent repeats.
    pub fn min_frames(&self) -> usize {
        let repeats = self
            .target
            .windows(2)
            .filter(|w| w[0] == w[1])
            .count();
        self.target.len() + repeats
    }
}

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Extended target with blanks woven between labels and at both ends.
fn extend_target(target: &[usize]) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &l in target {
        ext.push(l);
        ext.push(BLANK);
    }
    ext
}

/// Log-domain forward-backward CTC loss with its analytic gradient with
/// respect to the log-probability inputs.
///
/// The loss is -log of the total probability over all alignments whose
/// collapse equals the target. An infeasible target (more labels plus
/// required separating blanks than frames) is a hard error rather than an
/// infinite loss.
pub fn ctc_loss(instance: &CtcInstance) -> Result<(f64, Array2)> {
    let lp = &instance.log_probs;
    let t_len = lp.rows();
    let needed = instance.min_frames();
    if t_len < needed {
        return Err(Error::InfeasibleTarget {
            needed,
            got: t_len,
        });
    }

    let ext = extend_target(&instance.target);
    let u = ext.len();
    let neg_inf = f64::NEG_INFINITY;

    // Forward variables, including the frame emission at (t, s).
    let mut alpha = Array2::filled(t_len, u, neg_inf);
    alpha[(0, 0)] = lp[(0, ext[0])];
    if u > 1 {
        alpha[(0, 1)] = lp[(0, ext[1])];
    }
    for t in 1..t_len {
        for s in 0..u {
            let mut acc = alpha[(t - 1, s)];
            if s >= 1 {
                acc = log_sum_exp2(acc, alpha[(t - 1, s - 1)]);
            }
            if s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2] {
                acc = log_sum_exp2(acc, alpha[(t - 1, s - 2)]);
            }
            alpha[(t, s)] = acc + lp[(t, ext[s])];
        }
    }
    let mut log_p = alpha[(t_len - 1, u - 1)];
    if u > 1 {
        log_p = log_sum_exp2(log_p, alpha[(t_len - 1, u - 2)]);
    }

    // Backward variables, also including the emission at (t, s).
    let mut beta = Array2::filled(t_len, u, neg_inf);
    beta[(t_len - 1, u - 1)] = lp[(t_len - 1, ext[u - 1])];
    if u > 1 {
        beta[(t_len - 1, u - 2)] = lp[(t_len - 1, ext[u - 2])];
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..u {
            let mut acc = beta[(t + 1, s)];
            if s + 1 < u {
                acc = log_sum_exp2(acc, beta[(t + 1, s + 1)]);
            }
            if s + 2 < u && ext[s + 2] != BLANK && ext[s + 2] != ext[s] {
                acc = log_sum_exp2(acc, beta[(t + 1, s + 2)]);
            }
            beta[(t, s)] = acc + lp[(t, ext[s])];
        }
    }

    // d(-log P)/d(log p_t(k)) = -exp(lse_{s: ext[s]=k}(alpha + beta) - lp - log P);
    // alpha_t(s) * beta_t(s) double-counts the emission at (t, s), which the
    // single lp subtraction removes.
    let mut grad = Array2::zeros(t_len, lp.cols());
    for t in 0..t_len {
        let mut per_label = vec![neg_inf; lp.cols()];
        for s in 0..u {
            let k = ext[s];
            per_label[k] = log_sum_exp2(per_label[k], alpha[(t, s)] + beta[(t, s)]);
        }
        for (k, &acc) in per_label.iter().enumerate() {
            if acc != neg_inf {
                grad[(t, k)] = -((acc - lp[(t, k)] - log_p).exp());
            }
        }
    }

    Ok((-log_p, grad))
}

/// Exhaustive CTC oracle: enumerates every length-T label sequence, keeps
/// the ones that collapse to the target, and sums their probabilities in
/// linear space. Refuses when S^T exceeds the enumeration bound of 1e7.
pub fn brute_force_ctc(instance: &CtcInstance) -> Result<f64> {
    const BOUND: u128 = 10_000_000;
    let lp = &instance.log_probs;
    let (t_len, s) = lp.shape();
    let states = (s as u128).pow(t_len as u32);
    if states > BOUND {
        return Err(Error::EnumerationBound {
            states,
            bound: BOUND,
        });
    }

    let mut total = 0.0f64;
    let mut seq = vec![0usize; t_len];
    loop {
        if collapse(&seq) == instance.target {
            let log_prob: f64 = seq.iter().enumerate().map(|(t, &k)| lp[(t, k)]).sum();
            total += log_prob.exp();
        }
        // Next sequence in base-S counting order.
        let mut pos = 0;
        loop {
            if pos == t_len {
                if total == 0.0 {
                    return Err(Error::InfeasibleTarget {
                        needed: instance.min_frames(),
                        got: t_len,
                    });
                }
                return Ok(-total.ln());
            }
            seq[pos] += 1;
            if seq[pos] < s {
                break;
            }
            seq[pos] = 0;
            pos += 1;
        }
    }
}

/// First collapse rule: merge adjacent repeats. Idempotent.
pub fn merge_repeats(seq: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(seq.len());
    for &l in seq {
        if out.last() != Some(&l) {
            out.push(l);
        }
    }
    out
}

/// Second collapse rule: drop blanks. Idempotent.
pub fn remove_blanks(seq: &[usize]) -> Vec<usize> {
    seq.iter().copied().filter(|&l| l != BLANK).collect()
}

/// CTC collapse: merge adjacent repeats, then drop blanks. The rule order
/// matters: a blank between repeats survives the merge and keeps them
/// distinct ([a, blank, a] collapses to [a, a]).
pub fn collapse(seq: &[usize]) -> Vec<usize> {
    remove_blanks(&merge_repeats(seq))
}

/// Best-path decoding: per-frame argmax (ties to the lowest index), then
/// collapse.
pub fn ctc_greedy_decode(log_probs: &Array2) -> Vec<usize> {
    let mut path = Vec::with_capacity(log_probs.rows());
    for t in 0..log_probs.rows() {
        let row = log_probs.row(t);
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        path.push(best);
    }
    collapse(&path)
}
