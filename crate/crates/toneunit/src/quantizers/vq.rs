use crate::numcore::{softmax_row, Array2, ParamTensor, Rng};
use crate::{Error, Result};

/// Gumbel-Softmax vector quantization configuration (single codebook).
#[derive(Debug, Clone, PartialEq)]
pub struct VqConfig {
    /// Codebook size V.
    pub codebook_size: usize,
    /// Code vector dimension d.
    pub dim: usize,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Multiplicative temperature decay per optimizer step.
    pub tau_decay: f64,
    /// Diversity-loss weight alpha.
    pub diversity_weight: f64,
}

impl VqConfig {
    pub fn validate(&self) -> Result<()> {
        if self.codebook_size < 2 {
            return Err(Error::Config("vq codebook size must be >= 2".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("vq code dimension must be positive".into()));
        }
        if self.tau_start <= 0.0 || self.tau_end <= 0.0 || self.tau_decay <= 0.0 {
            return Err(Error::Config("vq temperatures must stay positive".into()));
        }
        if self.diversity_weight < 0.0 {
            return Err(Error::Config("vq diversity weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// Annealed temperature after `step` optimizer updates.
pub fn vq_temperature(config: &VqConfig, step: u64) -> f64 {
    (config.tau_start * config.tau_decay.powi(step as i32)).max(config.tau_end)
}

/// One Gumbel-Softmax selection: soft probabilities over the codebook and
/// the argmax index.
///
/// During training, Gumbel noise v = -log(-log(u)) is added to the logits;
/// during evaluation the noise is zero and the draw is deterministic. The
/// returned probabilities carry the backward contract: the selected code
/// vector's gradient flows through them rather than through the argmax.
pub fn vq_gumbel_select(
    logits: &[f64],
    tau: f64,
    rng: Option<&mut Rng>,
    training: bool,
) -> Result<(usize, Vec<f64>)> {
    if tau <= 0.0 {
        return Err(Error::Config(format!("vq temperature {tau} must be > 0")));
    }
    let noised: Vec<f64> = if training {
        let rng = rng.ok_or_else(|| {
            Error::Config("vq_gumbel_select: training mode needs an rng".into())
        })?;
        logits
            .iter()
            .map(|&l| (l + crate::numcore::gumbel_from_uniform(rng.next_uniform())) / tau)
            .collect()
    } else {
        logits.iter().map(|&l| l / tau).collect()
    };
    let probs = softmax_row(&noised);
    let mut index = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p > probs[index] {
            index = j;
        }
    }
    Ok((index, probs))
}

/// VQ quantizer state: the learnable codebook and the linear map from
/// encoder output to selection logits.
#[derive(Debug, Clone)]
pub struct VqQuantizer {
    pub config: VqConfig,
    /// Codebook, V x d.
    pub codebook: ParamTensor,
    pub logits_w: ParamTensor,
    pub logits_b: ParamTensor,
}

impl VqQuantizer {
    pub fn new(config: VqConfig, input_width: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let init = |rng: &mut Rng, rows: usize, cols: usize, scale: f64| {
            let mut a = Array2::zeros(rows, cols);
            for v in a.as_mut_slice() {
                *v = rng.next_normal() * scale;
            }
            a
        };
        let code_scale = 1.0 / (config.dim as f64).sqrt();
        let w_scale = 1.0 / (input_width as f64).sqrt();
        Ok(Self {
            codebook: ParamTensor::new(
                "vq.codebook",
                init(rng, config.codebook_size, config.dim, code_scale),
            ),
            logits_w: ParamTensor::new(
                "vq.logits_w",
                init(rng, input_width, config.codebook_size, w_scale),
            ),
            logits_b: ParamTensor::new("vq.logits_b", Array2::zeros(1, config.codebook_size)),
            config,
        })
    }

    pub fn params(&self) -> [&ParamTensor; 3] {
        [&self.codebook, &self.logits_w, &self.logits_b]
    }

    pub fn params_mut(&mut self) -> [&mut ParamTensor; 3] {
        [&mut self.codebook, &mut self.logits_w, &mut self.logits_b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_config(v: usize) -> VqConfig {
        VqConfig {
            codebook_size: v,
            dim: 8,
            tau_start: 2.0,
            tau_end: 0.5,
            tau_decay: 0.9995,
            diversity_weight: 0.1,
        }
    }

    #[test]
    fn uniform_logits_give_uniform_probabilities() {
        let (_, probs) = vq_gumbel_select(&[0.7; 6], 1.0, None, false).unwrap();
        for &p in &probs {
            assert!((p - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_logit_saturates_at_low_temperature() {
        let mut logits = vec![0.0; 5];
        logits[3] = 100.0;
        let (index, probs) = vq_gumbel_select(&logits, 0.1, None, false).unwrap();
        assert_eq!(index, 3);
        assert!(probs[3] > 1.0 - 1e-9);
    }

    #[test]
    fn probabilities_always_form_a_distribution() {
        let mut rng = Rng::new(17);
        for _ in 0..100 {
            let logits: Vec<f64> = (0..7).map(|_| rng.next_normal() * 3.0).collect();
            let (index, probs) =
                vq_gumbel_select(&logits, 0.7, Some(&mut rng), true).unwrap();
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            let max = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(index, max);
        }
    }

    #[test]
    fn selection_frequencies_match_the_softmax_of_logits() {
        // Gumbel-argmax draws follow softmax(l) exactly, independent of tau.
        let logits = [1.2, 0.0, -0.5, 0.8];
        let expected = softmax_row(&logits);
        let mut rng = Rng::new(4242);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            let (index, _) = vq_gumbel_select(&logits, 1.0, Some(&mut rng), true).unwrap();
            counts[index] += 1;
        }
        for (j, &c) in counts.iter().enumerate() {
            let freq = c as f64 / draws as f64;
            assert!(
                (freq - expected[j]).abs() < 0.01,
                "entry {j}: freq {freq} vs softmax {}",
                expected[j]
            );
        }
    }

    #[test]
    fn eval_mode_is_deterministic_and_noise_free() {
        let logits = [0.3, 1.7, -0.2];
        let a = vq_gumbel_select(&logits, 0.8, None, false).unwrap();
        let b = vq_gumbel_select(&logits, 0.8, None, false).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, 1);
    }

    #[test]
    fn non_positive_temperature_is_a_configuration_error() {
        assert!(vq_gumbel_select(&[0.0, 1.0], 0.0, None, false).is_err());
        assert!(vq_gumbel_select(&[0.0, 1.0], -1.0, None, false).is_err());
    }

    #[test]
    fn training_without_rng_is_an_error() {
        assert!(vq_gumbel_select(&[0.0, 1.0], 1.0, None, true).is_err());
    }

    #[test]
    fn temperature_schedule_decays_to_the_floor() {
        let config = test_config(10);
        assert_eq!(vq_temperature(&config, 0), 2.0);
        let mid = vq_temperature(&config, 1000);
        assert!(mid < 2.0 && mid > 0.5);
        assert_eq!(vq_temperature(&config, 100_000), 0.5);
    }

    #[test]
    fn config_validation() {
        let mut c = test_config(1);
        assert!(c.validate().is_err());
        c.codebook_size = 8;
        c.tau_end = 0.0;
        assert!(c.validate().is_err());
        c.tau_end = 0.5;
        c.diversity_weight = -0.1;
        assert!(c.validate().is_err());
    }
}
