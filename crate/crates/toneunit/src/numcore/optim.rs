use super::Array2;
use crate::{Error, Result};

/// A named parameter with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub name: String,
    pub value: Array2,
    pub grad: Array2,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: Array2) -> Self {
        let grad = Array2::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.98,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW with decoupled weight decay.
///
/// Moments are allocated on the first step and keyed by parameter order,
/// which must stay fixed across steps.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    moments: Vec<(Array2, Array2)>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter from its accumulated gradient.
    ///
    /// A non-finite gradient aborts the step with the offending parameter
    /// named; parameter values are untouched in that case.
    pub fn step(&mut self, params: &mut [&mut ParamTensor]) -> Result<()> {
        for p in params.iter() {
            if !p.grad.is_finite() {
                return Err(Error::NonFiniteGradient {
                    name: p.name.clone(),
                });
            }
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| {
                    let (r, c) = p.value.shape();
                    (Array2::zeros(r, c), Array2::zeros(r, c))
                })
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(Error::Config(format!(
                "optimizer saw {} parameters, expected {}",
                params.len(),
                self.moments.len()
            )));
        }

        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);

        for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
            debug_assert!(p.value.same_shape(m));
            let values = p.value.as_mut_slice();
            let grads = p.grad.as_slice();
            let m = m.as_mut_slice();
            let v = v.as_mut_slice();
            for i in 0..values.len() {
                let g = grads[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                values[i] -=
                    c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon) + c.weight_decay * values[i]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(name: &str, values: Vec<f64>) -> ParamTensor {
        let n = values.len();
        ParamTensor::new(name, Array2::from_vec(1, n, values).unwrap())
    }

    #[test]
    fn zero_gradient_zero_decay_is_identity() {
        let mut p = param("w", vec![1.5, -2.5, 0.0]);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        });
        for _ in 0..10 {
            opt.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value.as_slice(), &[1.5, -2.5, 0.0]);
        assert_eq!(opt.step_count(), 10);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut p = param("w", vec![0.0, 0.0]);
        p.grad.as_mut_slice().copy_from_slice(&[1.0, -3.0]);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        });
        for _ in 0..50 {
            opt.step(&mut [&mut p]).unwrap();
        }
        assert!(p.value.as_slice()[0] < 0.0);
        assert!(p.value.as_slice()[1] > 0.0);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // lr = 0.1, beta1 = 0.9, beta2 = 0.98, eps = 1e-8, decay = 0.01,
        // theta = 2.0, g = 0.5, t = 1:
        //   m = 0.05, v = 0.005, m_hat = 0.5, v_hat = 0.25
        //   theta' = 2.0 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.01 * 2.0)
        let mut p = param("w", vec![2.0]);
        p.grad.as_mut_slice()[0] = 0.5;
        let mut opt = AdamW::new(AdamWConfig {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.98,
            epsilon: 1e-8,
            weight_decay: 0.01,
        });
        opt.step(&mut [&mut p]).unwrap();
        let expected = 2.0 - 0.1 * (0.5 / (0.25f64.sqrt() + 1e-8) + 0.01 * 2.0);
        assert!(
            (p.value.as_slice()[0] - expected).abs() < 1e-15,
            "got {}, expected {expected}",
            p.value.as_slice()[0]
        );
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut good = param("encoder.w", vec![1.0]);
        let mut bad = param("decoder.w", vec![1.0]);
        bad.grad.as_mut_slice()[0] = f64::NAN;
        let mut opt = AdamW::new(AdamWConfig::default());
        let err = opt.step(&mut [&mut good, &mut bad]).unwrap_err();
        match err {
            Error::NonFiniteGradient { name } => assert_eq!(name, "decoder.w"),
            other => panic!("unexpected error {other:?}"),
        }
        // Values untouched, step not counted.
        assert_eq!(good.value.as_slice(), &[1.0]);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let run = || {
            let mut p = param("w", vec![0.3, -0.7]);
            let mut opt = AdamW::new(AdamWConfig::default());
            for i in 0..100 {
                let g = ((i * 7 + 3) % 11) as f64 / 11.0 - 0.5;
                p.grad.as_mut_slice().copy_from_slice(&[g, -g]);
                opt.step(&mut [&mut p]).unwrap();
            }
            p.value.as_slice().to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
