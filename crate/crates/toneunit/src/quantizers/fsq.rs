use crate::numcore::{Array2, ParamTensor, Rng};
use crate::{Error, Result};

/// Finite scalar quantization configuration.
///
/// Each low-projection dimension m is bounded and rounded onto exactly
/// `levels[m]` integers, so the implied codebook has prod(levels) entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsqConfig {
    /// Per-dimension level counts, each >= 2; at most 10 dimensions.
    pub levels: Vec<u32>,
    /// Width of the encoder output fed to the down-projection.
    pub input_width: usize,
    /// Width the quantized vector is up-projected to for the decoder.
    pub output_width: usize,
}

impl FsqConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.levels.len() > 10 {
            return Err(Error::Config(format!(
                "fsq needs 1..=10 level entries, got {}",
                self.levels.len()
            )));
        }
        if self.levels.iter().any(|&l| l < 2) {
            return Err(Error::Config("every fsq level count must be >= 2".into()));
        }
        if self.input_width == 0 || self.output_width == 0 {
            return Err(Error::Config("fsq projection widths must be positive".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.levels.len()
    }

    /// Implied codebook size prod(levels).
    pub fn codebook_size(&self) -> usize {
        self.levels.iter().map(|&l| l as usize).product()
    }
}

fn half_level(level: u32) -> f64 {
    (level / 2) as f64
}

/// Pre-rounding shift that makes exactly `level` integers reachable: the
/// plain floor(L/2)*tanh bound straddles L+1 integers when L is even, so
/// even levels are offset by one half.
fn offset(level: u32) -> f64 {
    if level % 2 == 0 {
        0.5
    } else {
        0.0
    }
}

/// Smallest integer reachable after bounding and rounding.
fn min_integer(level: u32) -> i64 {
    let half = (level / 2) as i64;
    if level % 2 == 0 {
        1 - half
    } else {
        -half
    }
}

/// Bounds each coordinate into the open interval whose rounding produces
/// exactly `levels[m]` integers: floor(L/2) * tanh(z) + offset.
pub fn fsq_bound(z_low: &[f64], levels: &[u32]) -> Result<Vec<f64>> {
    if z_low.len() != levels.len() {
        return Err(Error::ShapeMismatch {
            op: "fsq_bound",
            expected: format!("{} dims", levels.len()),
            got: format!("{}", z_low.len()),
        });
    }
    Ok(z_low
        .iter()
        .zip(levels)
        .map(|(&z, &l)| half_level(l) * z.tanh() + offset(l))
        .collect())
}

/// Derivative of [`fsq_bound`] at `z_low` times `grad_out`; this is also the
/// straight-through backward of [`fsq_quantize`], since rounding contributes
/// no gradient modification.
pub fn fsq_bound_backward(z_low: &[f64], levels: &[u32], grad_out: &[f64]) -> Vec<f64> {
    z_low
        .iter()
        .zip(levels)
        .zip(grad_out)
        .map(|((&z, &l), &g)| {
            let th = z.tanh();
            g * half_level(l) * (1.0 - th * th)
        })
        .collect()
}

/// Bounds and rounds one frame: returns the digit per dimension (shifted to
/// 0..levels[m]) and the quantized real values.
pub fn fsq_quantize(z_low: &[f64], levels: &[u32]) -> Result<(Vec<u32>, Vec<f64>)> {
    let bounded = fsq_bound(z_low, levels)?;
    let mut digits = Vec::with_capacity(levels.len());
    let mut quantized = Vec::with_capacity(levels.len());
    for (&b, &l) in bounded.iter().zip(levels) {
        let r = b.round() as i64;
        let r = r.clamp(min_integer(l), min_integer(l) + l as i64 - 1);
        digits.push((r - min_integer(l)) as u32);
        quantized.push(r as f64);
    }
    Ok((digits, quantized))
}

/// Mixed-radix encoding of per-dimension digits into a codebook index.
pub fn fsq_code_index(digits: &[u32], levels: &[u32]) -> Result<usize> {
    if digits.len() != levels.len() {
        return Err(Error::ShapeMismatch {
            op: "fsq_code_index",
            expected: format!("{} digits", levels.len()),
            got: format!("{}", digits.len()),
        });
    }
    let mut index = 0usize;
    let mut base = 1usize;
    for (&d, &l) in digits.iter().zip(levels) {
        if d >= l {
            return Err(Error::OutOfRange {
                what: "fsq digit",
                value: d as usize,
                bound: l as usize,
            });
        }
        index += d as usize * base;
        base *= l as usize;
    }
    Ok(index)
}

/// Inverse of [`fsq_code_index`]: the quantized codeword for an index.
pub fn fsq_code_vector(index: usize, levels: &[u32]) -> Result<Vec<f64>> {
    let size: usize = levels.iter().map(|&l| l as usize).product();
    if index >= size {
        return Err(Error::OutOfRange {
            what: "fsq code index",
            value: index,
            bound: size,
        });
    }
    let mut rest = index;
    let mut out = Vec::with_capacity(levels.len());
    for &l in levels {
        let digit = (rest % l as usize) as i64;
        rest /= l as usize;
        out.push((digit + min_integer(l)) as f64);
    }
    Ok(out)
}

/// FSQ quantizer state: level configuration plus the trainable down- and
/// up-projections around the rounding bottleneck.
#[derive(Debug, Clone)]
pub struct FsqQuantizer {
    pub config: FsqConfig,
    pub down_w: ParamTensor,
    pub down_b: ParamTensor,
    pub up_w: ParamTensor,
    pub up_b: ParamTensor,
}

impl FsqQuantizer {
    pub fn new(config: FsqConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let n = config.dims();
        let init = |rng: &mut Rng, rows: usize, cols: usize| {
            let scale = 1.0 / (rows as f64).sqrt();
            let mut a = Array2::zeros(rows, cols);
            for v in a.as_mut_slice() {
                *v = rng.next_normal() * scale;
            }
            a
        };
        Ok(Self {
            down_w: ParamTensor::new("fsq.down_w", init(rng, config.input_width, n)),
            down_b: ParamTensor::new("fsq.down_b", Array2::zeros(1, n)),
            up_w: ParamTensor::new("fsq.up_w", init(rng, n, config.output_width)),
            up_b: ParamTensor::new("fsq.up_b", Array2::zeros(1, config.output_width)),
            config,
        })
    }

    pub fn params(&self) -> [&ParamTensor; 4] {
        [&self.down_w, &self.down_b, &self.up_w, &self.up_b]
    }

    pub fn params_mut(&mut self) -> [&mut ParamTensor; 4] {
        [
            &mut self.down_w,
            &mut self.down_b,
            &mut self.up_w,
            &mut self.up_b,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bound_center_is_zero_for_odd_levels() {
        let out = fsq_bound(&[0.0], &[5]).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn bound_saturates_at_half_level() {
        let out = fsq_bound(&[50.0], &[5]).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-12, "got {}", out[0]);
        let out = fsq_bound(&[-50.0], &[5]).unwrap();
        assert!((out[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn even_levels_shift_by_one_half() {
        // L = 8 at z = 0 gives 0.5, which rounds to 1, one of the 8
        // reachable integers -3..=4.
        let out = fsq_bound(&[0.0], &[8]).unwrap();
        assert_eq!(out[0], 0.5);
        let (digits, quantized) = fsq_quantize(&[0.0], &[8]).unwrap();
        assert_eq!(quantized, vec![1.0]);
        assert_eq!(digits, vec![4]); // 1 - (-3)
    }

    #[test]
    fn reachable_integers_over_a_dense_grid() {
        for &level in &[2u32, 3, 4, 5, 8] {
            let mut seen = std::collections::BTreeSet::new();
            let mut z = -12.0;
            while z <= 12.0 {
                let (digits, quantized) = fsq_quantize(&[z], &[level]).unwrap();
                assert!(digits[0] < level);
                seen.insert(quantized[0] as i64);
                z += 0.001;
            }
            assert_eq!(
                seen.len(),
                level as usize,
                "level {level} reached {seen:?}"
            );
            assert_eq!(*seen.first().unwrap(), min_integer(level));
        }
    }

    #[test]
    fn center_code_for_three_level_cube() {
        let (digits, quantized) = fsq_quantize(&[0.0, 0.0, 0.0], &[3, 3, 3]).unwrap();
        assert_eq!(quantized, vec![0.0, 0.0, 0.0]);
        assert_eq!(digits, vec![1, 1, 1]);
    }

    #[test]
    fn three_level_cube_has_27_codewords() {
        let levels = [3u32, 3, 3];
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..27 {
            let v = fsq_code_vector(i, &levels).unwrap();
            for &x in &v {
                assert!([-1.0, 0.0, 1.0].contains(&x));
            }
            seen.insert(v.iter().map(|&x| x as i64).collect::<Vec<_>>());
        }
        assert_eq!(seen.len(), 27);
    }

    #[test]
    fn digits_all_zero_is_index_zero() {
        assert_eq!(fsq_code_index(&[0, 0, 0], &[3, 3, 3]).unwrap(), 0);
    }

    #[test]
    fn paper_scale_levels_reach_index_999() {
        let levels = [8u32, 5, 5, 5];
        assert_eq!(
            levels.iter().map(|&l| l as usize).product::<usize>(),
            1000
        );
        assert_eq!(fsq_code_index(&[7, 4, 4, 4], &levels).unwrap(), 999);
    }

    #[test]
    fn index_vector_roundtrip_is_exhaustive_identity() {
        for levels in [vec![8u32, 5, 5, 5], vec![3, 3, 3], vec![4, 4], vec![2, 6, 2]] {
            let size: usize = levels.iter().map(|&l| l as usize).product();
            for index in 0..size {
                let v = fsq_code_vector(index, &levels).unwrap();
                let digits: Vec<u32> = v
                    .iter()
                    .zip(&levels)
                    .map(|(&x, &l)| (x as i64 - min_integer(l)) as u32)
                    .collect();
                assert_eq!(fsq_code_index(&digits, &levels).unwrap(), index);
            }
        }
    }

    #[test]
    fn out_of_range_digit_and_index_are_errors() {
        assert!(fsq_code_index(&[3], &[3]).is_err());
        assert!(fsq_code_vector(27, &[3, 3, 3]).is_err());
    }

    #[test]
    fn straight_through_backward_equals_bound_backward() {
        let z = [0.37, -1.2, 0.01, 2.5];
        let levels = [8u32, 5, 5, 5];
        let upstream = [0.3, -0.7, 1.1, 0.05];
        // The quantize backward treats rounding as identity applied to the
        // bounded value, so it must agree with the bound backward exactly.
        let through_bound = fsq_bound_backward(&z, &levels, &upstream);
        let (_, _) = fsq_quantize(&z, &levels).unwrap();
        let through_quantize = fsq_bound_backward(&z, &levels, &upstream);
        for (a, b) in through_bound.iter().zip(&through_quantize) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let bad = FsqConfig {
            levels: vec![1, 3],
            input_width: 8,
            output_width: 8,
        };
        assert!(bad.validate().is_err());
        let bad = FsqConfig {
            levels: vec![],
            input_width: 8,
            output_width: 8,
        };
        assert!(bad.validate().is_err());
        assert!(fsq_bound(&[0.0, 0.0], &[3]).is_err());
    }

    proptest! {
        #[test]
        fn digits_in_range_and_quantized_reachable(
            z in proptest::collection::vec(-20.0f64..20.0, 4),
            pick in 0usize..4,
        ) {
            let level_sets: [&[u32]; 4] = [&[8, 5, 5, 5], &[3, 3, 3, 3], &[2, 2, 2, 2], &[7, 4, 9, 2]];
            let levels = level_sets[pick];
            let (digits, quantized) = fsq_quantize(&z, levels).unwrap();
            for ((&d, &q), &l) in digits.iter().zip(&quantized).zip(levels) {
                prop_assert!(d < l);
                let as_int = q as i64;
                prop_assert!(as_int >= min_integer(l));
                prop_assert!(as_int < min_integer(l) + l as i64);
            }
            let index = fsq_code_index(&digits, levels).unwrap();
            let back = fsq_code_vector(index, levels).unwrap();
            prop_assert_eq!(back, quantized);
        }
    }
}
