use super::{CorpusConfig, Syllable, TonalPhone};
use crate::ctc::PhoneAlphabet;
use crate::numcore::{Array2, Rng};
use crate::{Error, Result};

/// Piecewise-linear F0 contour parameters per tone, in Hz.
///
/// The constants are tuned so pooled histograms of Tone 1 vs Tone 4 and
/// Tone 2 vs Tone 3 overlap far more than the cross pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneContours {
    /// Tone 1: constant level.
    pub high_level: f64,
    /// Tone 2: linear rise (start, end).
    pub rise: (f64, f64),
    /// Tone 3: two-segment dip (start, minimum, end).
    pub dip: (f64, f64, f64),
    /// Fraction of the duration at which the Tone 3 minimum sits.
    pub dip_position: f64,
    /// Tone 4: linear fall (start, end).
    pub fall: (f64, f64),
}

impl Default for ToneContours {
    fn default() -> Self {
        Self {
            high_level: 220.0,
            rise: (150.0, 215.0),
            dip: (165.0, 120.0, 170.0),
            dip_position: 0.6,
            fall: (250.0, 155.0),
        }
    }
}

/// F0 contour of a vowel nucleus: `n_frames` values scaled by the
/// per-utterance speaker factor.
pub fn f0_contour(
    contours: &ToneContours,
    tone: u8,
    n_frames: usize,
    speaker_scale: f64,
) -> Result<Vec<f64>> {
    if !(1..=4).contains(&tone) {
        return Err(Error::OutOfRange {
            what: "tone",
            value: tone as usize,
            bound: 5,
        });
    }
    if n_frames == 0 {
        return Err(Error::Config("f0_contour needs n_frames >= 1".into()));
    }
    let mut out = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let u = if n_frames == 1 {
            0.0
        } else {
            i as f64 / (n_frames - 1) as f64
        };
        let hz = match tone {
            1 => contours.high_level,
            2 => {
                let (a, b) = contours.rise;
                a + (b - a) * u
            }
            3 => {
                let (a, m, b) = contours.dip;
                let p = contours.dip_position;
                if u <= p {
                    a + (m - a) * (u / p)
                } else {
                    m + (b - m) * ((u - p) / (1.0 - p))
                }
            }
            _ => {
                let (a, b) = contours.fall;
                a + (b - a) * u
            }
        };
        out.push(hz * speaker_scale);
    }
    Ok(out)
}

/// Fixed seed for the phone template directions; templates are part of the
/// feature definition, never of a particular corpus draw.
const TEMPLATE_SEED: u64 = 0x544F_4E45;

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100_0000_01B3);
    }
    h
}

/// Deterministic unit-norm template direction for a base phone over the
/// first F-2 feature dimensions. Independent random directions are near
/// orthogonal at these widths.
pub fn phone_template(base: &str, dims: usize) -> Vec<f64> {
    let mut rng = Rng::new(TEMPLATE_SEED).derive(fnv1a(base));
    let mut v: Vec<f64> = (0..dims).map(|_| rng.next_normal()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    for x in &mut v {
        *x /= norm;
    }
    v
}

const F0_CENTER: f64 = 200.0;
const F0_SPREAD: f64 = 60.0;
const F0_DELTA_SPREAD: f64 = 5.0;

/// Renders syllables into frame features.
///
/// Every value is rounded through f32 so the in-memory corpus is bit-exact
/// with its on-disk representation. Returns (features, per-frame labels,
/// per-frame F0 in Hz with 0.0 on toneless frames).
pub fn synthesize_features(
    syllables: &[Syllable],
    config: &CorpusConfig,
    alphabet: &PhoneAlphabet,
    speaker_scale: f64,
    rng: &mut Rng,
) -> Result<(Array2, Vec<usize>, Vec<f64>)> {
    let f = config.feature_width;
    let template_dims = f - 2;
    let total: usize = syllables
        .iter()
        .map(|s| s.nucleus_frames + s.onset.as_ref().map_or(0, |_| s.onset_frames))
        .sum();

    let mut features = Array2::zeros(total, f);
    let mut frame_labels = Vec::with_capacity(total);
    let mut f0_out = Vec::with_capacity(total);
    let round = |x: f64| x as f32 as f64;

    let mut t = 0;
    let mut emit = |phone: &TonalPhone,
                    n_frames: usize,
                    contour: Option<&[f64]>,
                    features: &mut Array2,
                    frame_labels: &mut Vec<usize>,
                    f0_out: &mut Vec<f64>,
                    rng: &mut Rng|
     -> Result<()> {
        let label = alphabet
            .index_of(&phone.label())
            .ok_or_else(|| Error::Config(format!("phone '{}' not in alphabet", phone.label())))?;
        let template = phone_template(&phone.base, template_dims);
        for i in 0..n_frames {
            let row = features.row_mut(t);
            for (d, &base) in template.iter().enumerate() {
                row[d] = round(base + config.noise_sigma * rng.next_normal());
            }
            let (norm_f0, delta, hz) = match contour {
                Some(c) => {
                    let hz = c[i];
                    let delta = if c.len() == 1 {
                        0.0
                    } else if i == 0 {
                        c[1] - c[0]
                    } else {
                        c[i] - c[i - 1]
                    };
                    ((hz - F0_CENTER) / F0_SPREAD, delta / F0_DELTA_SPREAD, hz)
                }
                None => (0.0, 0.0, 0.0),
            };
            row[f - 2] = round(norm_f0 + config.noise_sigma * rng.next_normal());
            row[f - 1] = round(delta + config.noise_sigma * rng.next_normal());
            frame_labels.push(label);
            f0_out.push(round(hz));
            t += 1;
        }
        Ok(())
    };

    for syl in syllables {
        if let Some(onset) = &syl.onset {
            emit(
                onset,
                syl.onset_frames,
                None,
                &mut features,
                &mut frame_labels,
                &mut f0_out,
                rng,
            )?;
        }
        let contour = f0_contour(
            &config.contours,
            syl.nucleus.tone,
            syl.nucleus_frames,
            speaker_scale,
        )?;
        emit(
            &syl.nucleus,
            syl.nucleus_frames,
            Some(&contour),
            &mut features,
            &mut frame_labels,
            &mut f0_out,
            rng,
        )?;
    }
    Ok((features, frame_labels, f0_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, pitch_histogram, CorpusConfig, TONES};

    #[test]
    fn tone_one_is_constant() {
        let c = ToneContours::default();
        let f0 = f0_contour(&c, 1, 7, 1.0).unwrap();
        assert!(f0.iter().all(|&v| v == 220.0));
        let scaled = f0_contour(&c, 1, 3, 1.05).unwrap();
        assert!(scaled.iter().all(|&v| (v - 231.0).abs() < 1e-12));
    }

    #[test]
    fn tone_four_endpoints() {
        let c = ToneContours::default();
        assert_eq!(f0_contour(&c, 4, 2, 1.0).unwrap(), vec![250.0, 155.0]);
    }

    #[test]
    fn tone_three_dips_at_sixty_percent() {
        let c = ToneContours::default();
        let f0 = f0_contour(&c, 3, 11, 1.0).unwrap();
        let min_pos = f0
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(min_pos, 6); // 60% of 10 intervals
        assert!((f0[6] - 120.0).abs() < 1e-12);
        assert!((f0[0] - 165.0).abs() < 1e-12);
        assert!((f0[10] - 170.0).abs() < 1e-12);
    }

    #[test]
    fn tone_two_rises_monotonically() {
        let c = ToneContours::default();
        let f0 = f0_contour(&c, 2, 6, 1.0).unwrap();
        assert!(f0.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(f0[0], 150.0);
        assert_eq!(f0[5], 215.0);
    }

    #[test]
    fn invalid_tone_is_a_range_error() {
        let c = ToneContours::default();
        assert!(f0_contour(&c, 0, 4, 1.0).is_err());
        assert!(f0_contour(&c, 5, 4, 1.0).is_err());
    }

    #[test]
    fn templates_are_deterministic_unit_vectors() {
        let a = phone_template("a", 14);
        let b = phone_template("a", 14);
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        let other = phone_template("i", 14);
        let dot: f64 = a.iter().zip(&other).map(|(x, y)| x * y).sum();
        assert!(dot.abs() < 0.9, "templates nearly collinear: {dot}");
    }

    fn one_syllable(tone: u8, frames: usize) -> Vec<Syllable> {
        vec![Syllable {
            onset: None,
            onset_frames: 0,
            nucleus: TonalPhone::vowel("a", tone).unwrap(),
            nucleus_frames: frames,
        }]
    }

    #[test]
    fn noiseless_level_tone_frames_are_identical() {
        let config = CorpusConfig {
            noise_sigma: 0.0,
            ..CorpusConfig::default()
        };
        let alphabet = config.alphabet().unwrap();
        let syllables = one_syllable(1, 6);
        let (features, labels, f0) =
            synthesize_features(&syllables, &config, &alphabet, 1.0, &mut Rng::new(0)).unwrap();
        let first = features.row(0).to_vec();
        for t in 1..6 {
            assert_eq!(features.row(t), &first[..]);
        }
        assert!(labels.iter().all(|&l| l == alphabet.index_of("a1").unwrap()));
        assert!(f0.iter().all(|&v| v == 220.0));
    }

    #[test]
    fn noiseless_segments_differ_by_template_distance() {
        let config = CorpusConfig {
            noise_sigma: 0.0,
            ..CorpusConfig::default()
        };
        let alphabet = config.alphabet().unwrap();
        let syllables = vec![
            Syllable {
                onset: None,
                onset_frames: 0,
                nucleus: TonalPhone::vowel("a", 1).unwrap(),
                nucleus_frames: 4,
            },
            Syllable {
                onset: None,
                onset_frames: 0,
                nucleus: TonalPhone::vowel("i", 1).unwrap(),
                nucleus_frames: 4,
            },
        ];
        let (features, _, _) =
            synthesize_features(&syllables, &config, &alphabet, 1.0, &mut Rng::new(0)).unwrap();
        let f = config.feature_width;
        let ta = phone_template("a", f - 2);
        let ti = phone_template("i", f - 2);
        let expected: f64 = ta
            .iter()
            .zip(&ti)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let got: f64 = (0..f - 2)
            .map(|d| {
                let diff = features[(0, d)] - features[(4, d)];
                diff * diff
            })
            .sum::<f64>()
            .sqrt();
        // f32 rounding of the stored features perturbs the distance slightly.
        assert!((got - expected).abs() < 1e-5, "{got} vs {expected}");
    }

    #[test]
    fn synthesis_is_bitwise_deterministic() {
        let config = CorpusConfig::default();
        let alphabet = config.alphabet().unwrap();
        let syllables = one_syllable(3, 8);
        let run = || {
            synthesize_features(&syllables, &config, &alphabet, 0.97, &mut Rng::new(9)).unwrap()
        };
        let (fa, la, f0a) = run();
        let (fb, lb, f0b) = run();
        assert_eq!(fa, fb);
        assert_eq!(la, lb);
        assert_eq!(
            f0a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            f0b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn pooled_earth_mover_distances_order_the_tone_pairs() {
        // EMD(T1, T4) < EMD(T1, T2) on pooled nuclei from generated data.
        let config = CorpusConfig {
            train_utterances: 250,
            dev_utterances: 40,
            test_utterances: 40,
            min_pair_coverage: 5,
            ..CorpusConfig::default()
        };
        let corpus = generate_corpus(&config).unwrap();
        let pooled = |tone: u8| {
            let mut acc = vec![0u64; 24];
            for vowel in ["a", "i", "o"] {
                let h = pitch_histogram(&corpus.train, &corpus.alphabet, vowel, tone, 24).unwrap();
                for (a, b) in acc.iter_mut().zip(h) {
                    *a += b;
                }
            }
            acc
        };
        let emd = |a: &[u64], b: &[u64]| {
            let ta: f64 = a.iter().sum::<u64>() as f64;
            let tb: f64 = b.iter().sum::<u64>() as f64;
            let mut cum_a = 0.0;
            let mut cum_b = 0.0;
            let mut d = 0.0;
            for (&x, &y) in a.iter().zip(b) {
                cum_a += x as f64 / ta;
                cum_b += y as f64 / tb;
                d += (cum_a - cum_b).abs();
            }
            d
        };
        let hists: Vec<Vec<u64>> = TONES.iter().map(|&t| pooled(t)).collect();
        let d14 = emd(&hists[0], &hists[3]);
        let d12 = emd(&hists[0], &hists[1]);
        assert!(d14 < d12, "emd(T1,T4)={d14} vs emd(T1,T2)={d12}");
    }
}
