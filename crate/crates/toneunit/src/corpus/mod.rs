//! Deterministic synthetic tonal-syllable corpus.
//!
//! Utterances are sequences of (optional consonant onset, toned vowel
//! nucleus) syllables rendered as frame feature vectors: fixed per-phone
//! template directions plus noise, with the last two dimensions carrying
//! normalized F0 and its frame delta on vowels. The four tone contours are
//! chosen so the pooled pitch histograms of Tone 1 vs Tone 4 and Tone 2 vs
//! Tone 3 overlap heavily while cross pairs do not, which is exactly the
//! ambiguity that makes tone supervision matter.

mod features;
mod io;

pub use features::{f0_contour, phone_template, synthesize_features, ToneContours};
pub use io::{read_split, write_split};

use crate::ctc::PhoneAlphabet;
use crate::numcore::{Array2, Rng};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

pub const TONES: [u8; 4] = [1, 2, 3, 4];

/// A base phone with its lexical tone (0 marks a toneless consonant).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TonalPhone {
    pub base: String,
    pub tone: u8,
}

impl TonalPhone {
    pub fn consonant(base: impl Into<String>) -> Self {
        Self {
            base: base.into(),
            tone: 0,
        }
    }

    pub fn vowel(base: impl Into<String>, tone: u8) -> Result<Self> {
        if !TONES.contains(&tone) {
            return Err(Error::OutOfRange {
                what: "vowel tone",
                value: tone as usize,
                bound: 5,
            });
        }
        Ok(Self {
            base: base.into(),
            tone,
        })
    }

    /// Label spelling: base phone plus tone digit for vowels.
    pub fn label(&self) -> String {
        if self.tone == 0 {
            self.base.clone()
        } else {
            format!("{}{}", self.base, self.tone)
        }
    }
}

/// One syllable: an optional consonant onset and a toned vowel nucleus,
/// each with a duration in frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Syllable {
    pub onset: Option<TonalPhone>,
    pub onset_frames: usize,
    pub nucleus: TonalPhone,
    pub nucleus_frames: usize,
}

/// One corpus utterance: frame features with per-frame ground-truth labels
/// and F0 values retained as generation metadata for analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// T x F frame features.
    pub features: Array2,
    /// Tonal-phone target labels, one per segment.
    pub target: Vec<usize>,
    /// Ground-truth label per frame.
    pub frame_labels: Vec<usize>,
    /// Ground-truth F0 per frame in Hz; 0.0 on toneless frames.
    pub f0: Vec<f64>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.features.rows()
    }

    /// Contiguous (label, start, len) segments of the frame labels.
    pub fn segments(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for t in 1..=self.frame_labels.len() {
            if t == self.frame_labels.len() || self.frame_labels[t] != self.frame_labels[start] {
                out.push((self.frame_labels[start], start, t - start));
                start = t;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub vowels: Vec<String>,
    pub consonants: Vec<String>,
    pub feature_width: usize,
    pub contours: ToneContours,
    pub noise_sigma: f64,
    /// Per-utterance multiplicative F0 scale range.
    pub speaker_jitter: (f64, f64),
    pub syllables_range: (usize, usize),
    pub onset_probability: f64,
    pub onset_frames_range: (usize, usize),
    pub nucleus_frames_range: (usize, usize),
    /// Nuclei are stretched until T >= this many frames per target label
    /// (counting repeat separators), keeping every CTC target feasible
    /// after encoder downsampling.
    pub feasibility_frames_per_label: usize,
    pub train_utterances: usize,
    pub dev_utterances: usize,
    pub test_utterances: usize,
    /// Required occurrences of every (vowel, tone) pair in every split.
    pub min_pair_coverage: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            vowels: vec!["a".into(), "i".into(), "o".into()],
            consonants: vec!["p".into(), "t".into(), "k".into()],
            feature_width: 16,
            contours: ToneContours::default(),
            noise_sigma: 0.1,
            speaker_jitter: (0.9, 1.1),
            syllables_range: (3, 5),
            onset_probability: 0.7,
            onset_frames_range: (2, 4),
            nucleus_frames_range: (7, 13),
            feasibility_frames_per_label: 5,
            train_utterances: 2000,
            dev_utterances: 200,
            test_utterances: 200,
            min_pair_coverage: 20,
            seed: 42,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vowels.is_empty() || self.consonants.is_empty() {
            return Err(Error::Config("corpus needs vowels and consonants".into()));
        }
        if self.feature_width < 4 {
            return Err(Error::Config("corpus feature width must be >= 4".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("noise sigma must be >= 0".into()));
        }
        if self.onset_frames_range.0 < 2 || self.nucleus_frames_range.0 < 4 {
            return Err(Error::Config(
                "onset needs >= 2 frames, nucleus >= 4 frames".into(),
            ));
        }
        if self.syllables_range.0 < 1
            || self.syllables_range.0 > self.syllables_range.1
            || self.onset_frames_range.0 > self.onset_frames_range.1
            || self.nucleus_frames_range.0 > self.nucleus_frames_range.1
        {
            return Err(Error::Config("invalid corpus sampling ranges".into()));
        }
        if !(0.0..=1.0).contains(&self.onset_probability) {
            return Err(Error::Config("onset probability must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Alphabet implied by the inventories: blank, consonants, then each
    /// vowel in all four tones.
    pub fn alphabet(&self) -> Result<PhoneAlphabet> {
        let mut labels: Vec<String> = self.consonants.clone();
        for v in &self.vowels {
            for tone in TONES {
                labels.push(format!("{v}{tone}"));
            }
        }
        PhoneAlphabet::new(&labels)
    }
}

/// The three generated splits plus the label set they share.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub alphabet: PhoneAlphabet,
    pub feature_width: usize,
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

impl Corpus {
    pub fn split(&self, name: &str) -> Result<&[Utterance]> {
        match name {
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            other => Err(Error::Config(format!("unknown split '{other}'"))),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_split(&dir.join("train.tulb"), &self.alphabet, self.feature_width, &self.train)?;
        write_split(&dir.join("dev.tulb"), &self.alphabet, self.feature_width, &self.dev)?;
        write_split(&dir.join("test.tulb"), &self.alphabet, self.feature_width, &self.test)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let (alphabet, feature_width, train) = read_split(&dir.join("train.tulb"))?;
        let (a2, f2, dev) = read_split(&dir.join("dev.tulb"))?;
        let (a3, f3, test) = read_split(&dir.join("test.tulb"))?;
        if a2 != alphabet || a3 != alphabet || f2 != feature_width || f3 != feature_width {
            return Err(Error::CorruptFile {
                path: dir.display().to_string(),
                detail: "splits disagree on alphabet or feature width".into(),
            });
        }
        Ok(Self {
            alphabet,
            feature_width,
            train,
            dev,
            test,
        })
    }
}

fn sample_range(rng: &mut Rng, (lo, hi): (usize, usize)) -> usize {
    lo + rng.next_below(hi - lo + 1)
}

fn generate_utterance(
    config: &CorpusConfig,
    alphabet: &PhoneAlphabet,
    rng: &mut Rng,
    id: String,
) -> Result<Utterance> {
    let n_syllables = sample_range(rng, config.syllables_range);
    let mut syllables = Vec::with_capacity(n_syllables);
    for _ in 0..n_syllables {
        let onset = if rng.next_uniform() < config.onset_probability {
            let c = &config.consonants[rng.next_below(config.consonants.len())];
            Some(TonalPhone::consonant(c.clone()))
        } else {
            None
        };
        let onset_frames = sample_range(rng, config.onset_frames_range);
        let vowel = &config.vowels[rng.next_below(config.vowels.len())];
        let tone = TONES[rng.next_below(TONES.len())];
        syllables.push(Syllable {
            onset,
            onset_frames,
            nucleus: TonalPhone::vowel(vowel.clone(), tone)?,
            nucleus_frames: sample_range(rng, config.nucleus_frames_range),
        });
    }

    // Stretch nuclei until the utterance stays CTC-feasible with margin.
    let labels: Vec<String> = syllables
        .iter()
        .flat_map(|s| {
            s.onset
                .iter()
                .map(TonalPhone::label)
                .chain(std::iter::once(s.nucleus.label()))
        })
        .collect();
    let repeats = labels.windows(2).filter(|w| w[0] == w[1]).count();
    let needed = config.feasibility_frames_per_label * (labels.len() + repeats);
    let mut total: usize = syllables
        .iter()
        .map(|s| s.nucleus_frames + s.onset.as_ref().map_or(0, |_| s.onset_frames))
        .sum();
    let mut bump = 0;
    while total < needed {
        let i = bump % syllables.len();
        syllables[i].nucleus_frames += 1;
        total += 1;
        bump += 1;
    }

    let speaker_scale = rng.next_range(config.speaker_jitter.0, config.speaker_jitter.1);
    let (features, frame_labels, f0) =
        synthesize_features(&syllables, config, alphabet, speaker_scale, rng)?;
    let target = labels
        .iter()
        .map(|l| {
            alphabet
                .index_of(l)
                .ok_or_else(|| Error::Config(format!("label '{l}' missing from alphabet")))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Utterance {
        id,
        features,
        target,
        frame_labels,
        f0,
    })
}

fn generate_split(
    config: &CorpusConfig,
    alphabet: &PhoneAlphabet,
    split: &str,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<Utterance>> {
    (0..count)
        .map(|i| generate_utterance(config, alphabet, rng, format!("{split}-{i:05}")))
        .collect()
}

/// Occurrences of each (vowel, tone) pair among the targets of a split.
pub fn pair_counts(
    utterances: &[Utterance],
    alphabet: &PhoneAlphabet,
) -> BTreeMap<(String, u8), usize> {
    let mut counts = BTreeMap::new();
    for utt in utterances {
        for &label in &utt.target {
            let tone = alphabet.tone_of(label);
            if tone > 0 {
                *counts
                    .entry((alphabet.base_of(label).to_string(), tone))
                    .or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Generates the three splits from disjoint seed streams and enforces the
/// per-split (vowel, tone) coverage quota.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Corpus> {
    config.validate()?;
    let alphabet = config.alphabet()?;
    let root = Rng::new(config.seed);
    let train = generate_split(config, &alphabet, "train", config.train_utterances, &mut root.derive(1))?;
    let dev = generate_split(config, &alphabet, "dev", config.dev_utterances, &mut root.derive(2))?;
    let test = generate_split(config, &alphabet, "test", config.test_utterances, &mut root.derive(3))?;

    for (name, split) in [("train", &train), ("dev", &dev), ("test", &test)] {
        let counts = pair_counts(split, &alphabet);
        for vowel in &config.vowels {
            for tone in TONES {
                let n = counts.get(&(vowel.clone(), tone)).copied().unwrap_or(0);
                if n < config.min_pair_coverage {
                    return Err(Error::Config(format!(
                        "coverage quota unmet in {name}: ({vowel}, tone {tone}) \
                         appears {n} < {} times; increase {name} utterance count",
                        config.min_pair_coverage
                    )));
                }
            }
        }
    }

    Ok(Corpus {
        alphabet,
        feature_width: config.feature_width,
        train,
        dev,
        test,
    })
}

/// Histogram range for F0 analysis, in Hz.
pub const F0_RANGE: (f64, f64) = (80.0, 320.0);

/// Histogram of ground-truth F0 values over frames labeled (vowel, tone),
/// with uniform bins spanning [80, 320] Hz.
pub fn pitch_histogram(
    utterances: &[Utterance],
    alphabet: &PhoneAlphabet,
    vowel: &str,
    tone: u8,
    n_bins: usize,
) -> Result<Vec<u64>> {
    if n_bins == 0 {
        return Err(Error::Config("pitch_histogram needs n_bins >= 1".into()));
    }
    let label = format!("{vowel}{tone}");
    let index = alphabet
        .index_of(&label)
        .ok_or_else(|| Error::UndefinedMetric(format!("label '{label}' not in alphabet")))?;
    let mut bins = vec![0u64; n_bins];
    let width = (F0_RANGE.1 - F0_RANGE.0) / n_bins as f64;
    let mut seen = 0u64;
    for utt in utterances {
        for (t, &l) in utt.frame_labels.iter().enumerate() {
            if l == index {
                let b = ((utt.f0[t] - F0_RANGE.0) / width).floor();
                let b = (b.max(0.0) as usize).min(n_bins - 1);
                bins[b] += 1;
                seen += 1;
            }
        }
    }
    if seen == 0 {
        return Err(Error::UndefinedMetric(format!(
            "no frames labeled ({vowel}, tone {tone})"
        )));
    }
    Ok(bins)
}

/// Overlap coefficient of two histograms: sum of bin-wise minima after
/// normalizing each to unit mass.
pub fn histogram_overlap(a: &[u64], b: &[u64]) -> f64 {
    let ta: f64 = a.iter().sum::<u64>() as f64;
    let tb: f64 = b.iter().sum::<u64>() as f64;
    if ta == 0.0 || tb == 0.0 {
        return 0.0;
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / ta).min(y as f64 / tb))
        .sum()
}
