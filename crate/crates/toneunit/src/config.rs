//! Plain-text key=value run configuration with explicit diagnostics.
//!
//! A config file overrides the built-in defaults; command-line flags
//! override the file. `seed` is the one required key when a file is given,
//! since it anchors reproducibility. Unknown keys and unparsable values are
//! errors that name the offending line.

use crate::model::QuantizerKind;
use crate::pipeline::TrainConfig;
use crate::{corpus::CorpusConfig, Error, Result};
use std::path::Path;

/// Fully resolved configuration for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn set_seed(&mut self, seed: u64) {
        self.corpus.seed = seed;
        self.train.seed = seed;
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut saw_seed = false;
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got '{raw}'", line_no + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key == "seed" {
                saw_seed = true;
            }
            config
                .apply(key, value)
                .map_err(|e| Error::Config(format!("line {}, key '{key}': {e}", line_no + 1)))?;
        }
        if !saw_seed {
            return Err(Error::Config("missing required key: seed".into()));
        }
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
            value.parse().map_err(|_| format!("cannot parse '{value}'"))
        }
        fn list(value: &str) -> Vec<String> {
            value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
        }
        match key {
            "seed" => {
                let seed = num(value)?;
                self.set_seed(seed);
            }
            "corpus.vowels" => self.corpus.vowels = list(value),
            "corpus.consonants" => self.corpus.consonants = list(value),
            "corpus.feature_width" => self.corpus.feature_width = num(value)?,
            "corpus.noise_sigma" => self.corpus.noise_sigma = num(value)?,
            "corpus.speaker_jitter_lo" => self.corpus.speaker_jitter.0 = num(value)?,
            "corpus.speaker_jitter_hi" => self.corpus.speaker_jitter.1 = num(value)?,
            "corpus.syllables_min" => self.corpus.syllables_range.0 = num(value)?,
            "corpus.syllables_max" => self.corpus.syllables_range.1 = num(value)?,
            "corpus.onset_probability" => self.corpus.onset_probability = num(value)?,
            "corpus.onset_frames_min" => self.corpus.onset_frames_range.0 = num(value)?,
            "corpus.onset_frames_max" => self.corpus.onset_frames_range.1 = num(value)?,
            "corpus.nucleus_frames_min" => self.corpus.nucleus_frames_range.0 = num(value)?,
            "corpus.nucleus_frames_max" => self.corpus.nucleus_frames_range.1 = num(value)?,
            "corpus.train_utterances" => self.corpus.train_utterances = num(value)?,
            "corpus.dev_utterances" => self.corpus.dev_utterances = num(value)?,
            "corpus.test_utterances" => self.corpus.test_utterances = num(value)?,
            "corpus.min_pair_coverage" => self.corpus.min_pair_coverage = num(value)?,
            "train.quantizer" => {
                self.train.quantizer = value.parse::<QuantizerKind>().map_err(|e| e.to_string())?
            }
            "train.epochs" => self.train.epochs = num(value)?,
            "train.batch_size" => self.train.batch_size = num(value)?,
            "train.learning_rate" => self.train.optimizer.learning_rate = num(value)?,
            "train.lr_final" => self.train.lr_final = num(value)?,
            "train.beta1" => self.train.optimizer.beta1 = num(value)?,
            "train.beta2" => self.train.optimizer.beta2 = num(value)?,
            "train.epsilon" => self.train.optimizer.epsilon = num(value)?,
            "train.weight_decay" => self.train.optimizer.weight_decay = num(value)?,
            "train.diversity_weight" => self.train.diversity_weight = num(value)?,
            "train.fsq_levels" => {
                self.train.fsq_levels = value
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|_| format!("bad level '{s}'")))
                    .collect::<std::result::Result<_, _>>()?
            }
            "train.vq_codebook_size" => self.train.vq_codebook_size = num(value)?,
            "train.kmeans_k" => self.train.kmeans_k = num(value)?,
            "train.kmeans_iters" => self.train.kmeans_iters = num(value)?,
            "train.label_fraction" => self.train.label_fraction = num(value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Canonical dump of every setting; reruns with equal configs produce
    /// byte-identical text, which also feeds the config hash.
    pub fn resolved_text(&self) -> String {
        let c = &self.corpus;
        let t = &self.train;
        let levels: Vec<String> = t.fsq_levels.iter().map(u32::to_string).collect();
        format!(
            "seed={}\n\
             corpus.vowels={}\n\
             corpus.consonants={}\n\
             corpus.feature_width={}\n\
             corpus.noise_sigma={}\n\
             corpus.speaker_jitter_lo={}\n\
             corpus.speaker_jitter_hi={}\n\
             corpus.syllables_min={}\n\
             corpus.syllables_max={}\n\
             corpus.onset_probability={}\n\
             corpus.onset_frames_min={}\n\
             corpus.onset_frames_max={}\n\
             corpus.nucleus_frames_min={}\n\
             corpus.nucleus_frames_max={}\n\
             corpus.train_utterances={}\n\
             corpus.dev_utterances={}\n\
             corpus.test_utterances={}\n\
             corpus.min_pair_coverage={}\n\
             train.quantizer={}\n\
             train.epochs={}\n\
             train.batch_size={}\n\
             train.learning_rate={}\n\
             train.beta1={}\n\
             train.beta2={}\n\
             train.epsilon={}\n\
             train.weight_decay={}\n\
             train.lr_final={}\n\
             train.diversity_weight={}\n\
             train.fsq_levels={}\n\
             train.vq_codebook_size={}\n\
             train.kmeans_k={}\n\
             train.kmeans_iters={}\n\
             train.label_fraction={}\n",
            t.seed,
            c.vowels.join(","),
            c.consonants.join(","),
            c.feature_width,
            c.noise_sigma,
            c.speaker_jitter.0,
            c.speaker_jitter.1,
            c.syllables_range.0,
            c.syllables_range.1,
            c.onset_probability,
            c.onset_frames_range.0,
            c.onset_frames_range.1,
            c.nucleus_frames_range.0,
            c.nucleus_frames_range.1,
            c.train_utterances,
            c.dev_utterances,
            c.test_utterances,
            c.min_pair_coverage,
            t.quantizer,
            t.epochs,
            t.batch_size,
            t.optimizer.learning_rate,
            t.optimizer.beta1,
            t.optimizer.beta2,
            t.optimizer.epsilon,
            t.optimizer.weight_decay,
            t.lr_final,
            t.diversity_weight,
            levels.join(","),
            t.vq_codebook_size,
            t.kmeans_k,
            t.kmeans_iters,
            t.label_fraction,
        )
    }
}

/// FNV-1a hash of a config dump, hex-encoded, for run metadata.
pub fn config_hash(text: &str) -> String {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100_0000_01B3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_back_from_resolved_text() {
        let config = RunConfig::default();
        let parsed = RunConfig::parse(&config.resolved_text()).unwrap();
        assert_eq!(config, parsed);
    }

    #[test]
    fn file_overrides_defaults() {
        let parsed = RunConfig::parse(
            "seed=7\ntrain.quantizer=vq\ncorpus.noise_sigma=0.2\ntrain.label_fraction=0.1\n",
        )
        .unwrap();
        assert_eq!(parsed.train.seed, 7);
        assert_eq!(parsed.corpus.seed, 7);
        assert_eq!(parsed.train.quantizer, QuantizerKind::Vq);
        assert_eq!(parsed.corpus.noise_sigma, 0.2);
        assert_eq!(parsed.train.label_fraction, 0.1);
    }

    #[test]
    fn missing_seed_is_named() {
        let err = RunConfig::parse("train.epochs=5\n").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_key_is_named_with_its_line() {
        let err = RunConfig::parse("seed=1\ntrain.bogus=3\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("line 2"), "{text}");
        assert!(text.contains("bogus"), "{text}");
    }

    #[test]
    fn bad_value_is_diagnosed() {
        let err = RunConfig::parse("seed=1\ntrain.epochs=many\n").unwrap_err();
        assert!(err.to_string().contains("epochs"), "{err}");
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let parsed = RunConfig::parse("# a comment\n\nseed=3\n").unwrap();
        assert_eq!(parsed.train.seed, 3);
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = config_hash("seed=1\n");
        assert_eq!(a, config_hash("seed=1\n"));
        assert_ne!(a, config_hash("seed=2\n"));
    }
}
