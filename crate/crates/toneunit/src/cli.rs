//! Subcommand implementations behind the `toneunit` binary.
//!
//! Every command resolves its configuration (defaults, then config file,
//! then flags), writes that resolved config beside its outputs, and refuses
//! to overwrite existing outputs unless forced.

use crate::config::{config_hash, RunConfig};
use crate::corpus::{pair_counts, pitch_histogram, Corpus, F0_RANGE, TONES};
use crate::model::QuantizerKind;
use crate::pipeline::{
    build_kmeans_baseline, dedup, evaluate, extract_units, format_train_log, load_checkpoint,
    save_checkpoint, train,
};
use crate::{Error, Result};
use std::path::{Path, PathBuf};

/// Flag-level overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub quantizer: Option<QuantizerKind>,
    pub label_fraction: Option<f64>,
}

pub fn resolve_config(config_path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut config = match config_path {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        config.set_seed(seed);
    }
    if let Some(kind) = overrides.quantizer {
        config.train.quantizer = kind;
    }
    if let Some(fraction) = overrides.label_fraction {
        config.train.label_fraction = fraction;
    }
    Ok(config)
}

fn ensure_writable(paths: &[PathBuf], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    for p in paths {
        if p.exists() {
            return Err(Error::WouldOverwrite(p.display().to_string()));
        }
    }
    Ok(())
}

fn write_run_config(out_dir: &Path, config: &RunConfig) -> Result<String> {
    let text = config.resolved_text();
    std::fs::write(out_dir.join("run_config.txt"), &text)?;
    Ok(config_hash(&text))
}

/// Generates the three corpus splits plus a generation manifest.
pub fn cmd_gen_corpus(
    config_path: Option<&Path>,
    out_dir: &Path,
    overrides: &Overrides,
    force: bool,
) -> Result<()> {
    let config = resolve_config(config_path, overrides)?;
    let outputs: Vec<PathBuf> = ["train.tulb", "dev.tulb", "test.tulb", "manifest.txt", "run_config.txt"]
        .iter()
        .map(|n| out_dir.join(n))
        .collect();
    ensure_writable(&outputs, force)?;
    std::fs::create_dir_all(out_dir)?;

    let corpus = crate::corpus::generate_corpus(&config.corpus)?;
    corpus.write(out_dir)?;
    let hash = write_run_config(out_dir, &config)?;

    let mut manifest = String::new();
    manifest.push_str(&format!("seed={}\n", config.corpus.seed));
    manifest.push_str(&format!("config_hash={hash}\n"));
    manifest.push_str(&format!("alphabet={}\n", corpus.alphabet.labels().join(",")));
    for (name, split) in [
        ("train", &corpus.train),
        ("dev", &corpus.dev),
        ("test", &corpus.test),
    ] {
        manifest.push_str(&format!("{name}.utterances={}\n", split.len()));
        let frames: usize = split.iter().map(|u| u.frames()).sum();
        manifest.push_str(&format!("{name}.frames={frames}\n"));
        for ((vowel, tone), count) in pair_counts(split, &corpus.alphabet) {
            manifest.push_str(&format!("{name}.coverage.{vowel}{tone}={count}\n"));
        }
    }
    std::fs::write(out_dir.join("manifest.txt"), manifest)?;
    Ok(())
}

/// Trains a model (or fits the k-means baseline) and writes the checkpoint
/// with the best dev PER plus the per-epoch training log.
pub fn cmd_train(
    corpus_dir: &Path,
    config_path: Option<&Path>,
    out_dir: &Path,
    overrides: &Overrides,
    force: bool,
) -> Result<()> {
    let config = resolve_config(config_path, overrides)?;
    let outputs: Vec<PathBuf> = ["checkpoint.tuck", "train_log.txt", "run_config.txt"]
        .iter()
        .map(|n| out_dir.join(n))
        .collect();
    ensure_writable(&outputs, force)?;
    let corpus = Corpus::read(corpus_dir)?;
    std::fs::create_dir_all(out_dir)?;
    write_run_config(out_dir, &config)?;

    let (outcome, model) = match config.train.quantizer {
        QuantizerKind::Kmeans => {
            let (outcome, model) = build_kmeans_baseline(&corpus, &config.train)?;
            (outcome, model)
        }
        _ => {
            let outcome = train(&corpus, &config.train)?;
            let model = outcome.model.clone();
            (outcome, model)
        }
    };
    save_checkpoint(&model, &out_dir.join("checkpoint.tuck"))?;
    std::fs::write(out_dir.join("train_log.txt"), format_train_log(&outcome))?;
    if let Some(diagnostics) = &outcome.diverged {
        return Err(Error::Diverged {
            epoch: outcome.history.len() + 1,
            step: 0,
            detail: format!("{diagnostics}; last-good checkpoint written"),
        });
    }
    Ok(())
}

/// Evaluates a checkpoint on one split and writes the text and key=value
/// reports.
pub fn cmd_eval(
    checkpoint: &Path,
    corpus_dir: &Path,
    out_dir: &Path,
    split: &str,
    config_path: Option<&Path>,
    overrides: &Overrides,
    force: bool,
) -> Result<()> {
    let config = resolve_config(config_path, overrides)?;
    let outputs: Vec<PathBuf> = ["report.txt", "report.kv", "run_config.txt"]
        .iter()
        .map(|n| out_dir.join(n))
        .collect();
    ensure_writable(&outputs, force)?;
    let corpus = Corpus::read(corpus_dir)?;
    let model = load_checkpoint(checkpoint)?;
    std::fs::create_dir_all(out_dir)?;
    let hash = write_run_config(out_dir, &config)?;

    let mut report = evaluate(&model, &corpus, split)?;
    report.meta.push(("seed".into(), config.train.seed.to_string()));
    report.meta.push(("config_hash".into(), hash));
    report.meta.push(("split".into(), split.to_string()));
    report
        .meta
        .push(("quantizer".into(), model.quantizer.kind().to_string()));
    std::fs::write(out_dir.join("report.kv"), report.to_kv())?;
    std::fs::write(out_dir.join("report.txt"), report.to_text())?;
    Ok(())
}

/// Emits the unit-tone table and per-(vowel, tone) pitch histograms as
/// plain-text tables plus a plottable data file.
pub fn cmd_analyze(
    checkpoint: &Path,
    corpus_dir: &Path,
    out_dir: &Path,
    n_bins: usize,
    force: bool,
) -> Result<()> {
    let outputs: Vec<PathBuf> = ["unit_tone_table.txt", "pitch_histograms.dat"]
        .iter()
        .map(|n| out_dir.join(n))
        .collect();
    ensure_writable(&outputs, force)?;
    let corpus = Corpus::read(corpus_dir)?;
    let model = load_checkpoint(checkpoint)?;
    std::fs::create_dir_all(out_dir)?;

    let streams = extract_units(&model, &corpus.test)?;
    let table = crate::pipeline::unit_tone_table(&streams, &corpus.alphabet, 3)?;
    let mut text = String::from("top-3 speech units per (phoneme, tone), test split\n\n");
    text.push_str("phoneme  tone  top-3 speech units\n");
    let mut last = None;
    for ((vowel, tone), units) in &table.entries {
        let head = if last != Some(vowel.clone()) {
            format!("/{vowel}/")
        } else {
            String::new()
        };
        last = Some(vowel.clone());
        let cells: Vec<String> = units.iter().map(usize::to_string).collect();
        text.push_str(&format!("{head:<8} {tone:<5} {}\n", cells.join("; ")));
    }
    for (vowel, tone) in &table.missing {
        text.push_str(&format!("warning: no frames for ({vowel}, tone {tone})\n"));
    }
    std::fs::write(out_dir.join("unit_tone_table.txt"), text)?;

    let width = (F0_RANGE.1 - F0_RANGE.0) / n_bins as f64;
    let mut data = String::from("# vowel tone bin_lo_hz bin_hi_hz count\n");
    for i in 0..corpus.alphabet.size() {
        let tone = corpus.alphabet.tone_of(i);
        if tone != TONES[0] {
            continue;
        }
        let vowel = corpus.alphabet.base_of(i).to_string();
        for tone in TONES {
            let hist = pitch_histogram(&corpus.test, &corpus.alphabet, &vowel, tone, n_bins)?;
            for (b, count) in hist.iter().enumerate() {
                let lo = F0_RANGE.0 + b as f64 * width;
                data.push_str(&format!("{vowel} {tone} {lo:.1} {:.1} {count}\n", lo + width));
            }
        }
    }
    std::fs::write(out_dir.join("pitch_histograms.dat"), data)?;
    Ok(())
}

/// Writes per-utterance unit streams (raw and de-duplicated) for one split.
pub fn cmd_extract(
    checkpoint: &Path,
    corpus_dir: &Path,
    out_dir: &Path,
    split: &str,
    force: bool,
) -> Result<()> {
    let out_name = format!("units_{split}.txt");
    ensure_writable(&[out_dir.join(&out_name)], force)?;
    let corpus = Corpus::read(corpus_dir)?;
    let model = load_checkpoint(checkpoint)?;
    std::fs::create_dir_all(out_dir)?;

    let utterances = corpus.split(split)?;
    let streams = extract_units(&model, utterances)?;
    let mut text = String::from("# utterance_id\tunits\tdeduplicated_units\n");
    for s in &streams {
        let raw: Vec<String> = s.units.iter().map(usize::to_string).collect();
        let merged: Vec<String> = dedup(&s.units).iter().map(usize::to_string).collect();
        text.push_str(&format!(
            "{}\t{}\t{}\n",
            s.utterance_id,
            raw.join(" "),
            merged.join(" ")
        ));
    }
    std::fs::write(out_dir.join(out_name), text)?;
    Ok(())
}
