use crate::corpus::Utterance;
use crate::ctc::PhoneAlphabet;
use crate::model::{Mode, ToneUnitModel};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Frame-aligned quantizer output for one utterance: the unit index, the
/// decoder's argmax label, and the ground-truth corpus label per latent
/// frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitStream {
    pub utterance_id: String,
    pub units: Vec<usize>,
    /// Decoder argmax label per frame, in the model's alphabet (may be blank).
    pub decoded: Vec<usize>,
    /// Ground-truth label per frame, in the corpus alphabet.
    pub truth: Vec<usize>,
}

/// Eval-mode forward over every utterance, with ground-truth frame labels
/// carried through the encoder downsampling by center sampling.
pub fn extract_units(model: &ToneUnitModel, utterances: &[Utterance]) -> Result<Vec<UnitStream>> {
    let ds = model.downsampling();
    utterances
        .iter()
        .map(|utt| {
            let (units, log_probs) = model.model_forward(&utt.features, Mode::Eval, None)?;
            let t_latent = units.len();
            let decoded = (0..t_latent)
                .map(|r| {
                    let row = log_probs.row(r);
                    let mut best = 0;
                    for (k, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = k;
                        }
                    }
                    best
                })
                .collect();
            let truth = (0..t_latent)
                .map(|r| {
                    let src = (r * ds + ds / 2).min(utt.frame_labels.len() - 1);
                    utt.frame_labels[src]
                })
                .collect();
            Ok(UnitStream {
                utterance_id: utt.id.clone(),
                units,
                decoded,
                truth,
            })
        })
        .collect()
}

/// Merges consecutively repeated units into a single unit.
pub fn dedup(units: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(units.len());
    for &u in units {
        if out.last() != Some(&u) {
            out.push(u);
        }
    }
    out
}

/// Top-k units per (vowel, tone), counted over frames whose ground truth is
/// that pair; pairs absent from the data are reported in `missing`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UnitToneTable {
    pub entries: BTreeMap<(String, u8), Vec<usize>>,
    pub missing: Vec<(String, u8)>,
}

pub fn unit_tone_table(
    streams: &[UnitStream],
    corpus_alphabet: &PhoneAlphabet,
    top_k: usize,
) -> Result<UnitToneTable> {
    if streams.is_empty() {
        return Err(Error::Contract("unit_tone_table: no streams".into()));
    }
    // All (vowel, tone) pairs the alphabet defines.
    let mut pairs: Vec<(String, u8)> = Vec::new();
    for i in 0..corpus_alphabet.size() {
        let tone = corpus_alphabet.tone_of(i);
        if tone > 0 {
            pairs.push((corpus_alphabet.base_of(i).to_string(), tone));
        }
    }
    let mut counts: BTreeMap<(String, u8), BTreeMap<usize, u64>> = BTreeMap::new();
    for stream in streams {
        for (r, &label) in stream.truth.iter().enumerate() {
            let tone = corpus_alphabet.tone_of(label);
            if tone == 0 {
                continue;
            }
            let key = (corpus_alphabet.base_of(label).to_string(), tone);
            *counts
                .entry(key)
                .or_default()
                .entry(stream.units[r])
                .or_insert(0) += 1;
        }
    }
    let mut table = UnitToneTable::default();
    for pair in pairs {
        match counts.get(&pair) {
            Some(unit_counts) => {
                let mut ranked: Vec<(usize, u64)> =
                    unit_counts.iter().map(|(&u, &c)| (u, c)).collect();
                // Highest count first, ties to the lower unit index.
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                table
                    .entries
                    .insert(pair, ranked.into_iter().take(top_k).map(|(u, _)| u).collect());
            }
            None => table.missing.push(pair),
        }
    }
    Ok(table)
}

/// Majority-vote tone probe.
///
/// Each unit is assigned the tone most frequent among its vowel frames in
/// the training streams; accuracy is measured over vowel frames of the test
/// streams. Units never seen on training vowel frames predict "unknown" and
/// count as errors. The confusion matrix has one row per true tone and five
/// columns: predicted tones 1-4 plus unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneProbe {
    pub accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
    pub unit_to_tone: BTreeMap<usize, u8>,
}

pub fn tone_probe(
    train_streams: &[UnitStream],
    test_streams: &[UnitStream],
    corpus_alphabet: &PhoneAlphabet,
) -> Result<ToneProbe> {
    let mut per_unit: BTreeMap<usize, [u64; 4]> = BTreeMap::new();
    for stream in train_streams {
        for (r, &label) in stream.truth.iter().enumerate() {
            let tone = corpus_alphabet.tone_of(label);
            if tone > 0 {
                per_unit.entry(stream.units[r]).or_default()[tone as usize - 1] += 1;
            }
        }
    }
    let unit_to_tone: BTreeMap<usize, u8> = per_unit
        .iter()
        .map(|(&unit, counts)| {
            let mut best = 0;
            for t in 1..4 {
                if counts[t] > counts[best] {
                    best = t;
                }
            }
            (unit, best as u8 + 1)
        })
        .collect();

    let mut confusion = vec![vec![0u64; 5]; 4];
    let mut correct = 0u64;
    let mut total = 0u64;
    for stream in test_streams {
        for (r, &label) in stream.truth.iter().enumerate() {
            let tone = corpus_alphabet.tone_of(label);
            if tone == 0 {
                continue;
            }
            total += 1;
            match unit_to_tone.get(&stream.units[r]) {
                Some(&predicted) => {
                    confusion[tone as usize - 1][predicted as usize - 1] += 1;
                    if predicted == tone {
                        correct += 1;
                    }
                }
                None => confusion[tone as usize - 1][4] += 1,
            }
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric(
            "tone_probe: no vowel frames in the test streams".into(),
        ));
    }
    Ok(ToneProbe {
        accuracy: correct as f64 / total as f64,
        confusion,
        unit_to_tone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;
    use proptest::prelude::*;

    #[test]
    fn dedup_merges_runs() {
        assert_eq!(dedup(&[5, 5, 7, 7, 7, 2]), vec![5, 7, 2]);
        assert_eq!(dedup(&[]), Vec::<usize>::new());
        assert_eq!(dedup(&[3, 3, 3]), vec![3]);
    }

    #[test]
    fn dedup_is_idempotent_on_deduped_input() {
        let once = dedup(&[1, 1, 2, 3, 3, 1]);
        assert_eq!(dedup(&once), once);
    }

    fn alphabet() -> PhoneAlphabet {
        PhoneAlphabet::new(&[
            "p".into(),
            "a1".into(),
            "a2".into(),
            "a3".into(),
            "a4".into(),
        ])
        .unwrap()
    }

    fn stream(units: Vec<usize>, truth: Vec<usize>) -> UnitStream {
        let decoded = vec![0; units.len()];
        UnitStream {
            utterance_id: "t".into(),
            units,
            decoded,
            truth,
        }
    }

    #[test]
    fn table_counts_only_the_requested_pair() {
        let a = alphabet();
        let a1 = a.index_of("a1").unwrap();
        let p = a.index_of("p").unwrap();
        let streams = vec![stream(vec![7, 7, 3], vec![a1, a1, p])];
        let table = unit_tone_table(&streams, &a, 3).unwrap();
        assert_eq!(table.entries[&("a".to_string(), 1)], vec![7]);
        assert!(table.missing.contains(&("a".to_string(), 2)));
    }

    #[test]
    fn table_breaks_count_ties_by_unit_index() {
        let a = alphabet();
        let a1 = a.index_of("a1").unwrap();
        // unit 4: 10 frames, unit 9: 10 frames, unit 3: 9 frames.
        let mut units = Vec::new();
        units.extend(std::iter::repeat(4).take(10));
        units.extend(std::iter::repeat(9).take(10));
        units.extend(std::iter::repeat(3).take(9));
        let truth = vec![a1; units.len()];
        let streams = vec![stream(units, truth)];
        let table = unit_tone_table(&streams, &a, 3).unwrap();
        assert_eq!(table.entries[&("a".to_string(), 1)], vec![4, 9, 3]);
    }

    #[test]
    fn perfectly_partitioned_units_probe_at_full_accuracy() {
        let a = alphabet();
        let labels: Vec<usize> = (1..=4).map(|t| a.index_of(&format!("a{t}")).unwrap()).collect();
        // Unit u encodes tone u+1 exactly.
        let train = vec![stream(vec![0, 1, 2, 3], labels.clone())];
        let test = vec![stream(vec![0, 1, 2, 3, 0], {
            let mut l = labels.clone();
            l.push(labels[0]);
            l
        })];
        let probe = tone_probe(&train, &test, &a).unwrap();
        assert_eq!(probe.accuracy, 1.0);
        let row_sums: Vec<u64> = probe.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(row_sums, vec![2, 1, 1, 1]);
    }

    #[test]
    fn unknown_units_count_as_errors() {
        let a = alphabet();
        let a1 = a.index_of("a1").unwrap();
        let train = vec![stream(vec![0], vec![a1])];
        let test = vec![stream(vec![5, 0], vec![a1, a1])];
        let probe = tone_probe(&train, &test, &a).unwrap();
        assert_eq!(probe.accuracy, 0.5);
        assert_eq!(probe.confusion[0][4], 1);
    }

    #[test]
    fn tone_independent_units_probe_near_chance() {
        // Balanced tones, units drawn independently of tone: accuracy
        // concentrates near 1/4.
        let a = alphabet();
        let mut rng = Rng::new(321);
        let n = 40_000;
        let mut train_units = Vec::with_capacity(n);
        let mut train_truth = Vec::with_capacity(n);
        let mut test_units = Vec::with_capacity(n);
        let mut test_truth = Vec::with_capacity(n);
        for _ in 0..n {
            let tone = 1 + rng.next_below(4) as u8;
            train_truth.push(a.index_of(&format!("a{tone}")).unwrap());
            train_units.push(rng.next_below(25));
            let tone = 1 + rng.next_below(4) as u8;
            test_truth.push(a.index_of(&format!("a{tone}")).unwrap());
            test_units.push(rng.next_below(25));
        }
        let train = vec![stream(train_units, train_truth)];
        let test = vec![stream(test_units, test_truth)];
        let probe = tone_probe(&train, &test, &a).unwrap();
        assert!(
            (probe.accuracy - 0.25).abs() < 0.03,
            "accuracy {} not near chance",
            probe.accuracy
        );
    }

    proptest! {
        #[test]
        fn dedup_has_no_adjacent_repeats_and_preserves_order(
            units in proptest::collection::vec(0usize..6, 0..60),
        ) {
            let out = dedup(&units);
            prop_assert!(out.windows(2).all(|w| w[0] != w[1]));
            prop_assert!(out.len() <= units.len());
            // Subsequence check.
            let mut it = units.iter();
            for u in &out {
                prop_assert!(it.any(|x| x == u));
            }
            // Idempotence.
            prop_assert_eq!(dedup(&out), out.clone());
        }

        #[test]
        fn dedup_agrees_across_non_boundary_splits(
            units in proptest::collection::vec(0usize..4, 2..40),
            split in 1usize..39,
        ) {
            // Splitting inside a run and deduping the halves, then merging
            // the results, collapses to the same stream.
            let split = split.min(units.len() - 1);
            let (a, b) = units.split_at(split);
            let mut merged = dedup(a);
            merged.extend(dedup(b));
            prop_assert_eq!(dedup(&merged), dedup(&units));
        }
    }
}
