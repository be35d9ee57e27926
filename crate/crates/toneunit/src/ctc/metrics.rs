use crate::{Error, Result};

/// Levenshtein distance with unit-cost insertions, deletions, and
/// substitutions, O(min(m, n)) memory.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    if reference.is_empty() {
        return hypothesis.len();
    }
    if hypothesis.is_empty() {
        return reference.len();
    }
    let (short, long) = if reference.len() <= hypothesis.len() {
        (reference, hypothesis)
    } else {
        (hypothesis, reference)
    };
    let m = short.len();
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut curr = vec![0usize; m + 1];
    for i in 1..=long.len() {
        curr[0] = i;
        for j in 1..=m {
            let cost = usize::from(long[i - 1] != short[j - 1]);
            curr[j] = (prev[j] + 1).min(curr[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m]
}

/// Phone error rate: summed edit distance over summed reference length.
pub fn per<T: PartialEq>(references: &[Vec<T>], hypotheses: &[Vec<T>]) -> Result<f64> {
    if references.len() != hypotheses.len() {
        return Err(Error::Contract(format!(
            "per: {} references vs {} hypotheses",
            references.len(),
            hypotheses.len()
        )));
    }
    let total_ref: usize = references.iter().map(Vec::len).sum();
    if references.is_empty() || total_ref == 0 {
        return Err(Error::UndefinedMetric(
            "per needs a non-empty reference set".into(),
        ));
    }
    let total_edits: usize = references
        .iter()
        .zip(hypotheses)
        .map(|(r, h)| edit_distance(r, h))
        .sum();
    Ok(total_edits as f64 / total_ref as f64)
}
