use crate::{Error, Result};

/// Index of the reserved blank symbol.
pub const BLANK: usize = 0;

/// Spelling of the blank symbol in serialized label lists.
pub const BLANK_LABEL: &str = "_";

/// Ordered label set with the CTC blank fixed at index 0.
///
/// Tonal-phone labels are a base phone optionally followed by a tone digit
/// ("a3" is vowel /a/ with tone 3, "p" is a toneless consonant).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneAlphabet {
    labels: Vec<String>,
}

impl PhoneAlphabet {
    /// Builds an alphabet from non-blank labels; the blank is prepended.
    pub fn new(labels: &[String]) -> Result<Self> {
        let mut all = Vec::with_capacity(labels.len() + 1);
        all.push(BLANK_LABEL.to_string());
        all.extend_from_slice(labels);
        for (i, a) in all.iter().enumerate() {
            if all[..i].contains(a) {
                return Err(Error::Config(format!("duplicate label '{a}' in alphabet")));
            }
        }
        Ok(Self { labels: all })
    }

    /// Reconstructs an alphabet from a serialized label list that already
    /// starts with the blank.
    pub fn from_full_labels(labels: Vec<String>) -> Result<Self> {
        if labels.first().map(String::as_str) != Some(BLANK_LABEL) {
            return Err(Error::Config(format!(
                "alphabet must start with blank '{BLANK_LABEL}'"
            )));
        }
        Self::new(&labels[1..])
    }

    /// Number of labels including the blank.
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Splits a label into (base phone, tone); tone 0 marks a toneless label.
    pub fn split_tonal(label: &str) -> (&str, u8) {
        match label.as_bytes().last() {
            Some(d @ b'1'..=b'9') => (&label[..label.len() - 1], d - b'0'),
            _ => (label, 0),
        }
    }

    /// Tone carried by the label at `index` (0 for blank and consonants).
    pub fn tone_of(&self, index: usize) -> u8 {
        Self::split_tonal(&self.labels[index]).1
    }

    /// Base phone of the label at `index`.
    pub fn base_of(&self, index: usize) -> &str {
        Self::split_tonal(&self.labels[index]).0
    }

    /// The tone-stripped alphabet together with a per-index projection map,
    /// used to train the tone-blind baseline.
    pub fn strip_tones(&self) -> Result<(PhoneAlphabet, Vec<usize>)> {
        let mut stripped: Vec<String> = Vec::new();
        for label in &self.labels[1..] {
            let (base, _) = Self::split_tonal(label);
            if !stripped.iter().any(|s| s == base) {
                stripped.push(base.to_string());
            }
        }
        let toneless = PhoneAlphabet::new(&stripped)?;
        let mapping = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, label)| {
                if i == BLANK {
                    BLANK
                } else {
                    toneless
                        .index_of(Self::split_tonal(label).0)
                        .expect("stripped label present by construction")
                }
            })
            .collect();
        Ok((toneless, mapping))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn blank_is_index_zero() {
        let a = PhoneAlphabet::new(&labels(&["p", "a1", "a2"])).unwrap();
        assert_eq!(a.size(), 4);
        assert_eq!(a.label(BLANK), BLANK_LABEL);
        assert_eq!(a.index_of("a2"), Some(3));
    }

    #[test]
    fn rejects_duplicates() {
        assert!(PhoneAlphabet::new(&labels(&["p", "p"])).is_err());
        assert!(PhoneAlphabet::new(&labels(&["_"])).is_err());
    }

    #[test]
    fn tonal_split() {
        assert_eq!(PhoneAlphabet::split_tonal("a3"), ("a", 3));
        assert_eq!(PhoneAlphabet::split_tonal("p"), ("p", 0));
        let a = PhoneAlphabet::new(&labels(&["p", "a1", "i4"])).unwrap();
        assert_eq!(a.tone_of(2), 1);
        assert_eq!(a.base_of(3), "i");
        assert_eq!(a.tone_of(BLANK), 0);
    }

    #[test]
    fn strip_tones_projects_each_tone_to_its_base() {
        let a =
            PhoneAlphabet::new(&labels(&["p", "t", "a1", "a2", "a3", "a4", "i1", "i2"])).unwrap();
        let (toneless, map) = a.strip_tones().unwrap();
        assert_eq!(toneless.size(), 5); // _, p, t, a, i
        assert_eq!(map[BLANK], BLANK);
        let a1 = a.index_of("a1").unwrap();
        let a4 = a.index_of("a4").unwrap();
        assert_eq!(map[a1], map[a4]);
        assert_eq!(toneless.label(map[a1]), "a");
    }
}
