use crate::{Error, Result};

/// Evaluation summary over one split: error rate, codebook usage, the
/// unit-to-(phoneme, tone) table, and the tone probe results.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per: f64,
    pub codebook_usage: f64,
    pub codebook_size: usize,
    pub tone_accuracy: f64,
    /// One row per true tone; columns are predicted tones 1-4 plus unknown.
    pub confusion: Vec<Vec<u64>>,
    /// Top units per (vowel, tone), sorted by key.
    pub unit_tone_table: Vec<((String, u8), Vec<usize>)>,
    pub missing_pairs: Vec<(String, u8)>,
    /// Run metadata such as seed and config hash.
    pub meta: Vec<(String, String)>,
}

impl EvalReport {
    /// Machine-readable key=value serialization; `from_kv` inverts it
    /// exactly (floats are printed with shortest-roundtrip formatting).
    pub fn to_kv(&self) -> String {
        let mut lines = Vec::new();
        lines.push(format!("per={}", self.per));
        lines.push(format!("codebook_usage={}", self.codebook_usage));
        lines.push(format!("codebook_size={}", self.codebook_size));
        lines.push(format!("tone_accuracy={}", self.tone_accuracy));
        for (i, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            lines.push(format!("confusion.{}={}", i + 1, cells.join(",")));
        }
        for ((vowel, tone), units) in &self.unit_tone_table {
            let cells: Vec<String> = units.iter().map(usize::to_string).collect();
            lines.push(format!("table.{vowel}.{tone}={}", cells.join(",")));
        }
        let missing: Vec<String> = self
            .missing_pairs
            .iter()
            .map(|(v, t)| format!("{v}:{t}"))
            .collect();
        lines.push(format!("missing={}", missing.join(";")));
        for (k, v) in &self.meta {
            lines.push(format!("meta.{k}={v}"));
        }
        lines.join("\n") + "\n"
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Contract(format!("unparsable report line '{line}'"));
        let mut report = EvalReport {
            per: f64::NAN,
            codebook_usage: f64::NAN,
            codebook_size: 0,
            tone_accuracy: f64::NAN,
            confusion: Vec::new(),
            unit_tone_table: Vec::new(),
            missing_pairs: Vec::new(),
            meta: Vec::new(),
        };
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| bad(line))?;
            if let Some(meta_key) = key.strip_prefix("meta.") {
                report.meta.push((meta_key.to_string(), value.to_string()));
            } else if let Some(row) = key.strip_prefix("confusion.") {
                let idx: usize = row.parse().map_err(|_| bad(line))?;
                let cells = value
                    .split(',')
                    .map(|c| c.parse().map_err(|_| bad(line)))
                    .collect::<Result<Vec<u64>>>()?;
                if report.confusion.len() + 1 != idx {
                    return Err(bad(line));
                }
                report.confusion.push(cells);
            } else if let Some(rest) = key.strip_prefix("table.") {
                let (vowel, tone) = rest.rsplit_once('.').ok_or_else(|| bad(line))?;
                let tone: u8 = tone.parse().map_err(|_| bad(line))?;
                let units = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|c| c.parse().map_err(|_| bad(line)))
                        .collect::<Result<Vec<usize>>>()?
                };
                report.unit_tone_table.push(((vowel.to_string(), tone), units));
            } else {
                match key {
                    "per" => report.per = value.parse().map_err(|_| bad(line))?,
                    "codebook_usage" => {
                        report.codebook_usage = value.parse().map_err(|_| bad(line))?
                    }
                    "codebook_size" => {
                        report.codebook_size = value.parse().map_err(|_| bad(line))?
                    }
                    "tone_accuracy" => {
                        report.tone_accuracy = value.parse().map_err(|_| bad(line))?
                    }
                    "missing" => {
                        for part in value.split(';').filter(|p| !p.is_empty()) {
                            let (v, t) = part.split_once(':').ok_or_else(|| bad(line))?;
                            report
                                .missing_pairs
                                .push((v.to_string(), t.parse().map_err(|_| bad(line))?));
                        }
                    }
                    _ => return Err(bad(line)),
                }
            }
        }
        if !report.per.is_finite() || !report.tone_accuracy.is_finite() {
            return Err(Error::Contract("report missing per or tone_accuracy".into()));
        }
        Ok(report)
    }

    /// Human-readable report.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("evaluation report\n");
        out.push_str("=================\n");
        out.push_str(&format!("phone error rate      {:.4}\n", self.per));
        out.push_str(&format!(
            "codebook usage        {:.4} ({} codes, min count 10)\n",
            self.codebook_usage, self.codebook_size
        ));
        out.push_str(&format!("tone probe accuracy   {:.4}\n", self.tone_accuracy));
        out.push_str("\ntone confusion (rows: true tone; cols: predicted 1-4, unknown)\n");
        for (i, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>7}")).collect();
            out.push_str(&format!("  tone {}  {}\n", i + 1, cells.join(" ")));
        }
        out.push_str("\ntop units per (vowel, tone)\n");
        let mut last_vowel = None;
        for ((vowel, tone), units) in &self.unit_tone_table {
            if last_vowel != Some(vowel) {
                out.push_str(&format!("  /{vowel}/\n"));
                last_vowel = Some(vowel);
            }
            let cells: Vec<String> = units.iter().map(usize::to_string).collect();
            out.push_str(&format!("    tone {tone}: {}\n", cells.join("; ")));
        }
        if !self.missing_pairs.is_empty() {
            out.push_str("\nwarning: pairs absent from the data\n");
            for (v, t) in &self.missing_pairs {
                out.push_str(&format!("  ({v}, tone {t})\n"));
            }
        }
        if !self.meta.is_empty() {
            out.push_str("\nrun metadata\n");
            for (k, v) in &self.meta {
                out.push_str(&format!("  {k} = {v}\n"));
            }
        }
        out
    }
}
