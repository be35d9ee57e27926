use std::collections::BTreeMap;
use std::path::Path;
use toneunit::corpus::Corpus;
use toneunit::pipeline::{extract_units, load_checkpoint};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let corpus = Corpus::read(Path::new(&args[1])).unwrap();
    let model = load_checkpoint(Path::new(&args[2])).unwrap();
    let streams = extract_units(&model, &corpus.test).unwrap();
    let mut counts: BTreeMap<(String, u8), BTreeMap<usize, u64>> = BTreeMap::new();
    for s in &streams {
        for (r, &label) in s.truth.iter().enumerate() {
            let tone = corpus.alphabet.tone_of(label);
            if tone == 0 {
                continue;
            }
            let key = (corpus.alphabet.base_of(label).to_string(), tone);
            *counts.entry(key).or_default().entry(s.units[r]).or_insert(0) += 1;
        }
    }
    for ((v, t), c) in &counts {
        let mut ranked: Vec<(usize, u64)> = c.iter().map(|(&u, &n)| (u, n)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let total: u64 = ranked.iter().map(|x| x.1).sum();
        let head: Vec<String> = ranked.iter().take(8).map(|(u, n)| format!("{u}:{n}")).collect();
        println!("{v}{t} total={total}  {}", head.join(" "));
    }
}
