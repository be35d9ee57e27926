//! Versioned binary model checkpoints.
//!
//! Layout (integers little-endian):
//!   magic "TUCK" | version u32
//!   config block: byte length u32 + UTF-8 key=value lines
//!   array count u32, then per array:
//!     name: byte length u32 + UTF-8 bytes
//!     rows u32 | cols u32 | rows*cols f64 raw bits
//!
//! Values are stored as raw f64 bits, so a load reproduces eval outputs
//! bitwise.

use crate::ctc::PhoneAlphabet;
use crate::model::{
    Decoder, DecoderConfig, Encoder, EncoderConfig, KmeansState, ModelConfig, Quantizer,
    QuantizerSpec, ToneUnitModel,
};
use crate::numcore::{Array2, Rng};
use crate::quantizers::{FsqConfig, VqConfig};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"TUCK";
const VERSION: u32 = 1;

fn config_block(model: &ToneUnitModel) -> String {
    let mut lines = Vec::new();
    lines.push(format!("quantizer={}", model.quantizer.kind()));
    lines.push(format!("alphabet={}", model.alphabet.labels().join(",")));
    let e = &model.encoder.config;
    lines.push(format!("encoder.input_width={}", e.input_width));
    lines.push(format!("encoder.hidden_width={}", e.hidden_width));
    let strides: Vec<String> = e.strides.iter().map(usize::to_string).collect();
    lines.push(format!("encoder.strides={}", strides.join(",")));
    lines.push(format!("encoder.kernel={}", e.kernel));
    let d = &model.decoder.config;
    lines.push(format!("decoder.n_layers={}", d.n_layers));
    lines.push(format!("decoder.kernel={}", d.kernel));
    lines.push(format!("decoder.stride={}", d.stride));
    lines.push(format!("decoder.input_width={}", d.input_width));
    lines.push(format!("decoder.hidden_width={}", d.hidden_width));
    lines.push(format!("decoder.output_size={}", d.output_size));
    match &model.quantizer {
        Quantizer::Fsq(q) => {
            let levels: Vec<String> = q.config.levels.iter().map(|l| l.to_string()).collect();
            lines.push(format!("fsq.levels={}", levels.join(",")));
            lines.push(format!("fsq.input_width={}", q.config.input_width));
            lines.push(format!("fsq.output_width={}", q.config.output_width));
        }
        Quantizer::Vq(q) => {
            lines.push(format!("vq.codebook_size={}", q.config.codebook_size));
            lines.push(format!("vq.dim={}", q.config.dim));
            lines.push(format!("vq.tau_start={}", q.config.tau_start));
            lines.push(format!("vq.tau_end={}", q.config.tau_end));
            lines.push(format!("vq.tau_decay={}", q.config.tau_decay));
            lines.push(format!("vq.diversity_weight={}", q.config.diversity_weight));
        }
        Quantizer::Kmeans(s) => {
            lines.push(format!("kmeans.k={}", s.centroids.rows()));
            lines.push(format!("kmeans.iterations={}", s.iterations));
            lines.push(format!("kmeans.inertia={}", s.inertia));
        }
    }
    lines.join("\n")
}

pub fn save_checkpoint(model: &ToneUnitModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let config = config_block(model);
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(config.as_bytes())?;

    let mut arrays: Vec<(String, &Array2)> = Vec::new();
    let mut model_view = model.clone();
    // Collect (name, value) pairs in the fixed parameter order.
    let names: Vec<String> = model_view
        .params_mut()
        .iter()
        .map(|p| p.name.clone())
        .collect();
    let values: Vec<Array2> = model_view
        .params_mut()
        .iter()
        .map(|p| p.value.clone())
        .collect();
    let pairs: Vec<(String, Array2)> = names.into_iter().zip(values).collect();
    for (name, value) in &pairs {
        arrays.push((name.clone(), value));
    }
    if let Quantizer::Kmeans(s) = &model.quantizer {
        arrays.push(("kmeans.centroids".into(), &s.centroids));
    }

    w.write_all(&(arrays.len() as u32).to_le_bytes())?;
    for (name, value) in arrays {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(value.rows() as u32).to_le_bytes())?;
        w.write_all(&(value.cols() as u32).to_le_bytes())?;
        for &v in value.as_slice() {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct KvBlock {
    map: BTreeMap<String, String>,
    path: String,
}

impl KvBlock {
    fn get(&self, key: &str) -> Result<&str> {
        self.map.get(key).map(String::as_str).ok_or_else(|| Error::CorruptFile {
            path: self.path.clone(),
            detail: format!("missing config key '{key}'"),
        })
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.parse().map_err(|_| Error::CorruptFile {
            path: self.path.clone(),
            detail: format!("unparsable config key '{key}'"),
        })
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ToneUnitModel> {
    let corrupt = |detail: String| Error::CorruptFile {
        path: path.display().to_string(),
        detail,
    };
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| corrupt("missing header".into()))?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = read_u32(&mut r).map_err(|_| corrupt("truncated header".into()))?;
    if version != VERSION {
        return Err(corrupt(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let config_len = read_u32(&mut r).map_err(|_| corrupt("truncated header".into()))? as usize;
    let mut config_bytes = vec![0u8; config_len];
    r.read_exact(&mut config_bytes)
        .map_err(|_| corrupt("truncated config".into()))?;
    let config_text = String::from_utf8(config_bytes)
        .map_err(|_| corrupt("config block is not UTF-8".into()))?;
    let mut map = BTreeMap::new();
    for line in config_text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.to_string(), v.to_string());
        }
    }
    let kv = KvBlock {
        map,
        path: path.display().to_string(),
    };

    let n_arrays = read_u32(&mut r).map_err(|_| corrupt("truncated array table".into()))? as usize;
    let mut arrays: BTreeMap<String, Array2> = BTreeMap::new();
    for _ in 0..n_arrays {
        let name_len = read_u32(&mut r).map_err(|_| corrupt("truncated array name".into()))? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)
            .map_err(|_| corrupt("truncated array name".into()))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| corrupt("array name is not UTF-8".into()))?;
        let rows = read_u32(&mut r).map_err(|_| corrupt("truncated array header".into()))? as usize;
        let cols = read_u32(&mut r).map_err(|_| corrupt("truncated array header".into()))? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)
                .map_err(|_| corrupt(format!("truncated data in array '{name}'")))?;
            data.push(f64::from_bits(u64::from_le_bytes(b)));
        }
        arrays.insert(name, Array2::from_vec(rows, cols, data)?);
    }

    let alphabet = PhoneAlphabet::from_full_labels(
        kv.get("alphabet")?.split(',').map(String::from).collect(),
    )?;
    let encoder_config = EncoderConfig {
        input_width: kv.parse("encoder.input_width")?,
        hidden_width: kv.parse("encoder.hidden_width")?,
        strides: kv
            .get("encoder.strides")?
            .split(',')
            .map(|s| {
                s.parse()
                    .map_err(|_| corrupt(format!("bad encoder stride '{s}'")))
            })
            .collect::<Result<Vec<usize>>>()?,
        kernel: kv.parse("encoder.kernel")?,
    };
    let decoder_config = DecoderConfig {
        n_layers: kv.parse("decoder.n_layers")?,
        kernel: kv.parse("decoder.kernel")?,
        stride: kv.parse("decoder.stride")?,
        input_width: kv.parse("decoder.input_width")?,
        hidden_width: kv.parse("decoder.hidden_width")?,
        output_size: kv.parse("decoder.output_size")?,
    };

    let kind = kv.get("quantizer")?;
    let mut model = match kind {
        "fsq" | "vq" => {
            let quantizer = if kind == "fsq" {
                QuantizerSpec::Fsq(FsqConfig {
                    levels: kv
                        .get("fsq.levels")?
                        .split(',')
                        .map(|s| {
                            s.parse().map_err(|_| {
                                corrupt(format!("bad fsq level '{s}'"))
                            })
                        })
                        .collect::<Result<Vec<u32>>>()?,
                    input_width: kv.parse("fsq.input_width")?,
                    output_width: kv.parse("fsq.output_width")?,
                })
            } else {
                QuantizerSpec::Vq(VqConfig {
                    codebook_size: kv.parse("vq.codebook_size")?,
                    dim: kv.parse("vq.dim")?,
                    tau_start: kv.parse("vq.tau_start")?,
                    tau_end: kv.parse("vq.tau_end")?,
                    tau_decay: kv.parse("vq.tau_decay")?,
                    diversity_weight: kv.parse("vq.diversity_weight")?,
                })
            };
            ToneUnitModel::new(
                ModelConfig {
                    encoder: encoder_config,
                    decoder: decoder_config,
                    quantizer,
                },
                alphabet,
                0,
            )?
        }
        "kmeans" => {
            let centroids = arrays.get("kmeans.centroids").cloned().ok_or_else(|| {
                corrupt("kmeans checkpoint lacks centroids".into())
            })?;
            let state = KmeansState {
                centroids,
                iterations: kv.parse("kmeans.iterations")?,
                inertia: kv.parse("kmeans.inertia")?,
            };
            let mut rng = Rng::new(0);
            let encoder = Encoder::new(encoder_config, &mut rng)?;
            let decoder = Decoder::new(decoder_config, &mut rng)?;
            let base = ToneUnitModel {
                encoder,
                quantizer: Quantizer::Kmeans(state.clone()),
                decoder,
                alphabet,
            };
            ToneUnitModel::with_kmeans(&base, state)?
        }
        other => return Err(corrupt(format!("unknown quantizer kind '{other}'"))),
    };

    // Overwrite every parameter from the stored arrays; every non-centroid
    // array must be consumed exactly once.
    let mut consumed = 0;
    for p in model.params_mut() {
        let stored = arrays
            .get(&p.name)
            .ok_or_else(|| corrupt(format!("missing array '{}'", p.name)))?;
        if stored.shape() != p.value.shape() {
            return Err(corrupt(format!(
                "array '{}' has shape {:?}, expected {:?}",
                p.name,
                stored.shape(),
                p.value.shape()
            )));
        }
        p.value = stored.clone();
        consumed += 1;
    }
    let expected = consumed + usize::from(matches!(model.quantizer, Quantizer::Kmeans(_)));
    if expected != arrays.len() {
        return Err(corrupt(format!(
            "checkpoint holds {} arrays, model consumed {expected}",
            arrays.len()
        )));
    }
    Ok(model)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
