//! Self-describing binary corpus files.
//!
//! Layout (all integers little-endian):
//!   magic "TULB" | version u32 | feature width u32
//!   alphabet: count u32, then per label: byte length u32 + UTF-8 bytes
//!   utterance count u32, then per utterance:
//!     id: byte length u32 + UTF-8 bytes
//!     T u32
//!     target: count u32 + u16 label indices
//!     frame labels: T x u16
//!     features: T*F x f32
//!     f0: T x f32
//!
//! Features and F0 are generated at f32 precision, so the roundtrip is
//! lossless.

use super::Utterance;
use crate::ctc::PhoneAlphabet;
use crate::numcore::Array2;
use crate::{Error, Result};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"TULB";
const VERSION: u32 = 1;

pub fn write_split(
    path: &Path,
    alphabet: &PhoneAlphabet,
    feature_width: usize,
    utterances: &[Utterance],
) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(feature_width as u32).to_le_bytes())?;
    w.write_all(&(alphabet.size() as u32).to_le_bytes())?;
    for label in alphabet.labels() {
        write_string(&mut w, label)?;
    }
    w.write_all(&(utterances.len() as u32).to_le_bytes())?;
    for utt in utterances {
        write_string(&mut w, &utt.id)?;
        let t = utt.frames();
        w.write_all(&(t as u32).to_le_bytes())?;
        w.write_all(&(utt.target.len() as u32).to_le_bytes())?;
        for &l in &utt.target {
            w.write_all(&(l as u16).to_le_bytes())?;
        }
        for &l in &utt.frame_labels {
            w.write_all(&(l as u16).to_le_bytes())?;
        }
        for &v in utt.features.as_slice() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        for &v in &utt.f0 {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_split(path: &Path) -> Result<(PhoneAlphabet, usize, Vec<Utterance>)> {
    let corrupt = |detail: &str| Error::CorruptFile {
        path: path.display().to_string(),
        detail: detail.into(),
    };
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic).map_err(|_| corrupt("missing header"))?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = read_u32(&mut r).map_err(|_| corrupt("truncated header"))?;
    if version != VERSION {
        return Err(corrupt(&format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let feature_width = read_u32(&mut r).map_err(|_| corrupt("truncated header"))? as usize;
    let n_labels = read_u32(&mut r).map_err(|_| corrupt("truncated header"))? as usize;
    let mut labels = Vec::with_capacity(n_labels);
    for _ in 0..n_labels {
        labels.push(read_string(&mut r).map_err(|_| corrupt("truncated alphabet"))?);
    }
    let alphabet = PhoneAlphabet::from_full_labels(labels)?;

    let n_utts = read_u32(&mut r).map_err(|_| corrupt("truncated header"))? as usize;
    let mut utterances = Vec::with_capacity(n_utts);
    for _ in 0..n_utts {
        let id = read_string(&mut r).map_err(|_| corrupt("truncated utterance"))?;
        let t = read_u32(&mut r).map_err(|_| corrupt("truncated utterance"))? as usize;
        let n_target = read_u32(&mut r).map_err(|_| corrupt("truncated utterance"))? as usize;
        let mut target = Vec::with_capacity(n_target);
        for _ in 0..n_target {
            target.push(read_u16(&mut r).map_err(|_| corrupt("truncated target"))? as usize);
        }
        let mut frame_labels = Vec::with_capacity(t);
        for _ in 0..t {
            frame_labels
                .push(read_u16(&mut r).map_err(|_| corrupt("truncated frame labels"))? as usize);
        }
        let mut data = Vec::with_capacity(t * feature_width);
        for _ in 0..t * feature_width {
            data.push(read_f32(&mut r).map_err(|_| corrupt("truncated features"))? as f64);
        }
        let features = Array2::from_vec(t, feature_width, data)?;
        let mut f0 = Vec::with_capacity(t);
        for _ in 0..t {
            f0.push(read_f32(&mut r).map_err(|_| corrupt("truncated f0"))? as f64);
        }
        for &l in target.iter().chain(&frame_labels) {
            if l >= alphabet.size() {
                return Err(corrupt("label index out of alphabet range"));
            }
        }
        utterances.push(Utterance {
            id,
            features,
            target,
            frame_labels,
            f0,
        });
    }
    Ok((alphabet, feature_width, utterances))
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<()> {
    r.read_exact(buf)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u16<R: Read>(r: &mut R) -> std::io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> std::io::Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
