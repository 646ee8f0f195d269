//! Portable model checkpoints.
//!
//! All integers are little-endian `u32`, all parameters little-endian `f32`:
//!
//! ```text
//! magic          8 bytes   "GLCNNCKP"
//! format         u32       1
//! model version  u32
//! hp_len         u32       byte length of the hyperparameter JSON
//! hp_json        hp_len    HyperParams as JSON (UTF-8)
//! vocab_len      u32       byte length of the alphabet
//! vocab          vocab_len the 69-character alphabet (UTF-8)
//! tensors        u32       number of tensors (18)
//! per tensor:    ndim u32, ndim x u32 dims, prod(dims) x f32
//! ```
//!
//! Tensors appear in the order of [`super::cnn::PARAM_NAMES`].

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use super::cnn::{CnnModel, HyperParams, Tensor};
use super::vocab::CharVocabulary;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GLCNNCKP";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(u32::try_from(v).expect("fits in u32")).to_le_bytes());
}

pub fn encode(model: &CnnModel<f32>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, FORMAT_VERSION as usize);
    put_u32(&mut buf, model.version as usize);
    let hp = serde_json::to_vec(&model.hp).expect("hyperparameters serialize");
    put_u32(&mut buf, hp.len());
    buf.extend_from_slice(&hp);
    let vocab = CharVocabulary::default().as_string();
    put_u32(&mut buf, vocab.len());
    buf.extend_from_slice(vocab.as_bytes());
    put_u32(&mut buf, model.params().len());
    for t in model.params() {
        put_u32(&mut buf, t.shape.len());
        for &d in &t.shape {
            put_u32(&mut buf, d);
        }
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Validation(format!("checkpoint: {}", msg.into()))
}

fn get_u32(cur: &mut Cursor<&[u8]>) -> Result<usize> {
    let mut b = [0u8; 4];
    cur.read_exact(&mut b).map_err(|_| corrupt("truncated"))?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_bytes(cur: &mut Cursor<&[u8]>, n: usize) -> Result<Vec<u8>> {
    let remaining = cur.get_ref().len() - cur.position() as usize;
    if n > remaining {
        return Err(corrupt("truncated"));
    }
    let mut v = vec![0u8; n];
    cur.read_exact(&mut v).map_err(|_| corrupt("truncated"))?;
    Ok(v)
}

pub fn decode(bytes: &[u8]) -> Result<CnnModel<f32>> {
    let mut cur = Cursor::new(bytes);
    if get_bytes(&mut cur, 8)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let format = get_u32(&mut cur)?;
    if format != FORMAT_VERSION as usize {
        return Err(corrupt(format!("unsupported format version {format}")));
    }
    let model_version = get_u32(&mut cur)?;
    let n = get_u32(&mut cur)?;
    let hp: HyperParams = serde_json::from_slice(&get_bytes(&mut cur, n)?)?;
    let n = get_u32(&mut cur)?;
    let vocab = String::from_utf8(get_bytes(&mut cur, n)?).map_err(|_| corrupt("vocabulary is not UTF-8"))?;
    if vocab != CharVocabulary::default().as_string() {
        return Err(corrupt("vocabulary differs from the built-in alphabet"));
    }
    let count = get_u32(&mut cur)?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let ndim = get_u32(&mut cur)?;
        let shape = (0..ndim).map(|_| get_u32(&mut cur)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = get_bytes(&mut cur, len * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.push(Tensor { shape, data });
    }
    if (cur.position() as usize) != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    let mut model = CnnModel::from_params(hp, params)?;
    model.version = model_version as u32;
    Ok(model)
}

pub fn save(model: &CnnModel<f32>, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<CnnModel<f32>> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
