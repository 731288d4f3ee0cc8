//! Versioned binary checkpoints.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header (model kind, vocabulary, dimensions, step, config hash, array
//! lengths), then the raw little-endian `f64` arrays: encoder parameters,
//! head parameters, optimizer first moments, optimizer second moments.
//! Floats are stored bit-for-bit so a reload reproduces encodings exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{ToyEncoder, TrainableEncoder};
use crate::error::{Error, Result};
use crate::optim::AdamWState;
use crate::tokenizer::Tokenizer;

const MAGIC: &[u8; 8] = b"NENTCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Dual-use encoder trained with the supervised contrastive loss.
    Contrastive,
    /// Encoder plus binary entailment head.
    Efl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub encoder: ToyEncoder,
    /// Binary head `[w; bias]`, empty for contrastive checkpoints.
    pub head: Vec<f64>,
    pub optimizer: AdamWState,
    pub step: u64,
    pub config_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    vocab: Tokenizer,
    embed_dim: usize,
    out_dim: usize,
    step: u64,
    config_hash: String,
    optimizer_t: u64,
    n_params: usize,
    n_head: usize,
}

impl Checkpoint {
    pub fn new(kind: ModelKind, encoder: ToyEncoder, head: Vec<f64>, config_hash: String) -> Self {
        let n = encoder.params().len() + head.len();
        Self {
            kind,
            encoder,
            head,
            optimizer: AdamWState::new(n),
            step: 0,
            config_hash,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind,
            vocab: self.encoder.tokenizer().clone(),
            embed_dim: self.encoder.embed_dim(),
            out_dim: crate::encoder::SentenceEncoder::dim(&self.encoder),
            step: self.step,
            config_hash: self.config_hash.clone(),
            optimizer_t: self.optimizer.t,
            n_params: self.encoder.params().len(),
            n_head: self.head.len(),
        };
        let header = serde_json::to_vec(&header)?;
        let n = self.encoder.params().len() + self.head.len();
        let mut out = Vec::with_capacity(20 + header.len() + 8 * 3 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for arr in [
            self.encoder.params(),
            &self.head,
            &self.optimizer.m,
            &self.optimizer.v,
        ] {
            for x in arr {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let mut rest = &bytes[20 + hlen..];
        let n_opt = header.n_params + header.n_head;
        let expected = 8 * (header.n_params + header.n_head + 2 * n_opt);
        if rest.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} payload bytes, found {}",
                rest.len()
            )));
        }
        let mut take = |n: usize| -> Vec<f64> {
            let (head, tail) = rest.split_at(8 * n);
            rest = tail;
            head.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        let params = take(header.n_params);
        let head = take(header.n_head);
        let m = take(n_opt);
        let v = take(n_opt);
        let encoder = ToyEncoder::from_parts(header.vocab, header.embed_dim, header.out_dim, params)?;
        Ok(Self {
            kind: header.kind,
            encoder,
            head,
            optimizer: AdamWState {
                t: header.optimizer_t,
                m,
                v,
            },
            step: header.step,
            config_hash: header.config_hash,
        })
    }

    /// Writes to a temporary sibling then renames over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized checkpoint, hex encoded.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{SentenceEncoder, ToyEncoderConfig};

    fn ckpt() -> Checkpoint {
        let tok = Tokenizer::fit(["alpha beta gamma", "delta"], 1);
        let enc = ToyEncoder::new(tok, &ToyEncoderConfig { embed_dim: 4, out_dim: 3, init_range: 0.1 }, 5);
        let mut c = Checkpoint::new(ModelKind::Efl, enc, vec![0.5, -0.25, 1.0 / 3.0, 0.1], "abc".into());
        c.step = 17;
        c.optimizer.t = 17;
        c.optimizer.m.iter_mut().enumerate().for_each(|(i, m)| *m = i as f64 * 1e-3);
        c
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = ckpt();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(
            back.encoder.encode("alpha delta").unwrap(),
            c.encoder.encode("alpha delta").unwrap()
        );
    }

    #[test]
    fn save_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/model.ckpt");
        let c = ckpt();
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
        assert!(!dir.path().join("sub/model.ckpt.tmp").exists());
    }

    #[test]
    fn corrupt_input_rejected() {
        let mut bytes = ckpt().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
        bytes.pop();
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
