//! The `CONFIT1` model container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "CONFIT1"                     7 bytes magic
//! u32                           format version (1)
//! u64                           header length in bytes
//! header                        UTF-8 JSON: tokenizer, hash_dim, embed_dim,
//!                               init_seed, classes
//! f64 × hash_dim·embed_dim      encoder weights, row-major
//! f64 × classes·embed_dim       head weights, row-major
//! f64 × classes                 head bias
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderModel, TokenizerConfig};
use crate::error::{Error, Result};
use crate::head::HeadModel;
use crate::pipeline::Classifier;

pub const MAGIC: &[u8; 7] = b"CONFIT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    tokenizer: TokenizerConfig,
    hash_dim: usize,
    embed_dim: usize,
    init_seed: u64,
    classes: Vec<String>,
}

pub fn write_classifier(mut out: impl Write, clf: &Classifier) -> Result<()> {
    let enc = &clf.encoder;
    let header = serde_json::to_vec(&Header {
        tokenizer: enc.tokenizer,
        hash_dim: enc.hash_dim(),
        embed_dim: enc.embed_dim(),
        init_seed: enc.init_seed(),
        classes: clf.head.class_order().to_vec(),
    })?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    let floats = enc
        .weights()
        .iter()
        .chain(clf.head.weights())
        .chain(clf.head.bias());
    for v in floats {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_classifier(path: impl AsRef<Path>, clf: &Classifier) -> Result<()> {
    write_classifier(BufWriter::new(File::create(path)?), clf)
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Load(format!("truncated while reading {what}")));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::Load(format!("{what} size overflows")))?;
        Ok(self
            .take(bytes, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

pub fn read_classifier(bytes: &[u8]) -> Result<Classifier> {
    let mut cur = Cursor { buf: bytes };
    if cur.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Load("not a CONFIT1 artifact (bad magic)".into()));
    }
    let version = u32::from_le_bytes(cur.take(4, "version")?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Load(format!(
            "unsupported artifact version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let header_len = u64::from_le_bytes(cur.take(8, "header length")?.try_into().expect("8 bytes"));
    let header_len = usize::try_from(header_len)
        .map_err(|_| Error::Load("header length does not fit in memory".into()))?;
    let header: Header = serde_json::from_slice(cur.take(header_len, "header")?)
        .map_err(|e| Error::Load(format!("bad header: {e}")))?;

    let encoder_len = header
        .hash_dim
        .checked_mul(header.embed_dim)
        .ok_or_else(|| Error::Load("encoder shape overflows".into()))?;
    let w = cur.floats(encoder_len, "encoder weights")?;
    let c = header.classes.len();
    let hw = cur.floats(c * header.embed_dim, "head weights")?;
    let hb = cur.floats(c, "head bias")?;
    if !cur.buf.is_empty() {
        return Err(Error::Load(format!("{} trailing bytes", cur.buf.len())));
    }

    let wrap = |e: Error| Error::Load(e.to_string());
    let encoder = EncoderModel::from_parts(
        header.tokenizer,
        header.hash_dim,
        header.embed_dim,
        header.init_seed,
        w,
    )
    .map_err(wrap)?;
    let head = HeadModel::from_parts(header.classes, header.embed_dim, hw, hb).map_err(wrap)?;
    Classifier::new(encoder, head).map_err(wrap)
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<Classifier> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    read_classifier(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_encoder;

    fn tiny() -> Classifier {
        let enc = init_encoder(TokenizerConfig::default(), 64, 3, 8).unwrap();
        let head = HeadModel::from_parts(
            vec!["A".into(), "B".into()],
            3,
            vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6],
            vec![0.01, -0.01],
        )
        .unwrap();
        Classifier::new(enc, head).unwrap()
    }

    #[test]
    fn roundtrip_in_memory() {
        let clf = tiny();
        let mut buf = Vec::new();
        write_classifier(&mut buf, &clf).unwrap();
        assert_eq!(&buf[..7], b"CONFIT1");
        assert_eq!(read_classifier(&buf).unwrap(), clf);
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let mut buf = Vec::new();
        write_classifier(&mut buf, &tiny()).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_classifier(&bad), Err(Error::Load(_))));

        let mut bad = buf.clone();
        bad[7] = 2;
        let err = read_classifier(&bad).unwrap_err();
        assert!(err.to_string().contains("version 2"), "{err}");

        assert!(matches!(
            read_classifier(&buf[..buf.len() - 1]),
            Err(Error::Load(_))
        ));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_classifier(&long), Err(Error::Load(_))));
    }
}
