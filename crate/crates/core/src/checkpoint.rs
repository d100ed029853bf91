//! Bit-exact model persistence: a small binary container with a JSON
//! header followed by raw little-endian f64 tensor data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{DenseLayer, EmbeddingLayer, LstmLayer};
use crate::multisiam::MultiSiamModel;
use crate::smcd::SmcdModel;
use crate::tensor::Tensor;
use crate::text::{encode_text, EncodedText, Vocabulary};

pub const MAGIC: &[u8; 4] = b"MSIA";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: String,
    text_size: usize,
    embedding_size: usize,
    hidden_size: usize,
    vocab: Vec<String>,
    categories: Vec<String>,
    tensors: Vec<TensorInfo>,
}

/// Either trained model behind one loading surface.
#[derive(Debug)]
pub enum Model {
    MultiSiam(MultiSiamModel),
    Smcd(SmcdModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::MultiSiam(_) => "multisiam",
            Model::Smcd(_) => "smcd",
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            Model::MultiSiam(m) => &m.vocab,
            Model::Smcd(m) => &m.vocab,
        }
    }

    pub fn text_size(&self) -> usize {
        match self {
            Model::MultiSiam(m) => m.text_size,
            Model::Smcd(m) => m.text_size,
        }
    }

    /// Duplicate-detection embeddings for already-encoded texts.
    pub fn embed_encoded(&self, texts: &[EncodedText]) -> Result<Tensor> {
        match self {
            Model::MultiSiam(m) => crate::eval::embed_encoded(m, texts),
            Model::Smcd(m) => crate::eval::embed_encoded_smcd(m, texts),
        }
    }

    /// Duplicate-detection embeddings for raw texts.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Tensor> {
        let encoded: Vec<EncodedText> = texts
            .iter()
            .map(|t| encode_text(t, self.vocab(), self.text_size()))
            .collect();
        self.embed_encoded(&encoded)
    }

    pub fn pair_accuracy(&self, pairs: &[crate::data::PairRecord], tau: f64) -> Result<f64> {
        match self {
            Model::MultiSiam(m) => crate::eval::pair_accuracy(m, pairs, tau),
            Model::Smcd(m) => crate::eval::pair_accuracy_smcd(m, pairs, tau),
        }
    }
}

fn tensor_entries(model: &Model) -> (Header, Vec<&Tensor>) {
    match model {
        Model::MultiSiam(m) => {
            let tensors = vec![
                ("embedding.table", &m.embedding.table),
                ("encoder.w", &m.encoder.w),
                ("encoder.b", &m.encoder.b),
            ];
            let header = Header {
                model: "multisiam".into(),
                text_size: m.text_size,
                embedding_size: m.embedding.table.shape()[1],
                hidden_size: m.encoder.hidden(),
                vocab: m.vocab.tokens().to_vec(),
                categories: Vec::new(),
                tensors: tensors
                    .iter()
                    .map(|(n, t)| TensorInfo {
                        name: n.to_string(),
                        shape: t.shape().to_vec(),
                    })
                    .collect(),
            };
            (header, tensors.into_iter().map(|(_, t)| t).collect())
        }
        Model::Smcd(m) => {
            let tensors = vec![
                ("embedding.table", &m.embedding.table),
                ("trunk_lstm.w", &m.trunk_lstm.w),
                ("trunk_lstm.b", &m.trunk_lstm.b),
                ("cls_lstm.w", &m.cls_lstm.w),
                ("cls_lstm.b", &m.cls_lstm.b),
                ("cls_dense.w", &m.cls_dense.w),
                ("cls_dense.b", &m.cls_dense.b),
                ("dup_lstm.w", &m.dup_lstm.w),
                ("dup_lstm.b", &m.dup_lstm.b),
            ];
            let header = Header {
                model: "smcd".into(),
                text_size: m.text_size,
                embedding_size: m.embedding.table.shape()[1],
                hidden_size: m.trunk_lstm.hidden(),
                vocab: m.vocab.tokens().to_vec(),
                categories: m.categories.clone(),
                tensors: tensors
                    .iter()
                    .map(|(n, t)| TensorInfo {
                        name: n.to_string(),
                        shape: t.shape().to_vec(),
                    })
                    .collect(),
            };
            (header, tensors.into_iter().map(|(_, t)| t).collect())
        }
    }
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let (header, tensors) = tensor_entries(model);
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Format(format!("header serialization failed: {e}")))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header_json.len() as u64).to_le_bytes())?;
    w.write_all(&header_json)?;
    for t in tensors {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_checked(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("checkpoint truncated while reading {what}")))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_checked(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, not a model checkpoint",
            magic
        )));
    }
    let mut version = [0u8; 4];
    read_exact_checked(&mut r, &mut version, "version")?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let mut len = [0u8; 8];
    read_exact_checked(&mut r, &mut len, "header length")?;
    let len = u64::from_le_bytes(len) as usize;
    let mut header_json = vec![0u8; len];
    read_exact_checked(&mut r, &mut header_json, "header")?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| Error::Format(format!("malformed checkpoint header: {e}")))?;

    let mut tensors = Vec::with_capacity(header.tensors.len());
    for info in &header.tensors {
        let numel: usize = info.shape.iter().product();
        let mut data = vec![0.0f64; numel];
        let mut buf = [0u8; 8];
        for v in data.iter_mut() {
            read_exact_checked(&mut r, &mut buf, &info.name)?;
            *v = f64::from_le_bytes(buf);
        }
        tensors.push(Tensor::new(info.shape.clone(), data)?);
    }

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("checkpoint has trailing bytes".into()));
    }

    let vocab = Vocabulary::from_tokens(header.vocab);
    let expect = |idx: usize, name: &str| -> Result<Tensor> {
        let info = header
            .tensors
            .get(idx)
            .ok_or_else(|| Error::Format(format!("checkpoint missing tensor {name}")))?;
        if info.name != name {
            return Err(Error::Format(format!(
                "checkpoint tensor {} where {} was expected",
                info.name, name
            )));
        }
        Ok(tensors[idx].clone())
    };

    match header.model.as_str() {
        "multisiam" => {
            let table = expect(0, "embedding.table")?;
            let w = expect(1, "encoder.w")?;
            let b = expect(2, "encoder.b")?;
            if table.shape()[0] != vocab.size() {
                return Err(Error::Format(format!(
                    "embedding rows {} disagree with vocabulary size {}",
                    table.shape()[0],
                    vocab.size()
                )));
            }
            let encoder = LstmLayer::from_params(w, b)?;
            if encoder.hidden() != header.hidden_size
                || encoder.d_in() != header.embedding_size
                || table.shape()[1] != header.embedding_size
            {
                return Err(Error::Format(
                    "checkpoint tensor shapes disagree with the declared sizes".into(),
                ));
            }
            Ok(Model::MultiSiam(MultiSiamModel {
                vocab,
                embedding: EmbeddingLayer { table },
                encoder,
                text_size: header.text_size,
            }))
        }
        "smcd" => {
            let table = expect(0, "embedding.table")?;
            if table.shape()[0] != vocab.size() || table.shape()[1] != header.embedding_size {
                return Err(Error::Format(format!(
                    "embedding shape {:?} disagrees with vocabulary size {} and dim {}",
                    table.shape(),
                    vocab.size(),
                    header.embedding_size
                )));
            }
            let trunk_lstm = LstmLayer::from_params(
                expect(1, "trunk_lstm.w")?,
                expect(2, "trunk_lstm.b")?,
            )?;
            let cls_lstm =
                LstmLayer::from_params(expect(3, "cls_lstm.w")?, expect(4, "cls_lstm.b")?)?;
            let cls_dense =
                DenseLayer::from_params(expect(5, "cls_dense.w")?, expect(6, "cls_dense.b")?)?;
            let dup_lstm =
                LstmLayer::from_params(expect(7, "dup_lstm.w")?, expect(8, "dup_lstm.b")?)?;
            if trunk_lstm.hidden() != header.hidden_size
                || trunk_lstm.d_in() != header.embedding_size
                || cls_dense.w.shape()[1] != header.categories.len()
            {
                return Err(Error::Format(
                    "checkpoint tensor shapes disagree with the declared sizes".into(),
                ));
            }
            Ok(Model::Smcd(SmcdModel {
                vocab,
                embedding: EmbeddingLayer { table },
                trunk_lstm,
                cls_lstm,
                cls_dense,
                dup_lstm,
                categories: header.categories,
                text_size: header.text_size,
            }))
        }
        other => Err(Error::Format(format!("unknown model kind '{other}'"))),
    }
}
