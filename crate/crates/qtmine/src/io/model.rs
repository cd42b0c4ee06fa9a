use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use qtmine_core::model::{decode_checkpoint, encode_checkpoint, CheckpointMeta, Params};
use qtmine_core::tokenizer::{SpecialIds, Vocab};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

pub const VOCAB_FILE: &str = "vocab.json";
pub const CONFIG_FILE: &str = "config.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum TokenRepr {
    Text(String),
    Bytes { base64: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<TokenRepr>,
    merges: Vec<[u32; 2]>,
    special: BTreeMap<String, u32>,
}

fn printable(bytes: &[u8]) -> Option<&str> {
    let s = std::str::from_utf8(bytes).ok()?;
    (!s.is_empty() && s.chars().all(|c| !c.is_control() || c == ' ')).then_some(s)
}

pub fn vocab_to_json(vocab: &Vocab) -> String {
    let file = VocabFile {
        tokens: vocab
            .tokens()
            .iter()
            .map(|t| match printable(t) {
                Some(s) => TokenRepr::Text(s.to_string()),
                None => TokenRepr::Bytes { base64: STANDARD.encode(t) },
            })
            .collect(),
        merges: vocab.merges().iter().map(|&(l, r)| [l, r]).collect(),
        special: vocab.special().named().iter().map(|&(n, id)| (n.to_string(), id)).collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("vocab serializes");
    s.push('\n');
    s
}

pub fn vocab_from_json(text: &str) -> std::result::Result<Vocab, String> {
    let file: VocabFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let tokens = file
        .tokens
        .into_iter()
        .map(|t| match t {
            TokenRepr::Text(s) => Ok(s.into_bytes()),
            TokenRepr::Bytes { base64 } => STANDARD.decode(base64).map_err(|e| e.to_string()),
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let get = |name: &str| file.special.get(name).copied().ok_or_else(|| format!("missing special id `{name}`"));
    let special = SpecialIds { bos: get("bos")?, pad: get("pad")?, eos: get("eos")?, unk: get("unk")?, mask: get("mask")? };
    let merges = file.merges.into_iter().map(|[l, r]| (l, r)).collect();
    Vocab::from_parts(tokens, merges, special).map_err(|e| e.to_string())
}

pub fn save_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    fs::write(path, vocab_to_json(vocab)).map_err(io_err(path))
}

pub fn load_vocab(path: &Path) -> Result<Vocab> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    vocab_from_json(&text).map_err(|message| Error::Format { path: path.to_path_buf(), message })
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })
}

/// Writes `params` to `bin` and its JSON sidecar to `sidecar`.
pub fn save_checkpoint(bin: &Path, sidecar: &Path, params: &Params<f32>) -> Result<()> {
    let (meta, bytes) = encode_checkpoint(params);
    fs::write(bin, bytes).map_err(io_err(bin))?;
    save_json(sidecar, &meta)
}

pub fn load_checkpoint(bin: &Path, sidecar: &Path) -> Result<Params<f32>> {
    let meta: CheckpointMeta = load_json(sidecar)?;
    let bytes = fs::read(bin).map_err(io_err(bin))?;
    decode_checkpoint(&meta, &bytes).map_err(|e| Error::Format { path: bin.to_path_buf(), message: e.to_string() })
}

/// A model directory holds `vocab.json`, `config.json` and `params.bin`.
pub fn save_model_dir(dir: &Path, vocab: &Vocab, params: &Params<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_vocab(&dir.join(VOCAB_FILE), vocab)?;
    save_checkpoint(&dir.join(PARAMS_FILE), &dir.join(CONFIG_FILE), params)
}

pub fn load_model_dir(dir: &Path) -> Result<(Vocab, Params<f32>)> {
    let vocab = load_vocab(&dir.join(VOCAB_FILE))?;
    let params = load_checkpoint(&dir.join(PARAMS_FILE), &dir.join(CONFIG_FILE))?;
    if params.config.vocab_size != vocab.len() {
        return Err(Error::Format {
            path: dir.to_path_buf(),
            message: format!("model expects {} tokens, vocabulary has {}", params.config.vocab_size, vocab.len()),
        });
    }
    Ok((vocab, params))
}
