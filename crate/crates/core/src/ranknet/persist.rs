use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GeneratorModel, HeadCOrder, HeadKind, ModelError, RankerModel};
use crate::numkernel::{read_checkpoint, restore_into, write_checkpoint, Parameter};

/// JSON sidecar stored next to every `BRK1` file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// `"ranker"` or `"generator"`.
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_kind: Option<HeadKind>,
    pub channels: usize,
    pub attrs: usize,
    pub noise_dim: usize,
    #[serde(default)]
    pub head_c_order: HeadCOrder,
}

/// `model.brk` → `model.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ModelError {
    ModelError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn write_pair(path: &Path, params: &[Parameter], meta: &ModelMeta) -> Result<(), ModelError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&mut w, params).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))?;
    let side = sidecar_path(path);
    let mut json = serde_json::to_string_pretty(meta).map_err(|e| io_err(&side, e))?;
    json.push('\n');
    std::fs::write(&side, json).map_err(|e| io_err(&side, e))
}

fn read_meta(path: &Path) -> Result<ModelMeta, ModelError> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(&side, e))
}

fn restore(path: &Path, params: &mut [Parameter]) -> Result<(), ModelError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let table = read_checkpoint(BufReader::new(f))?;
    restore_into(params, &table)?;
    Ok(())
}

/// Writes `path` (BRK1) and its sidecar. `noise_dim` records the paired
/// generator's noise size, 0 when there is none.
pub fn save_ranker(model: &RankerModel, path: &Path, noise_dim: usize) -> Result<(), ModelError> {
    let meta = ModelMeta {
        model: "ranker".into(),
        head_kind: Some(model.kind()),
        channels: model.channels(),
        attrs: model.attrs(),
        noise_dim,
        head_c_order: model.order(),
    };
    write_pair(path, model.params(), &meta)
}

pub fn load_ranker(path: &Path) -> Result<(RankerModel, ModelMeta), ModelError> {
    let meta = read_meta(path)?;
    let kind = match (meta.model.as_str(), meta.head_kind) {
        ("ranker", Some(k)) => k,
        _ => return Err(io_err(&sidecar_path(path), "sidecar does not describe a ranker")),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = RankerModel::new(kind, meta.channels, meta.attrs, meta.head_c_order, &mut rng)?;
    restore(path, model.params_mut())?;
    Ok((model, meta))
}

pub fn save_generator(g: &GeneratorModel, path: &Path) -> Result<(), ModelError> {
    let meta = ModelMeta {
        model: "generator".into(),
        head_kind: None,
        channels: 0,
        attrs: g.attrs(),
        noise_dim: g.noise_dim(),
        head_c_order: HeadCOrder::default(),
    };
    write_pair(path, g.params(), &meta)
}

pub fn load_generator(path: &Path) -> Result<GeneratorModel, ModelError> {
    let meta = read_meta(path)?;
    if meta.model != "generator" {
        return Err(io_err(&sidecar_path(path), "sidecar does not describe a generator"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = GeneratorModel::new(meta.attrs, meta.noise_dim, &mut rng)?;
    restore(path, g.params_mut())?;
    Ok(g)
}
