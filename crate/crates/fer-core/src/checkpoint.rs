//! Checkpoint serialization: a binary tensor blob (`params.bin`, plus
//! `optim.bin` for momentum buffers) and a plain-text `meta.txt` sidecar.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use thiserror::Error;

pub const PARAMS_FILE: &str = "params.bin";
pub const OPTIM_FILE: &str = "optim.bin";
pub const META_FILE: &str = "meta.txt";

const MAGIC: &[u8; 8] = b"FERT0001";
const MAX_NDIM: usize = 8;
const MAX_ELEMENTS: usize = 1 << 24;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("tensor blob: {0}")]
    Blob(String),
    #[error("meta line {line}: {message}")]
    Meta { line: usize, message: String },
    #[error("meta is missing key {0:?}")]
    MissingKey(&'static str),
}

/// Whether a checkpoint holds a text-supervised model or the baseline
/// classifier arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Text,
    Baseline,
}

impl TrainMode {
    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::Text => "text",
            TrainMode::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "text" => Some(TrainMode::Text),
            "baseline" => Some(TrainMode::Baseline),
            _ => None,
        }
    }
}

/// Everything needed to rebuild the architecture a blob belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub encoder: String,
    pub input_size: usize,
    pub d_v: usize,
    pub d_t: usize,
    pub mode: TrainMode,
    pub categories: Vec<String>,
    pub seed: u64,
    pub config_hash: String,
    pub epoch: usize,
    pub fn_activation: String,
}

// ---------------------------------------------------------------------------
// tensor blob codec

/// Encodes tensors as `MAGIC | u32 count | per tensor: u32 ndim, u32 dims..,
/// f64 LE data`.
pub fn encode_tensors(tensors: &[ArrayD<f64>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in t.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Blob("truncated".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Decodes a tensor blob, bounding shapes before any allocation.
pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<ArrayD<f64>>, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(CheckpointError::Blob("bad magic".into()));
    }
    let count = r.u32()? as usize;
    if count > 4096 {
        return Err(CheckpointError::Blob(format!("{count} tensors")));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let ndim = r.u32()? as usize;
        if ndim > MAX_NDIM {
            return Err(CheckpointError::Blob(format!("{ndim} dims")));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut elements = 1usize;
        for _ in 0..ndim {
            let d = r.u32()? as usize;
            elements = elements
                .checked_mul(d)
                .filter(|&e| e <= MAX_ELEMENTS)
                .ok_or_else(|| CheckpointError::Blob("tensor too large".into()))?;
            shape.push(d);
        }
        let raw = r.take(elements * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = ArrayD::from_shape_vec(IxDyn(&shape), data)
            .map_err(|e| CheckpointError::Blob(e.to_string()))?;
        tensors.push(tensor);
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Blob(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(tensors)
}

// ---------------------------------------------------------------------------
// meta sidecar

pub fn format_meta(meta: &CheckpointMeta) -> String {
    format!(
        "encoder={}\ninput_size={}\nd_v={}\nd_t={}\nmode={}\ncategories={}\nseed={}\nconfig_hash={}\nepoch={}\nfn_activation={}\n",
        meta.encoder,
        meta.input_size,
        meta.d_v,
        meta.d_t,
        meta.mode.name(),
        meta.categories.join(","),
        meta.seed,
        meta.config_hash,
        meta.epoch,
        meta.fn_activation,
    )
}

/// Parses a `meta.txt` body; errors carry 1-based line numbers.
pub fn parse_meta(text: &str) -> Result<CheckpointMeta, CheckpointError> {
    let mut map = BTreeMap::new();
    for (ix, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CheckpointError::Meta {
            line: ix + 1,
            message: "expected key=value".into(),
        })?;
        if map.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
            return Err(CheckpointError::Meta {
                line: ix + 1,
                message: format!("duplicate key {key:?}"),
            });
        }
    }
    fn get<'m>(
        map: &'m BTreeMap<String, String>,
        key: &'static str,
    ) -> Result<&'m str, CheckpointError> {
        map.get(key)
            .map(String::as_str)
            .ok_or(CheckpointError::MissingKey(key))
    }
    fn parse_num<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, CheckpointError> {
        value.parse().map_err(|_| CheckpointError::Meta {
            line: 0,
            message: format!("bad value {value:?} for {key}"),
        })
    }
    let mode_str = get(&map, "mode")?;
    let mode = TrainMode::parse(mode_str).ok_or_else(|| CheckpointError::Meta {
        line: 0,
        message: format!("bad mode {mode_str:?}"),
    })?;
    Ok(CheckpointMeta {
        encoder: get(&map, "encoder")?.to_string(),
        input_size: parse_num(get(&map, "input_size")?, "input_size")?,
        d_v: parse_num(get(&map, "d_v")?, "d_v")?,
        d_t: parse_num(get(&map, "d_t")?, "d_t")?,
        mode,
        categories: get(&map, "categories")?
            .split(',')
            .map(str::to_string)
            .collect(),
        seed: parse_num(get(&map, "seed")?, "seed")?,
        config_hash: get(&map, "config_hash")?.to_string(),
        epoch: parse_num(get(&map, "epoch")?, "epoch")?,
        fn_activation: get(&map, "fn_activation")?.to_string(),
    })
}

// ---------------------------------------------------------------------------
// directory layout

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `params.bin`, `optim.bin`, and `meta.txt` into `dir`.
pub fn write_checkpoint(
    dir: &Path,
    params: &[ArrayD<f64>],
    optim: &[ArrayD<f64>],
    meta: &CheckpointMeta,
) -> Result<(), CheckpointError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let params_path = dir.join(PARAMS_FILE);
    std::fs::write(&params_path, encode_tensors(params)).map_err(io_err(&params_path))?;
    let optim_path = dir.join(OPTIM_FILE);
    std::fs::write(&optim_path, encode_tensors(optim)).map_err(io_err(&optim_path))?;
    let meta_path = dir.join(META_FILE);
    std::fs::write(&meta_path, format_meta(meta)).map_err(io_err(&meta_path))?;
    Ok(())
}

/// Reads a checkpoint directory. `optim.bin` is optional so that
/// hand-assembled checkpoints still evaluate.
pub fn read_checkpoint(
    dir: &Path,
) -> Result<(Vec<ArrayD<f64>>, Vec<ArrayD<f64>>, CheckpointMeta), CheckpointError> {
    let params_path = dir.join(PARAMS_FILE);
    let params = decode_tensors(&std::fs::read(&params_path).map_err(io_err(&params_path))?)?;
    let optim_path = dir.join(OPTIM_FILE);
    let optim = if optim_path.is_file() {
        decode_tensors(&std::fs::read(&optim_path).map_err(io_err(&optim_path))?)?
    } else {
        Vec::new()
    };
    let meta_path = dir.join(META_FILE);
    let meta_text = std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta = parse_meta(&meta_text)?;
    Ok((params, optim, meta))
}
