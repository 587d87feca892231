//! Checkpoint file format: magic `ELGM`, version `u32`, `num_layers u32`,
//! the `num_layers + 1` dims as `u32`, the little-endian `f32` parameter
//! blocks (weights row-major, then bias, per layer), and a JSON trailer
//! carrying the `TrainConfig`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

use super::{LayerParams, ModelParameters, TrainConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ELGM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, params: &ModelParameters, cfg: &TrainConfig) -> Result<()> {
    params.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.num_layers() as u32).to_le_bytes())?;
    for d in params.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for layer in &params.layers {
        for x in layer.weight.iter() {
            w.write_all(&(*x as f32).to_le_bytes())?;
        }
        for x in layer.bias.iter() {
            w.write_all(&(*x as f32).to_le_bytes())?;
        }
    }
    let trailer = serde_json::to_vec(cfg)
        .map_err(|e| Error::Format(format!("encoding checkpoint trailer: {e}")))?;
    w.write_all(&trailer)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParameters, TrainConfig)> {
    let mut r = BufReader::new(
        File::open(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?,
    );
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:?}, expected ELGM",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let num_layers = read_u32(&mut r)? as usize;
    if num_layers == 0 {
        return Err(Error::Format("checkpoint has zero layers".into()));
    }
    let mut dims = Vec::with_capacity(num_layers + 1);
    for _ in 0..=num_layers {
        dims.push(read_u32(&mut r)? as usize);
    }
    let mut layers = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        let (rows, cols) = (dims[l], dims[l + 1]);
        let weight = Array2::from_shape_vec((rows, cols), read_f32_block(&mut r, rows * cols)?)
            .map_err(|e| Error::Format(format!("layer {l} weight shape: {e}")))?;
        let bias = Array1::from_vec(read_f32_block(&mut r, cols)?);
        layers.push(LayerParams { weight, bias });
    }
    let mut trailer = Vec::new();
    r.read_to_end(&mut trailer)?;
    let cfg: TrainConfig = serde_json::from_slice(&trailer)
        .map_err(|e| Error::Format(format!("{}: bad trailer: {e}", path.display())))?;
    let params = ModelParameters { layers };
    params.validate()?;
    Ok((params, cfg))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32_block(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; len * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}
