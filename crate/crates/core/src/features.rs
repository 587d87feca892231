//! Node feature matrices: one unit-length embedding row per node.
//!
//! The on-disk format (`features.bin`) is a fixed header — magic `ELGF`,
//! version `u32`, `num_nodes u64`, `dim u32`, all little-endian — followed by
//! `num_nodes` rows of little-endian `f32`. In memory rows are `f64` and
//! renormalized exactly, so cosine similarity is a plain dot product.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::NodeId;

pub const FEATURES_MAGIC: &[u8; 4] = b"ELGF";
pub const FEATURES_VERSION: u32 = 1;

const UNIT_NORM_TOL: f64 = 1e-6;

/// Read access to per-node embedding rows. Implemented by the base matrix and
/// by transient override views used during enhanced training.
pub trait FeatureView: Sync {
    fn dim(&self) -> usize;
    fn row(&self, node: NodeId) -> &[f64];
}

/// Dense row-major matrix of unit-norm node embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    /// Builds a matrix from rows that are already unit length (± 1e-6); rows
    /// are then renormalized exactly in f64.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, mut row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Validation(format!(
                    "feature row {i} has dim {}, expected {dim}",
                    row.len()
                )));
            }
            let norm = l2_norm(&row);
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Validation(format!(
                    "feature row {i} has norm {norm}, expected 1 ± {UNIT_NORM_TOL}"
                )));
            }
            for x in &mut row {
                *x /= norm;
            }
            data.extend_from_slice(&row);
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix by L2-normalizing arbitrary non-zero rows.
    pub fn from_unnormalized_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let normalized = rows
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                normalize(row).map_err(|_| {
                    Error::Validation(format!("feature row {i} is a zero vector"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let dim = normalized.first().map_or(0, |r| r.len());
        for (i, row) in normalized.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Validation(format!(
                    "feature row {i} has dim {}, expected {dim}",
                    row.len()
                )));
            }
        }
        Ok(Self {
            dim,
            data: normalized.into_iter().flatten().collect(),
        })
    }

    pub fn num_rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(
            File::open(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?,
        );
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != FEATURES_MAGIC {
            return Err(Error::Format(format!(
                "{}: bad magic {magic:?}, expected ELGF",
                path.display()
            )));
        }
        let version = read_u32(&mut reader)?;
        if version != FEATURES_VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported version {version}",
                path.display()
            )));
        }
        let num_nodes = read_u64(&mut reader)? as usize;
        let dim = read_u32(&mut reader)? as usize;
        let mut buf = vec![0u8; dim * 4];
        let mut rows = Vec::with_capacity(num_nodes);
        for _ in 0..num_nodes {
            reader.read_exact(&mut buf)?;
            let row: Vec<f64> = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(FEATURES_MAGIC)?;
        w.write_all(&FEATURES_VERSION.to_le_bytes())?;
        w.write_all(&(self.num_rows() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for x in &self.data {
            w.write_all(&(*x as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }
}

impl FeatureView for FeatureMatrix {
    fn dim(&self) -> usize {
        self.dim
    }

    fn row(&self, node: NodeId) -> &[f64] {
        &self.data[node * self.dim..(node + 1) * self.dim]
    }
}

/// The base matrix with a transient per-node override layer on top. The base
/// is never mutated; overrides live only as long as the batch that drew them.
pub struct OverlaidFeatures<'a> {
    base: &'a FeatureMatrix,
    overrides: &'a HashMap<NodeId, Arc<Vec<f64>>>,
}

impl<'a> OverlaidFeatures<'a> {
    pub fn new(base: &'a FeatureMatrix, overrides: &'a HashMap<NodeId, Arc<Vec<f64>>>) -> Self {
        Self { base, overrides }
    }
}

impl FeatureView for OverlaidFeatures<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn row(&self, node: NodeId) -> &[f64] {
        match self.overrides.get(&node) {
            Some(row) => row.as_slice(),
            None => self.base.row(node),
        }
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L2-normalizes a vector in place; errors on (near-)zero input.
pub fn normalize(mut v: Vec<f64>) -> std::result::Result<Vec<f64>, ()> {
    let norm = l2_norm(&v);
    if norm <= 0.0 || !norm.is_finite() {
        return Err(());
    }
    for x in &mut v {
        *x /= norm;
    }
    Ok(v)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
