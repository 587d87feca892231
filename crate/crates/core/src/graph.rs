//! Text-attributed graph storage: undirected CSR adjacency plus per-node
//! text, label, and split tag.
//!
//! Graphs are immutable after construction and safe for unrestricted
//! concurrent reads. The loader symmetrizes directed input edges,
//! deduplicates, and drops self-loops; node ids must be dense `0..n`.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Train/val/test membership of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One line of `nodes.jsonl`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub text: String,
    pub label: usize,
    pub split: Split,
}

/// An undirected graph whose nodes carry text attributes.
///
/// Adjacency is CSR: `offsets` has `num_nodes + 1` entries, row `v` is
/// `cols[offsets[v]..offsets[v + 1]]`, strictly increasing, self-loop free,
/// and symmetric (`j ∈ row(i)` iff `i ∈ row(j)`).
#[derive(Clone, Debug, PartialEq)]
pub struct TextAttributedGraph {
    offsets: Vec<usize>,
    cols: Vec<NodeId>,
    texts: Vec<String>,
    labels: Vec<usize>,
    split: Vec<Split>,
    num_classes: usize,
}

impl TextAttributedGraph {
    /// Builds a graph from node records and raw (possibly directed, possibly
    /// duplicated) edges. Self-loops are dropped.
    pub fn from_parts(mut records: Vec<NodeRecord>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = records.len();
        records.sort_by_key(|r| r.id);
        for (expect, r) in records.iter().enumerate() {
            if r.id != expect {
                return Err(Error::Validation(format!(
                    "node ids must be dense 0..{n}: expected id {expect}, found {}",
                    r.id
                )));
            }
        }

        let distinct: BTreeSet<usize> = records.iter().map(|r| r.label).collect();
        let num_classes = distinct.len();
        if let Some(&max) = distinct.iter().next_back() {
            if max >= num_classes {
                return Err(Error::Validation(format!(
                    "labels must form a dense range 0..{num_classes}, found label {max}"
                )));
            }
        }

        let mut rows: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for &(src, dst) in edges {
            if src >= n || dst >= n {
                return Err(Error::Validation(format!(
                    "edge ({src}, {dst}) references a node id out of range (num_nodes = {n})"
                )));
            }
            if src == dst {
                continue;
            }
            rows[src].push(dst);
            rows[dst].push(src);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut cols = Vec::new();
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            offsets.push(cols.len());
        }

        Ok(Self {
            offsets,
            cols,
            texts: records.iter().map(|r| r.text.clone()).collect(),
            labels: records.iter().map(|r| r.label).collect(),
            split: records.iter().map(|r| r.split).collect(),
            num_classes,
        })
    }

    /// Loads a graph from a JSONL node file and a whitespace edge-list file.
    pub fn load(nodes_path: &Path, edges_path: &Path) -> Result<Self> {
        let records = read_node_records(nodes_path)?;
        let edges = read_edge_list(edges_path)?;
        Self::from_parts(records, &edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.texts.len()
    }

    /// Number of undirected edges (half the stored CSR entries).
    pub fn num_edges(&self) -> usize {
        self.cols.len() / 2
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    /// Neighbors of `node`, sorted ascending.
    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.cols[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn text(&self, node: NodeId) -> &str {
        &self.texts[node]
    }

    pub fn label(&self, node: NodeId) -> usize {
        self.labels[node]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split_of(&self, node: NodeId) -> Split {
        self.split[node]
    }

    /// Node ids carrying the given split tag, ascending.
    pub fn nodes_in_split(&self, split: Split) -> Vec<NodeId> {
        (0..self.num_nodes()).filter(|&v| self.split[v] == split).collect()
    }

    /// Raw CSR arrays, exposed for oracle tests and byte-level comparisons.
    pub fn csr_parts(&self) -> (&[usize], &[NodeId]) {
        (&self.offsets, &self.cols)
    }

    /// Writes the canonical on-disk form: nodes sorted by id, each undirected
    /// edge emitted once as `src dst` with `src < dst`. Reloading the output
    /// reproduces this graph exactly.
    pub fn write_canonical(&self, nodes_path: &Path, edges_path: &Path) -> Result<()> {
        let mut nodes = BufWriter::new(File::create(nodes_path)?);
        for id in 0..self.num_nodes() {
            let record = NodeRecord {
                id,
                text: self.texts[id].clone(),
                label: self.labels[id],
                split: self.split[id],
            };
            serde_json::to_writer(&mut nodes, &record)
                .map_err(|e| Error::Format(format!("encoding node {id}: {e}")))?;
            nodes.write_all(b"\n")?;
        }
        nodes.flush()?;

        let mut edges = BufWriter::new(File::create(edges_path)?);
        for src in 0..self.num_nodes() {
            for &dst in self.neighbors(src) {
                if src < dst {
                    writeln!(edges, "{src} {dst}")?;
                }
            }
        }
        edges.flush()?;
        Ok(())
    }
}

fn read_node_records(path: &Path) -> Result<Vec<NodeRecord>> {
    let file = File::open(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: NodeRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, idx + 1, format!("bad node record: {e}")))?;
        records.push(record);
    }
    let mut seen = vec![false; records.len()];
    for r in &records {
        if r.id >= records.len() {
            return Err(Error::Validation(format!(
                "node id {} out of range (file has {} records)",
                r.id,
                records.len()
            )));
        }
        if seen[r.id] {
            return Err(Error::Validation(format!("duplicate node id {}", r.id)));
        }
        seen[r.id] = true;
    }
    Ok(records)
}

fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let file = File::open(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let mut edges = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let payload = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut it = payload.split_whitespace();
        let (Some(a), b) = (it.next(), it.next()) else {
            continue; // blank or comment-only line
        };
        let Some(b) = b else {
            return Err(Error::parse(path, idx + 1, "expected `src dst`"));
        };
        if it.next().is_some() {
            return Err(Error::parse(path, idx + 1, "trailing tokens after `src dst`"));
        }
        let src: usize = a
            .parse()
            .map_err(|e| Error::parse(path, idx + 1, format!("bad src id `{a}`: {e}")))?;
        let dst: usize = b
            .parse()
            .map_err(|e| Error::parse(path, idx + 1, format!("bad dst id `{b}`: {e}")))?;
        edges.push((src, dst));
    }
    Ok(edges)
}
