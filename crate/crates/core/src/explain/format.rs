//! Text format for explainer masks.
//!
//! ```text
//! ginx-masks 1
//! explainer <id>
//! config <config hash>
//! count <number of graphs>
//! mask <graph index> <num_undirected_edges> <k>:<value> ...
//! ```
//!
//! One `mask` line per graph lists every undirected edge. Values use the
//! shortest representation that parses back to the same `f64`.

use std::fmt::Write as _;
use std::io::{self, BufRead};

use thiserror::Error;

use crate::graph::{Dataset, EdgeMask, GraphError};

const MAGIC: &str = "ginx-masks";
pub const MASK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MaskFormatError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mask file holds {found} graphs, dataset has {expected}")]
    Count { found: usize, expected: usize },
    #[error("graph {graph}: mask has {found} undirected edges, graph has {expected}")]
    Alignment { graph: usize, found: usize, expected: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Masks of one explainer over a dataset, stored per undirected edge.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskFile {
    pub explainer: String,
    pub config_hash: String,
    pub values: Vec<Vec<f64>>,
}

impl MaskFile {
    pub fn from_masks(explainer: &str, config_hash: &str, d: &Dataset, masks: &[EdgeMask]) -> Result<Self, MaskFormatError> {
        if masks.len() != d.len() {
            return Err(MaskFormatError::Count { found: masks.len(), expected: d.len() });
        }
        let values = d
            .graphs
            .iter()
            .zip(masks)
            .map(|(g, m)| m.undirected_values(&g.edge_pairs()?))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { explainer: explainer.to_owned(), config_hash: config_hash.to_owned(), values })
    }

    /// Expands the stored values onto the directed edges of `d`.
    pub fn to_masks(&self, d: &Dataset) -> Result<Vec<EdgeMask>, MaskFormatError> {
        if self.values.len() != d.len() {
            return Err(MaskFormatError::Count { found: self.values.len(), expected: d.len() });
        }
        d.graphs
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (g, v))| {
                let pairs = g.edge_pairs()?;
                if pairs.num_undirected() != v.len() {
                    return Err(MaskFormatError::Alignment { graph: i, found: v.len(), expected: pairs.num_undirected() });
                }
                Ok(EdgeMask::new(pairs.expand(v)))
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC} {MASK_FORMAT_VERSION}");
        let _ = writeln!(s, "explainer {}", self.explainer);
        let _ = writeln!(s, "config {}", self.config_hash);
        let _ = writeln!(s, "count {}", self.values.len());
        for (i, v) in self.values.iter().enumerate() {
            let _ = write!(s, "mask {i} {}", v.len());
            for (k, x) in v.iter().enumerate() {
                let _ = write!(s, " {k}:{x}");
            }
            s.push('\n');
        }
        s
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, MaskFormatError> {
        let mut lines = input.lines().enumerate().map(|(n, l)| l.map(|l| (n + 1, l)));
        let mut next = |what: &str| -> Result<(usize, String), MaskFormatError> {
            lines.next().transpose()?.ok_or_else(|| MaskFormatError::Parse { line: 0, msg: format!("missing {what}") })
        };
        let fail = |line: usize, msg: String| MaskFormatError::Parse { line, msg };
        let (n, magic) = next("header")?;
        if magic != format!("{MAGIC} {MASK_FORMAT_VERSION}") {
            return Err(fail(n, format!("expected `{MAGIC} {MASK_FORMAT_VERSION}`, found `{magic}`")));
        }
        let mut keyed = |key: &str| -> Result<(usize, String), MaskFormatError> {
            let (n, l) = next(key)?;
            match l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')) {
                Some(rest) => Ok((n, rest.to_owned())),
                None => Err(fail(n, format!("expected `{key}` line"))),
            }
        };
        let (_, explainer) = keyed("explainer")?;
        let (_, config_hash) = keyed("config")?;
        let (n, count) = keyed("count")?;
        let count: usize = count.parse().map_err(|_| fail(n, format!("bad count `{count}`")))?;
        let mut values = Vec::with_capacity(count);
        for i in 0..count {
            let (n, rest) = keyed("mask")?;
            let mut parts = rest.split(' ');
            let index: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(|| fail(n, "bad graph index".into()))?;
            if index != i {
                return Err(fail(n, format!("expected graph {i}, found {index}")));
            }
            let len: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(|| fail(n, "bad edge count".into()))?;
            let mut v = Vec::with_capacity(len);
            for (k, item) in parts.enumerate() {
                let parsed = item
                    .split_once(':')
                    .filter(|(key, _)| key.parse::<usize>().ok() == Some(k))
                    .and_then(|(_, x)| x.parse::<f64>().ok())
                    .ok_or_else(|| fail(n, format!("bad entry `{item}` at position {k}")))?;
                v.push(parsed);
            }
            if v.len() != len {
                return Err(fail(n, format!("declared {len} edges, found {}", v.len())));
            }
            values.push(v);
        }
        Ok(Self { explainer, config_hash, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{build_dataset, DatasetSpec};

    fn dataset() -> Dataset {
        build_dataset(&DatasetSpec { num_graphs: 4, ..DatasetSpec::ba_2motifs() }).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let d = dataset();
        let masks: Vec<EdgeMask> = d
            .graphs
            .iter()
            .map(|g| {
                let pairs = g.edge_pairs().unwrap();
                let v: Vec<f64> = (0..pairs.num_undirected()).map(|k| (k as f64 * 0.137).sin().abs() / 3.0).collect();
                EdgeMask::new(pairs.expand(&v))
            })
            .collect();
        let file = MaskFile::from_masks("saliency", "abc123", &d, &masks).unwrap();
        let text = file.to_text();
        let back = MaskFile::read(text.as_bytes()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_masks(&d).unwrap(), masks);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let d = dataset();
        let masks = d.truth_masks.clone().unwrap();
        let text = MaskFile::from_masks("truth", "h", &d, &masks).unwrap().to_text();
        assert!(MaskFile::read(text.replace("ginx-masks 1", "ginx-masks 2").as_bytes()).is_err());
        assert!(MaskFile::read(text.replace(" 0:", " 7:").as_bytes()).is_err());
        let truncated: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(MaskFile::read(truncated.as_bytes()).is_err());
        let mut other = MaskFile::read(text.as_bytes()).unwrap();
        other.values[1].pop();
        assert!(matches!(other.to_masks(&d), Err(MaskFormatError::Alignment { graph: 1, .. })));
        other.values.pop();
        assert!(matches!(other.to_masks(&d), Err(MaskFormatError::Count { .. })));
    }
}
