//! Line-oriented text format for datasets.
//!
//! ```text
//! ginx-dataset 1
//! name <rest of line>
//! dims <d_n> <d_e>
//! count <number of graphs>
//! graph <index> <label> <train|validation|test> <num_nodes> <num_undirected_edges>
//! edges <src_0> <dst_0> <src_1> <dst_1> ...
//! x <num_nodes * d_n reals, row-major>
//! ef <num_undirected_edges * d_e reals, row-major>
//! w <num_undirected_edges reals>
//! truth <undirected_index>:<value> ...      (optional, nonzero entries only)
//! ```
//!
//! The five or six lines after the header repeat once per graph. Undirected
//! edge `k` is loaded as directed edges `2k` and `2k + 1`. Integers are base-10;
//! reals are written with 9 significant digits. `truth` lines are either present
//! for every graph or for none.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::graph::{validate_graph, Dataset, EdgeMask, EdgePairs, Graph, Matrix, Split};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "ginx-dataset";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported dataset format version {found} (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error("line {line}: malformed header: {msg}")]
    Header { line: usize, msg: String },
    #[error("graph {graph} (line {line}): {msg}")]
    Record { graph: usize, line: usize, msg: String },
    #[error("dataset cannot be written: {0}")]
    Invalid(String),
}

fn real(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes `d` in the text format.
pub fn write_dataset<W: Write>(d: &Dataset, out: W) -> Result<(), FormatError> {
    d.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
    let mut w = BufWriter::new(out);
    let (d_n, d_e) = d.feature_dims();
    writeln!(w, "{MAGIC} {FORMAT_VERSION}")?;
    writeln!(w, "name {}", d.name)?;
    writeln!(w, "dims {d_n} {d_e}")?;
    writeln!(w, "count {}", d.graphs.len())?;
    for (i, g) in d.graphs.iter().enumerate() {
        let pairs = g.edge_pairs().map_err(|e| FormatError::Invalid(format!("graph {i}: {e}")))?;
        let u = pairs.num_undirected();
        writeln!(w, "graph {i} {} {} {} {u}", g.label, d.splits[i].as_str(), g.num_nodes)?;
        write!(w, "edges")?;
        for k in 0..u {
            let (s, t) = g.edges[pairs.directed(k)[0]];
            write!(w, " {s} {t}")?;
        }
        write!(w, "\nx")?;
        for v in g.node_features.as_slice() {
            write!(w, " {}", real(*v))?;
        }
        write!(w, "\nef")?;
        for k in 0..u {
            for v in g.edge_features.row(pairs.directed(k)[0]) {
                write!(w, " {}", real(*v))?;
            }
        }
        write!(w, "\nw")?;
        for k in 0..u {
            write!(w, " {}", real(g.edge_weights[pairs.directed(k)[0]]))?;
        }
        writeln!(w)?;
        if let Some(masks) = &d.truth_masks {
            let values = masks[i].undirected_values(&pairs).map_err(|e| FormatError::Invalid(e.to_string()))?;
            write!(w, "truth")?;
            for (k, v) in values.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                write!(w, " {k}:{}", real(*v))?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<(), FormatError> {
    let mut buf = Vec::new();
    write_dataset(d, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, FormatError> {
    read_dataset(BufReader::new(fs::File::open(path)?))
}

struct Lines<R> {
    inner: io::Lines<R>,
    line: usize,
    peeked: Option<String>,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<Option<String>, FormatError> {
        if let Some(l) = self.peeked.take() {
            return Ok(Some(l));
        }
        loop {
            match self.inner.next() {
                None => return Ok(None),
                Some(l) => {
                    self.line += 1;
                    let l = l?;
                    if !l.trim().is_empty() {
                        return Ok(Some(l));
                    }
                }
            }
        }
    }

    fn peek_keyword(&mut self) -> Result<Option<String>, FormatError> {
        if self.peeked.is_none() {
            self.peeked = self.next()?;
        }
        Ok(self.peeked.as_ref().and_then(|l| l.split_whitespace().next().map(str::to_owned)))
    }
}

/// Reads a dataset in the text format, checking every graph's invariants.
pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset, FormatError> {
    let mut lines = Lines { inner: input.lines(), line: 0, peeked: None };
    let header_err = |line: usize, msg: &str| FormatError::Header { line, msg: msg.to_owned() };

    let first = lines.next()?.ok_or_else(|| header_err(1, "empty file"))?;
    let mut tok = first.split_whitespace();
    if tok.next() != Some(MAGIC) {
        return Err(header_err(lines.line, "missing ginx-dataset magic"));
    }
    let version = tok.next().unwrap_or("").to_owned();
    if version.parse::<u32>().ok() != Some(FORMAT_VERSION) {
        return Err(FormatError::Version { found: version, expected: FORMAT_VERSION });
    }
    let name_line = lines.next()?.ok_or_else(|| header_err(lines.line, "missing name"))?;
    let name = name_line
        .strip_prefix("name")
        .ok_or_else(|| header_err(lines.line, "expected `name`"))?
        .trim()
        .to_owned();
    let dims = header_fields(&mut lines, "dims", 2)?;
    let (d_n, d_e) = (dims[0], dims[1]);
    let count = header_fields(&mut lines, "count", 1)?[0];

    let mut graphs = Vec::with_capacity(count);
    let mut splits = Vec::with_capacity(count);
    let mut truths: Vec<Option<EdgeMask>> = Vec::with_capacity(count);
    for i in 0..count {
        let (g, split, truth) = read_graph(&mut lines, i, d_n, d_e)?;
        graphs.push(g);
        splits.push(split);
        truths.push(truth);
    }
    if lines.next()?.is_some() {
        return Err(FormatError::Record { graph: count, line: lines.line, msg: "trailing data after last graph".into() });
    }
    let with_truth = truths.iter().filter(|t| t.is_some()).count();
    let truth_masks = if with_truth == 0 {
        None
    } else if with_truth == count {
        Some(truths.into_iter().map(Option::unwrap).collect())
    } else {
        let graph = truths.iter().position(Option::is_none).unwrap_or(0);
        return Err(FormatError::Record { graph, line: lines.line, msg: "truth masks must be present for all graphs or none".into() });
    };
    Ok(Dataset { name, graphs, splits, truth_masks })
}

fn header_fields<R: BufRead>(lines: &mut Lines<R>, key: &str, n: usize) -> Result<Vec<usize>, FormatError> {
    let l = lines.next()?.ok_or_else(|| FormatError::Header { line: lines.line, msg: format!("missing `{key}`") })?;
    let mut tok = l.split_whitespace();
    let bad = || FormatError::Header { line: lines.line, msg: format!("expected `{key}` followed by {n} integers") };
    if tok.next() != Some(key) {
        return Err(bad());
    }
    let vals: Vec<usize> = tok.map(|t| t.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    if vals.len() != n {
        return Err(bad());
    }
    Ok(vals)
}

fn read_graph<R: BufRead>(
    lines: &mut Lines<R>,
    index: usize,
    d_n: usize,
    d_e: usize,
) -> Result<(Graph, Split, Option<EdgeMask>), FormatError> {
    let err = |line: usize, msg: String| FormatError::Record { graph: index, line, msg };
    let mut keyed = |key: &str| -> Result<Vec<String>, FormatError> {
        let l = lines.next()?.ok_or_else(|| err(lines.line, format!("unexpected end of file, expected `{key}`")))?;
        let mut tok = l.split_whitespace();
        if tok.next() != Some(key) {
            return Err(err(lines.line, format!("expected `{key}` line")));
        }
        Ok(tok.map(str::to_owned).collect())
    };

    let head = keyed("graph")?;
    let line = lines.line;
    if head.len() != 5 {
        return Err(err(line, "graph line needs index, label, split, nodes, edges".into()));
    }
    let int = |s: &str, what: &str| s.parse::<usize>().map_err(|_| err(line, format!("bad {what} `{s}`")));
    if int(&head[0], "index")? != index {
        return Err(err(line, format!("graph index {} out of sequence", head[0])));
    }
    let label = int(&head[1], "label")?;
    let split = Split::parse(&head[2]).ok_or_else(|| err(line, format!("unknown split `{}`", head[2])))?;
    let num_nodes = int(&head[3], "node count")?;
    let num_undirected = int(&head[4], "edge count")?;

    let mut keyed = |key: &str, expected: usize| -> Result<(Vec<String>, usize), FormatError> {
        let l = lines.next()?.ok_or_else(|| err(lines.line, format!("unexpected end of file, expected `{key}`")))?;
        let mut tok = l.split_whitespace();
        if tok.next() != Some(key) {
            return Err(err(lines.line, format!("expected `{key}` line")));
        }
        let vals: Vec<String> = tok.map(str::to_owned).collect();
        if vals.len() != expected {
            return Err(err(lines.line, format!("`{key}` has {} values, expected {expected}", vals.len())));
        }
        Ok((vals, lines.line))
    };
    let reals = |vals: &[String], line: usize| -> Result<Vec<f64>, FormatError> {
        vals.iter()
            .map(|s| s.parse::<f64>().map_err(|_| err(line, format!("bad real `{s}`"))))
            .collect()
    };

    let (edge_tok, edge_line) = keyed("edges", 2 * num_undirected)?;
    let mut pairs = Vec::with_capacity(num_undirected);
    for c in edge_tok.chunks_exact(2) {
        let a = c[0].parse::<usize>().map_err(|_| err(edge_line, format!("bad node index `{}`", c[0])))?;
        let b = c[1].parse::<usize>().map_err(|_| err(edge_line, format!("bad node index `{}`", c[1])))?;
        for v in [a, b] {
            if v >= num_nodes {
                return Err(err(edge_line, format!("edge references node {v} but graph has {num_nodes} nodes")));
            }
        }
        pairs.push((a, b));
    }
    let (x_tok, x_line) = keyed("x", num_nodes * d_n)?;
    let x = reals(&x_tok, x_line)?;
    let (ef_tok, ef_line) = keyed("ef", num_undirected * d_e)?;
    let ef = reals(&ef_tok, ef_line)?;
    let (w_tok, w_line) = keyed("w", num_undirected)?;
    let w = reals(&w_tok, w_line)?;

    let mut g = Graph::from_undirected(
        num_nodes,
        &pairs,
        Matrix::from_vec(num_nodes, d_n, x),
        Matrix::from_vec(num_undirected, d_e, ef),
        label,
    );
    g.edge_weights = w.iter().flat_map(|&v| [v, v]).collect();
    if let Some(v) = validate_graph(&g).violations.first() {
        return Err(err(edge_line, v.to_string()));
    }

    let truth = if lines.peek_keyword()?.as_deref() == Some("truth") {
        let l = lines.next()?.unwrap_or_default();
        let line = lines.line;
        let mut values = vec![0.0; num_undirected];
        for entry in l.split_whitespace().skip(1) {
            let (k, v) = entry.split_once(':').ok_or_else(|| err(line, format!("bad truth entry `{entry}`")))?;
            let k: usize = k.parse().map_err(|_| err(line, format!("bad truth index `{k}`")))?;
            let v: f64 = v.parse().map_err(|_| err(line, format!("bad truth value `{v}`")))?;
            if k >= num_undirected {
                return Err(err(line, format!("truth index {k} out of range for {num_undirected} edges")));
            }
            values[k] = v;
        }
        Some(EdgeMask::new(EdgePairs::interleaved(num_undirected).expand(&values)))
    } else {
        None
    };
    Ok((g, split, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{build_dataset, DatasetSpec};

    fn small() -> Dataset {
        let mut spec = DatasetSpec::ba_house_grid();
        spec.num_graphs = 20;
        build_dataset(&spec).unwrap()
    }

    fn to_string(d: &Dataset) -> String {
        let mut buf = Vec::new();
        write_dataset(d, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn round_trip() {
        let d = small();
        let text = to_string(&d);
        let back = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(back, d);
        assert_eq!(to_string(&back), text);
    }

    #[test]
    fn missing_truth_is_absent() {
        let mut d = small();
        d.truth_masks = None;
        let back = read_dataset(to_string(&d).as_bytes()).unwrap();
        assert!(back.truth_masks.is_none());
        assert_eq!(back.graphs, d.graphs);
    }

    #[test]
    fn out_of_range_edge_names_graph() {
        let text = "ginx-dataset 1\nname t\ndims 1 1\ncount 2\n\
            graph 0 0 train 2 1\nedges 0 1\nx 1 1\nef 1\nw 1\n\
            graph 1 1 test 5 1\nedges 0 10\nx 1 1 1 1 1\nef 1\nw 1\n";
        match read_dataset(text.as_bytes()) {
            Err(FormatError::Record { graph: 1, msg, .. }) => assert!(msg.contains("node 10")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_mismatch() {
        let text = "ginx-dataset 7\nname t\ndims 1 1\ncount 0\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(FormatError::Version { .. })));
    }

    #[test]
    fn truncated_record() {
        let text = "ginx-dataset 1\nname t\ndims 1 1\ncount 1\ngraph 0 0 train 2 1\nedges 0 1\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(FormatError::Record { graph: 0, .. })));
    }
}
