//! Plot-ready text tables of GInX curves.

use std::fmt::Write as _;

use ginx_core::eval::GinxCurve;

pub const NA: &str = "NA";

/// One table for curves sharing a dataset and mode: a `t` column followed by
/// the mean GInX of each curve, `NA` where a curve has no value at `t`.
pub fn emit_plotdata(dataset: &str, curves: &[&GinxCurve], config_hash: &str) -> String {
    let mut ts: Vec<f64> = curves.iter().flat_map(|c| c.stats().into_iter().map(|s| s.t)).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mode = curves.first().map_or("", |c| c.mode.as_str());
    let finetuned = curves.first().is_none_or(|c| c.finetuned);
    let mut s = String::new();
    let _ = writeln!(s, "# dataset {dataset}; mode {mode}; finetuned {finetuned}; config {config_hash}");
    let _ = writeln!(s, "# t: fraction of edges removed; columns: mean GInX (1 - test accuracy) over seeds");
    s.push('t');
    for c in curves {
        let _ = write!(s, "\t{}", c.label);
    }
    s.push('\n');
    for &t in &ts {
        let _ = write!(s, "{t}");
        for c in curves {
            match c.mean(t) {
                Some(m) => {
                    let _ = write!(s, "\t{m:.8e}");
                }
                None => {
                    let _ = write!(s, "\t{NA}");
                }
            }
        }
        s.push('\n');
    }
    s
}

/// Per-curve table: `t`, mean GInX, standard error over seeds, seed count.
pub fn emit_curve(curve: &GinxCurve, config_hash: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# explainer {}; mode {}; finetuned {}; config {config_hash}",
        curve.label, curve.mode, curve.finetuned
    );
    let _ = writeln!(s, "# t: fraction of edges removed; ginx: 1 - test accuracy; stderr: standard error over seeds");
    s.push_str("t\tginx\tstderr\tseeds\n");
    for st in curve.stats() {
        let _ = writeln!(s, "{}\t{:.8e}\t{:.8e}\t{}", st.t, st.mean, st.stderr, st.seeds);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub columns: Vec<String>,
    pub rows: Vec<(f64, Vec<Option<f64>>)>,
}

/// Parses a table written by [`emit_plotdata`].
pub fn parse_plotdata(text: &str) -> Result<PlotTable, String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().ok_or("missing header")?;
    let mut cols = header.split('\t');
    if cols.next() != Some("t") {
        return Err("first column must be `t`".into());
    }
    let columns: Vec<String> = cols.map(str::to_owned).collect();
    let mut rows = Vec::new();
    for line in lines {
        let mut cells = line.split('\t');
        let t: f64 = cells.next().and_then(|c| c.parse().ok()).ok_or_else(|| format!("bad row `{line}`"))?;
        let values = cells
            .map(|c| if c == NA { Ok(None) } else { c.parse().map(Some).map_err(|_| format!("bad cell `{c}`")) })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != columns.len() {
            return Err(format!("row `{line}` has {} cells, header has {}", values.len(), columns.len()));
        }
        rows.push((t, values));
    }
    Ok(PlotTable { columns, rows })
}
