//! Text formats: CSV files for panels, loadings, factor paths, spectra,
//! rank graphs and Monte Carlo results, plus flat key=value metadata
//! sidecars.
//!
//! Floats are written with the shortest representation that round-trips, so
//! write/read cycles are bit-exact. All indices in CSV files are 0-based.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::harness::{AggregateRow, McRecord, McResult};
use crate::linalg::{Loadings, Spectrum};
use crate::model::{FactorPath, MatrixPanel};
use crate::ranksel::RankGraph;

fn parse_field<T: std::str::FromStr>(field: &str, line: usize, what: &str) -> Result<T> {
    field.trim().parse().map_err(|_| Error::ParseError {
        line,
        msg: format!("cannot parse {what} from '{field}'"),
    })
}

fn split_line(line: &str, expected: usize, line_no: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != expected {
        return Err(Error::ParseError {
            line: line_no,
            msg: format!("expected {expected} fields, found {}", fields.len()),
        });
    }
    Ok(fields)
}

/// Write flat key=value metadata; keys keep the given order.
pub fn write_kv(path: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in pairs {
        writeln!(out, "{k}={v}").expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read flat key=value metadata, preserving order.
pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(Error::ParseError {
            line: line_no,
            msg: "expected key=value".into(),
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn kv_get<'a>(pairs: &'a [(String, String)], key: &str) -> Result<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::InvalidInput(format!("metadata key '{key}' missing")))
}

/// Panel CSV: header `t,i,j,value`, one row per entry.
pub fn write_panel_csv(path: &Path, panel: &MatrixPanel) -> Result<()> {
    let mut out = String::from("t,i,j,value\n");
    for (t, x) in panel.slices().iter().enumerate() {
        for i in 0..panel.p1() {
            for j in 0..panel.p2() {
                writeln!(out, "{t},{i},{j},{}", x[(i, j)]).expect("string write");
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a panel CSV with known dimensions; every cell must appear exactly
/// once.
pub fn read_panel_csv(path: &Path, p1: usize, p2: usize, t_len: usize) -> Result<MatrixPanel> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "t,i,j,value" => {}
        Some((idx, _)) => {
            return Err(Error::ParseError {
                line: idx + 1,
                msg: "expected header 't,i,j,value'".into(),
            })
        }
        None => {
            return Err(Error::ParseError {
                line: 1,
                msg: "empty panel file".into(),
            })
        }
    }
    let mut data = vec![DMatrix::zeros(p1, p2); t_len];
    let mut seen = vec![false; t_len * p1 * p2];
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_line(line, 4, line_no)?;
        let t: usize = parse_field(f[0], line_no, "t")?;
        let i: usize = parse_field(f[1], line_no, "i")?;
        let j: usize = parse_field(f[2], line_no, "j")?;
        let v: f64 = parse_field(f[3], line_no, "value")?;
        if t >= t_len || i >= p1 || j >= p2 {
            return Err(Error::ParseError {
                line: line_no,
                msg: format!("index ({t},{i},{j}) out of bounds for {t_len}x{p1}x{p2}"),
            });
        }
        data[t][(i, j)] = v;
        seen[(t * p1 + i) * p2 + j] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        let t = missing / (p1 * p2);
        let rest = missing % (p1 * p2);
        return Err(Error::InvalidInput(format!(
            "panel cell (t={t}, i={}, j={}) missing",
            rest / p2,
            rest % p2
        )));
    }
    MatrixPanel::new(data)
}

/// Loadings CSV: header `i,j,value`.
pub fn write_loadings_csv(path: &Path, loadings: &Loadings) -> Result<()> {
    let mut out = String::from("i,j,value\n");
    let m = loadings.as_matrix();
    for i in 0..loadings.p() {
        for j in 0..loadings.h() {
            writeln!(out, "{i},{j},{}", m[(i, j)]).expect("string write");
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_loadings_csv(path: &Path, p: usize, h: usize) -> Result<Loadings> {
    let text = fs::read_to_string(path)?;
    let mut m = DMatrix::zeros(p, h);
    for (idx, line) in text.lines().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_line(line, 3, line_no)?;
        let i: usize = parse_field(f[0], line_no, "i")?;
        let j: usize = parse_field(f[1], line_no, "j")?;
        let v: f64 = parse_field(f[2], line_no, "value")?;
        if i >= p || j >= h {
            return Err(Error::ParseError {
                line: line_no,
                msg: format!("index ({i},{j}) out of bounds for {p}x{h}"),
            });
        }
        m[(i, j)] = v;
    }
    Loadings::new(m)
}

/// Factor path CSV: header `t,i,j,value`.
pub fn write_factor_csv(path: &Path, factors: &FactorPath) -> Result<()> {
    let mut out = String::from("t,i,j,value\n");
    for (t, f) in factors.slices().iter().enumerate() {
        for i in 0..factors.h_r() {
            for j in 0..factors.h_c() {
                writeln!(out, "{t},{i},{j},{}", f[(i, j)]).expect("string write");
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_factor_csv(path: &Path, h_r: usize, h_c: usize, t_len: usize) -> Result<FactorPath> {
    let text = fs::read_to_string(path)?;
    let mut data = vec![DMatrix::zeros(h_r, h_c); t_len];
    for (idx, line) in text.lines().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_line(line, 4, line_no)?;
        let t: usize = parse_field(f[0], line_no, "t")?;
        let i: usize = parse_field(f[1], line_no, "i")?;
        let j: usize = parse_field(f[2], line_no, "j")?;
        let v: f64 = parse_field(f[3], line_no, "value")?;
        if t >= t_len || i >= h_r || j >= h_c {
            return Err(Error::ParseError {
                line: line_no,
                msg: format!("index ({t},{i},{j}) out of bounds"),
            });
        }
        data[t][(i, j)] = v;
    }
    FactorPath::new(h_r, h_c, data)
}

/// Spectra CSV: header `matrix_id,j,eigenvalue`, one block per labelled
/// spectrum.
pub fn write_spectra_csv(path: &Path, spectra: &[(&str, &Spectrum)]) -> Result<()> {
    let mut out = String::from("matrix_id,j,eigenvalue\n");
    for (label, spec) in spectra {
        for j in 0..spec.dim() {
            writeln!(out, "{label},{j},{}", spec.eigenvalue(j)).expect("string write");
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// One row of a rank-graph edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdgeRecord {
    pub from_h_r1: usize,
    pub from_h_c1: usize,
    pub to_h_r1: usize,
    pub to_h_c1: usize,
    pub er_value: f64,
    pub is_fixed_point: bool,
}

pub fn graph_edge_records(graph: &RankGraph) -> Vec<GraphEdgeRecord> {
    graph
        .edges()
        .iter()
        .map(|e| GraphEdgeRecord {
            from_h_r1: e.from.0,
            from_h_c1: e.from.1,
            to_h_r1: e.to.0,
            to_h_c1: e.to.1,
            er_value: e.er_value(),
            is_fixed_point: !e.degenerate && e.to == e.from,
        })
        .collect()
}

pub fn write_rank_graph_csv(path: &Path, records: &[GraphEdgeRecord]) -> Result<()> {
    let mut out = String::from("from_h_r1,from_h_c1,to_h_r1,to_h_c1,er_value,is_fixed_point\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.from_h_r1, r.from_h_c1, r.to_h_r1, r.to_h_c1, r.er_value, r.is_fixed_point as u8
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_rank_graph_csv(path: &Path) -> Result<Vec<GraphEdgeRecord>> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_line(line, 6, line_no)?;
        records.push(GraphEdgeRecord {
            from_h_r1: parse_field(f[0], line_no, "from_h_r1")?,
            from_h_c1: parse_field(f[1], line_no, "from_h_c1")?,
            to_h_r1: parse_field(f[2], line_no, "to_h_r1")?,
            to_h_c1: parse_field(f[3], line_no, "to_h_c1")?,
            er_value: parse_field(f[4], line_no, "er_value")?,
            is_fixed_point: parse_field::<u8>(f[5], line_no, "is_fixed_point")? != 0,
        });
    }
    Ok(records)
}

/// Long-format Monte Carlo record CSV:
/// `case,p1,p2,T,rep,criterion,metric,value`.
pub fn write_mc_records_csv(path: &Path, result: &McResult) -> Result<()> {
    let mut out = String::from("case,p1,p2,T,rep,criterion,metric,value\n");
    for r in &result.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.case_id, r.p1, r.p2, r.t_len, r.rep, r.criterion, r.metric, r.value
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_mc_records_csv(path: &Path) -> Result<Vec<McRecord>> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_line(line, 8, line_no)?;
        records.push(McRecord {
            case_id: f[0].to_string(),
            p1: parse_field(f[1], line_no, "p1")?,
            p2: parse_field(f[2], line_no, "p2")?,
            t_len: parse_field(f[3], line_no, "T")?,
            rep: parse_field(f[4], line_no, "rep")?,
            criterion: f[5].to_string(),
            metric: f[6].to_string(),
            value: parse_field(f[7], line_no, "value")?,
        });
    }
    Ok(records)
}

/// Aggregate CSV: one row per group with order statistics.
pub fn write_aggregates_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut out = String::from("case,p1,p2,T,criterion,metric,n,mean,median,q25,q75,min,max\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.case_id.as_deref().unwrap_or("*"),
            r.p1.map(|v| v.to_string()).unwrap_or_else(|| "*".into()),
            r.p2.map(|v| v.to_string()).unwrap_or_else(|| "*".into()),
            r.t_len.map(|v| v.to_string()).unwrap_or_else(|| "*".into()),
            r.criterion.as_deref().unwrap_or("*"),
            r.metric,
            r.n,
            r.mean,
            r.median,
            r.q25,
            r.q75,
            r.min,
            r.max
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}
