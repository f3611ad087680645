//! Trajectory CSV: `k,t,x,el_residual,tv_1,...,tv_r`.
//!
//! One row per covered lattice index in ascending order. Reals are written
//! in scientific notation with 17 significant digits, which round-trips
//! every double. `el_residual` is empty where the residual is undefined and
//! `tv_k` is empty where the index is not a sampled `T'`.

use std::fmt::Write as _;

use qvar_core::solver::TrajectoryDiagnostics;
use qvar_core::{LatticeFn, QLattice};

use crate::CliError;

/// Negative zero prints as zero so equal values give equal cells.
pub fn format_real(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

pub fn header(r: usize) -> String {
    let mut h = String::from("k,t,x,el_residual");
    for k in 1..=r {
        write!(h, ",tv_{k}").expect("write to string");
    }
    h
}

pub fn emit_trajectory_csv(x: &LatticeFn, diag: &TrajectoryDiagnostics) -> String {
    let r = diag.transversality.len();
    let mut out = header(r);
    out.push('\n');
    for k in x.indices() {
        let t = x.lattice().point(k);
        let xv = x.get(k).expect("index in range");
        write!(out, "{k},{},{},", format_real(t), format_real(xv)).expect("write to string");
        if let Some(e) = diag.el.get(k) {
            out.push_str(&format_real(e));
        }
        for rec in &diag.transversality {
            out.push(',');
            let seq = &rec.sequence;
            if let Some(pos) = seq.sample_indices.iter().position(|&i| i == k) {
                out.push_str(&format_real(seq.terms[pos]));
            }
        }
        out.push('\n');
    }
    out
}

/// Reads the `k` and `x` columns of a trajectory CSV back onto `lattice`.
pub fn read_trajectory_csv(text: &str, lattice: QLattice) -> Result<LatticeFn, CliError> {
    let bad = |msg: String| CliError::Validation(format!("trajectory csv: {msg}"));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.len() < 3 || &headers[0] != "k" || &headers[1] != "t" || &headers[2] != "x" {
        return Err(bad("header must start with k,t,x".into()));
    }
    let mut offset = None;
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let k: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("row {}: bad index {:?}", row + 1, &rec[0])))?;
        let t: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("row {}: bad t {:?}", row + 1, &rec[1])))?;
        let x: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("row {}: bad x {:?}", row + 1, &rec[2])))?;
        let start = *offset.get_or_insert(k);
        if k != start + values.len() {
            return Err(bad(format!("row {}: index {k} breaks contiguity", row + 1)));
        }
        if k >= lattice.n_points() {
            return Err(bad(format!("index {k} beyond the lattice")));
        }
        let expected = lattice.point(k);
        if (t - expected).abs() > 1e-12 * expected {
            return Err(bad(format!(
                "row {}: t = {t} but lattice point {k} is {expected}",
                row + 1
            )));
        }
        values.push(x);
    }
    let offset = offset.ok_or_else(|| bad("no rows".into()))?;
    LatticeFn::new(lattice, offset, values).map_err(|e| bad(e.to_string()))
}
