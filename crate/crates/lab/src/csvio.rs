//! CSV formats. Paths use the long form `run_id,t,value,is_jump,jump_size`
//! with a mandatory header; floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use dlab_core::brackets::WeakQvReport;
use dlab_core::decompose::DecompReport;
use dlab_core::distdrift::{self, HTransform};
use dlab_core::mtgcheck::MtgTestReport;
use dlab_core::path::{Jump, SamplePath, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, LabError, LabResult};

pub const PATH_HEADER: [&str; 5] = ["run_id", "t", "value", "is_jump", "jump_size"];

#[derive(Debug, Serialize, Deserialize)]
struct PathRow {
    run_id: u64,
    t: f64,
    value: f64,
    is_jump: u8,
    jump_size: f64,
}

pub fn write_paths<W: Write>(out: W, run_ids: &[u64], paths: &[SamplePath]) -> LabResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for (id, p) in run_ids.iter().zip(paths) {
        let g = p.grid();
        let mut jumps = p.jumps().iter().peekable();
        for (j, v) in p.values().iter().enumerate() {
            let mut size = 0.0;
            while let Some(jp) = jumps.peek() {
                if jp.index == j {
                    size += jp.size;
                    jumps.next();
                } else {
                    break;
                }
            }
            w.serialize(PathRow { run_id: *id, t: g.time(j), value: *v, is_jump: u8::from(size != 0.0), jump_size: size })?;
        }
    }
    w.flush().map_err(|e| LabError::Csv(e.into()))?;
    Ok(())
}

/// Reads long-form paths. Every run must cover the same uniform grid from 0.
pub fn read_paths<R: Read>(input: R) -> LabResult<(Vec<u64>, Vec<SamplePath>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != PATH_HEADER {
        return Err(config_err("header", format!("expected {}", PATH_HEADER.join(","))));
    }
    let mut runs: BTreeMap<u64, Vec<PathRow>> = BTreeMap::new();
    for (line, rec) in r.deserialize::<PathRow>().enumerate() {
        let row = rec.map_err(|e| config_err(format!("row {}", line + 2), e.to_string()))?;
        runs.entry(row.run_id).or_default().push(row);
    }
    let mut ids = Vec::new();
    let mut paths = Vec::new();
    let mut grid: Option<TimeGrid> = None;
    for (id, rows) in runs {
        let n = rows.len();
        if n < 2 {
            return Err(config_err(format!("run {id}"), "needs at least two grid points"));
        }
        let g = TimeGrid::new(rows[n - 1].t, n - 1).map_err(|e| config_err(format!("run {id}"), e.to_string()))?;
        for (j, row) in rows.iter().enumerate() {
            if (row.t - g.time(j)).abs() > 1e-9 * (1.0 + g.horizon()) {
                return Err(config_err(format!("run {id}"), format!("t={} is off the uniform grid", row.t)));
            }
        }
        if let Some(g0) = grid {
            if g0 != g {
                return Err(config_err(format!("run {id}"), "grid differs from the first run"));
            }
        }
        grid = Some(g);
        let values = rows.iter().map(|r| r.value).collect();
        let jumps = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_jump != 0)
            .map(|(j, r)| Jump { index: j, size: r.jump_size })
            .collect();
        paths.push(SamplePath::new(g, values, jumps).map_err(|e| config_err(format!("run {id}"), e.to_string()))?);
        ids.push(id);
    }
    Ok((ids, paths))
}

fn writer<W: Write>(out: W, header: &[&str]) -> LabResult<csv::Writer<W>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

fn f(x: f64) -> String {
    x.to_string()
}

/// `epsilon,mean,q95,per_path_sup_mean`; `q95` is the report's `1 - delta` quantile.
pub fn write_weak_qv<W: Write>(out: W, r: &WeakQvReport) -> LabResult<()> {
    let mut w = writer(out, &["epsilon", "mean", "q95", "per_path_sup_mean"])?;
    for i in 0..r.eps.len() {
        w.write_record([f(r.eps[i]), f(r.mean[i]), f(r.quantile[i]), f(r.per_path_sup_mean)])?;
    }
    w.flush().map_err(|e| LabError::Csv(e.into()))?;
    Ok(())
}

/// `statistic,value,band,verdict`.
pub fn write_decomp<W: Write>(out: W, r: &DecompReport) -> LabResult<()> {
    let mut w = writer(out, &["statistic", "value", "band", "verdict"])?;
    for row in &r.rows {
        w.write_record([row.statistic.clone(), f(row.value), f(row.band), row.verdict.as_str().to_string()])?;
    }
    w.flush().map_err(|e| LabError::Csv(e.into()))?;
    Ok(())
}

/// `v_id,g_id,s,t,stat,se,z,reject`, followed by the caveat as a `#` footer.
pub fn write_mtg<W: Write>(mut out: W, r: &MtgTestReport) -> LabResult<()> {
    {
        let mut w = writer(&mut out, &["v_id", "g_id", "s", "t", "stat", "se", "z", "reject"])?;
        for row in &r.rows {
            w.write_record([
                row.v_id.clone(),
                row.g_id.clone(),
                f(row.s),
                f(row.t),
                f(row.stat),
                f(row.se),
                f(row.z),
                row.reject.to_string(),
            ])?;
        }
        w.flush().map_err(|e| LabError::Csv(e.into()))?;
    }
    writeln!(out, "# {}", r.caveat).map_err(|e| LabError::Csv(e.into()))?;
    Ok(())
}

/// `x,Sigma,h,h_inv`.
pub fn write_sigma_table<W: Write>(out: W, ht: &HTransform) -> LabResult<()> {
    let mut w = writer(out, &["x", "Sigma", "h", "h_inv"])?;
    for [x, s, h, hi] in distdrift::export_rows(ht) {
        w.write_record([f(x), f(s), f(h), f(hi)])?;
    }
    w.flush().map_err(|e| LabError::Csv(e.into()))?;
    Ok(())
}

/// Generic two-or-more column table.
pub fn write_table<W: Write>(out: W, header: &[&str], rows: &[Vec<f64>]) -> LabResult<()> {
    let mut w = writer(out, header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| f(*x)))?;
    }
    w.flush().map_err(|e| LabError::Csv(e.into()))?;
    Ok(())
}
