//! CSV outputs. Numbers are written with 17 significant digits so that a
//! value read back is bit-identical; lines end in LF.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use crate::des::BspTimeline;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_rows<W: Write>(mut w: W, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> io::Result<()> {
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for row in rows {
        line.clear();
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            let _ = write!(line, "{v:.16e}");
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()
}

/// `t,theta_0,...,theta_{N-1}`.
pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((0..traj.n()).map(|i| format!("theta_{i}")));
    let rows = traj.times.iter().zip(&traj.phases).map(|(t, p)| std::iter::once(*t).chain(p.iter().copied()).collect());
    write_rows(w, &header, rows)
}

/// Pairs shown in the phase-difference timeline: index-adjacent connected
/// pairs, or plain consecutive indices when the topology has none.
pub fn diff_pairs(traj: &Trajectory) -> Vec<(usize, usize)> {
    let pairs = traj.spec.topology.adjacent_pairs();
    if pairs.is_empty() {
        (0..traj.n().saturating_sub(1)).map(|i| (i, i + 1)).collect()
    } else {
        pairs
    }
}

/// `t,d_i_j,...` with `d_i_j = θ_j − θ_i`.
pub fn write_phase_diffs_csv<W: Write>(w: W, traj: &Trajectory) -> io::Result<()> {
    let pairs = diff_pairs(traj);
    let mut header = vec!["t".to_string()];
    header.extend(pairs.iter().map(|(i, j)| format!("d_{i}_{j}")));
    let rows = traj.times.iter().zip(&traj.phases).map(|(t, p)| {
        std::iter::once(*t).chain(pairs.iter().map(|&(i, j)| p[j] - p[i])).collect()
    });
    write_rows(w, &header, rows)
}

/// `t,v_i_j,...`: potential value `V(θ_j − θ_i)` on every edge.
pub fn write_potentials_csv<W: Write>(w: W, traj: &Trajectory) -> io::Result<()> {
    let edges = traj.spec.topology.edges();
    let pot = traj.spec.potential;
    let mut header = vec!["t".to_string()];
    header.extend(edges.iter().map(|(i, j)| format!("v_{i}_{j}")));
    let rows = traj.times.iter().zip(&traj.phases).map(|(t, p)| {
        std::iter::once(*t).chain(edges.iter().map(|&(i, j)| pot.eval_unchecked(p[j] - p[i]))).collect()
    });
    write_rows(w, &header, rows)
}

/// Circle-diagram snapshot at time `t`: `process,angle,frequency` with the
/// angle wrapped into [0, 2π) and the instantaneous frequency estimated
/// from the samples bracketing `t`.
pub fn write_circle_snapshot<W: Write>(mut w: W, traj: &Trajectory, t: f64) -> Result<()> {
    let phases = traj.phases_at(t)?;
    let freq = instantaneous_frequency(traj, t);
    writeln!(w, "process,angle,frequency")?;
    for (i, (th, f)) in phases.iter().zip(&freq).enumerate() {
        writeln!(w, "{i},{},{}", fmt_f64(th.rem_euclid(TAU)), fmt_f64(*f))?;
    }
    w.flush()?;
    Ok(())
}

fn instantaneous_frequency(traj: &Trajectory, t: f64) -> Vec<f64> {
    let n = traj.n();
    if traj.len() < 2 {
        return vec![traj.spec.omega(); n];
    }
    let idx = traj.times.partition_point(|&s| s <= t).clamp(1, traj.len() - 1);
    let (a, b) = (idx - 1, idx);
    let dt = traj.times[b] - traj.times[a];
    (0..n).map(|i| (traj.phases[b][i] - traj.phases[a][i]) / dt).collect()
}

/// DES timestamps in the trajectory layout: `k,completion_0,...`.
pub fn write_bsp_csv<W: Write>(w: W, tl: &BspTimeline) -> io::Result<()> {
    let mut header = vec!["k".to_string()];
    header.extend((0..tl.n()).map(|i| format!("completion_{i}")));
    let mut w = w;
    writeln!(w, "{}", header.join(","))?;
    for k in 0..tl.iterations() {
        let mut line = (k + 1).to_string();
        for c in &tl.completion {
            line.push(',');
            line.push_str(&fmt_f64(c[k]));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()
}

/// A parsed numeric CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[k])
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path)?;
    parse_table(&text)
}

pub fn parse_table(text: &str) -> Result<Table> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or(Error::Parse { line: 1, msg: "empty CSV".into() })?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let row = row.map_err(|e| Error::Parse { line: k + 2, msg: e.to_string() })?;
        if row.len() != header.len() {
            return Err(Error::Parse { line: k + 2, msg: format!("expected {} columns, got {}", header.len(), row.len()) });
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}
