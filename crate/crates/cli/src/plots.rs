//! SVG rendering of run outputs. Everything is derived from the CSV files
//! in the run directory; nothing is recomputed.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use idlewave::output::{read_table, Table};
use plotters::prelude::*;

const SIZE: (u32, u32) = (900, 600);
const FAST: (f64, f64, f64) = (31.0, 90.0, 200.0);
const SLOW: (f64, f64, f64) = (240.0, 200.0, 20.0);

/// Writes every plot the run directory has data for and returns the paths.
/// `trajectory.csv` is required; the other inputs are optional.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let traj_path = dir.join("trajectory.csv");
    if !traj_path.is_file() {
        bail!("{} not found; run a scenario with phases output first", traj_path.display());
    }
    let traj = read_table(&traj_path).with_context(|| format!("reading {}", traj_path.display()))?;
    let mut written = Vec::new();

    let lagger = lagger_normalized(&traj);
    let out = dir.join("phases_lagger.svg");
    timeline(&out, "Phase relative to the lagger", "phase - min phase [rad]", &lagger)?;
    written.push(out);

    for (csv, svg, title, y) in [
        ("phase_diffs.csv", "phase_diffs.svg", "Phase differences", "theta_j - theta_i [rad]"),
        ("potentials.csv", "potentials.svg", "Interaction potentials", "V(theta_j - theta_i)"),
    ] {
        let path = dir.join(csv);
        if path.is_file() {
            let table = read_table(&path).with_context(|| format!("reading {}", path.display()))?;
            let out = dir.join(svg);
            timeline(&out, title, y, &table)?;
            written.push(out);
        }
    }

    let mut snapshots: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("circle_t") && name.ends_with(".csv")
        })
        .collect();
    snapshots.sort();
    for path in snapshots {
        let table = read_table(&path).with_context(|| format!("reading {}", path.display()))?;
        let out = path.with_extension("svg");
        let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or("circle").trim_start_matches("circle_");
        circle(&out, label, &table)?;
        written.push(out);
    }
    Ok(written)
}

fn lagger_normalized(traj: &Table) -> Table {
    let rows = traj
        .rows
        .iter()
        .map(|r| {
            let min = r[1..].iter().cloned().fold(f64::INFINITY, f64::min);
            std::iter::once(r[0]).chain(r[1..].iter().map(|x| x - min)).collect()
        })
        .collect();
    Table { header: traj.header.clone(), rows }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-3);
    (lo - pad, hi + pad)
}

/// One line per data column against the first column.
fn timeline(out: &Path, title: &str, y_label: &str, table: &Table) -> Result<()> {
    let (t0, t1) = range(table.column(0));
    let (y0, y1) = range(table.rows.iter().flat_map(|r| r[1..].iter().cloned()));
    let root = SVGBackend::new(out, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(t0..t1, y0..y1)?;
    chart.configure_mesh().x_desc("t [s]").y_desc(y_label).draw()?;
    let series = table.header.len() - 1;
    for c in 1..=series {
        let color = Palette99::pick(c - 1).stroke_width(1);
        chart.draw_series(LineSeries::new(table.rows.iter().map(|r| (r[0], r[c])), color))?;
    }
    root.present()?;
    Ok(())
}

/// Oscillators on the unit circle, coloured from yellow (slow) to blue (fast).
fn circle(out: &Path, label: &str, table: &Table) -> Result<()> {
    let root = SVGBackend::new(out, (620, 620)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Circle diagram, {label}"), ("sans-serif", 22))
        .margin(20)
        .build_cartesian_2d(-1.25f64..1.25f64, -1.25f64..1.25f64)?;
    chart.draw_series(LineSeries::new(
        (0..=360).map(|k| {
            let a = TAU * k as f64 / 360.0;
            (a.cos(), a.sin())
        }),
        BLACK.mix(0.3),
    ))?;
    let (f_lo, f_hi) = table.column(2).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), f| (l.min(f), h.max(f)));
    chart.draw_series(table.rows.iter().map(|r| {
        let angle = r[1];
        let x = if f_hi - f_lo > 1e-12 { (r[2] - f_lo) / (f_hi - f_lo) } else { 0.5 };
        Circle::new((angle.cos(), angle.sin()), 7, speed_color(x).filled())
    }))?;
    root.present()?;
    Ok(())
}

/// 0 is slow (yellow), 1 is fast (blue).
fn speed_color(x: f64) -> RGBColor {
    let mix = |a: f64, b: f64| (a + (b - a) * x.clamp(0.0, 1.0)).round() as u8;
    RGBColor(mix(SLOW.0, FAST.0), mix(SLOW.1, FAST.1), mix(SLOW.2, FAST.2))
}
