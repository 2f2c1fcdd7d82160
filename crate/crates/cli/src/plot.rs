//! SVG figures for a trained classifier and its trace.

use std::path::{Path, PathBuf};

use plotters::prelude::*;
use saddleflow::dataio::TraceData;
use saddleflow::dynamics::{SwitchEvent, SwitchKind};
use saddleflow::svm::{support_vectors, DEFAULT_SV_REL_EPS};
use saddleflow::{Hyperplane, Label, SvmDataset};

use crate::error::CliError;

pub const FILES: [&str; 4] = ["classification.svg", "primal.svg", "multipliers.svg", "storage.svg"];

const SIZE: (u32, u32) = (800, 600);
const MAX_POINTS_PER_SERIES: usize = 200;

fn draw_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (-1.0, 1.0);
    }
    let span = (hi - lo).max(1e-9);
    (lo - 0.05 * span, hi + 0.05 * span)
}

fn bounds<'a>(values: impl IntoIterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    padded(lo, hi)
}

/// Row indices thinned to at most `MAX_POINTS_PER_SERIES`, always keeping the last.
fn thinned(rows: usize) -> Vec<usize> {
    if rows <= MAX_POINTS_PER_SERIES {
        return (0..rows).collect();
    }
    let stride = rows.div_ceil(MAX_POINTS_PER_SERIES);
    let mut idx: Vec<usize> = (0..rows).step_by(stride).collect();
    if idx.last() != Some(&(rows - 1)) {
        idx.push(rows - 1);
    }
    idx
}

/// Segment of `beta . x + beta0 = level` clipped to the box, or `None` if it misses.
fn line_in_box(h: &Hyperplane, level: f64, x: (f64, f64), y: (f64, f64)) -> Option<Vec<(f64, f64)>> {
    let [b1, b2] = h.beta;
    let c = level - h.beta0;
    let inside = |p: &(f64, f64)| {
        let tol = 1e-9 * (1.0 + p.0.abs().max(p.1.abs()));
        p.0 >= x.0 - tol && p.0 <= x.1 + tol && p.1 >= y.0 - tol && p.1 <= y.1 + tol
    };
    let mut hits: Vec<(f64, f64)> = Vec::new();
    if b2 != 0.0 {
        hits.extend([x.0, x.1].map(|u| (u, (c - b1 * u) / b2)));
    }
    if b1 != 0.0 {
        hits.extend([y.0, y.1].map(|v| ((c - b2 * v) / b1, v)));
    }
    hits.retain(inside);
    hits.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    let (first, last) = (*hits.first()?, *hits.last()?);
    Some(vec![(first.0.clamp(x.0, x.1), first.1.clamp(y.0, y.1)), (last.0.clamp(x.0, x.1), last.1.clamp(y.0, y.1))])
}

pub fn classification(path: &Path, ds: &SvmDataset, trace: &TraceData) -> Result<(), CliError> {
    let err = draw_err(path);
    let last = trace.primal.last().ok_or_else(|| CliError::InvalidData("trace has no rows".into()))?;
    let h = Hyperplane::new([last[0], last[1]], last[2]);
    let mu_last = trace.mu.last().cloned().unwrap_or_default();
    let svs: Vec<usize> = support_vectors(&mu_last, DEFAULT_SV_REL_EPS)
        .into_iter()
        .filter_map(|k| trace.mu_indices.get(k).copied())
        .collect();

    let xr = bounds(ds.points().iter().map(|p| &p[0]));
    let yr = bounds(ds.points().iter().map(|p| &p[1]));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("classification", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)
        .map_err(&err)?;
    chart.configure_mesh().x_desc("x1").y_desc("x2").draw().map_err(&err)?;

    for (label, color) in [(Label::Positive, BLUE), (Label::Negative, RED)] {
        let pts: Vec<(f64, f64)> = ds.iter().filter(|(_, l)| *l == label).map(|(p, _)| (p[0], p[1])).collect();
        chart
            .draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled())))
            .map_err(&err)?
            .label(format!("class {label}"))
            .legend(move |(x, y)| Circle::new((x + 10, y), 3, color.filled()));
    }
    chart
        .draw_series(svs.iter().map(|&i| {
            let p = ds.points()[i];
            Circle::new((p[0], p[1]), 7, BLACK.stroke_width(2))
        }))
        .map_err(&err)?
        .label("support vectors")
        .legend(|(x, y)| Circle::new((x + 10, y), 6, BLACK.stroke_width(2)));

    for (level, style) in [(0.0, BLACK.stroke_width(2)), (1.0, BLUE.stroke_width(1)), (-1.0, RED.stroke_width(1))] {
        if let Some(line) = line_in_box(&h, level, xr, yr) {
            chart.draw_series(LineSeries::new(line, style)).map_err(&err)?;
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(())
}

pub fn primal(path: &Path, trace: &TraceData) -> Result<(), CliError> {
    let err = draw_err(path);
    let rows = thinned(trace.times.len());
    let tr = bounds(&trace.times);
    let yr = bounds(trace.primal.iter().flatten());
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("primal variables", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(tr.0..tr.1, yr.0..yr.1)
        .map_err(&err)?;
    chart.configure_mesh().x_desc("t").draw().map_err(&err)?;
    for (c, (name, color)) in [("beta1", BLUE), ("beta2", RED), ("beta0", GREEN)].into_iter().enumerate() {
        let series = rows.iter().map(|&k| (trace.times[k], trace.primal[k][c]));
        chart
            .draw_series(LineSeries::new(series, color))
            .map_err(&err)?
            .label(name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(())
}

pub fn multipliers(path: &Path, trace: &TraceData) -> Result<(), CliError> {
    let err = draw_err(path);
    let rows = thinned(trace.times.len());
    let tr = bounds(&trace.times);
    let yr = bounds(trace.mu.iter().flatten().chain([0.0].iter()));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("multipliers", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(tr.0..tr.1, yr.0..yr.1)
        .map_err(&err)?;
    chart.configure_mesh().x_desc("t").y_desc("mu").draw().map_err(&err)?;
    for col in 0..trace.mu_indices.len() {
        let color = Palette99::pick(col);
        let series = rows.iter().map(|&k| (trace.times[k], trace.mu[k][col]));
        chart.draw_series(LineSeries::new(series, color.stroke_width(1))).map_err(&err)?;
    }
    root.present().map_err(&err)?;
    Ok(())
}

/// Storage against time, with a marker at every `entered_zero_set` event.
pub fn storage(path: &Path, trace: &TraceData, events: &[SwitchEvent]) -> Result<(), CliError> {
    let err = draw_err(path);
    let tr = bounds(&trace.times);
    let floor = trace
        .storage
        .iter()
        .copied()
        .filter(|s| *s > 0.0 && s.is_finite())
        .fold(f64::INFINITY, f64::min)
        .max(1e-12);
    let floor = if floor.is_finite() { floor } else { 1e-12 };
    let top = trace.storage.iter().copied().filter(|s| s.is_finite()).fold(floor, f64::max);
    let lift = |s: f64| s.max(floor);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("storage", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(tr.0..tr.1, (floor..top * 2.0).log_scale())
        .map_err(&err)?;
    chart
        .configure_mesh()
        .x_desc("t")
        .y_desc("S (log scale)")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(&err)?;
    let series = trace
        .times
        .iter()
        .copied()
        .zip(trace.storage.iter().copied())
        .filter(|(_, s)| s.is_finite())
        .map(|(t, s)| (t, lift(s)));
    chart
        .draw_series(LineSeries::new(series, BLUE))
        .map_err(&err)?
        .label("S")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));

    let markers: Vec<(f64, f64)> = events
        .iter()
        .filter(|e| e.kind == SwitchKind::EnteredZeroSet)
        .filter_map(|e| {
            let k = trace.times.partition_point(|&t| t < e.t);
            let s = *trace.storage.get(k)?;
            s.is_finite().then_some((e.t, lift(s)))
        })
        .collect();
    if !markers.is_empty() {
        chart
            .draw_series(markers.into_iter().map(|p| Cross::new(p, 4, RED.stroke_width(1))))
            .map_err(&err)?
            .label("entered zero set")
            .legend(|(x, y)| Cross::new((x + 10, y), 4, RED));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(())
}

/// Writes all four figures into `dir`; returns their paths.
pub fn write_all(dir: &Path, ds: &SvmDataset, trace: &TraceData, events: &[SwitchEvent]) -> Result<Vec<PathBuf>, CliError> {
    let paths: Vec<PathBuf> = FILES.iter().map(|f| dir.join(f)).collect();
    classification(&paths[0], ds, trace)?;
    primal(&paths[1], trace)?;
    multipliers(&paths[2], trace)?;
    storage(&paths[3], trace, events)?;
    Ok(paths)
}
