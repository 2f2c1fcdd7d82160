//! Synthetic two-class data and CSV persistence.
//!
//! Sampling uses `ChaCha20Rng` seeded through `SeedableRng::seed_from_u64`
//! with `rand_distr::StandardNormal` (ziggurat) draws; the stream is the same
//! on every platform. Each class is `mean + L z` with `L` the lower-triangular
//! Cholesky factor of the class covariance and `z` two independent standard
//! normals, drawn first coordinate first.
//!
//! File formats:
//!
//! * dataset: header `x1,x2,label`, labels `1` / `-1`;
//! * trace: header `t,beta1,beta2,beta0,V,S,mu_<i>...` (one-based `i`);
//! * events: sibling `<stem>.events.csv` with header `t,index,kind` (one-based `index`).
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the written values exactly.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::dynamics::{SwitchEvent, SwitchKind, Trajectory};
use crate::oracle::is_separable;
use crate::svm::{Label, SvmDataset, SvmError};

/// Resampling budget when separable data is required.
pub const MAX_SEPARABILITY_RETRIES: usize = 100;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid class spec: {0}")]
    InvalidSpec(String),
    #[error("no separable dataset after {0} draws")]
    RetriesExhausted(usize),
    #[error("{path}: line {line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Svm(#[from] SvmError),
}

/// A bivariate normal class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassSpec {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
    pub count: usize,
    pub label: Label,
}

impl ClassSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let [[a, b], [c, d]] = self.covariance;
        if self.count == 0 {
            return Err(DataError::InvalidSpec("class count must be positive".into()));
        }
        if !self.mean.iter().chain(self.covariance.iter().flatten()).all(|v| v.is_finite()) {
            return Err(DataError::InvalidSpec("non-finite mean or covariance".into()));
        }
        if b != c {
            return Err(DataError::InvalidSpec("covariance is not symmetric".into()));
        }
        if !(a > 0.0 && d > 0.0 && a * d - b * c > 0.0) {
            return Err(DataError::InvalidSpec("covariance is not positive definite".into()));
        }
        Ok(())
    }

    /// Lower-triangular `L` with `L L' = covariance`, as `[l11, l21, l22]`.
    fn cholesky(&self) -> [f64; 3] {
        let [[a, b], _] = self.covariance;
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (self.covariance[1][1] - l21 * l21).sqrt();
        [l11, l21, l22]
    }
}

/// Two classes with means `(0, 0)` and `(0, 6)`, shared covariance
/// `[[1, 1.5], [1.5, 3]]` and `count` points each.
pub fn table1_specs(count: usize) -> Vec<ClassSpec> {
    let covariance = [[1.0, 1.5], [1.5, 3.0]];
    vec![
        ClassSpec { mean: [0.0, 0.0], covariance, count, label: Label::Positive },
        ClassSpec { mean: [0.0, 6.0], covariance, count, label: Label::Negative },
    ]
}

pub fn generate_gaussian_classes(
    specs: &[ClassSpec],
    seed: u64,
    require_separable: bool,
) -> Result<SvmDataset, DataError> {
    for spec in specs {
        spec.validate()?;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let draws = if require_separable { MAX_SEPARABILITY_RETRIES } else { 1 };
    for _ in 0..draws {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for spec in specs {
            let [l11, l21, l22] = spec.cholesky();
            for _ in 0..spec.count {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                points.push([spec.mean[0] + l11 * z1, spec.mean[1] + l21 * z1 + l22 * z2]);
                labels.push(spec.label);
            }
        }
        let ds = SvmDataset::new(points, labels)?;
        if !require_separable || is_separable(&ds) {
            return Ok(ds);
        }
    }
    Err(DataError::RetriesExhausted(MAX_SEPARABILITY_RETRIES))
}

/// Per-class sample mean and (unbiased) covariance.
pub fn class_moments(ds: &SvmDataset, label: Label) -> Option<([f64; 2], [[f64; 2]; 2])> {
    let pts: Vec<&[f64; 2]> = ds.iter().filter(|(_, l)| *l == label).map(|(p, _)| p).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mean = [
        pts.iter().map(|p| p[0]).sum::<f64>() / n,
        pts.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let mut cov = [[0.0; 2]; 2];
    for p in &pts {
        let d = [p[0] - mean[0], p[1] - mean[1]];
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= n - 1.0;
        }
    }
    Some((mean, cov))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

pub fn write_dataset_to<W: Write>(mut w: W, ds: &SvmDataset) -> io::Result<()> {
    writeln!(w, "x1,x2,label")?;
    for (p, l) in ds.iter() {
        writeln!(w, "{},{},{}", p[0], p[1], l)?;
    }
    w.flush()
}

pub fn write_dataset(path: &Path, ds: &SvmDataset) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_dataset_to(BufWriter::new(file), ds).map_err(io_err(path))
}

/// Parses a dataset; `source` names the input in error messages.
pub fn read_dataset_from<R: Read>(r: R, source: &str) -> Result<SvmDataset, DataError> {
    let malformed = |line: usize, message: String| DataError::Malformed { path: source.to_string(), line, message };
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| DataError::Io { path: source.to_string(), source: e })?;
        if lineno == 1 {
            if line.trim() != "x1,x2,label" {
                return Err(malformed(lineno, format!("expected header x1,x2,label, found {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(malformed(lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let coord = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(lineno, format!("invalid coordinate {s:?}")))
        };
        let label = fields[2]
            .parse::<i64>()
            .ok()
            .and_then(Label::from_int)
            .ok_or_else(|| malformed(lineno, format!("label must be 1 or -1, found {:?}", fields[2])))?;
        points.push([coord(fields[0])?, coord(fields[1])?]);
        labels.push(label);
    }
    Ok(SvmDataset::new(points, labels)?)
}

pub fn read_dataset(path: &Path) -> Result<SvmDataset, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_dataset_from(file, &path.display().to_string())
}

/// Per-sample channels written alongside the state in a trace.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceChannels {
    /// Lyapunov value per sample.
    pub lyapunov: Vec<f64>,
    /// Storage value per sample.
    pub storage: Vec<f64>,
    /// Zero-based multiplier indices to write; `None` writes all of them.
    pub mu_indices: Option<Vec<usize>>,
}

/// `trace.csv` -> `trace.events.csv`
pub fn events_path(trace_path: &Path) -> PathBuf {
    let stem = trace_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    trace_path.with_file_name(format!("{stem}.events.csv"))
}

pub fn write_trace_to<W: Write>(mut w: W, traj: &Trajectory, channels: &TraceChannels) -> io::Result<()> {
    let p = traj.samples.first().map_or(0, |s| s.mu.len());
    let indices: Vec<usize> = match &channels.mu_indices {
        Some(ix) => ix.iter().copied().filter(|&i| i < p).collect(),
        None => (0..p).collect(),
    };
    write!(w, "t,beta1,beta2,beta0,V,S")?;
    for i in &indices {
        write!(w, ",mu_{}", i + 1)?;
    }
    writeln!(w)?;
    for (k, s) in traj.samples.iter().enumerate() {
        let v = channels.lyapunov.get(k).copied().unwrap_or(f64::NAN);
        let st = channels.storage.get(k).copied().unwrap_or(f64::NAN);
        let coord = |c: usize| s.x.get(c).copied().unwrap_or(f64::NAN);
        write!(w, "{},{},{},{},{},{}", s.t, coord(0), coord(1), coord(2), v, st)?;
        for &i in &indices {
            write!(w, ",{}", s.mu[i])?;
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn write_events_to<W: Write>(mut w: W, events: &[SwitchEvent]) -> io::Result<()> {
    writeln!(w, "t,index,kind")?;
    for e in events {
        writeln!(w, "{},{},{}", e.t, e.index + 1, e.kind)?;
    }
    w.flush()
}

/// Writes the trace CSV and its sibling events file; returns the events path.
pub fn write_trace(path: &Path, traj: &Trajectory, channels: &TraceChannels) -> Result<PathBuf, DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_trace_to(BufWriter::new(file), traj, channels).map_err(io_err(path))?;
    let ev_path = events_path(path);
    let file = File::create(&ev_path).map_err(io_err(&ev_path))?;
    write_events_to(BufWriter::new(file), &traj.events).map_err(io_err(&ev_path))?;
    Ok(ev_path)
}

/// A trace read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceData {
    pub times: Vec<f64>,
    /// `(beta1, beta2, beta0)` per row.
    pub primal: Vec<[f64; 3]>,
    pub lyapunov: Vec<f64>,
    pub storage: Vec<f64>,
    /// Zero-based multiplier index of each `mu_` column.
    pub mu_indices: Vec<usize>,
    /// Multiplier values per row, in `mu_indices` order.
    pub mu: Vec<Vec<f64>>,
}

pub fn read_trace_from<R: Read>(r: R, source: &str) -> Result<TraceData, DataError> {
    let malformed = |line: usize, message: String| DataError::Malformed { path: source.to_string(), line, message };
    let mut lines = BufReader::new(r).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| DataError::Io { path: source.to_string(), source: e })?,
        None => return Err(malformed(1, "empty trace".into())),
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 6 || cols[..6] != ["t", "beta1", "beta2", "beta0", "V", "S"] {
        return Err(malformed(1, format!("unexpected trace header {header:?}")));
    }
    let mu_indices = cols[6..]
        .iter()
        .map(|c| {
            c.strip_prefix("mu_")
                .and_then(|i| i.parse::<usize>().ok())
                .filter(|&i| i >= 1)
                .map(|i| i - 1)
                .ok_or_else(|| malformed(1, format!("bad multiplier column {c:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = TraceData {
        times: Vec::new(),
        primal: Vec::new(),
        lyapunov: Vec::new(),
        storage: Vec::new(),
        mu_indices,
        mu: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| DataError::Io { path: source.to_string(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|_| malformed(lineno, format!("invalid number {f:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != cols.len() {
            return Err(malformed(lineno, format!("expected {} fields, found {}", cols.len(), vals.len())));
        }
        out.times.push(vals[0]);
        out.primal.push([vals[1], vals[2], vals[3]]);
        out.lyapunov.push(vals[4]);
        out.storage.push(vals[5]);
        out.mu.push(vals[6..].to_vec());
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<TraceData, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_trace_from(file, &path.display().to_string())
}

pub fn read_events_from<R: Read>(r: R, source: &str) -> Result<Vec<SwitchEvent>, DataError> {
    let malformed = |line: usize, message: String| DataError::Malformed { path: source.to_string(), line, message };
    let mut events = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| DataError::Io { path: source.to_string(), source: e })?;
        if lineno == 1 {
            if line.trim() != "t,index,kind" {
                return Err(malformed(1, format!("expected header t,index,kind, found {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(malformed(lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let t = fields[0].parse::<f64>().map_err(|_| malformed(lineno, "invalid time".into()))?;
        let index = fields[1]
            .parse::<usize>()
            .ok()
            .filter(|&i| i >= 1)
            .ok_or_else(|| malformed(lineno, "index must be a positive integer".into()))?;
        let kind = SwitchKind::parse(fields[2]).ok_or_else(|| malformed(lineno, format!("unknown kind {:?}", fields[2])))?;
        events.push(SwitchEvent { t, index: index - 1, kind });
    }
    Ok(events)
}

pub fn read_events(path: &Path) -> Result<Vec<SwitchEvent>, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_events_from(file, &path.display().to_string())
}
