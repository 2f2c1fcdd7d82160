//! Run configuration: a flat `key = value` file whose keys double as
//! command-line flags. Flags are applied after the file, so they win.

use std::fs;
use std::path::{Path, PathBuf};

use saddleflow::dynamics::{DynamicsError, TimeConstants};
use saddleflow::{ConvexProgram, IntegrationConfig};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: String,
    /// Points per class; the preset's count when unset.
    pub count: Option<usize>,
    pub data: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// One value for every primal coordinate, or one per coordinate.
    pub tau_x: Vec<f64>,
    pub tau_mu: f64,
    pub integration: IntegrationConfig,
    pub plot: bool,
    pub quad_tol: Option<f64>,
    /// One-based multiplier columns written to the trace; all when unset.
    pub mu_columns: Option<Vec<usize>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            preset: "table1".into(),
            count: None,
            data: None,
            trace: None,
            out_dir: PathBuf::from("."),
            tau_x: vec![1.0],
            tau_mu: 1.0,
            integration: IntegrationConfig {
                dt: 0.01,
                max_time: 2000.0,
                kkt_tol: Some(1e-6),
                record_every: 10,
                blowup_bound: 1e8,
            },
            plot: false,
            quad_tol: None,
            mu_columns: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value {value:?} for {key}")))
}

fn positive(key: &str, value: &str) -> Result<f64, CliError> {
    let v: f64 = parse(key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{key} must be positive, got {value}")))
    }
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "seed" => self.seed = parse(key, value)?,
            "preset" => {
                if value != "table1" {
                    return Err(CliError::Usage(format!("unknown preset {value:?} (available: table1)")));
                }
                self.preset = value.into();
            }
            "count" => {
                let c: usize = parse(key, value)?;
                if c == 0 {
                    return Err(CliError::Usage("count must be at least 1".into()));
                }
                self.count = Some(c);
            }
            "data" => self.data = Some(PathBuf::from(value)),
            "trace" => self.trace = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "tau_x" => {
                let taus: Vec<f64> = list(key, value)?;
                if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                    return Err(CliError::Usage("tau_x entries must be positive".into()));
                }
                self.tau_x = taus;
            }
            "tau_mu" => self.tau_mu = positive(key, value)?,
            "dt" => self.integration.dt = positive(key, value)?,
            "max_time" => {
                let t: f64 = parse(key, value)?;
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(CliError::Usage("max_time must be nonnegative".into()));
                }
                self.integration.max_time = t;
            }
            "kkt_tol" => {
                self.integration.kkt_tol = if value == "none" { None } else { Some(positive(key, value)?) }
            }
            "record_every" => {
                let r: usize = parse(key, value)?;
                if r == 0 {
                    return Err(CliError::Usage("record_every must be at least 1".into()));
                }
                self.integration.record_every = r;
            }
            "blowup_bound" => self.integration.blowup_bound = positive(key, value)?,
            "plot" => self.plot = parse(key, value)?,
            "quad_tol" => self.quad_tol = Some(positive(key, value)?),
            "mu_columns" => {
                let cols: Vec<usize> = list(key, value)?;
                if cols.contains(&0) {
                    return Err(CliError::Usage("mu_columns are one-based".into()));
                }
                self.mu_columns = Some(cols);
            }
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{source}: line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::Usage(format!("{source}: line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Every set key and its value, in the form [`RunConfig::apply_text`] reads.
    pub fn to_text(&self) -> String {
        let join = |v: &[String]| v.join(",");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("seed", self.seed.to_string());
        kv("preset", self.preset.clone());
        if let Some(c) = self.count {
            kv("count", c.to_string());
        }
        if let Some(d) = &self.data {
            kv("data", d.display().to_string());
        }
        if let Some(t) = &self.trace {
            kv("trace", t.display().to_string());
        }
        kv("out_dir", self.out_dir.display().to_string());
        kv("tau_x", join(&self.tau_x.iter().map(f64::to_string).collect::<Vec<_>>()));
        kv("tau_mu", self.tau_mu.to_string());
        kv("dt", self.integration.dt.to_string());
        kv("max_time", self.integration.max_time.to_string());
        kv(
            "kkt_tol",
            self.integration.kkt_tol.map_or("none".into(), |t| t.to_string()),
        );
        kv("record_every", self.integration.record_every.to_string());
        kv("blowup_bound", self.integration.blowup_bound.to_string());
        kv("plot", self.plot.to_string());
        if let Some(q) = self.quad_tol {
            kv("quad_tol", q.to_string());
        }
        if let Some(cols) = &self.mu_columns {
            kv("mu_columns", join(&cols.iter().map(usize::to_string).collect::<Vec<_>>()));
        }
        out
    }

    pub fn time_constants(&self, prog: &ConvexProgram) -> Result<TimeConstants, CliError> {
        let tau_x = match self.tau_x.len() {
            1 => vec![self.tau_x[0]; prog.dim()],
            n if n == prog.dim() => self.tau_x.clone(),
            n => {
                return Err(CliError::Usage(format!(
                    "tau_x has {n} entries; expected 1 or {}",
                    prog.dim()
                )))
            }
        };
        TimeConstants::new(tau_x, vec![1.0; prog.num_equalities()], vec![self.tau_mu; prog.num_inequalities()])
            .map_err(|e: DynamicsError| CliError::Usage(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flag_override() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\ndt = 0.05\nseed=11\nkkt_tol = none\n", "run.cfg").unwrap();
        assert_eq!(cfg.integration.dt, 0.05);
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.integration.kkt_tol, None);
        cfg.set("dt", "0.02").unwrap();
        assert_eq!(cfg.integration.dt, 0.02);
    }

    #[test]
    fn bad_lines_name_the_line() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("dt = 0.1\nbogus = 1\n", "run.cfg").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(cfg.apply_text("dt 0.1\n", "run.cfg").is_err());
        assert!(cfg.set("dt", "-1").is_err());
        assert!(cfg.set("count", "0").is_err());
        assert!(cfg.set("record_every", "0").is_err());
        assert!(cfg.set("preset", "iris").is_err());
    }

    #[test]
    fn text_form_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("tau_x", "1,2,0.5").unwrap();
        cfg.set("mu_columns", "1,3").unwrap();
        cfg.set("count", "12").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text(), "mem").unwrap();
        assert_eq!(back, cfg);
    }
}
