//! JSON run configuration.
//!
//! ```json
//! {
//!   "grid":   { "n": 16 },
//!   "path":   { "kind": "bump_metric", "t_max": 0.2, "samples": 5,
//!               "S": [{ "entry": [1, 1], "amp": 0.3, "factors": [{ "fn": "sin", "axis": 3, "k": 1 }] }] },
//!   "solver": { "t_max": 0.2, "steps": 8, "newton_tol": 1e-8, "max_newton_iters": 20,
//!               "fd_epsilon": 1e-5, "ker_tol": 1e-8 },
//!   "output": { "dir": "out" }
//! }
//! ```
//!
//! `path.kind` is `constant_linear` (`S` a symmetric 4×4 matrix),
//! `bump_metric` (`S` a list of trigonometric terms; the built-in default
//! bump when omitted) or `user_file` (`file` names an AKF4 structure with 16
//! components, resolved relative to the config file).

use std::path::{Path, PathBuf};

use nalgebra::Matrix4;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::solver::ContinuationConfig;
use crate::structures::{default_bump, BumpTerm, DeformationPath};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    ConstantLinear,
    BumpMetric,
    UserFile,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSection {
    pub kind: PathKind,
    #[serde(rename = "S", default)]
    pub s: Option<serde_json::Value>,
    pub t_max: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

fn default_samples() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub t_max: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_newton")]
    pub max_newton_iters: usize,
    #[serde(default = "default_fd_epsilon")]
    pub fd_epsilon: f64,
    #[serde(default = "default_ker_tol")]
    pub ker_tol: f64,
}

fn default_steps() -> usize {
    10
}
fn default_newton_tol() -> f64 {
    1e-8
}
fn default_max_newton() -> usize {
    20
}
fn default_fd_epsilon() -> f64 {
    1e-5
}
fn default_ker_tol() -> f64 {
    1e-8
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            t_max: None,
            steps: default_steps(),
            newton_tol: default_newton_tol(),
            max_newton_iters: default_max_newton(),
            fd_epsilon: default_fd_epsilon(),
            ker_tol: default_ker_tol(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_dir() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSection,
    pub path: PathSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        GridSpec::new(cfg.grid.n)?;
        if !(cfg.path.t_max > 0.0) {
            return Err(Error::Config("path.t_max must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.n)
    }

    pub fn deformation_path(&self) -> Result<DeformationPath> {
        let p = &self.path;
        match p.kind {
            PathKind::ConstantLinear => {
                let value = p.s.clone().ok_or_else(|| Error::Config("constant_linear needs path.S".into()))?;
                let rows: [[f64; 4]; 4] = serde_json::from_value(value)
                    .map_err(|e| Error::Config(format!("path.S must be a 4×4 matrix: {e}")))?;
                DeformationPath::constant_linear(Matrix4::from_fn(|a, b| rows[a][b]), p.t_max)
            }
            PathKind::BumpMetric => {
                let terms = match &p.s {
                    None => default_bump(),
                    Some(v) => serde_json::from_value::<Vec<BumpTerm>>(v.clone())
                        .map_err(|e| Error::Config(format!("path.S must be a list of bump terms: {e}")))?,
                };
                DeformationPath::bump(terms, p.t_max)
            }
            PathKind::UserFile => {
                let file = p.file.as_ref().ok_or_else(|| Error::Config("user_file needs path.file".into()))?;
                DeformationPath::user_file(self.base_dir.join(file), p.t_max)
            }
        }
    }

    /// Evaluates the path at `path.samples` evenly spaced parameters in `[0, t_max]`.
    pub fn validate_path(&self, path: &DeformationPath) -> Result<()> {
        let grid = self.grid()?;
        let k = self.path.samples.max(1);
        for i in 0..k {
            let t = if k == 1 { 0.0 } else { self.path.t_max * i as f64 / (k - 1) as f64 };
            path.evaluate(grid, t)?;
        }
        Ok(())
    }

    pub fn continuation(&self) -> ContinuationConfig {
        let s = &self.solver;
        ContinuationConfig {
            n: self.grid.n,
            t_max: s.t_max.unwrap_or(self.path.t_max),
            steps: s.steps,
            newton_tol: s.newton_tol,
            max_newton_iters: s.max_newton_iters,
            fd_epsilon: s.fd_epsilon,
            ker_tol: s.ker_tol,
            ..Default::default()
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.output.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let text = r#"{
            "grid": {"n": 8},
            "path": {"kind": "bump_metric", "t_max": 0.2, "samples": 3,
                     "S": [{"entry": [1, 1], "amp": 0.3, "factors": [{"fn": "sin", "axis": 3, "k": 1}]}]},
            "solver": {"t_max": 0.2, "steps": 8, "newton_tol": 1e-8, "max_newton_iters": 15,
                       "fd_epsilon": 1e-5, "ker_tol": 1e-8},
            "output": {"dir": "run"}
        }"#;
        let cfg = Config::from_json(text, "/tmp/x").unwrap();
        let c = cfg.continuation();
        assert_eq!((c.n, c.steps, c.max_newton_iters), (8, 8, 15));
        assert_eq!(cfg.output_dir(), PathBuf::from("/tmp/x/run"));
        let path = cfg.deformation_path().unwrap();
        cfg.validate_path(&path).unwrap();
        assert!(matches!(path, DeformationPath::Bump { ref terms, .. } if terms.len() == 1));
    }

    #[test]
    fn defaults_and_matrix_paths() {
        let text = r#"{"grid": {"n": 8}, "path": {"kind": "constant_linear", "t_max": 0.5,
            "S": [[0.3,0.1,0,0],[0.1,-0.2,0,0],[0,0,0.1,0],[0,0,0,-0.1]]}}"#;
        let cfg = Config::from_json(text, "").unwrap();
        let c = cfg.continuation();
        assert_eq!(c.t_max, 0.5);
        assert_eq!(c.newton_tol, 1e-8);
        assert!(matches!(cfg.deformation_path().unwrap(), DeformationPath::ConstantLinear { .. }));
        let bump = Config::from_json(r#"{"grid": {"n": 8}, "path": {"kind": "bump_metric", "t_max": 0.2}}"#, "")
            .unwrap();
        assert!(matches!(bump.deformation_path().unwrap(), DeformationPath::Bump { ref terms, .. } if terms.len() == 3));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::from_json(r#"{"grid": {"n": 7}, "path": {"kind": "bump_metric", "t_max": 0.2}}"#, "").is_err());
        assert!(Config::from_json(r#"{"grid": {"n": 8}, "path": {"kind": "spiral", "t_max": 0.2}}"#, "").is_err());
        assert!(Config::from_json(r#"{"grid": {"n": 8}, "path": {"kind": "bump_metric", "t_max": 0.2}, "extra": 1}"#, "")
            .is_err());
        let asym = r#"{"grid": {"n": 8}, "path": {"kind": "constant_linear", "t_max": 0.5,
            "S": [[0,1,0,0],[0,0,0,0],[0,0,0,0],[0,0,0,0]]}}"#;
        assert!(Config::from_json(asym, "").unwrap().deformation_path().is_err());
        let missing = r#"{"grid": {"n": 8}, "path": {"kind": "user_file", "t_max": 0.5}}"#;
        assert!(Config::from_json(missing, "").unwrap().deformation_path().is_err());
    }
}
