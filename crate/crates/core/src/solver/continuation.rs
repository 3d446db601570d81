use std::path::Path;

use serde::Serialize;

use super::newton::newton_correct;
use crate::deformation::{extremal_diagnostics, HamiltonianBasis};
use crate::elliptic::{kernel_detect_with, KernelOptions};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::io::save_scalar;
use crate::structures::{standard_j_matrix, DeformationPath, STRUCTURE_TOL};

/// Continuation and Newton parameters.
#[derive(Debug, Clone)]
pub struct ContinuationConfig {
    pub n: usize,
    pub t_max: f64,
    pub steps: usize,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub fd_epsilon: f64,
    pub ker_tol: f64,
    pub kernel: KernelOptions,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            n: 16,
            t_max: 0.5,
            steps: 10,
            newton_tol: 1e-8,
            max_newton_iters: 20,
            fd_epsilon: 1e-5,
            ker_tol: 1e-8,
            kernel: KernelOptions::default(),
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        GridSpec::new(self.n)?;
        if self.steps == 0 || !(self.t_max > 0.0) {
            return Err(Error::Config("need t_max > 0 and steps ≥ 1".into()));
        }
        if self.t_max / self.steps as f64 > 0.1 + 1e-12 {
            return Err(Error::Config(format!("step {} exceeds 0.1", self.t_max / self.steps as f64)));
        }
        let floor = 10.0 * f64::EPSILON * (self.n * self.n) as f64;
        if !(self.newton_tol >= floor) {
            return Err(Error::Config(format!("newton_tol below {floor:e}")));
        }
        if !(self.fd_epsilon > 0.0) || !(self.ker_tol > 0.0) {
            return Err(Error::Config("fd_epsilon and ker_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    KernelJump,
    NotAPotential,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: f64,
    pub f_t: ScalarField,
    pub residual_norm: f64,
    pub newton_iters: usize,
    pub h_minus: usize,
    pub gap: f64,
    pub killing_defect: f64,
    pub calabi_energy: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub steps: Vec<StepRecord>,
    pub status: Status,
    /// Parameter at which the run stopped without converging.
    pub violation_t: Option<f64>,
    /// `h⁻` measured at `violation_t`, when the kernel could be resolved.
    pub violation_h_minus: Option<usize>,
    pub message: Option<String>,
}

#[derive(Serialize)]
struct StepJson<'a> {
    t: f64,
    f_t: &'a str,
    residual_norm: f64,
    newton_iters: usize,
    h_minus: usize,
    gap: f64,
    killing_defect: f64,
    calabi_energy: f64,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    status: Status,
    violation_t: Option<f64>,
    violation_h_minus: Option<usize>,
    message: Option<&'a str>,
    steps: Vec<StepJson<'a>>,
}

impl ContinuationResult {
    /// File name under which the potential of step `k` is written.
    pub fn field_name(k: usize) -> String {
        format!("f_t_{k:03}.akf4")
    }

    pub fn report_json(&self) -> Result<String> {
        let names: Vec<String> = (0..self.steps.len()).map(Self::field_name).collect();
        let report = ReportJson {
            status: self.status,
            violation_t: self.violation_t,
            violation_h_minus: self.violation_h_minus,
            message: self.message.as_deref(),
            steps: self
                .steps
                .iter()
                .zip(&names)
                .map(|(s, name)| StepJson {
                    t: s.t,
                    f_t: name,
                    residual_norm: s.residual_norm,
                    newton_iters: s.newton_iters,
                    h_minus: s.h_minus,
                    gap: s.gap,
                    killing_defect: s.killing_defect,
                    calabi_energy: s.calabi_energy,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&report)?)
    }

    /// Writes `report.json` and one AKF4 file per step into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (k, s) in self.steps.iter().enumerate() {
            save_scalar(dir.join(Self::field_name(k)), &s.f_t)?;
        }
        std::fs::write(dir.join("report.json"), self.report_json()?)?;
        Ok(())
    }
}

fn status_of(e: &Error) -> Status {
    match e {
        Error::AmbiguousKernel { .. } => Status::KernelJump,
        Error::NotAPotential(_) => Status::NotAPotential,
        _ => Status::Diverged,
    }
}

/// Follows `path` from the flat Kähler point, solving the residual equation
/// at `t_k = k t_max / steps` and stopping when `h⁻` changes.
pub fn continue_path(path: &DeformationPath, cfg: &ContinuationConfig) -> Result<ContinuationResult> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    if cfg.t_max > path.t_max() + 1e-12 {
        return Err(Error::Config(format!("t_max {} beyond the path range {}", cfg.t_max, path.t_max())));
    }
    let base = path.evaluate(grid, 0.0)?;
    let j0 = standard_j_matrix();
    let off = (0..grid.len()).map(|i| (base.j().at(i) - j0).abs().max()).fold(0.0, f64::max);
    if off > STRUCTURE_TOL {
        return Err(Error::StructureError(format!("path does not start at the flat Kähler structure ({off:e})")));
    }
    let mut result = ContinuationResult {
        steps: Vec::new(),
        status: Status::Converged,
        violation_t: None,
        violation_h_minus: None,
        message: None,
    };
    let mut f = ScalarField::zeros(grid);
    let mut h0 = None;
    for k in 0..=cfg.steps {
        let t = cfg.t_max * k as f64 / cfg.steps as f64;
        let outcome = (|| {
            let st = path.evaluate(grid, t)?;
            let ctx = kernel_detect_with(&st, cfg.ker_tol, &cfg.kernel)?;
            let h = ctx.h_minus();
            if let Some(h0) = h0 {
                if h != h0 {
                    return Ok(Err((h, ctx.gap())));
                }
            }
            let sol = newton_correct(t, &f, &ctx, cfg)?;
            let diag = extremal_diagnostics(&sol.state, &HamiltonianBasis::empty(), &[])?;
            Ok(Ok(StepRecord {
                t,
                f_t: sol.f,
                residual_norm: sol.residual_norm,
                newton_iters: sol.iterations,
                h_minus: h,
                gap: ctx.gap(),
                killing_defect: diag.killing_defect,
                calabi_energy: diag.calabi_energy,
            }))
        })();
        match outcome {
            Ok(Ok(rec)) => {
                h0.get_or_insert(rec.h_minus);
                f = rec.f_t.clone();
                result.steps.push(rec);
            }
            Ok(Err((h, gap))) => {
                result.status = Status::KernelJump;
                result.violation_t = Some(t);
                result.violation_h_minus = Some(h);
                result.message = Some(format!("h_minus changed from {} to {h} (gap {gap:e})", h0.unwrap()));
                break;
            }
            Err(e) => {
                result.status = status_of(&e);
                result.violation_t = Some(t);
                result.message = Some(e.to_string());
                break;
            }
        }
    }
    Ok(result)
}
