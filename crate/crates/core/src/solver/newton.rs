use super::gmres::{gmres, GmresSettings};
use super::{ContinuationConfig, LichnerowiczSymbol};
use crate::deformation::{build_state_with, potential_correction, residual_from_state, DeformationState, HamiltonianBasis};
use crate::elliptic::EllipticContext;
use crate::error::{Error, Result};
use crate::forms::Form;
use crate::grid::ScalarField;

const MAX_HALVINGS: usize = 10;

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub f: ScalarField,
    pub residual_norm: f64,
    pub iterations: usize,
    pub krylov_iterations: usize,
    pub state: DeformationState,
}

/// Nyquist-free residual of a state; Newton drives its `L²` norm to zero.
pub fn newton_residual(state: &DeformationState) -> Result<ScalarField> {
    Ok(residual_from_state(state, &HamiltonianBasis::empty())?.band_limited())
}

struct Evaluator<'a> {
    t: f64,
    ctx: &'a EllipticContext,
}

impl Evaluator<'_> {
    fn eval(&self, f: &ScalarField, psi: Form) -> Result<(DeformationState, ScalarField)> {
        let state = build_state_with(self.t, f, psi, self.ctx)?;
        let r = newton_residual(&state)?;
        Ok((state, r))
    }
}

fn combine(a: &Form, b: &Form, s: f64) -> Form {
    let mut out = a.clone();
    out.axpy(s, b);
    out
}

/// Jacobian-free Newton–Krylov solve of the residual equation at fixed `t`.
pub fn newton_correct(t: f64, f0: &ScalarField, ctx: &EllipticContext, cfg: &ContinuationConfig) -> Result<NewtonOutcome> {
    let grid = f0.grid();
    let symbol = LichnerowiczSymbol::flat(grid);
    let ev = Evaluator { t, ctx };
    let mut f = f0.clone();
    let mut psi = potential_correction(&f, ctx)?;
    let (mut state, mut r) = ev.eval(&f, psi.clone())?;
    let mut rnorm = r.l2_norm();
    let mut krylov = 0;
    for iter in 0..=cfg.max_newton_iters {
        if rnorm <= cfg.newton_tol {
            return Ok(NewtonOutcome { f, residual_norm: rnorm, iterations: iter, krylov_iterations: krylov, state });
        }
        if iter == cfg.max_newton_iters {
            break;
        }
        let fnorm = f.l2_norm();
        let jv = |v: &[f64]| -> Result<Vec<f64>> {
            let v = ScalarField::from_values(grid, v.to_vec())?;
            let vn = v.l2_norm();
            if vn == 0.0 {
                return Ok(vec![0.0; grid.len()]);
            }
            let h = cfg.fd_epsilon * (1.0 + fnorm) / vn;
            let psi_v = potential_correction(&v, ctx)?;
            let mut fp = f.clone();
            fp.axpy(h, &v);
            let mut fm = f.clone();
            fm.axpy(-h, &v);
            let (_, rp) = ev.eval(&fp, combine(&psi, &psi_v, h))?;
            let (_, rm) = ev.eval(&fm, combine(&psi, &psi_v, -h))?;
            Ok(rp.values().iter().zip(rm.values()).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        };
        let b: Vec<f64> = r.values().iter().map(|v| -v).collect();
        let tol = (0.1 * cfg.newton_tol / rnorm).clamp(1e-6, 1e-2);
        let lin = gmres(jv, |v| symbol.invert(v), &b, GmresSettings { tol, restart: 40, max_iter: 80 })?;
        krylov += lin.iterations;
        let step = ScalarField::from_values(grid, lin.x)?;
        let psi_step = potential_correction(&step, ctx)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        let mut last_err = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = f.clone();
            trial.axpy(lambda, &step);
            let trial_psi = combine(&psi, &psi_step, lambda);
            match ev.eval(&trial, trial_psi.clone()) {
                Ok((st, rt)) => {
                    let tn = rt.l2_norm();
                    if tn < (1.0 - 1e-4 * lambda) * rnorm {
                        f = trial;
                        psi = trial_psi;
                        state = st;
                        r = rt;
                        rnorm = tn;
                        accepted = true;
                        break;
                    }
                    last_err = None;
                }
                Err(e @ Error::NotAPotential(_)) => last_err = Some(e),
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(match last_err {
                Some(e) => e,
                None => Error::Diverged(format!(
                    "line search failed at t = {t}: residual {rnorm:e} after {MAX_HALVINGS} halvings"
                )),
            });
        }
    }
    Err(Error::Diverged(format!(
        "no convergence at t = {t} in {} Newton steps (residual {rnorm:e})",
        cfg.max_newton_iters
    )))
}
