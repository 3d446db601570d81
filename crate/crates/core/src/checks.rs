//! Invariant and cross-check suites run by `akstab check` and `akstab oracle`.

use serde::Serialize;

use crate::curvature::{
    chern_pairing, conformal_ricci_check, d_norm, hermitian_connection, hermitian_ricci, riemannian_scalar, trace_against,
};
use crate::deformation::{
    build_state, covariant_omega, direct_scalar, extremal_diagnostics, hessian_anti, project_t, residual_psi,
    HamiltonianBasis,
};
use crate::elliptic::{
    apply_p, flat_kernel_forms, green_solve_detailed, kernel_detect, subspace_angle, EllipticContext,
};
use crate::error::Result;
use crate::forms::{self, codifferential, exterior_derivative, hodge_star, j_split, l2_inner, primitive_split, Form};
use crate::grid::{GridSpec, ScalarField};
use crate::samples::{random_form, random_potential, random_structure};
use crate::solver::{lichnerowicz, newton_correct, system_crosscheck, ContinuationConfig};
use crate::structures::{default_bump, omega_matrix, standard_structure, CompatibleStructure, DeformationPath};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<44} {:>12.3e} (tol {:.0e})", self.name, self.value, self.tolerance)
    }
}

struct Suite {
    out: Vec<CheckOutcome>,
}

impl Suite {
    fn below(&mut self, name: &'static str, tolerance: f64, value: Result<f64>) {
        let value = value.unwrap_or(f64::NAN);
        self.out.push(CheckOutcome { name, value, tolerance, passed: value <= tolerance });
    }

    fn within(&mut self, name: &'static str, lo: f64, hi: f64, value: Result<f64>) {
        let value = value.unwrap_or(f64::NAN);
        self.out.push(CheckOutcome { name, value, tolerance: hi, passed: value >= lo && value <= hi });
    }
}

fn grid(n: usize) -> GridSpec {
    GridSpec::new(n).expect("valid size")
}

fn bump(n: usize, t: f64) -> Result<CompatibleStructure> {
    DeformationPath::bump(default_bump(), 1.0)?.evaluate(grid(n), t)
}

fn rel_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.zip_map(b, |x, y| x - y).max_abs() / b.max_abs().max(1e-300)
}

/// Structural invariants; nonlinear quantities at `n = 16`.
pub fn invariant_suite() -> Vec<CheckOutcome> {
    let g = grid(16);
    let mut s = Suite { out: Vec::new() };
    s.below("grid: spectral derivative of sin(2x1)", 1e-12, Ok({
        let f = ScalarField::from_fn(g, |x| (2.0 * x[0]).sin());
        let e = ScalarField::from_fn(g, |x| 2.0 * (2.0 * x[0]).cos());
        f.derivative(0).zip_map(&e, |a, b| a - b).max_abs()
    }));
    s.below("forms: d∘d = 0", 1e-10, (|| {
        let a = random_form(g, 1, 1, 2);
        Ok(exterior_derivative(&exterior_derivative(&a)?)?.max_abs())
    })());
    let st = random_structure(g, 3, 0.1);
    s.below("forms: d = *δ* on 2-forms", 1e-8, (|| {
        let psi = random_form(g, 2, 4, 2);
        let lhs = exterior_derivative(&psi)?;
        let rhs = hodge_star(&codifferential(&hodge_star(&psi, st.metric()), st.metric())?, st.metric());
        Ok(lhs.sub(&rhs).max_abs() / lhs.max_abs())
    })());
    s.below("forms: ** = 1 on 2-forms", 1e-12, Ok({
        let psi = random_form(g, 2, 5, 2);
        hodge_star(&hodge_star(&psi, st.metric()), st.metric()).sub(&psi).max_abs()
    }));
    s.below("forms: anti-invariant part is self-dual", 1e-10, (|| {
        let (_, minus) = j_split(&random_form(g, 2, 6, 2), st.j())?;
        Ok(hodge_star(&minus, st.metric()).sub(&minus).max_abs())
    })());
    s.below("structures: J² = −1 and JᵀΩJ = Ω", 1e-10, Ok({
        let om = omega_matrix();
        (0..g.len())
            .map(|i| {
                let j = st.j().at(i);
                (j * j + nalgebra::Matrix4::identity()).abs().max()
                    .max((j.transpose() * om * j - om).abs().max())
            })
            .fold(0.0, f64::max)
    }));
    s.below("curvature: flat Ricci form vanishes", 1e-12, Ok(hermitian_ricci(&standard_structure(g)).max_abs()));
    let conn = hermitian_connection(&st);
    s.below("curvature: ∇J = 0", 1e-8, Ok(conn.j_defect(st.j())));
    s.below("curvature: ∇g = 0", 1e-8, Ok(conn.metric_defect(st.metric())));
    let rho = hermitian_ricci(&st);
    s.below("curvature: Ricci form is closed", 1e-6, Ok(d_norm(&rho)));
    s.below("curvature: Chern pairing vanishes", 1e-6, Ok(chern_pairing(&rho).abs()));
    s.within("elliptic: flat kernel dimension 5", 5.0, 5.0, (|| {
        Ok(kernel_detect(&standard_structure(grid(8)), 1e-8)?.dim_kernel() as f64)
    })());
    s.below("elliptic: P self-adjoint on primitive forms", 1e-9, (|| {
        let ctx = kernel_detect(&st, 1e-8)?;
        let prim = |seed| -> Result<Form> { Ok(primitive_split(&random_form(g, 2, seed, 1), st.metric())?.1) };
        let (a, b) = (prim(7)?, prim(8)?);
        let lhs = l2_inner(&apply_p(&a, &ctx)?, &b, st.metric());
        let rhs = l2_inner(&a, &apply_p(&b, &ctx)?, st.metric());
        Ok((lhs - rhs).abs() / lhs.abs().max(1.0))
    })());
    s.below("deformation: projection idempotent", 1e-10, (|| {
        let basis = HamiltonianBasis::new(vec![
            ScalarField::from_fn(g, |x| x[0].cos()),
            ScalarField::from_fn(g, |x| x[1].sin() + 0.3 * x[0].cos()),
        ]);
        let dens = ScalarField::from_fn(g, |x| 1.0 + 0.2 * x[2].sin());
        let h = random_potential(g, 9, 2, 1.0);
        let p = project_t(&h, &basis, &dens)?;
        Ok(project_t(&p, &basis, &dens)?.zip_map(&p, |a, b| a - b).max_abs())
    })());
    let state = (|| {
        let ctx = kernel_detect(&st, 1e-8)?;
        build_state(0.0, &random_potential(g, 10, 1, 0.02), &ctx)
    })();
    match &state {
        Ok(state) => {
            s.below("deformation: (dα) anti-invariant part", 1e-8, Ok(state.anti_defect));
            s.below("deformation: e^F ω² = ω_f²", 1e-8, Ok(state.volume_defect));
            s.below("deformation: ∫ s ω_f²/2 = 0", 1e-8, Ok((&state.s_def * &state.volume_density()).integral().abs()));
            s.below("deformation: total volume preserved", 1e-8, (|| {
                let top = forms::wedge(&state.omega_f, &state.omega_f)?;
                Ok((top.component(0).integral() / (2.0 * g.volume()) - 1.0).abs())
            })());
        }
        Err(_) => s.below("deformation: admissible random potential", 0.0, Ok(f64::NAN)),
    }
    s.below("solver: flat Lichnerowicz = −Δ²", 1e-10, Ok({
        let f = ScalarField::from_fn(g, |x| (x[0] + 2.0 * x[2]).sin());
        lichnerowicz(&f, &standard_structure(g)).zip_map(&f, |a, b| a + 25.0 * b).max_abs()
    }));
    s.below("solver: Lichnerowicz self-adjoint", 1e-9, Ok({
        let (a, b) = (random_potential(g, 11, 2, 1.0), random_potential(g, 12, 2, 1.0));
        let vol = st.metric().volume_density();
        let lhs = (&lichnerowicz(&a, &st) * &vol).dot(&b);
        let rhs = (&lichnerowicz(&b, &st) * &vol).dot(&a);
        (lhs - rhs).abs() / lhs.abs().max(1.0)
    }));
    s.out
}

fn kahler_state_checks(s: &mut Suite) {
    let g = grid(16);
    let st = standard_structure(g);
    let f = ScalarField::from_fn(g, |x| 0.05 * (x[0].sin() * x[2].cos() + 0.5 * (x[1] + x[3]).cos()));
    let run = || -> Result<(f64, f64, f64)> {
        let ctx = kernel_detect(&st, 1e-8)?;
        let state = build_state(0.0, &f, &ctx)?;
        let direct = direct_scalar(&state, &st)?;
        let rho = conformal_ricci_check(st.j(), &state.conformal, &hermitian_ricci(&st));
        let conformal = trace_against(&rho, &state.omega_f)?;
        let riem = riemannian_scalar(&state.g_f);
        Ok((rel_diff(&state.s_def, &direct), rel_diff(&conformal, &direct), rel_diff(&riem, &direct)))
    };
    let r = run();
    s.below("Kähler: deformed vs direct scalar", 1e-6, r.as_ref().map(|v| v.0).map_err(clone_err));
    s.below("Kähler: conformal route vs direct scalar", 1e-6, r.as_ref().map(|v| v.1).map_err(clone_err));
    s.below("Kähler: Riemannian vs hermitian scalar", 1e-6, r.as_ref().map(|v| v.2).map_err(clone_err));
}

fn clone_err(e: &crate::Error) -> crate::Error {
    crate::Error::SolveError(e.to_string())
}

/// Cross-checks between independent computation paths, at `n = 16`.
pub fn oracle_suite() -> Vec<CheckOutcome> {
    let mut s = Suite { out: Vec::new() };
    let g = grid(16);
    s.below("kernel: flat forms recovered (angle)", 1e-8, (|| {
        let ctx = kernel_detect(&standard_structure(g), 1e-8)?;
        let found: Vec<Form> = ctx.kernel().iter().map(|k| k.form.clone()).collect();
        Ok(subspace_angle(&found, &flat_kernel_forms(g), &forms::MetricField::flat(g)))
    })());
    kahler_state_checks(&mut s);
    let t = 0.2;
    let ctx: Result<(CompatibleStructure, EllipticContext)> = (|| {
        let st = bump(16, t)?;
        let ctx = kernel_detect(&st, 1e-8)?;
        Ok((st, ctx))
    })();
    let (st, ctx) = match ctx {
        Ok(v) => v,
        Err(e) => {
            s.below("bump: kernel detection", 0.0, Err(e));
            return s.out;
        }
    };
    s.below("bump: hessian vs covariant derivative of ω", 1e-8, Ok({
        let f = ScalarField::from_fn(g, |x| x[0].sin());
        hessian_anti(&f, &st).sub(&covariant_omega(&f, &st)).max_abs()
    }));
    s.below("bump: Green residual", 1e-9, (|| {
        let f = random_potential(g, 21, 2, 0.05);
        Ok(green_solve_detailed(&hessian_anti(&f, &st), &ctx)?.relative_residual)
    })());
    let f = ScalarField::from_fn(g, |x| 0.05 * x[0].sin());
    let state = build_state(t, &f, &ctx);
    s.below("bump: closed-form F vs top-form ratio", 1e-8, state.as_ref().map_err(clone_err).and_then(|state| {
        let top = forms::wedge(&state.omega_f, &state.omega_f)?;
        Ok(top.component(0).map(|w| (w / 2.0).ln()).zip_map(&state.conformal, |a, b| a - b).max_abs())
    }));
    s.below("bump: deformed vs direct scalar", 1e-6, state.as_ref().map_err(clone_err).and_then(|state| {
        Ok(rel_diff(&state.s_def, &direct_scalar(state, &st)?))
    }));
    s.within("flat: linearization error ratio", 5.0, 20.0, (|| {
        let flat = standard_structure(g);
        let fctx = kernel_detect(&flat, 1e-8)?;
        let f = ScalarField::from_fn(g, |x| x[0].sin() * x[2].cos() + 0.5 * (x[1] + x[3]).cos());
        let l = lichnerowicz(&f, &flat);
        let basis = HamiltonianBasis::empty();
        let base = residual_psi(0.0, &ScalarField::zeros(g), &fctx, &basis)?;
        let err = |eps: f64| -> Result<f64> {
            let r = residual_psi(0.0, &f.map(|v| eps * v), &fctx, &basis)?;
            Ok(r.zip_map(&base, |a, b| (a - b) / eps).zip_map(&l, |a, b| a - b).l2_norm())
        };
        Ok(err(1e-3)? / err(1e-4)?)
    })());
    let cfg = ContinuationConfig::default();
    match newton_correct(t, &ScalarField::zeros(g), &ctx, &cfg) {
        Ok(sol) => {
            s.below("bump: Newton residual", cfg.newton_tol, Ok(sol.residual_norm));
            s.below("bump: Killing defect at the solution", 1e-5, (|| {
                Ok(extremal_diagnostics(&sol.state, &HamiltonianBasis::empty(), &[])?.killing_defect)
            })());
            let x = system_crosscheck(&sol.state, &ctx);
            s.below("bump: crosscheck conformal equation", 1e-5, x.as_ref().map(|r| r.conformal_equation).map_err(clone_err));
            s.below("bump: crosscheck volume equation", 1e-5, x.map(|r| r.volume_equation));
        }
        Err(e) => s.below("bump: Newton solve", 0.0, Err(e)),
    }
    s.out
}
