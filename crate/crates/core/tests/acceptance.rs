//! Acceptance criteria. Each test prints one PASS/FAIL line to stderr
//! (bypassing output capture) and then asserts.

use std::io::Write;
use std::process::Command;

use akstab::curvature::{conformal_ricci_check, hermitian_ricci, hermitian_scalar, trace_against};
use akstab::deformation::{build_state, direct_scalar, hessian_anti, residual_psi, HamiltonianBasis};
use akstab::elliptic::{
    flat_kernel_forms, green_solve, green_solve_detailed, kernel_detect, kernel_detect_with, subspace_angle,
    KernelOptions,
};
use akstab::forms::{codifferential, exterior_derivative, hodge_star, j_split, primitive_split, Form, MetricField};
use akstab::grid::{GridSpec, ScalarField};
use akstab::samples::{random_form, random_potential, random_structure};
use akstab::solver::{continue_path, lichnerowicz, system_crosscheck, ContinuationConfig, Status};
use akstab::structures::{default_bump, standard_structure, DeformationPath};
use nalgebra::Matrix4;

fn grid(n: usize) -> GridSpec {
    GridSpec::new(n).unwrap()
}

fn report(id: u32, title: &str, passed: bool, detail: String) {
    let tag = if passed { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    writeln!(err, "criterion {id} [{tag}] {title}: {detail}").unwrap();
}

fn rel(a: &ScalarField, b: &ScalarField) -> f64 {
    a.zip_map(b, |x, y| x - y).max_abs() / a.max_abs().max(b.max_abs()).max(1e-300)
}

#[test]
fn criterion_1_hodge_identities() {
    let g = grid(8);
    let mut worst_d = 0.0f64;
    let mut worst_split = 0.0f64;
    for k in 0..100u64 {
        let st = random_structure(g, 1000 + k, 0.1);
        let gm = st.metric();
        let rank = 1 + (k as usize % 3);
        let psi = random_form(g, rank, 2000 + k, 2);
        let d = exterior_derivative(&psi).unwrap();
        let star_delta_star = hodge_star(&codifferential(&hodge_star(&psi, gm), gm).unwrap(), gm);
        worst_d = worst_d.max(d.sub(&star_delta_star).max_abs() / d.max_abs().max(1.0));
        // ψ = λω + ψ₀ + ψ⁻ has *ψ = λω − ψ₀ + ψ⁻
        let two = random_form(g, 2, 3000 + k, 2);
        let (plus, minus) = j_split(&two, st.j()).unwrap();
        let (lambda, prim) = primitive_split(&plus, gm).unwrap();
        let omega_part = Form::omega(g).mul_scalar(&lambda);
        let expect = omega_part.sub(&prim).add(&minus);
        worst_split = worst_split.max(hodge_star(&two, gm).sub(&expect).max_abs() / two.max_abs());
    }
    let worst = worst_d.max(worst_split);
    let ok = worst <= 1e-8;
    report(1, "Hodge identities on 100 random fields", ok, format!(
        "max |d − *δ*| = {worst_d:.2e}, max split residual = {worst_split:.2e} (tol 1e-8)"
    ));
    assert!(ok);
}

#[test]
fn criterion_2_flat_base_point() {
    let g = grid(16);
    let st = standard_structure(g);
    let rho = hermitian_ricci(&st).max_abs();
    let s = hermitian_scalar(&st, &Form::omega(g)).unwrap().max_abs();
    let ctx = kernel_detect(&st, 1e-8).unwrap();
    let r = residual_psi(0.0, &ScalarField::zeros(g), &ctx, &HamiltonianBasis::empty()).unwrap().max_abs();
    let ok = rho <= 1e-12 && s <= 1e-12 && r <= 1e-12;
    report(2, "flat base point", ok, format!("|ρ| = {rho:.2e}, |s| = {s:.2e}, |Ψ(0,0)| = {r:.2e} (tol 1e-12)"));
    assert!(ok);
}

#[test]
fn criterion_3_kernel_theorem() {
    let mut lines = Vec::new();
    let mut ok = true;
    for (n, extra) in [(16, 3), (32, 2)] {
        let g = grid(n);
        let opts = KernelOptions { extra, ..Default::default() };
        let ctx = kernel_detect_with(&standard_structure(g), 1e-8, &opts).unwrap();
        let found: Vec<Form> = ctx.kernel().iter().map(|k| k.form.clone()).collect();
        let angle = subspace_angle(&found, &flat_kernel_forms(g), &MetricField::flat(g));
        ok &= ctx.dim_kernel() == 5 && ctx.h_minus() == 2 && angle <= 1e-8;
        lines.push(format!("n={n}: dim {} h⁻ {} angle {angle:.2e}", ctx.dim_kernel(), ctx.h_minus()));
    }
    report(3, "kernel dimension 5 = 3 + 2 with refinement", ok, format!("{} (tol 1e-8)", lines.join("; ")));
    assert!(ok);
}

#[test]
fn criterion_4_green_operator() {
    let g = grid(16);
    let st = DeformationPath::bump(default_bump(), 0.2).unwrap().evaluate(g, 0.2).unwrap();
    let ctx = kernel_detect(&st, 1e-8).unwrap();
    let (mut res, mut overlap) = (0.0f64, 0.0f64);
    for k in 0..10 {
        let f = random_potential(g, 40 + k, 2, 0.05);
        let sol = green_solve_detailed(&hessian_anti(&f, &st), &ctx).unwrap();
        res = res.max(sol.relative_residual);
        overlap = overlap.max(sol.kernel_overlap);
    }
    let flat = standard_structure(g);
    let flat_ctx = kernel_detect(&flat, 1e-8).unwrap();
    let mut integrable = 0.0f64;
    for k in 0..3 {
        let f = random_potential(g, 60 + k, 2, 0.05);
        integrable = integrable.max(green_solve(&hessian_anti(&f, &flat), &flat_ctx).unwrap().max_abs());
    }
    let ok = res <= 1e-9 && overlap <= 1e-9 && integrable <= 1e-10;
    report(4, "Green operator on a bump structure", ok, format!(
        "relative residual {res:.2e}, kernel overlap {overlap:.2e} (tol 1e-9); integrable |ψ_f| {integrable:.2e} (tol 1e-10)"
    ));
    assert!(ok);
}

#[test]
fn criterion_5_conformal_consistency() {
    let g = grid(16);
    let st = standard_structure(g);
    let ctx = kernel_detect(&st, 1e-8).unwrap();
    let rho_base = hermitian_ricci(&st);
    let mut potentials = vec![ScalarField::from_fn(g, |x| x[0].sin() * x[2].cos() + 0.5 * (x[1] + x[3]).cos())];
    potentials.extend((0..3).map(|k| random_potential(g, 70 + k, 1, 1.0)));
    let (mut worst, mut integral) = (0.0f64, 0.0f64);
    for f in potentials {
        let f = f.map(|v| v * 0.05 / f.max_abs());
        let state = build_state(0.0, &f, &ctx).unwrap();
        let direct = direct_scalar(&state, &st).unwrap();
        let rho = conformal_ricci_check(st.j(), &state.conformal, &rho_base);
        let conformal = trace_against(&rho, &state.omega_f).unwrap();
        let pairing = &state.s_def;
        worst = worst.max(rel(&direct, &conformal)).max(rel(&direct, pairing)).max(rel(&conformal, pairing));
        integral = integral.max((pairing * &state.volume_density()).integral().abs());
    }
    let ok = worst <= 1e-6 && integral <= 1e-8;
    report(5, "three routes to the scalar curvature", ok, format!(
        "pairwise relative {worst:.2e} (tol 1e-6), |∫ s ω_f²/2| {integral:.2e} (tol 1e-8)"
    ));
    assert!(ok);
}

#[test]
fn criterion_6_linearization() {
    let g = grid(16);
    let st = standard_structure(g);
    let ctx = kernel_detect(&st, 1e-8).unwrap();
    let f = ScalarField::from_fn(g, |x| x[0].sin() * x[2].cos() + 0.5 * (x[1] + x[3]).cos());
    let l = lichnerowicz(&f, &st);
    let basis = HamiltonianBasis::empty();
    let base = residual_psi(0.0, &ScalarField::zeros(g), &ctx, &basis).unwrap();
    let err = |eps: f64| {
        let r = residual_psi(0.0, &f.map(|v| eps * v), &ctx, &basis).unwrap();
        r.zip_map(&base, |a, b| (a - b) / eps).zip_map(&l, |a, b| a - b).l2_norm()
    };
    let (e3, e4) = (err(1e-3), err(1e-4));
    let ratio = e3 / e4;
    let ok = (5.0..=20.0).contains(&ratio);
    report(6, "Lichnerowicz operator vs finite differences", ok, format!(
        "error {e3:.2e} at 1e-3, {e4:.2e} at 1e-4, ratio {ratio:.2} (range [5, 20])"
    ));
    assert!(ok);
}

#[test]
fn criterion_7_integrable_path() {
    let s = Matrix4::new(0.3, 0.1, 0.0, 0.0, 0.1, -0.2, 0.05, 0.0, 0.0, 0.05, 0.1, 0.0, 0.0, 0.0, 0.0, -0.1);
    let path = DeformationPath::constant_linear(s, 0.5).unwrap();
    let cfg = ContinuationConfig { n: 16, t_max: 0.5, steps: 10, ..Default::default() };
    let res = continue_path(&path, &cfg).unwrap();
    let fmax = res.steps.iter().map(|s| s.f_t.l2_norm()).fold(0.0, f64::max);
    let h_const = res.steps.iter().all(|s| s.h_minus == 2);
    let ok = res.status == Status::Converged && res.steps.len() == 11 && fmax <= 1e-8 && h_const;
    report(7, "constant-linear path, t_max 0.5, 10 steps", ok, format!(
        "status {:?}, {} steps, max ‖f_t‖ {fmax:.2e} (tol 1e-8), h⁻ ≡ 2: {h_const}",
        res.status,
        res.steps.len()
    ));
    assert!(ok);
}

#[test]
fn criterion_8_bump_path() {
    let path = DeformationPath::bump(default_bump(), 0.2).unwrap();
    let cfg = ContinuationConfig { n: 16, t_max: 0.2, steps: 8, ..Default::default() };
    let res = continue_path(&path, &cfg).unwrap();
    let (ok, detail) = match res.status {
        Status::Converged => {
            let g = grid(16);
            let mut worst_res = 0.0f64;
            let mut worst_kill = 0.0f64;
            let mut worst_x = 0.0f64;
            for step in &res.steps {
                worst_res = worst_res.max(step.residual_norm);
                worst_kill = worst_kill.max(step.killing_defect);
                let ctx = kernel_detect(&path.evaluate(g, step.t).unwrap(), cfg.ker_tol).unwrap();
                let state = build_state(step.t, &step.f_t, &ctx).unwrap();
                let x = system_crosscheck(&state, &ctx).unwrap();
                worst_x = worst_x.max(x.conformal_equation).max(x.volume_equation);
            }
            (
                worst_res <= 1e-8 && worst_kill <= 1e-5 && worst_x <= 1e-5,
                format!("all steps converged: residual {worst_res:.2e}, Killing {worst_kill:.2e}, crosscheck {worst_x:.2e}"),
            )
        }
        Status::KernelJump => (
            res.violation_t.is_some(),
            format!(
                "kernel_jump at t = {:?} after {} converged steps ({})",
                res.violation_t,
                res.steps.len(),
                res.message.as_deref().unwrap_or("")
            ),
        ),
        other => (false, format!("status {other:?}: {}", res.message.as_deref().unwrap_or(""))),
    };
    report(8, "bump path, t_max 0.2, 8 steps", ok, detail);
    assert!(ok);
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bump.json");
    std::fs::write(
        &config,
        r#"{"grid": {"n": 16}, "path": {"kind": "bump_metric", "t_max": 0.2, "samples": 3},
            "solver": {"t_max": 0.2, "steps": 8}, "output": {"dir": "unused"}}"#,
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_akstab"))
            .args(["solve", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let text = std::fs::read_to_string(out.join("report.json")).unwrap();
        serde_json::from_str::<serde_json::Value>(&text).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    let ok = a == b;
    report(9, "identical reruns", ok, format!(
        "status {} with {} steps in both runs; reports equal: {ok}",
        a["status"],
        a["steps"].as_array().map(Vec::len).unwrap_or(0)
    ));
    assert!(ok);
}
