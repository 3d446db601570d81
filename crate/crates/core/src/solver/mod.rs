//! Lichnerowicz linearization, Newton–Krylov correction and continuation in `t`.

mod continuation;
pub mod gmres;
mod newton;

use std::sync::Arc;

use nalgebra::Matrix4;

use crate::curvature::christoffels;
use crate::deformation::{direct_scalar, DeformationState};
use crate::elliptic::EllipticContext;
use crate::error::Result;
use crate::forms::{self, Form};
use crate::grid::{Complex64, GridSpec, PointData, ScalarField};
use crate::structures::{matrix_field_derivatives, standard_structure, CompatibleStructure};

pub use continuation::{continue_path, ContinuationConfig, ContinuationResult, Status, StepRecord};
pub use newton::{newton_correct, newton_residual, NewtonOutcome};

/// `L(f) = −2 δδ (D df)^{J,−}` on the base structure. On the flat torus this is `−Δ²`.
pub fn lichnerowicz(f: &ScalarField, base: &CompatibleStructure) -> ScalarField {
    let grid = f.grid();
    let len = grid.len();
    let g = base.metric();
    let gamma = christoffels(g);
    let df = f.gradient();
    let ddf: Vec<[ScalarField; 4]> = df.iter().map(ScalarField::gradient).collect();
    let h: Vec<Matrix4<f64>> = (0..len)
        .map(|i| {
            let hess = Matrix4::from_fn(|a, b| {
                let lc: f64 = (0..4).map(|c| gamma[a].at(i)[(c, b)] * df[c].values()[i]).sum();
                0.5 * (ddf[a][b].values()[i] + ddf[b][a].values()[i]) - lc
            });
            let j = base.j().at(i);
            0.5 * (hess - j.transpose() * hess * j)
        })
        .collect();
    let dh = matrix_field_derivatives(grid, &PointData::Field(h.clone()));
    // β_b = −g^{ac} (∇_c h)_{ab}
    let mut beta = vec![vec![0.0; len]; 4];
    for i in 0..len {
        let ginv = g.inverse(i);
        let mut acc = [0.0; 4];
        for c in 0..4 {
            let gc = gamma[c].at(i);
            let t = dh[c].at(i) - gc.transpose() * h[i] - h[i] * gc;
            for a in 0..4 {
                let w = ginv[(a, c)];
                if w != 0.0 {
                    for (b, slot) in acc.iter_mut().enumerate() {
                        *slot -= w * t[(a, b)];
                    }
                }
            }
        }
        for b in 0..4 {
            beta[b][i] = acc[b];
        }
    }
    let beta: Vec<ScalarField> = beta.into_iter().map(|v| ScalarField::from_values(grid, v).unwrap()).collect();
    let dbeta: Vec<[ScalarField; 4]> = beta.iter().map(ScalarField::gradient).collect();
    let values = (0..len)
        .map(|i| {
            let ginv = g.inverse(i);
            let mut div = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    let lc: f64 = (0..4).map(|c| gamma[a].at(i)[(c, b)] * beta[c].values()[i]).sum();
                    div += ginv[(a, b)] * (dbeta[b][a].values()[i] - lc);
                }
            }
            // δβ = −div β, L = −2δβ
            2.0 * div
        })
        .collect();
    ScalarField::from_values(grid, values).unwrap()
}

/// Fourier symbol of the flat-torus Lichnerowicz operator, tabulated from its
/// impulse response.
#[derive(Debug, Clone)]
pub struct LichnerowiczSymbol {
    grid: GridSpec,
    symbol: Arc<Vec<f64>>,
}

impl LichnerowiczSymbol {
    pub fn flat(grid: GridSpec) -> Self {
        let mut impulse = vec![0.0; grid.len()];
        impulse[0] = 1.0;
        let response = lichnerowicz(&ScalarField::from_values(grid, impulse).unwrap(), &standard_structure(grid));
        let symbol = grid.spectral().forward(response.values()).into_iter().map(|c| c.re).collect();
        LichnerowiczSymbol { grid, symbol: Arc::new(symbol) }
    }

    pub fn values(&self) -> &[f64] {
        &self.symbol
    }

    /// Mode-by-mode inverse on zero-mean, Nyquist-free fields.
    pub fn invert(&self, v: &[f64]) -> Vec<f64> {
        let sp = self.grid.spectral();
        let mut hat = sp.forward(v);
        let cutoff = 1e-12 * self.symbol.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        for (h, s) in hat.iter_mut().zip(self.symbol.iter()) {
            *h = if s.abs() > cutoff { *h / *s } else { Complex64::new(0.0, 0.0) };
        }
        hat[0] = Complex64::new(0.0, 0.0);
        sp.strip_nyquist(&mut hat);
        sp.inverse(hat)
    }
}

/// Residuals of the pair: `s − 2g_f(ρ, ω_f) = Δ^{g_f}u` with `u = F`, and `e^u = ω_f²/ω²`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CrosscheckReport {
    /// `sup |s − 2g_f(ρ, ω_f) − Δ^{g_f}F|` with `s` from the connection of `(J_t, g_f)`.
    pub conformal_equation: f64,
    /// `sup |e^F − ω_f²/ω²|`.
    pub volume_equation: f64,
}

pub fn system_crosscheck(state: &DeformationState, ctx: &EllipticContext) -> Result<CrosscheckReport> {
    let s = direct_scalar(state, ctx.structure())?;
    let lap = forms::laplacian(&Form::scalar(state.conformal.clone()), &state.g_f).into_components().remove(0);
    let pair = forms::inner(ctx.base_ricci(), &state.omega_f, &state.g_f);
    let mut e1 = s;
    e1.axpy(-2.0, &pair);
    e1.axpy(-1.0, &lap);
    let top = forms::wedge(&state.omega_f, &state.omega_f)?;
    let e2 = top.component(0).zip_map(&state.conformal, |w, c| c.exp() - w / 2.0);
    Ok(CrosscheckReport { conformal_equation: e1.max_abs(), volume_equation: e2.max_abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformation::{build_state, residual_psi, HamiltonianBasis};
    use crate::elliptic::kernel_detect;
    use crate::grid::tests::random_band_limited;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    #[test]
    fn flat_lichnerowicz_is_minus_bilaplacian() {
        let g = grid(8);
        let st = standard_structure(g);
        let f = ScalarField::from_fn(g, |x| (x[0] + 2.0 * x[2]).sin() + 0.5 * x[1].cos());
        let expect = ScalarField::from_fn(g, |x| -25.0 * (x[0] + 2.0 * x[2]).sin() - 0.5 * x[1].cos());
        let l = lichnerowicz(&f, &st);
        assert!(l.zip_map(&expect, |a, b| a - b).max_abs() < 1e-11);
        assert_eq!(lichnerowicz(&ScalarField::zeros(g), &st).max_abs(), 0.0);
    }

    #[test]
    fn symbol_is_tabulated_bilaplacian() {
        let g = grid(8);
        let sym = LichnerowiczSymbol::flat(g);
        let sp = g.spectral();
        sp.for_each_mode(|idx, k, nyquist| {
            if !nyquist {
                let k2: f64 = k.iter().map(|v| v * v).sum();
                assert!((sym.values()[idx] + k2 * k2).abs() < 1e-9 * (1.0 + k2 * k2));
            }
        });
        let f = random_band_limited(g, 2, 3);
        let f = f.map(|v| v - f.mean());
        let back = sym.invert(lichnerowicz(&f, &standard_structure(g)).values());
        let err = back.iter().zip(f.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn lichnerowicz_is_self_adjoint_on_bump() {
        let st = crate::structures::DeformationPath::bump(crate::structures::default_bump(), 1.0)
            .unwrap()
            .evaluate(grid(8), 0.3)
            .unwrap();
        let g = st.grid();
        let a = random_band_limited(g, 11, 2);
        let b = random_band_limited(g, 12, 2);
        let vol = st.metric().volume_density();
        let lhs = (&lichnerowicz(&a, &st) * &vol).dot(&b);
        let rhs = (&lichnerowicz(&b, &st) * &vol).dot(&a);
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} {rhs}");
        // nonpositive
        assert!((&lichnerowicz(&a, &st) * &vol).dot(&a) < 0.0);
    }

    #[test]
    fn linearization_matches_residual_derivative() {
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
        assert!(e4 < e3);
        let ratio = e3 / e4;
        assert!((5.0..=20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn flat_crosscheck_vanishes() {
        let g = grid(8);
        let ctx = kernel_detect(&standard_structure(g), 1e-8).unwrap();
        let s = build_state(0.0, &ScalarField::zeros(g), &ctx).unwrap();
        let rep = system_crosscheck(&s, &ctx).unwrap();
        assert!(rep.conformal_equation < 1e-14 && rep.volume_equation < 1e-14);
    }
}
