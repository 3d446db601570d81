//! Levi-Civita and canonical hermitian connections, hermitian Ricci form and
//! hermitian scalar curvature.
//!
//! Connection matrices act on vectors: `(Γ_a)^c_b = Γ^c_{ab}`, so that
//! `D_a e_b = (Γ_a)^c_b e_c`. Curvature is `R_ab = ∂_aΘ_b − ∂_bΘ_a + [Θ_a, Θ_b]`.

use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::forms::{self, d_j_d, exterior_derivative, Form, MetricField};
use crate::grid::{GridSpec, PointData, ScalarField};
use crate::structures::{matrix_field_derivatives, CompatibleStructure, EndomorphismField};

type MatrixField = PointData<Matrix4<f64>>;

/// Axis pairs `(a, b)`, `a < b`, in 2-form component order.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

fn build(grid: GridSpec, uniform: bool, f: impl Fn(usize) -> Matrix4<f64>) -> MatrixField {
    if uniform {
        PointData::Uniform(f(0))
    } else {
        PointData::Field((0..grid.len()).map(f).collect())
    }
}

/// Levi-Civita connection matrices and the hermitian correction.
#[derive(Debug, Clone)]
pub struct ConnectionField {
    grid: GridSpec,
    pub gamma: [MatrixField; 4],
    pub theta: [MatrixField; 4],
}

impl ConnectionField {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// `Γ^c_{ab}` at one point.
    pub fn christoffel(&self, c: usize, a: usize, b: usize, i: usize) -> f64 {
        self.gamma[a].at(i)[(c, b)]
    }

    /// `sup |∇J|` with `∇_a J = ∂_a J + [Θ_a, J]`.
    pub fn j_defect(&self, j: &EndomorphismField) -> f64 {
        let dj = j.derivatives();
        let mut worst = 0.0f64;
        for i in 0..self.grid.len() {
            let jm = j.at(i);
            for a in 0..4 {
                let t = self.theta[a].at(i);
                worst = worst.max((dj[a].at(i) + t * jm - jm * t).abs().max());
            }
        }
        worst
    }

    /// `sup |∇g|` with `(∇_a g) = ∂_a g − Θ_aᵀ g − g Θ_a`.
    pub fn metric_defect(&self, g: &MetricField) -> f64 {
        let dg = matrix_field_derivatives(self.grid, g.matrices());
        let mut worst = 0.0f64;
        for i in 0..self.grid.len() {
            let gm = g.matrix(i);
            for a in 0..4 {
                let t = self.theta[a].at(i);
                worst = worst.max((dg[a].at(i) - t.transpose() * gm - gm * t).abs().max());
            }
        }
        worst
    }
}

/// `Γ^c_{ab} = ½ g^{cd}(∂_a g_{bd} + ∂_b g_{ad} − ∂_d g_{ab})`, as connection matrices.
pub fn christoffels(g: &MetricField) -> [MatrixField; 4] {
    let grid = g.grid();
    if g.is_uniform() {
        return std::array::from_fn(|_| PointData::Uniform(Matrix4::zeros()));
    }
    let dg = matrix_field_derivatives(grid, g.matrices());
    std::array::from_fn(|a| {
        build(grid, false, |i| {
            let ginv = g.inverse(i);
            // lowered[(d, b)] = Γ_{d a b}
            let lowered = Matrix4::from_fn(|d, b| {
                0.5 * (dg[a].at(i)[(b, d)] + dg[b].at(i)[(a, d)] - dg[d].at(i)[(a, b)])
            });
            ginv * lowered
        })
    })
}

/// Canonical hermitian connection `∇ = D − ½J(DJ)` of a pair `(J, g)`.
pub fn hermitian_connection_of(j: &EndomorphismField, g: &MetricField) -> ConnectionField {
    let grid = g.grid();
    let gamma = christoffels(g);
    let dj = j.derivatives();
    let uniform = j.is_uniform() && g.is_uniform();
    let theta = std::array::from_fn(|a| {
        build(grid, uniform, |i| {
            let jm = j.at(i);
            let ga = gamma[a].at(i);
            let dja = dj[a].at(i) + ga * jm - jm * ga;
            ga - 0.5 * jm * dja
        })
    });
    ConnectionField { grid, gamma, theta }
}

pub fn hermitian_connection(st: &CompatibleStructure) -> ConnectionField {
    hermitian_connection_of(st.j(), st.metric())
}

/// Curvature endomorphisms `R_ab` for the six pairs in [`PAIRS`].
pub fn connection_curvature(grid: GridSpec, theta: &[MatrixField; 4]) -> Vec<MatrixField> {
    let uniform = theta.iter().all(PointData::is_uniform);
    let mut r: Vec<MatrixField> = PAIRS
        .iter()
        .map(|&(a, b)| {
            build(grid, uniform, |i| {
                let (ta, tb) = (theta[a].at(i), theta[b].at(i));
                ta * tb - tb * ta
            })
        })
        .collect();
    if uniform {
        return r;
    }
    for (b, tb) in theta.iter().enumerate() {
        if tb.is_uniform() {
            continue;
        }
        let d = matrix_field_derivatives(grid, tb);
        for (k, &(p, q)) in PAIRS.iter().enumerate() {
            let (axis, sign) = if q == b {
                (p, 1.0)
            } else if p == b {
                (q, -1.0)
            } else {
                continue;
            };
            if let PointData::Field(v) = &mut r[k] {
                for (i, m) in v.iter_mut().enumerate() {
                    *m += d[axis].at(i) * sign;
                }
            }
        }
    }
    r
}

/// Curvature of the hermitian connection with its Ricci form and scalar curvature.
#[derive(Debug, Clone)]
pub struct CurvatureData {
    pub r: Vec<MatrixField>,
    pub rho: Form,
    pub s: ScalarField,
}

/// `ρ_ab = ½ tr(J R_ab)`: the complex trace of the curvature, `R_ab` being
/// complex-linear and `J` playing the role of `i`.
fn ricci_from_curvature(grid: GridSpec, j: &EndomorphismField, r: &[MatrixField]) -> Form {
    let comps = r
        .iter()
        .map(|rk| {
            ScalarField::from_raw(grid, (0..grid.len()).map(|i| 0.5 * (j.at(i) * rk.at(i)).trace()).collect())
        })
        .collect();
    Form::from_components(2, comps).expect("six components")
}

pub fn curvature_data_of(j: &EndomorphismField, g: &MetricField, symplectic: &Form) -> Result<CurvatureData> {
    let grid = g.grid();
    let conn = hermitian_connection_of(j, g);
    let r = connection_curvature(grid, &conn.theta);
    let rho = ricci_from_curvature(grid, j, &r);
    let s = trace_against(&rho, symplectic)?;
    Ok(CurvatureData { r, rho, s })
}

pub fn curvature_data(st: &CompatibleStructure) -> CurvatureData {
    curvature_data_of(st.j(), st.metric(), &Form::omega(st.grid())).expect("ω is nondegenerate")
}

/// Hermitian Ricci form of `(J, g)`.
pub fn hermitian_ricci_of(j: &EndomorphismField, g: &MetricField) -> Form {
    let grid = g.grid();
    let conn = hermitian_connection_of(j, g);
    ricci_from_curvature(grid, j, &connection_curvature(grid, &conn.theta))
}

pub fn hermitian_ricci(st: &CompatibleStructure) -> Form {
    hermitian_ricci_of(st.j(), st.metric())
}

/// `s` defined by `s σ∧σ = 4 ρ∧σ`.
pub fn trace_against(rho: &Form, symplectic: &Form) -> Result<ScalarField> {
    let top = forms::wedge(symplectic, symplectic)?;
    let worst = top.component(0).values().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(worst > 1e-12) {
        return Err(Error::SymplecticError(format!("|σ∧σ| drops to {worst:e}")));
    }
    let num = forms::wedge(rho, symplectic)?;
    Ok(num.component(0).zip_map(top.component(0), |a, b| 4.0 * a / b))
}

/// Hermitian scalar curvature of a compatible structure traced against `symplectic`.
pub fn hermitian_scalar(st: &CompatibleStructure, symplectic: &Form) -> Result<ScalarField> {
    trace_against(&hermitian_ricci(st), symplectic)
}

/// `−½ dJdF + ρ_base`.
pub fn conformal_ricci_check(j: &EndomorphismField, conformal: &ScalarField, rho_base: &Form) -> Form {
    rho_base.sub(&d_j_d(conformal, j).scale(0.5))
}

/// `∫ ρ ∧ ω`.
pub fn chern_pairing(rho: &Form) -> f64 {
    let w = forms::wedge(rho, &Form::omega(rho.grid())).expect("rank 4");
    w.component(0).integral()
}

/// `sup |dρ|`.
pub fn d_norm(rho: &Form) -> f64 {
    exterior_derivative(rho).map(|d| d.max_abs()).unwrap_or(0.0)
}

/// Riemannian scalar curvature of `g`, computed from the Levi-Civita connection.
pub fn riemannian_scalar(g: &MetricField) -> ScalarField {
    let grid = g.grid();
    let gamma = christoffels(g);
    let r = connection_curvature(grid, &gamma);
    let values = (0..grid.len())
        .map(|i| {
            // Ric_bd = R^a_{bad}; (R_cd)^a_b = R^a_{bcd}
            let ginv = g.inverse(i);
            let mut s = 0.0;
            for (k, &(c, d)) in PAIRS.iter().enumerate() {
                let m = r[k].at(i);
                for b in 0..4 {
                    // R^c_{b c d} g^{bd} and R^d_{b d c} g^{bc} = −R^d_{b c d} g^{bc}
                    s += m[(c, b)] * ginv[(b, d)] - m[(d, b)] * ginv[(b, c)];
                }
            }
            s
        })
        .collect();
    ScalarField::from_raw(grid, values)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::forms::{d_j_d, wedge};
    use crate::grid::tests::random_band_limited;
    use crate::structures::{
        default_bump, metric_from_form, standard_structure, DeformationPath,
    };

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    /// `(J₀, ω + dJ₀df)` for a small potential.
    pub(crate) fn kahler_pair(f: &ScalarField) -> (EndomorphismField, MetricField, Form) {
        let j0 = standard_structure(f.grid()).j().clone();
        let sigma = Form::omega(f.grid()).add(&d_j_d(f, &j0));
        let g = metric_from_form(&sigma, &j0, 1e-8).unwrap();
        (j0, g, sigma)
    }

    pub(crate) fn kahler_potential(g: GridSpec) -> ScalarField {
        ScalarField::from_fn(g, |x| 0.05 * (x[0].sin() * x[2].cos() + 0.5 * (x[1] + x[3]).cos()))
    }

    #[test]
    fn flat_connection_vanishes() {
        let st = standard_structure(grid(8));
        let c = hermitian_connection(&st);
        for a in 0..4 {
            assert_eq!(c.theta[a].at(0).abs().max(), 0.0);
            assert_eq!(c.gamma[a].at(0).abs().max(), 0.0);
        }
        let data = curvature_data(&st);
        assert_eq!(data.rho.max_abs(), 0.0);
        assert_eq!(data.s.max_abs(), 0.0);
    }

    #[test]
    fn conformal_christoffels() {
        let g8 = grid(16);
        let u = ScalarField::from_fn(g8, |x| 0.2 * x[0].sin() * x[3].cos() + 0.1 * x[1].cos());
        let mats = u.values().iter().map(|&v| Matrix4::identity() * (2.0 * v).exp()).collect();
        let g = MetricField::from_matrices(g8, PointData::Field(mats)).unwrap();
        let gamma = christoffels(&g);
        let du = u.gradient();
        for i in (0..g8.len()).step_by(37) {
            for a in 0..4 {
                for b in 0..4 {
                    for c in 0..4 {
                        let delta = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
                        let exact = delta(c, b) * du[a].values()[i] + delta(c, a) * du[b].values()[i]
                            - delta(a, b) * du[c].values()[i];
                        let got = gamma[a].at(i)[(c, b)];
                        assert!((got - exact).abs() < 1e-9, "{got} vs {exact}");
                        assert!((got - gamma[b].at(i)[(c, a)]).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn kahler_connection_is_levi_civita() {
        let f = kahler_potential(grid(8));
        let (j, g, _) = kahler_pair(&f);
        let c = hermitian_connection_of(&j, &g);
        for a in 0..4 {
            for i in 0..g.grid().len() {
                assert!((c.theta[a].at(i) - c.gamma[a].at(i)).abs().max() < 1e-8);
            }
        }
    }

    #[test]
    fn hermitian_connection_is_hermitian() {
        let path = DeformationPath::bump(default_bump(), 1.0).unwrap();
        let st = path.evaluate(grid(16), 0.6).unwrap();
        let c = hermitian_connection(&st);
        assert!(c.j_defect(st.j()) < 1e-8);
        assert!(c.metric_defect(st.metric()) < 1e-8);
    }

    #[test]
    fn bump_ricci_is_closed_with_zero_chern_pairing() {
        let path = DeformationPath::bump(default_bump(), 1.0).unwrap();
        let st = path.evaluate(grid(16), 0.5).unwrap();
        let data = curvature_data(&st);
        assert!(data.rho.max_abs() > 1e-3);
        assert!(d_norm(&data.rho) < 1e-6);
        assert!(chern_pairing(&data.rho).abs() < 1e-6);
        assert!(data.s.integral().abs() < 1e-6);
    }

    #[test]
    fn kahler_scalar_is_riemannian_scalar() {
        let f = kahler_potential(grid(16));
        let (j, g, sigma) = kahler_pair(&f);
        let rho = hermitian_ricci_of(&j, &g);
        let s = trace_against(&rho, &sigma).unwrap();
        let riem = riemannian_scalar(&g);
        assert!(s.max_abs() > 1e-3);
        assert!((&s - &riem).max_abs() <= 1e-6 * s.max_abs());
        // ρ = −½dJdF with e^F = σ²/ω²
        let ratio = wedge(&sigma, &sigma).unwrap().component(0).map(|v| (v / 2.0).ln());
        let oracle = conformal_ricci_check(&j, &ratio, &Form::zeros(g.grid(), 2));
        assert!(rho.sub(&oracle).max_abs() <= 1e-6 * rho.max_abs());
    }

    #[test]
    fn conformal_check_trivial_inputs() {
        let g8 = grid(8);
        let st = standard_structure(g8);
        let rho = Form::from_components(2, (0..6).map(|k| random_band_limited(g8, k, 2)).collect()).unwrap();
        assert_eq!(conformal_ricci_check(st.j(), &ScalarField::zeros(g8), &rho), rho);
        let c = conformal_ricci_check(st.j(), &ScalarField::constant(g8, 3.0), &rho);
        assert!(c.sub(&rho).max_abs() < 1e-14);
    }

    #[test]
    fn degenerate_symplectic_rejected() {
        let g8 = grid(8);
        let sigma = Form::constant(g8, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(trace_against(&Form::zeros(g8, 2), &sigma), Err(Error::SymplecticError(_))));
    }
}
