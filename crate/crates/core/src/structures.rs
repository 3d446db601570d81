//! Compatible almost-complex structures on `(T⁴, ω)` and deformation paths.
//!
//! Endomorphisms are stored as matrices whose column `b` is `J e_b`, i.e.
//! entry `(a, b)` is `J^a_b`. The induced metric is `g = Ω J` where `Ω` is
//! the coefficient matrix of the standard symplectic form.

use std::path::Path;

use nalgebra::{Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{two_form_matrix, Form, MetricField};
use crate::grid::{GridSpec, PointData, ScalarField};
use crate::io::{FieldFile, TENSOR_TAG};

/// Coefficient matrix of `ω = dx12 + dx34`: `ω(X, Y) = Xᵀ Ω Y`.
pub fn omega_matrix() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, -1.0, 0.0,
    )
}

/// `J₀ e1 = e2, J₀ e3 = e4`.
pub fn standard_j_matrix() -> Matrix4<f64> {
    Matrix4::new(
        0.0, -1.0, 0.0, 0.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, -1.0, //
        0.0, 0.0, 1.0, 0.0,
    )
}

/// A pointwise field of 4×4 endomorphisms.
#[derive(Debug, Clone)]
pub struct EndomorphismField {
    grid: GridSpec,
    data: PointData<Matrix4<f64>>,
}

impl EndomorphismField {
    pub fn new(grid: GridSpec, data: PointData<Matrix4<f64>>) -> Self {
        EndomorphismField { grid, data }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn data(&self) -> &PointData<Matrix4<f64>> {
        &self.data
    }

    #[inline]
    pub fn at(&self, i: usize) -> &Matrix4<f64> {
        self.data.at(i)
    }

    pub fn is_uniform(&self) -> bool {
        self.data.is_uniform()
    }

    /// The 16 entry fields in row-major order (`J^1_1, J^1_2, …`).
    pub fn components(&self) -> Vec<ScalarField> {
        (0..16).map(|k| self.entry(k / 4, k % 4)).collect()
    }

    pub fn entry(&self, a: usize, b: usize) -> ScalarField {
        let g = self.grid;
        ScalarField::from_raw(g, (0..g.len()).map(|i| self.at(i)[(a, b)]).collect())
    }

    pub fn from_components(comps: &[ScalarField]) -> Result<Self> {
        if comps.len() != 16 {
            return Err(Error::StructureError(format!("expected 16 components, got {}", comps.len())));
        }
        let grid = comps[0].grid();
        let data = (0..grid.len())
            .map(|i| Matrix4::from_fn(|a, b| comps[a * 4 + b].values()[i]))
            .collect();
        Ok(EndomorphismField { grid, data: PointData::Field(data) })
    }

    /// `‖J² + Id‖_∞ ≤ tol`.
    pub fn check_almost_complex(&self, tol: f64) -> Result<()> {
        let defect = self.max_over(|m| (m * m + Matrix4::identity()).abs().max());
        if !(defect <= tol) {
            return Err(Error::StructureError(format!("J² + Id has size {defect:e}")));
        }
        Ok(())
    }

    fn max_over(&self, f: impl Fn(&Matrix4<f64>) -> f64) -> f64 {
        match &self.data {
            PointData::Uniform(m) => f(m),
            PointData::Field(v) => v.iter().map(f).fold(0.0, f64::max),
        }
    }

    /// Spectral derivatives of every entry, one field per axis.
    pub fn derivatives(&self) -> [PointData<Matrix4<f64>>; 4] {
        matrix_field_derivatives(self.grid, &self.data)
    }
}

/// `∂_a M` for a pointwise matrix field, `a = 0..4`.
pub(crate) fn matrix_field_derivatives(
    grid: GridSpec,
    data: &PointData<Matrix4<f64>>,
) -> [PointData<Matrix4<f64>>; 4] {
    if data.is_uniform() {
        return std::array::from_fn(|_| PointData::Uniform(Matrix4::zeros()));
    }
    let len = grid.len();
    let mut out: [Vec<Matrix4<f64>>; 4] = std::array::from_fn(|_| vec![Matrix4::zeros(); len]);
    for a in 0..4 {
        for b in 0..4 {
            let field = ScalarField::from_raw(grid, (0..len).map(|i| data.at(i)[(a, b)]).collect());
            if field.max_abs() == 0.0 {
                continue;
            }
            for (axis, d) in field.gradient().iter().enumerate() {
                for (m, v) in out[axis].iter_mut().zip(d.values()) {
                    m[(a, b)] = *v;
                }
            }
        }
    }
    out.map(PointData::Field)
}

/// `(J, g)` with `J² = −Id`, `ω(J·, J·) = ω` and `g = ω(·, J·)` positive definite.
#[derive(Debug, Clone)]
pub struct CompatibleStructure {
    j: EndomorphismField,
    g: MetricField,
}

pub const STRUCTURE_TOL: f64 = 1e-10;

impl CompatibleStructure {
    /// Validates `J` and builds its induced metric.
    pub fn from_j(j: EndomorphismField) -> Result<Self> {
        j.check_almost_complex(STRUCTURE_TOL)?;
        let om = omega_matrix();
        let defect = j.max_over(|m| (m.transpose() * om * m - om).abs().max());
        if !(defect <= STRUCTURE_TOL) {
            return Err(Error::StructureError(format!("J does not preserve ω (defect {defect:e})")));
        }
        let g = metric_from(&j)?;
        Ok(CompatibleStructure { j, g })
    }

    pub fn grid(&self) -> GridSpec {
        self.j.grid
    }

    pub fn j(&self) -> &EndomorphismField {
        &self.j
    }

    pub fn metric(&self) -> &MetricField {
        &self.g
    }

    pub fn is_uniform(&self) -> bool {
        self.j.is_uniform()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        FieldFile { grid: self.grid(), rank_tag: TENSOR_TAG, components: self.j.components() }.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = FieldFile::load(path)?;
        if file.rank_tag != TENSOR_TAG || file.components.len() != 16 {
            return Err(Error::Format("structure files hold 16 tensor components".into()));
        }
        Self::from_j(EndomorphismField::from_components(&file.components)?)
    }
}

/// `g(X, Y) = ω(X, JY)`, symmetrized and validated.
pub fn metric_from(j: &EndomorphismField) -> Result<MetricField> {
    let om = omega_matrix();
    let g = j.data.map(|m| {
        let g = om * m;
        0.5 * (g + g.transpose())
    });
    let asym = j.max_over(|m| {
        let g = om * m;
        (g - g.transpose()).abs().max()
    });
    if !(asym <= STRUCTURE_TOL) {
        return Err(Error::StructureError(format!("ω(·, J·) not symmetric ({asym:e})")));
    }
    MetricField::from_matrices(j.grid, g).map_err(|e| Error::StructureError(format!("induced metric: {e}")))
}

/// Symmetric part of `σ(·, J·)` for a 2-form `σ`, checked positive with `margin`.
pub fn metric_from_form(sigma: &Form, j: &EndomorphismField, margin: f64) -> Result<MetricField> {
    let grid = sigma.grid();
    let mats = (0..grid.len())
        .map(|i| {
            let g = two_form_matrix(&sigma.at(i)) * j.at(i);
            0.5 * (g + g.transpose())
        })
        .collect();
    MetricField::from_matrices_with_margin(grid, PointData::Field(mats), margin)
}

/// The flat Kähler structure `(J₀, Id)`.
pub fn standard_structure(grid: GridSpec) -> CompatibleStructure {
    CompatibleStructure::from_j(EndomorphismField::new(grid, PointData::Uniform(standard_j_matrix())))
        .expect("J₀ is compatible")
}

const CONDITION_LIMIT: f64 = 1e12;

fn sym_power(m: &Matrix4<f64>, p: f64) -> Result<(Matrix4<f64>, f64)> {
    let eig = SymmetricEigen::new(0.5 * (m + m.transpose()));
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let d = eig.eigenvalues.map(|v| v.max(0.0).powf(p));
    let q = &eig.eigenvectors;
    Ok((q * Matrix4::from_diagonal(&d) * q.transpose(), cond))
}

/// Pointwise polar retraction of a metric onto `ω`-compatible structures.
fn polar_point(h: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let (l, _) = sym_power(h, 0.5)?;
    let (linv, _) = sym_power(h, -0.5)?;
    let om = omega_matrix();
    // A = -h⁻¹Ω conjugated by h^{1/2} is skew.
    let b = -(linv * om * linv);
    let b = 0.5 * (b - b.transpose());
    let (inv_root, cond) = sym_power(&(b.transpose() * b), -0.5)?;
    if !(cond <= CONDITION_LIMIT) {
        return Err(Error::DegenerateStructure(format!("−A² has condition number {cond:e}")));
    }
    Ok(linv * b * inv_root * l)
}

/// Retracts a positive definite metric field to the compatible structure
/// `J = A(−A²)^{−1/2}` with `ω(X, Y) = h(AX, Y)`.
pub fn polar_compatible(h: &MetricField) -> Result<CompatibleStructure> {
    let data = h.matrices().try_map(polar_point)?;
    CompatibleStructure::from_j(EndomorphismField::new(h.grid(), data))
}

/// One product term `amp · Π factor(k · x_axis)` of a spatially varying matrix entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpTerm {
    /// 1-based matrix position; the term is mirrored to keep `S` symmetric.
    pub entry: [usize; 2],
    pub amp: f64,
    #[serde(default)]
    pub factors: Vec<BumpFactor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    Sin,
    Cos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpFactor {
    #[serde(rename = "fn")]
    pub func: Trig,
    /// 1-based axis.
    pub axis: usize,
    pub k: i32,
}

impl BumpTerm {
    fn eval(&self, x: [f64; 4]) -> f64 {
        self.factors.iter().fold(self.amp, |acc, f| {
            let arg = f.k as f64 * x[f.axis - 1];
            acc * match f.func {
                Trig::Sin => arg.sin(),
                Trig::Cos => arg.cos(),
            }
        })
    }

    fn validate(&self) -> Result<()> {
        let [i, j] = self.entry;
        if !(1..=4).contains(&i) || !(1..=4).contains(&j) {
            return Err(Error::Config(format!("bump entry {:?} out of range", self.entry)));
        }
        if self.factors.iter().any(|f| !(1..=4).contains(&f.axis)) {
            return Err(Error::Config("bump factor axis must be in 1..=4".into()));
        }
        Ok(())
    }
}

/// `0.3 sin(x3) (e1⊗e1 − e2⊗e2)`: non-integrable, but its hermitian Ricci form vanishes.
pub fn planar_bump() -> Vec<BumpTerm> {
    let f = vec![BumpFactor { func: Trig::Sin, axis: 3, k: 1 }];
    vec![
        BumpTerm { entry: [1, 1], amp: 0.3, factors: f.clone() },
        BumpTerm { entry: [2, 2], amp: -0.3, factors: f },
    ]
}

/// The documented non-integrable path:
/// `S = 0.3 sin(x3) (e1⊗e1 − e2⊗e2) + 0.3 sin(x2) (e1⊗e3 + e3⊗e1)`.
pub fn default_bump() -> Vec<BumpTerm> {
    let mut terms = planar_bump();
    terms.push(BumpTerm {
        entry: [1, 3],
        amp: 0.3,
        factors: vec![BumpFactor { func: Trig::Sin, axis: 2, k: 1 }],
    });
    terms
}

/// A family `t ↦ J_t` with `J_0 = J₀`, built by retracting metrics `h_t`.
#[derive(Debug, Clone)]
pub enum DeformationPath {
    /// `h_t = Id + tS` with constant symmetric `S`.
    ConstantLinear { s: Matrix4<f64>, t_max: f64 },
    /// `h_t = Id + tS(x)` with `S` given by trigonometric terms.
    Bump { terms: Vec<BumpTerm>, t_max: f64 },
    /// `h_t = (1 − t/t_max) Id + (t/t_max) g₁` for a stored structure `J₁`.
    Interpolate { target: Box<CompatibleStructure>, t_max: f64 },
}

impl DeformationPath {
    pub fn constant_linear(s: Matrix4<f64>, t_max: f64) -> Result<Self> {
        if (s - s.transpose()).abs().max() > 1e-14 {
            return Err(Error::Config("path.S must be symmetric".into()));
        }
        Ok(DeformationPath::ConstantLinear { s, t_max })
    }

    pub fn bump(terms: Vec<BumpTerm>, t_max: f64) -> Result<Self> {
        terms.iter().try_for_each(BumpTerm::validate)?;
        Ok(DeformationPath::Bump { terms, t_max })
    }

    pub fn user_file(path: impl AsRef<Path>, t_max: f64) -> Result<Self> {
        Ok(DeformationPath::Interpolate { target: Box::new(CompatibleStructure::load(path)?), t_max })
    }

    pub fn t_max(&self) -> f64 {
        match self {
            DeformationPath::ConstantLinear { t_max, .. }
            | DeformationPath::Bump { t_max, .. }
            | DeformationPath::Interpolate { t_max, .. } => *t_max,
        }
    }

    /// Metric `h_t` fed to the retraction.
    pub fn metric_at(&self, grid: GridSpec, t: f64) -> Result<MetricField> {
        let t_max = self.t_max();
        if !(t.abs() <= t_max * (1.0 + 1e-12)) {
            return Err(Error::PathRangeError(format!("|t| = {} exceeds t_max = {t_max}", t.abs())));
        }
        let id = Matrix4::identity();
        let h = match self {
            DeformationPath::ConstantLinear { s, .. } => PointData::Uniform(id + s * t),
            DeformationPath::Bump { terms, .. } => PointData::Field(
                (0..grid.len())
                    .map(|i| {
                        let x = grid.point(i);
                        let mut m = id;
                        for term in terms {
                            let v = t * term.eval(x);
                            let (a, b) = (term.entry[0] - 1, term.entry[1] - 1);
                            m[(a, b)] += v;
                            if a != b {
                                m[(b, a)] += v;
                            }
                        }
                        m
                    })
                    .collect(),
            ),
            DeformationPath::Interpolate { target, .. } => {
                if target.grid() != grid {
                    return Err(Error::Config("path file grid differs from grid.n".into()));
                }
                let s = t / t_max;
                target.metric().matrices().map(|g1| id * (1.0 - s) + g1 * s)
            }
        };
        MetricField::from_matrices(grid, h)
            .map_err(|e| Error::PathRangeError(format!("h_t not positive definite at t = {t}: {e}")))
    }

    pub fn evaluate(&self, grid: GridSpec, t: f64) -> Result<CompatibleStructure> {
        polar_compatible(&self.metric_at(grid, t)?)
    }
}

/// `sup |N_J|` over coordinate frames, `N(X,Y) = [JX,JY] − J[JX,Y] − J[X,JY] − [X,Y]`.
pub fn nijenhuis_norm(st: &CompatibleStructure) -> f64 {
    let j = st.j();
    if j.is_uniform() {
        return 0.0;
    }
    let dj = j.derivatives();
    let mut worst = 0.0f64;
    for i in 0..st.grid().len() {
        let jm = j.at(i);
        for b in 0..4 {
            for c in (b + 1)..4 {
                for a in 0..4 {
                    let mut v = 0.0;
                    for d in 0..4 {
                        v += jm[(d, b)] * dj[d].at(i)[(a, c)] - jm[(d, c)] * dj[d].at(i)[(a, b)]
                            + jm[(a, d)] * (dj[c].at(i)[(d, b)] - dj[b].at(i)[(d, c)]);
                    }
                    worst = worst.max(v.abs());
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::new(8).unwrap()
    }

    fn assert_compatible(st: &CompatibleStructure) {
        let om = omega_matrix();
        for i in 0..st.grid().len() {
            let j = st.j().at(i);
            assert!((j * j + Matrix4::identity()).abs().max() <= 1e-10);
            assert!((j.transpose() * om * j - om).abs().max() <= 1e-10);
        }
    }

    #[test]
    fn standard_structure_is_flat() {
        let st = standard_structure(grid());
        assert_eq!(*st.metric().matrix(0), Matrix4::identity());
        assert_eq!(nijenhuis_norm(&st), 0.0);
    }

    #[test]
    fn polar_fixed_points() {
        for c in [1.0, 2.5, 0.3] {
            let h = MetricField::from_matrices(grid(), PointData::Uniform(Matrix4::identity() * c)).unwrap();
            let st = polar_compatible(&h).unwrap();
            assert!((st.j().at(0) - standard_j_matrix()).abs().max() < 1e-14);
        }
    }

    #[test]
    fn polar_recovers_compatible_structure() {
        let path = DeformationPath::bump(default_bump(), 1.0).unwrap();
        let st = path.evaluate(grid(), 0.5).unwrap();
        let again = polar_compatible(st.metric()).unwrap();
        for i in 0..grid().len() {
            assert!((again.j().at(i) - st.j().at(i)).abs().max() < 1e-10);
        }
    }

    #[test]
    fn polar_rejects_indefinite() {
        let h = MetricField::from_matrices(grid(), PointData::Uniform(-Matrix4::<f64>::identity()));
        assert!(matches!(h, Err(Error::MetricError(_))));
    }

    #[test]
    fn perturbed_metric_is_non_integrable() {
        let g = grid();
        let h = PointData::Field(
            (0..g.len())
                .map(|i| {
                    let s = g.point(i)[2].sin();
                    Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0 + 0.1 * s, 1.0 - 0.1 * s, 1.0, 1.0))
                })
                .collect(),
        );
        let st = polar_compatible(&MetricField::from_matrices(g, h).unwrap()).unwrap();
        assert_compatible(&st);
        assert!(nijenhuis_norm(&st) > 1e-3);
    }

    #[test]
    fn path_examples() {
        let g = grid();
        let base = standard_j_matrix();
        let s = Matrix4::new(0.3, 0.1, 0.0, 0.0, 0.1, -0.2, 0.0, 0.05, 0.0, 0.0, 0.1, 0.0, 0.0, 0.05, 0.0, 0.0);
        let lin = DeformationPath::constant_linear(s, 0.5).unwrap();
        let bump = DeformationPath::bump(default_bump(), 1.0).unwrap();
        for p in [&lin, &bump] {
            let st = p.evaluate(g, 0.0).unwrap();
            for i in 0..g.len() {
                assert!((st.j().at(i) - base).abs().max() <= 1e-12);
            }
        }
        let st = lin.evaluate(g, 0.4).unwrap();
        assert!(st.is_uniform());
        assert_compatible(&st);
        assert!(nijenhuis_norm(&st) <= 1e-10);
        let st = bump.evaluate(g, 0.5).unwrap();
        assert_compatible(&st);
        assert!(nijenhuis_norm(&st) > 1e-3);
        assert!(matches!(bump.evaluate(g, 1.5), Err(Error::PathRangeError(_))));
        let wild = DeformationPath::bump(default_bump(), 10.0).unwrap();
        assert!(matches!(wild.evaluate(g, 5.0), Err(Error::PathRangeError(_))));
    }

    #[test]
    fn structure_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let st = DeformationPath::bump(default_bump(), 1.0).unwrap().evaluate(grid(), 0.3).unwrap();
        let p = dir.path().join("j.akf4");
        st.save(&p).unwrap();
        let back = CompatibleStructure::load(&p).unwrap();
        for i in 0..grid().len() {
            assert_eq!(back.j().at(i), st.j().at(i));
        }
        let path = DeformationPath::user_file(&p, 1.0).unwrap();
        let end = path.evaluate(grid(), 1.0).unwrap();
        for i in 0..grid().len() {
            assert!((end.j().at(i) - st.j().at(i)).abs().max() < 1e-10);
        }
    }

    #[test]
    fn square_root_with_repeated_eigenvalue() {
        // decoupled block with an eigenvalue of multiplicity two
        let h = Matrix4::new(
            0.8902411738263466, 0.0, 0.15522242056493168, 0.0,
            0.0, 1.1097588261736535, 0.0, 0.0,
            0.15522242056493168, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        let (root, _) = sym_power(&h, 0.5).unwrap();
        assert!((root * root - h).abs().max() < 1e-14);
        let j = polar_point(&h).unwrap();
        assert!((j * j + Matrix4::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn bump_config_shape() {
        let json = r#"{"entry":[1,1],"amp":0.3,"factors":[{"fn":"sin","axis":3,"k":1}]}"#;
        let t: BumpTerm = serde_json::from_str(json).unwrap();
        assert_eq!(t, planar_bump()[0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn polar_is_compatible(entries in proptest::collection::vec(-0.4f64..0.4, 10)) {
            let mut s = Matrix4::identity();
            for (k, &(a, b)) in crate::forms::METRIC_PAIRS.iter().enumerate() {
                s[(a, b)] += entries[k];
                if a != b { s[(b, a)] += entries[k]; }
            }
            prop_assume!(s.symmetric_eigenvalues().min() > 0.05);
            let h = MetricField::from_matrices(grid(), PointData::Uniform(s)).unwrap();
            let st = polar_compatible(&h).unwrap();
            let j = st.j().at(0);
            prop_assert!((j * j + Matrix4::identity()).abs().max() <= 1e-10);
            let g = st.metric().matrix(0);
            prop_assert!(g.symmetric_eigenvalues().min() > 0.0);
        }

        #[test]
        fn path_is_continuous(t in 0.0f64..0.9) {
            let g = grid();
            let bump = DeformationPath::bump(default_bump(), 1.0).unwrap();
            let a = bump.evaluate(g, t).unwrap();
            let b = bump.evaluate(g, t + 1e-4).unwrap();
            let diff = (0..g.len()).map(|i| (a.j().at(i) - b.j().at(i)).abs().max()).fold(0.0, f64::max);
            prop_assert!(diff / 1e-4 < 10.0);
        }
    }
}
