//! Differential forms on the 4-torus.
//!
//! A form of rank `p` stores one [`ScalarField`] per basis element in a fixed
//! order:
//!
//! * rank 1: `dx1, dx2, dx3, dx4`
//! * rank 2: `dx12, dx13, dx14, dx23, dx24, dx34`
//! * rank 3: `dx234, dx134, dx124, dx123`
//! * rank 4: `dx1234`
//!
//! Coefficients are always stored with lower indices; raising happens inside
//! the Hodge star and the pointwise inner products.

use nalgebra::{Matrix3, Matrix4};

use crate::error::{Error, Result};
use crate::grid::{Complex64, GridSpec, PointData, ScalarField};
use crate::structures::EndomorphismField;

/// Basis elements per rank as bitmasks (bit `a` ↔ `dx_{a+1}`).
const BASIS: [&[u8]; 5] = [
    &[0b0000],
    &[0b0001, 0b0010, 0b0100, 0b1000],
    &[0b0011, 0b0101, 0b1001, 0b0110, 0b1010, 0b1100],
    &[0b1110, 0b1101, 0b1011, 0b0111],
    &[0b1111],
];

/// Standard symplectic form in rank-2 component order.
pub const OMEGA: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0];

pub fn basis_len(rank: usize) -> usize {
    BASIS.get(rank).map_or(0, |b| b.len())
}

pub fn basis_mask(rank: usize, index: usize) -> u8 {
    BASIS[rank][index]
}

fn index_of(mask: u8) -> usize {
    let rank = mask.count_ones() as usize;
    BASIS[rank].iter().position(|&m| m == mask).expect("valid mask")
}

fn axes(mask: u8) -> impl Iterator<Item = usize> {
    (0..4).filter(move |a| mask & (1 << a) != 0)
}

/// Sign of `dx^I ∧ dx^J` relative to the sorted basis element (`0` if they overlap).
pub fn wedge_sign(i: u8, j: u8) -> f64 {
    if i & j != 0 {
        return 0.0;
    }
    let inversions: u32 = axes(i).map(|a| axes(j).filter(|&b| b < a).count() as u32).sum();
    if inversions.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Converts rank-2 components to the antisymmetric coefficient matrix `ψ_ab`.
pub fn two_form_matrix(c: &[f64]) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for (k, &mask) in BASIS[2].iter().enumerate() {
        let mut it = axes(mask);
        let (a, b) = (it.next().unwrap(), it.next().unwrap());
        m[(a, b)] = c[k];
        m[(b, a)] = -c[k];
    }
    m
}

/// Reads rank-2 components off an antisymmetric matrix.
pub fn matrix_two_form(m: &Matrix4<f64>) -> [f64; 6] {
    let mut c = [0.0; 6];
    for (k, &mask) in BASIS[2].iter().enumerate() {
        let mut it = axes(mask);
        let (a, b) = (it.next().unwrap(), it.next().unwrap());
        c[k] = 0.5 * (m[(a, b)] - m[(b, a)]);
    }
    c
}

/// A differential form of rank 0..=4.
#[derive(Debug, Clone, PartialEq)]
pub struct Form {
    rank: usize,
    comps: Vec<ScalarField>,
}

impl Form {
    pub fn zeros(grid: GridSpec, rank: usize) -> Self {
        assert!(rank <= 4, "rank {rank} > 4");
        Form { rank, comps: vec![ScalarField::zeros(grid); basis_len(rank)] }
    }

    /// Form with constant coefficients.
    pub fn constant(grid: GridSpec, rank: usize, coeffs: &[f64]) -> Self {
        assert_eq!(coeffs.len(), basis_len(rank));
        Form { rank, comps: coeffs.iter().map(|&c| ScalarField::constant(grid, c)).collect() }
    }

    /// The standard symplectic form `dx1∧dx2 + dx3∧dx4`.
    pub fn omega(grid: GridSpec) -> Self {
        Form::constant(grid, 2, &OMEGA)
    }

    pub fn from_components(rank: usize, comps: Vec<ScalarField>) -> Result<Self> {
        if rank > 4 || comps.len() != basis_len(rank) {
            return Err(Error::RankError(format!(
                "rank {rank} needs {} components, got {}",
                basis_len(rank),
                comps.len()
            )));
        }
        let grid = comps[0].grid();
        if comps.iter().any(|c| c.grid() != grid) {
            return Err(Error::InvalidField("components on different grids".into()));
        }
        Ok(Form { rank, comps })
    }

    pub fn scalar(f: ScalarField) -> Self {
        Form { rank: 0, comps: vec![f] }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn grid(&self) -> GridSpec {
        self.comps[0].grid()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.comps[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut ScalarField {
        &mut self.comps[i]
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.comps
    }

    /// Components at one grid point.
    pub fn at(&self, i: usize) -> Vec<f64> {
        self.comps.iter().map(|c| c.values()[i]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }

    pub fn scale(&self, s: f64) -> Form {
        Form { rank: self.rank, comps: self.comps.iter().map(|c| c * s).collect() }
    }

    pub fn axpy(&mut self, a: f64, x: &Form) {
        assert_eq!(self.rank, x.rank);
        self.comps.iter_mut().zip(&x.comps).for_each(|(s, v)| s.axpy(a, v));
    }

    pub fn add(&self, other: &Form) -> Form {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Form) -> Form {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Multiplies every component by a function.
    pub fn mul_scalar(&self, f: &ScalarField) -> Form {
        Form { rank: self.rank, comps: self.comps.iter().map(|c| c * f).collect() }
    }

    /// Builds a form of the given rank pointwise: `f(point, &in_components, &mut out)`.
    pub(crate) fn pointwise(
        grid: GridSpec,
        rank: usize,
        inputs: &[&Form],
        mut f: impl FnMut(usize, &[Vec<f64>], &mut [f64]),
    ) -> Form {
        let len = grid.len();
        let k = basis_len(rank);
        let mut out = vec![vec![0.0; len]; k];
        let mut buf = vec![0.0; k];
        let mut ins: Vec<Vec<f64>> = inputs.iter().map(|f| vec![0.0; f.comps.len()]).collect();
        for i in 0..len {
            for (slot, form) in ins.iter_mut().zip(inputs) {
                for (s, c) in slot.iter_mut().zip(&form.comps) {
                    *s = c.values()[i];
                }
            }
            f(i, &ins, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                o[i] = *b;
            }
        }
        Form { rank, comps: out.into_iter().map(|v| ScalarField::from_raw(grid, v)).collect() }
    }
}

/// Pointwise metric data on forms of ranks 1..=3: `M^{IJ}` are the minors of
/// `g^{-1}` on the basis index sets.
#[derive(Debug, Clone, Copy)]
struct FormMetrics {
    m1: [f64; 16],
    m2: [f64; 36],
    m3: [f64; 16],
}

impl FormMetrics {
    fn new(ginv: &Matrix4<f64>) -> Self {
        let mut m1 = [0.0; 16];
        let mut m2 = [0.0; 36];
        let mut m3 = [0.0; 16];
        for a in 0..4 {
            for b in 0..4 {
                m1[a * 4 + b] = ginv[(a, b)];
            }
        }
        for (i, &mi) in BASIS[2].iter().enumerate() {
            let ri: Vec<usize> = axes(mi).collect();
            for (j, &mj) in BASIS[2].iter().enumerate() {
                let cj: Vec<usize> = axes(mj).collect();
                m2[i * 6 + j] = ginv[(ri[0], cj[0])] * ginv[(ri[1], cj[1])]
                    - ginv[(ri[0], cj[1])] * ginv[(ri[1], cj[0])];
            }
        }
        for (i, &mi) in BASIS[3].iter().enumerate() {
            let ri: Vec<usize> = axes(mi).collect();
            for (j, &mj) in BASIS[3].iter().enumerate() {
                let cj: Vec<usize> = axes(mj).collect();
                let sub = Matrix3::from_fn(|r, c| ginv[(ri[r], cj[c])]);
                m3[i * 4 + j] = sub.determinant();
            }
        }
        FormMetrics { m1, m2, m3 }
    }

    fn matrix(&self, rank: usize) -> &[f64] {
        match rank {
            1 => &self.m1,
            2 => &self.m2,
            3 => &self.m3,
            _ => unreachable!(),
        }
    }
}

/// Symmetric positive definite metric `g_ab` with cached inverse and volume factor.
#[derive(Debug, Clone)]
pub struct MetricField {
    grid: GridSpec,
    g: PointData<Matrix4<f64>>,
    inv: PointData<Matrix4<f64>>,
    sqrt_det: PointData<f64>,
    forms: PointData<FormMetrics>,
}

/// Leading principal minors of a 4×4 matrix.
pub fn leading_minors(m: &Matrix4<f64>) -> [f64; 4] {
    [
        m[(0, 0)],
        m.fixed_view::<2, 2>(0, 0).determinant(),
        m.fixed_view::<3, 3>(0, 0).determinant(),
        m.determinant(),
    ]
}

/// Upper-triangle component order used for the 10 metric fields.
pub const METRIC_PAIRS: [(usize, usize); 10] =
    [(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3)];

impl MetricField {
    pub fn flat(grid: GridSpec) -> Self {
        Self::from_matrices(grid, PointData::Uniform(Matrix4::identity())).expect("identity is a metric")
    }

    /// Validates symmetry and positivity (`margin` on leading minors).
    pub fn from_matrices_with_margin(
        grid: GridSpec,
        g: PointData<Matrix4<f64>>,
        margin: f64,
    ) -> Result<Self> {
        let check = |m: &Matrix4<f64>| -> Result<(Matrix4<f64>, f64, FormMetrics)> {
            let asym = (m - m.transpose()).abs().max();
            if !(asym <= 1e-10 * m.abs().max().max(1.0)) {
                return Err(Error::MetricError(format!("not symmetric (defect {asym:e})")));
            }
            let minors = leading_minors(m);
            if let Some(k) = minors.iter().position(|&d| !(d > margin)) {
                return Err(Error::MetricError(format!(
                    "leading minor {} = {:e} not positive",
                    k + 1,
                    minors[k]
                )));
            }
            let inv = m.try_inverse().ok_or_else(|| Error::MetricError("singular".into()))?;
            let inv = 0.5 * (inv + inv.transpose());
            Ok((inv, minors[3].sqrt(), FormMetrics::new(&inv)))
        };
        let data = g.try_map(check)?;
        Ok(MetricField {
            grid,
            inv: data.map(|d| d.0),
            sqrt_det: data.map(|d| d.1),
            forms: data.map(|d| d.2),
            g,
        })
    }

    pub fn from_matrices(grid: GridSpec, g: PointData<Matrix4<f64>>) -> Result<Self> {
        Self::from_matrices_with_margin(grid, g, 0.0)
    }

    /// Builds a metric from its 10 upper-triangle component fields
    /// (order `11,12,13,14,22,23,24,33,34,44`).
    pub fn from_components(comps: &[ScalarField]) -> Result<Self> {
        if comps.len() != 10 {
            return Err(Error::MetricError(format!("expected 10 components, got {}", comps.len())));
        }
        let grid = comps[0].grid();
        let mats = (0..grid.len())
            .map(|i| {
                let mut m = Matrix4::zeros();
                for (k, &(a, b)) in METRIC_PAIRS.iter().enumerate() {
                    m[(a, b)] = comps[k].values()[i];
                    m[(b, a)] = comps[k].values()[i];
                }
                m
            })
            .collect();
        Self::from_matrices(grid, PointData::Field(mats))
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn is_uniform(&self) -> bool {
        self.g.is_uniform()
    }

    pub fn matrices(&self) -> &PointData<Matrix4<f64>> {
        &self.g
    }

    #[inline]
    pub fn matrix(&self, i: usize) -> &Matrix4<f64> {
        self.g.at(i)
    }

    #[inline]
    pub fn inverse(&self, i: usize) -> &Matrix4<f64> {
        self.inv.at(i)
    }

    #[inline]
    pub fn sqrt_det(&self, i: usize) -> f64 {
        *self.sqrt_det.at(i)
    }

    /// Field of `g_ab`.
    pub fn component(&self, a: usize, b: usize) -> ScalarField {
        let grid = self.grid;
        ScalarField::from_raw(grid, (0..grid.len()).map(|i| self.g.at(i)[(a, b)]).collect())
    }

    /// Field of `g^ab`.
    pub fn inverse_component(&self, a: usize, b: usize) -> ScalarField {
        let grid = self.grid;
        ScalarField::from_raw(grid, (0..grid.len()).map(|i| self.inv.at(i)[(a, b)]).collect())
    }

    /// Riemannian volume density `√det g`.
    pub fn volume_density(&self) -> ScalarField {
        let grid = self.grid;
        ScalarField::from_raw(grid, (0..grid.len()).map(|i| self.sqrt_det(i)).collect())
    }

    /// Pointwise inner product matrix on rank-`p` forms (`p` = 1..=3).
    #[inline]
    pub fn form_metric(&self, rank: usize, i: usize) -> &[f64] {
        self.forms.at(i).matrix(rank)
    }

    /// Pointwise `g(a, b)` for components of equal rank.
    #[inline]
    pub fn inner_at(&self, rank: usize, i: usize, a: &[f64], b: &[f64]) -> f64 {
        match rank {
            0 => a[0] * b[0],
            4 => a[0] * b[0] / (self.sqrt_det(i) * self.sqrt_det(i)),
            _ => {
                let m = self.form_metric(rank, i);
                let k = a.len();
                let mut s = 0.0;
                for r in 0..k {
                    let mut row = 0.0;
                    for c in 0..k {
                        row += m[r * k + c] * b[c];
                    }
                    s += a[r] * row;
                }
                s
            }
        }
    }

    /// Pointwise Hodge star of rank-`p` components into `out`.
    #[inline]
    pub fn star_at(&self, rank: usize, i: usize, a: &[f64], out: &mut [f64]) {
        let sd = self.sqrt_det(i);
        match rank {
            0 => out[0] = sd * a[0],
            4 => out[0] = a[0] / sd,
            _ => {
                let m = self.form_metric(rank, i);
                let k = a.len();
                for (r, &mask) in BASIS[rank].iter().enumerate() {
                    let mut raised = 0.0;
                    for c in 0..k {
                        raised += m[r * k + c] * a[c];
                    }
                    let comp = 0b1111 ^ mask;
                    out[index_of(comp)] = sd * wedge_sign(mask, comp) * raised;
                }
            }
        }
    }
}

/// Exterior derivative via spectral differentiation.
pub fn exterior_derivative(form: &Form) -> Result<Form> {
    let p = form.rank;
    if p >= 4 {
        return Err(Error::RankError("exterior derivative of a 4-form".into()));
    }
    let grid = form.grid();
    let sp = grid.spectral();
    let hats: Vec<Option<Vec<Complex64>>> = form
        .comps
        .iter()
        .map(|c| (c.max_abs() > 0.0).then(|| sp.forward(c.values())))
        .collect();
    let comps = BASIS[p + 1]
        .iter()
        .map(|&out| {
            let mut acc: Option<Vec<Complex64>> = None;
            for a in axes(out) {
                let src = out ^ (1 << a);
                if let Some(hat) = &hats[index_of(src)] {
                    let sign = wedge_sign(1 << a, src);
                    match acc.as_mut() {
                        Some(buf) => sp.mul_ik_acc(hat, a, sign, buf, false),
                        None => {
                            let mut buf = vec![Complex64::new(0.0, 0.0); hat.len()];
                            sp.mul_ik_acc(hat, a, sign, &mut buf, true);
                            acc = Some(buf);
                        }
                    }
                }
            }
            match acc {
                Some(buf) => ScalarField::from_raw(grid, sp.inverse(buf)),
                None => ScalarField::zeros(grid),
            }
        })
        .collect();
    Ok(Form { rank: p + 1, comps })
}

/// Pointwise exterior product.
pub fn wedge(a: &Form, b: &Form) -> Result<Form> {
    let (p, q) = (a.rank, b.rank);
    if p + q > 4 {
        return Err(Error::RankError(format!("wedge of ranks {p} and {q}")));
    }
    // (output index, a index, b index, sign)
    let mut terms = Vec::new();
    for (ko, &out) in BASIS[p + q].iter().enumerate() {
        for (ka, &ma) in BASIS[p].iter().enumerate() {
            if ma & out == ma {
                let mb = out ^ ma;
                terms.push((ko, ka, index_of(mb), wedge_sign(ma, mb)));
            }
        }
    }
    Ok(Form::pointwise(a.grid(), p + q, &[a, b], |_, ins, out| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(ko, ka, kb, s) in &terms {
            out[ko] += s * ins[0][ka] * ins[1][kb];
        }
    }))
}

/// Hodge star defined by `α ∧ *β = g(α, β) vol_g`.
pub fn hodge_star(form: &Form, g: &MetricField) -> Form {
    let p = form.rank;
    Form::pointwise(form.grid(), 4 - p, &[form], |i, ins, out| g.star_at(p, i, &ins[0], out))
}

/// Codifferential `δ = -*d*`.
pub fn codifferential(form: &Form, g: &MetricField) -> Result<Form> {
    if form.rank == 0 {
        return Err(Error::RankError("codifferential of a function".into()));
    }
    let d = exterior_derivative(&hodge_star(form, g))?;
    Ok(hodge_star(&d, g).scale(-1.0))
}

/// Hodge Laplacian `dδ + δd` (nonnegative).
pub fn laplacian(form: &Form, g: &MetricField) -> Form {
    let p = form.rank;
    let mut out = Form::zeros(form.grid(), p);
    if p > 0 {
        let dd = exterior_derivative(&codifferential(form, g).expect("rank > 0")).expect("rank < 4");
        out.axpy(1.0, &dd);
    }
    if p < 4 {
        let dd = codifferential(&exterior_derivative(form).expect("rank < 4"), g).expect("rank > 0");
        out.axpy(1.0, &dd);
    }
    out
}

/// Pointwise inner product `g(a, b)` as a field.
pub fn inner(a: &Form, b: &Form, g: &MetricField) -> ScalarField {
    assert_eq!(a.rank, b.rank);
    let p = a.rank;
    Form::pointwise(a.grid(), 0, &[a, b], |i, ins, out| out[0] = g.inner_at(p, i, &ins[0], &ins[1]))
        .comps
        .remove(0)
}

/// Global inner product `∫ g(a, b) vol_g`.
pub fn l2_inner(a: &Form, b: &Form, g: &MetricField) -> f64 {
    let p = a.rank;
    let grid = a.grid();
    let mut s = 0.0;
    let mut ai = vec![0.0; a.comps.len()];
    let mut bi = vec![0.0; b.comps.len()];
    for i in 0..grid.len() {
        for (k, c) in a.comps.iter().enumerate() {
            ai[k] = c.values()[i];
        }
        for (k, c) in b.comps.iter().enumerate() {
            bi[k] = c.values()[i];
        }
        s += g.inner_at(p, i, &ai, &bi) * g.sqrt_det(i);
    }
    s * grid.cell_volume()
}

pub fn l2_norm(a: &Form, g: &MetricField) -> f64 {
    l2_inner(a, a, g).max(0.0).sqrt()
}

/// `(Jα)_a = −α_c J^c_a`, so that `J df = −∂₂f dx1 + ∂₁f dx2 − ∂₄f dx3 + ∂₃f dx4` for `J₀`.
pub fn j_one_form(alpha: &Form, j: &EndomorphismField) -> Form {
    assert_eq!(alpha.rank, 1);
    Form::pointwise(alpha.grid(), 1, &[alpha], |i, ins, out| {
        let m = j.at(i);
        for a in 0..4 {
            out[a] = -(0..4).map(|c| ins[0][c] * m[(c, a)]).sum::<f64>();
        }
    })
}

/// `d J d f`.
pub fn d_j_d(f: &ScalarField, j: &EndomorphismField) -> Form {
    let df = exterior_derivative(&Form::scalar(f.clone())).expect("rank 0");
    exterior_derivative(&j_one_form(&df, j)).expect("rank 1")
}

/// `J`-invariant and `J`-anti-invariant parts `ψ^{J,±}(·,·) = ½(ψ(·,·) ± ψ(J·,J·))`.
pub fn j_split(psi: &Form, j: &EndomorphismField) -> Result<(Form, Form)> {
    if psi.rank != 2 {
        return Err(Error::RankError(format!("j_split needs a 2-form, got rank {}", psi.rank)));
    }
    j.check_almost_complex(1e-10)?;
    Ok(j_split_unchecked(psi, j))
}

pub(crate) fn j_split_unchecked(psi: &Form, j: &EndomorphismField) -> (Form, Form) {
    let grid = psi.grid();
    let plus = Form::pointwise(grid, 2, &[psi], |i, ins, out| {
        let jm = j.at(i);
        let m = two_form_matrix(&ins[0]);
        let rot = jm.transpose() * m * jm;
        let r = matrix_two_form(&rot);
        for k in 0..6 {
            out[k] = 0.5 * (ins[0][k] + r[k]);
        }
    });
    let minus = psi.sub(&plus);
    (plus, minus)
}

/// `ψ = λ ω + ψ₀` with `ψ₀` pointwise orthogonal to `ω`, `λ = g(ψ, ω)/2`.
pub fn primitive_split(psi: &Form, g: &MetricField) -> Result<(ScalarField, Form)> {
    primitive_split_with(psi, g, &Form::omega(psi.grid()))
}

/// [`primitive_split`] against an arbitrary nondegenerate 2-form with `g(σ, σ) = 2`.
pub fn primitive_split_with(psi: &Form, g: &MetricField, sigma: &Form) -> Result<(ScalarField, Form)> {
    if psi.rank != 2 || sigma.rank != 2 {
        return Err(Error::RankError("primitive_split needs 2-forms".into()));
    }
    let lambda = inner(psi, sigma, g).map(|v| 0.5 * v);
    let prim = psi.sub(&sigma.mul_scalar(&lambda));
    Ok((lambda, prim))
}
