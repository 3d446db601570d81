//! Periodic 4-dimensional grid, scalar fields, spectral differentiation and
//! quadrature.

mod spectral;

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

pub use rustfft::num_complex::Complex64;
pub use spectral::Spectral;

use crate::error::{Error, Result};

/// Grid with `n` points per axis on `[0, 2π)^4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n must be even and at least 8, got {n}"
            )));
        }
        Ok(GridSpec { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(4)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Quadrature weight of one grid cell, `(2π/n)^4`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(4)
    }

    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(4)
    }

    /// Coordinates of the point with flat index `idx` (`i1` slowest).
    pub fn point(&self, idx: usize) -> [f64; 4] {
        let n = self.n;
        let h = self.spacing();
        [
            (idx / (n * n * n)) as f64 * h,
            ((idx / (n * n)) % n) as f64 * h,
            ((idx / n) % n) as f64 * h,
            (idx % n) as f64 * h,
        ]
    }

    pub fn spectral(&self) -> std::sync::Arc<Spectral> {
        Spectral::get(self.n)
    }
}

/// Per-point data that is either constant over the grid or fully sampled.
#[derive(Debug, Clone)]
pub enum PointData<T> {
    Uniform(T),
    Field(Vec<T>),
}

impl<T> PointData<T> {
    #[inline]
    pub fn at(&self, i: usize) -> &T {
        match self {
            PointData::Uniform(v) => v,
            PointData::Field(v) => &v[i],
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, PointData::Uniform(_))
    }

    /// Applies `f` pointwise, preserving uniformity.
    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> PointData<U> {
        match self {
            PointData::Uniform(v) => PointData::Uniform(f(v)),
            PointData::Field(v) => PointData::Field(v.iter().map(f).collect()),
        }
    }

    pub fn try_map<U, E>(&self, f: impl Fn(&T) -> std::result::Result<U, E>) -> std::result::Result<PointData<U>, E> {
        Ok(match self {
            PointData::Uniform(v) => PointData::Uniform(f(v)?),
            PointData::Field(v) => PointData::Field(v.iter().map(f).collect::<std::result::Result<_, _>>()?),
        })
    }

    /// Expands to one entry per grid point.
    pub fn to_vec(&self, len: usize) -> Vec<T>
    where
        T: Clone,
    {
        match self {
            PointData::Uniform(v) => vec![v.clone(); len],
            PointData::Field(v) => v.clone(),
        }
    }
}

/// Real-valued function sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        ScalarField { grid, values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 4]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        ScalarField { grid, values }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        let field = ScalarField { grid, values };
        field.check_finite()?;
        Ok(field)
    }

    /// Builds a field without the finiteness check; for internal pipelines.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::InvalidField(format!("non-finite value at index {i}"))),
            None => Ok(()),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `∫ u dx` over the torus.
    pub fn integral(&self) -> f64 {
        compensated_sum(self.values.iter().copied()) * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.values.iter().copied()) / self.values.len() as f64
    }

    /// `L²` norm with respect to `dx`.
    pub fn l2_norm(&self) -> f64 {
        (compensated_sum(self.values.iter().map(|v| v * v)) * self.grid.cell_volume()).sqrt()
    }

    pub fn dot(&self, other: &ScalarField) -> f64 {
        compensated_sum(self.values.iter().zip(&other.values).map(|(a, b)| a * b)) * self.grid.cell_volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        ScalarField::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        self.values.iter_mut().zip(&x.values).for_each(|(s, v)| *s += a * v);
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        self.grid.spectral().forward(&self.values)
    }

    pub fn from_spectrum(grid: GridSpec, spec: Vec<Complex64>) -> ScalarField {
        ScalarField::from_raw(grid, grid.spectral().inverse(spec))
    }

    /// Spectral derivative along a 0-based axis.
    pub fn derivative(&self, axis: usize) -> ScalarField {
        let sp = self.grid.spectral();
        let hat = sp.forward(&self.values);
        ScalarField::from_raw(self.grid, sp.inverse(sp.mul_ik(&hat, axis)))
    }

    /// All four first derivatives from one forward transform.
    pub fn gradient(&self) -> [ScalarField; 4] {
        let sp = self.grid.spectral();
        let hat = sp.forward(&self.values);
        std::array::from_fn(|a| ScalarField::from_raw(self.grid, sp.inverse(sp.mul_ik(&hat, a))))
    }

    /// Removes all Fourier content at the Nyquist frequency of any axis.
    pub fn band_limited(&self) -> ScalarField {
        let sp = self.grid.spectral();
        let mut hat = sp.forward(&self.values);
        sp.strip_nyquist(&mut hat);
        ScalarField::from_raw(self.grid, sp.inverse(hat))
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.map(|a| a * rhs)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.map(|a| -a)
    }
}

impl AddAssign<&ScalarField> for ScalarField {
    fn add_assign(&mut self, rhs: &ScalarField) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&ScalarField> for ScalarField {
    fn sub_assign(&mut self, rhs: &ScalarField) {
        self.axpy(-1.0, rhs);
    }
}

/// Derivative along axis `1..=4`; the Nyquist mode is dropped.
pub fn spectral_derivative(field: &ScalarField, axis: usize) -> Result<ScalarField> {
    if !(1..=4).contains(&axis) {
        return Err(Error::InvalidField(format!("axis {axis} out of range 1..=4")));
    }
    field.check_finite()?;
    Ok(field.derivative(axis - 1))
}

fn check_density(density: &ScalarField) -> Result<()> {
    let min = density.min();
    if min.is_nan() || min <= 0.0 {
        return Err(Error::InvalidDensity(min));
    }
    Ok(())
}

/// `(2π/n)^4 Σ field · density`.
pub fn integrate(field: &ScalarField, density: &ScalarField) -> Result<f64> {
    check_density(density)?;
    Ok(field.dot(density))
}

/// Neumaier summation.
pub fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// `field - ∫ field ρ / ∫ ρ`.
pub fn zero_mean_project(field: &ScalarField, density: &ScalarField) -> Result<ScalarField> {
    check_density(density)?;
    let mean = field.dot(density) / density.integral();
    Ok(field.map(|v| v - mean))
}
