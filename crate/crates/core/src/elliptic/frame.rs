//! Pointwise `g`-orthonormal frames of primitive 2-forms adapted to `J`.
//!
//! Slots `0..3` span the primitive `J`-invariant (anti-self-dual) forms and
//! slots `3..5` the `J`-anti-invariant (self-dual, primitive) forms.

use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::forms::{matrix_two_form, two_form_matrix, Form, MetricField, OMEGA};
use crate::grid::{GridSpec, PointData, ScalarField};
use crate::structures::CompatibleStructure;

const R: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Seeds for the invariant primitive slots: the constant anti-self-dual forms.
const PLUS_SEEDS: [[f64; 6]; 3] = [
    [R, 0.0, 0.0, 0.0, 0.0, -R],
    [0.0, R, 0.0, 0.0, R, 0.0],
    [0.0, 0.0, R, -R, 0.0, 0.0],
];
/// Seeds for the anti-invariant slots: real and imaginary parts of `dz1∧dz2`.
const MINUS_SEEDS: [[f64; 6]; 2] = [[0.0, R, 0.0, 0.0, -R, 0.0], [0.0, 0.0, R, R, 0.0, 0.0]];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// Primitive `J`-invariant forms.
    Invariant,
    /// `J`-anti-invariant forms.
    AntiInvariant,
}

impl Block {
    pub fn slots(self) -> std::ops::Range<usize> {
        match self {
            Block::Invariant => 0..3,
            Block::AntiInvariant => 3..5,
        }
    }

    pub fn width(self) -> usize {
        self.slots().len()
    }

    /// `*ψ = sign ψ` on this block.
    pub fn duality(self) -> f64 {
        match self {
            Block::Invariant => -1.0,
            Block::AntiInvariant => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Slots {
    e: [[f64; 6]; 5],
    dual: [[f64; 6]; 5],
}

#[derive(Debug, Clone)]
pub struct Frame {
    grid: GridSpec,
    slots: PointData<Slots>,
}

fn g2(m: &[f64], a: &[f64; 6], b: &[f64; 6]) -> f64 {
    let mut s = 0.0;
    for r in 0..6 {
        for c in 0..6 {
            s += a[r] * m[r * 6 + c] * b[c];
        }
    }
    s
}

fn point_frame(j: &Matrix4<f64>, m2: &[f64]) -> Result<Slots> {
    let rotate = |c: &[f64; 6]| matrix_two_form(&(j.transpose() * two_form_matrix(c) * j));
    let mut e = [[0.0; 6]; 5];
    let seeds = PLUS_SEEDS.iter().map(|s| (s, 1.0)).chain(MINUS_SEEDS.iter().map(|s| (s, -1.0)));
    for (slot, (seed, sign)) in seeds.enumerate() {
        let r = rotate(seed);
        let mut v = [0.0; 6];
        for k in 0..6 {
            v[k] = 0.5 * (seed[k] + sign * r[k]);
        }
        if sign > 0.0 {
            let lambda = 0.5 * g2(m2, &v, &OMEGA);
            for k in 0..6 {
                v[k] -= lambda * OMEGA[k];
            }
        }
        let start = if slot < 3 { 0 } else { 3 };
        for _ in 0..2 {
            for prev in &e[start..slot] {
                let c = g2(m2, &v, prev);
                for k in 0..6 {
                    v[k] -= c * prev[k];
                }
            }
        }
        let nv = g2(m2, &v, &v).sqrt();
        if !(nv > 1e-3) {
            return Err(Error::DegenerateStructure(format!("adapted frame degenerates (norm {nv:e})")));
        }
        v.iter_mut().for_each(|x| *x /= nv);
        e[slot] = v;
    }
    let mut dual = [[0.0; 6]; 5];
    for (d, v) in dual.iter_mut().zip(&e) {
        for r in 0..6 {
            d[r] = (0..6).map(|c| m2[r * 6 + c] * v[c]).sum();
        }
    }
    Ok(Slots { e, dual })
}

impl Frame {
    pub fn new(st: &CompatibleStructure) -> Result<Self> {
        let g: &MetricField = st.metric();
        let grid = st.grid();
        let slots = if st.is_uniform() {
            PointData::Uniform(point_frame(st.j().at(0), g.form_metric(2, 0))?)
        } else {
            PointData::Field(
                (0..grid.len())
                    .map(|i| point_frame(st.j().at(i), g.form_metric(2, i)))
                    .collect::<Result<_>>()?,
            )
        };
        Ok(Frame { grid, slots })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn is_uniform(&self) -> bool {
        self.slots.is_uniform()
    }

    /// Frame element `slot` as a form.
    pub fn element(&self, slot: usize) -> Form {
        let grid = self.grid;
        let comps = (0..6)
            .map(|k| ScalarField::from_raw(grid, (0..grid.len()).map(|i| self.slots.at(i).e[slot][k]).collect()))
            .collect();
        Form::from_components(2, comps).expect("six components")
    }

    /// `Σ c_i E_i` over a block; `c` holds the block's fields back to back.
    pub fn assemble(&self, block: Block, c: &[f64]) -> Form {
        let grid = self.grid;
        let len = grid.len();
        let mut comps = vec![vec![0.0; len]; 6];
        for (local, slot) in block.slots().enumerate() {
            let coeff = &c[local * len..(local + 1) * len];
            for i in 0..len {
                let e = &self.slots.at(i).e[slot];
                let ci = coeff[i];
                for k in 0..6 {
                    comps[k][i] += ci * e[k];
                }
            }
        }
        Form::from_components(2, comps.into_iter().map(|v| ScalarField::from_raw(grid, v)).collect())
            .expect("six components")
    }

    /// Coefficients `g(E_i, ψ)` over a block.
    pub fn project(&self, block: Block, psi: &Form) -> Vec<f64> {
        let len = self.grid.len();
        let mut out = vec![0.0; block.width() * len];
        let comps: Vec<&[f64]> = psi.components().iter().map(|c| c.values()).collect();
        for (local, slot) in block.slots().enumerate() {
            let dst = &mut out[local * len..(local + 1) * len];
            for (i, d) in dst.iter_mut().enumerate() {
                let du = &self.slots.at(i).dual[slot];
                *d = (0..6).map(|k| du[k] * comps[k][i]).sum();
            }
        }
        out
    }
}
