//! Deterministic smooth fields and structures for checks and demos.

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::forms::{basis_len, Form, MetricField};
use crate::grid::{GridSpec, PointData, ScalarField};
use crate::structures::{polar_compatible, CompatibleStructure};

/// Sum of six random cosine modes with wave numbers in `[-kmax, kmax]`.
pub fn random_band_limited(g: GridSpec, seed: u64, kmax: i32) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<([f64; 4], f64, f64)> = (0..6)
        .map(|_| {
            let k = std::array::from_fn(|_| rng.gen_range(-kmax..=kmax) as f64);
            (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    ScalarField::from_fn(g, |x| {
        modes
            .iter()
            .map(|(k, a, p)| a * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + k[3] * x[3] + p).cos())
            .sum()
    })
}

/// Zero-mean random field scaled to `sup |f| = amp`.
pub fn random_potential(g: GridSpec, seed: u64, kmax: i32, amp: f64) -> ScalarField {
    let f = random_band_limited(g, seed, kmax);
    let m = f.mean();
    let f = f.map(|v| v - m);
    let s = f.max_abs();
    if s == 0.0 {
        return f;
    }
    f.map(|v| amp * v / s)
}

pub fn random_form(g: GridSpec, rank: usize, seed: u64, kmax: i32) -> Form {
    let comps = (0..basis_len(rank))
        .map(|c| random_band_limited(g, seed.wrapping_mul(31).wrapping_add(c as u64), kmax))
        .collect();
    Form::from_components(rank, comps).expect("component count")
}

/// Compatible structure retracted from `Id + amp·S(x)`, the ten entries of
/// `S` being random fields normalized to unit sup norm. Positive for `amp < 0.25`.
pub fn random_structure(g: GridSpec, seed: u64, amp: f64) -> CompatibleStructure {
    let entries: Vec<ScalarField> = (0..10)
        .map(|k| {
            let f = random_band_limited(g, seed.wrapping_mul(97).wrapping_add(k), 1);
            let s = f.max_abs().max(1e-300);
            f.map(|v| v / s)
        })
        .collect();
    let h = PointData::Field(
        (0..g.len())
            .map(|i| {
                let mut m = Matrix4::identity();
                let mut k = 0;
                for a in 0..4 {
                    for b in a..4 {
                        let v = amp * entries[k].values()[i];
                        m[(a, b)] += v;
                        if a != b {
                            m[(b, a)] += v;
                        }
                        k += 1;
                    }
                }
                m
            })
            .collect(),
    );
    polar_compatible(&MetricField::from_matrices(g, h).expect("positive for small amp")).expect("retraction")
}
