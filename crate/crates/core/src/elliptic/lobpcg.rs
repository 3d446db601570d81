//! Block locally optimal preconditioned conjugate gradient eigensolver for the
//! lowest eigenpairs of a symmetric operator on flat `f64` vectors.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub(crate) struct Operator<'a> {
    pub dim: usize,
    pub apply: &'a dyn Fn(&[f64]) -> Vec<f64>,
    pub precondition: &'a dyn Fn(&[f64]) -> Vec<f64>,
}

pub(crate) struct Settings {
    pub block: usize,
    /// Columns that may hold the tracked eigenpairs.
    pub need: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Eigenvalues below this are held to the absolute `kernel_residual`, the
    /// rest to `residual` relative to the eigenvalue.
    pub small: f64,
    pub kernel_residual: f64,
    pub residual: f64,
}

pub(crate) struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

fn combine(basis: &[&Vec<f64>], coeffs: impl Fn(usize) -> f64, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (k, v) in basis.iter().enumerate() {
        let c = coeffs(k);
        if c != 0.0 {
            axpy(&mut out, c, v);
        }
    }
    out
}

/// Projects `v` off the orthonormal set `q` and normalizes it, carrying the
/// image along (`None`, or heavy cancellation, recomputes it). Returns `None` when `v` is numerically
/// in the span of `q`.
fn orthonormalize(
    mut v: Vec<f64>,
    image: Option<Vec<f64>>,
    q: &[Vec<f64>],
    aq: &[Vec<f64>],
    op: &Operator,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n0 = norm(&v);
    if !(n0 > 0.0 && n0.is_finite()) {
        return None;
    }
    let mut av = image;
    for _ in 0..2 {
        for (u, au) in q.iter().zip(aq) {
            let c = dot(&v, u);
            axpy(&mut v, -c, u);
            if let Some(av) = av.as_mut() {
                axpy(av, -c, au);
            }
        }
    }
    let nv = norm(&v);
    if nv <= 1e-10 * n0 {
        return None;
    }
    v.iter_mut().for_each(|e| *e /= nv);
    // a carried image loses accuracy in proportion to the cancellation
    let av = match av.filter(|_| nv >= 0.5 * n0) {
        Some(mut av) => {
            av.iter_mut().for_each(|e| *e /= nv);
            av
        }
        None => (op.apply)(&v),
    };
    Some((v, av))
}

pub(crate) fn lobpcg(op: &Operator, s: &Settings) -> Result<Eigenpairs> {
    let n = op.dim;
    let m = s.block;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut x: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (op.precondition)(&v)
        })
        .collect();
    let mut ax: Vec<Vec<f64>> = Vec::new();
    let mut p: Vec<Vec<f64>> = Vec::new();
    let mut ap: Vec<Vec<f64>> = Vec::new();
    let mut w: Vec<Vec<f64>> = Vec::new();
    let mut aw: Vec<Vec<f64>> = Vec::new();
    let mut values = vec![0.0; m];
    let mut residuals = vec![f64::INFINITY; m];

    for iter in 0..=s.max_iter {
        // Rayleigh–Ritz on span[X, W, P]
        let first = ax.is_empty();
        if first {
            ax = x.iter().map(|v| (op.apply)(v)).collect();
        }
        let basis: Vec<&Vec<f64>> = x.iter().chain(&w).chain(&p).collect();
        let images: Vec<&Vec<f64>> = ax.iter().chain(&aw).chain(&ap).collect();
        let k = basis.len();
        let gram = DMatrix::from_fn(k, k, |i, j| dot(basis[i], basis[j]));
        let mut h = DMatrix::from_fn(k, k, |i, j| dot(basis[i], images[j]));
        h = 0.5 * (&h + h.transpose());
        let ge = SymmetricEigen::new(gram);
        let gmax = ge.eigenvalues.max();
        let keep: Vec<usize> = (0..k).filter(|&i| ge.eigenvalues[i] > 1e-13 * gmax).collect();
        if keep.len() < m {
            return Err(Error::SolveError("eigensolver basis collapsed".into()));
        }
        let b = DMatrix::from_fn(k, keep.len(), |r, c| {
            ge.eigenvectors[(r, keep[c])] / ge.eigenvalues[keep[c]].sqrt()
        });
        let hr = b.transpose() * &h * &b;
        let he = SymmetricEigen::new(0.5 * (&hr + hr.transpose()));
        let mut order: Vec<usize> = (0..keep.len()).collect();
        order.sort_by(|&i, &j| he.eigenvalues[i].total_cmp(&he.eigenvalues[j]));
        let y = &b * DMatrix::from_fn(keep.len(), m, |r, c| he.eigenvectors[(r, order[c])]);
        for j in 0..m {
            values[j] = he.eigenvalues[order[j]];
        }
        let nx = x.len();
        let new_x: Vec<Vec<f64>> = (0..m).map(|j| combine(&basis, |i| y[(i, j)], n)).collect();
        let new_ax: Vec<Vec<f64>> = (0..m).map(|j| combine(&images, |i| y[(i, j)], n)).collect();
        if !first && k > nx {
            p = (0..m).map(|j| combine(&basis[nx..], |i| y[(nx + i, j)], n)).collect();
            ap = (0..m).map(|j| combine(&images[nx..], |i| y[(nx + i, j)], n)).collect();
        }
        x = new_x;
        ax = new_ax;

        // residuals and convergence: every Ritz value below `small` plus the
        // first one above it must converge within the leading `need` columns
        let mut active = Vec::new();
        let mut r_vecs = Vec::new();
        let mut done = false;
        let mut tracked = true;
        for j in 0..m {
            let mut r = ax[j].clone();
            axpy(&mut r, -values[j], &x[j]);
            residuals[j] = norm(&r) / norm(&x[j]);
            let target = if values[j] < s.small { s.kernel_residual } else { s.residual * values[j].abs() };
            if tracked && j < s.need && values[j] >= s.small {
                done = active.is_empty() && residuals[j] <= target;
                tracked = false;
            }
            if residuals[j] > target {
                active.push(j);
                r_vecs.push(r);
            }
        }
        if tracked && active.iter().all(|&j| j >= s.need) {
            // no Ritz value above `small` among the tracked columns
            done = true;
        }
        if done {
            let scale: Vec<f64> = x.iter().map(|v| 1.0 / norm(v)).collect();
            let vectors = x.into_iter().zip(&scale).map(|(v, s)| v.into_iter().map(|e| e * s).collect()).collect();
            return Ok(Eigenpairs { values, vectors, residuals, iterations: iter });
        }
        if iter == s.max_iter {
            break;
        }

        // orthonormalize [X, W, P] so the next Rayleigh–Ritz step is well conditioned
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(3 * m);
        let mut aq: Vec<Vec<f64>> = Vec::with_capacity(3 * m);
        let xs = std::mem::take(&mut x).into_iter().zip(std::mem::take(&mut ax));
        for (v, av) in xs {
            if let Some((u, au)) = orthonormalize(v, Some(av), &q, &aq, op) {
                q.push(u);
                aq.push(au);
            }
        }
        let nx = q.len();
        if nx < m {
            return Err(Error::SolveError("eigensolver block lost rank".into()));
        }
        for r in r_vecs {
            if let Some((u, au)) = orthonormalize((op.precondition)(&r), None, &q, &aq, op) {
                q.push(u);
                aq.push(au);
            }
        }
        let nw = q.len();
        let ps = std::mem::take(&mut p).into_iter().zip(std::mem::take(&mut ap));
        for (v, av) in ps {
            if let Some((u, au)) = orthonormalize(v, Some(av), &q, &aq, op) {
                q.push(u);
                aq.push(au);
            }
        }
        p = q.split_off(nw);
        ap = aq.split_off(nw);
        w = q.split_off(nx);
        aw = aq.split_off(nx);
        x = q;
        ax = aq;
    }
    Err(Error::SolveError(format!(
        "eigensolver did not converge in {} iterations (residuals {:?}, values {:?})",
        s.max_iter,
        &residuals[..s.need],
        &values[..s.need]
    )))
}
