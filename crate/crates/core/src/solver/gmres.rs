//! Restarted GMRES with right preconditioning.

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GmresSettings {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A M y = b`, returning `x = M y`. Operator failures are propagated.
pub fn gmres(
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    precondition: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    s: GmresSettings,
) -> Result<GmresOutcome> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(GmresOutcome { x, iterations: 0, relative_residual: 0.0 });
    }
    let mut r = b.to_vec();
    let mut total = 0;
    let mut rel = 1.0;
    while total < s.max_iter {
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= s.tol {
            break;
        }
        let m = s.restart.min(s.max_iter - total);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|e| e / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m {
            let zk = precondition(&v[k]);
            let mut w = apply(&zk)?;
            z.push(zk);
            total += 1;
            for i in 0..=k {
                h[i][k] = dot(&w, &v[i]);
                w.iter_mut().zip(&v[i]).for_each(|(a, b)| *a -= h[i][k] * b);
            }
            // one reorthogonalization pass
            for i in 0..=k {
                let c = dot(&w, &v[i]);
                h[i][k] += c;
                w.iter_mut().zip(&v[i]).for_each(|(a, b)| *a -= c * b);
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let den = h[k][k].hypot(h[k + 1][k]);
            if den == 0.0 {
                k += 1;
                break;
            }
            cs[k] = h[k][k] / den;
            sn[k] = h[k + 1][k] / den;
            h[k][k] = den;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            let breakdown = wn == 0.0;
            if !breakdown {
                v.push(w.into_iter().map(|e| e / wn).collect());
            }
            k += 1;
            rel = g[k].abs() / bnorm;
            if rel <= s.tol || breakdown {
                break;
            }
        }
        // back substitution
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            x.iter_mut().zip(zi).for_each(|(a, b)| *a += yi * b);
        }
        if rel <= s.tol || total >= s.max_iter {
            // the Arnoldi estimate stands in for the true residual
            break;
        }
        let ax = apply(&x)?;
        r = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
    }
    Ok(GmresOutcome { x, iterations: total, relative_residual: rel })
}
