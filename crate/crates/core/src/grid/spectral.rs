//! Real-to-complex Fourier transforms on the periodic `n^4` grid.
//!
//! The spectrum is stored in half-complex layout: axes 1..3 keep all `n`
//! frequencies, axis 4 keeps the `n/2 + 1` non-negative ones. Index of the
//! bin `(k1, k2, k3, k4)` is `((k1 * n + k2) * n + k3) * m + k4` with
//! `m = n/2 + 1`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Spectral {
    n: usize,
    m: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Signed wavenumber per full-axis index, Nyquist mapped to 0.
    odd_k: Vec<f64>,
    /// Signed wavenumber per full-axis index, Nyquist kept as n/2.
    full_k: Vec<f64>,
}

static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Spectral>>>> = OnceLock::new();

impl Spectral {
    /// Shared transform engine for grids with `n` points per axis.
    pub fn get(n: usize) -> Arc<Spectral> {
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("spectral cache poisoned");
        map.entry(n).or_insert_with(|| Arc::new(Spectral::new(n))).clone()
    }

    fn new(n: usize) -> Self {
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        let half = n / 2;
        let odd_k = (0..n)
            .map(|i| match i.cmp(&half) {
                std::cmp::Ordering::Less => i as f64,
                std::cmp::Ordering::Equal => 0.0,
                std::cmp::Ordering::Greater => i as f64 - n as f64,
            })
            .collect();
        let full_k = (0..n)
            .map(|i| if i <= half { i as f64 } else { i as f64 - n as f64 })
            .collect();
        Spectral {
            n,
            m: half + 1,
            r2c: rp.plan_fft_forward(n),
            c2r: rp.plan_fft_inverse(n),
            fwd: cp.plan_fft_forward(n),
            inv: cp.plan_fft_inverse(n),
            odd_k,
            full_k,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored spectral coefficients.
    pub fn spectrum_len(&self) -> usize {
        self.n * self.n * self.n * self.m
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        let m = self.m;
        let rows = n * n * n;
        debug_assert_eq!(values.len(), rows * n);
        let mut out = vec![Complex64::new(0.0, 0.0); rows * m];
        let mut row = vec![0.0; n];
        let mut scratch = self.r2c.make_scratch_vec();
        for r in 0..rows {
            row.copy_from_slice(&values[r * n..(r + 1) * n]);
            self.r2c
                .process_with_scratch(&mut row, &mut out[r * m..(r + 1) * m], &mut scratch)
                .expect("r2c length mismatch");
        }
        for axis in (0..3).rev() {
            self.complex_axis(&mut out, axis, &*self.fwd);
        }
        out
    }

    /// Inverse transform, normalized so that `inverse(forward(u)) == u`.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        let n = self.n;
        let m = self.m;
        let rows = n * n * n;
        for axis in 0..3 {
            self.complex_axis(&mut spec, axis, &*self.inv);
        }
        let scale = 1.0 / (rows * n) as f64;
        let mut out = vec![0.0; rows * n];
        let mut scratch = self.c2r.make_scratch_vec();
        for r in 0..rows {
            let line = &mut spec[r * m..(r + 1) * m];
            line[0].im = 0.0;
            line[m - 1].im = 0.0;
            self.c2r
                .process_with_scratch(line, &mut out[r * n..(r + 1) * n], &mut scratch)
                .expect("c2r length mismatch");
        }
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    /// In-place complex FFT along one of the first three axes.
    fn complex_axis(&self, data: &mut [Complex64], axis: usize, fft: &dyn Fft<f64>) {
        let n = self.n;
        let stride = match axis {
            0 => n * n * self.m,
            1 => n * self.m,
            2 => self.m,
            _ => unreachable!(),
        };
        let block = n * stride;
        let mut tmp = vec![Complex64::new(0.0, 0.0); block];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for chunk in data.chunks_mut(block) {
            for i in 0..n {
                for j in 0..stride {
                    tmp[j * n + i] = chunk[i * stride + j];
                }
            }
            fft.process_with_scratch(&mut tmp, &mut scratch);
            for i in 0..n {
                for j in 0..stride {
                    chunk[i * stride + j] = tmp[j * n + i];
                }
            }
        }
    }

    /// Calls `f(index, [k1, k2, k3, k4], nyquist)` for every stored bin, with
    /// signed wavenumbers (Nyquist reported as `n/2`) and a flag telling
    /// whether any axis sits at the Nyquist frequency.
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, [f64; 4], bool)) {
        let n = self.n;
        let m = self.m;
        let half = n / 2;
        let mut idx = 0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..m {
                        let k = [self.full_k[a], self.full_k[b], self.full_k[c], d as f64];
                        let nyq = a == half || b == half || c == half || d == half;
                        f(idx, k, nyq);
                        idx += 1;
                    }
                }
            }
        }
    }

    /// Multiplies the spectrum by `i k_axis` (Nyquist zeroed).
    pub fn mul_ik(&self, spec: &[Complex64], axis: usize) -> Vec<Complex64> {
        let mut out = spec.to_vec();
        self.mul_ik_acc(spec, axis, 1.0, &mut out, true);
        out
    }

    /// `acc += sign * i k_axis * spec` (or `acc = ...` when `overwrite`).
    pub fn mul_ik_acc(
        &self,
        spec: &[Complex64],
        axis: usize,
        sign: f64,
        acc: &mut [Complex64],
        overwrite: bool,
    ) {
        let n = self.n;
        let m = self.m;
        let mut idx = 0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..m {
                        let k = match axis {
                            0 => self.odd_k[a],
                            1 => self.odd_k[b],
                            2 => self.odd_k[c],
                            _ => {
                                if d == n / 2 {
                                    0.0
                                } else {
                                    d as f64
                                }
                            }
                        };
                        let v = spec[idx];
                        let term = Complex64::new(-v.im * k * sign, v.re * k * sign);
                        if overwrite {
                            acc[idx] = term;
                        } else {
                            acc[idx] += term;
                        }
                        idx += 1;
                    }
                }
            }
        }
    }

    /// Zeroes every bin with a Nyquist component.
    pub fn strip_nyquist(&self, spec: &mut [Complex64]) {
        self.for_each_mode(|i, _, nyq| {
            if nyq {
                spec[i] = Complex64::new(0.0, 0.0);
            }
        });
    }

    /// Multiplies each bin by `symbol(k)`; Nyquist bins are zeroed.
    pub fn apply_symbol(&self, spec: &mut [Complex64], symbol: impl Fn([f64; 4]) -> f64) {
        self.for_each_mode(|i, k, nyq| {
            spec[i] = if nyq { Complex64::new(0.0, 0.0) } else { spec[i] * symbol(k) };
        });
    }

    /// Parseval weights: bins with `0 < k4 < n/2` stand for two conjugate modes.
    pub fn mode_multiplicity(&self, index: usize) -> f64 {
        let d = index % self.m;
        if d == 0 || d == self.n / 2 {
            1.0
        } else {
            2.0
        }
    }
}
