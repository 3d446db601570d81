//! The elliptic operator `P = ½Δ − ¼g(Δ·, ω)ω` on primitive 2-forms, its
//! numerically detected kernel and the deflated Green solve on
//! `J`-anti-invariant forms.
//!
//! Internally forms are expanded in an adapted `g`-orthonormal [`Frame`], in
//! which `P` is block diagonal:
//! `Pψ = (dδψ)^{J,−}` on anti-invariant forms and `Pψ = (dδψ)^{ASD}` on
//! primitive invariant ones. Coefficient fields are kept free of Nyquist
//! modes, where the spectral `d` is blind.

mod frame;
pub(crate) mod lobpcg;

pub use frame::{Block, Frame};

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::forms::{self, exterior_derivative, hodge_star, j_split_unchecked, laplacian, Form};
use crate::grid::GridSpec;
use crate::structures::CompatibleStructure;
use lobpcg::{axpy, dot, norm, Eigenpairs, Operator, Settings};

/// Eigensolver knobs.
#[derive(Debug, Clone)]
pub struct KernelOptions {
    /// Extra eigenpairs per block beyond the expected kernel.
    pub extra: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions { extra: 3, seed: 0x5eed, max_iter: 400 }
    }
}

const PRECONDITIONER_SHIFT: f64 = 0.1;

/// A detected harmonic primitive form.
#[derive(Debug, Clone)]
pub struct KernelElement {
    /// `L²`-normalized form.
    pub form: Form,
    pub anti_invariant: bool,
    /// `‖κ^{J,−}‖² / ‖κ‖²` before purification.
    pub anti_fraction: f64,
}

/// `P` for one structure together with its kernel.
#[derive(Debug, Clone)]
pub struct EllipticContext {
    structure: CompatibleStructure,
    frame: Frame,
    kernel_tol: f64,
    kernel: Vec<KernelElement>,
    /// Euclidean-orthonormal anti-invariant kernel coefficients.
    anti_kernel: Vec<Vec<f64>>,
    eigenvalues: Vec<(f64, Block)>,
    h_minus: usize,
    gap: f64,
    mixing: f64,
    iterations: usize,
    kernel_residual: f64,
    base_ricci: OnceLock<Form>,
}

/// Removes Nyquist content from each field of a stacked coefficient vector.
pub(crate) fn band_limit(grid: GridSpec, c: &mut [f64]) {
    let sp = grid.spectral();
    for field in c.chunks_mut(grid.len()) {
        let mut hat = sp.forward(field);
        sp.strip_nyquist(&mut hat);
        field.copy_from_slice(&sp.inverse(hat));
    }
}

fn apply_symbol_fields(grid: GridSpec, c: &[f64], symbol: impl Fn([f64; 4]) -> f64) -> Vec<f64> {
    let sp = grid.spectral();
    let mut out = Vec::with_capacity(c.len());
    for field in c.chunks(grid.len()) {
        let mut hat = sp.forward(field);
        sp.apply_symbol(&mut hat, &symbol);
        out.extend(sp.inverse(hat));
    }
    out
}

fn flat_norm2(k: [f64; 4]) -> f64 {
    k.iter().map(|v| v * v).sum()
}

impl EllipticContext {
    pub fn structure(&self) -> &CompatibleStructure {
        &self.structure
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn grid(&self) -> GridSpec {
        self.structure.grid()
    }

    /// Hermitian Ricci form of the structure, computed on first use.
    pub fn base_ricci(&self) -> &Form {
        self.base_ricci.get_or_init(|| crate::curvature::hermitian_ricci(&self.structure))
    }

    pub fn kernel_tol(&self) -> f64 {
        self.kernel_tol
    }

    pub fn kernel(&self) -> &[KernelElement] {
        &self.kernel
    }

    pub fn dim_kernel(&self) -> usize {
        self.kernel.len()
    }

    pub fn h_minus(&self) -> usize {
        self.h_minus
    }

    /// Smallest computed eigenvalue above the kernel threshold.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// Largest `min(μ, 1 − μ)` among kernel vectors after diagonalizing the
    /// anti-invariant Gram matrix; 0 means a clean split.
    pub fn mixing(&self) -> f64 {
        self.mixing
    }

    /// All computed eigenvalues, ascending, with the block they came from.
    pub fn eigenvalues(&self) -> &[(f64, Block)] {
        &self.eigenvalues
    }

    pub fn eigensolver_iterations(&self) -> usize {
        self.iterations
    }

    /// Largest eigensolver residual `‖Pκ − λκ‖` among kernel vectors (unit coefficients).
    pub fn kernel_residual(&self) -> f64 {
        self.kernel_residual
    }

    /// `P` on stacked coefficient fields of one block (Nyquist-free in and out).
    pub fn apply_block(&self, block: Block, c: &[f64]) -> Vec<f64> {
        let grid = self.grid();
        let g = self.structure.metric();
        if self.structure.is_uniform() {
            let ginv = *g.inverse(0);
            return apply_symbol_fields(grid, c, |k| {
                let mut s = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        s += ginv[(a, b)] * k[a] * k[b];
                    }
                }
                0.5 * s
            });
        }
        let psi = self.frame.assemble(block, c);
        let d = exterior_derivative(&psi).expect("rank 2");
        // δψ = −*d*ψ = −(±)*dψ on (anti-)self-dual forms
        let delta = hodge_star(&d, g).scale(-block.duality());
        let dd = exterior_derivative(&delta).expect("rank 1");
        let mut out = self.frame.project(block, &dd);
        band_limit(grid, &mut out);
        out
    }

    fn precondition(&self, c: &[f64], shift: f64) -> Vec<f64> {
        apply_symbol_fields(self.grid(), c, |k| 1.0 / (0.5 * flat_norm2(k) + shift))
    }

    /// Stacked anti-invariant coefficients of a form (Nyquist-free).
    pub fn anti_coefficients(&self, psi: &Form) -> Vec<f64> {
        let mut c = self.frame.project(Block::AntiInvariant, psi);
        band_limit(self.grid(), &mut c);
        c
    }

    fn deflate(&self, c: &mut [f64]) {
        for _ in 0..2 {
            for k in &self.anti_kernel {
                let a = dot(c, k);
                axpy(c, -a, k);
            }
        }
    }
}

/// `Pψ = ½Δψ − ¼g(Δψ, ω)ω` evaluated from the definition.
pub fn apply_p(psi: &Form, ctx: &EllipticContext) -> Result<Form> {
    if psi.rank() != 2 {
        return Err(Error::RankError("P acts on 2-forms".into()));
    }
    let g = ctx.structure.metric();
    let omega = Form::omega(psi.grid());
    let defect = forms::inner(psi, &omega, g).max_abs();
    if defect > 1e-8 * psi.max_abs().max(1.0) {
        return Err(Error::PrimitivityError(defect));
    }
    let lap = laplacian(psi, g);
    let coeff = forms::inner(&lap, &omega, g).map(|v| 0.25 * v);
    Ok(lap.scale(0.5).sub(&omega.mul_scalar(&coeff)))
}

struct BlockSpectrum {
    pairs: Eigenpairs,
    block: Block,
}

fn solve_block(
    st: &CompatibleStructure,
    ctx: &EllipticContext,
    block: Block,
    tol: f64,
    opts: &KernelOptions,
) -> Result<BlockSpectrum> {
    let grid = st.grid();
    let width = block.width();
    let apply = |c: &[f64]| ctx.apply_block(block, c);
    let pre = |c: &[f64]| ctx.precondition(c, PRECONDITIONER_SHIFT);
    let op = Operator { dim: width * grid.len(), apply: &apply, precondition: &pre };
    let size = width + opts.extra;
    let settings = Settings {
        block: size,
        need: size - 1,
        seed: opts.seed.wrapping_add(block as u64),
        max_iter: opts.max_iter,
        small: 10.0 * tol,
        kernel_residual: 1e-11,
        residual: 1e-2,
    };
    Ok(BlockSpectrum { pairs: lobpcg::lobpcg(&op, &settings)?, block })
}

/// Computes the low spectrum of `P`, its kernel and `h⁻`.
pub fn kernel_detect(st: &CompatibleStructure, tol: f64) -> Result<EllipticContext> {
    kernel_detect_with(st, tol, &KernelOptions::default())
}

pub fn kernel_detect_with(st: &CompatibleStructure, tol: f64, opts: &KernelOptions) -> Result<EllipticContext> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("kernel tolerance must be positive, got {tol}")));
    }
    let grid = st.grid();
    let mut ctx = EllipticContext {
        structure: st.clone(),
        frame: Frame::new(st)?,
        kernel_tol: tol,
        kernel: Vec::new(),
        anti_kernel: Vec::new(),
        eigenvalues: Vec::new(),
        h_minus: 0,
        gap: f64::INFINITY,
        mixing: 0.0,
        iterations: 0,
        kernel_residual: 0.0,
        base_ricci: OnceLock::new(),
    };
    let spectra = [
        solve_block(st, &ctx, Block::Invariant, tol, opts)?,
        solve_block(st, &ctx, Block::AntiInvariant, tol, opts)?,
    ];
    let cell = grid.cell_volume();
    let mut raw: Vec<Form> = Vec::new();
    let mut gap = f64::INFINITY;
    for sp in &spectra {
        let need = sp.pairs.values.len() - 1;
        ctx.iterations = ctx.iterations.max(sp.pairs.iterations);
        let mut above = None;
        for (k, &v) in sp.pairs.values.iter().enumerate() {
            ctx.eigenvalues.push((v, sp.block));
            if k >= need {
                continue;
            }
            if v < tol {
                ctx.kernel_residual = ctx.kernel_residual.max(sp.pairs.residuals[k]);
                let mut c = sp.pairs.vectors[k].clone();
                let s = 1.0 / (norm(&c) * cell.sqrt());
                c.iter_mut().for_each(|e| *e *= s);
                raw.push(ctx.frame.assemble(sp.block, &c));
            } else if above.is_none() {
                above = Some(v);
            }
        }
        match above {
            Some(v) => gap = gap.min(v),
            None => return Err(Error::AmbiguousKernel { gap: 0.0, threshold: 10.0 * tol }),
        }
    }
    ctx.eigenvalues.sort_by(|a, b| a.0.total_cmp(&b.0));
    if gap < 10.0 * tol {
        return Err(Error::AmbiguousKernel { gap, threshold: 10.0 * tol });
    }
    ctx.gap = gap;
    classify(&mut ctx, raw);
    Ok(ctx)
}

/// Splits the kernel into anti-self-dual and anti-invariant classes.
fn classify(ctx: &mut EllipticContext, raw: Vec<Form>) {
    let st = &ctx.structure;
    let g = st.metric();
    let k = raw.len();
    let minus: Vec<Form> = raw.iter().map(|f| j_split_unchecked(f, st.j()).1).collect();
    let gram = DMatrix::from_fn(k, k, |i, j| forms::l2_inner(&minus[i], &minus[j], g));
    let eig = SymmetricEigen::new(0.5 * (&gram + gram.transpose()));
    let mut anti = Vec::new();
    let mut inv = Vec::new();
    let mut mixing = 0.0f64;
    for col in 0..k {
        let mu = eig.eigenvalues[col].clamp(0.0, 1.0);
        mixing = mixing.max(mu.min(1.0 - mu));
        let mut v = Form::zeros(ctx.grid(), 2);
        for i in 0..k {
            v.axpy(eig.eigenvectors[(i, col)], &raw[i]);
        }
        let (plus_part, minus_part) = j_split_unchecked(&v, st.j());
        if mu > 0.5 {
            anti.push((minus_part, mu));
        } else {
            inv.push((plus_part, mu));
        }
    }
    ctx.mixing = mixing;
    let mut kernel = Vec::new();
    for (class, anti_invariant) in [(inv, false), (anti, true)] {
        let mut done: Vec<Form> = Vec::new();
        for (mut f, mu) in class {
            for _ in 0..2 {
                for q in &done {
                    let c = forms::l2_inner(&f, q, g);
                    f.axpy(-c, q);
                }
            }
            let n = forms::l2_norm(&f, g);
            let f = f.scale(1.0 / n);
            done.push(f.clone());
            kernel.push(KernelElement { form: f, anti_invariant, anti_fraction: mu });
        }
    }
    ctx.h_minus = kernel.iter().filter(|e| e.anti_invariant).count();
    ctx.anti_kernel = kernel
        .iter()
        .filter(|e| e.anti_invariant)
        .map(|e| ctx.frame.project(Block::AntiInvariant, &e.form))
        .collect();
    // Euclidean re-orthonormalization (the coefficients were L²-normalized).
    let mut q: Vec<Vec<f64>> = Vec::new();
    for mut v in std::mem::take(&mut ctx.anti_kernel) {
        for _ in 0..2 {
            for p in &q {
                let c = dot(&v, p);
                axpy(&mut v, -c, p);
            }
        }
        let n = norm(&v);
        v.iter_mut().for_each(|e| *e /= n);
        q.push(v);
    }
    ctx.anti_kernel = q;
    ctx.kernel = kernel;
}

/// Output of [`green_solve_detailed`].
#[derive(Debug, Clone)]
pub struct GreenSolution {
    pub psi: Form,
    /// Stacked anti-invariant coefficients of `psi`.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// `‖Pψ − rhs_⊥‖ / ‖rhs_⊥‖` on Nyquist-free coefficients.
    pub relative_residual: f64,
    /// `max |⟨ψ, κ⟩| / ‖ψ‖` over anti-invariant kernel elements.
    pub kernel_overlap: f64,
}

/// The `ψ ⊥ ker P` solving `Pψ = rhs − Π rhs` for anti-invariant `rhs`.
pub fn green_solve(rhs: &Form, ctx: &EllipticContext) -> Result<Form> {
    Ok(green_solve_detailed(rhs, ctx)?.psi)
}

pub fn green_solve_detailed(rhs: &Form, ctx: &EllipticContext) -> Result<GreenSolution> {
    if rhs.rank() != 2 {
        return Err(Error::RankError("green_solve needs a 2-form".into()));
    }
    let (plus, _) = j_split_unchecked(rhs, ctx.structure.j());
    let scale = rhs.max_abs();
    if plus.max_abs() > 1e-8 * scale.max(1.0) {
        return Err(Error::StructureError(format!(
            "right-hand side is not anti-invariant (invariant part {:e})",
            plus.max_abs()
        )));
    }
    let b = ctx.anti_coefficients(rhs);
    green_solve_coefficients(&b, ctx)
}

/// Green solve on stacked anti-invariant coefficients.
pub(crate) fn green_solve_coefficients(rhs: &[f64], ctx: &EllipticContext) -> Result<GreenSolution> {
    let grid = ctx.grid();
    let mut b = rhs.to_vec();
    ctx.deflate(&mut b);
    let bnorm = norm(&b);
    let dim = b.len();
    if bnorm == 0.0 {
        let zero = vec![0.0; dim];
        return Ok(GreenSolution {
            psi: ctx.frame.assemble(Block::AntiInvariant, &zero),
            coefficients: zero,
            iterations: 0,
            relative_residual: 0.0,
            kernel_overlap: 0.0,
        });
    }
    let a = |v: &[f64]| ctx.apply_block(Block::AntiInvariant, v);
    let m = |v: &[f64]| {
        let mut z = apply_symbol_fields(grid, v, |k| {
            let q = 0.5 * flat_norm2(k);
            if q == 0.0 {
                1.0
            } else {
                1.0 / q
            }
        });
        ctx.deflate(&mut z);
        z
    };
    let max_iter = 50 * grid.n();
    let target = 1e-10 * bnorm;
    let mut x = vec![0.0; dim];
    let mut total = 0;
    let mut true_res = f64::INFINITY;
    // restarted to keep the recursive residual honest
    for _ in 0..4 {
        let ax = a(&x);
        let mut r = b.clone();
        axpy(&mut r, -1.0, &ax);
        ctx.deflate(&mut r);
        true_res = norm(&r);
        if true_res <= target {
            break;
        }
        let mut z = m(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while total < max_iter {
            total += 1;
            let ap = a(&p);
            let alpha = rz / dot(&p, &ap);
            axpy(&mut x, alpha, &p);
            axpy(&mut r, -alpha, &ap);
            ctx.deflate(&mut r);
            if norm(&r) <= 0.5 * target {
                break;
            }
            z = m(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        if total >= max_iter {
            break;
        }
    }
    ctx.deflate(&mut x);
    let ax = a(&x);
    let mut r = b.clone();
    axpy(&mut r, -1.0, &ax);
    let rel = norm(&r) / bnorm;
    if !(rel <= 1e-10) {
        return Err(Error::SolveError(format!(
            "deflated CG stalled at relative residual {rel:e} after {total} iterations (last {true_res:e})"
        )));
    }
    let xn = norm(&x);
    let overlap = ctx.anti_kernel.iter().map(|k| dot(&x, k).abs()).fold(0.0, f64::max) / xn.max(f64::MIN_POSITIVE);
    Ok(GreenSolution {
        psi: ctx.frame.assemble(Block::AntiInvariant, &x),
        coefficients: x,
        iterations: total,
        relative_residual: rel,
        kernel_overlap: overlap,
    })
}

/// Defect of `Pψ = rhs_⊥` for a candidate `ψ`, relative to `‖rhs_⊥‖`.
pub fn green_residual(psi: &Form, rhs: &Form, ctx: &EllipticContext) -> f64 {
    let x = ctx.anti_coefficients(psi);
    let mut b = ctx.anti_coefficients(rhs);
    ctx.deflate(&mut b);
    let mut r = b.clone();
    axpy(&mut r, -1.0, &ctx.apply_block(Block::AntiInvariant, &x));
    norm(&r) / norm(&b).max(f64::MIN_POSITIVE)
}

/// Primitive constant forms spanning the flat kernel, in the order
/// anti-self-dual then anti-invariant.
pub fn flat_kernel_forms(grid: GridSpec) -> Vec<Form> {
    const FORMS: [[f64; 6]; 5] = [
        [1.0, 0.0, 0.0, 0.0, 0.0, -1.0],
        [0.0, 1.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0, -1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
    ];
    FORMS.iter().map(|c| Form::constant(grid, 2, c)).collect()
}

/// Largest principal angle (sine) between two spans of forms of equal dimension.
pub fn subspace_angle(a: &[Form], b: &[Form], g: &crate::forms::MetricField) -> f64 {
    if a.len() != b.len() {
        return 1.0;
    }
    let orth = |set: &[Form]| {
        let mut q: Vec<Form> = Vec::new();
        for f in set {
            let mut v = f.clone();
            for _ in 0..2 {
                for p in &q {
                    let c = forms::l2_inner(&v, p, g);
                    v.axpy(-c, p);
                }
            }
            let n = forms::l2_norm(&v, g);
            q.push(v.scale(1.0 / n));
        }
        q
    };
    let (qa, qb) = (orth(a), orth(b));
    // residual of projecting each unit vector of one span onto the other
    qa.iter()
        .map(|v| {
            let mut r = v.clone();
            for q in &qb {
                let c = forms::l2_inner(&r, q, g);
                r.axpy(-c, q);
            }
            forms::l2_norm(&r, g)
        })
        .fold(0.0, f64::max)
}

/// `sup |dκ|` and `sup |δκ|` over the kernel.
pub fn kernel_closedness(ctx: &EllipticContext) -> (f64, f64) {
    let g = ctx.structure.metric();
    ctx.kernel.iter().fold((0.0f64, 0.0f64), |(dm, cm), k| {
        let d = exterior_derivative(&k.form).expect("rank 2").max_abs();
        let c = forms::codifferential(&k.form, g).expect("rank 2").max_abs();
        (dm.max(d), cm.max(c))
    })
}
