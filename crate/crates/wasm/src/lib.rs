//! Browser bindings: curvature and kernel of the bump structure, and the
//! deformed scalar curvature of a trial potential. Results are JSON strings.

use akstab::curvature::{chern_pairing, curvature_data, d_norm};
use akstab::deformation::{build_state, direct_scalar};
use akstab::elliptic::kernel_detect;
use akstab::grid::{GridSpec, ScalarField};
use akstab::structures::{default_bump, CompatibleStructure, DeformationPath};
use akstab::Error;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js_err(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn bump_at(n: usize, t: f64) -> Result<CompatibleStructure, Error> {
    let grid = GridSpec::new(n)?;
    DeformationPath::bump(default_bump(), t.max(1e-12))?.evaluate(grid, t)
}

/// Values on the plane `x1 = x4 = 0`, rows indexed by `x2`.
fn plane(f: &ScalarField) -> Vec<f64> {
    let n = f.grid().n();
    let mut out = Vec::with_capacity(n * n);
    for i2 in 0..n {
        for i3 in 0..n {
            out.push(f.values()[i2 * n * n + i3 * n]);
        }
    }
    out
}

#[wasm_bindgen]
pub fn curvature(n: usize, t: f64) -> Result<String, JsError> {
    let st = bump_at(n, t).map_err(js_err)?;
    let data = curvature_data(&st);
    Ok(json!({
        "n": n,
        "t": t,
        "plane": plane(&data.s),
        "s_min": data.s.min(),
        "s_max": data.s.max(),
        "s_integral": data.s.integral(),
        "chern_pairing": chern_pairing(&data.rho),
        "d_rho_norm": d_norm(&data.rho),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn kernel(n: usize, t: f64, tol: f64) -> Result<String, JsError> {
    let st = bump_at(n, t).map_err(js_err)?;
    let value = match kernel_detect(&st, tol) {
        Ok(ctx) => json!({"t": t, "dim_kernel": ctx.dim_kernel(), "h_minus": ctx.h_minus(), "gap": ctx.gap()}),
        Err(Error::AmbiguousKernel { gap, .. }) => json!({"t": t, "ambiguous": true, "gap": gap}),
        Err(e) => return Err(js_err(e)),
    };
    Ok(value.to_string())
}

/// Deforms the bump structure at `t` by `amp sin(x2) cos(x3)`.
#[wasm_bindgen]
pub fn deformed_scalar(n: usize, t: f64, amp: f64) -> Result<String, JsError> {
    let st = bump_at(n, t).map_err(js_err)?;
    let ctx = kernel_detect(&st, 1e-8).map_err(js_err)?;
    let f = ScalarField::from_fn(st.grid(), |x| amp * x[1].sin() * x[2].cos());
    let state = build_state(t, &f, &ctx).map_err(js_err)?;
    let direct = direct_scalar(&state, &st).map_err(js_err)?;
    let gap = direct.zip_map(&state.s_def, |a, b| a - b).max_abs();
    Ok(json!({
        "n": n,
        "plane": plane(&state.s_def),
        "s_min": state.s_def.min(),
        "s_max": state.s_def.max(),
        "F_min": state.conformal.min(),
        "F_max": state.conformal.max(),
        "route_difference": gap,
    })
    .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_picks_the_x2_x3_slice() {
        let g = GridSpec::new(8).unwrap();
        let f = ScalarField::from_fn(g, |x| x[1] + 10.0 * x[2] + 100.0 * x[0]);
        let p = plane(&f);
        assert_eq!(p.len(), 64);
        assert!((p[8 + 2] - (g.spacing() + 20.0 * g.spacing())).abs() < 1e-12);
    }
}
