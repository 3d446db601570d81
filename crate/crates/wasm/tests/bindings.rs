use akstab_wasm::{curvature, deformed_scalar, kernel};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn flat_point_has_no_curvature() {
    let v = parse(curvature(8, 0.0).unwrap());
    assert_eq!(v["plane"].as_array().unwrap().len(), 64);
    assert!(v["s_max"].as_f64().unwrap().abs() < 1e-12);
    assert!(v["chern_pairing"].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn bump_curvature_is_closed_with_zero_chern_pairing() {
    let v = parse(curvature(8, 0.2).unwrap());
    assert!(v["s_max"].as_f64().unwrap() > 1e-4);
    assert!(v["d_rho_norm"].as_f64().unwrap() < 1e-6);
    assert!(v["chern_pairing"].as_f64().unwrap().abs() < 1e-6);
}

#[test]
fn kernel_of_flat_structure() {
    let v = parse(kernel(8, 0.0, 1e-8).unwrap());
    assert_eq!(v["dim_kernel"], 5);
    assert_eq!(v["h_minus"], 2);
}

#[test]
fn scalar_routes_agree() {
    let v = parse(deformed_scalar(16, 0.0, 0.05).unwrap());
    assert!(v["route_difference"].as_f64().unwrap() < 1e-8);
    assert!(v["s_max"].as_f64().unwrap() > 0.0);
}
