//! Browser bindings: Ivory residuals, elliptic coordinates and Bianchi
//! superposition, each returning a JSON string.

use ivory::backlund::BacklundContext;
use ivory::deform::Model;
use ivory::permute::{bpt_compose, orthogonality_identity, scalar_identity};
use ivory::quadric::{
    elliptic_coordinates, eval_confocal, ivory_theorem_residual, random_point, tc_symmetry_residual, QuadricSpec,
};
use ivory::sjcore::{orth_defect, random_orthogonal, rng};
use ivory::{c64, CVec, Error};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn ellipsoid(a: &[f64]) -> Result<QuadricSpec, JsValue> {
    QuadricSpec::qc(&a.iter().map(|&x| c64(x, 0.0)).collect::<Vec<_>>()).map_err(js)
}

/// Worst Ivory-theorem and tangent-symmetry residuals over `pairs` random
/// point pairs of the quadric `Σ x_j²/a_j = 1`.
pub fn ivory_residuals(a: &[f64], z: (f64, f64), seed: u64, pairs: usize) -> Result<String, Error> {
    let q = QuadricSpec::qc(&a.iter().map(|&x| c64(x, 0.0)).collect::<Vec<_>>())?;
    let z = c64(z.0, z.1);
    let mut g = rng(seed);
    let (mut thm, mut tc): (f64, f64) = (0.0, 0.0);
    for _ in 0..pairs {
        let xa = random_point(&q, None, &mut g, 0.7)?;
        let xb = random_point(&q, None, &mut g, 0.7)?;
        thm = thm.max(ivory_theorem_residual(&q, z, &xa, &xb)?);
        tc = tc.max(tc_symmetry_residual(&q, z, &xa, &xb)?);
    }
    Ok(json!({ "pairs": pairs, "theorem": thm, "tangent_symmetry": tc }).to_string())
}

#[wasm_bindgen]
pub fn ivory(a1: f64, a2: f64, a3: f64, z_re: f64, z_im: f64, seed: u32) -> Result<String, JsValue> {
    ivory_residuals(&[a1, a2, a3], (z_re, z_im), seed as u64, 200).map_err(js)
}

/// Roots `z` of `Q_z(x) = 0` for a real point `x`, with `|Q_z(x)|` at each.
#[wasm_bindgen]
pub fn elliptic(a1: f64, a2: f64, a3: f64, x1: f64, x2: f64, x3: f64) -> Result<String, JsValue> {
    let q = ellipsoid(&[a1, a2, a3])?;
    let x = CVec::from_vec(vec![c64(x1, 0.0), c64(x2, 0.0), c64(x3, 0.0)]);
    let roots = elliptic_coordinates(&q, &x).map_err(js)?;
    let out: Vec<_> = roots
        .iter()
        .map(|&z| Ok(json!({ "re": z.re, "im": z.im, "residual": eval_confocal(&q, z, &x)?.norm() })))
        .collect::<Result<_, Error>>()
        .map_err(js)?;
    Ok(json!(out).to_string())
}

/// Superposes two random leaves with parameters `z1`, `z2` on the paraboloid
/// `diag(2, 1/2)` and reports the residuals of the result.
#[wasm_bindgen]
pub fn superpose(z1_re: f64, z1_im: f64, z2_re: f64, z2_im: f64, seed: u32) -> Result<String, JsValue> {
    let run = || -> Result<String, Error> {
        let q = QuadricSpec::qwc(&[c64(2.0, 0.0), c64(0.5, 0.0)])?;
        let model = Model::new(q, 1)?;
        let c1 = BacklundContext::new(&model, c64(z1_re, z1_im))?;
        let c2 = BacklundContext::new(&model, c64(z2_re, z2_im))?;
        let s = seed as u64;
        let r0 = random_orthogonal(2, s, 0.5);
        let r1 = random_orthogonal(2, s + 1, 0.5);
        let r2 = random_orthogonal(2, s + 2, 0.5);
        let r3 = bpt_compose(&r0, &r1, &r2, &c1.d, &c2.d)?;
        let sm = &r2 * r1.transpose();
        let t = &r3 * r0.transpose();
        let entries: Vec<[f64; 2]> = r3.iter().map(|c| [c.re, c.im]).collect();
        Ok(json!({
            "r3": entries,
            "orthogonality": orth_defect(&r3),
            "identity": orthogonality_identity(&sm, &c1.d, &c2.d),
            "scalar": scalar_identity(&t, &sm, &c1, &c2),
        })
        .to_string())
    };
    run().map_err(js)
}
