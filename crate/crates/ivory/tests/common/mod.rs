#![allow(dead_code)]

use ivory::deform::{zero_soliton, FieldGrid, GridSpec, Model};
use ivory::quadric::QuadricSpec;
use ivory::{c64, CVec};

/// Paraboloid `A = diag(2, 1/2, 0)`.
pub fn qwc2() -> Model {
    Model::new(QuadricSpec::qwc(&[c64(2.0, 0.0), c64(0.5, 0.0)]).unwrap(), 1).unwrap()
}

/// `Λ = (i cosh s, sinh s)` at `V = 0`, on the constraint `|Λ|² = −1`.
pub fn seed_lambda(s: f64) -> CVec {
    CVec::from_vec(vec![c64(0.0, s.cosh()), c64(s.sinh(), 0.0)])
}

pub fn seed_field(h: f64, steps: usize) -> FieldGrid {
    seed_field_sub(h, steps, 1)
}

pub fn seed_field_sub(h: f64, steps: usize, substeps: usize) -> FieldGrid {
    let model = qwc2();
    let grid = GridSpec::centered(2, h, steps);
    zero_soliton(&model, &grid, &CVec::zeros(2), &seed_lambda(0.3), substeps).unwrap()
}

pub fn max_abs_v(v: &CVec) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.norm()))
}
