mod common;

use common::*;
use ivory::deform::*;
use ivory::quadric::QuadricSpec;
use ivory::sjcore::bdot;
use ivory::{c64, CMat, CVec, Error};

#[test]
fn zero_soliton_keeps_prime_integral() {
    let fg = seed_field(0.02, 32);
    let d1 = fg.prime_integral_drift();
    let d2 = seed_field(0.01, 63).prime_integral_drift();
    println!("drift h=0.02 {d1:e}, h=0.01 {d2:e}");
    assert!(d1 < 1e-8);
    assert!(d1 / d2 >= 12.0);
}

#[test]
fn zero_soliton_solves_the_r_equations() {
    let fg = seed_field(0.02, 32);
    let r = residual_defqwc(&fg);
    assert!(r.max < 1e-8, "{r:?}");
    let (sr, count) = system_residual(&fg, 4);
    assert!(count > 0);
    assert!(sr < 1e-6, "{sr:e}");
}

#[test]
fn zero_soliton_rejects_bad_inputs() {
    let model = qwc2();
    let grid = GridSpec::centered(2, 0.02, 8);
    let lam = CVec::from_vec(vec![c64(1.0, 0.0), c64(0.0, 0.0)]);
    let err = zero_soliton(&model, &grid, &CVec::zeros(2), &lam, 1).unwrap_err();
    assert!(matches!(err, Error::PrimeIntegralViolation(_)));
    let lam = CVec::from_vec(vec![c64(0.0, 1.0), c64(0.0, 0.0)]);
    let err = zero_soliton(&model, &grid, &CVec::zeros(2), &lam, 1).unwrap_err();
    assert!(matches!(err, Error::StepFailure(_)));
}

#[test]
fn non_diagonal_curvature_is_the_residual() {
    let mut fg = seed_field(0.02, 10);
    let mut a = CMat::identity(2, 2);
    a[(0, 1)] = c64(0.1, 0.0);
    a[(1, 0)] = c64(0.1, 0.0);
    fg.model.sys = System::Graph { a, b: CVec::zeros(2), bsq: c64(1.0, 0.0) };
    let (ok, off) = peterson_admissible(&fg.model, 1e-12).unwrap();
    assert!(!ok);
    assert!((off - 0.1).abs() < 1e-15);
    let r = residual_defqwc(&fg);
    assert!((r.two_form - 0.1).abs() < 1e-14);
}

#[test]
fn chart_h_is_the_potential() {
    let model = qwc2();
    let iq = Model::new(QuadricSpec::iqwc(2, &[c64(0.7, 0.2)]).unwrap(), 3).unwrap();
    for m in [&model, &iq] {
        for k in 0..5 {
            let v = CVec::from_fn(2, |i, _| c64(0.1 * (k + i) as f64, -0.05 * k as f64));
            let (n0, h) = m.normal_h(&v).unwrap();
            assert!((h - m.sys.potential(&v)).norm() < 1e-12);
            assert!((bdot(&n0, &n0) - 1.0).norm() < 1e-12);
            assert!(max_abs_v(&(m.jacobian(&v).unwrap().transpose() * &n0)) < 1e-12);
        }
    }
}

#[test]
fn distinguished_field_closed_forms() {
    let model = qwc2();
    let lm = model.lm.clone().unwrap();
    let v = CVec::from_vec(vec![c64(0.3, 0.1), c64(-0.2, 0.05)]);
    let c = distinguished_coefficients(&model, &v).unwrap();
    let lhs = model.jacobian(&v).unwrap() * &c;
    let (n0, h) = model.normal_h(&v).unwrap();
    let rhs = &n0 / ivory::sjcore::bsqrt(h) + lm.l.column(2);
    assert!(max_abs_v(&(lhs - rhs)) < 1e-12);

    let qc = Model::new(QuadricSpec::qc(&[c64(1.5, 0.0), c64(0.8, 0.1), c64(2.0, 0.0)]).unwrap(), 0).unwrap();
    let c = distinguished_coefficients(&qc, &v).unwrap();
    let lhs = qc.jacobian(&v).unwrap() * &c;
    let (n0, h) = qc.normal_h(&v).unwrap();
    let s = bdot(&v, &v) + 1.0;
    let rhs = (&n0 / ivory::sjcore::bsqrt(h) - qc.chart(&v).unwrap()) * (c64(4.0, 0.0) / (s * s));
    assert!(max_abs_v(&(lhs - rhs)) < 1e-12);
}

#[test]
fn second_form_matches_ambient_differences() {
    let fg = seed_field(0.01, 21);
    let ff = forms_assemble(&fg, 5).unwrap();
    let x: Vec<CVec> = fg.v.iter().map(|v| fg.model.chart(v).unwrap()).collect();
    let idx = fg.grid.base_index();
    let pf = &ff.nodes[idx].as_ref().unwrap().pf;
    let g = &fg.grid;
    for j in 0..2 {
        for k in 0..2 {
            let xjk = if j == k {
                let h = g.h(j);
                (&x[g.shift(idx, j, 1).unwrap()] - &x[idx] * c64(2.0, 0.0) + &x[g.shift(idx, j, -1).unwrap()]) / c64(h * h, 0.0)
            } else {
                let pp = g.shift(g.shift(idx, j, 1).unwrap(), k, 1).unwrap();
                let pm = g.shift(g.shift(idx, j, 1).unwrap(), k, -1).unwrap();
                let mp = g.shift(g.shift(idx, j, -1).unwrap(), k, 1).unwrap();
                let mm = g.shift(g.shift(idx, j, -1).unwrap(), k, -1).unwrap();
                (&x[pp] - &x[pm] - &x[mp] + &x[mm]) / c64(4.0 * g.h(j) * g.h(k), 0.0)
            };
            let want = if j == k { pf.h0[j] } else { c64(0.0, 0.0) };
            assert!((bdot(&pf.n0, &xjk) - want).norm() < 1e-3, "{j}{k}");
        }
    }
}

#[test]
fn forms_on_zero_soliton() {
    let fg = seed_field(0.02, 36);
    let ff = forms_assemble(&fg, 5).unwrap();
    let r = &ff.residuals;
    println!("{r:?}");
    assert!(r.samples > 400);
    assert!(r.gauss < 1e-6);
    assert!(r.gauss_deformed < 1e-6);
    assert!(r.codazzi < 1e-6);
    assert!(r.cmp < 1e-6);
    assert!(r.joined_orth < 1e-8);
    assert!(r.syst0 < 1e-8);
    assert!(r.gamma_closed_form < 1e-6);
}

#[test]
fn forms_on_zero_soliton_n3() {
    let model = Model::new(QuadricSpec::qwc(&[c64(2.0, 0.0), c64(0.5, 0.0), c64(1.2, 0.3)]).unwrap(), 1).unwrap();
    let grid = GridSpec::centered(3, 0.03, 16);
    let lam = model
        .sys
        .lambda_on_constraint(&CVec::zeros(3), &CVec::from_vec(vec![c64(1.0, 0.2), c64(0.7, -0.1), c64(0.4, 0.3)]))
        .unwrap();
    let fg = zero_soliton(&model, &grid, &CVec::zeros(3), &lam, 1).unwrap();
    assert!(residual_defqwc(&fg).max < 1e-8);
    let ff = forms_assemble(&fg, 5).unwrap();
    let r = &ff.residuals;
    println!("{r:?}");
    assert!(r.samples > 0);
    assert!(r.gauss < 1e-5);
    assert!(r.gamma_distinct < 1e-5);
    assert!(r.cmp < 1e-5);
    assert!(r.ricci < 1e-5);
}

#[test]
fn quadrature_recovers_exact_forms() {
    let grid = GridSpec::centered(2, 0.05, 21);
    let f = |u: &[f64]| CVec::from_vec(vec![c64((u[0] * 1.3).sin() * u[1].cos(), u[0] * u[1]), c64(u[0].exp(), 0.0)]);
    let form: Vec<CMat> = (0..grid.len())
        .map(|i| {
            let u = grid.u(i);
            let d0 = CVec::from_vec(vec![c64(1.3 * (u[0] * 1.3).cos() * u[1].cos(), u[1]), c64(u[0].exp(), 0.0)]);
            let d1 = CVec::from_vec(vec![c64(-(u[0] * 1.3).sin() * u[1].sin(), u[0]), c64(0.0, 0.0)]);
            CMat::from_columns(&[d0, d1])
        })
        .collect();
    let base = f(&grid.u(grid.base_index()));
    let q = quadrature_1form(&grid, &form, &base, 1e-6).unwrap();
    let err = (0..grid.len()).map(|i| max_abs_v(&(&q.positions[i] - f(&grid.u(i))))).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err:e}");

    let bad: Vec<CMat> = (0..grid.len())
        .map(|i| {
            let u = grid.u(i);
            CMat::from_columns(&[CVec::from_element(1, c64(u[1], 0.0)), CVec::from_element(1, c64(0.0, 0.0))])
        })
        .collect();
    let err = quadrature_1form(&grid, &bad, &CVec::zeros(1), 1e-5).unwrap_err();
    assert!(matches!(err, Error::ClosureViolation(_)));
}

#[test]
fn quadrature_of_chart_differential() {
    let fg = seed_field(0.02, 32);
    let form: Vec<CMat> = (0..fg.grid.len())
        .map(|i| fg.model.jacobian(&fg.v[i]).unwrap() * CMat::from_diagonal(&fg.lam[i]))
        .collect();
    let b = fg.grid.base_index();
    let q = quadrature_1form(&fg.grid, &form, &fg.model.chart(&fg.v[b]).unwrap(), 1e-5).unwrap();
    let err = (0..fg.grid.len())
        .map(|i| max_abs_v(&(&q.positions[i] - fg.model.chart(&fg.v[i]).unwrap())))
        .fold(0.0, f64::max);
    assert!(err < 1e-8, "{err:e}");
}

#[test]
fn seed_embedding_is_isometric() {
    let fg = seed_field(0.02, 32);
    let fr = embed_zero_soliton(&fg, 5, 1).unwrap();
    let ff = forms_assemble(&fg, 5).unwrap();
    let g: Vec<Option<CMat>> = ff.nodes.iter().map(|n| n.as_ref().map(|n| n.pf.g.clone())).collect();
    let (tn, gram) = fr.frame_defects(&g);
    println!("closure {:e} tn {tn:e} gram {gram:e}", fr.closure);
    assert!(fr.closure < 1e-6);
    assert!(tn < 1e-8 && gram < 1e-8);
    let mut worst: f64 = 0.0;
    for i in 0..fg.grid.len() {
        if !fg.grid.interior(i, 2) {
            continue;
        }
        let d: Vec<CVec> = (0..2).map(|a| fd(&fg.grid, &fr.x, i, a, 4).unwrap()).collect();
        let gi = g[i].as_ref().unwrap();
        for j in 0..2 {
            for k in 0..2 {
                worst = worst.max((bdot(&d[j], &d[k]) - gi[(j, k)]).norm());
            }
        }
    }
    assert!(worst < 1e-6, "{worst:e}");
    let x0: Vec<CVec> = fg.v.iter().map(|v| fg.model.chart(v).unwrap()).collect();
    let far = fg.grid.index(&[0, 0]);
    let pad = |v: &CVec| CVec::from_fn(3, |i, _| v[i]);
    assert!(max_abs_v(&(&fr.x[far] - pad(&x0[far]))) > 1e-4, "the deformation is not trivial");
}

#[test]
fn sine_gordon_reduction() {
    let q = QuadricSpec::qwc(&[c64(2.0, 0.0), c64(1.0, 0.0)]).unwrap();
    let model = Model::new(q, 0).unwrap();
    let grid = GridSpec::centered(2, 0.02, 24);
    let mut rng = ivory::sjcore::rng(9);
    use rand::Rng;
    for _ in 0..3 {
        let c: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let phi: Vec<f64> = (0..grid.len())
            .map(|i| {
                let u = grid.u(i);
                c[0] + c[1] * (2.0 * u[0] + c[2]).sin() + c[3] * u[0] * u[1] + c[4] * (u[1] * 3.0).cos() + c[5] * u[0] * u[0]
            })
            .collect();
        let fg = rotation_field(&model, &grid, &phi);
        let mut worst: f64 = 0.0;
        for i in 0..grid.len() {
            if !grid.interior(i, 2) {
                continue;
            }
            let m = def_two_form(&fg, i, 2).unwrap();
            let sg = sine_gordon_residual(&grid, &phi, i).unwrap();
            worst = worst.max((m[(0, 1)] + sg).norm()).max((m[(1, 0)] + sg).norm());
        }
        assert!(worst < 1e-2, "{worst:e}");
    }
}
