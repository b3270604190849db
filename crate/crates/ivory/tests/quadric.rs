use ivory::quadric::*;
use ivory::sjcore::{bsq, f, conj, max_abs, rand_c, rng, vmax_abs, SJBlock, SJSpec};
use ivory::{c64, CMat, CVec, Error, C64};
use proptest::prelude::*;

fn v(xs: &[(f64, f64)]) -> CVec {
    CVec::from_vec(xs.iter().map(|&(a, b)| c64(a, b)).collect())
}

fn lmap_for(q: &QuadricSpec) -> Option<LMap> {
    (q.kind != Kind::QC).then(|| build_lmap(q, 7).unwrap())
}

#[test]
fn confocal_evaluation_cases() {
    let s = QuadricSpec::unit_sphere(2);
    assert_eq!(eval_confocal(&s, c64(0.0, 0.0), &v(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0)])).unwrap(), c64(0.0, 0.0));
    let q = eval_confocal(&s, c64(0.75, 0.0), &v(&[(0.5, 0.0), (0.0, 0.0), (0.0, 0.0)])).unwrap();
    assert!(q.norm() < 1e-15);
    let p = QuadricSpec::qwc(&[c64(1.0, 0.0)]).unwrap();
    assert!(eval_confocal(&p, c64(0.0, 0.0), &v(&[(1.0, 0.0), (0.5, 0.0)])).unwrap().norm() < 1e-15);
    assert!(matches!(eval_confocal(&s, c64(1.0, 0.0), &v(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0)])), Err(Error::SingularConfocal(_))));
}

#[test]
fn kind_invariants_are_enforced() {
    assert!(QuadricSpec::qc(&[c64(1.0, 0.0), c64(0.0, 0.0)]).is_err());
    let bad = SJSpec::new(vec![SJBlock::new(c64(0.0, 0.0), 1), SJBlock::new(c64(1.0, 0.0), 1)]);
    assert!(QuadricSpec::new(Kind::QWC, bad).is_err());
    assert!(QuadricSpec::iqwc(1, &[c64(1.0, 0.0)]).is_err());
}

#[test]
fn ivory_map_cases() {
    let s = QuadricSpec::unit_sphere(2);
    let x = v(&[(0.6, 0.0), (0.0, 0.0), (0.8, 0.0)]);
    assert_eq!(ivory_map(&s, c64(0.0, 0.0), &x).unwrap(), x);
    let z = c64(0.3, 0.2);
    let xz = ivory_map(&s, z, &x).unwrap();
    assert!(vmax_abs(&(xz - &x * (c64(1.0, 0.0) - z).sqrt())) < 1e-15);
    assert!(matches!(ivory_map(&s, z, &v(&[(2.0, 0.0), (0.0, 0.0), (0.0, 0.0)])), Err(Error::OffQuadric(_))));

    let p = QuadricSpec::qwc(&[c64(2.0, 0.0), c64(0.5, 0.0)]).unwrap();
    let mut want = CVec::zeros(3);
    want[2] = z / 2.0;
    assert!(vmax_abs(&(p.c_of_z(z) - want)) < 1e-15);

    let iq = QuadricSpec::iqwc(2, &[c64(1.5, 0.0)]).unwrap();
    let f1 = f(1, 3);
    let want = conj(&f1) * (z / 2.0) + &f1 * (z * z / 8.0);
    assert!(vmax_abs(&(iq.c_of_z(z) - want)) < 1e-15);
    assert!((conj(&f1).dot(&iq.c_of_z(z)) - z * z / 8.0).norm() < 1e-15);
}

#[test]
fn chart_cases() {
    let s = QuadricSpec::unit_sphere(2);
    let x = chart_to_ambient(&s, None, &CVec::zeros(2)).unwrap();
    assert!(vmax_abs(&(x - v(&[(0.0, 0.0), (0.0, 0.0), (-1.0, 0.0)]))) < 1e-15);
    let iso = v(&[(0.0, 1.0), (0.0, 0.0)]);
    assert!(matches!(chart_to_ambient(&s, None, &iso), Err(Error::ChartSingularity)));
    let p = QuadricSpec::qwc(&[c64(1.0, 0.0)]).unwrap();
    let lm = build_lmap(&p, 0).unwrap();
    let x = chart_to_ambient(&p, Some(&lm), &v(&[(1.0, 0.0)])).unwrap();
    assert!(vmax_abs(&(x - v(&[(1.0, 0.0), (0.5, 0.0)]))) < 1e-15);

    let (n0, h) = chart_normal_h(&s, None, &v(&[(0.2, 0.1), (-0.4, 0.3)])).unwrap();
    let xs = chart_to_ambient(&s, None, &v(&[(0.2, 0.1), (-0.4, 0.3)])).unwrap();
    assert!((h - 1.0).norm() < 1e-14 && vmax_abs(&(n0 - xs)) < 1e-14);
    let (n0, h) = chart_normal_h(&p, Some(&lm), &v(&[(0.0, 0.0)])).unwrap();
    assert!((h - 1.0).norm() < 1e-15);
    assert!(vmax_abs(&(n0 - v(&[(0.0, 0.0), (-1.0, 0.0)]))) < 1e-15);
    // H = 1 + |V|² vanishes at V = i.
    assert!(matches!(chart_normal_h(&p, Some(&lm), &v(&[(0.0, 1.0)])), Err(Error::IsotropicNormal(_))));
}

#[test]
fn charts_land_on_the_quadric_with_unit_normals() {
    for (k, kind) in [Kind::QC, Kind::QWC, Kind::IQWC].into_iter().enumerate() {
        for n in [2, 3] {
            let q = random_quadric(kind, n, 2, 40 + k as u64).unwrap();
            let lm = lmap_for(&q);
            let mut g = rng(3);
            for _ in 0..50 {
                let vv = ivory::sjcore::rand_cvec(&mut g, n, 0.6);
                let x = chart_to_ambient(&q, lm.as_ref(), &vv).unwrap();
                assert!(q.eval_q0(&x).norm() < 1e-12);
                let (n0, _) = chart_normal_h(&q, lm.as_ref(), &vv).unwrap();
                assert!((bsq(&n0) - 1.0).norm() < 1e-12);
                let jac = chart_jacobian(&q, lm.as_ref(), &vv).unwrap();
                assert!(vmax_abs(&(jac.transpose() * &n0)) < 1e-10);
            }
        }
    }
}

#[test]
fn lmap_cases() {
    let p = QuadricSpec::qwc(&[c64(1.0, 0.0)]).unwrap();
    assert!(max_abs(&(build_lmap(&p, 0).unwrap().l - CMat::identity(2, 2))) < 1e-15);
    let p = QuadricSpec::qwc(&[c64(4.0, 0.0)]).unwrap();
    let l = build_lmap(&p, 0).unwrap().l;
    assert!(max_abs(&(l - CMat::from_diagonal(&v(&[(0.5, 0.0), (1.0, 0.0)])))) < 1e-15);
    let j2 = QuadricSpec::new(Kind::IQWC, SJSpec::new(vec![SJBlock::new(c64(0.0, 0.0), 2)])).unwrap();
    let lm = build_lmap(&j2, 3).unwrap();
    for (name, r) in lm.invariants(&j2, c64(0.3, -0.2)).unwrap() {
        assert!(r < 1e-9, "{name} {r:e}");
    }
    assert!(build_lmap(&QuadricSpec::unit_sphere(2), 0).is_err());
}

#[test]
fn iqwc_parametrization_invariants() {
    let mut g = rng(21);
    for p in [2, 3] {
        for n in [p, p + 1] {
            for s in 0..5 {
                let q = random_quadric(Kind::IQWC, n, p, 100 * p as u64 + s).unwrap();
                let lm = build_lmap(&q, s).unwrap();
                let z = rand_c(&mut g, 0.4);
                for (name, r) in lm.invariants(&q, z).unwrap() {
                    assert!(r < 1e-9, "p={p} n={n} {name} {r:e}");
                }
            }
        }
    }
}

/// Worst residual of every Ivory identity over `count` random samples.
fn ivory_identities(kind: Kind, n: usize, count: usize, seed: u64) -> [f64; 5] {
    let q = random_quadric(kind, n, 2, seed).unwrap();
    let lm = lmap_for(&q);
    let mut g = rng(seed + 1);
    let mut worst = [0.0f64; 5];
    for _ in 0..count {
        let z = rand_c(&mut g, 0.4);
        let xa = random_point(&q, lm.as_ref(), &mut g, 0.7).unwrap();
        let xb = random_point(&q, lm.as_ref(), &mut g, 0.7).unwrap();
        let w = random_ruling(&q, &xa, &mut g).unwrap();
        let wh = random_polar(&q, &w, &mut g);
        let r = [
            ivory_theorem_residual(&q, z, &xa, &xb).unwrap(),
            tc_symmetry_residual(&q, z, &xa, &xb).unwrap(),
            ruling_length_residual(&q, z, &xa, &w).unwrap(),
            segment_ruling_angle_residual(&q, z, &xa, &xb, &w).unwrap(),
            polar_ruling_angle_residual(&q, z, &w, &wh).unwrap(),
        ];
        for k in 0..5 {
            worst[k] = worst[k].max(r[k]);
        }
    }
    worst
}

#[test]
fn ivory_identities_hold_for_every_kind() {
    for (k, kind) in [Kind::QC, Kind::QWC, Kind::IQWC].into_iter().enumerate() {
        for n in [2, 3] {
            let w = ivory_identities(kind, n, 1000, 10 * k as u64 + n as u64);
            assert!(w.iter().all(|&r| r < 1e-10), "{kind:?} n={n} {w:?}");
        }
    }
}

#[test]
fn trivial_ivory_cases() {
    let q = random_quadric(Kind::QC, 2, 2, 1).unwrap();
    let mut g = rng(2);
    let x = random_point(&q, None, &mut g, 0.5).unwrap();
    let y = random_point(&q, None, &mut g, 0.5).unwrap();
    assert_eq!(ivory_theorem_residual(&q, c64(0.3, 0.1), &x, &x).unwrap(), 0.0);
    assert_eq!(tc_symmetry_residual(&q, c64(0.3, 0.1), &x, &x).unwrap(), 0.0);
    assert!(ivory_theorem_residual(&q, c64(0.0, 0.0), &x, &y).unwrap() < 1e-14);
    assert_eq!(ruling_length_residual(&q, c64(0.3, 0.0), &x, &CVec::zeros(3)).unwrap(), 0.0);
    let not_ruling = CVec::from_element(3, c64(1.0, 0.0));
    assert!(matches!(ruling_length_residual(&q, c64(0.3, 0.0), &x, &not_ruling), Err(Error::NotRulingDirection(_))));
}

#[test]
fn real_hyperboloid_ruling() {
    // x² + y² − z² = 1 carries the real ruling (1, t, t) through (1, 0, 0).
    let q = QuadricSpec::qc(&[c64(1.0, 0.0), c64(1.0, 0.0), c64(-1.0, 0.0)]).unwrap();
    let x = v(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
    let w = v(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0)]);
    for z in [c64(0.3, 0.0), c64(-0.7, 0.4)] {
        assert!(ruling_length_residual(&q, z, &x, &w).unwrap() < 1e-14);
    }
}

#[test]
fn lame_orthogonality() {
    let mut count = 0;
    let mut worst: f64 = 0.0;
    for (k, kind) in [Kind::QC, Kind::QWC, Kind::IQWC].into_iter().enumerate() {
        let q = random_quadric(kind, 2, 2, 70 + k as u64).unwrap();
        let lm = lmap_for(&q);
        let mut g = rng(71 + k as u64);
        while count < 40 * (k + 1) {
            let z1 = rand_c(&mut g, 0.3);
            let z2 = rand_c(&mut g, 0.3);
            let start = random_point(&q, lm.as_ref(), &mut g, 0.6).unwrap();
            let Some(x) = lame_intersection(&q, z1, z2, &start) else { continue };
            worst = worst.max(confocal_orthogonality_residual(&q, z1, z2, &x).unwrap());
            count += 1;
        }
    }
    assert!(worst < 1e-10, "{worst:e}");
    let s = QuadricSpec::unit_sphere(2);
    let x = v(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
    assert!(confocal_orthogonality_residual(&s, c64(0.2, 0.0), c64(0.2, 0.0), &x).is_err());
}

#[test]
fn ellipse_family_is_orthogonal() {
    let q = QuadricSpec::qc(&[c64(0.25, 0.0), c64(1.0, 0.0)]).unwrap();
    let (z1, z2) = (c64(-1.0, 0.0), c64(2.0, 0.0));
    let x = lame_intersection(&q, z1, z2, &v(&[(1.5, 0.1), (0.4, -0.1)])).unwrap();
    assert!(confocal_orthogonality_residual(&q, z1, z2, &x).unwrap() < 1e-10);
}

#[test]
fn elliptic_coordinate_cases() {
    let q = QuadricSpec::qc(&[c64(0.25, 0.0), c64(1.0, 0.0)]).unwrap();
    let x = v(&[(2.1, 0.1), (0.3, 0.0)]);
    let roots = elliptic_coordinates(&q, &x).unwrap();
    assert_eq!(roots.len(), 2);
    // (1 − z/4)(1 − z)Q_z(x) is a quadratic in z; its roots are the coordinates.
    let (a, b) = (x[0] * x[0], x[1] * x[1]);
    let one = c64(1.0, 0.0);
    for &z in &roots {
        let p = a * 0.25 * (one - z) + b * (one - z * 0.25) - (one - z * 0.25) * (one - z);
        assert!(p.norm() < 1e-10);
        assert!(eval_confocal(&q, z, &x).unwrap().norm() < 1e-8);
    }

    let q = QuadricSpec::qc(&[c64(0.7, 0.2), c64(1.3, 0.0), c64(-0.4, 0.5)]).unwrap();
    let mut g = rng(6);
    let x0 = random_point(&q, None, &mut g, 0.5).unwrap();
    let roots = elliptic_coordinates(&q, &x0).unwrap();
    assert_eq!(roots.len(), 3);
    assert!(roots[0].norm() < 1e-10);
}

#[test]
fn elliptic_coordinates_flag_multiple_roots() {
    // A point of x² + 2y² = 1 whose normal (x, 2y) is isotropic.
    let q = QuadricSpec::qc(&[c64(1.0, 0.0), c64(2.0, 0.0)]).unwrap();
    let x2 = (c64(-0.5, 0.0)).sqrt();
    let x1 = (c64(2.0, 0.0)).sqrt();
    let x = CVec::from_vec(vec![x1, x2]);
    assert!(q.eval_q0(&x).norm() < 1e-14);
    assert!(matches!(elliptic_coordinates(&q, &x), Err(Error::MultipleRoot(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn ivory_image_is_on_the_confocal(seed in 0u64..10_000, kind in 0usize..3, zr in -0.4f64..0.4, zi in -0.4f64..0.4) {
        let kind = [Kind::QC, Kind::QWC, Kind::IQWC][kind];
        let q = random_quadric(kind, 3, 2, seed).unwrap();
        let lm = lmap_for(&q);
        let mut g = rng(seed);
        let x = random_point(&q, lm.as_ref(), &mut g, 0.7).unwrap();
        let z: C64 = c64(zr, zi);
        let xz = ivory_map(&q, z, &x).unwrap();
        prop_assert!(eval_confocal(&q, z, &xz).unwrap().norm() < 1e-10);
    }
}
