use std::process::Command;

use ivory::cli::*;
use ivory::quadric::Kind;
use ivory::Error;

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ivory"))
}

#[test]
fn unit_sphere_ivory_check_passes() {
    let mut cfg = ScenarioConfig::new(Scenario::IvoryCheck);
    cfg.quadric = Some(QuadricConfig::diagonal(Kind::QC, &[1.0, 1.0, 1.0]));
    cfg.samples = Some(200);
    let r = run_scenario(&cfg).unwrap();
    assert!(r.pass);
    for name in ["ivory-theorem", "tc-symmetry", "ruling-length", "segment-ruling-angle", "polar-ruling-angle"] {
        let c = r.check(name).unwrap();
        assert!(c.value.unwrap() < 1e-10, "{name}: {c:?}");
    }
    assert_eq!(r.exit_code(), 0);
}

#[test]
fn equal_spectral_parameters_are_a_config_error() {
    let mut cfg = ScenarioConfig::new(Scenario::Bpt);
    cfg.z = vec![[0.4, 0.3], [0.4, 0.3]];
    assert!(matches!(run_scenario(&cfg), Err(Error::Config(_))));
}

#[test]
fn config_schema_violations() {
    let bad = [
        r#"{"scenario":"bpt","z":[[0.4,0.3]],"extra":1}"#,
        r#"{"scenario":"nope"}"#,
        r#"{"scenario":"bpt","z":[[0.4]]}"#,
    ];
    for b in bad {
        assert!(serde_json::from_str::<ScenarioConfig>(b).is_err(), "{b}");
    }
    let cases: [(&str, fn(&mut ScenarioConfig)); 6] = [
        ("grid", |c| c.grid = Some(GridConfig { h: -0.1, steps: 16 })),
        ("steps", |c| c.grid = Some(GridConfig { h: 0.1, steps: 3 })),
        ("tolerance", |c| {
            c.tolerances.insert("no_such".into(), 1.0);
        }),
        ("scale", |c| c.tol_scale = Some(0.0)),
        ("zero z", |c| c.z = vec![[0.0, 0.0]]),
        ("kind", |c| c.quadric = Some(QuadricConfig::diagonal(Kind::QC, &[1.0, 2.0]))),
    ];
    for (what, f) in cases {
        let mut c = ScenarioConfig::new(Scenario::BacklundQwc);
        f(&mut c);
        assert!(matches!(run_scenario(&c), Err(Error::Config(_))), "{what}");
    }
}

#[test]
fn non_diagonal_a_prime_skips_dependents() {
    let cfg: ScenarioConfig = serde_json::from_str(
        r#"{"scenario":"deform-0soliton","quadric":{"kind":"IQWC","blocks":[{"a":[0,0],"p":2},{"a":[1,0],"p":1}]}}"#,
    )
    .unwrap();
    let r = run_scenario(&cfg).unwrap();
    assert_eq!(r.preconditions["peterson_admissible"], false);
    for name in ["prime-integral-drift", "defqwc", "forms-gauss"] {
        assert_eq!(r.check(name).unwrap().status, Status::Skipped, "{name}");
    }
}

#[test]
fn plotdata_needs_a_run() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(emit_plotdata(dir.path()), Err(Error::MissingRun(_))));
}

#[test]
fn plotdata_is_reproducible() {
    let cfg = ScenarioConfig::new(Scenario::Deform0Soliton);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = write_run(&run_scenario(&cfg).unwrap(), a.path()).unwrap();
    let fb = write_run(&run_with_threads(&cfg, Some(1)).unwrap(), b.path()).unwrap();
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
    let names: Vec<_> = fa.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert!(names.contains(&"convergence_prime_integral.csv".to_string()));
    let conv = std::fs::read_to_string(a.path().join("convergence_prime_integral.csv")).unwrap();
    assert!(conv.starts_with("h,drift\n"));
    let again = emit_plotdata(a.path()).unwrap();
    assert_eq!(std::fs::read(&again[0]).unwrap(), std::fs::read(&fa[0]).unwrap());
}

#[test]
fn rk4_drift_converges_at_fourth_order() {
    let r = run_scenario(&ScenarioConfig::new(Scenario::Deform0Soliton)).unwrap();
    let slope = r.check("prime-integral-slope").unwrap().value.unwrap();
    assert!((slope - 4.0).abs() < 1.2, "{slope}");
    let r = run_scenario(&ScenarioConfig::new(Scenario::Bpt)).unwrap();
    let slope = r.check("bpt-riccati-slope").unwrap().value.unwrap();
    assert!((slope - 2.0).abs() < 0.3, "{slope}");
}

#[test]
fn report_carries_tolerances_and_provenance() {
    let mut cfg = ScenarioConfig::new(Scenario::Elliptic);
    cfg.tol_scale = Some(10.0);
    let r = run_scenario(&cfg).unwrap();
    assert_eq!(r.tolerances.len(), DEFAULT_TOLERANCES.len());
    assert_eq!(r.tolerances["elliptic_root"], 1e-7);
    assert_eq!(r.tolerances["correlation"], 0.0999);
    assert_eq!(r.provenance.config_hash.len(), 64);
    assert_eq!(r.provenance.seed, 6);
    let again = run_scenario(&cfg).unwrap();
    assert_eq!(r.provenance.config_hash, again.provenance.config_hash);
    cfg.seed = Some(7);
    assert_ne!(run_scenario(&cfg).unwrap().provenance.config_hash, r.provenance.config_hash);
}

#[test]
fn exit_codes() {
    let ok = exe().args(["--scenario", "elliptic"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"scenario":"bpt","z":[[0.4,0.3],[0.4,0.3]]}"#).unwrap();
    let bad = exe().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let mismatch = exe().args(["--scenario", "m3", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(mismatch.status.code(), Some(2));
    let failing = exe().args(["--scenario", "elliptic", "--tol-scale", "1e-12"]).output().unwrap();
    assert_eq!(failing.status.code(), Some(1));
    let missing = exe().arg("--plotdata").arg(dir.path()).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let out = dir.path().join("run");
    let run = exe().args(["--scenario", "elliptic", "--threads", "2", "--out"]).arg(&out).output().unwrap();
    assert_eq!(run.status.code(), Some(0));
    assert!(out.join("report.json").exists() && out.join("elliptic_roots.csv").exists());
}
