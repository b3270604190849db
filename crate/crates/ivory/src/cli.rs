//! Scenario runner: a JSON config in, a checked report and plot tables out.
//!
//! Every scenario records named checks. Criterion checks aggregate the checks
//! that make up one acceptance criterion; their value is the worst ratio of a
//! component's value to its tolerance.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backlund::{
    algebraic_transform, degenerate_seed_checks, field_transform_checks, integrate_backlund, integrate_backlund_qc_line,
    leaf_embed, leaf_field, qc_line_checks, riccati_residual_node, riccati_rhs_qc, riccati_rhs_qc_expanded,
    ruling_facet_check, transform_checks, asymptotic_correspondence_check, BacklundContext, Node, QCAux,
};
use crate::deform::{
    def_two_form, embed_zero_soliton, forms_assemble, peterson_admissible, point_forms, residual_defqwc, rotation_field,
    sine_gordon_residual, system_residual_node, zero_soliton, FieldGrid, GridSpec, Model,
};
use crate::permute::{
    bpt_compose, bpt_verify, fill_order_columns_first, fill_order_rows_first, lattice_build, lattice_difference,
    lattice_verify, m3_r7, orthogonality_identity, scalar_identity, BianchiQuad, Lattice, LATTICE_SUBSTEPS,
};
use crate::quadric::{
    build_lmap, confocal_orthogonality_residual, elliptic_coordinates, eval_confocal, ivory_theorem_residual,
    lame_intersection, polar_ruling_angle_residual, random_point, random_polar, random_quadric, random_ruling,
    ruling_length_residual, segment_ruling_angle_residual, tc_symmetry_residual, Kind, LMap, QuadricSpec,
};
use crate::sjcore::{
    build_sj, max_abs, orth_defect, rand_c, rand_cvec, random_antisymmetric, random_orthogonal, random_sjspec, rng,
    sqrt_sj, vmax_abs, SJBlock, SJSpec,
};
use crate::{c64, CMat, CVec, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    IvoryCheck,
    Elliptic,
    #[serde(rename = "deform-0soliton")]
    #[value(name = "deform-0soliton")]
    Deform0Soliton,
    BacklundQwc,
    BacklundQc,
    LeafEmbed,
    Bpt,
    M3,
    Lattice,
    SineGordon,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::IvoryCheck,
        Scenario::Elliptic,
        Scenario::Deform0Soliton,
        Scenario::BacklundQwc,
        Scenario::BacklundQc,
        Scenario::LeafEmbed,
        Scenario::Bpt,
        Scenario::M3,
        Scenario::Lattice,
        Scenario::SineGordon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::IvoryCheck => "ivory-check",
            Scenario::Elliptic => "elliptic",
            Scenario::Deform0Soliton => "deform-0soliton",
            Scenario::BacklundQwc => "backlund-qwc",
            Scenario::BacklundQc => "backlund-qc",
            Scenario::LeafEmbed => "leaf-embed",
            Scenario::Bpt => "bpt",
            Scenario::M3 => "m3",
            Scenario::Lattice => "lattice",
            Scenario::SineGordon => "sine-gordon",
        }
    }

    fn needs_grid(self) -> bool {
        !matches!(self, Scenario::IvoryCheck | Scenario::Elliptic)
    }

    fn min_z(self) -> usize {
        match self {
            Scenario::BacklundQwc | Scenario::BacklundQc | Scenario::LeafEmbed => 1,
            Scenario::Bpt | Scenario::Lattice => 2,
            Scenario::M3 => 3,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub a: [f64; 2],
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadricConfig {
    pub kind: Kind,
    pub blocks: Vec<BlockConfig>,
}

impl QuadricConfig {
    pub fn diagonal(kind: Kind, a: &[f64]) -> Self {
        QuadricConfig { kind, blocks: a.iter().map(|&x| BlockConfig { a: [x, 0.0], p: 1 }).collect() }
    }

    pub fn spec(&self) -> Result<QuadricSpec> {
        if self.blocks.is_empty() || self.blocks.iter().any(|b| b.p == 0) {
            return Err(Error::Config("quadric blocks must be non-empty with p >= 1".into()));
        }
        if self.blocks.iter().any(|b| !b.a[0].is_finite() || !b.a[1].is_finite()) {
            return Err(Error::Config("quadric eigenvalues must be finite".into()));
        }
        let sj = SJSpec::new(self.blocks.iter().map(|b| SJBlock::new(c64(b.a[0], b.a[1]), b.p)).collect());
        QuadricSpec::new(self.kind, sj).map_err(|e| Error::Config(format!("quadric: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
    /// Nodes per axis.
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadric: Option<QuadricConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    /// Spectral parameters as `[re, im]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub z: Vec<[f64; 2]>,
    /// Parameters per lattice axis; they partition `z` in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shape: Vec<usize>,
    /// Overrides of the default tolerance table.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

const QWC2: [f64; 3] = [2.0, 0.5, 0.0];

impl ScenarioConfig {
    /// The default configuration of a scenario.
    pub fn new(scenario: Scenario) -> Self {
        let grid = |h, steps| Some(GridConfig { h, steps });
        let z = |v: &[[f64; 2]]| v.to_vec();
        let mut c = ScenarioConfig {
            scenario,
            quadric: Some(QuadricConfig::diagonal(Kind::QWC, &QWC2)),
            grid: grid(0.02, 32),
            z: Vec::new(),
            shape: Vec::new(),
            tolerances: BTreeMap::new(),
            tol_scale: Some(1.0),
            seed: None,
            samples: None,
            out: None,
        };
        match scenario {
            Scenario::IvoryCheck => {
                c.quadric = None;
                c.grid = None;
                c.seed = Some(1);
                c.samples = Some(1000);
            }
            Scenario::Elliptic => {
                c.quadric = Some(QuadricConfig {
                    kind: Kind::QC,
                    blocks: vec![
                        BlockConfig { a: [0.7, 0.2], p: 1 },
                        BlockConfig { a: [1.3, 0.0], p: 1 },
                        BlockConfig { a: [-0.4, 0.5], p: 1 },
                    ],
                });
                c.grid = None;
                c.seed = Some(6);
                c.samples = Some(200);
            }
            Scenario::Deform0Soliton => c.seed = Some(1),
            Scenario::BacklundQwc => {
                c.z = z(&[[0.4, 0.3]]);
                c.seed = Some(9);
                c.samples = Some(1000);
            }
            Scenario::BacklundQc => {
                c.quadric = Some(QuadricConfig::diagonal(Kind::QC, &[1.5, 0.8, 2.2]));
                c.grid = grid(0.02, 33);
                c.z = z(&[[0.3, 0.2]]);
                c.seed = Some(77);
                c.samples = Some(1000);
            }
            Scenario::LeafEmbed => {
                c.z = z(&[[0.4, 0.3]]);
                c.seed = Some(11);
            }
            Scenario::Bpt => {
                c.z = z(&[[0.4, 0.3], [-0.3, 0.2], [0.2, -0.5], [0.6, 0.4]]);
                c.seed = Some(11);
                c.samples = Some(1000);
            }
            Scenario::M3 => {
                c.z = z(&[[0.4, 0.3], [-0.3, 0.2], [0.2, -0.5]]);
                c.seed = Some(20);
            }
            Scenario::Lattice => {
                c.grid = grid(0.02, 16);
                c.z = z(&[[0.4, 0.3], [0.2, -0.5], [-0.3, 0.2], [0.6, 0.4]]);
                c.shape = vec![2, 2];
                c.seed = Some(31);
            }
            Scenario::SineGordon => {
                c.quadric = Some(QuadricConfig::diagonal(Kind::QWC, &[2.0, 1.0, 0.0]));
                c.grid = grid(0.02, 24);
                c.seed = Some(9);
                c.samples = Some(20);
            }
        }
        c
    }

    /// Fills every field the config leaves out from the scenario defaults.
    pub fn with_defaults(mut self) -> Self {
        let d = ScenarioConfig::new(self.scenario);
        let quadric_given = self.quadric.is_some();
        self.quadric = self.quadric.or(d.quadric);
        self.grid = self.grid.or(d.grid);
        if self.z.is_empty() {
            self.z = d.z.clone();
        }
        if self.scenario == Scenario::Bpt && self.z.len() < 4 {
            // The order-independence lattice needs two parameters per axis.
            for extra in &d.z[2..] {
                if self.z.len() < 4 && !self.z.iter().any(|w| close(w, extra)) {
                    self.z.push(*extra);
                }
            }
        }
        if self.scenario == Scenario::Lattice && self.shape.is_empty() {
            let k = self.z.len();
            self.shape = if k == 3 { vec![1, 1, 1] } else { vec![k / 2, k - k / 2] };
        }
        if self.scenario == Scenario::IvoryCheck && !quadric_given {
            self.quadric = None;
        }
        self.tol_scale = self.tol_scale.or(d.tol_scale);
        self.seed = self.seed.or(d.seed);
        self.samples = self.samples.or(d.samples);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (k, v) in &self.tolerances {
            if !DEFAULT_TOLERANCES.iter().any(|t| t.0 == k) {
                return bad(format!("unknown tolerance '{k}'"));
            }
            if !(v.is_finite() && *v > 0.0) {
                return bad(format!("tolerance '{k}' must be positive"));
            }
        }
        if let Some(s) = self.tol_scale {
            if !(s.is_finite() && s > 0.0) {
                return bad("tol_scale must be positive".into());
            }
        }
        if self.samples == Some(0) {
            return bad("samples must be positive".into());
        }
        let sc = self.scenario;
        if sc.needs_grid() {
            let Some(g) = self.grid else { return bad(format!("{} needs a grid", sc.name())) };
            if !(g.h.is_finite() && g.h > 0.0) || !(8..=2048).contains(&g.steps) {
                return bad("grid needs h > 0 and 8 <= steps <= 2048".into());
            }
        }
        let q = match &self.quadric {
            Some(qc) => Some(qc.spec()?),
            None if sc == Scenario::IvoryCheck => None,
            None => return bad(format!("{} needs a quadric", sc.name())),
        };
        if let Some(q) = &q {
            let kind_ok = match sc {
                Scenario::IvoryCheck | Scenario::Elliptic => true,
                Scenario::BacklundQc => q.kind == Kind::QC,
                Scenario::SineGordon => q.kind == Kind::QWC && q.n == 2,
                _ => q.kind != Kind::QC,
            };
            if !kind_ok {
                return bad(format!("{} does not accept a {:?} quadric of dimension {}", sc.name(), q.kind, q.n));
            }
            if sc == Scenario::Elliptic && q.sj.blocks.iter().any(|b| b.p > 1) {
                return bad("elliptic coordinates need 1x1 blocks".into());
            }
        }
        if self.z.len() < sc.min_z() {
            return bad(format!("{} needs at least {} spectral parameters", sc.name(), sc.min_z()));
        }
        for (i, a) in self.z.iter().enumerate() {
            if !(a[0].is_finite() && a[1].is_finite()) || a[0].hypot(a[1]) < 1e-12 {
                return bad(format!("z[{i}] must be finite and nonzero"));
            }
            for (j, b) in self.z.iter().enumerate().skip(i + 1) {
                if close(a, b) {
                    return bad(format!("z[{i}] and z[{j}] coincide; spectral parameters must be distinct"));
                }
            }
        }
        if sc == Scenario::Lattice {
            let total: usize = self.shape.iter().sum();
            if self.shape.is_empty() || self.shape.contains(&0) || total != self.z.len() || total > 8 {
                return bad("lattice shape must partition z into non-empty axes (at most 8 parameters)".into());
            }
        }
        Ok(())
    }

    fn zs(&self) -> Vec<C64> {
        self.z.iter().map(|a| c64(a[0], a[1])).collect()
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn samples(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }

    fn model(&self) -> Result<Model> {
        let q = self.quadric.as_ref().ok_or_else(|| Error::Config("missing quadric".into()))?.spec()?;
        Model::new(q, 1)
    }

    fn grid(&self) -> (f64, usize) {
        let g = self.grid.unwrap_or(GridConfig { h: 0.02, steps: 32 });
        (g.h, g.steps)
    }
}

fn close(a: &[f64; 2], b: &[f64; 2]) -> bool {
    (a[0] - b[0]).hypot(a[1] - b[1]) < 1e-12
}

/// Default tolerances: key, value, and whether the value is a lower bound.
pub const DEFAULT_TOLERANCES: &[(&str, f64, bool)] = &[
    ("acpia", 1e-6, false),
    ("asymptotic", 1e-8, false),
    ("bpt_orth", 1e-10, false),
    ("bpt_scalar", 1e-10, false),
    ("bpt_truncation", 1e-3, false),
    ("confocal", 1e-8, false),
    ("correlation", 0.999, true),
    ("cube", 1e-8, false),
    ("defqwc", 1e-8, false),
    ("elliptic_root", 1e-8, false),
    ("field_transform", 1e-6, false),
    ("forms", 1e-6, false),
    ("involution", 1e-10, false),
    ("isotropy", 1e-12, false),
    ("ivory", 1e-10, false),
    ("ivory_runtime_s", 10.0, false),
    ("joined", 1e-6, false),
    ("lame", 1e-10, false),
    ("lattice_order", 1e-9, false),
    ("lattice_orth", 1e-6, false),
    ("leaf_forms_c", 0.05, false),
    ("leaf_forms_slope", 1.7, true),
    ("lmap", 1e-9, false),
    ("m3", 1e-8, false),
    ("m3_symmetric", 1e-12, false),
    ("order_ratio", 12.0, true),
    ("orth_drift", 1e-6, false),
    ("path_mismatch", 1e-6, false),
    ("peterson", 1e-12, false),
    ("prime_integral", 1e-8, false),
    ("qc_compact", 1e-12, false),
    ("qc_derivative_ratio", 3.5, true),
    ("qc_line", 1e-5, false),
    ("ruling", 1e-8, false),
    ("ruling_control", 1e-2, true),
    ("sj_runtime_s", 1.0, false),
    ("sj_square", 1e-12, false),
    ("slope_band", 0.3, false),
    ("transform", 1e-10, false),
];

/// The effective tolerance table: overrides applied, then `scale` (lower
/// bounds are divided by it).
pub fn tolerance_table(overrides: &BTreeMap<String, f64>, scale: f64) -> BTreeMap<String, f64> {
    DEFAULT_TOLERANCES
        .iter()
        .map(|&(k, v, lower)| {
            let v = overrides.get(k).copied().unwrap_or(v);
            (k.to_string(), if lower { v / scale } else { v * scale })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `value < tolerance`.
    Below,
    /// `value ≥ tolerance`.
    AtLeast,
    /// `|value − target| ≤ tolerance`.
    Near(f64),
    /// `value = 0`.
    Zero,
    /// Reported only.
    Info,
}

impl Relation {
    fn holds(self, v: f64, tol: Option<f64>) -> bool {
        let t = tol.unwrap_or(0.0);
        match self {
            Relation::Below => v < t,
            Relation::AtLeast => v >= t,
            Relation::Near(x) => (v - x).abs() <= t,
            Relation::Zero => v == 0.0,
            Relation::Info => true,
        }
    }

    /// Value over tolerance, oriented so that at most 1 passes.
    fn margin(self, v: f64, tol: Option<f64>) -> f64 {
        let t = tol.unwrap_or(1.0);
        match self {
            Relation::Below => v / t,
            Relation::AtLeast => t / v,
            Relation::Near(x) => (v - x).abs() / t,
            Relation::Zero => v,
            Relation::Info => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Set on the one check that stands for an acceptance criterion.
    pub criterion: Option<u8>,
    pub relation: Relation,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub tolerance_key: Option<String>,
    pub status: Status,
    pub samples: usize,
    pub runtime_s: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|&v| v.is_finite().then_some(v)).collect());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: Scenario,
    /// No check failed or errored, and at least one passed.
    pub pass: bool,
    pub checks: Vec<Check>,
    pub preconditions: BTreeMap<String, bool>,
    pub tolerances: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
    pub provenance: Provenance,
    pub config: ScenarioConfig,
}

impl Report {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn criteria(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.criterion.is_some())
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

/// Name, tolerance key (empty for none) and relation of a check.
type Spec = (&'static str, &'static str, Relation);

const B: Relation = Relation::Below;

struct Run {
    tol: BTreeMap<String, f64>,
    checks: Vec<Check>,
    tables: Vec<Table>,
    pre: BTreeMap<String, bool>,
}

impl Run {
    fn tol(&self, key: &str) -> f64 {
        self.tol[key]
    }

    fn push(&mut self, spec: &Spec, value: Option<f64>, samples: usize, dt: f64, note: String) {
        let (name, key, rel) = *spec;
        let tol = (!key.is_empty()).then(|| self.tol(key));
        let status = match value {
            _ if samples == 0 && rel != Relation::Info => Status::Skipped,
            Some(v) if v.is_finite() && rel.holds(v, tol) => Status::Pass,
            _ => Status::Fail,
        };
        let note = if samples == 0 && note.is_empty() { "no samples".into() } else { note };
        self.checks.push(Check {
            name: name.into(),
            criterion: None,
            relation: rel,
            value: value.filter(|v| v.is_finite()),
            tolerance: tol,
            tolerance_key: (!key.is_empty()).then(|| key.to_string()),
            status,
            samples,
            runtime_s: dt,
            note,
        });
    }

    fn status(&mut self, specs: &[Spec], status: Status, note: &str, dt: f64) {
        for &(name, key, rel) in specs {
            self.checks.push(Check {
                name: name.into(),
                criterion: None,
                relation: rel,
                value: None,
                tolerance: (!key.is_empty()).then(|| self.tol(key)),
                tolerance_key: (!key.is_empty()).then(|| key.to_string()),
                status,
                samples: 0,
                runtime_s: dt,
                note: note.into(),
            });
        }
    }

    /// Times `f` and records one check per spec from its `(value, samples)`
    /// pairs; an error fails every spec.
    fn group(&mut self, specs: &[Spec], f: impl FnOnce(&Run) -> Result<Vec<(f64, usize)>>) {
        let t = Instant::now();
        let r = f(self);
        let dt = t.elapsed().as_secs_f64();
        match r {
            Ok(vals) => {
                debug_assert_eq!(vals.len(), specs.len());
                for (s, (v, n)) in specs.iter().zip(vals) {
                    self.push(s, Some(v), n, dt, String::new());
                }
            }
            Err(e) => self.status(specs, Status::Error, &e.to_string(), dt),
        }
    }

    fn note(&mut self, name: &str, note: String) {
        if let Some(c) = self.checks.iter_mut().rev().find(|c| c.name == name) {
            c.note = note;
        }
    }

    fn criterion(&mut self, id: u8, name: &str, parts: &[&str]) {
        let comps: Vec<&Check> = parts.iter().map(|p| self.checks.iter().find(|c| c.name == *p).expect("component check")).collect();
        let status = if comps.iter().all(|c| c.passed()) {
            Status::Pass
        } else if comps.iter().any(|c| matches!(c.status, Status::Fail | Status::Error)) {
            Status::Fail
        } else {
            Status::Skipped
        };
        let value = comps
            .iter()
            .map(|c| c.value.map(|v| c.relation.margin(v, c.tolerance)))
            .try_fold(0.0f64, |a, m| m.map(|m| a.max(m)));
        let samples = comps.iter().map(|c| c.samples).sum();
        let runtime_s = comps.iter().map(|c| c.runtime_s).fold(0.0, f64::max);
        self.checks.push(Check {
            name: name.into(),
            criterion: Some(id),
            relation: Relation::Below,
            value,
            tolerance: Some(1.0),
            tolerance_key: None,
            status,
            samples,
            runtime_s,
            note: parts.join(", "),
        });
    }
}

/// Validates `cfg`, fills defaults and runs the scenario. Module errors become
/// failed checks; only configuration errors are returned.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Report> {
    let cfg = cfg.clone().with_defaults();
    cfg.validate()?;
    let scale = cfg.tol_scale.unwrap_or(1.0);
    let mut run = Run { tol: tolerance_table(&cfg.tolerances, scale), checks: Vec::new(), tables: Vec::new(), pre: BTreeMap::new() };
    match cfg.scenario {
        Scenario::IvoryCheck => ivory_check(&cfg, &mut run),
        Scenario::Elliptic => elliptic(&cfg, &mut run),
        Scenario::Deform0Soliton => deform_zero_soliton(&cfg, &mut run),
        Scenario::BacklundQwc => backlund_qwc(&cfg, &mut run),
        Scenario::BacklundQc => backlund_qc(&cfg, &mut run),
        Scenario::LeafEmbed => leaf_embedding(&cfg, &mut run),
        Scenario::Bpt => bpt(&cfg, &mut run),
        Scenario::M3 => m3(&cfg, &mut run),
        Scenario::Lattice => lattice(&cfg, &mut run),
        Scenario::SineGordon => sine_gordon(&cfg, &mut run),
    }
    let pass = run.checks.iter().any(Check::passed) && !run.checks.iter().any(|c| matches!(c.status, Status::Fail | Status::Error));
    let canonical = serde_json::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    let provenance = Provenance {
        config_hash: hex::encode(Sha256::digest(canonical.as_bytes())),
        seed: cfg.seed(),
        version: env!("CARGO_PKG_VERSION").into(),
        threads: rayon::current_num_threads(),
    };
    Ok(Report {
        scenario: cfg.scenario,
        pass,
        checks: run.checks,
        preconditions: run.pre,
        tolerances: run.tol,
        tables: run.tables,
        provenance,
        config: cfg,
    })
}

/// Runs `cfg` on a pool of `threads` workers (all cores when `None`).
pub fn run_with_threads(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<Report> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_scenario(cfg))
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Writes `report.json` and the CSV tables into `dir`.
pub fn write_run(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(dir.join("report.json"), json)?;
    emit_plotdata(dir)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Regenerates `checks.csv` and one CSV per table from `dir/report.json`.
/// Runtimes are left out so identical runs give identical files.
pub fn emit_plotdata(dir: &Path) -> Result<Vec<PathBuf>> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|_| Error::MissingRun(dir.display().to_string()))?;
    let report: Report = serde_json::from_str(&text).map_err(|e| Error::MissingRun(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    let p = dir.join("checks.csv");
    let mut w = csv::Writer::from_path(&p).map_err(csv_err)?;
    w.write_record(["name", "criterion", "relation", "value", "tolerance", "status", "samples"]).map_err(csv_err)?;
    for c in &report.checks {
        let rel = match c.relation {
            Relation::Below => "<".to_string(),
            Relation::AtLeast => ">=".to_string(),
            Relation::Near(x) => format!("~{x}"),
            Relation::Zero => "=0".to_string(),
            Relation::Info => "info".to_string(),
        };
        let status = serde_json::to_value(c.status).map_err(|e| Error::Io(e.to_string()))?;
        w.write_record([
            c.name.clone(),
            c.criterion.map(|x| x.to_string()).unwrap_or_default(),
            rel,
            cell(c.value),
            cell(c.tolerance),
            status.as_str().unwrap_or_default().to_string(),
            c.samples.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    out.push(p);
    for t in &report.tables {
        let p = dir.join(format!("{}.csv", t.name));
        let mut w = csv::Writer::from_path(&p).map_err(csv_err)?;
        w.write_record(&t.columns).map_err(csv_err)?;
        for r in &t.rows {
            w.write_record(r.iter().map(|v| cell(*v))).map_err(csv_err)?;
        }
        w.flush()?;
        out.push(p);
    }
    Ok(out)
}

fn sub_seed(seed: u64, stream: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (stream << 40) ^ k
}

fn worst<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Three nested grids `2h, h, h/2` sharing nodes with the coarsest; `extra`
/// pads the node count for stencils that need a wider margin.
fn levels(h: f64, steps: usize, extra: [usize; 3]) -> [(f64, usize); 3] {
    let c = (steps / 2).max(4);
    [(2.0 * h, c + 1 + extra[0]), (h, 2 * c + 1 + extra[1]), (h / 2.0, 4 * c + 1 + extra[2])]
}

/// `Λ` at `V = 0` on the constraint, along a fixed direction.
fn base_lambda(model: &Model) -> Result<CVec> {
    let n = model.n();
    let s: f64 = 0.3;
    let dir = if n == 2 {
        CVec::from_vec(vec![c64(0.0, s.cosh()), c64(s.sinh(), 0.0)])
    } else {
        let base = [c64(1.0, 0.2), c64(0.7, -0.1), c64(0.4, 0.3)];
        CVec::from_fn(n, |j, _| base[j % 3] * (1.0 + 0.15 * (j / 3) as f64))
    };
    model.sys.lambda_on_constraint(&CVec::zeros(n), &dir)
}

fn seed_field(model: &Model, h: f64, steps: usize, substeps: usize) -> Result<FieldGrid> {
    let n = model.n();
    zero_soliton(model, &GridSpec::centered(n, h, steps), &CVec::zeros(n), &base_lambda(model)?, substeps)
}

/// Nodes on the axis-0 line through the base node.
fn base_line(grid: &GridSpec) -> Vec<usize> {
    let b = grid.base_index();
    let mut m = grid.multi(b);
    (0..grid.axes[0].steps)
        .map(|i| {
            m[0] = i;
            grid.index(&m)
        })
        .collect()
}

fn lmap_for(q: &QuadricSpec, seed: u64) -> Result<Option<LMap>> {
    if q.kind == Kind::QC {
        Ok(None)
    } else {
        build_lmap(q, seed).map(Some)
    }
}

/// A random node of the model's system with `Λ` on the constraint.
fn random_node(model: &Model, seed: u64, vscale: f64) -> Result<Node> {
    let mut g = rng(seed);
    let n = model.n();
    let v = rand_cvec(&mut g, n, vscale);
    let lam = model.sys.lambda_on_constraint(&v, &rand_cvec(&mut g, n, 1.0))?;
    Ok(Node { v, lam, r: random_orthogonal(n, seed ^ 0xabcd, 0.5) })
}

fn ivory_check(cfg: &ScenarioConfig, run: &mut Run) {
    let seed = cfg.seed();
    let t_all = Instant::now();
    run.group(&[("sj-sqrt", "sj_square", B), ("sj-sqrt-runtime", "sj_runtime_s", B)], |_| {
        let t = Instant::now();
        let r: Vec<f64> = (0..200u64)
            .into_par_iter()
            .map(|s| {
                let sp = random_sjspec(1 + (s % 8) as usize, 4, sub_seed(seed, 1, s));
                let root = sqrt_sj(&sp)?;
                Ok(max_abs(&(&root * &root - build_sj(&sp))))
            })
            .collect::<Result<_>>()?;
        Ok(vec![(worst(r), 200), (t.elapsed().as_secs_f64(), 1)])
    });
    run.criterion(1, "sj-algebra", &["sj-sqrt", "sj-sqrt-runtime"]);

    let names: [Spec; 5] = [
        ("ivory-theorem", "ivory", B),
        ("tc-symmetry", "ivory", B),
        ("ruling-length", "ivory", B),
        ("segment-ruling-angle", "ivory", B),
        ("polar-ruling-angle", "ivory", B),
    ];
    let count = cfg.samples(1000);
    let quadrics: Result<Vec<QuadricSpec>> = match &cfg.quadric {
        Some(q) => q.spec().map(|q| vec![q]),
        None => {
            let mut v = Vec::new();
            for (k, kind) in [Kind::QC, Kind::QWC, Kind::IQWC].into_iter().enumerate() {
                for n in [2, 3] {
                    v.push(random_quadric(kind, n, 2, sub_seed(seed, 2, (10 * k + n) as u64)));
                }
            }
            v.into_iter().collect()
        }
    };
    let mut table = Table::new("ivory_residuals", &["quadric", "kind", "n", "theorem", "tc", "ruling_length", "segment_angle", "polar_angle"]);
    run.group(&names, |_| {
        let quadrics = quadrics.clone()?;
        let mut all = [0.0f64; 5];
        for (qi, q) in quadrics.iter().enumerate() {
            let lm = lmap_for(q, 7)?;
            let per: Vec<[f64; 5]> = (0..count as u64)
                .into_par_iter()
                .map(|s| {
                    let mut g = rng(sub_seed(seed, 3 + qi as u64, s));
                    let mut last = Error::InvalidInput("no sample".into());
                    for _ in 0..8 {
                        let z = rand_c(&mut g, 0.4);
                        let sample = (|| -> Result<[f64; 5]> {
                            let xa = random_point(q, lm.as_ref(), &mut g, 0.7)?;
                            let xb = random_point(q, lm.as_ref(), &mut g, 0.7)?;
                            let w = random_ruling(q, &xa, &mut g)?;
                            let wh = random_polar(q, &w, &mut g);
                            Ok([
                                ivory_theorem_residual(q, z, &xa, &xb)?,
                                tc_symmetry_residual(q, z, &xa, &xb)?,
                                ruling_length_residual(q, z, &xa, &w)?,
                                segment_ruling_angle_residual(q, z, &xa, &xb, &w)?,
                                polar_ruling_angle_residual(q, z, &w, &wh)?,
                            ])
                        })();
                        match sample {
                            Ok(r) => return Ok(r),
                            Err(e) => last = e,
                        }
                    }
                    Err(last)
                })
                .collect::<Result<_>>()?;
            let mut w = [0.0f64; 5];
            for r in &per {
                for k in 0..5 {
                    w[k] = w[k].max(r[k]);
                }
            }
            let kind = [Kind::QC, Kind::QWC, Kind::IQWC].iter().position(|k| *k == q.kind).unwrap_or(0);
            table.push(&[qi as f64, kind as f64, q.n as f64, w[0], w[1], w[2], w[3], w[4]]);
            for k in 0..5 {
                all[k] = all[k].max(w[k]);
            }
        }
        let total = count * quadrics.len();
        Ok(all.iter().map(|&v| (v, total)).collect())
    });
    run.tables.push(table);

    run.group(&[("lame-orthogonality", "lame", B)], |_| {
        let targets: Vec<QuadricSpec> = match &cfg.quadric {
            Some(q) => vec![q.spec()?],
            None => (0..3)
                .map(|k| random_quadric([Kind::QC, Kind::QWC, Kind::IQWC][k], 2, 2, sub_seed(seed, 20, k as u64)))
                .collect::<Result<_>>()?,
        };
        let want = 100usize;
        let per = want.div_ceil(targets.len());
        let mut w: f64 = 0.0;
        let mut found = 0;
        for (k, q) in targets.iter().enumerate() {
            let lm = lmap_for(q, 7)?;
            let mut g = rng(sub_seed(seed, 21, k as u64));
            let mut got = 0;
            for _ in 0..50 * per {
                if got == per {
                    break;
                }
                let z1 = rand_c(&mut g, 0.3);
                let z2 = rand_c(&mut g, 0.3);
                let Ok(start) = random_point(q, lm.as_ref(), &mut g, 0.6) else { continue };
                let Some(x) = lame_intersection(q, z1, z2, &start) else { continue };
                w = w.max(confocal_orthogonality_residual(q, z1, z2, &x)?);
                got += 1;
            }
            found += got;
        }
        Ok(vec![(w, found)])
    });
    run.push(&("ivory-runtime", "ivory_runtime_s", B), Some(t_all.elapsed().as_secs_f64()), 1, 0.0, String::new());
    run.criterion(
        2,
        "ivory-identities",
        &["ivory-theorem", "tc-symmetry", "ruling-length", "segment-ruling-angle", "polar-ruling-angle", "lame-orthogonality", "ivory-runtime"],
    );

    run.group(&[("lmap-invariants", "lmap", B)], |_| {
        let mut g = rng(sub_seed(seed, 30, 0));
        let mut w: f64 = 0.0;
        let mut count = 0;
        let mut cases = Vec::new();
        for p in [2usize, 3] {
            for n in [p, p + 1] {
                for s in 0..5u64 {
                    cases.push((random_quadric(Kind::IQWC, n, p, sub_seed(seed, 31, 100 * p as u64 + 10 * n as u64 + s))?, s));
                }
            }
        }
        if let Some(q) = &cfg.quadric {
            let q = q.spec()?;
            if q.kind == Kind::IQWC {
                cases.push((q, 0));
            }
        }
        for (q, s) in &cases {
            let lm = build_lmap(q, *s)?;
            let z = rand_c(&mut g, 0.4);
            for (_, r) in lm.invariants(q, z)? {
                w = w.max(r);
            }
            count += 1;
        }
        Ok(vec![(w, count)])
    });
    run.criterion(3, "iqwc-parametrization", &["lmap-invariants"]);
}

fn elliptic(cfg: &ScenarioConfig, run: &mut Run) {
    let seed = cfg.seed();
    let count = cfg.samples(200);
    let mut table = Table::new("elliptic_roots", &["sample", "root", "re", "im", "residual"]);
    run.group(&[("elliptic-roots", "elliptic_root", B), ("elliptic-zero-root", "elliptic_root", B)], |_| {
        let q = cfg.quadric.as_ref().expect("validated").spec()?;
        let lm = lmap_for(&q, 7)?;
        let per: Vec<Vec<(C64, f64)>> = (0..count as u64)
            .into_par_iter()
            .map(|s| {
                let mut g = rng(sub_seed(seed, 1, s));
                let x = random_point(&q, lm.as_ref(), &mut g, 0.5)?;
                elliptic_coordinates(&q, &x)?
                    .into_iter()
                    .map(|z| Ok((z, eval_confocal(&q, z, &x)?.norm())))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let mut res: f64 = 0.0;
        let mut zero: f64 = 0.0;
        for (s, roots) in per.iter().enumerate() {
            zero = zero.max(roots.iter().map(|r| r.0.norm()).fold(f64::INFINITY, f64::min));
            for (k, (z, r)) in roots.iter().enumerate() {
                res = res.max(*r);
                table.push(&[s as f64, k as f64, z.re, z.im, *r]);
            }
        }
        Ok(vec![(res, count), (zero, count)])
    });
    run.tables.push(table);
}

fn deform_zero_soliton(cfg: &ScenarioConfig, run: &mut Run) {
    let (h, steps) = cfg.grid();
    let dependents: [Spec; 7] = [
        ("prime-integral-drift", "prime_integral", B),
        ("prime-integral-order", "order_ratio", Relation::AtLeast),
        ("prime-integral-slope", "", Relation::Info),
        ("defqwc", "defqwc", B),
        ("forms-gauss", "forms", B),
        ("forms-cmp", "forms", B),
        ("forms-ricci", "forms", B),
    ];
    let model = match cfg.model() {
        Ok(m) => m,
        Err(e) => return run.status(&dependents, Status::Error, &e.to_string(), 0.0),
    };
    match peterson_admissible(&model, run.tol("peterson")) {
        Ok((ok, off)) => {
            run.pre.insert("peterson_admissible".into(), ok);
            run.push(&("peterson-admissible", "peterson", B), Some(off), 1, 0.0, String::new());
            if !ok {
                run.status(&dependents, Status::Skipped, "A' n-block is not diagonal", 0.0);
                return;
            }
        }
        Err(e) => {
            run.pre.insert("peterson_admissible".into(), false);
            return run.status(&dependents, Status::Error, &e.to_string(), 0.0);
        }
    }
    let mut conv = Table::new("convergence_prime_integral", &["h", "drift"]);
    let mut line = Table::new("drift_vs_arclength", &["u0", "arclength", "prime_integral"]);
    let mut field = None;
    run.group(&dependents[..3], |_| {
        let lv = [(h, steps), (h / 2.0, 2 * steps - 1), (h / 4.0, 4 * steps - 3)];
        let fields: Vec<FieldGrid> = lv.par_iter().map(|&(hh, s)| seed_field(&model, hh, s, 1)).collect::<Result<_>>()?;
        let d: Vec<f64> = fields.iter().map(FieldGrid::prime_integral_drift).collect();
        let pts: Vec<(f64, f64)> = lv.iter().zip(&d).map(|(l, d)| (l.0, *d)).collect();
        for p in &pts {
            conv.push(&[p.0, p.1]);
        }
        let fg = fields.into_iter().next().expect("three levels");
        let u0 = fg.grid.u(fg.grid.base_index())[0];
        for i in base_line(&fg.grid) {
            let u = fg.grid.u(i)[0];
            line.push(&[u, (u - u0).abs(), fg.model.sys.prime_integral(&fg.v[i], &fg.lam[i]).norm()]);
        }
        let samples = fg.grid.len();
        field = Some(fg);
        Ok(vec![(d[0], samples), (d[0] / d[1], 2), (fit_slope(&pts), 3)])
    });
    run.tables.push(conv);
    run.tables.push(line);
    let Some(fg) = field else {
        run.status(&dependents[3..], Status::Skipped, "no 0-soliton field", 0.0);
        return;
    };
    run.group(&dependents[3..4], |_| {
        let r = residual_defqwc(&fg);
        Ok(vec![(r.max, r.samples)])
    });
    run.group(&dependents[4..], |_| {
        let r = forms_assemble(&fg, 5)?.residuals;
        Ok(vec![(r.gauss, r.samples), (r.cmp, r.samples), (r.ricci, r.samples)])
    });
    run.criterion(4, "zero-soliton-integrability", &["prime-integral-drift", "prime-integral-order", "defqwc"]);
}

fn backlund_qwc(cfg: &ScenarioConfig, run: &mut Run) {
    let (h, steps) = cfg.grid();
    let seed = cfg.seed();
    let z = cfg.zs()[0];
    let setup = cfg.model().and_then(|m| BacklundContext::new(&m, z).map(|c| (m, c)));
    let (model, ctx) = match setup {
        Ok(x) => x,
        Err(e) => {
            let s: [Spec; 1] = [("backlund-setup", "", Relation::Info)];
            return run.status(&s, Status::Error, &e.to_string(), 0.0);
        }
    };
    let n = model.n();
    let r1b = random_orthogonal(n, seed, 0.5);

    let mut line = Table::new("drift_vs_arclength", &["u0", "arclength", "orth_defect"]);
    let mut seed_fg = None;
    run.group(
        &[
            ("orth-drift", "orth_drift", B),
            ("path-mismatch", "path_mismatch", B),
            ("path-mismatch-order", "order_ratio", Relation::AtLeast),
            ("field-transform", "field_transform", B),
        ],
        |_| {
            let lv = [(h, steps), (h / 2.0, 2 * steps - 1)];
            let runs: Vec<(FieldGrid, _)> = lv
                .par_iter()
                .map(|&(hh, s)| {
                    let fg = seed_field(&model, hh, s, 1)?;
                    let r = integrate_backlund(&fg, &ctx, &r1b, 1)?;
                    Ok((fg, r))
                })
                .collect::<Result<_>>()?;
            let (fg, r) = &runs[0];
            let leaf = leaf_field(fg, &ctx, &r.r1)?;
            let c = field_transform_checks(fg, &ctx, &leaf);
            let u0 = fg.grid.u(fg.grid.base_index())[0];
            for i in base_line(&fg.grid) {
                let u = fg.grid.u(i)[0];
                line.push(&[u, (u - u0).abs(), orth_defect(&r.r1[i])]);
            }
            let len = fg.grid.len();
            let out = vec![(r.orth_drift, len), (r.path_mismatch, len), (r.path_mismatch / runs[1].1.path_mismatch, 2), (c.max(), len)];
            seed_fg = Some(fg.clone());
            Ok(out)
        },
    );
    run.tables.push(line);

    let mut conv = Table::new("convergence_leaf_system", &["h", "residual"]);
    run.group(&[("leaf-system-slope", "slope_band", Relation::Near(2.0))], |_| {
        let lv = levels(h, steps, [0; 3]);
        let coarse = GridSpec::centered(n, lv[0].0, lv[0].1);
        let pts: Vec<(f64, f64)> = lv
            .par_iter()
            .map(|&(hh, s)| {
                let fg = seed_field(&model, hh, s, 1)?;
                let r = integrate_backlund(&fg, &ctx, &r1b, 1)?;
                let leaf = leaf_field(&fg, &ctx, &r.r1)?;
                let mut w: f64 = 0.0;
                for i in (0..coarse.len()).filter(|&i| coarse.interior(i, 1)) {
                    let k = fg.grid.locate(&coarse, i).ok_or_else(|| Error::InvalidInput("grids are not nested".into()))?;
                    w = w.max(system_residual_node(&leaf, k, 2).unwrap_or(0.0));
                }
                Ok((hh, w))
            })
            .collect::<Result<_>>()?;
        for p in &pts {
            conv.push(&[p.0, p.1]);
        }
        Ok(vec![(fit_slope(&pts), 3)])
    });
    run.tables.push(conv);

    let count = cfg.samples(1000);
    run.group(&[("involution", "involution", B), ("transform-relations", "transform", B)], |_| {
        let per: Vec<(f64, f64)> = (0..count as u64)
            .into_par_iter()
            .map(|s| {
                let node = random_node(&model, sub_seed(seed, 5, s), 0.5)?;
                let r1 = random_orthogonal(n, sub_seed(seed, 6, s), 0.5);
                let leaf = algebraic_transform(&model, &ctx, &node, &r1)?;
                let rel = transform_checks(&model, &ctx, &node, &leaf).max();
                let back = algebraic_transform(&model, &ctx.mirrored(), &leaf, &node.r)?;
                Ok((vmax_abs(&(&back.v - &node.v)).max(vmax_abs(&(&back.lam - &node.lam))), rel))
            })
            .collect::<Result<_>>()?;
        Ok(vec![(worst(per.iter().map(|p| p.0)), count), (worst(per.iter().map(|p| p.1)), count)])
    });

    let mut lconv = Table::new("convergence_leaf_forms", &["h", "residual"]);
    run.group(&[("forms-0soliton-gauss", "forms", B), ("forms-0soliton-cmp", "forms", B), ("forms-0soliton-ricci", "forms", B)], |_| {
        let fg = seed_fg.as_ref().ok_or_else(|| Error::InvalidInput("no seed field".into()))?;
        let r = forms_assemble(fg, 5)?.residuals;
        Ok(vec![(r.gauss, r.samples), (r.cmp, r.samples), (r.ricci, r.samples)])
    });
    run.group(&[("leaf-forms-h2", "leaf_forms_c", B), ("leaf-forms-slope", "leaf_forms_slope", Relation::AtLeast)], |_| {
        let lv = levels(h, steps, [1, 3, 6]);
        let pts: Vec<(f64, f64, usize)> = lv
            .par_iter()
            .map(|&(hh, s)| {
                let fg = seed_field(&model, hh, s, 1)?;
                let r = integrate_backlund(&fg, &ctx, &r1b, 1)?;
                let leaf = leaf_field(&fg, &ctx, &r.r1)?;
                let f = forms_assemble(&leaf, 5)?.residuals;
                Ok((hh, f.gauss.max(f.cmp).max(f.codazzi).max(f.ricci), f.samples))
            })
            .collect::<Result<_>>()?;
        for p in &pts {
            lconv.push(&[p.0, p.1]);
        }
        let c = worst(pts.iter().map(|p| p.1 / (p.0 * p.0)));
        let slope = fit_slope(&pts.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>());
        Ok(vec![(c, pts.iter().map(|p| p.2).sum()), (slope, 3)])
    });
    run.tables.push(lconv);

    run.criterion(5, "backlund-riccati", &["orth-drift", "path-mismatch", "path-mismatch-order", "leaf-system-slope"]);
    run.criterion(6, "involution-symmetry", &["involution"]);
    run.criterion(
        11,
        "g-cmp-r",
        &["forms-0soliton-gauss", "forms-0soliton-cmp", "forms-0soliton-ricci", "leaf-forms-h2", "leaf-forms-slope"],
    );
}

fn backlund_qc(cfg: &ScenarioConfig, run: &mut Run) {
    let (h, steps) = cfg.grid();
    let seed = cfg.seed();
    let z = cfg.zs()[0];
    let setup = cfg.model().and_then(|m| BacklundContext::new(&m, z).map(|c| (m, c)));
    let (model, ctx) = match setup {
        Ok(x) => x,
        Err(e) => {
            let s: [Spec; 1] = [("backlund-setup", "", Relation::Info)];
            return run.status(&s, Status::Error, &e.to_string(), 0.0);
        }
    };
    let n = model.n();
    let mut line = Table::new("drift_vs_arclength", &["u0", "arclength", "orth_defect"]);
    let mut conv = Table::new("convergence_qc_line", &["h", "orth_drift", "leaf_derivative"]);
    run.group(
        &[
            ("qc-orth-drift", "qc_line", B),
            ("qc-transform", "qc_line", B),
            ("qc-drift-order", "order_ratio", Relation::AtLeast),
            ("qc-derivative-order", "qc_derivative_ratio", Relation::AtLeast),
        ],
        |_| {
            let start = random_node(&model, seed, 0.4)?;
            let r1b = random_orthogonal(n, seed + 1, 0.5);
            let lv = [(h, steps), (h / 2.0, 2 * steps - 1), (h / 4.0, 4 * steps - 3)];
            let res: Vec<_> = lv
                .par_iter()
                .map(|&(hh, s)| {
                    let l = integrate_backlund_qc_line(&model, &ctx, &start.v, &start.lam, &r1b, 0, hh, s)?;
                    if l.reached() != s {
                        return Err(Error::StepFailure(format!("line stopped after {} of {s} nodes", l.reached())));
                    }
                    let c = qc_line_checks(&model, &ctx, &l)?;
                    Ok((l, c))
                })
                .collect::<Result<_>>()?;
            for (k, r) in res[0].0.r1.iter().enumerate() {
                let u = k as f64 * h;
                line.push(&[u, u, r.as_ref().map_or(f64::NAN, orth_defect)]);
            }
            for (l, (_, c)) in lv.iter().zip(&res) {
                conv.push(&[l.0, c.orth_drift, c.leaf_derivative]);
            }
            let c: Vec<_> = res.iter().map(|r| &r.1).collect();
            let drift_ratio = (c[0].orth_drift / c[1].orth_drift).min(c[1].orth_drift / c[2].orth_drift);
            let der_ratio = (c[0].leaf_derivative / c[1].leaf_derivative).min(c[1].leaf_derivative / c[2].leaf_derivative);
            Ok(vec![
                (worst(c.iter().map(|c| c.orth_drift)), steps),
                (worst(c.iter().map(|c| c.transform)), steps),
                (drift_ratio, 3),
                (der_ratio, 3),
            ])
        },
    );
    run.tables.push(line);
    run.tables.push(conv);

    let count = cfg.samples(1000);
    run.group(&[("qc-compact", "qc_compact", B)], |_| {
        let k = count.min(100) as u64;
        let per: Vec<f64> = (0..k)
            .into_par_iter()
            .map(|s| {
                let node = random_node(&model, sub_seed(seed, 7, s), 0.4)?;
                let r1 = random_orthogonal(n, sub_seed(seed, 8, s), 0.5);
                let om = random_antisymmetric(n, sub_seed(seed, 9, s), 0.5);
                let aux = QCAux::at(&ctx, &node.v);
                let mut w: f64 = 0.0;
                for j in 0..n {
                    let a = riccati_rhs_qc(&node, &om, &r1, &aux, j)?;
                    let b = riccati_rhs_qc_expanded(&ctx, &node, &om, &r1, j)?;
                    w = w.max(max_abs(&(a - b)));
                }
                Ok(w)
            })
            .collect::<Result<_>>()?;
        Ok(vec![(worst(per), k as usize)])
    });
    run.group(&[("qc-involution", "involution", B), ("qc-transform-relations", "transform", B)], |_| {
        let per: Vec<(f64, f64)> = (0..count as u64)
            .into_par_iter()
            .map(|s| {
                let node = random_node(&model, sub_seed(seed, 10, s), 0.4)?;
                let r1 = random_orthogonal(n, sub_seed(seed, 11, s), 0.5);
                let leaf = algebraic_transform(&model, &ctx, &node, &r1)?;
                let rel = transform_checks(&model, &ctx, &node, &leaf).max();
                let back = algebraic_transform(&model, &ctx.mirrored(), &leaf, &node.r)?;
                Ok((vmax_abs(&(&back.v - &node.v)).max(vmax_abs(&(&back.lam - &node.lam))), rel))
            })
            .collect::<Result<_>>()?;
        Ok(vec![(worst(per.iter().map(|p| p.0)), count), (worst(per.iter().map(|p| p.1)), count)])
    });
}

/// Nodes sampled for the pointwise checks that need full forms.
const SPOT_STRIDE: usize = 37;

fn leaf_embedding(cfg: &ScenarioConfig, run: &mut Run) {
    let (h, steps) = cfg.grid();
    let seed = cfg.seed();
    let z = cfg.zs()[0];
    let c7: [Spec; 5] = [
        ("confocal", "confocal", B),
        ("ivory-counterpart", "confocal", B),
        ("ruling", "ruling", B),
        ("ruling-isotropy", "isotropy", B),
        ("ruling-control", "ruling_control", Relation::AtLeast),
    ];
    let c8: [Spec; 3] = [("acpia", "acpia", B), ("joined-forms", "joined", B), ("asymptotic-directions", "asymptotic", B)];
    let setup = (|| -> Result<_> {
        let model = cfg.model()?;
        let ctx = BacklundContext::new(&model, z)?;
        let fg = seed_field(&model, h, steps, 1)?;
        let r = integrate_backlund(&fg, &ctx, &random_orthogonal(model.n(), seed, 0.5), 1)?;
        let leaf = leaf_field(&fg, &ctx, &r.r1)?;
        Ok((ctx, fg, leaf))
    })();
    let (ctx, fg, leaf) = match setup {
        Ok(x) => x,
        Err(e) => {
            run.status(&c7, Status::Error, &e.to_string(), 0.0);
            run.status(&c8, Status::Error, &e.to_string(), 0.0);
            run.criterion(7, "degenerate-seed-geometry", &["confocal", "ruling", "ruling-isotropy"]);
            run.criterion(8, "acpia", &["acpia", "joined-forms"]);
            return;
        }
    };
    run.group(&c7, |_| {
        let d = degenerate_seed_checks(&ctx, &fg, &leaf)?;
        let len = fg.grid.len();
        let per: Vec<(f64, f64, f64)> = (0..len)
            .into_par_iter()
            .map(|i| {
                let r = ruling_facet_check(&fg.model, &ctx, &fg.node(i), &leaf.node(i), 3)?;
                let control = if i % SPOT_STRIDE == 0 { r.control } else { f64::INFINITY };
                Ok((r.ruling, r.isotropy, control))
            })
            .collect::<Result<_>>()?;
        let control = per.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
        Ok(vec![
            (d.confocal, d.samples),
            (d.ivory, d.samples),
            (worst(per.iter().map(|p| p.0)), len),
            (worst(per.iter().map(|p| p.1)), len),
            (control, len.div_ceil(SPOT_STRIDE)),
        ])
    });
    run.group(&c8[..2], |_| {
        let frame = embed_zero_soliton(&fg, 5, 1)?;
        let e = leaf_embed(&frame, &fg, &leaf, &ctx, 4)?;
        Ok(vec![(e.acpia, e.samples), (e.joined, e.samples)])
    });
    run.group(&c8[2..], |_| {
        let per: Vec<f64> = (0..fg.grid.len())
            .step_by(SPOT_STRIDE)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|i| {
                let p0 = point_forms(&fg.model, &fg.v[i], &fg.lam[i], &fg.r[i], 5)?;
                let p1 = point_forms(&leaf.model, &leaf.v[i], &leaf.lam[i], &leaf.r[i], 5)?;
                Ok(asymptotic_correspondence_check(&p0, &p1, 1e-8).1)
            })
            .collect::<Result<_>>()?;
        let k = per.len();
        Ok(vec![(worst(per), k)])
    });
    run.criterion(7, "degenerate-seed-geometry", &["confocal", "ruling", "ruling-isotropy"]);
    run.criterion(8, "acpia", &["acpia", "joined-forms"]);
}

fn bpt(cfg: &ScenarioConfig, run: &mut Run) {
    let (h, steps) = cfg.grid();
    let seed = cfg.seed();
    let zs = cfg.zs();
    let model = match cfg.model() {
        Ok(m) => m,
        Err(e) => {
            let s: [Spec; 1] = [("bpt-setup", "", Relation::Info)];
            return run.status(&s, Status::Error, &e.to_string(), 0.0);
        }
    };
    let n = model.n();
    let count = cfg.samples(1000);
    let mut singular = 0usize;
    run.group(&[("bpt-orthogonality", "bpt_orth", B), ("bpt-scalar-random", "bpt_scalar", B)], |_| {
        let per: Vec<Option<(f64, f64)>> = (0..count as u64)
            .into_par_iter()
            .map(|s| {
                let mut g = rng(sub_seed(seed, 12, s));
                let (z1, z2) = (rand_c(&mut g, 1.0), rand_c(&mut g, 1.0));
                let (Ok(c1), Ok(c2)) = (BacklundContext::new(&model, z1), BacklundContext::new(&model, z2)) else { return None };
                let r0 = random_orthogonal(n, sub_seed(seed, 13, s), 0.5);
                let r1 = random_orthogonal(n, sub_seed(seed, 14, s), 0.5);
                let r2 = random_orthogonal(n, sub_seed(seed, 15, s), 0.5);
                let r3 = bpt_compose(&r0, &r1, &r2, &c1.d, &c2.d).ok()?;
                let sm = &r2 * r1.transpose();
                let t = &r3 * r0.transpose();
                Some((orth_defect(&r3).max(orthogonality_identity(&sm, &c1.d, &c2.d)), scalar_identity(&t, &sm, &c1, &c2)))
            })
            .collect();
        singular = per.iter().filter(|p| p.is_none()).count();
        let ok: Vec<(f64, f64)> = per.into_iter().flatten().collect();
        let k = ok.len();
        Ok(vec![(worst(ok.iter().map(|p| p.0)), k), (worst(ok.iter().map(|p| p.1)), k)])
    });
    if singular > 0 {
        run.note("bpt-orthogonality", format!("{singular} singular draws left out"));
    }

    let quad_at = |hh: f64, s: usize| -> Result<(FieldGrid, BianchiQuad)> {
        let fg = seed_field(&model, hh, s, 1)?;
        let (c1, c2) = (BacklundContext::new(&model, zs[0])?, BacklundContext::new(&model, zs[1])?);
        let a = integrate_backlund(&fg, &c1, &random_orthogonal(n, seed, 0.5), 1)?;
        let b = integrate_backlund(&fg, &c2, &random_orthogonal(n, seed + 1, 0.5), 1)?;
        let q = BianchiQuad::compose(fg.r.clone(), a.r1, b.r1, c1, c2)?;
        Ok((fg, q))
    };
    let mut conv = Table::new("convergence_bpt_riccati", &["h", "residual"]);
    run.group(&[("bpt-scalar", "bpt_scalar", B), ("bpt-riccati-slope", "slope_band", Relation::Near(2.0))], |_| {
        let lv = levels(h, steps, [0; 3]);
        let coarse = GridSpec::centered(n, lv[0].0, lv[0].1);
        let res: Vec<(f64, f64, f64, usize)> = lv
            .par_iter()
            .map(|&(hh, s)| {
                let (fg, q) = quad_at(hh, s)?;
                let rep = bpt_verify(&q, &fg.grid, 4);
                let mut w: f64 = 0.0;
                for i in (0..coarse.len()).filter(|&i| coarse.interior(i, 1)) {
                    let k = fg.grid.locate(&coarse, i).ok_or_else(|| Error::InvalidInput("grids are not nested".into()))?;
                    let a = riccati_residual_node(&q.r[1], &q.r[3], &fg.grid, &q.ctx2, k, 2).unwrap_or(0.0);
                    let b = riccati_residual_node(&q.r[2], &q.r[3], &fg.grid, &q.ctx1, k, 2).unwrap_or(0.0);
                    w = w.max(a).max(b);
                }
                Ok((hh, w, rep.scalar, fg.grid.len()))
            })
            .collect::<Result<_>>()?;
        for r in &res {
            conv.push(&[r.0, r.1]);
        }
        let pts: Vec<(f64, f64)> = res.iter().map(|r| (r.0, r.1)).collect();
        Ok(vec![(worst(res.iter().map(|r| r.2)), res.iter().map(|r| r.3).sum()), (fit_slope(&pts), 3)])
    });
    run.tables.push(conv);

    let mut heat = Table::new("lattice_heatmap", &["m0", "m1", "orth_defect", "order_difference"]);
    run.group(&[("lattice-order", "lattice_order", B)], |_| {
        let fg = seed_field(&model, h, (steps / 2).max(8), 1)?;
        let axes = vec![vec![zs[0], zs[2]], vec![zs[1], zs[3]]];
        let (a, b) = rayon::join(
            || lattice_build(&fg, &axes, seed + 20, &fill_order_rows_first(2)),
            || lattice_build(&fg, &axes, seed + 20, &fill_order_columns_first(2)),
        );
        let (a, b) = (a?, b?);
        heat_rows(&mut heat, &a, Some(&b));
        if !a.holes().is_empty() || !b.holes().is_empty() {
            return Err(Error::SingularSuperposition(f64::INFINITY));
        }
        Ok(vec![(lattice_difference(&a, &b), a.fields.len() * fg.grid.len())])
    });
    run.tables.push(heat);
    run.criterion(9, "bpt", &["bpt-orthogonality", "bpt-scalar-random", "bpt-scalar", "bpt-riccati-slope", "lattice-order"]);
}

/// One row per lattice vertex: worst orthogonality defect and, given a second
/// lattice, the largest difference between the two at that vertex.
fn heat_rows(t: &mut Table, a: &Lattice, b: Option<&Lattice>) {
    for (m, f) in &a.fields {
        let mut row: Vec<f64> = m.iter().map(|&x| x as f64).collect();
        row.truncate(t.columns.len() - 2);
        while row.len() < t.columns.len() - 2 {
            row.push(0.0);
        }
        let orth = f.as_ref().map_or(f64::NAN, |f| worst(f.iter().map(orth_defect)));
        let diff = match (f, b.and_then(|b| b.field(m))) {
            (Some(f), Some(g)) => worst(f.iter().zip(g).map(|(x, y)| max_abs(&(x - y)))),
            _ => f64::NAN,
        };
        row.push(orth);
        row.push(diff);
        t.push(&row);
    }
}

fn m3(cfg: &ScenarioConfig, run: &mut Run) {
    let (h, steps) = cfg.grid();
    let seed = cfg.seed();
    let zs = cfg.zs();
    let specs: [Spec; 4] =
        [("m3-integrated", "m3", B), ("m3-symmetric", "m3_symmetric", B), ("cube-routes", "cube", B), ("cube-closure", "cube", B)];
    let setup = cfg.model().and_then(|m| {
        let c = zs[..3].iter().map(|&z| BacklundContext::new(&m, z)).collect::<Result<Vec<_>>>()?;
        Ok((m, c))
    });
    let (model, c) = match setup {
        Ok(x) => x,
        Err(e) => {
            run.status(&specs, Status::Error, &e.to_string(), 0.0);
            return run.criterion(10, "m3-closure", &["m3-integrated", "m3-symmetric", "cube-routes", "cube-closure"]);
        }
    };
    let n = model.n();
    let mut heat = Table::new("m3_discrepancy", &["i0", "i1", "discrepancy"]);
    run.group(&specs[..1], |_| {
        let fg = seed_field(&model, h, steps, 1)?;
        let leaves: Vec<Vec<CMat>> = (0..3)
            .into_par_iter()
            .map(|k| Ok(integrate_backlund(&fg, &c[k], &random_orthogonal(n, seed + k as u64, 0.5), LATTICE_SUBSTEPS)?.r1))
            .collect::<Result<_>>()?;
        let per: Vec<f64> = (0..fg.grid.len())
            .into_par_iter()
            .map(|i| Ok(m3_r7(&fg.r[i], &leaves[0][i], &leaves[1][i], &leaves[2][i], [&c[0], &c[1], &c[2]])?.discrepancy))
            .collect::<Result<_>>()?;
        for (i, d) in per.iter().enumerate() {
            let m = fg.grid.multi(i);
            heat.push(&[m[0] as f64, m.get(1).copied().unwrap_or(0) as f64, *d]);
        }
        let k = per.len();
        Ok(vec![(worst(per), k)])
    });
    run.tables.push(heat);
    run.group(&specs[1..2], |_| {
        let r0 = random_orthogonal(n, seed + 10, 0.5);
        let r = random_orthogonal(n, seed + 11, 0.5);
        let res = m3_r7(&r0, &r, &r, &r, [&c[0], &c[1], &c[2]])?;
        Ok(vec![(res.discrepancy.max(max_abs(&(&res.r7 - &r))), 1)])
    });
    run.group(&specs[2..], |_| {
        let fg = seed_field(&model, h, (steps / 2).max(8), 1)?;
        let axes: Vec<Vec<C64>> = zs[..3].iter().map(|&z| vec![z]).collect();
        let lat = lattice_build(&fg, &axes, seed + 21, &fill_order_rows_first(3))?;
        let rep = lattice_verify(&lat, &fg.grid, 4, 5)?;
        if rep.cube_count != 1 {
            return Err(Error::InvalidInput(format!("expected one cube, found {} ({} holes)", rep.cube_count, rep.holes)));
        }
        let k = fg.grid.len().div_ceil(5);
        Ok(vec![(rep.cube_routes, k), (rep.cube_closure, k)])
    });
    run.criterion(10, "m3-closure", &["m3-integrated", "m3-symmetric", "cube-routes", "cube-closure"]);
}

fn lattice(cfg: &ScenarioConfig, run: &mut Run) {
    let (h, steps) = cfg.grid();
    let seed = cfg.seed();
    let zs = cfg.zs();
    let mut axes = Vec::new();
    let mut at = 0;
    for &k in &cfg.shape {
        axes.push(zs[at..at + k].to_vec());
        at += k;
    }
    let specs: [Spec; 7] = [
        ("lattice-holes", "", Relation::Zero),
        ("lattice-order", "lattice_order", B),
        ("lattice-scalar", "bpt_scalar", B),
        ("lattice-orth", "lattice_orth", B),
        ("lattice-riccati", "bpt_truncation", B),
        ("lattice-cube-routes", "cube", B),
        ("lattice-cube-closure", "cube", B),
    ];
    let mut cols: Vec<String> = (0..axes.len()).map(|a| format!("m{a}")).collect();
    cols.push("orth_defect".into());
    cols.push("order_difference".into());
    let colr: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut heat = Table::new("lattice_heatmap", &colr);
    run.group(&specs, |_| {
        let model = cfg.model()?;
        let fg = seed_field(&model, h, steps, 1)?;
        let k = axes.len();
        let (a, b) = rayon::join(
            || lattice_build(&fg, &axes, seed, &fill_order_rows_first(k)),
            || lattice_build(&fg, &axes, seed, &fill_order_columns_first(k)),
        );
        let (a, b) = (a?, b?);
        heat_rows(&mut heat, &a, Some(&b));
        let rep = lattice_verify(&a, &fg.grid, 4, 5)?;
        let len = fg.grid.len();
        let s = rep.squares;
        let cubes = rep.cube_count * len.div_ceil(5);
        Ok(vec![
            ((a.holes().len() + b.holes().len()) as f64, a.fields.len()),
            (lattice_difference(&a, &b), a.fields.len() * len),
            (s.scalar, s.samples),
            (s.orth, s.samples),
            (s.riccati_1.max(s.riccati_2), s.samples),
            (rep.cube_routes, cubes),
            (rep.cube_closure, cubes),
        ])
    });
    run.tables.push(heat);
}

fn sine_gordon(cfg: &ScenarioConfig, run: &mut Run) {
    let (h, steps) = cfg.grid();
    let seed = cfg.seed();
    let count = cfg.samples(20);
    let mut table = Table::new("sine_gordon_fields", &["field", "correlation", "constant"]);
    let mut constant = f64::NAN;
    run.group(&[("sg-correlation", "correlation", Relation::AtLeast), ("sg-constant", "", Relation::Info)], |_| {
        let model = cfg.model()?;
        let grid = GridSpec::centered(2, h, steps);
        let per: Vec<(f64, f64, usize)> = (0..count as u64)
            .into_par_iter()
            .map(|s| {
                let mut g = rng(sub_seed(seed, 16, s));
                let c: Vec<f64> = (0..6).map(|_| 2.0 * rand::Rng::random::<f64>(&mut g) - 1.0).collect();
                let phi: Vec<f64> = (0..grid.len())
                    .map(|i| {
                        let u = grid.u(i);
                        c[0] + c[1] * (2.0 * u[0] + c[2]).sin() + c[3] * u[0] * u[1] + c[4] * (3.0 * u[1]).cos() + c[5] * u[0] * u[0]
                    })
                    .collect();
                let fg = rotation_field(&model, &grid, &phi);
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for i in (0..grid.len()).filter(|&i| grid.interior(i, 2)) {
                    let (Some(m), Some(sg)) = (def_two_form(&fg, i, 2), sine_gordon_residual(&grid, &phi, i)) else { continue };
                    xs.push(m[(0, 1)].re);
                    ys.push(sg);
                }
                let (corr, k) = correlation(&xs, &ys);
                Ok((corr, k, xs.len()))
            })
            .collect::<Result<_>>()?;
        for (i, p) in per.iter().enumerate() {
            table.push(&[i as f64, p.0, p.1]);
        }
        let min_corr = per.iter().map(|p| p.0.abs()).fold(f64::INFINITY, f64::min);
        constant = per.iter().map(|p| p.1).sum::<f64>() / per.len() as f64;
        let samples: usize = per.iter().map(|p| p.2).sum();
        Ok(vec![(min_corr, count), (constant, samples)])
    });
    run.tables.push(table);
    run.note("sg-constant", "two-form residual = constant x sine-Gordon residual (mean over fields)".into());
    run.criterion(12, "sine-gordon", &["sg-correlation"]);
    if constant.is_finite() {
        run.note("sine-gordon", format!("sg-correlation; proportionality constant {constant:.6}"));
    }
}

/// Pearson correlation and the least-squares constant `k` in `x ≈ k y`.
fn correlation(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        xy += a * b;
        yy += b * b;
    }
    (sxy / (sxx * syy).sqrt(), xy / yy)
}
