//! Bäcklund transformations: the matrix Riccati equations for `R₁`, the
//! pointwise algebraic transforms of `(V, Λ)`, leaf geometry and its checks.

use serde::{Deserialize, Serialize};

use crate::deform::{
    ej, fd, rk4, sweep, AmbientFrame, FieldGrid, JoinedInput, Model, PointForms, joined_forms_residual,
};
use crate::quadric::{eval_confocal, ivory_map, stereo_y};
use crate::sjcore::{bdot, bsq, bsqrt, e, max_abs, orth_complete, orth_defect, rand_cvec, rng, vmax_abs};
use crate::{c64, CMat, CVec, Error, Result, C64};

/// `|U|` below this rejects a QC step.
pub const TOL_U: f64 = 1e-8;
/// Orthogonality drift that aborts an integration.
pub const DRIFT_ABORT: f64 = 1e-4;
/// Step halvings tried before a QC node is declared unreachable.
pub const MAX_HALVINGS: usize = 8;

/// Spectral parameter with its square-root branch and the derived `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct BacklundContext {
    pub z: C64,
    pub sz: C64,
    pub graph: bool,
    /// `R′_z` (`n × n`) in the paraboloid chart, `R_z` for quadrics with centre.
    pub rz: CMat,
    pub sqrt_r: CMat,
    pub d: CMat,
    /// `I_{1,n}L^{−1}C(z)`; zero for quadrics with centre.
    pub c: CVec,
}

impl BacklundContext {
    pub fn new(model: &Model, z: C64) -> Result<Self> {
        Self::with_root(model, z, bsqrt(z))
    }

    pub fn with_root(model: &Model, z: C64, sz: C64) -> Result<Self> {
        if z.norm() < 1e-14 {
            return Err(Error::InvalidInput("z must be nonzero".into()));
        }
        if (sz * sz - z).norm() > 1e-12 * z.norm().max(1.0) {
            return Err(Error::InvalidInput("sz is not a square root of z".into()));
        }
        let n = model.n();
        let (rz, sqrt_r, c) = match &model.lm {
            Some(lm) => {
                let rp = CMat::identity(n, n) - lm.a_prime_n() * z;
                if rp.determinant().norm() < 1e-12 {
                    return Err(Error::SingularConfocal(z));
                }
                (rp, lm.sqrt_rprime(&model.q, z)?, lm.c_prime(&model.q, z))
            }
            None => (model.q.resolvent(z), model.q.sqrt_rz(z)?, CVec::zeros(n)),
        };
        let d = &sqrt_r / sz;
        Ok(BacklundContext { z, sz, graph: model.is_graph(), rz, sqrt_r, d, c })
    }

    /// The context of the inverse transform: `√z → −√z`.
    pub fn mirrored(&self) -> Self {
        BacklundContext { sz: -self.sz, d: -&self.d, ..self.clone() }
    }

    /// `‖D² − R/z‖`.
    pub fn d_residual(&self) -> f64 {
        max_abs(&(&self.d * &self.d - &self.rz / self.z))
    }
}

/// State of the linear system at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub v: CVec,
    pub lam: CVec,
    pub r: CMat,
}

impl FieldGrid {
    pub fn node(&self, idx: usize) -> Node {
        Node { v: self.v[idx].clone(), lam: self.lam[idx].clone(), r: self.r[idx].clone() }
    }
}

fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

fn mat_of(v: &CVec, n: usize) -> CMat {
    CMat::from_column_slice(n, n, v.as_slice())
}

/// `∂_jR₁` from `−dR₁ = R₁ω₀ + R₁δR₀ᵀDR₁ − DR₀δ`.
pub fn riccati_rhs_qwc(ctx: &BacklundContext, r0: &CMat, om0_j: &CMat, r1: &CMat, j: usize) -> CMat {
    let n = r1.nrows();
    let e = ej(j, n);
    -(r1 * om0_j + r1 * &e * r0.transpose() * &ctx.d * r1 - &ctx.d * r0 * &e)
}

/// The auxiliary `M, N, W, U` of the centred Riccati equation at `V₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct QCAux {
    pub m: CMat,
    pub nv: CVec,
    pub w: CVec,
    pub u: C64,
}

/// `[I_n; Vᵀ]`, the matrix of `I_{1,n} + e_{n+1}Vᵀ` restricted to `C^n`.
fn lift(v: &CVec) -> CMat {
    let n = v.len();
    let mut m = CMat::zeros(n + 1, n);
    m.view_mut((0, 0), (n, n)).fill_with_identity();
    m.row_mut(n).copy_from(&v.transpose());
    m
}

impl QCAux {
    pub fn at(ctx: &BacklundContext, v0: &CVec) -> QCAux {
        let n = v0.len();
        let sr = &ctx.sqrt_r;
        let y0 = stereo_y(v0);
        let s = bsq(v0) + 1.0;
        let m = (sr * lift(v0) / ctx.sz).rows(0, n).into_owned();
        let nv = (sr * &y0 / ctx.sz).rows(0, n).into_owned();
        let col = sr.column(n).into_owned();
        let w = col.rows(0, n) + v0 * col[n] - v0;
        let u = (sr.row(n) * &y0)[0] - s;
        QCAux { m, nv, w, u }
    }
}

/// `∂_jR₁` from the compact centred Riccati equation
/// `−dR₁ = R₁ω₀ + 2MR₀δ − 2R₁δR₀ᵀMᵀR₁ + (2/U)R₁δR₀ᵀW(Λ₀ᵀ + NᵀR₁) − (2/U)(R₁Λ₀ + N)WᵀR₀δ`.
pub fn riccati_rhs_qc(seed: &Node, om0_j: &CMat, r1: &CMat, aux: &QCAux, j: usize) -> Result<CMat> {
    if aux.u.norm() < TOL_U {
        return Err(Error::UNearZero(aux.u.norm()));
    }
    let n = r1.nrows();
    let e = ej(j, n);
    let r0 = &seed.r;
    let k = c64(2.0, 0.0) / aux.u;
    let row = seed.lam.transpose() + aux.nv.transpose() * r1;
    let m = r1 * om0_j + &aux.m * r0 * &e * c64(2.0, 0.0) - r1 * &e * r0.transpose() * aux.m.transpose() * r1 * c64(2.0, 0.0)
        + r1 * &e * r0.transpose() * &aux.w * row * k
        - (r1 * &seed.lam + &aux.nv) * aux.w.transpose() * r0 * &e * k;
    Ok(-m)
}

/// The same derivative evaluated term by term from the expanded display,
/// without the auxiliary quantities; used as a cross-check.
pub fn riccati_rhs_qc_expanded(ctx: &BacklundContext, seed: &Node, om0_j: &CMat, r1: &CMat, j: usize) -> Result<CMat> {
    let n = r1.nrows();
    let (v0, r0) = (&seed.v, &seed.r);
    let sr = &ctx.sqrt_r;
    let srz = sr / ctx.sz;
    let y0 = stereo_y(v0);
    let en = e(n, n + 1);
    let u = bdot(&en, &(sr * &y0)) - bsq(v0) - 1.0;
    if u.norm() < TOL_U {
        return Err(Error::UNearZero(u.norm()));
    }
    // I_{1,n} + V₀e_{n+1}ᵀ as an n × (n+1) matrix.
    let mut proj = CMat::zeros(n, n + 1);
    proj.view_mut((0, 0), (n, n)).fill_with_identity();
    proj.column_mut(n).copy_from(v0);
    let emb = lift(&CVec::zeros(n));
    let e_j = ej(j, n);
    let two = c64(2.0, 0.0);
    let t1 = r1 * om0_j;
    let t2 = (&srz * lift(v0)).rows(0, n) * r0 * &e_j * two;
    let t3 = r1 * &e_j * r0.transpose() * &proj * &srz * &emb * r1 * (-two);
    let num = &proj * sr * &en - v0;
    let row = seed.lam.transpose() + (y0.transpose() * &srz * &emb) * r1;
    let t4 = r1 * &e_j * r0.transpose() * num * row * (two / u);
    let col = r1 * &seed.lam + (&srz * &y0).rows(0, n);
    let row2 = en.transpose() * sr * lift(v0) - v0.transpose();
    let t5 = col * row2 * r0 * &e_j * (-two / u);
    Ok(-(t1 + t2 + t3 + t4 + t5))
}

/// `R₁` on the grid with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct BacklundRun {
    pub r1: Vec<CMat>,
    /// `max ‖R₁R₁ᵀ − I‖`.
    pub orth_drift: f64,
    /// Largest difference between the two sweep orders.
    pub path_mismatch: f64,
}

fn check_zero_soliton(seed: &FieldGrid) -> Result<()> {
    let n = seed.n();
    let id = CMat::identity(n, n);
    if seed.r.iter().any(|r| max_abs(&(r - &id)) > 1e-14) {
        return Err(Error::InvalidInput("Riccati integration on a grid needs a seed with R = I".into()));
    }
    Ok(())
}

/// Integrates the Riccati equation over the seed's grid from `R₁(base)`,
/// once along each of two sweep orders. The seed must be a 0-soliton
/// (`R₀ ≡ I`, `ω₀ ≡ 0`) in the paraboloid chart.
pub fn integrate_backlund(seed: &FieldGrid, ctx: &BacklundContext, r1_base: &CMat, substeps: usize) -> Result<BacklundRun> {
    if !ctx.graph {
        return Err(Error::InvalidInput("grid Riccati integration is for the paraboloid chart".into()));
    }
    check_zero_soliton(seed)?;
    let n = seed.n();
    let id = CMat::identity(n, n);
    let zero = CMat::zeros(n, n);
    let sub = substeps.max(1);
    let run = |order: &[usize]| {
        sweep(&seed.grid, vec_of(r1_base), order, |y, _, j, h| {
            let mut y = y.clone();
            for _ in 0..sub {
                y = rk4(&y, h / sub as f64, |s| Ok(vec_of(&riccati_rhs_qwc(ctx, &id, &zero, &mat_of(s, n), j))))?;
            }
            Ok(y)
        })
    };
    let fwd: Vec<usize> = (0..n).collect();
    let rev: Vec<usize> = (0..n).rev().collect();
    let a = run(&fwd)?;
    let b = run(&rev)?;
    let path_mismatch = a.iter().zip(&b).map(|(x, y)| vmax_abs(&(x - y))).fold(0.0, f64::max);
    let r1: Vec<CMat> = a.iter().map(|v| mat_of(v, n)).collect();
    let orth_drift = r1.iter().map(orth_defect).fold(0.0, f64::max);
    if orth_drift > DRIFT_ABORT && orth_defect(r1_base) < DRIFT_ABORT {
        return Err(Error::DriftExceeded(orth_drift));
    }
    Ok(BacklundRun { r1, orth_drift, path_mismatch })
}

/// `V₁ = √R′V₀ + c − √zR₁Λ₀`, `Λ₁ = R₀ᵀ(√zA′V₀ + √R′R₁Λ₀ + √zb)`.
pub fn algebraic_transform_qwc(model: &Model, ctx: &BacklundContext, seed: &Node, r1: &CMat) -> Result<Node> {
    let crate::deform::System::Graph { a, b, .. } = &model.sys else {
        return Err(Error::InvalidInput("paraboloid-chart transform needs a quadric without centre".into()));
    };
    let rl = r1 * &seed.lam;
    let v = &ctx.sqrt_r * &seed.v + &ctx.c - &rl * ctx.sz;
    let lam = seed.r.transpose() * ((a * &seed.v + b) * ctx.sz + &ctx.sqrt_r * &rl);
    Ok(Node { v, lam, r: r1.clone() })
}

/// `U = e_{n+1}ᵀ√R_zY(V₀) − |V₀|² − 1`.
pub fn qc_u(ctx: &BacklundContext, v0: &CVec) -> C64 {
    let n = v0.len();
    (ctx.sqrt_r.row(n) * stereo_y(v0))[0] - bsq(v0) - 1.0
}

/// `(I_{1,n} + Ve_{n+1}ᵀ)y`.
fn fold(y: &CVec, v: &CVec) -> CVec {
    let n = v.len();
    y.rows(0, n) + v * y[n]
}

/// The centred transform; fails with `UNearZero` on the singular locus.
pub fn algebraic_transform_qc(model: &Model, ctx: &BacklundContext, seed: &Node, r1: &CMat) -> Result<Node> {
    if model.is_graph() {
        return Err(Error::InvalidInput("centred transform needs a quadric with centre".into()));
    }
    let n = seed.v.len();
    let a = &model.q.a;
    let sr = &ctx.sqrt_r;
    let y0 = stereo_y(&seed.v);
    let u = qc_u(ctx, &seed.v);
    if u.norm() < TOL_U {
        return Err(Error::UNearZero(u.norm()));
    }
    let rl = r1 * &seed.lam;
    let v1 = -(&rl * ctx.sz + (sr * &y0).rows(0, n)) / u;
    let s = bdot(&v1, &rl);
    let mut up = CVec::zeros(n + 1);
    up.rows_mut(0, n).copy_from(&rl);
    up[n] = s;
    let inner = a * &y0 * ctx.sz - sr * up;
    let lam1 = seed.r.transpose() * (fold(&inner, &seed.v) + &seed.v * s) * (c64(2.0, 0.0) / u);
    Ok(Node { v: v1, lam: lam1, r: r1.clone() })
}

pub fn algebraic_transform(model: &Model, ctx: &BacklundContext, seed: &Node, r1: &CMat) -> Result<Node> {
    if model.is_graph() {
        algebraic_transform_qwc(model, ctx, seed, r1)
    } else {
        algebraic_transform_qc(model, ctx, seed, r1)
    }
}

/// Residuals of the relations a transformed pair must satisfy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformChecks {
    /// Prime integral of the leaf.
    pub prime_integral: f64,
    /// Tangency configuration between the seed and the leaf.
    pub tangency: f64,
    /// The two relations between `R₁Λ₀` and `R₀Λ₁`.
    pub rla_seed: f64,
    pub rla_leaf: f64,
    /// `zH₁` vanishes: the leaf `Λ₁` is isotropic.
    pub degenerate: bool,
}

impl TransformChecks {
    pub fn max(&self) -> f64 {
        self.prime_integral.max(self.tangency).max(self.rla_seed).max(self.rla_leaf)
    }
}

pub fn transform_checks(model: &Model, ctx: &BacklundContext, seed: &Node, leaf: &Node) -> TransformChecks {
    let sys = &model.sys;
    let pot1 = sys.potential(&leaf.v);
    let prime_integral = sys.prime_integral(&leaf.v, &leaf.lam).norm();
    let degenerate = (ctx.z * pot1).norm() < 1e-12;
    if model.is_graph() {
        let t1 = &ctx.sqrt_r * &leaf.v - &seed.v + &ctx.c;
        let t0 = &ctx.sqrt_r * &seed.v - &leaf.v + &ctx.c;
        TransformChecks {
            prime_integral,
            tangency: (bsq(&t1) + ctx.z * pot1).norm(),
            rla_seed: vmax_abs(&(&leaf.r * &seed.lam * ctx.sz - t0)),
            rla_leaf: vmax_abs(&(&seed.r * &leaf.lam * (-ctx.sz) - t1)),
            degenerate,
        }
    } else {
        let sr = &ctx.sqrt_r;
        let (y0, y1) = (stereo_y(&seed.v), stereo_y(&leaf.v));
        let (s0, s1) = (bsq(&seed.v) + 1.0, bsq(&leaf.v) + 1.0);
        let tangency = (bdot(&y0, &(sr * &y1)) - s0 * s1).norm();
        let a = &seed.r * &leaf.lam * ctx.sz - (fold(&(sr * &y1), &seed.v) - &seed.v * s1);
        let b = &leaf.r * &seed.lam * (-ctx.sz) - (fold(&(sr * &y0), &leaf.v) - &leaf.v * s0);
        TransformChecks { prime_integral, tangency, rla_seed: vmax_abs(&b), rla_leaf: vmax_abs(&a), degenerate }
    }
}

/// Leaf field `(V₁, Λ₁, R₁)` from a seed field and an integrated `R₁`.
pub fn leaf_field(seed: &FieldGrid, ctx: &BacklundContext, r1: &[CMat]) -> Result<FieldGrid> {
    let mut v = Vec::with_capacity(r1.len());
    let mut lam = Vec::with_capacity(r1.len());
    for (i, r) in r1.iter().enumerate() {
        let leaf = algebraic_transform(&seed.model, ctx, &seed.node(i), r)?;
        v.push(leaf.v);
        lam.push(leaf.lam);
    }
    Ok(FieldGrid { grid: seed.grid.clone(), model: seed.model.clone(), v, lam, r: r1.to_vec() })
}

/// Largest transform-check residual over a seed/leaf pair of fields.
pub fn field_transform_checks(seed: &FieldGrid, ctx: &BacklundContext, leaf: &FieldGrid) -> TransformChecks {
    let mut out = TransformChecks::default();
    for i in 0..seed.grid.len() {
        let c = transform_checks(&seed.model, ctx, &seed.node(i), &leaf.node(i));
        out.prime_integral = out.prime_integral.max(c.prime_integral);
        out.tangency = out.tangency.max(c.tangency);
        out.rla_seed = out.rla_seed.max(c.rla_seed);
        out.rla_leaf = out.rla_leaf.max(c.rla_leaf);
        out.degenerate |= c.degenerate;
    }
    out
}

/// Seed and `R₁` along one coordinate line of a quadric with centre.
#[derive(Debug, Clone, PartialEq)]
pub struct QcLine {
    pub axis: usize,
    pub h: f64,
    /// `None` past the first node the step control could not reach.
    pub seed: Vec<Option<Node>>,
    pub r1: Vec<Option<CMat>>,
    pub halvings: usize,
    pub orth_drift: f64,
}

impl QcLine {
    pub fn reached(&self) -> usize {
        self.r1.iter().filter(|r| r.is_some()).count()
    }
}

/// Integrates seed and Riccati equation jointly along `axis` from
/// `(V₀, Λ₀, R₁)`, with `R₀ ≡ I`, `ω₀ ≡ 0` on the line. Steps meeting
/// `|U| < TOL_U` are halved up to [`MAX_HALVINGS`] times.
pub fn integrate_backlund_qc_line(
    model: &Model,
    ctx: &BacklundContext,
    v0: &CVec,
    lam0: &CVec,
    r1_base: &CMat,
    axis: usize,
    h: f64,
    steps: usize,
) -> Result<QcLine> {
    if model.is_graph() || ctx.graph {
        return Err(Error::InvalidInput("line integration is for quadrics with centre".into()));
    }
    let n = model.n();
    let id = CMat::identity(n, n);
    let zero = CMat::zeros(n, n);
    let rhs = |y: &CVec| -> Result<CVec> {
        let v = y.rows(0, n).into_owned();
        let lam = y.rows(n, n).into_owned();
        let r1 = mat_of(&y.rows(2 * n, n * n).into_owned(), n);
        let aux = QCAux::at(ctx, &v);
        let seed = Node { v: v.clone(), lam: lam.clone(), r: id.clone() };
        let dr = riccati_rhs_qc(&seed, &zero, &r1, &aux, axis)?;
        let mut out = CVec::zeros(y.len());
        out[axis] = lam[axis];
        out[n + axis] = -model.sys.force(&v)[axis];
        out.rows_mut(2 * n, n * n).copy_from(&vec_of(&dr));
        Ok(out)
    };
    let mut y = CVec::zeros(2 * n + n * n);
    y.rows_mut(0, n).copy_from(v0);
    y.rows_mut(n, n).copy_from(lam0);
    y.rows_mut(2 * n, n * n).copy_from(&vec_of(r1_base));
    let unpack = |y: &CVec| {
        (
            Node { v: y.rows(0, n).into_owned(), lam: y.rows(n, n).into_owned(), r: id.clone() },
            mat_of(&y.rows(2 * n, n * n).into_owned(), n),
        )
    };
    rhs(&y)?;
    let mut seed = vec![None; steps];
    let mut r1 = vec![None; steps];
    let (s, r) = unpack(&y);
    seed[0] = Some(s);
    r1[0] = Some(r);
    let mut halvings = 0;
    'outer: for k in 1..steps {
        for level in 0..=MAX_HALVINGS {
            let parts = 1usize << level;
            let mut t = y.clone();
            let mut ok = true;
            for _ in 0..parts {
                match rk4(&t, h / parts as f64, &rhs) {
                    Ok(next) => t = next,
                    Err(Error::UNearZero(_)) => {
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if ok {
                halvings += level;
                y = t;
                let (s, r) = unpack(&y);
                seed[k] = Some(s);
                r1[k] = Some(r);
                continue 'outer;
            }
        }
        break;
    }
    let orth_drift = r1.iter().flatten().map(orth_defect).fold(0.0, f64::max);
    Ok(QcLine { axis, h, seed, r1, halvings, orth_drift })
}

/// Checks along a QC line: leaf prime integral, transform relations and
/// `∂V₁ = R₁e_jλ₁_j` by central differences.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QcLineChecks {
    pub transform: f64,
    pub leaf_derivative: f64,
    pub orth_drift: f64,
    pub samples: usize,
}

pub fn qc_line_checks(model: &Model, ctx: &BacklundContext, line: &QcLine) -> Result<QcLineChecks> {
    let mut leaves = Vec::with_capacity(line.r1.len());
    let mut out = QcLineChecks { orth_drift: line.orth_drift, ..Default::default() };
    for (s, r) in line.seed.iter().zip(&line.r1) {
        match (s, r) {
            (Some(s), Some(r)) => {
                let leaf = algebraic_transform_qc(model, ctx, s, r)?;
                out.transform = out.transform.max(transform_checks(model, ctx, s, &leaf).max());
                leaves.push(Some(leaf));
            }
            _ => leaves.push(None),
        }
    }
    let j = line.axis;
    for k in 1..leaves.len().saturating_sub(1) {
        let (Some(a), Some(b), Some(c)) = (&leaves[k - 1], &leaves[k], &leaves[k + 1]) else { continue };
        let dv = (&c.v - &a.v) / c64(2.0 * line.h, 0.0);
        let want = b.r.column(j) * b.lam[j];
        out.leaf_derivative = out.leaf_derivative.max(vmax_abs(&(dv - want)));
        out.samples += 1;
    }
    Ok(out)
}

/// The confocal counterpart `x_z¹ = x₀⁰ + [x₀_v](√R′V₁ − V₀ + c)` of a leaf point.
pub fn confocal_counterpart(model: &Model, ctx: &BacklundContext, v0: &CVec, v1: &CVec) -> Result<CVec> {
    let w = &ctx.sqrt_r * v1 - v0 + &ctx.c;
    Ok(model.chart(v0)? + model.jacobian(v0)? * w)
}

/// Geometry of the leaf of the degenerate seed `x⁰ = x₀`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DegenerateSeedChecks {
    /// `max |Q_z(x_z¹)|`.
    pub confocal: f64,
    /// `max ‖x_z¹ − (√R_z x₀(V₁) + C(z))‖`.
    pub ivory: f64,
    pub samples: usize,
}

pub fn degenerate_seed_checks(ctx: &BacklundContext, seed: &FieldGrid, leaf: &FieldGrid) -> Result<DegenerateSeedChecks> {
    let model = &seed.model;
    if !model.is_graph() {
        return Err(Error::InvalidInput("degenerate-seed geometry is implemented for the paraboloid chart".into()));
    }
    let mut out = DegenerateSeedChecks::default();
    for i in 0..seed.grid.len() {
        let x = confocal_counterpart(model, ctx, &seed.v[i], &leaf.v[i])?;
        out.confocal = out.confocal.max(eval_confocal(&model.q, ctx.z, &x)?.norm());
        let iv = ivory_map(&model.q, ctx.z, &model.chart(&leaf.v[i])?)?;
        out.ivory = out.ivory.max(vmax_abs(&(x - iv)));
        out.samples += 1;
    }
    Ok(out)
}

/// Ruling condition for the transported facet at one node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RulingCheck {
    /// `max_± |wᵀAR_z^{−1}w|`.
    pub ruling: f64,
    /// `max_± |Mᵀe₁ ± iMᵀe₂|²`.
    pub isotropy: f64,
    /// The ruling residual of a random unit direction; should be `O(1)`.
    pub control: f64,
}

/// Builds the facet rotation `M` with `Mᵀe₁ = i(√R′V₀ − V₁ + c)/√(zH₀)` and
/// checks that `w = [x_{z,v₁}](Mᵀe₁ ± iMᵀe₂)` are rulings of `x_z`.
pub fn ruling_facet_check(model: &Model, ctx: &BacklundContext, seed: &Node, leaf: &Node, rseed: u64) -> Result<RulingCheck> {
    if !model.is_graph() {
        return Err(Error::InvalidInput("facet check is implemented for the paraboloid chart".into()));
    }
    let n = model.n();
    if n < 2 {
        return Err(Error::InvalidInput("facet check needs n >= 2".into()));
    }
    let h0 = model.sys.potential(&seed.v);
    let t = (&ctx.sqrt_r * &seed.v - &leaf.v + &ctx.c) * (c64(0.0, 1.0) / bsqrt(ctx.z * h0));
    let t = &t / bsqrt(bsq(&t));
    let m = orth_complete(&[t], n, rseed)?;
    let q = &model.q;
    let tang = q.sqrt_rz(ctx.z)? * model.jacobian(&leaf.v)?;
    let ar = &q.a * q.resolvent_inv(ctx.z)?;
    let form = |d: &CVec| -> f64 {
        let w = &tang * d;
        bdot(&w, &(&ar * &w)).norm()
    };
    let m1 = m.row(0).transpose();
    let m2 = m.row(1).transpose();
    let mut out = RulingCheck::default();
    for sign in [1.0, -1.0] {
        let d = &m1 + &m2 * c64(0.0, sign);
        out.isotropy = out.isotropy.max(bsq(&d).norm());
        out.ruling = out.ruling.max(form(&d));
    }
    let mut g = rng(rseed ^ 0x5eed);
    let mut d = rand_cvec(&mut g, n, 1.0);
    d /= bsqrt(bsq(&d));
    out.control = form(&d);
    Ok(out)
}

/// Leaf of a seed embedded in `C^{2n−1}`, with ACPIA and joined-forms residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafEmbedding {
    pub x1: Vec<CVec>,
    /// `max |x¹_jᵀx¹_k − g¹_{jk}|` with `x¹_j` by finite differences.
    pub acpia: f64,
    pub joined: f64,
    pub samples: usize,
}

/// `x¹ = x⁰ + [x⁰_{v₀}](√R′V₁ − V₀ + c)`, with `[x⁰_{v₀}] = [x⁰_u](R₀ diag Λ₀)^{−1}`.
pub fn leaf_embed(frame: &AmbientFrame, seed: &FieldGrid, leaf: &FieldGrid, ctx: &BacklundContext, order: usize) -> Result<LeafEmbedding> {
    let model = &seed.model;
    if !model.is_graph() {
        return Err(Error::InvalidInput("leaf embedding is implemented for the paraboloid chart".into()));
    }
    let grid = &seed.grid;
    let n = seed.n();
    let len = grid.len();
    let mut x1 = Vec::with_capacity(len);
    for i in 0..len {
        let rl = &seed.r[i] * CMat::from_diagonal(&seed.lam[i]);
        let inv = rl.try_inverse().ok_or(Error::DegenerateLambda(i))?;
        let w = &ctx.sqrt_r * &leaf.v[i] - &seed.v[i] + &ctx.c;
        x1.push(&frame.x[i] + &frame.xt[i] * inv * w);
    }
    let x01: Vec<CVec> = leaf.v.iter().map(|v| model.chart(v)).collect::<Result<_>>()?;
    let n00: Vec<CVec> = seed.v.iter().map(|v| model.normal_h(v).map(|p| p.0)).collect::<Result<_>>()?;
    let srz = model.q.sqrt_rz(ctx.z)?;
    let cz = model.q.c_of_z(ctx.z);
    let deriv = |f: &[CVec], i: usize| -> Option<CMat> {
        let cols: Option<Vec<CVec>> = (0..n).map(|a| fd(grid, f, i, a, order)).collect();
        cols.map(|c| CMat::from_columns(&c))
    };
    let nal = frame.normals[0].ncols();
    let normal_cols: Vec<Vec<CVec>> = (0..nal)
        .map(|al| frame.normals.iter().map(|m| m.column(al).into_owned()).collect())
        .collect();
    let mut out = LeafEmbedding { x1: Vec::new(), acpia: 0.0, joined: 0.0, samples: 0 };
    for i in 0..len {
        let Some(t1) = deriv(&x1, i) else { continue };
        let g1 = {
            let xt = model.jacobian(&leaf.v[i])? * &leaf.r[i] * CMat::from_diagonal(&leaf.lam[i]);
            xt.transpose() * xt
        };
        out.acpia = out.acpia.max(max_abs(&(t1.transpose() * &t1 - g1)));
        let (Some(dx01), Some(dn00)) = (deriv(&x01, i), deriv(&n00, i)) else { continue };
        let dnal: Option<Vec<CMat>> = normal_cols.iter().map(|f| deriv(f, i)).collect();
        let Some(dnal) = dnal else { continue };
        let dxz1 = &srz * &dx01;
        let xz1 = &srz * &x01[i] + &cz;
        let d0 = &xz1 - model.chart(&seed.v[i])?;
        let d1 = &x1[i] - &frame.x[i];
        let r = joined_forms_residual(&JoinedInput { dx01: &dx01, dxz1: &dxz1, dn00: &dn00, d0: &d0, dnal: &dnal, d1: &d1 });
        out.joined = out.joined.max(r);
        out.samples += 1;
    }
    out.x1 = x1;
    Ok(out)
}

/// `(a^j)²` solving `Σ_j (a^j)² h^α_j = 0`, scaled so the first entry is 1.
pub fn asymptotic_weights(hal: &CMat) -> Option<CVec> {
    let n = hal.ncols();
    let mut m = CMat::zeros(n, n);
    m.view_mut((0, 0), (hal.nrows(), n)).copy_from(hal);
    let svd = m.svd(false, true);
    let vt = svd.v_t?;
    let (k, _) = svd.singular_values.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let s = vt.row(k).transpose();
    if s[0].norm() < 1e-14 {
        return None;
    }
    Some(&s / s[0])
}

/// Seed and leaf asymptotic directions are the sign vectors `a^j = ±1`.
pub fn asymptotic_correspondence_check(seed: &PointForms, leaf: &PointForms, tol: f64) -> (bool, f64) {
    let dev = |pf: &PointForms| {
        asymptotic_weights(&pf.hal).map_or(f64::INFINITY, |s| s.iter().map(|x| (x - 1.0).norm()).fold(0.0, f64::max))
    };
    let r = dev(seed).max(dev(leaf));
    (r < tol, r)
}

/// `∂_jR₁` on the grid by central differences minus the Riccati right-hand
/// side, with `ω₀` taken from the seed's `R₀` by differences.
pub fn riccati_residual_node(seed_r: &[CMat], r1: &[CMat], grid: &crate::deform::GridSpec, ctx: &BacklundContext, idx: usize, order: usize) -> Option<f64> {
    let n = grid.n();
    let r0 = &seed_r[idx];
    let p0: Option<Vec<CMat>> = (0..n).map(|j| fd(grid, seed_r, idx, j, order).map(|d| r0.transpose() * d)).collect();
    let om = crate::deform::omega_from_p(&p0?);
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let d = fd(grid, r1, idx, j, order)?;
        worst = worst.max(max_abs(&(d - riccati_rhs_qwc(ctx, r0, &om[j], &r1[idx], j))));
    }
    Some(worst)
}
