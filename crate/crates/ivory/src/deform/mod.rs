//! Conjugate-coordinate deformations of quadrics: the linear system for
//! `(V, Λ)` driven by an orthogonal `R`, its integrability conditions,
//! Peterson's 0-solitons, fundamental forms and embedding by quadrature.

mod embed;
mod forms;
mod grid;

pub use embed::*;
pub use forms::*;
pub use grid::*;

use serde::{Deserialize, Serialize};

use crate::quadric::{
    build_lmap, chart_jacobian, chart_normal_h, chart_to_ambient, graph_jacobian, stereo_y, Kind,
    LMap, QuadricSpec,
};
use crate::sjcore::{bdot, bsq, bsqrt, max_abs, orth_defect, vmax_abs};
use crate::{c64, CMat, CVec, Error, Result, C64};

pub const TOL_PI: f64 = 1e-8;
pub const TOL_DEG: f64 = 1e-10;

/// Right-hand side data of the linear system for `(V, Λ)`.
#[derive(Debug, Clone, PartialEq)]
pub enum System {
    /// Paraboloid chart: `A′` (its `n × n` block), `b = I_{1,n}L^{−1}B`, `|B|²`.
    Graph { a: CMat, b: CVec, bsq: C64 },
    /// Stereographic sphere chart of a quadric with centre.
    Sphere { a: CMat },
}

impl System {
    pub fn n(&self) -> usize {
        match self {
            System::Graph { b, .. } => b.len(),
            System::Sphere { a } => a.nrows() - 1,
        }
    }

    /// `VᵀA′V + 2Vᵀb + |B|²`, or `YᵀAY` with `Y = 2V + (|V|² − 1)e_{n+1}`.
    pub fn potential(&self, v: &CVec) -> C64 {
        match self {
            System::Graph { a, b, bsq: c } => bdot(v, &(a * v)) + bdot(v, b) * 2.0 + c,
            System::Sphere { a } => {
                let y = stereo_y(v);
                bdot(&y, &(a * &y))
            }
        }
    }

    /// Half the gradient of [`System::potential`].
    pub fn force(&self, v: &CVec) -> CVec {
        match self {
            System::Graph { a, b, .. } => a * v + b,
            System::Sphere { a } => graph_jacobian(v).transpose() * (a * stereo_y(v)) * c64(2.0, 0.0),
        }
    }

    /// Source of the curvature term in the equations for `R`.
    pub fn curvature(&self, v: &CVec) -> CMat {
        match self {
            System::Graph { a, .. } => a.clone(),
            System::Sphere { a } => {
                let m = graph_jacobian(v);
                m.transpose() * a * m * c64(4.0, 0.0)
            }
        }
    }

    pub fn prime_integral(&self, v: &CVec, lam: &CVec) -> C64 {
        bsq(lam) + self.potential(v)
    }

    /// `Λ` proportional to `dir` on the constraint `|Λ|² = −potential(V)`.
    pub fn lambda_on_constraint(&self, v: &CVec, dir: &CVec) -> Result<CVec> {
        let s = bsq(dir);
        if s.norm() < 1e-14 {
            return Err(Error::InvalidInput("isotropic direction for Lambda".into()));
        }
        Ok(dir * bsqrt(-self.potential(v) / s))
    }
}

/// A quadric together with its chart and linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub q: QuadricSpec,
    pub lm: Option<LMap>,
    pub sys: System,
}

impl Model {
    pub fn new(q: QuadricSpec, seed: u64) -> Result<Self> {
        match q.kind {
            Kind::QC => Ok(Model { sys: System::Sphere { a: q.a.clone() }, q, lm: None }),
            _ => {
                let lm = build_lmap(&q, seed)?;
                let sys = System::Graph { a: lm.a_prime_n(), b: lm.b_prime(&q), bsq: bsq(&q.b) };
                Ok(Model { q, lm: Some(lm), sys })
            }
        }
    }

    pub fn n(&self) -> usize {
        self.q.n
    }

    pub fn is_graph(&self) -> bool {
        self.q.kind != Kind::QC
    }

    pub fn chart(&self, v: &CVec) -> Result<CVec> {
        chart_to_ambient(&self.q, self.lm.as_ref(), v)
    }

    pub fn jacobian(&self, v: &CVec) -> Result<CMat> {
        chart_jacobian(&self.q, self.lm.as_ref(), v)
    }

    pub fn normal_h(&self, v: &CVec) -> Result<(CVec, C64)> {
        chart_normal_h(&self.q, self.lm.as_ref(), v)
    }
}

/// `E_j`, the matrix unit `e_je_jᵀ`.
pub fn ej(j: usize, n: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    m[(j, j)] = c64(1.0, 0.0);
    m
}

/// `ω_j = Σ_k (E_kP_kE_j + E_jP_kE_k)` from `P_k = RᵀR_k`.
pub fn omega_from_p(p: &[CMat]) -> Vec<CMat> {
    let n = p.len();
    (0..n)
        .map(|j| {
            let mut w = CMat::zeros(n, n);
            for k in 0..n {
                if k != j {
                    w[(k, j)] = p[k][(k, j)];
                    w[(j, k)] = p[k][(j, k)];
                }
            }
            w
        })
        .collect()
}

/// `(∂_jV, ∂_jΛ)` of the linear system.
pub fn system_rhs(sys: &System, v: &CVec, lam: &CVec, r: &CMat, omega_j: &CMat, j: usize) -> (CVec, CVec) {
    let dv = r.column(j) * lam[j];
    let mut dl = omega_j * lam;
    let f = r.transpose() * sys.force(v);
    dl[j] -= f[j];
    (dv, dl)
}

/// Per-node state of a deformation on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub grid: GridSpec,
    pub model: Model,
    pub v: Vec<CVec>,
    pub lam: Vec<CVec>,
    pub r: Vec<CMat>,
}

impl FieldGrid {
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn degenerate(&self, idx: usize) -> bool {
        self.lam[idx].iter().any(|l| l.norm() < TOL_DEG)
    }

    pub fn prime_integral_drift(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.model.sys.prime_integral(&self.v[i], &self.lam[i]).norm())
            .fold(0.0, f64::max)
    }

    pub fn orth_drift(&self) -> f64 {
        self.r.iter().map(orth_defect).fold(0.0, f64::max)
    }

    /// `P_j = Rᵀ∂_jR` by central differences.
    pub fn p_at(&self, idx: usize, order: usize) -> Option<Vec<CMat>> {
        let rt = self.r[idx].transpose();
        (0..self.n())
            .map(|j| fd(&self.grid, &self.r, idx, j, order).map(|d| &rt * d))
            .collect()
    }
}

/// Packs `(V, Λ)` into one vector.
pub fn pack(v: &CVec, lam: &CVec) -> CVec {
    let n = v.len();
    CVec::from_fn(2 * n, |i, _| if i < n { v[i] } else { lam[i - n] })
}

pub fn unpack(y: &CVec, n: usize) -> (CVec, CVec) {
    (y.rows(0, n).into_owned(), y.rows(n, n).into_owned())
}

/// `max_{j≠k} |A′_{jk}|`; the n-block of `A′` must be diagonal for `R = I` to
/// solve the system.
pub fn peterson_admissible(model: &Model, tol: f64) -> Result<(bool, f64)> {
    match &model.sys {
        System::Graph { a, .. } => {
            let n = a.nrows();
            let mut r: f64 = 0.0;
            for j in 0..n {
                for k in 0..n {
                    if j != k {
                        r = r.max(a[(j, k)].norm());
                    }
                }
            }
            Ok((r < tol, r))
        }
        System::Sphere { .. } => Err(Error::InvalidInput("0-solitons live in the paraboloid chart".into())),
    }
}

/// Peterson's deformation `R ≡ I`: RK4 along the sweep, `substeps` per cell.
pub fn zero_soliton(model: &Model, grid: &GridSpec, v_base: &CVec, lam_base: &CVec, substeps: usize) -> Result<FieldGrid> {
    let n = model.n();
    if grid.n() != n || v_base.len() != n || lam_base.len() != n {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let (ok, off) = peterson_admissible(model, 1e-12)?;
    if !ok {
        return Err(Error::InvalidInput(format!("A' n-block is not diagonal (off-diagonal {off:e})")));
    }
    let pi = model.sys.prime_integral(v_base, lam_base).norm();
    if pi > 1e-10 {
        return Err(Error::PrimeIntegralViolation(pi));
    }
    let sys = &model.sys;
    let sub = substeps.max(1);
    let order: Vec<usize> = (0..n).collect();
    let states = sweep(grid, pack(v_base, lam_base), &order, |y, _, j, h| {
        let mut y = y.clone();
        for _ in 0..sub {
            y = rk4(&y, h / sub as f64, |s| {
                let (v, l) = unpack(s, n);
                let mut out = CVec::zeros(2 * n);
                out[j] = l[j];
                out[n + j] = -sys.force(&v)[j];
                Ok(out)
            })?;
        }
        Ok(y)
    })?;
    let mut v = Vec::with_capacity(states.len());
    let mut lam = Vec::with_capacity(states.len());
    for (i, s) in states.iter().enumerate() {
        let (a, b) = unpack(s, n);
        if b.iter().any(|x| x.norm() < TOL_DEG) {
            return Err(Error::StepFailure(format!("lambda collapses at node {i}")));
        }
        v.push(a);
        lam.push(b);
    }
    let r = vec![CMat::identity(n, n); grid.len()];
    Ok(FieldGrid { grid: grid.clone(), model: model.clone(), v, lam, r })
}

/// Residuals of the equations for `R`, node by node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DefResidual {
    pub per_node: Vec<Option<f64>>,
    /// The 2-form equation, `j ≠ k` entries.
    pub two_form: f64,
    /// `e_jᵀRᵀR_le_k`, `j, k, l` distinct.
    pub distinct: f64,
    pub orth: f64,
    pub max: f64,
    pub samples: usize,
}

/// The matrix whose `j ≠ k` entries are
/// `∂_j(P_j)_{jk} − ∂_k(P_k)_{jk} − (Σ_l P_lE_lP_l)_{jk} + (RᵀKR)_{jk}`.
pub fn def_two_form(fg: &FieldGrid, idx: usize, order: usize) -> Option<CMat> {
    let n = fg.n();
    let g = &fg.grid;
    let p_here = fg.p_at(idx, order)?;
    let mut dp = Vec::with_capacity(n);
    for j in 0..n {
        dp.push(fd_with(g, idx, j, order, |i| fg.p_at(i, order).map(|p| p[j].clone()))?);
    }
    let r = &fg.r[idx];
    let k = r.transpose() * fg.model.sys.curvature(&fg.v[idx]) * r;
    let mut s = CMat::zeros(n, n);
    for (l, p) in p_here.iter().enumerate() {
        s += p * ej(l, n) * p;
    }
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        for kk in 0..n {
            if j != kk {
                out[(j, kk)] = dp[j][(j, kk)] - dp[kk][(j, kk)] - s[(j, kk)] + k[(j, kk)];
            }
        }
    }
    Some(out)
}

/// Residual of the equations for `R` (paraboloid or sphere chart alike).
pub fn residual_def(fg: &FieldGrid, order: usize) -> DefResidual {
    let n = fg.n();
    let margin = 2 * reach(order);
    let mut out = DefResidual { per_node: vec![None; fg.grid.len()], ..Default::default() };
    for idx in 0..fg.grid.len() {
        let orth = orth_defect(&fg.r[idx]);
        out.orth = out.orth.max(orth);
        if !fg.grid.interior(idx, margin) || fg.degenerate(idx) {
            continue;
        }
        let Some(m) = def_two_form(fg, idx, order) else { continue };
        let two = max_abs(&m);
        let mut dist: f64 = 0.0;
        if n >= 3 {
            if let Some(p) = fg.p_at(idx, order) {
                for (l, pl) in p.iter().enumerate() {
                    for j in 0..n {
                        for k in 0..n {
                            if j != k && j != l && k != l {
                                dist = dist.max(pl[(j, k)].norm());
                            }
                        }
                    }
                }
            }
        }
        out.two_form = out.two_form.max(two);
        out.distinct = out.distinct.max(dist);
        out.per_node[idx] = Some(two.max(dist).max(orth));
        out.samples += 1;
    }
    out.max = out.two_form.max(out.distinct).max(out.orth);
    out
}

pub fn residual_defqwc(fg: &FieldGrid) -> DefResidual {
    residual_def(fg, 2)
}

pub fn residual_defqc(fg: &FieldGrid) -> DefResidual {
    residual_def(fg, 2)
}

/// How well `(V, Λ)` solve the linear system driven by `R` at one node.
pub fn system_residual_node(fg: &FieldGrid, idx: usize, order: usize) -> Option<f64> {
    if !fg.grid.interior(idx, reach(order)) || fg.degenerate(idx) {
        return None;
    }
    let p = fg.p_at(idx, order)?;
    let om = omega_from_p(&p);
    let mut worst: f64 = 0.0;
    for j in 0..fg.n() {
        let dv = fd(&fg.grid, &fg.v, idx, j, order)?;
        let dl = fd(&fg.grid, &fg.lam, idx, j, order)?;
        let (ev, el) = system_rhs(&fg.model.sys, &fg.v[idx], &fg.lam[idx], &fg.r[idx], &om[j], j);
        worst = worst.max(vmax_abs(&(dv - ev))).max(vmax_abs(&(dl - el)));
    }
    Some(worst)
}

/// Largest [`system_residual_node`] over the grid, with the sample count.
pub fn system_residual(fg: &FieldGrid, order: usize) -> (f64, usize) {
    (0..fg.grid.len())
        .filter_map(|i| system_residual_node(fg, i, order))
        .fold((0.0, 0), |(w, c), r| (w.max(r), c + 1))
}

/// Sine-Gordon residual `φ_{11} − φ_{22} + ½ sin 2φ` by central differences.
pub fn sine_gordon_residual(grid: &GridSpec, phi: &[f64], idx: usize) -> Option<f64> {
    let mut lap = [0.0; 2];
    for (a, l) in lap.iter_mut().enumerate() {
        let h = grid.h(a);
        let p = phi[grid.shift(idx, a, 1)?];
        let m = phi[grid.shift(idx, a, -1)?];
        *l = (p - 2.0 * phi[idx] + m) / (h * h);
    }
    Some(lap[0] - lap[1] + 0.5 * (2.0 * phi[idx]).sin())
}

/// Field grid with `R` the rotation by `φ` and the given `(V, Λ)` left at zero;
/// only the equations for `R` are meaningful on it.
pub fn rotation_field(model: &Model, grid: &GridSpec, phi: &[f64]) -> FieldGrid {
    let n = 2;
    let r: Vec<CMat> = phi
        .iter()
        .map(|&p| {
            let (s, c) = p.sin_cos();
            CMat::from_row_slice(2, 2, &[c64(c, 0.0), c64(-s, 0.0), c64(s, 0.0), c64(c, 0.0)])
        })
        .collect();
    let one = CVec::from_element(n, c64(1.0, 0.0));
    FieldGrid {
        grid: grid.clone(),
        model: model.clone(),
        v: vec![CVec::zeros(n); grid.len()],
        lam: vec![one; grid.len()],
        r,
    }
}
