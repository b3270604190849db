//! Permutability: algebraic superposition of Bäcklund leaves, its checks, the
//! three-parameter closure for `R₇` and lattices of `R`-fields.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backlund::{integrate_backlund, riccati_residual_node, BacklundContext};
use crate::deform::{ej, fd, FieldGrid, GridSpec};
use crate::sjcore::{cond, max_abs, orth_defect, random_orthogonal, solve};
use crate::{c64, CMat, Error, Result, C64};

/// Condition number above which a superposition matrix counts as singular.
pub const COND_MAX: f64 = 1e12;
/// RK4 substeps for the leaves of a lattice.
pub const LATTICE_SUBSTEPS: usize = 8;

/// `lhs · m⁻¹`. `m` is a difference of terms of size `scale`; it counts as
/// singular when ill conditioned or cancelled down to rounding.
fn solve_right(lhs: &CMat, m: &CMat, scale: f64, err: fn(f64) -> Error) -> Result<CMat> {
    let k = cond(m);
    if !k.is_finite() || k > COND_MAX || max_abs(m) < 1e-12 * scale {
        return Err(err(k));
    }
    let x = solve(&m.transpose(), &lhs.transpose()).ok_or(err(f64::INFINITY))?;
    Ok(x.transpose())
}

/// `R₃ = (D₂ − D₁R₂R₁ᵀ)(D₂R₂R₁ᵀ − D₁)⁻¹R₀`, where `R₁`, `R₂` are leaves of
/// `R₀` at the parameters carrying `D₁`, `D₂`.
pub fn bpt_compose(r0: &CMat, r1: &CMat, r2: &CMat, d1: &CMat, d2: &CMat) -> Result<CMat> {
    let s = r2 * r1.transpose();
    let num = d2 - d1 * &s;
    let d2s = d2 * &s;
    let den = &d2s - d1;
    let scale = max_abs(&d2s) + max_abs(d1);
    Ok(solve_right(&num, &den, scale, Error::SingularSuperposition)? * r0)
}

/// `(D₂ − SD₁)(D₂S − D₁) − (SD₂ − D₁)(D₂ − D₁S)` in max norm.
pub fn orthogonality_identity(s: &CMat, d1: &CMat, d2: &CMat) -> f64 {
    let l = (d2 - s * d1) * (d2 * s - d1);
    let r = (s * d2 - d1) * (d2 - d1 * s);
    max_abs(&(l - r))
}

/// `(D₂T + D₁)(D₂S − D₁) − (1/z₂ − 1/z₁)I` with `T = R₃R₀ᵀ`, `S = R₂R₁ᵀ`.
pub fn scalar_identity(t: &CMat, s: &CMat, c1: &BacklundContext, c2: &BacklundContext) -> f64 {
    let n = t.nrows();
    let l = (&c2.d * t + &c1.d) * (&c2.d * s - &c1.d);
    let k = c64(1.0, 0.0) / c2.z - c64(1.0, 0.0) / c1.z;
    max_abs(&(l - CMat::identity(n, n) * k))
}

/// Directional derivative of `T = R₃R₀ᵀ` predicted from `R₀`, `R₁`.
pub fn bpt_derivative(t: &CMat, r0: &CMat, r1: &CMat, c1: &BacklundContext, c2: &BacklundContext, j: usize) -> CMat {
    let e = ej(j, t.nrows());
    -(t * r0 * &e * r1.transpose() * (&c2.d * t + &c1.d)) + (&c2.d + t * &c1.d) * r1 * &e * r0.transpose()
}

/// Four `R`-fields on a common grid, `R₁ = B_{z₁}R₀`, `R₂ = B_{z₂}R₀`,
/// `R₃` their superposition.
#[derive(Debug, Clone)]
pub struct BianchiQuad {
    pub r: [Vec<CMat>; 4],
    pub ctx1: BacklundContext,
    pub ctx2: BacklundContext,
}

impl BianchiQuad {
    pub fn compose(r0: Vec<CMat>, r1: Vec<CMat>, r2: Vec<CMat>, ctx1: BacklundContext, ctx2: BacklundContext) -> Result<Self> {
        let r3 = (0..r0.len())
            .map(|i| bpt_compose(&r0[i], &r1[i], &r2[i], &ctx1.d, &ctx2.d))
            .collect::<Result<Vec<_>>>()?;
        Ok(BianchiQuad { r: [r0, r1, r2, r3], ctx1, ctx2 })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BptReport {
    pub derivative: f64,
    /// `R₃` against the Riccati equation seeded by `(R₁, z₂)`.
    pub riccati_1: f64,
    /// `R₃` against the Riccati equation seeded by `(R₂, z₁)`.
    pub riccati_2: f64,
    pub scalar: f64,
    pub orth: f64,
    pub samples: usize,
}

/// Residuals of a quad: the derivative identity and both Riccati equations by
/// central differences of the given order, the scalar identity and
/// orthogonality of `R₃R₀ᵀ` pointwise.
pub fn bpt_verify(quad: &BianchiQuad, grid: &GridSpec, order: usize) -> BptReport {
    let [r0, r1, r2, r3] = &quad.r;
    let (c1, c2) = (&quad.ctx1, &quad.ctx2);
    let t: Vec<CMat> = (0..r0.len()).map(|i| &r3[i] * r0[i].transpose()).collect();
    let mut rep = BptReport::default();
    for i in 0..grid.len() {
        let s = &r2[i] * r1[i].transpose();
        rep.scalar = rep.scalar.max(scalar_identity(&t[i], &s, c1, c2));
        rep.orth = rep.orth.max(orth_defect(&t[i]));
        let (Some(a), Some(b)) = (
            riccati_residual_node(r1, r3, grid, c2, i, order),
            riccati_residual_node(r2, r3, grid, c1, i, order),
        ) else {
            continue;
        };
        rep.riccati_1 = rep.riccati_1.max(a);
        rep.riccati_2 = rep.riccati_2.max(b);
        for j in 0..grid.n() {
            if let Some(dt) = fd(grid, &t, i, j, order) {
                let want = bpt_derivative(&t[i], &r0[i], &r1[i], c1, c2, j);
                rep.derivative = rep.derivative.max(max_abs(&(dt - want)));
            }
        }
        rep.samples += 1;
    }
    rep
}

#[derive(Debug, Clone)]
pub struct M3Result {
    pub r7: CMat,
    /// Every route to `R₇`, by name.
    pub routes: Vec<(&'static str, CMat)>,
    pub discrepancy: f64,
}

/// `R₇` from `R₀` and three leaves `R₁`, `R₂`, `R₄` at `z₁`, `z₂`, `z₃`.
///
/// Routes: the two closed forms in `D₁D₂D₃R₇`, their image under the index
/// rotation 1→2→3→1, the `Box` formula and a chain of superpositions.
pub fn m3_r7(r0: &CMat, r1: &CMat, r2: &CMat, r4: &CMat, c: [&BacklundContext; 3]) -> Result<M3Result> {
    let [c1, c2, c3] = c;
    for (a, b) in [(c1, c2), (c1, c3), (c2, c3)] {
        if (a.z - b.z).norm() < 1e-12 * a.z.norm().max(1.0) {
            return Err(Error::DistinctZRequired);
        }
    }
    let (d1, d2, d3) = (&c1.d, &c2.d, &c3.d);
    let (d1s, d2s, d3s) = (d1 * d1, d2 * d2, d3 * d3);
    let terms = [(&d2s - &d3s) * d1 * r1, (&d3s - &d1s) * d2 * r2, (&d1s - &d2s) * d3 * r4];
    let bscale: f64 = terms.iter().map(max_abs).sum();
    let bx = &terms[0] + &terms[1] + &terms[2];
    let k = cond(&bx);
    if !k.is_finite() || k > COND_MAX || max_abs(&bx) < 1e-12 * bscale {
        return Err(Error::SingularBox(k));
    }
    let r3 = bpt_compose(r0, r1, r2, d1, d2)?;
    let r5 = bpt_compose(r0, r1, r4, d1, d3)?;
    let r6 = bpt_compose(r0, r2, r4, d2, d3)?;
    let r0t = r0.transpose();
    let (q1, q2, q4) = (r1 * &r0t, r2 * &r0t, r4 * &r0t);
    let (t3, t5, t6) = (&r3 * &r0t, &r5 * &r0t, &r6 * &r0t);
    let kinv = solve(&(d1 * d2 * d3), &CMat::identity(r0.nrows(), r0.nrows())).ok_or(Error::SingularSuperposition(f64::INFINITY))?;
    let fin = |v: CMat| &kinv * v * r0;
    let sup = Error::SingularSuperposition;

    let inv_diff = |num: &CMat, a: CMat, b: CMat| {
        let scale = max_abs(&a) + max_abs(&b);
        solve_right(num, &(a - b), scale, sup)
    };
    let (d2t3, d3t5, d3t6, d1t3) = (d2 * &t3, d3 * &t5, d3 * &t6, d1 * &t3);
    let lhs = d1 * ((&d2s - &d3s) * inv_diff(&d2t3, d2t3.clone(), d3t5)? * &q1 - &d2s * &q1);
    let rhs = d2 * ((&d3s - &d1s) * inv_diff(&d1t3, d3t6.clone(), d1t3.clone())? * &q2 - &d1s * &q2);
    let rot = d2 * ((&d3s - &d1s) * inv_diff(&d3t6, d3t6.clone(), d1t3.clone())? * &q2 - &d3s * &q2);
    let boxq = &bx * &r0t;
    let boxv = solve_right(&(&d1s * d2 * &q2 - &d2s * d1 * &q1), &boxq, bscale, Error::SingularBox)? * (&d2s - &d3s) * (d3 * &q4 - d1 * &q1)
        - &d2s * d1 * &q1;
    let chain = bpt_compose(r1, &r3, &r5, d2, d3)?;

    let routes = vec![("lhs", fin(lhs)), ("rhs", fin(rhs)), ("rotated", fin(rot)), ("box", fin(boxv)), ("chain", chain)];
    let mut discrepancy: f64 = 0.0;
    for a in 0..routes.len() {
        for b in a + 1..routes.len() {
            discrepancy = discrepancy.max(max_abs(&(&routes[a].1 - &routes[b].1)));
        }
    }
    Ok(M3Result { r7: routes[0].1.clone(), routes, discrepancy })
}

/// A lattice of `R`-fields over `Z^k`. Axis `a` carries the spectral
/// parameters `axes[a]`; vertex `m` is reached by applying the first `m[a]`
/// parameters of every axis.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub axes: Vec<Vec<BacklundContext>>,
    /// `None` marks a hole (a singular superposition somewhere on the grid).
    pub fields: BTreeMap<Vec<usize>, Option<Vec<CMat>>>,
}

impl Lattice {
    pub fn holes(&self) -> Vec<Vec<usize>> {
        self.fields.iter().filter(|(_, f)| f.is_none()).map(|(k, _)| k.clone()).collect()
    }

    pub fn field(&self, m: &[usize]) -> Option<&Vec<CMat>> {
        self.fields.get(m)?.as_ref()
    }
}

/// Axis priority for [`lattice_fill`]: a vertex is composed from the sub-vertices
/// missing its last two parameters when parameters are listed axis by axis in
/// this order. Different orders take different superposition paths.
pub fn fill_order_rows_first(k: usize) -> Vec<usize> {
    (0..k).collect()
}

pub fn fill_order_columns_first(k: usize) -> Vec<usize> {
    (0..k).rev().collect()
}

/// Fills the lattice from one leaf field per parameter, purely algebraically.
pub fn lattice_fill(seed_r: &[CMat], axes: &[Vec<BacklundContext>], leaves: &[Vec<Vec<CMat>>], order: &[usize]) -> Result<Lattice> {
    let k = axes.len();
    if k == 0 || leaves.len() != k || order.len() != k {
        return Err(Error::InvalidInput("one leaf list per axis and a full axis order are required".into()));
    }
    // Flatten parameters in fill order; remember each one's (axis, position).
    let mut flat: Vec<(usize, usize)> = Vec::new();
    for &a in order {
        for p in 0..axes[a].len() {
            flat.push((a, p));
        }
    }
    let np = flat.len();
    if np > 16 {
        return Err(Error::InvalidInput("at most 16 parameters".into()));
    }
    let pos = |a: usize, p: usize| flat.iter().position(|&x| x == (a, p)).unwrap();
    let mut memo: Vec<Option<Option<Vec<CMat>>>> = vec![None; 1 << np];
    memo[0] = Some(Some(seed_r.to_vec()));
    for (b, &(a, p)) in flat.iter().enumerate() {
        memo[1 << b] = Some(Some(leaves[a][p].clone()));
    }
    for mask in 1usize..(1 << np) {
        if memo[mask].is_some() {
            continue;
        }
        let bits: Vec<usize> = (0..np).filter(|b| mask >> b & 1 == 1).collect();
        let (p, q) = (bits[bits.len() - 2], bits[bits.len() - 1]);
        let f0 = memo[mask & !(1 << p) & !(1 << q)].clone().unwrap();
        let f1 = memo[mask & !(1 << q)].clone().unwrap();
        let f2 = memo[mask & !(1 << p)].clone().unwrap();
        let (cp, cq) = (&axes[flat[p].0][flat[p].1], &axes[flat[q].0][flat[q].1]);
        let out = match (f0, f1, f2) {
            (Some(f0), Some(f1), Some(f2)) => {
                let r: Result<Vec<CMat>> = (0..f0.len()).map(|i| bpt_compose(&f0[i], &f1[i], &f2[i], &cp.d, &cq.d)).collect();
                match r {
                    Ok(v) => Some(v),
                    Err(Error::SingularSuperposition(_)) => None,
                    Err(e) => return Err(e),
                }
            }
            _ => None,
        };
        memo[mask] = Some(out);
    }
    let mut fields = BTreeMap::new();
    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    for m in multi_indices(&shape) {
        let mut mask = 0usize;
        for a in 0..k {
            for p in 0..m[a] {
                mask |= 1 << pos(a, p);
            }
        }
        fields.insert(m, memo[mask].clone().unwrap());
    }
    Ok(Lattice { axes: axes.to_vec(), fields })
}

fn multi_indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &s in shape {
        out = out
            .into_iter()
            .flat_map(|m| {
                (0..=s).map(move |i| {
                    let mut m = m.clone();
                    m.push(i);
                    m
                })
            })
            .collect();
    }
    out
}

/// Integrates one leaf per parameter off the seed (with
/// [`LATTICE_SUBSTEPS`]), `R₁` bases drawn from `seed`, then fills the lattice.
pub fn lattice_build(fg: &FieldGrid, zs: &[Vec<C64>], seed: u64, order: &[usize]) -> Result<Lattice> {
    let n = fg.n();
    let mut axes = Vec::new();
    let mut leaves = Vec::new();
    let mut s = seed;
    for zl in zs {
        let mut ca = Vec::new();
        let mut la = Vec::new();
        for &z in zl {
            let ctx = BacklundContext::new(&fg.model, z)?;
            let run = integrate_backlund(fg, &ctx, &random_orthogonal(n, s, 0.5), LATTICE_SUBSTEPS)?;
            s += 1;
            la.push(run.r1);
            ca.push(ctx);
        }
        axes.push(ca);
        leaves.push(la);
    }
    lattice_fill(&fg.r, &axes, &leaves, order)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatticeReport {
    /// Worst residuals over all elementary squares.
    pub squares: BptReport,
    pub square_count: usize,
    /// Worst route discrepancy over all cubes and nodes, and the distance of
    /// the closed-form `R₇` from the filled vertex.
    pub cube_routes: f64,
    pub cube_closure: f64,
    pub cube_count: usize,
    pub holes: usize,
}

fn plus(m: &[usize], a: usize) -> Vec<usize> {
    let mut m = m.to_vec();
    m[a] += 1;
    m
}

/// Verifies every elementary square with [`bpt_verify`] and every elementary
/// cube with [`m3_r7`] (sampled every `cube_stride` nodes).
pub fn lattice_verify(lat: &Lattice, grid: &GridSpec, order: usize, cube_stride: usize) -> Result<LatticeReport> {
    let k = lat.axes.len();
    let mut rep = LatticeReport { holes: lat.holes().len(), ..Default::default() };
    for m in lat.fields.keys() {
        for a in 0..k {
            for b in a + 1..k {
                let (ma, mb) = (plus(m, a), plus(m, b));
                let mab = plus(&ma, b);
                let (Some(f0), Some(f1), Some(f2), Some(f3)) = (lat.field(m), lat.field(&ma), lat.field(&mb), lat.field(&mab)) else {
                    continue;
                };
                let quad = BianchiQuad {
                    r: [f0.clone(), f1.clone(), f2.clone(), f3.clone()],
                    ctx1: lat.axes[a][m[a]].clone(),
                    ctx2: lat.axes[b][m[b]].clone(),
                };
                let r = bpt_verify(&quad, grid, order);
                let s = &mut rep.squares;
                s.derivative = s.derivative.max(r.derivative);
                s.riccati_1 = s.riccati_1.max(r.riccati_1);
                s.riccati_2 = s.riccati_2.max(r.riccati_2);
                s.scalar = s.scalar.max(r.scalar);
                s.orth = s.orth.max(r.orth);
                s.samples += r.samples;
                rep.square_count += 1;
                for c in b + 1..k {
                    let mc = plus(m, c);
                    let top = plus(&mab, c);
                    let (Some(f4), Some(f7)) = (lat.field(&mc), lat.field(&top)) else { continue };
                    let ctx = [&lat.axes[a][m[a]], &lat.axes[b][m[b]], &lat.axes[c][m[c]]];
                    for i in (0..grid.len()).step_by(cube_stride.max(1)) {
                        let res = m3_r7(&f0[i], &f1[i], &f2[i], &f4[i], ctx)?;
                        rep.cube_routes = rep.cube_routes.max(res.discrepancy);
                        rep.cube_closure = rep.cube_closure.max(max_abs(&(&res.r7 - &f7[i])));
                    }
                    rep.cube_count += 1;
                }
            }
        }
    }
    Ok(rep)
}

/// Largest pointwise difference between two lattices over common non-hole
/// vertices.
pub fn lattice_difference(a: &Lattice, b: &Lattice) -> f64 {
    let mut worst: f64 = 0.0;
    for (m, fa) in &a.fields {
        if let (Some(fa), Some(Some(fb))) = (fa, b.fields.get(m)) {
            for (x, y) in fa.iter().zip(fb) {
                worst = worst.max(max_abs(&(x - y)));
            }
        }
    }
    worst
}
