use serde::{Deserialize, Serialize};

use super::{fd_opt, reach, FieldGrid, Model, System, TOL_DEG};
use crate::quadric::{stereo_jacobian, stereo_y};
use crate::sjcore::{bdot, bsq, bsqrt, orth_complete};
use crate::{c64, CMat, CVec, Error, Result, C64};

/// Pointwise first and second fundamental forms of a deformation.
#[derive(Debug, Clone, PartialEq)]
pub struct PointForms {
    /// Tangent vectors `x_{u^j}` of the quadric as columns.
    pub xt: CMat,
    pub g: CMat,
    pub n0: CVec,
    pub h: C64,
    pub a: CVec,
    /// Second fundamental form of the quadric, `h⁰_j`.
    pub h0: CVec,
    /// Orthogonal matrix with first row `r_j = i h⁰_j/a_j`.
    pub s0: CMat,
    /// `h^α_j = a_j (S₀)_{α,j}`, `(n − 1) × n`.
    pub hal: CMat,
}

impl PointForms {
    /// Column `j` of [`PointForms::hal`].
    pub fn hvec(&self, j: usize) -> CVec {
        self.hal.column(j).into_owned()
    }
}

/// Forms at a state `(V, Λ, R)`. `seed` fixes the completion of `S₀`; the
/// same seed at every node makes `S₀` a smooth field.
pub fn point_forms(model: &Model, v: &CVec, lam: &CVec, r: &CMat, seed: u64) -> Result<PointForms> {
    let n = v.len();
    if let Some(j) = lam.iter().position(|l| l.norm() < TOL_DEG) {
        return Err(Error::DegenerateLambda(j));
    }
    let jac = model.jacobian(v)?;
    let xt = jac * r * CMat::from_diagonal(lam);
    let g = xt.transpose() * &xt;
    let (n0, h) = model.normal_h(v)?;
    let sh = bsqrt(h);
    let (a, h0) = if model.is_graph() {
        (lam.clone(), lam.map(|l| -l * l / sh))
    } else {
        let s = bsq(v) + 1.0;
        (lam.map(|l| l * 4.0 / s), lam.map(|l| -l * l * 4.0 / (sh * s * s)))
    };
    let row = CVec::from_fn(n, |j, _| c64(0.0, 1.0) * h0[j] / a[j]);
    let row = &row / bsqrt(bdot(&row, &row));
    let s0 = orth_complete(&[row], n, seed)?;
    let hal = CMat::from_fn(n - 1, n, |al, j| a[j] * s0[(al + 1, j)]);
    Ok(PointForms { xt, g, n0, h, a, h0, s0, hal })
}

/// Coefficients of `𝒱₀ = Σ_k ∂_{v^k} log√H · x_{0v^k}`.
pub fn distinguished_coefficients(model: &Model, v: &CVec) -> Result<CVec> {
    let (_, h) = model.normal_h(v)?;
    match &model.sys {
        System::Graph { .. } => Ok(model.sys.force(v) / h),
        System::Sphere { a } => {
            let x = stereo_y(v) / (bsq(v) + 1.0);
            Ok(stereo_jacobian(v)?.transpose() * (a * x) / h)
        }
    }
}

/// `Γ^m_{jk}` as `out[m][(j, k)]` from `g` and `dg[i] = ∂_i g`.
pub fn christoffel(g: &CMat, dg: &[CMat]) -> Option<Vec<CMat>> {
    let n = g.nrows();
    let gi = g.clone().try_inverse()?;
    let mut low = vec![CMat::zeros(n, n); n];
    for (i, l) in low.iter_mut().enumerate() {
        for j in 0..n {
            for k in 0..n {
                l[(j, k)] = (dg[j][(i, k)] + dg[k][(i, j)] - dg[i][(j, k)]) * 0.5;
            }
        }
    }
    Some(
        (0..n)
            .map(|m| {
                let mut out = CMat::zeros(n, n);
                for (i, l) in low.iter().enumerate() {
                    out += l * gi[(m, i)];
                }
                out
            })
            .collect(),
    )
}

/// `Ω_k` antisymmetric, least-squares solution of `Ω_k h_j = t_j` over `j`.
pub fn solve_normal_connection(hs: &[CVec], ts: &[CVec]) -> (CMat, f64) {
    let d = hs.first().map_or(0, |h| h.len());
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (a + 1..d).map(move |b| (a, b))).collect();
    let build = |x: &[C64]| {
        let mut om = CMat::zeros(d, d);
        for (&(a, b), &v) in pairs.iter().zip(x) {
            om[(a, b)] = v;
            om[(b, a)] = -v;
        }
        om
    };
    let x: Vec<C64> = if pairs.is_empty() {
        Vec::new()
    } else {
        let rows = hs.len() * d;
        let mut m = CMat::zeros(rows, pairs.len());
        let mut rhs = CVec::zeros(rows);
        for (q, (h, t)) in hs.iter().zip(ts).enumerate() {
            for (c, &(a, b)) in pairs.iter().enumerate() {
                m[(q * d + a, c)] += h[b];
                m[(q * d + b, c)] -= h[a];
            }
            rhs.rows_mut(q * d, d).copy_from(t);
        }
        let svd = m.svd(true, true);
        svd.solve(&rhs, 1e-14).map(|s| s.iter().cloned().collect()).unwrap_or_else(|_| vec![C64::from(0.0); pairs.len()])
    };
    let om = build(&x);
    let res = hs
        .iter()
        .zip(ts)
        .map(|(h, t)| (&om * h - t).iter().fold(0.0f64, |a, v| a.max(v.norm())))
        .fold(0.0, f64::max);
    (om, res)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FormsResiduals {
    /// `R_{jkjk} − h⁰_jh⁰_k`.
    pub gauss: f64,
    /// `R_{jkjk} − Σ_α h^α_jh^α_k`.
    pub gauss_deformed: f64,
    /// Codazzi equations of the quadric's own `h⁰`.
    pub codazzi: f64,
    /// Codazzi–Mainardi–Peterson equations with the solved normal connection.
    pub cmp: f64,
    pub ricci: f64,
    /// `Γ^l_{jk}` for distinct indices.
    pub gamma_distinct: f64,
    /// Closed-form Christoffel symbols of the paraboloid chart.
    pub gamma_closed_form: f64,
    /// `h_j·h_k = δ_{jk}a_j²` for the joined vectors.
    pub joined_orth: f64,
    /// `Σ_j (h⁰_j)²/a_j² + 1`.
    pub syst0: f64,
    pub samples: usize,
    pub masked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeForms {
    pub pf: PointForms,
    pub gamma: Option<Vec<CMat>>,
    pub omega: Option<Vec<CMat>>,
    pub vcoef: CVec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalForms {
    pub nodes: Vec<Option<NodeForms>>,
    pub residuals: FormsResiduals,
}

/// Difference order used for the forms.
pub const FORMS_ORDER: usize = 6;

/// Assembles the forms over the grid with sixth-order differences and
/// evaluates the Gauss, Codazzi–Mainardi–Peterson and Ricci equations.
pub fn forms_assemble(fg: &FieldGrid, seed: u64) -> Result<FundamentalForms> {
    let grid = &fg.grid;
    let n = fg.n();
    let len = grid.len();
    let mut res = FormsResiduals::default();
    let m1 = reach(FORMS_ORDER);
    let mut pfs: Vec<Option<PointForms>> = Vec::with_capacity(len);
    for i in 0..len {
        match point_forms(&fg.model, &fg.v[i], &fg.lam[i], &fg.r[i], seed) {
            Ok(p) => pfs.push(Some(p)),
            Err(Error::DegenerateLambda(_)) => {
                res.masked += 1;
                pfs.push(None)
            }
            Err(e) => return Err(e),
        }
    }
    if pfs.iter().all(Option::is_none) {
        return Err(Error::DegenerateLambda(grid.base_index()));
    }
    let g: Vec<Option<CMat>> = pfs.iter().map(|p| p.as_ref().map(|p| p.g.clone())).collect();
    let h0: Vec<Option<CVec>> = pfs.iter().map(|p| p.as_ref().map(|p| p.h0.clone())).collect();
    let hal: Vec<Option<CMat>> = pfs.iter().map(|p| p.as_ref().map(|p| p.hal.clone())).collect();

    let gamma: Vec<Option<Vec<CMat>>> = (0..len)
        .map(|i| {
            let gi = g[i].as_ref()?;
            let dg: Option<Vec<CMat>> = (0..n).map(|a| fd_opt(grid, &g, i, a, FORMS_ORDER)).collect();
            christoffel(gi, &dg?)
        })
        .collect();

    let mut omega: Vec<Option<Vec<CMat>>> = vec![None; len];
    for i in 0..len {
        let (Some(p), Some(gm)) = (&pfs[i], &gamma[i]) else { continue };
        if !grid.interior(i, m1) {
            continue;
        }
        let mut dh0 = Vec::with_capacity(n);
        let mut dhal = Vec::with_capacity(n);
        for k in 0..n {
            dh0.push(fd_opt(grid, &h0, i, k, FORMS_ORDER));
            dhal.push(fd_opt(grid, &hal, i, k, FORMS_ORDER));
        }
        if dh0.iter().any(Option::is_none) || dhal.iter().any(Option::is_none) {
            continue;
        }
        let mut oms = Vec::with_capacity(n);
        let mut cmp: f64 = 0.0;
        for k in 0..n {
            let dh0k = dh0[k].as_ref().unwrap();
            let dhk = dhal[k].as_ref().unwrap();
            let mut hs = Vec::new();
            let mut ts = Vec::new();
            for j in 0..n {
                if j == k {
                    continue;
                }
                let cod = dh0k[j] - gm[j][(j, k)] * p.h0[j] + gm[k][(j, j)] * p.h0[k];
                res.codazzi = res.codazzi.max(cod.norm());
                let t = p.hvec(j) * gm[j][(j, k)] - p.hvec(k) * gm[k][(j, j)] - dhk.column(j);
                hs.push(p.hvec(j));
                ts.push(t);
            }
            let (om, r) = solve_normal_connection(&hs, &ts);
            cmp = cmp.max(r);
            oms.push(om);
        }
        res.cmp = res.cmp.max(cmp);
        omega[i] = Some(oms);
    }

    let lam_field: Vec<Option<CVec>> = (0..len).map(|i| Some(fg.lam[i].clone())).collect();
    let hfield: Vec<Option<C64>> = (0..len)
        .map(|i| pfs[i].as_ref().map(|p| p.h))
        .collect();

    for i in 0..len {
        let Some(p) = &pfs[i] else { continue };
        let mut jo: f64 = 0.0;
        let mut s0sum = c64(1.0, 0.0);
        for j in 0..n {
            s0sum += p.h0[j] * p.h0[j] / (p.a[j] * p.a[j]);
            for k in 0..n {
                let hj = p.h0[j] * c64(0.0, 1.0);
                let hk = p.h0[k] * c64(0.0, 1.0);
                let dot = hj * hk + bdot(&p.hvec(j), &p.hvec(k));
                let want = if j == k { p.a[j] * p.a[j] } else { c64(0.0, 0.0) };
                jo = jo.max((dot - want).norm());
            }
        }
        res.joined_orth = res.joined_orth.max(jo);
        res.syst0 = res.syst0.max(s0sum.norm());

        let Some(gm) = &gamma[i] else { continue };
        if n >= 3 {
            for l in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        if j != k && k != l && j != l {
                            res.gamma_distinct = res.gamma_distinct.max(gm[l][(j, k)].norm());
                        }
                    }
                }
            }
        }
        if fg.model.is_graph() {
            let dl: Option<Vec<CVec>> = (0..n).map(|a| fd_opt(grid, &lam_field, i, a, FORMS_ORDER)).collect();
            let dh: Option<Vec<C64>> = (0..n).map(|a| fd_opt(grid, &hfield, i, a, FORMS_ORDER)).collect();
            if let (Some(dl), Some(dh)) = (dl, dh) {
                let lam = &fg.lam[i];
                let h = p.h;
                for j in 0..n {
                    let jj = dl[j][j] / lam[j] + dh[j] / (h * 2.0);
                    let mut r = (gm[j][(j, j)] - jj).norm();
                    for k in 0..n {
                        if k == j {
                            continue;
                        }
                        let jk = dl[k][j] / lam[j];
                        let kj = lam[j] * lam[j] / (lam[k] * lam[k]) * (dh[k] / (h * 2.0) - dl[k][j] / lam[j]);
                        r = r.max((gm[j][(j, k)] - jk).norm()).max((gm[k][(j, j)] - kj).norm());
                    }
                    res.gamma_closed_form = res.gamma_closed_form.max(r);
                }
            }
        }

        if !grid.interior(i, 2 * m1) {
            continue;
        }
        let dgam: Option<Vec<Vec<CMat>>> = (0..n).map(|a| fd_opt(grid, &gamma, i, a, FORMS_ORDER)).collect();
        let Some(dgam) = dgam else { continue };
        res.samples += 1;
        for j in 0..n {
            for k in 0..n {
                if j == k {
                    continue;
                }
                let mut rjk = c64(0.0, 0.0);
                for m in 0..n {
                    let mut t = dgam[j][m][(k, k)] - dgam[k][m][(j, k)];
                    for q in 0..n {
                        t += gm[q][(k, k)] * gm[m][(j, q)] - gm[q][(j, k)] * gm[m][(k, q)];
                    }
                    rjk += p.g[(j, m)] * t;
                }
                res.gauss = res.gauss.max((rjk - p.h0[j] * p.h0[k]).norm());
                let hh = bdot(&p.hvec(j), &p.hvec(k));
                res.gauss_deformed = res.gauss_deformed.max((rjk - hh).norm());
            }
        }
        if n >= 3 && omega[i].is_some() {
            let dom: Option<Vec<Vec<CMat>>> = (0..n).map(|a| fd_opt(grid, &omega, i, a, FORMS_ORDER)).collect();
            if let Some(dom) = dom {
                let om = omega[i].as_ref().unwrap();
                let gi = p.g.clone().try_inverse().ok_or(Error::DegenerateLambda(i))?;
                for j in 0..n {
                    for k in j + 1..n {
                        let lhs = &dom[j][k] - &dom[k][j] + &om[j] * &om[k] - &om[k] * &om[j];
                        let hj = p.hvec(j);
                        let hk = p.hvec(k);
                        let rhs = (&hj * hk.transpose() - &hk * hj.transpose()) * gi[(j, k)];
                        let r = (lhs - rhs).iter().fold(0.0f64, |a, v| a.max(v.norm()));
                        res.ricci = res.ricci.max(r);
                    }
                }
            }
        }
    }

    let nodes = (0..len)
        .map(|i| {
            let pf = pfs[i].clone()?;
            let vcoef = distinguished_coefficients(&fg.model, &fg.v[i]).ok()?;
            Some(NodeForms { pf, gamma: gamma[i].clone(), omega: omega[i].clone(), vcoef })
        })
        .collect();
    Ok(FundamentalForms { nodes, residuals: res })
}
