use super::{ddt, point_forms, rk4, solve_normal_connection, sweep, christoffel, unpack, pack, FieldGrid, GridSpec, Model};
use crate::sjcore::{e, max_abs, orth_defect};
use crate::{c64, CMat, CVec, Error, Result};

pub const TOL_CLOSURE: f64 = 1e-5;

/// Positions with tangent vectors and an orthonormal normal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientFrame {
    pub x: Vec<CVec>,
    /// `x_{u^j}` as columns, `m × n`.
    pub xt: Vec<CMat>,
    /// Normals as columns, `m × (m − n)`.
    pub normals: Vec<CMat>,
    /// Largest path mismatch of the position quadrature.
    pub closure: f64,
}

impl AmbientFrame {
    /// `max |x_jᵀN_α|` and `max |[x_j N]ᵀ[x_j N] − diag(g, I)|` against `g`.
    pub fn frame_defects(&self, g: &[Option<CMat>]) -> (f64, f64) {
        let mut tn: f64 = 0.0;
        let mut gram: f64 = 0.0;
        for i in 0..self.x.len() {
            tn = tn.max(max_abs(&(self.xt[i].transpose() * &self.normals[i])));
            gram = gram.max(orth_defect(&self.normals[i]));
            if let Some(g) = &g[i] {
                gram = gram.max(max_abs(&(self.xt[i].transpose() * &self.xt[i] - g)));
            }
        }
        (tn, gram)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub positions: Vec<CVec>,
    pub mismatch: f64,
}

/// Integral over `[f_i, f_{i+1}]` of the cubic through four neighbours.
fn segment(f: &[CVec], i: usize, h: f64) -> CVec {
    let n = f.len();
    let w = |c: [f64; 4], s: usize| -> CVec {
        (&f[s] * c64(c[0], 0.0) + &f[s + 1] * c64(c[1], 0.0) + &f[s + 2] * c64(c[2], 0.0) + &f[s + 3] * c64(c[3], 0.0)) * c64(h / 24.0, 0.0)
    };
    if n < 4 {
        return (&f[i] + &f[i + 1]) * c64(h / 2.0, 0.0);
    }
    if i == 0 {
        w([9.0, 19.0, -5.0, 1.0], 0)
    } else if i == n - 2 {
        w([1.0, -5.0, 19.0, 9.0], n - 4)
    } else {
        w([-1.0, 13.0, 13.0, -1.0], i - 1)
    }
}

fn integrate(grid: &GridSpec, form: &[CMat], base: &CVec, order: &[usize]) -> Vec<CVec> {
    let mut out: Vec<Option<CVec>> = vec![None; grid.len()];
    let b = grid.base_index();
    out[b] = Some(base.clone());
    let mut filled = vec![b];
    for &a in order {
        let h = grid.h(a);
        let mut next = Vec::new();
        for &s in &filled {
            let mut line = vec![s];
            let mut cur = s;
            while let Some(p) = grid.shift(cur, a, -1) {
                line.insert(0, p);
                cur = p;
            }
            let pos = line.len() - 1;
            cur = s;
            while let Some(p) = grid.shift(cur, a, 1) {
                line.push(p);
                cur = p;
            }
            let f: Vec<CVec> = line.iter().map(|&i| form[i].column(a).into_owned()).collect();
            let mut cum = vec![CVec::zeros(base.len()); line.len()];
            for i in 0..line.len() - 1 {
                cum[i + 1] = &cum[i] + segment(&f, i, h);
            }
            let x0 = out[s].clone().unwrap();
            for (k, &node) in line.iter().enumerate() {
                if k != pos {
                    out[node] = Some(&x0 + &cum[k] - &cum[pos]);
                    next.push(node);
                }
            }
        }
        filled.extend(next);
    }
    out.into_iter().map(Option::unwrap).collect()
}

/// Integrates the 1-form whose value on `∂_{u^a}` is column `a` of `form`,
/// along both axis orders; the mismatch measures closure.
pub fn quadrature_1form(grid: &GridSpec, form: &[CMat], base: &CVec, tol: f64) -> Result<Quadrature> {
    let n = grid.n();
    let fwd: Vec<usize> = (0..n).collect();
    let rev: Vec<usize> = (0..n).rev().collect();
    let a = integrate(grid, form, base, &fwd);
    let b = integrate(grid, form, base, &rev);
    let mismatch = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).iter().fold(0.0f64, |m, v| m.max(v.norm())))
        .fold(0.0, f64::max);
    if mismatch > tol {
        return Err(Error::ClosureViolation(mismatch));
    }
    Ok(Quadrature { positions: a, mismatch })
}

fn pad(v: &CVec, m: usize) -> CVec {
    let mut out = CVec::zeros(m);
    out.rows_mut(0, v.len()).copy_from(v);
    out
}

/// Gauss–Weingarten equations of a 0-soliton deformation in `C^{2n−1}`,
/// with `(V, Λ)` carried along.
struct FrameOde<'a> {
    model: &'a Model,
    seed: u64,
    n: usize,
    m: usize,
    eps: f64,
}

impl FrameOde<'_> {
    fn tangent(&self, v: &CVec, lam: &CVec, dir: usize) -> (CVec, CVec) {
        let mut dv = CVec::zeros(self.n);
        let mut dl = CVec::zeros(self.n);
        dv[dir] = lam[dir];
        dl[dir] = -self.model.sys.force(v)[dir];
        (dv, dl)
    }

    fn rhs(&self, y: &CVec, i: usize) -> Result<CVec> {
        let (n, m) = (self.n, self.m);
        let (v, lam) = unpack(&y.rows(0, 2 * n).into_owned(), n);
        let ident = CMat::identity(n, n);
        let xt = CMat::from_column_slice(m, n, y.rows(2 * n, m * n).as_slice());
        let nn = CMat::from_column_slice(m, n - 1, y.rows(2 * n + m * n, m * (n - 1)).as_slice());
        let pf = point_forms(self.model, &v, &lam, &ident, self.seed)?;
        let mut dg = Vec::with_capacity(n);
        for d in 0..n {
            let (dv, dl) = self.tangent(&v, &lam, d);
            dg.push(ddt(self.eps, |t| {
                Ok(point_forms(self.model, &(&v + &dv * c64(t, 0.0)), &(&lam + &dl * c64(t, 0.0)), &ident, self.seed)?.g)
            })?);
        }
        let gam = christoffel(&pf.g, &dg).ok_or(Error::StepFailure("singular metric".into()))?;
        let (dv, dl) = self.tangent(&v, &lam, i);
        let dhal = ddt(self.eps, |t| {
            Ok(point_forms(self.model, &(&v + &dv * c64(t, 0.0)), &(&lam + &dl * c64(t, 0.0)), &ident, self.seed)?.hal)
        })?;
        let mut hs = Vec::new();
        let mut ts = Vec::new();
        for j in 0..n {
            if j != i {
                hs.push(pf.hvec(j));
                ts.push(pf.hvec(j) * gam[j][(j, i)] - pf.hvec(i) * gam[i][(j, j)] - dhal.column(j));
            }
        }
        let (om, _) = solve_normal_connection(&hs, &ts);
        let mut dxt = CMat::zeros(m, n);
        for k in 0..n {
            let mut col = CVec::zeros(m);
            for q in 0..n {
                col += xt.column(q) * gam[q][(i, k)];
            }
            if k == i {
                col += &nn * pf.hal.column(i);
            }
            dxt.set_column(k, &col);
        }
        let gi = pf.g.clone().try_inverse().ok_or(Error::StepFailure("singular metric".into()))?;
        let up: CVec = &xt * gi.row(i).transpose();
        let mut dn = CMat::zeros(m, n - 1);
        for al in 0..n - 1 {
            let mut col = &up * (-pf.hal[(al, i)]);
            for be in 0..n - 1 {
                col += nn.column(be) * om[(be, al)];
            }
            dn.set_column(al, &col);
        }
        let mut out = CVec::zeros(y.len());
        out.rows_mut(0, 2 * n).copy_from(&pack(&dv, &dl));
        out.rows_mut(2 * n, m * n).copy_from(&CVec::from_column_slice(dxt.as_slice()));
        out.rows_mut(2 * n + m * n, m * (n - 1)).copy_from(&CVec::from_column_slice(dn.as_slice()));
        Ok(out)
    }
}

/// Embeds the deformation carried by a 0-soliton field in `C^{2n−1}`: the frame
/// is integrated along the sweep, positions follow by quadrature.
pub fn embed_zero_soliton(fg: &FieldGrid, seed: u64, substeps: usize) -> Result<AmbientFrame> {
    let n = fg.n();
    let m = 2 * n - 1;
    let model = &fg.model;
    if !model.is_graph() {
        return Err(Error::InvalidInput("seed embedding needs a paraboloid-chart 0-soliton".into()));
    }
    let id = CMat::identity(n, n);
    if fg.r.iter().any(|r| max_abs(&(r - &id)) > 1e-14) {
        return Err(Error::InvalidInput("seed embedding needs R = I".into()));
    }
    let b = fg.grid.base_index();
    let (vb, lb) = (&fg.v[b], &fg.lam[b]);
    let xt0 = model.jacobian(vb)? * CMat::from_diagonal(lb);
    let (n0, _) = model.normal_h(vb)?;
    let mut xt = CMat::zeros(m, n);
    xt.view_mut((0, 0), (n + 1, n)).copy_from(&xt0);
    let mut nn = CMat::zeros(m, n - 1);
    nn.set_column(0, &pad(&n0, m));
    for al in 1..n - 1 {
        nn.set_column(al, &e(n + al, m));
    }
    let mut y0 = CVec::zeros(2 * n + m * (2 * n - 1));
    y0.rows_mut(0, 2 * n).copy_from(&pack(vb, lb));
    y0.rows_mut(2 * n, m * n).copy_from(&CVec::from_column_slice(xt.as_slice()));
    y0.rows_mut(2 * n + m * n, m * (n - 1)).copy_from(&CVec::from_column_slice(nn.as_slice()));
    let ode = FrameOde { model, seed, n, m, eps: 1e-3 };
    let sub = substeps.max(1);
    let order: Vec<usize> = (0..n).collect();
    let states = sweep(&fg.grid, y0, &order, |y, _, i, h| {
        let mut y = y.clone();
        for _ in 0..sub {
            y = rk4(&y, h / sub as f64, |s| ode.rhs(s, i))?;
        }
        Ok(y)
    })?;
    let xts: Vec<CMat> = states.iter().map(|y| CMat::from_column_slice(m, n, y.rows(2 * n, m * n).as_slice())).collect();
    let normals: Vec<CMat> = states
        .iter()
        .map(|y| CMat::from_column_slice(m, n - 1, y.rows(2 * n + m * n, m * (n - 1)).as_slice()))
        .collect();
    let base = pad(&model.chart(vb)?, m);
    let quad = quadrature_1form(&fg.grid, &xts, &base, TOL_CLOSURE)?;
    Ok(AmbientFrame { x: quad.positions, xt: xts, normals, closure: quad.mismatch })
}

/// Inputs of the joined-forms identity at one node.
pub struct JoinedInput<'a> {
    /// `∂_j x₀¹`, `(n + 1) × n`.
    pub dx01: &'a CMat,
    /// `∂_j x_z¹`.
    pub dxz1: &'a CMat,
    /// `∂_j N₀⁰`.
    pub dn00: &'a CMat,
    /// `x_z¹ − x₀⁰`.
    pub d0: &'a CVec,
    /// `∂_j N_α` of the seed's normals, one matrix per `α`.
    pub dnal: &'a [CMat],
    /// `x¹ − x⁰`.
    pub d1: &'a CVec,
}

/// `|dx₀¹|² − |dx_z¹|² − |[−i(dN₀⁰)ᵀ(x_z¹ − x₀⁰); −(dN⁰)ᵀ(x¹ − x⁰)]|²` as a
/// symmetric tensor; returns its largest entry.
pub fn joined_forms_residual(inp: &JoinedInput) -> f64 {
    let lhs = inp.dx01.transpose() * inp.dx01 - inp.dxz1.transpose() * inp.dxz1;
    let u = inp.dn00.transpose() * inp.d0;
    let mut rhs = -(&u * u.transpose());
    for dn in inp.dnal {
        let w = dn.transpose() * inp.d1;
        rhs += &w * w.transpose();
    }
    max_abs(&(lhs - rhs))
}
