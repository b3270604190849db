//! Quadrics, their confocal families and the Ivory affinity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sjcore::{
    bdot, binom, bsq, bsqrt, build_sj, conj, e, f, inverse, max_abs, orth_complete, rand_cvec,
    solve, solve_vec, sqrt_resolvent, sqrt_sj, sqrtm, vmax_abs, SJBlock, SJSpec,
};
use crate::{c64, CMat, CVec, Error, Result, C64};

pub const TOL_ON: f64 = 1e-8;
pub const TOL_ISO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Kind {
    QC,
    QWC,
    IQWC,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadricSpec {
    pub kind: Kind,
    pub sj: SJSpec,
    pub a: CMat,
    pub b: CVec,
    pub c: C64,
    pub n: usize,
}

impl QuadricSpec {
    /// Checks the canonical-form invariants of `kind` on the full SJ spec.
    pub fn new(kind: Kind, sj: SJSpec) -> Result<Self> {
        sj.validate()?;
        let m = sj.dim();
        if m < 2 {
            return Err(Error::InvalidQuadric("dimension must be at least 2".into()));
        }
        let zero = |b: &SJBlock| b.a.norm() == 0.0;
        let nzero = sj.blocks.iter().filter(|b| zero(b)).count();
        let (b, c) = match kind {
            Kind::QC => {
                if nzero > 0 {
                    return Err(Error::InvalidQuadric("QC needs invertible A".into()));
                }
                (CVec::zeros(m), c64(-1.0, 0.0))
            }
            Kind::QWC => {
                let last = sj.blocks.last().unwrap();
                if nzero != 1 || !zero(last) || last.p != 1 {
                    return Err(Error::InvalidQuadric(
                        "QWC needs ker A = span(e_{n+1}): last block (0, 1) and no other zero".into(),
                    ));
                }
                (-e(m - 1, m), c64(0.0, 0.0))
            }
            Kind::IQWC => {
                let first = &sj.blocks[0];
                if nzero != 1 || !zero(first) || first.p < 2 {
                    return Err(Error::InvalidQuadric(
                        "IQWC needs a leading (0, p >= 2) block and no other zero".into(),
                    ));
                }
                (-conj(&f(1, m)), c64(0.0, 0.0))
            }
        };
        Ok(QuadricSpec { kind, a: build_sj(&sj), sj, b, c, n: m - 1 })
    }

    pub fn qc(a: &[C64]) -> Result<Self> {
        QuadricSpec::new(Kind::QC, SJSpec::diagonal(a))
    }

    /// QWC with `A = diag(a) ⊕ 0`.
    pub fn qwc(a: &[C64]) -> Result<Self> {
        let mut blocks: Vec<SJBlock> = a.iter().map(|&a| SJBlock::new(a, 1)).collect();
        blocks.push(SJBlock::new(c64(0.0, 0.0), 1));
        QuadricSpec::new(Kind::QWC, SJSpec::new(blocks))
    }

    /// IQWC with `A = J_p ⊕ diag(a)`.
    pub fn iqwc(p: usize, a: &[C64]) -> Result<Self> {
        let mut blocks = vec![SJBlock::new(c64(0.0, 0.0), p)];
        blocks.extend(a.iter().map(|&a| SJBlock::new(a, 1)));
        QuadricSpec::new(Kind::IQWC, SJSpec::new(blocks))
    }

    pub fn unit_sphere(n: usize) -> Self {
        QuadricSpec::qc(&vec![c64(1.0, 0.0); n + 1]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn resolvent(&self, z: C64) -> CMat {
        let m = self.dim();
        CMat::identity(m, m) - &self.a * z
    }

    pub fn resolvent_inv(&self, z: C64) -> Result<CMat> {
        for b in &self.sj.blocks {
            if (c64(1.0, 0.0) - z * b.a).norm() < 1e-14 {
                return Err(Error::SingularConfocal(z));
            }
        }
        inverse(&self.resolvent(z)).ok_or(Error::SingularConfocal(z))
    }

    pub fn sqrt_rz(&self, z: C64) -> Result<CMat> {
        sqrt_resolvent(&self.sj, z)
    }

    /// `C(z) = −½ ∫₀^z (√R_w)^{−1} dw · B`, summed exactly; the series stops
    /// because `B` lies in the nilpotent part of `A`.
    pub fn c_of_z(&self, z: C64) -> CVec {
        let m = self.dim();
        let mut out = CVec::zeros(m);
        let mut akb = self.b.clone();
        let mut zk = z;
        for k in 0..=m {
            let coef = -0.5 * binom(-0.5, k) * if k % 2 == 0 { 1.0 } else { -1.0 } / (k + 1) as f64;
            out += &akb * (zk * coef);
            akb = &self.a * akb;
            zk *= z;
            if vmax_abs(&akb) == 0.0 {
                break;
            }
        }
        out
    }

    pub fn eval_q0(&self, x: &CVec) -> C64 {
        bdot(x, &(&self.a * x + &self.b * c64(2.0, 0.0))) + self.c
    }

    /// `N̂_z = R_z^{−1}(Ax + B)`.
    pub fn normal_hat(&self, z: C64, x: &CVec) -> Result<CVec> {
        let rhs = &self.a * x + &self.b;
        if z == c64(0.0, 0.0) {
            return Ok(rhs);
        }
        solve_vec(&self.resolvent(z), &rhs).ok_or(Error::SingularConfocal(z))
    }

    fn check_on(&self, x: &CVec) -> Result<()> {
        let q = self.eval_q0(x).norm();
        if q > TOL_ON {
            return Err(Error::OffQuadric(q));
        }
        Ok(())
    }
}

/// `Q_z(x) = xᵀAR_z^{−1}x + 2(R_z^{−1}B)ᵀx + C + zBᵀR_z^{−1}B`.
pub fn eval_confocal(q: &QuadricSpec, z: C64, x: &CVec) -> Result<C64> {
    let ri = q.resolvent_inv(z)?;
    let rb = &ri * &q.b;
    Ok(bdot(x, &(&q.a * (&ri * x))) + bdot(&rb, x) * 2.0 + q.c + bdot(&q.b, &rb) * z)
}

/// `x_z = √R_z x₀ + C(z)`.
pub fn ivory_map(q: &QuadricSpec, z: C64, x0: &CVec) -> Result<CVec> {
    q.check_on(x0)?;
    q.resolvent_inv(z)?;
    Ok(q.sqrt_rz(z)? * x0 + q.c_of_z(z))
}

pub fn ivory_theorem_residual(q: &QuadricSpec, z: C64, xa: &CVec, xb: &CVec) -> Result<f64> {
    let za = ivory_map(q, z, xa)?;
    let zb = ivory_map(q, z, xb)?;
    let d1 = &zb - xa;
    let d2 = &za - xb;
    Ok((bsq(&d1) - bsq(&d2)).norm())
}

pub fn tc_symmetry_residual(q: &QuadricSpec, z: C64, xa: &CVec, xb: &CVec) -> Result<f64> {
    let za = ivory_map(q, z, xa)?;
    let zb = ivory_map(q, z, xb)?;
    let na = q.normal_hat(c64(0.0, 0.0), xa)?;
    let nb = q.normal_hat(c64(0.0, 0.0), xb)?;
    Ok((bdot(&(&zb - xa), &na) - bdot(&(&za - xb), &nb)).norm())
}

fn check_ruling(q: &QuadricSpec, x0: &CVec, w0: &CVec) -> Result<()> {
    let scale = w0.norm_squared().max(1e-300);
    let r1 = bdot(w0, &(&q.a * w0)).norm() / scale;
    let n0 = q.normal_hat(c64(0.0, 0.0), x0)?;
    let r2 = bdot(w0, &n0).norm() / (scale.sqrt() * n0.norm().max(1e-300));
    let r = r1.max(r2);
    if r > 1e-8 {
        return Err(Error::NotRulingDirection(r));
    }
    Ok(())
}

/// `| |√R_z w₀|² − |w₀|² |` for a ruling direction `w₀` at `x₀`.
pub fn ruling_length_residual(q: &QuadricSpec, z: C64, x0: &CVec, w0: &CVec) -> Result<f64> {
    q.check_on(x0)?;
    if w0.norm() == 0.0 {
        return Ok(0.0);
    }
    check_ruling(q, x0, w0)?;
    let wz = q.sqrt_rz(z)? * w0;
    Ok((bsq(&wz) - bsq(w0)).norm())
}

/// `(x_z^b − x_0^a)ᵀw^a + (x_z^a − x_0^b)ᵀ√R_z w^a` for a ruling `w^a` at `x_0^a`.
pub fn segment_ruling_angle_residual(
    q: &QuadricSpec,
    z: C64,
    xa: &CVec,
    xb: &CVec,
    wa: &CVec,
) -> Result<f64> {
    check_ruling(q, xa, wa)?;
    let za = ivory_map(q, z, xa)?;
    let zb = ivory_map(q, z, xb)?;
    let wz = q.sqrt_rz(z)? * wa;
    Ok((bdot(&(&zb - xa), wa) + bdot(&(&za - xb), &wz)).norm())
}

/// For polar directions (`wᵀAŵ = 0`): `|(√R_z w)ᵀ(√R_z ŵ) − wᵀŵ|`.
pub fn polar_ruling_angle_residual(q: &QuadricSpec, z: C64, w: &CVec, what: &CVec) -> Result<f64> {
    let p = bdot(w, &(&q.a * what)).norm() / (w.norm() * what.norm()).max(1e-300);
    if p > 1e-8 {
        return Err(Error::NotRulingDirection(p));
    }
    let sr = q.sqrt_rz(z)?;
    Ok((bdot(&(&sr * w), &(&sr * what)) - bdot(w, what)).norm())
}

/// `|N̂_{z1}ᵀN̂_{z2}|` at a point of both `x_{z1}` and `x_{z2}`.
pub fn confocal_orthogonality_residual(q: &QuadricSpec, z1: C64, z2: C64, x: &CVec) -> Result<f64> {
    if (z1 - z2).norm() < 1e-14 {
        return Err(Error::InvalidInput("z1 = z2".into()));
    }
    for z in [z1, z2] {
        let qz = eval_confocal(q, z, x)?.norm();
        if qz > TOL_ON {
            return Err(Error::OffQuadric(qz));
        }
    }
    let n1 = q.normal_hat(z1, x)?;
    let n2 = q.normal_hat(z2, x)?;
    Ok(bdot(&n1, &n2).norm())
}

/// Minimum-norm Newton iteration onto `x_{z1} ∩ x_{z2}`.
pub fn lame_intersection(q: &QuadricSpec, z1: C64, z2: C64, start: &CVec) -> Option<CVec> {
    let m = q.dim();
    let mut x = start.clone();
    for _ in 0..50 {
        let f1 = eval_confocal(q, z1, &x).ok()?;
        let f2 = eval_confocal(q, z2, &x).ok()?;
        if f1.norm().max(f2.norm()) < 1e-14 {
            return Some(x);
        }
        let n1 = q.normal_hat(z1, &x).ok()?;
        let n2 = q.normal_hat(z2, &x).ok()?;
        let jac = CMat::from_fn(2, m, |i, j| 2.0 * if i == 0 { n1[j] } else { n2[j] });
        let jh = jac.adjoint();
        let g = &jac * &jh;
        let rhs = CVec::from_vec(vec![f1, f2]);
        let y = solve_vec(&g, &rhs)?;
        x -= jh * y;
    }
    let f1 = eval_confocal(q, z1, &x).ok()?.norm();
    let f2 = eval_confocal(q, z2, &x).ok()?.norm();
    (f1.max(f2) < 1e-12).then_some(x)
}

/// Roots of `Q_z(x) = 0` in `z`, ascending in modulus.
pub fn elliptic_coordinates(q: &QuadricSpec, x: &CVec) -> Result<Vec<C64>> {
    if q.sj.blocks.iter().any(|b| b.p > 1 && b.a.norm() > 0.0) {
        return Err(Error::InvalidInput("elliptic coordinates need a general quadric".into()));
    }
    let m = q.dim();
    let amax = q.sj.blocks.iter().map(|b| b.a.norm()).fold(0.0, f64::max).max(1e-3);
    let rho = 0.5 / amax;
    let k = m + 3;
    let phase = 0.37;
    let poly = |z: C64| -> Result<C64> {
        let mut det = c64(1.0, 0.0);
        for b in &q.sj.blocks {
            det *= (c64(1.0, 0.0) - z * b.a).powu(b.p as u32);
        }
        Ok(eval_confocal(q, z, x)? * det)
    };
    let mut samples = Vec::with_capacity(k);
    for j in 0..k {
        let th = std::f64::consts::TAU * j as f64 / k as f64 + phase;
        samples.push(poly(C64::from_polar(rho, th))?);
    }
    let mut coef = vec![c64(0.0, 0.0); k];
    for (d, c) in coef.iter_mut().enumerate() {
        let mut s = c64(0.0, 0.0);
        for (j, p) in samples.iter().enumerate() {
            let th = std::f64::consts::TAU * j as f64 / k as f64 + phase;
            s += p * C64::from_polar(1.0, -th * d as f64);
        }
        *c = s / (k as f64 * rho.powi(d as i32));
    }
    let big = coef.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let deg = (0..k).rev().find(|&d| coef[d].norm() > 1e-10 * big).unwrap_or(0);
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = coef[deg];
    let mut comp = CMat::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = c64(1.0, 0.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coef[i] / lead;
    }
    let (_, t) = nalgebra::Schur::new(comp).unpack();
    let mut roots = Vec::with_capacity(deg);
    for i in 0..deg {
        let mut z = t[(i, i)];
        for _ in 0..30 {
            let Ok(fz) = eval_confocal(q, z, x) else { break };
            let n = q.normal_hat(z, x)?;
            let d = bsq(&n);
            if d.norm() < 1e-300 {
                break;
            }
            let step = fz / d;
            z -= step;
            if step.norm() < 1e-15 * (1.0 + z.norm()) {
                break;
            }
        }
        let n = q.normal_hat(z, x)?;
        if bsq(&n).norm() < 1e-8 * n.norm_squared().max(1e-300) || bsq(&n).norm() < 1e-12 {
            return Err(Error::MultipleRoot(z));
        }
        roots.push(z);
    }
    roots.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    Ok(roots)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LMap {
    pub l: CMat,
    pub l_inv: CMat,
    /// `LᵀA²L`.
    pub a_prime: CMat,
    /// The orthogonal factor chosen for IQWC, `L^{−1} = Rᵀ√(A + f̄₁f̄₁ᵀ)`.
    pub r: Option<CMat>,
}

pub fn build_lmap(q: &QuadricSpec, seed: u64) -> Result<LMap> {
    let m = q.dim();
    match q.kind {
        Kind::QC => Err(Error::InvalidInput("the L map is defined for QWC and IQWC only".into())),
        Kind::QWC => {
            let mut sj = q.sj.clone();
            sj.blocks.last_mut().unwrap().a = c64(1.0, 0.0);
            let l_inv = sqrt_sj(&sj)?;
            let l = inverse(&l_inv).ok_or(Error::InvalidQuadric("singular L".into()))?;
            let a_prime = l.transpose() * &q.a * &q.a * &l;
            Ok(LMap { l, l_inv, a_prime, r: None })
        }
        Kind::IQWC => {
            let fb = conj(&f(1, m));
            let s = sqrtm(&(&q.a + &fb * fb.transpose()))?;
            let r_last = &s * f(1, m);
            let o = orth_complete(&[r_last], m, seed)?;
            let r = CMat::from_fn(m, m, |i, j| o[((j + 1) % m, i)]);
            let l_inv = r.transpose() * &s;
            let l = inverse(&l_inv).ok_or(Error::InvalidQuadric("singular L".into()))?;
            let a_prime = l.transpose() * &q.a * &q.a * &l;
            Ok(LMap { l, l_inv, a_prime, r: Some(r) })
        }
    }
}

impl LMap {
    pub fn n(&self) -> usize {
        self.l.nrows() - 1
    }

    /// The `n × n` block of `A′`.
    pub fn a_prime_n(&self) -> CMat {
        let n = self.n();
        self.a_prime.view((0, 0), (n, n)).into_owned()
    }

    /// `I_{1,n}L^{−1}B`.
    pub fn b_prime(&self, q: &QuadricSpec) -> CVec {
        (&self.l_inv * &q.b).rows(0, self.n()).into_owned()
    }

    /// `I_{1,n}L^{−1}C(z)`.
    pub fn c_prime(&self, q: &QuadricSpec, z: C64) -> CVec {
        (&self.l_inv * q.c_of_z(z)).rows(0, self.n()).into_owned()
    }

    /// `√R′_z`, the `n × n` block of `L^{−1}√R_z L`.
    pub fn sqrt_rprime(&self, q: &QuadricSpec, z: C64) -> Result<CMat> {
        let n = self.n();
        let k = &self.l_inv * q.sqrt_rz(z)? * &self.l;
        Ok(k.view((0, 0), (n, n)).into_owned())
    }

    /// Named residuals of every invariant the map must satisfy.
    pub fn invariants(&self, q: &QuadricSpec, z: C64) -> Result<Vec<(&'static str, f64)>> {
        let m = q.dim();
        let n = self.n();
        let en = e(n, m);
        let mut i1n = CMat::identity(m, m);
        i1n[(n, n)] = c64(0.0, 0.0);
        let mut out = Vec::new();
        out.push(("LtAL = I_1n", max_abs(&(self.l.transpose() * &q.a * &self.l - &i1n))));
        out.push(("LtB = -e", crate::sjcore::vmax_abs(&(self.l.transpose() * &q.b + &en))));
        out.push(("A' symmetric", max_abs(&(&self.a_prime - self.a_prime.transpose()))));
        out.push(("A'e = 0", crate::sjcore::vmax_abs(&(&self.a_prime * &en))));
        if q.kind == Kind::IQWC {
            let f1 = f(1, m);
            let fb = conj(&f1);
            out.push(("Le = f1", crate::sjcore::vmax_abs(&(&self.l * &en - &f1))));
            let g = self.l.transpose() * (&q.a + &fb * fb.transpose()) * &self.l;
            out.push(("Lt(A+ff)L = I", max_abs(&(g - CMat::identity(m, m)))));
            out.push(("A'Ltf1 = 0", crate::sjcore::vmax_abs(&(&self.a_prime * (self.l.transpose() * &f1)))));
            if let Some(r) = &self.r {
                out.push(("RtR = I", crate::sjcore::orth_defect(r)));
            }
        }
        let lc = &self.l_inv * q.c_of_z(z);
        let top = lc.rows(0, n).into_owned();
        out.push(("L^-1 C(z) on Z", (bsq(&top) - lc[n] * 2.0).norm()));
        let srp = self.sqrt_rprime(q, z)?;
        let rp = CMat::identity(n, n) - self.a_prime_n() * z;
        out.push(("sqrtR'^2 = R'", max_abs(&(&srp * &srp - rp))));
        let k = &self.l_inv * q.sqrt_rz(z)? * &self.l;
        out.push(("block triangular", crate::sjcore::vmax_abs(&k.view((0, n), (n, 1)).into_owned().column(0).into_owned())));
        let lhs = (CMat::identity(n, n) + &srp) * &top + self.b_prime(q) * z;
        out.push(("translation", crate::sjcore::vmax_abs(&lhs)));
        Ok(out)
    }
}

/// `Y(V) = 2V + (|V|² − 1)e_{n+1}`; the sphere point is `Y/(|V|² + 1)`.
pub fn stereo_y(v: &CVec) -> CVec {
    let n = v.len();
    let mut y = CVec::zeros(n + 1);
    y.rows_mut(0, n).copy_from(&(v * c64(2.0, 0.0)));
    y[n] = bsq(v) - 1.0;
    y
}

/// `∂X/∂V` for the stereographic chart, `(n+1) × n`.
pub fn stereo_jacobian(v: &CVec) -> Result<CMat> {
    let n = v.len();
    let s = bsq(v) + 1.0;
    if s.norm() < 1e-12 {
        return Err(Error::ChartSingularity);
    }
    let x = stereo_y(v) / s;
    let mut ex = -x;
    ex[n] += 1.0;
    let mut j = CMat::zeros(n + 1, n);
    for k in 0..n {
        j[(k, k)] = c64(1.0, 0.0);
    }
    j += &ex * v.transpose();
    Ok(j * (c64(2.0, 0.0) / s))
}

/// `Z_V = [I_n; Vᵀ]`, the derivative of `Z(V) = V + ½|V|²e_{n+1}`.
pub fn graph_jacobian(v: &CVec) -> CMat {
    let n = v.len();
    let mut j = CMat::zeros(n + 1, n);
    for k in 0..n {
        j[(k, k)] = c64(1.0, 0.0);
        j[(n, k)] = v[k];
    }
    j
}

fn need_lmap<'a>(q: &QuadricSpec, lm: Option<&'a LMap>) -> Result<&'a LMap> {
    lm.ok_or_else(|| Error::InvalidInput(format!("{:?} chart needs an L map", q.kind)))
}

pub fn chart_to_ambient(q: &QuadricSpec, lm: Option<&LMap>, v: &CVec) -> Result<CVec> {
    let n = q.n;
    if v.len() != n {
        return Err(Error::InvalidInput("chart point has wrong length".into()));
    }
    match q.kind {
        Kind::QC => {
            let s = bsq(v) + 1.0;
            if s.norm() < 1e-12 {
                return Err(Error::ChartSingularity);
            }
            let x = stereo_y(v) / s;
            solve_vec(&sqrt_sj(&q.sj)?, &x).ok_or(Error::ChartSingularity)
        }
        _ => {
            let lm = need_lmap(q, lm)?;
            let mut z = CVec::zeros(n + 1);
            z.rows_mut(0, n).copy_from(v);
            z[n] = bsq(v) * 0.5;
            Ok(&lm.l * z)
        }
    }
}

/// `∂x₀/∂V`, `(n+1) × n`.
pub fn chart_jacobian(q: &QuadricSpec, lm: Option<&LMap>, v: &CVec) -> Result<CMat> {
    match q.kind {
        Kind::QC => solve(&sqrt_sj(&q.sj)?, &stereo_jacobian(v)?).ok_or(Error::ChartSingularity),
        _ => Ok(&need_lmap(q, lm)?.l * graph_jacobian(v)),
    }
}

/// Unit normal `N₀` and `H` at the chart point `V`.
pub fn chart_normal_h(q: &QuadricSpec, lm: Option<&LMap>, v: &CVec) -> Result<(CVec, C64)> {
    let n = q.n;
    let nhat = match q.kind {
        Kind::QC => {
            let s = bsq(v) + 1.0;
            if s.norm() < 1e-12 {
                return Err(Error::ChartSingularity);
            }
            sqrt_sj(&q.sj)? * (stereo_y(v) / s)
        }
        _ => {
            let lm = need_lmap(q, lm)?;
            let mut ve = CVec::zeros(n + 1);
            ve.rows_mut(0, n).copy_from(v);
            let lt = lm.l.transpose();
            solve_vec(&lt, &ve).ok_or(Error::InvalidQuadric("singular L".into()))? + &q.b
        }
    };
    let h = match q.kind {
        Kind::QC => {
            let x = stereo_y(v) / (bsq(v) + 1.0);
            bdot(&x, &(&q.a * &x))
        }
        _ => bsq(&nhat),
    };
    if h.norm() < TOL_ISO {
        return Err(Error::IsotropicNormal(h.norm()));
    }
    Ok((nhat / bsqrt(h), h))
}

/// Random ruling direction through `x` (unit Hermitian norm).
pub fn random_ruling(q: &QuadricSpec, x: &CVec, rng: &mut impl Rng) -> Result<CVec> {
    let m = q.dim();
    let nh = q.normal_hat(c64(0.0, 0.0), x)?;
    let p = conj(&nh);
    let np = bdot(&nh, &p);
    let tangent = |u: CVec| -> CVec {
        let c = bdot(&nh, &u) / np;
        u - &p * c
    };
    let t1 = tangent(rand_cvec(rng, m, 1.0));
    let t2 = tangent(rand_cvec(rng, m, 1.0));
    let a = bdot(&t2, &(&q.a * &t2));
    let b = bdot(&t1, &(&q.a * &t2)) * 2.0;
    let c = bdot(&t1, &(&q.a * &t1));
    let w = if a.norm() < 1e-14 {
        if b.norm() < 1e-14 {
            t2
        } else {
            &t1 - &t2 * (c / b)
        }
    } else {
        let d = (b * b - a * c * 4.0).sqrt();
        let s = if (-b + d).norm() > (-b - d).norm() { (-b + d) / (a * 2.0) } else { (-b - d) / (a * 2.0) };
        &t1 + &t2 * s
    };
    let nrm = w.norm();
    Ok(w / c64(nrm, 0.0))
}

/// Random direction `ŵ` tangent at `x` with `wᵀAŵ = 0`.
pub fn random_polar(q: &QuadricSpec, w: &CVec, rng: &mut impl Rng) -> CVec {
    let m = q.dim();
    let aw = &q.a * w;
    let p = conj(&aw);
    let u = rand_cvec(rng, m, 1.0);
    let c = bdot(&aw, &u) / bdot(&aw, &p);
    u - p * c
}

/// Random quadric of the given kind in `C^{n+1}`: blocks of size at most 2
/// (the IQWC nilpotent block has size `p`), eigenvalues of modulus in `[0.2, 2]`.
pub fn random_quadric(kind: Kind, n: usize, p: usize, seed: u64) -> Result<QuadricSpec> {
    let m = n + 1;
    let zero = SJBlock::new(c64(0.0, 0.0), 1);
    let sj = match kind {
        Kind::QC => crate::sjcore::random_sjspec(m, 2, seed),
        Kind::QWC => {
            let mut s = crate::sjcore::random_sjspec(m - 1, 2, seed);
            s.blocks.push(zero);
            s
        }
        Kind::IQWC => {
            if p < 2 || p > m {
                return Err(Error::InvalidQuadric("IQWC block size must be in 2..=n+1".into()));
            }
            let mut blocks = vec![SJBlock::new(c64(0.0, 0.0), p)];
            if m > p {
                blocks.extend(crate::sjcore::random_sjspec(m - p, 2, seed).blocks);
            }
            SJSpec::new(blocks)
        }
    };
    QuadricSpec::new(kind, sj)
}

/// Point of `Q₀` from a random chart coordinate of modulus about `scale`.
pub fn random_point(q: &QuadricSpec, lm: Option<&LMap>, rng: &mut impl Rng, scale: f64) -> Result<CVec> {
    chart_to_ambient(q, lm, &rand_cvec(rng, q.n, scale))
}
