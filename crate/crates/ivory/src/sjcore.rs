//! Complex bilinear linear algebra: symmetric Jordan blocks, square roots of
//! SJ matrices and of their resolvents, orthogonal completion.

use nalgebra::Schur;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{c64, CMat, CVec, Error, Result, C64};

pub const TOL_ORTH: f64 = 1e-10;
pub const MAX_RETRIES: usize = 32;

/// Square root with the branch `√(r e^{2iθ}) = √r e^{iθ}`, `−π ≤ 2θ < π`.
///
/// Differs from the principal root only on the negative real axis, where
/// `√(−r) = −i√r`.
pub fn bsqrt(a: C64) -> C64 {
    if a.im == 0.0 && a.re < 0.0 {
        c64(0.0, -(-a.re).sqrt())
    } else {
        a.sqrt()
    }
}

/// As [`bsqrt`], but values within `rel` of the negative axis are put on it.
fn bsqrt_snap(a: C64, rel: f64) -> C64 {
    if a.re < 0.0 && a.im.abs() <= rel * a.norm() {
        c64(0.0, -(-a.re).sqrt())
    } else {
        bsqrt(a)
    }
}

pub fn bdot(x: &CVec, y: &CVec) -> C64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

pub fn bsq(x: &CVec) -> C64 {
    bdot(x, x)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

pub fn vmax_abs(v: &CVec) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.norm()))
}

/// `‖MᵀM − I‖∞` entrywise.
pub fn orth_defect(m: &CMat) -> f64 {
    let n = m.ncols();
    max_abs(&(m.transpose() * m - CMat::identity(n, n)))
}

pub fn e(i: usize, m: usize) -> CVec {
    let mut v = CVec::zeros(m);
    v[i] = c64(1.0, 0.0);
    v
}

/// `f_j = (e_{2j−1} + i e_{2j})/√2`, 1-based `j`.
pub fn f(j: usize, m: usize) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = CVec::zeros(m);
    v[2 * j - 2] = c64(s, 0.0);
    v[2 * j - 1] = c64(0.0, s);
    v
}

pub fn conj(v: &CVec) -> CVec {
    v.map(|x| x.conj())
}

/// Generalised binomial coefficient `C(α, k)`.
pub fn binom(alpha: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (alpha - i as f64) / (i + 1) as f64)
}

pub fn solve(a: &CMat, b: &CMat) -> Option<CMat> {
    a.clone().lu().solve(b)
}

pub fn solve_vec(a: &CMat, b: &CVec) -> Option<CVec> {
    a.clone().lu().solve(b)
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    a.clone().try_inverse()
}

/// 2-norm condition number.
pub fn cond(a: &CMat) -> f64 {
    let sv = a.clone().singular_values();
    let hi = sv.iter().cloned().fold(0.0, f64::max);
    let lo = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_c(rng: &mut impl Rng, scale: f64) -> C64 {
    c64(
        scale * (2.0 * rng.random::<f64>() - 1.0),
        scale * (2.0 * rng.random::<f64>() - 1.0),
    )
}

pub fn rand_cvec(rng: &mut impl Rng, n: usize, scale: f64) -> CVec {
    CVec::from_fn(n, |_, _| rand_c(rng, scale))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SJBlock {
    pub a: C64,
    pub p: usize,
}

impl SJBlock {
    pub fn new(a: C64, p: usize) -> Self {
        SJBlock { a, p }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SJSpec {
    pub blocks: Vec<SJBlock>,
}

impl SJSpec {
    pub fn new(blocks: Vec<SJBlock>) -> Self {
        SJSpec { blocks }
    }

    pub fn diagonal(a: &[C64]) -> Self {
        SJSpec::new(a.iter().map(|&a| SJBlock::new(a, 1)).collect())
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.p).sum()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.blocks.len());
        let mut o = 0;
        for b in &self.blocks {
            off.push(o);
            o += b.p;
        }
        off
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() || self.blocks.iter().any(|b| b.p == 0) {
            return Err(Error::InvalidInput("SJ block sizes must be >= 1".into()));
        }
        Ok(())
    }
}

/// The symmetric nilpotent block `J_p`.
pub fn jordan_block(p: usize) -> CMat {
    let mut m = CMat::zeros(p, p);
    if p < 2 {
        return m;
    }
    let k = p / 2;
    for j in 1..k {
        let a = f(j, p);
        let b = conj(&f(j + 1, p));
        m += &a * b.transpose() + &b * a.transpose();
    }
    let fk = f(k, p);
    if p % 2 == 0 {
        m += &fk * fk.transpose();
    } else {
        let ep = e(p - 1, p);
        m += &fk * ep.transpose() + &ep * fk.transpose();
    }
    m
}

pub fn build_sj(spec: &SJSpec) -> CMat {
    let m = spec.dim();
    let mut a = CMat::zeros(m, m);
    for (b, o) in spec.blocks.iter().zip(spec.offsets()) {
        let blk = jordan_block(b.p) + CMat::identity(b.p, b.p) * b.a;
        a.view_mut((o, o), (b.p, b.p)).copy_from(&blk);
    }
    a
}

/// `√(cI + N)` for nilpotent `N` of order at most `p`.
fn sqrt_shifted(c: C64, n: &CMat) -> CMat {
    let p = n.nrows();
    let sc = bsqrt(c);
    let mut acc = CMat::identity(p, p);
    let mut pow = CMat::identity(p, p);
    let mut cinv = c64(1.0, 0.0);
    for j in 1..p {
        pow = &pow * n;
        cinv /= c;
        acc += &pow * (cinv * binom(0.5, j));
    }
    acc * sc
}

pub fn sqrt_sj(spec: &SJSpec) -> Result<CMat> {
    let m = spec.dim();
    let mut out = CMat::zeros(m, m);
    for (i, (b, o)) in spec.blocks.iter().zip(spec.offsets()).enumerate() {
        if b.a == c64(0.0, 0.0) {
            return Err(Error::ZeroEigenvalue(i));
        }
        let blk = sqrt_shifted(b.a, &jordan_block(b.p));
        out.view_mut((o, o), (b.p, b.p)).copy_from(&blk);
    }
    Ok(out)
}

/// `√(I − zA)` for `A = build_sj(spec)`, blockwise.
pub fn sqrt_resolvent(spec: &SJSpec, z: C64) -> Result<CMat> {
    let m = spec.dim();
    let mut out = CMat::zeros(m, m);
    for (b, o) in spec.blocks.iter().zip(spec.offsets()) {
        let c = c64(1.0, 0.0) - z * b.a;
        if c.norm() < 1e-14 {
            return Err(Error::SingularConfocal(z));
        }
        let blk = sqrt_shifted(c, &(jordan_block(b.p) * (-z)));
        out.view_mut((o, o), (b.p, b.p)).copy_from(&blk);
    }
    Ok(out)
}

/// Primary square root of an arbitrary matrix through its complex Schur form,
/// using the branch of [`bsqrt`] on every eigenvalue.
///
/// Only needed for `√(A + f̄₁f̄₁ᵀ)`, which is not SJ.
pub fn sqrtm(m: &CMat) -> Result<CMat> {
    let n = m.nrows();
    let (q, t) = Schur::new(m.clone()).unpack();
    let mut u = CMat::zeros(n, n);
    for i in 0..n {
        u[(i, i)] = bsqrt_snap(t[(i, i)], 1e-12);
    }
    for d in 1..n {
        for i in 0..n - d {
            let j = i + d;
            let mut s = t[(i, j)];
            for k in i + 1..j {
                s -= u[(i, k)] * u[(k, j)];
            }
            let den = u[(i, i)] + u[(j, j)];
            if den.norm() < 1e-300 {
                return Err(Error::InvalidInput("matrix has no primary square root".into()));
            }
            u[(i, j)] = s / den;
        }
    }
    Ok(&q * u * q.adjoint())
}

/// Orthogonal matrix whose first rows are `rows`, completed by bilinear
/// Gram–Schmidt on seeded random vectors.
pub fn orth_complete(rows: &[CVec], m: usize, seed: u64) -> Result<CMat> {
    let tol = 1e-8;
    for (i, r) in rows.iter().enumerate() {
        if r.len() != m {
            return Err(Error::InvalidInput("row length differs from m".into()));
        }
        let s = bsq(r);
        if s.norm() < tol * r.norm_squared().max(1.0) {
            return Err(Error::IsotropicEncounter);
        }
        if (s - 1.0).norm() > tol {
            return Err(Error::InvalidInput(format!("row {i} is not a unit vector")));
        }
        for q in &rows[..i] {
            if bdot(q, r).norm() > tol {
                return Err(Error::InvalidInput("given rows are not orthogonal".into()));
            }
        }
    }
    if rows.len() > m {
        return Err(Error::InvalidInput("more rows than the dimension".into()));
    }
    let mut basis: Vec<CVec> = rows.to_vec();
    let mut rng = rng(seed);
    while basis.len() < m {
        let mut found = false;
        for _ in 0..MAX_RETRIES {
            let mut v = rand_cvec(&mut rng, m, 1.0);
            for _ in 0..2 {
                for q in &basis {
                    let p = bdot(q, &v);
                    v -= q * p;
                }
            }
            let s = bsq(&v);
            if s.norm() > 1e-6 * v.norm_squared() {
                basis.push(v / bsqrt(s));
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::IsotropicEncounter);
        }
    }
    Ok(CMat::from_fn(m, m, |i, j| basis[i][j]))
}

pub fn random_antisymmetric(m: usize, seed: u64, scale: f64) -> CMat {
    let mut rng = rng(seed);
    let mut x = CMat::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let v = rand_c(&mut rng, scale);
            x[(i, j)] = v;
            x[(j, i)] = -v;
        }
    }
    x
}

/// `exp(X)` for a seeded random complex antisymmetric `X` with entries
/// bounded by `scale`.
pub fn random_orthogonal(m: usize, seed: u64, scale: f64) -> CMat {
    random_antisymmetric(m, seed, scale).exp()
}

/// Random SJ spec: blocks of size at most `max_p`, total dimension `m`,
/// eigenvalues with modulus in `[0.2, 2]`.
pub fn random_sjspec(m: usize, max_p: usize, seed: u64) -> SJSpec {
    let mut rng = rng(seed);
    let mut blocks = Vec::new();
    let mut left = m;
    while left > 0 {
        let p = rng.random_range(1..=max_p.min(left));
        let r = 0.2 + 1.8 * rng.random::<f64>();
        let th = std::f64::consts::TAU * rng.random::<f64>();
        blocks.push(SJBlock::new(C64::from_polar(r, th), p));
        left -= p;
    }
    SJSpec::new(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_on_negative_axis() {
        assert_eq!(bsqrt(c64(-4.0, 0.0)), c64(0.0, -2.0));
        assert_eq!(bsqrt(c64(-4.0, -0.0)), c64(0.0, -2.0));
        assert_eq!(bsqrt(c64(4.0, 0.0)), c64(2.0, 0.0));
    }

    #[test]
    fn jordan_blocks_are_nilpotent() {
        for p in 1..=6 {
            let j = jordan_block(p);
            assert_eq!(j, j.transpose());
            let mut pw = CMat::identity(p, p);
            for _ in 0..p {
                pw = &pw * &j;
            }
            assert!(max_abs(&pw) < 1e-14);
            if p > 1 {
                let mut pw = CMat::identity(p, p);
                for _ in 0..p - 1 {
                    pw = &pw * &j;
                }
                assert!(max_abs(&pw) > 1e-3);
            }
        }
    }

    #[test]
    fn schur_sqrt_handles_negative_eigenvalues() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![c64(1.0, 0.0), c64(-1.0, 0.0)]));
        let s = sqrtm(&m).unwrap();
        assert!(max_abs(&(&s * &s - &m)) < 1e-14);
        assert!((s[(1, 1)] - c64(0.0, -1.0)).norm() < 1e-14);
    }
}
