use serde::{Deserialize, Serialize};

use crate::{CMat, CVec, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

/// Regular grid in the conjugate coordinates `u`. Axis 0 varies slowest in
/// the flat node index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    pub base: Vec<usize>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>, base: Vec<usize>) -> Result<Self> {
        if axes.is_empty() || axes.len() != base.len() {
            return Err(Error::InvalidInput("grid needs one base index per axis".into()));
        }
        for (a, &b) in axes.iter().zip(&base) {
            if a.steps < 2 || !(a.max > a.min) || b >= a.steps {
                return Err(Error::InvalidInput(format!("bad grid axis {a:?} with base {b}")));
            }
        }
        Ok(GridSpec { axes, base })
    }

    /// `n` axes of `steps` nodes spaced `h`, the base node in the middle.
    pub fn centered(n: usize, h: f64, steps: usize) -> Self {
        let b = steps / 2;
        let ax = Axis { min: -(b as f64) * h, max: (steps - 1 - b) as f64 * h, steps };
        GridSpec { axes: vec![ax; n], base: vec![b; n] }
    }

    /// Same extent, half the spacing.
    pub fn refine(&self) -> Self {
        GridSpec {
            axes: self
                .axes
                .iter()
                .map(|a| Axis { steps: 2 * (a.steps - 1) + 1, ..*a })
                .collect(),
            base: self.base.iter().map(|b| 2 * b).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.steps).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h(&self, axis: usize) -> f64 {
        let a = &self.axes[axis];
        (a.max - a.min) / (a.steps - 1) as f64
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.axes[axis].min + i as f64 * self.h(axis)
    }

    pub fn index(&self, m: &[usize]) -> usize {
        m.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.steps + i)
    }

    pub fn multi(&self, mut idx: usize) -> Vec<usize> {
        let mut m = vec![0; self.n()];
        for a in (0..self.n()).rev() {
            m[a] = idx % self.axes[a].steps;
            idx /= self.axes[a].steps;
        }
        m
    }

    pub fn u(&self, idx: usize) -> Vec<f64> {
        self.multi(idx).iter().enumerate().map(|(a, &i)| self.coord(a, i)).collect()
    }

    pub fn base_index(&self) -> usize {
        self.index(&self.base)
    }

    pub fn shift(&self, idx: usize, axis: usize, off: isize) -> Option<usize> {
        let mut m = self.multi(idx);
        let j = m[axis] as isize + off;
        if j < 0 || j >= self.axes[axis].steps as isize {
            return None;
        }
        m[axis] = j as usize;
        Some(self.index(&m))
    }

    /// At least `margin` nodes away from every face.
    pub fn interior(&self, idx: usize, margin: usize) -> bool {
        self.multi(idx)
            .iter()
            .zip(&self.axes)
            .all(|(&i, a)| i >= margin && i + margin < a.steps)
    }

    /// Node of `self` at the same `u` as node `idx` of `coarse`, if any.
    pub fn locate(&self, coarse: &GridSpec, idx: usize) -> Option<usize> {
        let u = coarse.u(idx);
        let mut m = Vec::with_capacity(self.n());
        for (a, &x) in u.iter().enumerate() {
            let t = (x - self.axes[a].min) / self.h(a);
            let r = t.round();
            if (t - r).abs() > 1e-6 || r < 0.0 || r as usize >= self.axes[a].steps {
                return None;
            }
            m.push(r as usize);
        }
        Some(self.index(&m))
    }
}

/// Fills a grid from its base node: along `order[0]` first, then along
/// `order[1]` from every node already reached, and so on.
///
/// `step(state, from, axis, h)` advances one node; `h` carries the sign.
pub fn sweep<S: Clone>(
    grid: &GridSpec,
    base: S,
    order: &[usize],
    mut step: impl FnMut(&S, usize, usize, f64) -> Result<S>,
) -> Result<Vec<S>> {
    let mut out: Vec<Option<S>> = vec![None; grid.len()];
    let b = grid.base_index();
    out[b] = Some(base);
    let mut filled = vec![b];
    for &axis in order {
        let h = grid.h(axis);
        let mut next = Vec::new();
        for &start in &filled {
            for dir in [1isize, -1] {
                let mut cur = start;
                while let Some(nb) = grid.shift(cur, axis, dir) {
                    let s = step(out[cur].as_ref().unwrap(), cur, axis, h * dir as f64)?;
                    out[nb] = Some(s);
                    next.push(nb);
                    cur = nb;
                }
            }
        }
        filled.extend(next);
    }
    out.into_iter()
        .map(|s| s.ok_or_else(|| Error::InvalidInput("sweep order does not cover the grid".into())))
        .collect()
}

/// Classical fourth-order Runge–Kutta step.
pub fn rk4(y: &CVec, h: f64, mut f: impl FnMut(&CVec) -> Result<CVec>) -> Result<CVec> {
    let k1 = f(y)?;
    let k2 = f(&(y + &k1 * C64::from(h / 2.0)))?;
    let k3 = f(&(y + &k2 * C64::from(h / 2.0)))?;
    let k4 = f(&(y + &k3 * C64::from(h)))?;
    Ok(y + (k1 + (k2 + k3) * C64::from(2.0) + k4) * C64::from(h / 6.0))
}

/// Values that finite differences can be taken of.
pub trait Field: Clone {
    fn zero_like(&self) -> Self;
    fn axpy(&mut self, a: f64, x: &Self);
}

impl Field for C64 {
    fn zero_like(&self) -> Self {
        C64::new(0.0, 0.0)
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += x * a;
    }
}

impl Field for CVec {
    fn zero_like(&self) -> Self {
        CVec::zeros(self.len())
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += x * C64::from(a);
    }
}

impl Field for CMat {
    fn zero_like(&self) -> Self {
        CMat::zeros(self.nrows(), self.ncols())
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += x * C64::from(a);
    }
}

impl<T: Field> Field for Vec<T> {
    fn zero_like(&self) -> Self {
        self.iter().map(Field::zero_like).collect()
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            s.axpy(a, v);
        }
    }
}

/// Central first-derivative stencil of order 2, 4 or 6.
pub fn stencil(order: usize) -> &'static [(isize, f64)] {
    const O2: [(isize, f64); 2] = [(-1, -0.5), (1, 0.5)];
    const O4: [(isize, f64); 4] = [(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];
    const O6: [(isize, f64); 6] = [
        (-3, -1.0 / 60.0),
        (-2, 3.0 / 20.0),
        (-1, -3.0 / 4.0),
        (1, 3.0 / 4.0),
        (2, -3.0 / 20.0),
        (3, 1.0 / 60.0),
    ];
    match order {
        0..=2 => &O2,
        3 | 4 => &O4,
        _ => &O6,
    }
}

/// Nodes a stencil of `order` reaches on each side.
pub fn reach(order: usize) -> usize {
    stencil(order).iter().map(|s| s.0.unsigned_abs()).max().unwrap_or(1)
}

/// Central difference of `get` along `axis` at `idx`; `None` near the
/// boundary or when a neighbour is missing.
pub fn fd_with<T: Field>(
    grid: &GridSpec,
    idx: usize,
    axis: usize,
    order: usize,
    get: impl Fn(usize) -> Option<T>,
) -> Option<T> {
    let h = grid.h(axis);
    let mut acc: Option<T> = None;
    for &(off, w) in stencil(order) {
        let v = get(grid.shift(idx, axis, off)?)?;
        match acc.as_mut() {
            None => {
                let mut z = v.zero_like();
                z.axpy(w / h, &v);
                acc = Some(z);
            }
            Some(a) => a.axpy(w / h, &v),
        }
    }
    acc
}

pub fn fd<T: Field>(grid: &GridSpec, f: &[T], idx: usize, axis: usize, order: usize) -> Option<T> {
    fd_with(grid, idx, axis, order, |i| Some(f[i].clone()))
}

pub fn fd_opt<T: Field>(grid: &GridSpec, f: &[Option<T>], idx: usize, axis: usize, order: usize) -> Option<T> {
    fd_with(grid, idx, axis, order, |i| f[i].clone())
}

/// Derivative at `t = 0` of a smooth one-parameter function, fourth order.
pub fn ddt<T: Field>(eps: f64, f: impl Fn(f64) -> Result<T>) -> Result<T> {
    let mut acc: Option<T> = None;
    for &(off, w) in stencil(4) {
        let v = f(off as f64 * eps)?;
        match acc.as_mut() {
            None => {
                let mut z = v.zero_like();
                z.axpy(w / eps, &v);
                acc = Some(z);
            }
            Some(a) => a.axpy(w / eps, &v),
        }
    }
    Ok(acc.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let g = GridSpec::new(
            vec![Axis { min: 0.0, max: 1.0, steps: 4 }, Axis { min: -1.0, max: 1.0, steps: 5 }],
            vec![1, 2],
        )
        .unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index(&g.multi(i)), i);
        }
        assert_eq!(g.u(g.base_index()), vec![1.0 / 3.0, 0.0]);
    }

    #[test]
    fn sweep_visits_every_node_once() {
        let g = GridSpec::centered(3, 0.1, 5);
        let mut count = 0;
        let out = sweep(&g, 0usize, &[2, 0, 1], |s, _, _, _| {
            count += 1;
            Ok(s + 1)
        })
        .unwrap();
        assert_eq!(count, g.len() - 1);
        let far = g.index(&[0, 0, 0]);
        assert_eq!(out[far], 6);
    }

    #[test]
    fn refine_keeps_base_coordinates() {
        let g = GridSpec::centered(2, 0.02, 9);
        let f = g.refine();
        assert_eq!(f.u(f.base_index()), g.u(g.base_index()));
        assert!((f.h(0) - 0.01).abs() < 1e-15);
        assert_eq!(f.locate(&g, 7), Some(f.index(&[0, 14])));
    }
}
