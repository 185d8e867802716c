//! Quadrature rules and small interpolation helpers.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Quadrature family used by [`NystromGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    GaussLegendreComposite,
    Trapezoid,
}

/// Nodes and weights for discretising integral operators on `[a, b]`.
#[derive(Debug, Clone)]
pub struct NystromGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub rule: Rule,
    /// Panel edges (composite rule only; a single panel for the trapezoid rule).
    pub edges: Vec<f64>,
    /// Nodes per panel.
    pub per_panel: usize,
}

impl NystromGrid {
    /// Composite Gauss–Legendre with `per_panel` points on equal panels of `[-x_max, x_max]`.
    pub fn gauss_legendre(x_max: f64, n_nodes: usize, per_panel: usize) -> Result<Self> {
        Self::gauss_legendre_on(-x_max, x_max, n_nodes, per_panel)
    }

    pub fn gauss_legendre_on(a: f64, b: f64, n_nodes: usize, per_panel: usize) -> Result<Self> {
        if per_panel == 0 || n_nodes == 0 || n_nodes % per_panel != 0 || !(b > a) {
            return Err(Error::pre(format!(
                "node count {n_nodes} must be a positive multiple of the panel size {per_panel}"
            )));
        }
        let panels = n_nodes / per_panel;
        let (t, wt) = gauss_legendre(per_panel);
        let h = (b - a) / panels as f64;
        let edges: Vec<f64> = (0..=panels).map(|p| a + h * p as f64).collect();
        let mut nodes = Vec::with_capacity(n_nodes);
        let mut weights = Vec::with_capacity(n_nodes);
        for p in 0..panels {
            let mid = 0.5 * (edges[p] + edges[p + 1]);
            for (ti, wi) in t.iter().zip(&wt) {
                nodes.push(mid + 0.5 * h * ti);
                weights.push(0.5 * h * wi);
            }
        }
        Ok(NystromGrid { nodes, weights, rule: Rule::GaussLegendreComposite, edges, per_panel })
    }

    /// Trapezoid rule on `n` equispaced nodes of `[-x_max, x_max]`.
    pub fn trapezoid(x_max: f64, n: usize) -> Result<Self> {
        if n < 2 || !(x_max > 0.0) {
            return Err(Error::pre("trapezoid grid needs at least two nodes"));
        }
        let nodes = uniform(-x_max, x_max, n);
        let h = nodes[1] - nodes[0];
        let mut weights = vec![h; n];
        weights[0] *= 0.5;
        weights[n - 1] *= 0.5;
        Ok(NystromGrid { nodes, weights, rule: Rule::Trapezoid, edges: vec![-x_max, x_max], per_panel: n })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }

    /// Panel index of node `i` (composite rule).
    pub fn panel_of(&self, i: usize) -> usize {
        i / self.per_panel
    }
}

/// `n` equispaced points from `a` to `b` inclusive.
pub fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { b } else { a + h * i as f64 }).collect()
}

/// Trapezoid rule for equispaced samples.
pub fn trapz<T>(h: f64, f: &[T]) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    let n = f.len();
    if n < 2 {
        return T::default();
    }
    let mut s = (f[0] + f[n - 1]) * 0.5;
    for v in &f[1..n - 1] {
        s = s + *v;
    }
    s * h
}

/// Composite Simpson rule for an odd number of equispaced samples.
pub fn simpson<T>(h: f64, f: &[T]) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    let n = f.len();
    assert!(n % 2 == 1, "simpson needs an odd sample count");
    if n < 3 {
        return T::default();
    }
    let mut s = f[0] + f[n - 1];
    for (i, v) in f.iter().enumerate().take(n - 1).skip(1) {
        s = s + *v * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * (h / 3.0)
}

/// Natural cubic spline through `(x_i, y_i)` with strictly increasing `x`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(Error::pre("spline needs at least three points of matching length"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::pre("spline abscissae must be strictly increasing"));
        }
        // tridiagonal solve for second derivatives, natural end conditions
        let mut a = vec![0.0; n];
        let mut b = vec![1.0; n];
        let mut cc = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            a[i] = h0 / 6.0;
            b[i] = (h0 + h1) / 3.0;
            cc[i] = h1 / 6.0;
            d[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        }
        for i in 1..n {
            let w = a[i] / b[i - 1];
            b[i] -= w * cc[i - 1];
            d[i] -= w * d[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = d[n - 1] / b[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (d[i] - cc[i] * m[i + 1]) / b[i];
        }
        Ok(CubicSpline { x, y, m })
    }

    fn locate(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.clamp(1, n - 1) - 1,
        }
    }

    /// Value at `t`; constant extrapolation of the end values outside the table.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.x.len();
        let t = t.clamp(self.x[0], self.x[n - 1]);
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * self.m[i]
            + (3.0 * b * b - 1.0) / 6.0 * h * self.m[i + 1]
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composite_weights_sum_to_length() {
        let g = NystromGrid::gauss_legendre(20.0, 400, 10).unwrap();
        assert!((g.weights.iter().sum::<f64>() - 40.0).abs() < 1e-12);
        assert!(g.weights.iter().all(|w| *w > 0.0));
        let t = NystromGrid::trapezoid(20.0, 401).unwrap();
        assert!((t.weights.iter().sum::<f64>() - 40.0).abs() < 1e-12);
    }

    #[test]
    fn spline_reproduces_smooth_function() {
        let x = uniform(-3.0, 3.0, 601);
        let y: Vec<f64> = x.iter().map(|t| t.sin()).collect();
        let s = CubicSpline::new(x, y).unwrap();
        for t in [-2.5, -0.123, 0.7, 2.9] {
            assert!((s.eval(t) - f64::sin(t)).abs() < 1e-8);
            assert!((s.derivative(t) - f64::cos(t)).abs() < 1e-5);
        }
    }
}
