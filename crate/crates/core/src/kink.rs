//! Nyström discretisation of kernels with an exponential kink on the diagonal,
//!
//! `K_{jm}(x, y) = c_j L_j(x) exp(-kappa_j |x - y|) R_{jm}(y)`,
//!
//! with product integration near the diagonal and a trace correction of the
//! determinant.

use rayon::prelude::*;

use crate::matdet::log_det;
use crate::quad::{gauss_legendre, NystromGrid, Rule};
use crate::{CMat, Error, Result, C64};

/// Product-integration weights for `int exp(-a |x_i - y|) f(y) dy`.
pub struct ProductRule<'g> {
    grid: &'g NystromGrid,
    ref_nodes: Vec<f64>,
    bary: Vec<f64>,
    sub_t: Vec<f64>,
    sub_w: Vec<f64>,
}

impl<'g> ProductRule<'g> {
    pub fn new(grid: &'g NystromGrid) -> Self {
        let per = grid.per_panel;
        let (ref_nodes, bary) = if grid.rule == Rule::GaussLegendreComposite {
            let (t, _) = gauss_legendre(per);
            let bary = (0..per)
                .map(|m| {
                    let mut p = 1.0;
                    for j in 0..per {
                        if j != m {
                            p *= t[m] - t[j];
                        }
                    }
                    1.0 / p
                })
                .collect();
            (t, bary)
        } else {
            (vec![], vec![])
        };
        let (sub_t, sub_w) = gauss_legendre(2 * per.clamp(1, 20));
        ProductRule { grid, ref_nodes, bary, sub_t, sub_w }
    }

    fn lagrange(&self, t: f64, out: &mut [f64]) {
        for (m, tm) in self.ref_nodes.iter().enumerate() {
            if t == *tm {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[m] = 1.0;
                return;
            }
        }
        let mut ell = 1.0;
        for tm in &self.ref_nodes {
            ell *= t - tm;
        }
        for (m, tm) in self.ref_nodes.iter().enumerate() {
            out[m] = ell * self.bary[m] / (t - tm);
        }
    }

    /// Row `i` of the weight matrix for decay rate `a`.
    pub fn row(&self, i: usize, a: C64) -> Vec<C64> {
        let g = self.grid;
        let x = g.nodes[i];
        let h = if g.edges.len() > 1 { g.edges[1] - g.edges[0] } else { 0.0 };
        let x_of = |p: usize| (g.edges[p] - x).max(x - g.edges[p + 1]).max(0.0);
        self.row_with(i, |y| (-a * (x - y).abs()).exp(), |p| a.norm() * h > 4.0 && a.re * x_of(p) < 40.0)
    }

    /// Row `i` of the weights for `int f(y) phi(y) dy`, with `f` resolved by a refined
    /// rule on the own and adjacent panels (split at `x_i` on the own panel) and on
    /// any panel selected by `extra`.
    pub fn row_with(&self, i: usize, f: impl Fn(f64) -> C64, extra: impl Fn(usize) -> bool) -> Vec<C64> {
        let g = self.grid;
        let x = g.nodes[i];
        let mut r: Vec<C64> = g.nodes.iter().zip(&g.weights).map(|(xl, wl)| f(*xl) * *wl).collect();
        if g.rule != Rule::GaussLegendreComposite {
            return r;
        }
        let per = g.per_panel;
        let panels = g.edges.len() - 1;
        let own = g.panel_of(i);
        let mut lag = vec![0.0; per];
        for p in 0..panels {
            let near = p + 1 >= own && p <= own + 1;
            if !(near || extra(p)) {
                continue;
            }
            let (lo, hi) = (g.edges[p], g.edges[p + 1]);
            let h = hi - lo;
            let mid = 0.5 * (lo + hi);
            let block = &mut r[p * per..(p + 1) * per];
            block.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            let pieces: &[(f64, f64)] = if p == own { &[(lo, x), (x, hi)] } else { &[(lo, hi)] };
            for &(a0, b0) in pieces {
                let half = 0.5 * (b0 - a0);
                if half <= 0.0 {
                    continue;
                }
                let c0 = 0.5 * (a0 + b0);
                for (ts, ws) in self.sub_t.iter().zip(&self.sub_w) {
                    let y = c0 + half * ts;
                    let fy = f(y) * (half * ws);
                    self.lagrange((y - mid) / (0.5 * h), &mut lag);
                    for (b, l) in block.iter_mut().zip(&lag) {
                        *b += fy * *l;
                    }
                }
            }
        }
        r
    }

    /// `int f(y) dy` with the refined rule near node `i`; `f` may have a kink at `x_i`.
    pub fn integrate_near(&self, i: usize, f: impl Fn(f64) -> C64) -> C64 {
        let g = self.grid;
        if g.rule != Rule::GaussLegendreComposite {
            return g.nodes.iter().zip(&g.weights).map(|(y, w)| f(*y) * *w).sum();
        }
        let x = g.nodes[i];
        let per = g.per_panel;
        let own = g.panel_of(i);
        let mut s = C64::new(0.0, 0.0);
        for p in 0..g.edges.len() - 1 {
            let near = p + 1 >= own && p <= own + 1;
            if !near {
                for l in p * per..(p + 1) * per {
                    s += f(g.nodes[l]) * g.weights[l];
                }
                continue;
            }
            let (lo, hi) = (g.edges[p], g.edges[p + 1]);
            let pieces: &[(f64, f64)] = if p == own { &[(lo, x), (x, hi)] } else { &[(lo, hi)] };
            for &(a0, b0) in pieces {
                let half = 0.5 * (b0 - a0);
                let c0 = 0.5 * (a0 + b0);
                for (ts, ws) in self.sub_t.iter().zip(&self.sub_w) {
                    s += f(c0 + half * ts) * (half * ws);
                }
            }
        }
        s
    }
}

/// Determinant of `I - K` for a scalar kernel that is smooth off the diagonal and
/// continuous across it, by product integration with the trace correction.
pub fn det_closure<K>(grid: &NystromGrid, kernel: &K, modified: bool) -> Result<C64>
where
    K: Fn(f64, f64) -> C64 + Sync,
{
    let n = grid.len();
    let rule = ProductRule::new(grid);
    let rows: Vec<Vec<C64>> =
        (0..n).into_par_iter().map(|i| rule.row_with(i, |y| kernel(grid.nodes[i], y), |_| false)).collect();
    let mut m = CMat::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for l in 0..n {
            m[(i, l)] = row[l];
        }
    }
    let ld = log_det(&(CMat::identity(n, n) - &m))?;
    if ld.zero {
        return Ok(C64::new(0.0, 0.0));
    }
    let tr_k: C64 = (0..n).map(|i| kernel(grid.nodes[i], grid.nodes[i]) * grid.weights[i]).sum();
    let mut log = ld.log;
    if grid.rule == Rule::GaussLegendreComposite {
        let tr_k2: C64 = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = grid.nodes[i];
                rule.integrate_near(i, |y| kernel(x, y) * kernel(y, x)) * grid.weights[i]
            })
            .sum();
        let tr_m2 = m.component_mul(&m.transpose()).sum();
        log += (m.trace() - tr_k) + 0.5 * (tr_m2 - tr_k2);
    }
    if modified {
        log += tr_k;
    }
    Ok(log.exp())
}

/// Multi-channel kernel `c_j L_j(x) exp(-kappa_j |x-y|) R_{jm}(y)` sampled on a grid.
#[derive(Debug, Clone)]
pub struct ExpKernel {
    pub rates: Vec<C64>,
    pub coef: Vec<C64>,
    /// `L_j` samples; `None` means `L_j = 1`.
    pub left: Option<Vec<Vec<C64>>>,
    /// `R_{jm}` samples; `None` marks a vanishing block.
    pub right: Vec<Vec<Option<Vec<C64>>>>,
}

impl ExpKernel {
    pub fn channels(&self) -> usize {
        self.rates.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        let nc = self.channels();
        if self.coef.len() != nc || self.right.len() != nc || self.right.iter().any(|r| r.len() != nc) {
            return Err(Error::pre("kernel channel data have inconsistent sizes"));
        }
        if let Some(l) = &self.left {
            if l.len() != nc || l.iter().any(|v| v.len() != n) {
                return Err(Error::pre("left factor samples do not match the grid"));
            }
        }
        for row in &self.right {
            for v in row.iter().flatten() {
                if v.len() != n {
                    return Err(Error::pre("right factor samples do not match the grid"));
                }
            }
        }
        if self.rates.iter().any(|k| !(k.re > 0.0)) {
            return Err(Error::pre("decay rates must have positive real part"));
        }
        Ok(())
    }

    fn left_at(&self, j: usize, i: usize) -> C64 {
        match &self.left {
            Some(l) => l[j][i],
            None => C64::new(1.0, 0.0),
        }
    }
}

/// Dense Nyström matrix of the kernel, channel-major.
pub fn assemble(grid: &NystromGrid, k: &ExpKernel) -> Result<CMat> {
    let n = grid.len();
    k.check(n)?;
    let nc = k.channels();
    let rule = ProductRule::new(grid);
    let rows: Vec<(usize, usize, Vec<C64>)> = (0..nc * n)
        .into_par_iter()
        .map(|ji| {
            let (j, i) = (ji / n, ji % n);
            (j, i, rule.row(i, k.rates[j]))
        })
        .collect();
    let mut m = CMat::zeros(nc * n, nc * n);
    for (j, i, g) in rows {
        let pre = k.coef[j] * k.left_at(j, i);
        for (mm, r) in k.right[j].iter().enumerate() {
            if let Some(r) = r {
                for l in 0..n {
                    m[(j * n + i, mm * n + l)] = pre * g[l] * r[l];
                }
            }
        }
    }
    Ok(m)
}

/// `tr K` by quadrature of the smooth diagonal.
pub fn trace_exact(grid: &NystromGrid, k: &ExpKernel) -> C64 {
    let n = grid.len();
    let mut s = C64::new(0.0, 0.0);
    for j in 0..k.channels() {
        if let Some(r) = &k.right[j][j] {
            let t: C64 = (0..n).map(|i| k.left_at(j, i) * r[i] * grid.weights[i]).sum();
            s += k.coef[j] * t;
        }
    }
    s
}

/// `tr K^2` with product integration of the inner variable.
pub fn trace_sq_exact(grid: &NystromGrid, k: &ExpKernel) -> C64 {
    let n = grid.len();
    let nc = k.channels();
    let rule = ProductRule::new(grid);
    let pairs: Vec<(usize, usize)> =
        (0..nc).flat_map(|j| (j..nc).map(move |m| (j, m))).collect();
    let parts: Vec<C64> = pairs
        .par_iter()
        .map(|&(j, m)| {
            let (rjm, rmj) = match (&k.right[j][m], &k.right[m][j]) {
                (Some(a), Some(b)) => (a, b),
                _ => return C64::new(0.0, 0.0),
            };
            let rate = k.rates[j] + k.rates[m];
            let inner: Vec<C64> = (0..n).map(|l| rjm[l] * k.left_at(m, l)).collect();
            let mut s = C64::new(0.0, 0.0);
            for i in 0..n {
                let g = rule.row(i, rate);
                let v: C64 = g.iter().zip(&inner).map(|(a, b)| a * b).sum();
                s += grid.weights[i] * k.left_at(j, i) * rmj[i] * v;
            }
            let s = s * k.coef[j] * k.coef[m];
            if j == m {
                s
            } else {
                s * 2.0
            }
        })
        .collect();
    parts.into_iter().sum()
}

/// Determinant of `I - K - E` from the Nyström matrix of `K` and an optional
/// smooth addition `E` (given directly as a matrix), corrected by the exact
/// first and second traces of `K`. `modified` multiplies by `exp(tr(K + E))`.
pub fn det_corrected(
    grid: &NystromGrid,
    k: &ExpKernel,
    extra: Option<&CMat>,
    modified: bool,
) -> Result<C64> {
    let mk = assemble(grid, k)?;
    det_corrected_with(grid, k, &mk, extra, modified)
}

/// As [`det_corrected`] with a precomputed matrix of `K`.
pub fn det_corrected_with(
    grid: &NystromGrid,
    k: &ExpKernel,
    mk: &CMat,
    extra: Option<&CMat>,
    modified: bool,
) -> Result<C64> {
    det_corrected_traced(grid, k, mk, extra, modified, None)
}

/// As [`det_corrected_with`], taking `tr K` from the caller when it is known
/// more accurately than the grid quadrature of the diagonal.
pub fn det_corrected_traced(
    grid: &NystromGrid,
    k: &ExpKernel,
    mk: &CMat,
    extra: Option<&CMat>,
    modified: bool,
    trace: Option<C64>,
) -> Result<C64> {
    let mut total = mk.clone();
    if let Some(e) = extra {
        if e.shape() != mk.shape() {
            return Err(Error::pre("additional matrix has the wrong shape"));
        }
        total += e;
    }
    let ld = log_det(&(CMat::identity(total.nrows(), total.ncols()) - &total))?;
    if ld.zero {
        return Ok(C64::new(0.0, 0.0));
    }
    let tr_k = trace.unwrap_or_else(|| trace_exact(grid, k));
    let mut log = ld.log;
    if grid.rule == Rule::GaussLegendreComposite {
        let tr_m = mk.trace();
        let tr_m2 = mk.component_mul(&mk.transpose()).sum();
        let tr_k2 = trace_sq_exact(grid, k);
        log += (tr_m - tr_k) + 0.5 * (tr_m2 - tr_k2);
    }
    if modified {
        log += tr_k;
        if let Some(e) = extra {
            log += e.trace();
        }
    }
    Ok(log.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;

    #[test]
    fn product_row_integrates_exponential() {
        let g = NystromGrid::gauss_legendre(5.0, 100, 10).unwrap();
        let rule = ProductRule::new(&g);
        let a = C64::new(2.0, 0.5);
        for &i in &[0usize, 37, 55, 99] {
            let x = g.nodes[i];
            let row = rule.row(i, a);
            let num: C64 = row.iter().zip(&g.nodes).map(|(w, y)| w * y.cos()).sum();
            // int_{-5}^{5} exp(-a|x-y|) cos y dy in closed form
            let f = |s: f64, sign: f64| {
                // antiderivative of exp(sign * a (y - x)) cos y
                let b = a * sign;
                let y = s;
                (b * (b * (y - x)).exp() * y.cos() + (b * (y - x)).exp() * y.sin()) / (b * b + 1.0)
            };
            let left = f(x, 1.0) - f(-5.0, 1.0);
            let right = f(5.0, -1.0) - f(x, -1.0);
            assert!((num - (left + right)).norm() < 1e-12, "{i}: {}", (num - left - right).norm());
        }
    }

    #[test]
    fn zero_kernel_has_unit_determinant() {
        let g = NystromGrid::gauss_legendre(5.0, 40, 10).unwrap();
        let k = ExpKernel {
            rates: vec![c(1.0)],
            coef: vec![c(-0.5)],
            left: None,
            right: vec![vec![Some(vec![c(0.0); 40])]],
        };
        let d = det_corrected(&g, &k, None, true).unwrap();
        assert!((d - c(1.0)).norm() < 1e-14);
    }
}
