//! Determinants of semi-separable kernels
//!
//! `K(x, x') = F1(x) G1(x')^T` for `x' > x`, `F2(x) G2(x')^T` for `x' < x`,
//!
//! through a linear first-order system for an `r`-dimensional frame.
//!
//! Factors are stored as bounded profiles with per-column exponential rates:
//! `F1 = P1 e^{mu x}`, `G1 = Q1 e^{-mu x}`, `F2 = P2 e^{-mu x}`, `G2 = Q2 e^{mu x}`.
//! With all rates zero the profiles are the factors themselves.

use nalgebra::linalg::QR;
use serde::Serialize;

use crate::quad::simpson;
use crate::{c, CMat, Error, Result, C64};

/// Matrix-valued semi-separable kernel sampled on a uniform grid with an odd node count.
#[derive(Debug, Clone)]
pub struct SemiSeparableKernel {
    pub x: Vec<f64>,
    pub block_dim: usize,
    pub n_out: usize,
    pub mu: Vec<C64>,
    pub p1: Vec<CMat>,
    pub q1: Vec<CMat>,
    pub p2: Vec<CMat>,
    pub q2: Vec<CMat>,
}

impl SemiSeparableKernel {
    pub fn new(
        x: Vec<f64>,
        mu: Vec<C64>,
        p1: Vec<CMat>,
        q1: Vec<CMat>,
        p2: Vec<CMat>,
        q2: Vec<CMat>,
    ) -> Result<Self> {
        let n = x.len();
        if n < 3 || n % 2 == 0 {
            return Err(Error::pre("semi-separable grid needs an odd number of at least 3 nodes"));
        }
        let h = x[1] - x[0];
        if !(h > 0.0) || x.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0)) {
            return Err(Error::pre("semi-separable grid must be uniform and increasing"));
        }
        if [&p1, &q1, &p2, &q2].iter().any(|v| v.len() != n) {
            return Err(Error::pre("dimension mismatch: factor samples and grid differ in length"));
        }
        let (n_out, r) = p1[0].shape();
        if mu.len() != r {
            return Err(Error::pre("dimension mismatch: one rate per column is required"));
        }
        for v in [&p1, &q1, &p2, &q2] {
            for m in v.iter() {
                if m.shape() != (n_out, r) {
                    return Err(Error::pre("dimension mismatch between factor samples"));
                }
                if m.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
                    return Err(Error::pre("factor samples must be finite"));
                }
            }
        }
        Ok(SemiSeparableKernel { x, block_dim: r, n_out, mu, p1, q1, p2, q2 })
    }

    /// Profiles from a function returning `[P1, Q1, P2, Q2]` at `x`.
    pub fn from_fn(x: Vec<f64>, mu: Vec<C64>, f: impl Fn(f64) -> [CMat; 4]) -> Result<Self> {
        let mut p1 = Vec::with_capacity(x.len());
        let mut q1 = Vec::with_capacity(x.len());
        let mut p2 = Vec::with_capacity(x.len());
        let mut q2 = Vec::with_capacity(x.len());
        for xi in &x {
            let [a, b, cc, d] = f(*xi);
            p1.push(a);
            q1.push(b);
            p2.push(cc);
            q2.push(d);
        }
        Self::new(x, mu, p1, q1, p2, q2)
    }

    pub fn zero(x: Vec<f64>, n_out: usize, r: usize) -> Result<Self> {
        let z = CMat::zeros(n_out, r);
        Self::from_fn(x, vec![c(0.0); r], |_| [z.clone(), z.clone(), z.clone(), z.clone()])
    }

    fn h(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    /// Kernel value `K(x_i, x_j)`; on the diagonal the mean of both sides.
    pub fn kernel(&self, i: usize, j: usize) -> CMat {
        let d = self.x[i] - self.x[j];
        let upper = || {
            let e = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
                self.block_dim,
                self.mu.iter().map(|m| (m * d).exp()),
            ));
            &self.p1[i] * e * self.q1[j].transpose()
        };
        let lower = || {
            let e = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
                self.block_dim,
                self.mu.iter().map(|m| (-m * d).exp()),
            ));
            &self.p2[i] * e * self.q2[j].transpose()
        };
        if j > i {
            upper()
        } else if j < i {
            lower()
        } else {
            (upper() + lower()) * c(0.5)
        }
    }

    /// `int tr K(x, x) dx` by Simpson's rule.
    pub fn trace_integral(&self) -> C64 {
        let d: Vec<C64> = (0..self.x.len()).map(|i| (&self.p1[i] * self.q1[i].transpose()).trace()).collect();
        simpson(self.h(), &d)
    }
}

/// First-order system `V' = (diag(lambda) + core(x)) V` for the frame.
#[derive(Debug, Clone, Serialize)]
pub struct ReductionODE {
    pub x: Vec<f64>,
    /// Constant diagonal part, `(-mu, mu)` when preconditioned.
    pub lambda: Vec<C64>,
    /// Remaining coefficient samples.
    #[serde(skip)]
    pub core: Vec<CMat>,
    pub preconditioned: bool,
    /// `sum mu` (zero without preconditioning).
    pub rate_sum: C64,
    /// Largest entry modulus of the full coefficient over the grid.
    pub sup_norm: f64,
}

impl ReductionODE {
    /// System with given samples.
    pub fn from_samples(x: Vec<f64>, lambda: Vec<C64>, core: Vec<CMat>) -> Result<Self> {
        if core.len() != x.len() || core.iter().any(|m| m.shape() != (lambda.len(), lambda.len())) {
            return Err(Error::pre("dimension mismatch in system samples"));
        }
        let sup = sup_norm(&lambda, &core);
        Ok(ReductionODE { x, lambda, core, preconditioned: false, rate_sum: c(0.0), sup_norm: sup })
    }

    /// Full coefficient at node `i`.
    pub fn bounded_matrix(&self, i: usize) -> CMat {
        let mut a = self.core[i].clone();
        for (p, l) in self.lambda.iter().enumerate() {
            a[(p, p)] += l;
        }
        a
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }
}

fn sup_norm(lambda: &[C64], core: &[CMat]) -> f64 {
    let mut s: f64 = 0.0;
    for m in core {
        for p in 0..m.nrows() {
            for q in 0..m.ncols() {
                let v = if p == q { m[(p, q)] + lambda[p] } else { m[(p, q)] };
                s = s.max(v.norm());
            }
        }
    }
    s
}

/// Assemble `A = [[G2^T F2, G2^T F1], [-G1^T F2, -G1^T F1]]`, optionally conjugated
/// by the exponential scaling so that its coefficients stay bounded.
pub fn build_reduction(k: &SemiSeparableKernel, precondition: bool) -> Result<ReductionODE> {
    let r = k.block_dim;
    let n = k.x.len();
    let mut core = Vec::with_capacity(n);
    let assemble = |p1: &CMat, q1: &CMat, p2: &CMat, q2: &CMat| {
        let mut a = CMat::zeros(2 * r, 2 * r);
        a.view_mut((0, 0), (r, r)).copy_from(&(q2.transpose() * p2));
        a.view_mut((0, r), (r, r)).copy_from(&(q2.transpose() * p1));
        a.view_mut((r, 0), (r, r)).copy_from(&(-(q1.transpose() * p2)));
        a.view_mut((r, r), (r, r)).copy_from(&(-(q1.transpose() * p1)));
        a
    };
    if precondition {
        for i in 0..n {
            core.push(assemble(&k.p1[i], &k.q1[i], &k.p2[i], &k.q2[i]));
        }
        let mut lambda: Vec<C64> = k.mu.iter().map(|m| -m).collect();
        lambda.extend(k.mu.iter().cloned());
        let sup = sup_norm(&lambda, &core);
        let rate_sum = k.mu.iter().sum();
        return Ok(ReductionODE { x: k.x.clone(), lambda, core, preconditioned: true, rate_sum, sup_norm: sup });
    }
    for i in 0..n {
        let x = k.x[i];
        let ep = CMat::from_diagonal(&nalgebra::DVector::from_iterator(r, k.mu.iter().map(|m| (m * x).exp())));
        let em = CMat::from_diagonal(&nalgebra::DVector::from_iterator(r, k.mu.iter().map(|m| (-m * x).exp())));
        let f1 = &k.p1[i] * &ep;
        let g1 = &k.q1[i] * &em;
        let f2 = &k.p2[i] * &em;
        let g2 = &k.q2[i] * &ep;
        let a = assemble(&f1, &g1, &f2, &g2);
        if a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::num("unpreconditioned coefficients overflow; enable preconditioning"));
        }
        core.push(a);
    }
    let lambda = vec![c(0.0); 2 * r];
    let sup = sup_norm(&lambda, &core);
    Ok(ReductionODE { x: k.x.clone(), lambda, core, preconditioned: false, rate_sum: c(0.0), sup_norm: sup })
}

fn conj_core(core: &CMat, lambda: &[C64], t: C64) -> CMat {
    // exp(-L t) core exp(L t)
    let mut b = core.clone();
    for p in 0..b.nrows() {
        for q in 0..b.ncols() {
            if b[(p, q)] != c(0.0) {
                b[(p, q)] *= ((lambda[q] - lambda[p]) * t).exp();
            }
        }
    }
    b
}

/// One step of the integrating-factor RK4 scheme over `[x0, x0 + h]`.
pub(crate) fn lawson_step(u: &CMat, lambda: &[C64], a0: &CMat, am: &CMat, a1: &CMat, h: f64) -> CMat {
    let hc = c(h);
    let b0 = a0;
    let bm = conj_core(am, lambda, hc * 0.5);
    let b1 = conj_core(a1, lambda, hc);
    let k1 = b0 * u;
    let k2 = &bm * (u + &k1 * c(h * 0.5));
    let k3 = &bm * (u + &k2 * c(h * 0.5));
    let k4 = &b1 * (u + &k3 * hc);
    let mut y = u + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0);
    for p in 0..y.nrows() {
        let e = (lambda[p] * h).exp();
        for q in 0..y.ncols() {
            y[(p, q)] *= e;
        }
    }
    y
}

const OVERFLOW_GUARD: f64 = 1e150;

/// Fundamental matrix of `V' = A_b V` from the identity at `x_span.0` to `x_span.1`,
/// with coefficients linearly interpolated between nodes.
pub fn solve_fundamental(r: &ReductionODE, x_span: (f64, f64), steps: usize) -> Result<Vec<CMat>> {
    if steps == 0 {
        return Err(Error::pre("at least one step is required"));
    }
    let (lo, hi) = (r.x[0], r.x[r.x.len() - 1]);
    for x in [x_span.0, x_span.1] {
        if x < lo - 1e-12 || x > hi + 1e-12 {
            return Err(Error::pre("integration interval leaves the grid"));
        }
    }
    let coef = |x: f64| -> CMat {
        let n = r.x.len();
        let hgrid = r.x[1] - r.x[0];
        let t = ((x - lo) / hgrid).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        let f = t - i as f64;
        &r.core[i] * c(1.0 - f) + &r.core[i + 1] * c(f)
    };
    let dim = r.dim();
    let h = (x_span.1 - x_span.0) / steps as f64;
    let mut v = CMat::identity(dim, dim);
    let mut path = vec![v.clone()];
    for s in 0..steps {
        let x0 = x_span.0 + h * s as f64;
        v = lawson_step(&v, &r.lambda, &coef(x0), &coef(x0 + 0.5 * h), &coef(x0 + h), h);
        if v.iter().any(|a| !(a.norm() < OVERFLOW_GUARD)) {
            return Err(Error::num("step instability: frame norm exceeded the overflow guard; use a smaller step"));
        }
        path.push(v.clone());
    }
    Ok(path)
}

/// Which frame is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Route {
    /// Start from `[I; 0]` at the right end, read the top block at the left end.
    Backward,
    /// Start from `[0; I]` at the left end, read the bottom block at the right end.
    Forward,
}

/// Propagate the `2r x r` frame with node stride `stride`; returns the final frame and the
/// accumulated `log det R` of the re-orthonormalisations.
fn propagate(ode: &ReductionODE, route: Route, stride: usize) -> Result<(CMat, C64)> {
    let n = ode.x.len();
    let dim = ode.dim();
    let r = dim / 2;
    let mut u = CMat::zeros(dim, r);
    let off = if route == Route::Backward { 0 } else { r };
    for j in 0..r {
        u[(off + j, j)] = c(1.0);
    }
    let mut log = c(0.0);
    let steps = (n - 1) / (2 * stride);
    for s in 0..steps {
        let (a, b, e) = match route {
            Route::Backward => {
                let a = n - 1 - 2 * stride * s;
                (a, a - stride, a - 2 * stride)
            }
            Route::Forward => {
                let a = 2 * stride * s;
                (a, a + stride, a + 2 * stride)
            }
        };
        let h = ode.x[e] - ode.x[a];
        u = lawson_step(&u, &ode.lambda, &ode.core[a], &ode.core[b], &ode.core[e], h);
        let qr = QR::new(u);
        let rr = qr.r();
        for j in 0..r {
            log += rr[(j, j)].ln();
        }
        u = qr.q();
        if u.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) || !log.re.is_finite() {
            return Err(Error::num("nonsingularity failure of the fundamental solution"));
        }
    }
    Ok((u, log))
}

fn route_det(ode: &ReductionODE, route: Route, stride: usize) -> Result<C64> {
    let (u, log) = propagate(ode, route, stride)?;
    let r = ode.dim() / 2;
    let block = match route {
        Route::Backward => u.view((0, 0), (r, r)).into_owned(),
        Route::Forward => u.view((r, 0), (r, r)).into_owned(),
    };
    let ld = crate::matdet::log_det(&block)?;
    if ld.zero {
        return Ok(c(0.0));
    }
    let span = ode.x[ode.x.len() - 1] - ode.x[0];
    Ok((ld.log + log - ode.rate_sum * span).exp())
}

/// Reduced determinant of `I - K` from a prepared system.
pub fn det_from_reduction(ode: &ReductionODE, route: Route) -> Result<C64> {
    let n = ode.x.len();
    let fine = route_det(ode, route, 1)?;
    if (n - 1) % 4 != 0 || fine == c(0.0) {
        return Ok(fine);
    }
    let coarse = route_det(ode, route, 2)?;
    // fourth-order extrapolation over the two step sizes
    Ok(fine * (c(16.0) - coarse / fine) / 15.0)
}

/// `det(I - K)` (or `det2` when `modified`) through the preconditioned backward route.
pub fn det_semiseparable(k: &SemiSeparableKernel, modified: bool) -> Result<C64> {
    det_semiseparable_with(k, modified, Route::Backward, true)
}

pub fn det_semiseparable_with(
    k: &SemiSeparableKernel,
    modified: bool,
    route: Route,
    precondition: bool,
) -> Result<C64> {
    let ode = build_reduction(k, precondition)?;
    let d = det_from_reduction(&ode, route)?;
    Ok(if modified { d * k.trace_integral().exp() } else { d })
}

/// Unnormalised solutions of the Volterra equations
/// `f^(x) = F2(x) - int_x^b [F2(x)G2(x')^T - F1(x)G1(x')^T] f^(x') dx'`
/// obtained from the backward frame; one `n_out x r` matrix per node.
pub fn hat_solution(k: &SemiSeparableKernel) -> Result<Vec<CMat>> {
    let ode = build_reduction(k, false)?;
    let n = k.x.len();
    let r = k.block_dim;
    let mut v = CMat::zeros(2 * r, r);
    for j in 0..r {
        v[(j, j)] = c(1.0);
    }
    let mut frames = vec![CMat::zeros(2 * r, r); n];
    frames[n - 1] = v.clone();
    for i in (0..n - 1).rev() {
        let h = k.x[i] - k.x[i + 1];
        let am = mid_core(&ode.core, i);
        v = lawson_step(&v, &ode.lambda, &ode.core[i + 1], &am, &ode.core[i], h);
        frames[i] = v.clone();
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = k.x[i];
        let ep = CMat::from_diagonal(&nalgebra::DVector::from_iterator(r, k.mu.iter().map(|m| (m * x).exp())));
        let em = CMat::from_diagonal(&nalgebra::DVector::from_iterator(r, k.mu.iter().map(|m| (-m * x).exp())));
        let f1 = &k.p1[i] * ep;
        let f2 = &k.p2[i] * em;
        let top = frames[i].view((0, 0), (r, r)).into_owned();
        let bot = frames[i].view((r, 0), (r, r)).into_owned();
        out.push(f2 * top + f1 * bot);
    }
    Ok(out)
}

/// Cubic interpolant of the samples at the midpoint of `[x_i, x_{i+1}]`.
fn mid_core(core: &[CMat], i: usize) -> CMat {
    let n = core.len();
    if n < 4 {
        return (&core[i] + &core[i + 1]) * c(0.5);
    }
    let (j, w) = if i == 0 {
        (0, [5.0, 15.0, -5.0, 1.0])
    } else if i + 2 >= n {
        (n - 4, [1.0, -5.0, 15.0, 5.0])
    } else {
        (i - 1, [-1.0, 9.0, 9.0, -1.0])
    };
    (0..4).fold(CMat::zeros(core[i].nrows(), core[i].ncols()), |acc, q| acc + &core[j + q] * c(w[q] / 16.0))
}

/// Largest relative residual of the Volterra equations satisfied by [`hat_solution`],
/// checked by Simpson's rule at every second node.
pub fn hat_residual(k: &SemiSeparableKernel) -> Result<f64> {
    let f = hat_solution(k)?;
    let n = k.x.len();
    let r = k.block_dim;
    let h = k.h();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 1e-300;
    let factors = |i: usize| {
        let x = k.x[i];
        let ep = CMat::from_diagonal(&nalgebra::DVector::from_iterator(r, k.mu.iter().map(|m| (m * x).exp())));
        let em = CMat::from_diagonal(&nalgebra::DVector::from_iterator(r, k.mu.iter().map(|m| (-m * x).exp())));
        (&k.p1[i] * &ep, &k.q1[i] * &em, &k.p2[i] * &em, &k.q2[i] * &ep)
    };
    let all: Vec<_> = (0..n).map(factors).collect();
    for i in (0..n).rev().step_by(2) {
        let (f1, _, f2, _) = &all[i];
        let g2f: Vec<CMat> = (i..n).map(|j| all[j].3.transpose() * &f[j]).collect();
        let g1f: Vec<CMat> = (i..n).map(|j| all[j].1.transpose() * &f[j]).collect();
        let rhs = f2 - f2 * simpson_mat(h, &g2f) + f1 * simpson_mat(h, &g1f);
        worst = worst.max((&f[i] - rhs).norm());
        scale = scale.max(f[i].norm());
    }
    Ok(worst / scale)
}

fn simpson_mat(h: f64, v: &[CMat]) -> CMat {
    let n = v.len();
    let mut s = CMat::zeros(v[0].nrows(), v[0].ncols());
    if n < 3 {
        return s;
    }
    for (i, m) in v.iter().enumerate() {
        let w = if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += m * c(w);
    }
    s * c(h / 3.0)
}
