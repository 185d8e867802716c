//! Finite-dimensional determinants and the perturbation expansions of
//! `det(I - A(z))` and `det2(I - A(z))` around `z = 0`.

use rayon::prelude::*;
use serde::Serialize;

use crate::{c, CMat, CVec, Error, NumericPolicy, Result, C64, I};

/// Logarithm of a determinant, kept separate from its exponential so that
/// very large or very small values survive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    /// Sum of logarithms of the pivots (imaginary part carries the phase).
    pub log: C64,
    /// True when an exactly zero pivot was met.
    pub zero: bool,
}

impl LogDet {
    pub fn value(&self) -> C64 {
        if self.zero {
            C64::new(0.0, 0.0)
        } else {
            self.log.exp()
        }
    }
}

fn require_square(m: &CMat) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::pre(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::pre("matrix has non-finite entries"));
    }
    Ok(())
}

/// LU factorisation with partial pivoting, accumulating `log det`.
pub fn log_det(m: &CMat) -> Result<LogDet> {
    require_square(m)?;
    let n = m.nrows();
    let mut a = m.clone();
    let data = a.as_mut_slice();
    let mut log = C64::new(0.0, 0.0);
    let mut mult = vec![C64::new(0.0, 0.0); n];
    for k in 0..n {
        let col = &data[k * n..(k + 1) * n];
        let mut p = k;
        let mut best = col[k].norm();
        for (r, v) in col.iter().enumerate().skip(k + 1) {
            let a = v.norm();
            if a > best {
                best = a;
                p = r;
            }
        }
        if best == 0.0 {
            return Ok(LogDet { log, zero: true });
        }
        if p != k {
            for cidx in k..n {
                data.swap(cidx * n + k, cidx * n + p);
            }
            log += C64::new(0.0, std::f64::consts::PI);
        }
        let piv = data[k * n + k];
        log += piv.ln();
        let inv = piv.inv();
        for r in k + 1..n {
            mult[r] = data[k * n + r] * inv;
        }
        let f = &mult[k + 1..n];
        let update = |colv: &mut [C64]| {
            let u = colv[k];
            if u != C64::new(0.0, 0.0) {
                for (x, fr) in colv[k + 1..].iter_mut().zip(f) {
                    *x -= fr * u;
                }
            }
        };
        let trailing = &mut data[(k + 1) * n..];
        if (n - k) * (n - k) > 40_000 {
            trailing.par_chunks_mut(n).for_each(update);
        } else {
            trailing.chunks_mut(n).for_each(update);
        }
    }
    // fold the phase into (-pi, pi]
    let im = log.im.rem_euclid(2.0 * std::f64::consts::PI);
    let im = if im > std::f64::consts::PI { im - 2.0 * std::f64::consts::PI } else { im };
    Ok(LogDet { log: C64::new(log.re, im), zero: false })
}

/// Determinant of a square matrix.
pub fn det(m: &CMat) -> Result<C64> {
    Ok(log_det(m)?.value())
}

fn identity_minus(a: &CMat) -> CMat {
    CMat::identity(a.nrows(), a.ncols()) - a
}

/// `(det(I - A), det2(I - A))` with `det2(I - A) = det(I - A) exp(tr A)`.
pub fn det_and_det2(a: &CMat) -> Result<(C64, C64)> {
    require_square(a)?;
    let ld = log_det(&identity_minus(a))?;
    let d = ld.value();
    let d2 = if ld.zero { d } else { (ld.log + a.trace()).exp() };
    Ok((d, d2))
}

/// `det(I - A)`.
pub fn det_i_minus(a: &CMat) -> Result<C64> {
    Ok(det_and_det2(a)?.0)
}

/// Sum of singular values.
pub fn trace_norm(a: &CMat) -> f64 {
    svd(a).s.iter().sum()
}

/// Largest over smallest singular value.
pub fn condition_number(a: &CMat) -> f64 {
    let s = svd(a).s;
    let mx = s.iter().cloned().fold(0.0, f64::max);
    let mn = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if mn == 0.0 {
        f64::INFINITY
    } else {
        mx / mn
    }
}

/// Eigenvalues of a complex matrix through the Schur form.
pub fn eigenvalues(a: &CMat) -> Result<Vec<C64>> {
    require_square(a)?;
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::num("Schur iteration did not converge"))?;
    let t = schur.unpack().1;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// A polynomial family `A(z) = A0 + A1 z + A2 z^2 + ...`.
#[derive(Debug, Clone)]
pub struct AnalyticMatrixFamily {
    pub coefficients: Vec<CMat>,
    pub radius: f64,
}

impl AnalyticMatrixFamily {
    pub fn new(coefficients: Vec<CMat>, radius: f64) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(Error::pre("a family needs at least A0 and A1"));
        }
        let n = coefficients[0].nrows();
        for m in &coefficients {
            require_square(m)?;
            if m.nrows() != n {
                return Err(Error::pre("family coefficients differ in dimension"));
            }
        }
        if !(radius > 0.0) {
            return Err(Error::pre("radius must be positive"));
        }
        Ok(AnalyticMatrixFamily { coefficients, radius })
    }

    pub fn dim(&self) -> usize {
        self.coefficients[0].nrows()
    }

    pub fn eval(&self, z: C64) -> CMat {
        let mut acc = self.coefficients[self.coefficients.len() - 1].clone();
        for m in self.coefficients.iter().rev().skip(1) {
            acc = acc * z + m;
        }
        acc
    }

    pub fn a0(&self) -> &CMat {
        &self.coefficients[0]
    }

    pub fn a1(&self) -> &CMat {
        &self.coefficients[1]
    }
}

/// Spectral data of `A0` near an isolated eigenvalue.
#[derive(Debug, Clone)]
pub struct RieszData {
    pub projection: CMat,
    pub nilpotent: CMat,
    pub n0: usize,
    pub nu0: usize,
    pub complement_projection: CMat,
    pub center: C64,
    /// Contour nodes actually used.
    pub nodes: usize,
}

/// Riesz projection onto the generalised eigenspace inside the circle
/// `|zeta - center| = radius`, by the trapezoid rule on the circle.
///
/// `nodes` is the starting count; it is doubled until `trace(P0)` lies
/// within `policy.trace_int_tol` of an integer.
pub fn riesz_projection(
    a0: &CMat,
    center: C64,
    radius: f64,
    nodes: usize,
    policy: &NumericPolicy,
) -> Result<RieszData> {
    require_square(a0)?;
    if !(radius > 0.0) || nodes < 4 {
        return Err(Error::pre("radius must be positive and nodes at least 4"));
    }
    let n = a0.nrows();
    let ev = eigenvalues(a0)?;
    let scale = radius.max(1.0);
    if ev.iter().any(|l| ((l - center).norm() - radius).abs() < policy.tol_circle * scale) {
        return Err(Error::pre("contour through spectrum"));
    }
    let mut m = nodes;
    loop {
        let mut p = CMat::zeros(n, n);
        for j in 0..m {
            let e = (I * (2.0 * std::f64::consts::PI * j as f64 / m as f64)).exp();
            let zeta = center + e * radius;
            let shifted = a0 - CMat::identity(n, n) * zeta;
            let inv = shifted
                .try_inverse()
                .ok_or_else(|| Error::pre("contour through spectrum"))?;
            p -= inv * (e * radius / m as f64);
        }
        let tr = p.trace();
        let n0f = tr.re.round();
        if (tr - c(n0f)).norm() <= policy.trace_int_tol {
            let d0 = (a0 - CMat::identity(n, n) * center) * &p;
            let n0 = n0f.max(0.0) as usize;
            let nu0 = numerical_rank(&d0, rank_threshold(&d0, a0, policy))?;
            let q0 = CMat::identity(n, n) - &p;
            return Ok(RieszData {
                projection: p,
                nilpotent: d0,
                n0,
                nu0,
                complement_projection: q0,
                center,
                nodes: m,
            });
        }
        if m >= 1 << 16 {
            return Err(Error::num("contour resolution insufficient"));
        }
        m *= 2;
    }
}

fn rank_threshold(d0: &CMat, a0: &CMat, policy: &NumericPolicy) -> f64 {
    // relative to the larger of |D0| and |A0| so that a vanishing D0 reads as rank 0
    policy.rank_tol * d0.norm().max(a0.norm()).max(1.0)
}

/// Rank by singular-value thresholding; refuses values in the ambiguous band `(tol, 1e3 tol)`.
pub fn numerical_rank(m: &CMat, tol: f64) -> Result<usize> {
    if m.nrows() == 0 {
        return Ok(0);
    }
    let s = svd(m).s;
    if s.iter().any(|v| *v > tol && *v < 1e3 * tol) {
        return Err(Error::num(
            "nilpotent structure is ambiguous: singular values do not separate cleanly",
        ));
    }
    Ok(s.iter().filter(|v| **v > tol).count())
}

/// Output of the expansions.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionResult {
    /// Order of the first nonvanishing Taylor coefficient.
    pub order: usize,
    /// That coefficient.
    pub leading_coefficient: C64,
    /// Estimated magnitude of the next coefficient.
    pub next_order_bound: f64,
}

/// Expansion at a point where `I - A0` is invertible.
pub fn expansion_regular(
    fam: &AnalyticMatrixFamily,
    modified: bool,
    policy: &NumericPolicy,
) -> Result<ExpansionResult> {
    let n = fam.dim();
    let a0 = fam.a0();
    let ima = identity_minus(a0);
    if condition_number(&ima) > policy.cond_max {
        return Err(Error::pre("I - A0 is singular; use expansion_singular"));
    }
    let (d, d2) = det_and_det2(a0)?;
    let inv = ima.try_inverse().ok_or_else(|| Error::pre("I - A0 is singular; use expansion_singular"))?;
    let (c0, c1) = if modified {
        (d2, -d2 * (inv * a0 * fam.a1()).trace())
    } else {
        (d, -d * (inv * fam.a1()).trace())
    };
    let _ = n;
    let next = next_coefficient_estimate(fam, modified, 1);
    if c0.norm() > policy.degenerate_tol {
        Ok(ExpansionResult { order: 0, leading_coefficient: c0, next_order_bound: c1.norm() })
    } else {
        Ok(ExpansionResult { order: 1, leading_coefficient: c1, next_order_bound: next })
    }
}

fn next_coefficient_estimate(fam: &AnalyticMatrixFamily, modified: bool, order: usize) -> f64 {
    let r = fam.radius.min(0.25);
    let f = |z: C64| -> Result<C64> {
        let (d, d2) = det_and_det2(&fam.eval(z))?;
        Ok(if modified { d2 } else { d })
    };
    match derivative_coefficients(&f, c(0.0), r, order + 1, Some(64)) {
        Ok(v) => v[order + 1].norm(),
        Err(_) => f64::NAN,
    }
}

/// Intermediate quantities of the singular expansion.
#[derive(Debug, Clone, Serialize)]
pub struct SingularBreakdown {
    /// `det(I - Q0 A0 Q0)` restricted to the range of `Q0` (or its `det2` when modified).
    pub q_block: C64,
    /// `det` of the reduced matrix built from `A1` on the range of `P0`.
    pub reduced: C64,
    /// `e^{n0}` for the modified determinant, `1` otherwise.
    pub exp_n0: f64,
}

/// Leading term of `det(I - A(z))` (or `det2`) at a point where 1 is an eigenvalue of `A0`.
pub fn expansion_singular(
    fam: &AnalyticMatrixFamily,
    riesz: &RieszData,
    modified: bool,
    policy: &NumericPolicy,
) -> Result<ExpansionResult> {
    Ok(expansion_singular_detail(fam, riesz, modified, policy)?.0)
}

/// As [`expansion_singular`], also returning the factors of the leading coefficient.
pub fn expansion_singular_detail(
    fam: &AnalyticMatrixFamily,
    riesz: &RieszData,
    modified: bool,
    policy: &NumericPolicy,
) -> Result<(ExpansionResult, SingularBreakdown)> {
    let n0 = riesz.n0;
    let nu0 = riesz.nu0;
    if n0 == 0 {
        return Err(Error::pre("1 is not an eigenvalue of A0 inside the contour"));
    }
    if nu0 >= n0 {
        return Err(Error::pre("inconsistent structure: nu0 must be below n0"));
    }
    if (riesz.center - c(1.0)).norm() > 1e-12 {
        return Err(Error::pre("Riesz data must be centred at 1"));
    }
    let n = fam.dim();
    let a0 = fam.a0();
    let p0 = &riesz.projection;

    // P0 = Y Z^H with Y orthonormal, so Z^H Y = I
    let y = svd(p0).u.columns(0, n0).into_owned();
    let zh = y.adjoint() * p0;

    let nil = &zh * (a0 - CMat::identity(n, n)) * &y;
    let tol = rank_threshold(&nil, a0, policy);
    let (t, lengths) = jordan_chains(&nil, tol)?;
    let nu_chain: usize = lengths.iter().map(|l| l - 1).sum();
    if nu_chain != nu0 {
        return Err(Error::num(format!(
            "Jordan chain count gives nu0 = {nu_chain}, Riesz data reports {nu0}"
        )));
    }
    let tinv = t.clone().try_inverse().ok_or_else(|| Error::num("chain basis is singular"))?;
    let a1hat = &tinv * (&zh * fam.a1() * &y) * &t;
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut start = 0;
    for l in &lengths {
        cols.push(start);
        rows.push(start + l - 1);
        start += l;
    }
    let k = rows.len();
    let mut red = CMat::zeros(k, k);
    for (a, &r) in rows.iter().enumerate() {
        for (b, &cc) in cols.iter().enumerate() {
            red[(a, b)] = a1hat[(r, cc)];
        }
    }
    let reduced = det(&red)?;
    let scale = red.norm().max(1.0).powi(k as i32);
    if reduced.norm() < policy.degenerate_tol * scale {
        return Err(Error::num("higher-order expansion needed: reduced determinant vanishes"));
    }

    // det over ran Q0 of (I - Q0 A0 Q0) = (-1)^{n0} det(I - P0 - A0)
    let sign = if n0 % 2 == 0 { 1.0 } else { -1.0 };
    let mut q_block = det(&(CMat::identity(n, n) - p0 - a0))? * sign;
    let mut exp_n0 = 1.0;
    if modified {
        let q0 = &riesz.complement_projection;
        q_block *= (q0 * a0 * q0).trace().exp();
        exp_n0 = (n0 as f64).exp();
    }
    let order = n0 - nu0;
    let osign = if order % 2 == 0 { 1.0 } else { -1.0 };
    let lead = q_block * reduced * osign * exp_n0;
    let next = next_coefficient_estimate(fam, modified, order);
    Ok((
        ExpansionResult { order, leading_coefficient: lead, next_order_bound: next },
        SingularBreakdown { q_block, reduced, exp_n0 },
    ))
}

fn null_space(m: &CMat, tol: f64) -> CMat {
    let n = m.ncols();
    let d = svd(m);
    let cols: Vec<CVec> = (0..n)
        .filter(|&i| d.s.get(i).copied().unwrap_or(0.0) <= tol)
        .map(|i| d.v.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        CMat::zeros(n, 0)
    } else {
        CMat::from_columns(&cols)
    }
}

fn orthonormal_span(vecs: &[CVec], n: usize, tol: f64) -> CMat {
    if vecs.is_empty() {
        return CMat::zeros(n, 0);
    }
    let m = CMat::from_columns(vecs);
    let d = svd(&m);
    let cols: Vec<CVec> = (0..d.s.len())
        .filter(|&i| d.s[i] > tol)
        .map(|i| d.u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        CMat::zeros(n, 0)
    } else {
        CMat::from_columns(&cols)
    }
}

/// Basis `T` with `N T = T J`, `J` a direct sum of nilpotent Jordan blocks with
/// ones on the superdiagonal. Returns `T` and the block lengths in column order.
pub fn jordan_chains(nil: &CMat, tol: f64) -> Result<(CMat, Vec<usize>)> {
    let n = nil.nrows();
    if n == 0 {
        return Ok((CMat::zeros(0, 0), vec![]));
    }
    let scale = nil.norm().max(1.0);
    let mut kernels: Vec<CMat> = vec![CMat::zeros(n, 0)];
    let mut power = CMat::identity(n, n);
    loop {
        let k = kernels.len();
        if k > n {
            return Err(Error::num("matrix restricted to the eigenspace is not nilpotent"));
        }
        power = &power * nil;
        let kt = tol * scale.powi(k as i32 - 1);
        numerical_rank(&power, kt)?;
        let ker = null_space(&power, kt);
        let dim = ker.ncols();
        kernels.push(ker);
        if dim == n {
            break;
        }
    }
    let m = kernels.len() - 1;
    let dims: Vec<usize> = kernels.iter().map(|k| k.ncols()).collect();
    let mut chains: Vec<(CVec, usize)> = Vec::new();
    let apply_pow = |v: &CVec, p: usize| -> CVec {
        let mut w = v.clone();
        for _ in 0..p {
            w = nil * w;
        }
        w
    };
    for k in (1..=m).rev() {
        let mut span: Vec<CVec> = kernels[k - 1].column_iter().map(|c| c.into_owned()).collect();
        let level: Vec<CVec> = chains.iter().map(|(h, len)| apply_pow(h, len - k)).collect();
        span.extend(level.iter().cloned());
        let s = orthonormal_span(&span, n, 1e-8);
        let want = (dims[k] - dims[k - 1]).saturating_sub(level.len());
        if want == 0 {
            continue;
        }
        let proj = &kernels[k] - &s * (s.adjoint() * &kernels[k]);
        let d = svd(&proj);
        for i in 0..want {
            if d.s.get(i).copied().unwrap_or(0.0) < 1e-8 {
                return Err(Error::num("could not complete a Jordan chain basis"));
            }
            chains.push((d.u.column(i).into_owned(), k));
        }
    }
    let mut cols = Vec::with_capacity(n);
    let mut lengths = Vec::new();
    for (h, len) in &chains {
        for p in (0..*len).rev() {
            cols.push(apply_pow(h, p));
        }
        lengths.push(*len);
    }
    if cols.len() != n {
        return Err(Error::num("Jordan chain basis has the wrong size"));
    }
    Ok((CMat::from_columns(&cols), lengths))
}

struct Svd {
    u: CMat,
    s: Vec<f64>,
    v: CMat,
}

/// Full SVD with singular values in decreasing order.
fn svd(m: &CMat) -> Svd {
    let (r, k) = m.shape();
    if r == 0 || k == 0 {
        return Svd { u: CMat::identity(r, r), s: Vec::new(), v: CMat::identity(k, k) };
    }
    let f = faer::Mat::<faer::c64>::from_fn(r, k, |i, j| m[(i, j)]);
    let d = f.svd().expect("SVD did not converge");
    let (u, s, v) = (d.U(), d.S(), d.V());
    let s: Vec<f64> = (0..r.min(k)).map(|i| s[i].re).collect();
    Svd {
        u: CMat::from_fn(r, r, |i, j| u[(i, j)]),
        s,
        v: CMat::from_fn(k, k, |i, j| v[(i, j)]),
    }
}

/// Taylor coefficients `c_0..c_max_order` of `f` at `center` from the trapezoid
/// rule on the circle of the given radius.
pub fn derivative_coefficients<F>(
    f: &F,
    center: C64,
    radius: f64,
    max_order: usize,
    nodes: Option<usize>,
) -> Result<Vec<C64>>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    if !(radius > 0.0) {
        return Err(Error::pre("radius must be positive"));
    }
    let m = nodes.unwrap_or(64).max(2 * (max_order + 1));
    let samples: Vec<Result<C64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let e = (I * (2.0 * std::f64::consts::PI * j as f64 / m as f64)).exp();
            f(center + e * radius)
        })
        .collect();
    let mut vals = Vec::with_capacity(m);
    for s in samples {
        let v = s?;
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::num("non-finite sample on the contour"));
        }
        vals.push(v);
    }
    let mut out = Vec::with_capacity(max_order + 1);
    for k in 0..=max_order {
        let mut s = C64::new(0.0, 0.0);
        for (j, v) in vals.iter().enumerate() {
            let ang = -2.0 * std::f64::consts::PI * (j * k % m) as f64 / m as f64;
            s += v * C64::from_polar(1.0, ang);
        }
        out.push(s / (m as f64 * radius.powi(k as i32)));
    }
    Ok(out)
}
