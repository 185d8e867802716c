//! Standing pulses of `w_t = w_xx + f(w)`, their linearised potentials and the
//! stability index `sgn(d^k F(0)) sgn(F(+inf))`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::cylinder::{channel_rates, f2j, theta_j, F2Route, FourierPotential, GalerkinTruncation, WaveVector};
use crate::matdet::derivative_coefficients;
use crate::quad::{simpson, uniform, CubicSpline};
use crate::semisep::{det_semiseparable, SemiSeparableKernel};
use crate::volterra::{jost_derivative_at_eigenvalue, jost_function, locate_eigenvalues, JostMethod, Potential1D};
use crate::{c, CMat, Error, NumericPolicy, Result, C64};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Where a reaction term came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Provenance {
    BuiltinKdv { n: u32, kappa: f64, c: f64 },
    UserSupplied,
}

/// Reaction term `f` with its derivative and rest state `U_inf`.
#[derive(Clone)]
pub struct ReactionProfile {
    pub f: ScalarFn,
    pub f_prime: ScalarFn,
    pub u_infinity: f64,
    pub provenance: Provenance,
}

impl fmt::Debug for ReactionProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReactionProfile")
            .field("u_infinity", &self.u_infinity)
            .field("provenance", &self.provenance)
            .finish()
    }
}

/// `sgn(w) |w|^e`.
fn spow(w: f64, e: f64) -> f64 {
    w.signum() * w.abs().powf(e)
}

impl ReactionProfile {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        u_infinity: f64,
    ) -> Self {
        ReactionProfile { f: Arc::new(f), f_prime: Arc::new(f_prime), u_infinity, provenance: Provenance::UserSupplied }
    }

    /// `f_n(w) = -(n-1)^2 k^2 w + (n-1) n k^2 c^{-2/(n-1)} w^{(n+1)/(n-1)}`.
    pub fn kdv(n: u32, kappa: f64, c: f64) -> Result<Self> {
        if n < 2 || !(kappa > 0.0) || !(c > 0.0) {
            return Err(Error::pre("kdv needs n >= 2, kappa > 0, c > 0"));
        }
        let m = n as f64 - 1.0;
        let a = m * m * kappa * kappa;
        let b = m * (m + 1.0) * kappa * kappa * c.powf(-2.0 / m);
        let e = (m + 2.0) / m;
        Ok(ReactionProfile {
            f: Arc::new(move |w| -a * w + b * spow(w, e)),
            f_prime: Arc::new(move |w| -a + b * e * w.abs().powf(e - 1.0)),
            u_infinity: 0.0,
            provenance: Provenance::BuiltinKdv { n, kappa, c },
        })
    }

    /// Rows `w f(w) f'(w)`, cubic interpolation; `# u_infinity = ` header (default 0).
    pub fn from_table(text: &str) -> Result<Self> {
        let mut u_inf = 0.0;
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                if let Some((k, v)) = h.split_once('=') {
                    if k.trim() == "u_infinity" {
                        u_inf = v.trim().parse().map_err(|_| Error::pre("bad u_infinity header"))?;
                    }
                }
                continue;
            }
            let f: Vec<f64> = line
                .split(|ch: char| ch == ',' || ch.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::pre(format!("line {}: unparsable value", ln + 1)))?;
            if f.len() != 3 {
                return Err(Error::pre(format!("line {}: expected w, f, f'", ln + 1)));
            }
            rows.push((f[0], f[1], f[2]));
        }
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let w: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let fs = CubicSpline::new(w.clone(), rows.iter().map(|r| r.1).collect())?;
        let dfs = CubicSpline::new(w, rows.iter().map(|r| r.2).collect())?;
        Ok(ReactionProfile::new(move |x| fs.eval(x), move |x| dfs.eval(x), u_inf))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::pre(format!("cannot read {}: {e}", path.display())))?;
        Self::from_table(&text)
    }
}

/// Sampled standing pulse.
#[derive(Debug, Clone, Serialize)]
pub struct StandingWave {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub u_prime: Vec<f64>,
    pub u_infinity: f64,
    /// `max |U'' + f(U)|`.
    pub residual: f64,
}

impl StandingWave {
    /// `U = U_inf`.
    pub fn constant(u_infinity: f64, x_max: f64, n: usize) -> Self {
        let x = uniform(-x_max, x_max, n);
        let len = x.len();
        StandingWave { x, u: vec![u_infinity; len], u_prime: vec![0.0; len], u_infinity, residual: 0.0 }
    }
}

fn fd_residual(x: &[f64], u: &[f64], f: &ScalarFn) -> f64 {
    let h = x[1] - x[0];
    let mut r: f64 = 0.0;
    for i in 2..u.len().saturating_sub(2) {
        let d2 = (-u[i - 2] + 16.0 * u[i - 1] - 30.0 * u[i] + 16.0 * u[i + 1] - u[i + 2]) / (12.0 * h * h);
        r = r.max((d2 + f(u[i])).abs());
    }
    r
}

/// Even pulse on `[-X, X]` with `n` points.
pub fn solve_standing_wave(rp: &ReactionProfile, x_max: f64, n: usize, policy: &NumericPolicy) -> Result<StandingWave> {
    if !(x_max > 0.0) || n < 5 {
        return Err(Error::pre("domain needs X > 0 and at least 5 points"));
    }
    let x = uniform(-x_max, x_max, n);
    if let Provenance::BuiltinKdv { n: nn, kappa, c } = rp.provenance {
        let m = nn as f64 - 1.0;
        let mut u = Vec::with_capacity(n);
        let mut du = Vec::with_capacity(n);
        let mut residual: f64 = 0.0;
        for &t in &x {
            let s = 1.0 / (kappa * t).cosh();
            let th = (kappa * t).tanh();
            let v = c * s.powf(m);
            let d = -m * kappa * v * th;
            let d2 = m * kappa * kappa * v * (m - (m + 1.0) * s * s);
            residual = residual.max((d2 + (rp.f)(v)).abs());
            u.push(v);
            du.push(d);
        }
        return Ok(StandingWave { x, u, u_prime: du, u_infinity: 0.0, residual });
    }
    let ui = rp.u_infinity;
    let s2 = -(rp.f_prime)(ui);
    if !(s2 > 0.0) {
        return Err(Error::pre("rest state is not a saddle: f'(U_inf) must be negative"));
    }
    let s = s2.sqrt();
    let potential = |a: f64| -> f64 {
        let m = 2000;
        let h = (a - ui) / m as f64;
        let vals: Vec<f64> = (0..=m).map(|i| (rp.f)(ui + h * i as f64)).collect();
        simpson(h, &vals)
    };
    // turning point: first return of int_{U_inf}^a f to zero
    let mut amp = None;
    'dirs: for dir in [1.0, -1.0] {
        let mut prev = ui + dir * 1e-3;
        let mut gp = potential(prev);
        let mut step = 1e-3;
        while step < 1e3 {
            step *= 1.05;
            let a = ui + dir * step;
            let ga = potential(a);
            if !ga.is_finite() {
                break;
            }
            if gp < 0.0 && ga >= 0.0 {
                let (mut lo, mut hi) = (prev, a);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if potential(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                amp = Some(0.5 * (lo + hi));
                break 'dirs;
            }
            prev = a;
            gp = ga;
        }
    }
    let a = amp.ok_or_else(|| Error::num("no pulse in bracket"))?;
    // march from the turning point, switch to the linear tail near the rest state
    let h = x[1] - x[0];
    let half = (n - 1) / 2;
    let mut right = vec![(a, 0.0)];
    let (mut y, mut v) = (a, 0.0);
    let acc = |y: f64| -(rp.f)(y);
    let mut tail: Option<(f64, usize)> = None;
    for i in 1..=half {
        if let Some((d0, i0)) = tail {
            let dv = d0 * (-s * h * (i - i0) as f64).exp();
            right.push((ui + dv, -s * dv));
            continue;
        }
        let (k1y, k1v) = (v, acc(y));
        let (k2y, k2v) = (v + 0.5 * h * k1v, acc(y + 0.5 * h * k1y));
        let (k3y, k3v) = (v + 0.5 * h * k2v, acc(y + 0.5 * h * k2y));
        let (k4y, k4v) = (v + h * k3v, acc(y + h * k3y));
        let ny = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        let nv = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        let dev = ny - ui;
        if dev.abs() < 1e-3 * (a - ui).abs() || nv * (a - ui) > 0.0 {
            // keep the decaying part of (dev, nv)
            let d0 = 0.5 * (dev - nv / s);
            tail = Some((d0, i));
            right.push((ui + d0, -s * d0));
        } else {
            right.push((ny, nv));
        }
        y = ny;
        v = nv;
    }
    let mut u = vec![0.0; n];
    let mut du = vec![0.0; n];
    let mid = if n % 2 == 1 { half } else { return Err(Error::pre("use an odd number of points")) };
    for (k, (yy, vv)) in right.iter().enumerate() {
        u[mid + k] = *yy;
        du[mid + k] = *vv;
        u[mid - k] = *yy;
        du[mid - k] = -*vv;
    }
    let residual = fd_residual(&x, &u, &rp.f);
    if residual > policy.ode_residual_tol.max(1e-3 * (a - ui).abs()) {
        return Err(Error::num(format!("standing-wave residual {residual:.3e} too large")));
    }
    Ok(StandingWave { x, u, u_prime: du, u_infinity: ui, residual })
}

/// `V = -f'(U)`, `V_inf = -f'(U_inf)`.
pub fn potential_from_wave(rp: &ReactionProfile, sw: &StandingWave) -> Result<Potential1D> {
    let vinf = -(rp.f_prime)(sw.u_infinity);
    if !(vinf > 0.0) {
        return Err(Error::pre("essential spectrum reaches origin"));
    }
    let fp = rp.f_prime.clone();
    if let Provenance::BuiltinKdv { n, kappa, c } = rp.provenance {
        if sw.u.iter().all(|v| (*v - sw.u_infinity).abs() > 0.0) {
            let base = Potential1D::kdv(n, kappa, c)?;
            let m = n as f64 - 1.0;
            let w = move |t: f64| -fp(c * (1.0 / (kappa * t).cosh()).powf(m)) - vinf;
            let zm = base.analytic_zero_mode().expect("built-in family has a closed-form zero mode");
            return Ok(Potential1D::new(vinf, base.x_max, base.n_grid, base.tail_bound, w)?
                .with_zero_mode(move |t| zm(t))
                .with_label(base.label.clone()));
        }
    }
    let x_max = sw.x[sw.x.len() - 1];
    let spline = CubicSpline::new(sw.x.clone(), sw.u.clone())?;
    let ui = sw.u_infinity;
    let w = move |t: f64| {
        let u = if t.abs() >= x_max { ui } else { spline.eval(t) };
        -fp(u) - vinf
    };
    let n = if sw.x.len() % 2 == 1 { sw.x.len() } else { sw.x.len() + 1 };
    Ok(Potential1D::new(vinf, x_max, n, 0.0, w)?.with_label("wave"))
}

/// Parity of the number of eigenvalues below 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Parity {
    Odd,
    Even,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Unstable,
    ParityEven,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub gamma: i8,
    pub order_k: usize,
    /// `d^k F / dz^k` at 0.
    pub dkf0: f64,
    pub f_zero: f64,
    pub f_at_infinity: f64,
    pub f_at_infinity_sign: i8,
    pub unstable_parity: Parity,
    pub verdict: Verdict,
    /// Located eigenvalues strictly below 0.
    pub eigenvalues_below_zero: Vec<f64>,
    /// `F'(0)` from the quadrature formula when `k = 1`.
    pub quadrature_df0: Option<f64>,
    pub taylor: Vec<C64>,
    pub radius: f64,
    pub warnings: Vec<String>,
}

/// `F(z)` at `z = -10^4 (1 + V_inf)`.
pub fn f_at_infinity(p: &Potential1D) -> Result<f64> {
    let z = -1e4 * (1.0 + p.v_infinity);
    Ok(jost_function(p, c(z), JostMethod::Wronskian)?.re)
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

pub fn stability_index_1d(p: &Potential1D, policy: &NumericPolicy) -> Result<StabilityReport> {
    let mut warnings = Vec::new();
    let f_inf = f_at_infinity(p)?;
    let wmin = p.samples().into_iter().fold(0.0, f64::min);
    let lower = p.v_infinity + wmin - 1.0;
    let gap = 1e-6 * p.v_infinity;
    let below = if lower < -gap { locate_eigenvalues(p, (lower, -gap))? } else { Vec::new() };
    let top = p.v_infinity * (1.0 - 1e-3);
    let above = if gap < top { locate_eigenvalues(p, (gap, top))? } else { Vec::new() };
    let nearest = below.iter().chain(&above).map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    let radius = (0.3 * p.v_infinity).min(0.5 * nearest);
    let f = |z: C64| jost_function(p, z, JostMethod::Wronskian);
    let taylor = derivative_coefficients(&f, c(0.0), radius, 4, Some(64))?;
    let f_zero = taylor[0].re;
    let mut order = None;
    for k in 0..4 {
        let thr = 1e-6 * taylor[k + 1].norm().max(1.0);
        if taylor[k].norm() > thr {
            if taylor[k].norm() < 10.0 * thr {
                warnings.push(format!("order {k} selected near the detection threshold"));
            }
            order = Some(k);
            break;
        }
    }
    let fsign = sign(f_inf);
    let Some(k) = order else {
        warnings.push("no nonvanishing Taylor coefficient up to order 3".into());
        return Ok(StabilityReport {
            gamma: 0,
            order_k: 4,
            dkf0: 0.0,
            f_zero,
            f_at_infinity: f_inf,
            f_at_infinity_sign: fsign,
            unstable_parity: if below.len() % 2 == 1 { Parity::Odd } else { Parity::Even },
            verdict: Verdict::Inconclusive,
            eigenvalues_below_zero: below,
            quadrature_df0: None,
            taylor,
            radius,
            warnings,
        });
    };
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    let dkf0 = taylor[k].re * fact;
    let mut quadrature_df0 = None;
    if k == 1 {
        let q = jost_derivative_at_eigenvalue(p, 0.0, policy)?.re;
        if (q - dkf0).abs() > 1e-4 * dkf0.abs() {
            warnings.push(format!("contour and quadrature F'(0) differ: {dkf0} vs {q}"));
        }
        quadrature_df0 = Some(q);
    }
    let gamma = sign(dkf0) * fsign;
    let odd = if k % 2 == 0 { gamma == -1 } else { gamma == 1 };
    let parity = if odd { Parity::Odd } else { Parity::Even };
    if (below.len() % 2 == 1) != odd {
        warnings.push(format!(
            "index parity disagrees with the {} located eigenvalues below 0",
            below.len()
        ));
    }
    let verdict = match (parity, k) {
        (Parity::Odd, _) => Verdict::Unstable,
        (Parity::Even, 0) => Verdict::Inconclusive,
        (Parity::Even, _) => Verdict::ParityEven,
    };
    Ok(StabilityReport {
        gamma,
        order_k: k,
        dkf0,
        f_zero,
        f_at_infinity: f_inf,
        f_at_infinity_sign: fsign,
        unstable_parity: parity,
        verdict,
        eigenvalues_below_zero: below,
        quadrature_df0,
        taylor,
        radius,
        warnings,
    })
}

/// `max |G * (W Phi) + Phi| / max |Phi|` with `G` the free resolvent at 0.
pub fn bs_fixed_point_residual(p: &Potential1D, phi: &[f64]) -> Result<f64> {
    let x = p.grid();
    if phi.len() != x.len() {
        return Err(Error::pre("zero mode does not match the potential grid"));
    }
    let f: Vec<C64> = x.iter().zip(phi).map(|(t, v)| c(p.w(*t) * v)).collect();
    let g = resolvent_apply(&f, x[1] - x[0], c(p.v_infinity.sqrt()));
    let scale = phi.iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(g.iter().zip(phi).map(|(a, b)| (a + b).norm()).fold(0.0, f64::max) / scale)
}

/// `(-d^2 + kappa^2)^{-1} f` on a uniform grid, exact for piecewise linear `f`.
fn resolvent_pass(f: &[C64], h: f64, kappa: C64) -> Vec<C64> {
    let n = f.len();
    let a = kappa * h;
    let e = (-a).exp();
    let w1 = (1.0 - e) / kappa - (1.0 - e * (1.0 + a)) / (kappa * a);
    let w0 = (1.0 - e) / kappa - w1;
    let mut left = vec![c(0.0); n];
    for i in 1..n {
        left[i] = e * left[i - 1] + w0 * f[i - 1] + w1 * f[i];
    }
    let mut right = vec![c(0.0); n];
    for i in (0..n - 1).rev() {
        right[i] = e * right[i + 1] + w0 * f[i + 1] + w1 * f[i];
    }
    left.iter().zip(&right).map(|(l, r)| (l + r) / (2.0 * kappa)).collect()
}

/// Second-order pass with one Richardson step on every other node, linear fill in between.
fn resolvent_apply(f: &[C64], h: f64, kappa: C64) -> Vec<C64> {
    let fine = resolvent_pass(f, h, kappa);
    if f.len() % 2 == 0 {
        return fine;
    }
    let coarse_f: Vec<C64> = f.iter().step_by(2).cloned().collect();
    let coarse = resolvent_pass(&coarse_f, 2.0 * h, kappa);
    let mut out = fine.clone();
    for (k, cv) in coarse.iter().enumerate() {
        let i = 2 * k;
        out[i] = (4.0 * fine[i] - cv) / 3.0;
    }
    for i in (1..f.len() - 1).step_by(2) {
        // correction at odd nodes from the neighbouring even ones
        let corr = 0.5 * ((out[i - 1] - fine[i - 1]) + (out[i + 1] - fine[i + 1]));
        out[i] = fine[i] + corr;
    }
    out
}

/// Factors of `F_{2,J}'(0)` at a simple zero.
#[derive(Debug, Clone, Serialize)]
pub struct FPrimeMulti {
    /// `e^{Theta_J(0)} det(I - K_0 - P_0)`.
    pub first_factor: C64,
    /// `(Phi~, K_1 Phi) / (Phi~, Phi)`.
    pub second_factor: C64,
    pub product: C64,
    /// Contour derivative of `F_{2,J}` at 0.
    pub cauchy: C64,
    pub relative_gap: f64,
}

/// Zero mode `Phi = e_0 U'` of a planar wave on the truncation.
pub fn planar_zero_mode(fp: &FourierPotential, t: &GalerkinTruncation, u_prime: &[f64]) -> Result<Vec<Vec<f64>>> {
    if u_prime.len() != fp.x.len() {
        return Err(Error::pre("zero mode does not match the x1 grid"));
    }
    Ok(t.mode_index
        .iter()
        .map(|m| if m.iter().all(|v| *v == 0) { u_prime.to_vec() } else { vec![0.0; u_prime.len()] })
        .collect())
}

/// `(W Phi)_j = sum_m W_{j-m} Phi_m` on the x1 grid.
fn apply_w(fp: &FourierPotential, t: &GalerkinTruncation, phi: &[Vec<f64>]) -> Result<Vec<Vec<C64>>> {
    let nx = fp.x.len();
    let mut out = vec![vec![c(0.0); nx]; t.n_modes];
    for (a, ja) in t.mode_index.iter().enumerate() {
        for (b, jb) in t.mode_index.iter().enumerate() {
            let m: WaveVector = ja.iter().zip(jb).map(|(p, q)| p - q).collect();
            if let Some(s) = fp.samples(&m)? {
                for i in 0..nx {
                    out[a][i] += s[i] * phi[b][i];
                }
            }
        }
    }
    Ok(out)
}

pub fn fprime_multi(
    fp: &FourierPotential,
    t: &GalerkinTruncation,
    phi: &[Vec<f64>],
    policy: &NumericPolicy,
) -> Result<FPrimeMulti> {
    let n = t.n_modes;
    let nx = fp.x.len();
    if phi.len() != n || phi.iter().any(|v| v.len() != nx) {
        return Err(Error::pre("zero mode must have one x1 profile per retained mode"));
    }
    let h = fp.x[1] - fp.x[0];
    let wphi = apply_w(fp, t, phi)?;
    let pairing: C64 = (0..n)
        .map(|a| simpson(h, &wphi[a].iter().zip(&phi[a]).map(|(w, p)| w * *p).collect::<Vec<_>>()))
        .sum();
    let phi_scale: f64 = phi.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if !(pairing.norm() > 1e-12 * phi_scale * phi_scale) {
        return Err(Error::pre("no zero eigenvalue: (W Phi, Phi) vanishes"));
    }
    let kappas = channel_rates(fp, t, c(0.0))?;
    // K_0 Phi = Phi with K_0 = -H0^{-1} W
    let g: Vec<Vec<C64>> = (0..n).map(|a| resolvent_apply(&wphi[a], h, kappas[a])).collect();
    let defect = g
        .iter()
        .zip(phi)
        .flat_map(|(ga, pa)| ga.iter().zip(pa).map(|(x, y)| (x + y).norm()))
        .fold(0.0, f64::max)
        / phi_scale;
    if defect > policy.ode_residual_tol {
        return Err(Error::pre(format!("Phi is not a zero mode of the truncated operator: residual {defect:.3e}")));
    }
    let gg: C64 = (0..n).map(|a| simpson(h, &g[a].iter().map(|v| v * v).collect::<Vec<_>>())).sum();
    let second = -gg / pairing;
    // augmented semi-separable kernel of K_0 + P_0
    let c0 = 1.0 / pairing;
    let mut mu = kappas.clone();
    mu.push(c(0.0));
    let mut ps = Vec::with_capacity(nx);
    let mut qs = Vec::with_capacity(nx);
    for i in 0..nx {
        let mut p = CMat::zeros(n, n + 1);
        let mut q = CMat::zeros(n, n + 1);
        for a in 0..n {
            p[(a, a)] = c(-1.0);
            p[(a, n)] = c(phi[a][i]);
            q[(a, n)] = c0 * wphi[a][i];
        }
        for (a, ja) in t.mode_index.iter().enumerate() {
            for (b, jb) in t.mode_index.iter().enumerate() {
                let m: WaveVector = ja.iter().zip(jb).map(|(x, y)| x - y).collect();
                if let Some(s) = fp.samples(&m)? {
                    q[(b, a)] = s[i] / (2.0 * kappas[a]);
                }
            }
        }
        ps.push(p);
        qs.push(q);
    }
    let k = SemiSeparableKernel::new(fp.x.clone(), mu, ps.clone(), qs.clone(), ps, qs)?;
    let reduced = det_semiseparable(&k, false)?;
    if reduced.norm() < 1e-8 {
        return Err(Error::num("Lyapunov–Schmidt dimension > 1 unsupported"));
    }
    let first = theta_j(fp, t, c(0.0))?.exp() * reduced;
    let product = first * second;
    let radius = 0.3 * fp.v_infinity;
    let f = |z: C64| f2j(fp, t, z, F2Route::Semiseparable);
    let coef = derivative_coefficients(&f, c(0.0), radius, 1, Some(32))?;
    let cauchy = coef[1];
    let relative_gap = (product - cauchy).norm() / cauchy.norm();
    if !(relative_gap <= 1e-3) {
        return Err(Error::num(format!(
            "product {product} disagrees with the contour derivative {cauchy}"
        )));
    }
    Ok(FPrimeMulti { first_factor: first, second_factor: second, product, cauchy, relative_gap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_waves() {
        let pol = NumericPolicy::default();
        let rp = ReactionProfile::kdv(2, 1.0, 1.0).unwrap();
        let sw = solve_standing_wave(&rp, 20.0, 4001, &pol).unwrap();
        assert!(sw.residual < 1e-8);
        let i = 2300;
        let x = sw.x[i];
        assert!((sw.u[i] - 1.0 / x.cosh()).abs() < 1e-14);
        assert!((sw.u_prime[i] + x.tanh() / x.cosh()).abs() < 1e-14);
        let p = potential_from_wave(&rp, &sw).unwrap();
        assert!((p.v_infinity - 1.0).abs() < 1e-14);
        assert!((p.w(0.3) + 6.0 / 0.3f64.cosh().powi(2)).abs() < 1e-12);

        let rp = ReactionProfile::kdv(3, 1.0, 1.0).unwrap();
        let sw = solve_standing_wave(&rp, 20.0, 4001, &pol).unwrap();
        assert!(sw.residual < 1e-8);
        assert!((sw.u[2100] - 1.0 / sw.x[2100].cosh().powi(2)).abs() < 1e-14);
        let p = potential_from_wave(&rp, &sw).unwrap();
        assert!((p.v_infinity - 4.0).abs() < 1e-12);
        assert!((p.w(0.7) + 12.0 / 0.7f64.cosh().powi(2)).abs() < 1e-11);
    }

    #[test]
    fn linear_reaction_gives_free_potential() {
        let rp = ReactionProfile::new(|w| -w, |_| -1.0, 0.0);
        let sw = StandingWave::constant(0.0, 20.0, 401);
        let p = potential_from_wave(&rp, &sw).unwrap();
        assert_eq!(p.v_infinity, 1.0);
        assert!(p.samples().iter().all(|v| *v == 0.0));
        let rp = ReactionProfile::new(|w| w, |_| 1.0, 0.0);
        assert!(potential_from_wave(&rp, &sw).is_err());
    }

    #[test]
    fn shooting_matches_closed_form() {
        let pol = NumericPolicy::default();
        let rp = ReactionProfile::new(|w| -w + 2.0 * w * w * w, |w| -1.0 + 6.0 * w * w, 0.0);
        let sw = solve_standing_wave(&rp, 20.0, 4001, &pol).unwrap();
        let err = sw.x.iter().zip(&sw.u).map(|(x, u)| (u - 1.0 / x.cosh()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn resolvent_inverts_operator() {
        // f = (-d^2 + k^2) e^{-x^2}
        let k = 1.3;
        let x = uniform(-15.0, 15.0, 3001);
        let f: Vec<C64> = x.iter().map(|t| c((k * k + 2.0 - 4.0 * t * t) * (-t * t).exp())).collect();
        let g = resolvent_apply(&f, x[1] - x[0], c(k));
        let err = x.iter().zip(&g).map(|(t, v)| (v - c((-t * t).exp())).norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }
}
