//! Jost solutions of `-y'' + V y = z y` on the line by Volterra marching.
//!
//! With `k = (z - V_inf)^{1/2}`, `Im k > 0`, the right Jost solution is
//! marched in the rescaled form `m(x) = exp(-i k x) Psi_+(x)`, which stays
//! bounded. The left solution is obtained from the reflected potential.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::quad::{trapz, uniform, CubicSpline};
use crate::{c, Error, NumericPolicy, Result, C64, I};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type PairFn = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

/// A potential `V = V_inf + W` on the line, truncated to `[-X, X]`.
#[derive(Clone)]
pub struct Potential1D {
    pub v_infinity: f64,
    pub x_max: f64,
    /// Points of the uniform marching grid.
    pub n_grid: usize,
    /// User-declared bound on `|W|` outside `[-X, X]`.
    pub tail_bound: f64,
    pub label: String,
    w: RealFn,
    zero_mode: Option<PairFn>,
}

impl fmt::Debug for Potential1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential1D")
            .field("label", &self.label)
            .field("v_infinity", &self.v_infinity)
            .field("x_max", &self.x_max)
            .field("n_grid", &self.n_grid)
            .finish()
    }
}

pub const DEFAULT_X: f64 = 20.0;
pub const DEFAULT_GRID: usize = 4001;

impl Potential1D {
    pub fn new(
        v_infinity: f64,
        x_max: f64,
        n_grid: usize,
        tail_bound: f64,
        w: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(v_infinity > 0.0) {
            return Err(Error::pre("V_inf must be positive"));
        }
        if !(x_max > 0.0) || n_grid < 3 {
            return Err(Error::pre("grid needs X > 0 and at least 3 points"));
        }
        let p = Potential1D {
            v_infinity,
            x_max,
            n_grid,
            tail_bound,
            label: "user".into(),
            w: Arc::new(w),
            zero_mode: None,
        };
        let xs = p.grid();
        let ws = p.samples();
        if ws.iter().any(|v| !v.is_finite()) {
            return Err(Error::pre("W has non-finite samples"));
        }
        let l1 = trapz(xs[1] - xs[0], &ws.iter().map(|v| v.abs()).collect::<Vec<_>>());
        if !l1.is_finite() {
            return Err(Error::pre("W is not integrable on the grid"));
        }
        Ok(p)
    }

    /// `W = 0`.
    pub fn free(v_infinity: f64) -> Result<Self> {
        let mut p = Self::new(v_infinity, DEFAULT_X, DEFAULT_GRID, 0.0, |_| 0.0)?;
        p.label = "zero".into();
        Ok(p)
    }

    /// Linearisation about the standing wave `U = c cosh(kappa x)^{1-n}` of the KdV-type reaction.
    pub fn kdv(n: u32, kappa: f64, c: f64) -> Result<Self> {
        if n < 2 || !(kappa > 0.0) || !(c > 0.0) {
            return Err(Error::pre("kdv needs n >= 2, kappa > 0, c > 0"));
        }
        let nf = n as f64;
        let vinf = (nf - 1.0).powi(2) * kappa * kappa;
        let amp = nf * (nf + 1.0) * kappa * kappa;
        // tail of the L1 norm below 1e-12
        let x_tail = (4.0 * amp / kappa * 1e12).ln() / (2.0 * kappa);
        let x_max = DEFAULT_X.max(x_tail.ceil());
        let n_grid = if x_max > DEFAULT_X {
            (((DEFAULT_GRID - 1) as f64) * x_max / DEFAULT_X).ceil() as usize + 1
        } else {
            DEFAULT_GRID
        };
        let w = move |x: f64| -amp / (kappa * x).cosh().powi(2);
        let mut p = Self::new(vinf, x_max, n_grid, 4.0 * amp * (-2.0 * kappa * x_max).exp(), w)?;
        p.label = format!("kdv:{n}:{kappa}:{c}");
        // Psi_+(0, x) = sech^{n-1} tanh / 2^{n-1} after rescaling kappa x
        let e = nf - 1.0;
        let scale = 2f64.powf(e);
        p.zero_mode = Some(Arc::new(move |x: f64| {
            let t = kappa * x;
            let s = 1.0 / t.cosh();
            let th = t.tanh();
            let v = s.powf(e) * th / scale;
            let d = kappa * s.powf(e) * (s * s - e * th * th) / scale;
            (v, d)
        }));
        Ok(p)
    }

    /// Potential tabulated in a file with `# v_infinity = ` and `# tail_bound = ` headers.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::pre(format!("cannot read {}: {e}", path.display())))?;
        Self::from_table(&text, &path.display().to_string())
    }

    pub fn from_table(text: &str, label: &str) -> Result<Self> {
        let mut vinf = None;
        let mut tail = None;
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                if let Some((k, v)) = h.split_once('=') {
                    let v: f64 = v.trim().parse().map_err(|_| Error::pre(format!("bad header value: {line}")))?;
                    match k.trim() {
                        "v_infinity" => vinf = Some(v),
                        "tail_bound" => tail = Some(v),
                        _ => {}
                    }
                }
                continue;
            }
            let cols: Vec<&str> = line.split(|ch: char| ch.is_whitespace() || ch == ',').filter(|s| !s.is_empty()).collect();
            if cols.len() < 2 {
                return Err(Error::pre(format!("expected two columns: {line}")));
            }
            let x: f64 = cols[0].parse().map_err(|_| Error::pre(format!("bad number: {line}")))?;
            let w: f64 = cols[1].parse().map_err(|_| Error::pre(format!("bad number: {line}")))?;
            xs.push(x);
            ws.push(w);
        }
        let vinf = vinf.ok_or_else(|| Error::pre("missing header `# v_infinity = <val>`"))?;
        let tail = tail.ok_or_else(|| Error::pre("missing header `# tail_bound = <val>`"))?;
        if xs.len() < 4 {
            return Err(Error::pre("potential table needs at least four rows"));
        }
        let (x0, x1) = (xs[0], xs[xs.len() - 1]);
        if !(x0 < 0.0 && x1 > 0.0) {
            return Err(Error::pre("table must cover an interval around 0"));
        }
        let x_max = (-x0).min(x1);
        let spline = CubicSpline::new(xs, ws)?;
        let n_grid = ((x_max / DEFAULT_X) * (DEFAULT_GRID - 1) as f64).ceil().max(400.0) as usize + 1;
        let mut p = Self::new(vinf, x_max, n_grid, tail, move |x| {
            if x.abs() > x_max {
                0.0
            } else {
                spline.eval(x)
            }
        })?;
        p.label = label.to_string();
        Ok(p)
    }

    pub fn w(&self, x: f64) -> f64 {
        (self.w)(x)
    }

    pub fn w_fn(&self) -> RealFn {
        self.w.clone()
    }

    /// Uniform marching grid on `[-X, X]`.
    pub fn grid(&self) -> Vec<f64> {
        uniform(-self.x_max, self.x_max, self.n_grid)
    }

    pub fn samples(&self) -> Vec<f64> {
        self.grid().iter().map(|x| self.w(*x)).collect()
    }

    /// Closed-form `(Psi_+(0,x), Psi_+'(0,x))` for built-in families.
    pub fn analytic_zero_mode(&self) -> Option<PairFn> {
        self.zero_mode.clone()
    }

    pub fn with_grid(&self, x_max: f64, n_grid: usize) -> Result<Self> {
        if !(x_max > 0.0) || n_grid < 3 {
            return Err(Error::pre("grid needs X > 0 and at least 3 points"));
        }
        let mut p = self.clone();
        p.x_max = x_max;
        p.n_grid = n_grid;
        Ok(p)
    }

    /// Attach a closed-form `(Psi_+(0,x), Psi_+'(0,x))`.
    pub fn with_zero_mode(mut self, f: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        self.zero_mode = Some(Arc::new(f));
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `W(x) -> g W(x)`.
    pub fn scaled(&self, g: f64) -> Self {
        let w = self.w.clone();
        let mut p = self.clone();
        p.w = Arc::new(move |x| g * w(x));
        p.zero_mode = None;
        p.label = format!("{}*{g}", self.label);
        p
    }

    /// `W(x) -> W(x + y)`.
    pub fn shifted(&self, y: f64) -> Self {
        let w = self.w.clone();
        let mut p = self.clone();
        p.w = Arc::new(move |x| w(x + y));
        p.zero_mode = self.zero_mode.clone().map(|f| Arc::new(move |x: f64| f(x + y)) as PairFn);
        p.label = format!("{}@{y}", self.label);
        p
    }

    /// `W(x) -> W(-x)`.
    pub fn reflected(&self) -> Self {
        let w = self.w.clone();
        let mut p = self.clone();
        p.w = Arc::new(move |x| w(-x));
        p.zero_mode = None;
        p
    }
}

/// `k = (z - V_inf)^{1/2}` with `Im k > 0`.
pub fn wavenumber(v_infinity: f64, z: C64) -> Result<C64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::pre("z must be finite"));
    }
    if z.im == 0.0 && z.re >= v_infinity {
        return Err(Error::pre(format!("branch cut: z = {} lies on [V_inf, inf)", z.re)));
    }
    let k = I * (c(v_infinity) - z).sqrt();
    if !(k.im > 0.0) {
        return Err(Error::pre("branch cut: Im k must be positive"));
    }
    Ok(k)
}

/// Marching options.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MarchOptions {
    /// Combine grids of `N` and `2N - 1` points.
    pub richardson: bool,
}

impl Default for MarchOptions {
    fn default() -> Self {
        MarchOptions { richardson: true }
    }
}

/// Rescaled solution of `phi = g - int_x^X (1 - e^{2ik(y-x)})/(2ik) W phi dy`
/// on a uniform grid, with its derivative.
struct March {
    phi: Vec<C64>,
    dphi: Vec<C64>,
    /// `1 - (1/2ik) int W phi` over the whole grid when `g = 1`.
    total: C64,
}

fn march_raw(w: &[f64], h: f64, k: C64, g: &dyn Fn(usize) -> (C64, C64)) -> March {
    let n = w.len();
    let mut phi = vec![c(0.0); n];
    let mut dphi = vec![c(0.0); n];
    let two_ik = 2.0 * I * k;
    let e = (two_ik * h).exp();
    let (g0, dg0) = g(n - 1);
    phi[n - 1] = g0;
    dphi[n - 1] = dg0;
    let mut s = c(0.0);
    let mut t = c(0.0);
    for i in (0..n - 1).rev() {
        let cw = if i + 1 == n - 1 { 0.5 } else { 1.0 };
        let inc = phi[i + 1] * (h * cw * w[i + 1]);
        s += inc;
        t = e * (t + inc);
        let (gi, dgi) = g(i);
        phi[i] = gi - (s - t) / two_ik;
        dphi[i] = dgi - (t + phi[i] * (0.5 * h * w[i]));
    }
    let total = c(1.0) - (s + phi[0] * (0.5 * h * w[0])) / two_ik;
    March { phi, dphi, total }
}

fn march_jost(w: &[f64], h: f64, k: C64) -> March {
    march_raw(w, h, k, &|_| (c(1.0), c(0.0)))
}

fn richardson(coarse: March, fine: March) -> March {
    let n = coarse.phi.len();
    let comb = |a: C64, b: C64| (b * 4.0 - a) / 3.0;
    March {
        phi: (0..n).map(|i| comb(coarse.phi[i], fine.phi[2 * i])).collect(),
        dphi: (0..n).map(|i| comb(coarse.dphi[i], fine.dphi[2 * i])).collect(),
        total: comb(coarse.total, fine.total),
    }
}

fn fine_samples(p: &Potential1D, reflect: bool) -> (Vec<f64>, Vec<f64>) {
    let xs = uniform(-p.x_max, p.x_max, 2 * p.n_grid - 1);
    let sgn = if reflect { -1.0 } else { 1.0 };
    let ws = xs.iter().map(|x| p.w(sgn * x)).collect();
    (xs, ws)
}

/// Right Jost solution in rescaled form on the potential's grid (or its reflection).
fn rescaled_plus(p: &Potential1D, k: C64, reflect: bool, opts: MarchOptions) -> March {
    let (xf, wf) = fine_samples(p, reflect);
    let wc: Vec<f64> = wf.iter().step_by(2).cloned().collect();
    let hc = 2.0 * (xf[1] - xf[0]);
    let coarse = march_jost(&wc, hc, k);
    if !opts.richardson {
        return coarse;
    }
    let fine = march_jost(&wf, xf[1] - xf[0], k);
    richardson(coarse, fine)
}

/// Both Jost solutions at one spectral parameter.
#[derive(Debug, Clone, Serialize)]
pub struct JostSolution {
    pub z: C64,
    pub k: C64,
    pub x: Vec<f64>,
    pub psi_plus: Vec<C64>,
    pub dpsi_plus: Vec<C64>,
    pub psi_minus: Vec<C64>,
    pub dpsi_minus: Vec<C64>,
    /// `exp(-ikx) Psi_+` and its derivative.
    pub m_plus: Vec<C64>,
    pub dm_plus: Vec<C64>,
    /// `exp(ikx) Psi_-` and its derivative.
    pub m_minus: Vec<C64>,
    pub dm_minus: Vec<C64>,
    /// Integral-form Jost function from the right march.
    pub f_integral: C64,
}

impl JostSolution {
    /// `Wr(Psi_-, Psi_+)(x_i) / (2ik)`.
    pub fn wronskian_over_2ik(&self, i: usize) -> C64 {
        let (mp, dmp, mm, dmm) = (self.m_plus[i], self.dm_plus[i], self.m_minus[i], self.dm_minus[i]);
        let two_ik = 2.0 * I * self.k;
        (two_ik * mm * mp + mm * dmp - dmm * mp) / two_ik
    }

    fn conj(mut self) -> Self {
        let cj = |v: &mut Vec<C64>| v.iter_mut().for_each(|a| *a = a.conj());
        self.z = self.z.conj();
        self.k = -self.k.conj();
        cj(&mut self.psi_plus);
        cj(&mut self.dpsi_plus);
        cj(&mut self.psi_minus);
        cj(&mut self.dpsi_minus);
        cj(&mut self.m_plus);
        cj(&mut self.dm_plus);
        cj(&mut self.m_minus);
        cj(&mut self.dm_minus);
        self.f_integral = self.f_integral.conj();
        self
    }
}

/// Jost solutions `Psi_+-(z, .)` on the potential's grid.
pub fn solve_jost(p: &Potential1D, z: C64) -> Result<JostSolution> {
    solve_jost_with(p, z, MarchOptions::default())
}

pub fn solve_jost_with(p: &Potential1D, z: C64, opts: MarchOptions) -> Result<JostSolution> {
    if z.im < 0.0 {
        return Ok(solve_jost_with(p, z.conj(), opts)?.conj());
    }
    let k = wavenumber(p.v_infinity, z)?;
    let plus = rescaled_plus(p, k, false, opts);
    let refl = rescaled_plus(p, k, true, opts);
    let x = p.grid();
    let n = x.len();
    let m_minus: Vec<C64> = (0..n).map(|i| refl.phi[n - 1 - i]).collect();
    let dm_minus: Vec<C64> = (0..n).map(|i| -refl.dphi[n - 1 - i]).collect();
    let mut psi_plus = Vec::with_capacity(n);
    let mut dpsi_plus = Vec::with_capacity(n);
    let mut psi_minus = Vec::with_capacity(n);
    let mut dpsi_minus = Vec::with_capacity(n);
    for i in 0..n {
        let e = (I * k * x[i]).exp();
        psi_plus.push(e * plus.phi[i]);
        dpsi_plus.push(e * (I * k * plus.phi[i] + plus.dphi[i]));
        let em = (-I * k * x[i]).exp();
        psi_minus.push(em * m_minus[i]);
        dpsi_minus.push(em * (-I * k * m_minus[i] + dm_minus[i]));
    }
    Ok(JostSolution {
        z,
        k,
        x,
        psi_plus,
        dpsi_plus,
        psi_minus,
        dpsi_minus,
        m_plus: plus.phi,
        dm_plus: plus.dphi,
        m_minus,
        dm_minus,
        f_integral: plus.total,
    })
}

/// How to evaluate the Jost function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JostMethod {
    Wronskian,
    Integral,
}

/// The Jost function `F(z)`.
pub fn jost_function(p: &Potential1D, z: C64, method: JostMethod) -> Result<C64> {
    if z.im < 0.0 {
        return Ok(jost_function(p, z.conj(), method)?.conj());
    }
    let k = wavenumber(p.v_infinity, z)?;
    let opts = MarchOptions::default();
    match method {
        JostMethod::Integral => Ok(rescaled_plus(p, k, false, opts).total),
        JostMethod::Wronskian => {
            let sol = solve_jost_with(p, z, opts)?;
            Ok(sol.wronskian_over_2ik(sol.x.len() / 2))
        }
    }
}

/// `F'(lambda_j)` at an eigenvalue via `-(1/2 kappa) int Psi_- Psi_+`.
pub fn jost_derivative_at_eigenvalue(p: &Potential1D, lambda_j: f64, policy: &NumericPolicy) -> Result<C64> {
    if lambda_j >= p.v_infinity {
        return Err(Error::pre("eigenvalue must lie below V_inf"));
    }
    let sol = solve_jost(p, c(lambda_j))?;
    let f = sol.f_integral;
    if f.norm() >= policy.eigen_tol {
        return Err(Error::pre(format!("{lambda_j} is not an eigenvalue: |F| = {:.3e}", f.norm())));
    }
    let prod: Vec<C64> = sol.m_minus.iter().zip(&sol.m_plus).map(|(a, b)| a * b).collect();
    let h = sol.x[1] - sol.x[0];
    let integral = trapz(h, &prod);
    let kappa = (p.v_infinity - lambda_j).sqrt();
    Ok(-integral / (2.0 * kappa))
}

/// Auxiliary solutions at `z = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct AuxSolution {
    pub x: Vec<f64>,
    pub psi_plus_aux: Vec<f64>,
    pub dpsi_plus_aux: Vec<f64>,
    pub psi_minus_aux: Vec<f64>,
    pub dpsi_minus_aux: Vec<f64>,
    /// `exp(+-s x) psi_+-` with `s = V_inf^{1/2}`.
    pub phi_plus: Vec<f64>,
    pub dphi_plus: Vec<f64>,
    pub phi_minus: Vec<f64>,
    pub dphi_minus: Vec<f64>,
    /// Jost data at `z = 0` used as forcing.
    pub jost: JostSolution,
    /// Largest residual of `-psi'' + V psi = W Psi` over the interior.
    pub residual: f64,
}

fn aux_rescaled(p: &Potential1D, reflect: bool, opts: MarchOptions) -> (March, March) {
    let s = p.v_infinity.sqrt();
    let k = I * s;
    let (xf, wf) = fine_samples(p, reflect);
    let hf = xf[1] - xf[0];
    let wc: Vec<f64> = wf.iter().step_by(2).cloned().collect();
    let run = |w: &[f64], h: f64| {
        let m = march_jost(w, h, k);
        let phi = march_raw(w, h, k, &|i| (-m.phi[i], -m.dphi[i]));
        (m, phi)
    };
    let (mc, pc) = run(&wc, 2.0 * hf);
    if !opts.richardson {
        return (mc, pc);
    }
    let (mf, pf) = run(&wf, hf);
    (richardson(mc, mf), richardson(pc, pf))
}

/// Bounded solutions `psi_+-` of the auxiliary Volterra equations at `z = 0`.
pub fn solve_aux(p: &Potential1D, policy: &NumericPolicy) -> Result<AuxSolution> {
    let opts = MarchOptions::default();
    let jost = solve_jost_with(p, c(0.0), opts)?;
    if jost.f_integral.norm() >= policy.eigen_tol {
        return Err(Error::pre(format!(
            "0 is not an eigenvalue: |F(0)| = {:.3e}",
            jost.f_integral.norm()
        )));
    }
    let s = p.v_infinity.sqrt();
    let (_, plus) = aux_rescaled(p, false, opts);
    let (_, refl) = aux_rescaled(p, true, opts);
    let x = jost.x.clone();
    let n = x.len();
    let phi_plus: Vec<f64> = plus.phi.iter().map(|v| v.re).collect();
    let dphi_plus: Vec<f64> = plus.dphi.iter().map(|v| v.re).collect();
    let phi_minus: Vec<f64> = (0..n).map(|i| refl.phi[n - 1 - i].re).collect();
    let dphi_minus: Vec<f64> = (0..n).map(|i| -refl.dphi[n - 1 - i].re).collect();
    let mut psi_plus_aux = Vec::with_capacity(n);
    let mut dpsi_plus_aux = Vec::with_capacity(n);
    let mut psi_minus_aux = Vec::with_capacity(n);
    let mut dpsi_minus_aux = Vec::with_capacity(n);
    for i in 0..n {
        let ep = (-s * x[i]).exp();
        psi_plus_aux.push(ep * phi_plus[i]);
        dpsi_plus_aux.push(ep * (dphi_plus[i] - s * phi_plus[i]));
        let em = (s * x[i]).exp();
        psi_minus_aux.push(em * phi_minus[i]);
        dpsi_minus_aux.push(em * (dphi_minus[i] + s * phi_minus[i]));
    }
    // -phi'' + 2 s phi' + W phi = W m_+ in rescaled variables
    let h = x[1] - x[0];
    let w = p.samples();
    let mut residual: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for i in 2..n - 2 {
        let d2p = (-dphi_plus[i + 2] + 8.0 * dphi_plus[i + 1] - 8.0 * dphi_plus[i - 1] + dphi_plus[i - 2]) / (12.0 * h);
        let rp = -d2p + 2.0 * s * dphi_plus[i] + w[i] * phi_plus[i] - w[i] * jost.m_plus[i].re;
        let d2m = (-dphi_minus[i + 2] + 8.0 * dphi_minus[i + 1] - 8.0 * dphi_minus[i - 1] + dphi_minus[i - 2]) / (12.0 * h);
        let rm = -d2m - 2.0 * s * dphi_minus[i] + w[i] * phi_minus[i] - w[i] * jost.m_minus[i].re;
        residual = residual.max(rp.abs()).max(rm.abs());
        scale = scale.max((w[i] * jost.m_plus[i].re).abs());
    }
    let residual = residual / scale;
    if residual > policy.ode_residual_tol {
        return Err(Error::num(format!("auxiliary solution residual {residual:.3e} too large")));
    }
    Ok(AuxSolution {
        x,
        psi_plus_aux,
        dpsi_plus_aux,
        psi_minus_aux,
        dpsi_minus_aux,
        phi_plus,
        dphi_plus,
        phi_minus,
        dphi_minus,
        jost,
        residual,
    })
}

/// Simple real eigenvalues in `[a, b]` from sign changes of `F` on the real axis.
pub fn locate_eigenvalues(p: &Potential1D, bracket: (f64, f64)) -> Result<Vec<f64>> {
    let (a, b) = bracket;
    if !(a < b) || b >= p.v_infinity {
        return Err(Error::pre("bracket must be an interval below V_inf"));
    }
    let f = |l: f64| -> Result<f64> { Ok(jost_function(p, c(l), JostMethod::Integral)?.re) };
    let n = 400;
    let ls: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let vals: Vec<Result<f64>> = ls.par_iter().map(|l| f(*l)).collect();
    let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    let mut roots = Vec::new();
    for i in 0..n {
        let (mut lo, mut hi, mut flo, fhi) = (ls[i], ls[i + 1], vals[i], vals[i + 1]);
        if flo == 0.0 {
            roots.push(lo);
            continue;
        }
        if flo * fhi > 0.0 || fhi == 0.0 && i + 1 < n {
            continue;
        }
        for _ in 0..200 {
            if hi - lo < 1e-12 * (1.0 + lo.abs()) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let fm = f(mid)?;
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if flo * fm < 0.0 {
                hi = mid;
            } else {
                lo = mid;
                flo = fm;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    if vals[n] == 0.0 {
        roots.push(b);
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_solutions_are_exponentials() {
        let p = Potential1D::free(1.0).unwrap();
        let sol = solve_jost(&p, c(-3.0)).unwrap();
        for (i, x) in sol.x.iter().enumerate().step_by(97) {
            assert!((sol.psi_plus[i] - c((-2.0 * x).exp())).norm() <= 1e-12 * (-2.0 * x).exp().max(1.0));
            assert!((sol.psi_minus[i] - c((2.0 * x).exp())).norm() <= 1e-12 * (2.0 * x).exp().max(1.0));
        }
        for z in [c(-3.0), C64::new(0.5, 2.0), C64::new(-1.0, -1.0)] {
            for m in [JostMethod::Integral, JostMethod::Wronskian] {
                assert!((jost_function(&p, z, m).unwrap() - c(1.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn branch_cut_is_refused() {
        let p = Potential1D::free(1.0).unwrap();
        let e = jost_function(&p, c(2.0), JostMethod::Integral).unwrap_err();
        assert!(matches!(e, Error::Precondition(ref s) if s.contains("branch cut")));
    }

    #[test]
    fn kdv_two_values() {
        let p = Potential1D::kdv(2, 1.0, 1.0).unwrap();
        let f = jost_function(&p, c(-8.0), JostMethod::Integral).unwrap();
        assert!((f - c(0.1)).norm() < 1e-8, "{f}");
        let f0 = jost_function(&p, c(0.0), JostMethod::Wronskian).unwrap();
        assert!(f0.norm() < 1e-8);
        let d = jost_derivative_at_eigenvalue(&p, 0.0, &NumericPolicy::default()).unwrap();
        assert!((d - c(1.0 / 12.0)).norm() < 1e-6, "{d}");
    }
}
