//! Galerkin truncation of Schrödinger operators on `R x [0, 2pi]^{d-1}`.
//!
//! A potential is stored through its transverse Fourier coefficients
//! `W_m(x1)`. Truncating to modes `|j| <= J` gives an `N_J`-channel problem on
//! the line whose kernel, trace, Evans function and 2-modified determinant are
//! computed here.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::linalg::QR;
use serde::Serialize;

use crate::kink::{assemble, det_corrected, trace_exact, ExpKernel};
use crate::matdet::log_det;
use crate::quad::{simpson, uniform, CubicSpline, NystromGrid};
use crate::semisep::{det_semiseparable, lawson_step, SemiSeparableKernel};
use crate::volterra::Potential1D;
use crate::{c, CMat, Error, Result, C64};

pub type WaveVector = Vec<i32>;

/// Default number of Nyström nodes on `[-X, X]`.
pub const DEFAULT_NODES: usize = 200;
/// Largest dense matrix assembled.
pub const MAX_MATRIX: usize = 12000;

fn norm_sq(m: &[i32]) -> i64 {
    m.iter().map(|v| (*v as i64) * (*v as i64)).sum()
}

fn sub(a: &[i32], b: &[i32]) -> WaveVector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn neg(a: &[i32]) -> WaveVector {
    a.iter().map(|v| -v).collect()
}

/// Transverse Fourier coefficients of `W = V - V_inf`.
#[derive(Debug, Clone, Serialize)]
pub struct FourierPotential {
    pub d: usize,
    pub v_infinity: f64,
    /// Uniform `x1` grid.
    pub x: Vec<f64>,
    /// Nonvanishing coefficients; wave vectors absent from the map are zero.
    #[serde(skip)]
    pub coefficients: BTreeMap<WaveVector, Vec<C64>>,
    /// Coefficients are known for `|m| <= m_max`; `None` means all of them.
    pub m_max: Option<usize>,
    pub aliasing_warning: Option<String>,
    /// Relative energy not captured by the stored modes.
    pub parseval_defect: f64,
    #[serde(skip)]
    splines: BTreeMap<WaveVector, (CubicSpline, CubicSpline)>,
}

impl FourierPotential {
    pub fn new(
        d: usize,
        v_infinity: f64,
        x: Vec<f64>,
        coefficients: BTreeMap<WaveVector, Vec<C64>>,
        m_max: Option<usize>,
    ) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::pre("d must be 2 or 3"));
        }
        if !(v_infinity > 0.0) {
            return Err(Error::pre("V_inf must be positive"));
        }
        if x.len() < 5 {
            return Err(Error::pre("x1 grid too short"));
        }
        let h = x[1] - x[0];
        if x.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0)) || !(h > 0.0) {
            return Err(Error::pre("x1 grid must be uniform and increasing"));
        }
        let mut coefs = BTreeMap::new();
        for (m, v) in coefficients {
            if m.len() != d - 1 {
                return Err(Error::pre(format!("wave vector {m:?} has the wrong length")));
            }
            if v.len() != x.len() {
                return Err(Error::pre(format!("coefficient {m:?} does not match the x1 grid")));
            }
            if v.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
                return Err(Error::pre(format!("coefficient {m:?} has non-finite samples")));
            }
            if v.iter().any(|a| *a != c(0.0)) {
                coefs.insert(m, v);
            }
        }
        // reality: W_{-m} = conj(W_m)
        for (m, v) in &coefs {
            let scale = v.iter().map(|a| a.norm()).fold(0.0, f64::max);
            let mirror = coefs.get(&neg(m));
            let defect = match mirror {
                Some(w) => v.iter().zip(w).map(|(a, b)| (a - b.conj()).norm()).fold(0.0, f64::max),
                None => scale,
            };
            if defect > 1e-10 * scale.max(1e-300) {
                return Err(Error::pre(format!("coefficients violate W_-m = conj(W_m) at m = {m:?}")));
            }
        }
        let mut splines = BTreeMap::new();
        for (m, v) in &coefs {
            let re = CubicSpline::new(x.clone(), v.iter().map(|a| a.re).collect())?;
            let im = CubicSpline::new(x.clone(), v.iter().map(|a| a.im).collect())?;
            splines.insert(m.clone(), (re, im));
        }
        Ok(FourierPotential {
            d,
            v_infinity,
            x,
            coefficients: coefs,
            m_max,
            aliasing_warning: None,
            parseval_defect: 0.0,
            splines,
        })
    }

    /// `W(x1, y) = W(x1)`.
    pub fn planar(p: &Potential1D, d: usize) -> Result<Self> {
        let mut map = BTreeMap::new();
        map.insert(vec![0; d.saturating_sub(1)], p.samples().into_iter().map(c).collect());
        Self::new(d, p.v_infinity, p.grid(), map, None)
    }

    /// `W(x1, y) = W(x1)(1 + eps cos y_1)`.
    pub fn cosine(p: &Potential1D, d: usize, eps: f64) -> Result<Self> {
        let w: Vec<C64> = p.samples().into_iter().map(c).collect();
        let mut map = BTreeMap::new();
        let zero = vec![0; d.saturating_sub(1)];
        map.insert(zero.clone(), w.clone());
        if eps != 0.0 && d >= 2 {
            let mut e = zero;
            e[0] = 1;
            let half: Vec<C64> = w.iter().map(|v| v * (0.5 * eps)).collect();
            map.insert(neg(&e), half.clone());
            map.insert(e, half);
        }
        Self::new(d, p.v_infinity, p.grid(), map, None)
    }

    pub fn zero(d: usize, v_infinity: f64) -> Result<Self> {
        Self::new(d, v_infinity, uniform(-20.0, 20.0, 4001), BTreeMap::new(), None)
    }

    /// Read `# d = `, `# v_infinity = ` headers and rows `m.. x1 re im`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::pre(format!("cannot read {}: {e}", path.display())))?;
        Self::from_table(&text)
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut d = None;
        let mut vinf = None;
        let mut rows: BTreeMap<WaveVector, Vec<(f64, C64)>> = BTreeMap::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                if let Some((k, v)) = h.split_once('=') {
                    let v = v.trim();
                    match k.trim() {
                        "d" => d = Some(v.parse::<usize>().map_err(|_| Error::pre(format!("bad d: {v}")))?),
                        "v_infinity" => {
                            vinf = Some(v.parse::<f64>().map_err(|_| Error::pre(format!("bad v_infinity: {v}")))?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let d = d.ok_or_else(|| Error::pre("the `# d =` header must precede the data"))?;
            let f: Vec<&str> = line.split(|ch: char| ch == ',' || ch.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if f.len() != d + 2 {
                return Err(Error::pre(format!("line {}: expected {} columns", ln + 1, d + 2)));
            }
            let bad = || Error::pre(format!("line {}: unparsable value", ln + 1));
            let m: WaveVector = f[..d - 1].iter().map(|s| s.parse::<i32>().map_err(|_| bad())).collect::<Result<_>>()?;
            let x: f64 = f[d - 1].parse().map_err(|_| bad())?;
            let re: f64 = f[d].parse().map_err(|_| bad())?;
            let im: f64 = f[d + 1].parse().map_err(|_| bad())?;
            rows.entry(m).or_default().push((x, C64::new(re, im)));
        }
        let d = d.ok_or_else(|| Error::pre("missing `# d =` header"))?;
        let vinf = vinf.ok_or_else(|| Error::pre("missing `# v_infinity =` header"))?;
        let mut x: Option<Vec<f64>> = None;
        let mut map = BTreeMap::new();
        let mut m_max = 0usize;
        for (m, mut r) in rows {
            r.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let xs: Vec<f64> = r.iter().map(|t| t.0).collect();
            match &x {
                None => x = Some(xs),
                Some(g) if *g != xs => return Err(Error::pre(format!("mode {m:?} uses a different x1 grid"))),
                _ => {}
            }
            m_max = m_max.max((norm_sq(&m) as f64).sqrt().floor() as usize);
            map.insert(m, r.into_iter().map(|t| t.1).collect());
        }
        let x = x.ok_or_else(|| Error::pre("no coefficient rows"))?;
        Self::new(d, vinf, x, map, Some(m_max))
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    fn h(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    fn check_available(&self, m: &[i32]) -> Result<()> {
        if let Some(mm) = self.m_max {
            if norm_sq(m) > (mm * mm) as i64 {
                return Err(Error::pre(format!("coefficient for wave vector {m:?} is not available")));
            }
        }
        Ok(())
    }

    /// Samples of `W_m`, `None` when the coefficient vanishes.
    pub fn samples(&self, m: &[i32]) -> Result<Option<&Vec<C64>>> {
        self.check_available(m)?;
        Ok(self.coefficients.get(m))
    }

    /// `W_m(x)` by cubic interpolation.
    pub fn coefficient(&self, m: &[i32], x: f64) -> Result<C64> {
        self.check_available(m)?;
        Ok(match self.splines.get(m) {
            Some((re, im)) => C64::new(re.eval(x), im.eval(x)),
            None => c(0.0),
        })
    }

    /// `int W_0 dx1`.
    pub fn integral_w0(&self) -> C64 {
        match self.coefficients.get(&vec![0; self.d - 1]) {
            Some(v) => simpson(self.h(), v),
            None => c(0.0),
        }
    }

    /// `||W_m||_{L^2}^2`.
    pub fn l2_sq(&self, m: &[i32]) -> f64 {
        match self.coefficients.get(m) {
            Some(v) => simpson(self.h(), &v.iter().map(|a| a.norm_sqr()).collect::<Vec<_>>()),
            None => 0.0,
        }
    }

    pub fn is_planar(&self) -> bool {
        self.coefficients.keys().all(|m| m.iter().all(|v| *v == 0))
    }

    /// Nonvanishing `(j, m)` pairs of a truncation with their wave vector `j - m`.
    fn coupled_pairs(&self, t: &GalerkinTruncation) -> Result<Vec<(usize, usize, WaveVector)>> {
        let mut out = Vec::new();
        let mut missing = Vec::new();
        for (a, ja) in t.mode_index.iter().enumerate() {
            for (b, jb) in t.mode_index.iter().enumerate() {
                let m = sub(ja, jb);
                if self.check_available(&m).is_err() {
                    if !missing.contains(&m) {
                        missing.push(m);
                    }
                    continue;
                }
                if self.coefficients.contains_key(&m) {
                    out.push((a, b, m));
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::pre(format!("missing Fourier coefficients for wave vectors {missing:?}")));
        }
        Ok(out)
    }
}

/// `W` sampled on an `x1` grid times a uniform periodic `y` grid.
#[derive(Debug, Clone)]
pub struct TransverseSamples {
    pub d: usize,
    pub v_infinity: f64,
    pub x: Vec<f64>,
    /// Points per transverse direction, `y_l = 2 pi l / n_y`.
    pub n_y: usize,
    /// Row-major: `x` index, then `y_1`, then `y_2`.
    pub values: Vec<f64>,
}

impl TransverseSamples {
    pub fn from_fn(d: usize, v_infinity: f64, x: Vec<f64>, n_y: usize, w: impl Fn(f64, &[f64]) -> f64) -> Self {
        let per = n_y.pow(d as u32 - 1);
        let mut values = Vec::with_capacity(x.len() * per);
        for xv in &x {
            for l in 0..per {
                let y: Vec<f64> = transverse_index(l, n_y, d)
                    .iter()
                    .map(|i| 2.0 * std::f64::consts::PI * *i as f64 / n_y as f64)
                    .collect();
                values.push(w(*xv, &y));
            }
        }
        TransverseSamples { d, v_infinity, x, n_y, values }
    }
}

fn transverse_index(l: usize, n_y: usize, d: usize) -> Vec<usize> {
    if d == 2 {
        vec![l]
    } else {
        vec![l / n_y, l % n_y]
    }
}

/// Wave vectors with `|m| <= r`, lexicographic.
pub fn modes_within(d: usize, r: usize) -> Vec<WaveVector> {
    let ri = r as i32;
    let r2 = (r * r) as i64;
    let mut out = Vec::new();
    if d == 2 {
        for a in -ri..=ri {
            out.push(vec![a]);
        }
    } else {
        for a in -ri..=ri {
            for b in -ri..=ri {
                let v = vec![a, b];
                if norm_sq(&v) <= r2 {
                    out.push(v);
                }
            }
        }
    }
    out
}

/// Discrete Fourier coefficients `W_m(x1) = mean_y W(x1, y) e^{-i m y}` for `|m| <= m_max`.
pub fn fourier_decompose(w: &TransverseSamples, m_max: usize) -> Result<FourierPotential> {
    let d = w.d;
    if d != 2 && d != 3 {
        return Err(Error::pre("d must be 2 or 3"));
    }
    if w.n_y <= 2 * m_max {
        return Err(Error::pre("transverse grid needs more than 2 m_max points"));
    }
    let per = w.n_y.pow(d as u32 - 1);
    if w.values.len() != per * w.x.len() {
        return Err(Error::pre("sample count does not match the grids"));
    }
    let ny = w.n_y as f64;
    let tw = 2.0 * std::f64::consts::PI / ny;
    let dft = |m: &[i32]| -> Vec<C64> {
        let phase: Vec<C64> = (0..per)
            .map(|l| {
                let idx = transverse_index(l, w.n_y, d);
                let s: f64 = idx.iter().zip(m).map(|(i, mm)| *i as f64 * *mm as f64).sum();
                C64::from_polar(1.0, -tw * s)
            })
            .collect();
        (0..w.x.len())
            .map(|i| {
                let row = &w.values[i * per..(i + 1) * per];
                row.iter().zip(&phase).map(|(v, e)| e * *v).sum::<C64>() / per as f64
            })
            .collect()
    };
    let h = w.x[1] - w.x[0];
    let mut map = BTreeMap::new();
    let mut captured = 0.0;
    for m in modes_within(d, m_max) {
        let v = dft(&m);
        captured += simpson_or_trapz(h, &v.iter().map(|a| a.norm_sqr()).collect::<Vec<_>>());
        let scale = v.iter().map(|a| a.norm()).fold(0.0, f64::max);
        if scale > 1e-14 {
            map.insert(m, v);
        }
    }
    let total_rows: Vec<f64> = (0..w.x.len())
        .map(|i| w.values[i * per..(i + 1) * per].iter().map(|v| v * v).sum::<f64>() / per as f64)
        .collect();
    let total = simpson_or_trapz(h, &total_rows);
    let mut aliasing = None;
    if w.n_y % 2 == 0 {
        let mut nyq = vec![0; d - 1];
        nyq[0] = (w.n_y / 2) as i32;
        let e = simpson_or_trapz(h, &dft(&nyq).iter().map(|a| a.norm_sqr()).collect::<Vec<_>>());
        if total > 0.0 && e > 1e-10 * total {
            aliasing = Some(format!("energy fraction {:.2e} at the Nyquist mode", e / total));
        }
    }
    // symmetrise against rounding
    let keys: Vec<WaveVector> = map.keys().cloned().collect();
    for m in keys {
        let mm = neg(&m);
        if m < mm {
            if let (Some(a), Some(b)) = (map.get(&m).cloned(), map.get(&mm).cloned()) {
                let avg: Vec<C64> = a.iter().zip(&b).map(|(p, q)| (p + q.conj()) * 0.5).collect();
                map.insert(mm, avg.iter().map(|v| v.conj()).collect());
                map.insert(m.clone(), avg);
            }
        }
        if m.iter().all(|v| *v == 0) {
            if let Some(v) = map.get_mut(&m) {
                v.iter_mut().for_each(|a| a.im = 0.0);
            }
        }
    }
    let mut fp = FourierPotential::new(d, w.v_infinity, w.x.clone(), map, Some(m_max))?;
    fp.aliasing_warning = aliasing;
    fp.parseval_defect = if total > 0.0 { 1.0 - captured / total } else { 0.0 };
    Ok(fp)
}

fn simpson_or_trapz(h: f64, v: &[f64]) -> f64 {
    if v.len() % 2 == 1 {
        simpson(h, v)
    } else {
        crate::quad::trapz(h, v)
    }
}

/// Transverse modes `|j| <= J`.
#[derive(Debug, Clone, Serialize)]
pub struct GalerkinTruncation {
    pub j: usize,
    pub d: usize,
    pub n_modes: usize,
    pub mode_index: Vec<WaveVector>,
}

impl GalerkinTruncation {
    pub fn new(d: usize, j: usize) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::pre("d must be 2 or 3"));
        }
        let mode_index = modes_within(d, j);
        Ok(GalerkinTruncation { j, d, n_modes: mode_index.len(), mode_index })
    }

    /// Masses `V_inf + |j|^2`.
    pub fn masses(&self, v_infinity: f64) -> Vec<f64> {
        self.mode_index.iter().map(|m| v_infinity + norm_sq(m) as f64).collect()
    }
}

fn check_dims(fp: &FourierPotential, t: &GalerkinTruncation) -> Result<()> {
    if fp.d != t.d {
        return Err(Error::pre("potential and truncation have different dimensions"));
    }
    Ok(())
}

/// `kappa_j = (V_inf + |j|^2 - z)^{1/2}`, `Re kappa_j > 0`.
pub fn channel_rates(fp: &FourierPotential, t: &GalerkinTruncation, z: C64) -> Result<Vec<C64>> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::pre("z must be finite"));
    }
    if z.im == 0.0 && z.re >= fp.v_infinity {
        return Err(Error::pre(format!("z = {} lies on the cut [V_inf, inf)", z.re)));
    }
    t.masses(fp.v_infinity)
        .into_iter()
        .map(|m| {
            let k = (c(m) - z).sqrt();
            if k.re > 0.0 {
                Ok(k)
            } else {
                Err(Error::pre("z lies on a shifted cut"))
            }
        })
        .collect()
}

/// `Theta_J(z) = -(1/2) int W_0 sum_j kappa_j^{-1}`.
pub fn theta_j(fp: &FourierPotential, t: &GalerkinTruncation, z: C64) -> Result<C64> {
    check_dims(fp, t)?;
    let k = channel_rates(fp, t, z)?;
    let s: C64 = k.iter().map(|v| 1.0 / v).sum();
    Ok(-0.5 * fp.integral_w0() * s)
}

/// Truncated multi-channel kernel.
#[derive(Debug, Clone)]
pub struct TruncatedKernel {
    pub z: C64,
    pub modes: Vec<WaveVector>,
    pub kappas: Vec<C64>,
    pub grid: NystromGrid,
    /// Block `(j, m)`: `-(1/2 kappa_j) e^{-kappa_j |x - x'|} W_{j-m}(x')`.
    pub blocks: ExpKernel,
    pub assembled: Option<CMat>,
}

impl TruncatedKernel {
    /// `tr K_J` by quadrature.
    pub fn trace(&self) -> C64 {
        trace_exact(&self.grid, &self.blocks)
    }
}

pub fn default_grid(fp: &FourierPotential) -> Result<NystromGrid> {
    NystromGrid::gauss_legendre(fp.x_max(), DEFAULT_NODES, 10)
}

pub fn assemble_truncated_kernel(
    fp: &FourierPotential,
    t: &GalerkinTruncation,
    z: C64,
    g: &NystromGrid,
    dense: bool,
) -> Result<TruncatedKernel> {
    check_dims(fp, t)?;
    let kappas = channel_rates(fp, t, z)?;
    let pairs = fp.coupled_pairs(t)?;
    let n = t.n_modes;
    if dense && n * g.len() > MAX_MATRIX {
        return Err(Error::pre(format!(
            "matrix size {} exceeds the cap {MAX_MATRIX}",
            n * g.len()
        )));
    }
    let mut cache: BTreeMap<WaveVector, Vec<C64>> = BTreeMap::new();
    let mut right = vec![vec![None; n]; n];
    for (a, b, m) in pairs {
        let s = cache
            .entry(m.clone())
            .or_insert_with(|| g.nodes.iter().map(|x| fp.coefficient(&m, *x).unwrap_or(c(0.0))).collect())
            .clone();
        right[a][b] = Some(s);
    }
    let blocks = ExpKernel {
        rates: kappas.clone(),
        coef: kappas.iter().map(|k| -1.0 / (2.0 * k)).collect(),
        left: None,
        right,
    };
    let assembled = if dense { Some(assemble(g, &blocks)?) } else { None };
    Ok(TruncatedKernel { z, modes: t.mode_index.clone(), kappas, grid: g.clone(), blocks, assembled })
}

/// Route for the 2-modified determinant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum F2Route {
    Nystrom,
    Semiseparable,
}

/// Semi-separable form of `K_J(z)` on the potential's `x1` grid.
pub fn truncated_semiseparable(fp: &FourierPotential, t: &GalerkinTruncation, z: C64) -> Result<SemiSeparableKernel> {
    check_dims(fp, t)?;
    let kappas = channel_rates(fp, t, z)?;
    let pairs = fp.coupled_pairs(t)?;
    let n = t.n_modes;
    let nx = fp.x.len();
    let p = CMat::identity(n, n) * c(-1.0);
    let mut qs = vec![CMat::zeros(n, n); nx];
    for (a, b, m) in &pairs {
        let s = fp.coefficients.get(m).expect("coupled pair has samples");
        // Q[(m, l)] = W_{l-m} / (2 kappa_l)
        for i in 0..nx {
            qs[i][(*b, *a)] = s[i] / (2.0 * kappas[*a]);
        }
    }
    let ps = vec![p; nx];
    SemiSeparableKernel::new(fp.x.clone(), kappas, ps.clone(), qs.clone(), ps, qs)
}

/// `F_{2,J}(z) = det2(I - K_J(z))`.
pub fn f2j(fp: &FourierPotential, t: &GalerkinTruncation, z: C64, route: F2Route) -> Result<C64> {
    match route {
        F2Route::Nystrom => {
            let g = default_grid(fp)?;
            f2j_nystrom(fp, t, z, &g)
        }
        F2Route::Semiseparable => {
            let k = truncated_semiseparable(fp, t, z)?;
            det_semiseparable(&k, true)
        }
    }
}

pub fn f2j_nystrom(fp: &FourierPotential, t: &GalerkinTruncation, z: C64, g: &NystromGrid) -> Result<C64> {
    let k = assemble_truncated_kernel(fp, t, z, g, true)?;
    crate::kink::det_corrected_with(g, &k.blocks, k.assembled.as_ref().unwrap(), None, true)
}

/// Unmodified `det(I - K_J(z))` by Nyström.
pub fn fj_nystrom(fp: &FourierPotential, t: &GalerkinTruncation, z: C64, g: &NystromGrid) -> Result<C64> {
    let k = assemble_truncated_kernel(fp, t, z, g, false)?;
    det_corrected(g, &k.blocks, None, false)
}

const REORTHO: usize = 50;

/// Coefficient `R(x)` of the diagonalised first-order system.
fn evans_core(fp: &FourierPotential, pairs: &[(usize, usize, WaveVector)], kappas: &[C64], x: f64) -> Result<CMat> {
    let n = kappas.len();
    let mut r = CMat::zeros(2 * n, 2 * n);
    for (a, b, m) in pairs {
        let v = 0.5 * fp.coefficient(m, x)? / kappas[*a];
        r[(*a, *b)] = -v;
        r[(*a, n + *b)] = -v;
        r[(n + *a, *b)] = v;
        r[(n + *a, n + *b)] = v;
    }
    Ok(r)
}

fn evans_half(
    fp: &FourierPotential,
    pairs: &[(usize, usize, WaveVector)],
    kappas: &[C64],
    lambda: &[C64],
    span: (f64, f64),
    steps: usize,
    top: bool,
) -> Result<(CMat, C64)> {
    let n = kappas.len();
    let mut u = CMat::zeros(2 * n, n);
    let off = if top { 0 } else { n };
    for j in 0..n {
        u[(off + j, j)] = c(1.0);
    }
    let h = (span.1 - span.0) / steps as f64;
    let mut log = c(0.0);
    let mut a0 = evans_core(fp, pairs, kappas, span.0)?;
    for s in 0..steps {
        let x0 = span.0 + h * s as f64;
        let am = evans_core(fp, pairs, kappas, x0 + 0.5 * h)?;
        let a1 = evans_core(fp, pairs, kappas, x0 + h)?;
        u = lawson_step(&u, lambda, &a0, &am, &a1, h);
        a0 = a1;
        if (s + 1) % REORTHO == 0 || s + 1 == steps {
            let qr = QR::new(u);
            let r = qr.r();
            for j in 0..n {
                log += r[(j, j)].ln();
            }
            u = qr.q();
            if u.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) || !log.re.is_finite() {
                return Err(Error::num("Evans frame overflow; reduce the step"));
            }
        }
    }
    Ok((u, log))
}

/// Step bound `0.1 / (V_inf + J^2 + |z|)^{1/2}`, at most 0.02.
pub fn evans_step(fp: &FourierPotential, t: &GalerkinTruncation, z: C64) -> f64 {
    (0.1 / (fp.v_infinity + (t.j * t.j) as f64 + z.norm()).sqrt()).min(0.02)
}

/// Galerkin Evans function, normalised to 1 for `W = 0`.
pub fn evans_ej(fp: &FourierPotential, t: &GalerkinTruncation, z: C64) -> Result<C64> {
    check_dims(fp, t)?;
    let kappas = channel_rates(fp, t, z)?;
    let pairs = fp.coupled_pairs(t)?;
    let n = t.n_modes;
    let mut lambda: Vec<C64> = kappas.iter().map(|k| -k).collect();
    lambda.extend(kappas.iter().cloned());
    let xm = fp.x_max();
    let x0 = fp.x[0];
    let hmax = evans_step(fp, t, z);
    let steps_r = (xm / hmax).ceil() as usize;
    let steps_l = (-x0 / hmax).ceil() as usize;
    let (up, lp) = evans_half(fp, &pairs, &kappas, &lambda, (xm, 0.0), steps_r, true)?;
    let (um, lm) = evans_half(fp, &pairs, &kappas, &lambda, (x0, 0.0), steps_l, false)?;
    let mut w = CMat::zeros(2 * n, 2 * n);
    w.view_mut((0, 0), (2 * n, n)).copy_from(&um);
    w.view_mut((0, n), (2 * n, n)).copy_from(&up);
    let ld = log_det(&w)?;
    if ld.zero {
        return Ok(c(0.0));
    }
    let ksum: C64 = kappas.iter().sum();
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * (ld.log + lp + lm - ksum * (xm - x0)).exp())
}

/// `F_{2,J}` against `e^{Theta_J} E_J`.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub j: usize,
    pub z: C64,
    pub f2j: C64,
    pub theta: C64,
    pub ej: C64,
    pub residual: f64,
}

pub fn equivalence_check(fp: &FourierPotential, t: &GalerkinTruncation, z: C64) -> Result<EquivalenceReport> {
    let f = f2j(fp, t, z, F2Route::Nystrom)?;
    let theta = theta_j(fp, t, z)?;
    let e = evans_ej(fp, t, z)?;
    let residual = (f - theta.exp() * e).norm() / f.norm().max(1.0);
    Ok(EquivalenceReport { j: t.j, z, f2j: f, theta, ej: e, residual })
}

/// `||K_J||_HS^2` on the line, `sum_{j,m} ||W_{j-m}||^2 / (4 |kappa_j|^2 Re kappa_j)`.
pub fn hs_norm_sq(fp: &FourierPotential, t: &GalerkinTruncation, z: C64) -> Result<f64> {
    hs_distance_sq(fp, None, t, z)
}

/// `||K_ref - K_J||_HS^2`; `small = None` gives the full norm of `K_ref`.
pub fn hs_distance_sq(
    fp: &FourierPotential,
    small: Option<&GalerkinTruncation>,
    reference: &GalerkinTruncation,
    z: C64,
) -> Result<f64> {
    check_dims(fp, reference)?;
    let kappas = channel_rates(fp, reference, z)?;
    let pairs = fp.coupled_pairs(reference)?;
    let inside = |m: &WaveVector| match small {
        Some(s) => norm_sq(m) <= (s.j * s.j) as i64,
        None => false,
    };
    let mut norms: BTreeMap<WaveVector, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (a, b, m) in pairs {
        if inside(&reference.mode_index[a]) && inside(&reference.mode_index[b]) {
            continue;
        }
        let l2 = *norms.entry(m.clone()).or_insert_with(|| fp.l2_sq(&m));
        let k = kappas[a];
        total += l2 / (4.0 * k.norm_sqr() * k.re);
    }
    Ok(total)
}

/// One line of a convergence table.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub j: usize,
    pub hs_distance: f64,
    pub f2j: C64,
    pub f_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub z: C64,
    pub j_ref: usize,
    pub rows: Vec<ConvergenceRow>,
    pub hs_slope: f64,
    pub f_slope: f64,
    pub hs_monotone: bool,
    pub f_monotone: bool,
    /// Upper bound `(d - 4)/4` for the HS slope.
    pub slope_bound: f64,
    pub passed: bool,
}

fn fit_slope(js: &[usize], v: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> =
        js.iter().zip(v).filter(|(_, y)| **y > 0.0).map(|(j, y)| ((*j as f64).ln(), y.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Distances of `K_J` and `F_{2,J}` to the reference truncation `J_ref = max(j_list)`.
pub fn convergence_study(fp: &FourierPotential, z: C64, j_list: &[usize]) -> Result<ConvergenceTable> {
    let mut js: Vec<usize> = j_list.to_vec();
    js.sort_unstable();
    js.dedup();
    if js.len() < 3 {
        return Err(Error::pre("convergence study needs at least three truncation levels"));
    }
    let j_ref = *js.last().unwrap();
    let tref = GalerkinTruncation::new(fp.d, j_ref)?;
    let fref = f2j(fp, &tref, z, F2Route::Semiseparable)?;
    let mut rows = Vec::new();
    for &j in &js[..js.len() - 1] {
        let t = GalerkinTruncation::new(fp.d, j)?;
        let hs = hs_distance_sq(fp, Some(&t), &tref, z)?.sqrt();
        let f = f2j(fp, &t, z, F2Route::Semiseparable)?;
        rows.push(ConvergenceRow { j, hs_distance: hs, f2j: f, f_distance: (f - fref).norm() });
    }
    let jj: Vec<usize> = rows.iter().map(|r| r.j).collect();
    let hs: Vec<f64> = rows.iter().map(|r| r.hs_distance).collect();
    let fd: Vec<f64> = rows.iter().map(|r| r.f_distance).collect();
    let hs_slope = fit_slope(&jj, &hs);
    let f_slope = fit_slope(&jj, &fd);
    let hs_monotone = hs.windows(2).all(|w| w[1] < w[0]);
    let f_monotone = fd.windows(2).all(|w| w[1] < w[0]);
    let slope_bound = (fp.d as f64 - 4.0) / 4.0;
    let passed = hs_monotone && f_monotone && hs_slope <= slope_bound;
    rows.push(ConvergenceRow { j: j_ref, hs_distance: 0.0, f2j: fref, f_distance: 0.0 });
    Ok(ConvergenceTable { z, j_ref, rows, hs_slope, f_slope, hs_monotone, f_monotone, slope_bound, passed })
}
