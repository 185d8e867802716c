//! Birman–Schwinger kernels on the line, their Nyström determinants, the two
//! factors of `F'(0)` at a zero-energy eigenvalue and half-line determinants
//! for the Jost solutions.

use serde::Serialize;

use crate::kink::{assemble, det_corrected, det_corrected_traced, ExpKernel};
use crate::matdet::derivative_coefficients;
use crate::quad::{trapz, CubicSpline, NystromGrid};
use crate::semisep::{det_semiseparable_with, Route, SemiSeparableKernel};
use crate::volterra::{jost_derivative_at_eigenvalue, solve_jost, wavenumber, AuxSolution, Potential1D};
use crate::{c, CMat, Error, NumericPolicy, Result, C64};

/// Nodes used by default for line kernels.
pub const DEFAULT_NODES: usize = 400;
pub const PANEL: usize = 10;

/// Composite Gauss–Legendre grid on the potential's interval.
pub fn default_grid(p: &Potential1D) -> Result<NystromGrid> {
    NystromGrid::gauss_legendre(p.x_max, DEFAULT_NODES, PANEL)
}

/// `kappa = (V_inf - z)^{1/2}` with positive real part.
fn kappa(p: &Potential1D, z: C64) -> Result<C64> {
    let k = wavenumber(p.v_infinity, z)?;
    Ok(-crate::I * k)
}

fn u_of(w: f64) -> f64 {
    w.signum() * w.abs().sqrt()
}

fn v_of(w: f64) -> f64 {
    w.abs().sqrt()
}

/// `K(z; x, y)` before weighting.
pub fn kernel_value(p: &Potential1D, z: C64, x: f64, y: f64, symmetric: bool) -> Result<C64> {
    let kap = kappa(p, z)?;
    let g = (-kap * (x - y).abs()).exp() / (2.0 * kap);
    Ok(if symmetric {
        -g * u_of(p.w(x)) * v_of(p.w(y))
    } else {
        -g * p.w(y)
    })
}

/// Exponential-kernel description of `K(z)`.
pub fn bs_exp_kernel(p: &Potential1D, z: C64, grid: &NystromGrid, symmetric: bool) -> Result<ExpKernel> {
    let kap = kappa(p, z)?;
    let w: Vec<f64> = grid.nodes.iter().map(|x| p.w(*x)).collect();
    let (left, right) = if symmetric {
        (Some(vec![w.iter().map(|v| c(u_of(*v))).collect()]), w.iter().map(|v| c(v_of(*v))).collect())
    } else {
        (None, w.iter().map(|v| c(*v)).collect())
    };
    Ok(ExpKernel { rates: vec![kap], coef: vec![-1.0 / (2.0 * kap)], left, right: vec![vec![Some(right)]] })
}

/// Discretised Birman–Schwinger operator.
#[derive(Debug, Clone)]
pub struct BSKernel {
    pub z: C64,
    /// Weighted Nyström matrix (product weights near the diagonal).
    pub matrix: CMat,
    /// Kernel samples `K(z; x_i, x_j)` without weights.
    pub samples: CMat,
    pub symmetric_flag: bool,
    pub grid: NystromGrid,
    pub exp: ExpKernel,
    /// `tr K(z)` from the trapezoid rule on the potential's uniform grid.
    pub trace: Option<C64>,
}

/// `tr K(z) = -(2 kappa)^{-1} int W`, when the grid spans the potential's interval.
fn bs_trace(p: &Potential1D, z: C64, grid: &NystromGrid) -> Result<Option<C64>> {
    let (a, b) = (grid.edges[0], grid.edges[grid.edges.len() - 1]);
    if (a + p.x_max).abs() > 1e-12 * p.x_max || (b - p.x_max).abs() > 1e-12 * p.x_max {
        return Ok(None);
    }
    let xs = p.grid();
    let iw = trapz(xs[1] - xs[0], &p.samples());
    Ok(Some(-iw / (2.0 * kappa(p, z)?)))
}

pub fn assemble_bs_kernel(p: &Potential1D, z: C64, grid: &NystromGrid, symmetric: bool) -> Result<BSKernel> {
    let exp = bs_exp_kernel(p, z, grid, symmetric)?;
    let matrix = assemble(grid, &exp)?;
    let n = grid.len();
    let mut samples = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            samples[(i, j)] = kernel_value(p, z, grid.nodes[i], grid.nodes[j], symmetric)?;
        }
    }
    let trace = bs_trace(p, z, grid)?;
    Ok(BSKernel { z, matrix, samples, symmetric_flag: symmetric, grid: grid.clone(), exp, trace })
}

/// `det(I - K)` (or `det2`) of an assembled kernel.
pub fn fredholm_det(kernel: &BSKernel, modified: bool) -> Result<C64> {
    det_corrected_traced(&kernel.grid, &kernel.exp, &kernel.matrix, None, modified, kernel.trace)
}

/// `det(I - K(z))` on a grid without keeping the matrices.
pub fn jost_nystrom(p: &Potential1D, z: C64, grid: &NystromGrid) -> Result<C64> {
    let exp = bs_exp_kernel(p, z, grid, false)?;
    let mk = assemble(grid, &exp)?;
    det_corrected_traced(grid, &exp, &mk, None, false, bs_trace(p, z, grid)?)
}

/// Nyström determinant with the node count doubled from [`DEFAULT_NODES`] until two
/// successive values differ by at most `tol`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AdaptiveDet {
    pub value: C64,
    pub nodes: usize,
    /// `|det_n - det_{n/2}|` at the accepted count.
    pub error_estimate: f64,
}

pub const MAX_NODES: usize = 6400;

pub fn jost_nystrom_adaptive(p: &Potential1D, z: C64, tol: f64) -> Result<AdaptiveDet> {
    let mut n = DEFAULT_NODES;
    let mut prev = jost_nystrom(p, z, &NystromGrid::gauss_legendre(p.x_max, n, PANEL)?)?;
    loop {
        n *= 2;
        let next = jost_nystrom(p, z, &NystromGrid::gauss_legendre(p.x_max, n, PANEL)?)?;
        let err = (next - prev).norm();
        if err <= tol {
            return Ok(AdaptiveDet { value: next, nodes: n, error_estimate: err });
        }
        if n >= MAX_NODES {
            return Err(Error::num(format!("node doubling stalled at {n} nodes, change {err:.2e}")));
        }
        prev = next;
    }
}

/// Scalar semi-separable form of `K(z)` on the potential's marching grid.
pub fn bs_semiseparable(p: &Potential1D, z: C64) -> Result<SemiSeparableKernel> {
    let kap = kappa(p, z)?;
    let one = CMat::from_element(1, 1, c(-1.0));
    SemiSeparableKernel::from_fn(p.grid(), vec![kap], |x| {
        let q = CMat::from_element(1, 1, c(p.w(x)) / (2.0 * kap));
        [one.clone(), q.clone(), one.clone(), q]
    })
}

/// How the zero mode was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ZeroModeSource {
    Analytic,
    Volterra,
    FiniteDifference,
}

/// Zero-energy eigenfunction with its normalisations.
#[derive(Debug, Clone, Serialize)]
pub struct ZeroModeData {
    pub x: Vec<f64>,
    pub psi0: Vec<f64>,
    pub dpsi0: Vec<f64>,
    /// `[int W Psi0^2]^{-1}`.
    pub c0: f64,
    /// `Psi0 = c_plus Psi_+(0, .) = c_minus Psi_-(0, .)`.
    pub c_plus: f64,
    pub c_minus: f64,
    pub source: ZeroModeSource,
}

impl ZeroModeData {
    fn h(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    /// Zero mode multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        let mut z = self.clone();
        z.psi0.iter_mut().for_each(|v| *v *= a);
        z.dpsi0.iter_mut().for_each(|v| *v *= a);
        z.c0 /= a * a;
        z.c_plus *= a;
        z.c_minus *= a;
        z
    }

    /// Cubic interpolant of `Psi0`.
    pub fn interpolant(&self) -> Result<CubicSpline> {
        CubicSpline::new(self.x.clone(), self.psi0.clone())
    }

    /// `(int Psi0^2, int Psi0'^2, int W Psi0^2)`.
    pub fn quadratic_forms(&self, p: &Potential1D) -> (f64, f64, f64) {
        let h = self.h();
        let sq: Vec<f64> = self.psi0.iter().map(|v| v * v).collect();
        let dsq: Vec<f64> = self.dpsi0.iter().map(|v| v * v).collect();
        let wsq: Vec<f64> = self.x.iter().zip(&self.psi0).map(|(x, v)| p.w(*x) * v * v).collect();
        (trapz(h, &sq), trapz(h, &dsq), trapz(h, &wsq))
    }
}

/// The zero-energy eigenfunction of `H`, scaled so that `Psi0 = Psi_+(0, .)` on the right.
pub fn zero_mode(p: &Potential1D, source: ZeroModeSource, policy: &NumericPolicy) -> Result<ZeroModeData> {
    let sol = solve_jost(p, c(0.0))?;
    if sol.f_integral.norm() >= policy.eigen_tol {
        return Err(Error::pre(format!(
            "0 is not an eigenvalue: |F(0)| = {:.3e}",
            sol.f_integral.norm()
        )));
    }
    let x = sol.x.clone();
    let n = x.len();
    let mid = n / 2;
    // stitch Psi_+ on the right to a multiple of Psi_- on the left
    let window: Vec<usize> = (0..n).filter(|&i| x[i].abs() <= 1.0).collect();
    let num: f64 = window.iter().map(|&i| (sol.psi_plus[i] * sol.psi_minus[i]).re).sum();
    let den: f64 = window.iter().map(|&i| sol.psi_minus[i].norm_sqr()).sum();
    let ratio = num / den;
    let stitched = |i: usize| -> (f64, f64) {
        if i >= mid {
            (sol.psi_plus[i].re, sol.dpsi_plus[i].re)
        } else {
            (ratio * sol.psi_minus[i].re, ratio * sol.dpsi_minus[i].re)
        }
    };
    let (psi0, dpsi0): (Vec<f64>, Vec<f64>) = match source {
        ZeroModeSource::Volterra => (0..n).map(stitched).unzip(),
        ZeroModeSource::Analytic => {
            let f = p
                .analytic_zero_mode()
                .ok_or_else(|| Error::pre("no closed-form zero mode for this potential"))?;
            x.iter().map(|t| f(*t)).unzip()
        }
        ZeroModeSource::FiniteDifference => {
            let v = inverse_iteration(p, &x)?;
            // match the scale of Psi_+ on the window
            let num: f64 = window.iter().map(|&i| v[i] * sol.psi_plus[i].re).sum();
            let den: f64 = window.iter().map(|&i| v[i] * v[i]).sum();
            let a = num / den;
            let v: Vec<f64> = v.iter().map(|t| a * t).collect();
            let h = x[1] - x[0];
            let d = (0..n)
                .map(|i| {
                    if i == 0 || i == n - 1 {
                        0.0
                    } else {
                        (v[i + 1] - v[i - 1]) / (2.0 * h)
                    }
                })
                .collect();
            (v, d)
        }
    };
    let mut zm = ZeroModeData { x, psi0, dpsi0, c0: 0.0, c_plus: 1.0, c_minus: ratio, source };
    let (_, _, wq) = zm.quadratic_forms(p);
    if wq == 0.0 || !wq.is_finite() {
        return Err(Error::num("zero mode normalisation vanishes"));
    }
    zm.c0 = 1.0 / wq;
    if source != ZeroModeSource::Volterra {
        let num: f64 = window.iter().map(|&i| zm.psi0[i] * sol.psi_plus[i].re).sum();
        let den: f64 = window.iter().map(|&i| sol.psi_plus[i].re.powi(2)).sum();
        zm.c_plus = num / den;
        zm.c_minus = zm.c_plus * ratio;
    }
    Ok(zm)
}

/// Inverse iteration for the eigenvalue of the three-point discretisation of `H` nearest 0.
fn inverse_iteration(p: &Potential1D, x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let h = x[1] - x[0];
    let diag: Vec<f64> = x.iter().map(|t| 2.0 / (h * h) + p.v_infinity + p.w(*t)).collect();
    let off = -1.0 / (h * h);
    let mut v: Vec<f64> = x.iter().map(|t| (-t * t).exp()).collect();
    for _ in 0..6 {
        // Thomas algorithm on the interior with Dirichlet ends
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        cp[1] = off / diag[1];
        dp[1] = v[1] / diag[1];
        for i in 2..n - 1 {
            let m = diag[i] - off * cp[i - 1];
            if m == 0.0 {
                return Err(Error::num("singular finite-difference system"));
            }
            cp[i] = off / m;
            dp[i] = (v[i] - off * dp[i - 1]) / m;
        }
        let mut y = vec![0.0; n];
        y[n - 2] = dp[n - 2];
        for i in (1..n - 2).rev() {
            y[i] = dp[i] - cp[i] * y[i + 1];
        }
        let norm = y.iter().map(|t| t * t).sum::<f64>().sqrt();
        v = y.iter().map(|t| t / norm).collect();
    }
    Ok(v)
}

/// `||Psi0||^2 / (||Psi0'||^2 + V_inf ||Psi0||^2)`.
pub fn second_factor(zm: &ZeroModeData, p: &Potential1D, policy: &NumericPolicy) -> Result<f64> {
    let (n2, d2, wq) = zm.quadratic_forms(p);
    let denom = d2 + p.v_infinity * n2;
    let residual = (wq + denom).abs() / denom;
    if residual > policy.ode_residual_tol {
        return Err(Error::num(format!("zero-mode residual {residual:.3e} too large")));
    }
    Ok(n2 / denom)
}

/// Both sign choices of the direct first-factor formula and the a-posteriori form.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FirstFactor {
    pub plus: f64,
    pub minus: f64,
    pub a_posteriori: f64,
}

pub fn first_factor_parts(p: &Potential1D, aux: &AuxSolution) -> FirstFactor {
    let s = p.v_infinity.sqrt();
    let h = aux.x[1] - aux.x[0];
    let w: Vec<f64> = aux.x.iter().map(|x| p.w(*x)).collect();
    let ip: Vec<f64> = w.iter().zip(&aux.phi_plus).map(|(a, b)| a * b).collect();
    let im: Vec<f64> = w.iter().zip(&aux.phi_minus).map(|(a, b)| a * b).collect();
    let ia: Vec<f64> = (0..w.len()).map(|i| w[i] * (aux.jost.m_plus[i] * aux.jost.m_minus[i]).re).collect();
    FirstFactor {
        plus: -trapz(h, &ip) / (2.0 * s),
        minus: -trapz(h, &im) / (2.0 * s),
        a_posteriori: trapz(h, &ia) / (2.0 * s),
    }
}

/// `det(I - P0 - K0)` from the auxiliary solutions.
pub fn first_factor_direct(p: &Potential1D, aux: &AuxSolution, policy: &NumericPolicy) -> Result<f64> {
    let f = first_factor_parts(p, aux);
    if (f.plus - f.minus).abs() > policy.cross_tol * f.plus.abs().max(1.0) {
        return Err(Error::num(format!(
            "plus/minus first factors disagree: {} vs {}",
            f.plus, f.minus
        )));
    }
    Ok(f.plus)
}

/// Semi-separable form of `K0 + P0` (asymmetric factorisation `W` on the right).
pub fn first_factor_kernel(p: &Potential1D, zm: &ZeroModeData) -> Result<SemiSeparableKernel> {
    let s = p.v_infinity.sqrt();
    let n = zm.x.len();
    let mut p1 = Vec::with_capacity(n);
    let mut q1 = Vec::with_capacity(n);
    for i in 0..n {
        let w = p.w(zm.x[i]);
        let psi = zm.psi0[i];
        p1.push(CMat::from_row_slice(1, 2, &[c(-1.0), c(psi)]));
        q1.push(CMat::from_row_slice(1, 2, &[c(w / (2.0 * s)), c(zm.c0 * w * psi)]));
    }
    SemiSeparableKernel::new(zm.x.clone(), vec![c(s), c(0.0)], p1.clone(), q1.clone(), p1, q1)
}

/// `det(I - P0 - K0)` through the semi-separable reduction.
pub fn first_factor_semiseparable(p: &Potential1D, zm: &ZeroModeData) -> Result<f64> {
    Ok(first_factor_semiseparable_route(p, zm, Route::Backward)?.re)
}

pub fn first_factor_semiseparable_route(p: &Potential1D, zm: &ZeroModeData, route: Route) -> Result<C64> {
    let k = first_factor_kernel(p, zm)?;
    det_semiseparable_with(&k, false, route, true)
}

/// `det(I - P0 - K0)` by dense Nyström with `P0` added as a rank-one matrix.
pub fn first_factor_nystrom(p: &Potential1D, zm: &ZeroModeData, grid: &NystromGrid) -> Result<f64> {
    let exp = bs_exp_kernel(p, c(0.0), grid, false)?;
    let spline = zm.interpolant()?;
    let psi: Vec<f64> = grid.nodes.iter().map(|x| spline.eval(*x)).collect();
    let n = grid.len();
    let mut p0 = CMat::zeros(n, n);
    for i in 0..n {
        for l in 0..n {
            p0[(i, l)] = c(psi[i] * zm.c0 * p.w(grid.nodes[l]) * psi[l] * grid.weights[l]);
        }
    }
    Ok(det_corrected(grid, &exp, Some(&p0), false)?.re)
}

/// `F'(0)` by three independent routes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FPrimeRoutes {
    /// `-(1/2 V_inf^{1/2}) int Psi_- Psi_+`.
    pub quadrature: f64,
    pub first_factor: f64,
    pub second_factor: f64,
    /// Product of the two factors.
    pub product: f64,
    /// Contour derivative of the Nyström determinant.
    pub cauchy: f64,
}

pub fn fprime_routes(p: &Potential1D, policy: &NumericPolicy) -> Result<FPrimeRoutes> {
    let quadrature = jost_derivative_at_eigenvalue(p, 0.0, policy)?.re;
    let aux = crate::volterra::solve_aux(p, policy)?;
    let first = first_factor_direct(p, &aux, policy)?;
    let zm = zero_mode(p, ZeroModeSource::Volterra, policy)?;
    let second = second_factor(&zm, p, policy)?;
    let grid = default_grid(p)?;
    let f = |z: C64| jost_nystrom(p, z, &grid);
    let coef = derivative_coefficients(&f, c(0.0), 0.3 * p.v_infinity, 1, Some(32))?;
    Ok(FPrimeRoutes {
        quadrature,
        first_factor: first,
        second_factor: second,
        product: first * second,
        cauchy: coef[1].re,
    })
}

/// Value or derivative in the half-line formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SimonQuantity {
    Value,
    Derivative,
}

/// `det(I + u (H_0 - z)^{-1} v)` on the half-line `[x, inf)` with a Dirichlet
/// (`neumann = false`) or Neumann condition at `x`.
pub fn half_line_det(p: &Potential1D, z: C64, x: f64, neumann: bool, nodes: usize) -> Result<C64> {
    let kap = kappa(p, z)?;
    let len = p.x_max - x;
    if !(len > 0.0) {
        return Err(Error::pre("x must lie inside the potential's interval"));
    }
    let grid = NystromGrid::gauss_legendre_on(0.0, len, nodes, PANEL)?;
    let w: Vec<f64> = grid.nodes.iter().map(|t| p.w(t + x)).collect();
    let exp = ExpKernel {
        rates: vec![kap],
        coef: vec![-1.0 / (2.0 * kap)],
        left: None,
        right: vec![vec![Some(w.iter().map(|v| c(*v)).collect())]],
    };
    let n = grid.len();
    let sign = if neumann { -1.0 } else { 1.0 };
    let mut image = CMat::zeros(n, n);
    for i in 0..n {
        for l in 0..n {
            image[(i, l)] =
                (-kap * (grid.nodes[i] + grid.nodes[l])).exp() / (2.0 * kap) * (sign * w[l] * grid.weights[l]);
        }
    }
    det_corrected(&grid, &exp, Some(&image), false)
}

/// `Psi_+(z, x)` or `Psi_+'(z, x)` from half-line determinants.
pub fn simon_jost(p: &Potential1D, z: C64, x: f64, which: SimonQuantity) -> Result<C64> {
    let k = wavenumber(p.v_infinity, z)?;
    let e = (crate::I * k * x).exp();
    match which {
        SimonQuantity::Value => Ok(e * half_line_det(p, z, x, false, DEFAULT_NODES)?),
        SimonQuantity::Derivative => Ok(crate::I * k * e * half_line_det(p, z, x, true, DEFAULT_NODES)?),
    }
}

/// `Psi_-(z, x)` or `Psi_-'(z, x)` from the mirrored half-line.
pub fn simon_jost_minus(p: &Potential1D, z: C64, x: f64, which: SimonQuantity) -> Result<C64> {
    let r = p.reflected();
    let v = simon_jost(&r, z, -x, which)?;
    Ok(match which {
        SimonQuantity::Value => v,
        SimonQuantity::Derivative => -v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_diagonal_value() {
        let p = Potential1D::kdv(2, 1.0, 1.0).unwrap();
        let v = kernel_value(&p, c(-3.0), 0.0, 0.0, false).unwrap();
        assert!((v - c(1.5)).norm() < 1e-14);
    }

    #[test]
    fn free_kernel_vanishes() {
        let p = Potential1D::free(1.0).unwrap();
        let g = NystromGrid::gauss_legendre(20.0, 100, 10).unwrap();
        let k = assemble_bs_kernel(&p, c(-2.0), &g, true).unwrap();
        assert_eq!(k.matrix.norm(), 0.0);
        assert!((fredholm_det(&k, false).unwrap() - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn kdv_two_nystrom() {
        let p = Potential1D::kdv(2, 1.0, 1.0).unwrap();
        let g = default_grid(&p).unwrap();
        let d = jost_nystrom(&p, c(-8.0), &g).unwrap();
        assert!((d - c(0.1)).norm() < 1e-6, "{d}");
        assert!(jost_nystrom(&p, c(0.0), &g).unwrap().norm() < 1e-6);
    }

    #[test]
    fn half_line_kernels_match_ode() {
        // G(x, x') solves -G'' + kappa^2 G = delta with G(0) = 0 (Dirichlet) or G'(0) = 0 (Neumann)
        let kap = 1.7;
        let gd = |x: f64, y: f64| ((-kap * (x - y).abs()).exp() - (-kap * (x + y)).exp()) / (2.0 * kap);
        let gn = |x: f64, y: f64| ((-kap * (x - y).abs()).exp() + (-kap * (x + y)).exp()) / (2.0 * kap);
        let y = 0.8;
        let h = 1e-4;
        assert!(gd(0.0, y).abs() < 1e-15);
        assert!(((gn(h, y) - gn(0.0, y)) / h).abs() < 1e-3);
        for x in [0.3, 1.5] {
            for g in [&gd as &dyn Fn(f64, f64) -> f64, &gn] {
                let d2 = (g(x + h, y) - 2.0 * g(x, y) + g(x - h, y)) / (h * h);
                assert!((-d2 + kap * kap * g(x, y)).abs() < 1e-5);
            }
        }
        // unit jump of the derivative at x = y
        let jump = (gd(y + h, y) - gd(y, y)) / h - (gd(y, y) - gd(y - h, y)) / h;
        assert!((jump + 1.0).abs() < 1e-3);
    }
}
