use serde::{Deserialize, Serialize};

/// Tolerances shared by the numerical routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericPolicy {
    /// Largest acceptable condition number of `I - A0` in the regular expansion.
    pub cond_max: f64,
    /// Relative singular-value threshold for numerical rank.
    pub rank_tol: f64,
    /// Threshold below which a leading coefficient counts as vanishing.
    pub degenerate_tol: f64,
    /// Agreement required between two routes to the same quantity.
    pub cross_tol: f64,
    /// `|F(lambda)|` below this counts as an eigenvalue.
    pub eigen_tol: f64,
    /// Residual bound for ODE checks on sampled solutions.
    pub ode_residual_tol: f64,
    /// Distance from contour to spectrum below which a Riesz projection is refused.
    pub tol_circle: f64,
    /// Required closeness of `trace(P0)` to an integer.
    pub trace_int_tol: f64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        NumericPolicy {
            cond_max: 1e12,
            rank_tol: 1e-8,
            degenerate_tol: 1e-10,
            cross_tol: 1e-6,
            eigen_tol: 1e-6,
            ode_residual_tol: 1e-4,
            tol_circle: 1e-6,
            trace_int_tol: 1e-8,
        }
    }
}
