//! Deterministic time-axis quadrature.
//!
//! Integrals over a diffusion window span several orders of magnitude in
//! time, so the grid works on the log axis: substitute `t = e^u`, split
//! `[ln t_lo, ln t_hi]` into equal panels, and place Gauss-Legendre nodes in
//! each. The Jacobian `e^u` is folded into the stored weights, which makes
//! `sum_i w_i f(t_i)` a direct estimate of `int f(t) dt`.

use crate::error::{Error, Result};

/// Fixed quadrature rule: `nodes[i]` in original time, `weights[i]` already
/// including the log-axis Jacobian.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub t_lo: f64,
    pub t_hi: f64,
    pub panels: usize,
    pub order: usize,
}

impl QuadratureGrid {
    /// Composite Gauss-Legendre rule on the log axis.
    pub fn log_axis(t_lo: f64, t_hi: f64, panels: usize, order: usize) -> Result<Self> {
        if !(t_lo > 0.0 && t_hi > t_lo && t_hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "quadrature needs 0 < t_lo < t_hi, got [{t_lo}, {t_hi}]"
            )));
        }
        if panels == 0 || order < 2 {
            return Err(Error::InvalidArgument(format!(
                "quadrature needs panels >= 1 and order >= 2, got {panels} panels of order {order}"
            )));
        }
        let (gl_nodes, gl_weights) = gauss_legendre(order);
        let (u_lo, u_hi) = (t_lo.ln(), t_hi.ln());
        let panel_width = (u_hi - u_lo) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let a = u_lo + p as f64 * panel_width;
            let mid = a + 0.5 * panel_width;
            let half = 0.5 * panel_width;
            for (x, w) in gl_nodes.iter().zip(&gl_weights) {
                let u = mid + half * x;
                let t = u.exp();
                nodes.push(t);
                weights.push(half * w * t);
            }
        }
        Ok(QuadratureGrid {
            nodes,
            weights,
            t_lo,
            t_hi,
            panels,
            order,
        })
    }

    /// Default resolution for a schedule window: accurate to roughly machine
    /// precision for the smooth KL integrands this crate feeds it.
    pub fn for_window(t_lo: f64, t_hi: f64) -> Result<Self> {
        Self::log_axis(t_lo, t_hi, 8, 16)
    }

    /// Same interval at twice the panel count, for convergence checks.
    pub fn doubled(&self) -> Result<Self> {
        Self::log_axis(self.t_lo, self.t_hi, self.panels * 2, self.order)
    }

    /// Apply the rule to an integrand over original (not log) time.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1],
/// found by Newton iteration on the Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_deriv(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` via the three-term recurrence.
fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}
