//! Closed-form Gaussian ground truth.
//!
//! Everything the trainers estimate stochastically has an exact counterpart
//! here for diagonal Gaussians: diffused marginals, scores, KL divergences,
//! and the time-integrated KL
//!
//! `IKL(p, q) = int w(t) KL(p_t || q_t) dt`
//!
//! evaluated by deterministic quadrature. The training estimators are only
//! trusted because they match these oracles on Gaussian cases.

pub mod quadrature;

pub use quadrature::QuadratureGrid;

use crate::diffusion::{DiffusionSchedule, Weighting};
use crate::error::{Error, Result};
use crate::rng::Xoshiro256;

const LN_2PI: f64 = 1.8378770664093453;

/// Diagonal Gaussian distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFamily {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianFamily {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::DimensionMismatch {
                context: "GaussianFamily".into(),
                expected: mean.len(),
                actual: var.len(),
            });
        }
        if mean.is_empty() {
            return Err(Error::InvalidArgument("GaussianFamily needs dimension >= 1".into()));
        }
        if !mean.iter().all(|m| m.is_finite()) || !var.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidArgument(
                "GaussianFamily needs finite means and positive variances".into(),
            ));
        }
        Ok(GaussianFamily { mean, var })
    }

    /// Standard normal in `dim` dimensions.
    pub fn standard(dim: usize) -> Self {
        GaussianFamily {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal after running the forward diffusion to time `t`:
    /// `N(alpha mu, alpha^2 v + sigma^2)` coordinatewise.
    pub fn diffused(&self, sched: &DiffusionSchedule, t: f64) -> Result<GaussianFamily> {
        let (alpha, sigma) = sched.alpha_sigma(t)?;
        let var_add = sigma * sigma;
        Ok(GaussianFamily {
            mean: self.mean.iter().map(|&m| alpha * m).collect(),
            var: self.var.iter().map(|&v| alpha * alpha * v + var_add).collect(),
        })
    }

    /// `grad_x log p(x) = -(x - mu) / v` coordinatewise.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(x
            .iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(&xi, (&m, &v))| -(xi - m) / v)
            .collect())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(x
            .iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(&xi, (&m, &v))| -0.5 * (LN_2PI + v.ln() + (xi - m) * (xi - m) / v))
            .sum())
    }

    pub fn sample(&self, rng: &mut Xoshiro256) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(&m, &v)| m + v.sqrt() * rng.normal())
            .collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "GaussianFamily point".into(),
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// `KL(p || q)` between diagonal Gaussians:
/// `sum_i (log(qv_i / pv_i) + (pv_i + (pm_i - qm_i)^2) / qv_i - 1) / 2`.
pub fn gaussian_kl(p: &GaussianFamily, q: &GaussianFamily) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            context: "gaussian_kl".into(),
            expected: p.dim(),
            actual: q.dim(),
        });
    }
    let mut total = 0.0;
    for i in 0..p.dim() {
        let (pm, pv) = (p.mean[i], p.var[i]);
        let (qm, qv) = (q.mean[i], q.var[i]);
        total += 0.5 * ((qv / pv).ln() + (pv + (pm - qm) * (pm - qm)) / qv - 1.0);
    }
    Ok(total)
}

/// Weighted time integral of the KL between diffused marginals, evaluated on
/// a fixed quadrature grid. The grid must sit inside the schedule window.
pub fn ikl_quadrature(
    p0: &GaussianFamily,
    q0: &GaussianFamily,
    sched: &DiffusionSchedule,
    w: Weighting,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let mut total = 0.0;
    for (&t, &gw) in grid.nodes.iter().zip(&grid.weights) {
        let p_t = p0.diffused(sched, t)?;
        let q_t = q0.diffused(sched, t)?;
        total += gw * w.eval(sched, t)? * gaussian_kl(&p_t, &q_t)?;
    }
    Ok(total)
}

/// Monte Carlo counterpart of [`ikl_quadrature`]: sample `t` uniformly over
/// the window and `x` from the diffused `p`, average
/// `(t_max - t_min) w(t) log(p_t(x) / q_t(x))`. Returns `(estimate, standard error)`.
pub fn mc_ikl(
    p0: &GaussianFamily,
    q0: &GaussianFamily,
    sched: &DiffusionSchedule,
    w: Weighting,
    n: usize,
    rng: &mut Xoshiro256,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidArgument("mc_ikl needs n >= 2".into()));
    }
    let window = sched.t_max - sched.t_min;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let t = rng.uniform(sched.t_min, sched.t_max);
        let p_t = p0.diffused(sched, t)?;
        let q_t = q0.diffused(sched, t)?;
        let x = p_t.sample(rng);
        let val = window * w.eval(sched, t)? * (p_t.log_density(&x)? - q_t.log_density(&x)?);
        sum += val;
        sum_sq += val * val;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0) / (n as f64 - 1.0) * n as f64;
    Ok((mean, (var / n as f64).sqrt()))
}

/// Exact `d IKL / d theta` for the mean-shifted pair `p0 = N(theta, c)`,
/// `q0 = N(0, c)` in one dimension:
/// `theta int w(t) alpha^2(t) / (alpha^2(t) c + sigma^2(t)) dt`.
pub fn ikl_grad_oracle(
    theta: f64,
    c: f64,
    sched: &DiffusionSchedule,
    w: Weighting,
    grid: &QuadratureGrid,
) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("variance c must be positive, got {c}")));
    }
    let mut total = 0.0;
    for (&t, &gw) in grid.nodes.iter().zip(&grid.weights) {
        let (alpha, sigma) = sched.alpha_sigma(t)?;
        let a2 = alpha * alpha;
        total += gw * w.eval(sched, t)? * a2 / (a2 * c + sigma * sigma);
    }
    Ok(theta * total)
}

fn require_ramp(w: Weighting, what: &str) -> Result<()> {
    if w != Weighting::Ramp {
        return Err(Error::InvalidArgument(format!(
            "{what} diverges for {w:?}; only the ramp weighting integrates over (0, inf)"
        )));
    }
    Ok(())
}

/// Closed-form integral KL for the misaligned-support pair: distributions on
/// parallel lines `x = theta` and `x = 0`, diffused by a unit-diffusion VE
/// flow so that `KL_t = theta^2 / (2t)`. Under the ramp weighting
/// `int w(t) / (2t) dt = 1/2 + 1/2 = 1` exactly, so the value is `theta^2`.
pub fn misaligned_ikl(theta: f64, w: Weighting) -> Result<f64> {
    require_ramp(w, "misaligned IKL")?;
    Ok(theta * theta)
}

/// `d/d theta` of [`misaligned_ikl`]: `2 theta`.
pub fn misaligned_ikl_grad(theta: f64, w: Weighting) -> Result<f64> {
    require_ramp(w, "misaligned IKL gradient")?;
    Ok(2.0 * theta)
}

/// Cross-check of [`misaligned_ikl`] along the Gaussian-KL path: quadrature
/// of `w(t) KL(N(theta, t) || N(0, t))` over `[t_lo, t_hi]` plus the two
/// analytic ramp tails `theta^2 t_lo / 2` and `theta^2 / (2 t_hi)`.
pub fn misaligned_ikl_quadrature(theta: f64, w: Weighting, grid: &QuadratureGrid) -> Result<f64> {
    require_ramp(w, "misaligned IKL quadrature")?;
    let mut total = 0.0;
    for (&t, &gw) in grid.nodes.iter().zip(&grid.weights) {
        let ramp = if t <= 1.0 { t } else { 1.0 / t };
        total += gw * ramp * theta * theta / (2.0 * t);
    }
    total += theta * theta * grid.t_lo / 2.0;
    total += theta * theta / (2.0 * grid.t_hi);
    Ok(total)
}

/// Plain KL between the misaligned pair: infinite whenever the supports
/// differ. The infinity is the honest sentinel the comparison table reports.
pub fn misaligned_kl(theta: f64) -> f64 {
    if theta == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Jensen-Shannon divergence of the misaligned pair, natural-log units:
/// `ln 2` for disjoint supports.
pub fn misaligned_js(theta: f64) -> f64 {
    if theta == 0.0 {
        0.0
    } else {
        std::f64::consts::LN_2
    }
}

/// Wasserstein-1 reference line for the misaligned pair, `|theta|`. Quoted
/// for the comparison table rather than computed by any routine here.
pub fn misaligned_wasserstein_reference(theta: f64) -> f64 {
    theta.abs()
}

/// Finite mixture of diagonal Gaussians. Serves as an exact score oracle for
/// clustered 2D datasets and as their sampler.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub components: Vec<GaussianFamily>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianFamily>) -> Result<Self> {
        if weights.len() != components.len() || components.is_empty() {
            return Err(Error::InvalidArgument(
                "mixture needs one positive weight per component".into(),
            ));
        }
        if !weights.iter().all(|&w| w.is_finite() && w > 0.0) {
            return Err(Error::InvalidArgument("mixture weights must be positive".into()));
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::InvalidArgument("mixture components must share a dimension".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(GaussianMixture { weights, components })
    }

    /// Equal-weight mixture with means on a circle of the given radius.
    pub fn ring(count: usize, radius: f64, noise_std: f64) -> Result<Self> {
        if count == 0 || !(radius > 0.0) || !(noise_std > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ring needs count >= 1, radius > 0, noise_std > 0, got ({count}, {radius}, {noise_std})"
            )));
        }
        let var = noise_std * noise_std;
        let components = (0..count)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                GaussianFamily::new(
                    vec![radius * angle.cos(), radius * angle.sin()],
                    vec![var, var],
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(vec![1.0; count], components)
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Mixture after diffusing every component to time `t`.
    pub fn diffused(&self, sched: &DiffusionSchedule, t: f64) -> Result<GaussianMixture> {
        let components = self
            .components
            .iter()
            .map(|c| c.diffused(sched, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(GaussianMixture {
            weights: self.weights.clone(),
            components,
        })
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.components.len());
        for (w, c) in self.weights.iter().zip(&self.components) {
            terms.push(w.ln() + c.log_density(x)?);
        }
        Ok(log_sum_exp(&terms))
    }

    /// Exact mixture score: responsibility-weighted component scores.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut log_terms = Vec::with_capacity(self.components.len());
        for (w, c) in self.weights.iter().zip(&self.components) {
            log_terms.push(w.ln() + c.log_density(x)?);
        }
        let norm = log_sum_exp(&log_terms);
        let mut score = vec![0.0; self.dim()];
        for (lt, c) in log_terms.iter().zip(&self.components) {
            let resp = (lt - norm).exp();
            let cs = c.score(x)?;
            for (s, v) in score.iter_mut().zip(cs) {
                *s += resp * v;
            }
        }
        Ok(score)
    }

    pub fn sample(&self, rng: &mut Xoshiro256) -> Vec<f64> {
        let u = rng.next_f64();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = k;
                break;
            }
        }
        self.components[pick].sample(rng)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|&t| (t - m).exp()).sum::<f64>().ln()
}
