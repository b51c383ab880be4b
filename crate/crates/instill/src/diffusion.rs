//! Forward diffusion schedules and loss weightings.
//!
//! A schedule fixes the marginal transition `x_t = alpha(t) x0 + sigma(t) eps`
//! on a time window `[t_min, t_max]`:
//!
//! * variance-exploding: `alpha = 1`, `sigma = sqrt(t)`;
//! * variance-preserving: `alpha(t) = exp(-1/2 int_0^t beta(s) ds)` with
//!   `beta` ramping linearly from `beta_min` to `beta_max` across the window,
//!   and `sigma^2 = 1 - alpha^2`.
//!
//! The window starts strictly above zero so that `1/sigma^2` terms stay
//! finite everywhere a training loop can sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Ve,
    Vp,
}

/// Time window plus the per-kind noise parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionSchedule {
    pub kind: ScheduleKind,
    pub beta_min: f64,
    pub beta_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl DiffusionSchedule {
    /// Variance-exploding schedule on `[t_min, t_max]`.
    pub fn ve(t_min: f64, t_max: f64) -> Result<Self> {
        validate_window(t_min, t_max)?;
        Ok(DiffusionSchedule {
            kind: ScheduleKind::Ve,
            beta_min: 0.0,
            beta_max: 0.0,
            t_min,
            t_max,
        })
    }

    /// Variance-preserving schedule with a linear beta ramp.
    pub fn vp(beta_min: f64, beta_max: f64, t_min: f64, t_max: f64) -> Result<Self> {
        validate_window(t_min, t_max)?;
        if !(beta_min > 0.0 && beta_max >= beta_min && beta_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < beta_min <= beta_max, got [{beta_min}, {beta_max}]"
            )));
        }
        Ok(DiffusionSchedule {
            kind: ScheduleKind::Vp,
            beta_min,
            beta_max,
            t_min,
            t_max,
        })
    }

    /// Default VE window, wide enough that the terminal marginal swamps
    /// any unit-scale dataset.
    pub fn ve_default() -> Self {
        Self::ve(1e-3, 10.0).unwrap()
    }

    /// Default VP window with the usual linear ramp.
    pub fn vp_default() -> Self {
        Self::vp(0.1, 20.0, 1e-3, 1.0).unwrap()
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= self.t_min && t <= self.t_max) {
            return Err(Error::TimeOutOfWindow {
                t,
                t_min: self.t_min,
                t_max: self.t_max,
            });
        }
        Ok(())
    }

    /// Marginal coefficients `(alpha(t), sigma(t))`.
    pub fn alpha_sigma(&self, t: f64) -> Result<(f64, f64)> {
        self.check_time(t)?;
        Ok(match self.kind {
            ScheduleKind::Ve => (1.0, t.sqrt()),
            ScheduleKind::Vp => {
                // int_0^t beta(s) ds for beta(s) = beta_min + (beta_max - beta_min) s / t_max
                let integral = self.beta_min * t
                    + (self.beta_max - self.beta_min) * t * t / (2.0 * self.t_max);
                let alpha = (-0.5 * integral).exp();
                (alpha, (1.0 - alpha * alpha).sqrt())
            }
        })
    }

    pub fn sigma_sq(&self, t: f64) -> Result<f64> {
        let (_, sigma) = self.alpha_sigma(t)?;
        Ok(sigma * sigma)
    }

    /// One perturbation draw `x_t = alpha x0 + sigma noise` from caller-supplied noise.
    pub fn sample_transition(&self, x0: &[f64], t: f64, noise: &[f64]) -> Result<Vec<f64>> {
        if x0.len() != noise.len() {
            return Err(Error::DimensionMismatch {
                context: "sample_transition noise".into(),
                expected: x0.len(),
                actual: noise.len(),
            });
        }
        let (alpha, sigma) = self.alpha_sigma(t)?;
        Ok(x0
            .iter()
            .zip(noise)
            .map(|(&x, &e)| alpha * x + sigma * e)
            .collect())
    }

    /// Score of the transition kernel: `grad_{x_t} log q_t(x_t | x0)`.
    pub fn conditional_score(&self, x0: &[f64], x_t: &[f64], t: f64) -> Result<Vec<f64>> {
        if x0.len() != x_t.len() {
            return Err(Error::DimensionMismatch {
                context: "conditional_score".into(),
                expected: x0.len(),
                actual: x_t.len(),
            });
        }
        let (alpha, sigma) = self.alpha_sigma(t)?;
        let var = sigma * sigma;
        Ok(x0
            .iter()
            .zip(x_t)
            .map(|(&x, &xt)| (alpha * x - xt) / var)
            .collect())
    }

    /// Posterior-mean denoiser `E[x0 | x_t]` given the marginal score at `x_t`:
    /// `(x_t + sigma^2 score) / alpha`.
    pub fn tweedie_denoise(&self, x_t: &[f64], t: f64, score: &[f64]) -> Result<Vec<f64>> {
        if x_t.len() != score.len() {
            return Err(Error::DimensionMismatch {
                context: "tweedie_denoise".into(),
                expected: x_t.len(),
                actual: score.len(),
            });
        }
        let (alpha, sigma) = self.alpha_sigma(t)?;
        let var = sigma * sigma;
        Ok(x_t
            .iter()
            .zip(score)
            .map(|(&xt, &s)| (xt + var * s) / alpha)
            .collect())
    }
}

fn validate_window(t_min: f64, t_max: f64) -> Result<()> {
    if !(t_min > 0.0 && t_max > t_min && t_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < t_min < t_max, got [{t_min}, {t_max}]"
        )));
    }
    Ok(())
}

/// Time weighting `w(t)` for integral losses.
///
/// The ramp is the inverted-U choice `w(t) = t` below one and `1/t` above:
/// it tapers both the noisy small-time and diffuse large-time ends, and it is
/// the unique listed weighting that keeps the misaligned-support example's
/// integral finite over all of `(0, infinity)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    Ramp,
    Constant(f64),
    SigmaSquared,
}

impl Weighting {
    pub fn eval(&self, sched: &DiffusionSchedule, t: f64) -> Result<f64> {
        let w = match self {
            Weighting::Ramp => {
                if t <= 0.0 {
                    return Err(Error::InvalidArgument(format!("ramp weighting needs t > 0, got {t}")));
                }
                if t <= 1.0 {
                    t
                } else {
                    1.0 / t
                }
            }
            Weighting::Constant(c) => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "constant weighting must be positive and finite, got {c}"
                    )));
                }
                *c
            }
            Weighting::SigmaSquared => sched.sigma_sq(t)?,
        };
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Xoshiro256;

    #[test]
    fn ve_coefficients_match_definition() {
        let sched = DiffusionSchedule::ve_default();
        for t in [1e-3, 0.25, 1.0, 4.0, 10.0] {
            let (alpha, sigma) = sched.alpha_sigma(t).unwrap();
            assert_eq!(alpha, 1.0);
            assert_eq!(sigma, t.sqrt());
        }
    }

    #[test]
    fn vp_alpha_matches_hand_integrated_beta() {
        let sched = DiffusionSchedule::vp_default();
        // At t = 1 the linear ramp integrates to (beta_min + beta_max) / 2.
        let (alpha, _) = sched.alpha_sigma(1.0).unwrap();
        let expected = (-0.5 * (0.1 + 20.0) / 2.0_f64).exp();
        assert!((alpha - expected).abs() < 1e-15, "{alpha} vs {expected}");

        // At t = 0.5: 0.1 * 0.5 + 19.9 * 0.25 / 2 = 2.5375.
        let (alpha, _) = sched.alpha_sigma(0.5).unwrap();
        let expected = (-0.5 * 2.5375_f64).exp();
        assert!((alpha - expected).abs() < 1e-15, "{alpha} vs {expected}");
    }

    #[test]
    fn vp_boundary_identity_holds_across_window() {
        let sched = DiffusionSchedule::vp_default();
        for k in 0..=200 {
            let t = sched.t_min + (sched.t_max - sched.t_min) * k as f64 / 200.0;
            let (alpha, sigma) = sched.alpha_sigma(t).unwrap();
            assert!(
                (alpha * alpha + sigma * sigma - 1.0).abs() <= 1e-12,
                "t = {t}"
            );
        }
    }

    #[test]
    fn sigma_increases_and_alpha_never_grows() {
        for sched in [DiffusionSchedule::ve_default(), DiffusionSchedule::vp_default()] {
            let mut prev: Option<(f64, f64)> = None;
            for k in 0..=500 {
                let t = sched.t_min + (sched.t_max - sched.t_min) * k as f64 / 500.0;
                let (alpha, sigma) = sched.alpha_sigma(t).unwrap();
                if let Some((pa, ps)) = prev {
                    assert!(sigma > ps, "sigma must strictly increase at t = {t}");
                    assert!(alpha <= pa, "alpha must not grow at t = {t}");
                }
                prev = Some((alpha, sigma));
            }
        }
    }

    #[test]
    fn times_outside_the_window_are_rejected() {
        let sched = DiffusionSchedule::ve_default();
        assert!(matches!(
            sched.alpha_sigma(1e-4),
            Err(Error::TimeOutOfWindow { .. })
        ));
        assert!(matches!(
            sched.alpha_sigma(10.5),
            Err(Error::TimeOutOfWindow { .. })
        ));
        assert!(sched.alpha_sigma(10.0).is_ok());
    }

    #[test]
    fn bad_windows_and_betas_are_rejected() {
        assert!(DiffusionSchedule::ve(0.0, 1.0).is_err());
        assert!(DiffusionSchedule::ve(1.0, 0.5).is_err());
        assert!(DiffusionSchedule::vp(0.0, 20.0, 1e-3, 1.0).is_err());
        assert!(DiffusionSchedule::vp(2.0, 1.0, 1e-3, 1.0).is_err());
    }

    #[test]
    fn conditional_score_matches_finite_difference_of_log_kernel() {
        for sched in [DiffusionSchedule::ve_default(), DiffusionSchedule::vp_default()] {
            let t = 0.7;
            let x0 = [0.8, -0.4];
            let x_t = [1.1, 0.3];
            let (alpha, sigma) = sched.alpha_sigma(t).unwrap();
            let var = sigma * sigma;
            let log_kernel = |y: &[f64]| {
                y.iter()
                    .zip(&x0)
                    .map(|(&yt, &x)| -(yt - alpha * x) * (yt - alpha * x) / (2.0 * var))
                    .sum::<f64>()
            };
            let score = sched.conditional_score(&x0, &x_t, t).unwrap();
            let h = 1e-6;
            for i in 0..2 {
                let mut up = x_t;
                let mut down = x_t;
                up[i] += h;
                down[i] -= h;
                let fd = (log_kernel(&up) - log_kernel(&down)) / (2.0 * h);
                assert!(
                    (score[i] - fd).abs() < 1e-6,
                    "{:?} dim {i}: {} vs {}",
                    sched.kind,
                    score[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn transition_marginals_match_closed_form_within_three_se() {
        let n = 100_000;
        for sched in [DiffusionSchedule::ve_default(), DiffusionSchedule::vp_default()] {
            let t = 0.7;
            let x0 = [1.5];
            let (alpha, sigma) = sched.alpha_sigma(t).unwrap();
            let mut rng = Xoshiro256::seed_from_u64(17);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..n {
                let xt = sched.sample_transition(&x0, t, &[rng.normal()]).unwrap()[0];
                sum += xt;
                sum_sq += xt * xt;
            }
            let mean = sum / n as f64;
            let var = sum_sq / n as f64 - mean * mean;
            let want_mean = alpha * x0[0];
            let want_var = sigma * sigma;
            let se_mean = sigma / (n as f64).sqrt();
            let se_var = want_var * (2.0 / n as f64).sqrt();
            assert!(
                (mean - want_mean).abs() <= 3.0 * se_mean,
                "{:?} mean {mean} vs {want_mean}",
                sched.kind
            );
            assert!(
                (var - want_var).abs() <= 3.0 * se_var,
                "{:?} var {var} vs {want_var}",
                sched.kind
            );
        }
    }

    #[test]
    fn sample_transition_rejects_mismatched_noise() {
        let sched = DiffusionSchedule::ve_default();
        assert!(matches!(
            sched.sample_transition(&[0.0, 1.0], 0.5, &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ramp_weighting_matches_piecewise_definition() {
        let sched = DiffusionSchedule::ve_default();
        assert_eq!(Weighting::Ramp.eval(&sched, 0.5).unwrap(), 0.5);
        assert_eq!(Weighting::Ramp.eval(&sched, 1.0).unwrap(), 1.0);
        assert_eq!(Weighting::Ramp.eval(&sched, 4.0).unwrap(), 0.25);
    }

    #[test]
    fn sigma_squared_weighting_equals_t_under_ve() {
        let sched = DiffusionSchedule::ve_default();
        assert!((Weighting::SigmaSquared.eval(&sched, 4.0).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn constant_weighting_validates_its_value() {
        let sched = DiffusionSchedule::ve_default();
        assert_eq!(Weighting::Constant(2.5).eval(&sched, 0.3).unwrap(), 2.5);
        assert!(Weighting::Constant(0.0).eval(&sched, 0.3).is_err());
        assert!(Weighting::Constant(f64::NAN).eval(&sched, 0.3).is_err());
    }

    #[test]
    fn tweedie_denoise_matches_hand_example_under_ve() {
        // x_t = 2, t = 1, marginal score of a unit Gaussian = -2 / (1 + 1) = -1.
        let sched = DiffusionSchedule::ve_default();
        let denoised = sched.tweedie_denoise(&[2.0], 1.0, &[-1.0]).unwrap();
        assert!((denoised[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tweedie_denoise_recovers_the_gaussian_posterior_mean_under_vp() {
        let sched = DiffusionSchedule::vp_default();
        let (mu0, v0) = (0.7, 0.64);
        let t = 0.4;
        let (alpha, sigma) = sched.alpha_sigma(t).unwrap();
        let var_marginal = alpha * alpha * v0 + sigma * sigma;
        let x_t = 0.9;
        let score = -(x_t - alpha * mu0) / var_marginal;
        let denoised = sched.tweedie_denoise(&[x_t], t, &[score]).unwrap()[0];
        let posterior_mean =
            (v0 * alpha * x_t + sigma * sigma * mu0) / var_marginal;
        assert!(
            (denoised - posterior_mean).abs() < 1e-12,
            "{denoised} vs {posterior_mean}"
        );
    }
}
