//! Training loops: score matching for teachers, integral-KL descent for
//! one-step generators.
//!
//! The auxiliary score model is fit by denoising score matching,
//!
//! `L(phi) = int w(t) E || s_phi(x_t, t) - grad log q_t(x_t | x0) ||^2 dt`,
//!
//! and the generator descends the integral KL between its own diffused
//! marginals and the teacher's. The key identity is that the generator
//! gradient needs no differentiation through either score model: with the
//! score difference held fixed,
//!
//! `grad_theta = int w(t) E [ (s_phi(x_t, t) - s_teacher(x_t, t)) . d x_t / d theta ] dt`,
//!
//! where `d x_t / d theta = alpha(t) d g(z) / d theta`. Time integrals are
//! estimated by sampling `t` uniformly over the schedule window and scaling
//! by the window length.

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionSchedule, Weighting};
use crate::error::{Error, Result};
use crate::nets::{Generator, Score, ScoreNet};
use crate::rng::{Xoshiro256, STREAM_TRAIN};
use crate::tensorgrad::AdamState;

/// Hyperparameters shared by every training loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_phi: f64,
    pub lr_theta: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub phi_steps_per_theta_step: usize,
    pub seed: u64,
    pub ema_decay: f64,
    pub log_interval: usize,
    /// Abort threshold on any gradient norm.
    pub grad_abort: f64,
    /// Abort threshold on the score-matching loss.
    pub loss_abort: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_phi: 1e-3,
            lr_theta: 1e-3,
            beta0: 0.0,
            beta1: 0.99,
            eps: 1e-8,
            batch_size: 128,
            iterations: 1000,
            phi_steps_per_theta_step: 1,
            seed: 0,
            ema_decay: 0.999,
            log_interval: 100,
            grad_abort: 1e4,
            loss_abort: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_phi", self.lr_phi),
            ("lr_theta", self.lr_theta),
            ("eps", self.eps),
            ("grad_abort", self.grad_abort),
            ("loss_abort", self.loss_abort),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("beta0", self.beta0), ("beta1", self.beta1)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!(
                "ema_decay must lie in [0, 1), got {}",
                self.ema_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.phi_steps_per_theta_step == 0 {
            return Err(Error::Config("phi_steps_per_theta_step must be at least 1".into()));
        }
        if self.log_interval == 0 {
            return Err(Error::Config("log_interval must be at least 1".into()));
        }
        Ok(())
    }

    fn adam(&self, n_params: usize, lr: f64) -> AdamState {
        let mut state = AdamState::new(n_params, lr).with_betas(self.beta0, self.beta1);
        state.eps = self.eps;
        state
    }
}

/// One scalar log row per logging interval. Optional columns stay empty in
/// the CSV when a run has nothing to put there. `wall_seconds` is pinned to
/// zero so that metrics files are byte-identical across same-seed runs; real
/// elapsed time is reported out of band.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub dsm_loss: Option<f64>,
    pub instruct_grad_norm: Option<f64>,
    pub ikl_estimate: Option<f64>,
    pub energy_distance: Option<f64>,
    pub wall_seconds: f64,
}

impl MetricsRecord {
    pub const CSV_HEADER: &'static str =
        "iteration,dsm_loss,instruct_grad_norm,ikl_estimate,energy_distance,wall_seconds";

    pub fn to_csv_row(&self) -> String {
        let cell = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.iteration,
            cell(&self.dsm_loss),
            cell(&self.instruct_grad_norm),
            cell(&self.ikl_estimate),
            cell(&self.energy_distance),
            self.wall_seconds
        )
    }

    fn is_finite(&self) -> bool {
        [
            self.dsm_loss,
            self.instruct_grad_norm,
            self.ikl_estimate,
            self.energy_distance,
        ]
        .iter()
        .flatten()
        .all(|v| v.is_finite())
            && self.wall_seconds.is_finite()
    }
}

/// Batch sampler feeding teacher training. Implementations own their RNG so
/// data draws stay independent of training noise.
pub trait DataSource {
    fn dim(&self) -> usize;
    fn sample_batch(&mut self, n: usize) -> Vec<Vec<f64>>;
}

/// Extra per-interval measurements injected by the caller, evaluated on the
/// EMA generator.
#[derive(Debug, Clone, Default)]
pub struct MetricsProbe {
    pub ikl_estimate: Option<f64>,
    pub energy_distance: Option<f64>,
}

pub type ProbeFn<'a> = &'a mut dyn FnMut(&Generator) -> Result<MetricsProbe>;

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Noise-level draw for score matching: log-uniform over the window. The
/// score field varies on multiplicative time scales, so uniform-in-t
/// sampling would starve the small-t end where the target is sharpest.
fn draw_dsm_time(sched: &DiffusionSchedule, rng: &mut Xoshiro256) -> f64 {
    rng.uniform(sched.t_min.ln(), sched.t_max.ln())
        .exp()
        .clamp(sched.t_min, sched.t_max)
}

/// Denoising score-matching loss of an arbitrary score function on one
/// batch, without gradients. Useful for scoring analytic oracles and frozen
/// checkpoints against the same objective the trainer minimizes.
///
/// Each batch element is perturbed twice, with an antithetic noise pair at a
/// shared level. The regression target carries a `noise / sigma` term whose
/// variance blows up as `1 / sigma^2` at small levels; the pair cancels its
/// leading contribution while leaving the expected loss unchanged.
pub fn dsm_loss(
    s: &dyn Score,
    batch_x0: &[Vec<f64>],
    sched: &DiffusionSchedule,
    w: Weighting,
    rng: &mut Xoshiro256,
) -> Result<f64> {
    if batch_x0.is_empty() {
        return Err(Error::InvalidArgument("dsm_loss needs a nonempty batch".into()));
    }
    let n = (2 * batch_x0.len()) as f64;
    let mut loss = 0.0;
    for x0 in batch_x0 {
        let t = draw_dsm_time(sched, rng);
        let noise = rng.normal_vec(x0.len());
        let wt = w.eval(sched, t)?;
        for sign in [1.0, -1.0] {
            let flipped: Vec<f64> = noise.iter().map(|&e| sign * e).collect();
            let x_t = sched.sample_transition(x0, t, &flipped)?;
            let target = sched.conditional_score(x0, &x_t, t)?;
            let out = s.score(&x_t, t)?;
            for i in 0..out.len() {
                let r = out[i] - target[i];
                loss += wt * r * r / n;
            }
        }
    }
    Ok(loss)
}

/// Denoising score-matching loss and its exact parameter gradient for one
/// batch, using the same antithetic pairing as [`dsm_loss`]: the loss is the
/// mean of `w(t) || s_phi(x_t, t) - conditional_score ||^2` over both
/// perturbations of every element.
pub fn dsm_loss_and_grad(
    s: &ScoreNet,
    batch_x0: &[Vec<f64>],
    sched: &DiffusionSchedule,
    w: Weighting,
    rng: &mut Xoshiro256,
) -> Result<(f64, Vec<f64>)> {
    if batch_x0.is_empty() {
        return Err(Error::InvalidArgument("dsm_loss_and_grad needs a nonempty batch".into()));
    }
    let n = (2 * batch_x0.len()) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; s.net.params.len()];
    for x0 in batch_x0 {
        let t = draw_dsm_time(sched, rng);
        let noise = rng.normal_vec(x0.len());
        let wt = w.eval(sched, t)?;
        for sign in [1.0, -1.0] {
            let flipped: Vec<f64> = noise.iter().map(|&e| sign * e).collect();
            let x_t = sched.sample_transition(x0, t, &flipped)?;
            let target = sched.conditional_score(x0, &x_t, t)?;
            let out = s.score(&x_t, t)?;
            let mut out_grad = vec![0.0; out.len()];
            for i in 0..out.len() {
                let r = out[i] - target[i];
                loss += wt * r * r / n;
                out_grad[i] = 2.0 * wt * r / n;
            }
            s.backward_params(&x_t, t, &out_grad, &mut grad)?;
        }
    }
    Ok((loss, grad))
}

/// Result of a teacher run: EMA parameters plus the metrics trail. A run
/// that tripped the divergence guard carries the reason.
#[derive(Debug, Clone)]
pub struct TeacherRun {
    pub score_net: ScoreNet,
    pub metrics: Vec<MetricsRecord>,
    pub diverged: Option<String>,
}

/// Fit a score network to a data source by denoising score matching.
/// Returns the EMA of the parameter trajectory.
///
/// The learning rate holds at `lr_phi` through the first half of the run,
/// then decays geometrically to `lr_phi / 100` by the last iteration. The
/// regression targets stay noisy at equilibrium, so the parameters orbit
/// the minimizer in a ball whose radius scales with the step size; parts
/// of the input space the data rarely visits wander too slowly for the
/// EMA window to average out, and shrinking the step is what tightens
/// them.
pub fn train_teacher(
    source: &mut dyn DataSource,
    net0: ScoreNet,
    cfg: &TrainConfig,
    sched: &DiffusionSchedule,
    w: Weighting,
) -> Result<TeacherRun> {
    cfg.validate()?;
    if source.dim() != net0.data_dim {
        return Err(Error::DimensionMismatch {
            context: "train_teacher data".into(),
            expected: net0.data_dim,
            actual: source.dim(),
        });
    }
    let mut net = net0;
    let mut rng = Xoshiro256::stream(cfg.seed, STREAM_TRAIN);
    let mut adam = cfg.adam(net.net.params.len(), cfg.lr_phi);
    let mut ema = net.net.params.clone();
    let mut metrics = Vec::new();
    let mut diverged = None;

    let hold = cfg.iterations / 2;
    for iter in 1..=cfg.iterations {
        if iter > hold {
            let frac = (iter - hold) as f64 / (cfg.iterations - hold) as f64;
            adam.lr = cfg.lr_phi * 1e-2f64.powf(frac);
        }
        let batch = source.sample_batch(cfg.batch_size);
        let (loss, grad) = dsm_loss_and_grad(&net, &batch, sched, w, &mut rng)?;
        if !loss.is_finite() || loss > cfg.loss_abort {
            diverged = Some(format!("dsm loss {loss} at iteration {iter}"));
            break;
        }
        let gnorm = l2_norm(&grad);
        if !gnorm.is_finite() || gnorm > cfg.grad_abort {
            diverged = Some(format!("dsm gradient norm {gnorm} at iteration {iter}"));
            break;
        }
        adam.step(&mut net.net.params, &grad)?;
        for (e, p) in ema.iter_mut().zip(&net.net.params) {
            *e = cfg.ema_decay * *e + (1.0 - cfg.ema_decay) * p;
        }
        if iter % cfg.log_interval == 0 || iter == cfg.iterations {
            let row = MetricsRecord {
                iteration: iter,
                dsm_loss: Some(loss),
                instruct_grad_norm: None,
                ikl_estimate: None,
                energy_distance: None,
                wall_seconds: 0.0,
            };
            debug_assert!(row.is_finite());
            metrics.push(row);
        }
    }

    net.net.params = ema;
    Ok(TeacherRun {
        score_net: net,
        metrics,
        diverged,
    })
}

/// Monte Carlo estimate of the integral-KL generator gradient
/// `int w(t) E [ (s_phi - s_teacher)(x_t, t) . alpha(t) d g(z) / d theta ] dt`.
/// The score difference enters as a constant vector; nothing backpropagates
/// through either score model.
pub fn ikl_gradient(
    g: &Generator,
    s_phi: &dyn Score,
    s_teacher: &dyn Score,
    sched: &DiffusionSchedule,
    w: Weighting,
    batch: usize,
    rng: &mut Xoshiro256,
) -> Result<Vec<f64>> {
    if batch == 0 {
        return Err(Error::InvalidArgument("ikl_gradient needs batch >= 1".into()));
    }
    check_dims("ikl_gradient", g, &[s_phi.data_dim(), s_teacher.data_dim()])?;
    let window = sched.t_max - sched.t_min;
    let mut grad = vec![0.0; g.param_count()];
    for _ in 0..batch {
        let z: Vec<f64> = (0..g.latent_dim)
            .map(|_| g.latent_sigma * rng.normal())
            .collect();
        let x0 = g.generate(&z)?;
        let t = rng.uniform(sched.t_min, sched.t_max);
        let noise = rng.normal_vec(x0.len());
        let x_t = sched.sample_transition(&x0, t, &noise)?;
        let (alpha, _) = sched.alpha_sigma(t)?;
        let wt = w.eval(sched, t)?;
        let sp = s_phi.score(&x_t, t)?;
        let sq = s_teacher.score(&x_t, t)?;
        let scale = window * wt * alpha / batch as f64;
        let v: Vec<f64> = sp.iter().zip(&sq).map(|(&a, &b)| scale * (a - b)).collect();
        g.backward_params(&z, &v, &mut grad)?;
    }
    Ok(grad)
}

/// Monte Carlo estimate of the point-parameter gradient
/// `int w(t) E [ alpha(t) (grad log q_t(x_t | theta) - s_teacher(x_t, t)) ] dt`,
/// the degenerate-generator special case where theta is the sample itself.
pub fn sds_gradient(
    point: &[f64],
    s_teacher: &dyn Score,
    sched: &DiffusionSchedule,
    w: Weighting,
    batch: usize,
    rng: &mut Xoshiro256,
) -> Result<Vec<f64>> {
    if batch == 0 {
        return Err(Error::InvalidArgument("sds_gradient needs batch >= 1".into()));
    }
    if point.len() != s_teacher.data_dim() {
        return Err(Error::DimensionMismatch {
            context: "sds_gradient point".into(),
            expected: s_teacher.data_dim(),
            actual: point.len(),
        });
    }
    let window = sched.t_max - sched.t_min;
    let mut grad = vec![0.0; point.len()];
    for _ in 0..batch {
        let t = rng.uniform(sched.t_min, sched.t_max);
        let noise = rng.normal_vec(point.len());
        let x_t = sched.sample_transition(point, t, &noise)?;
        let cond = sched.conditional_score(point, &x_t, t)?;
        let sq = s_teacher.score(&x_t, t)?;
        let (alpha, _) = sched.alpha_sigma(t)?;
        let wt = w.eval(sched, t)?;
        let scale = window * wt * alpha / batch as f64;
        for i in 0..grad.len() {
            grad[i] += scale * (cond[i] - sq[i]);
        }
    }
    Ok(grad)
}

/// Monte Carlo estimate of the instantaneous (undiffused) KL gradient
/// `E_z [ (s_gen(x) - s_data(x)) . d g(z) / d theta ]` at `x = g(z)`, with
/// both densities supplied in closed form. Descending it shrinks
/// `KL(p_gen || p_data)`.
pub fn gan_kl_gradient(
    g: &Generator,
    s_gen: &dyn Score,
    s_data: &dyn Score,
    t_eval: f64,
    batch: usize,
    rng: &mut Xoshiro256,
) -> Result<Vec<f64>> {
    if batch == 0 {
        return Err(Error::InvalidArgument("gan_kl_gradient needs batch >= 1".into()));
    }
    check_dims("gan_kl_gradient", g, &[s_gen.data_dim(), s_data.data_dim()])?;
    let mut grad = vec![0.0; g.param_count()];
    for _ in 0..batch {
        let z: Vec<f64> = (0..g.latent_dim)
            .map(|_| g.latent_sigma * rng.normal())
            .collect();
        let x = g.generate(&z)?;
        let sg = s_gen.score(&x, t_eval)?;
        let sd = s_data.score(&x, t_eval)?;
        let v: Vec<f64> = sg
            .iter()
            .zip(&sd)
            .map(|(&a, &b)| (a - b) / batch as f64)
            .collect();
        g.backward_params(&z, &v, &mut grad)?;
    }
    Ok(grad)
}

fn check_dims(context: &str, g: &Generator, score_dims: &[usize]) -> Result<()> {
    for &d in score_dims {
        if d != g.data_dim {
            return Err(Error::DimensionMismatch {
                context: context.into(),
                expected: g.data_dim,
                actual: d,
            });
        }
    }
    Ok(())
}

/// Result of a distillation run: EMA generator, final auxiliary score net,
/// metrics trail, and the divergence reason if the guard fired.
#[derive(Debug, Clone)]
pub struct DistillRun {
    pub generator: Generator,
    pub phi: ScoreNet,
    pub metrics: Vec<MetricsRecord>,
    pub diverged: Option<String>,
}

/// Alternating distillation: each iteration refits the auxiliary score net
/// to the current generator output by score matching, then pushes the
/// generator one step along the integral-KL gradient. The returned generator
/// carries the EMA of the trainable parameters.
///
/// The generator learning rate holds at `lr_theta` through the first half of
/// the run and then decays geometrically to `lr_theta / 100`, the same taper
/// [`train_teacher`] uses: the gradient estimate is noisy, and without the
/// taper the parameters random-walk at a radius set by the step size instead
/// of settling. The auxiliary rate stays fixed because that net must keep
/// tracking a moving target.
pub fn distill(
    g0: Generator,
    teacher: &dyn Score,
    phi0: ScoreNet,
    cfg: &TrainConfig,
    sched: &DiffusionSchedule,
    w: Weighting,
    mut probe: Option<ProbeFn>,
) -> Result<DistillRun> {
    cfg.validate()?;
    check_dims("distill", &g0, &[teacher.data_dim(), phi0.data_dim])?;
    let mut g = g0;
    let mut phi = phi0;
    let mut rng = Xoshiro256::stream(cfg.seed, STREAM_TRAIN);
    let mut adam_phi = cfg.adam(phi.net.params.len(), cfg.lr_phi);
    let mut adam_theta = cfg.adam(g.param_count(), cfg.lr_theta);
    let mut ema = g.net.params.clone();
    let mut metrics = Vec::new();
    let mut diverged = None;

    let hold = cfg.iterations / 2;
    'outer: for iter in 1..=cfg.iterations {
        if iter > hold {
            let frac = (iter - hold) as f64 / (cfg.iterations - hold) as f64;
            adam_theta.lr = cfg.lr_theta * 1e-2f64.powf(frac);
        }
        let mut last_dsm = 0.0;
        for _ in 0..cfg.phi_steps_per_theta_step {
            let batch: Vec<Vec<f64>> = (0..cfg.batch_size)
                .map(|_| {
                    let z: Vec<f64> = (0..g.latent_dim)
                        .map(|_| g.latent_sigma * rng.normal())
                        .collect();
                    g.generate(&z)
                })
                .collect::<Result<_>>()?;
            let (loss, grad) = dsm_loss_and_grad(&phi, &batch, sched, w, &mut rng)?;
            if !loss.is_finite() || loss > cfg.loss_abort {
                diverged = Some(format!("auxiliary dsm loss {loss} at iteration {iter}"));
                break 'outer;
            }
            let gnorm = l2_norm(&grad);
            if !gnorm.is_finite() || gnorm > cfg.grad_abort {
                diverged = Some(format!("auxiliary gradient norm {gnorm} at iteration {iter}"));
                break 'outer;
            }
            adam_phi.step(&mut phi.net.params, &grad)?;
            last_dsm = loss;
        }

        let grad_theta = ikl_gradient(&g, &phi, teacher, sched, w, cfg.batch_size, &mut rng)?;
        let gnorm = l2_norm(&grad_theta);
        if !gnorm.is_finite() || gnorm > cfg.grad_abort {
            diverged = Some(format!("generator gradient norm {gnorm} at iteration {iter}"));
            break;
        }
        adam_theta.step(&mut g.net.params, &grad_theta)?;
        for (e, p) in ema.iter_mut().zip(&g.net.params) {
            *e = cfg.ema_decay * *e + (1.0 - cfg.ema_decay) * p;
        }

        if iter % cfg.log_interval == 0 || iter == cfg.iterations {
            let mut ema_g = g.clone();
            ema_g.net.params = ema.clone();
            let extra = match probe.as_mut() {
                Some(f) => f(&ema_g)?,
                None => MetricsProbe::default(),
            };
            let row = MetricsRecord {
                iteration: iter,
                dsm_loss: Some(last_dsm),
                instruct_grad_norm: Some(gnorm),
                ikl_estimate: extra.ikl_estimate,
                energy_distance: extra.energy_distance,
                wall_seconds: 0.0,
            };
            debug_assert!(row.is_finite());
            metrics.push(row);
        }
    }

    g.net.params = ema;
    Ok(DistillRun {
        generator: g,
        phi,
        metrics,
        diverged,
    })
}

/// Result of a point-parameter optimization run.
#[derive(Debug, Clone)]
pub struct SdsRun {
    pub point: Vec<f64>,
    pub metrics: Vec<MetricsRecord>,
    pub diverged: Option<String>,
}

/// Drive a single point toward the teacher by descending [`sds_gradient`]
/// with Adam.
pub fn sds_optimize(
    point0: Vec<f64>,
    s_teacher: &dyn Score,
    cfg: &TrainConfig,
    sched: &DiffusionSchedule,
    w: Weighting,
) -> Result<SdsRun> {
    cfg.validate()?;
    let mut point = point0;
    let mut rng = Xoshiro256::stream(cfg.seed, STREAM_TRAIN);
    let mut adam = cfg.adam(point.len(), cfg.lr_theta);
    let mut metrics = Vec::new();
    let mut diverged = None;

    for iter in 1..=cfg.iterations {
        let grad = sds_gradient(&point, s_teacher, sched, w, cfg.batch_size, &mut rng)?;
        let gnorm = l2_norm(&grad);
        if !gnorm.is_finite() || gnorm > cfg.grad_abort {
            diverged = Some(format!("sds gradient norm {gnorm} at iteration {iter}"));
            break;
        }
        adam.step(&mut point, &grad)?;
        if iter % cfg.log_interval == 0 || iter == cfg.iterations {
            metrics.push(MetricsRecord {
                iteration: iter,
                dsm_loss: None,
                instruct_grad_norm: Some(gnorm),
                ikl_estimate: None,
                energy_distance: None,
                wall_seconds: 0.0,
            });
        }
    }

    Ok(SdsRun {
        point,
        metrics,
        diverged,
    })
}
