//! Score networks and one-step generators.
//!
//! A [`ScoreNet`] approximates the marginal score `s(x, t)` of a diffused
//! distribution; it reads the point plus `ln t` as a trailing time feature.
//! A [`Generator`] maps one latent draw to one sample in a single forward
//! pass. Both trained networks and closed-form oracles implement [`Score`],
//! so training code never needs to know which kind of teacher it follows.

use crate::analytic::{GaussianFamily, GaussianMixture};
use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::rng::Xoshiro256;
use crate::tensorgrad::{Activation, MlpNet};

/// Anything that can evaluate a marginal score at `(x, t)`.
pub trait Score {
    fn data_dim(&self) -> usize;
    fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>>;
}

/// MLP score model over `(x, ln t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNet {
    pub net: MlpNet,
    pub data_dim: usize,
}

/// Number of scalar time features appended to the data point.
pub const TIME_FEATURES: usize = 1;

impl ScoreNet {
    pub fn new(net: MlpNet, data_dim: usize) -> Result<Self> {
        if net.input_dim() != data_dim + TIME_FEATURES {
            return Err(Error::DimensionMismatch {
                context: "ScoreNet input (data_dim + time features)".into(),
                expected: data_dim + TIME_FEATURES,
                actual: net.input_dim(),
            });
        }
        if net.output_dim() != data_dim {
            return Err(Error::DimensionMismatch {
                context: "ScoreNet output".into(),
                expected: data_dim,
                actual: net.output_dim(),
            });
        }
        Ok(ScoreNet { net, data_dim })
    }

    /// Randomly initialized score net with the given hidden stack.
    pub fn random(
        data_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut Xoshiro256,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 2);
        layers.push(data_dim + TIME_FEATURES);
        layers.extend_from_slice(hidden);
        layers.push(data_dim);
        Self::new(MlpNet::random(layers, activation, rng)?, data_dim)
    }

    fn time_input(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        if x.len() != self.data_dim {
            return Err(Error::DimensionMismatch {
                context: "ScoreNet point".into(),
                expected: self.data_dim,
                actual: x.len(),
            });
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "score evaluation needs t > 0 for the log-time feature, got {t}"
            )));
        }
        let mut input = Vec::with_capacity(x.len() + TIME_FEATURES);
        input.extend_from_slice(x);
        input.push(t.ln());
        Ok(input)
    }

    /// Accumulate `d(v . s(x, t)) / d params` into `param_acc`.
    pub fn backward_params(
        &self,
        x: &[f64],
        t: f64,
        output_grad: &[f64],
        param_acc: &mut [f64],
    ) -> Result<()> {
        let input = self.time_input(x, t)?;
        self.net.backward_into(&input, output_grad, param_acc)?;
        Ok(())
    }
}

impl Score for ScoreNet {
    fn data_dim(&self) -> usize {
        self.data_dim
    }

    fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let input = self.time_input(x, t)?;
        self.net.forward(&input)
    }
}

/// Closed-form score of a diffused diagonal Gaussian.
#[derive(Debug, Clone)]
pub struct GaussianScoreOracle {
    pub family: GaussianFamily,
    pub sched: DiffusionSchedule,
}

impl Score for GaussianScoreOracle {
    fn data_dim(&self) -> usize {
        self.family.dim()
    }

    fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.family.diffused(&self.sched, t)?.score(x)
    }
}

/// Closed-form score of a diffused Gaussian mixture.
#[derive(Debug, Clone)]
pub struct MixtureScoreOracle {
    pub mixture: GaussianMixture,
    pub sched: DiffusionSchedule,
}

impl Score for MixtureScoreOracle {
    fn data_dim(&self) -> usize {
        self.mixture.dim()
    }

    fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.mixture.diffused(&self.sched, t)?.score(x)
    }
}

/// Frozen score branch baked into a generator at initialization time.
#[derive(Debug, Clone, PartialEq)]
pub enum FrozenScore {
    /// A copied score network, evaluated at the stored `t_star`.
    Net(MlpNet),
    /// A Gaussian family already diffused to `t_star`.
    Gaussian { mean: Vec<f64>, var: Vec<f64> },
}

/// Denoiser-shaped initialization: the generator starts out computing
/// `z + sigma^2(t_star) s_teacher(z, t_star)`, the posterior-mean denoiser of
/// its own latent, with a trainable correction on top that begins at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TweedieInit {
    pub branch: FrozenScore,
    pub t_star: f64,
    pub sigma_sq: f64,
}

impl TweedieInit {
    fn branch_score(&self, z: &[f64]) -> Result<Vec<f64>> {
        match &self.branch {
            FrozenScore::Net(net) => {
                let mut input = Vec::with_capacity(z.len() + TIME_FEATURES);
                input.extend_from_slice(z);
                input.push(self.t_star.ln());
                net.forward(&input)
            }
            FrozenScore::Gaussian { mean, var } => {
                let fam = GaussianFamily::new(mean.clone(), var.clone())?;
                fam.score(z)
            }
        }
    }
}

/// One-step generator: latent draw in, sample out.
///
/// Only `net` is trainable. When `init` is present the forward pass is
/// `z + sigma^2 s*(z) + net(z)` with the first two terms frozen, so the
/// trainable parameter vector is always exactly `net.params`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub net: MlpNet,
    pub latent_dim: usize,
    pub latent_sigma: f64,
    pub data_dim: usize,
    pub init: Option<TweedieInit>,
}

impl Generator {
    /// Plain generator with no frozen branch.
    pub fn new(net: MlpNet, latent_dim: usize, latent_sigma: f64) -> Result<Self> {
        if net.input_dim() != latent_dim {
            return Err(Error::DimensionMismatch {
                context: "Generator latent input".into(),
                expected: latent_dim,
                actual: net.input_dim(),
            });
        }
        if !(latent_sigma > 0.0 && latent_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "latent_sigma must be positive and finite, got {latent_sigma}"
            )));
        }
        let data_dim = net.output_dim();
        Ok(Generator {
            net,
            latent_dim,
            latent_sigma,
            data_dim,
            init: None,
        })
    }

    pub fn generate(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim {
            return Err(Error::DimensionMismatch {
                context: "Generator latent".into(),
                expected: self.latent_dim,
                actual: z.len(),
            });
        }
        let correction = self.net.forward(z)?;
        match &self.init {
            None => Ok(correction),
            Some(init) => {
                let s = init.branch_score(z)?;
                Ok(z
                    .iter()
                    .zip(s.iter().zip(&correction))
                    .map(|(&zi, (&si, &ci))| zi + init.sigma_sq * si + ci)
                    .collect())
            }
        }
    }

    /// Draw a latent from `N(0, latent_sigma^2 I)` and generate.
    pub fn sample(&self, rng: &mut Xoshiro256) -> Result<Vec<f64>> {
        let z: Vec<f64> = (0..self.latent_dim)
            .map(|_| self.latent_sigma * rng.normal())
            .collect();
        self.generate(&z)
    }

    /// Accumulate `d(v . g(z)) / d params` into `param_acc`. The frozen
    /// branch carries no trainable parameters, so only the correction net
    /// contributes.
    pub fn backward_params(&self, z: &[f64], output_grad: &[f64], param_acc: &mut [f64]) -> Result<()> {
        self.net.backward_into(z, output_grad, param_acc)?;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.net.params.len()
    }
}

/// Build a generator whose initial map is the teacher's one-step denoiser at
/// `t_star`. The teacher is copied into a frozen branch; the trainable
/// correction reuses the teacher's hidden stack over a `data_dim` input, with
/// random hidden features and a zeroed output layer so the correction starts
/// at the zero function.
pub fn init_generator_from_teacher(
    teacher: &ScoreNet,
    sched: &DiffusionSchedule,
    t_star: f64,
    rng: &mut Xoshiro256,
) -> Result<Generator> {
    let hidden: Vec<usize> =
        teacher.net.layer_sizes[1..teacher.net.layer_sizes.len() - 1].to_vec();
    tweedie_generator(
        FrozenScore::Net(teacher.net.clone()),
        teacher.data_dim,
        &hidden,
        teacher.net.activation,
        sched,
        t_star,
        rng,
    )
}

/// Same initialization with an exact Gaussian teacher, used by oracle tests.
pub fn init_generator_from_gaussian(
    family: &GaussianFamily,
    sched: &DiffusionSchedule,
    t_star: f64,
    hidden: &[usize],
    activation: Activation,
    rng: &mut Xoshiro256,
) -> Result<Generator> {
    let diffused = family.diffused(sched, t_star)?;
    tweedie_generator(
        FrozenScore::Gaussian {
            mean: diffused.mean,
            var: diffused.var,
        },
        family.dim(),
        hidden,
        activation,
        sched,
        t_star,
        rng,
    )
}

fn tweedie_generator(
    branch: FrozenScore,
    data_dim: usize,
    hidden: &[usize],
    activation: Activation,
    sched: &DiffusionSchedule,
    t_star: f64,
    rng: &mut Xoshiro256,
) -> Result<Generator> {
    let (_, sigma) = sched.alpha_sigma(t_star)?;
    let mut layers = Vec::with_capacity(hidden.len() + 2);
    layers.push(data_dim);
    layers.extend_from_slice(hidden);
    layers.push(data_dim);
    let mut correction = MlpNet::random(layers, activation, rng)?;
    correction.zero_output_layer();
    Ok(Generator {
        net: correction,
        latent_dim: data_dim,
        latent_sigma: sigma,
        data_dim,
        init: Some(TweedieInit {
            branch,
            t_star,
            sigma_sq: sigma * sigma,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorgrad::finite_diff_grad;

    #[test]
    fn score_net_reads_log_time_as_the_trailing_feature() {
        // Single affine layer over (x, ln t): w_x x + w_t ln t + b.
        let net = MlpNet::new(vec![2, 1], Activation::Softplus, vec![0.5, 2.0, -0.25]).unwrap();
        let s = ScoreNet::new(net, 1).unwrap();
        let t = 3.0f64;
        let got = s.score(&[1.5], t).unwrap()[0];
        let want = 0.5 * 1.5 + 2.0 * t.ln() - 0.25;
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn score_net_rejects_nonpositive_times_and_bad_dims() {
        let mut rng = Xoshiro256::seed_from_u64(1);
        let s = ScoreNet::random(2, &[4], Activation::Tanh, &mut rng).unwrap();
        assert!(s.score(&[0.0, 0.0], 0.0).is_err());
        assert!(s.score(&[0.0, 0.0], -1.0).is_err());
        assert!(s.score(&[0.0], 1.0).is_err());
        assert!(ScoreNet::new(MlpNet::zeros(vec![2, 2], Activation::Tanh).unwrap(), 2).is_err());
    }

    #[test]
    fn gaussian_oracle_matches_the_closed_form_score() {
        let sched = DiffusionSchedule::ve_default();
        let oracle = GaussianScoreOracle {
            family: GaussianFamily::standard(1),
            sched,
        };
        // Unit Gaussian under VE: s(x, t) = -x / (1 + t).
        for (x, t) in [(2.0, 1.0), (-1.5, 0.5), (0.3, 4.0)] {
            let got = oracle.score(&[x], t).unwrap()[0];
            assert!((got - (-x / (1.0 + t))).abs() < 1e-14);
        }
    }

    #[test]
    fn tweedie_init_from_a_unit_gaussian_teacher_halves_the_latent() {
        // VE with t_star = 1: the init map is z / (1 + t_star) = z / 2.
        let sched = DiffusionSchedule::ve_default();
        let mut rng = Xoshiro256::seed_from_u64(2);
        let g = init_generator_from_gaussian(
            &GaussianFamily::standard(1),
            &sched,
            1.0,
            &[8],
            Activation::Softplus,
            &mut rng,
        )
        .unwrap();
        assert!((g.generate(&[2.0]).unwrap()[0] - 1.0).abs() < 1e-14);
        assert!((g.generate(&[-3.0]).unwrap()[0] + 1.5).abs() < 1e-14);
        assert_eq!(g.latent_sigma, 1.0);
    }

    #[test]
    fn tweedie_init_pushforward_matches_the_linear_gaussian_algebra() {
        // The init map is linear, so N(0, 1 + t_star) pushes to N(0, 1 / (1 + t_star)).
        let sched = DiffusionSchedule::ve_default();
        let t_star = 1.0;
        let mut rng = Xoshiro256::seed_from_u64(3);
        let g = init_generator_from_gaussian(
            &GaussianFamily::standard(1),
            &sched,
            t_star,
            &[8],
            Activation::Softplus,
            &mut rng,
        )
        .unwrap();
        let n = 100_000;
        let input_sigma = (1.0 + t_star).sqrt();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let x = g.generate(&[input_sigma * rng.normal()]).unwrap()[0];
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let want_var = 1.0 / (1.0 + t_star);
        assert!(mean.abs() <= 3.0 * want_var.sqrt() / (n as f64).sqrt(), "mean {mean}");
        assert!(
            (var - want_var).abs() <= 3.0 * want_var * (2.0 / n as f64).sqrt(),
            "var {var} vs {want_var}"
        );
    }

    #[test]
    fn tweedie_init_with_a_silent_teacher_is_the_identity() {
        let sched = DiffusionSchedule::ve_default();
        let mut rng = Xoshiro256::seed_from_u64(4);
        let mut teacher = ScoreNet::random(2, &[6], Activation::Softplus, &mut rng).unwrap();
        teacher.net.zero_output_layer();
        let g = init_generator_from_teacher(&teacher, &sched, 2.0, &mut rng).unwrap();
        let z = [0.7, -1.1];
        let out = g.generate(&z).unwrap();
        assert_eq!(out, z.to_vec());
        assert_eq!(g.latent_sigma, 2.0f64.sqrt());
    }

    #[test]
    fn tweedie_init_rejects_t_star_outside_the_window() {
        let sched = DiffusionSchedule::ve(1e-3, 5.0).unwrap();
        let mut rng = Xoshiro256::seed_from_u64(5);
        let teacher = ScoreNet::random(1, &[4], Activation::Softplus, &mut rng).unwrap();
        assert!(init_generator_from_teacher(&teacher, &sched, 6.25, &mut rng).is_err());
    }

    #[test]
    fn generator_backward_matches_finite_differences_with_a_frozen_branch() {
        let sched = DiffusionSchedule::ve_default();
        let mut rng = Xoshiro256::seed_from_u64(6);
        let teacher = ScoreNet::random(2, &[5], Activation::Tanh, &mut rng).unwrap();
        let mut g = init_generator_from_teacher(&teacher, &sched, 1.5, &mut rng).unwrap();
        // Give the correction nonzero output weights so the test covers them.
        for p in g.net.params.iter_mut() {
            *p += 0.05;
        }
        let z = [0.4, -0.8];
        let v = [1.3, -0.6];

        let mut grad = vec![0.0; g.param_count()];
        g.backward_params(&z, &v, &mut grad).unwrap();

        let f = |p: &[f64]| {
            let mut probe = g.clone();
            probe.net.params = p.to_vec();
            let out = probe.generate(&z).unwrap();
            out.iter().zip(&v).map(|(o, w)| o * w).sum::<f64>()
        };
        let fd = finite_diff_grad(f, &g.net.params, 1e-5);
        for i in 0..grad.len() {
            let gap = (grad[i] - fd[i]).abs() / grad[i].abs().max(fd[i].abs()).max(1e-8);
            assert!(gap <= 1e-4, "param {i}: {} vs {}", grad[i], fd[i]);
        }
    }

    #[test]
    fn plain_generator_is_just_its_network() {
        let net = MlpNet::new(vec![1, 1], Activation::Softplus, vec![2.0, 0.5]).unwrap();
        let g = Generator::new(net, 1, 1.0).unwrap();
        assert!((g.generate(&[3.0]).unwrap()[0] - 6.5).abs() < 1e-15);
        assert!(g.init.is_none());
    }

    #[test]
    fn generator_rejects_mismatched_latents_and_bad_sigma() {
        let net = MlpNet::zeros(vec![2, 2], Activation::Tanh).unwrap();
        assert!(Generator::new(net.clone(), 3, 1.0).is_err());
        assert!(Generator::new(net.clone(), 2, 0.0).is_err());
        let g = Generator::new(net, 2, 1.0).unwrap();
        assert!(g.generate(&[1.0]).is_err());
    }
}
