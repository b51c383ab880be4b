//! Checkpoint persistence.
//!
//! Checkpoints are single JSON documents. Parameters are serialized as
//! shortest-round-trip decimals, which reparse to bit-identical floats, so
//! `load(save(x))` reproduces every parameter exactly. Writes go through a
//! temp-file-then-rename step so an interrupted run cannot leave a torn
//! checkpoint behind.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{FrozenScore, Generator, ScoreNet, TweedieInit, TIME_FEATURES};
use crate::tensorgrad::{Activation, MlpNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Score,
    Generator,
}

/// On-disk schema. Kept separate from the runtime types so the file format
/// stays explicit and additions stay deliberate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub role: Role,
    pub data_dim: usize,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_sigma: Option<f64>,
    /// Frozen denoiser branch of a Tweedie-initialized generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<ResidualCheckpoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualCheckpoint {
    pub t_star: f64,
    pub sigma_sq: f64,
    pub branch: BranchCheckpoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BranchCheckpoint {
    Net {
        layer_sizes: Vec<usize>,
        activation: Activation,
        params: Vec<f64>,
    },
    Gaussian {
        mean: Vec<f64>,
        var: Vec<f64>,
    },
}

/// Write bytes to `path` atomically: write a sibling temp file, then rename
/// over the destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut text = serde_json::to_string_pretty(ckpt)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn load(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn save_score(path: &Path, net: &ScoreNet) -> Result<()> {
    save(
        path,
        &Checkpoint {
            role: Role::Score,
            data_dim: net.data_dim,
            layer_sizes: net.net.layer_sizes.clone(),
            activation: net.net.activation,
            params: net.net.params.clone(),
            latent_dim: None,
            latent_sigma: None,
            residual: None,
        },
    )
}

pub fn load_score(path: &Path) -> Result<ScoreNet> {
    let ckpt = load(path)?;
    if ckpt.role != Role::Score {
        return Err(Error::Checkpoint(format!(
            "{}: expected a score checkpoint, found role {:?}",
            path.display(),
            ckpt.role
        )));
    }
    let net = MlpNet::new(ckpt.layer_sizes, ckpt.activation, ckpt.params)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    ScoreNet::new(net, ckpt.data_dim)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn save_generator(path: &Path, g: &Generator) -> Result<()> {
    let residual = g.init.as_ref().map(|init| ResidualCheckpoint {
        t_star: init.t_star,
        sigma_sq: init.sigma_sq,
        branch: match &init.branch {
            FrozenScore::Net(net) => BranchCheckpoint::Net {
                layer_sizes: net.layer_sizes.clone(),
                activation: net.activation,
                params: net.params.clone(),
            },
            FrozenScore::Gaussian { mean, var } => BranchCheckpoint::Gaussian {
                mean: mean.clone(),
                var: var.clone(),
            },
        },
    });
    save(
        path,
        &Checkpoint {
            role: Role::Generator,
            data_dim: g.data_dim,
            layer_sizes: g.net.layer_sizes.clone(),
            activation: g.net.activation,
            params: g.net.params.clone(),
            latent_dim: Some(g.latent_dim),
            latent_sigma: Some(g.latent_sigma),
            residual,
        },
    )
}

pub fn load_generator(path: &Path) -> Result<Generator> {
    let ckpt = load(path)?;
    let context = |e: Error| Error::Checkpoint(format!("{}: {e}", path.display()));
    if ckpt.role != Role::Generator {
        return Err(Error::Checkpoint(format!(
            "{}: expected a generator checkpoint, found role {:?}",
            path.display(),
            ckpt.role
        )));
    }
    let latent_dim = ckpt.latent_dim.ok_or_else(|| {
        Error::Checkpoint(format!("{}: generator checkpoint lacks latent_dim", path.display()))
    })?;
    let latent_sigma = ckpt.latent_sigma.ok_or_else(|| {
        Error::Checkpoint(format!("{}: generator checkpoint lacks latent_sigma", path.display()))
    })?;
    let net = MlpNet::new(ckpt.layer_sizes, ckpt.activation, ckpt.params).map_err(context)?;
    let mut g = Generator::new(net, latent_dim, latent_sigma).map_err(context)?;
    if g.data_dim != ckpt.data_dim {
        return Err(Error::Checkpoint(format!(
            "{}: net output dimension {} disagrees with recorded data_dim {}",
            path.display(),
            g.data_dim,
            ckpt.data_dim
        )));
    }
    if let Some(res) = ckpt.residual {
        if latent_dim != g.data_dim {
            return Err(Error::Checkpoint(format!(
                "{}: denoiser-initialized generators need latent_dim == data_dim, got {} vs {}",
                path.display(),
                latent_dim,
                g.data_dim
            )));
        }
        if !(res.t_star > 0.0 && res.t_star.is_finite() && res.sigma_sq >= 0.0) {
            return Err(Error::Checkpoint(format!(
                "{}: residual branch has invalid t_star {} / sigma_sq {}",
                path.display(),
                res.t_star,
                res.sigma_sq
            )));
        }
        let branch = match res.branch {
            BranchCheckpoint::Net {
                layer_sizes,
                activation,
                params,
            } => {
                let net = MlpNet::new(layer_sizes, activation, params).map_err(context)?;
                let score_input = g.data_dim + TIME_FEATURES;
                if net.input_dim() != score_input || net.output_dim() != g.data_dim {
                    return Err(Error::Checkpoint(format!(
                        "{}: residual score net maps {} -> {}, expected {} -> {}",
                        path.display(),
                        net.input_dim(),
                        net.output_dim(),
                        score_input,
                        g.data_dim
                    )));
                }
                FrozenScore::Net(net)
            }
            BranchCheckpoint::Gaussian { mean, var } => {
                if mean.len() != g.data_dim || var.len() != g.data_dim {
                    return Err(Error::Checkpoint(format!(
                        "{}: residual gaussian has dimension {}, expected {}",
                        path.display(),
                        mean.len(),
                        g.data_dim
                    )));
                }
                FrozenScore::Gaussian { mean, var }
            }
        };
        g.init = Some(TweedieInit {
            branch,
            t_star: res.t_star,
            sigma_sq: res.sigma_sq,
        });
    }
    Ok(g)
}

/// Check a loaded net against the layer shape the config expects.
pub fn expect_layer_sizes(
    config_shape: &[usize],
    checkpoint_shape: &[usize],
) -> Result<()> {
    if config_shape != checkpoint_shape {
        return Err(Error::ShapeMismatch {
            left_name: "config".into(),
            left: config_shape.to_vec(),
            right_name: "checkpoint".into(),
            right: checkpoint_shape.to_vec(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::GaussianFamily;
    use crate::diffusion::DiffusionSchedule;
    use crate::nets::{init_generator_from_gaussian, init_generator_from_teacher};
    use crate::rng::Xoshiro256;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn score_checkpoint_round_trips_bit_exactly() {
        let dir = tmpdir();
        let path = dir.path().join("teacher.json");
        let mut rng = Xoshiro256::seed_from_u64(50);
        let net = ScoreNet::random(2, &[16, 16], Activation::Tanh, &mut rng).unwrap();
        save_score(&path, &net).unwrap();
        let back = load_score(&path).unwrap();
        assert_eq!(back.net.params, net.net.params);
        assert_eq!(back.net.layer_sizes, net.net.layer_sizes);
        assert_eq!(back.data_dim, 2);
        assert!(!dir.path().join("teacher.tmp").exists());
    }

    #[test]
    fn plain_generator_round_trips() {
        let dir = tmpdir();
        let path = dir.path().join("g.json");
        let mut rng = Xoshiro256::seed_from_u64(51);
        let net = MlpNet::random(vec![3, 8, 2], Activation::Softplus, &mut rng).unwrap();
        let g = Generator::new(net, 3, 0.5).unwrap();
        save_generator(&path, &g).unwrap();
        let back = load_generator(&path).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn tweedie_generator_round_trips_with_both_branch_kinds() {
        let dir = tmpdir();
        let sched = DiffusionSchedule::ve(1e-3, 10.0).unwrap();
        let mut rng = Xoshiro256::seed_from_u64(52);

        let family = GaussianFamily::standard(2);
        let g1 = init_generator_from_gaussian(
            &family,
            &sched,
            6.25,
            &[8],
            Activation::Softplus,
            &mut rng,
        )
        .unwrap();
        let p1 = dir.path().join("g1.json");
        save_generator(&p1, &g1).unwrap();
        assert_eq!(load_generator(&p1).unwrap(), g1);

        let teacher = ScoreNet::random(2, &[8, 8], Activation::Softplus, &mut rng).unwrap();
        let g2 = init_generator_from_teacher(&teacher, &sched, 6.25, &mut rng).unwrap();
        let p2 = dir.path().join("g2.json");
        save_generator(&p2, &g2).unwrap();
        let back = load_generator(&p2).unwrap();
        assert_eq!(back, g2);
        // The frozen branch must act identically after the round trip.
        let z = vec![0.3, -1.2];
        assert_eq!(back.generate(&z).unwrap(), g2.generate(&z).unwrap());
    }

    #[test]
    fn truncated_file_reports_a_parse_error_with_context() {
        let dir = tmpdir();
        let path = dir.path().join("g.json");
        let mut rng = Xoshiro256::seed_from_u64(53);
        let net = ScoreNet::random(1, &[4], Activation::Tanh, &mut rng).unwrap();
        save_score(&path, &net).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        let err = load_score(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("g.json"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn role_mismatch_is_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("x.json");
        let mut rng = Xoshiro256::seed_from_u64(54);
        let net = ScoreNet::random(1, &[4], Activation::Tanh, &mut rng).unwrap();
        save_score(&path, &net).unwrap();
        let err = load_generator(&path).unwrap_err();
        assert!(err.to_string().contains("expected a generator"), "{err}");
    }

    #[test]
    fn unknown_checkpoint_keys_are_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("x.json");
        std::fs::write(
            &path,
            r#"{"role":"score","data_dim":1,"layer_sizes":[2,1],
                "activation":"tanh","params":[0.0,0.0,0.0],"extra":1}"#,
        )
        .unwrap();
        assert!(load_score(&path).is_err());
    }

    #[test]
    fn shape_expectation_names_both_sides() {
        let err = expect_layer_sizes(&[2, 16, 2], &[2, 8, 2]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("config") && msg.contains("checkpoint"), "{msg}");
        assert!(msg.contains("[2, 16, 2]") && msg.contains("[2, 8, 2]"), "{msg}");
        assert!(expect_layer_sizes(&[2, 8, 2], &[2, 8, 2]).is_ok());
    }

    #[test]
    fn params_with_unusual_floats_survive_the_round_trip() {
        let dir = tmpdir();
        let path = dir.path().join("g.json");
        let mut net = MlpNet::zeros(vec![1, 1], Activation::Tanh).unwrap();
        net.params = vec![1.0 / 3.0, f64::MIN_POSITIVE * 8.0];
        let g = Generator::new(net, 1, 1.0).unwrap();
        save_generator(&path, &g).unwrap();
        let back = load_generator(&path).unwrap();
        assert_eq!(back.net.params[0].to_bits(), g.net.params[0].to_bits());
        assert_eq!(back.net.params[1].to_bits(), g.net.params[1].to_bits());
    }
}
