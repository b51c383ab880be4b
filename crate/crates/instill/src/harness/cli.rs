//! Command-line front end.
//!
//! One run per invocation; every run that produces artifacts writes the
//! resolved configuration next to them. Exit codes: 0 success, 1 usage or
//! config error, 2 numerical divergence (the run's last state is still
//! saved before exiting).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::diffusion::{DiffusionSchedule, Weighting};
use crate::error::{Error, Result};
use crate::harness::checkpoint::{
    self, expect_layer_sizes, load_generator, load_score, save_generator, save_score,
};
use crate::harness::config::{DatasetConfig, ExperimentConfig, GeneratorInit};
use crate::harness::dataset::ToyDataset;
use crate::harness::metrics::{energy_distance, write_metrics_csv};
use crate::harness::oracle;
use crate::harness::plot::render_scatter;
use crate::nets::{init_generator_from_teacher, Generator, ScoreNet};
use crate::rng::{Xoshiro256, STREAM_EVAL, STREAM_INIT};
use crate::training::{distill, sds_optimize, train_teacher, DataSource, MetricsProbe};

#[derive(Parser)]
#[command(
    name = "instill",
    version,
    about = "Train toy score models and distill them into one-step generators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a score network to a synthetic dataset by denoising score matching.
    TrainTeacher(ConfigArgs),
    /// Distill a teacher score model into a one-step generator.
    Distill(DistillArgs),
    /// Continue distilling from an existing generator checkpoint.
    Refine(RefineArgs),
    /// Optimize a single point against a teacher score model.
    Sds(TeacherArgs),
    /// Run the analytic oracle battery and emit its pass/fail table.
    Oracle(ConfigArgs),
    /// Draw samples from a generator checkpoint into a CSV file.
    Sample(SampleArgs),
    /// Print the energy distance between generator samples and a dataset.
    Eval(EvalArgs),
    /// Render scatter plots from a generator checkpoint and/or a dataset.
    Plot(PlotArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for the whole run.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TeacherArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Teacher score checkpoint.
    #[arg(long)]
    teacher: PathBuf,
}

#[derive(Args)]
struct DistillArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Teacher score checkpoint.
    #[arg(long)]
    teacher: PathBuf,
}

#[derive(Args)]
struct RefineArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Teacher score checkpoint.
    #[arg(long)]
    teacher: PathBuf,
    /// Generator checkpoint to warm-start from.
    #[arg(long)]
    generator: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    /// Generator checkpoint.
    #[arg(long)]
    generator: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    count: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Generator checkpoint.
    #[arg(long)]
    generator: PathBuf,
    /// Dataset description (JSON).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    count: usize,
}

#[derive(Args)]
struct PlotArgs {
    /// Generator checkpoint to sample and plot.
    #[arg(long)]
    generator: Option<PathBuf>,
    /// Dataset description (JSON) to sample and plot.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    count: usize,
}

/// Parse and dispatch. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            eprintln!("{e}");
            return 1;
        }
    };
    let outcome = match cli.command {
        Command::TrainTeacher(args) => cmd_train_teacher(args),
        Command::Distill(args) => cmd_distill(args),
        Command::Refine(args) => cmd_refine(args),
        Command::Sds(args) => cmd_sds(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Load the config and fold in the command-line overrides, so from here on
/// the config object alone describes the run.
fn resolve_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.to_string_lossy().into_owned());
    }
    Ok(cfg)
}

fn prepare_out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg
        .out_dir
        .as_ref()
        .ok_or_else(|| Error::Config("an output directory is required (out_dir or --out)".into()))?;
    let dir = PathBuf::from(dir);
    std::fs::create_dir_all(&dir)?;
    checkpoint::write_atomic(&dir.join("config.json"), cfg.to_pretty_json()?.as_bytes())?;
    Ok(dir)
}

fn report_elapsed(label: &str, iterations: usize, start: Instant) {
    eprintln!(
        "{label}: {iterations} iterations in {:.1}s",
        start.elapsed().as_secs_f64()
    );
}

fn cmd_train_teacher(args: ConfigArgs) -> Result<()> {
    let cfg = resolve_config(&args)?;
    let sched = cfg.schedule.build()?;
    let w = cfg.weighting.build();
    let dataset_cfg = cfg.require_dataset()?;
    let net_cfg = cfg.require_score_net()?;
    let dir = prepare_out_dir(&cfg)?;

    let mut dataset = ToyDataset::new(dataset_cfg, cfg.seed)?;
    let mut init_rng = Xoshiro256::stream(cfg.seed, STREAM_INIT);
    let net0 = ScoreNet::random(
        dataset.dim(),
        &net_cfg.hidden,
        net_cfg.activation(),
        &mut init_rng,
    )?;

    let start = Instant::now();
    let run = train_teacher(&mut dataset, net0, &cfg.train, &sched, w)?;
    report_elapsed("train-teacher", cfg.train.iterations, start);

    save_score(&dir.join("teacher.json"), &run.score_net)?;
    write_metrics_csv(&dir.join("metrics.csv"), &run.metrics)?;
    if let Some(reason) = run.diverged {
        return Err(Error::Divergence(reason));
    }
    Ok(())
}

/// Build the generator the distill config asks for: either a fresh MLP over
/// an explicit latent space, or the denoiser-shaped initialization that
/// starts at the teacher's Tweedie map.
fn build_generator(
    cfg: &ExperimentConfig,
    teacher: &ScoreNet,
    sched: &DiffusionSchedule,
) -> Result<Generator> {
    let gen_cfg = cfg.require_generator()?;
    let mut rng = Xoshiro256::stream(cfg.seed, STREAM_INIT);
    match gen_cfg.init {
        GeneratorInit::Tweedie => {
            if gen_cfg.hidden.is_some() {
                return Err(Error::Config(
                    "tweedie init copies the teacher's hidden layers; drop \"hidden\"".into(),
                ));
            }
            if gen_cfg.latent_dim.is_some() || gen_cfg.latent_sigma.is_some() {
                return Err(Error::Config(
                    "tweedie init derives latent_dim and latent_sigma from the teacher; drop them"
                        .into(),
                ));
            }
            let t_star = gen_cfg.t_star.ok_or_else(|| {
                Error::Config("tweedie init needs \"t_star\" in the generator section".into())
            })?;
            init_generator_from_teacher(teacher, sched, t_star, &mut rng)
        }
        GeneratorInit::Fresh => {
            if gen_cfg.t_star.is_some() {
                return Err(Error::Config("\"t_star\" only applies to tweedie init".into()));
            }
            let hidden = gen_cfg.hidden.clone().unwrap_or_else(|| vec![64, 64]);
            let latent_dim = gen_cfg.latent_dim.unwrap_or(teacher.data_dim);
            let latent_sigma = gen_cfg.latent_sigma.unwrap_or(1.0);
            let mut layers = Vec::with_capacity(hidden.len() + 2);
            layers.push(latent_dim);
            layers.extend_from_slice(&hidden);
            layers.push(teacher.data_dim);
            let net = crate::tensorgrad::MlpNet::random(
                layers,
                gen_cfg.activation.unwrap_or(crate::tensorgrad::Activation::Softplus),
                &mut rng,
            )?;
            Generator::new(net, latent_dim, latent_sigma)
        }
    }
}

/// Held-out-data probe: measures the energy distance between fresh
/// generator samples and a fixed held-out batch at every logging interval.
struct EvalProbe {
    held_out: Vec<Vec<f64>>,
    rng: Xoshiro256,
    samples: usize,
}

impl EvalProbe {
    fn new(cfg: &ExperimentConfig, dataset_cfg: &DatasetConfig) -> Result<Self> {
        // One eval stream used sequentially: first the held-out batch, then
        // generator latents, so the two sides stay independent draws.
        let rng = Xoshiro256::stream(cfg.seed, STREAM_EVAL);
        let mut held = ToyDataset::from_rng(dataset_cfg, rng)?;
        let samples = cfg.eval.samples;
        let held_out = held.sample_batch(samples);
        Ok(EvalProbe {
            held_out,
            rng: held.into_rng(),
            samples,
        })
    }

    fn measure(&mut self, g: &Generator) -> Result<MetricsProbe> {
        let mut gen_samples = Vec::with_capacity(self.samples);
        for _ in 0..self.samples {
            gen_samples.push(g.sample(&mut self.rng)?);
        }
        Ok(MetricsProbe {
            ikl_estimate: None,
            energy_distance: Some(energy_distance(&gen_samples, &self.held_out)?),
        })
    }
}

fn run_distill(
    cfg: &ExperimentConfig,
    dir: &Path,
    teacher: ScoreNet,
    g0: Generator,
    sched: &DiffusionSchedule,
    w: Weighting,
) -> Result<()> {
    let phi0 = teacher.clone();
    let mut probe = match &cfg.dataset {
        Some(dataset_cfg) => Some(EvalProbe::new(cfg, dataset_cfg)?),
        None => None,
    };
    let mut probe_fn = probe.as_mut().map(|p| {
        move |g: &Generator| p.measure(g)
    });

    let start = Instant::now();
    let run = distill(
        g0,
        &teacher,
        phi0,
        &cfg.train,
        sched,
        w,
        probe_fn
            .as_mut()
            .map(|f| f as &mut dyn FnMut(&Generator) -> Result<MetricsProbe>),
    )?;
    report_elapsed("distill", cfg.train.iterations, start);

    save_generator(&dir.join("generator.json"), &run.generator)?;
    write_metrics_csv(&dir.join("metrics.csv"), &run.metrics)?;
    if let Some(reason) = run.diverged {
        return Err(Error::Divergence(reason));
    }
    Ok(())
}

fn cmd_distill(args: DistillArgs) -> Result<()> {
    let cfg = resolve_config(&args.common)?;
    let sched = cfg.schedule.build()?;
    let w = cfg.weighting.build();
    let teacher = load_score(&args.teacher)?;
    let g0 = build_generator(&cfg, &teacher, &sched)?;
    let dir = prepare_out_dir(&cfg)?;
    run_distill(&cfg, &dir, teacher, g0, &sched, w)
}

fn cmd_refine(args: RefineArgs) -> Result<()> {
    let cfg = resolve_config(&args.common)?;
    let sched = cfg.schedule.build()?;
    let w = cfg.weighting.build();
    let teacher = load_score(&args.teacher)?;
    let g0 = load_generator(&args.generator)?;
    if teacher.data_dim != g0.data_dim {
        return Err(Error::DimensionMismatch {
            context: "refine teacher vs generator".into(),
            expected: g0.data_dim,
            actual: teacher.data_dim,
        });
    }
    // When the config pins a generator architecture, the warm-start
    // checkpoint must actually have it.
    if let Some(gen_cfg) = &cfg.generator {
        if let Some(hidden) = &gen_cfg.hidden {
            let mut expected = Vec::with_capacity(hidden.len() + 2);
            expected.push(g0.latent_dim);
            expected.extend_from_slice(hidden);
            expected.push(g0.data_dim);
            expect_layer_sizes(&expected, &g0.net.layer_sizes)?;
        }
    }
    let dir = prepare_out_dir(&cfg)?;
    run_distill(&cfg, &dir, teacher, g0, &sched, w)
}

fn cmd_sds(args: TeacherArgs) -> Result<()> {
    let cfg = resolve_config(&args.common)?;
    let sched = cfg.schedule.build()?;
    let w = cfg.weighting.build();
    let teacher = load_score(&args.teacher)?;
    let dir = prepare_out_dir(&cfg)?;

    let mut init_rng = Xoshiro256::stream(cfg.seed, STREAM_INIT);
    let point0: Vec<f64> = (0..teacher.data_dim)
        .map(|_| 2.0 * init_rng.normal())
        .collect();

    let start = Instant::now();
    let run = sds_optimize(point0, &teacher, &cfg.train, &sched, w)?;
    report_elapsed("sds", cfg.train.iterations, start);

    let point_json = serde_json::json!({ "point": run.point });
    checkpoint::write_atomic(
        &dir.join("point.json"),
        format!("{:#}\n", point_json).as_bytes(),
    )?;
    write_metrics_csv(&dir.join("metrics.csv"), &run.metrics)?;
    if let Some(reason) = run.diverged {
        return Err(Error::Divergence(reason));
    }
    Ok(())
}

fn cmd_oracle(args: ConfigArgs) -> Result<()> {
    let cfg = resolve_config(&args)?;
    let dir = prepare_out_dir(&cfg)?;
    let rows = oracle::run_battery(cfg.seed)?;
    checkpoint::write_atomic(&dir.join("oracle.csv"), oracle::to_csv(&rows).as_bytes())?;
    let failures: Vec<&str> = rows
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.check)
        .collect();
    if !failures.is_empty() {
        return Err(Error::Config(format!(
            "oracle battery failed: {}",
            failures.join(", ")
        )));
    }
    println!("oracle battery: {} checks pass", rows.len());
    Ok(())
}

fn generator_samples(g: &Generator, seed: u64, count: usize) -> Result<Vec<Vec<f64>>> {
    let mut rng = Xoshiro256::stream(seed, STREAM_EVAL);
    (0..count).map(|_| g.sample(&mut rng)).collect()
}

fn write_samples_csv(path: &Path, samples: &[Vec<f64>], dim: usize) -> Result<()> {
    let header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    let mut text = header.join(",");
    text.push('\n');
    for s in samples {
        let row: Vec<String> = s.iter().map(|v| v.to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    checkpoint::write_atomic(path, text.as_bytes())
}

fn cmd_sample(args: SampleArgs) -> Result<()> {
    let g = load_generator(&args.generator)?;
    let samples = generator_samples(&g, args.seed, args.count)?;
    std::fs::create_dir_all(&args.out)?;
    write_samples_csv(&args.out.join("samples.csv"), &samples, g.data_dim)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let g = load_generator(&args.generator)?;
    let dataset_cfg = DatasetConfig::from_path(&args.dataset)?;
    if dataset_cfg.data_dim() != g.data_dim {
        return Err(Error::DimensionMismatch {
            context: "eval dataset vs generator".into(),
            expected: g.data_dim,
            actual: dataset_cfg.data_dim(),
        });
    }
    let gen_samples = generator_samples(&g, args.seed, args.count)?;
    let mut dataset = ToyDataset::new(&dataset_cfg, args.seed)?;
    let data_samples = dataset.sample_batch(args.count);
    let d = energy_distance(&gen_samples, &data_samples)?;
    println!("energy_distance,{d}");
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    if args.generator.is_none() && args.dataset.is_none() {
        return Err(Error::Config(
            "plot needs --generator and/or --dataset".into(),
        ));
    }
    std::fs::create_dir_all(&args.out)?;
    if let Some(path) = &args.generator {
        let g = load_generator(path)?;
        if g.data_dim != 2 {
            return Err(Error::InvalidArgument(format!(
                "plot needs a 2D generator, got dimension {}",
                g.data_dim
            )));
        }
        let samples = generator_samples(&g, args.seed, args.count)?;
        render_scatter(&samples, &args.out.join("samples.svg"))?;
    }
    if let Some(path) = &args.dataset {
        let dataset_cfg = DatasetConfig::from_path(path)?;
        if dataset_cfg.data_dim() != 2 {
            return Err(Error::InvalidArgument(format!(
                "plot needs a 2D dataset, got dimension {}",
                dataset_cfg.data_dim()
            )));
        }
        let mut dataset = ToyDataset::new(&dataset_cfg, args.seed)?;
        render_scatter(&dataset.sample_batch(args.count), &args.out.join("data.svg"))?;
    }
    Ok(())
}
