//! Command-line driver: synthetic data, labeling, two-stage training,
//! evaluation, single-pair scoring, the information simulator and gradient
//! checks.
//!
//! Commands that write files take `--out-dir` (default from `ICTHP_OUT_DIR`),
//! hold a lock file there while running, name outputs by config hash, and
//! write a `<file>.meta.json` sidecar echoing the effective configuration.

pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use icthp::evaluator::{combined_reward, evaluate_run};
use icthp::geometry::cosine_similarity;
use icthp::infosim::{
    critical_threshold, curve_csv, simulate_information_curve_with, synth_triplets, SaturationModel,
};
use icthp::io::{attach_labels, labels_csv, load_dataset, read_labels, write_dataset};
use icthp::trainer::checkpoint::{read_checkpoint, write_checkpoint};
use icthp::trainer::gradcheck::{finite_diff_check, GradTarget};
use icthp::trainer::heads::{forward_hp, forward_ict};
use icthp::trainer::{initial_heads, train_hp, train_ict};
use icthp::{
    label_dataset, Embedding, HeadParams, LabeledRecord, NegativeImages, RunConfig, SeededRng,
    ValidatedDataset,
};

pub use error::{CliError, CliResult};
use output::{write_file, write_meta, DirLock};

#[derive(Debug, Parser)]
#[command(
    name = "icthp",
    version,
    about = "ICT and HP reward scoring over precomputed embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic triplet dataset (manifest plus embedding blob).
    GenSynthetic(GenArgs),
    /// Compute ICT labels for a dataset.
    Label(LabelArgs),
    /// Train the ICT projections or the HP perceptron.
    Train(TrainArgs),
    /// Evaluate checkpoints: pairwise accuracies, rewards, log-likelihood.
    Eval(EvalArgs),
    /// Score a single text/image embedding pair.
    Score(ScoreArgs),
    /// Sweep the information-saturation model.
    Infosim(InfosimArgs),
    /// Compare analytic and finite-difference gradients.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Args)]
pub struct OutDir {
    /// Directory for outputs.
    #[arg(long, env = "ICTHP_OUT_DIR", default_value = "out")]
    pub out_dir: PathBuf,
}

/// Config file plus per-key overrides; flags win over the file.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML key-value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    /// "all" or "i3-only".
    #[arg(long)]
    pub negatives: Option<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    c.$field = v;
                }
            )*};
        }
        set!(
            theta,
            tau,
            alpha,
            beta,
            lambda,
            margin,
            lr,
            batch_size,
            epochs,
            seed,
            hidden_width
        );
        if let Some(n) = &self.negatives {
            c.negatives = n.parse::<NegativeImages>()?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub rho_lo: f64,
    #[arg(long, default_value_t = 2.0)]
    pub rho_hi: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageArg {
    Ict,
    Hp,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Labels CSV; computed from the config when omitted.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stage: StageArg,
    /// Required for `--stage hp`.
    #[arg(long)]
    pub ict_checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub ict_checkpoint: PathBuf,
    #[arg(long)]
    pub hp_checkpoint: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Comma-separated text embedding.
    #[arg(long, allow_hyphen_values = true)]
    pub text: String,
    /// Comma-separated image embedding.
    #[arg(long, allow_hyphen_values = true)]
    pub image: String,
    #[arg(long)]
    pub ict_checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub hp_checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct InfosimArgs {
    /// Prompt information I(t).
    #[arg(long, allow_hyphen_values = true)]
    pub i_t: f64,
    /// Values of I(v): a comma list, or `start:stop:count` for a linear sweep.
    #[arg(long)]
    pub sweep: String,
    #[arg(long, conflicts_with = "theta_star")]
    pub theta: Option<f64>,
    /// Use the critical threshold computed from `--i-star` and `--i-max`.
    #[arg(long, requires_all = ["i_star", "i_max"])]
    pub theta_star: bool,
    #[arg(long, allow_hyphen_values = true)]
    pub i_star: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub i_max: Option<f64>,
    /// Use the smooth soft-min saturation with this sharpness.
    #[arg(long)]
    pub sharpness: Option<f64>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Parameters to check at; the seeded initialization when omitted.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// regression, negatives, total or margin.
    #[arg(long, default_value = "total")]
    pub target: String,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::GenSynthetic(a) => gen_synthetic(&a),
        Command::Label(a) => label(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Score(a) => score(&a),
        Command::Infosim(a) => infosim(&a),
        Command::GradCheck(a) => grad_check(&a),
    }
}

fn lines(paths: &[&Path]) -> String {
    paths.iter().map(|p| format!("{}\n", p.display())).collect()
}

fn gen_synthetic(a: &GenArgs) -> CliResult<String> {
    if a.n == 0 {
        return Err(CliError::InvalidFlags("--n must be positive".into()));
    }
    if a.dim < 4 {
        return Err(CliError::InvalidFlags("--dim must be at least 4".into()));
    }
    if !(a.rho_lo >= 0.0 && a.rho_lo <= a.rho_hi && a.rho_hi.is_finite()) {
        return Err(CliError::InvalidFlags(
            "need 0 <= --rho-lo <= --rho-hi".into(),
        ));
    }
    if !(a.noise >= 0.0 && a.noise.is_finite()) {
        return Err(CliError::InvalidFlags(
            "--noise must be non-negative".into(),
        ));
    }
    let _lock = DirLock::acquire(&a.out.out_dir)?;
    let ds = synth_triplets(
        a.n,
        a.dim,
        (a.rho_lo, a.rho_hi),
        a.noise,
        &mut SeededRng::new(a.seed),
    )?;
    let files = write_dataset(&ds, &a.out.out_dir)?;
    #[derive(Serialize)]
    struct Inputs {
        n: usize,
        dim: usize,
        rho_lo: f64,
        rho_hi: f64,
        noise: f64,
        seed: u64,
    }
    let inputs = Inputs {
        n: a.n,
        dim: a.dim,
        rho_lo: a.rho_lo,
        rho_hi: a.rho_hi,
        noise: a.noise,
        seed: a.seed,
    };
    write_meta(&files.manifest, "gen-synthetic", None, inputs)?;
    Ok(lines(&[&files.manifest, &files.blob]))
}

fn labeled_dataset(
    manifest: &Path,
    labels: Option<&Path>,
    config: &RunConfig,
) -> CliResult<Vec<LabeledRecord>> {
    let ds = load_dataset(manifest)?;
    Ok(match labels {
        Some(p) => attach_labels(&ds, &read_labels(p)?)?,
        None => label_dataset(&ds, config)?,
    })
}

fn require_records(ds: &ValidatedDataset) -> CliResult<()> {
    if ds.is_empty() {
        Err(icthp::Error::EmptyDataset.into())
    } else {
        Ok(())
    }
}

fn label(a: &LabelArgs) -> CliResult<String> {
    let config = a.config.resolve()?;
    let _lock = DirLock::acquire(&a.out.out_dir)?;
    let ds = load_dataset(&a.manifest)?;
    let labeled = label_dataset(&ds, &config)?;
    let path = a.out.out_dir.join(format!("labels-{}.csv", config.hash()));
    write_file(&path, labels_csv(&labeled))?;
    write_meta(
        &path,
        "label",
        Some(&config),
        serde_json::json!({ "manifest": a.manifest }),
    )?;
    Ok(lines(&[&path]))
}

fn train(a: &TrainArgs) -> CliResult<String> {
    let config = a.config.resolve()?;
    let ict_params = match (a.stage, &a.ict_checkpoint) {
        (StageArg::Hp, None) => return Err(CliError::MissingCheckpoint),
        (StageArg::Hp, Some(p)) => Some(read_checkpoint(p)?),
        (StageArg::Ict, _) => None,
    };
    let _lock = DirLock::acquire(&a.out.out_dir)?;
    let (stage, (params, history)) = match ict_params {
        None => {
            let data = labeled_dataset(&a.manifest, a.labels.as_deref(), &config)?;
            if data.is_empty() {
                return Err(icthp::Error::EmptyDataset.into());
            }
            ("ict", train_ict(&data, &config)?)
        }
        Some(ict) => {
            let ds = load_dataset(&a.manifest)?;
            require_records(&ds)?;
            if ict.hidden() != config.hidden_width {
                return Err(CliError::InvalidFlags(format!(
                    "checkpoint hidden width {} differs from config hidden_width {}",
                    ict.hidden(),
                    config.hidden_width
                )));
            }
            ("hp", train_hp(ds.records(), &ict, &config)?)
        }
    };
    let hash = config.hash();
    let ckpt = a.out.out_dir.join(format!("{stage}-{hash}.ckpt"));
    let hist = a.out.out_dir.join(format!("{stage}-{hash}.history.json"));
    write_checkpoint(&params, &ckpt)?;
    write_file(&hist, history.to_json())?;
    let inputs = serde_json::json!({
        "manifest": a.manifest,
        "labels": a.labels,
        "stage": a.stage,
        "ict_checkpoint": a.ict_checkpoint,
    });
    write_meta(&ckpt, "train", Some(&config), &inputs)?;
    write_meta(&hist, "train", Some(&config), &inputs)?;
    Ok(lines(&[&ckpt, &hist]))
}

fn eval(a: &EvalArgs) -> CliResult<String> {
    let config = a.config.resolve()?;
    let ict = read_checkpoint(&a.ict_checkpoint)?;
    let hp = read_checkpoint(&a.hp_checkpoint)?;
    let _lock = DirLock::acquire(&a.out.out_dir)?;
    let data = labeled_dataset(&a.manifest, a.labels.as_deref(), &config)?;
    let report = evaluate_run(&ict, &hp, &data, &config)?;
    let hash = config.hash();
    let json = a.out.out_dir.join(format!("report-{hash}.json"));
    let csv = a.out.out_dir.join(format!("report-{hash}.csv"));
    write_file(&json, report.to_json())?;
    write_file(&csv, report.to_csv())?;
    let inputs = serde_json::json!({
        "manifest": a.manifest,
        "labels": a.labels,
        "ict_checkpoint": a.ict_checkpoint,
        "hp_checkpoint": a.hp_checkpoint,
    });
    write_meta(&json, "eval", Some(&config), &inputs)?;
    write_meta(&csv, "eval", Some(&config), &inputs)?;
    Ok(lines(&[&json, &csv]))
}

fn parse_vector(flag: &str, s: &str) -> CliResult<Embedding> {
    let values = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::InvalidFlags(format!("--{flag}: {e}")))?;
    Ok(Embedding::new(values)?)
}

#[derive(Debug, Serialize)]
struct PairScore {
    cosine: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ict: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hp_raw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reward: Option<f64>,
}

fn score(a: &ScoreArgs) -> CliResult<String> {
    let config = a.config.resolve()?;
    let text = parse_vector("text", &a.text)?;
    let image = parse_vector("image", &a.image)?;
    let load = |p: &Option<PathBuf>| -> CliResult<Option<HeadParams>> {
        p.as_deref()
            .map(read_checkpoint)
            .transpose()
            .map_err(Into::into)
    };
    let ict_params = load(&a.ict_checkpoint)?;
    let hp_params = load(&a.hp_checkpoint)?;
    let ict = ict_params
        .as_ref()
        .map(|p| forward_ict(p, &text, &image, config.tau))
        .transpose()?;
    let hp = hp_params
        .as_ref()
        .map(|p| forward_hp(p, &image))
        .transpose()?;
    let out = PairScore {
        cosine: cosine_similarity(&text, &image)?.value(),
        ict,
        hp_raw: hp.map(|h| h.0),
        hp: hp.map(|h| h.1),
        reward: ict.zip(hp).map(|(i, h)| combined_reward(i, h.1).combined),
    };
    Ok(format!(
        "{}\n",
        serde_json::to_string(&out).expect("score serializes")
    ))
}

/// Comma list, or `start:stop:count` with both ends included.
pub fn parse_sweep(s: &str) -> CliResult<Vec<f64>> {
    let bad = |why: &str| CliError::InvalidFlags(format!("--sweep {s:?}: {why}"));
    let values: Vec<f64> = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, count] = parts[..] else {
            return Err(bad("expected start:stop:count"));
        };
        let start: f64 = start.trim().parse().map_err(|_| bad("bad start"))?;
        let stop: f64 = stop.trim().parse().map_err(|_| bad("bad stop"))?;
        let count: usize = count.trim().parse().map_err(|_| bad("bad count"))?;
        match count {
            0 => return Err(bad("count must be positive")),
            1 => vec![start],
            _ => (0..count)
                .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                .collect(),
        }
    } else {
        s.split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("bad number"))?
    };
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(bad("values must be positive and finite"));
    }
    Ok(values)
}

fn infosim(a: &InfosimArgs) -> CliResult<String> {
    if !(a.i_t > 0.0 && a.i_t.is_finite()) {
        return Err(CliError::InvalidFlags(format!(
            "--i-t must be positive, got {}",
            a.i_t
        )));
    }
    let sweep = parse_sweep(&a.sweep)?;
    let mut comments = vec![("i_t".to_string(), format!("{:.6}", a.i_t))];
    let theta = if a.theta_star {
        let (i_star, i_max) = (a.i_star.unwrap_or(f64::NAN), a.i_max.unwrap_or(f64::NAN));
        let theta = critical_threshold(i_star, i_max, a.i_t)
            .map_err(|e| CliError::InvalidFlags(e.to_string()))?;
        comments.push(("i_star".into(), format!("{i_star:.6}")));
        comments.push(("i_max".into(), format!("{i_max:.6}")));
        theta
    } else {
        match a.theta {
            Some(t) if t > 0.0 && t.is_finite() => t,
            Some(t) => {
                return Err(CliError::InvalidFlags(format!(
                    "--theta must be positive, got {t}"
                )))
            }
            None => {
                return Err(CliError::InvalidFlags(
                    "one of --theta or --theta-star is required".into(),
                ))
            }
        }
    };
    comments.push(("theta".into(), format!("{theta:.6}")));
    let model = match a.sharpness {
        None => SaturationModel::Hard,
        Some(p) if p > 0.0 => {
            comments.push(("sharpness".into(), format!("{p:.6}")));
            SaturationModel::Smooth { sharpness: p }
        }
        Some(p) => {
            return Err(CliError::InvalidFlags(format!(
                "--sharpness must be positive, got {p}"
            )))
        }
    };
    let points = simulate_information_curve_with(a.i_t, &sweep, theta, model)
        .map_err(|e| CliError::InvalidFlags(e.to_string()))?;
    let csv = curve_csv(&points, &comments);
    match &a.output {
        Some(path) => {
            write_file(path, &csv)?;
            Ok(lines(&[path]))
        }
        None => Ok(csv),
    }
}

fn grad_check(a: &GradCheckArgs) -> CliResult<String> {
    let config = a.config.resolve()?;
    let target: GradTarget = a.target.parse()?;
    let data = labeled_dataset(&a.manifest, a.labels.as_deref(), &config)?;
    if data.is_empty() {
        return Err(icthp::Error::EmptyDataset.into());
    }
    let params = match &a.checkpoint {
        Some(p) => read_checkpoint(p)?,
        None => initial_heads(data[0].record.img1.dim(), &config)?,
    };
    let batch = &data[..data.len().min(config.batch_size)];
    let report = finite_diff_check(&params, batch, &config, a.epsilon, target)?;
    let text = format!(
        "{}\n",
        serde_json::to_string(&report).expect("report serializes")
    );
    if report.max_error >= a.tolerance {
        log::error!("{}", text.trim_end());
        return Err(CliError::GradCheckFailed {
            max_error: report.max_error,
            tolerance: a.tolerance,
        });
    }
    Ok(text)
}
