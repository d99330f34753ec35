//! The `qctrl` pipeline: generate data from the simulated chip, train a
//! model, test it, use it for control and inspect its Hamiltonian.
//!
//! Every command reads and writes files in a single output directory:
//!
//! | file | written by |
//! |------|------------|
//! | `ground_truth.json`, `train.jsonl`, `test.jsonl` | `gen-data` |
//! | `checkpoint_{model}.json`, `curve_{model}.csv` | `train` |
//! | `eval_{model}.json` | `test` |
//! | `control_{model}_{kind}.csv`, `control_{model}_{kind}_summary.json` | `control` |
//! | `sweep_{model}_e{electrode}.csv` | `sweep-hamiltonian` |
//! | `report.json` | `report` |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qctrl_core::control::{
    evaluate_controls, optimize_targets, sample_haar_target, sample_reachable_targets,
    ControlConfig, ControlSummary, TargetKind, TargetSpec,
};
use qctrl_core::models::{evaluate_model, train_model_with, TrainConfig};
use qctrl_core::simulator::{generate_dataset, Split};
use qctrl_core::{Architecture, ChipGroundTruth, Dataset, Error, MeasurementMode, Model};
use serde::{Deserialize, Serialize};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "qctrl",
    version,
    about = "Graybox modelling and control of a simulated waveguide chip"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the chip and write training and testing sets.
    GenData(GenDataArgs),
    /// Train a model on the datasets in the output directory.
    Train(TrainArgs),
    /// Recompute training and testing error of a checkpoint.
    Test(TestArgs),
    /// Find controls for sampled targets and assess them on the simulator.
    Control(ControlArgs),
    /// Predicted Hamiltonian while one electrode sweeps over [-1, 1].
    SweepHamiltonian(SweepArgs),
    /// Collect evaluation and control summaries into report.json.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "interferometric")]
    pub mode: MeasurementMode,
    #[arg(long, default_value_t = 7000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    /// Standard deviation of the additive noise on measured powers.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Drop the quadratic voltage terms from the simulated chip.
    #[arg(long)]
    pub linear: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Architecture,
    #[arg(long, default_value_t = 3000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.003)]
    pub lr: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Architecture,
}

#[derive(Debug, Clone, Args)]
pub struct ControlArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Architecture,
    #[arg(long, default_value = "distribution")]
    pub kind: TargetKind,
    #[arg(long, default_value_t = 100)]
    pub targets: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub control_iterations: usize,
    #[arg(long, default_value_t = 0.05)]
    pub control_lr: f64,
    /// Haar-random unitary targets instead of reachable ones.
    #[arg(long)]
    pub haar: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Architecture,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub electrode: u8,
    #[arg(long, default_value_t = 101, value_parser = clap::value_parser!(u64).range(1..))]
    pub points: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
}

/// Exit status for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if let Some(e) = err.downcast_ref::<Error>() {
        return match e {
            Error::UnsupportedModel(_)
            | Error::ModelNotTrained
            | Error::InvalidSpec(_)
            | Error::ControlOutOfDomain(_) => EXIT_USAGE,
            Error::Io(_)
            | Error::Json(_)
            | Error::Parse(_)
            | Error::ShapeMismatch { .. }
            | Error::NotADistribution(_)
            | Error::DegenerateMatrix => EXIT_DATA,
            Error::NotHermitian { .. }
            | Error::ConvergenceFailure { .. }
            | Error::NotUnitary { .. }
            | Error::NoConvergence { .. }
            | Error::NonFiniteLoss { .. } => EXIT_NUMERICAL,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some()
        || err.downcast_ref::<csv::Error>().is_some()
        || err.downcast_ref::<serde_json::Error>().is_some()
    {
        return EXIT_DATA;
    }
    1
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => cmd_gen_data(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Test(a) => cmd_test(&a),
        Command::Control(a) => cmd_control(&a),
        Command::SweepHamiltonian(a) => cmd_sweep_hamiltonian(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

pub fn ground_truth_path(dir: &Path) -> PathBuf {
    dir.join("ground_truth.json")
}

pub fn dataset_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{split}.jsonl"))
}

pub fn checkpoint_path(dir: &Path, model: Architecture) -> PathBuf {
    dir.join(format!("checkpoint_{model}.json"))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
        .map_err(Into::into)
}

fn load_dataset(dir: &Path, split: Split) -> Result<Dataset> {
    let path = dataset_path(dir, split);
    Dataset::read_jsonl(&path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(dir: &Path, arch: Architecture) -> Result<Model> {
    let path = checkpoint_path(dir, arch);
    let model = Model::load(&path).with_context(|| format!("reading {}", path.display()))?;
    if model.architecture() != arch {
        bail!(Error::Parse(format!(
            "{} holds a {} model",
            path.display(),
            model.architecture()
        )));
    }
    Ok(model)
}

pub fn cmd_gen_data(a: &GenDataArgs) -> Result<()> {
    let dir = &a.common.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut gt = if a.linear {
        ChipGroundTruth::linear()
    } else {
        ChipGroundTruth::reference()
    };
    gt.sigma = a.sigma;
    gt.seed = a.common.seed;
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        bail!(Error::InvalidSpec(format!(
            "sigma must be a finite nonnegative number, got {}",
            a.sigma
        )));
    }
    let (train, test) = generate_dataset(&gt, a.n_train, a.n_test, a.mode, a.common.seed)?;
    write_json(&ground_truth_path(dir), &gt)?;
    train.write_jsonl(dataset_path(dir, Split::Train))?;
    test.write_jsonl(dataset_path(dir, Split::Test))?;
    println!(
        "wrote {} training and {} testing examples (mode {}, sigma {}, gt_hash {}) to {}",
        train.len(),
        test.len(),
        a.mode,
        gt.sigma,
        gt.hash(),
        dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct CurveRow {
    iteration: usize,
    train_mse: f64,
    test_mse: f64,
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let dir = &a.common.out_dir;
    let train = load_dataset(dir, Split::Train)?;
    let test = load_dataset(dir, Split::Test)?;
    let mut model = Model::new(a.model, train.mode, a.common.seed);
    let config = TrainConfig {
        iterations: a.iterations,
        learning_rate: a.lr,
    };
    let every = (a.iterations / 20).max(1);
    let report = train_model_with(&mut model, &train, &test, &config, |it, tr, te| {
        if it % every == 0 {
            eprintln!(
                "[{}] iteration {it:>5}  train {tr:.4e}  test {te:.4e}",
                a.model
            );
        }
    })?;

    let curve = dir.join(format!("curve_{}.csv", a.model));
    let mut w =
        csv::Writer::from_path(&curve).with_context(|| format!("writing {}", curve.display()))?;
    for (i, (tr, te)) in report.train_mse.iter().zip(&report.test_mse).enumerate() {
        w.serialize(CurveRow {
            iteration: i,
            train_mse: *tr,
            test_mse: *te,
        })?;
    }
    w.flush()?;
    model.save(checkpoint_path(dir, a.model))?;
    println!(
        "{}: final train MSE {:.4e}, test MSE {:.4e} after {} iterations ({:.1} s)",
        a.model, report.final_train_mse, report.final_test_mse, a.iterations, report.wall_seconds
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: Architecture,
    pub train_mse: f64,
    pub test_mse: f64,
    /// `test_mse / train_mse`.
    pub ratio: f64,
}

pub fn cmd_test(a: &TestArgs) -> Result<()> {
    let dir = &a.common.out_dir;
    let model = load_model(dir, a.model)?;
    let train_mse = evaluate_model(&model, &load_dataset(dir, Split::Train)?)?;
    let test_mse = evaluate_model(&model, &load_dataset(dir, Split::Test)?)?;
    let report = EvalReport {
        model: a.model,
        train_mse,
        test_mse,
        ratio: test_mse / train_mse,
    };
    write_json(&dir.join(format!("eval_{}.json", a.model)), &report)?;
    println!(
        "{}: train MSE {:.4e}, test MSE {:.4e}, ratio {:.3}",
        a.model, train_mse, test_mse, report.ratio
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSummaryFile {
    pub model: Architecture,
    pub kind: TargetKind,
    pub targets: String,
    pub seed: u64,
    #[serde(flatten)]
    pub summary: ControlSummary,
    pub converged: usize,
    /// SHA-256 of the model parameters, identical before and after control.
    pub parameter_hash: String,
}

pub fn cmd_control(a: &ControlArgs) -> Result<()> {
    let dir = &a.common.out_dir;
    let model = load_model(dir, a.model)?;
    use qctrl_core::control::Controllable;
    model.check_supports(a.kind)?;
    let gt: ChipGroundTruth = read_json(&ground_truth_path(dir))?;

    let targets: Vec<TargetSpec> = if a.haar {
        if a.kind != TargetKind::Unitary {
            bail!(Error::InvalidSpec(
                "--haar applies to unitary targets only".into()
            ));
        }
        (0..a.targets)
            .map(|i| sample_haar_target(a.common.seed.wrapping_add(i as u64)))
            .collect()
    } else {
        sample_reachable_targets(&gt, a.kind, a.targets, a.common.seed)?
    };
    let config = ControlConfig {
        restarts: a.restarts,
        iterations: a.control_iterations,
        learning_rate: a.control_lr,
        seed: a.common.seed,
        ..ControlConfig::default()
    };

    let before = model.parameter_hash();
    let mut results = if targets.is_empty() {
        model.ensure_ready()?;
        Vec::new()
    } else {
        optimize_targets(&model, &targets, &config)?
    };
    let after = model.parameter_hash();
    if before != after {
        return Err(anyhow!("model parameters changed during control"));
    }
    let report = evaluate_controls(&gt, a.model.as_str(), &mut results, &targets)?;

    let stem = format!("control_{}_{}", a.model, a.kind);
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    if report.records.is_empty() {
        w.write_record([
            "target_id",
            "kind",
            "model",
            "predicted_objective",
            "achieved_fidelity",
            "achieved_mse",
            "restarts_used",
        ])?;
    }
    for r in &report.records {
        w.serialize(r)?;
    }
    w.flush()?;

    let summary = ControlSummaryFile {
        model: a.model,
        kind: a.kind,
        targets: if a.haar { "haar" } else { "reachable-sampled" }.into(),
        seed: a.common.seed,
        summary: report.summary.clone(),
        converged: results.iter().filter(|r| r.converged).count(),
        parameter_hash: after,
    };
    write_json(&dir.join(format!("{stem}_summary.json")), &summary)?;
    match (
        report.summary.mean,
        report.summary.min,
        report.summary.fraction_gt_99,
    ) {
        (Some(mean), Some(min), Some(frac)) => println!(
            "{} {}: {} targets, mean fidelity {:.5}, min {:.5}, fraction > 0.99 {:.3}",
            a.model, a.kind, report.summary.count, mean, min, frac
        ),
        _ => println!("{} {}: no targets", a.model, a.kind),
    }
    Ok(())
}

pub fn cmd_sweep_hamiltonian(a: &SweepArgs) -> Result<()> {
    let dir = &a.common.out_dir;
    let model = load_model(dir, a.model)?;
    if model.architecture() == Architecture::Blackbox {
        bail!(Error::UnsupportedModel(
            "a blackbox does not provide access to a Hamiltonian".into()
        ));
    }
    let path = dir.join(format!("sweep_{}_e{}.csv", a.model, a.electrode));
    let mut w =
        csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["voltage".to_string()];
    for r in 1..=3 {
        for c in 1..=3 {
            header.push(format!("re_h{r}{c}"));
            header.push(format!("im_h{r}{c}"));
        }
    }
    w.write_record(&header)?;
    let n = a.points as usize;
    for i in 0..n {
        let x = if n == 1 {
            0.0
        } else {
            (-1.0 + 2.0 * i as f64 / (n - 1) as f64).clamp(-1.0, 1.0)
        };
        let mut v = [0.0; 4];
        v[a.electrode as usize - 1] = x;
        let h = model.predict_hamiltonian(&v)?;
        let mut row = vec![x.to_string()];
        for z in h.as_slice() {
            row.push(z.re.to_string());
            row.push(z.im.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    println!("wrote {} points to {}", n, path.display());
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Report {
    pub ground_truth_hash: Option<String>,
    pub evaluations: BTreeMap<String, EvalReport>,
    pub control: BTreeMap<String, ControlSummaryFile>,
}

pub fn cmd_report(a: &ReportArgs) -> Result<()> {
    let dir = &a.common.out_dir;
    let mut report = Report::default();
    let gt_path = ground_truth_path(dir);
    if gt_path.exists() {
        report.ground_truth_hash = Some(read_json::<ChipGroundTruth>(&gt_path)?.hash());
    }
    let mut names: Vec<String> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for name in names {
        let path = dir.join(&name);
        if let Some(stem) = name
            .strip_prefix("eval_")
            .and_then(|s| s.strip_suffix(".json"))
        {
            report
                .evaluations
                .insert(stem.to_string(), read_json(&path)?);
        } else if let Some(stem) = name
            .strip_prefix("control_")
            .and_then(|s| s.strip_suffix("_summary.json"))
        {
            report.control.insert(stem.to_string(), read_json(&path)?);
        }
    }
    write_json(&dir.join("report.json"), &report)?;
    println!(
        "report: {} evaluations, {} control runs",
        report.evaluations.len(),
        report.control.len()
    );
    Ok(())
}
