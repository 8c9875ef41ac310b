//! Staged experiment harness.
//!
//! The pipeline mirrors the edge/cloud split with explicit file
//! hand-offs: `train-main` and `train-cloud` simulate the cloud stage,
//! `analyze-classes` ranks classes and writes the partition file the
//! edge downloads, `train-mea` freezes the main block and trains the
//! remaining blocks on hard-class data, and `eval` / `sweep-threshold`
//! run routed inference with reports.
//!
//! Every command is deterministic given the config and seeds: rerunning
//! it reproduces byte-identical outputs.

mod config;
mod reports;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use meanet::arch;
use meanet::checkpoint::{
    load_classifier, load_mea, load_partition, save_classifier, save_mea, save_partition,
    ClassifierKind,
};
use meanet::complexity::{
    build_class_stats, filter_hard_subset, select_hard_classes, select_random_classes,
};
use meanet::cost::{measured_cost_report, strategy_cost, CostParams, Strategy};
use meanet::data::{save_csv, split_train_val, Dataset, DatasetManifest};
use meanet::error::{Error, Result};
use meanet::router::{
    calibrate_threshold, run_inference, CloudModel, CloudSim, RoutePolicy, ThresholdRange,
};
use meanet::trainer::{
    evaluate_main, train_cloud, train_extension_adaptive, train_feature_tail, train_main,
};

use config::ExperimentConfig;
use reports::*;

#[derive(Parser)]
#[command(
    name = "meanet",
    version,
    about = "Edge-cloud distributed training and inference simulator"
)]
struct Cli {
    /// Experiment config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for all outputs (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Master seed: overrides every seed in the config with derived
    /// streams.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Materialize the configured synthetic dataset as CSV files.
    GenData,
    /// Stage 1: train the main block (and exit 1) on the training split.
    TrainMain,
    /// Train the cloud-side model on the training split.
    TrainCloud {
        /// raw: classifier on raw inputs; feature-tail: classifier on
        /// edge features (requires --main-checkpoint).
        #[arg(long, value_enum, default_value = "raw")]
        kind: CloudKindArg,
        #[arg(long)]
        main_checkpoint: Option<PathBuf>,
    },
    /// Rank classes by validation precision and write the partition
    /// file and per-class statistics.
    AnalyzeClasses {
        #[arg(long)]
        main_checkpoint: PathBuf,
        /// Hard-set size; defaults to the model's num_hard (half the
        /// classes unless configured).
        #[arg(long)]
        n_hard: Option<usize>,
        /// Ablation: pick the hard set uniformly at random instead of
        /// by precision (seeded from the dataset split seed).
        #[arg(long)]
        random_classes: bool,
    },
    /// Stage 2: freeze the main block and train the adaptive and
    /// extension blocks on the hard subset.
    TrainMea {
        #[arg(long)]
        main_checkpoint: PathBuf,
        #[arg(long)]
        partition: PathBuf,
    },
    /// Routed inference on the test set with reports and a record log.
    Eval {
        #[arg(long)]
        mea_checkpoint: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        cloud_checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "off")]
        cloud_mode: CloudModeArg,
        /// Entropy threshold; defaults to the config value, else the
        /// midpoint of the calibrated range.
        #[arg(long)]
        threshold: Option<f64>,
        /// Evaluate only instances of hard classes, with the extension
        /// path always active.
        #[arg(long)]
        hard_only: bool,
    },
    /// Run eval across a threshold grid and tabulate accuracy, offload
    /// fraction, and energy.
    SweepThreshold {
        #[arg(long)]
        mea_checkpoint: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        cloud_checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "oracle")]
        cloud_mode: CloudModeArg,
        /// Comma list ("0,0.5,1.0") or range ("start:end:step").
        #[arg(long)]
        grid: String,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CloudKindArg {
    Raw,
    FeatureTail,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CloudModeArg {
    Oracle,
    RawModel,
    FeatureTail,
    Off,
}

impl CloudModeArg {
    fn as_str(self) -> &'static str {
        match self {
            CloudModeArg::Oracle => "oracle",
            CloudModeArg::RawModel => "raw-model",
            CloudModeArg::FeatureTail => "feature-tail",
            CloudModeArg::Off => "off",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

/// Everything a command needs from the environment.
struct Ctx {
    config: ExperimentConfig,
    config_dir: PathBuf,
    out_dir: PathBuf,
    seed_override: Option<u64>,
}

impl Ctx {
    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn train_dataset(&self) -> Result<Dataset> {
        self.config.train_dataset(&self.config_dir)
    }

    fn test_dataset(&self) -> Result<Dataset> {
        self.config.test_dataset(&self.config_dir)
    }

    fn split(&self, data: &Dataset) -> Result<(Dataset, Dataset)> {
        split_train_val(
            data,
            self.config.dataset.val_fraction,
            self.config.dataset.split_seed,
        )
    }

    /// Records the exact configuration and invocation next to the
    /// command's outputs.
    fn write_resolved(&self, command: &str, flags: &impl Serialize) -> Result<()> {
        #[derive(Serialize)]
        struct Resolved<'a, F: Serialize> {
            command: &'a str,
            seed_override: Option<u64>,
            flags: &'a F,
            config: &'a ExperimentConfig,
        }
        let path = self.out(&format!("{command}.resolved.json"));
        let body = serde_json::to_string_pretty(&Resolved {
            command,
            seed_override: self.seed_override,
            flags,
            config: &self.config,
        })?;
        std::fs::write(path, body + "\n")?;
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    let config_path = cli
        .config
        .clone()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::load(&config_path)?;
    if let Some(master) = cli.seed {
        config.override_seeds(master);
    }
    std::fs::create_dir_all(&cli.out_dir)?;
    let ctx = Ctx {
        config,
        config_dir: config_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
        out_dir: cli.out_dir,
        seed_override: cli.seed,
    };

    match cli.command {
        Command::GenData => cmd_gen_data(&ctx),
        Command::TrainMain => cmd_train_main(&ctx),
        Command::TrainCloud {
            kind,
            main_checkpoint,
        } => cmd_train_cloud(&ctx, kind, main_checkpoint.as_deref()),
        Command::AnalyzeClasses {
            main_checkpoint,
            n_hard,
            random_classes,
        } => cmd_analyze_classes(&ctx, &main_checkpoint, n_hard, random_classes),
        Command::TrainMea {
            main_checkpoint,
            partition,
        } => cmd_train_mea(&ctx, &main_checkpoint, &partition),
        Command::Eval {
            mea_checkpoint,
            partition,
            cloud_checkpoint,
            cloud_mode,
            threshold,
            hard_only,
        } => cmd_eval(
            &ctx,
            &mea_checkpoint,
            &partition,
            cloud_checkpoint.as_deref(),
            cloud_mode,
            threshold,
            hard_only,
        ),
        Command::SweepThreshold {
            mea_checkpoint,
            partition,
            cloud_checkpoint,
            cloud_mode,
            grid,
        } => cmd_sweep(
            &ctx,
            &mea_checkpoint,
            &partition,
            cloud_checkpoint.as_deref(),
            cloud_mode,
            &grid,
        ),
    }
}

fn cmd_gen_data(ctx: &Ctx) -> Result<()> {
    if ctx.config.dataset.kind != config::DatasetKind::Synthetic {
        return Err(Error::Config(
            "gen-data materializes synthetic datasets; this config loads files".into(),
        ));
    }
    for (name, data) in [
        ("train", ctx.train_dataset()?),
        ("test", ctx.test_dataset()?),
    ] {
        let csv_path = ctx.out(&format!("{name}.csv"));
        save_csv(&data, &csv_path)?;
        DatasetManifest::of(&data).save(&ctx.out(&format!("{name}.manifest.json")))?;
        println!("wrote {} ({} rows)", csv_path.display(), data.len());
    }
    ctx.write_resolved("gen_data", &())?;
    Ok(())
}

fn cmd_train_main(ctx: &Ctx) -> Result<()> {
    let data = ctx.train_dataset()?;
    let (train, val) = ctx.split(&data)?;
    let mea = ctx.config.mea_config()?;
    let mut net = arch::build(&mea, ctx.config.model.build_seed)?;
    let curve = train_main(
        &mut net,
        &train,
        Some(&val),
        &ctx.config.sgd.main.train_params(),
    )?;
    save_mea(&net, &ctx.out("main_checkpoint.json"))?;
    write_training_curve(&ctx.out("main_curve.csv"), &curve)?;
    ctx.write_resolved("train_main", &())?;
    let final_val = curve
        .iter()
        .rev()
        .find(|p| p.split == meanet::trainer::Split::Val);
    println!(
        "trained main block: {} epochs, final val accuracy {}",
        ctx.config.sgd.main.epochs,
        final_val
            .map(|p| p.accuracy.to_string())
            .unwrap_or_default()
    );
    Ok(())
}

fn cmd_train_cloud(ctx: &Ctx, kind: CloudKindArg, main_checkpoint: Option<&Path>) -> Result<()> {
    let data = ctx.train_dataset()?;
    let (train, val) = ctx.split(&data)?;
    let params = ctx.config.sgd.cloud.train_params();
    match kind {
        CloudKindArg::Raw => {
            meanet::trainer::ensure_cloud_larger(
                &ctx.config.cloud_spec(),
                &ctx.config.mea_config()?,
            )?;
            let (model, curve) = train_cloud(
                &ctx.config.cloud_spec(),
                &train,
                Some(&val),
                &params,
                ctx.config.cloud.build_seed,
            )?;
            save_classifier(
                &model,
                ClassifierKind::Raw,
                &ctx.out("cloud_checkpoint.json"),
            )?;
            write_training_curve(&ctx.out("cloud_curve.csv"), &curve)?;
        }
        CloudKindArg::FeatureTail => {
            let main_path = main_checkpoint.ok_or_else(|| {
                Error::Config("--main-checkpoint is required for the feature-tail kind".into())
            })?;
            let net = load_mea(main_path)?;
            let (model, curve) = train_feature_tail(
                &net,
                &ctx.config.feature_tail_spec(),
                &train,
                Some(&val),
                &params,
                ctx.config.cloud.build_seed,
            )?;
            save_classifier(
                &model,
                ClassifierKind::FeatureTail,
                &ctx.out("feature_tail_checkpoint.json"),
            )?;
            write_training_curve(&ctx.out("feature_tail_curve.csv"), &curve)?;
        }
    }
    #[derive(Serialize)]
    struct Flags {
        kind: &'static str,
    }
    ctx.write_resolved(
        "train_cloud",
        &Flags {
            kind: match kind {
                CloudKindArg::Raw => "raw",
                CloudKindArg::FeatureTail => "feature-tail",
            },
        },
    )?;
    Ok(())
}

fn cmd_analyze_classes(
    ctx: &Ctx,
    main_checkpoint: &Path,
    n_hard: Option<usize>,
    random_classes: bool,
) -> Result<()> {
    let net = load_mea(main_checkpoint)?;
    let data = ctx.train_dataset()?;
    if net.config.num_classes != data.num_classes {
        return Err(Error::ContractViolation(format!(
            "checkpoint has {} classes, dataset has {}",
            net.config.num_classes, data.num_classes
        )));
    }
    let (_, val) = ctx.split(&data)?;
    let eval = evaluate_main(&net, &val)?;
    let stats = build_class_stats(&eval.predictions, val.labels(), val.num_classes)?;
    let n_hard = n_hard.unwrap_or(net.config.num_hard);
    let partition = if random_classes {
        select_random_classes(
            stats.num_classes,
            n_hard,
            ctx.config.dataset.split_seed.wrapping_add(7),
        )?
    } else {
        select_hard_classes(&stats, n_hard)?
    };
    save_partition(&partition, &ctx.out("partition.json"))?;
    write_class_stats(&ctx.out("class_stats.csv"), &stats, &partition)?;
    #[derive(Serialize)]
    struct Flags {
        n_hard: usize,
        random_classes: bool,
    }
    ctx.write_resolved(
        "analyze_classes",
        &Flags {
            n_hard,
            random_classes,
        },
    )?;
    println!("hard classes: {:?}", partition.hard_classes);
    Ok(())
}

fn cmd_train_mea(ctx: &Ctx, main_checkpoint: &Path, partition_path: &Path) -> Result<()> {
    let mut net = load_mea(main_checkpoint)?;
    let partition = load_partition(partition_path)?;
    if partition.num_classes != net.config.num_classes
        || partition.num_hard() != net.config.num_hard
    {
        return Err(Error::ContractViolation(format!(
            "partition ({} classes, {} hard) does not match the model ({}, {})",
            partition.num_classes,
            partition.num_hard(),
            net.config.num_classes,
            net.config.num_hard
        )));
    }
    let data = ctx.train_dataset()?;
    let (train, val) = ctx.split(&data)?;
    let (hard_idx, hard_labels) = filter_hard_subset(train.labels(), &partition)?;
    let hard_train = train.select(&hard_idx, Some((&hard_labels, partition.num_hard())))?;
    let (val_idx, val_labels) = filter_hard_subset(val.labels(), &partition)?;
    let hard_val = if val_idx.is_empty() {
        None
    } else {
        Some(val.select(&val_idx, Some((&val_labels, partition.num_hard())))?)
    };
    net.freeze_main();
    let curve = train_extension_adaptive(
        &mut net,
        &hard_train,
        hard_val.as_ref(),
        &ctx.config.sgd.extension.train_params(),
    )?;
    save_mea(&net, &ctx.out("mea_checkpoint.json"))?;
    write_training_curve(&ctx.out("extension_curve.csv"), &curve)?;
    write_params_report(&ctx.out("params_report.csv"), &net)?;
    ctx.write_resolved("train_mea", &())?;
    println!(
        "trained extension/adaptive blocks on {} hard instances",
        hard_train.len()
    );
    Ok(())
}

/// Builds the cloud simulation for a mode, loading and checking the
/// checkpoint when one is needed.
fn cloud_for_mode(
    ctx: &Ctx,
    mode: CloudModeArg,
    cloud_checkpoint: Option<&Path>,
) -> Result<Option<CloudSim>> {
    let model = match mode {
        CloudModeArg::Off => return Ok(None),
        CloudModeArg::Oracle => CloudModel::Oracle,
        CloudModeArg::RawModel => {
            let path = cloud_checkpoint.ok_or_else(|| {
                Error::Config("--cloud-checkpoint is required for raw-model mode".into())
            })?;
            let (model, kind) = load_classifier(path)?;
            if kind != ClassifierKind::Raw {
                return Err(Error::ContractViolation(
                    "raw-model mode needs a raw cloud checkpoint, got a feature tail".into(),
                ));
            }
            CloudModel::RawModel(model)
        }
        CloudModeArg::FeatureTail => {
            let path = cloud_checkpoint.ok_or_else(|| {
                Error::Config("--cloud-checkpoint is required for feature-tail mode".into())
            })?;
            let (model, kind) = load_classifier(path)?;
            if kind != ClassifierKind::FeatureTail {
                return Err(Error::ContractViolation(
                    "feature-tail mode needs a feature-tail checkpoint, got a raw model".into(),
                ));
            }
            CloudModel::FeatureTail(model)
        }
    };
    Ok(Some(CloudSim {
        model,
        failure_rate: ctx.config.router.failure_rate,
        failure_seed: ctx.config.router.failure_seed,
    }))
}

/// Calibrates the threshold range on the validation split and resolves
/// the operating threshold: explicit value, else the range midpoint.
fn resolve_threshold(
    ctx: &Ctx,
    net: &arch::MeaNet,
    explicit: Option<f64>,
    cloud_attached: bool,
) -> Result<(f64, Option<ThresholdRange>)> {
    let explicit = explicit.or(ctx.config.router.threshold);
    let data = ctx.train_dataset()?;
    let (_, val) = ctx.split(&data)?;
    let range = calibrate_threshold(net, &val);
    match (explicit, range) {
        (Some(t), Ok(r)) => Ok((t, Some(r))),
        (Some(t), Err(_)) => Ok((t, None)),
        (None, Ok(r)) => Ok((r.midpoint(), Some(r))),
        (None, Err(e)) => {
            if cloud_attached {
                Err(e)
            } else {
                // No cloud: the threshold is moot and calibration is
                // best-effort.
                Ok((f64::INFINITY, None))
            }
        }
    }
}

/// Analytic strategy rows plus the measured row for one routed run.
fn cost_rows(
    ctx: &Ctx,
    records: &[meanet::router::RoutingRecord],
    net: &arch::MeaNet,
    threshold: f64,
) -> Result<(Vec<CostRow>, meanet::cost::MeasuredCost)> {
    let energy = ctx.config.energy_params()?;
    let (fixed_macs, trained_macs) = net.count_macs();
    let measured = measured_cost_report(records, &energy, fixed_macs, trained_macs)?;
    let params = CostParams {
        instances: records.len() as u64,
        edge_cost: energy.full_compute_energy_mj(),
        cloud_cost: ctx.config.cost.cloud_cost_mj,
        raw_upload_cost: energy.upload_energy_mj(meanet::router::PayloadKind::RawData)?,
        feature_upload_cost: energy.upload_energy_mj(meanet::router::PayloadKind::Features)?,
        edge_layer_fraction: ctx.config.cost.q,
        beta: measured.beta,
    };
    let mut rows = Vec::new();
    for strategy in Strategy::ALL {
        if strategy == Strategy::EdgeCloudFeatures && ctx.config.cost.q.is_none() {
            continue;
        }
        let breakdown = strategy_cost(strategy, &params)?;
        rows.push(CostRow {
            strategy: strategy.as_str().to_string(),
            threshold,
            beta: params.beta,
            breakdown,
        });
    }
    rows.push(CostRow {
        strategy: "measured".into(),
        threshold,
        beta: measured.beta,
        breakdown: measured.breakdown,
    });
    Ok((rows, measured))
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    ctx: &Ctx,
    mea_checkpoint: &Path,
    partition_path: &Path,
    cloud_checkpoint: Option<&Path>,
    cloud_mode: CloudModeArg,
    threshold: Option<f64>,
    hard_only: bool,
) -> Result<()> {
    let net = load_mea(mea_checkpoint)?;
    let partition = load_partition(partition_path)?;
    let cloud = cloud_for_mode(ctx, cloud_mode, cloud_checkpoint)?;
    let (threshold, range) = resolve_threshold(ctx, &net, threshold, cloud.is_some())?;

    let mut test = ctx.test_dataset()?;
    if hard_only {
        let keep: Vec<usize> = (0..test.len())
            .filter(|&i| partition.is_hard_class(test.label(i)))
            .collect();
        if keep.is_empty() {
            return Err(Error::InvalidInput(
                "no hard-class instances in the test set".into(),
            ));
        }
        test = test.select(&keep, None)?;
    }

    let policy = RoutePolicy {
        threshold,
        cloud: cloud.as_ref(),
        force_extension: hard_only,
    };
    let (records, report) = run_inference(&net, &partition, &test, &policy)?;

    write_records(&ctx.out("records.jsonl"), &records)?;
    write_inference_report(
        &ctx.out("report.csv"),
        &report,
        threshold,
        cloud_mode.as_str(),
        range,
    )?;
    let (rows, _) = cost_rows(ctx, &records, &net, threshold)?;
    write_cost_report(&ctx.out("cost_report.csv"), &rows)?;

    #[derive(Serialize)]
    struct Flags {
        cloud_mode: &'static str,
        threshold: f64,
        hard_only: bool,
    }
    ctx.write_resolved(
        "eval",
        &Flags {
            cloud_mode: cloud_mode.as_str(),
            threshold,
            hard_only,
        },
    )?;
    println!(
        "n={} accuracy={} beta={} detection={}",
        report.n, report.accuracy, report.beta, report.detection_accuracy
    );
    Ok(())
}

fn parse_grid(grid: &str) -> Result<Vec<f64>> {
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidInput(format!("bad grid value {s:?}")))
    };
    let values: Vec<f64> = if grid.contains(':') {
        let parts: Vec<&str> = grid.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidInput(
                "range grid must be start:end:step".into(),
            ));
        }
        let (start, end, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if step <= 0.0 || end < start {
            return Err(Error::InvalidInput(
                "grid needs end >= start and step > 0".into(),
            ));
        }
        let mut out = Vec::new();
        let mut i = 0usize;
        loop {
            let t = start + step * i as f64;
            if t > end + 1e-12 {
                break;
            }
            out.push(t);
            i += 1;
        }
        out
    } else {
        grid.split(',').map(parse).collect::<Result<_>>()?
    };
    if values.is_empty() {
        return Err(Error::InvalidInput("empty threshold grid".into()));
    }
    if values.iter().any(|t| *t < 0.0 || t.is_nan()) {
        return Err(Error::InvalidInput("thresholds must be nonnegative".into()));
    }
    Ok(values)
}

fn cmd_sweep(
    ctx: &Ctx,
    mea_checkpoint: &Path,
    partition_path: &Path,
    cloud_checkpoint: Option<&Path>,
    cloud_mode: CloudModeArg,
    grid: &str,
) -> Result<()> {
    let net = load_mea(mea_checkpoint)?;
    let partition = load_partition(partition_path)?;
    let cloud = cloud_for_mode(ctx, cloud_mode, cloud_checkpoint)?;
    let thresholds = parse_grid(grid)?;

    // The sweep header reports the admissible range from validation.
    let data = ctx.train_dataset()?;
    let (_, val) = ctx.split(&data)?;
    let range = calibrate_threshold(&net, &val)?;

    let test = ctx.test_dataset()?;
    let energy = ctx.config.energy_params()?;
    let (fixed_macs, trained_macs) = net.count_macs();
    let mut rows = Vec::new();
    for &threshold in &thresholds {
        let policy = RoutePolicy {
            threshold,
            cloud: cloud.as_ref(),
            force_extension: false,
        };
        let (records, report) = run_inference(&net, &partition, &test, &policy)?;
        let measured = measured_cost_report(&records, &energy, fixed_macs, trained_macs)?;
        rows.push(SweepRow {
            threshold,
            report,
            breakdown: measured.breakdown,
        });
    }
    write_sweep(&ctx.out("sweep.csv"), range, &rows)?;

    #[derive(Serialize)]
    struct Flags {
        cloud_mode: &'static str,
        grid: String,
    }
    ctx.write_resolved(
        "sweep_threshold",
        &Flags {
            cloud_mode: cloud_mode.as_str(),
            grid: grid.to_string(),
        },
    )?;
    println!(
        "swept {} thresholds; calibrated range ({}, {})",
        thresholds.len(),
        range.mu_c,
        range.mu_w
    );
    Ok(())
}
