//! `pasture`: batch front end for dataset synthesis, forecasting,
//! deployment planning, LiDAR perception and policy comparison.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pasture_core::evaluation::{
    fit_forecaster, run_comparison, write_comparison, ComparisonConfig, FoldRule, ForecastSetup, Forecaster,
};
use pasture_core::field_synth::{
    load_historical_series, read_dataset, synthesize_dataset, write_dataset, GpVariance, GridSpec, HistoricalSeries,
    SynthConfig,
};
use pasture_core::manifest::Manifest;
use pasture_core::perception::{process_cloud, CellStatistic, CropBox, Denoise, PointCloud};
use pasture_core::planner::{
    brute_force_plan, certificate, curvature, greedy_plan, write_policy, BudgetConstraint, GreedyOptions, GroundSet,
    PlannerWeights, PolicyFile, VarianceSet, MAX_EXHAUSTIVE_GROUND_SET,
};
use pasture_core::predictor::{load_model, mc_predict, save_model, write_prediction, NetConfig, TrainConfig};
use pasture_core::HeightMap;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "pasture", version, about = "Pasture growth prediction and robot deployment planning")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// key=value configuration file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set seq.window=10` (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a heightmap dataset from the historical series
    Synth,
    /// Train the forecaster on a dataset
    Train,
    /// Monte-Carlo dropout prediction from a trained model
    Predict,
    /// Plan a deployment policy from predicted variances
    Plan {
        /// Also run exhaustive search and curvature (small instances only)
        #[arg(long)]
        certify: bool,
    },
    /// Estimate a heightmap from a LiDAR point cloud
    Perceive,
    /// Compare deployment policies over randomized trials
    Eval,
}

fn resolve(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &global.overrides {
        cfg.apply(o)?;
    }
    if let Some(seed) = global.seed {
        cfg.set("seed", seed)?;
    }
    if let Some(out) = &global.out {
        cfg.set("out", out.display())?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = resolve(&cli.global).and_then(|cfg| {
        cfg.write_resolved(&cfg.out_dir())?;
        match cli.command {
            Command::Synth => cmd_synth(&cfg),
            Command::Train => cmd_train(&cfg),
            Command::Predict => cmd_predict(&cfg),
            Command::Plan { certify } => cmd_plan(&cfg, certify),
            Command::Perceive => cmd_perceive(&cfg),
            Command::Eval => cmd_eval(&cfg),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn synth_config(cfg: &RunConfig) -> Result<SynthConfig> {
    let grid = GridSpec::new(
        cfg.get("grid.rows")?,
        cfg.get("grid.cols")?,
        cfg.get("grid.width_m")?,
        cfg.get("grid.height_m")?,
    )?;
    let gp_length_scale = match cfg.raw("synth.gp_length_scale") {
        "auto" => None,
        _ => Some(cfg.get("synth.gp_length_scale")?),
    };
    Ok(SynthConfig {
        grid,
        gp_length_scale,
        gp_variance: GpVariance::RelativeToWeight(cfg.get("synth.gp_std_fraction")?),
        noise_std: cfg.get("synth.noise_std")?,
        truncate: cfg.get("synth.truncate")?,
        ..SynthConfig::default()
    }
    .with_length_scale_factor(cfg.get("synth.length_scale_factor")?))
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let series_path = cfg.required_path("synth.series")?;
    let mut history = load_historical_series(&series_path)
        .with_context(|| format!("loading historical series {}", series_path.display()))?;
    let steps: usize = cfg.get("synth.steps")?;
    if steps > 0 {
        if steps > history.len() {
            bail!("synth.steps={steps} exceeds the {} series entries", history.len());
        }
        history = HistoricalSeries::new(history.values[..steps].to_vec())?;
    }
    let out = synthesize_dataset(&synth_config(cfg)?, &history, cfg.get("seed")?)?;
    let dir = cfg.path_or("dataset", "dataset");
    write_dataset(&dir, &out.maps, &out.manifest)?;
    log::info!("wrote {} maps to {}", out.maps.len(), dir.display());
    Ok(())
}

fn net_config(cfg: &RunConfig, rows: usize, cols: usize) -> Result<NetConfig> {
    Ok(NetConfig {
        rows,
        cols,
        enc1: cfg.get("net.enc1")?,
        hid1: cfg.get("net.hid1")?,
        enc2: cfg.get("net.enc2")?,
        hid2: cfg.get("net.hid2")?,
        kernel: cfg.get("net.kernel")?,
    })
}

fn load_dataset(cfg: &RunConfig) -> Result<Vec<HeightMap>> {
    let dir = cfg.path_or("dataset", "dataset");
    let maps = read_dataset(&dir).with_context(|| format!("reading dataset {}", dir.display()))?;
    if maps.is_empty() {
        bail!("dataset {} holds no maps", dir.display());
    }
    Ok(maps)
}

fn train_end(cfg: &RunConfig, len: usize) -> Result<usize> {
    let split: f64 = cfg.get("train.split")?;
    if !(split > 0.0 && split <= 1.0) {
        bail!("config key train.split must lie in (0, 1], got {split}");
    }
    Ok((split * len as f64).floor() as usize)
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let maps = load_dataset(cfg)?;
    let (rows, cols) = maps[0].dims();
    let max_windows: usize = cfg.get("train.max_windows")?;
    let setup = ForecastSetup {
        stride: cfg.get("seq.stride")?,
        window: cfg.get("seq.window")?,
        train_end: train_end(cfg, maps.len())?,
        max_windows: if max_windows == 0 { usize::MAX } else { max_windows },
        val_every: cfg.get("train.val_every")?,
    };
    let tc = TrainConfig {
        learning_rate: cfg.get("train.learning_rate")?,
        momentum: cfg.get("train.momentum")?,
        batch_size: cfg.get("train.batch_size")?,
        max_epochs: cfg.get("train.max_epochs")?,
        patience: cfg.get("train.patience")?,
        dropout: cfg.get("train.dropout")?,
        seed: cfg.get("seed")?,
    };
    let (fc, report) = fit_forecaster(&maps, &setup, net_config(cfg, rows, cols)?, &tc)?;
    let model = cfg.path_or("model", "model.bin");
    save_model(&model, &fc.net, &fc.stats)?;
    let mut log_text = String::from("epoch,train_loss,val_loss\n");
    for (e, v) in report.val_loss.iter().enumerate() {
        let t = if e == 0 { String::new() } else { format!("{:.8}", report.train_loss[e - 1]) };
        log_text.push_str(&format!("{e},{t},{v:.8}\n"));
    }
    let log_path = cfg.out_dir().join("train_log.csv");
    std::fs::write(&log_path, log_text).with_context(|| format!("writing {}", log_path.display()))?;
    log::info!(
        "trained {} epochs, kept epoch {} (val loss {:.5}); model at {}",
        report.epochs_run,
        report.best_epoch,
        report.val_loss[report.best_epoch],
        model.display()
    );
    Ok(())
}

fn load_forecaster(cfg: &RunConfig) -> Result<Forecaster> {
    let path = cfg.path_or("model", "model.bin");
    let (net, stats) = load_model(&path).with_context(|| format!("loading model {}", path.display()))?;
    Ok(Forecaster { net, stats })
}

fn cmd_predict(cfg: &RunConfig) -> Result<()> {
    let maps = load_dataset(cfg)?;
    let fc = load_forecaster(cfg)?;
    let stride: usize = cfg.get("seq.stride")?;
    let window: usize = cfg.get("seq.window")?;
    let span = (window - 1) * stride + 1;
    let origin = match cfg.raw("predict.origin") {
        "latest" => maps
            .len()
            .checked_sub(span)
            .with_context(|| format!("dataset of {} maps is shorter than one input window", maps.len()))?,
        _ => cfg.get("predict.origin")?,
    };
    if origin + span > maps.len() {
        bail!("input window at origin {origin} runs past the {} dataset maps", maps.len());
    }
    let inputs: Vec<HeightMap> = (0..window).map(|j| maps[origin + j * stride].clone()).collect();
    let seed: u64 = cfg.get("seed")?;
    let p: f64 = cfg.get("predict.dropout")?;
    let result = mc_predict(&fc.net, &fc.stats, &inputs, cfg.get("predict.samples")?, p, seed)?;
    let mut manifest = Manifest::new();
    manifest.set("kind", "prediction");
    manifest.set("origin", origin);
    manifest.set("stride", stride);
    manifest.set("dropout", p);
    manifest.set("seed", seed);
    let dir = cfg.out_dir().join("prediction");
    write_prediction(&dir, &result, &manifest)?;
    log::info!("wrote {} predicted steps to {}", result.means.len(), dir.display());
    Ok(())
}

fn planner_weights(cfg: &RunConfig) -> Result<PlannerWeights> {
    Ok(PlannerWeights {
        w1: cfg.get("weights.w1")?,
        w2: cfg.get("weights.w2")?,
        w3: cfg.get("weights.w3")?,
    })
}

fn robot_weights(cfg: &RunConfig) -> Result<Vec<f64>> {
    match cfg.raw("plan.robot_weights") {
        "" => Ok(vec![1.0; cfg.get("plan.robots")?]),
        list => list
            .split(',')
            .map(|w| {
                w.trim()
                    .parse()
                    .with_context(|| format!("config key plan.robot_weights: bad weight {w:?}"))
            })
            .collect(),
    }
}

fn cmd_plan(cfg: &RunConfig, certify: bool) -> Result<()> {
    let dir = cfg.path_or("plan.variances", "prediction");
    let maps = pasture_core::heightmap::read_hmap_dir(&dir, "var_")
        .with_context(|| format!("reading variance maps from {}", dir.display()))?;
    if maps.is_empty() {
        bail!("no var_*.hmap files in {}", dir.display());
    }
    let t1: usize = cfg.get("plan.t1")?;
    let variances = VarianceSet::new(t1, maps)?;
    if variances.is_all_zero() {
        log::warn!("all variances are zero; only the waiting penalty shapes the plan");
    }
    let (rows, cols) = variances.dims();
    let ground = GroundSet::new(rows, cols, robot_weights(cfg)?, t1, variances.horizon())?;
    let weights = planner_weights(cfg)?;
    let budget = BudgetConstraint::new(cfg.get("plan.per_day")?, cfg.get("plan.total_days")?)?;
    if certify && ground.len() > MAX_EXHAUSTIVE_GROUND_SET {
        bail!(
            "--certify needs exhaustive search over all subsets, limited to {MAX_EXHAUSTIVE_GROUND_SET} factors; \
             this instance has {} ({rows}x{cols} cells, {} robots, {} steps)",
            ground.len(),
            ground.robots(),
            ground.horizon
        );
    }
    let options = GreedyOptions {
        stop_at_nonpositive_gain: cfg.get("plan.stop_at_nonpositive_gain")?,
    };
    let plan = greedy_plan(&ground, &variances, weights, budget, options)?;
    let mut header = Manifest::new();
    header.set("method", "intermittent");
    header.set("per_day", budget.per_day);
    header.set("total_days", budget.total_days);
    header.set("w1", weights.w1);
    header.set("w2", weights.w2);
    header.set("w3", weights.w3);
    header.set("value", plan.value);
    let policy = PolicyFile {
        header,
        entries: plan.trace.clone(),
    };
    let path = cfg.out_dir().join("policy.txt");
    write_policy(&path, &policy)?;
    log::info!("selected {} factors, f = {:.6}; policy at {}", plan.selected.len(), plan.value, path.display());

    if certify {
        let (_, optimum) = brute_force_plan(&ground, &variances, weights, budget)?;
        let cf = curvature(&ground, &variances, weights)?;
        let cert = certificate(plan.value, optimum, cf.clamped);
        let mut m = Manifest::new();
        m.set("greedy_value", plan.value);
        m.set("optimal_value", optimum);
        m.set("curvature_raw", cf.raw);
        m.set("curvature", cf.clamped);
        m.set("curvature_out_of_range", cf.out_of_range);
        m.set("bound", cert.bound);
        m.set("ratio", cert.ratio);
        m.set("pass", cert.pass);
        let cpath = cfg.out_dir().join("certificate.txt");
        m.write(&cpath)?;
        log::info!("certificate: ratio {:.4}, bound {:.6}, pass {}", cert.ratio, cert.bound, cert.pass);
    }
    Ok(())
}

fn cmd_perceive(cfg: &RunConfig) -> Result<()> {
    let path = cfg.required_path("perceive.cloud")?;
    let cloud = PointCloud::read(&path).with_context(|| format!("reading point cloud {}", path.display()))?;
    if cloud.is_empty() {
        bail!("point cloud {} is empty", path.display());
    }
    let crop = CropBox::with_band(
        cfg.get("perceive.plot_width")?,
        cfg.get("perceive.plot_height")?,
        cfg.get("perceive.band")?,
    )?;
    let stat: CellStatistic = cfg.get("perceive.statistic")?;
    let denoise: Denoise = cfg.get("perceive.denoise")?;
    let out = process_cloud(&cloud, &crop, cfg.get("perceive.rows")?, cfg.get("perceive.cols")?, stat, denoise)?;
    let dir = cfg.out_dir();
    out.raw.write_hmap(dir.join("raw.hmap"))?;
    out.filtered.write_hmap(dir.join("heightmap.hmap"))?;
    let report = dir.join("report.txt");
    std::fs::write(&report, out.report()).with_context(|| format!("writing {}", report.display()))?;
    log::info!("{} plot points rasterized; report at {}", out.plot_points, report.display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let maps = load_dataset(cfg)?;
    let fc = load_forecaster(cfg)?;
    let test_start = match cfg.raw("eval.test_start") {
        "auto" => train_end(cfg, maps.len())?,
        _ => cfg.get("eval.test_start")?,
    };
    let fold: FoldRule = cfg.get("eval.fold")?;
    let cc = ComparisonConfig {
        trials: cfg.get("eval.trials")?,
        seed: cfg.get("seed")?,
        stride: cfg.get("seq.stride")?,
        window: cfg.get("seq.window")?,
        repredict_steps: cfg.get("eval.repredict")?,
        mc_samples: cfg.get("eval.samples")?,
        dropout: cfg.get("eval.dropout")?,
        meas_std: cfg.get("eval.meas_std")?,
        weights: planner_weights(cfg)?,
        fold,
        test_start,
    };
    let cmp = run_comparison(&fc, &maps, &cc)?;
    let dir = cfg.out_dir();
    write_comparison(&dir, &cmp)?;
    write_text(&dir.join("method_summary.txt"), &cmp.summary())?;
    log::info!("{} trials written to {}\n{}", cc.trials, dir.display(), cmp.summary());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
