use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use tactigrasp::adapter::{
    adapt_sequences, assemble_windows, run_closed_loop, train_adapter, AdapterConfig, AdapterModel, Controller,
    LoopConfig, ScheduledDisturbance, ZeroPolicy,
};
use tactigrasp::bench::{bench_max_weight, initial_grasp_angle, BenchSetup, BENCH_SECONDS};
use tactigrasp::data::{
    disturbance_schedule, generate_corpus, validate_file, write_corpus, CorpusConfig, DatasetKind, Episode,
    ExpertConfig,
};
use tactigrasp::generator::{grasp_samples, train_generator, GeneratorConfig, GeneratorModel};
use tactigrasp::par::ExecMode;
use tactigrasp::sim::{Catalog, ObjectSpec, SimState, TICK_HZ};
use tactigrasp::stability::{fit_estimator, EstimatorConfig, StabilityEstimator};

use crate::{Arm, TrainArgs};

/// File layout under a workspace root.
pub struct Workspace {
    pub root: PathBuf,
    pub seed: u64,
    pub noise: bool,
}

impl Workspace {
    pub fn new(root: PathBuf, seed: u64, noise: bool) -> Self {
        Self { root, seed, noise }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn generator_path(&self) -> PathBuf {
        self.models_dir().join("generator.tgm")
    }

    pub fn estimator_path(&self) -> PathBuf {
        self.models_dir().join("estimator.tgm")
    }

    pub fn adapter_path(&self) -> PathBuf {
        self.models_dir().join("adapter.tgm")
    }

    pub fn bench_summary_path(&self) -> PathBuf {
        self.root.join("bench").join("summary.json")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn estimator_if_present(&self) -> Result<Option<StabilityEstimator>> {
        let p = self.estimator_path();
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(StabilityEstimator::load(&p).with_context(|| format!("loading {}", p.display()))?))
    }
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing {}: run `tactigrasp {producer}` first", path.display());
    }
    Ok(())
}

fn load_generator(ws: &Workspace) -> Result<GeneratorModel> {
    let p = ws.generator_path();
    require(&p, "train-gen")?;
    GeneratorModel::load(&p).with_context(|| format!("loading {}", p.display()))
}

fn load_estimator(ws: &Workspace) -> Result<StabilityEstimator> {
    let p = ws.estimator_path();
    require(&p, "train-est")?;
    StabilityEstimator::load(&p).with_context(|| format!("loading {}", p.display()))
}

fn load_adapter(ws: &Workspace) -> Result<AdapterModel> {
    let p = ws.adapter_path();
    require(&p, "train-adapt")?;
    AdapterModel::load(&p).with_context(|| format!("loading {}", p.display()))
}

/// Validated episodes of one kind, in file-name order.
fn read_kind(ws: &Workspace, kind: DatasetKind) -> Result<Vec<Episode>> {
    let dir = ws.data_dir().join(kind.as_str());
    if !dir.is_dir() {
        bail!("missing {}: run `tactigrasp collect` first", dir.display());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "tsv"));
    paths.sort();
    if paths.is_empty() {
        bail!("no .tsv datasets in {}: run `tactigrasp collect` first", dir.display());
    }
    paths
        .iter()
        .map(|p| validate_file(p).with_context(|| format!("{}", p.display())))
        .collect()
}

fn objects(spec: &str) -> Result<Vec<ObjectSpec>> {
    let catalog = Catalog::builtin();
    if spec == "all" {
        return Ok(catalog.test_objects().into_iter().cloned().collect());
    }
    Ok(vec![catalog.require(spec)?.clone()])
}

fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn save_path(out: Option<PathBuf>, default: PathBuf) -> Result<PathBuf> {
    let p = out.unwrap_or(default);
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(p)
}

pub fn collect(ws: &Workspace, object: &str, out: Option<PathBuf>) -> Result<Value> {
    let mut catalog = Catalog::builtin();
    if object != "all" {
        catalog.objects = vec![catalog.require(object)?.clone()];
    }
    let cfg = CorpusConfig {
        expert: ExpertConfig {
            noise: ws.noise,
            ..Default::default()
        },
        ..Default::default()
    };
    let episodes = generate_corpus(&catalog, ws.seed, &cfg, ExecMode::Parallel)?;
    let dir = out.unwrap_or_else(|| ws.data_dir());
    let files = write_corpus(&dir, &episodes)?;
    let count = |k: DatasetKind| episodes.iter().filter(|e| e.header.kind == k).count();
    Ok(json!({
        "out": dir.display().to_string(),
        "files": files.len(),
        "frames": episodes.iter().map(|e| e.frames.len()).sum::<usize>(),
        "gp": count(DatasetKind::Gp),
        "stab": count(DatasetKind::Stab),
        "ga": count(DatasetKind::Ga),
    }))
}

pub fn train_gen(ws: &Workspace, args: &TrainArgs) -> Result<Value> {
    let episodes = read_kind(ws, DatasetKind::Gp)?;
    let samples = grasp_samples(&episodes);
    let d = GeneratorConfig::default();
    let cfg = GeneratorConfig {
        lr: args.lr.unwrap_or(d.lr),
        batch: args.batch.unwrap_or(d.batch),
        epochs: args.epochs.unwrap_or(d.epochs),
        ..d
    };
    let (model, hist) = train_generator(&samples, ws.seed, &cfg)?;
    let path = save_path(args.out.clone(), ws.generator_path())?;
    model.save(&path)?;
    let labels: Vec<f64> = samples.iter().map(|s| s.a_deg).collect();
    let var = variance(&labels);
    let val_mse = hist.final_val_mse().unwrap_or(f64::NAN);
    Ok(json!({
        "model": path.display().to_string(),
        "samples": samples.len(),
        "epochs": cfg.epochs,
        "val_mse": val_mse,
        "label_variance": var,
        "val_mse_ratio": val_mse / var,
    }))
}

pub fn train_est(ws: &Workspace, out: Option<PathBuf>) -> Result<Value> {
    let mut episodes = read_kind(ws, DatasetKind::Gp)?;
    episodes.extend(read_kind(ws, DatasetKind::Stab)?);
    let fit = fit_estimator(&episodes, ws.seed, &EstimatorConfig::default())?;
    let path = save_path(out, ws.estimator_path())?;
    fit.estimator.save(&path)?;
    let report = path.with_file_name("threshold_report.tsv");
    fs::write(&report, fit.report.to_text()).with_context(|| format!("writing {}", report.display()))?;
    Ok(json!({
        "model": path.display().to_string(),
        "report": report.display().to_string(),
        "val_auc": fit.val_auc,
        "te": fit.report.te,
        "a": fit.report.a,
        "b": fit.report.b,
        "te_in_bounds": fit.report.a <= fit.report.te && fit.report.te <= fit.report.b,
        "clamped": fit.report.clamped,
        "youden_j": fit.report.chosen_j,
        "train_stable": fit.train_counts.0,
        "train_unstable": fit.train_counts.1,
        "val_stable": fit.val_counts.0,
        "val_unstable": fit.val_counts.1,
    }))
}

pub fn train_adapt(ws: &Workspace, args: &TrainArgs) -> Result<Value> {
    let episodes = read_kind(ws, DatasetKind::Ga)?;
    let seqs = adapt_sequences(&episodes);
    let d = AdapterConfig::default();
    let cfg = AdapterConfig {
        lr: args.lr.unwrap_or(d.lr),
        batch: args.batch.unwrap_or(d.batch),
        epochs: args.epochs.unwrap_or(d.epochs),
        ..d
    };
    let labels: Vec<f64> = assemble_windows(&seqs, cfg.stride).into_iter().map(|w| w.1).collect();
    let (model, hist) = train_adapter(&seqs, ws.seed, &cfg)?;
    let path = save_path(args.out.clone(), ws.adapter_path())?;
    model.save(&path)?;
    let var = variance(&labels);
    let val_mse = hist.final_val_mse().unwrap_or(f64::NAN);
    Ok(json!({
        "model": path.display().to_string(),
        "windows": labels.len(),
        "epochs": cfg.epochs,
        "val_mse": val_mse,
        "label_variance": var,
        "val_mse_ratio": val_mse / var,
    }))
}

pub fn eval(ws: &Workspace, object: &str, out: Option<PathBuf>) -> Result<Value> {
    let generator = load_generator(ws)?;
    let estimator = load_estimator(ws)?;
    let adapter = load_adapter(ws)?;
    let dir = out.unwrap_or_else(|| ws.eval_dir());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let ticks = (BENCH_SECONDS * TICK_HZ) as u64;
    let mut rows = Vec::new();
    for (i, o) in objects(object)?.iter().enumerate() {
        let seed = ws.seed.wrapping_mul(1000).wrapping_add(i as u64);
        let theta0 = initial_grasp_angle(o, Some(&generator), seed, ws.noise)?;
        let schedule: Vec<ScheduledDisturbance> = disturbance_schedule(o, ticks, seed)
            .into_iter()
            .map(|(at_tick, event)| ScheduledDisturbance { at_tick, event })
            .collect();
        let cfg = LoopConfig {
            max_ticks: ticks,
            noise: ws.noise,
            initial_theta_deg: Some(theta0),
            ..Default::default()
        };
        let arm = |name: &str, ctl: Controller<'_>| -> Result<Value> {
            let r = run_closed_loop(SimState::reset(o.clone(), seed)?, &ctl, &schedule, &cfg)?;
            let trace = dir.join(format!("{}_{name}.tsv", o.name));
            fs::write(&trace, r.to_tsv()).with_context(|| format!("writing {}", trace.display()))?;
            Ok(json!({"dropped": r.dropped, "ticks_survived": r.ticks_survived}))
        };
        let none = arm(
            "none",
            Controller {
                generator: Some(&generator),
                estimator: Some(&estimator),
                policy: &ZeroPolicy,
            },
        )?;
        let trained = arm(
            "trained",
            Controller {
                generator: Some(&generator),
                estimator: Some(&estimator),
                policy: &adapter,
            },
        )?;
        rows.push(json!({
            "object": o.name,
            "initial_theta_deg": theta0,
            "disturbances": schedule.len(),
            "none": none,
            "trained": trained,
        }));
    }
    Ok(json!({"out": dir.display().to_string(), "objects": rows}))
}

pub fn bench(ws: &Workspace, arm: Arm, object: &str, out: Option<PathBuf>) -> Result<Value> {
    let generator = if ws.generator_path().exists() {
        Some(load_generator(ws)?)
    } else {
        None
    };
    let (estimator, adapter) = if arm == Arm::None {
        (ws.estimator_if_present()?, None)
    } else {
        (Some(load_estimator(ws)?), Some(load_adapter(ws)?))
    };
    let objs = objects(object)?;
    let rows: Vec<Value> = tactigrasp::par::map(ExecMode::Parallel, &objs, |o| -> Result<Value> {
        let initial_theta_deg = initial_grasp_angle(o, generator.as_ref(), ws.seed, ws.noise)?;
        let setup = BenchSetup {
            seed: ws.seed,
            noise: ws.noise,
            initial_theta_deg,
        };
        let base = Controller {
            generator: generator.as_ref(),
            estimator: estimator.as_ref(),
            policy: &ZeroPolicy,
        };
        let none = match arm {
            Arm::Trained => None,
            _ => bench_max_weight(o, &base, &setup)?,
        };
        let trained = match &adapter {
            Some(a) => bench_max_weight(o, &Controller { policy: a, ..base }, &setup)?,
            None => None,
        };
        let improvement = match (none, trained) {
            (Some(a), Some(b)) if a > 0 => Some((f64::from(b) - f64::from(a)) / f64::from(a)),
            _ => None,
        };
        Ok(json!({
            "object": o.name,
            "initial_theta_deg": initial_theta_deg,
            "none_g": none,
            "trained_g": trained,
            "improvement": improvement,
        }))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let mut summary = json!({
        "seed": ws.seed,
        "noise": ws.noise,
        "initial_grasp": if generator.is_some() { "generator" } else { "margin" },
        "objects": rows,
    });
    if arm == Arm::Both {
        let imps: Vec<f64> = rows.iter().filter_map(|r| r["improvement"].as_f64()).collect();
        let strictly = rows
            .iter()
            .all(|r| matches!((r["none_g"].as_u64(), r["trained_g"].as_u64()), (Some(a), Some(b)) if b > a));
        summary["mean_improvement"] = json!((imps.len() == rows.len()).then(|| imps.iter().sum::<f64>() / imps.len() as f64));
        summary["all_improved"] = json!(strictly);
    }
    let path = save_path(out, ws.bench_summary_path())?;
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    summary["summary"] = json!(path.display().to_string());
    Ok(summary)
}

pub fn validate(ws: &Workspace, paths: &[PathBuf]) -> Result<Value> {
    let roots = if paths.is_empty() { vec![ws.data_dir()] } else { paths.to_vec() };
    let mut files = Vec::new();
    for root in &roots {
        if !root.exists() {
            bail!("missing {}", root.display());
        }
        for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
            let entry = entry?;
            if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "tsv") {
                files.push(entry.into_path());
            }
        }
    }
    if files.is_empty() {
        bail!("no .tsv datasets under {}", roots.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "));
    }
    let mut frames = 0;
    for f in &files {
        let ep = validate_file(f).with_context(|| format!("{}", f.display()))?;
        frames += ep.frames.len();
    }
    Ok(json!({"files": files.len(), "frames": frames}))
}
