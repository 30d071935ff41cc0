//! Command-line entry point: dataset generation, training, evaluation, cost
//! analysis, and voxel-list export. Exit codes: 0 success, 2 configuration
//! error, 3 runtime error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use voxcast::complexity::{compare_variants, model_cost};
use voxcast::config::{Precision, RunConfig, RunManifest};
use voxcast::dataset::{load_manifest, load_split, prepare_samples, save_dataset};
use voxcast::error::{Error, Result};
use voxcast::export::{write_flow_list, write_voxel_list};
use voxcast::layers::Variant;
use voxcast::metrics::{
    evaluate, CopyLastBaseline, Forecasts, IoUReport, NetworkForecaster, OracleForecaster,
};
use voxcast::model::{Ablation, Model, PipelineGeom};
use voxcast::optim::AdamW;
use voxcast::scene::SceneSample;
use voxcast::tensor::params::ParamStore;
use voxcast::tensor::Element;
use voxcast::trainer::{load_checkpoint, run_training, save_checkpoint, LogRecord};

#[derive(Parser)]
#[command(name = "voxcast", about = "4D voxel occupancy forecasting on synthetic worlds")]
struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides both the world seed and the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic dataset and its manifest.
    Gen,
    /// Train the model; optionally resume from a checkpoint.
    Train {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// observer | forecaster | refiner | all
        #[arg(long)]
        ablate: Option<String>,
        /// e4a | bev | tpv | dense
        #[arg(long)]
        variant: Option<String>,
    },
    /// Evaluate a checkpoint (or a baseline) on the eval split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        ablate: Option<String>,
        #[arg(long)]
        variant: Option<String>,
        /// network | copy-last | oracle
        #[arg(long, default_value = "network")]
        model: String,
    },
    /// Emit parameter/FLOP reports for all observer variants.
    Analyze,
    /// Write predicted and ground-truth voxel lists for one sample.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        sample_id: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn load_cfg(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::config("--config is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.world.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn apply_overrides(
    cfg: &mut RunConfig,
    ablate: &Option<String>,
    variant: &Option<String>,
) -> Result<Ablation> {
    if let Some(v) = variant {
        cfg.model.observer.variant = Variant::parse(v)?;
        cfg.validate()?;
    }
    match ablate {
        Some(a) => Ablation::parse(a),
        None => Ok(Ablation::None),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Gen => {
            let cfg = load_cfg(&cli)?;
            let manifest = save_dataset(
                &cfg.data.dir,
                &cfg.world,
                cfg.data.n_train,
                cfg.data.n_eval,
                &cfg.hash(),
            )?;
            println!(
                "wrote {} samples ({} train / {} eval) to {}",
                manifest.samples.len(),
                manifest.n_train,
                manifest.n_eval,
                cfg.data.dir.display()
            );
            Ok(())
        }
        Cmd::Train {
            checkpoint,
            ablate,
            variant,
        } => {
            let mut cfg = load_cfg(&cli)?;
            let ablation = apply_overrides(&mut cfg, ablate, variant)?;
            match cfg.precision {
                Precision::F32 => cmd_train::<f32>(&cfg, ablation, checkpoint.as_deref()),
                Precision::F64 => cmd_train::<f64>(&cfg, ablation, checkpoint.as_deref()),
            }
        }
        Cmd::Eval {
            checkpoint,
            ablate,
            variant,
            model,
        } => {
            let mut cfg = load_cfg(&cli)?;
            let ablation = apply_overrides(&mut cfg, ablate, variant)?;
            match cfg.precision {
                Precision::F32 => cmd_eval::<f32>(&cfg, ablation, checkpoint.as_deref(), model),
                Precision::F64 => cmd_eval::<f64>(&cfg, ablation, checkpoint.as_deref(), model),
            }
        }
        Cmd::Analyze => {
            let cfg = load_cfg(&cli)?;
            cmd_analyze(&cfg)
        }
        Cmd::Export {
            checkpoint,
            sample_id,
        } => {
            let cfg = load_cfg(&cli)?;
            match cfg.precision {
                Precision::F32 => cmd_export::<f32>(&cfg, checkpoint, *sample_id),
                Precision::F64 => cmd_export::<f64>(&cfg, checkpoint, *sample_id),
            }
        }
    }
}

fn build_model<T: Element>(
    cfg: &RunConfig,
    ablation: Ablation,
) -> Result<(ParamStore<T>, Model)> {
    let geom = PipelineGeom::from_world(&cfg.world);
    let mut store = ParamStore::<T>::new();
    let model = Model::build(
        &mut store,
        &cfg.model,
        &geom,
        cfg.task.kind,
        ablation,
        cfg.train.seed,
    )?;
    Ok((store, model))
}

fn cmd_train<T: Element>(
    cfg: &RunConfig,
    ablation: Ablation,
    resume: Option<&Path>,
) -> Result<()> {
    let manifest = load_manifest(&cfg.data.dir)?;
    let samples = load_split(&cfg.data.dir, &manifest, "train")?;
    let prepared = prepare_samples::<T>(&samples, &cfg.world, cfg.task.kind)?;
    let (mut store, model) = build_model::<T>(cfg, ablation)?;
    let mut opt = AdamW::<T>::new(cfg.train.optimizer.clone(), &store);
    let start_step = match resume {
        Some(path) => load_checkpoint(path, &mut store, Some(&mut opt))?,
        None => 0,
    };

    let out = &cfg.output.dir;
    ensure_dir(out)?;
    let log_path = out.join("train_log.jsonl");
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(log_path.display().to_string(), e))?;
    let mut manifest_out = RunManifest::new(&cfg.hash(), cfg.train.seed);
    let mut checkpoints: Vec<PathBuf> = Vec::new();

    run_training(
        &model,
        &mut store,
        &mut opt,
        &prepared,
        &cfg.train,
        start_step,
        |rec: &LogRecord| {
            let line = serde_json::to_string(rec)
                .map_err(|e| Error::Format(format!("log encode: {e}")))?;
            writeln!(log, "{line}").map_err(|e| Error::io(log_path.display().to_string(), e))?;
            if rec.step % 100 == 0 || rec.step == 1 {
                println!(
                    "step {:>6}  total {:.5}  occ {:.5}  flow {:.5}",
                    rec.step, rec.total, rec.occupancy, rec.flow
                );
            }
            Ok(())
        },
        |step, store, opt| {
            let path = out.join(format!("checkpoint_{step:06}.vxc"));
            save_checkpoint(&path, store, opt, step)?;
            checkpoints.push(path);
            Ok(())
        },
    )?;

    let final_path = out.join("checkpoint_final.vxc");
    save_checkpoint(&final_path, &store, &opt, cfg.train.steps)?;
    for p in checkpoints.iter().chain(std::iter::once(&final_path)) {
        manifest_out.add_file(out, p)?;
    }
    manifest_out.add_file(out, &log_path)?;
    manifest_out.finish(&out.join("run_manifest.json"))?;
    println!("final checkpoint: {}", final_path.display());
    Ok(())
}

fn write_report(out_dir: &Path, report: &IoUReport) -> Result<()> {
    ensure_dir(out_dir)?;
    let text = report.text_table();
    print!("{text}");
    std::fs::write(out_dir.join("report.txt"), &text)
        .map_err(|e| Error::io(out_dir.join("report.txt").display().to_string(), e))?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Format(format!("report encode: {e}")))?;
    std::fs::write(out_dir.join("report.json"), json)
        .map_err(|e| Error::io(out_dir.join("report.json").display().to_string(), e))?;
    Ok(())
}

fn cmd_eval<T: Element>(
    cfg: &RunConfig,
    ablation: Ablation,
    checkpoint: Option<&Path>,
    source: &str,
) -> Result<()> {
    let manifest = load_manifest(&cfg.data.dir)?;
    let samples = load_split(&cfg.data.dir, &manifest, "eval")?;
    let task = cfg.task.kind;
    let report = match source {
        "copy-last" => evaluate(&CopyLastBaseline { task }, &samples, task)?,
        "oracle" => evaluate(&OracleForecaster { task }, &samples, task)?,
        "network" => {
            let (mut store, model) = build_model::<T>(cfg, ablation)?;
            let path = checkpoint
                .ok_or_else(|| Error::config("--checkpoint is required for network eval"))?;
            load_checkpoint(path, &mut store, None)?;
            let fc = NetworkForecaster {
                model: &model,
                store: &store,
                world: &cfg.world,
            };
            evaluate(&fc, &samples, task)?
        }
        other => return Err(Error::config(format!("unknown eval model `{other}`"))),
    };
    write_report(&cfg.output.dir, &report)
}

fn cmd_analyze(cfg: &RunConfig) -> Result<()> {
    let geom = PipelineGeom::from_world(&cfg.world);
    let cmp = compare_variants(&cfg.model, &geom, cfg.task.kind)?;
    let mut text = String::new();
    text.push_str("representation styles (aggregator only)\n");
    text.push_str(&format!(
        "{:<8} {:>12} {:>16} {:>14}\n",
        "style", "params", "flops", "peak elems"
    ));
    for (name, r) in &cmp.variants {
        text.push_str(&format!(
            "{:<8} {:>12} {:>16} {:>14}\n",
            name, r.total_params, r.total_flops, r.peak_elems
        ));
    }
    text.push_str("\nfull pipeline (configured variant)\n");
    text.push_str(&cmp.full_pipeline.text_table());

    let (store, model) = build_model::<f32>(cfg, Ablation::None)?;
    let report = model_cost(&model, &store)?;
    text.push_str("\nconfigured model blocks\n");
    text.push_str(&report.text_table());

    print!("{text}");
    let out = &cfg.output.dir;
    ensure_dir(out)?;
    std::fs::write(out.join("cost_report.txt"), &text)
        .map_err(|e| Error::io(out.join("cost_report.txt").display().to_string(), e))?;
    let json = serde_json::to_string_pretty(&cmp)
        .map_err(|e| Error::Format(format!("cost encode: {e}")))?;
    std::fs::write(out.join("cost_report.json"), json)
        .map_err(|e| Error::io(out.join("cost_report.json").display().to_string(), e))?;
    Ok(())
}

fn find_sample(dir: &Path, id: u64) -> Result<SceneSample> {
    let manifest = load_manifest(dir)?;
    for split in ["train", "eval"] {
        let samples = load_split(dir, &manifest, split)?;
        if let Some(s) = samples.into_iter().find(|s| s.id == id) {
            return Ok(s);
        }
    }
    Err(Error::config(format!("sample {id} not found in dataset")))
}

fn cmd_export<T: Element>(cfg: &RunConfig, checkpoint: &Path, sample_id: u64) -> Result<()> {
    let sample = find_sample(&cfg.data.dir, sample_id)?;
    let (mut store, model) = build_model::<T>(cfg, Ablation::None)?;
    load_checkpoint(checkpoint, &mut store, None)?;
    let task = cfg.task.kind;
    let extents = cfg.world.grid.extents;

    let fc = NetworkForecaster {
        model: &model,
        store: &store,
        world: &cfg.world,
    };
    let grids = fc.forecast_sample(&sample)?;
    let mut pred_frames = vec![grids.current.clone()];
    pred_frames.extend(grids.future.iter().cloned());

    let mut gt_frames = vec![task.frame_labels(&sample.current)];
    for f in &sample.future {
        gt_frames.push(task.frame_labels(f));
    }

    let out = &cfg.output.dir;
    ensure_dir(out)?;
    let write = |name: String, text: String| -> Result<()> {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
    };
    write(
        format!("sample_{sample_id}_pred.txt"),
        write_voxel_list(&pred_frames, extents),
    )?;
    write(
        format!("sample_{sample_id}_gt.txt"),
        write_voxel_list(&gt_frames, extents),
    )?;

    let vox = extents.0 * extents.1 * extents.2;
    let masks: Vec<Vec<u8>> = sample
        .future
        .iter()
        .map(|f| f.gmo_fine.data.clone())
        .collect();
    let mut gt_flow = Vec::with_capacity(sample.future.len() * 3 * vox);
    for f in &sample.future {
        gt_flow.extend_from_slice(f.flow.data());
    }
    let gt_flow =
        voxcast::Tensor::<f32>::new(vec![sample.future.len(), 3, vox], gt_flow).expect("flow");
    write(
        format!("sample_{sample_id}_flow_gt.txt"),
        write_flow_list(&gt_flow, &masks, extents),
    )?;
    if let Some(pred_flow) = &grids.flow {
        write(
            format!("sample_{sample_id}_flow_pred.txt"),
            write_flow_list(pred_flow, &masks, extents),
        )?;
    }
    println!("exported sample {sample_id} to {}", out.display());
    Ok(())
}
