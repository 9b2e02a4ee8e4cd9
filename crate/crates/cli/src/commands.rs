use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use posefree_core::evaluation::{evaluate_trajectory, psnr_from_mse, TrajectoryMetrics};
use posefree_core::field::RadianceField;
use posefree_core::geometry::{CameraPose, Intrinsics};
use posefree_core::rendering::{render_image, SamplingConfig};
use posefree_core::scheduler::{
    coarse_to_fine_with, is_held_out, joint_baseline_with, read_log, write_log, Phase, PhaseRecord, SchedulerError,
    TrainConfig, TrainState, TrainingSet,
};
use posefree_core::synthdata::{
    import_ppm_dir, load_dataset, read_camera_file, read_poses, save_dataset, write_camera_file, write_poses,
    write_ppm, CameraFile, SceneDataset, SynthSpec, TrajectoryKind, TrajectoryParams,
};
use serde::Serialize;

use crate::args::{AblateArgs, EvalArgs, Kind, Mode, RenderArgs, ReportArgs, RunConfig, SynthArgs, TrainArgs};

pub enum CliError {
    /// Bad flags or arguments (exit 1).
    Usage(String),
    /// Anything that failed while running (exit 2).
    Runtime(String),
}

fn runtime(context: &str) -> impl FnOnce(&dyn Display) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

fn rt<E: Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| runtime(context)(&e)
}

fn usage<T>(message: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(message.into()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(rt("serialize"))?;
    fs::write(path, text + "\n").map_err(rt(&path.display().to_string()))
}

fn open_dataset(dir: &Path, gt_focal: Option<f64>) -> Result<SceneDataset, CliError> {
    let result = if dir.join("manifest.txt").exists() { load_dataset(dir) } else { import_ppm_dir(dir, gt_focal) };
    result.map_err(rt(&format!("loading dataset {}", dir.display())))
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let kind = match a.kind {
        Kind::Arc => TrajectoryKind::Arc,
        Kind::Forward => TrajectoryKind::Forward,
    };
    if a.size < 4 || a.count < 2 || a.oversample < 2 {
        return usage("need --size >= 4, --count >= 2 and --oversample >= 2");
    }
    let mut spec = SynthSpec::desk(kind, a.count);
    spec.params = TrajectoryParams {
        step: a.step.unwrap_or(spec.params.step),
        radius: a.radius,
        fov_deg: a.fov,
        width: a.size,
    };
    spec.height = a.size;
    spec.blobs = a.blobs;
    spec.seed = a.seed;
    spec.oversample = a.oversample;
    let dataset = spec.generate().map_err(|e| CliError::Usage(e.to_string()))?;
    save_dataset(&dataset, &a.out).map_err(rt("writing dataset"))?;
    if a.ppm {
        for (i, image) in dataset.images.iter().enumerate() {
            write_ppm(&a.out.join(format!("image_{i:04}.ppm")), image).map_err(rt("writing ppm"))?;
        }
    }
    write_json(&a.out.join("synth.json"), &spec)?;
    let gt = dataset.ground_truth.as_ref().expect("synthetic data has ground truth");
    println!(
        "wrote {} {}×{} {} images to {} (focal {:.4})",
        dataset.len(),
        dataset.width,
        dataset.height,
        kind,
        a.out.display(),
        gt.focal
    );
    Ok(())
}

fn print_record(r: &PhaseRecord) {
    let image = r.image.map(|i| format!(" image {i}")).unwrap_or_default();
    eprintln!(
        "[level {}] {:<8}{image}: loss {:.6} -> {:.6} ({} epochs, {:.1}s, {} registered)",
        r.level, r.phase, r.start_loss, r.end_loss, r.epochs, r.wall_seconds, r.registered
    );
}

/// Runs training and returns the state, or the scheduler error along with the
/// log written so far.
fn run_training(
    set: &TrainingSet,
    config: &TrainConfig,
    mode: Mode,
    verbose: bool,
) -> Result<TrainState, (SchedulerError, Vec<PhaseRecord>)> {
    let mut state = TrainState::new(config, set).map_err(|e| (e, Vec::new()))?;
    if verbose {
        state.set_observer(Box::new(print_record));
    }
    let result = match mode {
        Mode::Incremental => coarse_to_fine_with(&mut state, set, config),
        Mode::Joint => joint_baseline_with(&mut state, set, config),
    };
    match result {
        Ok(()) => Ok(state),
        Err(e) => Err((e, state.log)),
    }
}

fn metrics_table(rows: &[(String, Option<&TrajectoryMetrics>, Option<f64>)]) -> String {
    let mut out = format!("{:<28} {:>10} {:>10} {:>8}\n", "", "ΔR (deg)", "ΔT", "PSNR");
    for (label, m, p) in rows {
        let (r, t) = match m {
            Some(m) => (format!("{:.3}", m.delta_r), format!("{:.4}", m.delta_t)),
            None => ("diverged".to_string(), "diverged".to_string()),
        };
        let p = p.map_or("-".to_string(), |v| format!("{v:.2}"));
        out.push_str(&format!("{label:<28} {r:>10} {t:>10} {p:>8}\n"));
    }
    out
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    if a.flags.xi.len() > 1 || a.flags.n_glob.len() > 1 {
        return usage("train takes a single --xi and --n-glob (lists are for ablate)");
    }
    let config = a.flags.resolve();
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let dataset = open_dataset(&a.data, a.gt_focal)?;
    let set = TrainingSet::new(&dataset, config.schedule.pyramid_depth).map_err(|e| CliError::Usage(e.to_string()))?;
    fs::create_dir_all(&a.out).map_err(rt("creating output directory"))?;
    let run = RunConfig { mode: a.mode, dataset: a.data.clone(), out: a.out.clone(), train: config.clone() };
    write_json(&a.out.join("config.json"), &run)?;
    let state = match run_training(&set, &config, a.mode, !a.quiet) {
        Ok(s) => s,
        Err((e, log)) => {
            write_log(&a.out.join("log.jsonl"), &log).map_err(rt("writing log"))?;
            return Err(CliError::Runtime(format!("training failed: {e}")));
        }
    };
    write_log(&a.out.join("log.jsonl"), &state.log).map_err(rt("writing log"))?;
    state.store.field.save(&a.out.join("field.ckpt")).map_err(rt("writing checkpoint"))?;
    let focal = state.finest_focal(&set);
    write_poses(&a.out.join("poses.txt"), &state.store.poses).map_err(rt("writing poses"))?;
    write_camera_file(&a.out.join("camera.txt"), &CameraFile { focal }).map_err(rt("writing camera"))?;
    for s in &state.snapshots {
        write_poses(&a.out.join(format!("poses_level{}.txt", s.level)), &s.poses).map_err(rt("writing poses"))?;
        write_camera_file(&a.out.join(format!("camera_level{}.txt", s.level)), &CameraFile { focal: s.focal })
            .map_err(rt("writing camera"))?;
    }
    println!("trained {} images in {} epochs; focal {:.4}", dataset.len(), state.total_epochs, focal);
    if let Some(gt) = &dataset.ground_truth {
        let m = evaluate_trajectory(&state.store.poses, &gt.poses).map_err(rt("evaluation"))?;
        print!("{}", metrics_table(&[("final".into(), Some(&m), None)]));
        println!("focal {:.4} (ground truth {:.4})", focal, gt.focal);
    }
    println!("outputs in {}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    delta_r: f64,
    delta_t: f64,
    scale: f64,
    psnr: Option<f64>,
    per_image: Vec<(f64, f64)>,
}

/// Mean PSNR of re-rendered views over the held-out pixels of each image.
fn rendered_psnr(
    field: &RadianceField,
    poses: &[CameraPose],
    focal: f64,
    dataset: &SceneDataset,
    sampling: &SamplingConfig,
    holdout_stride: usize,
) -> f64 {
    let intrinsics = Intrinsics::new(focal, dataset.width, dataset.height);
    let mut total = 0.0;
    for (pose, target) in poses.iter().zip(&dataset.images) {
        let rendered = render_image(field, pose, &intrinsics, sampling, 0.5);
        let (mut se, mut n) = (0.0f64, 0usize);
        for p in (0..target.pixel_count()).filter(|&p| holdout_stride == 0 || is_held_out(p, holdout_stride)) {
            let (a, b) = (rendered.get_flat(p), target.get_flat(p));
            se += (0..3).map(|c| (f64::from(a[c]) - f64::from(b[c])).powi(2)).sum::<f64>();
            n += 3;
        }
        total += psnr_from_mse(se / n.max(1) as f64);
    }
    total / poses.len() as f64
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let poses_path = match (&a.poses, &a.run) {
        (Some(p), _) => p.clone(),
        (None, Some(run)) => run.join("poses.txt"),
        (None, None) => return usage("need --run or --poses"),
    };
    let checkpoint = a.checkpoint.clone().or_else(|| a.run.as_ref().map(|r| r.join("field.ckpt")));
    if a.psnr && checkpoint.as_ref().is_none_or(|c| !c.exists()) {
        return usage("--psnr needs a checkpoint (--checkpoint or a run directory with field.ckpt)");
    }
    let dataset = open_dataset(&a.data, a.gt_focal)?;
    let gt = dataset
        .ground_truth
        .as_ref()
        .ok_or_else(|| CliError::Runtime(format!("dataset {} has no ground-truth poses", a.data.display())))?;
    let poses = read_poses(&poses_path).map_err(rt("reading poses"))?;
    if poses.len() != gt.poses.len() {
        return Err(CliError::Runtime(format!("{} estimated poses for {} images", poses.len(), gt.poses.len())));
    }
    let metrics = evaluate_trajectory(&poses, &gt.poses).map_err(rt("evaluation"))?;
    let psnr = if a.psnr {
        let field = RadianceField::load(checkpoint.as_ref().expect("checked above")).map_err(rt("reading checkpoint"))?;
        let focal = match (a.focal, &a.run) {
            (Some(f), _) => f,
            (None, Some(run)) => read_camera_file(&run.join("camera.txt")).map_err(rt("reading camera"))?.focal,
            (None, None) => return usage("--psnr needs --focal or a run directory"),
        };
        let trained = a.run.as_ref().and_then(|r| fs::read_to_string(r.join("config.json")).ok()).and_then(|t| {
            serde_json::from_str::<RunConfig>(&t).ok().map(|c| c.train.sampling)
        });
        let defaults = trained.unwrap_or_default();
        let sampling = SamplingConfig {
            t_near: a.t_near.unwrap_or(defaults.t_near),
            t_far: a.t_far.unwrap_or(defaults.t_far),
            samples_per_ray: a.samples,
            stratified: false,
        };
        sampling.validate().map_err(CliError::Usage)?;
        Some(rendered_psnr(&field, &poses, focal, &dataset, &sampling, a.holdout_stride))
    } else {
        None
    };
    print!("{}", metrics_table(&[("estimate".into(), Some(&metrics), psnr)]));
    if let Some(path) = &a.json {
        let out = EvalOutput {
            delta_r: metrics.delta_r,
            delta_t: metrics.delta_t,
            scale: metrics.scale,
            psnr,
            per_image: metrics.per_image.iter().map(|e| (e.rotation_deg, e.translation)).collect(),
        };
        write_json(path, &out)?;
    }
    Ok(())
}

pub fn render(a: &RenderArgs) -> Result<(), CliError> {
    if !(a.focal > 0.0) || a.width == 0 || a.height == 0 {
        return usage("need --focal > 0 and a non-empty image size");
    }
    let sampling = SamplingConfig { t_near: a.t_near, t_far: a.t_far, samples_per_ray: a.samples, stratified: false };
    sampling.validate().map_err(CliError::Usage)?;
    let field = RadianceField::load(&a.checkpoint).map_err(rt("reading checkpoint"))?;
    let poses = read_poses(&a.poses).map_err(rt("reading poses"))?;
    fs::create_dir_all(&a.out).map_err(rt("creating output directory"))?;
    let intrinsics = Intrinsics::new(a.focal, a.width, a.height);
    for (i, pose) in poses.iter().enumerate() {
        let image = render_image(&field, pose, &intrinsics, &sampling, 0.5);
        write_ppm(&a.out.join(format!("view_{i:04}.ppm")), &image).map_err(rt("writing image"))?;
    }
    println!("rendered {} views to {}", poses.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    label: String,
    stage: &'static str,
    xi: usize,
    n_glob: usize,
    delta_r: Option<f64>,
    delta_t: Option<f64>,
    status: String,
}

pub fn ablate(a: &AblateArgs) -> Result<(), CliError> {
    let base = a.flags.resolve();
    let or = |v: &[usize], d: &[usize]| if v.is_empty() { d.to_vec() } else { v.to_vec() };
    let (xis, nglobs) = (or(&a.flags.xi, &[600, 900]), or(&a.flags.n_glob, &[5, 10]));
    let dataset = open_dataset(&a.data, None)?;
    let gt = dataset
        .ground_truth
        .clone()
        .ok_or_else(|| CliError::Runtime("ablation needs ground-truth poses".into()))?;
    fs::create_dir_all(&a.out).map_err(rt("creating output directory"))?;
    let mut rows = Vec::new();
    for &xi in &xis {
        for &n_glob in &nglobs {
            let mut config = base.clone();
            config.schedule.xi = xi;
            config.schedule.n_glob = n_glob;
            config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let set = TrainingSet::new(&dataset, config.schedule.pyramid_depth)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let label = |stage: &str| format!("{stage}, ξ={xi}, N_glob={n_glob}");
            if !a.quiet {
                eprintln!("== ξ={xi}, N_glob={n_glob}");
            }
            match run_training(&set, &config, Mode::Incremental, !a.quiet) {
                Ok(state) => {
                    let coarse = state.snapshots.first().expect("coarse snapshot");
                    let fine = state.snapshots.last().expect("fine snapshot");
                    for (stage, snap) in [("C", coarse), ("F", fine)] {
                        let m = evaluate_trajectory(&snap.poses, &gt.poses);
                        rows.push(AblationRow {
                            label: label(stage),
                            stage,
                            xi,
                            n_glob,
                            delta_r: m.as_ref().ok().map(|m| m.delta_r),
                            delta_t: m.as_ref().ok().map(|m| m.delta_t),
                            status: m.map_or_else(|e| format!("evaluation failed: {e}"), |_| "ok".into()),
                        });
                    }
                }
                Err((e, _)) => {
                    for stage in ["C", "F"] {
                        rows.push(AblationRow {
                            label: label(stage),
                            stage,
                            xi,
                            n_glob,
                            delta_r: None,
                            delta_t: None,
                            status: format!("diverged: {e}"),
                        });
                    }
                }
            }
        }
    }
    let mut text = String::new();
    for r in &rows {
        text.push_str(&serde_json::to_string(r).map_err(rt("serialize"))?);
        text.push('\n');
    }
    fs::write(a.out.join("ablation.jsonl"), text).map_err(rt("writing ablation rows"))?;
    println!("{:<28} {:>10} {:>10}", "", "ΔR (deg)", "ΔT");
    for r in &rows {
        match (r.delta_r, r.delta_t) {
            (Some(dr), Some(dt)) => println!("{:<28} {dr:>10.3} {dt:>10.4}", r.label),
            _ => println!("{:<28} {:>10} {:>10}", r.label, "diverged", "diverged"),
        }
    }
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    let path: PathBuf = a.run.join("log.jsonl");
    let log = read_log(&path).map_err(rt(&path.display().to_string()))?;
    if log.is_empty() {
        return Err(CliError::Runtime(format!("{} has no records", path.display())));
    }
    println!("{:<9} {:>5} {:>5} {:>7} {:>12} {:>12} {:>8}", "phase", "image", "level", "epochs", "start", "end", "secs");
    for r in &log {
        let image = r.image.map_or("-".to_string(), |i| i.to_string());
        println!(
            "{:<9} {image:>5} {:>5} {:>7} {:>12.6} {:>12.6} {:>8.1}",
            r.phase, r.level, r.epochs, r.start_loss, r.end_loss, r.wall_seconds
        );
    }
    println!();
    println!("{:<9} {:>6} {:>8} {:>8} {:>9}", "phase", "count", "epochs", "secs", "improved");
    for phase in [Phase::Init, Phase::Localize, Phase::Partial, Phase::Global, Phase::Joint] {
        let rs: Vec<&PhaseRecord> = log.iter().filter(|r| r.phase == phase).collect();
        if rs.is_empty() {
            continue;
        }
        let epochs: usize = rs.iter().map(|r| r.epochs).sum();
        let secs: f64 = rs.iter().map(|r| r.wall_seconds).sum();
        let improved = rs.iter().filter(|r| r.end_loss <= r.start_loss).count();
        println!("{:<9} {:>6} {:>8} {:>8.1} {:>5}/{:<3}", phase, rs.len(), epochs, secs, improved, rs.len());
    }
    let total: usize = log.iter().map(|r| r.epochs).sum();
    let secs: f64 = log.iter().map(|r| r.wall_seconds).sum();
    let last = log.last().expect("non-empty");
    println!("total {total} epochs in {secs:.1}s; {} images registered; final loss {:.6}", last.registered, last.end_loss);
    Ok(())
}
