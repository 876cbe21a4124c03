//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use gazeintent_core::benchmark::{evaluate_session, run_benchmark};
use gazeintent_core::classifier::derive_seed;
use gazeintent_core::distributions::sample_hypothetic;
use gazeintent_core::patch::PatchLibrary;
use gazeintent_core::plotdata::{compute_traces, kappa_csv, saturation_summary, shift_sweep, sweep_csv};
use gazeintent_core::replay::{classify_log, Method, PipelineConfig};
use gazeintent_core::sessionlog::{PredictionLog, SessionLog};
use gazeintent_core::simulator::{make_scene, simulate_session, SceneSpec, SimulationConfig};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;

use crate::args::{BenchmarkArgs, ClassifyArgs, CompareArgs, EvaluateArgs, ServeArgs, SimulateArgs};
use crate::error::{CliError, CliResult};

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Reads a JSON config; parse errors name the offending key.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))
}

pub fn load_simulation(path: Option<&Path>) -> CliResult<SimulationConfig> {
    let Some(path) = path else { return Ok(SimulationConfig::benchmark()) };
    let mut cfg: SimulationConfig = load_json(path)?;
    cfg.scene.resolve_paths(&parent_dir(path));
    cfg.validate().map_err(|e| CliError::from(e).with_context(path.display()))?;
    Ok(cfg)
}

/// A scene config is either a bare scene or a full simulation config.
pub fn load_scene(path: Option<&Path>) -> CliResult<SceneSpec> {
    let Some(path) = path else { return Ok(SimulationConfig::benchmark().scene) };
    let value: serde_json::Value = load_json(path)?;
    let mut scene: SceneSpec = if value.get("scene").is_some() {
        serde_json::from_value::<SimulationConfig>(value).map(|c| c.scene)
    } else {
        serde_json::from_value(value)
    }
    .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))?;
    scene.resolve_paths(&parent_dir(path));
    scene.validate().map_err(|e| CliError::from(e).with_context(path.display()))?;
    Ok(scene)
}

pub fn load_pipeline(path: Option<&Path>) -> CliResult<PipelineConfig> {
    let cfg: PipelineConfig = match path {
        Some(p) => load_json(p)?,
        None => PipelineConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_patches(log: &SessionLog, session: &Path, patches: Option<&Path>) -> CliResult<PatchLibrary> {
    let dir = patches.map_or_else(|| parent_dir(session), Path::to_path_buf);
    log.load_patches(&dir).map_err(|e| CliError::from(e).with_context(format!("loading patches from {}", dir.display())))
}

fn read_session(path: &Path) -> CliResult<SessionLog> {
    SessionLog::read(path).map_err(|e| CliError::from(e).with_context(path.display()))
}

/// `out.json` → `out.<suffix>`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    parent_dir(out).join(format!("{stem}.{suffix}"))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::new(1, e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let cfg = load_simulation(args.config.as_deref())?;
    let (dir, file) = if args.out.extension().is_some_and(|e| e == "jsonl") {
        (parent_dir(&args.out), args.out.clone())
    } else {
        (args.out.clone(), args.out.join("session.jsonl"))
    };
    fs::create_dir_all(&dir)?;
    let scene = make_scene(&cfg.scene, args.seed)?;
    let session = simulate_session(&scene, &cfg.script, &cfg.noise, args.seed)?;
    scene.write_patches(&dir)?;
    session.log.write(&file)?;
    println!(
        "wrote {} ({} gaze samples, {} selections) and {} patches",
        file.display(),
        session.truth.len(),
        session.log.selections().len(),
        scene.library.len()
    );
    Ok(())
}

pub fn classify(args: &ClassifyArgs) -> CliResult<()> {
    let log = read_session(&args.session)?;
    let pipeline = load_pipeline(args.config.as_deref())?;
    let library = match args.method {
        Method::Fixation => PatchLibrary::new(),
        _ => load_patches(&log, &args.session, args.patches.as_deref())?,
    };
    let out = classify_log(&log, Arc::new(library), args.method, &pipeline)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    out.predictions.write(&args.out)?;
    let n = out.per_sample.iter().filter(|p| p.is_some()).count();
    println!("{}: {} predictions, {} selections -> {}", args.method, n, out.predictions.selections().count(), args.out.display());
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let log = read_session(&args.session)?;
    let predictions = PredictionLog::read(&args.predictions).map_err(|e| CliError::from(e).with_context(args.predictions.display()))?;
    let report = evaluate_session(&log, &predictions, args.method)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_json(&args.out, &report)?;
    if let Some(events) = &report.events {
        fs::write(sibling(&args.out, "events.csv"), events.to_csv())?;
    }
    let has_truth = report.events.is_some();
    if !args.no_traces && has_truth {
        match load_patches(&log, &args.session, args.patches.as_deref()) {
            Ok(library) => {
                let pipeline = load_pipeline(args.config.as_deref())?;
                let library = Arc::new(library);
                for obj in &log.meta.objects {
                    let traces = compute_traces(&log, Arc::clone(&library), obj.id, &pipeline.classifier)?;
                    let path = sibling(&args.out, &format!("traces.{}.csv", obj.label));
                    fs::write(&path, traces.to_csv()?)?;
                    info!("wrote {}", path.display());
                }
            }
            Err(e) => warn!("skipping distance traces: {e}"),
        }
    }
    match report.kappa {
        Some(k) => println!("kappa {k:.4}"),
        None => println!("kappa n/a"),
    }
    if let Some(e) = &report.events {
        let o = &e.overall;
        println!(
            "events {}: correct {:.1}%, deletions algo {}, bbox {:.1}%, saccade {:.1}%",
            o.total,
            o.correct_pct(),
            o.deletion_algo_pct().map_or("n/a".into(), |p| format!("{p:.1}%")),
            o.deletion_bbox_pct(),
            o.deletion_saccade_pct()
        );
    }
    let i = &report.interaction;
    println!(
        "selections {}: correct {}, misclassified {}, missed {}, success rate {}",
        i.attempts,
        i.correct,
        i.deletion_misclassification,
        i.deletion_missed_detection,
        i.success_rate.map_or("n/a".into(), |r| format!("{:.1}%", 100.0 * r))
    );
    Ok(())
}

pub fn compare_metrics(args: &CompareArgs) -> CliResult<()> {
    if !(args.step > 0.0) || !(args.max_shift >= 0.0) {
        return Err(CliError::config("--step must be > 0 and --max-shift >= 0"));
    }
    let scene_spec = load_scene(args.scene.as_deref())?;
    let pipeline = load_pipeline(args.config.as_deref())?;
    let scene = make_scene(&scene_spec, args.seed)?;
    let bbox = &scene.template.objects[0];
    let ranked = &scene.ranked[&bbox.object_id];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, bbox.object_id as u64, 0));
    let base = sample_hypothetic(ranked, bbox, &pipeline.classifier.sampler, &mut rng)?;
    let steps = (args.max_shift / args.step).floor() as usize;
    let deltas: Vec<f64> = (0..=steps).map(|i| i as f64 * args.step).collect();
    let rows = shift_sweep(&base, &deltas, &pipeline.classifier.edges()?, pipeline.classifier.kl_eps)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&args.out, sweep_csv(&rows)?)?;
    if rows.len() >= 10 {
        let s = saturation_summary(&rows)?;
        println!("{}", serde_json::to_string_pretty(&s).expect("plain numbers"));
    }
    Ok(())
}

pub fn benchmark(args: &BenchmarkArgs) -> CliResult<()> {
    let sim = load_simulation(args.config.as_deref())?;
    let pipeline = load_pipeline(args.pipeline.as_deref())?;
    let seeds: Vec<u64> = (args.seed..args.seed + args.seeds).collect();
    let report = run_benchmark(&sim, &pipeline, &seeds, &Method::ALL)?;
    for (name, s) in &report.methods {
        let o = &s.events.overall;
        println!(
            "{name:9} kappa {} events {} correct {:.1}% algo {} bbox {:.1}% saccade {:.1}%",
            s.kappa_mean.map_or("n/a".into(), |k| format!("{k:.3}")),
            o.total,
            o.correct_pct(),
            o.deletion_algo_pct().map_or("n/a".into(), |p| format!("{p:.1}%")),
            o.deletion_bbox_pct(),
            o.deletion_saccade_pct()
        );
    }
    if let Some(out) = &args.out {
        if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        write_json(out, &report)?;
        fs::write(sibling(out, "kappa.csv"), kappa_csv(&report)?)?;
    }
    Ok(())
}

pub fn serve(args: &ServeArgs) -> CliResult<()> {
    let scene_spec = load_scene(args.scene.as_deref())?;
    let pipeline = load_pipeline(args.config.as_deref())?;
    let scene = make_scene(&scene_spec, args.seed)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        scene.write_patches(dir)?;
    }
    let state = crate::service::AppState::new(scene, pipeline)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        crate::service::serve(state, listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(())
}
