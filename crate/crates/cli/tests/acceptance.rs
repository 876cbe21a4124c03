//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use gazeintent_cli::service::{AppState, ClientMessage, LiveSession, ServerMessage};
use gazeintent_core::benchmark::{evaluate_session, run_benchmark, BenchmarkReport};
use gazeintent_core::classifier::derive_seed;
use gazeintent_core::distributions::{sample_hypothetic, Signature};
use gazeintent_core::evaluation::{cohens_kappa, ConfusionMatrix};
use gazeintent_core::fixation::{idt_detect, EventKind, IdtConfig};
use gazeintent_core::gesture::{detect_gesture, GestureConfig};
use gazeintent_core::metrics::{emd_1d, emd_transport};
use gazeintent_core::model::GazeSample;
use gazeintent_core::plotdata::{saturation_summary, shift_sweep};
use gazeintent_core::replay::{classify_log, Method, PipelineConfig};
use gazeintent_core::saliency::{center_surround, Plane};
use gazeintent_core::sessionlog::{BoxRecord, Meta, MetaObject, PredictionLog, PredictionRecord, Record, SessionLog};
use gazeintent_core::simulator::{make_scene, simulate_session, NoiseProfile, SimulationConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Box<dyn Fn() -> Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_signature(rng: &mut ChaCha8Rng) -> Signature {
    let bins = rng.random_range(1..=64usize);
    let mut idx: Vec<usize> = (0..64).collect();
    for i in 0..bins {
        let j = rng.random_range(i..64);
        idx.swap(i, j);
    }
    let mut chosen = idx[..bins].to_vec();
    chosen.sort_unstable();
    let raw: Vec<f64> = (0..bins).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Signature::new(chosen.iter().map(|&b| 8.0 * b as f64 + 4.0).collect(), raw.iter().map(|m| m / total).collect()).unwrap()
}

/// Area between the two CDFs, evaluated on the merged support.
fn cdf_area(a: &Signature, b: &Signature) -> f64 {
    let mut xs: Vec<f64> = a.positions().iter().chain(b.positions()).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let cdf = |s: &Signature, x: f64| -> f64 { s.positions().iter().zip(s.masses()).filter(|(p, _)| **p <= x).map(|(_, m)| m).sum() };
    xs.windows(2).map(|w| (cdf(a, w[0]) - cdf(b, w[0])).abs() * (w[1] - w[0])).sum()
}

fn emd_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut times = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let (a, b) = (random_signature(&mut rng), random_signature(&mut rng));
        let start = Instant::now();
        let (d, _) = emd_transport(&a, &b).unwrap();
        times.push(start.elapsed().as_secs_f64());
        worst = worst.max((d - emd_1d(&a, &b).unwrap()).abs()).max((d - cdf_area(&a, &b)).abs());
    }
    times.sort_by(f64::total_cmp);
    let median_ms = 1e3 * times[times.len() / 2];
    outcome(worst <= 1e-9 && median_ms < 1.0, format!("max |transport - closed form| = {worst:.2e}, median solve {median_ms:.3} ms"))
}

fn emd_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = |a: &Signature, b: &Signature| emd_transport(a, b).unwrap().0;
    let mut violations = 0;
    for _ in 0..200 {
        let (a, b, c) = (random_signature(&mut rng), random_signature(&mut rng), random_signature(&mut rng));
        let (ab, ba, bc, ac) = (d(&a, &b), d(&b, &a), d(&b, &c), d(&a, &c));
        let ok = ab >= -1e-9 && d(&a, &a).abs() <= 1e-9 && (ab - ba).abs() <= 1e-9 && ac <= ab + bc + 1e-9;
        violations += usize::from(!ok);
    }
    outcome(violations == 0, format!("{violations} violations on 200 triples"))
}

fn saturation() -> Outcome {
    let start = Instant::now();
    let pipeline = PipelineConfig::default();
    let scene = make_scene(&SimulationConfig::benchmark().scene, 0).unwrap();
    let bbox = &scene.template.objects[0];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0, bbox.object_id as u64, 0));
    let base = sample_hypothetic(&scene.ranked[&bbox.object_id], bbox, &pipeline.classifier.sampler, &mut rng).unwrap();
    let deltas: Vec<f64> = (0..=100).map(|i| 2.0 * i as f64).collect();
    let rows = shift_sweep(&base, &deltas, &pipeline.classifier.edges().unwrap(), pipeline.classifier.kl_eps).unwrap();
    let s = saturation_summary(&rows).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        s.emd_r2 >= 0.99 && s.kl_ratio() < 0.1 && s.bhatt_ratio() < 0.1 && secs < 10.0,
        format!("EMD R2 {:.4}, KL slope ratio {:.3}, Bhattacharyya slope ratio {:.3}, {secs:.2} s", s.emd_r2, s.kl_ratio(), s.bhatt_ratio()),
    )
}

fn benchmark_trend(report: &BenchmarkReport) -> Outcome {
    let emd = &report.methods["emd"].events.overall;
    let fix = &report.methods["fixation"].events.overall;
    let gap = emd.correct_pct() - fix.correct_pct();
    outcome(
        gap >= 10.0 && emd.deletion_saccade_pct() < 1.0 && fix.deletion_bbox_pct() > emd.deletion_bbox_pct(),
        format!(
            "{} events/method; correct EMD {:.1}% vs fixation {:.1}% (gap {gap:.1} pp); EMD saccade deletions {:.1}%; bbox deletions fixation {:.1}% vs EMD {:.1}%",
            emd.total,
            emd.correct_pct(),
            fix.correct_pct(),
            emd.deletion_saccade_pct(),
            fix.deletion_bbox_pct(),
            emd.deletion_bbox_pct()
        ),
    )
}

fn clean_sanity(seeds: &[u64]) -> Outcome {
    let sim = SimulationConfig { noise: NoiseProfile::clean(), ..SimulationConfig::benchmark() };
    let report = run_benchmark(&sim, &PipelineConfig::default(), seeds, &[Method::Emd, Method::Fixation]).unwrap();
    let min = |m: &str| report.methods[m].kappa_per_seed.iter().map(|k| k.unwrap_or(f64::NEG_INFINITY)).fold(f64::INFINITY, f64::min);
    let (e, f) = (min("emd"), min("fixation"));
    outcome(e >= 0.95 && f >= 0.95, format!("min kappa over {} clean sessions: EMD {e:.3}, fixation {f:.3}", seeds.len()))
}

fn kappa_oracles() -> Outcome {
    let l = |s: &str| Some(s.to_string());
    let labels = vec![l("a"), l("b")];
    let truth: Vec<_> = ["a", "b", "a", "b", "b"].iter().map(|s| l(s)).collect();
    let perfect = cohens_kappa(&truth, &truth).unwrap();
    let chance = ConfusionMatrix::from_counts(labels.clone(), vec![vec![25, 25], vec![25, 25]]).unwrap().kappa().unwrap();
    let two_by_two = ConfusionMatrix::from_counts(labels, vec![vec![45, 5], vec![10, 40]]).unwrap().kappa().unwrap();
    outcome(
        perfect == 1.0 && chance == 0.0 && (two_by_two - 0.7).abs() <= 1e-12,
        format!("perfect {perfect}, chance {chance}, [[45,5],[10,40]] {two_by_two:.15}"),
    )
}

fn naive_center_surround(p: &Plane, scales: &[usize]) -> Vec<f64> {
    let (w, h) = (p.width as i64, p.height as i64);
    let mut out = Vec::with_capacity(p.data.len());
    for y in 0..h {
        for x in 0..w {
            let c = p.at(x as usize, y as usize);
            let mut acc = 0.0;
            for &s in scales {
                let s = s as i64;
                let (mut sum, mut n) = (0.0, 0.0);
                for yy in (y - s).max(0)..=(y + s).min(h - 1) {
                    for xx in (x - s).max(0)..=(x + s).min(w - 1) {
                        sum += p.at(xx as usize, yy as usize);
                        n += 1.0;
                    }
                }
                acc += (c - sum / n).abs();
            }
            out.push(acc);
        }
    }
    out
}

fn saliency_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let scales = [8, 16, 32];
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let plane = Plane::new(32, 32, (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let fast = center_surround(&plane, &scales).unwrap();
        for (a, b) in fast.data.iter().zip(naive_center_surround(&plane, &scales)) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-9, format!("max deviation {worst:.2e} over 50 channels"))
}

/// Stationary periods at distant points joined by short ballistic jumps;
/// returns the stream and the scripted `[start, end)` sample ranges.
fn scripted_stream(rng: &mut ChaCha8Rng) -> (Vec<GazeSample>, Vec<(usize, usize)>) {
    let hz = 120.0;
    let mut samples = Vec::new();
    let mut truth = Vec::new();
    let mut pos = (rng.random_range(100.0..1100.0), rng.random_range(100.0..600.0));
    for _ in 0..rng.random_range(4..9) {
        let len = rng.random_range(24..72usize);
        let start = samples.len();
        for _ in 0..len {
            let (x, y) = (pos.0 + rng.random_range(-2.0..2.0), pos.1 + rng.random_range(-2.0..2.0));
            samples.push(GazeSample::new(samples.len() as f64 / hz, x, y, 1.0));
        }
        truth.push((start, samples.len()));
        let next = loop {
            let p = (rng.random_range(100.0..1100.0), rng.random_range(100.0..600.0));
            if (p.0 - pos.0).abs() + (p.1 - pos.1).abs() > 300.0 {
                break p;
            }
        };
        let steps = rng.random_range(3..6usize);
        for s in 1..=steps {
            let f = s as f64 / (steps + 1) as f64;
            samples.push(GazeSample::new(samples.len() as f64 / hz, pos.0 + f * (next.0 - pos.0), pos.1 + f * (next.1 - pos.1), 1.0));
        }
        pos = next;
    }
    (samples, truth)
}

fn idt_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut scripted, mut recovered) = (0, 0);
    for _ in 0..50 {
        let (stream, truth) = scripted_stream(&mut rng);
        let fixations: Vec<_> = idt_detect(&stream, &IdtConfig::default()).into_iter().filter(|e| e.kind == EventKind::Fixation).collect();
        scripted += truth.len();
        recovered += truth
            .iter()
            .filter(|(s, e)| fixations.iter().any(|f| f.start.abs_diff(*s) <= 1 && f.end.abs_diff(*e) <= 1))
            .count();
    }
    outcome(recovered == scripted, format!("{recovered}/{scripted} scripted fixations within +/-1 sample"))
}

fn gesture_band() -> Outcome {
    let cfg = GestureConfig::default();
    let mut wrong = Vec::new();
    for hz in [120.0f64, 1000.0] {
        for d in [0.3f64, 0.49, 0.5, 0.6, 1.9, 2.0, 2.5] {
            let open = hz as usize;
            let closed = (d * hz).round() as usize;
            let stream: Vec<(f64, f64)> = (0..2 * open + closed)
                .map(|i| (i as f64 / hz, if (open..open + closed).contains(&i) { 0.0 } else { 1.0 }))
                .collect();
            let detected = detect_gesture(&stream, &cfg).len() == 1;
            if detected != (0.5..=2.0).contains(&d) {
                wrong.push(format!("{d} s @ {hz} Hz"));
            }
        }
    }
    outcome(wrong.is_empty(), if wrong.is_empty() { "14/14 durations classified".into() } else { format!("wrong: {}", wrong.join(", ")) })
}

fn interaction_fixture() -> Outcome {
    let meta = Meta { frame_width: 640, frame_height: 480, objects: vec![
            MetaObject { id: 1, label: "bottle".into(), patch: "obj1.pgm".into() },
            MetaObject { id: 2, label: "cup".into(), patch: "obj2.pgm".into() },
        ],
    };
    let mut log = SessionLog::new(meta);
    log.push(Record::Frame { t: 0.0, boxes: vec![BoxRecord { id: 1, cx: 100.0, cy: 100.0, w: 50.0, h: 50.0 }] });
    let mut preds = PredictionLog { records: Vec::new() };
    for i in 0..119 {
        let t = i as f64;
        log.push(Record::Gaze { t, x: 100.0, y: 100.0, conf: 1.0 });
        log.push(Record::Selection { t, intended: Some("bottle".into()) });
        match i {
            0..83 => preds.records.push(PredictionRecord::selection(t, Some("bottle".into()))),
            83..90 => preds.records.push(PredictionRecord::selection(t, Some("cup".into()))),
            _ => {}
        }
    }
    let r = evaluate_session(&log, &preds, None).unwrap().interaction;
    let pct = 100.0 * r.success_rate.unwrap_or(0.0);
    outcome(
        (r.correct, r.deletion_misclassification, r.deletion_missed_detection) == (83, 7, 29) && (pct - 92.2).abs() <= 0.05,
        format!("{}/{}/{} -> success rate {pct:.2}%", r.correct, r.deletion_misclassification, r.deletion_missed_detection),
    )
}

fn determinism() -> Outcome {
    let sim = SimulationConfig::benchmark();
    let scene = make_scene(&sim.scene, 11).unwrap();
    let session = simulate_session(&scene, &sim.script, &sim.noise, 11).unwrap();
    let text = session.log.to_jsonl();
    let round_trip = SessionLog::from_str(&text).unwrap().to_jsonl() == text;

    let state = AppState::new(make_scene(&sim.scene, 11).unwrap(), PipelineConfig::default()).unwrap();
    let mut live_session = LiveSession::new(&state).unwrap();
    let mut live = Vec::new();
    for g in session.log.gaze() {
        for m in live_session.handle(ClientMessage::Gaze { t: g.t, x: g.x, y: g.y, conf: g.confidence }) {
            match m {
                ServerMessage::Prediction { t, label, scores } => live.push(PredictionRecord::Prediction { t, label, scores }),
                ServerMessage::Selection { t, predicted, .. } => live.push(PredictionRecord::selection(t, predicted)),
                _ => {}
            }
        }
    }
    let exported = live_session.export();
    let replay_log = SessionLog::from_str(&exported).unwrap();
    let export_round_trip = replay_log.to_jsonl() == exported;
    let replay = classify_log(&replay_log, Arc::clone(&state.library), Method::Emd, &state.pipeline).unwrap();
    let same = replay.predictions.records == live;
    let batch = classify_log(&session.log, Arc::new(scene.library.clone()), Method::Emd, &PipelineConfig::default()).unwrap();
    let rerun = classify_log(&session.log, Arc::new(scene.library.clone()), Method::Emd, &PipelineConfig::default()).unwrap();
    let batch_stable = batch.predictions.to_jsonl() == rerun.predictions.to_jsonl();
    outcome(
        round_trip && export_round_trip && same && batch_stable && !live.is_empty(),
        format!(
            "{} live records, replay identical: {same}; log round-trip byte-identical: {round_trip}/{export_round_trip}; batch re-run identical: {batch_stable}",
            live.len()
        ),
    )
}

fn main() {
    let seeds: Vec<u64> = (0..20).collect();
    let benchmark = run_benchmark(&SimulationConfig::benchmark(), &PipelineConfig::default(), &seeds, &[Method::Emd, Method::Fixation]).unwrap();
    let checks: Vec<(&str, Check)> = vec![
        ("EMD oracle equivalence", Box::new(emd_oracle)),
        ("EMD metric axioms", Box::new(emd_axioms)),
        ("Shift sweep: EMD linear, KL/Bhattacharyya saturate", Box::new(saturation)),
        ("Benchmark trend, 20 seeds", Box::new(move || benchmark_trend(&benchmark))),
        ("Clean-data kappa, both methods", Box::new(move || clean_sanity(&seeds))),
        ("Cohen's kappa oracles", Box::new(kappa_oracles)),
        ("Center-surround vs naive box means", Box::new(saliency_oracle)),
        ("I-DT recovers scripted fixations", Box::new(idt_recovery)),
        ("Gesture duration band", Box::new(gesture_band)),
        ("Interaction fixture 83/7/29", Box::new(interaction_fixture)),
        ("Batch vs stream, log round-trip", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("[{}] {:>2}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {}/{} passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
