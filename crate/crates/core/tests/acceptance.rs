//! Acceptance suite: one line per criterion, non-zero exit if any hard
//! criterion fails. Run with `cargo test -p fmdt-core --test acceptance`.

mod common;

use std::time::{Duration, Instant};

use common::{rigid, rms};
use fmdt::ccl::{analyze, encode_runs, label, Connectivity};
use fmdt::detect::hysteresis_label;
use fmdt::ellipse::{ellipse_axes, EllipseStats};
use fmdt::eval::{compute_metrics, evaluate};
use fmdt::geometry::Point;
use fmdt::ingest::{GrayFrame, PipelineConfig};
use fmdt::matching::knn_match;
use fmdt::motion::{estimate_rigid, registration_errors, two_pass_motion};
use fmdt::output;
use fmdt::pipeline::{self, detect_frame, PipelineOptions};
use fmdt::synth::{generate, CameraMode, CameraMotionSpec, MeteorSpec, SceneFile, SceneSpec};
use fmdt::track::TrackState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    id: &'static str,
    pass: bool,
    soft: bool,
    detail: String,
}

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome {
        id,
        pass,
        soft: false,
        detail,
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t0 = Instant::now();
    let v = f();
    (v, t0.elapsed())
}

fn reference_f_scores() -> Outcome {
    let rows = [
        ((61, 41, 9), 0.71),
        ((11, 48, 3), 0.30),
        ((111, 130, 28), 0.58),
        ((34, 4, 0), 0.94),
        ((217, 223, 40), 0.62),
    ];
    let mut worst = 0.0f64;
    let mut got = Vec::new();
    for ((tp, fp, fn_), expected) in rows {
        let f = compute_metrics::<f64>(tp, fp, fn_, 0, 0, tp + fn_).f_score;
        worst = worst.max((f - expected).abs());
        got.push(format!("{f:.4}"));
    }
    outcome(
        "1",
        worst <= 0.005,
        format!(
            "F = [{}], max deviation {worst:.4} (tol 0.005)",
            got.join(", ")
        ),
    )
}

fn reference_rates() -> Outcome {
    let meteor = [((61, 70), 87.0), ((217, 257), 84.0)];
    let frames = [((776, 1222), 64.0), ((1932, 3078), 63.0)];
    let mut worst = 0.0f64;
    let mut got = Vec::new();
    for ((d, t), expected) in meteor {
        let r = compute_metrics::<f64>(d, 0, t - d, 0, 0, t).meteor_rate * 100.0;
        worst = worst.max((r - expected).abs());
        got.push(format!("{d}/{t}={r:.2}%"));
    }
    for ((d, t), expected) in frames {
        let r = compute_metrics::<f64>(0, 0, 0, d, t, 0).frame_rate * 100.0;
        worst = worst.max((r - expected).abs());
        got.push(format!("{d}/{t}={r:.2}%"));
    }
    outcome(
        "2",
        worst <= 1.0,
        format!("{}; max deviation {worst:.2} pt (tol 1)", got.join(" ")),
    )
}

fn ccl_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xcc1);
    let (bad, t) = timed(|| {
        let mut bad = 0;
        for _ in 0..1000 {
            let density = rng.random_range(0.05..0.9);
            let m = common::random_mask(&mut rng, 64, 64, density);
            for c in [Connectivity::Four, Connectivity::Eight] {
                let lab = label(&encode_runs(&m), c);
                let (oracle, n) = common::flood_fill_labels(&m, c);
                if lab.n_labels != n || lab.to_label_image(64, 64) != oracle {
                    bad += 1;
                }
            }
        }
        bad
    });
    let pass = bad == 0 && t < Duration::from_secs(10);
    outcome(
        "3a",
        pass,
        format!(
            "CCL vs flood fill: {} / 2000 agree, {:.2} s (limit 10 s)",
            2000 - bad,
            t.as_secs_f64()
        ),
    )
}

fn moment_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb0);
    let (bad, t) = timed(|| {
        let mut bad = 0;
        for i in 0..1000 {
            let density = rng.random_range(0.05..0.9);
            let (w, h) = (rng.random_range(1..128), rng.random_range(1..128));
            let m = common::random_mask(&mut rng, w, h, density);
            let c = if i % 2 == 0 {
                Connectivity::Four
            } else {
                Connectivity::Eight
            };
            let lab = label(&encode_runs(&m), c);
            let img = lab.to_label_image(w, h);
            if analyze(&lab) != common::pixel_moments(&img, w, lab.n_labels) {
                bad += 1;
            }
        }
        bad
    });
    let pass = bad == 0 && t < Duration::from_secs(10);
    outcome(
        "3b",
        pass,
        format!(
            "moments exact on {} / 1000 masks, {:.2} s (limit 10 s)",
            1000 - bad,
            t.as_secs_f64()
        ),
    )
}

fn hysteresis_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4b5);
    let (bad, t) = timed(|| {
        let mut bad = 0;
        for i in 0..500 {
            let (w, h) = (rng.random_range(8..96), rng.random_range(8..96));
            let f = if i % 2 == 0 {
                common::blobby_frame(&mut rng, w, h)
            } else {
                common::random_frame(&mut rng, w, h)
            };
            let lo = rng.random_range(0..250u8);
            let hi = rng.random_range(lo + 1..=254);
            let c = if rng.random() {
                Connectivity::Four
            } else {
                Connectivity::Eight
            };
            let hl = hysteresis_label(&f, lo, hi, c);
            let keep: Vec<u32> = (1..=hl.labeled.n_labels)
                .filter(|&l| hl.seeded[l as usize - 1])
                .collect();
            let got = common::seeded_pixel_sets(&hl.labeled.to_label_image(w, h), w, &keep);
            if got != common::region_grow(&f, lo, hi, c) {
                bad += 1;
            }
        }
        bad
    });
    let pass = bad == 0 && t < Duration::from_secs(30);
    outcome(
        "3c",
        pass,
        format!(
            "hysteresis vs region growing: {} / 500 equal, {:.2} s (limit 30 s)",
            500 - bad,
            t.as_secs_f64()
        ),
    )
}

fn rigid_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let ((exact_worst, noisy_worst), t) = timed(|| {
        let (mut exact_worst, mut noisy_worst) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let theta = rng.random_range(-10.0f64..=10.0).to_radians();
            let tr = Point::new(
                rng.random_range(-20.0..=20.0),
                rng.random_range(-20.0..=20.0),
            );
            let n = rng.random_range(10..60);
            let pts: Vec<_> = (0..n)
                .map(|_| Point::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)))
                .collect();
            let pairs: Vec<_> = pts.iter().map(|&p| (p, rigid(p, theta, tr))).collect();
            let m = estimate_rigid(&pairs);
            let mapped: Vec<_> = pairs.iter().map(|&(s, d)| (m.apply(s), d)).collect();
            exact_worst = exact_worst.max(rms(&mapped));

            let noisy: Vec<_> = pts[..]
                .iter()
                .cycle()
                .take(50)
                .map(|&p| {
                    let d = rigid(p, theta, tr);
                    (
                        p,
                        Point::new(d.x + noise.sample(&mut rng), d.y + noise.sample(&mut rng)),
                    )
                })
                .collect();
            let m = estimate_rigid(&noisy);
            let mapped: Vec<_> = noisy.iter().map(|&(s, d)| (m.apply(s), d)).collect();
            noisy_worst = noisy_worst.max(rms(&mapped));
        }
        (exact_worst, noisy_worst)
    });
    let pass = exact_worst <= 1e-6 && noisy_worst <= 0.2 && t < Duration::from_secs(5);
    outcome(
        "3d",
        pass,
        format!(
            "worst RMS noise-free {exact_worst:.2e} px (tol 1e-6), 0.1 px noise {noisy_worst:.3} px (tol 0.2), {:.2} s (limit 5 s)",
            t.as_secs_f64()
        ),
    )
}

/// Rendered two-frame star field with one or two meteors under a random
/// gimbal-like camera step.
fn two_pass_scene(seed: u64) -> (GrayFrame, GrayFrame) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_meteors = rng.random_range(1..=2);
    let meteors = (0..n_meteors)
        .map(|_| {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let v = rng.random_range(5.0..12.0);
            MeteorSpec {
                start_frame: 0,
                duration: 2,
                start: [rng.random_range(60.0..260.0), rng.random_range(50.0..190.0)],
                velocity: [v * a.cos(), v * a.sin()],
                peak: rng.random_range(120.0..180.0),
                hidden: vec![],
            }
        })
        .collect();
    let scene = SceneSpec {
        width: 320,
        height: 240,
        n_stars: 40,
        star_intensity: [90.0, 200.0],
        star_sigma: 1.0,
        meteors,
        background: 30.0,
        noise_sigma: 2.0,
        seed,
    };
    let cam = CameraMotionSpec {
        mode: CameraMode::Balloon,
        translation_amplitude: rng.random_range(0.0..4.0),
        translation_period: 13.0,
        rotation_amplitude_deg: rng.random_range(0.0..1.0),
        rotation_period: 17.0,
        yaw_drift: rng.random_range(-3.0..3.0),
    };
    let (mut frames, _) = generate(&scene, &cam, 2).unwrap();
    let b = frames.pop().unwrap();
    (frames.pop().unwrap(), b)
}

fn two_pass_contract() -> Outcome {
    let cfg = PipelineConfig::default();
    let ((ok, total, worst), t) = timed(|| {
        let (mut ok, mut total, mut worst) = (0, 0, f64::NEG_INFINITY);
        for seed in 0..100u64 {
            let (a, b) = two_pass_scene(seed);
            let (da, _) = detect_frame(&a, &cfg);
            let (db, _) = detect_frame(&b, &cfg);
            let pairs: Vec<_> = knn_match(&da, &db, cfg.knn_k, cfg.knn_ratio_max)
                .iter()
                .map(|x| (x.src(), x.dst()))
                .collect();
            let r = two_pass_motion(&pairs, cfg.sigma_factor);
            let stationary: Vec<_> = pairs
                .iter()
                .zip(&r.stationary_first)
                .filter(|(_, &s)| s)
                .map(|(p, _)| *p)
                .collect();
            let (_, m1, _) = registration_errors(&stationary, &r.first);
            let (_, m2, _) = registration_errors(&stationary, &r.motion);
            total += 1;
            if m2 <= m1 {
                ok += 1;
            }
            worst = worst.max(m2 - m1);
        }
        (ok, total, worst)
    });
    let pass = ok == total && t < Duration::from_secs(10);
    outcome(
        "3e",
        pass,
        format!(
            "pass-2 mean <= pass-1 mean on stationary subset: {ok} / {total} seeds (largest pass2-pass1 {worst:+.2e} px), {:.2} s (limit 10 s)",
            t.as_secs_f64()
        ),
    )
}

const BENCHES: [&str; 10] = [
    "bench01.cfg",
    "bench02.cfg",
    "bench03.cfg",
    "bench04.cfg",
    "bench05.cfg",
    "bench06.cfg",
    "bench07.cfg",
    "bench08.cfg",
    "bench09.cfg",
    "bench10.cfg",
];

struct BenchRun {
    name: &'static str,
    tp: usize,
    fp: usize,
    total: usize,
    tracks: String,
}

fn run_benches(threads: usize) -> Vec<BenchRun> {
    let cfg = PipelineConfig::default();
    let opts = PipelineOptions {
        threads,
        ..Default::default()
    };
    BENCHES
        .iter()
        .map(|&name| {
            let f = SceneFile::from_file(common::specs_dir().join(name)).unwrap();
            let (frames, truth) = generate(&f.scene, &f.camera, f.frames).unwrap();
            let out = pipeline::run(frames.into_iter().map(Ok), &cfg, &opts).unwrap();
            let report = evaluate(&output::eval_tracks_from(&out.tracks), &truth.meteors, 5.0);
            BenchRun {
                name,
                tp: report.tp,
                fp: report.fp,
                total: truth.meteors.entries.len(),
                tracks: output::tracks_tsv(&out.tracks),
            }
        })
        .collect()
}

fn end_to_end(runs: &[BenchRun], t: Duration) -> Outcome {
    let tp: usize = runs.iter().map(|r| r.tp).sum();
    let total: usize = runs.iter().map(|r| r.total).sum();
    let max_fp = runs.iter().map(|r| r.fp).max().unwrap_or(0);
    let recall = tp as f64 / total.max(1) as f64;
    let per: Vec<String> = runs
        .iter()
        .map(|r| format!("{}:{}/{}+{}fp", &r.name[5..7], r.tp, r.total, r.fp))
        .collect();
    let pass = total == 20 && recall >= 0.9 && max_fp <= 2 && t < Duration::from_secs(120);
    outcome(
        "3f",
        pass,
        format!(
            "recall {tp}/{total} = {:.0}% (min 90%), max FP/sequence {max_fp} (max 2), {:.1} s (limit 120 s) [{}]",
            recall * 100.0,
            t.as_secs_f64(),
            per.join(" ")
        ),
    )
}

fn occlusion() -> Outcome {
    let f = SceneFile::from_file(common::specs_dir().join("occlusion.cfg")).unwrap();
    let hidden = f.scene.meteors[0].hidden.clone();
    let cfg = PipelineConfig::default();
    let run = || {
        let (frames, truth) = generate(&f.scene, &f.camera, f.frames).unwrap();
        (
            pipeline::run(
                frames.into_iter().map(Ok),
                &cfg,
                &PipelineOptions::default(),
            )
            .unwrap(),
            truth,
        )
    };
    let (a, truth) = run();
    let (b, _) = run();
    let meteors: Vec<_> = a
        .tracks
        .iter()
        .filter(|t| t.state == TrackState::Meteor)
        .collect();
    let spans = meteors.first().is_some_and(|t| {
        let (first, last) = (t.first().frame, t.last().frame);
        hidden.iter().all(|h| (first..=last).contains(h))
    });
    let matched = evaluate(&output::eval_tracks_from(&a.tracks), &truth.meteors, 5.0).tp == 1;
    let deterministic = output::tracks_tsv(&a.tracks) == output::tracks_tsv(&b.tracks);
    let pass =
        meteors.len() == 1 && spans && matched && deterministic && hidden.len() <= cfg.extrap_max;
    outcome(
        "3g",
        pass,
        format!(
            "{} hidden frames (extrap_max {}): {} meteor track(s), spans gap {spans}, matches truth {matched}, deterministic {deterministic}",
            hidden.len(),
            cfg.extrap_max,
            meteors.len()
        ),
    )
}

fn ellipse_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xe1);
    let axes = |px: &[(usize, usize)]| -> EllipseStats<f64> {
        let w = px.iter().map(|p| p.0).max().unwrap() + 1;
        let h = px.iter().map(|p| p.1).max().unwrap() + 1;
        let mut labels = vec![0u32; w * h];
        for &(x, y) in px {
            labels[y * w + x] = 1;
        }
        ellipse_axes(&common::pixel_moments(&labels, w, 1)[0])
    };
    let ((rot, trans, rect), t) = timed(|| {
        let (mut rot, mut trans, mut rect) = (0, 0, 0);
        for _ in 0..200 {
            let n = rng.random_range(1..150);
            let mut px: Vec<(usize, usize)> = (0..n)
                .map(|_| (rng.random_range(0..32), rng.random_range(0..32)))
                .collect();
            px.sort_unstable();
            px.dedup();
            let base = axes(&px);
            let turned: Vec<_> = px.iter().map(|&(x, y)| (40 - y, x)).collect();
            let r = axes(&turned);
            if r.a.to_bits() == base.a.to_bits()
                && r.b.to_bits() == base.b.to_bits()
                && (r.rho == base.rho)
            {
                rot += 1;
            }
            let (dx, dy) = (rng.random_range(0..1000), rng.random_range(0..1000));
            let moved: Vec<_> = px.iter().map(|&(x, y)| (x + dx, y + dy)).collect();
            if axes(&moved) == base {
                trans += 1;
            }
            let (w, h) = (rng.random_range(8..64), rng.random_range(8..64));
            let rect_px: Vec<_> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).collect();
            let expected = w.max(h) as f64 / w.min(h) as f64;
            if (axes(&rect_px).rho - expected).abs() <= 0.05 * expected {
                rect += 1;
            }
        }
        (rot, trans, rect)
    });
    let pass = rot == 200 && trans == 200 && rect == 200 && t < Duration::from_secs(5);
    outcome(
        "3h",
        pass,
        format!(
            "quarter-turn {rot}/200, translation {trans}/200, rectangle ratio within 5% {rect}/200, {:.2} s (limit 5 s)",
            t.as_secs_f64()
        ),
    )
}

fn throughput() -> Outcome {
    let scene = SceneSpec {
        width: 1920,
        height: 1080,
        n_stars: 400,
        star_intensity: [90.0, 200.0],
        star_sigma: 1.0,
        meteors: vec![MeteorSpec {
            start_frame: 5,
            duration: 12,
            start: [600.0, 400.0],
            velocity: [9.0, 4.0],
            peak: 160.0,
            hidden: vec![],
        }],
        background: 30.0,
        noise_sigma: 2.0,
        seed: 4,
    };
    let cam = CameraMotionSpec {
        mode: CameraMode::Gimbal,
        translation_amplitude: 2.0,
        translation_period: 30.0,
        rotation_amplitude_deg: 0.2,
        rotation_period: 40.0,
        yaw_drift: 0.0,
    };
    let n = 30;
    let (frames, _) = generate(&scene, &cam, n).unwrap();
    let opts = PipelineOptions {
        threads: 1,
        ..Default::default()
    };
    let (out, t) = timed(|| {
        pipeline::run(
            frames.into_iter().map(Ok),
            &PipelineConfig::default(),
            &opts,
        )
        .unwrap()
    });
    let fps = out.frames as f64 / t.as_secs_f64();
    Outcome {
        id: "4",
        pass: fps >= 25.0,
        soft: true,
        detail: format!(
            "{n} frames 1920x1080 single-threaded: {fps:.1} FPS (target 25, reported only)"
        ),
    }
}

fn determinism(reference: &[BenchRun]) -> Outcome {
    let threads = 4;
    let again = run_benches(threads);
    let same = reference
        .iter()
        .zip(&again)
        .filter(|(a, b)| a.tracks == b.tracks)
        .count();
    outcome(
        "5",
        same == reference.len(),
        format!(
            "tracks identical with --threads 1 and {threads}: {same}/{} sequences",
            reference.len()
        ),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--list`; honour the listing
    // request and ignore the rest
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut results = vec![
        reference_f_scores(),
        reference_rates(),
        ccl_oracle(),
        moment_oracle(),
        hysteresis_oracle(),
        rigid_recovery(),
        two_pass_contract(),
    ];
    let (runs, t) = timed(|| run_benches(1));
    results.push(end_to_end(&runs, t));
    results.push(occlusion());
    results.push(ellipse_invariants());
    results.push(throughput());
    results.push(determinism(&runs));

    let mut failed = 0;
    for r in &results {
        let tag = match (r.pass, r.soft) {
            (true, _) => "PASS",
            (false, true) => "SOFT-FAIL",
            (false, false) => {
                failed += 1;
                "FAIL"
            }
        };
        println!("[{tag}] criterion {:<3} {}", r.id, r.detail);
    }
    println!("acceptance: {} criteria, {failed} failed", results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
