//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use startrack::classical::{detect_and_centroid_classical, Centroider, ClassicalParams, Detector};
use startrack::commands;
use startrack::config::RunConfig;
use startrack::dataset::{SceneGenerator, Split};
use startrack::eval::{detection_metrics, f1_score, match_centroids, centroid_rmse, MatchPair};
use startrack::grid::Grid;
use startrack::labels::{make_distance_map, SceneTruth, TruthStar};
use startrack::net::{check_gradient, ArchDescriptor, DistanceGate, NetworkParams, TrainConfig, TrainSample};
use startrack::pipeline::{detect_and_centroid_traced, solve_trilateration, PipelineParams};
use startrack::simulate::flux_from_magnitude;
use startrack::Error;

fn report(n: u32, name: &str, pass: bool, detail: impl AsRef<str>) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n} [{name}]: {status}: {}", detail.as_ref());
}

#[test]
fn criterion_1_photometric_constant() {
    let leading = flux_from_magnitude(0.0f64);
    let rel = (leading / 1.085356e11 - 1.0).abs();
    let pass = rel < 1e-3;
    report(1, "photometric constant", pass, format!("{leading:.6e}, relative error {rel:.2e}"));
    assert!(pass);
}

fn exact_window(u: f64, v: f64) -> Vec<(f64, f64, f64)> {
    let (cu, cv) = (u.round(), v.round());
    let mut pts = Vec::with_capacity(25);
    for dv in -2..=2 {
        for du in -2..=2 {
            let (pu, pv) = (cu + du as f64, cv + dv as f64);
            pts.push((pu, pv, (pu - u).hypot(pv - v)));
        }
    }
    pts
}

#[test]
fn criterion_2_trilateration_exactness() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (u, v) = (rng.random_range(3.0..125.0), rng.random_range(3.0..125.0));
        let sol = solve_trilateration(&exact_window(u, v)).unwrap();
        worst = worst.max((sol.u - u).hypot(sol.v - v));
    }
    let two = solve_trilateration(&[(0.0, 0.0, 1.0), (1.0, 0.0, 1.0)]);
    let line: Vec<(f64, f64, f64)> = (0..5).map(|i| (i as f64, 3.0, (i as f64 - 1.3).abs())).collect();
    let collinear = solve_trilateration(&line);
    let degenerate_ok = matches!(two, Err(Error::Degenerate(_))) && matches!(collinear, Err(Error::Degenerate(_)));
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = worst < 1e-6 && degenerate_ok && elapsed < 1.0;
    report(
        2,
        "trilateration exactness",
        pass,
        format!("max error {worst:.2e} px over 1000 centroids, degenerate inputs rejected: {degenerate_ok}, {elapsed:.3} s"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_distance_map_oracle() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut mismatches, mut lipschitz_violations) = (0usize, 0usize);
    for _ in 0..100 {
        let n = rng.random_range(1..=5);
        let stars: Vec<TruthStar> = (0..n)
            .map(|i| TruthStar {
                id: i,
                u: rng.random_range(-0.5..31.5),
                v: rng.random_range(-0.5..31.5),
                vmag: 4.0,
                sigma_psf: 0.75,
            })
            .collect();
        let truth = SceneTruth { stars };
        let map = make_distance_map::<f64>(&truth, 32, 32).grid;
        for v in 0..32 {
            for u in 0..32 {
                let mut best = f64::INFINITY;
                for s in &truth.stars {
                    let d = (u as f64 - s.u).hypot(v as f64 - s.v);
                    if d < best {
                        best = d;
                    }
                }
                if map.get(u, v) != best {
                    mismatches += 1;
                }
                if u + 1 < 32 && (map.get(u + 1, v) - map.get(u, v)).abs() > 1.0 + 1e-12 {
                    lipschitz_violations += 1;
                }
                if v + 1 < 32 && (map.get(u, v + 1) - map.get(u, v)).abs() > 1.0 + 1e-12 {
                    lipschitz_violations += 1;
                }
            }
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = mismatches == 0 && lipschitz_violations == 0 && elapsed < 10.0;
    report(
        3,
        "distance-map oracle",
        pass,
        format!("{mismatches} mismatches, {lipschitz_violations} Lipschitz violations, {elapsed:.2} s"),
    );
    assert!(pass);
}

#[test]
fn criterion_4_gradient_check() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let arch = ArchDescriptor::default();
    let mut params = NetworkParams::<f64>::init(&arch, 4).unwrap();
    for p in params.values.iter_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    let sample = TrainSample {
        input: Grid::from_fn(16, 16, |_, _| rng.random_range(0.0..1.0)),
        seg: Grid::from_fn(16, 16, |_, _| rng.random_range(0..2u8)),
        dist: Grid::from_fn(16, 16, |_, _| rng.random_range(0.0..1.0)),
    };
    let check = check_gradient(&params, &sample, 2.5, DistanceGate::Predicted, 200, 1e-3, 40).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = arch.depth() == 3 && check.checked == 200 && check.worst_relative_error < 1e-4 && elapsed < 120.0;
    report(
        4,
        "gradient check",
        pass,
        format!(
            "{} parameters, worst relative error {:.2e} ({} kink-straddling draws resampled), {elapsed:.1} s",
            check.checked, check.worst_relative_error, check.skipped
        ),
    );
    assert!(pass);
}

/// Desk-scale run of the full pipeline: 400 train and 100 eval frames of
/// 128x128 with moderate noise and stray light, 20 training epochs.
fn desk_config(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 2024;
    cfg.dataset.train_count = 400;
    cfg.dataset.eval_count = 100;
    cfg.noise.stray_prob = 0.3;
    cfg.net.train = TrainConfig::desk_scale();
    cfg.paths.dataset_dir = dir.join("data");
    cfg.paths.weights = dir.join("runs/weights.stwt");
    cfg.paths.train_log = dir.join("runs/train_log.jsonl");
    cfg.paths.eval_dir = dir.join("runs/eval");
    cfg
}

#[test]
fn criterion_5_desk_scale_end_to_end() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path());
    commands::gen_dataset(&cfg).unwrap();
    commands::train_network(&cfg, |_| {}).unwrap();
    let bench = commands::evaluate(&cfg).unwrap();
    let minutes = t0.elapsed().as_secs_f64() / 60.0;

    let get = |m: &str, s: &str| bench.find(m, s).unwrap_or_else(|| panic!("missing {m}/{s}"));
    let net = get("cnn_trilateration", "all");
    let net_stray = get("cnn_trilateration", "stray");
    let gg = get("liebe+gaussian_grid", "all");
    let cog = get("liebe+cog", "all");
    let rmse = |r: &startrack::eval::EvalReport| r.rmse_px.unwrap_or(f64::INFINITY);

    let f1_ok = net.f1 >= 90.0;
    let rmse_ok = rmse(net) <= 0.5;
    let order_ok = rmse(net) < rmse(gg) && rmse(gg) < rmse(cog);
    let mut best_classical_stray = 0.0f64;
    for d in Detector::ALL {
        for c in Centroider::ALL {
            let r = get(&format!("{}+{}", d.name(), c.name()), "stray");
            best_classical_stray = best_classical_stray.max(r.f1);
        }
    }
    let stray_ok = net_stray.images > 0 && net_stray.f1 > best_classical_stray;
    let time_ok = minutes <= 30.0;
    let pass = f1_ok && rmse_ok && order_ok && stray_ok && time_ok;
    report(
        5,
        "desk-scale end to end",
        pass,
        format!(
            "pipeline F1 {:.1} (>= 90: {f1_ok}), RMSE {:.3} px (<= 0.5: {rmse_ok}); RMSE order pipeline {:.3} < gaussian grid {:.3} < cog {:.3}: {order_ok}; stray subset ({} frames) pipeline F1 {:.1} vs best classical {:.1}: {stray_ok}; {minutes:.1} min",
            net.f1,
            rmse(net),
            rmse(net),
            rmse(gg),
            rmse(cog),
            net_stray.images,
            net_stray.f1,
            best_classical_stray
        ),
    );
    print!("{}", bench.to_csv());
    assert!(pass);
}

#[test]
fn criterion_6_noiseless_classical_sanity() {
    let t0 = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.seed = 6;
    cfg.dataset.add_noise = false;
    let generator = SceneGenerator::new(&cfg).unwrap();
    let params = ClassicalParams::default();
    let (mut bright, mut bright_found, mut detections, mut false_pos) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..50 {
        let scene = generator.scene(Split::Eval, i).unwrap();
        let cs = detect_and_centroid_classical(&scene.frame.pixels, Detector::Liebe, Centroider::Cog, &params);
        let est: Vec<(f64, f64)> = cs.iter().map(|c| (c.u, c.v)).collect();
        let m = match_centroids(&est, &scene.truth.centroids(), cfg.pipeline.r_match);
        detections += est.len();
        false_pos += m.fp();
        let matched: HashSet<usize> = m.pairs.iter().map(|p| p.truth).collect();
        for (t, s) in scene.truth.stars.iter().enumerate() {
            if s.vmag <= 5.0 {
                bright += 1;
                bright_found += usize::from(matched.contains(&t));
            }
        }
    }
    let recall = 100.0 * bright_found as f64 / bright.max(1) as f64;
    let precision = 100.0 * (detections - false_pos) as f64 / detections.max(1) as f64;
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = bright > 0 && recall >= 99.0 && false_pos == 0 && elapsed < 60.0;
    report(
        6,
        "noiseless classical sanity",
        pass,
        format!("Liebe recall {recall:.2}% on {bright} stars with vmag <= 5, precision {precision:.2}% over {detections} detections, {elapsed:.1} s"),
    );
    assert!(pass);
}

#[test]
fn criterion_7_metrics_arithmetic() {
    let table = f1_score(99.6, 97.5);
    let table_ok = (table - 98.6).abs() <= 0.1;
    let m = detection_metrics(9, 1, 1);
    let trivial_ok = (m.precision, m.recall, m.f1) == (90.0, 90.0, 90.0);
    let z = detection_metrics(0, 0, 5);
    let zero_ok = (z.precision, z.recall, z.f1) == (0.0, 0.0, 0.0) && z.undefined;
    let pair = |du: f64, dv: f64| MatchPair {
        truth: 0,
        estimate: 0,
        distance: du.hypot(dv),
        du,
        dv,
    };
    let rmse_ok = centroid_rmse(&[pair(0.0, 0.0)]) == Some(0.0)
        && centroid_rmse(&[pair(0.3, 0.4)]).is_some_and(|r| (r - 0.5).abs() < 1e-15)
        && centroid_rmse(&[]).is_none();
    let same = [(1.0, 2.0), (5.0, 5.0)];
    let ident = match_centroids(&same, &same, 1.5);
    let equi = match_centroids(&[(5.0, 5.0)], &[(4.0, 5.0), (6.0, 5.0)], 1.5);
    let match_ok = ident.tp() == 2
        && ident.pairs.iter().all(|p| p.distance == 0.0)
        && (equi.tp(), equi.fn_()) == (1, 1);
    let pass = table_ok && trivial_ok && zero_ok && rmse_ok && match_ok;
    report(
        7,
        "metrics arithmetic",
        pass,
        format!("F1(99.6, 97.5) = {table:.3}; trivial examples {trivial_ok}, 0/0 convention {zero_ok}, RMSE {rmse_ok}, matching {match_ok}"),
    );
    assert!(pass);
}

#[test]
fn criterion_8_termination_and_uniqueness() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = PipelineParams::default();
    let half = params.window_half as isize;
    let mut failures = Vec::new();
    for case in 0..1000 {
        let (w, h) = (rng.random_range(1..48), rng.random_range(1..48));
        let (seg, dist) = if case % 2 == 0 {
            let density = rng.random_range(0.0..1.0);
            let seg = Grid::from_fn(w, h, |_, _| u8::from(rng.random_bool(density)));
            let dist = Grid::from_fn(w, h, |_, _| rng.random_range(0.0..3.0f64));
            (seg, dist)
        } else {
            // Label-like maps: blobs with distance cones plus jitter.
            let n = rng.random_range(0..8);
            let cs: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(-1.0..w as f64), rng.random_range(-1.0..h as f64)))
                .collect();
            let dist = Grid::from_fn(w, h, |u, v| {
                let d = cs
                    .iter()
                    .map(|c| (u as f64 - c.0).hypot(v as f64 - c.1))
                    .fold(16.0, f64::min);
                (d + rng.random_range(-0.3..0.3)).max(0.0)
            });
            let seg = dist.map(|d| u8::from(d < 2.5));
            (seg, dist)
        };
        let d = detect_and_centroid_traced(&seg, &dist, &params).unwrap();
        let mut processed = HashSet::new();
        let mut windows: Vec<(isize, isize)> = Vec::new();
        for &(u, v) in &d.visited_candidates {
            let (u, v) = (u as isize, v as isize);
            let inside_earlier = windows.iter().any(|&(cu, cv)| (u - cu).abs() <= half && (v - cv).abs() <= half);
            if !processed.insert((u, v)) || inside_earlier {
                failures.push(format!("case {case}: pixel ({u}, {v}) processed twice"));
            }
            windows.push((u, v));
        }
        if d.visited_candidates.len() > w * h {
            failures.push(format!("case {case}: more candidates than pixels"));
        }
        for (i, a) in d.centroids.iter().enumerate() {
            for b in &d.centroids[i + 1..] {
                if (a.u - b.u).hypot(a.v - b.v) < 1.0 {
                    failures.push(format!("case {case}: centroids closer than 1 px"));
                }
            }
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = failures.is_empty() && elapsed < 30.0;
    report(
        8,
        "termination and uniqueness",
        pass,
        format!("1000 map pairs, {} violations, {elapsed:.2} s", failures.len()),
    );
    assert!(pass, "{failures:?}");
}

fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn cli(args: &[&str], cwd: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_startrack"))
        .args(args)
        .current_dir(cwd)
        .env_remove("STARTRACK_SEED")
        .status()
        .unwrap();
    assert!(status.success(), "startrack {args:?} failed");
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "seed": 9,
        "camera": {"width_px": 64, "height_px": 64, "principal_point": [31.5, 31.5], "focal_len_px": 304.0},
        "noise": {"pool_size": 4},
        "dataset": {"train_count": 8, "eval_count": 4},
        "net": {"train": {"epochs": 2, "batch_size": 4}},
        "paths": {"dataset_dir": "data", "weights": "runs/w.stwt", "train_log": "runs/log.jsonl", "eval_dir": "runs/eval"}
    }"#;
    std::fs::write(dir.path().join("config.json"), cfg).unwrap();
    let run = |cmd: &str| cli(&[cmd, "--config", "config.json"], dir.path());

    run("gen-dataset");
    let data_a = snapshot(&dir.path().join("data"));
    run("train");
    let runs_a = snapshot(&dir.path().join("runs"));
    run("gen-dataset");
    let data_b = snapshot(&dir.path().join("data"));
    run("train");
    let runs_b = snapshot(&dir.path().join("runs"));

    let data_same = data_a == data_b;
    let runs_same = runs_a == runs_b;
    let pass = data_same && runs_same && !data_a.is_empty() && runs_a.len() == 2;
    report(
        9,
        "determinism",
        pass,
        format!(
            "dataset rerun identical: {data_same} ({} files), weights and log rerun identical: {runs_same}",
            data_a.len()
        ),
    );
    assert!(pass);
}
