//! The work behind each CLI subcommand.

use std::io::Write as _;
use std::path::Path;

use crate::classical::{detect_and_centroid_classical, Centroider, Detector};
use crate::config::RunConfig;
use crate::dataset::{load_split, read_manifest, write_dataset, Manifest, SceneGenerator, Split};
use crate::error::{Error, Result};
use crate::eval::{run_benchmark, Benchmark, EvalContext, EvalImage, Method};
use crate::io::{self, CentroidList};
use crate::labels::D_MAX;
use crate::net::{load_params, normalize_frame, save_params, train, EpochLog, NetworkParams, TrainOutcome};
use crate::pipeline::centroids_from_prediction;

pub fn gen_dataset(cfg: &RunConfig) -> Result<Manifest> {
    write_dataset(cfg, &cfg.paths.dataset_dir)
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

/// Trains on the dataset's train split, then writes the weights and a
/// JSON-lines loss log.
pub fn train_network(cfg: &RunConfig, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainOutcome<f32>> {
    let dir = &cfg.paths.dataset_dir;
    read_manifest(dir)?;
    let gain = cfg.net.arch.input_gain;
    let samples: Vec<_> = load_split(dir, Split::Train)?
        .iter()
        .map(|s| s.training_sample(gain))
        .collect();
    let outcome = train(&samples, &cfg.net.arch, &cfg.train_config(), |e| on_epoch(e))?;

    create_parent(&cfg.paths.weights)?;
    save_params(&outcome.params, &cfg.paths.weights)?;
    let mut log = Vec::new();
    for e in &outcome.log {
        serde_json::to_writer(&mut log, e)?;
        log.push(b'\n');
    }
    create_parent(&cfg.paths.train_log)?;
    std::fs::write(&cfg.paths.train_log, log).map_err(|e| Error::io(&cfg.paths.train_log, e))?;
    Ok(outcome)
}

/// Network pipeline on one frame file; optionally dumps the predicted maps
/// as `<stem>_s.pgm` and `<stem>_d.pgm` into `dump_dir`.
pub fn infer(cfg: &RunConfig, weights: &Path, frame_path: &Path, dump_dir: Option<&Path>) -> Result<CentroidList> {
    let net: NetworkParams<f32> = load_params(weights)?;
    let (frame, meta) = io::read_frame(frame_path)?;
    let input = normalize_frame::<f32>(&frame.pixels, meta.fwc, net.arch.input_gain);
    let pred = net.predict(&input)?;
    if let Some(dir) = dump_dir {
        let stem = frame_path.file_stem().and_then(|s| s.to_str()).unwrap_or("frame");
        io::write_grid_pgm(&dir.join(format!("{stem}_s.pgm")), &pred.s_hat.map(f64::from), 1.0)?;
        io::write_grid_pgm(&dir.join(format!("{stem}_d.pgm")), &pred.d_hat.map(f64::from), 1.0)?;
    }
    let cs = centroids_from_prediction(&pred.s_hat, &pred.d_hat, D_MAX, &cfg.pipeline)?;
    Ok(CentroidList::from_centroids(&cs))
}

/// A classical detector/centroider pair, named `<detector>+<centroider>`, on one frame file.
pub fn detect(cfg: &RunConfig, method: &str, frame_path: &Path) -> Result<CentroidList> {
    let (d, c) = method
        .split_once('+')
        .and_then(|(d, c)| Some((Detector::parse(d)?, Centroider::parse(c)?)))
        .ok_or_else(|| Error::InvalidArgument(format!("unknown classical method `{method}`")))?;
    let (frame, _) = io::read_frame(frame_path)?;
    let cs = detect_and_centroid_classical(&frame.pixels, d, c, &cfg.classical);
    Ok(CentroidList::from_centroids(&cs))
}

fn configured_methods(cfg: &RunConfig) -> Result<Vec<Method>> {
    if cfg.eval.methods.is_empty() {
        return Ok(Method::all());
    }
    cfg.eval
        .methods
        .iter()
        .map(|m| Method::parse(m).ok_or_else(|| Error::Config(format!("unknown eval method `{m}`"))))
        .collect()
}

/// Evaluation frames from the dataset's eval split, or rendered in memory
/// when no dataset exists yet.
pub fn eval_images(cfg: &RunConfig) -> Result<Vec<EvalImage>> {
    let dir = &cfg.paths.dataset_dir;
    if dir.join("manifest.json").exists() {
        return Ok(load_split(dir, Split::Eval)?.iter().map(|s| s.eval_image()).collect());
    }
    let generator = SceneGenerator::new(cfg)?;
    (0..cfg.dataset.eval_count)
        .map(|i| {
            let s = generator.scene(Split::Eval, i)?;
            Ok(EvalImage {
                name: format!("eval/{i:05}"),
                frame: s.frame,
                truth: s.truth,
                stray: s.stray,
                fwc: cfg.camera.fwc,
            })
        })
        .collect()
}

/// Benchmarks every configured method and writes `report.json` and
/// `comparison.csv` to the eval directory.
pub fn evaluate(cfg: &RunConfig) -> Result<Benchmark> {
    let methods = configured_methods(cfg)?;
    // Weights are checked before any frame is rendered or read.
    let network = if methods.contains(&Method::Pipeline) {
        Some(load_params::<f32>(&cfg.paths.weights)?)
    } else {
        None
    };
    let images = eval_images(cfg)?;
    let ctx = EvalContext {
        network,
        pipeline: cfg.pipeline.clone(),
        classical: cfg.classical.clone(),
    };
    let bench = run_benchmark(&methods, &images, &ctx)?;
    let dir = &cfg.paths.eval_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_json(&dir.join("report.json"), &bench)?;
    let csv = dir.join("comparison.csv");
    std::fs::File::create(&csv)
        .and_then(|mut f| f.write_all(bench.to_csv().as_bytes()))
        .map_err(|e| Error::io(&csv, e))?;
    Ok(bench)
}
