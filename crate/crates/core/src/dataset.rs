//! Scene generation and the on-disk dataset layout.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/train/00000.pgm  00000.json  00000_seg.pgm  00000_dist.dmap  00000_truth.json
//! <dir>/eval/...
//! ```
//!
//! Each image draws from its own random stream keyed by split and index, so
//! output does not depend on the worker count.

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::EvalImage;
use crate::grid::Grid;
use crate::io::{self, FrameMeta};
use crate::labels::{make_distance_map, make_segmentation_map, SceneTruth, SegmentationMap, TruthStar, D_MAX};
use crate::net::{normalize_frame, TrainSample, WEIGHTS_VERSION};
use crate::noise::{fuse, load_frame_pool, FramePool};
use crate::rng::{self, Domain};
use crate::simulate::{
    parse_catalog, project_stars, render_star, synthetic_catalog, Attitude, CatalogStar, ImageFrame, ProjectedStar,
};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }

    fn domain(self) -> Domain {
        match self {
            Split::Train => Domain::TrainScene,
            Split::Eval => Domain::EvalScene,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatVersions {
    pub manifest: u32,
    pub frame: String,
    pub segmentation: String,
    pub distance: String,
    pub weights: u32,
}

impl Default for FormatVersions {
    fn default() -> Self {
        Self {
            manifest: MANIFEST_VERSION,
            frame: "pgm-p5-16bit+json".into(),
            segmentation: "pgm-p5-8bit".into(),
            distance: "dmap-f32-le".into(),
            weights: WEIGHTS_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub formats: FormatVersions,
    pub train_count: usize,
    pub eval_count: usize,
    pub width: usize,
    pub height: usize,
    pub fwc: f64,
}

/// A rendered, possibly noisy frame with its labels' source.
#[derive(Debug, Clone)]
pub struct Scene {
    pub frame: ImageFrame<f64>,
    pub truth: SceneTruth,
    pub stray: bool,
}

/// Everything needed to render any scene of a run by index.
pub struct SceneGenerator {
    cfg: RunConfig,
    catalog: Vec<CatalogStar>,
    pool: Option<FramePool>,
}

impl SceneGenerator {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let ds = &cfg.dataset;
        let catalog = match &ds.catalog {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                parse_catalog(&text, ds.mag_limit)?
            }
            None => {
                let mut r = rng::stream(cfg.seed, Domain::Catalog, 0);
                synthetic_catalog(ds.synthetic_catalog_size, ds.mag_limit, &mut r)
            }
        };
        let pool = if ds.add_noise {
            Some(match &cfg.noise.pool_dir {
                Some(dir) => load_frame_pool(dir)?,
                None => {
                    let mut r = rng::stream(cfg.seed, Domain::NoisePool, 0);
                    FramePool::synthetic(&cfg.camera, &cfg.noise, ds.exposure_s, &mut r)
                }
            })
        } else {
            None
        };
        Ok(Self {
            cfg: cfg.clone(),
            catalog,
            pool,
        })
    }

    pub fn scene(&self, split: Split, index: usize) -> Result<Scene> {
        let (cam, ds) = (&self.cfg.camera, &self.cfg.dataset);
        let mut r = rng::stream(self.cfg.seed, split.domain(), index as u64);
        let attitude = Attitude::random(&mut r);
        let [lo, hi] = ds.exposure_s;
        let exposure = if hi > lo { r.random_range(lo..=hi) } else { lo };

        let mut kept: Vec<ProjectedStar> = Vec::new();
        for s in project_stars(&self.catalog, &attitude, cam)? {
            if kept.iter().all(|k| (k.u_c - s.u_c).hypot(k.v_c - s.v_c) >= ds.min_separation_px) {
                kept.push(s);
            }
        }
        let mut frame = ImageFrame::zeros(cam.width_px, cam.height_px, exposure);
        let mut truth = SceneTruth::default();
        for mut star in kept {
            star.sigma_psf = ds.sigma_psf.sample(&mut r);
            if render_star(&mut frame, &star, cam, &mut r).is_some() {
                truth.stars.push(TruthStar {
                    id: star.id,
                    u: star.u_c,
                    v: star.v_c,
                    vmag: star.vmag,
                    sigma_psf: star.sigma_psf,
                });
            }
        }
        let (frame, stray) = match &self.pool {
            Some(pool) => {
                let (f, info) = fuse(&frame, pool, &self.cfg.noise, cam, &mut r)?;
                (f, info.stray)
            }
            None => (frame, false),
        };
        Ok(Scene { frame, truth, stray })
    }
}

fn stem(index: usize) -> String {
    format!("{index:05}")
}

fn write_sample(dir: &Path, index: usize, scene: &Scene, fwc: f64) -> Result<()> {
    let s = stem(index);
    let (w, h) = scene.frame.dims();
    let meta = FrameMeta {
        exposure_s: scene.frame.exposure_s,
        fwc,
        stray: Some(scene.stray),
    };
    io::write_frame(&dir.join(format!("{s}.pgm")), &scene.frame, &meta)?;
    io::write_segmentation(&dir.join(format!("{s}_seg.pgm")), &make_segmentation_map(&scene.truth, w, h))?;
    io::write_distance_map(
        &dir.join(format!("{s}_dist.dmap")),
        &make_distance_map::<f32>(&scene.truth, w, h).grid,
    )?;
    io::write_truth(&dir.join(format!("{s}_truth.json")), &scene.truth)
}

/// Renders both splits into `dir`, replacing any previous `train/` and
/// `eval/` contents.
pub fn write_dataset(cfg: &RunConfig, dir: &Path) -> Result<Manifest> {
    let generator = SceneGenerator::new(cfg)?;
    for (split, count) in [(Split::Train, cfg.dataset.train_count), (Split::Eval, cfg.dataset.eval_count)] {
        let sub = dir.join(split.dir_name());
        if sub.exists() {
            std::fs::remove_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        }
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        (0..count).into_par_iter().try_for_each(|i| {
            let scene = generator.scene(split, i)?;
            write_sample(&sub, i, &scene, cfg.camera.fwc)
        })?;
    }
    let manifest = Manifest {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        formats: FormatVersions::default(),
        train_count: cfg.dataset.train_count,
        eval_count: cfg.dataset.eval_count,
        width: cfg.camera.width_px,
        height: cfg.camera.height_px,
        fwc: cfg.camera.fwc,
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let m: Manifest = io::read_json(&path)?;
    if m.formats.manifest != MANIFEST_VERSION {
        return Err(Error::format(&path, format!("unsupported manifest version {}", m.formats.manifest)));
    }
    Ok(m)
}

/// One sample read back from disk.
#[derive(Debug, Clone)]
pub struct StoredSample {
    pub name: String,
    pub frame: ImageFrame<f64>,
    pub meta: FrameMeta,
    pub seg: SegmentationMap,
    /// Distances in pixels.
    pub dist: Grid<f32>,
    pub truth: SceneTruth,
}

impl StoredSample {
    pub fn training_sample(&self, gain: f64) -> TrainSample<f32> {
        TrainSample {
            input: normalize_frame(&self.frame.pixels, self.meta.fwc, gain),
            seg: self.seg.clone(),
            dist: self.dist.map(|d| d.min(D_MAX as f32) / D_MAX as f32),
        }
    }

    pub fn eval_image(&self) -> EvalImage {
        EvalImage {
            name: self.name.clone(),
            frame: self.frame.clone(),
            truth: self.truth.clone(),
            stray: self.meta.stray.unwrap_or(false),
            fwc: self.meta.fwc,
        }
    }
}

pub fn split_dir(dir: &Path, split: Split) -> PathBuf {
    dir.join(split.dir_name())
}

/// Loads every sample of a split listed in the manifest.
pub fn load_split(dir: &Path, split: Split) -> Result<Vec<StoredSample>> {
    let manifest = read_manifest(dir)?;
    let count = match split {
        Split::Train => manifest.train_count,
        Split::Eval => manifest.eval_count,
    };
    let sub = split_dir(dir, split);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let s = stem(i);
            let frame_path = sub.join(format!("{s}.pgm"));
            let (frame, meta) = io::read_frame(&frame_path)?;
            let seg = io::read_segmentation(&sub.join(format!("{s}_seg.pgm")))?;
            let dist = io::read_distance_map(&sub.join(format!("{s}_dist.dmap")))?;
            let truth = io::read_truth(&sub.join(format!("{s}_truth.json")))?;
            if seg.dims() != frame.dims() || dist.dims() != frame.dims() {
                return Err(Error::Dimension(format!("{}: labels do not match the frame", frame_path.display())));
            }
            Ok(StoredSample {
                name: format!("{}/{s}", split.dir_name()),
                frame,
                meta,
                seg,
                dist,
                truth,
            })
        })
        .collect()
}
