//! Single JSON run configuration shared by every command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::classical::ClassicalParams;
use crate::error::{Error, Result};
use crate::net::{ArchDescriptor, TrainConfig};
use crate::noise::NoiseParams;
use crate::pipeline::PipelineParams;
use crate::simulate::{CameraModel, SigmaSampler};

/// Environment variable that overrides the config seed.
pub const SEED_ENV: &str = "STARTRACK_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub train_count: usize,
    pub eval_count: usize,
    pub mag_limit: f64,
    /// Exposure time range in seconds, sampled uniformly per image.
    pub exposure_s: [f64; 2],
    /// `id,ra_deg,dec_deg,vmag` CSV; a synthetic sky is used when absent.
    pub catalog: Option<PathBuf>,
    pub synthetic_catalog_size: usize,
    pub sigma_psf: SigmaSampler,
    /// Fainter stars closer than this to a brighter one are not rendered.
    pub min_separation_px: f64,
    /// Fuse sensor noise and stray light into the clean renders.
    pub add_noise: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            train_count: 400,
            eval_count: 100,
            mag_limit: 6.0,
            exposure_s: [0.1, 1.0],
            catalog: None,
            synthetic_catalog_size: 5000,
            sigma_psf: SigmaSampler::default(),
            min_separation_px: 4.0,
            add_noise: true,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.exposure_s;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!("dataset.exposure_s must satisfy 0 < lo <= hi, got {lo}, {hi}")));
        }
        if !self.mag_limit.is_finite() {
            return Err(Error::Config("dataset.mag_limit must be finite".into()));
        }
        if !(self.min_separation_px >= 0.0) {
            return Err(Error::Config("dataset.min_separation_px must be non-negative".into()));
        }
        match self.sigma_psf {
            SigmaSampler::Uniform { lo, hi } if lo > 0.0 && hi >= lo => {}
            SigmaSampler::Fixed(s) if s > 0.0 => {}
            _ => return Err(Error::Config("dataset.sigma_psf must be positive and ordered".into())),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub arch: ArchDescriptor,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Method names, `cnn_trilateration` or `<detector>+<centroider>`; empty means all.
    pub methods: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { methods: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub dataset_dir: PathBuf,
    pub weights: PathBuf,
    pub train_log: PathBuf,
    pub eval_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            dataset_dir: "data".into(),
            weights: "runs/weights.stwt".into(),
            train_log: "runs/train_log.jsonl".into(),
            eval_dir: "runs/eval".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of every random stream: catalog, scenes, noise pool, init, shuffling.
    pub seed: u64,
    pub camera: CameraModel,
    pub noise: NoiseParams,
    pub classical: ClassicalParams,
    pub net: NetConfig,
    pub pipeline: PipelineParams,
    pub dataset: DatasetConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

/// Where a config value came from, lowest precedence first.
#[derive(Debug, Clone, Default)]
pub struct ConfigSources<'a> {
    pub file: Option<&'a Path>,
    pub env_seed: Option<String>,
    pub overrides: &'a [String],
    pub flag_seed: Option<u64>,
}

impl RunConfig {
    /// File, then `STARTRACK_SEED`, then `--set` overrides, then the seed
    /// flag; validated before returning.
    pub fn resolve(src: &ConfigSources) -> Result<Self> {
        let mut value = match src.file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => Value::Object(Default::default()),
        };
        if let Some(s) = &src.env_seed {
            let seed: u64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={s} is not an unsigned integer")))?;
            set_path(&mut value, "seed", Value::from(seed))?;
        }
        for kv in src.overrides {
            let (key, raw) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut value, key.trim(), parsed)?;
        }
        if let Some(seed) = src.flag_seed {
            set_path(&mut value, "seed", Value::from(seed))?;
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.camera.validate().map_err(as_config)?;
        self.noise.validate().map_err(as_config)?;
        self.net.arch.validate().map_err(as_config)?;
        self.net.train.validate().map_err(as_config)?;
        self.pipeline.validate()?;
        self.dataset.validate()?;
        let multiple = self.net.arch.size_multiple();
        if self.camera.width_px % multiple != 0 || self.camera.height_px % multiple != 0 {
            return Err(Error::Config(format!(
                "camera frame {}x{} must be a multiple of {multiple} for training",
                self.camera.width_px, self.camera.height_px
            )));
        }
        for m in &self.eval.methods {
            crate::eval::Method::parse(m).ok_or_else(|| Error::Config(format!("unknown eval method `{m}`")))?;
        }
        Ok(())
    }

    /// Training hyperparameters with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.net.train.clone()
        }
    }

    /// SHA-256 of the canonical JSON form, lowercase hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Sets `value` at a dotted path, creating missing objects along the way.
pub fn set_path(root: &mut Value, dotted: &str, value: Value) -> Result<()> {
    if dotted.is_empty() {
        return Err(Error::Config("empty override key".into()));
    }
    let mut node = root;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(m) => m,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just set")
            }
            _ => {
                return Err(Error::Config(format!(
                    "override `{dotted}`: `{}` is not an object",
                    parts[..i].join(".")
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("loop returns on the last component")
}

/// Every leaf key of the default config with its default value.
pub fn config_keys() -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
            Value::Object(m) if !m.is_empty() => {
                for (k, child) in m {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            leaf => out.push((prefix.to_string(), leaf.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", &serde_json::to_value(RunConfig::default()).expect("config serializes"), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(file: Option<&Path>, env: Option<&str>, sets: &[&str], flag: Option<u64>) -> Result<RunConfig> {
        let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
        RunConfig::resolve(&ConfigSources {
            file,
            env_seed: env.map(str::to_string),
            overrides: &sets,
            flag_seed: flag,
        })
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(resolve(None, None, &[], None).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(resolve(None, None, &["net.train.epoch=3"], None), Err(Error::Config(_))));
        assert!(matches!(resolve(None, None, &["bogus=1"], None), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_parse_json_and_strings() {
        let cfg = resolve(
            None,
            None,
            &["net.train.epochs=3", "paths.weights=w.bin", "net.arch.encoder_dims=[4,8]", "dataset.catalog=hip.csv"],
            None,
        )
        .unwrap();
        assert_eq!(cfg.net.train.epochs, 3);
        assert_eq!(cfg.paths.weights, PathBuf::from("w.bin"));
        assert_eq!(cfg.net.arch.encoder_dims, vec![4, 8]);
        assert_eq!(cfg.dataset.catalog, Some(PathBuf::from("hip.csv")));
    }

    #[test]
    fn seed_precedence_flag_env_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 1, "dataset": {"train_count": 3}}"#).unwrap();
        let p = Some(path.as_path());
        assert_eq!(resolve(p, None, &[], None).unwrap().seed, 1);
        assert_eq!(resolve(p, Some("2"), &[], None).unwrap().seed, 2);
        assert_eq!(resolve(p, Some("2"), &[], Some(3)).unwrap().seed, 3);
        assert_eq!(resolve(p, Some("2"), &["seed=4"], None).unwrap().seed, 4);
        assert_eq!(resolve(p, None, &[], None).unwrap().dataset.train_count, 3);
        assert!(resolve(p, Some("x"), &[], None).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(resolve(None, None, &["pipeline.d_th=-1"], None).is_err());
        assert!(resolve(None, None, &["camera.width_px=130"], None).is_err());
        assert!(resolve(None, None, &["dataset.exposure_s=[1.0,0.5]"], None).is_err());
        assert!(resolve(None, None, &["eval.methods=[\"nope\"]"], None).is_err());
        assert!(resolve(None, None, &["seed.x=1"], None).is_err());
    }

    #[test]
    fn hash_tracks_every_field() {
        let base = RunConfig::default();
        let h = base.hash();
        assert_eq!(h.len(), 64);
        assert_eq!(h, RunConfig::default().hash());
        for kv in ["seed=1", "noise.read_noise_dn=2.5", "paths.eval_dir=x", "pipeline.r_match=1.4"] {
            assert_ne!(resolve(None, None, &[kv], None).unwrap().hash(), h, "{kv}");
        }
    }

    #[test]
    fn key_listing_covers_nested_fields() {
        let keys = config_keys();
        let find = |k: &str| keys.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
        assert_eq!(find("net.train.epochs").as_deref(), Some("100"));
        assert_eq!(find("pipeline.r_match").as_deref(), Some("1.5"));
        assert_eq!(find("dataset.catalog").as_deref(), Some("null"));
        assert!(find("seed").is_some() && find("camera.fwc").is_some());
    }
}
