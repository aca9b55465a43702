use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng::{self, Domain};
use crate::scalar::Real;

use super::layers::Tensor;
use super::loss::{loss_with_grad, DistanceGate, LossValue};
use super::model::{ArchDescriptor, NetworkParams};
use super::optim::{learning_rate, AdamW};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the distance loss.
    pub alpha: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_halving_period_epochs: usize,
    /// Taken from the run seed rather than the config file.
    #[serde(skip)]
    pub seed: u64,
    pub distance_gate: DistanceGate,
    /// Train on random square crops of this side instead of full frames.
    pub crop: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 2.5,
            lr: 1e-3,
            weight_decay: 5e-4,
            batch_size: 10,
            epochs: 100,
            lr_halving_period_epochs: 20,
            seed: 0,
            distance_gate: DistanceGate::Predicted,
            crop: None,
        }
    }
}

impl TrainConfig {
    /// Small batches and a short schedule for single-machine runs.
    pub fn desk_scale() -> Self {
        Self {
            batch_size: 4,
            epochs: 20,
            lr_halving_period_epochs: 5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("alpha", self.alpha), ("lr", self.lr)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("train.{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("train.weight_decay must be non-negative".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.lr_halving_period_epochs == 0 {
            return Err(Error::Config(
                "train.batch_size, train.epochs and train.lr_halving_period_epochs must be positive".into(),
            ));
        }
        if self.crop == Some(0) {
            return Err(Error::Config("train.crop must be positive".into()));
        }
        Ok(())
    }
}

/// One training example: normalized frame, star mask, normalized distance map.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample<T> {
    pub input: Grid<T>,
    pub seg: Grid<u8>,
    pub dist: Grid<T>,
}

/// Mean losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    #[serde(rename = "L_S")]
    pub l_s: f64,
    #[serde(rename = "L_D")]
    pub l_d: f64,
    #[serde(rename = "L_total")]
    pub l_total: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: NetworkParams<T>,
    pub log: Vec<EpochLog>,
}

fn crop_grid<U: Copy>(g: &Grid<U>, u0: usize, v0: usize, side: usize) -> Grid<U> {
    Grid::from_fn(side, side, |u, v| g.get(u0 + u, v0 + v))
}

/// Loss and parameter gradient for one sample.
pub fn sample_gradient<T: Real>(
    params: &NetworkParams<T>,
    sample: &TrainSample<T>,
    alpha: f64,
    gate: DistanceGate,
) -> Result<(LossValue, Vec<T>)> {
    let (w, h) = sample.input.dims();
    let input = Tensor::from_vec(1, h, w, sample.input.as_slice().to_vec());
    let (pred, cache) = params.forward_train(&input)?;
    let (value, grad) = loss_with_grad(&pred, &sample.seg, &sample.dist, alpha, gate)?;
    let mut grads = vec![T::zero(); params.len()];
    params.backward(&cache, &grad.s_hat, &grad.d_hat, &mut grads);
    Ok((value, grads))
}

fn check_samples<T: Real>(samples: &[TrainSample<T>], multiple: usize, crop: Option<usize>) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("training set".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        let d = s.input.dims();
        if s.seg.dims() != d || s.dist.dims() != d {
            return Err(Error::Dimension(format!("sample {i}: frame and label shapes differ")));
        }
        let (w, h) = match crop {
            Some(c) if c > d.0 || c > d.1 => {
                return Err(Error::Dimension(format!("sample {i}: crop {c} exceeds frame {d:?}")));
            }
            Some(c) => (c, c),
            None => d,
        };
        if w % multiple != 0 || h % multiple != 0 {
            return Err(Error::Dimension(format!(
                "sample {i}: training size {w}x{h} is not a multiple of {multiple}"
            )));
        }
    }
    Ok(())
}

/// Mini-batch training from a fresh initialization. Per-sample gradients run
/// in parallel and are summed in sample order, so results do not depend on
/// the thread count.
pub fn train<T: Real>(
    samples: &[TrainSample<T>],
    arch: &ArchDescriptor,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    arch.validate()?;
    check_samples(samples, arch.size_multiple(), cfg.crop)?;
    let mut params = NetworkParams::<T>::init(arch, cfg.seed)?;
    let mut opt = AdamW::new(params.len(), cfg.weight_decay);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = learning_rate(cfg.lr, cfg.lr_halving_period_epochs, epoch);
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, Domain::Shuffle, epoch as u64));
        let (mut sum_s, mut sum_d, mut sum_t) = (0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let views: Vec<TrainSample<T>> = batch
                .iter()
                .map(|&i| match cfg.crop {
                    None => samples[i].clone(),
                    Some(side) => {
                        let s = &samples[i];
                        let (w, h) = s.input.dims();
                        let mut r = rng::stream(cfg.seed, Domain::Crop, (epoch * samples.len() + i) as u64);
                        let m = arch.size_multiple();
                        let u0 = r.random_range(0..=(w - side) / m) * m;
                        let v0 = r.random_range(0..=(h - side) / m) * m;
                        TrainSample {
                            input: crop_grid(&s.input, u0, v0, side),
                            seg: crop_grid(&s.seg, u0, v0, side),
                            dist: crop_grid(&s.dist, u0, v0, side),
                        }
                    }
                })
                .collect();
            let results: Vec<Result<(LossValue, Vec<T>)>> = views
                .par_iter()
                .map(|s| sample_gradient(&params, s, cfg.alpha, cfg.distance_gate))
                .collect();
            let mut grads = vec![T::zero(); params.len()];
            for r in results {
                let (value, g) = r?;
                sum_s += value.seg;
                sum_d += value.dist;
                sum_t += value.total;
                grads.iter_mut().zip(&g).for_each(|(a, &b)| *a += b);
            }
            let scale = T::one() / T::lit(batch.len() as f64);
            grads.iter_mut().for_each(|g| *g *= scale);
            opt.step(&mut params.values, &grads, lr);
            if params.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        let n = samples.len() as f64;
        let entry = EpochLog {
            epoch,
            l_s: sum_s / n,
            l_d: sum_d / n,
            l_total: sum_t / n,
            lr,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{make_distance_map, make_segmentation_map, SceneTruth, TruthStar, D_MAX};
    use crate::simulate::pixel_rate;

    fn toy_set(n: usize, side: usize) -> Vec<TrainSample<f32>> {
        (0..n)
            .map(|k| {
                let mut r = rng::stream(99, Domain::TrainScene, k as u64);
                let stars: Vec<TruthStar> = (0..2)
                    .map(|i| TruthStar {
                        id: i,
                        u: r.random_range(3.0..side as f64 - 3.0),
                        v: r.random_range(3.0..side as f64 - 3.0),
                        vmag: 3.0,
                        sigma_psf: 0.75,
                    })
                    .collect();
                let truth = SceneTruth { stars };
                let input = Grid::from_fn(side, side, |u, v| {
                    truth
                        .stars
                        .iter()
                        .map(|s| pixel_rate(1.0, s.u, s.v, 0.75, u as f64, v as f64))
                        .sum::<f64>() as f32
                });
                TrainSample {
                    input,
                    seg: make_segmentation_map(&truth, side, side),
                    dist: make_distance_map::<f32>(&truth, side, side).normalized(D_MAX as f32),
                }
            })
            .collect()
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 4,
            lr_halving_period_epochs: 2,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn same_seed_same_result() {
        let data = toy_set(6, 16);
        let arch = ArchDescriptor::default();
        let a = train(&data, &arch, &quick_cfg(), |_| {}).unwrap();
        let b = train(&data, &arch, &quick_cfg(), |_| {}).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.iter().map(|e| e.lr).collect::<Vec<_>>(), vec![1e-3, 1e-3, 5e-4]);
    }

    #[test]
    fn loss_falls_on_toy_set() {
        let data = toy_set(8, 16);
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 4,
            lr: 1e-2,
            lr_halving_period_epochs: 15,
            seed: 1,
            ..TrainConfig::default()
        };
        let out = train(&data, &ArchDescriptor::default(), &cfg, |_| {}).unwrap();
        let (first, last) = (out.log[0].l_total, out.log.last().unwrap().l_total);
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn log_serializes_with_loss_names() {
        let e = EpochLog {
            epoch: 1,
            l_s: 0.5,
            l_d: 0.25,
            l_total: 1.125,
            lr: 1e-3,
        };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, r#"{"epoch":1,"L_S":0.5,"L_D":0.25,"L_total":1.125,"lr":0.001}"#);
    }

    #[test]
    fn rejects_bad_sets() {
        let arch = ArchDescriptor::default();
        assert!(matches!(
            train::<f32>(&[], &arch, &quick_cfg(), |_| {}),
            Err(Error::EmptyDataset(_))
        ));
        let odd = toy_set(1, 18);
        assert!(matches!(train(&odd, &arch, &quick_cfg(), |_| {}), Err(Error::Dimension(_))));
        let cfg = TrainConfig {
            crop: Some(8),
            ..quick_cfg()
        };
        assert!(train(&toy_set(2, 16), &arch, &cfg, |_| {}).is_ok());
    }
}
