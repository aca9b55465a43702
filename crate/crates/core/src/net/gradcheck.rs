//! Central finite-difference verification of the analytic gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::layers::Tensor;
use super::loss::{loss, DistanceGate};
use super::model::NetworkParams;
use super::train::{sample_gradient, TrainSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// Parameters compared.
    pub checked: usize,
    /// Draws rejected because a ±step crossed a ReLU or max-pool switch point.
    pub skipped: usize,
    /// Largest `|numeric − analytic| / max(|numeric|, |analytic|, 1e-8)`.
    pub worst_relative_error: f64,
}

/// Compares analytic gradients with central differences of step `eps` on
/// `count` randomly drawn parameters.
///
/// Central differences are only valid where the network is smooth, so a draw
/// whose perturbed passes switch any ReLU or pooling branch is replaced by a
/// fresh draw.
pub fn check_gradient<T: Real>(
    params: &NetworkParams<T>,
    sample: &TrainSample<T>,
    alpha: f64,
    gate: DistanceGate,
    count: usize,
    eps: f64,
    seed: u64,
) -> Result<GradientCheck> {
    let (w, h) = sample.input.dims();
    let input = Tensor::from_vec(1, h, w, sample.input.as_slice().to_vec());
    let eval = |p: &NetworkParams<T>| -> Result<_> {
        let (pred, cache) = p.forward_train(&input)?;
        Ok((loss(&pred, &sample.seg, &sample.dist, alpha, gate)?.total, cache))
    };
    let (_, analytic) = sample_gradient(params, sample, alpha, gate)?;
    let (_, base) = eval(params)?;
    let mut probe = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradientCheck {
        checked: 0,
        skipped: 0,
        worst_relative_error: 0.0,
    };
    let max_draws = 100 * count.max(1);
    while report.checked < count {
        if report.checked + report.skipped >= max_draws {
            return Err(Error::Degenerate(format!(
                "only {} of {count} parameters had a smooth neighbourhood",
                report.checked
            )));
        }
        let i = rng.random_range(0..params.len());
        let orig = params.values[i];
        probe.values[i] = orig + T::lit(eps);
        let (up, up_cache) = eval(&probe)?;
        probe.values[i] = orig - T::lit(eps);
        let (down, down_cache) = eval(&probe)?;
        probe.values[i] = orig;
        if !(base.same_branches(&up_cache) && base.same_branches(&down_cache)) {
            report.skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i].as_f64();
        let rel = (numeric - a).abs() / numeric.abs().max(a.abs()).max(1e-8);
        report.worst_relative_error = report.worst_relative_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}
