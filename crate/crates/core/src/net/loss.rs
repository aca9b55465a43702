//! Combined segmentation and distance loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;

use super::model::Prediction;

/// Probability clamp inside the cross-entropy logarithms.
pub const PROB_CLAMP: f64 = 1e-7;

/// Which mask gates the predicted distance in the distance loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceGate {
    /// The predicted star probability.
    #[default]
    Predicted,
    /// The label mask.
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub seg: f64,
    pub dist: f64,
}

/// Loss gradients with respect to the two network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub s_hat: Grid<T>,
    pub d_hat: Grid<T>,
}

fn check_shapes<T: Real>(pred: &Prediction<T>, seg: &Grid<u8>, dist: &Grid<T>) -> Result<()> {
    let d = pred.s_hat.dims();
    if pred.d_hat.dims() != d || seg.dims() != d || dist.dims() != d {
        return Err(Error::Dimension(format!(
            "loss inputs differ in shape: s_hat {:?}, d_hat {:?}, S {:?}, D {:?}",
            d,
            pred.d_hat.dims(),
            seg.dims(),
            dist.dims()
        )));
    }
    Ok(())
}

/// Binary cross-entropy of the star mask plus `alpha` times the mean squared
/// error of the gated distance.
pub fn loss<T: Real>(
    pred: &Prediction<T>,
    seg: &Grid<u8>,
    dist: &Grid<T>,
    alpha: f64,
    gate: DistanceGate,
) -> Result<LossValue> {
    loss_impl(pred, seg, dist, alpha, gate, false).map(|(v, _)| v)
}

pub fn loss_with_grad<T: Real>(
    pred: &Prediction<T>,
    seg: &Grid<u8>,
    dist: &Grid<T>,
    alpha: f64,
    gate: DistanceGate,
) -> Result<(LossValue, LossGrad<T>)> {
    loss_impl(pred, seg, dist, alpha, gate, true).map(|(v, g)| (v, g.expect("gradient requested")))
}

fn loss_impl<T: Real>(
    pred: &Prediction<T>,
    seg: &Grid<u8>,
    dist: &Grid<T>,
    alpha: f64,
    gate: DistanceGate,
    want_grad: bool,
) -> Result<(LossValue, Option<LossGrad<T>>)> {
    check_shapes(pred, seg, dist)?;
    let (w, h) = seg.dims();
    let n = (w * h) as f64;
    let (lo, hi) = (PROB_CLAMP, 1.0 - PROB_CLAMP);
    let mut grads = want_grad.then(|| (Vec::with_capacity(w * h), Vec::with_capacity(w * h)));
    let (mut seg_sum, mut dist_sum) = (0.0, 0.0);
    let samples = pred
        .s_hat
        .as_slice()
        .iter()
        .zip(pred.d_hat.as_slice())
        .zip(seg.as_slice().iter().zip(dist.as_slice()));
    for ((&s_hat, &d_hat), (&s, &d)) in samples {
        let (s_hat, d_hat, d) = (s_hat.as_f64(), d_hat.as_f64(), d.as_f64());
        let s = if s != 0 { 1.0 } else { 0.0 };
        let sc = s_hat.clamp(lo, hi);
        seg_sum -= s * sc.ln() + (1.0 - s) * (1.0 - sc).ln();
        let g = match gate {
            DistanceGate::Predicted => s_hat,
            DistanceGate::Label => s,
        };
        let r = g * d_hat - s * d;
        dist_sum += r * r;
        if let Some((gs, gd)) = grads.as_mut() {
            let mut d_s = if s_hat > lo && s_hat < hi {
                -(s / sc - (1.0 - s) / (1.0 - sc)) / n
            } else {
                0.0
            };
            if gate == DistanceGate::Predicted {
                d_s += alpha * 2.0 * r * d_hat / n;
            }
            gs.push(T::lit(d_s));
            gd.push(T::lit(alpha * 2.0 * r * g / n));
        }
    }
    let seg_loss = seg_sum / n;
    let dist_loss = dist_sum / n;
    let value = LossValue {
        total: seg_loss + alpha * dist_loss,
        seg: seg_loss,
        dist: dist_loss,
    };
    let grad = grads.map(|(gs, gd)| LossGrad {
        s_hat: Grid::from_vec(w, h, gs),
        d_hat: Grid::from_vec(w, h, gd),
    });
    Ok((value, grad))
}
