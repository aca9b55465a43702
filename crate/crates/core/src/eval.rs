//! Matching estimates to truth, detection metrics, centroid RMSE and the
//! method comparison benchmark.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{detect_and_centroid_classical, Centroid, Centroider, ClassicalParams, Detector};
use crate::error::{Error, Result};
use crate::labels::{SceneTruth, D_MAX};
use crate::net::{normalize_frame, NetworkParams};
use crate::pipeline::{centroids_from_prediction, PipelineParams};
use crate::simulate::ImageFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub truth: usize,
    pub estimate: usize,
    pub distance: f64,
    /// Estimate minus truth.
    pub du: f64,
    pub dv: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    /// False negatives.
    pub unmatched_truth: Vec<usize>,
    /// False positives.
    pub unmatched_estimates: Vec<usize>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn fp(&self) -> usize {
        self.unmatched_estimates.len()
    }

    pub fn fn_(&self) -> usize {
        self.unmatched_truth.len()
    }
}

/// Greedy one-to-one matching by ascending distance among pairs within
/// `r_match`; ties go to the lower estimate index, then the lower truth index.
pub fn match_centroids(estimates: &[(f64, f64)], truth: &[(f64, f64)], r_match: f64) -> MatchResult {
    let mut candidates = Vec::new();
    for (e, &(eu, ev)) in estimates.iter().enumerate() {
        for (t, &(tu, tv)) in truth.iter().enumerate() {
            let d = (eu - tu).hypot(ev - tv);
            if d <= r_match {
                candidates.push((d, e, t));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut est_used = vec![false; estimates.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for (d, e, t) in candidates {
        if est_used[e] || truth_used[t] {
            continue;
        }
        est_used[e] = true;
        truth_used[t] = true;
        pairs.push(MatchPair {
            truth: t,
            estimate: e,
            distance: d,
            du: estimates[e].0 - truth[t].0,
            dv: estimates[e].1 - truth[t].1,
        });
    }
    MatchResult {
        pairs,
        unmatched_truth: (0..truth.len()).filter(|&t| !truth_used[t]).collect(),
        unmatched_estimates: (0..estimates.len()).filter(|&e| !est_used[e]).collect(),
    }
}

/// Precision, recall and F1 on a 0-100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any ratio was 0/0 and reported as 0.
    pub undefined: bool,
}

pub fn detection_metrics(tp: usize, fp: usize, fn_: usize) -> DetectionMetrics {
    let mut undefined = false;
    let mut ratio = |num: usize, den: usize| {
        if den == 0 {
            undefined = true;
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = f1_score(precision, recall);
    if precision + recall == 0.0 {
        undefined = true;
    }
    DetectionMetrics {
        precision,
        recall,
        f1,
        undefined,
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Root mean squared 2-D error over matched pairs; `None` without pairs.
pub fn centroid_rmse(pairs: &[MatchPair]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let sq: f64 = pairs.iter().map(|p| p.du * p.du + p.dv * p.dv).sum();
    Some((sq / pairs.len() as f64).sqrt())
}

/// A method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    Pipeline,
    Classical { detector: Detector, centroider: Centroider },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Pipeline => "cnn_trilateration".into(),
            Method::Classical { detector, centroider } => format!("{}+{}", detector.name(), centroider.name()),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "cnn_trilateration" {
            return Some(Method::Pipeline);
        }
        let (d, c) = s.split_once('+')?;
        Some(Method::Classical {
            detector: Detector::parse(d)?,
            centroider: Centroider::parse(c)?,
        })
    }

    /// The network pipeline followed by every detector/centroider pair.
    pub fn all() -> Vec<Method> {
        let mut v = vec![Method::Pipeline];
        for detector in Detector::ALL {
            for centroider in Centroider::ALL {
                v.push(Method::Classical { detector, centroider });
            }
        }
        v
    }
}

/// One evaluation frame with its truth.
#[derive(Debug, Clone)]
pub struct EvalImage {
    pub name: String,
    pub frame: ImageFrame<f64>,
    pub truth: SceneTruth,
    pub stray: bool,
    pub fwc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub name: String,
    pub stray: bool,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sq_error_sum: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub subset: String,
    pub images: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when nothing matched.
    pub rmse_px: Option<f64>,
    /// Names of metrics reported as 0 or missing because they were undefined.
    pub undefined: Vec<String>,
    /// Wall-clock seconds per stage, summed over images.
    pub timings: BTreeMap<String, f64>,
    pub per_image: Vec<ImageResult>,
}

impl EvalReport {
    /// Pools counts and squared errors over the given per-image results.
    pub fn from_images(method: &str, subset: &str, per_image: Vec<ImageResult>, timings: BTreeMap<String, f64>) -> Self {
        let tp: usize = per_image.iter().map(|r| r.tp).sum();
        let fp: usize = per_image.iter().map(|r| r.fp).sum();
        let fn_: usize = per_image.iter().map(|r| r.fn_).sum();
        let sq: f64 = per_image.iter().map(|r| r.sq_error_sum).sum();
        let m = detection_metrics(tp, fp, fn_);
        let mut undefined = Vec::new();
        if tp + fp == 0 {
            undefined.push("precision".to_string());
        }
        if tp + fn_ == 0 {
            undefined.push("recall".to_string());
        }
        if m.precision + m.recall == 0.0 {
            undefined.push("f1".to_string());
        }
        let rmse_px = (tp > 0).then(|| (sq / tp as f64).sqrt());
        if rmse_px.is_none() {
            undefined.push("rmse_px".to_string());
        }
        Self {
            method: method.to_string(),
            subset: subset.to_string(),
            images: per_image.len(),
            tp,
            fp,
            fn_,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            rmse_px,
            undefined,
            timings,
            per_image,
        }
    }

    pub fn seconds_per_image(&self) -> f64 {
        let total: f64 = self.per_image.iter().map(|r| r.seconds).sum();
        total / self.images.max(1) as f64
    }
}

/// Everything a method needs besides the frames.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub network: Option<NetworkParams<f32>>,
    pub pipeline: PipelineParams,
    pub classical: ClassicalParams,
}

/// Centroids and per-stage seconds for one frame.
pub fn run_method_on_frame(
    method: Method,
    image: &EvalImage,
    ctx: &EvalContext,
) -> Result<(Vec<Centroid>, Vec<(&'static str, f64)>)> {
    match method {
        Method::Pipeline => {
            let net = ctx
                .network
                .as_ref()
                .ok_or_else(|| Error::Config("pipeline evaluation needs network weights".into()))?;
            let t0 = Instant::now();
            let input = normalize_frame::<f32>(&image.frame.pixels, image.fwc, net.arch.input_gain);
            let pred = net.predict(&input)?;
            let t1 = Instant::now();
            let cs = centroids_from_prediction(&pred.s_hat, &pred.d_hat, D_MAX, &ctx.pipeline)?;
            let t2 = Instant::now();
            Ok((
                cs,
                vec![("inference", (t1 - t0).as_secs_f64()), ("centroiding", (t2 - t1).as_secs_f64())],
            ))
        }
        Method::Classical { detector, centroider } => {
            let t0 = Instant::now();
            let cs = detect_and_centroid_classical(&image.frame.pixels, detector, centroider, &ctx.classical);
            Ok((cs, vec![("detect_and_centroid", t0.elapsed().as_secs_f64())]))
        }
    }
}

/// Evaluates one method over all frames; frames run in parallel, results are
/// reduced in frame order.
pub fn evaluate_method(method: Method, images: &[EvalImage], ctx: &EvalContext) -> Result<EvalReport> {
    let results: Vec<Result<(ImageResult, Vec<(&'static str, f64)>)>> = images
        .par_iter()
        .map(|img| {
            let t0 = Instant::now();
            let (cs, stages) = run_method_on_frame(method, img, ctx)?;
            let seconds = t0.elapsed().as_secs_f64();
            let est: Vec<(f64, f64)> = cs.iter().map(|c| (c.u, c.v)).collect();
            let m = match_centroids(&est, &img.truth.centroids(), ctx.pipeline.r_match);
            Ok((
                ImageResult {
                    name: img.name.clone(),
                    stray: img.stray,
                    tp: m.tp(),
                    fp: m.fp(),
                    fn_: m.fn_(),
                    sq_error_sum: m.pairs.iter().map(|p| p.du * p.du + p.dv * p.dv).sum(),
                    seconds,
                },
                stages,
            ))
        })
        .collect();
    let mut per_image = Vec::with_capacity(images.len());
    let mut timings = BTreeMap::new();
    for r in results {
        let (img, stages) = r?;
        for (stage, s) in stages {
            *timings.entry(stage.to_string()).or_insert(0.0) += s;
        }
        per_image.push(img);
    }
    Ok(EvalReport::from_images(&method.name(), "all", per_image, timings))
}

/// Reports for every method over all frames and over the stray-light subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    /// How the numbers were computed.
    pub notes: Vec<String>,
    pub r_match: f64,
    pub reports: Vec<EvalReport>,
}

impl Benchmark {
    pub fn find(&self, method: &str, subset: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.method == method && r.subset == subset)
    }

    /// Comparison table, one row per (method, subset).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,subset,images,tp,fp,fn,precision,recall,f1,rmse_px,ms_per_image\n");
        for r in &self.reports {
            let rmse = r.rmse_px.map_or_else(String::new, |x| format!("{x:.6}"));
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{:.4},{:.4},{:.4},{},{:.3}",
                r.method,
                r.subset,
                r.images,
                r.tp,
                r.fp,
                r.fn_,
                r.precision,
                r.recall,
                r.f1,
                rmse,
                1e3 * r.seconds_per_image()
            );
        }
        s
    }
}

pub fn run_benchmark(methods: &[Method], images: &[EvalImage], ctx: &EvalContext) -> Result<Benchmark> {
    if images.is_empty() {
        return Err(Error::EmptyDataset("evaluation set".into()));
    }
    if methods.contains(&Method::Pipeline) && ctx.network.is_none() {
        return Err(Error::Config("pipeline evaluation needs network weights".into()));
    }
    let mut reports = Vec::new();
    for &m in methods {
        let all = evaluate_method(m, images, ctx)?;
        let stray: Vec<ImageResult> = all.per_image.iter().filter(|r| r.stray).cloned().collect();
        let stray_report = EvalReport::from_images(&all.method, "stray", stray, BTreeMap::new());
        reports.push(all);
        reports.push(stray_report);
    }
    Ok(Benchmark {
        notes: vec![
            "rmse_px is the root mean squared 2-D Euclidean error over matched pairs".into(),
            format!("a detection matches a true star within {} px, greedily by distance", ctx.pipeline.r_match),
            "precision, recall and f1 are percentages; undefined ratios are reported as 0".into(),
        ],
        r_match: ctx.pipeline.r_match,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_lists_match_at_zero() {
        let pts = vec![(1.0, 2.0), (10.0, 3.5), (7.0, 7.0)];
        let m = match_centroids(&pts, &pts, 1.5);
        assert_eq!(m.tp(), 3);
        assert!(m.pairs.iter().all(|p| p.distance == 0.0 && p.truth == p.estimate));
    }

    #[test]
    fn equidistant_estimate_matches_once() {
        let m = match_centroids(&[(5.0, 5.0)], &[(4.0, 5.0), (6.0, 5.0)], 1.5);
        assert_eq!((m.tp(), m.fn_(), m.fp()), (1, 1, 0));
        assert_eq!(m.pairs[0].truth, 0);
    }

    #[test]
    fn ties_prefer_lower_estimate_index() {
        let m = match_centroids(&[(4.0, 5.0), (6.0, 5.0)], &[(5.0, 5.0)], 1.5);
        assert_eq!(m.pairs[0].estimate, 0);
        assert_eq!(m.unmatched_estimates, vec![1]);
    }

    #[test]
    fn metric_examples() {
        let m = detection_metrics(9, 1, 1);
        assert_eq!((m.precision, m.recall, m.f1), (90.0, 90.0, 90.0));
        assert!(!m.undefined);
        let f = f1_score(99.6, 97.5);
        assert!((98.5..=98.6).contains(&((f * 10.0).round() / 10.0)), "{f}");
        let m = detection_metrics(0, 0, 5);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.undefined);
    }

    #[test]
    fn rmse_examples() {
        let p = |du, dv| MatchPair {
            truth: 0,
            estimate: 0,
            distance: f64::hypot(du, dv),
            du,
            dv,
        };
        assert_eq!(centroid_rmse(&[p(0.0, 0.0), p(0.0, 0.0)]), Some(0.0));
        assert!((centroid_rmse(&[p(0.3, 0.4)]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(centroid_rmse(&[]), None);
    }

    #[test]
    fn rmse_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = rng.random_range(1..40);
            let errs: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let pairs: Vec<MatchPair> = errs
                .iter()
                .map(|&(du, dv)| MatchPair {
                    truth: 0,
                    estimate: 0,
                    distance: du.hypot(dv),
                    du,
                    dv,
                })
                .collect();
            let mut acc = 0.0;
            for &(du, dv) in &errs {
                acc += du * du;
                acc += dv * dv;
            }
            let want = (acc / n as f64).sqrt();
            assert!((centroid_rmse(&pairs).unwrap() - want).abs() < 1e-12);
        }
    }

    /// Largest number of disjoint pairs within `r`, by exhaustive search.
    fn best_assignment(est: &[(f64, f64)], truth: &[(f64, f64)], r: f64) -> usize {
        fn go(e: usize, est: &[(f64, f64)], truth: &[(f64, f64)], used: &mut Vec<bool>, r: f64) -> usize {
            if e == est.len() {
                return 0;
            }
            let mut best = go(e + 1, est, truth, used, r);
            for t in 0..truth.len() {
                if !used[t] && (est[e].0 - truth[t].0).hypot(est[e].1 - truth[t].1) <= r {
                    used[t] = true;
                    best = best.max(1 + go(e + 1, est, truth, used, r));
                    used[t] = false;
                }
            }
            best
        }
        go(0, est, truth, &mut vec![false; truth.len()], r)
    }

    proptest! {
        #[test]
        fn greedy_is_optimal_on_separated_scenes(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = 1.5;
            let mut truth: Vec<(f64, f64)> = Vec::new();
            let n = rng.random_range(1..=8);
            while truth.len() < n {
                let c = (rng.random_range(0.0..60.0), rng.random_range(0.0..60.0));
                if truth.iter().all(|t| (t.0 - c.0).hypot(t.1 - c.1) > 2.0 * r) {
                    truth.push(c);
                }
            }
            let mut est = Vec::new();
            for t in &truth {
                if rng.random_bool(0.8) {
                    est.push((t.0 + rng.random_range(-1.2..1.2), t.1 + rng.random_range(-1.2..1.2)));
                }
            }
            for _ in 0..rng.random_range(0..3) {
                est.push((rng.random_range(0.0..60.0), rng.random_range(0.0..60.0)));
            }
            let m = match_centroids(&est, &truth, r);
            prop_assert_eq!(m.tp(), best_assignment(&est, &truth, r));
            prop_assert_eq!(m.tp() + m.fp(), est.len());
            prop_assert_eq!(m.tp() + m.fn_(), truth.len());
            prop_assert!(m.pairs.iter().all(|p| p.distance <= r));
        }

        #[test]
        fn f1_bounds(tp in 0usize..100, fp in 0usize..100, fn_ in 0usize..100) {
            let m = detection_metrics(tp, fp, fn_);
            prop_assert!((0.0..=100.0).contains(&m.precision) && (0.0..=100.0).contains(&m.recall));
            prop_assert!(m.f1 <= (m.precision + m.recall) / 2.0 + 1e-12);
            prop_assert!((f1_score(m.recall, m.precision) - m.f1).abs() < 1e-12);
            if m.precision + m.recall > 0.0 {
                let eq = 2.0 * m.precision * m.recall / (m.precision + m.recall);
                prop_assert!((m.f1 - eq).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn report_json_round_trip() {
        let imgs = vec![
            ImageResult {
                name: "a".into(),
                stray: true,
                tp: 3,
                fp: 1,
                fn_: 0,
                sq_error_sum: 0.1234567890123,
                seconds: 0.01,
            },
            ImageResult {
                name: "b".into(),
                stray: false,
                tp: 0,
                fp: 0,
                fn_: 2,
                sq_error_sum: 0.0,
                seconds: 1.0 / 3.0,
            },
        ];
        let mut t = BTreeMap::new();
        t.insert("inference".to_string(), 0.1 + 0.2);
        let r = EvalReport::from_images("m", "all", imgs, t);
        let b = Benchmark {
            notes: vec!["x".into()],
            r_match: 1.5,
            reports: vec![r],
        };
        let back: Benchmark = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(back, b);
        assert!(b.to_csv().lines().nth(1).unwrap().starts_with("m,all,2,3,1,2,"));
    }

    #[test]
    fn classical_methods_run_on_a_frame() {
        use crate::grid::Grid;
        use crate::labels::TruthStar;
        use crate::simulate::pixel_rate;
        let (u, v) = (20.3, 14.6);
        let pixels = Grid::from_fn(48, 32, |x, y| 10.0 + pixel_rate(3000.0, u, v, 0.8, x as f64, y as f64));
        let img = EvalImage {
            name: "one".into(),
            frame: ImageFrame { pixels, exposure_s: 0.5 },
            truth: SceneTruth {
                stars: vec![TruthStar {
                    id: 0,
                    u,
                    v,
                    vmag: 3.0,
                    sigma_psf: 0.8,
                }],
            },
            stray: false,
            fwc: 10000.0,
        };
        let ctx = EvalContext {
            network: None,
            pipeline: PipelineParams::default(),
            classical: ClassicalParams::default(),
        };
        let methods: Vec<Method> = Method::all().into_iter().filter(|m| *m != Method::Pipeline).collect();
        assert!(Method::all().iter().all(|m| Method::parse(&m.name()) == Some(*m)));
        assert_eq!(Method::parse("liebe"), None);
        let b = run_benchmark(&methods, &[img.clone()], &ctx).unwrap();
        let r = b.find("liebe+gaussian_grid", "all").unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 0, 0));
        assert!(run_benchmark(&[Method::Pipeline], &[img], &ctx).is_err());
    }
}
