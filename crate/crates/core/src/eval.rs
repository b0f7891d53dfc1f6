//! Scoring inferred graphs against a ground truth.
//!
//! Pairs are ordered `(target i, source j)`. With `exclude_self` the `n`
//! diagonal pairs are ignored everywhere.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::datagen::{format_real, GroundTruthAdjacency};
use crate::error::{Error, Result};
use crate::infer::{AdjacencyScores, SweepResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn check_shape(n: usize, truth: &GroundTruthAdjacency) -> Result<()> {
    if truth.n() != n {
        return Err(Error::Shape(format!(
            "prediction is {n}x{n}, truth is {}x{}",
            truth.n(),
            truth.n()
        )));
    }
    Ok(())
}

fn pairs(n: usize, exclude_self: bool) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (0..n).map(move |j| (i, j))).filter(move |(i, j)| !(exclude_self && i == j))
}

pub fn confusion(pred: ArrayView2<'_, bool>, truth: &GroundTruthAdjacency, exclude_self: bool) -> Result<Confusion> {
    if pred.nrows() != pred.ncols() {
        return Err(Error::Shape(format!("prediction is {}x{}", pred.nrows(), pred.ncols())));
    }
    check_shape(pred.nrows(), truth)?;
    let mut c = Confusion::default();
    for (i, j) in pairs(pred.nrows(), exclude_self) {
        match (pred[[i, j]], truth.has_edge(i, j)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RocOptions {
    pub exclude_self: bool,
    /// Add the (0,0) and (1,1) end points to sweep curves.
    pub anchors: bool,
}

impl Default for RocOptions {
    fn default() -> Self {
        RocOptions { exclude_self: false, anchors: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` sorted by fpr, then tpr.
    pub points: Vec<(f64, f64)>,
    pub auroc: f64,
}

impl RocCurve {
    fn from_points(mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
        points.dedup();
        let auroc = trapezoid(&points);
        RocCurve { points, auroc }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (f, t) in &self.points {
            out.push_str(&format!("{},{}\n", format_real(*f), format_real(*t)));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Trapezoidal area under points already sorted by fpr.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

fn require_both_classes(truth: &GroundTruthAdjacency, exclude_self: bool) -> Result<()> {
    let (pos, total) = pairs(truth.n(), exclude_self).fold((0, 0), |(p, t), (i, j)| {
        (p + usize::from(truth.has_edge(i, j)), t + 1)
    });
    if pos == 0 || pos == total {
        return Err(Error::InvalidArgument(
            "ROC needs the truth to contain both edges and non-edges".into(),
        ));
    }
    Ok(())
}

/// ROC through the operating points of a set of binary graphs.
pub fn roc_from_graphs(graphs: &[Array2<bool>], truth: &GroundTruthAdjacency, opts: RocOptions) -> Result<RocCurve> {
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("no graphs to score".into()));
    }
    require_both_classes(truth, opts.exclude_self)?;
    let mut points = Vec::with_capacity(graphs.len() + 2);
    for g in graphs {
        let c = confusion(g.view(), truth, opts.exclude_self)?;
        points.push((c.fpr(), c.tpr()));
    }
    if opts.anchors {
        points.push((0.0, 0.0));
        points.push((1.0, 1.0));
    }
    Ok(RocCurve::from_points(points))
}

/// ROC over the completed points of a regularization sweep.
pub fn roc_from_sweep(sweep: &SweepResult, truth: &GroundTruthAdjacency, opts: RocOptions) -> Result<RocCurve> {
    let graphs: Vec<Array2<bool>> = sweep.completed().map(|(_, a)| a.binary()).collect();
    roc_from_graphs(&graphs, truth, opts)
}

/// Threshold ROC of a single score matrix: one point per distinct score,
/// tied pairs entering together.
pub fn roc_from_scores(scores: &AdjacencyScores, truth: &GroundTruthAdjacency, exclude_self: bool) -> Result<RocCurve> {
    roc_from_score_matrix(scores.scores().view(), truth, exclude_self)
}

pub fn roc_from_score_matrix(
    scores: ArrayView2<'_, f64>,
    truth: &GroundTruthAdjacency,
    exclude_self: bool,
) -> Result<RocCurve> {
    if scores.nrows() != scores.ncols() {
        return Err(Error::Shape(format!("scores are {}x{}", scores.nrows(), scores.ncols())));
    }
    check_shape(scores.nrows(), truth)?;
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    require_both_classes(truth, exclude_self)?;
    let mut ranked: Vec<(f64, bool)> = pairs(scores.nrows(), exclude_self)
        .map(|(i, j)| (scores[[i, j]], truth.has_edge(i, j)))
        .collect();
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite"));
    let pos = ranked.iter().filter(|r| r.1).count() as f64;
    let neg = ranked.len() as f64 - pos;
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < ranked.len() {
        let level = ranked[k].0;
        while k < ranked.len() && ranked[k].0 == level {
            if ranked[k].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / neg, tp as f64 / pos));
    }
    Ok(RocCurve::from_points(points))
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Grid point maximizing TPR - FPR; ties go to the earliest point.
pub fn best_operating_point(sweep: &SweepResult, truth: &GroundTruthAdjacency, exclude_self: bool) -> Result<Option<(usize, Confusion)>> {
    let mut best: Option<(usize, Confusion, f64)> = None;
    for (k, adj) in sweep.completed() {
        let c = confusion(adj.binary().view(), truth, exclude_self)?;
        let j = c.tpr() - c.fpr();
        if best.as_ref().is_none_or(|b| j > b.2) {
            best = Some((k, c, j));
        }
    }
    Ok(best.map(|(k, c, _)| (k, c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::SweepPoint;
    use crate::numerics::SeededRng;
    use ndarray::array;
    use rand::Rng;

    fn truth(m: Array2<u8>) -> GroundTruthAdjacency {
        GroundTruthAdjacency::new(m).unwrap()
    }

    fn sweep_of(graphs: &[Array2<bool>]) -> SweepResult {
        SweepResult {
            grid: (0..graphs.len()).map(|k| k as f64).collect(),
            seeds: vec![],
            points: graphs
                .iter()
                .enumerate()
                .map(|(k, g)| SweepPoint {
                    lambda1: k as f64,
                    adjacency: Some(AdjacencyScores::new(g.mapv(|b| f64::from(u8::from(b)))).unwrap()),
                    mse: vec![],
                })
                .collect(),
            failures: vec![],
        }
    }

    #[test]
    fn confusion_cases() {
        let t = truth(array![[1, 0, 1], [0, 0, 0], [1, 1, 1]]);
        let pred = t.edges().mapv(|e| e == 1);
        let c = confusion(pred.view(), &t, false).unwrap();
        assert_eq!((c.fp, c.fn_, c.total()), (0, 0, 9));
        let c = confusion(pred.mapv(|b| !b).view(), &t, false).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));

        let id = truth(Array2::from_diag_elem(3, 1));
        let all = Array2::from_elem((3, 3), true);
        let c = confusion(all.view(), &id, true).unwrap();
        assert_eq!(c, Confusion { tp: 0, fp: 6, tn: 0, fn_: 0 });
        assert!(confusion(Array2::from_elem((2, 2), true).view(), &id, false).is_err());
    }

    #[test]
    fn perfect_sweep() {
        let t = truth(array![[1, 0, 1], [0, 0, 0], [1, 1, 0]]);
        let g = t.edges().mapv(|e| e == 1);
        let r = roc_from_sweep(&sweep_of(&[g.clone(), g]), &t, RocOptions::default()).unwrap();
        assert_eq!(r.auroc, 1.0);
    }

    #[test]
    fn empty_and_full_sweep_is_chance() {
        let t = truth(array![[1, 0], [0, 1]]);
        let r = roc_from_sweep(
            &sweep_of(&[Array2::from_elem((2, 2), false), Array2::from_elem((2, 2), true)]),
            &t,
            RocOptions::default(),
        )
        .unwrap();
        assert_eq!(r.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(r.auroc, 0.5);
    }

    #[test]
    fn hand_built_three_point_sweep() {
        // 4 positives, 5 negatives
        let t = truth(array![[1, 1, 0], [1, 1, 0], [0, 0, 0]]);
        let pos = [(0, 0), (0, 1), (1, 0), (1, 1)];
        let neg = [(0, 2), (1, 2), (2, 0), (2, 1), (2, 2)];
        let graph = |tp: usize, fp: usize| {
            let mut g = Array2::from_elem((3, 3), false);
            for &(i, j) in pos.iter().take(tp).chain(neg.iter().take(fp)) {
                g[[i, j]] = true;
            }
            g
        };
        let gs = [graph(2, 0), graph(3, 1), graph(4, 4)];
        let r = roc_from_sweep(&sweep_of(&gs), &t, RocOptions::default()).unwrap();
        assert_eq!(r.points, vec![(0.0, 0.0), (0.0, 0.5), (0.2, 0.75), (0.8, 1.0), (1.0, 1.0)]);
        // 0.2 * 0.625 + 0.6 * 0.875 + 0.2 * 1.0
        assert!((r.auroc - 0.85).abs() < 1e-15);

        let dup = [graph(2, 0), graph(3, 1), graph(3, 1), graph(4, 4)];
        assert_eq!(roc_from_sweep(&sweep_of(&dup), &t, RocOptions::default()).unwrap(), r);

        let bare = roc_from_sweep(&sweep_of(&gs), &t, RocOptions { anchors: false, exclude_self: false }).unwrap();
        assert_eq!(bare.points.len(), 3);
    }

    #[test]
    fn failed_points_are_skipped() {
        let t = truth(array![[1, 0], [0, 1]]);
        let mut s = sweep_of(&[Array2::from_elem((2, 2), false), Array2::from_elem((2, 2), true)]);
        s.points[1].adjacency = None;
        let r = roc_from_sweep(&s, &t, RocOptions::default()).unwrap();
        assert_eq!(r.points, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn score_roc_cases() {
        let t = truth(array![[1, 0, 1], [0, 1, 0], [1, 1, 0]]);
        let exact = AdjacencyScores::new(t.edges().mapv(f64::from)).unwrap();
        assert_eq!(roc_from_scores(&exact, &t, false).unwrap().auroc, 1.0);

        let flat = AdjacencyScores::new(Array2::from_elem((3, 3), 0.3)).unwrap();
        let r = roc_from_scores(&flat, &t, false).unwrap();
        assert_eq!(r.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(r.auroc, 0.5);
    }

    #[test]
    fn score_roc_matches_pair_counting() {
        // AUROC of a threshold sweep equals P(score_pos > score_neg) + P(tie)/2
        let mut rng = SeededRng::new(3);
        for _ in 0..20 {
            let n = 6;
            let t = truth(Array2::from_shape_simple_fn((n, n), || u8::from(rng.random_bool(0.4))));
            let s = Array2::from_shape_simple_fn((n, n), || f64::from(rng.random_range(0..5u8)));
            let r = match roc_from_score_matrix(s.view(), &t, true) {
                Ok(r) => r,
                Err(_) => continue,
            };
            let (mut wins, mut total) = (0.0, 0.0);
            for (a, b) in pairs(n, true) {
                for (c, d) in pairs(n, true) {
                    if t.has_edge(a, b) && !t.has_edge(c, d) {
                        total += 1.0;
                        wins += match s[[a, b]].partial_cmp(&s[[c, d]]).unwrap() {
                            std::cmp::Ordering::Greater => 1.0,
                            std::cmp::Ordering::Equal => 0.5,
                            std::cmp::Ordering::Less => 0.0,
                        };
                    }
                }
            }
            assert!((r.auroc - wins / total).abs() < 1e-12);
        }
    }

    #[test]
    fn random_scores_near_chance() {
        let mut rng = SeededRng::new(17);
        let n = 30;
        let mut aurocs = Vec::new();
        for _ in 0..100 {
            let t = truth(Array2::from_shape_simple_fn((n, n), || u8::from(rng.random_bool(0.3))));
            let s = Array2::from_shape_simple_fn((n, n), || rng.random::<f64>());
            let a = roc_from_score_matrix(s.view(), &t, false).unwrap().auroc;
            assert!((a - 0.5).abs() < 0.1, "auroc {a}");
            aurocs.push(a);
        }
        assert!((mean_and_std(&aurocs).0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn monotone_transform_invariance() {
        let mut rng = SeededRng::new(5);
        let t = truth(Array2::from_shape_simple_fn((8, 8), || u8::from(rng.random_bool(0.3))));
        let s = Array2::from_shape_simple_fn((8, 8), || rng.random::<f64>());
        let a = roc_from_score_matrix(s.view(), &t, false).unwrap();
        let b = roc_from_score_matrix(s.mapv(|v| (3.0 * v).exp() + 1.0).view(), &t, false).unwrap();
        assert_eq!(a.auroc, b.auroc);
    }

    #[test]
    fn single_class_truth_rejected() {
        let t = truth(Array2::from_diag_elem(3, 1));
        let s = Array2::from_elem((3, 3), 1.0);
        assert!(roc_from_score_matrix(s.view(), &t, true).is_err());
        assert!(roc_from_score_matrix(s.view(), &t, false).is_ok());
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_and_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_std(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn roc_csv_layout() {
        let r = RocCurve::from_points(vec![(1.0, 1.0), (0.0, 0.0)]);
        assert!(r.to_csv().starts_with("fpr,tpr\n0.0000000000000000e0,"));
    }
}
