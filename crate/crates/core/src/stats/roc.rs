//! ROC curves, trapezoidal AUC and Youden operating points.

use crate::error::{Error, Result};

/// One operating point: scores `>= threshold` are called positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub true_positives: usize,
    pub false_positives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<RocPoint>,
    positives: usize,
    negatives: usize,
}

impl RocCurve {
    /// Points in descending threshold order, from `(inf, 0, 0)` to `(-inf, 1, 1)`.
    pub fn points(&self) -> &[RocPoint] {
        &self.points
    }

    pub fn positives(&self) -> usize {
        self.positives
    }

    pub fn negatives(&self) -> usize {
        self.negatives
    }

    /// The points that correspond to distinct observed scores.
    pub fn operating_points(&self) -> &[RocPoint] {
        &self.points[1..self.points.len() - 1]
    }
}

/// Builds the ROC curve with one point per distinct score.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let positives = labels.iter().filter(|l| **l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let point = |threshold, tp: usize, fp: usize| RocPoint {
        threshold,
        tpr: tp as f64 / positives as f64,
        fpr: fp as f64 / negatives as f64,
        true_positives: tp,
        false_positives: fp,
    };
    let mut points = vec![point(f64::INFINITY, 0, 0)];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(point(s, tp, fp));
    }
    points.push(point(f64::NEG_INFINITY, positives, negatives));
    Ok(RocCurve {
        points,
        positives,
        negatives,
    })
}

/// Trapezoidal area under the curve in the (fpr, tpr) plane.
pub fn auc(curve: &RocCurve) -> f64 {
    // integer trapezoids, one division at the end
    let twice_area: u128 = curve
        .points
        .windows(2)
        .map(|w| {
            let dfp = (w[1].false_positives - w[0].false_positives) as u128;
            dfp * (w[1].true_positives + w[0].true_positives) as u128
        })
        .sum();
    twice_area as f64 / (2.0 * curve.positives as f64 * curve.negatives as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoudenPoint {
    /// Midpoint between the chosen score and the next lower distinct score.
    pub threshold: f64,
    /// `tpr - fpr` at the chosen point.
    pub j: f64,
    pub tpr: f64,
    pub fpr: f64,
    /// Rank of the chosen score among the distinct scores, highest first.
    pub index: usize,
}

/// Maximizes `J = tpr - fpr` over the distinct-score operating points.
///
/// Ties go to the higher `tpr`, then to the lower threshold.
pub fn youden_threshold(curve: &RocCurve) -> YoudenPoint {
    let ops = curve.operating_points();
    let mut best = 0;
    let mut best_j = f64::NEG_INFINITY;
    for (i, p) in ops.iter().enumerate() {
        let j = p.tpr - p.fpr;
        // later points have lower thresholds and no smaller tpr
        if j > best_j || (j == best_j && p.tpr >= ops[best].tpr) {
            best = i;
            best_j = j;
        }
    }
    let chosen = ops[best];
    let threshold = match ops.get(best + 1) {
        Some(next) => 0.5 * (chosen.threshold + next.threshold),
        None => chosen.threshold,
    };
    YoudenPoint {
        threshold,
        j: best_j,
        tpr: chosen.tpr,
        fpr: chosen.fpr,
        index: best,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (sp, _) in scores.iter().zip(labels).filter(|(_, l)| **l) {
            for (sn, _) in scores.iter().zip(labels).filter(|(_, l)| !**l) {
                pairs += 1.0;
                if sp > sn {
                    wins += 1.0;
                } else if sp == sn {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    /// Best J over every cut between sorted distinct scores.
    fn brute_force_j(scores: &[f64], labels: &[bool]) -> f64 {
        let p = labels.iter().filter(|l| **l).count() as f64;
        let n = labels.len() as f64 - p;
        let mut best = f64::NEG_INFINITY;
        for &t in scores {
            let tp = scores.iter().zip(labels).filter(|(s, l)| **l && **s >= t).count() as f64;
            let fp = scores.iter().zip(labels).filter(|(s, l)| !**l && **s >= t).count() as f64;
            best = best.max(tp / p - fp / n);
        }
        best
    }

    const SCORES: [f64; 4] = [0.1, 0.4, 0.35, 0.8];
    const LABELS: [bool; 4] = [false, false, true, true];

    #[test]
    fn small_example() {
        let curve = roc_curve(&SCORES, &LABELS).unwrap();
        assert_eq!(auc(&curve), 0.75);
        assert_eq!(auc(&curve), pair_count_auc(&SCORES, &LABELS));
        let first = curve.points()[0];
        let last = *curve.points().last().unwrap();
        assert_eq!((first.threshold, first.tpr, first.fpr), (f64::INFINITY, 0.0, 0.0));
        assert_eq!((last.threshold, last.tpr, last.fpr), (f64::NEG_INFINITY, 1.0, 1.0));

        let y = youden_threshold(&curve);
        assert_eq!(y.j, 0.5);
        assert_eq!(y.j, brute_force_j(&SCORES, &LABELS));
        assert_eq!(y.tpr, 1.0);
        assert!((y.threshold - 0.225).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_tied_rankings() {
        let labels = [true, true, false, false];
        let perfect = roc_curve(&[0.9, 0.8, 0.4, 0.3], &labels).unwrap();
        assert_eq!(auc(&perfect), 1.0);
        let y = youden_threshold(&perfect);
        assert_eq!(y.j, 1.0);
        assert!((y.threshold - 0.6).abs() < 1e-15);

        let as_scores: Vec<f64> = labels.iter().map(|l| *l as u8 as f64).collect();
        assert_eq!(auc(&roc_curve(&as_scores, &labels).unwrap()), 1.0);

        let tied = roc_curve(&[0.3; 4], &labels).unwrap();
        assert_eq!(tied.points().len(), 3);
        assert_eq!(auc(&tied), 0.5);
        let y = youden_threshold(&tied);
        assert_eq!((y.j, y.threshold, y.index), (0.0, 0.3, 0));
    }

    #[test]
    fn input_errors() {
        assert!(matches!(roc_curve(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass)));
        assert!(matches!(
            roc_curve(&[0.1], &[true, false]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(roc_curve(&[f64::NAN, 0.2], &[true, false]).is_err());
    }

    fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..=200).prop_flat_map(|n| {
            (
                // coarse grid so that ties are common
                prop::collection::vec((0u32..40).prop_map(|v| v as f64 / 40.0), n),
                prop::collection::vec(any::<bool>(), n),
            )
                .prop_filter("both classes", |(_, l)| l.iter().any(|x| *x) && l.iter().any(|x| !*x))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn auc_matches_pair_counting((scores, labels) in scored_labels()) {
            let curve = roc_curve(&scores, &labels).unwrap();
            prop_assert!((auc(&curve) - pair_count_auc(&scores, &labels)).abs() < 1e-9);
            for w in curve.points().windows(2) {
                prop_assert!(w[1].tpr >= w[0].tpr && w[1].fpr >= w[0].fpr);
                prop_assert!(w[1].threshold < w[0].threshold);
            }
            prop_assert_eq!(youden_threshold(&curve).j, brute_force_j(&scores, &labels));
        }

        #[test]
        fn monotone_transforms_preserve_auc_and_choice((scores, labels) in scored_labels()) {
            let curve = roc_curve(&scores, &labels).unwrap();
            let base = youden_threshold(&curve);
            for f in [|s: f64| s.exp(), |s: f64| 3.0 * s - 7.0] {
                let moved: Vec<f64> = scores.iter().map(|s| f(*s)).collect();
                let other = roc_curve(&moved, &labels).unwrap();
                prop_assert_eq!(auc(&other), auc(&curve));
                let y = youden_threshold(&other);
                prop_assert_eq!(y.index, base.index);
                prop_assert_eq!((y.tpr, y.fpr), (base.tpr, base.fpr));
            }
        }
    }
}
