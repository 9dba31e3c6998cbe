use std::f64::consts::PI;
use std::fmt::Write as _;

use super::gmm::GmmModel;
use super::linalg::log_det;
use crate::error::{Error, Result};

/// Per-component density at Mahalanobis distance 2, `(2π)^(-d/2) |Σ|^(-1/2) e^(-2)`,
/// in natural log.
pub fn log_two_sigma_likelihoods(model: &GmmModel) -> Vec<f64> {
    let d = model.dim as f64;
    model
        .chol
        .iter()
        .map(|l| -0.5 * d * (2.0 * PI).ln() - 0.5 * log_det(l, model.dim) - 2.0)
        .collect()
}

/// `(a, b)`: the smallest and largest per-component 2σ density.
pub fn two_sigma_bounds(model: &GmmModel) -> (f64, f64) {
    let logs = log_two_sigma_likelihoods(model);
    let a = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let b = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (a.exp(), b.exp())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Candidate threshold (density, not log).
    pub te: f64,
    pub in_bounds: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdReport {
    pub te: f64,
    pub a: f64,
    pub b: f64,
    /// Sorted by ascending candidate threshold.
    pub roc_points: Vec<RocPoint>,
    /// Youden's J = TPR - FPR at `te`.
    pub chosen_j: f64,
    pub tpr: f64,
    pub fpr: f64,
    /// No labeled likelihood fell inside `[a, b]`; `te` is the best
    /// unrestricted candidate clamped into the bounds.
    pub clamped: bool,
    /// The best achievable J is not positive: the classes are not separable.
    pub non_separable: bool,
    pub auc: f64,
}

/// Area under the ROC curve of "higher score means stable" (ties count ½).
pub fn roc_auc(stable: &[f64], unstable: &[f64]) -> f64 {
    if stable.is_empty() || unstable.is_empty() {
        return f64::NAN;
    }
    let mut u: Vec<f64> = unstable.to_vec();
    u.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for s in stable {
        let below = u.partition_point(|v| v < s);
        let not_above = u.partition_point(|v| v <= s);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    wins / (stable.len() as f64 * unstable.len() as f64)
}

/// Threshold selection on precomputed natural-log likelihoods.
///
/// Candidates are the labeled likelihoods inside `[a, b]` plus `a` and `b`.
/// Each is scored by Youden's J under `p > te ⇒ stable`; the largest J wins
/// and ties go to the larger threshold.
pub fn select_threshold_from_log_scores(
    stable: &[f64],
    unstable: &[f64],
    a: f64,
    b: f64,
) -> Result<ThresholdReport> {
    if stable.is_empty() || unstable.is_empty() {
        return Err(Error::Data("threshold selection needs stable and unstable samples".into()));
    }
    if !(a <= b) || !(a > 0.0) {
        return Err(Error::Contract(format!("invalid bounds a = {a}, b = {b}")));
    }
    let (ln_a, ln_b) = (a.ln(), b.ln());
    let mut s_sorted = stable.to_vec();
    s_sorted.sort_by(f64::total_cmp);
    let mut u_sorted = unstable.to_vec();
    u_sorted.sort_by(f64::total_cmp);
    let rates = |ln_te: f64| {
        let above = |v: &[f64]| (v.len() - v.partition_point(|x| *x <= ln_te)) as f64 / v.len() as f64;
        (above(&u_sorted), above(&s_sorted))
    };

    let mut all: Vec<f64> = stable.iter().chain(unstable).copied().collect();
    all.push(ln_a);
    all.push(ln_b);
    all.sort_by(f64::total_cmp);
    all.dedup();

    let mut roc_points = Vec::with_capacity(all.len());
    let mut best_in: Option<(f64, f64)> = None;
    let mut best_any: Option<(f64, f64)> = None;
    let mut labeled_in_bounds = false;
    for &c in &all {
        let (fpr, tpr) = rates(c);
        let j = tpr - fpr;
        let in_bounds = c >= ln_a && c <= ln_b;
        let is_bound = c == ln_a || c == ln_b;
        let labeled = !is_bound || stable.contains(&c) || unstable.contains(&c);
        if in_bounds && labeled && !is_bound {
            labeled_in_bounds = true;
        }
        // ascending order, so `>=` keeps the larger threshold on ties
        if in_bounds && best_in.map_or(true, |(bj, _)| j >= bj) {
            best_in = Some((j, c));
        }
        if labeled && best_any.map_or(true, |(bj, _)| j >= bj) {
            best_any = Some((j, c));
        }
        roc_points.push(RocPoint {
            fpr,
            tpr,
            te: c.exp(),
            in_bounds,
        });
    }
    let clamped = !labeled_in_bounds;
    let ln_te = if clamped {
        best_any.expect("labeled samples exist").1.clamp(ln_a, ln_b)
    } else {
        best_in.expect("bounds are candidates").1
    };
    let best_j = best_in.map_or(f64::NEG_INFINITY, |b| b.0).max(best_any.map_or(f64::NEG_INFINITY, |b| b.0));
    let (fpr, tpr) = rates(ln_te);
    Ok(ThresholdReport {
        te: ln_te.exp(),
        a,
        b,
        roc_points,
        chosen_j: tpr - fpr,
        tpr,
        fpr,
        clamped,
        non_separable: best_j <= 0.0,
        auc: roc_auc(stable, unstable),
    })
}

/// Choose the stability threshold `te ∈ [a, b]` from labeled features.
pub fn select_threshold(model: &GmmModel, stable: &[Vec<f64>], unstable: &[Vec<f64>]) -> Result<ThresholdReport> {
    let score = |xs: &[Vec<f64>]| xs.iter().map(|x| model.log_likelihood(x)).collect::<Result<Vec<_>>>();
    let (a, b) = two_sigma_bounds(model);
    select_threshold_from_log_scores(&score(stable)?, &score(unstable)?, a, b)
}

/// `p(x) > te`, strictly.
pub fn is_stable(model: &GmmModel, te: f64, x: &[f64]) -> Result<bool> {
    Ok(model.likelihood(x)? > te)
}

impl ThresholdReport {
    /// Human-readable report with the full ROC table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# stability threshold report");
        let _ = writeln!(s, "# te\t{:e}", self.te);
        let _ = writeln!(s, "# bounds_a\t{:e}", self.a);
        let _ = writeln!(s, "# bounds_b\t{:e}", self.b);
        let _ = writeln!(s, "# youden_j\t{:.6}", self.chosen_j);
        let _ = writeln!(s, "# tpr\t{:.6}", self.tpr);
        let _ = writeln!(s, "# fpr\t{:.6}", self.fpr);
        let _ = writeln!(s, "# auc\t{:.6}", self.auc);
        let _ = writeln!(s, "# clamped_into_bounds\t{}", self.clamped);
        let _ = writeln!(s, "# non_separable\t{}", self.non_separable);
        let _ = writeln!(s, "te\tfpr\ttpr\tj\tin_bounds");
        for p in &self.roc_points {
            let _ = writeln!(
                s,
                "{:e}\t{:.6}\t{:.6}\t{:.6}\t{}",
                p.te,
                p.fpr,
                p.tpr,
                p.tpr - p.fpr,
                p.in_bounds
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln(v: &[f64]) -> Vec<f64> {
        v.iter().map(|x| x.ln()).collect()
    }

    #[test]
    fn bound_formula() {
        let g = GmmModel::from_parts(vec![1.0], vec![vec![0.0]], vec![vec![1.0]]).unwrap();
        let (a, b) = two_sigma_bounds(&g);
        assert!((a - 0.0539909665).abs() < 1e-9);
        assert_eq!(a, b);
        let g = GmmModel::from_parts(vec![1.0], vec![vec![0.0, 0.0]], vec![vec![1.0, 0.0, 0.0, 1.0]]).unwrap();
        assert!((two_sigma_bounds(&g).0 - 0.0215392793).abs() < 1e-9);
    }

    #[test]
    fn separable_sets_pick_highest_perfect_threshold() {
        // te = 0.2 is the only candidate with J = 1 under the strict rule;
        // at te = 0.8 the stable point 0.8 is no longer above the threshold.
        let r = select_threshold_from_log_scores(&ln(&[0.9, 0.8]), &ln(&[0.1, 0.2]), 0.15, 0.85).unwrap();
        assert!((r.te - 0.2).abs() < 1e-12);
        assert_eq!(r.chosen_j, 1.0);
        assert!(!r.clamped && !r.non_separable);
        // every threshold strictly between 0.2 and 0.8 also separates
        for p in &r.roc_points {
            if p.te > 0.2 + 1e-12 && p.te < 0.8 - 1e-12 {
                assert_eq!(p.tpr - p.fpr, 1.0);
            }
        }
    }

    #[test]
    fn identical_sets_are_not_separable() {
        let s = ln(&[0.3, 0.5, 0.7]);
        let r = select_threshold_from_log_scores(&s, &s, 0.1, 0.9).unwrap();
        assert_eq!(r.chosen_j, 0.0);
        assert!(r.non_separable);
        assert!((r.auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_point_enumeration() {
        let r = select_threshold_from_log_scores(&ln(&[0.5]), &ln(&[0.4]), 0.1, 0.9).unwrap();
        assert!((r.te - 0.4).abs() < 1e-12);
        assert_eq!(r.chosen_j, 1.0);
    }

    #[test]
    fn out_of_bounds_candidates_are_clamped_and_flagged() {
        let r = select_threshold_from_log_scores(&ln(&[1e-3, 2e-3]), &ln(&[1e-6]), 0.1, 0.9).unwrap();
        assert!(r.clamped);
        assert!((r.te - 0.1).abs() < 1e-12);
        assert!(r.te >= r.a && r.te <= r.b);
    }

    #[test]
    fn empty_sets_are_rejected() {
        assert!(matches!(
            select_threshold_from_log_scores(&[], &[0.0], 0.1, 0.2),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn rates_fall_as_threshold_rises() {
        let s = ln(&[0.2, 0.4, 0.6, 0.8, 0.9]);
        let u = ln(&[0.1, 0.3, 0.5, 0.55]);
        let r = select_threshold_from_log_scores(&s, &u, 0.05, 0.95).unwrap();
        for w in r.roc_points.windows(2) {
            assert!(w[0].te <= w[1].te);
            assert!(w[1].tpr <= w[0].tpr && w[1].fpr <= w[0].fpr);
        }
    }

    #[test]
    fn strict_inequality_at_threshold() {
        let g = GmmModel::from_parts(vec![1.0], vec![vec![0.0]], vec![vec![1.0]]).unwrap();
        let p = g.likelihood(&[0.7]).unwrap();
        assert!(!is_stable(&g, p, &[0.7]).unwrap());
        assert!(is_stable(&g, 1e-9, &[0.0]).unwrap());
    }
}
