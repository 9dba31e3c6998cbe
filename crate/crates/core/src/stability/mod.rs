//! Grasp stability from a Gaussian mixture over `(S, θ, P)` features.
//!
//! One mixture is fitted on stable grasps only. A grasp counts as stable
//! when its mixture density exceeds a threshold `te` picked from an ROC
//! sweep over labeled stable/unstable samples, restricted to the band
//! between the smallest and largest per-component 2σ density.

mod gmm;
mod kmeans;
mod linalg;
mod threshold;

pub use gmm::{em_fit, EmConfig, GmmModel, DEFAULT_MAX_ITER, DEFAULT_REG_EPS, DEFAULT_TOL};
pub use kmeans::{kmeans_init, KMeans, KMEANS_MAX_ITER};
pub use threshold::{
    is_stable, log_two_sigma_likelihoods, roc_auc, select_threshold, select_threshold_from_log_scores,
    two_sigma_bounds, RocPoint, ThresholdReport,
};

use std::path::Path;

use crate::data::{split_dataset, DatasetKind, Episode, Label};
use crate::error::{Error, Result};
use crate::nn::Container;
use crate::tactile::TAXELS;

pub const FEATURE_DIM: usize = TAXELS + 1 + 7;

/// Stability-estimator input: taxels, gripper angle and wrist pose.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspFeature {
    pub s: [f64; TAXELS],
    pub theta_deg: f64,
    /// Position (m) then unit quaternion.
    pub pose: [f64; 7],
}

impl GraspFeature {
    pub fn new(s: [f64; TAXELS], theta_deg: f64, pose: [f64; 7]) -> Result<Self> {
        let qn = pose[3..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if (qn - 1.0).abs() > 1e-6 {
            return Err(Error::Validation {
                field: "pose",
                reason: format!("quaternion norm {qn} is not 1"),
            });
        }
        Ok(Self { s, theta_deg, pose })
    }

    /// Packed `[S (32), θ, P (7)]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_DIM);
        v.extend_from_slice(&self.s);
        v.push(self.theta_deg);
        v.extend_from_slice(&self.pose);
        v
    }
}

/// Fitted mixture plus its selected threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityEstimator {
    pub gmm: GmmModel,
    pub te: f64,
}

impl StabilityEstimator {
    pub fn log_likelihood(&self, x: &GraspFeature) -> Result<f64> {
        self.gmm.log_likelihood(&x.to_vec())
    }

    pub fn likelihood(&self, x: &GraspFeature) -> Result<f64> {
        self.gmm.likelihood(&x.to_vec())
    }

    pub fn is_stable(&self, x: &GraspFeature) -> Result<bool> {
        is_stable(&self.gmm, self.te, &x.to_vec())
    }

    pub fn to_container(&self) -> Container {
        let mut c = self.gmm.to_container();
        c.kind = "stability_estimator".into();
        c.set_meta("te", format!("{:e}", self.te));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("stability_estimator")?;
        let mut inner = c.clone();
        inner.kind = "gmm".into();
        let gmm = GmmModel::from_container(&inner)?;
        let te: f64 = c.meta_parse("te")?;
        Ok(Self { gmm, te })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Labeled features from `gp` and `stab` episodes, `(stable, unstable)`.
pub fn stability_features(episodes: &[Episode]) -> Result<(Vec<GraspFeature>, Vec<GraspFeature>)> {
    let mut stable = Vec::new();
    let mut unstable = Vec::new();
    for ep in episodes
        .iter()
        .filter(|e| matches!(e.header.kind, DatasetKind::Gp | DatasetKind::Stab))
    {
        for f in &ep.frames {
            let dest = match f.label {
                Label::Stable => &mut stable,
                Label::Unstable => &mut unstable,
                Label::Na => continue,
            };
            dest.push(GraspFeature::new(f.s, f.theta_deg, f.pose)?);
        }
    }
    Ok((stable, unstable))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub components: usize,
    pub em: EmConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            components: 2,
            em: EmConfig::default(),
        }
    }
}

/// Fitted estimator with its threshold report and held-out scores.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorFit {
    pub estimator: StabilityEstimator,
    pub report: ThresholdReport,
    /// ROC AUC of the log-likelihood on the held-out episodes.
    pub val_auc: f64,
    pub train_counts: (usize, usize),
    pub val_counts: (usize, usize),
}

/// Split episodes 8:2, fit the mixture on stable training frames, pick the
/// threshold from labeled training frames and score held-out frames.
pub fn fit_estimator(episodes: &[Episode], seed: u64, config: &EstimatorConfig) -> Result<EstimatorFit> {
    let eligible: Vec<Episode> = episodes
        .iter()
        .filter(|e| matches!(e.header.kind, DatasetKind::Gp | DatasetKind::Stab))
        .cloned()
        .collect();
    let (train_eps, val_eps) = split_dataset(&eligible, seed)?;
    let (st, ut) = stability_features(&train_eps)?;
    let (sv, uv) = stability_features(&val_eps)?;
    if st.is_empty() || ut.is_empty() || sv.is_empty() || uv.is_empty() {
        return Err(Error::Data(format!(
            "both splits need stable and unstable frames (train {}/{}, val {}/{})",
            st.len(),
            ut.len(),
            sv.len(),
            uv.len()
        )));
    }
    let vecs = |v: &[GraspFeature]| v.iter().map(GraspFeature::to_vec).collect::<Vec<_>>();
    let gmm = em_fit(&vecs(&st), config.components, seed, config.em)?;
    let report = select_threshold(&gmm, &vecs(&st), &vecs(&ut))?;
    let score = |v: &[GraspFeature]| v.iter().map(|x| gmm.log_likelihood(&x.to_vec())).collect::<Result<Vec<_>>>();
    let val_auc = roc_auc(&score(&sv)?, &score(&uv)?);
    Ok(EstimatorFit {
        estimator: StabilityEstimator { gmm, te: report.te },
        report,
        val_auc,
        train_counts: (st.len(), ut.len()),
        val_counts: (sv.len(), uv.len()),
    })
}
