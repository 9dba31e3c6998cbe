use std::f64::consts::PI;

use super::kmeans::kmeans_init;
use super::linalg::{cholesky, from_cholesky, log_det, mahalanobis_sq};
use crate::error::{Error, Result};
use crate::nn::Container;

pub const DEFAULT_REG_EPS: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop once the total log-likelihood improves by less than this.
    pub tol: f64,
    pub reg_eps: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            reg_eps: DEFAULT_REG_EPS,
        }
    }
}

/// Full-covariance Gaussian mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Lower Cholesky factors of the (regularized) covariances, row-major.
    pub chol: Vec<Vec<f64>>,
    pub reg_eps: f64,
    /// Total log-likelihood of the training data after initialization and
    /// after every EM iteration.
    pub log_likelihood_trace: Vec<f64>,
}

impl GmmModel {
    /// Build a model from explicit parameters.
    pub fn from_parts(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<Vec<f64>>) -> Result<Self> {
        let m = weights.len();
        if m == 0 || means.len() != m || covariances.len() != m {
            return Err(Error::dim(
                "GmmModel::from_parts",
                format!("{m} weights, {} means, {} covariances", means.len(), covariances.len()),
            ));
        }
        let dim = means[0].len();
        let mut chol = Vec::with_capacity(m);
        for (k, (mu, cov)) in means.iter().zip(&covariances).enumerate() {
            if mu.len() != dim || cov.len() != dim * dim {
                return Err(Error::dim("GmmModel::from_parts", format!("component {k} has wrong size")));
            }
            chol.push(cholesky(cov, dim).ok_or_else(|| Error::Numerical {
                component: k,
                reason: "covariance is not positive definite".into(),
            })?);
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Contract(format!("mixture weights must sum to 1, got {total}")));
        }
        Ok(Self {
            dim,
            weights,
            means,
            chol,
            reg_eps: 0.0,
            log_likelihood_trace: Vec::new(),
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn covariance(&self, k: usize) -> Vec<f64> {
        from_cholesky(&self.chol[k], self.dim)
    }

    /// `ln(π_k) + ln N(x | μ_k, Σ_k)` for every component.
    fn component_log_terms(&self, x: &[f64], scratch: &mut Vec<f64>, resid: &mut Vec<f64>, out: &mut Vec<f64>) {
        out.clear();
        let d = self.dim;
        let norm = -0.5 * d as f64 * (2.0 * PI).ln();
        for k in 0..self.components() {
            resid.clear();
            resid.extend(x.iter().zip(&self.means[k]).map(|(a, b)| a - b));
            let m2 = mahalanobis_sq(&self.chol[k], d, resid, scratch);
            let ln_pdf = norm - 0.5 * log_det(&self.chol[k], d) - 0.5 * m2;
            out.push(self.weights[k].ln() + ln_pdf);
        }
    }

    /// Natural log of the mixture density at `x`.
    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::dim(
                "gmm_likelihood",
                format!("model dimension {}, feature dimension {}", self.dim, x.len()),
            ));
        }
        let (mut s, mut r, mut t) = (Vec::new(), Vec::new(), Vec::new());
        self.component_log_terms(x, &mut s, &mut r, &mut t);
        Ok(log_sum_exp(&t))
    }

    /// Mixture density `Σ π_i N(x | μ_i, Σ_i)`, evaluated in log space.
    pub fn likelihood(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_likelihood(x)?.exp())
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new("gmm");
        c.set_meta("components", self.components());
        c.set_meta("dim", self.dim);
        c.set_meta("reg_eps", self.reg_eps);
        c.push_vec("weights", &self.weights);
        let means: Vec<f64> = self.means.iter().flatten().copied().collect();
        c.push("means", vec![self.components(), self.dim], means);
        let chol: Vec<f64> = self.chol.iter().flatten().copied().collect();
        c.push("cholesky", vec![self.components(), self.dim, self.dim], chol);
        c.push_vec("log_likelihood_trace", &self.log_likelihood_trace);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("gmm")?;
        let m: usize = c.meta_parse("components")?;
        let dim: usize = c.meta_parse("dim")?;
        let reg_eps: f64 = c.meta_parse("reg_eps")?;
        let weights = c.vector("weights", m)?;
        let means_t = c.tensor("means")?;
        let chol_t = c.tensor("cholesky")?;
        if means_t.shape != [m, dim] || chol_t.shape != [m, dim, dim] {
            return Err(Error::Model("gmm tensor shapes disagree with meta".into()));
        }
        let means = means_t.data.chunks(dim.max(1)).map(<[f64]>::to_vec).collect();
        let chol: Vec<Vec<f64>> = chol_t.data.chunks((dim * dim).max(1)).map(<[f64]>::to_vec).collect();
        for (k, l) in chol.iter().enumerate() {
            if (0..dim).any(|i| !(l[i * dim + i] > 0.0)) {
                return Err(Error::Numerical {
                    component: k,
                    reason: "stored Cholesky factor has a non-positive diagonal".into(),
                });
            }
        }
        let trace = c.tensor("log_likelihood_trace")?.data.clone();
        Ok(Self {
            dim,
            weights,
            means,
            chol,
            reg_eps,
            log_likelihood_trace: trace,
        })
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Fit an `m`-component mixture with EM, initialized from k-means.
pub fn em_fit(data: &[Vec<f64>], m: usize, seed: u64, config: EmConfig) -> Result<GmmModel> {
    if m == 0 {
        return Err(Error::Data("mixture needs at least one component".into()));
    }
    if data.len() < 5 * m {
        return Err(Error::Data(format!(
            "EM with {m} components needs at least {} points, got {}",
            5 * m,
            data.len()
        )));
    }
    let dim = data[0].len();
    if let Some(i) = data.iter().position(|x| x.len() != dim || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data(format!("row {i} has wrong dimension or non-finite values")));
    }
    let n = data.len();

    let km = kmeans_init(data, m, seed)?;
    let mut resp = vec![0.0; n * m];
    for (i, &k) in km.assignments.iter().enumerate() {
        resp[i * m + k] = 1.0;
    }
    let mut model = GmmModel {
        dim,
        weights: vec![0.0; m],
        means: vec![vec![0.0; dim]; m],
        chol: vec![Vec::new(); m],
        reg_eps: config.reg_eps,
        log_likelihood_trace: Vec::new(),
    };
    m_step(data, &resp, &mut model)?;
    let mut ll = e_step(data, &model, &mut resp);
    model.log_likelihood_trace.push(ll);

    for _ in 0..config.max_iter {
        m_step(data, &resp, &mut model)?;
        let next = e_step(data, &model, &mut resp);
        model.log_likelihood_trace.push(next);
        let improved = next - ll;
        ll = next;
        if improved < config.tol {
            break;
        }
    }
    Ok(model)
}

/// Responsibilities via log-sum-exp; returns the total log-likelihood.
fn e_step(data: &[Vec<f64>], model: &GmmModel, resp: &mut [f64]) -> f64 {
    let m = model.components();
    let (mut s, mut r, mut terms) = (Vec::new(), Vec::new(), Vec::with_capacity(m));
    let mut total = 0.0;
    for (i, x) in data.iter().enumerate() {
        model.component_log_terms(x, &mut s, &mut r, &mut terms);
        let lse = log_sum_exp(&terms);
        total += lse;
        for k in 0..m {
            resp[i * m + k] = (terms[k] - lse).exp();
        }
    }
    total
}

fn m_step(data: &[Vec<f64>], resp: &[f64], model: &mut GmmModel) -> Result<()> {
    let m = model.components();
    let d = model.dim;
    let n = data.len();
    for k in 0..m {
        let nk: f64 = (0..n).map(|i| resp[i * m + k]).sum();
        if !(nk > 1e-12) {
            return Err(Error::Numerical {
                component: k,
                reason: format!("component lost all responsibility (N_k = {nk:e})"),
            });
        }
        let mut mean = vec![0.0; d];
        for (i, x) in data.iter().enumerate() {
            let r = resp[i * m + k];
            for (mv, xv) in mean.iter_mut().zip(x) {
                *mv += r * xv;
            }
        }
        mean.iter_mut().for_each(|v| *v /= nk);

        let mut cov = vec![0.0; d * d];
        let mut diff = vec![0.0; d];
        for (i, x) in data.iter().enumerate() {
            let r = resp[i * m + k];
            if r == 0.0 {
                continue;
            }
            for (dv, (xv, mv)) in diff.iter_mut().zip(x.iter().zip(&mean)) {
                *dv = xv - mv;
            }
            for a in 0..d {
                let ra = r * diff[a];
                let row = &mut cov[a * d..a * d + a + 1];
                for (b, c) in row.iter_mut().enumerate() {
                    *c += ra * diff[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..=a {
                let v = cov[a * d + b] / nk;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
            cov[a * d + a] += model.reg_eps;
        }
        model.chol[k] = cholesky(&cov, d).ok_or_else(|| Error::Numerical {
            component: k,
            reason: "covariance singular despite regularization".into(),
        })?;
        model.means[k] = mean;
        model.weights[k] = nk / n as f64;
    }
    // keep Σπ = 1 to the last bit the arithmetic allows
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand::Rng;

    #[test]
    fn standard_normal_peak() {
        let g = GmmModel::from_parts(vec![1.0], vec![vec![0.0]], vec![vec![1.0]]).unwrap();
        assert!((g.likelihood(&[0.0]).unwrap() - 0.398942280401).abs() < 1e-12);
        assert!(matches!(g.likelihood(&[0.0, 1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn duplicated_component_collapses() {
        let cov = vec![2.0, 0.3, 0.3, 1.0];
        let one = GmmModel::from_parts(vec![1.0], vec![vec![1.0, -1.0]], vec![cov.clone()]).unwrap();
        let two = GmmModel::from_parts(
            vec![0.5, 0.5],
            vec![vec![1.0, -1.0], vec![1.0, -1.0]],
            vec![cov.clone(), cov],
        )
        .unwrap();
        for x in [[0.0, 0.0], [1.0, -1.0], [3.0, 2.0]] {
            let a = one.likelihood(&x).unwrap();
            let b = two.likelihood(&x).unwrap();
            assert!((a - b).abs() <= 1e-14 * a);
        }
    }

    #[test]
    fn refit_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let c = if i % 2 == 0 { 0.0 } else { 5.0 };
                vec![c + rng.gen::<f64>(), c - rng.gen::<f64>()]
            })
            .collect();
        let a = em_fit(&data, 2, 9, EmConfig::default()).unwrap();
        let b = em_fit(&data, 2, 9, EmConfig::default()).unwrap();
        assert_eq!(a.to_container().to_bytes(), b.to_container().to_bytes());
        let back = GmmModel::from_container(&a.to_container()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn needs_five_points_per_component() {
        let data: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        assert!(matches!(em_fit(&data, 2, 0, EmConfig::default()), Err(Error::Data(_))));
    }
}
