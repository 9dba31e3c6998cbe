//! Initial-grasp generator: a behavior-cloned MLP from `(S, θ)` at first
//! contact to the demonstrated grasp angle.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{split_indices, DatasetKind, Episode};
use crate::error::{Error, Result};
pub use crate::fit::TrainHistory;
use crate::fit::{batch_gradient, standardizer};
use crate::nn::{sgd_step, Container, Matrix, Mlp};
use crate::par::ExecMode;
use crate::sim::{THETA_MAX_DEG, THETA_MIN_DEG};
use crate::tactile::TAXELS;

pub const GENERATOR_INPUTS: usize = TAXELS + 1;
const MIN_SAMPLES: usize = 10;

/// One demonstration: reading and current angle, labeled with the angle the
/// expert settled on.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspSample {
    pub s: [f64; TAXELS],
    pub theta_deg: f64,
    pub a_deg: f64,
}

impl GraspSample {
    fn input(&self) -> [f64; GENERATOR_INPUTS] {
        let mut x = [0.0; GENERATOR_INPUTS];
        x[..TAXELS].copy_from_slice(&self.s);
        x[TAXELS] = self.theta_deg;
        x
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub mode: ExecMode,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch: 64,
            epochs: 50,
            hidden: vec![64, 64],
            mode: ExecMode::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorModel {
    pub mlp: Mlp,
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    /// Training-label mean; the network regresses `a - y_mean` in degrees.
    pub y_mean: f64,
}

impl GeneratorModel {
    fn standardize(&self, x: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.x_mean).zip(&self.x_std) {
            *o = (v - m) / s;
        }
    }

    fn design(&self, samples: &[&GraspSample]) -> Matrix {
        let mut m = Matrix::zeros(samples.len(), GENERATOR_INPUTS);
        for (r, s) in samples.iter().enumerate() {
            self.standardize(&s.input(), m.row_mut(r));
        }
        m
    }

    /// Unclamped prediction in degrees.
    fn raw(&self, samples: &[&GraspSample]) -> Result<Vec<f64>> {
        let y = self.mlp.predict(&self.design(samples))?;
        Ok(y.as_slice().iter().map(|v| self.y_mean + v).collect())
    }

    /// Predicted grasp angle, clamped to the actuator range.
    pub fn predict(&self, s: &[f64; TAXELS], theta_deg: f64) -> Result<f64> {
        let probe = GraspSample {
            s: *s,
            theta_deg,
            a_deg: 0.0,
        };
        let a = self.raw(&[&probe])?[0];
        if !a.is_finite() {
            return Err(Error::Model(format!("generator produced {a}")));
        }
        Ok(a.clamp(THETA_MIN_DEG, THETA_MAX_DEG))
    }

    /// Mean squared error in degrees² of the clamped predictions.
    pub fn mse(&self, data: &[GraspSample]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Data("mse over an empty set".into()));
        }
        let refs: Vec<&GraspSample> = data.iter().collect();
        let pred = self.raw(&refs)?;
        Ok(pred
            .iter()
            .zip(data)
            .map(|(p, s)| (p.clamp(THETA_MIN_DEG, THETA_MAX_DEG) - s.a_deg).powi(2))
            .sum::<f64>()
            / data.len() as f64)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new("generator");
        c.set_meta("y_mean", format!("{:e}", self.y_mean));
        c.push_vec("x_mean", &self.x_mean);
        c.push_vec("x_std", &self.x_std);
        self.mlp.write_to(&mut c, "mlp.");
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("generator")?;
        let y_mean: f64 = c.meta_parse("y_mean")?;
        if !y_mean.is_finite() {
            return Err(Error::Model(format!("bad label offset {y_mean}")));
        }
        let mlp = Mlp::read_from(c, "mlp.")?;
        if mlp.inputs() != GENERATOR_INPUTS || mlp.layers.last().map(|l| l.outputs()) != Some(1) {
            return Err(Error::Model("generator network must map 33 inputs to 1 output".into()));
        }
        Ok(Self {
            mlp,
            x_mean: c.vector("x_mean", GENERATOR_INPUTS)?,
            x_std: c.vector("x_std", GENERATOR_INPUTS)?,
            y_mean,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Demonstration samples from `gp` episodes: every in-contact frame,
/// labeled with the angle the episode settled on.
pub fn grasp_samples(episodes: &[Episode]) -> Vec<GraspSample> {
    let mut out = Vec::new();
    for ep in episodes.iter().filter(|e| e.header.kind == DatasetKind::Gp) {
        let Some(last) = ep.frames.last() else { continue };
        let a = last.theta_deg;
        out.extend(
            ep.frames
                .iter()
                .filter(|f| f.s.iter().any(|v| *v > 0.0))
                .map(|f| GraspSample {
                    s: f.s,
                    theta_deg: f.theta_deg,
                    a_deg: a,
                }),
        );
    }
    out
}

/// Start from the constant-zero function so the head does not begin with a
/// random dependence on irrelevant inputs that SGD then has to unlearn.
pub(crate) fn zero_output_layer(mlp: &mut Mlp) {
    if let Some(l) = mlp.layers.last_mut() {
        l.w.as_mut_slice().fill(0.0);
        l.b.fill(0.0);
    }
}

/// `(1/2N)·Σ(â - a)²` in degrees² over `idx`, unclamped.
fn loss_on(model: &GeneratorModel, data: &[GraspSample], idx: &[usize]) -> Result<f64> {
    let refs: Vec<&GraspSample> = idx.iter().map(|&i| &data[i]).collect();
    let pred = model.raw(&refs)?;
    let sse: f64 = pred.iter().zip(&refs).map(|(p, s)| (p - s.a_deg).powi(2)).sum();
    Ok(sse / (2.0 * idx.len() as f64))
}

/// Fit the generator by minibatch SGD on the MSE loss.
///
/// The data are shuffled by `seed` and split 8:2; input standardization is
/// estimated on the training split only. The network regresses the label
/// minus its training mean, starting from a zero output layer.
pub fn train_generator(
    data: &[GraspSample],
    seed: u64,
    config: &GeneratorConfig,
) -> Result<(GeneratorModel, TrainHistory)> {
    if data.len() < MIN_SAMPLES {
        return Err(Error::Data(format!(
            "generator needs at least {MIN_SAMPLES} samples, got {}",
            data.len()
        )));
    }
    if config.batch == 0 {
        return Err(Error::Validation {
            field: "batch",
            reason: "must be > 0".into(),
        });
    }
    for (i, s) in data.iter().enumerate() {
        if !(THETA_MIN_DEG..=THETA_MAX_DEG).contains(&s.a_deg) || s.s.iter().any(|v| *v < 0.0) {
            return Err(Error::Data(format!("sample {i} violates a ∈ [0, 90] or S ≥ 0")));
        }
    }
    let (mut train, val) = split_indices(data.len(), seed)?;
    let inputs: Vec<[f64; GENERATOR_INPUTS]> = data.iter().map(GraspSample::input).collect();
    let (x_mean, x_std) = standardizer(train.iter().map(|&i| inputs[i].as_slice()), GENERATOR_INPUTS);
    let y_mean = train.iter().map(|&i| data[i].a_deg).sum::<f64>() / train.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6e_5f67_656e);
    let mut sizes = vec![GENERATOR_INPUTS];
    sizes.extend(&config.hidden);
    sizes.push(1);
    let mut mlp = Mlp::init(&sizes, &mut rng);
    zero_output_layer(&mut mlp);
    let mut model = GeneratorModel {
        mlp,
        x_mean,
        x_std,
        y_mean,
    };
    let n_params = model.mlp.param_count();
    let mut params = Vec::with_capacity(n_params);
    model.mlp.flatten_into(&mut params);

    let mut history = TrainHistory::default();
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(config.batch) {
            let (_, mut grad) = batch_gradient(config.mode, batch, n_params, |chunk| {
                let refs: Vec<&GraspSample> = chunk.iter().map(|&i| &data[i]).collect();
                let (y, cache) = model.mlp.forward(&model.design(&refs))?;
                let mut dy = Matrix::zeros(refs.len(), 1);
                let mut sse = 0.0;
                for (r, s) in refs.iter().enumerate() {
                    let e = y[(r, 0)] - (s.a_deg - model.y_mean);
                    sse += e * e;
                    dy[(r, 0)] = e;
                }
                let grads = model.mlp.backward(&dy, &cache)?;
                let mut flat = Vec::with_capacity(n_params);
                grads.flatten_into(&mut flat);
                Ok((sse, flat))
            })?;
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            sgd_step(&mut params, &grad, config.lr, step)?;
            model.mlp.unflatten_from(&params);
            step += 1;
        }
        let tl = loss_on(&model, data, &train)?;
        let vl = loss_on(&model, data, &val)?;
        if !(tl.is_finite() && vl.is_finite()) {
            return Err(Error::Training {
                stage: "generator",
                index: epoch,
                reason: format!("loss became non-finite (train {tl}, val {vl})"),
            });
        }
        history.train_loss.push(tl);
        history.val_loss.push(vl);
    }
    Ok((model, history))
}
