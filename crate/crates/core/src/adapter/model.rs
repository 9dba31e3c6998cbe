use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::window::{make_token, Token, WindowBuffer, TOKEN_DIM, WINDOW};
use crate::data::{split_indices, DatasetKind, Episode};
use crate::error::{Error, Result};
use crate::fit::{batch_gradient, standardizer, TrainHistory};
use crate::generator::zero_output_layer;
use crate::nn::{
    adam_step, attention_backward, attention_forward, init_uniform, AdamState, AttentionCache, AttentionParams,
    Container, Matrix, Mlp, MlpCache,
};
use crate::par::ExecMode;
use crate::tactile::TAXELS;

/// Largest correction per decision, degrees.
pub const MAX_DELTA_DEG: f64 = 5.0;
pub const MIN_WINDOWS: usize = 50;

/// One adaptation record: tactile change, reading, angle and the expert's
/// angle correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptSample {
    pub ds: [f64; TAXELS],
    pub s: [f64; TAXELS],
    pub theta_deg: f64,
    pub dtheta_deg: f64,
}

impl AdaptSample {
    pub fn token(&self) -> Token {
        make_token(&self.ds, &self.s, self.theta_deg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdapterConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Stacked attention layers.
    pub layers: usize,
    pub d_k: usize,
    pub hidden: usize,
    /// A training window ends on every `stride`-th sample of a sequence.
    pub stride: usize,
    pub mode: ExecMode,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch: 64,
            epochs: 100,
            layers: 2,
            d_k: 16,
            hidden: 64,
            stride: 8,
            mode: ExecMode::default(),
        }
    }
}

/// Self-attention followed by an output projection back to `d_model`, added
/// to the block input.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionBlock {
    pub attn: AttentionParams,
    /// `d_k × d_model`.
    pub w_o: Matrix,
}

/// Attention stack over a standardized token window, mean-pooled into an
/// MLP head that outputs the angle correction in degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterModel {
    pub tok_mean: Vec<f64>,
    pub tok_std: Vec<f64>,
    pub blocks: Vec<AttentionBlock>,
    pub head: Mlp,
}

pub(crate) struct ForwardCache {
    attn: Vec<AttentionCache>,
    ys: Vec<Matrix>,
    head: MlpCache,
}

impl AdapterModel {
    pub fn init(config: &AdapterConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = (0..config.layers)
            .map(|_| AttentionBlock {
                attn: AttentionParams::init(TOKEN_DIM, config.d_k, &mut rng),
                w_o: init_uniform(config.d_k, TOKEN_DIM, config.d_k, &mut rng),
            })
            .collect();
        let mut head = Mlp::init(&[TOKEN_DIM, config.hidden, 1], &mut rng);
        zero_output_layer(&mut head);
        Self {
            tok_mean: vec![0.0; TOKEN_DIM],
            tok_std: vec![1.0; TOKEN_DIM],
            blocks,
            head,
        }
    }

    fn standardize(&self, raw: &Matrix) -> Matrix {
        let mut x = raw.clone();
        for r in 0..x.rows() {
            for ((v, m), s) in x.row_mut(r).iter_mut().zip(&self.tok_mean).zip(&self.tok_std) {
                *v = (*v - m) / s;
            }
        }
        x
    }

    /// Unclamped output for a raw `WINDOW × TOKEN_DIM` window.
    pub(crate) fn forward(&self, raw: &Matrix) -> Result<(f64, ForwardCache)> {
        if raw.shape() != (WINDOW, TOKEN_DIM) {
            return Err(Error::dim(
                "adapter_forward",
                format!("window is {:?}, expected {:?}", raw.shape(), (WINDOW, TOKEN_DIM)),
            ));
        }
        let mut x = self.standardize(raw);
        let mut attn = Vec::with_capacity(self.blocks.len());
        let mut ys = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = attention_forward(&x, &b.attn)?;
            x.add_assign(&y.matmul(&b.w_o)?)?;
            attn.push(c);
            ys.push(y);
        }
        let pooled = Matrix::from_vec(1, TOKEN_DIM, x.mean_rows())?;
        let (out, head) = self.head.forward(&pooled)?;
        Ok((out[(0, 0)], ForwardCache { attn, ys, head }))
    }

    /// Gradient of `dy · output` w.r.t. all parameters, in [`Self::flatten_into`] order.
    pub(crate) fn backward(&self, dy: f64, cache: &ForwardCache) -> Result<Vec<f64>> {
        let hg = self.head.backward(&Matrix::from_vec(1, 1, vec![dy])?, &cache.head)?;
        let mut dx = Matrix::zeros(WINDOW, TOKEN_DIM);
        let inv_t = 1.0 / WINDOW as f64;
        for r in 0..WINDOW {
            for (d, g) in dx.row_mut(r).iter_mut().zip(hg.dx.row(0)) {
                *d = g * inv_t;
            }
        }
        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate().rev() {
            let dw_o = cache.ys[i].t_matmul(&dx)?;
            let dyb = dx.matmul_t(&b.w_o)?;
            let g = attention_backward(&dyb, &cache.attn[i])?;
            dx.add_assign(&g.dx)?;
            block_grads.push((g.dw_q, g.dw_k, g.dw_v, dw_o));
        }
        block_grads.reverse();
        let mut flat = Vec::with_capacity(self.param_count());
        for (q, k, v, o) in &block_grads {
            for m in [q, k, v, o] {
                flat.extend_from_slice(m.as_slice());
            }
        }
        hg.flatten_into(&mut flat);
        Ok(flat)
    }

    pub fn param_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| 3 * b.attn.w_q.as_slice().len() + b.w_o.as_slice().len())
            .sum::<usize>()
            + self.head.param_count()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for b in &self.blocks {
            for m in [&b.attn.w_q, &b.attn.w_k, &b.attn.w_v, &b.w_o] {
                out.extend_from_slice(m.as_slice());
            }
        }
        self.head.flatten_into(out);
    }

    pub fn unflatten_from(&mut self, src: &[f64]) {
        let mut at = 0;
        for b in &mut self.blocks {
            for m in [&mut b.attn.w_q, &mut b.attn.w_k, &mut b.attn.w_v, &mut b.w_o] {
                let n = m.as_slice().len();
                m.as_mut_slice().copy_from_slice(&src[at..at + n]);
                at += n;
            }
        }
        self.head.unflatten_from(&src[at..]);
    }

    /// Unclamped output in degrees for a raw window matrix.
    pub fn raw_output(&self, window: &Matrix) -> Result<f64> {
        Ok(self.forward(window)?.0)
    }

    /// Angle correction for the window, clamped to `±MAX_DELTA_DEG`.
    pub fn predict(&self, window: &WindowBuffer) -> Result<f64> {
        let y = self.raw_output(&window.to_matrix())?;
        if !y.is_finite() {
            return Err(Error::Model(format!("adapter produced {y}")));
        }
        Ok(y.clamp(-MAX_DELTA_DEG, MAX_DELTA_DEG))
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new("adapter");
        c.set_meta("blocks", self.blocks.len());
        c.set_meta("window", WINDOW);
        c.push_vec("tok_mean", &self.tok_mean);
        c.push_vec("tok_std", &self.tok_std);
        for (i, b) in self.blocks.iter().enumerate() {
            c.push_matrix(format!("block{i}.w_q"), &b.attn.w_q);
            c.push_matrix(format!("block{i}.w_k"), &b.attn.w_k);
            c.push_matrix(format!("block{i}.w_v"), &b.attn.w_v);
            c.push_matrix(format!("block{i}.w_o"), &b.w_o);
        }
        self.head.write_to(&mut c, "head.");
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("adapter")?;
        let window: usize = c.meta_parse("window")?;
        if window != WINDOW {
            return Err(Error::Model(format!("adapter window {window}, expected {WINDOW}")));
        }
        let n: usize = c.meta_parse("blocks")?;
        let mut blocks = Vec::with_capacity(n);
        let model_err = |e: Error| Error::Model(e.to_string());
        for i in 0..n {
            let attn = AttentionParams::new(
                c.matrix(&format!("block{i}.w_q"))?,
                c.matrix(&format!("block{i}.w_k"))?,
                c.matrix(&format!("block{i}.w_v"))?,
            )
            .map_err(model_err)?;
            let w_o = c.matrix(&format!("block{i}.w_o"))?;
            if attn.d_model() != TOKEN_DIM || w_o.shape() != (attn.d_k, TOKEN_DIM) {
                return Err(Error::Model(format!("block {i} has inconsistent shapes")));
            }
            blocks.push(AttentionBlock { attn, w_o });
        }
        let head = Mlp::read_from(c, "head.")?;
        if head.inputs() != TOKEN_DIM || head.layers.last().map(|l| l.outputs()) != Some(1) {
            return Err(Error::Model("adapter head must map 34 inputs to 1 output".into()));
        }
        Ok(Self {
            tok_mean: c.vector("tok_mean", TOKEN_DIM)?,
            tok_std: c.vector("tok_std", TOKEN_DIM)?,
            blocks,
            head,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Adaptation sequences from `ga` episodes, one per episode.
pub fn adapt_sequences(episodes: &[Episode]) -> Vec<Vec<AdaptSample>> {
    episodes
        .iter()
        .filter(|e| e.header.kind == DatasetKind::Ga)
        .map(|e| {
            e.frames
                .iter()
                .map(|f| AdaptSample {
                    ds: f.ds,
                    s: f.s,
                    theta_deg: f.theta_deg,
                    dtheta_deg: f.dtheta_deg,
                })
                .collect()
        })
        .collect()
}

/// Training windows: one ending on every `stride`-th sample of each sequence.
pub fn assemble_windows(sequences: &[Vec<AdaptSample>], stride: usize) -> Vec<(Matrix, f64)> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    for seq in sequences {
        let mut buf = WindowBuffer::new();
        for (j, s) in seq.iter().enumerate() {
            buf.push_token(s.token());
            if j % stride == 0 {
                out.push((buf.to_matrix(), s.dtheta_deg));
            }
        }
    }
    out
}

fn loss_on(model: &AdapterModel, windows: &[(Matrix, f64)], idx: &[usize]) -> Result<f64> {
    let mut sse = 0.0;
    for &i in idx {
        let (w, label) = &windows[i];
        sse += (model.raw_output(w)? - label).powi(2);
    }
    Ok(sse / (2.0 * idx.len() as f64))
}

/// Mean squared error in degrees² of the clamped predictions on `windows`.
pub fn adapter_mse(model: &AdapterModel, windows: &[(Matrix, f64)]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Data("mse over an empty set".into()));
    }
    let mut sse = 0.0;
    for (w, label) in windows {
        sse += (model.raw_output(w)?.clamp(-MAX_DELTA_DEG, MAX_DELTA_DEG) - label).powi(2);
    }
    Ok(sse / windows.len() as f64)
}

/// Fit the adapter with Adam on the MSE loss over 8:2-split windows.
pub fn train_adapter(
    sequences: &[Vec<AdaptSample>],
    seed: u64,
    config: &AdapterConfig,
) -> Result<(AdapterModel, TrainHistory)> {
    let windows = assemble_windows(sequences, config.stride);
    train_adapter_on_windows(&windows, seed, config)
}

pub fn train_adapter_on_windows(
    windows: &[(Matrix, f64)],
    seed: u64,
    config: &AdapterConfig,
) -> Result<(AdapterModel, TrainHistory)> {
    if windows.len() < MIN_WINDOWS {
        return Err(Error::Data(format!(
            "adapter needs at least {MIN_WINDOWS} windows, got {}",
            windows.len()
        )));
    }
    if config.batch == 0 || config.layers == 0 || config.d_k == 0 {
        return Err(Error::Validation {
            field: "adapter config",
            reason: "batch, layers and d_k must be > 0".into(),
        });
    }
    if let Some(i) = windows.iter().position(|(w, l)| !l.is_finite() || !w.is_finite()) {
        return Err(Error::Data(format!("window {i} has non-finite values")));
    }
    let (mut train, val) = split_indices(windows.len(), seed)?;
    let mut model = AdapterModel::init(config, seed ^ 0x6164_6170_7465_72);
    let (m, s) = standardizer(
        train.iter().flat_map(|&i| (0..WINDOW).map(move |r| windows[i].0.row(r))),
        TOKEN_DIM,
    );
    model.tok_mean = m;
    model.tok_std = s;

    let n_params = model.param_count();
    let mut params = Vec::with_capacity(n_params);
    model.flatten_into(&mut params);
    let mut adam = AdamState::new(n_params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7368_7566);
    let mut history = TrainHistory::default();
    for epoch in 0..config.epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(config.batch) {
            let (_, mut grad) = batch_gradient(config.mode, batch, n_params, |chunk| {
                let mut sse = 0.0;
                let mut g = vec![0.0; n_params];
                for &i in chunk {
                    let (w, label) = &windows[i];
                    let (y, cache) = model.forward(w)?;
                    let e = y - label;
                    sse += e * e;
                    for (a, b) in g.iter_mut().zip(model.backward(e, &cache)?) {
                        *a += b;
                    }
                }
                Ok((sse, g))
            })?;
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            adam_step(&mut params, &grad, &mut adam, config.lr)?;
            model.unflatten_from(&params);
        }
        let tl = loss_on(&model, windows, &train)?;
        let vl = loss_on(&model, windows, &val)?;
        if !(tl.is_finite() && vl.is_finite()) {
            return Err(Error::Training {
                stage: "adapter",
                index: epoch,
                reason: format!("loss became non-finite (train {tl}, val {vl})"),
            });
        }
        history.train_loss.push(tl);
        history.val_loss.push(vl);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_window(rng: &mut ChaCha8Rng) -> Matrix {
        let data = (0..WINDOW * TOKEN_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(WINDOW, TOKEN_DIM, data).unwrap()
    }

    fn small_config() -> AdapterConfig {
        AdapterConfig {
            d_k: 4,
            hidden: 8,
            ..Default::default()
        }
    }

    #[test]
    fn zero_head_outputs_zero() {
        let m = AdapterModel::init(&AdapterConfig::default(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(m.raw_output(&random_window(&mut rng)).unwrap(), 0.0);
        assert_eq!(m.predict(&WindowBuffer::new()).unwrap(), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut m = AdapterModel::init(&small_config(), 5);
        // give the head non-zero weights so every path carries gradient
        let mut p = Vec::new();
        m.flatten_into(&mut p);
        for v in p.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
        m.unflatten_from(&p);
        let w = random_window(&mut rng);
        let (_, cache) = m.forward(&w).unwrap();
        let analytic = m.backward(1.0, &cache).unwrap();
        let h = 1e-5;
        for i in (0..p.len()).step_by(7) {
            let mut plus = p.clone();
            plus[i] += h;
            let mut minus = p.clone();
            minus[i] -= h;
            let mut mp = m.clone();
            mp.unflatten_from(&plus);
            let mut mm = m.clone();
            mm.unflatten_from(&minus);
            let fd = (mp.raw_output(&w).unwrap() - mm.raw_output(&w).unwrap()) / (2.0 * h);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-6);
            assert!((fd - analytic[i]).abs() / denom <= 1e-4, "param {i}: fd {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn too_few_windows() {
        let seq = vec![
            AdaptSample {
                ds: [0.0; TAXELS],
                s: [0.0; TAXELS],
                theta_deg: 10.0,
                dtheta_deg: 0.0,
            };
            40
        ];
        assert!(matches!(
            train_adapter(&[seq], 0, &AdapterConfig::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn zero_labels_stay_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let windows: Vec<_> = (0..80).map(|_| (random_window(&mut rng), 0.0)).collect();
        let cfg = AdapterConfig {
            epochs: 5,
            ..Default::default()
        };
        let (m, _) = train_adapter_on_windows(&windows, 1, &cfg).unwrap();
        let mean_abs =
            windows.iter().map(|(w, _)| m.raw_output(w).unwrap().abs()).sum::<f64>() / windows.len() as f64;
        assert!(mean_abs <= 0.05);
        let zero = m.predict(&WindowBuffer::new()).unwrap();
        assert!(zero.abs() <= 0.05);
    }

    #[test]
    fn deterministic_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let windows: Vec<_> = (0..60)
            .map(|_| {
                let w = random_window(&mut rng);
                let l = w.row(WINDOW - 1)[0];
                (w, l)
            })
            .collect();
        let cfg = AdapterConfig {
            epochs: 3,
            ..small_config()
        };
        let (a, ha) = train_adapter_on_windows(&windows, 9, &cfg).unwrap();
        let (b, hb) = train_adapter_on_windows(&windows, 9, &cfg).unwrap();
        assert_eq!(ha, hb);
        let bytes = a.to_container().to_bytes();
        assert_eq!(bytes, b.to_container().to_bytes());
        let back = AdapterModel::from_container(&Container::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn sequential_and_parallel_training_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let windows: Vec<_> = (0..64).map(|_| (random_window(&mut rng), rng.gen_range(0.0..2.0))).collect();
        let mk = |mode| AdapterConfig {
            epochs: 2,
            mode,
            ..small_config()
        };
        let a = train_adapter_on_windows(&windows, 2, &mk(ExecMode::Sequential)).unwrap();
        let b = train_adapter_on_windows(&windows, 2, &mk(ExecMode::Parallel)).unwrap();
        assert_eq!(a, b);
    }
}
