//! Single-head scaled dot-product self-attention:
//! `Y = softmax(Q Kᵀ / sqrt(d_k)) V` with `Q = X W_Q`, `K = X W_K`, `V = X W_V`.

use rand::Rng;

use super::matrix::{softmax_rows, Matrix};
use super::init_uniform;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub d_k: usize,
}

impl AttentionParams {
    pub fn new(w_q: Matrix, w_k: Matrix, w_v: Matrix) -> Result<Self> {
        let d_model = w_q.rows();
        let d_k = w_q.cols();
        if d_k == 0 {
            return Err(Error::dim("AttentionParams", "d_k must be >= 1"));
        }
        for (name, w) in [("W_K", &w_k), ("W_V", &w_v)] {
            if w.shape() != (d_model, d_k) {
                return Err(Error::dim(
                    "AttentionParams",
                    format!("{name} is {:?}, W_Q is {:?}", w.shape(), (d_model, d_k)),
                ));
            }
        }
        Ok(Self { w_q, w_k, w_v, d_k })
    }

    pub fn init<R: Rng + ?Sized>(d_model: usize, d_k: usize, rng: &mut R) -> Self {
        Self {
            w_q: init_uniform(d_model, d_k, d_model, rng),
            w_k: init_uniform(d_model, d_k, d_model, rng),
            w_v: init_uniform(d_model, d_k, d_model, rng),
            d_k,
        }
    }

    pub fn d_model(&self) -> usize {
        self.w_q.rows()
    }
}

/// Intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub struct AttentionCache {
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    weights: Matrix,
    params: AttentionParams,
}

impl AttentionCache {
    /// Softmax attention weights, one row per query token.
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionGrads {
    pub dx: Matrix,
    pub dw_q: Matrix,
    pub dw_k: Matrix,
    pub dw_v: Matrix,
}

pub fn attention_forward(x: &Matrix, p: &AttentionParams) -> Result<(Matrix, AttentionCache)> {
    if x.cols() != p.d_model() {
        return Err(Error::dim(
            "attention_forward",
            format!("X is {:?} but W_Q expects d_model = {}", x.shape(), p.d_model()),
        ));
    }
    let q = x.matmul(&p.w_q)?;
    let k = x.matmul(&p.w_k)?;
    let v = x.matmul(&p.w_v)?;
    let mut scores = q.matmul_t(&k)?;
    scores.scale(1.0 / (p.d_k as f64).sqrt());
    let weights = softmax_rows(&scores);
    let y = weights.matmul(&v)?;
    let cache = AttentionCache {
        x: x.clone(),
        q,
        k,
        v,
        weights,
        params: p.clone(),
    };
    Ok((y, cache))
}

pub fn attention_backward(dy: &Matrix, cache: &AttentionCache) -> Result<AttentionGrads> {
    let expected = (cache.x.rows(), cache.params.d_k);
    if dy.shape() != expected {
        return Err(Error::Contract(format!(
            "attention_backward: dY is {:?}, cache was produced for output {:?}",
            dy.shape(),
            expected
        )));
    }
    let inv_sqrt = 1.0 / (cache.params.d_k as f64).sqrt();

    let dv = cache.weights.t_matmul(dy)?;
    let da = dy.matmul_t(&cache.v)?;
    // softmax Jacobian, row by row
    let mut ds = Matrix::zeros(da.rows(), da.cols());
    for i in 0..da.rows() {
        let a = cache.weights.row(i);
        let g = da.row(i);
        let dot: f64 = a.iter().zip(g).map(|(x, y)| x * y).sum();
        for (j, out) in ds.row_mut(i).iter_mut().enumerate() {
            *out = a[j] * (g[j] - dot) * inv_sqrt;
        }
    }
    let dq = ds.matmul(&cache.k)?;
    let dk = ds.t_matmul(&cache.q)?;

    let dw_q = cache.x.t_matmul(&dq)?;
    let dw_k = cache.x.t_matmul(&dk)?;
    let dw_v = cache.x.t_matmul(&dv)?;
    let mut dx = dq.matmul_t(&cache.params.w_q)?;
    dx.add_assign(&dk.matmul_t(&cache.params.w_k)?)?;
    dx.add_assign(&dv.matmul_t(&cache.params.w_v)?)?;
    Ok(AttentionGrads { dx, dw_q, dw_k, dw_v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_token_returns_its_value_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = AttentionParams::init(4, 3, &mut rng);
        let x = Matrix::from_rows(&[vec![0.3, -1.0, 2.0, 0.5]]).unwrap();
        let (y, cache) = attention_forward(&x, &p).unwrap();
        assert_eq!(cache.weights().as_slice(), &[1.0]);
        assert_eq!(y, x.matmul(&p.w_v).unwrap());
    }

    #[test]
    fn zero_keys_average_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = AttentionParams::init(3, 2, &mut rng);
        p.w_k = Matrix::zeros(3, 2);
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 4.0], vec![0.5, 0.5, 0.5]])
            .unwrap();
        let (y, _) = attention_forward(&x, &p).unwrap();
        let mean_v = x.matmul(&p.w_v).unwrap().mean_rows();
        for i in 0..3 {
            for (a, b) in y.row(i).iter().zip(&mean_v) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hand_evaluated_two_token_case() {
        // X = I2 with W_Q = W_K = [[1],[0]], W_V = [[2],[4]] gives
        // Q = K = [[1],[0]] and V = [[2],[4]].
        let x = Matrix::identity(2);
        let wq = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let wv = Matrix::from_rows(&[vec![2.0], vec![4.0]]).unwrap();
        let p = AttentionParams::new(wq.clone(), wq, wv).unwrap();
        let (y, cache) = attention_forward(&x, &p).unwrap();
        // independent scalar evaluation
        let (e1, e0) = (1.0f64.exp(), 0.0f64.exp());
        let w0 = e1 / (e1 + e0);
        let y0 = w0 * 2.0 + (1.0 - w0) * 4.0;
        assert!((cache.weights()[(0, 0)] - 0.7311).abs() < 1e-4);
        assert!((cache.weights()[(0, 1)] - 0.2689).abs() < 1e-4);
        assert!((y[(0, 0)] - y0).abs() < 1e-15);
        assert!((y[(0, 0)] - 2.5379).abs() < 1e-4);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = AttentionParams::init(4, 2, &mut rng);
        let x = super::super::init_uniform(3, 4, 1, &mut rng);
        let (_, cache) = attention_forward(&x, &p).unwrap();
        let g = attention_backward(&Matrix::zeros(3, 2), &cache).unwrap();
        for m in [&g.dx, &g.dw_q, &g.dw_k, &g.dw_v] {
            assert!(m.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = AttentionParams::init(4, 2, &mut rng);
        assert!(matches!(
            attention_forward(&Matrix::zeros(2, 3), &p),
            Err(Error::Dimension { .. })
        ));
        let (_, cache) = attention_forward(&Matrix::zeros(2, 4), &p).unwrap();
        assert!(matches!(
            attention_backward(&Matrix::zeros(3, 2), &cache),
            Err(Error::Contract(_))
        ));
        assert!(AttentionParams::new(Matrix::zeros(4, 2), Matrix::zeros(4, 3), Matrix::zeros(4, 2)).is_err());
    }
}
