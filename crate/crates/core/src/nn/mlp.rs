use rand::Rng;

use super::container::Container;
use super::init_uniform;
use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Affine layer `y = act(x W + b)` with `W` shaped `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub act: Activation,
}

impl Dense {
    pub fn new(w: Matrix, b: Vec<f64>, act: Activation) -> Result<Self> {
        if b.len() != w.cols() {
            return Err(Error::dim(
                "Dense::new",
                format!("bias has {} entries, W has {} outputs", b.len(), w.cols()),
            ));
        }
        Ok(Self { w, b, act })
    }

    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, act: Activation, rng: &mut R) -> Self {
        let w = init_uniform(inputs, outputs, inputs, rng);
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let b = (0..outputs).map(|_| rng.gen_range(-bound..bound)).collect();
        Self { w, b, act }
    }

    pub fn inputs(&self) -> usize {
        self.w.rows()
    }

    pub fn outputs(&self) -> usize {
        self.w.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads {
    pub dw: Matrix,
    pub db: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Post-activation output of each layer.
    outputs: Vec<Matrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub dx: Matrix,
    pub layers: Vec<DenseGrads>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::dim(
                    "Mlp::new",
                    format!(
                        "layer {i} outputs {} but layer {} takes {}",
                        pair[0].outputs(),
                        i + 1,
                        pair[1].inputs()
                    ),
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Build `sizes[0] → … → sizes[n]` with relu between and identity at the end.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let n = sizes.len().saturating_sub(1);
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { Activation::Identity } else { Activation::Relu };
                Dense::init(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, Dense::inputs)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if h.cols() != layer.inputs() {
                return Err(Error::dim(
                    "mlp_forward",
                    format!("layer {i} expects {} inputs, got {:?}", layer.inputs(), h.shape()),
                ));
            }
            let mut z = h.matmul(&layer.w)?;
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.b) {
                    *v += b;
                    if layer.act == Activation::Relu && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            cache.inputs.push(h);
            h = z;
            cache.outputs.push(h.clone());
        }
        Ok((h, cache))
    }

    /// Forward without keeping intermediates.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.0)
    }

    pub fn backward(&self, dy: &Matrix, cache: &MlpCache) -> Result<MlpGrads> {
        if cache.outputs.len() != self.layers.len() {
            return Err(Error::Contract("mlp_backward: cache from a different network".into()));
        }
        let last = cache.outputs.last().map(Matrix::shape);
        if last != Some(dy.shape()) {
            return Err(Error::Contract(format!(
                "mlp_backward: dY is {:?}, forward output was {:?}",
                dy.shape(),
                last
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = dy.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.act == Activation::Relu {
                let out = &cache.outputs[i];
                for (gv, ov) in g.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    if *ov <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let dw = cache.inputs[i].t_matmul(&g)?;
            let db = g.mean_rows().iter().map(|v| v * g.rows() as f64).collect();
            let dx = g.matmul_t(&layer.w)?;
            grads.push(DenseGrads { dw, db });
            g = dx;
        }
        grads.reverse();
        Ok(MlpGrads { dx: g, layers: grads })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.as_slice().len() + l.b.len()).sum()
    }

    /// Append parameters in layer order (W then b).
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(&l.b);
        }
    }

    /// Read parameters written by [`Mlp::flatten_into`]; returns values consumed.
    pub fn unflatten_from(&mut self, src: &[f64]) -> usize {
        let mut at = 0;
        for l in &mut self.layers {
            let n = l.w.as_slice().len();
            l.w.as_mut_slice().copy_from_slice(&src[at..at + n]);
            at += n;
            let nb = l.b.len();
            l.b.copy_from_slice(&src[at..at + nb]);
            at += nb;
        }
        at
    }
}

impl Mlp {
    /// Store layers as `{prefix}{i}.w` / `{prefix}{i}.b` tensors.
    pub fn write_to(&self, c: &mut Container, prefix: &str) {
        c.set_meta(&format!("{prefix}layers"), self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            c.set_meta(&format!("{prefix}{i}.act"), l.act.as_str());
            c.push_matrix(format!("{prefix}{i}.w"), &l.w);
            c.push_vec(format!("{prefix}{i}.b"), &l.b);
        }
    }

    pub fn read_from(c: &Container, prefix: &str) -> Result<Self> {
        let n: usize = c.meta_parse(&format!("{prefix}layers"))?;
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let act_s = c.meta(&format!("{prefix}{i}.act"))?;
            let act = Activation::parse(act_s)
                .ok_or_else(|| Error::Model(format!("unknown activation {act_s:?} in layer {i}")))?;
            let w = c.matrix(&format!("{prefix}{i}.w"))?;
            let b = c.vector(&format!("{prefix}{i}.b"), w.cols())?;
            layers.push(Dense::new(w, b, act).map_err(|e| Error::Model(e.to_string()))?);
        }
        Mlp::new(layers).map_err(|e| Error::Model(e.to_string()))
    }
}

impl MlpGrads {
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.dw.as_slice());
            out.extend_from_slice(&l.db);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_through() {
        let net = Mlp::new(vec![Dense::new(Matrix::identity(3), vec![0.0; 3], Activation::Identity).unwrap()])
            .unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.5]]).unwrap();
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn relu_clips_negatives() {
        let net = Mlp::new(vec![Dense::new(Matrix::identity(2), vec![0.0; 2], Activation::Relu).unwrap()]).unwrap();
        let x = Matrix::from_rows(&[vec![-1.0, 2.0]]).unwrap();
        assert_eq!(net.predict(&x).unwrap().as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn mismatched_layers_are_rejected() {
        let a = Dense::new(Matrix::zeros(3, 4), vec![0.0; 4], Activation::Relu).unwrap();
        let b = Dense::new(Matrix::zeros(5, 1), vec![0.0], Activation::Identity).unwrap();
        assert!(matches!(Mlp::new(vec![a, b]), Err(Error::Dimension { .. })));
        let net = Mlp::new(vec![Dense::new(Matrix::zeros(3, 1), vec![0.0], Activation::Identity).unwrap()]).unwrap();
        assert!(matches!(net.forward(&Matrix::zeros(1, 2)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn flatten_round_trip() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::init(&[4, 5, 1], &mut rng);
        let mut flat = Vec::new();
        net.flatten_into(&mut flat);
        assert_eq!(flat.len(), net.param_count());
        let mut other = Mlp::init(&[4, 5, 1], &mut rng);
        assert_eq!(other.unflatten_from(&flat), flat.len());
        assert_eq!(other, net);
    }
}
