use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{argmax, cross_entropy_grad};
use super::NeuralError;
use crate::matrix::{Matrix, Real};
use crate::seed;

/// Dropout and batch-statistics behaviour of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Layer widths and dropout of a ReLU MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    /// Hidden widths; empty for a single linear layer.
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub dropout: f64,
}

impl MlpConfig {
    /// Two hidden layers of 256 and 128 units, dropout 0.3.
    pub fn reference(input_dim: usize, classes: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![256, 128],
            classes,
            dropout: 0.3,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.input_dim == 0 || self.classes == 0 || self.hidden.contains(&0) {
            return Err(NeuralError::InvalidConfig(format!("zero-width layer in {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NeuralError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    /// `(out, in)` shape of every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.push(self.classes);
        widths.windows(2).map(|w| (w[1], w[0])).collect()
    }
}

/// Affine layer `y = x Wᵀ + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub weights: Matrix<F>,
    pub bias: Vec<F>,
}

impl<F: Real> Linear<F> {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weights: Matrix::zeros(out, inp),
            bias: vec![F::ZERO; out],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    config: MlpConfig,
    layers: Vec<Linear<F>>,
    version: u64,
}

/// Cached activations of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    /// Input to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Matrix<F>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Matrix<F>>,
    /// Inverted-dropout multipliers (0 or 1/(1-p)) per hidden layer, Train mode only.
    masks: Vec<Option<Matrix<F>>>,
    logits: Matrix<F>,
    version: u64,
}

impl<F: Real> ForwardTrace<F> {
    pub fn logits(&self) -> &Matrix<F> {
        &self.logits
    }

    pub fn masks(&self) -> &[Option<Matrix<F>>] {
        &self.masks
    }
}

/// Gradient of the loss with respect to every layer, shaped like the layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<Linear<F>>,
}

#[derive(Debug, Clone)]
pub struct Backward<F> {
    pub loss: f64,
    pub params: Gradients<F>,
    /// Gradient with respect to the input batch.
    pub input: Matrix<F>,
}

impl<F: Real> Mlp<F> {
    /// Random initialisation: weights uniform in `±sqrt(6 / fan_in)`, zero biases.
    pub fn new(config: MlpConfig, seed: u64) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut rng = seed::rng(seed);
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| {
                let bound = (6.0 / inp as f64).sqrt();
                Linear {
                    weights: Matrix::from_fn(out, inp, |_, _| F::from_f64(rng.random_range(-bound..bound))),
                    bias: vec![F::ZERO; out],
                }
            })
            .collect();
        Ok(Self {
            config,
            layers,
            version: 0,
        })
    }

    /// Builds a model from explicit layers, checking that shapes chain.
    pub fn from_layers(config: MlpConfig, layers: Vec<Linear<F>>) -> Result<Self, NeuralError> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if shapes.len() != layers.len()
            || shapes
                .iter()
                .zip(&layers)
                .any(|(&(o, i), l)| l.weights.shape() != (o, i) || l.bias.len() != o)
        {
            return Err(NeuralError::InvalidConfig(format!(
                "layers do not match architecture {shapes:?}"
            )));
        }
        if layers.iter().any(|l| !l.weights.all_finite() || l.bias.iter().any(|b| !b.is_finite())) {
            return Err(NeuralError::NonFinite("parameters".into()));
        }
        Ok(Self {
            config,
            layers,
            version: 0,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Linear<F>] {
        &self.layers
    }

    /// Mutable parameter access. Invalidates outstanding traces.
    pub fn layers_mut(&mut self) -> &mut [Linear<F>] {
        self.version += 1;
        &mut self.layers
    }

    /// Incremented on every parameter mutation.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.all_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn cast<G: Real>(&self) -> Mlp<G> {
        Mlp {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    weights: l.weights.map(|v| G::from_f64(v.to_f64())),
                    bias: l.bias.iter().map(|v| G::from_f64(v.to_f64())).collect(),
                })
                .collect(),
            version: 0,
        }
    }

    fn check_input(&self, x: &Matrix<F>) -> Result<(), NeuralError> {
        if x.cols() != self.config.input_dim {
            return Err(NeuralError::ShapeMismatch {
                what: "input width",
                expected: self.config.input_dim,
                found: x.cols(),
            });
        }
        Ok(())
    }

    /// Logits for a batch. Eval mode is deterministic and dropout-free; Train
    /// mode draws inverted-dropout masks from `seed`.
    pub fn forward(&self, x: &Matrix<F>, mode: Mode, seed: u64) -> Result<Matrix<F>, NeuralError> {
        self.check_input(x)?;
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = linear_forward(&a, layer);
            if l < last {
                z.as_mut_slice().iter_mut().for_each(relu_in_place);
                if let Some(mask) = self.dropout_mask(mode, seed, l, z.rows(), z.cols()) {
                    mul_in_place(&mut z, &mask);
                }
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_trace(&self, x: &Matrix<F>, mode: Mode, seed: u64) -> Result<ForwardTrace<F>, NeuralError> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut inputs = vec![x.clone()];
        let mut pre = Vec::with_capacity(last);
        let mut masks = Vec::with_capacity(last);
        let mut logits = None;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = linear_forward(&inputs[l], layer);
            if l == last {
                logits = Some(z);
                break;
            }
            let mut h = z.clone();
            h.as_mut_slice().iter_mut().for_each(relu_in_place);
            let mask = self.dropout_mask(mode, seed, l, h.rows(), h.cols());
            if let Some(m) = &mask {
                mul_in_place(&mut h, m);
            }
            pre.push(z);
            masks.push(mask);
            inputs.push(h);
        }
        Ok(ForwardTrace {
            inputs,
            pre,
            masks,
            logits: logits.expect("at least one layer"),
            version: self.version,
        })
    }

    fn dropout_mask(&self, mode: Mode, seed: u64, layer: usize, rows: usize, cols: usize) -> Option<Matrix<F>> {
        let p = self.config.dropout;
        if mode == Mode::Eval || p == 0.0 {
            return None;
        }
        let keep = F::from_f64(1.0 / (1.0 - p));
        let mut rng = seed::rng(seed::hash_parts(seed, &[layer as u64]));
        Some(Matrix::from_fn(rows, cols, |_, _| {
            if rng.random::<f64>() < p {
                F::ZERO
            } else {
                keep
            }
        }))
    }

    /// Exact gradients of the mean cross-entropy of `trace` against `y`, with
    /// respect to every parameter and to the input batch. Dropout masks are
    /// taken from the trace.
    pub fn backward(&self, trace: &ForwardTrace<F>, y: &[usize]) -> Result<Backward<F>, NeuralError> {
        if trace.version != self.version {
            return Err(NeuralError::StaleTrace);
        }
        let (loss, mut delta) = cross_entropy_grad(&trace.logits, y)?;
        let mut grads: Vec<Linear<F>> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            grads.push(Linear {
                weights: weight_grad(&delta, &trace.inputs[l]),
                bias: bias_grad(&delta),
            });
            let mut upstream = input_grad(&delta, layer);
            if l > 0 {
                if let Some(mask) = &trace.masks[l - 1] {
                    mul_in_place(&mut upstream, mask);
                }
                let z = &trace.pre[l - 1];
                for (g, &zv) in upstream.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if zv <= F::ZERO {
                        *g = F::ZERO;
                    }
                }
            }
            delta = upstream;
        }
        grads.reverse();
        Ok(Backward {
            loss,
            params: Gradients { layers: grads },
            input: delta,
        })
    }

    /// Eval-mode class predictions, ties to the lowest index.
    pub fn predict(&self, x: &Matrix<F>) -> Result<Vec<usize>, NeuralError> {
        let logits = self.forward(x, Mode::Eval, 0)?;
        Ok(logits.iter_rows().map(argmax).collect())
    }
}

#[inline]
fn relu_in_place<F: Real>(v: &mut F) {
    if *v <= F::ZERO {
        *v = F::ZERO;
    }
}

fn mul_in_place<F: Real>(a: &mut Matrix<F>, b: &Matrix<F>) {
    for (x, &m) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *x = *x * m;
    }
}

// Kernels. Rows (or output units) are processed in parallel; every sum runs
// over a fixed index order in f64, so results do not depend on thread count.

fn linear_forward<F: Real>(x: &Matrix<F>, layer: &Linear<F>) -> Matrix<F> {
    let (out, inp) = layer.weights.shape();
    let mut z = Matrix::zeros(x.rows(), out);
    if out == 0 {
        return z;
    }
    z.as_mut_slice()
        .par_chunks_mut(out)
        .enumerate()
        .for_each(|(r, zrow)| {
            let xrow = x.row(r);
            for (j, zj) in zrow.iter_mut().enumerate() {
                let w = &layer.weights.as_slice()[j * inp..(j + 1) * inp];
                let mut acc = layer.bias[j].to_f64();
                for (a, b) in xrow.iter().zip(w) {
                    acc += a.to_f64() * b.to_f64();
                }
                *zj = F::from_f64(acc);
            }
        });
    z
}

/// `dX = dZ · W`.
fn input_grad<F: Real>(dz: &Matrix<F>, layer: &Linear<F>) -> Matrix<F> {
    let (out, inp) = layer.weights.shape();
    let mut dx = Matrix::zeros(dz.rows(), inp);
    if inp == 0 {
        return dx;
    }
    dx.as_mut_slice()
        .par_chunks_mut(inp)
        .enumerate()
        .for_each(|(r, dxrow)| {
            let mut acc = vec![0.0f64; inp];
            for (j, g) in dz.row(r).iter().enumerate().take(out) {
                let g = g.to_f64();
                if g == 0.0 {
                    continue;
                }
                for (a, w) in acc.iter_mut().zip(layer.weights.row(j)) {
                    *a += g * w.to_f64();
                }
            }
            for (d, a) in dxrow.iter_mut().zip(acc) {
                *d = F::from_f64(a);
            }
        });
    dx
}

/// `dW = dZᵀ · A`.
fn weight_grad<F: Real>(dz: &Matrix<F>, a: &Matrix<F>) -> Matrix<F> {
    let out = dz.cols();
    let inp = a.cols();
    let mut dw = Matrix::zeros(out, inp);
    if inp == 0 {
        return dw;
    }
    dw.as_mut_slice()
        .par_chunks_mut(inp)
        .enumerate()
        .for_each(|(j, dwrow)| {
            let mut acc = vec![0.0f64; inp];
            for r in 0..dz.rows() {
                let g = dz.get(r, j).to_f64();
                if g == 0.0 {
                    continue;
                }
                for (s, v) in acc.iter_mut().zip(a.row(r)) {
                    *s += g * v.to_f64();
                }
            }
            for (d, s) in dwrow.iter_mut().zip(acc) {
                *d = F::from_f64(s);
            }
        });
    dw
}

fn bias_grad<F: Real>(dz: &Matrix<F>) -> Vec<F> {
    (0..dz.cols())
        .map(|j| F::from_f64((0..dz.rows()).map(|r| dz.get(r, j).to_f64()).sum()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, dropout: f64) -> Mlp<f64> {
        Mlp::new(
            MlpConfig {
                input_dim: 5,
                hidden: vec![7, 4],
                classes: 3,
                dropout,
            },
            seed,
        )
        .unwrap()
    }

    fn batch(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = seed::rng(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn reference_shapes() {
        let m = Mlp::<f32>::new(MlpConfig::reference(1024, 112), 0).unwrap();
        let shapes: Vec<_> = m.layers().iter().map(|l| l.weights.shape()).collect();
        assert_eq!(shapes, vec![(256, 1024), (128, 256), (112, 128)]);
        let x = Matrix::<f32>::zeros(4, 1024);
        assert_eq!(m.forward(&x, Mode::Eval, 0).unwrap().shape(), (4, 112));
    }

    #[test]
    fn zero_parameters_give_zero_logits() {
        let mut m = small(1, 0.3);
        for l in m.layers_mut() {
            *l = Linear::zeros(l.out_dim(), l.in_dim());
        }
        let logits = m.forward(&batch(6, 5, 2), Mode::Train, 3).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_forward_is_bitwise_repeatable() {
        let m = Mlp::<f32>::new(MlpConfig::reference(32, 10), 5).unwrap();
        let x = batch(9, 32, 6).map(|v| v as f32);
        let a = m.forward(&x, Mode::Eval, 1).unwrap();
        let b = m.forward(&x, Mode::Eval, 2).unwrap();
        assert_eq!(
            a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn train_mode_depends_on_seed_only() {
        let m = small(7, 0.5);
        let x = batch(4, 5, 8);
        assert_eq!(m.forward(&x, Mode::Train, 1).unwrap(), m.forward(&x, Mode::Train, 1).unwrap());
        assert_ne!(m.forward(&x, Mode::Train, 1).unwrap(), m.forward(&x, Mode::Train, 2).unwrap());
    }

    #[test]
    fn trace_logits_match_forward() {
        let m = small(9, 0.3);
        let x = batch(5, 5, 10);
        let t = m.forward_trace(&x, Mode::Train, 4).unwrap();
        assert_eq!(t.logits(), &m.forward(&x, Mode::Train, 4).unwrap());
    }

    #[test]
    fn shape_mismatch() {
        let m = small(0, 0.0);
        assert!(matches!(
            m.forward(&Matrix::zeros(2, 4), Mode::Eval, 0),
            Err(NeuralError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn stale_trace_detected() {
        let mut m = small(0, 0.0);
        let x = batch(2, 5, 1);
        let t = m.forward_trace(&x, Mode::Eval, 0).unwrap();
        m.layers_mut()[0].bias[0] += 1.0;
        assert!(matches!(m.backward(&t, &[0, 1]), Err(NeuralError::StaleTrace)));
    }

    #[test]
    fn zero_final_layer_blocks_input_gradient() {
        let mut m = small(3, 0.0);
        let last = m.layers().len() - 1;
        let l = &mut m.layers_mut()[last];
        *l = Linear::zeros(l.out_dim(), l.in_dim());
        let x = batch(3, 5, 2);
        let t = m.forward_trace(&x, Mode::Eval, 0).unwrap();
        let g = m.backward(&t, &[0, 1, 2]).unwrap();
        assert!(g.input.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_only_model() {
        let cfg = MlpConfig {
            input_dim: 2,
            hidden: vec![],
            classes: 2,
            dropout: 0.3,
        };
        let layer = Linear {
            weights: Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap(),
            bias: vec![0.5, 0.0],
        };
        let m = Mlp::from_layers(cfg, vec![layer]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(m.forward(&x, Mode::Train, 0).unwrap().as_slice(), &[1.5, 2.0]);
        assert_eq!(m.predict(&x).unwrap(), vec![1]);
    }

    #[test]
    fn from_layers_rejects_bad_shapes() {
        let cfg = MlpConfig {
            input_dim: 2,
            hidden: vec![3],
            classes: 2,
            dropout: 0.0,
        };
        assert!(Mlp::<f64>::from_layers(cfg, vec![Linear::zeros(3, 2)]).is_err());
        assert!(MlpConfig { dropout: 1.0, ..MlpConfig::reference(3, 3) }.validate().is_err());
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let cfg = MlpConfig {
            input_dim: 1,
            hidden: vec![1],
            classes: 1,
            dropout: 0.3,
        };
        let m = Mlp::<f64>::new(cfg, 0).unwrap();
        let mut total = 0.0;
        let n = 100_000;
        for s in 0..n {
            let mask = m.dropout_mask(Mode::Train, s, 0, 1, 1).unwrap();
            total += mask.get(0, 0) * 0.8;
        }
        let mean = total / n as f64;
        assert!((mean - 0.8).abs() / 0.8 < 0.01, "mean {mean}");
    }
}
