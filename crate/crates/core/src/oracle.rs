//! Reference implementations used to check the rest of the crate: a synthetic
//! Gaussian-cluster corpus, central finite differences, a naive linear probe
//! and an exhaustive attack over the vertices of the L∞ ball.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{stratified_splits, Split};
use crate::embedding::EmbeddingDataset;
use crate::matrix::Matrix;
use crate::neural::{Linear, Mlp, MlpConfig};
use crate::seed;

pub const MAX_VERTEX_DIM: usize = 20;
const PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("could not place class {class} at margin {margin} after {attempts} attempts")]
    MeanPlacementFailure { class: usize, margin: f64, attempts: usize },
    #[error("vertex enumeration limited to {max} dimensions, got {dim}")]
    DimensionTooLarge { dim: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    /// Within-class standard deviation per coordinate.
    pub sigma: f64,
    /// Minimum Euclidean distance between any two class means.
    pub margin: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::InvalidSpec(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.dim == 0 {
            return bad("dimension must be positive".into());
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin {} must be positive", self.margin));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma {} must be >= 0", self.sigma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: EmbeddingDataset<f32>,
    /// Class means, one row per class.
    pub means: Matrix<f64>,
}

impl Synthetic {
    /// Stratified three-way split of the samples.
    pub fn split(&self, train: f64, val: f64, seed: u64) -> (EmbeddingDataset<f32>, EmbeddingDataset<f32>, EmbeddingDataset<f32>) {
        let ds = &self.dataset;
        let items: Vec<(usize, &str)> = ds.y().iter().copied().zip(ds.ids().iter().map(String::as_str)).collect();
        let assign = stratified_splits(&items, train, val, seed).expect("every class has samples");
        let pick = |s: Split| -> Vec<usize> { (0..ds.len()).filter(|&i| assign[i] == s).collect() };
        (ds.subset(&pick(Split::Train)), ds.subset(&pick(Split::Val)), ds.subset(&pick(Split::Test)))
    }
}

/// Gaussian clusters around means that are pairwise at least `margin` apart.
///
/// Means are drawn from `N(0, s² I)` with `s = 0.9 · margin / sqrt(D)` and
/// redrawn until they clear the margin against all earlier means. Samples are
/// `mean + sigma · z`, class-major.
pub fn generate(spec: &SyntheticSpec) -> Result<Synthetic, OracleError> {
    spec.validate()?;
    let (k, d) = (spec.classes, spec.dim);
    let mut rng = seed::rng(spec.seed);
    let scale = 0.9 * spec.margin / (d as f64).sqrt();
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(k);
    for class in 0..k {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let cand: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            if means.iter().all(|m| euclidean(m, &cand) >= spec.margin) {
                means.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(OracleError::MeanPlacementFailure {
                class,
                margin: spec.margin,
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
    }
    let n = k * spec.n_per_class;
    let mut x = Matrix::<f32>::zeros(n, d);
    let mut y = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for (class, mean) in means.iter().enumerate() {
        for i in 0..spec.n_per_class {
            let r = class * spec.n_per_class + i;
            for (v, m) in x.row_mut(r).iter_mut().zip(mean) {
                let z: f64 = rng.sample(StandardNormal);
                *v = (m + spec.sigma * z) as f32;
            }
            y.push(class);
            ids.push(format!("c{class:03}-{i:05}"));
        }
    }
    let means = Matrix::from_rows(&means).expect("uniform width");
    let dataset = EmbeddingDataset::new(x, y, ids, k).expect("consistent by construction");
    Ok(Synthetic { dataset, means })
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Index of the closest mean, ties to the lowest index.
pub fn nearest_mean(means: &Matrix<f64>, x: &[f32]) -> usize {
    let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let mut best = (0, f64::INFINITY);
    for (k, m) in means.iter_rows().enumerate() {
        let d = euclidean(m, &x);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max |a - b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs() / p.abs().max(q.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Cross-entropy of one logit vector, written out directly.
fn naive_ce(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for l in logits {
        z += (l - m).exp();
    }
    m + z.ln() - logits[label]
}

/// Mean cross-entropy of a ReLU network, evaluated with plain loops.
/// `masks[l]` multiplies the activations after hidden layer `l`.
pub fn naive_mlp_loss(layers: &[Linear<f64>], x: &Matrix<f64>, y: &[usize], masks: &[Option<Matrix<f64>>]) -> f64 {
    let mut total = 0.0;
    for r in 0..x.rows() {
        let mut a: Vec<f64> = x.row(r).to_vec();
        for (l, layer) in layers.iter().enumerate() {
            let mut z = vec![0.0; layer.out_dim()];
            for (j, zj) in z.iter_mut().enumerate() {
                let mut s = layer.bias[j];
                for i in 0..layer.in_dim() {
                    s += layer.weights.get(j, i) * a[i];
                }
                *zj = s;
            }
            if l + 1 < layers.len() {
                for (j, v) in z.iter_mut().enumerate() {
                    *v = v.max(0.0);
                    if let Some(Some(m)) = masks.get(l) {
                        *v *= m.get(r, j);
                    }
                }
            }
            a = z;
        }
        total += naive_ce(&a, y[r]);
    }
    total / x.rows() as f64
}

/// Single affine layer plus cross-entropy; convex in the input.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// `K × D`.
    pub weights: Matrix<f64>,
    pub bias: Vec<f64>,
}

impl LinearProbe {
    pub fn random(classes: usize, dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        Self {
            weights: Matrix::from_fn(classes, dim, |_, _| rng.random_range(-scale..scale)),
            bias: (0..classes).map(|_| rng.random_range(-scale..scale)).collect(),
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.weights.rows())
            .map(|k| self.bias[k] + self.weights.row(k).iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    pub fn loss(&self, x: &[f64], label: usize) -> f64 {
        naive_ce(&self.logits(x), label)
    }

    pub fn to_mlp(&self) -> Mlp<f64> {
        let cfg = MlpConfig {
            input_dim: self.weights.cols(),
            hidden: vec![],
            classes: self.weights.rows(),
            dropout: 0.0,
        };
        Mlp::from_layers(
            cfg,
            vec![Linear {
                weights: self.weights.clone(),
                bias: self.bias.clone(),
            }],
        )
        .expect("probe parameters are finite")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexMax {
    pub loss: f64,
    /// Maximising sign pattern scaled by ε.
    pub delta: Vec<f64>,
}

/// Largest loss over the `2^D` vertices `x + ε s`, `s ∈ {-1, +1}^D`. For a
/// loss convex in the input this is the maximum over the whole ball.
pub fn vertex_attack(probe: &LinearProbe, x: &[f64], label: usize, epsilon: f64) -> Result<VertexMax, OracleError> {
    let d = x.len();
    if d > MAX_VERTEX_DIM {
        return Err(OracleError::DimensionTooLarge {
            dim: d,
            max: MAX_VERTEX_DIM,
        });
    }
    let vertex = |bits: u32| -> Vec<f64> {
        (0..d)
            .map(|i| if bits >> i & 1 == 1 { epsilon } else { -epsilon })
            .collect()
    };
    let (bits, loss) = (0..1u32 << d)
        .into_par_iter()
        .map(|bits| {
            let p: Vec<f64> = x.iter().zip(vertex(bits)).map(|(a, b)| a + b).collect();
            (bits, probe.loss(&p, label))
        })
        .reduce(
            || (u32::MAX, f64::NEG_INFINITY),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    Ok(VertexMax {
        loss,
        delta: vertex(bits),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            classes: 4,
            dim: 8,
            n_per_class: 10,
            sigma: 0.0,
            margin: 3.0,
            seed: 1,
        }
    }

    #[test]
    fn zero_sigma_samples_are_means() {
        let s = generate(&spec()).unwrap();
        for (r, &c) in s.dataset.y().iter().enumerate() {
            for (v, m) in s.dataset.x().row(r).iter().zip(s.means.row(c)) {
                assert_eq!(*v, *m as f32);
            }
        }
    }

    #[test]
    fn margin_respected_and_seeded() {
        let sp = SyntheticSpec { classes: 10, dim: 64, sigma: 0.5, ..spec() };
        let a = generate(&sp).unwrap();
        for i in 0..10 {
            for j in 0..i {
                assert!(euclidean(a.means.row(i), a.means.row(j)) >= sp.margin);
            }
        }
        let b = generate(&sp).unwrap();
        assert_eq!(a.dataset.x(), b.dataset.x());
    }

    #[test]
    fn impossible_margin_fails() {
        let sp = SyntheticSpec { classes: 50, dim: 1, margin: 1.0, ..spec() };
        assert!(matches!(generate(&sp), Err(OracleError::MeanPlacementFailure { .. })));
        assert!(generate(&SyntheticSpec { classes: 1, ..spec() }).is_err());
    }

    #[test]
    fn split_is_stratified() {
        let s = generate(&spec()).unwrap();
        let (tr, va, te) = s.split(0.6, 0.2, 3);
        assert_eq!((tr.len(), va.len(), te.len()), (24, 8, 8));
    }

    #[test]
    fn finite_diff_of_square() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
        let lin = finite_diff_grad(|x| 2.0 * x[0] - 0.5 * x[1], &[1.0, -4.0], 0.3);
        assert!((lin[0] - 2.0).abs() < 1e-12 && (lin[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn vertex_of_zero_ball_is_clean() {
        let p = LinearProbe::random(3, 4, 1.0, 2);
        let x = [0.1, 0.2, -0.3, 0.4];
        let v = vertex_attack(&p, &x, 1, 0.0).unwrap();
        assert_eq!(v.loss, p.loss(&x, 1));
    }

    #[test]
    fn vertex_in_one_dimension() {
        let p = LinearProbe {
            weights: Matrix::from_rows(&[[2.0], [0.0]]).unwrap(),
            bias: vec![0.0, 0.0],
        };
        let v = vertex_attack(&p, &[0.5], 0, 0.25).unwrap();
        let want = p.loss(&[0.25], 0).max(p.loss(&[0.75], 0));
        assert_eq!(v.loss, want);
        assert_eq!(v.delta, vec![-0.25]);
        assert!(matches!(
            vertex_attack(&p, &[0.0; 21], 0, 0.1),
            Err(OracleError::DimensionTooLarge { dim: 21, .. })
        ));
    }

    #[test]
    fn naive_probe_agrees_with_mlp() {
        let p = LinearProbe::random(5, 6, 1.0, 9);
        let x = Matrix::from_fn(3, 6, |r, c| (r as f64 - c as f64) / 4.0);
        let y = [0, 4, 2];
        let m = p.to_mlp();
        let ours = crate::neural::cross_entropy(&m.forward(&x, crate::neural::Mode::Eval, 0).unwrap(), &y).unwrap();
        let naive = naive_mlp_loss(m.layers(), &x, &y, &[]);
        assert!((ours - naive).abs() < 1e-12);
    }
}
