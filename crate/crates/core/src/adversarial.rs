//! L∞ attacks on embedding inputs: FGSM and projected gradient descent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::{Matrix, Real};
use crate::neural::{argmax, per_example_loss, Mlp, Mode, NeuralError};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackInit {
    Zero,
    /// Uniform start inside the ball.
    RandomUniform { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub steps: usize,
    pub init: AttackInit,
    /// Return the highest-loss iterate per example instead of the last one.
    pub track_best: bool,
}

impl AttackConfig {
    /// Zero start, best-iterate tracking, step size `2.5 ε / steps`.
    pub fn pgd(epsilon: f64, steps: usize) -> Self {
        Self {
            epsilon,
            alpha: if steps == 0 { 0.0 } else { 2.5 * epsilon / steps as f64 },
            steps,
            init: AttackInit::Zero,
            track_best: true,
        }
    }

    /// The PGD configuration that coincides with FGSM.
    pub fn fgsm_equivalent(epsilon: f64) -> Self {
        Self {
            epsilon,
            alpha: epsilon,
            steps: 1,
            init: AttackInit::Zero,
            track_best: false,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(NeuralError::InvalidConfig(format!("epsilon {} must be finite and >= 0", self.epsilon)));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 || (self.steps > 0 && self.alpha == 0.0 && self.epsilon > 0.0) {
            return Err(NeuralError::InvalidConfig(format!(
                "step size {} must be positive when steps > 0",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Same attack with a random start seed mixed with `salt`, so separate
    /// batches get independent starts.
    pub fn salted(&self, salt: u64) -> Self {
        let init = match self.init {
            AttackInit::Zero => AttackInit::Zero,
            AttackInit::RandomUniform { seed } => AttackInit::RandomUniform {
                seed: seed::hash_parts(seed, &[salt]),
            },
        };
        Self { init, ..*self }
    }
}

/// Perturbation returned by an attack.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation<F> {
    pub delta: Matrix<F>,
    /// Per-example loss at the returned iterate.
    pub losses: Vec<f64>,
    /// True when some iterate the attack evaluated was misclassified.
    pub fooled: Vec<bool>,
}

impl<F: Real> Perturbation<F> {
    /// Mean loss at the returned iterate.
    pub fn achieved_loss(&self) -> f64 {
        if self.losses.is_empty() {
            return 0.0;
        }
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }

    /// `x + delta`.
    pub fn apply(&self, x: &Matrix<F>) -> Matrix<F> {
        x.add(&self.delta).expect("perturbation shaped like its batch")
    }
}

/// Clamps every coordinate into `[-epsilon, epsilon]`.
pub fn project<F: Real>(delta: &mut Matrix<F>, epsilon: F) {
    for v in delta.as_mut_slice() {
        *v = v.clamp_to(-epsilon, epsilon);
    }
}

fn check_batch<F: Real>(model: &Mlp<F>, x: &Matrix<F>, y: &[usize]) -> Result<(), NeuralError> {
    if x.rows() != y.len() {
        return Err(NeuralError::ShapeMismatch {
            what: "batch labels",
            expected: x.rows(),
            found: y.len(),
        });
    }
    if y.is_empty() {
        return Err(NeuralError::EmptyBatch);
    }
    if x.cols() != model.input_dim() {
        return Err(NeuralError::ShapeMismatch {
            what: "input width",
            expected: model.input_dim(),
            found: x.cols(),
        });
    }
    Ok(())
}

/// Single-step attack `delta = epsilon * sign(grad_x loss)`, with sign(0) = 0.
pub fn fgsm<F: Real>(model: &Mlp<F>, x: &Matrix<F>, y: &[usize], epsilon: f64) -> Result<Perturbation<F>, NeuralError> {
    check_batch(model, x, y)?;
    AttackConfig::fgsm_equivalent(epsilon).validate()?;
    let eps = F::from_f64_toward_zero(epsilon);
    let trace = model.forward_trace(x, Mode::Eval, 0)?;
    let clean_wrong: Vec<bool> = trace
        .logits()
        .iter_rows()
        .zip(y)
        .map(|(r, &l)| argmax(r) != l)
        .collect();
    let grad = model.backward(&trace, y)?.input;
    let delta = grad.map(|g| eps * g.signum_or_zero());
    let logits = model.forward(&x.add(&delta).expect("same shape"), Mode::Eval, 0)?;
    let losses = per_example_loss(&logits, y)?;
    let fooled = logits
        .iter_rows()
        .zip(y)
        .zip(clean_wrong)
        .map(|((r, &l), w)| w || argmax(r) != l)
        .collect();
    Ok(Perturbation { delta, losses, fooled })
}

/// Projected sign-gradient ascent on the cross-entropy, in Eval mode.
///
/// Iterates `delta_0 ..= delta_steps` are all evaluated. With `track_best` the
/// highest-loss iterate is kept per example (ties keep the earlier one);
/// otherwise the last iterate is returned.
pub fn pgd<F: Real>(model: &Mlp<F>, x: &Matrix<F>, y: &[usize], cfg: &AttackConfig) -> Result<Perturbation<F>, NeuralError> {
    check_batch(model, x, y)?;
    cfg.validate()?;
    let eps = F::from_f64_toward_zero(cfg.epsilon);
    let alpha = F::from_f64(cfg.alpha);
    let (b, d) = x.shape();

    let mut delta = match cfg.init {
        AttackInit::Zero => Matrix::zeros(b, d),
        AttackInit::RandomUniform { seed } => {
            let mut rng = seed::rng(seed);
            let e = cfg.epsilon;
            let mut m = Matrix::from_fn(b, d, |_, _| {
                if e > 0.0 {
                    F::from_f64(rng.random_range(-e..=e))
                } else {
                    F::ZERO
                }
            });
            project(&mut m, eps);
            m
        }
    };

    let mut best = delta.clone();
    let mut best_loss = vec![f64::NEG_INFINITY; b];
    let mut fooled = vec![false; b];
    let mut last_loss = Vec::new();

    for t in 0..=cfg.steps {
        let xa = x.add(&delta).expect("same shape");
        let trace = model.forward_trace(&xa, Mode::Eval, 0)?;
        let losses = per_example_loss(trace.logits(), y)?;
        for (i, (row, &label)) in trace.logits().iter_rows().zip(y).enumerate() {
            if argmax(row) != label {
                fooled[i] = true;
            }
            if cfg.track_best && losses[i] > best_loss[i] {
                best_loss[i] = losses[i];
                best.row_mut(i).copy_from_slice(delta.row(i));
            }
        }
        if t == cfg.steps {
            last_loss = losses;
            break;
        }
        let grad = model.backward(&trace, y)?.input;
        for (v, g) in delta.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *v = (*v + alpha * g.signum_or_zero()).clamp_to(-eps, eps);
        }
    }

    if cfg.track_best {
        Ok(Perturbation {
            delta: best,
            losses: best_loss,
            fooled,
        })
    } else {
        Ok(Perturbation {
            delta,
            losses: last_loss,
            fooled,
        })
    }
}
