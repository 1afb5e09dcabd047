//! Adaptive-moment optimizer and global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Rescales `g` onto the ball of radius `threshold` when its norm exceeds it.
pub fn clip_gradient(g: &[f64], threshold: f64) -> Result<Vec<f64>> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, threshold)?;
    Ok(out)
}

/// Applies [`clip_gradient`] jointly to a set of gradient tensors. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::Parameter(format!("clip threshold must be positive, got {threshold}")));
    }
    let norm = grads.iter().map(Tensor::sum_squares).sum::<f64>().sqrt();
    if norm > threshold {
        let original: Vec<Tensor> = grads.to_vec();
        let mut factor = threshold / norm;
        loop {
            for (g, o) in grads.iter_mut().zip(&original) {
                for (v, x) in g.data_mut().iter_mut().zip(o.data()) {
                    *v = x * factor;
                }
            }
            if grads.iter().map(Tensor::sum_squares).sum::<f64>().sqrt() <= threshold {
                break;
            }
            factor *= 1.0 - f64::EPSILON;
        }
    }
    Ok(norm)
}

fn clip_in_place(g: &mut [f64], threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::Parameter(format!("clip threshold must be positive, got {threshold}")));
    }
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > threshold {
        let original = g.to_vec();
        let mut factor = threshold / norm;
        // rounding can leave the rescaled norm an ulp above the threshold
        loop {
            g.iter_mut().zip(&original).for_each(|(v, x)| *v = x * factor);
            if g.iter().map(|v| v * v).sum::<f64>().sqrt() <= threshold {
                break;
            }
            factor *= 1.0 - f64::EPSILON;
        }
    }
    Ok(norm)
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// One bias-corrected update of `params` along `grads` (matched by position).
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::dim(format!(
                    "parameter {i} has shape {:?}, gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
