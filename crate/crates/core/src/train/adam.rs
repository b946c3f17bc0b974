use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-parameter moment estimates for Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    names: Vec<String>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed moments for parameters of the given lengths, with β₁ = 0.9,
    /// β₂ = 0.999, ε = 1e-8.
    pub fn new(lengths: &[usize]) -> Self {
        AdamState {
            m: lengths.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: lengths.iter().map(|&n| vec![T::zero(); n]).collect(),
            names: (0..lengths.len()).map(|i| format!("#{i}")).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Names used in diagnostics instead of positional indices.
    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.m.len());
        self.names = names;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, i: usize) -> &[T] {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &[T] {
        &self.v[i]
    }

    /// One bias-corrected Adam update. Every gradient is checked before any
    /// parameter changes, so a rejected step leaves state untouched.
    pub fn step<G: AsRef<[T]>>(
        &mut self,
        params: &mut [&mut [T]],
        grads: &[G],
        lr: f64,
    ) -> Result<()> {
        const OP: &str = "adam_step";
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::usage(
                OP,
                format!("learning rate {lr} must be positive"),
            ));
        }
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::usage(
                OP,
                format!(
                    "{} parameters and {} gradients for a state of {}",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let g = g.as_ref();
            if p.len() != self.m[i].len() || g.len() != p.len() {
                return Err(Error::usage(
                    OP,
                    format!("shape mismatch for {}", self.names[i]),
                ));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("gradient of {}", self.names[i]),
                    index: j,
                });
            }
        }

        self.t += 1;
        let t = self.t as i32;
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let one = T::one();
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        let lr = T::of(lr);
        let eps = T::of(self.eps);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((p, &g), m), v) in p
                .iter_mut()
                .zip(g.as_ref())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step<T: Scalar, G: AsRef<[T]>>(
    params: &mut [&mut [T]],
    grads: &[G],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    state.step(params, grads, lr)
}
