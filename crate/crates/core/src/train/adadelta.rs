use indexmap::IndexMap;
use ssan_tensor::{Float, Tensor, TensorError};

use crate::error::Result;
use crate::params::ParamStore;

pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Running averages of squared gradients and squared updates.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulators<T> {
    pub grad_sq: Vec<T>,
    pub update_sq: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Adadelta<T> {
    pub rho: f64,
    pub eps: f64,
    state: IndexMap<String, Accumulators<T>>,
}

impl<T: Float> Default for Adadelta<T> {
    fn default() -> Self {
        Self::new(DEFAULT_RHO, DEFAULT_EPSILON)
    }
}

/// Applies one update to `x` in place and returns the step taken.
pub fn adadelta_update<T: Float>(x: &mut T, g: T, grad_sq: &mut T, update_sq: &mut T, rho: T, eps: T) -> T {
    let keep = T::one() - rho;
    *grad_sq = rho * *grad_sq + keep * g * g;
    let delta = -((*update_sq + eps).sqrt() / (*grad_sq + eps).sqrt()) * g;
    *update_sq = rho * *update_sq + keep * delta * delta;
    *x += delta;
    delta
}

impl<T: Float> Adadelta<T> {
    pub fn new(rho: f64, eps: f64) -> Self {
        Self { rho, eps, state: IndexMap::new() }
    }

    pub fn state(&self, name: &str) -> Option<&Accumulators<T>> {
        self.state.get(name)
    }

    /// Updates every named parameter with its gradient. Parameters without
    /// a gradient are left alone.
    pub fn step<'a>(
        &mut self,
        params: &mut ParamStore<T>,
        grads: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>,
    ) -> Result<()>
    where
        T: 'a,
    {
        let (rho, eps) = (T::of(self.rho), T::of(self.eps));
        for (name, grad) in grads {
            let value = params.get_mut(name)?;
            if value.shape() != grad.shape() {
                return Err(TensorError::Dimension(format!(
                    "gradient {:?} does not match parameter {:?} of shape {:?}",
                    grad.shape(),
                    name,
                    value.shape()
                ))
                .into());
            }
            let n = value.numel();
            let acc = self.state.entry(name.to_string()).or_insert_with(|| Accumulators {
                grad_sq: vec![T::zero(); n],
                update_sq: vec![T::zero(); n],
            });
            for (((x, &g), gs), us) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(acc.grad_sq.iter_mut())
                .zip(acc.update_sq.iter_mut())
            {
                adadelta_update(x, g, gs, us, rho, eps);
            }
        }
        Ok(())
    }
}
