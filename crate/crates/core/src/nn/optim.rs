use super::scalar::Scalar;

/// RMSprop hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self {
            lr: 0.001,
            rho: 0.9,
            eps: 1e-8,
        }
    }
}

/// Running mean of squared gradients, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState<T> {
    pub v: Vec<T>,
}

impl<T: Scalar> RmsPropState<T> {
    pub fn new(n_params: usize) -> Self {
        Self {
            v: vec![T::zero(); n_params],
        }
    }
}

impl RmsProp {
    /// `v ← ρv + (1-ρ)g²; θ ← θ - lr·g / (√v + ε)`
    pub fn step<T: Scalar>(&self, params: &mut [T], grads: &[T], state: &mut RmsPropState<T>) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), state.v.len());
        let rho = T::of_f64(self.rho);
        let one_minus = T::of_f64(1.0 - self.rho);
        let lr = T::of_f64(self.lr);
        let eps = T::of_f64(self.eps);
        for ((p, &g), v) in params.iter_mut().zip(grads).zip(state.v.iter_mut()) {
            *v = rho * *v + one_minus * g * g;
            *p = *p - lr * g / (v.sqrt() + eps);
        }
    }
}
