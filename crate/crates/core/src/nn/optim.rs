use super::params::ParameterStore;
use super::tensor::Tensor2;
use crate::error::NnError;

/// Adam with the L2 penalty `λ‖θ‖²` folded into the gradient (`g + 2λθ`).
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
}

impl Adam {
    pub fn new(store: &ParameterStore, learning_rate: f64, weight_decay: f64) -> Self {
        let zeros = || store.iter().map(|p| Tensor2::zeros(p.value.rows(), p.value.cols())).collect();
        Adam {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients in `store`.
    /// Nothing is modified if any trainable gradient is non-finite.
    pub fn step(&mut self, store: &mut ParameterStore) -> Result<(), NnError> {
        if let Some(p) = store.iter().find(|p| p.trainable && !p.grad.is_finite()) {
            return Err(NnError::NonFiniteGradient(p.name.clone()));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let p = store.get_mut(id);
            if !p.trainable {
                continue;
            }
            let (m, v) = (&mut self.first[id.index()], &mut self.second[id.index()]);
            let values = p.value.data_mut();
            for (i, (theta, g)) in values.iter_mut().zip(p.grad.data()).enumerate() {
                let g = g + 2.0 * self.weight_decay * *theta;
                let mi = b1 * m.data()[i] + (1.0 - b1) * g;
                let vi = b2 * v.data()[i] + (1.0 - b2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                *theta -= self.learning_rate * (mi / c1) / ((vi / c2).sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Init;

    fn scalar_store(value: f64) -> ParameterStore {
        let mut store = ParameterStore::new(0);
        let id = store.add("theta", 1, 1, Init::Zeros);
        *store.value_mut(id) = Tensor2::scalar(value);
        store
    }

    #[test]
    fn zero_gradient_no_decay_is_noop() {
        let mut store = scalar_store(0.7);
        let mut adam = Adam::new(&store, 0.001, 0.0);
        for _ in 0..5 {
            adam.step(&mut store).unwrap();
        }
        assert_eq!(store.iter().next().unwrap().value.item(), 0.7);
    }

    #[test]
    fn one_step_matches_hand_formula() {
        let mut store = scalar_store(1.0);
        let id = store.find("theta").unwrap();
        store.get_mut(id).grad = Tensor2::scalar(0.5);
        let mut adam = Adam::new(&store, 0.1, 0.0);
        adam.step(&mut store).unwrap();
        // m̂ = 0.5, v̂ = 0.25 after bias correction.
        let expected = 1.0 - 0.1 * 0.5 / (0.25f64.sqrt() + 1e-8);
        assert!((store.value(id).item() - expected).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_shrinks() {
        let mut store = scalar_store(2.0);
        let mut adam = Adam::new(&store, 0.01, 0.5);
        for _ in 0..10 {
            adam.step(&mut store).unwrap();
        }
        let v = store.iter().next().unwrap().value.item();
        assert!(v < 2.0 && v > 0.0);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut store = scalar_store(1.0);
        let id = store.find("theta").unwrap();
        store.get_mut(id).grad = Tensor2::scalar(f64::NAN);
        let mut adam = Adam::new(&store, 0.1, 0.0);
        assert_eq!(adam.step(&mut store), Err(NnError::NonFiniteGradient("theta".into())));
        assert_eq!(store.value(id).item(), 1.0);
    }
}
