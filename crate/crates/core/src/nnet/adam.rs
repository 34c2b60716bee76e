use super::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// Adam with bias-corrected first and second moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    params: AdamParams,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: AdamParams, shapes: &[&Tensor<T>]) -> Self {
        Self {
            params,
            step: 0,
            m: shapes.iter().map(|t| vec![T::zero(); t.len()]).collect(),
            v: shapes.iter().map(|t| vec![T::zero(); t.len()]).collect(),
        }
    }

    pub fn update(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) {
        self.step += 1;
        let b1 = T::lit(self.params.beta1);
        let b2 = T::lit(self.params.beta2);
        let lr = T::lit(self.params.learning_rate);
        let eps = T::lit(self.params.epsilon);
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((w, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut w = Tensor::from_vec(&[2], vec![1.0f64, -1.0]).unwrap();
        let g = Tensor::from_vec(&[2], vec![0.3, -7.0]).unwrap();
        let mut opt = Adam::new(
            AdamParams {
                learning_rate: 0.01,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
            },
            &[&w],
        );
        opt.update(vec![&mut w], &[g]);
        // bias-corrected first step is lr * sign(g)
        assert!((w.data()[0] - 0.99).abs() < 1e-6);
        assert!((w.data()[1] + 0.99).abs() < 1e-6);
    }

    #[test]
    fn minimises_quadratic() {
        let mut w = Tensor::from_vec(&[1], vec![5.0f64]).unwrap();
        let mut opt = Adam::new(
            AdamParams {
                learning_rate: 0.1,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
            },
            &[&w],
        );
        for _ in 0..500 {
            let g = Tensor::from_vec(&[1], vec![2.0 * (w.data()[0] - 2.0)]).unwrap();
            opt.update(vec![&mut w], &[g]);
        }
        assert!((w.data()[0] - 2.0).abs() < 1e-2);
    }
}
