use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam with weight decay folded into the gradient (`g + wd * theta`).
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ModelParams, lr: f64, weight_decay: f64) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, t)| Tensor::zeros(t.rows(), t.cols()))
                .collect::<Vec<_>>()
        };
        Adam {
            lr,
            weight_decay,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Non-finite gradients abort before any parameter
    /// changes.
    pub fn step(&mut self, params: &mut ModelParams, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (id, g) in params.ids().zip(grads) {
            if g.shape() != params.get(id).shape() {
                return Err(Error::Shape(format!("gradient shape mismatch for {}", params.name(id))));
            }
            if !g.all_finite() {
                return Err(Error::Numeric(format!("non-finite gradient for {}", params.name(id))));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let ids: Vec<_> = params.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let theta = params.get_mut(id);
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (((p, &g), m), v) in theta.data_mut().iter_mut().zip(grads[k].data()).zip(m).zip(v) {
                let g = g + self.weight_decay * *p;
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelConfig};

    fn model() -> Model {
        let mut c = ModelConfig::new(2, 2);
        c.hidden_dim = 3;
        c.proj_dim = 2;
        c.ffn_hidden = 4;
        c.num_gnn_layers = 1;
        Model::new(c, 1).unwrap()
    }

    fn filled_grads(m: &Model, v: f64) -> Vec<Tensor> {
        m.params().iter().map(|(_, t)| Tensor::filled(t.rows(), t.cols(), v)).collect()
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut m = model();
        let before = m.clone();
        let mut adam = Adam::new(m.params(), 0.1, 0.0);
        let g = filled_grads(&m, 0.0);
        for _ in 0..3 {
            adam.step(m.params_mut(), &g).unwrap();
        }
        assert_eq!(m, before);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let mut m = model();
        let before = m.clone();
        let lr = 1e-3;
        let mut adam = Adam::new(m.params(), lr, 0.0);
        let g = filled_grads(&m, 1.0);
        adam.step(m.params_mut(), &g).unwrap();
        // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
        let expected = lr / (1.0 + EPS);
        for ((_, a), (_, b)) in before.params().iter().zip(m.params().iter()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!(((x - y) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn coupled_decay_enters_the_moments() {
        let mut m = model();
        let id = m.params().find("cls.w").unwrap();
        let theta0 = m.params().get(id).get(0, 0);
        let mut adam = Adam::new(m.params(), 0.01, 0.5);
        let g = filled_grads(&m, 0.0);
        adam.step(m.params_mut(), &g).unwrap();
        // g = 0.5 * theta0, first step moves lr * sign(g)
        let moved = theta0 - m.params().get(id).get(0, 0);
        let g = 0.5 * theta0;
        assert!((moved - 0.01 * g / (g.abs() + EPS)).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut m = model();
        let before = m.clone();
        let mut adam = Adam::new(m.params(), 0.1, 0.0);
        let mut g = filled_grads(&m, 0.0);
        let id = m.params().find("proj.w").unwrap();
        g[id.0].data_mut()[0] = f64::NAN;
        match adam.step(m.params_mut(), &g) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("proj.w"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert_eq!(m, before);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut m = model();
            let mut adam = Adam::new(m.params(), 0.05, 1e-4);
            for k in 0..10 {
                let g = filled_grads(&m, (k as f64 * 0.7).sin());
                adam.step(m.params_mut(), &g).unwrap();
            }
            m
        };
        assert_eq!(run(), run());
    }
}
