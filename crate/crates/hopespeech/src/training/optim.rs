//! Optimizers over the model's parameter visitor, plus global gradient
//! clipping. State buffers are allocated lazily on the first step, in
//! visit order — the same stable order the checkpoint format uses.

use crate::classifier::nn::ParamRef;
use crate::classifier::{Model, OptimizerKind};

/// Decoupled-weight-decay Adam. Decay applies to matrices only; biases
/// and norm parameters are exempt.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

/// RMSProp with a running second-moment average; no momentum and no
/// weight decay.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
    sq: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            alpha: 0.99,
            eps: 1e-8,
            sq: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    AdamW(AdamW),
    RmsProp(RmsProp),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::AdamW => Optimizer::AdamW(AdamW::new(lr)),
            OptimizerKind::RMSProp => Optimizer::RmsProp(RmsProp::new(lr)),
        }
    }

    /// Applies one update from the accumulated gradients.
    pub fn step(&mut self, model: &mut Model) {
        self.step_params(|f| model.for_each_param(f));
    }

    /// Same as [`Self::step`] but over any parameter visitor (testable
    /// without a full model).
    pub fn step_params(&mut self, visit: impl FnOnce(&mut dyn FnMut(ParamRef))) {
        match self {
            Optimizer::AdamW(o) => {
                o.t += 1;
                let bc1 = 1.0 - o.beta1.powi(o.t as i32);
                let bc2 = 1.0 - o.beta2.powi(o.t as i32);
                let mut idx = 0;
                visit(&mut |mut p: ParamRef| {
                    let decay = if p.is_matrix() { o.weight_decay } else { 0.0 };
                    if o.m.len() == idx {
                        o.m.push(vec![0.0; p.value_slice().len()]);
                        o.v.push(vec![0.0; p.value_slice().len()]);
                    }
                    let m = &mut o.m[idx];
                    let v = &mut o.v[idx];
                    assert_eq!(m.len(), p.value_slice().len(), "parameter set changed");
                    let grads: Vec<f64> = p.grad_slice().to_vec();
                    let values = p.value_slice_mut();
                    for i in 0..values.len() {
                        let g = grads[i];
                        m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
                        v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        values[i] -=
                            o.lr * (mhat / (vhat.sqrt() + o.eps) + decay * values[i]);
                    }
                    idx += 1;
                });
            }
            Optimizer::RmsProp(o) => {
                let mut idx = 0;
                visit(&mut |mut p: ParamRef| {
                    if o.sq.len() == idx {
                        o.sq.push(vec![0.0; p.value_slice().len()]);
                    }
                    let sq = &mut o.sq[idx];
                    assert_eq!(sq.len(), p.value_slice().len(), "parameter set changed");
                    let grads: Vec<f64> = p.grad_slice().to_vec();
                    let values = p.value_slice_mut();
                    for i in 0..values.len() {
                        let g = grads[i];
                        sq[i] = o.alpha * sq[i] + (1.0 - o.alpha) * g * g;
                        values[i] -= o.lr * g / (sq[i].sqrt() + o.eps);
                    }
                    idx += 1;
                });
            }
        }
    }
}

/// Euclidean norm of all gradients together.
pub fn global_grad_norm(model: &mut Model) -> f64 {
    let mut sum_sq = 0.0;
    model.for_each_param(&mut |p| {
        sum_sq += p.grad_slice().iter().map(|g| g * g).sum::<f64>();
    });
    sum_sq.sqrt()
}

/// Scales all gradients down so their global norm is at most
/// `max_norm`; returns the pre-clip norm.
pub fn clip_global_norm(model: &mut Model, max_norm: f64) -> f64 {
    let norm = global_grad_norm(model);
    if norm > max_norm {
        let factor = max_norm / norm;
        model.for_each_param(&mut |mut p| {
            for g in p.grad_slice_mut() {
                *g *= factor;
            }
        });
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::nn::{Param1, Param2};
    use ndarray::array;

    /// Drives an optimizer with a single standalone matrix parameter.
    fn visit_one(p2: &mut Param2) -> impl FnOnce(&mut dyn FnMut(ParamRef)) + '_ {
        move |f| {
            f(ParamRef::Matrix {
                name: "w".into(),
                value: &mut p2.value,
                grad: &mut p2.grad,
            })
        }
    }

    #[test]
    fn adamw_first_step_size_is_about_lr() {
        // With bias correction, the first step is lr * sign(g) for a
        // plain (decay-free) parameter; use a vector to avoid decay.
        let mut p = Param1::zeros(1);
        p.grad[0] = 0.123;
        let mut opt = Optimizer::new(crate::classifier::OptimizerKind::AdamW, 0.01);
        opt.step_params(|f| {
            f(ParamRef::Vector {
                name: "b".into(),
                value: &mut p.value,
                grad: &mut p.grad,
            })
        });
        assert!((p.value[0] + 0.01).abs() < 1e-6, "got {}", p.value[0]);
    }

    #[test]
    fn adamw_minimizes_a_quadratic() {
        // f(w) = (w - 3)^2, df/dw = 2 (w - 3).
        let mut p = Param2::zeros(1, 1);
        let mut opt = Optimizer::new(crate::classifier::OptimizerKind::AdamW, 0.05);
        for _ in 0..600 {
            p.grad[[0, 0]] = 2.0 * (p.value[[0, 0]] - 3.0);
            opt.step_params(visit_one(&mut p));
        }
        assert!((p.value[[0, 0]] - 3.0).abs() < 0.05, "got {}", p.value[[0, 0]]);
    }

    #[test]
    fn rmsprop_minimizes_a_quadratic() {
        let mut p = Param2::zeros(1, 1);
        p.value[[0, 0]] = -2.0;
        let mut opt = Optimizer::new(crate::classifier::OptimizerKind::RMSProp, 0.02);
        for _ in 0..600 {
            p.grad[[0, 0]] = 2.0 * (p.value[[0, 0]] - 3.0);
            opt.step_params(visit_one(&mut p));
        }
        assert!((p.value[[0, 0]] - 3.0).abs() < 0.05, "got {}", p.value[[0, 0]]);
    }

    #[test]
    fn weight_decay_hits_matrices_but_not_vectors() {
        // Zero gradients: the only movement comes from decay.
        let mut w = Param2 {
            value: array![[1.0]],
            grad: array![[0.0]],
        };
        let mut b = Param1 {
            value: array![1.0],
            grad: array![0.0],
        };
        let mut opt = Optimizer::new(crate::classifier::OptimizerKind::AdamW, 0.1);
        opt.step_params(|f| {
            f(ParamRef::Matrix {
                name: "w".into(),
                value: &mut w.value,
                grad: &mut w.grad,
            });
            f(ParamRef::Vector {
                name: "b".into(),
                value: &mut b.value,
                grad: &mut b.grad,
            });
        });
        assert!(w.value[[0, 0]] < 1.0, "matrix should decay");
        assert_eq!(b.value[0], 1.0, "vector must not decay");
    }

    #[test]
    fn identical_state_and_grads_update_identically() {
        let mut a = Param2 {
            value: array![[0.5, -0.5]],
            grad: array![[0.3, -0.7]],
        };
        let mut b = a.clone();
        let mut opt_a = Optimizer::new(crate::classifier::OptimizerKind::AdamW, 0.01);
        let mut opt_b = opt_a.clone();
        opt_a.step_params(visit_one(&mut a));
        opt_b.step_params(visit_one(&mut b));
        assert_eq!(a.value, b.value);
    }
}
