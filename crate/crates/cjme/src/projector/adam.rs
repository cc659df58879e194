//! Adam with bias correction.

use super::{Mlp, MlpGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper {
            lr,
            ..Default::default()
        }
    }
}

/// First/second moment estimates for one tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn zeros(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One Adam update on a flat tensor. `t` is the 1-based step count.
/// Non-finite gradients are rejected, naming the offending tensor.
pub fn adam_step(
    name: &str,
    theta: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    hyper: &AdamHyper,
    t: u64,
) -> Result<()> {
    assert!(t >= 1, "adam step count is 1-based");
    if theta.len() != grad.len() || state.m.len() != theta.len() {
        return Err(Error::Shape {
            op: "adam_step",
            expected: format!("{} elements", theta.len()),
            got: format!("grad {}, state {}", grad.len(), state.m.len()),
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            tensor: name.to_string(),
        });
    }
    let bc1 = 1.0 - hyper.beta1.powi(t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(t as i32);
    for i in 0..theta.len() {
        let g = grad[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    Ok(())
}

/// Optimizer state for a set of named MLPs, one tensor pair per layer.
#[derive(Debug, Clone)]
pub struct ModelOptimizer {
    nets: Vec<(String, Vec<(AdamState, AdamState)>)>,
    step: u64,
}

impl ModelOptimizer {
    pub fn new() -> Self {
        ModelOptimizer {
            nets: Vec::new(),
            step: 0,
        }
    }

    pub fn register(&mut self, name: &str, mlp: &Mlp) {
        let states = mlp
            .layers
            .iter()
            .map(|l| {
                (
                    AdamState::zeros(l.w.rows() * l.w.cols()),
                    AdamState::zeros(l.b.len()),
                )
            })
            .collect();
        self.nets.push((name.to_string(), states));
    }

    pub fn begin_step(&mut self) -> u64 {
        self.step += 1;
        self.step
    }

    /// Applies accumulated gradients to one registered network.
    pub fn apply(&mut self, name: &str, mlp: &mut Mlp, grads: &MlpGrads, hyper: &AdamHyper) -> Result<()> {
        let t = self.step;
        let entry = self
            .nets
            .iter_mut()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("optimizer: unknown network {name}"));
        for (l, (layer, g)) in mlp.layers.iter_mut().zip(&grads.layers).enumerate() {
            let (ref mut mw, ref mut mb) = entry.1[l];
            adam_step(
                &format!("{name}.layer{l}.w"),
                layer.w.data_mut(),
                g.w.data(),
                mw,
                hyper,
                t,
            )?;
            adam_step(&format!("{name}.layer{l}.b"), &mut layer.b, &g.b, mb, hyper, t)?;
        }
        Ok(())
    }
}

impl Default for ModelOptimizer {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut theta = vec![0.5, -1.0];
        let grad = vec![0.0, 0.0];
        let mut st = AdamState::zeros(2);
        adam_step("t", &mut theta, &grad, &mut st, &AdamHyper::default(), 1).unwrap();
        assert_eq!(theta, vec![0.5, -1.0]);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        let mut theta = vec![0.0];
        let grad = vec![1.0];
        let mut st = AdamState::zeros(1);
        let hyper = AdamHyper::default();
        adam_step("t", &mut theta, &grad, &mut st, &hyper, 1).unwrap();
        // m_hat = v_hat = 1 at t=1, so the update is lr/(1+eps).
        let expected = hyper.lr / (1.0 + hyper.eps);
        assert!((theta[0] + expected).abs() < 1e-12, "{}", theta[0]);
        assert!((theta[0].abs() - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut theta = vec![1.0, -2.0, 0.25];
            let mut st = AdamState::zeros(3);
            let hyper = AdamHyper::default();
            for t in 1..=50u64 {
                let grad: Vec<f64> = theta.iter().map(|x| 2.0 * x).collect();
                adam_step("t", &mut theta, &grad, &mut st, &hyper, t).unwrap();
            }
            theta
        };
        assert_eq!(run(), run()); // bitwise
    }

    #[test]
    fn non_finite_gradient_rejected_with_name() {
        let mut theta = vec![0.0];
        let grad = vec![f64::NAN];
        let mut st = AdamState::zeros(1);
        match adam_step("g_audio.layer0.w", &mut theta, &grad, &mut st, &AdamHyper::default(), 1) {
            Err(Error::NonFiniteGradient { tensor }) => assert_eq!(tensor, "g_audio.layer0.w"),
            other => panic!("expected NonFiniteGradient, got {other:?}"),
        }
    }
}
