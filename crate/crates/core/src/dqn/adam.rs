//! Adam optimizer.

use super::network::QNetwork;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: QNetwork,
    pub second_moment: QNetwork,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_hat: f64,
}

impl AdamState {
    pub fn new(net: &QNetwork) -> Self {
        let zeros = QNetwork::zeros(&net.layer_dims()).expect("dims of a valid network");
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_hat: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `net` along `grads`.
pub fn adam_step(opt: &mut AdamState, net: &mut QNetwork, grads: &QNetwork, lr: f64) -> Result<()> {
    let dims = net.layer_dims();
    if grads.layer_dims() != dims || opt.first_moment.layer_dims() != dims {
        return Err(Error::domain("optimizer, network and gradient shapes differ"));
    }
    opt.step_count += 1;
    let t = opt.step_count as i32;
    let (b1, b2, eps) = (opt.beta1, opt.beta2, opt.epsilon_hat);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);

    let params = net.params_mut();
    let m = opt.first_moment.params_mut();
    let v = opt.second_moment.params_mut();
    let g = grads.params();
    for (((p, m), v), g) in params.into_iter().zip(m).zip(v).zip(g) {
        for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
