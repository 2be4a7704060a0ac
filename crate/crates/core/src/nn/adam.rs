use super::mlp::{Dense, GradBundle, MlpParams};
use crate::error::{Error, Result};

/// Adam optimizer state: first/second moments shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Dense>,
    pub second_moment: Vec<Dense>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &MlpParams, lr: f64) -> Self {
        Self::with_betas(net, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(net: &MlpParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = net.zero_grads().layers;
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }
}

/// One bias-corrected Adam update of `net` in place.
///
/// Gradients are checked for finiteness before anything is modified, so a
/// failed step leaves both the network and the optimizer untouched.
pub fn adam_step(net: &mut MlpParams, grads: &GradBundle, opt: &mut AdamState) -> Result<()> {
    if grads.layers.len() != net.layers().len() || opt.first_moment.len() != net.layers().len() {
        return Err(Error::dim(
            "gradient layer count",
            net.layers().len(),
            grads.layers.len(),
        ));
    }
    for (l, (g, p)) in grads.layers.iter().zip(net.layers()).enumerate() {
        if g.weights.len() != p.weights.len() || g.biases.len() != p.biases.len() {
            return Err(Error::dim(
                "gradient layer size",
                p.weights.len() + p.biases.len(),
                g.weights.len() + g.biases.len(),
            ));
        }
        if g.weights.iter().chain(&g.biases).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { layer: l });
        }
    }

    opt.step_count += 1;
    let t = opt.step_count as i32;
    let bc1 = 1.0 - opt.beta1.powi(t);
    let bc2 = 1.0 - opt.beta2.powi(t);
    let (b1, b2, lr, eps) = (opt.beta1, opt.beta2, opt.lr, opt.eps);

    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    };

    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        let g = &grads.layers[l];
        let m = &mut opt.first_moment[l];
        let v = &mut opt.second_moment[l];
        update(
            &mut layer.weights,
            &g.weights,
            &mut m.weights,
            &mut v.weights,
        );
        update(&mut layer.biases, &g.biases, &mut m.biases, &mut v.biases);
    }
    Ok(())
}
