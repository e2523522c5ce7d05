use super::dense::Tensor;
use crate::error::{Error, Result};

/// Plain gradient step returning fresh tensors: `w' = w - lr * grad`.
///
/// Used for the virtual (lookahead) update; `params` is left untouched.
pub fn sgd_virtual_step(params: &[Tensor], grads: &[Tensor], lr: f64) -> Result<Vec<Tensor>> {
    if params.len() != grads.len() {
        return Err(Error::invalid(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    params
        .iter()
        .zip(grads)
        .map(|(p, g)| {
            let mut out = p.clone();
            out.axpy(-lr, g)?;
            Ok(out)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one parameter group.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        Self {
            config,
            step: 0,
            m: params.iter().map(Tensor::zeros_like).collect(),
            v: params.iter().map(Tensor::zeros_like).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid("Adam state does not match parameter group"));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_step_arithmetic() {
        let w = vec![Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap()];
        let g = vec![Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap()];
        let out = sgd_virtual_step(&w, &g, 0.5).unwrap();
        assert_eq!(out[0].data(), &[0.5, 2.5]);
        assert_eq!(w[0].data(), &[1.0, 2.0]);
    }

    #[test]
    fn virtual_step_identities() {
        let w = vec![Tensor::matrix(2, 2, vec![0.3, -1.0, 4.0, 2.0]).unwrap()];
        let g = vec![Tensor::matrix(2, 2, vec![5.0, 1.0, -3.0, 2.0]).unwrap()];
        assert_eq!(sgd_virtual_step(&w, &g, 0.0).unwrap(), w);
        let zero = vec![Tensor::zeros(2, 2)];
        assert_eq!(sgd_virtual_step(&w, &zero, 0.7).unwrap(), w);
    }

    #[test]
    fn virtual_step_shape_mismatch() {
        let w = vec![Tensor::zeros(2, 2)];
        let g = vec![Tensor::zeros(1, 2)];
        assert!(matches!(sgd_virtual_step(&w, &g, 0.1), Err(Error::Shape { .. })));
    }

    #[test]
    fn adam_first_step_moves_by_lr_times_sign() {
        let mut p = vec![Tensor::matrix(1, 4, vec![0.0, 1.0, -2.0, 3.0]).unwrap()];
        let g = vec![Tensor::matrix(1, 4, vec![0.5, -3.0, 1e-3, -10.0]).unwrap()];
        let cfg = AdamConfig::with_lr(0.01);
        let mut st = AdamState::new(cfg, &p);
        let before = p[0].clone();
        st.step(&mut p, &g).unwrap();
        for k in 0..4 {
            let gk = g[0].data()[k];
            // m̂ = g, v̂ = g² at t = 1, so the update is lr * g / (|g| + eps).
            let expected = -0.01 * gk / (gk.abs() + cfg.eps);
            let delta = p[0].data()[k] - before.data()[k];
            assert!((delta - expected).abs() < 1e-15);
            assert!((delta + 0.01 * gk.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn adam_zero_grad_leaves_params() {
        let mut p = vec![Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap()];
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default(), &p);
        st.step(&mut p, &[Tensor::zeros(1, 2)]).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.steps(), 1);
    }
}
