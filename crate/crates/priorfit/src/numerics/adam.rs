//! Adaptive-moment optimizer with bias correction and optional global-norm
//! gradient clipping. Steps with non-finite gradients are skipped and counted.

use super::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// Clip gradients to this global L2 norm before the update; `None` disables.
    pub clip_norm: Option<f32>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: Some(1.0) }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    pub skipped_steps: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(&p.shape)).collect(),
            v: params.iter().map(|p| Tensor::zeros(&p.shape)).collect(),
            t: 0,
            skipped_steps: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update over all parameters; `lr` overrides the config rate so a
    /// schedule can drive it. Returns false when the step was skipped.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], cfg: &AdamConfig, lr: f32) -> bool {
        assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
        assert_eq!(params.len(), self.m.len(), "optimizer state length mismatch");
        for (p, g) in params.iter().zip(grads.iter()) {
            assert_eq!(p.shape, g.shape, "param/grad shape mismatch: {:?} vs {:?}", p.shape, g.shape);
        }
        if grads.iter().any(|g| !g.all_finite()) {
            self.skipped_steps += 1;
            return false;
        }

        let mut scale = 1.0f32;
        if let Some(max_norm) = cfg.clip_norm {
            let sq: f64 = grads
                .iter()
                .flat_map(|g| g.data.iter())
                .map(|&v| (v as f64) * (v as f64))
                .sum();
            let norm = sq.sqrt() as f32;
            if norm > max_norm {
                scale = max_norm / norm;
            }
        }

        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = &mut params[i];
            for j in 0..p.data.len() {
                let g = grads[i].data[j] * scale;
                m.data[j] = cfg.beta1 * m.data[j] + (1.0 - cfg.beta1) * g;
                v.data[j] = cfg.beta2 * v.data[j] + (1.0 - cfg.beta2) * g * g;
                let mhat = m.data[j] / bc1;
                let vhat = v.data[j] / bc2;
                p.data[j] -= lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![Tensor::new(vec![2], vec![1.0, -2.0])];
        let grads = vec![Tensor::zeros(&[2])];
        let mut st = AdamState::new(&params);
        let cfg = AdamConfig::default();
        st.step(&mut params, &grads, &cfg, cfg.lr);
        assert_eq!(params[0].data, vec![1.0, -2.0]);
    }

    #[test]
    fn lr_zero_is_identity() {
        let mut params = vec![Tensor::new(vec![2], vec![1.0, -2.0])];
        let grads = vec![Tensor::new(vec![2], vec![0.3, -0.7])];
        let mut st = AdamState::new(&params);
        st.step(&mut params, &grads, &AdamConfig::default(), 0.0);
        assert_eq!(params[0].data, vec![1.0, -2.0]);
    }

    #[test]
    fn constant_gradient_step_approaches_lr_sign() {
        // With a constant gradient g, the bias-corrected Adam step tends to
        // lr * sign(g) once the moment estimates settle.
        let mut params = vec![Tensor::new(vec![1], vec![0.0])];
        let grads = vec![Tensor::new(vec![1], vec![0.5])];
        let cfg = AdamConfig { clip_norm: None, ..Default::default() };
        let mut st = AdamState::new(&params);
        let mut prev = params[0].data[0];
        let mut last_step = 0.0;
        for _ in 0..2000 {
            st.step(&mut params, &grads, &cfg, cfg.lr);
            last_step = prev - params[0].data[0];
            prev = params[0].data[0];
        }
        assert!((last_step - cfg.lr).abs() < 0.05 * cfg.lr, "step {last_step} vs lr {}", cfg.lr);
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut params = vec![Tensor::new(vec![1], vec![1.0])];
        let grads = vec![Tensor::new(vec![1], vec![f32::NAN])];
        let mut st = AdamState::new(&params);
        let cfg = AdamConfig::default();
        assert!(!st.step(&mut params, &grads, &cfg, cfg.lr));
        assert_eq!(st.skipped_steps, 1);
        assert_eq!(params[0].data, vec![1.0]);
    }
}
