//! Decoupled-weight-decay Adam over flat f32 parameter slices, with f64
//! moment buffers.

use super::TrainConfig;

struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u64,
    slots: Vec<Slot>,
}

impl AdamW {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            t: 0,
            slots: Vec::new(),
        }
    }

    /// Registers one parameter tensor; returns its slot id.
    pub fn register(&mut self, size: usize) -> usize {
        self.slots.push(Slot {
            m: vec![0.0; size],
            v: vec![0.0; size],
        });
        self.slots.len() - 1
    }

    /// Advances the shared step counter; call once per optimizer step.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    pub fn update(&mut self, slot: usize, lr: f64, param: &mut [f32], grad: &[f64]) {
        debug_assert!(self.t > 0, "begin_step before update");
        let s = &mut self.slots[slot];
        debug_assert_eq!(param.len(), grad.len());
        debug_assert_eq!(param.len(), s.m.len());
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..param.len() {
            let g = grad[i];
            s.m[i] = self.beta1 * s.m[i] + (1.0 - self.beta1) * g;
            s.v[i] = self.beta2 * s.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = s.m[i] / bc1;
            let v_hat = s.v[i] / bc2;
            let w = param[i] as f64;
            param[i] = (w - lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * w)) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_matches_hand_computation() {
        let cfg = TrainConfig {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            ..TrainConfig::lookahead_default()
        };
        let mut opt = AdamW::new(&cfg);
        let slot = opt.register(1);
        let mut p = [1.0f32];
        opt.begin_step();
        opt.update(slot, 0.1, &mut p, &[0.5]);
        // t=1: m_hat = g, v_hat = g^2 -> step of lr * g/|g| = lr
        let expect = 1.0 - 0.1 * (0.5 / (0.5 + 1e-8));
        assert!((p[0] as f64 - expect).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let cfg = TrainConfig::lookahead_default();
        let mut opt = AdamW::new(&cfg);
        let slot = opt.register(3);
        let mut p = [0.25f32, -1.5, 3.0];
        let before = p;
        for _ in 0..10 {
            opt.begin_step();
            opt.update(slot, 0.01, &mut p, &[0.0, 0.0, 0.0]);
        }
        assert_eq!(p, before);
    }
}
