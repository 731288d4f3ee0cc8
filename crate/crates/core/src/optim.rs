//! AdamW with decoupled weight decay, the warmup/linear-decay schedule, and
//! global-norm gradient clipping.

use serde::{Deserialize, Serialize};

/// Linear ramp from 0 to `peak` over `warmup_ratio · total_steps`, then
/// linear decay to 0 at `total_steps`.
pub fn lr_schedule(step: usize, total_steps: usize, peak: f64, warmup_ratio: f64) -> f64 {
    if step >= total_steps {
        return 0.0;
    }
    let warmup = warmup_steps(total_steps, warmup_ratio);
    if step < warmup {
        peak * step as f64 / warmup as f64
    } else {
        peak * (total_steps - step) as f64 / (total_steps - warmup) as f64
    }
}

/// Whole number of warmup steps, so the peak lands exactly on a step.
pub fn warmup_steps(total_steps: usize, warmup_ratio: f64) -> usize {
    ((warmup_ratio * total_steps as f64).round() as usize).min(total_steps)
}

/// Scales `grad` in place so its L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamWState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamWState {
    pub fn new(n: usize) -> Self {
        Self {
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// `θ ← θ − lr·(m̂/(√v̂ + ε) + λ·θ)`.
    pub fn step(&mut self, cfg: &AdamWConfig, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            if lr == 0.0 {
                continue;
            }
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * params[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let (peak, ratio, total) = (1e-5, 0.06, 1000);
        assert_eq!(lr_schedule(0, total, peak, ratio), 0.0);
        assert_eq!(lr_schedule(60, total, peak, ratio), peak);
        assert_eq!(lr_schedule(total, total, peak, ratio), 0.0);
        assert!((lr_schedule(30, total, peak, ratio) - peak / 2.0).abs() < 1e-20);
    }

    #[test]
    fn schedule_piecewise_linear_single_peak() {
        let (peak, ratio, total) = (2e-3, 0.1, 200);
        let lrs: Vec<f64> = (0..=total).map(|s| lr_schedule(s, total, peak, ratio)).collect();
        let argmax = lrs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 20);
        assert!(lrs[..=argmax].windows(2).all(|w| w[1] >= w[0]));
        assert!(lrs[argmax..].windows(2).all(|w| w[1] <= w[0]));
        let step = peak / 20.0;
        for w in lrs.windows(2) {
            assert!((w[1] - w[0]).abs() <= step * (1.0 + 1e-9));
        }
    }

    #[test]
    fn zero_warmup_starts_at_peak() {
        assert_eq!(lr_schedule(0, 10, 1.0, 0.0), 1.0);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut small = vec![0.1, 0.1];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.1, 0.1]);
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut state = AdamWState::new(2);
        let mut p = vec![1.0, -2.0];
        for _ in 0..5 {
            state.step(&AdamWConfig::default(), &mut p, &[0.3, 0.4], 0.0);
        }
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut state = AdamWState::new(2);
        let mut p = vec![0.0, 0.0];
        state.step(&cfg, &mut p, &[2.0, -0.5], 0.1);
        assert!((p[0] + 0.1).abs() < 1e-6);
        assert!((p[1] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn decoupled_decay_without_gradient() {
        let mut state = AdamWState::new(1);
        let mut p = vec![2.0];
        state.step(&AdamWConfig::default(), &mut p, &[0.0], 0.5);
        assert!((p[0] - (2.0 - 0.5 * 0.01 * 2.0)).abs() < 1e-12);
    }
}
