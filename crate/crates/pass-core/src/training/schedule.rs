//! Linear warmup followed by cosine decay to zero.

use super::TrainConfig;
use crate::error::{Error, Result};

/// Learning rate at `step`: linear from 0 to `cfg.lr` over the warmup
/// steps, then cosine decay reaching 0 at `cfg.total_steps`.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> Result<f64> {
    cfg.validate()?;
    if step > cfg.total_steps {
        return Err(Error::InvalidParameter(format!(
            "step {step} beyond total_steps {}",
            cfg.total_steps
        )));
    }
    if step < cfg.warmup_steps {
        return Ok(cfg.lr * step as f64 / cfg.warmup_steps as f64);
    }
    let decay_steps = cfg.total_steps - cfg.warmup_steps;
    if decay_steps == 0 {
        return Ok(0.0);
    }
    let progress = (step - cfg.warmup_steps) as f64 / decay_steps as f64;
    Ok(cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig {
            lr: 0.01,
            total_steps: 10_000,
            warmup_steps: 2_000,
            ..TrainConfig::lookahead_default()
        }
    }

    #[test]
    fn endpoints() {
        let c = cfg();
        assert_eq!(lr_at(0, &c).unwrap(), 0.0);
        assert_eq!(lr_at(2_000, &c).unwrap(), 0.01);
        assert!(lr_at(10_000, &c).unwrap().abs() < 1e-18);
    }

    #[test]
    fn midpoint_matches_closed_form() {
        let c = cfg();
        // halfway through decay: lr * cos^2(pi/4) = lr / 2
        let mid = (c.warmup_steps + c.total_steps) / 2;
        let expect = c.lr * (std::f64::consts::PI / 4.0).cos().powi(2);
        assert!((lr_at(mid, &c).unwrap() - expect).abs() < 1e-15);
        assert!((lr_at(mid, &c).unwrap() - c.lr / 2.0).abs() < 1e-15);
    }

    #[test]
    fn warmup_is_linear() {
        let c = cfg();
        assert!((lr_at(500, &c).unwrap() - 0.0025).abs() < 1e-15);
        assert!((lr_at(1_000, &c).unwrap() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_step_is_an_error() {
        assert!(matches!(
            lr_at(10_001, &cfg()),
            Err(Error::InvalidParameter(_))
        ));
    }
}
