use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters a schedule is built from; this is what checkpoints record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    #[serde(rename = "T")]
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleParams {
    /// Fifty steps from 1e-4 to 0.04, leaving `abar_50` near 0.36. Ending at
    /// 0.02 keeps too much signal at `t = T` for an `N(0, I)` start; much
    /// larger betas make single-step DDIM inversion too coarse.
    fn default() -> Self {
        Self { steps: 50, beta_start: 1e-4, beta_end: 0.04 }
    }
}

/// Linear-beta variance schedule with derived tables. All accessors take a
/// 1-based timestep; `alpha_bar(0)` is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    params: ScheduleParams,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma2: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        Self::new(ScheduleParams { steps, beta_start, beta_end })
    }

    pub fn new(params: ScheduleParams) -> Result<Self> {
        let ScheduleParams { steps, beta_start, beta_end } = params;
        if steps < 2 {
            return Err(Error::invalid(format!("schedule needs T >= 2, got {steps}")));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!("need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")));
        }
        let span = (steps - 1) as f64;
        let beta: Vec<f64> = (0..steps).map(|i| beta_start + (beta_end - beta_start) * i as f64 / span).collect();
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        for a in &alpha {
            let prev = *alpha_bar.last().unwrap();
            alpha_bar.push(prev * a);
        }
        let sigma2 = (1..=steps).map(|t| (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]) * beta[t - 1]).collect();
        Ok(Self { params, beta, alpha, alpha_bar, sigma2 })
    }

    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    /// Total number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.params.steps
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid(format!("timestep {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// Reverse-step variance; zero at `t = 1`.
    pub fn sigma2(&self, t: usize) -> f64 {
        self.sigma2[t - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step_closed_form() {
        let s = NoiseSchedule::linear(2, 0.5, 0.5).unwrap();
        assert_eq!([s.alpha(1), s.alpha(2)], [0.5, 0.5]);
        assert_eq!([s.alpha_bar(0), s.alpha_bar(1), s.alpha_bar(2)], [1.0, 0.5, 0.25]);
        assert_eq!(s.sigma2(1), 0.0);
        assert!((s.sigma2(2) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(NoiseSchedule::linear(1, 0.1, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.3, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.1, 1.0).is_err());
        assert!(NoiseSchedule::linear(10, f64::NAN, 0.2).is_err());
        let s = NoiseSchedule::linear(10, 0.1, 0.2).unwrap();
        assert!(s.check_t(0).is_err() && s.check_t(11).is_err() && s.check_t(10).is_ok());
    }

    #[test]
    fn identities_hold() {
        for &(t, b0, b1) in &[(50, 1e-4, 0.02), (50, 2e-3, 0.4), (7, 0.1, 0.9), (1000, 1e-4, 0.02)] {
            let s = NoiseSchedule::linear(t, b0, b1).unwrap();
            let product: f64 = (1..=t).map(|i| 1.0 - s.beta(i)).product();
            assert!((s.alpha_bar(t) - product).abs() <= 1e-14 * product);
            for i in 1..=t {
                assert!(s.beta(i) > 0.0 && s.beta(i) < 1.0);
                assert_eq!(s.alpha(i), 1.0 - s.beta(i));
                assert!((s.alpha_bar(i) - s.alpha_bar(i - 1) * s.alpha(i)).abs() <= 1e-14);
                assert!(s.alpha_bar(i) < s.alpha_bar(i - 1));
                let expected = (1.0 - s.alpha_bar(i - 1)) / (1.0 - s.alpha_bar(i)) * s.beta(i);
                assert!((s.sigma2(i) - expected).abs() <= 1e-14);
                if i > 1 {
                    assert!(s.beta(i) >= s.beta(i - 1));
                    assert!(s.sigma2(i) > 0.0);
                }
            }
            assert_eq!(s.sigma2(1), 0.0);
        }
    }

    #[test]
    fn ddpm_reference_schedule_regression() {
        // Pinned from an independent running product of (1 - beta_t).
        let s = NoiseSchedule::linear(50, 1e-4, 0.02).unwrap();
        let mut prod = 1.0f64;
        for i in 0..50 {
            prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 49.0);
        }
        assert!((s.alpha_bar(50) - prod).abs() <= 1e-15);
        assert!((s.alpha_bar(50) - ALPHA_BAR_50_REFERENCE).abs() <= 1e-15);
    }

    const ALPHA_BAR_50_REFERENCE: f64 = 0.602951597329715;
    const DEFAULT_ALPHA_BAR_50_REFERENCE: f64 = 0.36193824197502134;

    #[test]
    fn default_schedule_regression() {
        let s = NoiseSchedule::new(ScheduleParams::default()).unwrap();
        assert_eq!(s.steps(), 50);
        let rel = (s.alpha_bar(50) - DEFAULT_ALPHA_BAR_50_REFERENCE).abs() / DEFAULT_ALPHA_BAR_50_REFERENCE;
        assert!(rel <= 1e-13, "{}", s.alpha_bar(50));
    }
}
