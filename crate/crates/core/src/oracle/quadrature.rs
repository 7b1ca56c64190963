//! One-dimensional tilted Gaussians on a trapezoid grid.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{log_sigmoid, sigmoid};

/// Largest base-Gaussian mass allowed outside the grid.
pub const MAX_TAIL_MASS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureGrid {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl QuadratureGrid {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid(format!("grid needs finite lo < hi, got [{lo}, {hi}]")));
        }
        if n_points < 101 {
            return Err(Error::invalid(format!("grid needs at least 101 points, got {n_points}")));
        }
        Ok(Self { lo, hi, n_points })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points - 1) as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|k| self.point(k))
    }

    /// Trapezoid weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.n_points {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().enumerate().map(|(k, v)| self.weight(k) * v).sum()
    }

    /// Same range with the spacing halved.
    pub fn refined(&self) -> Self {
        Self { n_points: 2 * self.n_points - 1, ..*self }
    }

    /// Base Gaussian mass falling outside `[lo, hi]`.
    pub fn tail_mass(&self, mu: f64, sigma2: f64) -> f64 {
        let scale = (2.0 * sigma2).sqrt();
        0.5 * libm::erfc((mu - self.lo) / scale) + 0.5 * libm::erfc((self.hi - mu) / scale)
    }
}

/// A log-score on the real line with its derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LogScore1d {
    Constant(f64),
    /// `c * x`.
    Linear(f64),
    /// `log sigmoid(x)`.
    LogSigmoid,
}

impl LogScore1d {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            LogScore1d::Constant(c) => c,
            LogScore1d::Linear(c) => c * x,
            LogScore1d::LogSigmoid => log_sigmoid(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            LogScore1d::Constant(_) => 0.0,
            LogScore1d::Linear(c) => c,
            LogScore1d::LogSigmoid => 1.0 - sigmoid(x),
        }
    }
}

/// Density values at the grid nodes, normalised by the trapezoid rule.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    pub grid: QuadratureGrid,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn moment(&self, k: i32) -> f64 {
        let v: Vec<f64> = self.grid.points().zip(&self.values).map(|(x, p)| x.powi(k) * p).collect();
        self.grid.integrate(&v)
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn variance(&self) -> f64 {
        self.moment(2) - self.mean().powi(2)
    }

    /// `0.5 * integral |p - q|` on the shared grid.
    pub fn total_variation(&self, other: &GridDensity) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::invalid("densities live on different grids"));
        }
        let diff: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).collect();
        Ok(0.5 * self.grid.integrate(&diff))
    }
}

fn check_gaussian(mu: f64, sigma2: f64, grid: &QuadratureGrid) -> Result<()> {
    if !(sigma2.is_finite() && sigma2 > 0.0) || !mu.is_finite() {
        return Err(Error::invalid(format!("need finite mu and sigma2 > 0, got mu = {mu}, sigma2 = {sigma2}")));
    }
    let tail = grid.tail_mass(mu, sigma2);
    if tail > MAX_TAIL_MASS {
        return Err(Error::invalid(format!(
            "grid [{}, {}] leaves base mass {tail:e} outside (limit {MAX_TAIL_MASS:e})",
            grid.lo, grid.hi
        )));
    }
    Ok(())
}

fn normalized(grid: &QuadratureGrid, log_density: impl Fn(f64) -> f64) -> GridDensity {
    let logs: Vec<f64> = grid.points().map(log_density).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut values: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let z = grid.integrate(&values);
    values.iter_mut().for_each(|v| *v /= z);
    GridDensity { grid: *grid, values }
}

/// Density proportional to `N(x; mu, sigma2) * exp(logscore(x))`.
pub fn tilted_gaussian_1d(mu: f64, sigma2: f64, logscore: LogScore1d, grid: &QuadratureGrid) -> Result<GridDensity> {
    check_gaussian(mu, sigma2, grid)?;
    Ok(normalized(grid, |x| -(x - mu).powi(2) / (2.0 * sigma2) + logscore.value(x)))
}

/// `N(mu + sigma2 * d/dx logscore(mu), sigma2)` on the grid: the law a
/// single corrected sampling step with unit weight produces.
pub fn shifted_gaussian_1d(mu: f64, sigma2: f64, logscore: LogScore1d, grid: &QuadratureGrid) -> Result<GridDensity> {
    check_gaussian(mu, sigma2, grid)?;
    let m = mu + sigma2 * logscore.derivative(mu);
    Ok(normalized(grid, |x| -(x - m).powi(2) / (2.0 * sigma2)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem3Report {
    pub sigma2: Vec<f64>,
    pub tv_distances: Vec<f64>,
}

impl Theorem3Report {
    pub fn strictly_decreasing(&self) -> bool {
        self.tv_distances.windows(2).all(|w| w[1] < w[0])
    }
}

/// TV distance between the exact tilted density and its mean-shift
/// approximation for each variance in a descending list.
pub fn verify_theorem3(
    mu: f64,
    sigma2_list: &[f64],
    logscore: LogScore1d,
    grid: &QuadratureGrid,
) -> Result<Theorem3Report> {
    if sigma2_list.is_empty() {
        return Err(Error::invalid("need at least one variance"));
    }
    if sigma2_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("variances must be strictly descending"));
    }
    let mut tv_distances = Vec::with_capacity(sigma2_list.len());
    for &s2 in sigma2_list {
        let exact = tilted_gaussian_1d(mu, s2, logscore, grid)?;
        let approx = shifted_gaussian_1d(mu, s2, logscore, grid)?;
        tv_distances.push(exact.total_variation(&approx)?);
    }
    Ok(Theorem3Report { sigma2: sigma2_list.to_vec(), tv_distances })
}

#[cfg(test)]
mod tests {
    use super::*;

    // reference values from adaptive arbitrary-precision quadrature
    const LOGSIG_MEAN_004: f64 = 0.019803890624889352;
    const LOGSIG_TV: [f64; 3] = [0.0024156801062918956, 0.0006046748477023858, 0.00015121595091680855];

    fn grid() -> QuadratureGrid {
        QuadratureGrid::new(-2.0, 2.0, 20001).unwrap()
    }

    #[test]
    fn constant_tilt_recovers_base() {
        let d = tilted_gaussian_1d(0.3, 0.04, LogScore1d::Constant(2.0), &grid()).unwrap();
        assert!((d.mean() - 0.3).abs() < 1e-6);
        assert!((d.variance() - 0.04).abs() < 1e-9);
    }

    #[test]
    fn linear_tilt_is_conjugate() {
        let d = tilted_gaussian_1d(0.1, 0.04, LogScore1d::Linear(1.7), &grid()).unwrap();
        assert!((d.mean() - (0.1 + 1.7 * 0.04)).abs() < 1e-6);
        let r = verify_theorem3(0.1, &[0.04, 0.01, 0.0025], LogScore1d::Linear(1.7), &grid()).unwrap();
        assert!(r.tv_distances.iter().all(|tv| *tv <= 1e-6));
    }

    #[test]
    fn log_sigmoid_mean_matches_reference_and_refinement() {
        let coarse = tilted_gaussian_1d(0.0, 0.04, LogScore1d::LogSigmoid, &grid()).unwrap();
        let fine = tilted_gaussian_1d(0.0, 0.04, LogScore1d::LogSigmoid, &grid().refined()).unwrap();
        assert!((coarse.mean() - fine.mean()).abs() < 1e-8);
        assert!((coarse.variance() - fine.variance()).abs() < 1e-8);
        assert!((coarse.mean() - LOGSIG_MEAN_004).abs() < 1e-10);
    }

    #[test]
    fn log_sigmoid_tv_decreases() {
        let r = verify_theorem3(0.0, &[0.04, 0.01, 0.0025], LogScore1d::LogSigmoid, &grid()).unwrap();
        assert!(r.strictly_decreasing());
        assert!(r.tv_distances[2] <= 0.05);
        for (tv, want) in r.tv_distances.iter().zip(LOGSIG_TV) {
            assert!((tv - want).abs() < 1e-8, "{tv} vs {want}");
        }
    }

    #[test]
    fn narrow_grid_and_bad_input_fail() {
        let narrow = QuadratureGrid::new(-0.5, 0.5, 1001).unwrap();
        assert!(tilted_gaussian_1d(0.0, 0.04, LogScore1d::LogSigmoid, &narrow).is_err());
        assert!(tilted_gaussian_1d(0.0, 0.0, LogScore1d::LogSigmoid, &grid()).is_err());
        assert!(QuadratureGrid::new(1.0, 1.0, 200).is_err());
        assert!(QuadratureGrid::new(0.0, 1.0, 100).is_err());
        assert!(verify_theorem3(0.0, &[0.01, 0.04], LogScore1d::LogSigmoid, &grid()).is_err());
        assert!(verify_theorem3(0.0, &[], LogScore1d::LogSigmoid, &grid()).is_err());
    }
}
