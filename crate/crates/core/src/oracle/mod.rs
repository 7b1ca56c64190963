//! Exact verification oracles, independent of the trained networks.
//!
//! [`run_verify`] runs the four sweeps used by the `verify` subcommand and
//! reports every measured quantity next to its bound.

mod chain;
mod gradcheck;
mod quadrature;

pub use chain::{
    dpo_inner_argument, score_inner_argument, tilt_distribution, tilted_kernel_apply, verify_dpo_equivalence,
    verify_theorem1, DiscreteChain, DpoEquivalenceReport, Theorem1Report, CHAIN_TOL,
};
pub use gradcheck::{fd_step, gradcheck_log_score, gradcheck_mlp, rel_error, GradcheckReport, REL_ERROR_FLOOR};
pub use quadrature::{
    shifted_gaussian_1d, tilted_gaussian_1d, verify_theorem3, GridDensity, LogScore1d, QuadratureGrid, Theorem3Report,
    MAX_TAIL_MASS,
};

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::RngStream;

pub const THEOREM1_TOL: f64 = 1e-10;
pub const THEOREM2_TOL: f64 = 1e-12;
pub const THEOREM3_FINAL_TV: f64 = 0.05;
pub const GRADCHECK_TOL: f64 = 1e-5;

/// Variances of the tilted-Gaussian sweep, descending.
pub const THEOREM3_SIGMA2: [f64; 3] = [0.04, 0.01, 0.0025];
pub const DPO_BETA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Theorem1,
    Theorem2,
    Theorem3,
    Gradcheck,
    All,
}

impl Suite {
    pub const INDIVIDUAL: [Suite; 4] = [Suite::Theorem1, Suite::Theorem2, Suite::Theorem3, Suite::Gradcheck];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Theorem1 => "theorem1",
            Suite::Theorem2 => "theorem2",
            Suite::Theorem3 => "theorem3",
            Suite::Gradcheck => "gradcheck",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem1" => Ok(Suite::Theorem1),
            "theorem2" => Ok(Suite::Theorem2),
            "theorem3" => Ok(Suite::Theorem3),
            "gradcheck" => Ok(Suite::Gradcheck),
            "all" => Ok(Suite::All),
            other => Err(Error::invalid(format!(
                "unknown suite {other:?} (expected theorem1, theorem2, theorem3, gradcheck or all)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    LessThan,
}

/// One measured quantity and the bound it must meet.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub comparison: Comparison,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, comparison: Comparison::AtMost, passed: value <= bound }
    }

    fn less_than(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, comparison: Comparison::LessThan, passed: value < bound }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        Self { suite: suite.name().into(), passed: checks.iter().all(|c| c.passed), checks }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    /// `key: value` lines, one block per suite.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(out, "passed: {}", self.passed);
        for s in &self.suites {
            let _ = writeln!(out, "[{}] passed: {}", s.suite, s.passed);
            for c in &s.checks {
                let op = match c.comparison {
                    Comparison::AtMost => "<=",
                    Comparison::LessThan => "<",
                };
                let _ =
                    writeln!(out, "{}.{}: {:e} ({op} {:e}) {}", s.suite, c.name, c.value, c.bound, verdict(c.passed));
            }
        }
        out
    }

    pub fn failing_suites(&self) -> Vec<&str> {
        self.suites.iter().filter(|s| !s.passed).map(|s| s.suite.as_str()).collect()
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

/// 100 random chains with up to 16 states and 8 steps.
pub fn theorem1_suite(seed: u64) -> Result<SuiteReport> {
    let mut max_error = 0.0f64;
    let mut max_mass = 0.0f64;
    for k in 0..100 {
        let mut rng = RngStream::derive(seed, 0x7431_0000 + k);
        let n = rng.int_inclusive(2, 16);
        let steps = rng.int_inclusive(1, 8);
        let r = verify_theorem1(&DiscreteChain::random(n, steps, &mut rng)?)?;
        max_error = max_error.max(r.max_error);
        max_mass = max_mass.max(r.max_mass_ratio_rel_error);
    }
    Ok(SuiteReport::new(
        Suite::Theorem1,
        vec![
            Check::at_most("max_error", max_error, THEOREM1_TOL),
            Check::at_most("max_mass_ratio_rel_error", max_mass, THEOREM1_TOL),
        ],
    ))
}

/// 100 tuples on each of 10 random chains.
pub fn theorem2_suite(seed: u64) -> Result<SuiteReport> {
    let mut max_diff = 0.0f64;
    let mut max_loss = 0.0f64;
    for k in 0..10 {
        let mut rng = RngStream::derive(seed, 0x7432_0000 + k);
        let n = rng.int_inclusive(2, 16);
        let steps = rng.int_inclusive(1, 8);
        let chain = DiscreteChain::random(n, steps, &mut rng)?;
        let r = verify_dpo_equivalence(&chain, 100, DPO_BETA, &mut rng)?;
        max_diff = max_diff.max(r.max_abs_diff);
        max_loss = max_loss.max(r.max_loss_diff);
    }
    Ok(SuiteReport::new(
        Suite::Theorem2,
        vec![
            Check::at_most("max_abs_diff", max_diff, THEOREM2_TOL),
            Check::at_most("max_loss_diff", max_loss, THEOREM2_TOL),
        ],
    ))
}

/// Grid used by the tilted-Gaussian sweep.
pub fn theorem3_grid() -> QuadratureGrid {
    QuadratureGrid { lo: -2.0, hi: 2.0, n_points: 20001 }
}

pub fn theorem3_suite() -> Result<SuiteReport> {
    let grid = theorem3_grid();
    let r = verify_theorem3(0.0, &THEOREM3_SIGMA2, LogScore1d::LogSigmoid, &grid)?;
    let fine = verify_theorem3(0.0, &THEOREM3_SIGMA2, LogScore1d::LogSigmoid, &grid.refined())?;
    let mut checks = Vec::new();
    for (s2, tv) in r.sigma2.iter().zip(&r.tv_distances) {
        checks.push(Check::at_most(&format!("tv[sigma2={s2}]"), *tv, 1.0));
    }
    let max_step = r.tv_distances.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::less_than("max_successive_tv_change", max_step, 0.0));
    checks.push(Check::at_most("final_tv", *r.tv_distances.last().unwrap(), THEOREM3_FINAL_TV));
    let drift = r.tv_distances.iter().zip(&fine.tv_distances).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("grid_refinement_drift", drift, 1e-8));
    Ok(SuiteReport::new(Suite::Theorem3, checks))
}

/// 100 random 2-8-8-1 nets and 100 random 2-16-1 classifiers.
pub fn gradcheck_suite(seed: u64) -> Result<SuiteReport> {
    let mlp = gradcheck_mlp(&[2, 8, 8, 1], 100, &mut RngStream::derive(seed, 0x6763_0001))?;
    let clf = gradcheck_log_score(2, 100, &mut RngStream::derive(seed, 0x6763_0002))?;
    Ok(SuiteReport::new(
        Suite::Gradcheck,
        vec![
            Check::at_most("mlp_backward_max_rel_error", mlp.max_rel_error, GRADCHECK_TOL),
            Check::at_most("log_score_grad_max_rel_error", clf.max_rel_error, GRADCHECK_TOL),
        ],
    ))
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    match suite {
        Suite::Theorem1 => theorem1_suite(seed),
        Suite::Theorem2 => theorem2_suite(seed),
        Suite::Theorem3 => theorem3_suite(),
        Suite::Gradcheck => gradcheck_suite(seed),
        Suite::All => Err(Error::invalid("run_suite takes a single suite")),
    }
}

pub fn run_verify(suite: Suite, seed: u64) -> Result<VerifyReport> {
    let suites = match suite {
        Suite::All => Suite::INDIVIDUAL.iter().map(|s| run_suite(*s, seed)).collect::<Result<Vec<_>>>()?,
        one => vec![run_suite(one, seed)?],
    };
    Ok(VerifyReport { seed, passed: suites.iter().all(|s| s.passed), suites })
}
