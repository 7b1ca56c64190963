//! Finite-state diffusion chains and the exact tilting identities.
//!
//! `N_t` below is the multiplicative normaliser of the tilted marginal,
//! `p^_t = N_t * p_t * s`, i.e. `N_t = 1 / sum_i p_t(i) s_i`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{log_sigmoid, RngStream};

/// Tolerance for kernel rows, marginal sums and marginal consistency.
pub const CHAIN_TOL: f64 = 1e-14;

/// Reverse-time chain over `n` states. `kernel(t)` is row-stochastic with
/// row `i` the law of the state at `t - 1` given state `i` at `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteChain {
    n: usize,
    steps: usize,
    /// `kernels[t - 1]` holds `K_t`, row-major `n x n`.
    kernels: Vec<Vec<f64>>,
    /// `marginals[t]` holds `p_t` for `t = 0..=T`.
    marginals: Vec<Vec<f64>>,
    score: Vec<f64>,
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check_prob(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > CHAIN_TOL {
        return Err(Error::invalid(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

fn check_score(s: &[f64]) -> Result<()> {
    if let Some(i) = s.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid(format!("score entry {i} is {} but must be positive", s[i])));
    }
    Ok(())
}

/// `K^T p`: the law at `t - 1` when the state at `t` has law `p`.
fn push_forward(k: &[f64], p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut out = vec![0.0; n];
    for (i, pi) in p.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += pi * k[i * n + j];
        }
    }
    out
}

fn dirichlet1(n: usize, rng: &mut RngStream) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = (0..n).map(|_| rng.exp1()).collect();
        if draws.iter().all(|v| *v > 0.0) {
            let sum: f64 = draws.iter().sum();
            return draws.into_iter().map(|v| v / sum).collect();
        }
    }
}

impl DiscreteChain {
    /// Builds a chain from its kernels (`K_1..K_T`), the top marginal and the
    /// score. Lower marginals are pushed forward and renormalised.
    pub fn new(kernels: Vec<Vec<f64>>, p_top: Vec<f64>, score: Vec<f64>) -> Result<Self> {
        let n = p_top.len();
        let steps = kernels.len();
        if n == 0 || steps == 0 {
            return Err(Error::invalid("chain needs at least one state and one step"));
        }
        let mut marginals = vec![Vec::new(); steps + 1];
        marginals[steps] = p_top;
        for t in (1..=steps).rev() {
            if kernels[t - 1].len() != n * n {
                return Err(Error::invalid(format!("kernel {t} is not {n} x {n}")));
            }
            let mut p = push_forward(&kernels[t - 1], &marginals[t]);
            let sum: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= sum);
            marginals[t - 1] = p;
        }
        Self::from_parts(kernels, marginals, score)
    }

    /// Builds a chain from every component and checks all invariants.
    pub fn from_parts(kernels: Vec<Vec<f64>>, marginals: Vec<Vec<f64>>, score: Vec<f64>) -> Result<Self> {
        let n = score.len();
        let steps = kernels.len();
        if n == 0 || steps == 0 || marginals.len() != steps + 1 {
            return Err(Error::invalid("chain needs T >= 1 kernels and T + 1 marginals"));
        }
        check_score(&score)?;
        for (k, kern) in kernels.iter().enumerate() {
            if kern.len() != n * n {
                return Err(Error::invalid(format!("kernel {} is not {n} x {n}", k + 1)));
            }
            for i in 0..n {
                check_prob(&kern[i * n..(i + 1) * n], &format!("row {i} of kernel {}", k + 1))?;
            }
        }
        for (t, p) in marginals.iter().enumerate() {
            if p.len() != n {
                return Err(Error::invalid(format!("marginal {t} has {} entries, expected {n}", p.len())));
            }
            check_prob(p, &format!("marginal {t}"))?;
        }
        for t in 1..=steps {
            let err = linf(&push_forward(&kernels[t - 1], &marginals[t]), &marginals[t - 1]);
            if err > CHAIN_TOL {
                return Err(Error::invalid(format!("marginal {} is not K_{t}^T p_{t} (error {err:e})", t - 1)));
            }
        }
        Ok(Self { n, steps, kernels, marginals, score })
    }

    /// Kernel rows and `p_T` from symmetric Dirichlet(1), scores
    /// `exp(U(-2, 2))`.
    pub fn random(n: usize, steps: usize, rng: &mut RngStream) -> Result<Self> {
        if n == 0 || steps == 0 {
            return Err(Error::invalid("chain needs at least one state and one step"));
        }
        let kernels = (0..steps).map(|_| (0..n).flat_map(|_| dirichlet1(n, rng)).collect()).collect();
        let p_top = dirichlet1(n, rng);
        let score = (0..n).map(|_| (4.0 * rng.uniform() - 2.0).exp()).collect();
        Self::new(kernels, p_top, score)
    }

    pub fn states(&self) -> usize {
        self.n
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn kernel(&self, t: usize) -> &[f64] {
        &self.kernels[t - 1]
    }

    pub fn marginal(&self, t: usize) -> &[f64] {
        &self.marginals[t]
    }

    pub fn score(&self) -> &[f64] {
        &self.score
    }

    /// `N_t = 1 / sum_i p_t(i) s_i`.
    pub fn normalizer(&self, t: usize) -> f64 {
        1.0 / self.marginals[t].iter().zip(&self.score).map(|(p, s)| p * s).sum::<f64>()
    }

    /// Base transition probability `p(j at t-1 | i at t)`.
    pub fn transition(&self, t: usize, i: usize, j: usize) -> f64 {
        self.kernels[t - 1][i * self.n + j]
    }

    /// Tilted (unnormalised) transition `K(j|i) s_j / s_i`.
    pub fn tilted_transition(&self, t: usize, i: usize, j: usize) -> f64 {
        self.transition(t, i, j) * self.score[j] / self.score[i]
    }
}

/// `(p * s) / sum(p * s)`.
pub fn tilt_distribution(p: &[f64], s: &[f64]) -> Result<Vec<f64>> {
    if p.len() != s.len() || p.is_empty() {
        return Err(Error::invalid(format!("tilt of {} probabilities by {} scores", p.len(), s.len())));
    }
    check_score(s)?;
    let w: Vec<f64> = p.iter().zip(s).map(|(a, b)| a * b).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("tilted mass is zero"));
    }
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// `v_j = sum_i p_t(i) K(j|i) s_j / s_i`; the kernel is not row-normalised,
/// so `v` need not sum to one.
pub fn tilted_kernel_apply(kernel: &[f64], s: &[f64], p_t: &[f64]) -> Result<Vec<f64>> {
    let n = p_t.len();
    if s.len() != n || kernel.len() != n * n {
        return Err(Error::invalid(format!(
            "kernel of {} entries, {} scores and {n} probabilities do not agree",
            kernel.len(),
            s.len()
        )));
    }
    check_score(s)?;
    let mut v = vec![0.0; n];
    for i in 0..n {
        let w = p_t[i] / s[i];
        for j in 0..n {
            v[j] += w * kernel[i * n + j] * s[j];
        }
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub max_error: f64,
    /// L-infinity error at `t - 1` for `t = T, ..., 1`.
    pub per_step_errors: Vec<f64>,
    /// Mass of the propagated vector before renormalisation.
    pub mass_ratios: Vec<f64>,
    /// `N_t / N_{t-1}` computed directly from the marginals.
    pub expected_mass_ratios: Vec<f64>,
    pub max_mass_ratio_rel_error: f64,
}

/// Propagates `tilt(p_T, s)` through the tilted kernels, renormalising
/// after each step, and compares with `tilt(p_{t-1}, s)`.
pub fn verify_theorem1(chain: &DiscreteChain) -> Result<Theorem1Report> {
    let s = chain.score();
    let mut p_hat = tilt_distribution(chain.marginal(chain.steps()), s)?;
    let mut report = Theorem1Report {
        max_error: 0.0,
        per_step_errors: Vec::with_capacity(chain.steps()),
        mass_ratios: Vec::with_capacity(chain.steps()),
        expected_mass_ratios: Vec::with_capacity(chain.steps()),
        max_mass_ratio_rel_error: 0.0,
    };
    for t in (1..=chain.steps()).rev() {
        let v = tilted_kernel_apply(chain.kernel(t), s, &p_hat)?;
        let mass: f64 = v.iter().sum();
        p_hat = v.into_iter().map(|x| x / mass).collect();
        let err = linf(&p_hat, &tilt_distribution(chain.marginal(t - 1), s)?);
        let expected = chain.normalizer(t) / chain.normalizer(t - 1);
        report.max_error = report.max_error.max(err);
        report.max_mass_ratio_rel_error = report.max_mass_ratio_rel_error.max((mass - expected).abs() / expected);
        report.per_step_errors.push(err);
        report.mass_ratios.push(mass);
        report.expected_mass_ratios.push(expected);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DpoEquivalenceReport {
    pub n_tuples: usize,
    /// Tuples redrawn because a base transition had zero probability.
    pub redrawn: usize,
    /// Max difference of the two inner arguments.
    pub max_abs_diff: f64,
    /// Max difference of the two per-tuple losses.
    pub max_loss_diff: f64,
}

/// Inner argument of the per-step DPO loss with the tilted kernel as policy
/// and the base kernel as reference.
pub fn dpo_inner_argument(chain: &DiscreteChain, beta: f64, t: usize, w: (usize, usize), l: (usize, usize)) -> f64 {
    let ratio = |(i, j): (usize, usize)| chain.tilted_transition(t, i, j).ln() - chain.transition(t, i, j).ln();
    beta * chain.steps() as f64 * (ratio(w) - ratio(l))
}

/// The same argument written through score log-ratios only.
pub fn score_inner_argument(chain: &DiscreteChain, beta: f64, w: (usize, usize), l: (usize, usize)) -> f64 {
    let s = chain.score();
    let ratio = |(i, j): (usize, usize)| s[j].ln() - s[i].ln();
    beta * chain.steps() as f64 * (ratio(w) - ratio(l))
}

/// Draws random `(t, i_w, j_w, i_l, j_l)` tuples and compares the DPO and
/// score-ratio inner arguments and losses.
pub fn verify_dpo_equivalence(
    chain: &DiscreteChain,
    n_tuples: usize,
    beta: f64,
    rng: &mut RngStream,
) -> Result<DpoEquivalenceReport> {
    if n_tuples == 0 {
        return Err(Error::invalid("need at least one tuple"));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let n = chain.states();
    let mut report = DpoEquivalenceReport { n_tuples, redrawn: 0, max_abs_diff: 0.0, max_loss_diff: 0.0 };
    let mut done = 0;
    while done < n_tuples {
        let t = rng.int_inclusive(1, chain.steps());
        let w = (rng.index(n), rng.index(n));
        let l = (rng.index(n), rng.index(n));
        if chain.transition(t, w.0, w.1) == 0.0 || chain.transition(t, l.0, l.1) == 0.0 {
            report.redrawn += 1;
            continue;
        }
        let a = dpo_inner_argument(chain, beta, t, w, l);
        let b = score_inner_argument(chain, beta, w, l);
        report.max_abs_diff = report.max_abs_diff.max((a - b).abs());
        report.max_loss_diff = report.max_loss_diff.max((log_sigmoid(b) - log_sigmoid(a)).abs());
        done += 1;
    }
    Ok(report)
}
