//! Central finite-difference checks of the analytic gradients.

use serde::Serialize;

use crate::error::Result;
use crate::nn::{mlp_backward, Mlp, RngStream, Tensor};
use crate::prefclassifier::PreferenceClassifier;

/// Denominator floor for relative errors, so gradients that are
/// numerically zero are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|, REL_ERROR_FLOOR)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// Step `1e-5 * (1 + |p|)`.
pub fn fd_step(p: f64) -> f64 {
    1e-5 * (1.0 + p.abs())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub instances: usize,
    pub components: usize,
    pub max_rel_error: f64,
}

impl GradcheckReport {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.components += 1;
        self.max_rel_error = self.max_rel_error.max(rel_error(analytic, numeric));
    }
}

fn weighted_output(net: &Mlp, x: &Tensor, upstream: &Tensor) -> Result<f64> {
    let out = net.forward(x)?;
    Ok(out.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum())
}

/// Checks every parameter gradient of random nets of shape `sizes` on the
/// objective `sum(upstream * net(x))` with a random batch of three rows.
pub fn gradcheck_mlp(sizes: &[usize], instances: usize, rng: &mut RngStream) -> Result<GradcheckReport> {
    let mut report = GradcheckReport { instances, ..Default::default() };
    let (d_in, d_out) = (sizes[0], sizes[sizes.len() - 1]);
    for _ in 0..instances {
        let mut net = Mlp::init(sizes, rng)?;
        let x = rng.gaussian(&[3, d_in])?;
        let upstream = rng.gaussian(&[3, d_out])?;
        let (grads, _) = mlp_backward(&net, &x, &upstream)?;
        let analytic = grads.flat();
        let mut params = net.flat_params();
        for k in 0..params.len() {
            let p = params[k];
            let h = fd_step(p);
            params[k] = p + h;
            net.set_flat_params(&params)?;
            let up = weighted_output(&net, &x, &upstream)?;
            params[k] = p - h;
            net.set_flat_params(&params)?;
            let down = weighted_output(&net, &x, &upstream)?;
            params[k] = p;
            report.record(analytic[k], (up - down) / (2.0 * h));
        }
        net.set_flat_params(&params)?;
    }
    Ok(report)
}

/// Checks `grad_x log S(x)` of random `d-16-1` classifiers at one random
/// point each.
pub fn gradcheck_log_score(data_dim: usize, instances: usize, rng: &mut RngStream) -> Result<GradcheckReport> {
    let mut report = GradcheckReport { instances, ..Default::default() };
    for _ in 0..instances {
        let clf = PreferenceClassifier::init(data_dim, &[16], false, 1, rng)?;
        let x = rng.gaussian(&[1, data_dim])?.scale(2.0);
        let analytic = clf.log_score_grad(&x, 1)?.grad;
        for k in 0..data_dim {
            let h = fd_step(x.data()[k]);
            let mut up = x.clone();
            up.data_mut()[k] += h;
            let mut down = x.clone();
            down.data_mut()[k] -= h;
            let numeric = (clf.log_score(&up, 1)? - clf.log_score(&down, 1)?) / (2.0 * h);
            report.record(analytic.data()[k], numeric);
        }
    }
    Ok(report)
}
