//! Baseline-category softmax, multinomial log-likelihood, normal priors and
//! the unnormalized log-posterior.

use std::ops::Deref;

use crate::data::ObservationTable;
use crate::design::{ParameterLayout, PriorConfig};
use crate::error::{Error, Result};
use crate::special::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A point in parameter space laid out per [`ParameterLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterState(Vec<f64>);

impl ParameterState {
    pub fn zeros(layout: &ParameterLayout) -> Self {
        Self(vec![0.0; layout.total_dim()])
    }

    pub fn from_vec(layout: &ParameterLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total_dim() {
            return Err(Error::contract(format!(
                "parameter vector has length {}, layout needs {}",
                values.len(),
                layout.total_dim()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "parameter `{}` is not finite",
                layout.names()[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParameterState {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + x.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Inverse baseline-category link: the softmax of `eta`.
pub fn probabilities(eta: &[f64]) -> Result<Vec<f64>> {
    if eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("linear predictor contains a non-finite value"));
    }
    let max = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = eta.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(p)
}

/// Σ_j y_j ln π_j for one row, with ln π evaluated in log space so that a
/// tiny probability never rounds to ln 0.
#[inline]
pub(crate) fn row_log_likelihood(eta: &[f64], counts: &[u64]) -> f64 {
    let lse = log_sum_exp(eta);
    eta.iter()
        .zip(counts)
        .filter(|(_, &y)| y > 0)
        .map(|(&e, &y)| y as f64 * (e - lse))
        .sum()
}

#[inline]
pub(crate) fn normal_log_density(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln()) - d * d / (2.0 * variance)
}

fn check_len(layout: &ParameterLayout, theta: &[f64]) -> Result<()> {
    if theta.len() != layout.total_dim() {
        return Err(Error::contract(format!(
            "parameter vector has length {}, layout needs {}",
            theta.len(),
            layout.total_dim()
        )));
    }
    Ok(())
}

/// Multinomial log-likelihood without the (parameter-free) multinomial
/// coefficient.
pub fn log_likelihood(
    layout: &ParameterLayout,
    theta: &[f64],
    table: &ObservationTable,
) -> Result<f64> {
    check_len(layout, theta)?;
    let mut eta = vec![0.0; table.n_categories()];
    let mut total = 0.0;
    for row in table.rows() {
        layout.fill_eta(theta, row.subject, row.week, &mut eta);
        total += row_log_likelihood(&eta, &row.counts);
    }
    Ok(total)
}

/// Variance of the random intercepts at `theta`.
pub(crate) fn raneff_variance(layout: &ParameterLayout, theta: &[f64], priors: &PriorConfig) -> f64 {
    match layout.variance_index() {
        Some(k) => (2.0 * theta[k]).exp(),
        None => priors.raneff_scale,
    }
}

/// Log-density of the half-normal hyperprior on the random-intercept sd,
/// expressed on the log-sd scale (Jacobian included).
pub(crate) fn log_sd_prior(log_sd: f64, priors: &PriorConfig) -> f64 {
    let sd = log_sd.exp();
    std::f64::consts::LN_2 + normal_log_density(sd, 0.0, priors.raneff_hyper_sd.powi(2)) + log_sd
}

/// Sum of independent normal log-densities, normalizing constants included.
pub fn log_prior(layout: &ParameterLayout, theta: &[f64], priors: &PriorConfig) -> Result<f64> {
    check_len(layout, theta)?;
    let fixed: f64 = theta[..layout.fixed_dim()]
        .iter()
        .map(|&b| normal_log_density(b, priors.coef_mean, priors.coef_scale))
        .sum();
    let var = raneff_variance(layout, theta, priors);
    let raneff: f64 = theta[layout.raneff_range()]
        .iter()
        .map(|&u| normal_log_density(u, 0.0, var))
        .sum();
    let hyper = layout
        .variance_index()
        .map_or(0.0, |k| log_sd_prior(theta[k], priors));
    Ok(fixed + raneff + hyper)
}

pub fn log_posterior(
    layout: &ParameterLayout,
    theta: &[f64],
    table: &ObservationTable,
    priors: &PriorConfig,
) -> Result<f64> {
    Ok(log_likelihood(layout, theta, table)? + log_prior(layout, theta, priors)?)
}

/// Analytic gradient of [`log_posterior`].
pub fn grad_log_posterior(
    layout: &ParameterLayout,
    theta: &[f64],
    table: &ObservationTable,
    priors: &PriorConfig,
) -> Result<Vec<f64>> {
    check_len(layout, theta)?;
    let mut grad = vec![0.0; theta.len()];
    let mut eta = vec![0.0; table.n_categories()];
    for row in table.rows() {
        layout.fill_eta(theta, row.subject, row.week, &mut eta);
        let pi = probabilities(&eta)?;
        let n = row.total() as f64;
        let slot = layout.slot_of_week(row.week);
        let active = layout.active_columns(row.subject);
        for (p, &j) in layout.free_categories().iter().enumerate() {
            let score = row.counts[j] as f64 - n * pi[j];
            let start = layout.group_start(p, slot);
            for &c in active {
                grad[start + c] += score;
            }
            if let Some(u) = layout.raneff_index(row.subject, p) {
                grad[u] += score;
            }
        }
    }
    for k in 0..layout.fixed_dim() {
        grad[k] -= (theta[k] - priors.coef_mean) / priors.coef_scale;
    }
    let var = raneff_variance(layout, theta, priors);
    for k in layout.raneff_range() {
        grad[k] -= theta[k] / var;
    }
    if let Some(s) = layout.variance_index() {
        let sum_sq: f64 = theta[layout.raneff_range()].iter().map(|u| u * u).sum();
        let count = layout.raneff_count() as f64;
        grad[s] += -count + sum_sq / var - var / priors.raneff_hyper_sd.powi(2) + 1.0;
    }
    Ok(grad)
}

/// Σ over rows of ln(n! / Π y_j!), the constant dropped from
/// [`log_likelihood`].
pub fn multinomial_log_coefficient(table: &ObservationTable) -> f64 {
    table
        .rows()
        .iter()
        .map(|row| {
            ln_gamma(row.total() as f64 + 1.0)
                - row
                    .counts
                    .iter()
                    .map(|&y| ln_gamma(y as f64 + 1.0))
                    .sum::<f64>()
        })
        .sum()
}
