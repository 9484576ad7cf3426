//! Integrating the cluster random effect out of the conditional probit.
//!
//! With `gamma ~ N(0, sigma2)` and `Z ~ N(0, 1)` independent,
//! `E[Phi(x'beta + gamma)] = P(Z - gamma < x'beta) = Phi(x'beta / sqrt(1 + sigma2))`,
//! so the population-averaged model is again a probit with coefficients
//! `beta / sqrt(1 + sigma2)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DesignMatrix;
use crate::sampler::PosteriorDraws;
use crate::stats::{norm_cdf, Interval};

#[derive(Debug, Error)]
pub enum MarginalError {
    #[error("dimension mismatch: design has {design} columns, coefficients have {coefficients}")]
    Dimension { design: usize, coefficients: usize },
    #[error("no posterior draws")]
    NoDraws,
}

/// Convention for the random-effect correction factor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginalization {
    /// `beta / sqrt(1 + sigma2)`, the value of the integral.
    #[default]
    AppendixDivide,
    /// `beta * sqrt(1 + sigma2)`. Kept only for sensitivity comparisons; it
    /// does not equal the integral.
    MaintextMultiply,
}

impl Marginalization {
    pub fn factor(self, sigma2: f64) -> f64 {
        let s = (1.0 + sigma2).sqrt();
        match self {
            Marginalization::AppendixDivide => 1.0 / s,
            Marginalization::MaintextMultiply => s,
        }
    }
}

impl std::str::FromStr for Marginalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "appendix_divide" => Ok(Marginalization::AppendixDivide),
            "maintext_multiply" => Ok(Marginalization::MaintextMultiply),
            other => Err(format!(
                "unknown marginalization `{other}` (expected appendix_divide or maintext_multiply)"
            )),
        }
    }
}

/// Population-averaged coefficients derived from one conditional draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalDraw {
    pub beta: Vec<f64>,
    pub source: usize,
}

/// `beta / sqrt(1 + sigma2)`.
pub fn marginalize(beta: &[f64], sigma2: f64) -> MarginalDraw {
    marginalize_with(beta, sigma2, Marginalization::AppendixDivide, 0)
}

pub fn marginalize_with(
    beta: &[f64],
    sigma2: f64,
    convention: Marginalization,
    source: usize,
) -> MarginalDraw {
    debug_assert!(sigma2 >= 0.0);
    if sigma2 == 0.0 {
        return MarginalDraw {
            beta: beta.to_vec(),
            source,
        };
    }
    let f = convention.factor(sigma2);
    MarginalDraw {
        beta: beta.iter().map(|b| b * f).collect(),
        source,
    }
}

/// Marginalize every draw of a posterior sample.
pub fn marginalize_draws(draws: &PosteriorDraws, convention: Marginalization) -> Vec<MarginalDraw> {
    draws
        .beta
        .iter()
        .zip(&draws.sigma2)
        .enumerate()
        .map(|(l, (b, &s2))| marginalize_with(b, s2, convention, l))
        .collect()
}

/// `Phi(x'beta_tilde)`.
pub fn marginal_prob(x: &[f64], draw: &MarginalDraw) -> Result<f64, MarginalError> {
    if x.len() != draw.beta.len() {
        return Err(MarginalError::Dimension {
            design: x.len(),
            coefficients: draw.beta.len(),
        });
    }
    Ok(norm_cdf(x.iter().zip(&draw.beta).map(|(a, b)| a * b).sum()))
}

/// Average of `link(x_i'beta)` over the rows of a design.
pub(crate) fn mean_response(design: &DesignMatrix, beta: &[f64], link: impl Fn(f64) -> f64) -> f64 {
    let total: f64 = design
        .rows()
        .map(|row| link(row.iter().zip(beta).map(|(a, b)| a * b).sum()))
        .sum();
    total / design.n_rows() as f64
}

/// Fitted marginal mortality per posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MortalitySummary {
    /// Per-draw mean probability of death (probability units).
    pub per_draw: Vec<f64>,
    /// Posterior mean and interval per 1000 births.
    pub per_1000: Interval,
}

/// `N^-1 sum_i Phi(x_i'beta_tilde)` for every draw, summarized per 1000.
pub fn mean_mortality(
    design: &DesignMatrix,
    draws: &PosteriorDraws,
    convention: Marginalization,
) -> Result<MortalitySummary, MarginalError> {
    if draws.is_empty() {
        return Err(MarginalError::NoDraws);
    }
    if draws.n_coefficients() != design.n_cols()
        || draws.beta.iter().any(|b| b.len() != design.n_cols())
    {
        return Err(MarginalError::Dimension {
            design: design.n_cols(),
            coefficients: draws.n_coefficients(),
        });
    }
    let per_draw: Vec<f64> = marginalize_draws(draws, convention)
        .iter()
        .map(|m| mean_response(design, &m.beta, norm_cdf))
        .collect();
    let per_1000 = Interval::from_draws(&per_draw).scaled(1000.0);
    Ok(MortalitySummary { per_draw, per_1000 })
}
