//! Independent reference computations used to check the sampler and the
//! decomposition: the linear-model decomposition, Monte-Carlo integration of
//! the random effect, a maximum-likelihood probit fit, and the variance
//! profile of the sequential coefficient decomposition.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DesignMatrix;
use crate::decompose::{check_order, DecomposeError};
use crate::marginal::{marginalize_draws, mean_response, Marginalization};
use crate::sampler::PosteriorDraws;
use crate::stats::{correlation, norm_cdf, norm_pdf, variance};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("vector lengths differ: {0:?}")]
    Length(Vec<usize>),
    #[error("probit fit did not converge in {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        last: Vec<f64>,
    },
    #[error("information matrix is singular")]
    Singular,
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear-model decomposition on mean covariate vectors:
/// `((x1 - x2)'b1, x2'(b1 - b2))`.
pub fn linear_oracle(
    xbar1: &[f64],
    xbar2: &[f64],
    beta1: &[f64],
    beta2: &[f64],
) -> Result<(f64, f64), DiagnosticsError> {
    let n = xbar1.len();
    if [xbar2.len(), beta1.len(), beta2.len()]
        .iter()
        .any(|&m| m != n)
    {
        return Err(DiagnosticsError::Length(vec![
            xbar1.len(),
            xbar2.len(),
            beta1.len(),
            beta2.len(),
        ]));
    }
    let dx: Vec<f64> = xbar1.iter().zip(xbar2).map(|(a, b)| a - b).collect();
    let db: Vec<f64> = beta1.iter().zip(beta2).map(|(a, b)| a - b).collect();
    Ok((dot(&dx, beta1), dot(xbar2, &db)))
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// `(1/M) sum_m Phi(x'beta + gamma_m)` with `gamma_m ~ N(0, sigma2)`.
pub fn mc_marginalization_oracle(
    beta: &[f64],
    sigma2: f64,
    x: &[f64],
    m: usize,
    seed: u64,
) -> McEstimate {
    let eta = dot(x, beta);
    if sigma2 == 0.0 || m == 0 {
        return McEstimate {
            estimate: norm_cdf(eta),
            std_error: 0.0,
        };
    }
    let sd = sigma2.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Welford accumulation keeps the variance accurate for large M.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..m {
        let z: f64 = StandardNormal.sample(&mut rng);
        let v = norm_cdf(eta + sd * z);
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
    }
    let var = if m > 1 { m2 / (m - 1) as f64 } else { 0.0 };
    McEstimate {
        estimate: mean,
        std_error: (var / m as f64).sqrt(),
    }
}

/// `(phi/Phi)(eta)` for a death and `-(phi/Phi)(-eta)` for a survivor, the
/// per-row score factor of the probit log-likelihood.
fn score_factor(eta: f64, y: u8) -> f64 {
    let s = if y == 1 { eta } else { -eta };
    let tail = norm_cdf(s);
    let mills = if tail > 1e-300 {
        norm_pdf(s) / tail
    } else {
        // Asymptotic inverse Mills ratio far in the lower tail.
        -s
    };
    if y == 1 {
        mills
    } else {
        -mills
    }
}

fn log_likelihood(design: &DesignMatrix, beta: &[f64]) -> f64 {
    design
        .rows()
        .zip(&design.outcome)
        .map(|(row, &y)| {
            let eta = dot(row, beta);
            let p = if y == 1 {
                norm_cdf(eta)
            } else {
                norm_cdf(-eta)
            };
            p.max(f64::MIN_POSITIVE).ln()
        })
        .sum()
}

pub const ML_MAX_ITERATIONS: usize = 100;
pub const ML_TOLERANCE: f64 = 1e-8;

/// Maximum-likelihood probit fit without random effects, by Newton-Raphson
/// with step halving.
pub fn ml_probit_fit(design: &DesignMatrix) -> Result<Vec<f64>, DiagnosticsError> {
    let p = design.n_cols();
    let mut beta = vec![0.0; p];
    let mut ll = log_likelihood(design, &beta);
    let mut gradient_norm = f64::INFINITY;
    for _ in 0..ML_MAX_ITERATIONS {
        let mut grad = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        for (row, &y) in design.rows().zip(&design.outcome) {
            let eta = dot(row, &beta);
            let lam = score_factor(eta, y);
            let w = lam * (lam + eta);
            for a in 0..p {
                grad[a] += lam * row[a];
                for b in 0..=a {
                    info[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        gradient_norm = grad.amax();
        if gradient_norm < ML_TOLERANCE {
            return Ok(beta);
        }
        let step = info
            .cholesky()
            .ok_or(DiagnosticsError::Singular)?
            .solve(&grad);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + t * s)
                .collect();
            let cand_ll = log_likelihood(design, &cand);
            // Near the optimum the log-likelihood change drops below its own
            // rounding error, so a full step is accepted within that slack.
            if cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) || t < 1e-10 {
                beta = cand;
                ll = cand_ll;
                break;
            }
            t *= 0.5;
        }
    }
    Err(DiagnosticsError::NonConvergence {
        iterations: ML_MAX_ITERATIONS,
        gradient_norm,
        last: beta,
    })
}

/// Posterior variance of the partial sums of the sequential group effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceCollapseProfile {
    pub order: Vec<String>,
    /// Entry `m - 1` is the variance of the sum of the first `m` effects.
    pub partial_sum_variance: Vec<f64>,
    /// Variance of the beta effect computed directly from the swap endpoints.
    pub beta_effect_variance: f64,
    /// Pairwise correlations of the group effects; `None` where either effect
    /// is constant over the draws.
    pub correlation: Vec<Vec<Option<f64>>>,
}

impl VarianceCollapseProfile {
    pub fn final_variance(&self) -> f64 {
        *self.partial_sum_variance.last().expect("non-empty order")
    }

    /// Columns `m,group_added,partial_sum_variance`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,group_added,partial_sum_variance\n");
        for (k, (name, v)) in self
            .order
            .iter()
            .zip(&self.partial_sum_variance)
            .enumerate()
        {
            writeln!(s, "{},{},{}", k + 1, name, v).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DiagnosticsError> {
        std::fs::write(path, self.to_csv()).map_err(|source| DiagnosticsError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

pub fn variance_collapse(
    design2: &DesignMatrix,
    draws1: &PosteriorDraws,
    draws2: &PosteriorDraws,
    order: &[String],
    convention: Marginalization,
) -> Result<VarianceCollapseProfile, DiagnosticsError> {
    let mut profiles =
        variance_collapse_orders(design2, draws1, draws2, &[order.to_vec()], convention)?;
    Ok(profiles.pop().expect("one order"))
}

/// Profiles for several orders at once. Every intermediate coefficient
/// vector is survey 1's with some set of whole groups taken from survey 2,
/// so the mean response of each such set is computed once per draw and
/// shared between orders.
pub fn variance_collapse_orders(
    design2: &DesignMatrix,
    draws1: &PosteriorDraws,
    draws2: &PosteriorDraws,
    orders: &[Vec<String>],
    convention: Marginalization,
) -> Result<Vec<VarianceCollapseProfile>, DiagnosticsError> {
    if draws1.len() != draws2.len() {
        return Err(DecomposeError::UnequalDraws(draws1.len(), draws2.len()).into());
    }
    if draws1.is_empty() {
        return Err(DecomposeError::Empty.into());
    }
    let names = design2.group_names();
    for got in [draws1.n_coefficients(), draws2.n_coefficients()] {
        if got != design2.n_cols() {
            return Err(DecomposeError::Dimension {
                got,
                want: design2.n_cols(),
            }
            .into());
        }
    }
    for order in orders {
        check_order(design2, order)?;
    }
    let index = |order: &[String]| -> Vec<usize> {
        order
            .iter()
            .map(|g| names.iter().position(|n| n == g).expect("order checked"))
            .collect()
    };
    let positions: Vec<Vec<usize>> = orders.iter().map(|o| index(o)).collect();
    let ranges: Vec<_> = names
        .iter()
        .map(|g| design2.group_range(g).expect("design group"))
        .collect();

    let m1 = marginalize_draws(draws1, convention);
    let m2 = marginalize_draws(draws2, convention);
    let k = names.len();
    let mut effects = vec![vec![Vec::with_capacity(m1.len()); k]; orders.len()];
    let mut partial = vec![vec![Vec::with_capacity(m1.len()); k]; orders.len()];
    let mut beta_effect = Vec::with_capacity(m1.len());
    let mut memo: HashMap<Vec<bool>, f64> = HashMap::new();
    for (b1, b2) in m1.iter().zip(&m2) {
        memo.clear();
        let mut response = |swapped: &[bool]| -> f64 {
            *memo.entry(swapped.to_vec()).or_insert_with(|| {
                let mut hybrid = b1.beta.clone();
                for (g, range) in ranges.iter().enumerate() {
                    if swapped[g] {
                        hybrid[range.clone()].copy_from_slice(&b2.beta[range.clone()]);
                    }
                }
                mean_response(design2, &hybrid, norm_cdf)
            })
        };
        for (o, pos) in positions.iter().enumerate() {
            let mut swapped = vec![false; k];
            let mut before = response(&swapped);
            let mut acc = 0.0;
            for (j, &g) in pos.iter().enumerate() {
                swapped[g] = true;
                let after = response(&swapped);
                acc += before - after;
                effects[o][j].push(before - after);
                partial[o][j].push(acc);
                before = after;
            }
        }
        beta_effect.push(
            mean_response(design2, &b1.beta, norm_cdf) - mean_response(design2, &b2.beta, norm_cdf),
        );
    }
    let beta_effect_variance = variance(&beta_effect);
    Ok(orders
        .iter()
        .zip(effects.iter().zip(&partial))
        .map(|(order, (effects, partial))| VarianceCollapseProfile {
            order: order.clone(),
            partial_sum_variance: partial.iter().map(|p| variance(p)).collect(),
            beta_effect_variance,
            correlation: correlation_matrix(effects),
        })
        .collect())
}

fn correlation_matrix(effects: &[Vec<f64>]) -> Vec<Vec<Option<f64>>> {
    let k = effects.len();
    (0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    if a == b {
                        (variance(&effects[a]) > 0.0).then_some(1.0)
                    } else {
                        correlation(&effects[a], &effects[b])
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        build_design, synthesize, CenteringConstants, Covariate, CovariateSchema, CovariateSpec,
        DgpConfig, SurveyDgp, SurveyId,
    };
    use crate::marginal::{marginal_prob, marginalize_with};
    use crate::stats::norm_quantile;
    use indexmap::IndexMap;
    use rand::Rng;

    #[test]
    fn linear_oracle_reference() {
        let (x, b) = linear_oracle(&[1.0, 2.0], &[1.0, 1.0], &[0.5, 0.3], &[0.5, 0.1]).unwrap();
        assert!((x - 0.3).abs() < 1e-15);
        assert!((b - 0.2).abs() < 1e-15);
        let (_, b) = linear_oracle(&[1.0, 2.0], &[1.0, 1.0], &[0.5, 0.3], &[0.5, 0.3]).unwrap();
        assert_eq!(b, 0.0);
        let (x, _) = linear_oracle(&[1.0, 2.0], &[1.0, 2.0], &[0.5, 0.3], &[0.5, 0.1]).unwrap();
        assert_eq!(x, 0.0);
        assert!(linear_oracle(&[1.0], &[1.0, 2.0], &[0.5], &[0.5]).is_err());
    }

    #[test]
    fn mc_oracle_reference_points() {
        let exact = mc_marginalization_oracle(&[0.3], 0.0, &[1.0], 10_000, 1);
        assert_eq!(exact.estimate, norm_cdf(0.3));
        assert_eq!(exact.std_error, 0.0);

        let sym = mc_marginalization_oracle(&[0.0], 2.0, &[1.0], 100_000, 2);
        assert!((sym.estimate - 0.5).abs() < 3.0 * sym.std_error);

        let e = mc_marginalization_oracle(&[1.0], 3.0, &[1.0], 1_000_000, 3);
        assert!(
            (e.estimate - norm_cdf(0.5)).abs() < 3.0 * e.std_error,
            "{e:?}"
        );
        assert!((norm_cdf(0.5) - 0.6915).abs() < 1e-4);
    }

    #[test]
    fn mc_oracle_rejects_the_multiplied_factor() {
        let e = mc_marginalization_oracle(&[1.0], 3.0, &[1.0], 200_000, 4);
        let wrong = marginal_prob(
            &[1.0],
            &marginalize_with(&[1.0], 3.0, Marginalization::MaintextMultiply, 0),
        )
        .unwrap();
        assert!((e.estimate - wrong).abs() > 10.0 * e.std_error);
    }

    fn intercept_design(outcome: Vec<u8>) -> DesignMatrix {
        let n = outcome.len();
        DesignMatrix::new(
            vec![1.0; n],
            1,
            vec!["intercept".into()],
            IndexMap::new(),
            vec![0; n],
            outcome,
        )
        .unwrap()
    }

    #[test]
    fn ml_intercept_only_matches_closed_form() {
        let outcome: Vec<u8> = (0..1000).map(|i| u8::from(i % 5 == 0)).collect();
        let b = ml_probit_fit(&intercept_design(outcome)).unwrap();
        assert!((b[0] - norm_quantile(0.2)).abs() < 1e-6, "{b:?}");
        assert!((b[0] + 0.8416).abs() < 1e-4);
    }

    #[test]
    fn ml_balanced_binary_has_zero_coefficient() {
        let n = 400;
        let mut values = Vec::new();
        let mut outcome = Vec::new();
        for i in 0..n {
            values.extend([1.0, (i % 2) as f64]);
            // Rate 0.25 in both halves.
            outcome.push(u8::from((i / 2) % 4 == 0));
        }
        let groups = [("sex".to_string(), 1..2)].into_iter().collect();
        let d = DesignMatrix::new(
            values,
            2,
            vec!["intercept".into(), "sex[male]".into()],
            groups,
            vec![0; n],
            outcome,
        )
        .unwrap();
        let b = ml_probit_fit(&d).unwrap();
        assert!(b[1].abs() < 1e-6, "{b:?}");
    }

    #[test]
    fn ml_recovers_simulated_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut values = Vec::with_capacity(2 * n);
        let mut outcome = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.random_range(-1.0..1.0);
            let z: f64 = StandardNormal.sample(&mut rng);
            values.extend([1.0, x]);
            outcome.push(u8::from(-1.0 + 0.5 * x + z > 0.0));
        }
        let groups = [("x".to_string(), 1..2)].into_iter().collect();
        let d = DesignMatrix::new(
            values,
            2,
            vec!["intercept".into(), "x".into()],
            groups,
            vec![0; n],
            outcome,
        )
        .unwrap();
        let b = ml_probit_fit(&d).unwrap();
        assert!(
            (b[0] + 1.0).abs() < 0.02 && (b[1] - 0.5).abs() < 0.02,
            "{b:?}"
        );
    }

    #[test]
    fn ml_separation_drives_the_slope_out() {
        let values: Vec<f64> = (0..20).flat_map(|i| [1.0, i as f64 - 9.5]).collect();
        let outcome: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let groups = [("x".to_string(), 1..2)].into_iter().collect();
        let d = DesignMatrix::new(
            values,
            2,
            vec!["intercept".into(), "x".into()],
            groups,
            vec![0; 20],
            outcome,
        )
        .unwrap();
        // Either the gradient vanishes numerically far out or the cap is hit;
        // in both cases the slope is large.
        let slope = match ml_probit_fit(&d) {
            Ok(b) => b[1],
            Err(DiagnosticsError::NonConvergence { last, .. }) => last[1],
            other => panic!("unexpected result {other:?}"),
        };
        assert!(slope > 5.0, "{slope}");
    }

    fn two_designs() -> (DesignMatrix, DesignMatrix) {
        let survey = |b0: f64| SurveyDgp {
            beta: [
                ("intercept".to_string(), b0),
                ("sex".to_string(), 0.2),
                ("residence".to_string(), -0.3),
            ]
            .into_iter()
            .collect(),
            sigma2: 0.3,
            n_clusters: 10,
            births_per_cluster: 10,
            covariates: Default::default(),
        };
        let (s1, s2) = synthesize(
            &DgpConfig {
                surveys: [survey(-1.0), survey(-1.3)],
            },
            5,
        )
        .unwrap();
        let schema = CovariateSchema::new(vec![
            CovariateSpec::binary(Covariate::Sex, "female"),
            CovariateSpec::binary(Covariate::Residence, "rural"),
        ])
        .unwrap();
        let c = CenteringConstants::zeros(&schema);
        (
            build_design(&s1, &schema, &c, &s1).unwrap(),
            build_design(&s2, &schema, &c, &s1).unwrap(),
        )
    }

    fn noisy_draws(d: &DesignMatrix, id: SurveyId, seed: u64, n: usize) -> PosteriorDraws {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draws = PosteriorDraws::constant(id, vec![0.0; d.n_cols()], 0.0, n, d);
        for (b, s) in draws.beta.iter_mut().zip(&mut draws.sigma2) {
            for (j, v) in b.iter_mut().enumerate() {
                *v = if j == 0 { -1.0 } else { 0.2 } + rng.random_range(-0.3..0.3);
            }
            *s = rng.random_range(0.0..1.0);
        }
        draws
    }

    #[test]
    fn collapse_endpoint_and_single_group() {
        let (_, d2) = two_designs();
        let dr1 = noisy_draws(&d2, SurveyId::S1, 1, 200);
        let dr2 = noisy_draws(&d2, SurveyId::S2, 2, 200);
        let order = d2.group_names();
        let p =
            variance_collapse(&d2, &dr1, &dr2, &order, Marginalization::AppendixDivide).unwrap();
        assert_eq!(p.partial_sum_variance.len(), 3);
        assert!((p.final_variance() - p.beta_effect_variance).abs() < 1e-12);
        assert!(p.beta_effect_variance > 0.0);
        assert_eq!(p.correlation[0][0], Some(1.0));
        assert!(p
            .to_csv()
            .starts_with("m,group_added,partial_sum_variance\n1,intercept,"));

        let one = DesignMatrix::new(
            d2.rows().map(|r| r[0]).collect(),
            1,
            vec!["intercept".into()],
            IndexMap::new(),
            d2.cluster_index.clone(),
            d2.outcome.clone(),
        )
        .unwrap();
        let dr1 = noisy_draws(&one, SurveyId::S1, 3, 50);
        let dr2 = noisy_draws(&one, SurveyId::S2, 4, 50);
        let p = variance_collapse(
            &one,
            &dr1,
            &dr2,
            &["intercept".to_string()],
            Default::default(),
        )
        .unwrap();
        assert_eq!(p.partial_sum_variance.len(), 1);
        assert!((p.final_variance() - p.beta_effect_variance).abs() < 1e-15);
    }

    #[test]
    fn shared_profiles_match_per_order_decomposition() {
        let (_, d2) = two_designs();
        let dr1 = noisy_draws(&d2, SurveyId::S1, 5, 40);
        let dr2 = noisy_draws(&d2, SurveyId::S2, 6, 40);
        let mut reversed = d2.group_names();
        reversed.reverse();
        let orders = vec![d2.group_names(), reversed];
        let conv = Marginalization::AppendixDivide;
        let profiles = variance_collapse_orders(&d2, &dr1, &dr2, &orders, conv).unwrap();
        let (m1, m2) = (marginalize_draws(&dr1, conv), marginalize_draws(&dr2, conv));
        for (order, profile) in orders.iter().zip(&profiles) {
            let mut partial = vec![Vec::new(); order.len()];
            for (b1, b2) in m1.iter().zip(&m2) {
                let g = crate::decompose::coefficient_decompose(&d2, b1, b2, order).unwrap();
                let mut acc = 0.0;
                for (j, v) in g.values().enumerate() {
                    acc += v;
                    partial[j].push(acc);
                }
            }
            let direct: Vec<f64> = partial.iter().map(|p| variance(p)).collect();
            assert_eq!(profile.partial_sum_variance, direct);
            assert_eq!(&profile.order, order);
        }
        let bad = vec![vec!["intercept".to_string()]];
        assert!(variance_collapse_orders(&d2, &dr1, &dr2, &bad, conv).is_err());
    }

    #[test]
    fn degenerate_draws_have_zero_variance() {
        let (_, d2) = two_designs();
        let dr1 = PosteriorDraws::constant(SurveyId::S1, vec![-1.0, 0.1, 0.2], 0.4, 30, &d2);
        let dr2 = PosteriorDraws::constant(SurveyId::S2, vec![-1.2, 0.3, 0.0], 0.2, 30, &d2);
        let p = variance_collapse(&d2, &dr1, &dr2, &d2.group_names(), Default::default()).unwrap();
        assert!(p.partial_sum_variance.iter().all(|v| *v == 0.0));
        assert_eq!(p.beta_effect_variance, 0.0);
        assert!(p.correlation.iter().flatten().all(Option::is_none));
    }
}
