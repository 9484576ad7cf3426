//! Oracle suite run by `probit-oaxaca validate`.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{
    build_design, synthesize, CenteringConstants, Covariate, CovariateSchema, CovariateSpec,
    DesignMatrix, DgpConfig, SurveyDgp,
};
use crate::decompose::{decompose_draw, overall_decompose_with, Link};
use crate::diagnostics::{linear_oracle, mc_marginalization_oracle, ml_probit_fit};
use crate::marginal::{marginal_prob, marginalize_with, MarginalDraw, Marginalization};
use crate::sampler::{diagnostics, fit, McmcConfig, PriorSpec};
use crate::stats::{mean, variance};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidateSettings {
    pub marginalization: Marginalization,
    pub seed: u64,
    pub mc_draws: usize,
    pub linear_cases: usize,
    pub fuzz_cases: usize,
}

impl Default for ValidateSettings {
    fn default() -> Self {
        ValidateSettings {
            marginalization: Marginalization::AppendixDivide,
            seed: 1,
            mc_draws: 1_000_000,
            linear_cases: 100,
            fuzz_cases: 1000,
        }
    }
}

/// A random design whose first column is the intercept and whose remaining
/// columns are split into groups of the given widths.
pub fn random_design<R: Rng>(rng: &mut R, n: usize, widths: &[usize]) -> DesignMatrix {
    let p = 1 + widths.iter().sum::<usize>();
    let mut values = Vec::with_capacity(n * p);
    for _ in 0..n {
        values.push(1.0);
        values.extend((1..p).map(|_| rng.random_range(-2.0..2.0)));
    }
    let mut groups = IndexMap::new();
    let mut start = 1;
    for (k, w) in widths.iter().enumerate() {
        groups.insert(format!("g{k}"), start..start + w);
        start += w;
    }
    DesignMatrix::new(
        values,
        p,
        (0..p).map(|j| format!("x{j}")).collect(),
        groups,
        (0..n).map(|i| i % 3).collect(),
        vec![0; n],
    )
    .expect("valid random design")
}

pub fn random_coefficients<R: Rng>(rng: &mut R, p: usize) -> MarginalDraw {
    MarginalDraw {
        beta: (0..p).map(|_| rng.random_range(-1.5..1.5)).collect(),
        source: 0,
    }
}

/// Random design pair, coefficient pair and group order.
pub struct FuzzInstance {
    pub d1: DesignMatrix,
    pub d2: DesignMatrix,
    pub b1: MarginalDraw,
    pub b2: MarginalDraw,
    pub order: Vec<String>,
}

pub fn fuzz_instance<R: Rng>(rng: &mut R) -> FuzzInstance {
    let widths: Vec<usize> = (0..rng.random_range(1..=5))
        .map(|_| rng.random_range(1..=4))
        .collect();
    let (n1, n2) = (rng.random_range(2..=60), rng.random_range(2..=60));
    let d1 = random_design(rng, n1, &widths);
    let d2 = random_design(rng, n2, &widths);
    let p = d1.n_cols();
    let mut order = d1.group_names();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    FuzzInstance {
        b1: random_coefficients(rng, p),
        b2: random_coefficients(rng, p),
        d1,
        d2,
        order,
    }
}

/// Identity-link decomposition against the closed form on column means.
pub fn check_linear_triangle(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let f = fuzz_instance(&mut rng);
        let (x, b) = overall_decompose_with(&f.d1, &f.d2, &f.b1, &f.b2, Link::Identity)
            .expect("matching fixture");
        let (ox, ob) = linear_oracle(
            &f.d1.column_means(),
            &f.d2.column_means(),
            &f.b1.beta,
            &f.b2.beta,
        )
        .expect("equal lengths");
        worst = worst.max((x - ox).abs()).max((b - ob).abs());
    }
    Check::new(
        "linear_triangle",
        worst < 1e-12,
        format!("{cases} fixtures, max |difference| {worst:.2e} (limit 1e-12)"),
    )
}

/// Grid of linear predictors and variances used for the integration check.
pub const MC_GRID_ETA: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];
pub const MC_GRID_SIGMA2: [f64; 4] = [0.0, 0.25, 1.0, 4.0];

/// Closed-form marginal probability against Monte-Carlo integration over the
/// cluster effect, at every grid point, within 3 standard errors.
pub fn check_mc_grid(convention: Marginalization, draws: usize, seed: u64) -> Check {
    let mut worst = (0.0, 0.0, 0.0);
    let mut failures = 0;
    for (k, (&eta, &s2)) in MC_GRID_ETA
        .iter()
        .flat_map(|e| MC_GRID_SIGMA2.iter().map(move |s| (e, s)))
        .enumerate()
    {
        let closed = marginal_prob(&[1.0], &marginalize_with(&[eta], s2, convention, 0)).unwrap();
        let mc = mc_marginalization_oracle(&[eta], s2, &[1.0], draws, seed.wrapping_add(k as u64));
        let gap = (closed - mc.estimate).abs();
        let ok = if mc.std_error == 0.0 {
            gap < 1e-15
        } else {
            gap <= 3.0 * mc.std_error
        };
        if !ok {
            failures += 1;
        }
        let z = if mc.std_error > 0.0 {
            gap / mc.std_error
        } else {
            0.0
        };
        if z > worst.0 {
            worst = (z, eta, s2);
        }
    }
    let points = MC_GRID_ETA.len() * MC_GRID_SIGMA2.len();
    Check::new(
        "mc_marginalization_grid",
        failures == 0,
        format!(
            "{convention:?}: {failures} of {points} points outside 3 SE; largest gap {:.1} SE at x'b = {}, sigma2 = {}",
            worst.0, worst.1, worst.2
        ),
    )
}

/// Posterior means of a flat-prior fit with the cluster variance pinned near
/// zero, next to the maximum-likelihood probit estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorLimitReport {
    pub ml: Vec<f64>,
    pub posterior_mean: Vec<f64>,
    /// Posterior standard deviation over the square root of the ESS.
    pub mc_std_error: Vec<f64>,
    pub n_births: usize,
}

impl PriorLimitReport {
    /// `|posterior mean - ML| / MC standard error` per coefficient.
    pub fn z(&self) -> Vec<f64> {
        self.ml
            .iter()
            .zip(&self.posterior_mean)
            .zip(&self.mc_std_error)
            .map(|((m, p), se)| (m - p).abs() / se)
            .collect()
    }
}

/// Prior that makes the fit approach maximum likelihood: a very wide normal on
/// the coefficients and an inverse gamma concentrated at about 1e-8.
pub fn pinned_prior() -> PriorSpec {
    PriorSpec {
        beta_sd: 1e4,
        sigma2_shape: 1e6,
        sigma2_scale: 1e-2,
    }
}

pub fn prior_limit_comparison(seed: u64, mcmc: &McmcConfig) -> crate::Result<PriorLimitReport> {
    let survey = SurveyDgp {
        beta: [
            ("intercept".to_string(), -1.0),
            ("sex".to_string(), 0.4),
            ("residence".to_string(), -0.3),
        ]
        .into_iter()
        .collect(),
        sigma2: 0.0,
        n_clusters: 200,
        births_per_cluster: 25,
        covariates: Default::default(),
    };
    let (s1, _) = synthesize(
        &DgpConfig {
            surveys: [survey.clone(), survey],
        },
        seed,
    )?;
    let schema = CovariateSchema::new(vec![
        CovariateSpec::binary(Covariate::Sex, "female"),
        CovariateSpec::binary(Covariate::Residence, "rural"),
    ])?;
    let design = build_design(&s1, &schema, &CenteringConstants::zeros(&schema), &s1)?;
    let ml = ml_probit_fit(&design)?;
    let draws = fit(&design, &pinned_prior(), &McmcConfig { seed, ..*mcmc })?;
    let diag = diagnostics(&draws)?;
    let (posterior_mean, mc_std_error) = (0..design.n_cols())
        .map(|j| {
            let c = draws.coefficient(j);
            (mean(&c), (variance(&c) / diag.parameters[j].ess).sqrt())
        })
        .unzip();
    Ok(PriorLimitReport {
        ml,
        posterior_mean,
        mc_std_error,
        n_births: design.n_rows(),
    })
}

/// Chain settings of the prior-limit check: 1250 draws 10 iterations apart.
pub fn prior_limit_mcmc() -> McmcConfig {
    McmcConfig::with_thinning(2000, 10, 1250, 0)
}

pub fn check_prior_limit(seed: u64) -> Check {
    match prior_limit_comparison(seed, &prior_limit_mcmc()) {
        Ok(r) => {
            let z = r.z();
            let worst = z.iter().copied().fold(0.0, f64::max);
            Check::new(
                "ml_prior_limit",
                worst <= 2.0,
                format!(
                    "{} births; ML {:?}; posterior {:?}; largest gap {worst:.2} MC SE (limit 2)",
                    r.n_births,
                    round4(&r.ml),
                    round4(&r.posterior_mean)
                ),
            )
        }
        Err(e) => Check::new("ml_prior_limit", false, format!("could not run: {e}")),
    }
}

fn round4(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

/// Additivity of the overall and sequential decompositions on fuzzed inputs.
pub fn check_collapsing_sum(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut overall, mut groups): (f64, f64) = (0.0, 0.0);
    for _ in 0..cases {
        let f = fuzz_instance(&mut rng);
        let d = decompose_draw(&f.d1, &f.d2, &f.b1, &f.b2, &f.order).expect("matching fixture");
        overall = overall.max((d.x_effect + d.beta_effect - d.overall_diff).abs());
        groups = groups.max((d.group_effects.values().sum::<f64>() - d.beta_effect).abs());
    }
    Check::new(
        "collapsing_sum_fuzz",
        overall < 1e-12 && groups < 1e-12,
        format!("{cases} instances; max overall residual {overall:.2e}, max group residual {groups:.2e} (limit 1e-12)"),
    )
}

pub fn oracle_suite(s: &ValidateSettings) -> Vec<Check> {
    vec![
        check_linear_triangle(s.linear_cases, s.seed),
        check_mc_grid(s.marginalization, s.mc_draws, s.seed),
        check_prior_limit(s.seed),
        check_collapsing_sum(s.fuzz_cases, s.seed),
    ]
}

pub fn render(checks: &[Check]) -> String {
    checks
        .iter()
        .map(|c| {
            format!(
                "{} {}: {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )
        })
        .collect()
}
