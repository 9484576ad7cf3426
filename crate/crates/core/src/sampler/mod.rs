//! Gibbs sampler for the probit model with a normal cluster random intercept,
//!
//! ```text
//! y_ij | beta, gamma_j ~ Bernoulli(Phi(x_ij' beta + gamma_j))
//! gamma_j | sigma2     ~ N(0, sigma2)
//! beta                 ~ N(0, s_beta^2 I)
//! sigma2               ~ InvGamma(a, b)
//! ```
//!
//! using the latent-normal augmentation `z_ij ~ N(x_ij' beta + gamma_j, 1)`
//! with `y_ij = 1{z_ij > 0}`. Every full conditional is closed form.

mod draws;
mod ess;
mod truncnorm;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

use crate::dataset::{DesignMatrix, SurveyId};
use crate::stats::norm_quantile;

pub(crate) use draws::{draws_csv, sidecar_json};
pub use draws::{read_draws, write_draws, DrawsSidecar};
pub use ess::{autocorrelation, effective_sample_size, Ess, ACF_LAGS};
pub use truncnorm::{sample_truncated_normal, Side};

/// Retained-draw target: the number of roughly independent posterior draws
/// each fit aims for.
pub const DEFAULT_TARGET_DRAWS: usize = 1250;
pub const DEFAULT_BURN_IN: usize = 5000;
/// Cluster-variance traces decorrelate over roughly 20 iterations at a few
/// thousand births, so every 60th draw is close to independent.
pub const DEFAULT_THINNING: usize = 60;
/// Minimum effective sample size expected at the draw target.
pub const MIN_ESS: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid prior: {0}")]
    Prior(String),
    #[error("invalid MCMC config: {0}")]
    Config(String),
    #[error("need at least 2 clusters to identify the cluster variance, got {0}")]
    TooFewClusters(usize),
    #[error(
        "collinear design: precision of the coefficient full conditional is singular \
         (smallest eigenvalue {smallest_eigenvalue:e})"
    )]
    Singular { smallest_eigenvalue: f64 },
    #[error("diagnostics need at least 100 draws, got {0}")]
    TooFewDraws(usize),
    #[error("non-finite value in draw {0}")]
    NonFinite(usize),
    #[error("draw file: {0}")]
    Format(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Independent normal prior on coefficients, inverse-gamma on the cluster
/// variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub beta_sd: f64,
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            beta_sd: 10.0,
            sigma2_shape: 1.0,
            sigma2_scale: 0.1,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.beta_sd) || !ok(self.sigma2_shape) || !ok(self.sigma2_scale) {
            return Err(SamplerError::Prior(format!(
                "beta_sd, sigma2_shape and sigma2_scale must be positive and finite: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Chain length settings.
///
/// When `thinning` is `None` it is derived as
/// `max(1, floor((total - burn_in) / target_draws))`, which keeps the retained
/// count at or above the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub total_iterations: usize,
    pub burn_in: usize,
    pub thinning: Option<usize>,
    pub target_draws: usize,
    pub seed: u64,
    /// Independent RNG stream for this chain.
    pub chain: u64,
    /// Accept fewer retained draws than `target_draws`.
    pub allow_fewer: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            total_iterations: DEFAULT_BURN_IN + DEFAULT_TARGET_DRAWS * DEFAULT_THINNING,
            burn_in: DEFAULT_BURN_IN,
            thinning: None,
            target_draws: DEFAULT_TARGET_DRAWS,
            seed: 1,
            chain: 0,
            allow_fewer: false,
        }
    }
}

impl McmcConfig {
    /// Config that retains exactly `draws` draws `thinning` apart.
    pub fn with_thinning(burn_in: usize, thinning: usize, draws: usize, seed: u64) -> Self {
        McmcConfig {
            total_iterations: burn_in + thinning * draws,
            burn_in,
            thinning: Some(thinning),
            target_draws: draws,
            seed,
            chain: 0,
            allow_fewer: false,
        }
    }

    pub fn effective_thinning(&self) -> usize {
        self.thinning.unwrap_or_else(|| {
            (self.total_iterations.saturating_sub(self.burn_in) / self.target_draws.max(1)).max(1)
        })
    }

    pub fn retained(&self) -> usize {
        self.total_iterations.saturating_sub(self.burn_in) / self.effective_thinning()
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: String| Err(SamplerError::Config(m));
        if self.burn_in >= self.total_iterations {
            return bad(format!(
                "burn-in {} must be below total iterations {}",
                self.burn_in, self.total_iterations
            ));
        }
        if self.thinning == Some(0) {
            return bad("thinning must be at least 1".into());
        }
        let retained = self.retained();
        if retained == 0 || (retained < self.target_draws && !self.allow_fewer) {
            return bad(format!(
                "{retained} retained draws is below the target {}",
                self.target_draws
            ));
        }
        Ok(())
    }

    /// Same settings with twice the post-burn-in length and thinning, used to
    /// extend a chain that missed the ESS target.
    pub fn extended(&self) -> Self {
        let thin = self.effective_thinning() * 2;
        McmcConfig {
            total_iterations: self.burn_in + (self.total_iterations - self.burn_in) * 2,
            thinning: Some(thin),
            ..*self
        }
    }
}

/// Retained posterior draws for one survey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub survey_id: SurveyId,
    pub beta: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    pub column_names: Vec<String>,
    pub column_groups: IndexMap<String, Range<usize>>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }

    pub fn n_coefficients(&self) -> usize {
        self.column_names.len()
    }

    /// Trace of coefficient `j`.
    pub fn coefficient(&self, j: usize) -> Vec<f64> {
        self.beta.iter().map(|b| b[j]).collect()
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let p = self.n_coefficients();
        let mut m = vec![0.0; p];
        for b in &self.beta {
            for (acc, v) in m.iter_mut().zip(b) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.len() as f64);
        m
    }

    /// Every draw repeated, for fixtures without posterior variation.
    pub fn constant(
        survey_id: SurveyId,
        beta: Vec<f64>,
        sigma2: f64,
        n: usize,
        design: &DesignMatrix,
    ) -> Self {
        PosteriorDraws {
            survey_id,
            beta: vec![beta; n],
            sigma2: vec![sigma2; n],
            column_names: design.column_names.clone(),
            column_groups: design.column_groups.clone(),
        }
    }
}

/// Per-parameter mixing summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub ess: f64,
    pub degenerate: bool,
    /// Autocorrelation at lags 1..=50.
    pub acf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_draws: usize,
    pub parameters: Vec<ParameterDiagnostics>,
    /// Gibbs updates are always accepted.
    pub acceptance_rate: f64,
    pub min_ess: f64,
    pub warnings: Vec<String>,
}

impl FitDiagnostics {
    /// Retained count and minimum ESS both meet their targets.
    pub fn meets_target(&self, target_draws: usize) -> bool {
        self.n_draws >= target_draws && self.min_ess >= MIN_ESS
    }
}

/// ESS and autocorrelations of every coefficient and of `sigma2`.
pub fn diagnostics(draws: &PosteriorDraws) -> Result<FitDiagnostics, SamplerError> {
    let n = draws.len();
    if n < 100 {
        return Err(SamplerError::TooFewDraws(n));
    }
    let traces = (0..draws.n_coefficients())
        .map(|j| (format!("beta_{j}"), draws.coefficient(j)))
        .chain(std::iter::once((
            "sigma2".to_string(),
            draws.sigma2.clone(),
        )));
    let mut parameters = Vec::new();
    let mut warnings = Vec::new();
    for (name, trace) in traces {
        let ess = effective_sample_size(&trace);
        if ess.degenerate {
            warnings.push(format!("{name}: constant trace"));
        }
        parameters.push(ParameterDiagnostics {
            name,
            ess: ess.value,
            degenerate: ess.degenerate,
            acf: autocorrelation(&trace, ACF_LAGS),
        });
    }
    let min_ess = parameters
        .iter()
        .map(|p| p.ess)
        .fold(f64::INFINITY, f64::min);
    if min_ess < MIN_ESS {
        warnings.push(format!(
            "minimum ESS {min_ess:.0} is below {MIN_ESS:.0}; consider a longer chain"
        ));
    }
    Ok(FitDiagnostics {
        n_draws: n,
        parameters,
        acceptance_rate: 1.0,
        min_ess,
        warnings,
    })
}

/// Quantities of the design reused every iteration.
struct Precomputed {
    p: usize,
    /// Rows of each cluster (rows are stored cluster by cluster, but this does
    /// not rely on it).
    members: Vec<Vec<usize>>,
    /// Cholesky factor of `X'X + I / s_beta^2`.
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

fn precompute(design: &DesignMatrix, prior: &PriorSpec) -> Result<Precomputed, SamplerError> {
    let p = design.n_cols();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    for row in design.rows() {
        for a in 0..p {
            let xa = row[a];
            if xa == 0.0 {
                continue;
            }
            for b in a..p {
                xtx[(a, b)] += xa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }

    // Collinearity is judged on the data part; the prior alone would always
    // make the precision invertible.
    let eig = xtx.clone().symmetric_eigen();
    let smallest = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let largest = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if smallest <= largest * 1e-12 {
        return Err(SamplerError::Singular {
            smallest_eigenvalue: smallest,
        });
    }

    let mut precision = xtx;
    let ridge = 1.0 / (prior.beta_sd * prior.beta_sd);
    for a in 0..p {
        precision[(a, a)] += ridge;
    }
    let chol = precision.cholesky().ok_or(SamplerError::Singular {
        smallest_eigenvalue: smallest,
    })?;

    let mut members = vec![Vec::new(); design.n_clusters];
    for (i, &c) in design.cluster_index.iter().enumerate() {
        members[c].push(i);
    }
    Ok(Precomputed { p, members, chol })
}

/// Run the Gibbs sampler and return the retained draws.
///
/// Iteration order: latent utilities, coefficients, cluster effects, cluster
/// variance. Deterministic for a given `(seed, chain)`.
pub fn fit(
    design: &DesignMatrix,
    prior: &PriorSpec,
    config: &McmcConfig,
) -> Result<PosteriorDraws, SamplerError> {
    prior.validate()?;
    config.validate()?;
    if design.n_clusters < 2 {
        return Err(SamplerError::TooFewClusters(design.n_clusters));
    }
    let pre = precompute(design, prior)?;
    let p = pre.p;
    let n = design.n_rows();
    let n_clusters = design.n_clusters;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(config.chain);

    let rate = design
        .death_rate()
        .clamp(0.5 / n as f64, 1.0 - 0.5 / n as f64);
    let mut beta = vec![0.0; p];
    beta[0] = norm_quantile(rate);
    let mut gamma = vec![0.0; n_clusters];
    let mut sigma2 = prior.sigma2_scale / (prior.sigma2_shape + 1.0);
    let mut eta: Vec<f64> = (0..n).map(|i| design.linear_predictor(i, &beta)).collect();
    let mut z = vec![0.0; n];

    let thin = config.effective_thinning();
    let keep = config.retained();
    let mut out = PosteriorDraws {
        survey_id: design.survey_id,
        beta: Vec::with_capacity(keep),
        sigma2: Vec::with_capacity(keep),
        column_names: design.column_names.clone(),
        column_groups: design.column_groups.clone(),
    };

    let shape_post = prior.sigma2_shape + n_clusters as f64 / 2.0;
    let mut xtr = DVector::<f64>::zeros(p);

    for iter in 0..config.total_iterations {
        // z | beta, gamma
        for i in 0..n {
            let mean = eta[i] + gamma[design.cluster_index[i]];
            let side = if design.outcome[i] == 1 {
                Side::LeftOfZero
            } else {
                Side::RightOfZero
            };
            z[i] = sample_truncated_normal(mean, 1.0, side, &mut rng);
        }

        // beta | z, gamma
        xtr.fill(0.0);
        for (i, row) in design.rows().enumerate() {
            let r = z[i] - gamma[design.cluster_index[i]];
            for (acc, x) in xtr.iter_mut().zip(row) {
                *acc += x * r;
            }
        }
        let mean = pre.chol.solve(&xtr);
        let noise = DVector::<f64>::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        // L' v = noise gives v ~ N(0, (LL')^-1)
        let shift = pre
            .chol
            .l()
            .transpose()
            .solve_upper_triangular(&noise)
            .expect("cholesky factor has a positive diagonal");
        for a in 0..p {
            beta[a] = mean[a] + shift[a];
        }
        for (i, e) in eta.iter_mut().enumerate() {
            *e = design.linear_predictor(i, &beta);
        }

        // gamma_j | z, beta, sigma2
        let mut sum_sq = 0.0;
        for (j, rows) in pre.members.iter().enumerate() {
            let resid: f64 = rows.iter().map(|&i| z[i] - eta[i]).sum();
            let precision = rows.len() as f64 + 1.0 / sigma2;
            let e: f64 = StandardNormal.sample(&mut rng);
            gamma[j] = resid / precision + e / precision.sqrt();
            sum_sq += gamma[j] * gamma[j];
        }

        // sigma2 | gamma
        let rate_post = prior.sigma2_scale + 0.5 * sum_sq;
        let g = Gamma::new(shape_post, 1.0 / rate_post).expect("positive gamma parameters");
        sigma2 = 1.0 / g.sample(&mut rng);

        if iter >= config.burn_in
            && (iter - config.burn_in + 1).is_multiple_of(thin)
            && out.len() < keep
        {
            if !sigma2.is_finite() || beta.iter().any(|b| !b.is_finite()) {
                return Err(SamplerError::NonFinite(out.len()));
            }
            out.beta.push(beta.clone());
            out.sigma2.push(sigma2);
        }
    }
    Ok(out)
}

/// Retained draws, their diagnostics and the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub draws: PosteriorDraws,
    pub diagnostics: FitDiagnostics,
    pub config: McmcConfig,
    pub extended: bool,
}

/// Fit, and when the ESS target is missed and `auto_extend` is set, refit
/// once with twice the thinning.
pub fn fit_to_target(
    design: &DesignMatrix,
    prior: &PriorSpec,
    config: &McmcConfig,
    auto_extend: bool,
) -> Result<FitOutcome, SamplerError> {
    let draws = fit(design, prior, config)?;
    let diag = diagnostics(&draws)?;
    if diag.meets_target(config.target_draws) || !auto_extend {
        return Ok(FitOutcome {
            draws,
            diagnostics: diag,
            config: *config,
            extended: false,
        });
    }
    let longer = config.extended();
    let draws = fit(design, prior, &longer)?;
    let mut diag2 = diagnostics(&draws)?;
    diag2.warnings.insert(
        0,
        format!(
            "first chain reached minimum ESS {:.0}; extended to {} iterations",
            diag.min_ess, longer.total_iterations
        ),
    );
    Ok(FitOutcome {
        draws,
        diagnostics: diag2,
        config: longer,
        extended: true,
    })
}
