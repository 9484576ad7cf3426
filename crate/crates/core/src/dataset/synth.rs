use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use super::{
    BirthRecord, Covariate, DatasetError, Residence, Sex, SurveyId, SurveySample, INTERCEPT,
    MATERNAL_AGE_RANGE,
};
use crate::stats::norm_cdf;

/// Scalar distribution for a generated covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dist {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
    Poisson { lambda: f64 },
    Constant(f64),
}

impl Dist {
    fn sample<R: Rng>(&self, rng: &mut R) -> Result<f64, DatasetError> {
        let bad = |m: String| DatasetError::Generator(m);
        Ok(match *self {
            Dist::Uniform { low, high } => {
                if low.is_nan() || high.is_nan() || low >= high {
                    return Err(bad(format!(
                        "uniform needs low < high, got [{low}, {high}]"
                    )));
                }
                Uniform::new(low, high)
                    .map_err(|e| bad(e.to_string()))?
                    .sample(rng)
            }
            Dist::Normal { mean, sd } => Normal::new(mean, sd)
                .map_err(|e| bad(e.to_string()))?
                .sample(rng),
            Dist::Poisson { lambda } => {
                if lambda == 0.0 {
                    0.0
                } else {
                    Poisson::new(lambda)
                        .map_err(|e| bad(e.to_string()))?
                        .sample(rng)
                }
            }
            Dist::Constant(v) => v,
        })
    }
}

/// Covariate generators for one survey.
///
/// Maternal age is clamped to [15, 45], education and wealth rank to their
/// valid ranges, and education rounded to whole years. Birth order is
/// `1 + birth_order_extra`; first births have no birth interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateDistributions {
    pub maternal_age: Dist,
    pub maternal_education: Dist,
    pub birth_order_extra: Dist,
    pub birth_interval: Dist,
    pub wealth_rank: Dist,
    pub p_male: f64,
    pub p_urban: f64,
}

impl Default for CovariateDistributions {
    fn default() -> Self {
        CovariateDistributions {
            maternal_age: Dist::Uniform {
                low: 15.0,
                high: 45.0,
            },
            maternal_education: Dist::Normal { mean: 5.0, sd: 3.0 },
            birth_order_extra: Dist::Poisson { lambda: 1.5 },
            birth_interval: Dist::Normal {
                mean: 32.0,
                sd: 12.0,
            },
            wealth_rank: Dist::Uniform {
                low: 0.0,
                high: 1.0,
            },
            p_male: 0.51,
            p_urban: 0.3,
        }
    }
}

/// Generator settings for one survey.
///
/// The linear predictor is `beta["intercept"] + sum(beta[c] * value(c))`,
/// where `value` is the raw numeric covariate, or the indicator of `male` /
/// `urban` for the categorical ones. A missing birth interval contributes 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyDgp {
    pub beta: IndexMap<String, f64>,
    pub sigma2: f64,
    pub n_clusters: usize,
    pub births_per_cluster: usize,
    #[serde(default)]
    pub covariates: CovariateDistributions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub surveys: [SurveyDgp; 2],
}

impl SurveyDgp {
    fn validate(&self) -> Result<Vec<(Option<Covariate>, f64)>, DatasetError> {
        let bad = |m: String| Err(DatasetError::Generator(m));
        if self.n_clusters == 0 {
            return bad("cluster count must be positive".into());
        }
        if self.births_per_cluster == 0 {
            return bad("births per cluster must be positive".into());
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return bad(format!(
                "sigma2 must be finite and >= 0, got {}",
                self.sigma2
            ));
        }
        let c = &self.covariates;
        if !(0.0..=1.0).contains(&c.p_male) || !(0.0..=1.0).contains(&c.p_urban) {
            return bad("p_male and p_urban must lie in [0, 1]".into());
        }
        self.beta
            .iter()
            .map(|(name, &b)| {
                if !b.is_finite() {
                    return Err(DatasetError::Generator(format!(
                        "beta `{name}` is not finite"
                    )));
                }
                if name == INTERCEPT {
                    Ok((None, b))
                } else {
                    name.parse::<Covariate>()
                        .map(|c| (Some(c), b))
                        .map_err(|_| DatasetError::Generator(format!("unknown beta key `{name}`")))
                }
            })
            .collect()
    }
}

fn draw_record<R: Rng>(
    rng: &mut R,
    dists: &CovariateDistributions,
    cluster_id: &str,
    survey_id: SurveyId,
) -> Result<BirthRecord, DatasetError> {
    let (lo, hi) = MATERNAL_AGE_RANGE;
    let maternal_age = dists.maternal_age.sample(rng)?.clamp(lo, hi);
    let maternal_education = dists.maternal_education.sample(rng)?.max(0.0).round();
    let birth_order = 1 + dists.birth_order_extra.sample(rng)?.max(0.0).round() as u32;
    let interval = dists.birth_interval.sample(rng)?.max(9.0);
    let birth_interval = (birth_order > 1).then_some(interval);
    let wealth_rank = dists.wealth_rank.sample(rng)?.clamp(0.0, 1.0);
    let sex = if rng.random::<f64>() < dists.p_male {
        Sex::Male
    } else {
        Sex::Female
    };
    let residence = if rng.random::<f64>() < dists.p_urban {
        Residence::Urban
    } else {
        Residence::Rural
    };
    Ok(BirthRecord {
        outcome: 0,
        maternal_age,
        maternal_education,
        birth_order,
        birth_interval,
        sex,
        residence,
        wealth_rank,
        cluster_id: cluster_id.to_string(),
        survey_id,
    })
}

fn predictor_value(c: Covariate, r: &BirthRecord) -> f64 {
    match c {
        Covariate::Sex => (r.sex == Sex::Male) as u8 as f64,
        Covariate::Residence => (r.residence == Residence::Urban) as u8 as f64,
        _ => c.numeric(r).unwrap_or(0.0),
    }
}

fn synthesize_one(
    dgp: &SurveyDgp,
    survey_id: SurveyId,
    seed: u64,
) -> Result<SurveySample, DatasetError> {
    let terms = dgp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(survey_id.index() as u64 + 1);
    let effect = Normal::new(0.0, dgp.sigma2.sqrt()).expect("validated sigma2");

    let mut sample = SurveySample::new(survey_id, 0);
    let width = dgp.n_clusters.to_string().len();
    for j in 0..dgp.n_clusters {
        let cluster_id = format!("c{:0width$}", j + 1);
        let gamma = effect.sample(&mut rng);
        for _ in 0..dgp.births_per_cluster {
            let mut r = draw_record(&mut rng, &dgp.covariates, &cluster_id, survey_id)?;
            let eta: f64 = terms
                .iter()
                .map(|(c, b)| c.map_or(1.0, |c| predictor_value(c, &r)) * b)
                .sum();
            let p = norm_cdf(eta + gamma);
            r.outcome = (rng.random::<f64>() < p) as u8;
            sample.push(r);
        }
    }
    Ok(sample)
}

/// Simulate both surveys. Survey years are left at 0 for the caller to set.
/// Each survey uses its own ChaCha stream of `seed`, so the pair is a pure
/// function of `(dgp, seed)`.
pub fn synthesize(
    dgp: &DgpConfig,
    seed: u64,
) -> Result<(SurveySample, SurveySample), DatasetError> {
    let s1 = synthesize_one(&dgp.surveys[0], SurveyId::S1, seed)?;
    let s2 = synthesize_one(&dgp.surveys[1], SurveyId::S2, seed)?;
    Ok((s1, s2))
}
