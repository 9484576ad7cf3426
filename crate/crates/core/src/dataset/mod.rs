//! Birth-level survey microdata: records, covariate schema, ingestion,
//! reference-population centering and spline-expanded design matrices.

mod design;
mod ingest;
mod spline;
mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use design::{build_design, DesignBasis, DesignMatrix, INTERCEPT};
pub use ingest::{ingest_csv, to_csv_string, write_csv};
pub use spline::{bspline_basis, SplineBasis};
pub use synth::{synthesize, CovariateDistributions, DgpConfig, Dist, SurveyDgp};

/// Mothers outside this age range are dropped at ingestion.
pub const MATERNAL_AGE_RANGE: (f64, f64) = (15.0, 45.0);

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("input file is empty (no data rows): {0}")]
    EmptyFile(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("no records left after filtering maternal age to [15, 45]")]
    NoRecords,
    #[error("sample is empty")]
    EmptySample,
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("covariate `{0}` is not present in the records")]
    MissingCovariate(String),
    #[error("degenerate design: column `{0}` is constant across all rows")]
    DegenerateDesign(String),
    #[error("knots must be ascending with distinct boundaries: {0:?}")]
    Knots(Vec<f64>),
    #[error("invalid generator config: {0}")]
    Generator(String),
    #[error("poor_quantile must lie in (0, 1], got {0}")]
    PoorQuantile(f64),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SurveyId {
    S1,
    S2,
}

impl SurveyId {
    pub fn index(self) -> usize {
        match self {
            SurveyId::S1 => 0,
            SurveyId::S2 => 1,
        }
    }
}

impl fmt::Display for SurveyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurveyId::S1 => "S1",
            SurveyId::S2 => "S2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Residence {
    Rural,
    Urban,
}

/// One birth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthRecord {
    /// 1 if the child died before age one.
    pub outcome: u8,
    pub maternal_age: f64,
    pub maternal_education: f64,
    pub birth_order: u32,
    /// Months since the previous birth; absent for first births.
    pub birth_interval: Option<f64>,
    pub sex: Sex,
    pub residence: Residence,
    /// Share of households with wealth at or below this household's.
    pub wealth_rank: f64,
    pub cluster_id: String,
    pub survey_id: SurveyId,
}

/// The covariates a record carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    MaternalAge,
    MaternalEducation,
    BirthOrder,
    BirthInterval,
    Sex,
    Residence,
    WealthRank,
}

impl Covariate {
    pub const ALL: [Covariate; 7] = [
        Covariate::MaternalAge,
        Covariate::MaternalEducation,
        Covariate::BirthOrder,
        Covariate::BirthInterval,
        Covariate::Sex,
        Covariate::Residence,
        Covariate::WealthRank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Covariate::MaternalAge => "maternal_age",
            Covariate::MaternalEducation => "maternal_education",
            Covariate::BirthOrder => "birth_order",
            Covariate::BirthInterval => "birth_interval",
            Covariate::Sex => "sex",
            Covariate::Residence => "residence",
            Covariate::WealthRank => "wealth_rank",
        }
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, Covariate::Sex | Covariate::Residence)
    }

    /// Levels of a categorical covariate, in `(level_0, level_1)` order.
    pub fn levels(self) -> Option<[&'static str; 2]> {
        match self {
            Covariate::Sex => Some(["female", "male"]),
            Covariate::Residence => Some(["rural", "urban"]),
            _ => None,
        }
    }

    /// Numeric value of a continuous covariate; `None` for a missing birth
    /// interval or a categorical covariate.
    pub fn numeric(self, r: &BirthRecord) -> Option<f64> {
        match self {
            Covariate::MaternalAge => Some(r.maternal_age),
            Covariate::MaternalEducation => Some(r.maternal_education),
            Covariate::BirthOrder => Some(r.birth_order as f64),
            Covariate::BirthInterval => r.birth_interval,
            Covariate::WealthRank => Some(r.wealth_rank),
            Covariate::Sex | Covariate::Residence => None,
        }
    }

    /// Level name of a categorical covariate.
    pub fn level(self, r: &BirthRecord) -> Option<&'static str> {
        match self {
            Covariate::Sex => Some(match r.sex {
                Sex::Female => "female",
                Sex::Male => "male",
            }),
            Covariate::Residence => Some(match r.residence {
                Residence::Rural => "rural",
                Residence::Urban => "urban",
            }),
            _ => None,
        }
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Covariate {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Covariate::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| DatasetError::Schema(format!("unknown covariate `{s}`")))
    }
}

fn default_degree() -> usize {
    3
}

fn default_df() -> usize {
    4
}

/// How a covariate enters the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateKind {
    /// Centered, then expanded into `df` B-spline columns of the given degree.
    ContinuousSpline {
        #[serde(default = "default_degree")]
        degree: usize,
        #[serde(default = "default_df")]
        df: usize,
    },
    /// Centered value as a single column.
    Linear,
    /// One 0/1 column; the reference level is coded 0.
    Binary { reference: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: Covariate,
    #[serde(flatten)]
    pub kind: CovariateKind,
}

impl CovariateSpec {
    pub fn spline(name: Covariate, degree: usize, df: usize) -> Self {
        CovariateSpec {
            name,
            kind: CovariateKind::ContinuousSpline { degree, df },
        }
    }

    pub fn linear(name: Covariate) -> Self {
        CovariateSpec {
            name,
            kind: CovariateKind::Linear,
        }
    }

    pub fn binary(name: Covariate, reference: &str) -> Self {
        CovariateSpec {
            name,
            kind: CovariateKind::Binary {
                reference: reference.to_string(),
            },
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self.kind, CovariateKind::Binary { .. })
    }
}

/// Ordered covariate list. The intercept is implicit and always first; the
/// order of the remaining entries is the default decomposition order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub covariates: Vec<CovariateSpec>,
}

impl Default for CovariateSchema {
    /// Cubic splines with four columns for wealth, education, maternal age and
    /// birth order, a single slope for birth interval, female and rural as
    /// reference levels, listed in the coefficient-table order.
    fn default() -> Self {
        CovariateSchema {
            covariates: vec![
                CovariateSpec::spline(Covariate::WealthRank, 3, 4),
                CovariateSpec::spline(Covariate::MaternalEducation, 3, 4),
                CovariateSpec::spline(Covariate::MaternalAge, 3, 4),
                CovariateSpec::spline(Covariate::BirthOrder, 3, 4),
                CovariateSpec::linear(Covariate::BirthInterval),
                CovariateSpec::binary(Covariate::Sex, "female"),
                CovariateSpec::binary(Covariate::Residence, "rural"),
            ],
        }
    }
}

impl CovariateSchema {
    pub fn new(covariates: Vec<CovariateSpec>) -> Result<Self, DatasetError> {
        let schema = CovariateSchema { covariates };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut seen = BTreeSet::new();
        for spec in &self.covariates {
            if !seen.insert(spec.name) {
                return Err(DatasetError::Schema(format!(
                    "covariate `{}` listed twice",
                    spec.name
                )));
            }
            match &spec.kind {
                CovariateKind::Binary { reference } => {
                    let levels = spec.name.levels().ok_or_else(|| {
                        DatasetError::Schema(format!("`{}` is not categorical", spec.name))
                    })?;
                    if !levels.contains(&reference.as_str()) {
                        return Err(DatasetError::Schema(format!(
                            "reference level `{reference}` is not a level of `{}` ({levels:?})",
                            spec.name
                        )));
                    }
                }
                CovariateKind::ContinuousSpline { degree, df } => {
                    if spec.name.is_categorical() {
                        return Err(DatasetError::Schema(format!(
                            "`{}` is categorical and cannot be spline-expanded",
                            spec.name
                        )));
                    }
                    if *df == 0 || df < degree {
                        return Err(DatasetError::Schema(format!(
                            "`{}`: df = {df} must be at least max(1, degree = {degree})",
                            spec.name
                        )));
                    }
                }
                CovariateKind::Linear => {
                    if spec.name.is_categorical() {
                        return Err(DatasetError::Schema(format!(
                            "`{}` is categorical and cannot be linear",
                            spec.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Group names in default decomposition order, intercept first.
    pub fn group_names(&self) -> Vec<String> {
        std::iter::once(INTERCEPT.to_string())
            .chain(self.covariates.iter().map(|c| c.name.name().to_string()))
            .collect()
    }

    pub fn continuous(&self) -> impl Iterator<Item = &CovariateSpec> {
        self.covariates.iter().filter(|c| c.is_continuous())
    }
}

/// All births of one survey, grouped by cluster in first-appearance order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySample {
    pub survey_id: SurveyId,
    pub survey_year: i32,
    pub clusters: IndexMap<String, Vec<BirthRecord>>,
    /// Covariates that were present in the source data.
    pub present: BTreeSet<Covariate>,
    /// Rows removed by the maternal-age filter.
    pub dropped: usize,
}

impl SurveySample {
    pub fn new(survey_id: SurveyId, survey_year: i32) -> Self {
        SurveySample {
            survey_id,
            survey_year,
            clusters: IndexMap::new(),
            present: Covariate::ALL.into_iter().collect(),
            dropped: 0,
        }
    }

    pub fn push(&mut self, record: BirthRecord) {
        self.clusters
            .entry(record.cluster_id.clone())
            .or_default()
            .push(record);
    }

    pub fn n_births(&self) -> usize {
        self.clusters.values().map(Vec::len).sum()
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn records(&self) -> impl Iterator<Item = &BirthRecord> {
        self.clusters.values().flatten()
    }

    pub fn death_rate(&self) -> f64 {
        let n = self.n_births();
        if n == 0 {
            return f64::NAN;
        }
        self.records().map(|r| r.outcome as f64).sum::<f64>() / n as f64
    }

    /// Union of several samples, used as the knot source for a basis shared
    /// across surveys. Cluster ids are prefixed with the survey id.
    pub fn pooled(samples: &[&SurveySample]) -> SurveySample {
        let first = samples.first().expect("at least one sample");
        let mut out = SurveySample::new(first.survey_id, first.survey_year);
        out.present = samples
            .iter()
            .map(|s| s.present.clone())
            .reduce(|a, b| a.intersection(&b).copied().collect())
            .unwrap_or_default();
        for s in samples {
            for (id, records) in &s.clusters {
                out.clusters
                    .insert(format!("{}:{id}", s.survey_id), records.clone());
            }
            out.dropped += s.dropped;
        }
        out
    }
}

/// Reference values subtracted from continuous covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringConstants {
    pub values: IndexMap<Covariate, f64>,
    pub poor_quantile: f64,
    /// Set when no record had `wealth_rank <= poor_quantile` and full-sample
    /// means were used instead.
    pub fallback: bool,
}

impl CenteringConstants {
    pub fn zeros(schema: &CovariateSchema) -> Self {
        CenteringConstants {
            values: schema.continuous().map(|c| (c.name, 0.0)).collect(),
            poor_quantile: 1.0,
            fallback: false,
        }
    }

    pub fn get(&self, c: Covariate) -> f64 {
        self.values.get(&c).copied().unwrap_or(0.0)
    }

    pub fn center(&self, c: Covariate, value: f64) -> f64 {
        value - self.get(c)
    }
}

/// Means of the continuous covariates among the poorest households of the
/// first survey (`wealth_rank <= poor_quantile`).
pub fn compute_centering(
    sample1: &SurveySample,
    schema: &CovariateSchema,
    poor_quantile: f64,
) -> Result<CenteringConstants, DatasetError> {
    if !(poor_quantile > 0.0 && poor_quantile <= 1.0) {
        return Err(DatasetError::PoorQuantile(poor_quantile));
    }
    if sample1.n_births() == 0 {
        return Err(DatasetError::EmptySample);
    }
    let poor: Vec<&BirthRecord> = sample1
        .records()
        .filter(|r| r.wealth_rank <= poor_quantile)
        .collect();
    let fallback = poor.is_empty();
    let pool: Vec<&BirthRecord> = if fallback {
        sample1.records().collect()
    } else {
        poor
    };

    let mut values = IndexMap::new();
    for spec in schema.continuous() {
        let observed: Vec<f64> = pool.iter().filter_map(|r| spec.name.numeric(r)).collect();
        // Birth intervals can be missing for every poor household; fall back to
        // all observed intervals in that case.
        let m = if observed.is_empty() {
            let all: Vec<f64> = sample1
                .records()
                .filter_map(|r| spec.name.numeric(r))
                .collect();
            if all.is_empty() {
                return Err(DatasetError::MissingCovariate(spec.name.to_string()));
            }
            crate::stats::mean(&all)
        } else {
            crate::stats::mean(&observed)
        };
        values.insert(spec.name, m);
    }
    Ok(CenteringConstants {
        values,
        poor_quantile,
        fallback,
    })
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use proptest::prelude::*;

    fn age_schema() -> CovariateSchema {
        CovariateSchema::new(vec![CovariateSpec::spline(Covariate::MaternalAge, 3, 4)]).unwrap()
    }

    #[test]
    fn centering_uses_poorest_households() {
        let s = sample(vec![
            record("a", 0, 18.0, 0.10),
            record("a", 0, 22.0, 0.15),
            record("b", 1, 30.0, 0.50),
        ]);
        let c = compute_centering(&s, &age_schema(), 0.2).unwrap();
        assert_eq!(c.get(Covariate::MaternalAge), 20.0);
        assert!(!c.fallback);
    }

    #[test]
    fn centering_whole_population() {
        let s = sample(vec![
            record("a", 0, 18.0, 0.10),
            record("a", 0, 22.0, 0.15),
            record("b", 1, 32.0, 0.50),
        ]);
        let c = compute_centering(&s, &age_schema(), 1.0).unwrap();
        assert_eq!(c.get(Covariate::MaternalAge), 24.0);
    }

    #[test]
    fn centering_falls_back_when_nobody_is_poor() {
        let s = sample(vec![record("a", 0, 20.0, 0.9), record("b", 0, 30.0, 0.9)]);
        let c = compute_centering(&s, &age_schema(), 0.2).unwrap();
        assert!(c.fallback);
        assert_eq!(c.get(Covariate::MaternalAge), 25.0);
    }

    #[test]
    fn centering_rejects_empty_sample() {
        let s = SurveySample::new(SurveyId::S1, 2000);
        assert!(matches!(
            compute_centering(&s, &age_schema(), 0.2),
            Err(DatasetError::EmptySample)
        ));
        let s = sample(vec![record("a", 0, 20.0, 0.1)]);
        assert!(compute_centering(&s, &age_schema(), 0.0).is_err());
    }

    #[test]
    fn centering_covers_only_continuous_covariates() {
        let s = sample(vec![record("a", 0, 20.0, 0.1)]);
        let c = compute_centering(&s, &CovariateSchema::default(), 0.2).unwrap();
        let keys: BTreeSet<_> = c.values.keys().copied().collect();
        let want: BTreeSet<_> = [
            Covariate::WealthRank,
            Covariate::MaternalEducation,
            Covariate::MaternalAge,
            Covariate::BirthOrder,
            Covariate::BirthInterval,
        ]
        .into_iter()
        .collect();
        assert_eq!(keys, want);
    }

    #[test]
    fn schema_validation() {
        assert!(CovariateSchema::new(vec![
            CovariateSpec::linear(Covariate::MaternalAge),
            CovariateSpec::linear(Covariate::MaternalAge),
        ])
        .is_err());
        assert!(
            CovariateSchema::new(vec![CovariateSpec::binary(Covariate::Sex, "other")]).is_err()
        );
        assert!(CovariateSchema::new(vec![CovariateSpec::spline(Covariate::Sex, 3, 4)]).is_err());
        assert!(
            CovariateSchema::new(vec![CovariateSpec::spline(Covariate::MaternalAge, 3, 2)])
                .is_err()
        );
        CovariateSchema::default().validate().unwrap();
    }

    #[test]
    fn schema_json_shape() {
        let json = r#"{"covariates": [
            {"name": "maternal_age", "kind": "continuous_spline", "degree": 3, "df": 4},
            {"name": "sex", "kind": "binary", "reference": "female"},
            {"name": "wealth_rank", "kind": "linear"}
        ]}"#;
        let schema: CovariateSchema = serde_json::from_str(json).unwrap();
        assert_eq!(
            schema.covariates[1],
            CovariateSpec::binary(Covariate::Sex, "female")
        );
        assert_eq!(
            schema.group_names(),
            vec!["intercept", "maternal_age", "sex", "wealth_rank"]
        );
    }

    proptest! {
        #[test]
        fn centering_with_zero_constants_is_identity(v in -1e6f64..1e6) {
            let c = CenteringConstants::zeros(&age_schema());
            prop_assert_eq!(c.center(Covariate::MaternalAge, v), v);
        }
    }
}
