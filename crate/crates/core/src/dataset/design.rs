use std::ops::Range;

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    CenteringConstants, Covariate, CovariateKind, CovariateSchema, DatasetError, SplineBasis,
    SurveyId, SurveySample,
};
use crate::stats;

/// Relative residual below which a missingness indicator counts as spanned
/// by the other columns.
const INDICATOR_RESIDUAL_TOL: f64 = 1e-9;

/// Name of the implicit first column group.
pub const INTERCEPT: &str = "intercept";

/// Row-major design matrix with a leading intercept column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub survey_id: SurveyId,
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    pub column_names: Vec<String>,
    /// Covariate name to column range; together they cover `1..p`.
    pub column_groups: IndexMap<String, Range<usize>>,
    /// Cluster ordinal of each row, assigned in first-appearance order.
    pub cluster_index: Vec<usize>,
    pub n_clusters: usize,
    pub outcome: Vec<u8>,
}

impl DesignMatrix {
    /// Checks the structural invariants: ones in column 0, groups that
    /// partition the remaining columns, and per-row vectors of matching length.
    pub fn new(
        values: Vec<f64>,
        n_cols: usize,
        column_names: Vec<String>,
        column_groups: IndexMap<String, Range<usize>>,
        cluster_index: Vec<usize>,
        outcome: Vec<u8>,
    ) -> Result<Self, DatasetError> {
        let bad = |m: String| Err(DatasetError::Schema(m));
        if n_cols == 0 || !values.len().is_multiple_of(n_cols) {
            return bad(format!(
                "{} values do not fill {n_cols} columns",
                values.len()
            ));
        }
        let n_rows = values.len() / n_cols;
        if column_names.len() != n_cols {
            return bad("column name count differs from column count".into());
        }
        if cluster_index.len() != n_rows || outcome.len() != n_rows {
            return bad("cluster index or outcome length differs from row count".into());
        }
        if outcome.iter().any(|&y| y > 1) {
            return bad("outcomes must be 0 or 1".into());
        }
        if (0..n_rows).any(|i| values[i * n_cols] != 1.0) {
            return bad("column 0 must be all ones".into());
        }
        let mut next = 1;
        for (name, range) in &column_groups {
            if name == INTERCEPT || range.start != next || range.end <= range.start {
                return bad(format!(
                    "column group `{name}` {range:?} breaks the partition"
                ));
            }
            next = range.end;
        }
        if next != n_cols {
            return bad(format!("column groups end at {next}, expected {n_cols}"));
        }
        let n_clusters = cluster_index.iter().max().map_or(0, |m| m + 1);
        Ok(DesignMatrix {
            survey_id: SurveyId::S1,
            n_rows,
            n_cols,
            values,
            column_names,
            column_groups,
            cluster_index,
            n_clusters,
            outcome,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    /// Column range of a group; `intercept` is column 0.
    pub fn group_range(&self, name: &str) -> Option<Range<usize>> {
        if name == INTERCEPT {
            return Some(0..1);
        }
        self.column_groups.get(name).cloned()
    }

    /// All group names, intercept first.
    pub fn group_names(&self) -> Vec<String> {
        std::iter::once(INTERCEPT.to_string())
            .chain(self.column_groups.keys().cloned())
            .collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_cols];
        for row in self.rows() {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n_rows as f64);
        m
    }

    pub fn linear_predictor(&self, i: usize, beta: &[f64]) -> f64 {
        self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum()
    }

    pub fn death_rate(&self) -> f64 {
        self.outcome.iter().map(|&y| y as f64).sum::<f64>() / self.n_rows as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Encoding {
    Spline(SplineBasis),
    Linear,
    Indicator { level: String },
}

/// Median imputation for missing values plus an optional missingness column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Imputation {
    value: f64,
    indicator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Term {
    covariate: Covariate,
    encoding: Encoding,
    imputation: Option<Imputation>,
}

/// The column layout and bases shared by both surveys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBasis {
    pub centering: CenteringConstants,
    terms: Vec<Term>,
    pub column_names: Vec<String>,
    pub column_groups: IndexMap<String, Range<usize>>,
}

fn check_present(sample: &SurveySample, schema: &CovariateSchema) -> Result<(), DatasetError> {
    for spec in &schema.covariates {
        let present = sample.present.contains(&spec.name)
            && (spec.name != Covariate::BirthInterval
                || sample.records().any(|r| r.birth_interval.is_some()));
        if !present {
            return Err(DatasetError::MissingCovariate(spec.name.to_string()));
        }
    }
    Ok(())
}

impl DesignBasis {
    /// Derive knots and imputation values from `knot_source`.
    ///
    /// A missingness indicator that the remaining columns already reproduce
    /// on `knot_source` is left out. With intervals missing exactly for first
    /// births, a birth-order spline whose first interior knot sits at 2
    /// spans the first-birth dummy, and keeping both makes the design
    /// singular.
    pub fn from_source(
        knot_source: &SurveySample,
        schema: &CovariateSchema,
        centering: &CenteringConstants,
    ) -> Result<Self, DatasetError> {
        schema.validate()?;
        check_present(knot_source, schema)?;

        let mut terms = Vec::with_capacity(schema.covariates.len());
        for spec in &schema.covariates {
            let cov = spec.name;
            let term = match &spec.kind {
                CovariateKind::Binary { reference } => {
                    let [a, b] = cov.levels().expect("validated categorical");
                    let level = if reference == a { b } else { a };
                    Term {
                        covariate: cov,
                        encoding: Encoding::Indicator {
                            level: level.to_string(),
                        },
                        imputation: None,
                    }
                }
                kind => {
                    let observed: Vec<f64> = knot_source
                        .records()
                        .filter_map(|r| cov.numeric(r))
                        .collect();
                    let any_missing = observed.len() < knot_source.n_births();
                    let imputation = any_missing.then(|| Imputation {
                        value: stats::quantile(&observed, 0.5),
                        indicator: true,
                    });
                    let encoding = match kind {
                        CovariateKind::ContinuousSpline { degree, df } => {
                            let fill = imputation.as_ref().map(|m| m.value);
                            let centered: Vec<f64> = knot_source
                                .records()
                                .map(|r| centering.center(cov, cov.numeric(r).or(fill).unwrap()))
                                .collect();
                            let basis = SplineBasis::from_data(&centered, *degree, *df, 0.0)
                                .map_err(|_| DatasetError::DegenerateDesign(cov.to_string()))?;
                            Encoding::Spline(basis)
                        }
                        _ => Encoding::Linear,
                    };
                    Term {
                        covariate: cov,
                        encoding,
                        imputation,
                    }
                }
            };
            terms.push(term);
        }

        let mut basis = DesignBasis::from_terms(centering, terms);
        basis.drop_redundant_indicators(knot_source);
        Ok(basis)
    }

    fn from_terms(centering: &CenteringConstants, terms: Vec<Term>) -> Self {
        let mut column_names = vec![INTERCEPT.to_string()];
        let mut column_groups = IndexMap::new();
        for term in &terms {
            let cov = term.covariate;
            let start = column_names.len();
            match &term.encoding {
                Encoding::Indicator { level } => column_names.push(format!("{cov}[{level}]")),
                Encoding::Spline(basis) => {
                    for k in 1..=basis.n_columns() {
                        column_names.push(format!("{cov}[bs{k}]"));
                    }
                }
                Encoding::Linear => column_names.push(cov.to_string()),
            }
            if term.imputation.as_ref().is_some_and(|m| m.indicator) {
                column_names.push(format!("{cov}[missing]"));
            }
            column_groups.insert(cov.to_string(), start..column_names.len());
        }
        DesignBasis {
            centering: centering.clone(),
            terms,
            column_names,
            column_groups,
        }
    }

    /// Remove each missingness indicator whose least-squares residual on the
    /// other columns of the `knot_source` design is numerically zero.
    fn drop_redundant_indicators(&mut self, knot_source: &SurveySample) {
        loop {
            let p = self.n_cols();
            let n = knot_source.n_births();
            let mut values = Vec::with_capacity(n * p);
            for r in knot_source.records() {
                self.push_row(r, &mut values);
            }
            let x = DMatrix::from_row_slice(n, p, &values);
            let redundant = self.terms.iter().position(|term| {
                if !term.imputation.as_ref().is_some_and(|m| m.indicator) {
                    return false;
                }
                let name = format!("{}[missing]", term.covariate);
                let j = self.column_names.iter().position(|c| *c == name).unwrap();
                let target = x.column(j).into_owned();
                let others = x.clone().remove_column(j);
                let Ok(coef) = others.clone().svd(true, true).solve(&target, 1e-12) else {
                    return false;
                };
                let residual = (&others * coef - &target).norm();
                residual <= INDICATOR_RESIDUAL_TOL * target.norm()
            });
            match redundant {
                Some(t) => {
                    if let Some(m) = self.terms[t].imputation.as_mut() {
                        m.indicator = false;
                    }
                    let terms = std::mem::take(&mut self.terms);
                    *self = DesignBasis::from_terms(&self.centering, terms);
                }
                None => return,
            }
        }
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    fn push_row(&self, r: &super::BirthRecord, out: &mut Vec<f64>) {
        out.push(1.0);
        for term in &self.terms {
            let cov = term.covariate;
            match &term.encoding {
                Encoding::Indicator { level } => {
                    out.push(if cov.level(r) == Some(level.as_str()) {
                        1.0
                    } else {
                        0.0
                    });
                }
                enc => {
                    let raw = cov.numeric(r);
                    let fill = term.imputation.as_ref().map(|m| m.value);
                    // Missing values without an imputation rule (absent from the
                    // knot source) sit at the reference point.
                    let x = raw.or(fill).map_or(0.0, |v| self.centering.center(cov, v));
                    match enc {
                        Encoding::Spline(basis) => out.extend(basis.eval(x)),
                        _ => out.push(x),
                    }
                    if term.imputation.as_ref().is_some_and(|m| m.indicator) {
                        out.push(if raw.is_none() { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }

    /// Build the design for one survey.
    pub fn apply(&self, sample: &SurveySample) -> Result<DesignMatrix, DatasetError> {
        for term in &self.terms {
            if !sample.present.contains(&term.covariate) {
                return Err(DatasetError::MissingCovariate(term.covariate.to_string()));
            }
        }
        let p = self.n_cols();
        let n = sample.n_births();
        if n == 0 {
            return Err(DatasetError::EmptySample);
        }
        let mut values = Vec::with_capacity(n * p);
        let mut cluster_index = Vec::with_capacity(n);
        let mut outcome = Vec::with_capacity(n);
        for (ordinal, records) in sample.clusters.values().enumerate() {
            for r in records {
                self.push_row(r, &mut values);
                cluster_index.push(ordinal);
                outcome.push(r.outcome);
            }
        }

        for j in 1..p {
            let first = values[j];
            if (1..n).all(|i| values[i * p + j] == first) {
                return Err(DatasetError::DegenerateDesign(self.column_names[j].clone()));
            }
        }

        let mut design = DesignMatrix::new(
            values,
            p,
            self.column_names.clone(),
            self.column_groups.clone(),
            cluster_index,
            outcome,
        )?;
        design.survey_id = sample.survey_id;
        Ok(design)
    }
}

/// Center and expand `sample` using a basis derived from `knot_source`.
///
/// Pass the pooled two-survey sample as `knot_source` so both designs share
/// one column layout.
pub fn build_design(
    sample: &SurveySample,
    schema: &CovariateSchema,
    centering: &CenteringConstants,
    knot_source: &SurveySample,
) -> Result<DesignMatrix, DatasetError> {
    DesignBasis::from_source(knot_source, schema, centering)?.apply(sample)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::{CovariateSpec, Sex};
    use super::*;

    fn sexed(records: &[(u8, Sex)]) -> SurveySample {
        sample(
            records
                .iter()
                .enumerate()
                .map(|(i, &(y, s))| {
                    let mut r = record(if i % 2 == 0 { "a" } else { "b" }, y, 20.0 + i as f64, 0.3);
                    r.sex = s;
                    r
                })
                .collect(),
        )
    }

    #[test]
    fn binary_reference_coding() {
        let s = sexed(&[(0, Sex::Male), (1, Sex::Female), (0, Sex::Male)]);
        let schema =
            CovariateSchema::new(vec![CovariateSpec::binary(Covariate::Sex, "female")]).unwrap();
        let c = CenteringConstants::zeros(&schema);
        let d = build_design(&s, &schema, &c, &s).unwrap();
        assert_eq!(d.n_cols(), 2);
        // rows are grouped by cluster: a(0), a(2), b(1)
        let col1: Vec<f64> = (0..3).map(|i| d.get(i, 1)).collect();
        assert_eq!(col1, vec![1.0, 1.0, 0.0]);
        assert_eq!(d.cluster_index, vec![0, 0, 1]);
        assert_eq!(d.outcome, vec![0, 0, 1]);
        assert_eq!(d.column_names, vec!["intercept", "sex[male]"]);
    }

    #[test]
    fn all_female_sample_is_degenerate() {
        let s = sexed(&[(0, Sex::Female), (1, Sex::Female)]);
        let schema =
            CovariateSchema::new(vec![CovariateSpec::binary(Covariate::Sex, "female")]).unwrap();
        let c = CenteringConstants::zeros(&schema);
        match build_design(&s, &schema, &c, &s) {
            Err(DatasetError::DegenerateDesign(col)) => assert_eq!(col, "sex[male]"),
            other => panic!("expected degenerate design, got {other:?}"),
        }
    }

    #[test]
    fn shared_knot_source_gives_identical_layout() {
        let a = sample(
            (0..30)
                .map(|i| record("a", 0, 15.0 + i as f64 * 0.5, 0.5))
                .collect(),
        );
        let mut b = sample(
            (0..40)
                .map(|i| record("z", 1, 25.0 + i as f64 * 0.4, 0.5))
                .collect(),
        );
        b.survey_id = SurveyId::S2;
        let schema =
            CovariateSchema::new(vec![CovariateSpec::spline(Covariate::MaternalAge, 3, 4)])
                .unwrap();
        let c = CenteringConstants::zeros(&schema);
        let pooled = SurveySample::pooled(&[&a, &b]);
        let da = build_design(&a, &schema, &c, &pooled).unwrap();
        let db = build_design(&b, &schema, &c, &pooled).unwrap();
        assert_eq!(da.n_cols(), 5);
        assert_eq!(da.column_groups, db.column_groups);
        assert_eq!(da.column_groups["maternal_age"], 1..5);
    }

    #[test]
    fn spline_columns_vanish_at_the_centering_point() {
        let s = sample(
            (0..30)
                .map(|i| record("a", 0, 15.0 + i as f64, 0.5))
                .collect(),
        );
        let schema =
            CovariateSchema::new(vec![CovariateSpec::spline(Covariate::MaternalAge, 3, 4)])
                .unwrap();
        let mut c = CenteringConstants::zeros(&schema);
        c.values.insert(Covariate::MaternalAge, 20.0);
        let d = build_design(&s, &schema, &c, &s).unwrap();
        // record with age 20 is row 5
        assert!(d.row(5)[1..].iter().all(|v| v.abs() < 1e-15));
        assert!(d.row(6)[1..].iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn missing_birth_interval_gets_median_and_indicator() {
        let mut recs: Vec<_> = (0..9)
            .map(|i| {
                let mut r = record("a", 0, 20.0 + i as f64, 0.5);
                r.birth_interval = Some(10.0 + i as f64);
                r
            })
            .collect();
        recs[0].birth_interval = None;
        recs[0].birth_order = 1;
        let s = sample(recs);
        let schema =
            CovariateSchema::new(vec![CovariateSpec::linear(Covariate::BirthInterval)]).unwrap();
        let c = CenteringConstants::zeros(&schema);
        let d = build_design(&s, &schema, &c, &s).unwrap();
        assert_eq!(
            d.column_names,
            vec!["intercept", "birth_interval", "birth_interval[missing]"]
        );
        // median of 11..=18 is 14.5
        assert_eq!(d.row(0), &[1.0, 14.5, 1.0]);
        assert_eq!(d.row(1), &[1.0, 11.0, 0.0]);
    }

    #[test]
    fn indicator_spanned_by_birth_order_spline_is_dropped() {
        let orders = [1u32, 1, 2, 2, 2, 2, 3, 4, 5, 6];
        let recs: Vec<_> = (0..40)
            .map(|i| {
                let mut r = record(
                    if i % 2 == 0 { "a" } else { "b" },
                    (i % 3 == 0) as u8,
                    20.0 + i as f64 * 0.5,
                    0.5,
                );
                r.birth_order = orders[i % orders.len()];
                r.birth_interval = (r.birth_order > 1).then_some(12.0 + (i % 7) as f64 * 5.0);
                r
            })
            .collect();
        let s = sample(recs);
        let interval = CovariateSpec::linear(Covariate::BirthInterval);
        let alone = CovariateSchema::new(vec![interval.clone()]).unwrap();
        let d = build_design(&s, &alone, &CenteringConstants::zeros(&alone), &s).unwrap();
        assert!(d
            .column_names
            .contains(&"birth_interval[missing]".to_string()));

        let schema = CovariateSchema::new(vec![
            CovariateSpec::spline(Covariate::BirthOrder, 3, 4),
            interval,
        ])
        .unwrap();
        let d = build_design(&s, &schema, &CenteringConstants::zeros(&schema), &s).unwrap();
        assert!(
            !d.column_names.iter().any(|c| c.ends_with("[missing]")),
            "{:?}",
            d.column_names
        );
        assert_eq!(d.column_groups["birth_interval"], 5..6);
        assert_eq!(d.n_cols(), 6);
    }

    #[test]
    fn absent_covariate_is_an_error() {
        let mut s = sample(vec![record("a", 0, 20.0, 0.5), record("a", 1, 30.0, 0.1)]);
        s.present.remove(&Covariate::MaternalEducation);
        let schema =
            CovariateSchema::new(vec![CovariateSpec::linear(Covariate::MaternalEducation)])
                .unwrap();
        let c = CenteringConstants::zeros(&schema);
        assert!(matches!(
            build_design(&s, &schema, &c, &s),
            Err(DatasetError::MissingCovariate(n)) if n == "maternal_education"
        ));
    }

    #[test]
    fn builds_are_bitwise_deterministic() {
        let s = sample(
            (0..40)
                .map(|i| {
                    record(
                        &format!("c{}", i % 7),
                        (i % 3 == 0) as u8,
                        15.0 + i as f64 * 0.7,
                        (i as f64) / 40.0,
                    )
                })
                .collect(),
        );
        let schema = CovariateSchema::new(vec![
            CovariateSpec::spline(Covariate::MaternalAge, 3, 4),
            CovariateSpec::spline(Covariate::WealthRank, 2, 3),
        ])
        .unwrap();
        let c = super::super::compute_centering(&s, &schema, 0.2).unwrap();
        let a = build_design(&s, &schema, &c, &s).unwrap();
        let b = build_design(&s, &schema, &c, &s).unwrap();
        let bits = |d: &DesignMatrix| d.rows().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        // groups plus intercept cover every column once
        let mut covered = vec![0; a.n_cols()];
        for name in a.group_names() {
            for j in a.group_range(&name).unwrap() {
                covered[j] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }
}
