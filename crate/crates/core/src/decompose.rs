//! Oaxaca decomposition of the change in fitted marginal mortality between two
//! surveys, per posterior draw.
//!
//! With `M_s(b)` the mean of `Phi(x_i'b)` over the births of survey `s`:
//!
//! ```text
//! overall = M_1(b1) - M_2(b2)
//! X effect    = M_1(b1) - M_2(b1)     (covariates swapped, coefficients held)
//! beta effect = M_2(b1) - M_2(b2)     (coefficients swapped on survey 2)
//! ```
//!
//! The beta effect is split further by walking from `b1` to `b2` one column
//! group at a time; the k-th group effect is the drop in `M_2` caused by the
//! k-th swap, so the group effects telescope to the beta effect.
//!
//! Survey 1 is the earlier survey, so positive effects are declines.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DesignMatrix;
use crate::marginal::{marginalize_draws, mean_response, MarginalDraw, Marginalization};
use crate::sampler::PosteriorDraws;
use crate::stats::{norm_cdf, quantile, Interval};

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("column groups differ between the two designs")]
    GroupMismatch,
    #[error("coefficient length {got} does not match design width {want}")]
    Dimension { got: usize, want: usize },
    #[error("order {0:?} is not a permutation of the column groups")]
    Order(Vec<String>),
    #[error("posterior draw counts differ: {0} vs {1}")]
    UnequalDraws(usize, usize),
    #[error("years between surveys must be positive, got {0}")]
    Years(f64),
    #[error("no draws to summarize")]
    Empty,
}

/// Link used to map the linear predictor to a mean response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Link {
    #[default]
    Probit,
    /// Linear model; the decomposition reduces to the classic mean-based one.
    Identity,
}

impl Link {
    fn apply(self, eta: f64) -> f64 {
        match self {
            Link::Probit => norm_cdf(eta),
            Link::Identity => eta,
        }
    }
}

/// One draw's decomposition, in probability units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionDraw {
    pub overall_diff: f64,
    pub x_effect: f64,
    pub beta_effect: f64,
    /// Group effects in the order they were swapped.
    pub group_effects: IndexMap<String, f64>,
    /// Fitted mean mortality of survey 1 and survey 2.
    pub rates: [f64; 2],
}

fn check_width(design: &DesignMatrix, b: &MarginalDraw) -> Result<(), DecomposeError> {
    if b.beta.len() != design.n_cols() {
        return Err(DecomposeError::Dimension {
            got: b.beta.len(),
            want: design.n_cols(),
        });
    }
    Ok(())
}

fn check_pair(d1: &DesignMatrix, d2: &DesignMatrix) -> Result<(), DecomposeError> {
    if d1.n_cols() != d2.n_cols() || d1.column_groups != d2.column_groups {
        return Err(DecomposeError::GroupMismatch);
    }
    Ok(())
}

/// Terms of the overall decomposition together with the two fitted rates.
struct Overall {
    m11: f64,
    m21: f64,
    m22: f64,
}

fn overall_terms(
    d1: &DesignMatrix,
    d2: &DesignMatrix,
    b1: &MarginalDraw,
    b2: &MarginalDraw,
    link: Link,
) -> Result<Overall, DecomposeError> {
    check_pair(d1, d2)?;
    check_width(d1, b1)?;
    check_width(d1, b2)?;
    let f = |eta| link.apply(eta);
    Ok(Overall {
        m11: mean_response(d1, &b1.beta, f),
        m21: mean_response(d2, &b1.beta, f),
        m22: mean_response(d2, &b2.beta, f),
    })
}

/// `(x_effect, beta_effect)` under the probit link.
pub fn overall_decompose(
    design1: &DesignMatrix,
    design2: &DesignMatrix,
    beta1: &MarginalDraw,
    beta2: &MarginalDraw,
) -> Result<(f64, f64), DecomposeError> {
    overall_decompose_with(design1, design2, beta1, beta2, Link::Probit)
}

pub fn overall_decompose_with(
    design1: &DesignMatrix,
    design2: &DesignMatrix,
    beta1: &MarginalDraw,
    beta2: &MarginalDraw,
    link: Link,
) -> Result<(f64, f64), DecomposeError> {
    let t = overall_terms(design1, design2, beta1, beta2, link)?;
    Ok((t.m11 - t.m21, t.m21 - t.m22))
}

/// Default decomposition order: the intercept, then the design's groups.
pub fn default_order(design: &DesignMatrix) -> Vec<String> {
    design.group_names()
}

pub(crate) fn check_order(design: &DesignMatrix, order: &[String]) -> Result<(), DecomposeError> {
    let mut want = design.group_names();
    let mut got = order.to_vec();
    want.sort();
    got.sort();
    if want != got {
        return Err(DecomposeError::Order(order.to_vec()));
    }
    Ok(())
}

/// Sequential per-group decomposition of the beta effect on survey 2.
pub fn coefficient_decompose(
    design2: &DesignMatrix,
    beta1: &MarginalDraw,
    beta2: &MarginalDraw,
    order: &[String],
) -> Result<IndexMap<String, f64>, DecomposeError> {
    coefficient_decompose_with(design2, beta1, beta2, order, Link::Probit)
}

pub fn coefficient_decompose_with(
    design2: &DesignMatrix,
    beta1: &MarginalDraw,
    beta2: &MarginalDraw,
    order: &[String],
    link: Link,
) -> Result<IndexMap<String, f64>, DecomposeError> {
    check_width(design2, beta1)?;
    check_width(design2, beta2)?;
    check_order(design2, order)?;
    let f = |eta| link.apply(eta);
    let mut hybrid = beta1.beta.clone();
    let mut before = mean_response(design2, &hybrid, f);
    let mut effects = IndexMap::with_capacity(order.len());
    for name in order {
        let range = design2.group_range(name).expect("order checked");
        hybrid[range.clone()].copy_from_slice(&beta2.beta[range]);
        let after = mean_response(design2, &hybrid, f);
        effects.insert(name.clone(), before - after);
        before = after;
    }
    Ok(effects)
}

/// Both decompositions for one pair of marginal draws.
pub fn decompose_draw(
    design1: &DesignMatrix,
    design2: &DesignMatrix,
    beta1: &MarginalDraw,
    beta2: &MarginalDraw,
    order: &[String],
) -> Result<DecompositionDraw, DecomposeError> {
    let t = overall_terms(design1, design2, beta1, beta2, Link::Probit)?;
    let group_effects = coefficient_decompose(design2, beta1, beta2, order)?;
    Ok(DecompositionDraw {
        overall_diff: t.m11 - t.m22,
        x_effect: t.m11 - t.m21,
        beta_effect: t.m21 - t.m22,
        group_effects,
        rates: [t.m11, t.m22],
    })
}

/// `total / years`.
pub fn annualize(total: f64, years_between: f64) -> Result<f64, DecomposeError> {
    if years_between.is_nan() || years_between <= 0.0 {
        return Err(DecomposeError::Years(years_between));
    }
    Ok(total / years_between)
}

/// One decomposition component summarized over the posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    /// Probability units.
    pub value: Interval,
    /// Per 1000 births per year.
    pub annualized: Interval,
    /// `100 * mean(component) / mean(overall)`; `None` when the overall mean
    /// is zero.
    pub percent: Option<f64>,
    /// 2.5% and 97.5% percentiles of the per-draw ratio.
    pub percent_interval: Option<(f64, f64)>,
    /// The 95% interval excludes zero.
    pub significant: bool,
}

/// Fitted mortality per 1000 births.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MortalityTable {
    pub s1: Interval,
    pub s2: Interval,
    pub diff: Interval,
    pub diff_per_year: Interval,
    /// Observed death rates per 1000, for comparison with the fitted means.
    pub empirical: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub years_between: f64,
    pub n_draws: usize,
    pub order: Vec<String>,
    pub mortality: MortalityTable,
    pub overall_diff: ComponentSummary,
    pub x_effect: ComponentSummary,
    pub beta_effect: ComponentSummary,
    pub groups: IndexMap<String, ComponentSummary>,
}

fn component(values: &[f64], overall: &[f64], overall_mean: f64, years: f64) -> ComponentSummary {
    let value = Interval::from_draws(values);
    let percent = (overall_mean != 0.0).then(|| 100.0 * value.mean / overall_mean);
    let ratios: Vec<f64> = values
        .iter()
        .zip(overall)
        .map(|(v, o)| 100.0 * v / o)
        .collect();
    let percent_interval = ratios
        .iter()
        .all(|r| r.is_finite())
        .then(|| (quantile(&ratios, 0.025), quantile(&ratios, 0.975)));
    ComponentSummary {
        annualized: value.scaled(1000.0 / years),
        significant: value.excludes_zero(),
        value,
        percent,
        percent_interval,
    }
}

/// Posterior summary of per-draw decompositions.
pub fn summarize(
    draws: &[DecompositionDraw],
    years_between: f64,
) -> Result<DecompositionSummary, DecomposeError> {
    annualize(0.0, years_between)?;
    let first = draws.first().ok_or(DecomposeError::Empty)?;
    let order: Vec<String> = first.group_effects.keys().cloned().collect();

    let overall: Vec<f64> = draws.iter().map(|d| d.overall_diff).collect();
    let overall_mean = crate::stats::mean(&overall);
    let pick = |f: &dyn Fn(&DecompositionDraw) -> f64| draws.iter().map(f).collect::<Vec<_>>();
    let summarize_one = |values: &[f64]| component(values, &overall, overall_mean, years_between);

    let groups = order
        .iter()
        .map(|name| {
            let values = pick(&|d| d.group_effects[name.as_str()]);
            (name.clone(), summarize_one(&values))
        })
        .collect();

    let s1 = Interval::from_draws(&pick(&|d| d.rates[0])).scaled(1000.0);
    let s2 = Interval::from_draws(&pick(&|d| d.rates[1])).scaled(1000.0);
    let diff = Interval::from_draws(&overall).scaled(1000.0);

    Ok(DecompositionSummary {
        years_between,
        n_draws: draws.len(),
        order,
        mortality: MortalityTable {
            s1,
            s2,
            diff_per_year: diff.scaled(1.0 / years_between),
            diff,
            empirical: None,
        },
        overall_diff: summarize_one(&overall),
        x_effect: summarize_one(&pick(&|d| d.x_effect)),
        beta_effect: summarize_one(&pick(&|d| d.beta_effect)),
        groups,
    })
}

/// Per-draw decompositions and their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDecomposition {
    pub draws: Vec<DecompositionDraw>,
    pub summary: DecompositionSummary,
}

/// Decompose every paired posterior draw (the l-th draw of survey 1 with the
/// l-th of survey 2) and summarize.
pub fn posterior_decompose(
    design1: &DesignMatrix,
    design2: &DesignMatrix,
    draws1: &PosteriorDraws,
    draws2: &PosteriorDraws,
    order: &[String],
    years_between: f64,
    convention: Marginalization,
) -> Result<PosteriorDecomposition, DecomposeError> {
    if draws1.len() != draws2.len() {
        return Err(DecomposeError::UnequalDraws(draws1.len(), draws2.len()));
    }
    annualize(0.0, years_between)?;
    check_pair(design1, design2)?;
    check_order(design2, order)?;
    let m1 = marginalize_draws(draws1, convention);
    let m2 = marginalize_draws(draws2, convention);
    let draws = m1
        .iter()
        .zip(&m2)
        .map(|(b1, b2)| decompose_draw(design1, design2, b1, b2, order))
        .collect::<Result<Vec<_>, _>>()?;
    let mut summary = summarize(&draws, years_between)?;
    summary.mortality.empirical =
        Some([1000.0 * design1.death_rate(), 1000.0 * design2.death_rate()]);
    Ok(PosteriorDecomposition { draws, summary })
}

/// One decimal, as rates are displayed; negative zero prints as `0.0`.
pub fn display_rate(v: f64) -> String {
    let s = format!("{v:.1}");
    if s == "-0.0" {
        "0.0".to_string()
    } else {
        s
    }
}

/// Whole percent; negative zero prints as `0`.
pub fn display_percent(v: f64) -> String {
    let s = format!("{v:.0}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SurveyId;
    use crate::diagnostics::linear_oracle;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_design<R: Rng>(rng: &mut R, n: usize, widths: &[usize]) -> DesignMatrix {
        let p = 1 + widths.iter().sum::<usize>();
        let mut values = Vec::with_capacity(n * p);
        for _ in 0..n {
            values.push(1.0);
            values.extend((1..p).map(|_| rng.random_range(-1.5..1.5)));
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
            (0..p).map(|j| format!("c{j}")).collect(),
            groups,
            (0..n).map(|i| i % 4).collect(),
            vec![0; n],
        )
        .unwrap()
    }

    fn random_beta<R: Rng>(rng: &mut R, p: usize) -> MarginalDraw {
        MarginalDraw {
            beta: (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
            source: 0,
        }
    }

    #[test]
    fn equal_coefficients_have_no_beta_effect() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d1 = random_design(&mut rng, 20, &[2, 1]);
        let d2 = random_design(&mut rng, 30, &[2, 1]);
        let b = random_beta(&mut rng, 4);
        let (x, beta) = overall_decompose(&d1, &d2, &b, &b).unwrap();
        assert_eq!(beta, 0.0);
        assert!(x != 0.0);
        let g = coefficient_decompose(&d2, &b, &b, &default_order(&d2)).unwrap();
        assert!(g.values().all(|&v| v == 0.0));
    }

    #[test]
    fn equal_designs_have_no_x_effect() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_design(&mut rng, 20, &[2, 1]);
        let (b1, b2) = (random_beta(&mut rng, 4), random_beta(&mut rng, 4));
        let (x, _) = overall_decompose(&d, &d, &b1, &b2).unwrap();
        assert_eq!(x, 0.0);
    }

    #[test]
    fn identity_link_matches_linear_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d1 = random_design(&mut rng, 20, &[1, 2]);
        let d2 = random_design(&mut rng, 20, &[1, 2]);
        let (b1, b2) = (random_beta(&mut rng, 4), random_beta(&mut rng, 4));
        let (x, beta) = overall_decompose_with(&d1, &d2, &b1, &b2, Link::Identity).unwrap();
        let (ox, obeta) =
            linear_oracle(&d1.column_means(), &d2.column_means(), &b1.beta, &b2.beta).unwrap();
        assert!((x - ox).abs() < 1e-12);
        assert!((beta - obeta).abs() < 1e-12);
    }

    #[test]
    fn only_intercepts_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d1 = random_design(&mut rng, 25, &[2, 1, 1]);
        let d2 = random_design(&mut rng, 25, &[2, 1, 1]);
        let b1 = random_beta(&mut rng, 5);
        let mut b2 = b1.clone();
        b2.beta[0] -= 0.4;
        let (_, beta) = overall_decompose(&d1, &d2, &b1, &b2).unwrap();
        let g = coefficient_decompose(&d2, &b1, &b2, &default_order(&d2)).unwrap();
        assert_eq!(g["intercept"], beta);
        for (name, v) in &g {
            if name != "intercept" {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn group_effect_can_exceed_the_total() {
        // The intercept lowers mortality, the other group raises it back.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_design(&mut rng, 40, &[1]);
        let b1 = MarginalDraw {
            beta: vec![-1.0, 0.0],
            source: 0,
        };
        let b2 = MarginalDraw {
            beta: vec![-1.5, 0.8],
            source: 0,
        };
        let g = coefficient_decompose(&d, &b1, &b2, &default_order(&d)).unwrap();
        let (_, beta) = overall_decompose(&d, &d, &b1, &b2).unwrap();
        assert!(g["intercept"] > beta.abs());
        assert!(g["g0"] < 0.0);
    }

    #[test]
    fn bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d1 = random_design(&mut rng, 10, &[2, 1]);
        let d2 = random_design(&mut rng, 10, &[1, 2]);
        let b = random_beta(&mut rng, 4);
        assert!(matches!(
            overall_decompose(&d1, &d2, &b, &b),
            Err(DecomposeError::GroupMismatch)
        ));
        let bad_order = vec!["intercept".to_string(), "g0".to_string()];
        assert!(matches!(
            coefficient_decompose(&d1, &b, &b, &bad_order),
            Err(DecomposeError::Order(_))
        ));
        let dup = vec!["intercept".to_string(), "g0".to_string(), "g0".to_string()];
        assert!(coefficient_decompose(&d1, &b, &b, &dup).is_err());
        assert!(annualize(1.0, 0.0).is_err());
    }

    #[test]
    fn annualized_reference_rows() {
        assert_eq!(display_rate(annualize(75.0, 14.0).unwrap()), "5.4");
        assert!((annualize(75.0, 14.0).unwrap() - 5.357).abs() < 1e-3);
        assert_eq!(annualize(0.0, 9.0).unwrap(), 0.0);
        assert_eq!(display_rate(annualize(77.0, 16.0).unwrap()), "4.8");
        assert_eq!(display_rate(-0.04), "0.0");
    }

    fn constant_draws(overall: f64, beta: f64, n: usize) -> Vec<DecompositionDraw> {
        let x = overall - beta;
        (0..n)
            .map(|_| DecompositionDraw {
                overall_diff: overall,
                x_effect: x,
                beta_effect: beta,
                group_effects: [("intercept".to_string(), beta)].into_iter().collect(),
                rates: [0.1, 0.1 - overall],
            })
            .collect()
    }

    #[test]
    fn percent_split_of_a_reference_row() {
        // 75 per 1000 over 14 years with a coefficient effect of 4.4 per year.
        let s = summarize(&constant_draws(0.075, 0.0044 * 14.0, 10), 14.0).unwrap();
        assert_eq!(display_rate(s.x_effect.annualized.mean), "1.0");
        assert_eq!(display_rate(s.beta_effect.annualized.mean), "4.4");
        assert_eq!(display_percent(s.x_effect.percent.unwrap()), "18");
        assert_eq!(display_percent(s.beta_effect.percent.unwrap()), "82");
        assert!(
            (s.x_effect.percent.unwrap() + s.beta_effect.percent.unwrap() - 100.0).abs() < 1e-9
        );
        assert_eq!(s.x_effect.annualized.lower, s.x_effect.annualized.upper);
        assert!(s.x_effect.significant && s.beta_effect.significant);
    }

    #[test]
    fn offsetting_effects_give_percents_beyond_100() {
        // 3 per 1000 over 15 years: covariates explain 131%, coefficients -31%.
        let s = summarize(&constant_draws(0.003, -0.00093, 5), 15.0).unwrap();
        assert_eq!(display_percent(s.x_effect.percent.unwrap()), "131");
        assert_eq!(display_percent(s.beta_effect.percent.unwrap()), "-31");
        assert_eq!(display_rate(s.x_effect.annualized.mean), "0.3");
        assert_eq!(display_rate(s.beta_effect.annualized.mean), "-0.1");
    }

    #[test]
    fn degenerate_posterior_collapses_intervals() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d1 = random_design(&mut rng, 30, &[2, 1]);
        let d2 = random_design(&mut rng, 30, &[2, 1]);
        let (b1, b2) = (random_beta(&mut rng, 4), random_beta(&mut rng, 4));
        let dr1 = PosteriorDraws::constant(SurveyId::S1, b1.beta.clone(), 0.0, 20, &d1);
        let dr2 = PosteriorDraws::constant(SurveyId::S2, b2.beta.clone(), 0.0, 20, &d2);
        let order = default_order(&d2);
        let post = posterior_decompose(
            &d1,
            &d2,
            &dr1,
            &dr2,
            &order,
            10.0,
            Marginalization::AppendixDivide,
        )
        .unwrap();
        let point = decompose_draw(&d1, &d2, &b1, &b2, &order).unwrap();
        let s = &post.summary;
        assert_eq!(s.x_effect.value.lower, s.x_effect.value.upper);
        assert!((s.x_effect.value.mean - point.x_effect).abs() < 1e-15);
        assert!((s.groups["g1"].value.mean - point.group_effects["g1"]).abs() < 1e-15);

        let mut short = dr2.clone();
        short.beta.pop();
        short.sigma2.pop();
        assert!(matches!(
            posterior_decompose(&d1, &d2, &dr1, &short, &order, 10.0, Default::default()),
            Err(DecomposeError::UnequalDraws(20, 19))
        ));
        assert!(
            posterior_decompose(&d1, &d2, &dr1, &dr2, &order, 0.0, Default::default()).is_err()
        );
    }

    #[test]
    fn swapping_roles_negates_the_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d1 = random_design(&mut rng, 30, &[2, 1]);
        let d2 = random_design(&mut rng, 40, &[2, 1]);
        let (b1, b2) = (random_beta(&mut rng, 4), random_beta(&mut rng, 4));
        let order = default_order(&d1);
        let fwd = decompose_draw(&d1, &d2, &b1, &b2, &order).unwrap();
        let back = decompose_draw(&d2, &d1, &b2, &b1, &order).unwrap();
        assert_eq!(fwd.overall_diff, -back.overall_diff);
    }

    #[test]
    fn zero_variance_marginalization_reproduces_conditional_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d1 = random_design(&mut rng, 30, &[2, 1]);
        let d2 = random_design(&mut rng, 30, &[2, 1]);
        let (b1, b2) = (random_beta(&mut rng, 4), random_beta(&mut rng, 4));
        let m1 = crate::marginal::marginalize(&b1.beta, 0.0);
        let m2 = crate::marginal::marginalize(&b2.beta, 0.0);
        let order = default_order(&d1);
        assert_eq!(
            decompose_draw(&d1, &d2, &b1, &b2, &order).unwrap(),
            decompose_draw(&d1, &d2, &m1, &m2, &order).unwrap()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn additivity_holds_for_any_order(seed in any::<u64>(), perm_seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d1 = random_design(&mut rng, 15, &[3, 1, 2]);
            let d2 = random_design(&mut rng, 22, &[3, 1, 2]);
            let (b1, b2) = (random_beta(&mut rng, 7), random_beta(&mut rng, 7));
            let mut order = default_order(&d1);
            let mut prng = ChaCha8Rng::seed_from_u64(perm_seed);
            for i in (1..order.len()).rev() {
                order.swap(i, prng.random_range(0..=i));
            }
            let d = decompose_draw(&d1, &d2, &b1, &b2, &order).unwrap();
            prop_assert!((d.x_effect + d.beta_effect - d.overall_diff).abs() < 1e-12);
            let sum: f64 = d.group_effects.values().sum();
            prop_assert!((sum - d.beta_effect).abs() < 1e-12);
            let canonical = decompose_draw(&d1, &d2, &b1, &b2, &default_order(&d1)).unwrap();
            prop_assert_eq!(canonical.beta_effect, d.beta_effect);
            prop_assert_eq!(canonical.x_effect, d.x_effect);
        }
    }
}
