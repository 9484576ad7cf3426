//! Report tables. Rates are per 1000 births with one decimal, percents are
//! whole numbers; `NA` marks a percent whose base is zero.

use std::fmt::Write as _;

use crate::decompose::{display_percent, display_rate, ComponentSummary, DecompositionSummary};
use crate::stats::Interval;

fn rate_cells(i: &Interval) -> [String; 3] {
    [
        display_rate(i.mean),
        display_rate(i.lower),
        display_rate(i.upper),
    ]
}

fn percent_cells(c: &ComponentSummary) -> [String; 3] {
    let na = || "NA".to_string();
    let (lo, hi) = match c.percent_interval {
        Some((lo, hi)) => (display_percent(lo), display_percent(hi)),
        None => (na(), na()),
    };
    [c.percent.map(display_percent).unwrap_or_else(na), lo, hi]
}

const MORTALITY_HEADER: &str = "survey1_year,survey2_year,years_between,\
s1,s1_lower,s1_upper,s2,s2_lower,s2_upper,\
diff,diff_lower,diff_upper,diff_per_year,diff_per_year_lower,diff_per_year_upper,\
empirical_s1,empirical_s2";

/// Fitted mortality of both surveys and the annualized decline.
pub fn mortality_csv(s: &DecompositionSummary, years: [i32; 2]) -> String {
    let m = &s.mortality;
    let mut cells = vec![
        years[0].to_string(),
        years[1].to_string(),
        s.years_between.to_string(),
    ];
    for i in [&m.s1, &m.s2, &m.diff, &m.diff_per_year] {
        cells.extend(rate_cells(i));
    }
    match m.empirical {
        Some([a, b]) => cells.extend([display_rate(a), display_rate(b)]),
        None => cells.extend(["NA".to_string(), "NA".to_string()]),
    }
    format!("{MORTALITY_HEADER}\n{}\n", cells.join(","))
}

const COMPONENT_HEADER: &str =
    "effect_per_year,lower,upper,percent,percent_lower,percent_upper,significant";

fn component_row(out: &mut String, label: &str, c: &ComponentSummary) {
    let mut cells = vec![label.to_string()];
    cells.extend(rate_cells(&c.annualized));
    cells.extend(percent_cells(c));
    cells.push(c.significant.to_string());
    writeln!(out, "{}", cells.join(",")).unwrap();
}

/// Overall, X and beta effects per 1000 births per year.
pub fn overall_csv(s: &DecompositionSummary) -> String {
    let mut out = format!("component,{COMPONENT_HEADER}\n");
    component_row(&mut out, "overall", &s.overall_diff);
    component_row(&mut out, "x_effect", &s.x_effect);
    component_row(&mut out, "beta_effect", &s.beta_effect);
    out
}

/// The beta effect followed by its group effects in decomposition order.
pub fn coefficient_csv(s: &DecompositionSummary) -> String {
    let mut out = format!("group,{COMPONENT_HEADER}\n");
    component_row(&mut out, "beta_effect", &s.beta_effect);
    for (name, c) in &s.groups {
        component_row(&mut out, name, c);
    }
    out
}

fn fmt_interval(i: &Interval, c: Option<&ComponentSummary>) -> String {
    let star = if c.is_some_and(|c| c.significant) {
        "*"
    } else {
        ""
    };
    format!(
        "{}{star} ({}, {})",
        display_rate(i.mean),
        display_rate(i.lower),
        display_rate(i.upper)
    )
}

fn fmt_percent(c: &ComponentSummary) -> String {
    let [p, lo, hi] = percent_cells(c);
    format!("{p}% ({lo}, {hi})")
}

/// Plain-text rendering of all three tables; `*` marks intervals that exclude
/// zero.
pub fn text_report(s: &DecompositionSummary, years: [i32; 2]) -> String {
    let m = &s.mortality;
    let mut out = String::new();
    writeln!(
        out,
        "Mortality per 1000 births ({} to {}, {} years)",
        years[0], years[1], s.years_between
    )
    .unwrap();
    writeln!(out, "  survey 1        {}", fmt_interval(&m.s1, None)).unwrap();
    writeln!(out, "  survey 2        {}", fmt_interval(&m.s2, None)).unwrap();
    writeln!(out, "  difference      {}", fmt_interval(&m.diff, None)).unwrap();
    writeln!(
        out,
        "  per year        {}",
        fmt_interval(&m.diff_per_year, None)
    )
    .unwrap();
    if let Some([a, b]) = m.empirical {
        writeln!(
            out,
            "  observed        {} / {}",
            display_rate(a),
            display_rate(b)
        )
        .unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "Decomposition per 1000 births per year").unwrap();
    for (label, c) in [("X effect", &s.x_effect), ("beta effect", &s.beta_effect)] {
        writeln!(
            out,
            "  {label:<15} {}  {}",
            fmt_interval(&c.annualized, Some(c)),
            fmt_percent(c)
        )
        .unwrap();
    }
    writeln!(out).unwrap();
    writeln!(
        out,
        "Coefficient-by-coefficient effects per 1000 births per year"
    )
    .unwrap();
    for (name, c) in &s.groups {
        writeln!(
            out,
            "  {name:<20} {}  {}",
            fmt_interval(&c.annualized, Some(c)),
            fmt_percent(c)
        )
        .unwrap();
    }
    out
}
