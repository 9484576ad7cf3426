use serde::{Deserialize, Serialize};

use crate::stats::mean;

/// Number of autocorrelation lags reported per parameter.
pub const ACF_LAGS: usize = 50;

/// Sample autocorrelations at lags `1..=max_lag` by direct summation.
///
/// Uses the biased (`1/L`) autocovariance, which keeps every value in
/// [-1, 1]. A constant series yields all zeros.
pub fn autocorrelation(xs: &[f64], max_lag: usize) -> Vec<f64> {
    let n = xs.len();
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let c0: f64 = centered.iter().map(|c| c * c).sum();
    (1..=max_lag)
        .map(|k| {
            if k >= n || c0 == 0.0 {
                return 0.0;
            }
            let ck: f64 = centered[..n - k]
                .iter()
                .zip(&centered[k..])
                .map(|(a, b)| a * b)
                .sum();
            (ck / c0).clamp(-1.0, 1.0)
        })
        .collect()
}

/// Effective sample size of a single chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ess {
    pub value: f64,
    /// The trace was constant; `value` is then the trace length.
    pub degenerate: bool,
}

/// Geyer's initial positive sequence estimator, capped at the chain length.
///
/// Pairs `rho(2m) + rho(2m + 1)` are summed while they stay positive.
pub fn effective_sample_size(xs: &[f64]) -> Ess {
    let n = xs.len();
    let degenerate = xs.windows(2).all(|w| w[0] == w[1]);
    if n < 4 || degenerate {
        return Ess {
            value: n as f64,
            degenerate,
        };
    }
    let rho = autocorrelation(xs, n - 1);
    // rho(0) = 1 sits in front of the lag-1.. vector
    let at = |k: usize| if k == 0 { 1.0 } else { rho[k - 1] };
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = at(2 * m) + at(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    let value = (n as f64 / tau.max(f64::MIN_POSITIVE)).min(n as f64);
    Ess {
        value,
        degenerate: false,
    }
}
