//! Estimators and goodness-of-fit statistics for the verification suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// A point estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Self { value, se }
    }
}

/// Plain empirical mean with SE = sample SD / sqrt(n).
pub fn mean_se(samples: &[f64]) -> Estimate {
    let n = samples.len();
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    if n == 1 {
        return Estimate::new(mean, 0.0);
    }
    let ss = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    let sd = (ss / (nf - 1.0)).sqrt();
    Estimate::new(mean, sd / nf.sqrt())
}

/// Empirical proportion with binomial SE.
pub fn proportion(successes: u64, trials: u64) -> Estimate {
    if trials == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let p = successes as f64 / trials as f64;
    Estimate::new(p, (p * (1.0 - p) / trials as f64).sqrt())
}

/// One-sample Kolmogorov-Smirnov test result.
#[derive(Clone, Copy, Debug)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// KS test against the standard exponential distribution.
///
/// Uses the asymptotic Kolmogorov distribution with the Stephens
/// finite-sample correction; plenty accurate for n in the thousands.
pub fn ks_test_exp1(samples: &[f64]) -> KsReport {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("holding times are finite"));
    let n = sorted.len();
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, x) in sorted.iter().enumerate() {
        let cdf = -(-x).exp_m1(); // 1 - e^{-x}
        let upper = (i as f64 + 1.0) / nf - cdf;
        let lower = cdf - i as f64 / nf;
        d = d.max(upper).max(lower);
    }
    let corrected = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d;
    KsReport { statistic: d, p_value: kolmogorov_sf(corrected), n }
}

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2 sum_{k>=1} (-1)^{k-1} e^{-2 k^2 x^2}`.
fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100u32 {
        let term = (-2.0 * (k as f64) * (k as f64) * x * x).exp();
        if term < 1e-18 {
            break;
        }
        if k % 2 == 1 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Chi-square goodness-of-fit result.
#[derive(Clone, Debug)]
pub struct Chi2Report {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
}

/// Pearson chi-square of observed counts against expected probabilities.
///
/// Cells with expected probability 0 must have 0 observations.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64]) -> Chi2Report {
    assert_eq!(observed.len(), expected_probs.len());
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let mut statistic = 0.0;
    let mut cells = 0u64;
    for (&obs, &p) in observed.iter().zip(expected_probs) {
        if p <= 0.0 {
            assert_eq!(obs, 0, "observation in a zero-probability cell");
            continue;
        }
        cells += 1;
        let expect = nf * p;
        let diff = obs as f64 - expect;
        statistic += diff * diff / expect;
    }
    let dof = cells.saturating_sub(1).max(1);
    let p_value = ChiSquared::new(dof as f64).expect("dof >= 1").sf(statistic);
    Chi2Report { statistic, dof, p_value }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(x, _)| x.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}
