//! Closed-form evaluators for the approximation and concentration bounds.
//!
//! Everything here is a total function returning a value plus validity
//! flags instead of erroring outside a theorem's hypotheses, so sweeps
//! can chart exactly where the hypotheses fail.

use core::sync::atomic::{AtomicU64, Ordering};

use crate::math;
use crate::model::ModelParams;

/// A total-variation bound together with its hypothesis flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvBound {
    /// `8 * S_cap * sqrt(horizon) / N`.
    pub bound: f64,
    /// Whether the theorem's size hypothesis holds.
    pub valid: bool,
    /// `S_cap = horizon + S0`.
    pub s_cap: u64,
}

/// TV bound over paths of `m` transitions: `8 S_m sqrt(m) / N`,
/// valid when `S_m sqrt(m) < N` (strict).
pub fn tv_bound_transitions(m: u64, s0: u64, n: u64) -> TvBound {
    let s_cap = m + s0;
    let margin = s_cap as f64 * math::sqrt(m as f64);
    TvBound { bound: 8.0 * margin / n as f64, valid: margin < n as f64, s_cap }
}

/// TV bound over paths with `m_inf` infection events: `8 S_M sqrt(M) / N`,
/// valid when `S_M sqrt(M) <= N`.
pub fn tv_bound_infections(m_inf: u64, s0: u64, n: u64) -> TvBound {
    let s_cap = m_inf + s0;
    let margin = s_cap as f64 * math::sqrt(m_inf as f64);
    TvBound { bound: 8.0 * margin / n as f64, valid: margin <= n as f64, s_cap }
}

/// The constant `eps0` in `(0, 1)` solving `e^x (1 - x)^{-3} = 4/3`.
///
/// Solved once by bisection (the map is strictly increasing from 1) and
/// cached; the root exceeds 1/15.
pub fn epsilon0() -> f64 {
    static CACHE: AtomicU64 = AtomicU64::new(0);
    let bits = CACHE.load(Ordering::Relaxed);
    if bits != 0 {
        return f64::from_bits(bits);
    }
    let value = solve_epsilon0();
    CACHE.store(value.to_bits(), Ordering::Relaxed);
    value
}

fn solve_epsilon0() -> f64 {
    // log form: h(x) = x - 3 ln(1 - x) - ln(4/3), strictly increasing
    let h = |x: f64| x - 3.0 * math::ln_1p(-x) - math::ln(4.0 / 3.0);
    let mut lo = 0.0f64;
    let mut hi = 0.5f64;
    debug_assert!(h(lo) < 0.0 && h(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Inputs of the martingale tail bounds: increments obey
/// `|L_{k+1} - L_k| <= a + b E_{k+1}` with `E` standard exponential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailParams {
    pub a: f64,
    pub b: f64,
    /// Number of martingale steps.
    pub n: u64,
    /// Deviation level `y >= 0`.
    pub y: f64,
}

impl TailParams {
    fn coeff(&self) -> f64 {
        (self.a + self.b) * (self.a + self.b) + self.b * self.b
    }

    fn max_ab(&self) -> f64 {
        if self.a >= self.b {
            self.a
        } else {
            self.b
        }
    }

    /// Largest `y` for which the Gaussian-type bound applies:
    /// `(4n/3) eps0 {(a+b)^2 + b^2} / max(a, b)`.
    pub fn gaussian_range_cap(&self) -> f64 {
        4.0 * self.n as f64 / 3.0 * epsilon0() * self.coeff() / self.max_ab()
    }
}

/// Gaussian-type tail bound `exp{-3 y^2 / (8 n {(a+b)^2 + b^2})}` and
/// whether `y` lies in its validity range.
pub fn tail_bound_gaussian(p: &TailParams) -> (f64, bool) {
    let bound = math::exp(-3.0 * p.y * p.y / (8.0 * p.n as f64 * p.coeff()));
    (bound, p.y >= 0.0 && p.y <= p.gaussian_range_cap())
}

/// Exponential-type tail bound
/// `exp{-y / (15 max(a,b) sqrt(n)) + 2/135}`, valid for all `y >= 0`.
pub fn tail_bound_exponential(p: &TailParams) -> f64 {
    math::exp(-p.y / (15.0 * p.max_ab() * math::sqrt(p.n as f64)) + 2.0 / 135.0)
}

/// Derived quantities of the relative-closeness theorem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RcParams {
    pub m_infections: u64,
    pub n_hosts: u64,
    pub s_cap: u64,
    /// `psi = S_M sqrt(M) / N`.
    pub psi: f64,
    /// `C_r = sqrt(416 r / 3)`.
    pub c_r: f64,
    /// Closeness level `eps = C_r psi sqrt(log(1/psi))`.
    pub eps: f64,
    /// Tolerance `eta = 2 psi^r + e^{2/135} e^{-1/(60 psi)} + M e^{-N/S_M}`.
    pub eta: f64,
    /// `psi <= 1` (theorem hypothesis).
    pub psi_valid: bool,
    /// `eps <= 1` (theorem hypothesis).
    pub eps_valid: bool,
    /// `M >= (1/5) C_r^2 log N` (theorem hypothesis).
    pub m_valid: bool,
    /// `psi >= 1` collapses `log(1/psi)` to zero, making `eps`
    /// meaningless while `eta >= 2`.
    pub degenerate: bool,
}

impl RcParams {
    /// All hypotheses hold and the point is not degenerate.
    pub fn valid(&self) -> bool {
        self.psi_valid && self.eps_valid && self.m_valid && !self.degenerate
    }
}

/// Evaluates the relative-closeness parameters for `r >= 1`.
pub fn rc_params(m_infections: u64, n_hosts: u64, s0: u64, r: f64) -> RcParams {
    let s_cap = m_infections + s0;
    let m = m_infections as f64;
    let n = n_hosts as f64;
    let psi = s_cap as f64 * math::sqrt(m) / n;
    let c_r = math::sqrt(416.0 * r / 3.0);
    let degenerate = psi >= 1.0;
    let eps =
        if psi > 0.0 && !degenerate { c_r * psi * math::sqrt(math::ln(1.0 / psi)) } else { 0.0 };
    let eta = if psi > 0.0 {
        2.0 * math::powf(psi, r)
            + math::exp(2.0 / 135.0) * math::exp(-1.0 / (60.0 * psi))
            + m * math::exp(-n / s_cap as f64)
    } else {
        0.0
    };
    RcParams {
        m_infections,
        n_hosts,
        s_cap,
        psi,
        c_r,
        eps,
        eta,
        psi_valid: psi <= 1.0,
        eps_valid: eps <= 1.0,
        m_valid: m >= 0.2 * c_r * c_r * math::ln(n),
        degenerate,
    }
}

/// Growth / extinction regime of the branching approximation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

/// Criticality diagnostics of the parameter set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Criticality {
    /// `lambda theta / mu` for `theta <= e`, else `lambda e ln(theta) / mu`.
    pub parameter: f64,
    pub regime: Regime,
    /// Exponential growth rate of the mean parasite count:
    /// `lambda theta - mu`.
    pub mean_growth_rate: f64,
}

/// Computes the criticality parameter, its regime and the mean growth
/// rate of the total parasite count.
pub fn criticality(params: &ModelParams) -> Criticality {
    let theta = params.offspring().theta();
    let parameter = if theta <= core::f64::consts::E {
        params.lambda() * theta / params.mu()
    } else {
        params.lambda() * core::f64::consts::E * math::ln(theta) / params.mu()
    };
    let regime = if math::abs(parameter - 1.0) <= 1e-12 * parameter.max(1.0) {
        Regime::Critical
    } else if parameter > 1.0 {
        Regime::Supercritical
    } else {
        Regime::Subcritical
    };
    Criticality { parameter, regime, mean_growth_rate: params.lambda() * theta - params.mu() }
}
