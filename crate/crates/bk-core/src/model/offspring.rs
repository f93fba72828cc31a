//! Per-parasite offspring law and the compound transmitted load.
//!
//! Each of the `l` parasites of a contacted host independently transmits
//! `Y` infective stages, so the transmitted load is `U_l = Y_1 + ... + Y_l`.
//! Only the mean `theta` and finite variance of `Y` matter for the theory;
//! three concrete families are supported, chosen to cover `q0 = P[Y = 0]`
//! both inside `(0, 1)` and at the degenerate corner `q0 = 0`:
//!
//! * `Poisson(theta)`: `q0 = e^{-theta}`, and `U_l ~ Poisson(l * theta)`;
//! * `Geometric` with mean `theta` on `{0, 1, ...}`: `P[Y = k] =
//!   (1 - p) p^k` with `p = theta / (1 + theta)`, so `q0 = 1 / (1 + theta)`
//!   and `U_l` is negative binomial (sampled by a gamma-Poisson mixture);
//! * `PointMass(theta)` for integer `theta >= 1`: `U_l = l * theta`.
//!
//! Laws with `q0 = 1` are rejected at construction: the infection rate
//! would vanish identically and load sampling would be undefined.

use crate::error::Error;
use crate::math;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

/// Shape of the per-parasite offspring variable `Y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OffspringFamily {
    Poisson,
    Geometric,
    PointMass,
}

/// Distribution of the per-parasite transmitted load `Y` with mean `theta`.
#[derive(Clone, Debug)]
pub struct OffspringLaw {
    family: OffspringFamily,
    theta: f64,
    /// Deterministic per-parasite load; only meaningful for `PointMass`.
    point_load: u64,
    q0: f64,
    ln_q0: f64,
}

impl PartialEq for OffspringLaw {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
            && self.theta.to_bits() == other.theta.to_bits()
            && self.point_load == other.point_load
    }
}

impl OffspringLaw {
    /// `Y ~ Poisson(theta)`, `theta > 0`.
    pub fn poisson(theta: f64) -> Result<Self, Error> {
        check_theta(theta)?;
        Ok(Self {
            family: OffspringFamily::Poisson,
            theta,
            point_load: 0,
            q0: math::exp(-theta),
            ln_q0: -theta,
        })
    }

    /// Geometric `Y` on `{0, 1, ...}` with mean `theta > 0`.
    pub fn geometric(theta: f64) -> Result<Self, Error> {
        check_theta(theta)?;
        let ln_q0 = -math::ln_1p(theta);
        Ok(Self {
            family: OffspringFamily::Geometric,
            theta,
            point_load: 0,
            q0: 1.0 / (1.0 + theta),
            ln_q0,
        })
    }

    /// `Y = theta` deterministically, for integer `theta >= 1`.
    pub fn point_mass(theta: u64) -> Result<Self, Error> {
        if theta < 1 {
            return Err(Error::InvalidParams(alloc::format!(
                "point-mass offspring needs theta >= 1, got {theta} (q0 would be 1)"
            )));
        }
        Ok(Self {
            family: OffspringFamily::PointMass,
            theta: theta as f64,
            point_load: theta,
            q0: 0.0,
            ln_q0: f64::NEG_INFINITY,
        })
    }

    pub fn family(&self) -> OffspringFamily {
        self.family
    }

    /// Mean of `Y`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `q0 = P[Y = 0]`, always in `[0, 1)`.
    pub fn q0(&self) -> f64 {
        self.q0
    }

    /// `p_{l0} = P[U_l = 0] = q0^l`; underflows to 0 for large `l`.
    pub fn p_l0(&self, l: u64) -> f64 {
        if l == 0 {
            return 1.0;
        }
        if self.q0 == 0.0 {
            return 0.0;
        }
        math::exp(l as f64 * self.ln_q0)
    }

    /// `1 - q0^l`, computed via `expm1` so both tails keep full precision.
    pub fn one_minus_p_l0(&self, l: u64) -> f64 {
        if l == 0 {
            return 0.0;
        }
        if self.q0 == 0.0 {
            return 1.0;
        }
        -math::expm1(l as f64 * self.ln_q0)
    }

    /// Draws `U_l`, the sum of `l >= 1` independent copies of `Y`.
    pub fn sample_offspring_sum<R: Rng + ?Sized>(&self, l: u64, rng: &mut R) -> u64 {
        debug_assert!(l >= 1);
        match self.family {
            OffspringFamily::Poisson => sample_poisson(l as f64 * self.theta, rng),
            OffspringFamily::Geometric => {
                // Negative binomial via gamma-Poisson mixture:
                // U_l | G ~ Poisson(G), G ~ Gamma(shape = l, scale = theta).
                let gamma = Gamma::new(l as f64, self.theta)
                    .expect("l >= 1 and theta > 0 are valid gamma parameters");
                let mix: f64 = gamma.sample(rng);
                sample_poisson(mix, rng)
            }
            OffspringFamily::PointMass => l * self.point_load,
        }
    }

    /// Draws `U_l` conditioned on `U_l >= 1` by rejection.
    pub fn sample_positive_load<R: Rng + ?Sized>(&self, l: u64, rng: &mut R) -> u64 {
        debug_assert!(l >= 1);
        if self.family == OffspringFamily::PointMass {
            return l * self.point_load;
        }
        loop {
            let u = self.sample_offspring_sum(l, rng);
            if u >= 1 {
                return u;
            }
        }
    }
}

fn check_theta(theta: f64) -> Result<(), Error> {
    if !theta.is_finite() || theta <= 0.0 {
        return Err(Error::InvalidParams(alloc::format!(
            "offspring mean theta must be positive and finite, got {theta}"
        )));
    }
    Ok(())
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("positive finite mean").sample(rng);
    draw as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_degenerate_laws() {
        assert!(OffspringLaw::poisson(0.0).is_err());
        assert!(OffspringLaw::poisson(-1.0).is_err());
        assert!(OffspringLaw::poisson(f64::INFINITY).is_err());
        assert!(OffspringLaw::geometric(0.0).is_err());
        assert!(OffspringLaw::point_mass(0).is_err());
    }

    #[test]
    fn p_l0_trivial_and_closed_form() {
        for law in [
            OffspringLaw::poisson(1.0).unwrap(),
            OffspringLaw::geometric(3.0).unwrap(),
            OffspringLaw::point_mass(2).unwrap(),
        ] {
            assert_eq!(law.p_l0(0), 1.0);
            assert_eq!(law.one_minus_p_l0(0), 0.0);
        }
        let law = OffspringLaw::poisson(1.0).unwrap();
        assert!((law.p_l0(1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((law.p_l0(2) - (-2.0f64).exp()).abs() < 1e-15);
    }

    /// Brute-force oracle: Poisson pmf table and its self-convolution at 0.
    #[test]
    fn p_l0_matches_pmf_convolution() {
        let theta = 1.0;
        let pmf: Vec<f64> = {
            let mut v = Vec::new();
            let mut term = (-theta_f(theta)).exp();
            for k in 0..40u32 {
                v.push(term);
                term *= theta / f64::from(k + 1);
            }
            v
        };
        fn theta_f(t: f64) -> f64 {
            t
        }
        // mass check: the table covers essentially all probability
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let conv_at_zero = pmf[0] * pmf[0];
        let law = OffspringLaw::poisson(theta).unwrap();
        assert!((law.p_l0(2) - conv_at_zero).abs() <= 1e-12 * conv_at_zero);
        assert!((law.p_l0(1) - pmf[0]).abs() <= 1e-12 * pmf[0]);
    }

    #[test]
    fn p_l0_is_nonincreasing_and_complement_accurate() {
        for law in [
            OffspringLaw::poisson(1e-8).unwrap(),
            OffspringLaw::poisson(2.0).unwrap(),
            OffspringLaw::geometric(0.01).unwrap(),
            OffspringLaw::geometric(5.0).unwrap(),
        ] {
            let mut prev = 1.0;
            for l in 0..200 {
                let p = law.p_l0(l);
                let c = law.one_minus_p_l0(l);
                assert!(p <= prev + 1e-15, "p_l0 increased at l = {l}");
                assert!((0.0..=1.0).contains(&c));
                // the two must be complementary to near machine precision
                assert!((p + c - 1.0).abs() < 1e-14);
                prev = p;
            }
        }
        // tiny theta: 1 - q0^1 = 1 - e^{-theta} ~ theta, a naive subtraction
        // would lose ~8 digits here
        let law = OffspringLaw::poisson(1e-8).unwrap();
        let series = 1e-8 - 1e-16 / 2.0 + 1e-24 / 6.0;
        assert!((law.one_minus_p_l0(1) - series).abs() <= 1e-12 * series);
    }

    #[test]
    fn point_mass_sum_is_deterministic() {
        let law = OffspringLaw::point_mass(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            assert_eq!(law.sample_offspring_sum(3, &mut rng), 6);
            assert_eq!(law.sample_positive_load(3, &mut rng), 6);
        }
    }

    #[test]
    fn poisson_sum_has_correct_mean() {
        let law = OffspringLaw::poisson(1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000u64;
        let total: u64 = (0..n).map(|_| law.sample_offspring_sum(2, &mut rng)).sum();
        let mean = total as f64 / n as f64;
        // E U_2 = 3, Var U_2 = 3
        let se = (3.0f64 / n as f64).sqrt();
        assert!((mean - 3.0).abs() < 3.0 * se, "mean {mean} off by > 3 SE");
    }

    #[test]
    fn geometric_zero_probability_matches_q0() {
        let law = OffspringLaw::geometric(1.0).unwrap();
        assert_eq!(law.q0(), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 100_000u64;
        let zeros = (0..n).filter(|_| law.sample_offspring_sum(1, &mut rng) == 0).count();
        let p_hat = zeros as f64 / n as f64;
        let se = (0.5 * 0.5 / n as f64).sqrt();
        assert!((p_hat - 0.5).abs() < 3.0 * se, "P[U = 0] = {p_hat} off by > 3 SE");
    }

    #[test]
    fn geometric_sum_mean_and_positive_load() {
        let law = OffspringLaw::geometric(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000u64;
        let total: u64 = (0..n).map(|_| law.sample_offspring_sum(3, &mut rng)).sum();
        let mean = total as f64 / n as f64;
        // E U_3 = 6, Var U_3 = 3 * theta (1 + theta) = 18
        let se = (18.0f64 / n as f64).sqrt();
        assert!((mean - 6.0).abs() < 3.0 * se, "mean {mean} off by > 3 SE");
        for _ in 0..10_000 {
            assert!(law.sample_positive_load(1, &mut rng) >= 1);
        }
    }
}
