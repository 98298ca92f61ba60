//! The fast Ornstein-Uhlenbeck component and standard Brownian drivers.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fbm::TimeGrid;

/// Time-scale separation parameter ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeScale {
    /// `0 < ε ≤ 1`.
    Finite(f64),
    /// The limiting regime ε = 0. Never used as a divisor.
    Limit,
}

impl TimeScale {
    /// `0.0` maps to [`TimeScale::Limit`].
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon == 0.0 {
            Ok(TimeScale::Limit)
        } else if epsilon > 0.0 && epsilon <= 1.0 {
            Ok(TimeScale::Finite(epsilon))
        } else {
            Err(Error::domain(format!(
                "epsilon must lie in (0, 1] or be 0, got {epsilon}"
            )))
        }
    }

    /// Numeric value, `0.0` for the limit.
    pub fn value(self) -> f64 {
        match self {
            TimeScale::Finite(e) => e,
            TimeScale::Limit => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub epsilon: TimeScale,
    pub m0: f64,
}

impl OuParams {
    pub fn new(epsilon: f64, m0: f64) -> Result<Self> {
        if !m0.is_finite() {
            return Err(Error::domain(format!("m0 must be finite, got {m0}")));
        }
        Ok(OuParams {
            epsilon: TimeScale::new(epsilon)?,
            m0,
        })
    }

    pub fn limit(m0: f64) -> Self {
        OuParams {
            epsilon: TimeScale::Limit,
            m0,
        }
    }
}

/// Precomputed coefficients of the exact OU transition over one step.
///
/// `m' = decay·m + diffusion·γ`, with `decay = e^{−dt/ε}` and
/// `diffusion = sqrt(1 − e^{−2dt/ε})`; in the limit `m' = γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuStepper {
    decay: f64,
    diffusion: f64,
}

impl OuStepper {
    pub fn new(epsilon: TimeScale, dt: f64) -> Self {
        match epsilon {
            TimeScale::Limit => OuStepper {
                decay: 0.0,
                diffusion: 1.0,
            },
            TimeScale::Finite(eps) => {
                let ratio = dt / eps;
                // −expm1(−2r) keeps precision when dt ≪ ε.
                OuStepper {
                    decay: (-ratio).exp(),
                    diffusion: (-(-2.0 * ratio).exp_m1()).sqrt(),
                }
            }
        }
    }

    #[inline]
    pub fn step(&self, m: f64, gamma: f64) -> f64 {
        self.decay * m + self.diffusion * gamma
    }
}

/// One exact step of the fast process.
pub fn ou_step(m: f64, params: &OuParams, dt: f64, gamma: f64) -> f64 {
    OuStepper::new(params.epsilon, dt).step(m, gamma)
}

/// Mean and variance of `m^ε(t)` started from `m0`.
pub fn ou_marginal(params: &OuParams, t: f64) -> Result<(f64, f64)> {
    let eps = match params.epsilon {
        TimeScale::Finite(e) => e,
        TimeScale::Limit => {
            return Err(Error::domain("the OU marginal needs a finite epsilon"));
        }
    };
    if t < 0.0 {
        return Err(Error::domain(format!("time must be non-negative, got {t}")));
    }
    Ok(((-t / eps).exp() * params.m0, -(-2.0 * t / eps).exp_m1()))
}

/// Standard Gaussian variates `γ_n`, one per grid step.
///
/// `γ_n = dt^{−1/2}(B(t_{n+1}) − B(t_n))` for the Brownian motion `B`
/// driving the fast process.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSeq {
    gammas: Vec<f64>,
}

impl GaussianSeq {
    pub fn sample<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        GaussianSeq {
            gammas: (0..len).map(|_| rng.sample(StandardNormal)).collect(),
        }
    }

    pub fn from_vec(gammas: Vec<f64>) -> Self {
        GaussianSeq { gammas }
    }

    /// Normalise Brownian increments over steps of size `dt`.
    pub fn from_brownian_increments(increments: &[f64], dt: f64) -> Self {
        let scale = dt.sqrt().recip();
        GaussianSeq {
            gammas: increments.iter().map(|d| d * scale).collect(),
        }
    }

    /// The sequence on a grid with `factor` times larger steps, built from
    /// the same underlying Brownian path.
    pub fn coarsen(&self, factor: usize) -> Result<GaussianSeq> {
        if factor == 0 || self.gammas.len() % factor != 0 {
            return Err(Error::input(format!(
                "cannot coarsen {} variates by a factor {factor}",
                self.gammas.len()
            )));
        }
        let scale = (factor as f64).sqrt().recip();
        Ok(GaussianSeq {
            gammas: self
                .gammas
                .chunks_exact(factor)
                .map(|c| c.iter().sum::<f64>() * scale)
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gammas
    }
}

/// I.i.d. `N(0, dt)` increments of a standard Brownian motion.
pub fn brownian_increments<R: Rng + ?Sized>(grid: &TimeGrid, rng: &mut R) -> Vec<f64> {
    let sd = grid.dt().sqrt();
    (0..grid.steps())
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn ou_step_examples() {
        let p = OuParams::new(0.1, 0.0).unwrap();
        assert!((ou_step(1.0, &p, 0.1, 0.0) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(ou_step(5.0, &OuParams::limit(0.0), 0.1, 0.7), 0.7);
        assert_eq!(ou_step(1.3, &p, 0.0, 0.0), 1.3);
        assert_eq!(ou_step(1.3, &p, 0.0, 2.0), 1.3);
        // dt/ε far beyond the underflow threshold is the limit
        let tiny = OuParams::new(1e-6, 0.0).unwrap();
        assert_eq!(ou_step(3.0, &tiny, 1.0, -0.4), -0.4);
    }

    #[test]
    fn marginal_examples() {
        let p = OuParams::new(0.2, 2.0).unwrap();
        assert_eq!(ou_marginal(&p, 0.0).unwrap(), (2.0, 0.0));
        let (mean, var) = ou_marginal(&p, 0.2).unwrap();
        assert!((mean - 0.735_758_882_342_884_6).abs() < 1e-12);
        assert!((var - 0.864_664_716_763_387_3).abs() < 1e-12);
        let (mean, var) = ou_marginal(&p, 1e3).unwrap();
        assert_eq!((mean, var), (0.0, 1.0));
        assert!(ou_marginal(&OuParams::limit(0.0), 1.0).is_err());
        assert!(ou_marginal(&p, -1.0).is_err());
    }

    #[test]
    fn epsilon_validation() {
        assert_eq!(TimeScale::new(0.0).unwrap(), TimeScale::Limit);
        assert!(TimeScale::new(1.5).is_err());
        assert!(TimeScale::new(-0.1).is_err());
        assert!(OuParams::new(0.5, f64::NAN).is_err());
    }

    #[test]
    fn replay_is_bit_identical() {
        let a = GaussianSeq::sample(100, &mut substream(3, "gamma", 9));
        let b = GaussianSeq::sample(100, &mut substream(3, "gamma", 9));
        assert_eq!(a, b);
    }

    #[test]
    fn coarsening_sums_brownian_blocks() {
        let fine = GaussianSeq::from_vec(vec![1.0, 3.0, -2.0, 0.0]);
        let coarse = fine.coarsen(2).unwrap();
        let s = 2f64.sqrt();
        assert_eq!(coarse.as_slice(), &[4.0 / s, -2.0 / s]);
        assert!(fine.coarsen(3).is_err());
        let incs = [0.1, -0.2];
        let g = GaussianSeq::from_brownian_increments(&incs, 0.04);
        assert!((g.as_slice()[0] - 0.5).abs() < 1e-15);
        assert!((g.as_slice()[1] + 1.0).abs() < 1e-15);
    }
}
