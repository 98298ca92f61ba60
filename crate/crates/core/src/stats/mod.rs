//! Estimators for the convergence criteria used by the experiments.
//!
//! Convergence in probability of `X_N` to a `𝒢`-measurable `X` is
//! equivalent to either of
//!
//! - `P(|X_N − X| > η) → 0` for every `η` ([`prob_exceed`]);
//! - `E|E[φ(X_N) | 𝒢] − φ(X)| → 0` for every bounded smooth `φ`
//!   ([`conditional_criterion`]).
//!
//! Convergence in law is checked through [`weak_error`] and the
//! Kolmogorov-Smirnov tests in [`ks`].

pub mod ks;
mod nested;

pub use nested::{
    conditional_criterion, run_nested, Case, CoupledRecipe, InnerEstimator, NestedOutcome,
    NestedPlan, Reference,
};

use crate::averaging::GaussHermite;
use crate::error::{Error, Result};

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn new(value: f64, std_error: f64) -> Self {
        Estimate { value, std_error }
    }

    /// Sample mean and `s/√n`. A single sample has an infinite standard error.
    pub fn of_mean(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Estimate::new(mean, f64::INFINITY);
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate::new(mean, (var / n).sqrt())
    }

    /// Unbiased sample variance with its delta-method standard error.
    pub fn of_variance(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        let inner = Estimate::of_mean(&sq);
        Estimate::new(inner.value * n / (n - 1.0), inner.std_error * n / (n - 1.0))
    }

    /// Sample covariance with the standard error of the centred products.
    pub fn of_covariance(a: &[f64], b: &[f64]) -> Self {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
        let inner = Estimate::of_mean(&prod);
        Estimate::new(inner.value * n / (n - 1.0), inner.std_error * n / (n - 1.0))
    }

    /// `|value − target| ≤ k·std_error`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// Test functions `φ`. All but [`TestFunction::Identity`] are bounded with
/// bounded derivatives of every order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestFunction {
    /// `tanh(y)`; `|φ| ≤ 1`, `|φ'| ≤ 1`, `|φ''| ≤ 4/(3√3)`.
    Tanh,
    /// `sin(y)`; all derivatives bounded by 1.
    SinScaled,
    /// `exp(−y²)`; `|φ| ≤ 1`, `|φ'| ≤ √(2/e)`, `|φ''| ≤ 2`.
    GaussBump,
    /// `y`; unbounded and outside the hypotheses of the convergence
    /// criterion, but useful for closed-form checks.
    Identity,
}

impl TestFunction {
    pub const ALL: [TestFunction; 4] = [
        TestFunction::Tanh,
        TestFunction::SinScaled,
        TestFunction::GaussBump,
        TestFunction::Identity,
    ];

    pub const BOUNDED: [TestFunction; 3] = [
        TestFunction::Tanh,
        TestFunction::SinScaled,
        TestFunction::GaussBump,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::Tanh => "tanh",
            TestFunction::SinScaled => "sin_scaled",
            TestFunction::GaussBump => "gauss_bump",
            TestFunction::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<TestFunction> {
        TestFunction::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn is_bounded(self) -> bool {
        self != TestFunction::Identity
    }

    /// Caveat to print next to results obtained with this function.
    pub fn caveat(self) -> Option<&'static str> {
        (!self.is_bounded()).then_some("unbounded — outside the convergence-criterion hypotheses")
    }

    #[inline]
    pub fn eval(self, y: f64) -> f64 {
        match self {
            TestFunction::Tanh => y.tanh(),
            TestFunction::SinScaled => y.sin(),
            TestFunction::GaussBump => (-y * y).exp(),
            TestFunction::Identity => y,
        }
    }

    pub fn d1(self, y: f64) -> f64 {
        match self {
            TestFunction::Tanh => 1.0 - y.tanh().powi(2),
            TestFunction::SinScaled => y.cos(),
            TestFunction::GaussBump => -2.0 * y * (-y * y).exp(),
            TestFunction::Identity => 1.0,
        }
    }

    pub fn d2(self, y: f64) -> f64 {
        match self {
            TestFunction::Tanh => {
                let t = y.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            TestFunction::SinScaled => -y.sin(),
            TestFunction::GaussBump => (4.0 * y * y - 2.0) * (-y * y).exp(),
            TestFunction::Identity => 0.0,
        }
    }
}

impl std::str::FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestFunction::from_name(s).ok_or_else(|| {
            Error::input(format!(
                "unknown test function `{s}` (expected tanh, sin_scaled, gauss_bump or identity)"
            ))
        })
    }
}

/// Frequency of `|a − b| > η` with its binomial standard error.
///
/// The standard error is only meaningful for a few dozen pairs or more.
pub fn prob_exceed(pairs: &[(f64, f64)], eta: f64) -> Result<Estimate> {
    if pairs.is_empty() {
        return Err(Error::input("prob_exceed needs at least one pair"));
    }
    if !(eta > 0.0) {
        return Err(Error::domain(format!(
            "threshold must be positive, got {eta}"
        )));
    }
    let m = pairs.len() as f64;
    let hits = pairs.iter().filter(|(a, b)| (a - b).abs() > eta).count() as f64;
    let p = hits / m;
    Ok(Estimate::new(p, (p * (1.0 - p) / m).sqrt()))
}

/// Reference law for [`weak_error`].
#[derive(Debug, Clone, Copy)]
pub enum WeakReference<'a> {
    /// `N(mean, var)`, integrated by Gauss-Hermite quadrature.
    Normal {
        mean: f64,
        var: f64,
    },
    Ensemble(&'a [f64]),
}

/// `|E φ(A) − E φ(B)|` with a pooled standard error.
pub fn weak_error(
    ensemble: &[f64],
    reference: WeakReference<'_>,
    phi: TestFunction,
) -> Result<Estimate> {
    if ensemble.len() < 30 {
        return Err(Error::input(format!(
            "need at least 30 samples, got {}",
            ensemble.len()
        )));
    }
    let fa: Vec<f64> = ensemble.iter().map(|&v| phi.eval(v)).collect();
    let a = Estimate::of_mean(&fa);
    match reference {
        WeakReference::Normal { mean, var } => {
            if !(var >= 0.0) {
                return Err(Error::domain(format!(
                    "reference variance must be non-negative, got {var}"
                )));
            }
            let rule = GaussHermite::cached(crate::averaging::DEFAULT_QUAD_ORDER)?;
            let sd = var.sqrt();
            let exact = rule.expect::<Error>(|z| Ok(phi.eval(mean + sd * z)))?;
            Ok(Estimate::new((a.value - exact).abs(), a.std_error))
        }
        WeakReference::Ensemble(other) => {
            if other.len() < 30 {
                return Err(Error::input(format!(
                    "need at least 30 reference samples, got {}",
                    other.len()
                )));
            }
            let fb: Vec<f64> = other.iter().map(|&v| phi.eval(v)).collect();
            let b = Estimate::of_mean(&fb);
            Ok(Estimate::new(
                (a.value - b.value).abs(),
                a.std_error.hypot(b.std_error),
            ))
        }
    }
}

/// Least-squares line through `(log dt, log error)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn rate_fit(dts: &[f64], errors: &[f64]) -> Result<RateFit> {
    if dts.len() != errors.len() {
        return Err(Error::input("rate_fit needs as many errors as step sizes"));
    }
    if dts.len() < 3 {
        return Err(Error::input(format!(
            "rate_fit needs at least 3 points, got {}",
            dts.len()
        )));
    }
    if dts
        .iter()
        .chain(errors)
        .any(|v| !(*v > 0.0 && v.is_finite()))
    {
        return Err(Error::domain("rate_fit needs positive, finite inputs"));
    }
    let xs: Vec<f64> = dts.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain(
            "rate_fit needs at least two distinct step sizes",
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Dt,
    Epsilon,
}

/// Errors along a refinement axis and their log-log fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub axis: Axis,
    pub grid: Vec<f64>,
    pub errors: Vec<Estimate>,
    pub fit: RateFit,
}

impl ConvergenceReport {
    pub fn new(axis: Axis, grid: Vec<f64>, errors: Vec<Estimate>) -> Result<Self> {
        if grid.len() != errors.len() {
            return Err(Error::input(
                "one error estimate per grid point is required",
            ));
        }
        if grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::input(
                "the refinement grid must be strictly decreasing",
            ));
        }
        if errors.iter().any(|e| !(e.value >= 0.0)) {
            return Err(Error::input("error estimates must be non-negative"));
        }
        let values: Vec<f64> = errors.iter().map(|e| e.value).collect();
        let fit = rate_fit(&grid, &values)?;
        Ok(ConvergenceReport {
            axis,
            grid,
            errors,
            fit,
        })
    }

    /// Fraction of consecutive grid transitions along which the error
    /// decreases.
    pub fn decreasing_fraction(&self) -> f64 {
        decreasing_fraction(&self.errors.iter().map(|e| e.value).collect::<Vec<_>>())
    }
}

/// Fraction of `i` with `values[i + 1] < values[i]`.
pub fn decreasing_fraction(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 1.0;
    }
    let down = values.windows(2).filter(|w| w[1] < w[0]).count();
    down as f64 / (values.len() - 1) as f64
}
