//! Averages of `g(x, ·)` against the invariant law `ν = N(0, 1)` of the
//! fast process.
//!
//! `ḡ(x) = ∫ g(x, m) dν(m)` drives the averaged equation in the fractional
//! case; `(∫ g(x, m)² dν(m))^{1/2}` replaces it in the Brownian case.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::expr::{CoeffExpr, Var};

pub const DEFAULT_QUAD_ORDER: usize = 40;

/// Default central-difference step for `ḡ'` and `ḡ''`, relative to `1 + |x|`.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Gauss-Hermite rule for the standard normal weight:
/// `E[f(Z)] ≈ Σ w_i f(z_i)`, exact for polynomials of degree `≤ 2q − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Newton iteration on the orthonormal Hermite recurrence, one root at
    /// a time, using the symmetric half of the rule.
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::domain(format!(
                "quadrature order must be ≥ 2, got {order}"
            )));
        }
        let n = order;
        let nf = n as f64;
        let pim4 = PI.powf(-0.25);
        let mut x_phys = vec![0.0; n];
        let mut w_phys = vec![0.0; n];
        let mut z = 0.0;
        for i in 0..n.div_ceil(2) {
            // Initial guesses for the largest roots, then extrapolation.
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x_phys[0],
                3 => 1.91 * z - 0.91 * x_phys[1],
                _ => 2.0 * z - x_phys[i - 2],
            };
            let mut converged = false;
            for _ in 0..100 {
                let (p, dp) = orthonormal_hermite(n, z, pim4);
                let z1 = z;
                z = z1 - p / dp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Numerical(format!(
                    "Gauss-Hermite node {i} of order {n} did not converge"
                )));
            }
            let pp = orthonormal_hermite(n, z, pim4).1;
            x_phys[i] = z;
            x_phys[n - 1 - i] = -z;
            w_phys[i] = 2.0 / (pp * pp);
            w_phys[n - 1 - i] = w_phys[i];
        }
        if n % 2 == 1 {
            x_phys[n / 2] = 0.0;
        }
        // Physicists' weight e^{-x²} to the standard normal density.
        let sqrt2 = 2f64.sqrt();
        let sqrt_pi = PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = x_phys
            .iter()
            .zip(&w_phys)
            .map(|(x, w)| (sqrt2 * x, w / sqrt_pi))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    /// Shared rule for `order`, computed once per process.
    pub fn cached(order: usize) -> Result<Arc<GaussHermite>> {
        static CACHE: OnceLock<RwLock<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(rule) = cache.read().expect("quadrature cache poisoned").get(&order) {
            return Ok(Arc::clone(rule));
        }
        let rule = Arc::new(GaussHermite::new(order)?);
        let mut map = cache.write().expect("quadrature cache poisoned");
        Ok(Arc::clone(map.entry(order).or_insert(rule)))
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(Z)]` for `Z ~ N(0, 1)`.
    pub fn expect<E>(
        &self,
        mut f: impl FnMut(f64) -> std::result::Result<f64, E>,
    ) -> std::result::Result<f64, E> {
        let mut acc = 0.0;
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(*z)?;
        }
        Ok(acc)
    }
}

/// Orthonormal Hermite polynomial `p_n(z)` and its derivative.
fn orthonormal_hermite(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageKind {
    /// `ḡ(x) = E[g(x, m)]`.
    MeanG,
    /// `(E[g(x, m)²])^{1/2}`.
    SqrtMeanG2,
}

/// An averaged coefficient evaluated on demand by quadrature.
///
/// When `g` does not depend on `x` the average is a constant and is
/// computed once at construction.
#[derive(Debug, Clone)]
pub struct AveragedCoeff {
    source: CoeffExpr,
    rule: Arc<GaussHermite>,
    kind: AverageKind,
    constant: Option<f64>,
}

impl AveragedCoeff {
    pub fn new(source: CoeffExpr, quad_order: usize, kind: AverageKind) -> Result<Self> {
        let rule = GaussHermite::cached(quad_order)?;
        let mut avg = AveragedCoeff {
            source,
            rule,
            kind,
            constant: None,
        };
        if avg.source.is_x_independent() {
            avg.constant = Some(avg.quadrature(0.0)?);
        }
        Ok(avg)
    }

    pub fn kind(&self) -> AverageKind {
        self.kind
    }

    pub fn source(&self) -> &CoeffExpr {
        &self.source
    }

    pub fn quad_order(&self) -> usize {
        self.rule.order()
    }

    /// `Some(c)` when the average does not depend on `x`.
    pub fn constant(&self) -> Option<f64> {
        self.constant
    }

    fn quadrature(&self, x: f64) -> Result<f64> {
        if !self.source.depends_on(Var::M) {
            let g = self.source.eval(x, 0.0)?;
            return Ok(match self.kind {
                AverageKind::MeanG => g,
                AverageKind::SqrtMeanG2 => g.abs(),
            });
        }
        match self.kind {
            AverageKind::MeanG => Ok(self.rule.expect(|m| self.source.eval(x, m))?),
            AverageKind::SqrtMeanG2 => {
                let second = self
                    .rule
                    .expect(|m| self.source.eval(x, m).map(|g| g * g))?;
                if second < 0.0 {
                    return Err(Error::Numerical(format!(
                        "quadrature of g² is negative ({second:e}) at x = {x}"
                    )));
                }
                Ok(second.sqrt())
            }
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> Result<f64> {
        match self.constant {
            Some(c) => Ok(c),
            None => self.quadrature(x),
        }
    }

    /// `(ḡ(x), ḡ'(x), ḡ''(x))` with central differences of step
    /// `fd_step·(1 + |x|)`.
    pub fn eval_with_derivatives(&self, x: f64, fd_step: f64) -> Result<(f64, f64, f64)> {
        if let Some(c) = self.constant {
            return Ok((c, 0.0, 0.0));
        }
        if !(fd_step > 0.0) {
            return Err(Error::domain(format!(
                "finite-difference step must be positive, got {fd_step}"
            )));
        }
        let h = fd_step * (1.0 + x.abs());
        let (lo, mid, hi) = match self.kind {
            AverageKind::MeanG => {
                // One pass over the nodes for the three stencil points.
                let mut acc = (0.0, 0.0, 0.0);
                for (z, w) in self.rule.nodes().iter().zip(self.rule.weights()) {
                    acc.0 += w * self.source.eval(x - h, *z)?;
                    acc.1 += w * self.source.eval(x, *z)?;
                    acc.2 += w * self.source.eval(x + h, *z)?;
                }
                acc
            }
            AverageKind::SqrtMeanG2 => (
                self.quadrature(x - h)?,
                self.quadrature(x)?,
                self.quadrature(x + h)?,
            ),
        };
        Ok((mid, (hi - lo) / (2.0 * h), (hi - 2.0 * mid + lo) / (h * h)))
    }
}

/// `ḡ(x)` by Gauss-Hermite quadrature of the given order.
pub fn averaged_g(expr: &CoeffExpr, x: f64, quad_order: usize) -> Result<f64> {
    AveragedCoeff::new(expr.clone(), quad_order, AverageKind::MeanG)?.eval(x)
}

/// `(E[g(x, m)²])^{1/2}` by Gauss-Hermite quadrature.
pub fn averaged_g2_sqrt(expr: &CoeffExpr, x: f64, quad_order: usize) -> Result<f64> {
    AveragedCoeff::new(expr.clone(), quad_order, AverageKind::SqrtMeanG2)?.eval(x)
}

/// Plain Monte-Carlo estimate of `E[g(x, m)^power]`, `m ~ N(0, 1)`, with its
/// standard error.
pub fn mc_average<R: Rng + ?Sized>(
    expr: &CoeffExpr,
    x: f64,
    power: u32,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if !(power == 1 || power == 2) {
        return Err(Error::domain(format!("power must be 1 or 2, got {power}")));
    }
    if samples < 100 {
        return Err(Error::input(format!(
            "need at least 100 samples, got {samples}"
        )));
    }
    let mut values = Vec::with_capacity(samples);
    for _ in 0..samples {
        let m: f64 = rng.sample(StandardNormal);
        values.push(expr.eval(x, m)?.powi(power as i32));
    }
    let est = crate::stats::Estimate::of_mean(&values);
    Ok((est.value, est.std_error))
}
