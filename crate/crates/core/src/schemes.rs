//! Discrete-time recursions for the slow-fast system
//!
//! ```text
//! dX = g(X, m) dβ^H,    dm = −m/ε dt + sqrt(2/ε) dB.
//! ```
//!
//! All runs are pathwise: a driver path (fBm or Brownian increments) and a
//! [`GaussianSeq`] are passed in and never re-sampled, so different schemes
//! run on the same inputs are coupled.

use crate::averaging::{AverageKind, AveragedCoeff, DEFAULT_QUAD_ORDER};
use crate::error::{Error, Result};
use crate::expr::CoeffExpr;
use crate::fbm::{FbmPath, HurstIndex, TimeGrid};
use crate::noise::{GaussianSeq, OuParams, OuStepper, TimeScale};

/// Process driving the slow component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    Fractional,
    Brownian,
}

/// Full description of one slow-fast system.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub g: CoeffExpr,
    pub hurst: HurstIndex,
    pub ou: OuParams,
    pub x0: f64,
    pub driver: Driver,
    pub quad_order: usize,
}

impl SystemSpec {
    pub fn new(
        g: CoeffExpr,
        hurst: HurstIndex,
        ou: OuParams,
        x0: f64,
        driver: Driver,
    ) -> Result<Self> {
        match driver {
            Driver::Fractional if hurst.is_brownian() => {
                return Err(Error::domain("a fractional driver needs H > 0.5"));
            }
            Driver::Brownian if !hurst.is_brownian() => {
                return Err(Error::domain("a Brownian driver needs H = 0.5"));
            }
            _ => {}
        }
        if !x0.is_finite() {
            return Err(Error::domain(format!("x0 must be finite, got {x0}")));
        }
        Ok(SystemSpec {
            g,
            hurst,
            ou,
            x0,
            driver,
            quad_order: DEFAULT_QUAD_ORDER,
        })
    }

    pub fn fractional(g: CoeffExpr, h: f64, epsilon: f64, x0: f64) -> Result<Self> {
        SystemSpec::new(
            g,
            HurstIndex::new(h)?,
            OuParams::new(epsilon, 0.0)?,
            x0,
            Driver::Fractional,
        )
    }

    pub fn brownian(g: CoeffExpr, epsilon: f64, x0: f64) -> Result<Self> {
        SystemSpec::new(
            g,
            HurstIndex::brownian(),
            OuParams::new(epsilon, 0.0)?,
            x0,
            Driver::Brownian,
        )
    }

    pub fn with_epsilon(&self, epsilon: TimeScale) -> SystemSpec {
        let mut s = self.clone();
        s.ou.epsilon = epsilon;
        s
    }

    /// The averaged coefficient matching the driver: `ḡ` for fBm,
    /// `(g²-bar)^{1/2}` for Brownian motion.
    pub fn averaged(&self) -> Result<AveragedCoeff> {
        let kind = match self.driver {
            Driver::Fractional => AverageKind::MeanG,
            Driver::Brownian => AverageKind::SqrtMeanG2,
        };
        AveragedCoeff::new(self.g.clone(), self.quad_order, kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    /// Exact OU step, then `X' = X + g(X, m')δβ`.
    Ap,
    /// `X' = X + g(X, γ)δβ`.
    Limiting,
    /// Euler for the averaged equation.
    Averaged,
    /// Implicit Euler for the OU part; not asymptotic preserving.
    ImplicitNonAp,
    BrownianAp,
    BrownianLimiting,
    BrownianAveraged,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 7] = [
        SchemeKind::Ap,
        SchemeKind::Limiting,
        SchemeKind::Averaged,
        SchemeKind::ImplicitNonAp,
        SchemeKind::BrownianAp,
        SchemeKind::BrownianLimiting,
        SchemeKind::BrownianAveraged,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Ap => "ap",
            SchemeKind::Limiting => "limiting",
            SchemeKind::Averaged => "averaged",
            SchemeKind::ImplicitNonAp => "implicit_nonap",
            SchemeKind::BrownianAp => "brownian_ap",
            SchemeKind::BrownianLimiting => "brownian_limiting",
            SchemeKind::BrownianAveraged => "brownian_averaged",
        }
    }

    pub fn driver(self) -> Driver {
        match self {
            SchemeKind::BrownianAp
            | SchemeKind::BrownianLimiting
            | SchemeKind::BrownianAveraged => Driver::Brownian,
            _ => Driver::Fractional,
        }
    }

    /// Whether the trajectory carries the fast states `m_n`.
    pub fn tracks_fast_state(self) -> bool {
        matches!(
            self,
            SchemeKind::Ap | SchemeKind::ImplicitNonAp | SchemeKind::BrownianAp
        )
    }

    /// Same recursion with the other driver.
    pub fn for_driver(self, driver: Driver) -> SchemeKind {
        use SchemeKind::*;
        match (self, driver) {
            (Ap | BrownianAp, Driver::Fractional) => Ap,
            (Ap | BrownianAp, Driver::Brownian) => BrownianAp,
            (Limiting | BrownianLimiting, Driver::Fractional) => Limiting,
            (Limiting | BrownianLimiting, Driver::Brownian) => BrownianLimiting,
            (Averaged | BrownianAveraged, Driver::Fractional) => Averaged,
            (Averaged | BrownianAveraged, Driver::Brownian) => BrownianAveraged,
            (ImplicitNonAp, _) => ImplicitNonAp,
        }
    }
}

/// Output of one scheme run.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeTrajectory {
    pub grid: TimeGrid,
    pub kind: SchemeKind,
    pub states: Vec<f64>,
    pub fast_states: Option<Vec<f64>>,
}

impl SchemeTrajectory {
    pub fn terminal(&self) -> f64 {
        self.states[self.states.len() - 1]
    }
}

/// One step of the AP scheme: exact OU update, then Euler for `X` with the
/// updated fast state.
pub fn step_ap(
    x: f64,
    m: f64,
    spec: &SystemSpec,
    dt: f64,
    gamma: f64,
    dbeta: f64,
) -> Result<(f64, f64)> {
    if !(dt > 0.0) {
        return Err(Error::domain(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let m_next = OuStepper::new(spec.ou.epsilon, dt).step(m, gamma);
    Ok((x + spec.g.eval(x, m_next)? * dbeta, m_next))
}

/// One step of the ε → 0 limit of the AP scheme.
pub fn step_limiting(x: f64, spec: &SystemSpec, gamma: f64, dbeta: f64) -> Result<f64> {
    Ok(x + spec.g.eval(x, gamma)? * dbeta)
}

/// One Euler step of the averaged equation.
pub fn step_averaged(x: f64, gbar: &AveragedCoeff, dbeta: f64) -> Result<f64> {
    Ok(x + gbar.eval(x)? * dbeta)
}

/// One step with the OU part discretised by implicit Euler. In the limit
/// the fast state collapses to 0, so the limiting scheme uses `g(x, 0)`.
pub fn step_implicit_nonap(
    x: f64,
    m: f64,
    spec: &SystemSpec,
    dt: f64,
    gamma: f64,
    dbeta: f64,
) -> Result<(f64, f64)> {
    let m_next = implicit_ou(spec.ou.epsilon, dt, m, gamma);
    Ok((x + spec.g.eval(x, m_next)? * dbeta, m_next))
}

#[inline]
fn implicit_ou(epsilon: TimeScale, dt: f64, m: f64, gamma: f64) -> f64 {
    match epsilon {
        TimeScale::Limit => 0.0,
        TimeScale::Finite(eps) => {
            let r = dt / eps;
            (m + r.sqrt() * gamma) / (1.0 + r)
        }
    }
}

/// Run `kind` over the whole grid of `driver`.
///
/// `driver` holds the increments `δβ_n` (fractional or Brownian, matching
/// `kind`); `gammas` must have one variate per step. Comparison runs must
/// share both inputs.
pub fn run_scheme(
    spec: &SystemSpec,
    driver: &FbmPath,
    gammas: &GaussianSeq,
    kind: SchemeKind,
) -> Result<SchemeTrajectory> {
    let averaged = match kind {
        SchemeKind::Averaged | SchemeKind::BrownianAveraged => Some(spec.averaged()?),
        _ => None,
    };
    run_scheme_with(spec, driver, gammas, kind, averaged.as_ref())
}

/// [`run_scheme`] with a prebuilt averaged coefficient, for hot loops.
pub fn run_scheme_with(
    spec: &SystemSpec,
    driver: &FbmPath,
    gammas: &GaussianSeq,
    kind: SchemeKind,
    averaged: Option<&AveragedCoeff>,
) -> Result<SchemeTrajectory> {
    let grid = *driver.grid();
    let n_steps = grid.steps();
    if kind.driver() != spec.driver {
        return Err(Error::input(format!(
            "scheme {} does not match the system's {:?} driver",
            kind.name(),
            spec.driver
        )));
    }
    if gammas.len() != n_steps {
        return Err(Error::input(format!(
            "expected {n_steps} Gaussian variates, got {}",
            gammas.len()
        )));
    }
    let dbeta = driver.increments();
    let gamma = gammas.as_slice();
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(spec.x0);
    let mut fast = kind.tracks_fast_state().then(|| {
        let mut v = Vec::with_capacity(n_steps + 1);
        v.push(spec.ou.m0);
        v
    });
    let mut x = spec.x0;
    let mut m = spec.ou.m0;
    let dt = grid.dt();

    match kind {
        SchemeKind::Ap | SchemeKind::BrownianAp => {
            let ou = OuStepper::new(spec.ou.epsilon, dt);
            for n in 0..n_steps {
                m = ou.step(m, gamma[n]);
                x += spec.g.eval(x, m).map_err(|e| Error::from(e).at_step(n))? * dbeta[n];
                states.push(x);
                if let Some(f) = fast.as_mut() {
                    f.push(m);
                }
            }
        }
        SchemeKind::Limiting | SchemeKind::BrownianLimiting => {
            for n in 0..n_steps {
                x += spec
                    .g
                    .eval(x, gamma[n])
                    .map_err(|e| Error::from(e).at_step(n))?
                    * dbeta[n];
                states.push(x);
            }
        }
        SchemeKind::Averaged | SchemeKind::BrownianAveraged => {
            let owned;
            let gbar = match averaged {
                Some(a) => a,
                None => {
                    owned = spec.averaged()?;
                    &owned
                }
            };
            let expected = match kind {
                SchemeKind::Averaged => AverageKind::MeanG,
                _ => AverageKind::SqrtMeanG2,
            };
            if gbar.kind() != expected {
                return Err(Error::input(format!(
                    "scheme {} needs a {:?} average",
                    kind.name(),
                    expected
                )));
            }
            if let Some(c) = gbar.constant() {
                states.extend(driver.values()[1..].iter().map(|b| spec.x0 + c * b));
            } else {
                for (n, db) in dbeta.iter().enumerate() {
                    x += gbar.eval(x).map_err(|e| e.at_step(n))? * db;
                    states.push(x);
                }
            }
        }
        SchemeKind::ImplicitNonAp => {
            for n in 0..n_steps {
                m = implicit_ou(spec.ou.epsilon, dt, m, gamma[n]);
                x += spec.g.eval(x, m).map_err(|e| Error::from(e).at_step(n))? * dbeta[n];
                states.push(x);
                if let Some(f) = fast.as_mut() {
                    f.push(m);
                }
            }
        }
    }

    Ok(SchemeTrajectory {
        grid,
        kind,
        states,
        fast_states: fast,
    })
}

/// Values of the fast variable fed to `g` at each step of `kind`, written
/// to `out`. Empty for the averaged schemes.
pub fn fast_inputs(
    spec: &SystemSpec,
    kind: SchemeKind,
    dt: f64,
    gamma: &[f64],
    out: &mut Vec<f64>,
) {
    out.clear();
    let mut m = spec.ou.m0;
    match kind {
        SchemeKind::Ap | SchemeKind::BrownianAp => {
            let ou = OuStepper::new(spec.ou.epsilon, dt);
            out.extend(gamma.iter().map(|g| {
                m = ou.step(m, *g);
                m
            }));
        }
        SchemeKind::Limiting | SchemeKind::BrownianLimiting => out.extend_from_slice(gamma),
        SchemeKind::ImplicitNonAp => out.extend(gamma.iter().map(|g| {
            m = implicit_ou(spec.ou.epsilon, dt, m, *g);
            m
        })),
        SchemeKind::Averaged | SchemeKind::BrownianAveraged => {}
    }
}

/// Gaussian law `(mean, variance)` of each entry of [`fast_inputs`].
pub fn fast_marginals(
    spec: &SystemSpec,
    kind: SchemeKind,
    dt: f64,
    steps: usize,
) -> Vec<(f64, f64)> {
    // m' = a·m + b·γ
    let (a, b) = match kind {
        SchemeKind::Averaged | SchemeKind::BrownianAveraged => return Vec::new(),
        SchemeKind::Limiting | SchemeKind::BrownianLimiting => (0.0, 1.0),
        SchemeKind::Ap | SchemeKind::BrownianAp => match spec.ou.epsilon {
            TimeScale::Limit => (0.0, 1.0),
            TimeScale::Finite(eps) => {
                let r = dt / eps;
                ((-r).exp(), (-(-2.0 * r).exp_m1()).sqrt())
            }
        },
        SchemeKind::ImplicitNonAp => match spec.ou.epsilon {
            TimeScale::Limit => (0.0, 0.0),
            TimeScale::Finite(eps) => {
                let r = dt / eps;
                (1.0 / (1.0 + r), r.sqrt() / (1.0 + r))
            }
        },
    };
    let (mut mean, mut var) = (spec.ou.m0, 0.0);
    (0..steps)
        .map(|_| {
            mean *= a;
            var = a * a * var + b * b;
            (mean, var)
        })
        .collect()
}

/// Terminal value only, without allocating the trajectory.
pub fn terminal_state(
    spec: &SystemSpec,
    dbeta: &[f64],
    gamma: &[f64],
    dt: f64,
    kind: SchemeKind,
    averaged: Option<&AveragedCoeff>,
) -> Result<f64> {
    let mut x = spec.x0;
    let mut m = spec.ou.m0;
    let eval = |x: f64, m: f64, n: usize| spec.g.eval(x, m).map_err(|e| Error::from(e).at_step(n));
    match kind {
        SchemeKind::Ap | SchemeKind::BrownianAp => {
            let ou = OuStepper::new(spec.ou.epsilon, dt);
            for (n, (db, g)) in dbeta.iter().zip(gamma).enumerate() {
                m = ou.step(m, *g);
                x += eval(x, m, n)? * db;
            }
        }
        SchemeKind::Limiting | SchemeKind::BrownianLimiting => {
            for (n, (db, g)) in dbeta.iter().zip(gamma).enumerate() {
                x += eval(x, *g, n)? * db;
            }
        }
        SchemeKind::ImplicitNonAp => {
            for (n, (db, g)) in dbeta.iter().zip(gamma).enumerate() {
                m = implicit_ou(spec.ou.epsilon, dt, m, *g);
                x += eval(x, m, n)? * db;
            }
        }
        SchemeKind::Averaged | SchemeKind::BrownianAveraged => {
            let gbar =
                averaged.ok_or_else(|| Error::input("averaged scheme needs its coefficient"))?;
            if let Some(c) = gbar.constant() {
                return Ok(x + c * dbeta.iter().sum::<f64>());
            }
            for (n, db) in dbeta.iter().enumerate() {
                x += gbar.eval(x).map_err(|e| e.at_step(n))? * db;
            }
        }
    }
    Ok(x)
}

/// First and second variations of the averaged flow `x ↦ X̄_{n,k}(x)`.
///
/// Index `j` of each vector corresponds to `k = base + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationState {
    pub base: usize,
    pub flow: Vec<f64>,
    pub eta: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl VariationState {
    /// `η_{n,N}`.
    pub fn eta_terminal(&self) -> f64 {
        self.eta[self.eta.len() - 1]
    }

    /// `ζ_{n,N}`.
    pub fn zeta_terminal(&self) -> f64 {
        self.zeta[self.zeta.len() - 1]
    }

    pub fn flow_terminal(&self) -> f64 {
        self.flow[self.flow.len() - 1]
    }

    /// `(u_n', u_n'')` for `u_n = φ ∘ X̄_{n,N}` given `φ'`, `φ''` at the
    /// terminal flow value.
    pub fn compose(&self, phi_d1: f64, phi_d2: f64) -> (f64, f64) {
        let eta = self.eta_terminal();
        (
            phi_d1 * eta,
            phi_d1 * self.zeta_terminal() + phi_d2 * eta * eta,
        )
    }
}

/// Generalised averaged scheme started at step `n` from `x`, together with
/// its variation processes:
///
/// ```text
/// X̄_{n,k+1} = X̄_{n,k} + ḡ(X̄_{n,k}) δβ_k
/// η_{n,k+1} = η_{n,k} + ḡ'(X̄_{n,k}) η_{n,k} δβ_k
/// ζ_{n,k+1} = ζ_{n,k} + ḡ'(X̄_{n,k}) ζ_{n,k} δβ_k + ḡ''(X̄_{n,k}) η_{n,k}² δβ_k
/// ```
///
/// with `η_{n,n} = 1`, `ζ_{n,n} = 0`, so `η = ∂X̄/∂x` and `ζ = ∂²X̄/∂x²`.
pub fn variation_recursion(
    gbar: &AveragedCoeff,
    fbm: &FbmPath,
    n: usize,
    x: f64,
    fd_step: f64,
) -> Result<VariationState> {
    let steps = fbm.grid().steps();
    if n > steps {
        return Err(Error::input(format!(
            "base index {n} exceeds {steps} steps"
        )));
    }
    let len = steps - n + 1;
    let mut flow = Vec::with_capacity(len);
    let mut eta = Vec::with_capacity(len);
    let mut zeta = Vec::with_capacity(len);
    let (mut xk, mut ek, mut zk) = (x, 1.0, 0.0);
    flow.push(xk);
    eta.push(ek);
    zeta.push(zk);
    for (k, db) in fbm.increments().iter().enumerate().skip(n) {
        let (g, d1, d2) = gbar
            .eval_with_derivatives(xk, fd_step)
            .map_err(|e| e.at_step(k))?;
        let x_next = xk + g * db;
        let e_next = ek + d1 * ek * db;
        let z_next = zk + d1 * zk * db + d2 * ek * ek * db;
        xk = x_next;
        ek = e_next;
        zk = z_next;
        flow.push(xk);
        eta.push(ek);
        zeta.push(zk);
    }
    Ok(VariationState {
        base: n,
        flow,
        eta,
        zeta,
    })
}

/// Terminal value `X̄_{n,N}(x)` of the generalised averaged scheme.
pub fn averaged_flow(gbar: &AveragedCoeff, fbm: &FbmPath, n: usize, x: f64) -> Result<f64> {
    let mut xk = x;
    for (k, db) in fbm.increments().iter().enumerate().skip(n) {
        xk += gbar.eval(xk).map_err(|e| e.at_step(k))? * db;
    }
    Ok(xk)
}
