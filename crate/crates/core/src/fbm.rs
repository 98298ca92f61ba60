//! Fractional Brownian motion on uniform grids.
//!
//! Two exact samplers are provided. [`CholeskySampler`] factors the full
//! covariance matrix of `(β(t_1), …, β(t_N))` and is kept as the reference;
//! [`CirculantSampler`] embeds the fractional Gaussian noise covariance in a
//! circulant matrix (Davies-Harte / Wood-Chan) and costs `O(N log N)` per
//! path. Both target the same Gaussian law.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Default guard on the Cholesky sampler's grid size.
pub const DEFAULT_CHOLESKY_MAX_N: usize = 4096;

/// Eigenvalues of the circulant embedding above `-EIGEN_TOL * max` are
/// rounded to zero.
pub const EIGEN_TOL: f64 = 1e-12;

/// Number of times the embedding may be doubled before giving up.
pub const MAX_DOUBLINGS: u32 = 8;

/// Hurst index `H` in `[1/2, 1)`.
///
/// `H = 1/2` is allowed so the same code can drive the standard Brownian
/// comparison; the averaging theory itself needs `H > 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HurstIndex(f64);

impl HurstIndex {
    pub fn new(h: f64) -> Result<Self> {
        if !(0.5..1.0).contains(&h) {
            return Err(Error::domain(format!(
                "Hurst index must lie in [0.5, 1), got {h}"
            )));
        }
        Ok(HurstIndex(h))
    }

    /// The Brownian case `H = 1/2`.
    pub fn brownian() -> Self {
        HurstIndex(0.5)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_brownian(self) -> bool {
        self.0 == 0.5
    }
}

/// Uniform grid `t_n = n·dt`, `0 ≤ n ≤ N`, with `T = N·dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain(format!(
                "time horizon must be positive, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::domain("step count must be positive"));
        }
        Ok(TimeGrid {
            horizon,
            steps,
            dt: horizon / steps as f64,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `t(n)`; the last point is returned as `T` itself, not `N·dt`.
    pub fn t(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.dt
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|n| self.t(n))
    }

    /// The grid with `factor` times fewer steps over the same horizon.
    pub fn coarsen(&self, factor: usize) -> Result<TimeGrid> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(Error::input(format!(
                "cannot coarsen {} steps by a factor {factor}",
                self.steps
            )));
        }
        TimeGrid::new(self.horizon, self.steps / factor)
    }
}

/// `R(t, s) = ½(t^{2H} + s^{2H} − |t − s|^{2H})`.
pub fn fbm_covariance(t: f64, s: f64, h: HurstIndex) -> Result<f64> {
    if t < 0.0 || s < 0.0 {
        return Err(Error::domain(format!(
            "fBm covariance needs t, s ≥ 0, got ({t}, {s})"
        )));
    }
    let two_h = 2.0 * h.value();
    Ok(0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// Autocovariance of unit-spacing fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(k: usize, h: HurstIndex) -> f64 {
    let two_h = 2.0 * h.value();
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

/// A sampled trajectory `β^H(t_n)` together with its increments.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    grid: TimeGrid,
    values: Vec<f64>,
    increments: Vec<f64>,
}

impl FbmPath {
    pub fn from_increments(grid: TimeGrid, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.steps() {
            return Err(Error::input(format!(
                "expected {} increments, got {}",
                grid.steps(),
                increments.len()
            )));
        }
        let mut values = Vec::with_capacity(increments.len() + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for d in &increments {
            acc += d;
            values.push(acc);
        }
        Ok(FbmPath {
            grid,
            values,
            increments,
        })
    }

    pub fn from_values(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::input(format!(
                "expected {} values, got {}",
                grid.steps() + 1,
                values.len()
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::input("fBm paths start at 0"));
        }
        let increments = values.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(FbmPath {
            grid,
            values,
            increments,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Restrict the path to every `factor`-th grid point. The result is an
    /// exact sample on the coarser grid, coupled to `self`.
    pub fn coarsen(&self, factor: usize) -> Result<FbmPath> {
        let grid = self.grid.coarsen(factor)?;
        let values = self.values.iter().step_by(factor).copied().collect();
        FbmPath::from_values(grid, values)
    }
}

/// Reference sampler: Cholesky factor of the full covariance matrix.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    grid: TimeGrid,
    /// Row-major lower-triangular factor.
    lower: Vec<f64>,
}

impl CholeskySampler {
    pub fn new(grid: TimeGrid, h: HurstIndex) -> Result<Self> {
        Self::with_max_n(grid, h, DEFAULT_CHOLESKY_MAX_N)
    }

    pub fn with_max_n(grid: TimeGrid, h: HurstIndex, max_n: usize) -> Result<Self> {
        let n = grid.steps();
        if n > max_n {
            return Err(Error::input(format!(
                "Cholesky sampler limited to {max_n} steps, got {n}"
            )));
        }
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let c = fbm_covariance(grid.t(i + 1), grid.t(j + 1), h)?;
                a[i * n + j] = c;
                a[j * n + i] = c;
            }
        }
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
        let mut lower = vec![0.0; n * n];
        let mut smallest_pivot = f64::INFINITY;
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= lower[j * n + k] * lower[j * n + k];
            }
            smallest_pivot = smallest_pivot.min(d);
            if d <= 1e-14 * max_diag {
                return Err(Error::Numerical(format!(
                    "fBm covariance not positive definite: pivot {j} is {d:e} (smallest pivot {smallest_pivot:e})"
                )));
            }
            let d = d.sqrt();
            lower[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= lower[i * n + k] * lower[j * n + k];
                }
                lower[i * n + j] = s / d;
            }
        }
        Ok(CholeskySampler { grid, lower })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FbmPath {
        let n = self.grid.steps();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i + 1];
            values.push(row.iter().zip(&z).map(|(l, z)| l * z).sum());
        }
        FbmPath::from_values(self.grid, values).expect("length matches grid")
    }
}

/// Sample one path with a freshly built [`CholeskySampler`].
pub fn sample_fbm_cholesky<R: Rng + ?Sized>(
    grid: TimeGrid,
    h: HurstIndex,
    rng: &mut R,
) -> Result<FbmPath> {
    Ok(CholeskySampler::new(grid, h)?.sample(rng))
}

/// Circulant-embedding sampler of fractional Gaussian noise.
///
/// Build it once per `(grid, H)`; every FFT yields two independent paths,
/// see [`CirculantSampler::sample_pair`].
#[derive(Clone)]
pub struct CirculantSampler {
    grid: TimeGrid,
    /// `sqrt(λ_k / 2m)` for the `2m` circulant eigenvalues.
    scaled_sqrt_eigs: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    increment_scale: f64,
}

impl std::fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantSampler")
            .field("grid", &self.grid)
            .field("embedding_size", &self.scaled_sqrt_eigs.len())
            .finish()
    }
}

impl CirculantSampler {
    pub fn new(grid: TimeGrid, h: HurstIndex) -> Result<Self> {
        let n = grid.steps();
        let mut m = n.next_power_of_two();
        let mut planner = FftPlanner::new();
        for _ in 0..=MAX_DOUBLINGS {
            let size = 2 * m;
            let mut row: Vec<Complex64> = (0..size)
                .map(|j| {
                    let lag = if j <= m { j } else { size - j };
                    Complex64::new(fgn_autocovariance(lag, h), 0.0)
                })
                .collect();
            let fft = planner.plan_fft_forward(size);
            fft.process(&mut row);
            let max = row.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
            let worst = row.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
            if worst < -EIGEN_TOL * max {
                if m >= n << MAX_DOUBLINGS {
                    return Err(Error::Numerical(format!(
                        "circulant embedding of size {size} has eigenvalue {worst:e}"
                    )));
                }
                m *= 2;
                continue;
            }
            let scaled_sqrt_eigs = row
                .iter()
                .map(|c| (c.re.max(0.0) / size as f64).sqrt())
                .collect();
            return Ok(CirculantSampler {
                grid,
                scaled_sqrt_eigs,
                fft,
                increment_scale: grid.dt().powf(h.value()),
            });
        }
        Err(Error::Numerical(
            "circulant embedding failed to become non-negative".into(),
        ))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Two independent exact paths from one FFT (real and imaginary parts).
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (FbmPath, FbmPath) {
        let mut buf: Vec<Complex64> = self
            .scaled_sqrt_eigs
            .iter()
            .map(|&s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            })
            .collect();
        self.fft.process(&mut buf);
        let n = self.grid.steps();
        let re = buf[..n]
            .iter()
            .map(|c| c.re * self.increment_scale)
            .collect();
        let im = buf[..n]
            .iter()
            .map(|c| c.im * self.increment_scale)
            .collect();
        (
            FbmPath::from_increments(self.grid, re).expect("length matches grid"),
            FbmPath::from_increments(self.grid, im).expect("length matches grid"),
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FbmPath {
        self.sample_pair(rng).0
    }
}

/// Sample one path with a freshly built [`CirculantSampler`].
pub fn sample_fbm_circulant<R: Rng + ?Sized>(
    grid: TimeGrid,
    h: HurstIndex,
    rng: &mut R,
) -> Result<FbmPath> {
    Ok(CirculantSampler::new(grid, h)?.sample(rng))
}

/// How grid values are read as a function of continuous time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    /// Only grid points are admissible times.
    Grid,
    /// `f(t) = values[ℓ(t)]` with `ℓ(t)` the grid point at or left of `t`.
    PiecewiseConstant,
}

/// Hölder seminorm `sup |f(t₂) − f(t₁)| / (t₂ − t₁)^α` over `a ≤ t₁ < t₂ ≤ b`.
///
/// With `anchored`, `t₁` is restricted to grid points. For a grid signal
/// that changes nothing. For a piecewise-constant extension the unanchored
/// supremum is infinite as soon as the signal jumps inside `(a, b]`, while
/// the anchored one reduces to the supremum over grid pairs.
pub fn holder_seminorm(
    values: &[f64],
    grid: &TimeGrid,
    alpha: f64,
    (a, b): (f64, f64),
    anchored: bool,
    extension: Extension,
) -> Result<f64> {
    if values.len() != grid.steps() + 1 {
        return Err(Error::input(format!(
            "expected {} values, got {}",
            grid.steps() + 1,
            values.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "Hölder exponent must lie in (0, 1), got {alpha}"
        )));
    }
    let tol = 1e-9 * grid.dt();
    if !(a >= -tol && a < b && b <= grid.horizon() + tol) {
        return Err(Error::domain(format!(
            "need 0 ≤ a < b ≤ T, got a = {a}, b = {b}"
        )));
    }
    let lo = ((a - tol) / grid.dt()).ceil().max(0.0) as usize;
    let hi = (((b + tol) / grid.dt()).floor() as usize).min(grid.steps());

    if extension == Extension::PiecewiseConstant && !anchored {
        // t₁ just left of a jump at t_k with t₂ = t_k gives an unbounded ratio.
        let jump_inside =
            (lo.max(1)..=hi).any(|k| grid.t(k) > a + tol && values[k] != values[k - 1]);
        if jump_inside {
            return Ok(f64::INFINITY);
        }
    }

    let mut sup: f64 = 0.0;
    for i in lo..=hi {
        for j in i + 1..=hi {
            let ratio = (values[j] - values[i]).abs() / (grid.t(j) - grid.t(i)).powf(alpha);
            sup = sup.max(ratio);
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn h(v: f64) -> HurstIndex {
        HurstIndex::new(v).unwrap()
    }

    #[test]
    fn hurst_range() {
        assert!(HurstIndex::new(0.5).is_ok());
        assert!(HurstIndex::new(0.99).is_ok());
        assert!(HurstIndex::new(1.0).is_err());
        assert!(HurstIndex::new(0.3).is_err());
        assert!(HurstIndex::new(f64::NAN).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = TimeGrid::new(0.3, 7).unwrap();
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.t(7), 0.3);
        assert!((g.steps() as f64 * g.dt() - g.horizon()).abs() <= f64::EPSILON * 0.3);
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(g.coarsen(2).is_err());
        assert_eq!(
            TimeGrid::new(1.0, 8).unwrap().coarsen(4).unwrap().steps(),
            2
        );
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(fbm_covariance(1.0, 1.0, h(0.75)).unwrap(), 1.0);
        assert!((fbm_covariance(1.0, 2.0, h(0.75)).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!((fbm_covariance(1.0, 2.0, h(0.5)).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            fbm_covariance(-1.0, 1.0, h(0.7)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn fgn_lag_one() {
        let expected = (2f64.powf(1.5) - 2.0) / 2.0;
        assert!((fgn_autocovariance(1, h(0.75)) - expected).abs() < 1e-15);
        assert_eq!(fgn_autocovariance(0, h(0.75)), 1.0);
        assert_eq!(fgn_autocovariance(3, h(0.5)), 0.0);
    }

    #[test]
    fn single_step_is_exact() {
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let chol = CholeskySampler::new(grid, h(0.75)).unwrap();
        assert!((chol.lower[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cholesky_guard() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        assert!(matches!(
            CholeskySampler::with_max_n(grid, h(0.7), 50),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn path_invariants() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let sampler = CirculantSampler::new(grid, h(0.8)).unwrap();
        let path = sampler.sample(&mut substream(1, "t", 0));
        assert_eq!(path.values()[0], 0.0);
        for n in 0..64 {
            let d = path.values()[n + 1] - path.values()[n];
            assert!((d - path.increments()[n]).abs() < 1e-12);
        }
        let coarse = path.coarsen(8).unwrap();
        assert_eq!(coarse.values()[8], path.values()[64]);
        assert_eq!(coarse.values()[3], path.values()[24]);
    }

    #[test]
    fn holder_examples() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let ext = Extension::Grid;
        let constant = holder_seminorm(&[2.0; 3], &grid, 0.5, (0.0, 1.0), false, ext).unwrap();
        assert_eq!(constant, 0.0);
        let linear = holder_seminorm(&[0.0, 0.5, 1.0], &grid, 0.5, (0.0, 1.0), false, ext).unwrap();
        assert!((linear - 1.0).abs() < 1e-15);
        let tent = holder_seminorm(&[0.0, 1.0, 0.0], &grid, 0.5, (0.0, 1.0), true, ext).unwrap();
        assert!((tent - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn holder_window_and_anchoring() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let v = [0.0, 1.0, 1.0, 3.0, 3.0];
        // window [0.25, 0.5] holds the single pair (1, 1)
        let w = holder_seminorm(&v, &grid, 0.5, (0.25, 0.5), true, Extension::Grid).unwrap();
        assert_eq!(w, 0.0);
        // a one-point window has no pairs
        let one = holder_seminorm(&v, &grid, 0.5, (0.3, 0.4), true, Extension::Grid).unwrap();
        assert_eq!(one, 0.0);
        let pc = Extension::PiecewiseConstant;
        let anchored = holder_seminorm(&v, &grid, 0.5, (0.0, 1.0), true, pc).unwrap();
        let grid_only =
            holder_seminorm(&v, &grid, 0.5, (0.0, 1.0), false, Extension::Grid).unwrap();
        assert_eq!(anchored, grid_only);
        let free = holder_seminorm(&v, &grid, 0.5, (0.0, 1.0), false, pc).unwrap();
        assert!(free.is_infinite());
        // no jump strictly inside (0.25, 0.5]
        let flat = holder_seminorm(&v, &grid, 0.5, (0.25, 0.5), false, pc).unwrap();
        assert_eq!(flat, 0.0);
    }

    #[test]
    fn holder_rejects_bad_input() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let v = [0.0, 1.0, 0.0];
        assert!(holder_seminorm(&v, &grid, 1.0, (0.0, 1.0), true, Extension::Grid).is_err());
        assert!(holder_seminorm(&v, &grid, 0.5, (0.5, 0.5), true, Extension::Grid).is_err());
        assert!(holder_seminorm(&v, &grid, 0.5, (0.0, 2.0), true, Extension::Grid).is_err());
        assert!(holder_seminorm(&v[..2], &grid, 0.5, (0.0, 1.0), true, Extension::Grid).is_err());
    }
}
