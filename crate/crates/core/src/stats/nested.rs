//! Nested Monte-Carlo estimation of `E|E^H[φ(X_N)] − φ(X̄)|`.
//!
//! Conditioning on the σ-field of the slow driver amounts to freezing the
//! driver path, since it is independent of the fast noise. For each outer
//! sample one driver path is drawn on the finest grid; the reference `X̄` is
//! computed on it once, and the inner expectation averages `φ(X_N)` over
//! independent resamples of the fast noise against that same path.
//!
//! Coarser grids reuse the fine samples: the driver is read at every
//! `factor`-th point and the fast noise is aggregated from the same
//! Brownian path, so all levels in one plan are coupled.
//!
//! With [`InnerEstimator::ControlVariate`] each inner draw of `φ(X_N)` is
//! corrected by
//!
//! ```text
//! C = Σ_n w_n (g(X̄_n, m_{n+1}) − E^H[g(X̄_n, m_{n+1})]) δβ_n,
//! w_n = φ'(X̄_N) Π_{k>n} (1 + ḡ'(X̄_k) δβ_k),
//! ```
//!
//! where `X̄` is the averaged scheme on the case's grid and `m_{n+1}` is the
//! fast input the scheme feeds to `g`. The weights are driver-measurable and
//! the fast inputs are Gaussian with known law, so `E^H[C] = 0` exactly and
//! the inner mean stays unbiased; `C` cancels the first-order part of the
//! inner fluctuation, which otherwise sets a noise floor of order
//! `sqrt(Σ δβ²) / sqrt(inner)`.

use rayon::prelude::*;

use crate::averaging::{AveragedCoeff, GaussHermite, DEFAULT_FD_STEP};
use crate::error::{Error, Result};
use crate::fbm::{CirculantSampler, FbmPath, TimeGrid};
use crate::noise::{brownian_increments, GaussianSeq};
use crate::rng::{role, substream, substream2};
use crate::schemes::{fast_inputs, fast_marginals, terminal_state, Driver, SchemeKind, SystemSpec};

use super::{Estimate, TestFunction};

/// One scheme evaluated on the fine grid coarsened by `coarsen`.
#[derive(Debug, Clone)]
pub struct Case {
    pub spec: SystemSpec,
    pub kind: SchemeKind,
    pub coarsen: usize,
}

/// Where the reference `X̄` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// Averaged scheme on the case's own grid (`X̄_N`).
    SameGrid,
    /// Averaged scheme on the finest grid, a proxy for `X̄(T)`.
    FineGrid,
}

/// How the inner expectation `E^H[φ(X_N)]` is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerEstimator {
    /// Plain mean of `φ(X_N)` over the inner draws.
    Plain,
    /// Mean of `φ(X_N) − C` with the zero-mean control `C` described above.
    #[default]
    ControlVariate,
}

#[derive(Debug, Clone)]
pub struct NestedPlan {
    pub fine_grid: TimeGrid,
    pub cases: Vec<Case>,
    pub reference: Reference,
    pub outer: usize,
    pub inner: usize,
    pub seed: u64,
    pub estimator: InnerEstimator,
}

#[derive(Debug, Clone)]
pub struct NestedOutcome {
    /// `E|E^H[φ(X_N)] − φ(X̄)|` per case.
    pub criteria: Vec<Estimate>,
    /// Per case, one `(X_N, X̄)` pair per outer sample (first inner draw).
    pub pairs: Vec<Vec<(f64, f64)>>,
}

/// A single scheme compared with the averaged scheme on the same grid.
#[derive(Debug, Clone)]
pub struct CoupledRecipe {
    pub spec: SystemSpec,
    pub kind: SchemeKind,
}

/// `E|E^H[φ(X_N)] − φ(X̄_N)|` for one scheme on one grid.
pub fn conditional_criterion(
    recipe: &CoupledRecipe,
    phi: TestFunction,
    grid: TimeGrid,
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<Estimate> {
    let plan = NestedPlan {
        fine_grid: grid,
        cases: vec![Case {
            spec: recipe.spec.clone(),
            kind: recipe.kind,
            coarsen: 1,
        }],
        reference: Reference::SameGrid,
        outer,
        inner,
        seed,
        estimator: InnerEstimator::default(),
    };
    Ok(run_nested(&plan, phi)?.criteria[0])
}

struct Prepared<'a> {
    case: &'a Case,
    averaged: AveragedCoeff,
    dt: f64,
    /// Law of the fast inputs; empty when the case has no fast noise.
    marginals: Vec<(f64, f64)>,
}

/// Per-outer-sample data of the control variate for one case.
struct Control {
    xbar: Vec<f64>,
    weights: Vec<f64>,
    centers: Vec<f64>,
}

impl Control {
    fn build(
        p: &Prepared,
        phi: TestFunction,
        dbeta: &[f64],
        rule: &GaussHermite,
    ) -> Result<Control> {
        let spec = &p.case.spec;
        let n = dbeta.len();
        let mut xbar = Vec::with_capacity(n + 1);
        let mut slope = Vec::with_capacity(n);
        let mut x = spec.x0;
        xbar.push(x);
        for (k, db) in dbeta.iter().enumerate() {
            let (g, d1, _) = p
                .averaged
                .eval_with_derivatives(x, DEFAULT_FD_STEP)
                .map_err(|e| e.at_step(k))?;
            slope.push(d1);
            x += g * db;
            xbar.push(x);
        }
        let mut weights = vec![0.0; n];
        let mut w = phi.d1(x);
        for k in (0..n).rev() {
            weights[k] = w * dbeta[k];
            w *= 1.0 + slope[k] * dbeta[k];
        }
        let centers = (0..n)
            .map(|k| {
                let (mean, var) = p.marginals[k];
                let sd = var.sqrt();
                rule.expect(|z| spec.g.eval(xbar[k], mean + sd * z))
                    .map_err(|e| Error::from(e).at_step(k))
            })
            .collect::<Result<_>>()?;
        Ok(Control {
            xbar,
            weights,
            centers,
        })
    }

    fn value(&self, spec: &SystemSpec, fast: &[f64]) -> Result<f64> {
        let mut c = 0.0;
        for (k, m) in fast.iter().enumerate() {
            let g = spec
                .g
                .eval(self.xbar[k], *m)
                .map_err(|e| Error::from(e).at_step(k))?;
            c += self.weights[k] * (g - self.centers[k]);
        }
        Ok(c)
    }
}

pub fn run_nested(plan: &NestedPlan, phi: TestFunction) -> Result<NestedOutcome> {
    if plan.outer < 30 {
        return Err(Error::input(format!(
            "need at least 30 outer samples, got {}",
            plan.outer
        )));
    }
    if plan.inner < 100 {
        return Err(Error::input(format!(
            "need at least 100 inner samples, got {}",
            plan.inner
        )));
    }
    let first = plan
        .cases
        .first()
        .ok_or_else(|| Error::input("the plan has no cases"))?;
    let driver = first.spec.driver;
    let hurst = first.spec.hurst;
    let mut prepared = Vec::with_capacity(plan.cases.len());
    for case in &plan.cases {
        if case.spec.driver != driver || case.spec.hurst != hurst {
            return Err(Error::input("all cases of a plan must share the driver"));
        }
        if case.kind.driver() != driver {
            return Err(Error::input(format!(
                "scheme {} does not match the {driver:?} driver",
                case.kind.name()
            )));
        }
        let grid = plan.fine_grid.coarsen(case.coarsen)?;
        prepared.push(Prepared {
            case,
            averaged: case.spec.averaged()?,
            dt: grid.dt(),
            marginals: fast_marginals(&case.spec, case.kind, grid.dt(), grid.steps()),
        });
    }
    let mut factors: Vec<usize> = plan.cases.iter().map(|c| c.coarsen).collect();
    factors.sort_unstable();
    factors.dedup();
    let factor_slot = |f: usize| factors.binary_search(&f).expect("factor listed");

    let sampler = match driver {
        Driver::Fractional => Some(CirculantSampler::new(plan.fine_grid, hurst)?),
        Driver::Brownian => None,
    };

    // Per outer draw: one |difference| and one (X_N, X̄) pair per case.
    type OuterDraw = (Vec<f64>, Vec<(f64, f64)>);
    let per_outer: Vec<OuterDraw> = (0..plan.outer)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let i = i as u64;
            let fine = match &sampler {
                Some(s) => s.sample(&mut substream(plan.seed, role::FBM, i)),
                None => FbmPath::from_increments(
                    plan.fine_grid,
                    brownian_increments(
                        &plan.fine_grid,
                        &mut substream(plan.seed, role::BROWNIAN, i),
                    ),
                )?,
            };
            let paths: Vec<FbmPath> = factors
                .iter()
                .map(|&f| {
                    if f == 1 {
                        Ok(fine.clone())
                    } else {
                        fine.coarsen(f)
                    }
                })
                .collect::<Result<_>>()?;

            let mut references = Vec::with_capacity(prepared.len());
            for p in &prepared {
                let path = match plan.reference {
                    Reference::SameGrid => &paths[factor_slot(p.case.coarsen)],
                    Reference::FineGrid => &fine,
                };
                let kind = SchemeKind::Averaged.for_driver(driver);
                let xbar = terminal_state(
                    &p.case.spec,
                    path.increments(),
                    &[],
                    path.grid().dt(),
                    kind,
                    Some(&p.averaged),
                )?;
                references.push(xbar);
            }

            let controls: Vec<Option<Control>> = prepared
                .iter()
                .map(|p| {
                    if plan.estimator == InnerEstimator::Plain || p.marginals.is_empty() {
                        return Ok(None);
                    }
                    let rule = GaussHermite::cached(p.case.spec.quad_order)?;
                    let path = &paths[factor_slot(p.case.coarsen)];
                    Control::build(p, phi, path.increments(), &rule).map(Some)
                })
                .collect::<Result<_>>()?;

            let mut fast = Vec::new();
            let mut sums = vec![0.0; prepared.len()];
            let mut pairs = vec![(0.0, 0.0); prepared.len()];
            for j in 0..plan.inner {
                let gammas = GaussianSeq::sample(
                    plan.fine_grid.steps(),
                    &mut substream2(plan.seed, role::GAMMA, i, j as u64),
                );
                let coarse: Vec<GaussianSeq> = factors
                    .iter()
                    .map(|&f| {
                        if f == 1 {
                            Ok(gammas.clone())
                        } else {
                            gammas.coarsen(f)
                        }
                    })
                    .collect::<Result<_>>()?;
                for (c, p) in prepared.iter().enumerate() {
                    let slot = factor_slot(p.case.coarsen);
                    let x = terminal_state(
                        &p.case.spec,
                        paths[slot].increments(),
                        coarse[slot].as_slice(),
                        p.dt,
                        p.case.kind,
                        Some(&p.averaged),
                    )?;
                    let mut value = phi.eval(x);
                    if let Some(control) = &controls[c] {
                        fast_inputs(
                            &p.case.spec,
                            p.case.kind,
                            p.dt,
                            coarse[slot].as_slice(),
                            &mut fast,
                        );
                        value -= control.value(&p.case.spec, &fast)?;
                    }
                    sums[c] += value;
                    if j == 0 {
                        pairs[c] = (x, references[c]);
                    }
                }
            }
            let diffs = sums
                .iter()
                .zip(&references)
                .map(|(s, xbar)| (s / plan.inner as f64 - phi.eval(*xbar)).abs())
                .collect();
            Ok((diffs, pairs))
        })
        .collect::<Result<_>>()?;

    let criteria = (0..prepared.len())
        .map(|c| {
            let col: Vec<f64> = per_outer.iter().map(|(d, _)| d[c]).collect();
            Estimate::of_mean(&col)
        })
        .collect();
    let pairs = (0..prepared.len())
        .map(|c| per_outer.iter().map(|(_, p)| p[c]).collect())
        .collect();
    Ok(NestedOutcome { criteria, pairs })
}
