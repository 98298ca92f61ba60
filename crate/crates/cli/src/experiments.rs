//! Experiment runners. Each returns one or more [`ResultTable`]s.

use std::path::{Path, PathBuf};

use apsde_core::fbm::{CirculantSampler, FbmPath, HurstIndex, TimeGrid};
use apsde_core::noise::{brownian_increments, GaussianSeq, OuParams, TimeScale};
use apsde_core::rng::{role, substream};
use apsde_core::schemes::{
    run_scheme_with, terminal_state, variation_recursion, Driver, SchemeKind, SystemSpec,
};
use apsde_core::stats::ks::{ks_one_sample, ks_two_sample, normal_cdf};
use apsde_core::stats::{
    prob_exceed, rate_fit, run_nested, weak_error, Case, Estimate, InnerEstimator, NestedPlan,
    Reference, WeakReference,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::table::{Cell, ResultTable, TableError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{experiment}: {source}")]
    Core {
        experiment: ExperimentKind,
        #[source]
        source: apsde_core::Error,
    },
    #[error("{experiment}: {message}")]
    Setup {
        experiment: ExperimentKind,
        message: String,
    },
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: TableError,
    },
}

type Result<T> = std::result::Result<T, RunError>;

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    kind: ExperimentKind,
}

impl Ctx<'_> {
    fn core<T>(&self, r: apsde_core::Result<T>) -> Result<T> {
        r.map_err(|source| RunError::Core {
            experiment: self.kind,
            source,
        })
    }

    fn setup(&self, message: impl Into<String>) -> RunError {
        RunError::Setup {
            experiment: self.kind,
            message: message.into(),
        }
    }

    fn spec(&self, epsilon: f64) -> Result<SystemSpec> {
        let c = self.cfg;
        let hurst = match c.driver {
            Driver::Fractional => self.core(HurstIndex::new(c.h))?,
            Driver::Brownian => HurstIndex::brownian(),
        };
        let ou = self.core(OuParams::new(epsilon, c.m0))?;
        let mut spec = self.core(SystemSpec::new(c.g.clone(), hurst, ou, c.x0, c.driver))?;
        spec.quad_order = c.quad_order;
        Ok(spec)
    }

    fn grid(&self, steps: usize) -> Result<TimeGrid> {
        self.core(TimeGrid::new(self.cfg.horizon, steps))
    }

    /// Step counts sorted coarse to fine, each dividing the finest.
    fn nested_steps(&self) -> Result<Vec<usize>> {
        let mut steps = self.cfg.steps.clone();
        steps.sort_unstable();
        steps.dedup();
        let finest = *steps.last().expect("validated non-empty");
        if let Some(bad) = steps.iter().find(|&&n| finest % n != 0) {
            return Err(self.setup(format!(
                "grid.N = {bad} does not divide the finest N = {finest}"
            )));
        }
        Ok(steps)
    }

    fn new_table(&self, name: &str, columns: &[&str]) -> ResultTable {
        let mut t = ResultTable::new(name, columns);
        t.meta("experiment", self.kind);
        t.meta("version", env!("CARGO_PKG_VERSION"));
        t.meta("config_sha256", &self.cfg.hash);
        t.meta("seed", self.cfg.seed);
        t.meta("g", self.cfg.g.source());
        t.meta("h", self.cfg.h);
        t
    }

    /// Driver path for outer sample `i` on `grid`.
    fn driver_path(
        &self,
        sampler: Option<&CirculantSampler>,
        grid: TimeGrid,
        i: u64,
    ) -> Result<FbmPath> {
        match sampler {
            Some(s) => Ok(s.sample(&mut substream(self.cfg.seed, role::FBM, i))),
            None => self.core(FbmPath::from_increments(
                grid,
                brownian_increments(&grid, &mut substream(self.cfg.seed, role::BROWNIAN, i)),
            )),
        }
    }

    fn sampler(&self, grid: TimeGrid) -> Result<Option<CirculantSampler>> {
        match self.cfg.driver {
            Driver::Fractional => Ok(Some(self.core(CirculantSampler::new(
                grid,
                self.core(HurstIndex::new(self.cfg.h))?,
            ))?)),
            Driver::Brownian => Ok(None),
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<Vec<ResultTable>> {
    if let Some(declared) = cfg.kind {
        if declared != kind {
            return Err(RunError::Setup {
                experiment: kind,
                message: format!("config declares experiment.kind = {declared}"),
            });
        }
    }
    let ctx = Ctx { cfg, kind };
    match kind {
        ExperimentKind::Simulate => simulate(&ctx),
        ExperimentKind::ApDiagram => ap_diagram(&ctx),
        ExperimentKind::RateFit => rate_fit_experiment(&ctx),
        ExperimentKind::EpsSweep => eps_sweep(&ctx),
        ExperimentKind::BrownianCompare => brownian_compare(&ctx),
        ExperimentKind::VariationDiag => variation_diag(&ctx),
    }
}

/// Write each table to `<dir>/<name>.csv`.
pub fn write_tables(tables: &[ResultTable], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::Write {
        path: dir.to_path_buf(),
        source: e.into(),
    })?;
    let mut paths = Vec::with_capacity(tables.len());
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        t.write_file(&path).map_err(|source| RunError::Write {
            path: path.clone(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}

fn table_name(base: &str, suffix: String, many: bool) -> String {
    if many {
        format!("{base}_{suffix}")
    } else {
        base.to_string()
    }
}

/// One trajectory per step count: AP, limiting and averaged on shared noise.
fn simulate(ctx: &Ctx) -> Result<Vec<ResultTable>> {
    let cfg = ctx.cfg;
    let epsilon = cfg.epsilons[0];
    let spec = ctx.spec(epsilon)?;
    let averaged = ctx.core(spec.averaged())?;
    let kinds = [SchemeKind::Ap, SchemeKind::Limiting, SchemeKind::Averaged]
        .map(|k| k.for_driver(cfg.driver));
    let many = cfg.steps.len() > 1;
    let mut tables = Vec::new();
    for &n in &cfg.steps {
        let grid = ctx.grid(n)?;
        let sampler = ctx.sampler(grid)?;
        let path = ctx.driver_path(sampler.as_ref(), grid, 0)?;
        let gammas = GaussianSeq::sample(n, &mut substream(cfg.seed, role::GAMMA, 0));
        let runs = kinds
            .iter()
            .map(|&k| ctx.core(run_scheme_with(&spec, &path, &gammas, k, Some(&averaged))))
            .collect::<Result<Vec<_>>>()?;
        let fast = runs[0]
            .fast_states
            .as_ref()
            .expect("AP tracks the fast state");

        let mut t = ctx.new_table(
            &table_name("simulate", format!("N{n}"), many),
            &["n", "t", "beta", "m", "X_ap", "X_limiting", "X_averaged"],
        );
        t.meta("epsilon", epsilon);
        t.meta("N", n);
        for (i, m) in fast.iter().enumerate().take(n + 1) {
            t.push(vec![
                i.into(),
                grid.t(i).into(),
                path.values()[i].into(),
                (*m).into(),
                runs[0].states[i].into(),
                runs[1].states[i].into(),
                runs[2].states[i].into(),
            ]);
        }
        tables.push(t);
    }
    Ok(tables)
}

fn nested_plan(ctx: &Ctx, cases: Vec<Case>, fine: TimeGrid, reference: Reference) -> NestedPlan {
    NestedPlan {
        fine_grid: fine,
        cases,
        reference,
        outer: ctx.cfg.outer,
        inner: ctx.cfg.inner,
        seed: ctx.cfg.seed,
        estimator: ctx.cfg.estimator,
    }
}

/// Limiting scheme on each grid, compared with the averaged scheme on the
/// same grid.
fn rate_fit_experiment(ctx: &Ctx) -> Result<Vec<ResultTable>> {
    let steps = ctx.nested_steps()?;
    let finest = *steps.last().unwrap();
    let fine = ctx.grid(finest)?;
    let spec = ctx.spec(0.0)?;
    let kind = SchemeKind::Limiting.for_driver(ctx.cfg.driver);
    let cases = steps
        .iter()
        .map(|&n| Case {
            spec: spec.clone(),
            kind,
            coarsen: finest / n,
        })
        .collect();
    let outcome = ctx.core(run_nested(
        &nested_plan(ctx, cases, fine, Reference::SameGrid),
        ctx.cfg.phi,
    ))?;

    let mut t = ctx.new_table("rate-fit", &["dt", "error", "std_error"]);
    t.meta("phi", ctx.cfg.phi.name());
    t.meta("outer", ctx.cfg.outer);
    t.meta("inner", ctx.cfg.inner);
    t.meta("estimator", estimator_name(ctx.cfg.estimator));
    let mut dts = Vec::new();
    let mut errors = Vec::new();
    for (&n, e) in steps.iter().zip(&outcome.criteria) {
        let dt = ctx.cfg.horizon / n as f64;
        t.push(vec![dt.into(), e.value.into(), e.std_error.into()]);
        dts.push(dt);
        errors.push(e.value);
    }
    if steps.len() >= 3 {
        let fit = ctx.core(rate_fit(&dts, &errors))?;
        t.foot("slope", fit.slope);
        t.foot("intercept", fit.intercept);
        t.foot("r2", fit.r_squared);
    }
    Ok(vec![t])
}

/// The two iterated-limit error curves against `X̄(T)`:
/// `eps_first` runs the ε = 0 scheme over the Δt grid, `dt_first` runs the
/// AP scheme on the finest grid over the decreasing ε list.
fn ap_diagram(ctx: &Ctx) -> Result<Vec<ResultTable>> {
    let steps = ctx.nested_steps()?;
    let finest = *steps.last().unwrap();
    let fine = ctx.grid(finest)?;
    let mut epsilons: Vec<f64> = ctx
        .cfg
        .epsilons
        .iter()
        .copied()
        .filter(|&e| e > 0.0)
        .collect();
    epsilons.sort_by(|a, b| b.total_cmp(a));
    epsilons.dedup();
    if epsilons.is_empty() {
        return Err(ctx.setup("system.epsilon needs at least one positive value"));
    }
    let limit = ctx.spec(0.0)?;
    let mut cases: Vec<Case> = steps
        .iter()
        .map(|&n| Case {
            spec: limit.clone(),
            kind: SchemeKind::Limiting.for_driver(ctx.cfg.driver),
            coarsen: finest / n,
        })
        .collect();
    for &eps in &epsilons {
        cases.push(Case {
            spec: ctx.spec(eps)?,
            kind: SchemeKind::Ap.for_driver(ctx.cfg.driver),
            coarsen: 1,
        });
    }
    let outcome = ctx.core(run_nested(
        &nested_plan(ctx, cases, fine, Reference::FineGrid),
        ctx.cfg.phi,
    ))?;

    let mut t = ctx.new_table(
        "ap-diagram",
        &["epsilon", "dt", "error", "std_error", "order_tag"],
    );
    t.meta("phi", ctx.cfg.phi.name());
    t.meta("outer", ctx.cfg.outer);
    t.meta("inner", ctx.cfg.inner);
    t.meta("estimator", estimator_name(ctx.cfg.estimator));
    for (&n, e) in steps.iter().zip(&outcome.criteria[..steps.len()]) {
        let dt = ctx.cfg.horizon / n as f64;
        t.push(vec![
            0.0.into(),
            dt.into(),
            e.value.into(),
            e.std_error.into(),
            "eps_first".into(),
        ]);
    }
    for (&eps, e) in epsilons.iter().zip(&outcome.criteria[steps.len()..]) {
        t.push(vec![
            eps.into(),
            fine.dt().into(),
            e.value.into(),
            e.std_error.into(),
            "dt_first".into(),
        ]);
    }
    Ok(vec![t])
}

/// `|X_N^ε − X_N^0|` on coupled inputs for each sample.
pub fn terminal_gaps(
    spec: &SystemSpec,
    grid: TimeGrid,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> apsde_core::Result<Vec<f64>> {
    let with_eps = spec.with_epsilon(TimeScale::new(epsilon)?);
    let limit = spec.with_epsilon(TimeScale::Limit);
    let sampler = match spec.driver {
        Driver::Fractional => Some(CirculantSampler::new(grid, spec.hurst)?),
        Driver::Brownian => None,
    };
    let ap = SchemeKind::Ap.for_driver(spec.driver);
    let lim = SchemeKind::Limiting.for_driver(spec.driver);
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let dbeta = match &sampler {
                Some(s) => s
                    .sample(&mut substream(seed, role::FBM, i))
                    .increments()
                    .to_vec(),
                None => brownian_increments(&grid, &mut substream(seed, role::BROWNIAN, i)),
            };
            let gammas = GaussianSeq::sample(grid.steps(), &mut substream(seed, role::GAMMA, i));
            let a = terminal_state(&with_eps, &dbeta, gammas.as_slice(), grid.dt(), ap, None)?;
            let b = terminal_state(&limit, &dbeta, gammas.as_slice(), grid.dt(), lim, None)?;
            Ok((a - b).abs())
        })
        .collect()
}

fn eps_sweep(ctx: &Ctx) -> Result<Vec<ResultTable>> {
    let cfg = ctx.cfg;
    let spec = ctx.spec(0.0)?;
    let many = cfg.steps.len() > 1;
    let mut tables = Vec::new();
    for &n in &cfg.steps {
        let grid = ctx.grid(n)?;
        let mut t = ctx.new_table(
            &table_name("eps-sweep", format!("N{n}"), many),
            &["epsilon", "terminal_gap_mean", "terminal_gap_se"],
        );
        t.meta("N", n);
        t.meta("samples", cfg.outer);
        for &eps in cfg.epsilons.iter().filter(|&&e| e > 0.0) {
            let gaps = ctx.core(terminal_gaps(&spec, grid, eps, cfg.outer, cfg.seed))?;
            let e = Estimate::of_mean(&gaps);
            t.push(vec![eps.into(), e.value.into(), e.std_error.into()]);
        }
        tables.push(t);
    }
    Ok(tables)
}

/// Brownian driver: limiting scheme versus the averaged equation with
/// `(g²-bar)^{1/2}`, in law and in probability, on coupled paths.
fn brownian_compare(ctx: &Ctx) -> Result<Vec<ResultTable>> {
    let cfg = ctx.cfg;
    if cfg.driver != Driver::Brownian {
        return Err(ctx.setup("brownian-compare needs system.driver = brownian"));
    }
    let steps = ctx.nested_steps()?;
    let finest = *steps.last().unwrap();
    let fine = ctx.grid(finest)?;
    let spec = ctx.spec(0.0)?;
    let averaged = ctx.core(spec.averaged())?;

    struct Sample {
        limiting: Vec<f64>,
        reference: f64,
    }
    let samples = (0..cfg.outer as u64)
        .into_par_iter()
        .map(|i| -> apsde_core::Result<Sample> {
            let path = FbmPath::from_increments(
                fine,
                brownian_increments(&fine, &mut substream(cfg.seed, role::BROWNIAN, i)),
            )?;
            let gammas = GaussianSeq::sample(finest, &mut substream(cfg.seed, role::GAMMA, i));
            let reference = terminal_state(
                &spec,
                path.increments(),
                &[],
                fine.dt(),
                SchemeKind::BrownianAveraged,
                Some(&averaged),
            )?;
            let limiting = steps
                .iter()
                .map(|&n| {
                    let f = finest / n;
                    let (p, g) = if f == 1 {
                        (path.clone(), gammas.clone())
                    } else {
                        (path.coarsen(f)?, gammas.coarsen(f)?)
                    };
                    terminal_state(
                        &spec,
                        p.increments(),
                        g.as_slice(),
                        p.grid().dt(),
                        SchemeKind::BrownianLimiting,
                        None,
                    )
                })
                .collect::<apsde_core::Result<_>>()?;
            Ok(Sample {
                limiting,
                reference,
            })
        })
        .collect::<apsde_core::Result<Vec<_>>>();
    let samples = ctx.core(samples)?;
    let references: Vec<f64> = samples.iter().map(|s| s.reference).collect();

    // For x-independent g the averaged solution is exactly N(x0, (g²-bar)·T).
    let closed_form = averaged.constant().map(|c| c * c * cfg.horizon);

    let mut law = ctx.new_table(
        "brownian-compare",
        &[
            "dt",
            "var_limiting",
            "var_limiting_se",
            "var_target",
            "weak_error",
            "weak_error_se",
            "ks_statistic",
            "ks_pvalue",
        ],
    );
    law.meta("phi", cfg.phi.name());
    law.meta("samples", cfg.outer);
    law.meta(
        "target",
        if closed_form.is_some() {
            "closed_form"
        } else {
            "ensemble"
        },
    );
    let mut exceed = ctx.new_table(
        "brownian-compare-exceed",
        &["dt", "eta", "prob_exceed", "prob_exceed_se"],
    );
    exceed.meta("samples", cfg.outer);

    let ref_var = Estimate::of_variance(&references);
    for (level, &n) in steps.iter().enumerate() {
        let dt = cfg.horizon / n as f64;
        let xs: Vec<f64> = samples.iter().map(|s| s.limiting[level]).collect();
        let var = Estimate::of_variance(&xs);
        let (target, weak, ks) = match closed_form {
            Some(v) => (
                v,
                ctx.core(weak_error(
                    &xs,
                    WeakReference::Normal {
                        mean: cfg.x0,
                        var: v,
                    },
                    cfg.phi,
                ))?,
                ks_one_sample(&xs, |x| normal_cdf(x, cfg.x0, v)),
            ),
            None => (
                ref_var.value,
                ctx.core(weak_error(
                    &xs,
                    WeakReference::Ensemble(&references),
                    cfg.phi,
                ))?,
                ks_two_sample(&xs, &references),
            ),
        };
        law.push(vec![
            Cell::Real(dt),
            var.value.into(),
            var.std_error.into(),
            target.into(),
            weak.value.into(),
            weak.std_error.into(),
            ks.statistic.into(),
            ks.p_value.into(),
        ]);
        let pairs: Vec<(f64, f64)> = xs.iter().copied().zip(references.iter().copied()).collect();
        for &eta in &cfg.etas {
            let p = ctx.core(prob_exceed(&pairs, eta))?;
            exceed.push(vec![
                dt.into(),
                eta.into(),
                p.value.into(),
                p.std_error.into(),
            ]);
        }
    }
    Ok(vec![law, exceed])
}

/// `sup_x |η_{n,N}(x)|` and `sup_x |ζ_{n,N}(x)|` for every base index `n`,
/// on one fBm path restricted to each grid.
fn variation_diag(ctx: &Ctx) -> Result<Vec<ResultTable>> {
    let cfg = ctx.cfg;
    let steps = ctx.nested_steps()?;
    let finest = *steps.last().unwrap();
    let fine = ctx.grid(finest)?;
    let spec = ctx.spec(0.0)?;
    let gbar = ctx.core(spec.averaged())?;
    let sampler = ctx.sampler(fine)?;
    let path = ctx.driver_path(sampler.as_ref(), fine, 0)?;
    let xs: Vec<f64> = if cfg.x_points == 1 {
        vec![cfg.x_min]
    } else {
        (0..cfg.x_points)
            .map(|i| cfg.x_min + (cfg.x_max - cfg.x_min) * i as f64 / (cfg.x_points - 1) as f64)
            .collect()
    };

    let mut t = ctx.new_table("variation-diag", &["dt", "n", "sup_eta", "sup_zeta"]);
    t.meta("x_min", cfg.x_min);
    t.meta("x_max", cfg.x_max);
    t.meta("x_points", cfg.x_points);
    t.meta("fd_step", cfg.fd_step);
    for &n in &steps {
        let coarse = ctx.core(path.coarsen(finest / n))?;
        let sups = (0..=n)
            .into_par_iter()
            .map(|base| {
                let mut se: f64 = 0.0;
                let mut sz: f64 = 0.0;
                for &x in &xs {
                    let v = variation_recursion(&gbar, &coarse, base, x, cfg.fd_step)?;
                    se = se.max(v.eta_terminal().abs());
                    sz = sz.max(v.zeta_terminal().abs());
                }
                Ok((se, sz))
            })
            .collect::<apsde_core::Result<Vec<_>>>();
        let sups = ctx.core(sups)?;
        let dt = cfg.horizon / n as f64;
        for (base, (se, sz)) in sups.into_iter().enumerate() {
            t.push(vec![dt.into(), base.into(), se.into(), sz.into()]);
        }
    }
    Ok(vec![t])
}

fn estimator_name(e: InnerEstimator) -> &'static str {
    match e {
        InnerEstimator::Plain => "plain",
        InnerEstimator::ControlVariate => "control_variate",
    }
}

/// Column names per experiment, in output order.
pub fn schema(kind: ExperimentKind) -> Vec<(&'static str, &'static [&'static str])> {
    match kind {
        ExperimentKind::Simulate => vec![(
            "simulate",
            &["n", "t", "beta", "m", "X_ap", "X_limiting", "X_averaged"],
        )],
        ExperimentKind::RateFit => vec![("rate-fit", &["dt", "error", "std_error"])],
        ExperimentKind::ApDiagram => vec![(
            "ap-diagram",
            &["epsilon", "dt", "error", "std_error", "order_tag"],
        )],
        ExperimentKind::EpsSweep => vec![(
            "eps-sweep",
            &["epsilon", "terminal_gap_mean", "terminal_gap_se"],
        )],
        ExperimentKind::BrownianCompare => vec![
            (
                "brownian-compare",
                &[
                    "dt",
                    "var_limiting",
                    "var_limiting_se",
                    "var_target",
                    "weak_error",
                    "weak_error_se",
                    "ks_statistic",
                    "ks_pvalue",
                ],
            ),
            (
                "brownian-compare-exceed",
                &["dt", "eta", "prob_exceed", "prob_exceed_se"],
            ),
        ],
        ExperimentKind::VariationDiag => {
            vec![("variation-diag", &["dt", "n", "sup_eta", "sup_zeta"])]
        }
    }
}
