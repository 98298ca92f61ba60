//! Acceptance suite. Run with
//!
//! ```text
//! cargo test --release -p apsde-cli --test acceptance -- --nocapture
//! ```
//!
//! Every criterion prints one `PASS`/`FAIL` line; the test fails if any
//! criterion fails.

use std::time::{Duration, Instant};

use apsde_cli::{parse_config, run_experiment, terminal_gaps, ExperimentKind, ResultTable};
use apsde_core::averaging::{averaged_g, averaged_g2_sqrt, mc_average};
use apsde_core::fbm::{fbm_covariance, CirculantSampler, HurstIndex, TimeGrid};
use apsde_core::noise::{ou_marginal, OuParams, OuStepper};
use apsde_core::rng::{role, substream};
use apsde_core::schemes::{terminal_state, SchemeKind, SystemSpec};
use apsde_core::stats::{
    decreasing_fraction, rate_fit, run_nested, Case, Estimate, NestedPlan, Reference, TestFunction,
};
use apsde_core::{CoeffExpr, GaussianSeq};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn expr(s: &str) -> CoeffExpr {
    CoeffExpr::parse(s).unwrap()
}

fn table<'a>(tables: &'a [ResultTable], name: &str) -> &'a ResultTable {
    tables.iter().find(|t| t.name == name).unwrap()
}

fn fbm_exactness() -> Outcome {
    let idx = [16, 48, 64, 96, 128];
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for h in [0.6, 0.75, 0.9] {
        let hurst = HurstIndex::new(h).unwrap();
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let sampler = CirculantSampler::new(grid, hurst).unwrap();
        let samples: Vec<Vec<f64>> = (0..10_000u64)
            .into_par_iter()
            .flat_map_iter(|i| {
                let (a, b) = sampler.sample_pair(&mut substream(100, role::FBM, i));
                [a, b].map(|p| idx.iter().map(|&k| p.values()[k]).collect::<Vec<_>>())
            })
            .collect();
        for i in 0..idx.len() {
            for j in i..idx.len() {
                let a: Vec<f64> = samples.iter().map(|s| s[i]).collect();
                let b: Vec<f64> = samples.iter().map(|s| s[j]).collect();
                let e = Estimate::of_covariance(&a, &b);
                let target = fbm_covariance(grid.t(idx[i]), grid.t(idx[j]), hurst).unwrap();
                let z = (e.value - target).abs() / e.std_error;
                worst = worst.max(z);
                pass &= z <= 4.0;
            }
        }
    }
    outcome(
        pass,
        format!("worst |Δcov|/SE = {worst:.2} over 3 H × 15 pairs (limit 4)"),
    )
}

fn ou_exactness() -> Outcome {
    let params = OuParams::new(0.1, 1.0).unwrap();
    let dt = 0.05;
    let stepper = OuStepper::new(params.epsilon, dt);
    let checkpoints = [1usize, 5, 20];
    let chains: Vec<[f64; 3]> = (0..20_000u64)
        .map(|i| {
            let mut rng = substream(200, role::GAMMA, i);
            let mut m = params.m0;
            let mut out = [0.0; 3];
            for n in 1..=20 {
                m = stepper.step(m, rng.sample(StandardNormal));
                if let Some(slot) = checkpoints.iter().position(|&c| c == n) {
                    out[slot] = m;
                }
            }
            out
        })
        .collect();
    let mut worst: f64 = 0.0;
    for (slot, &n) in checkpoints.iter().enumerate() {
        let xs: Vec<f64> = chains.iter().map(|c| c[slot]).collect();
        let (mean, var) = ou_marginal(&params, n as f64 * dt).unwrap();
        let m = Estimate::of_mean(&xs);
        let v = Estimate::of_variance(&xs);
        worst = worst
            .max((m.value - mean).abs() / m.std_error)
            .max((v.value - var).abs() / v.std_error);
    }
    outcome(
        worst <= 4.0,
        format!("worst deviation {worst:.2} SE (limit 4)"),
    )
}

fn averaging_oracles() -> Outcome {
    let g = expr("cos(m)");
    let mean = averaged_g(&g, 0.0, 40).unwrap();
    let rms = averaged_g2_sqrt(&g, 0.0, 40).unwrap();
    let e_mean = (mean - (-0.5f64).exp()).abs();
    let e_rms = (rms - ((1.0 + (-2.0f64).exp()) / 2.0).sqrt()).abs();
    let (mc1, se1) = mc_average(
        &g,
        0.0,
        1,
        100_000,
        &mut substream(300, role::QUADRATURE_MC, 0),
    )
    .unwrap();
    let (mc2, se2) = mc_average(
        &g,
        0.0,
        2,
        100_000,
        &mut substream(300, role::QUADRATURE_MC, 1),
    )
    .unwrap();
    let z1 = (mc1 - mean).abs() / se1;
    let z2 = (mc2 - rms * rms).abs() / se2;
    outcome(
        e_mean <= 1e-10 && e_rms <= 1e-10 && z1 <= 4.0 && z2 <= 4.0,
        format!("quadrature errors {e_mean:.1e}, {e_rms:.1e} (limit 1e-10); MC deviations {z1:.2}, {z2:.2} SE (limit 4)"),
    )
}

fn discrete_ap_limit() -> Outcome {
    let spec = SystemSpec::fractional(expr("tanh(x)*cos(m)+sin(x)"), 0.75, 0.0, 0.5).unwrap();
    let grid = TimeGrid::new(1.0, 128).unwrap();
    let gaps = terminal_gaps(&spec, grid, 1e-6, 100, 400).unwrap();
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    outcome(
        worst <= 1e-3,
        format!("max_seeds |X^ε − X^0| = {worst:.3e} at ε = 1e-6 (limit 1e-3)"),
    )
}

fn rate_slope(h: f64, seed: u64) -> f64 {
    let spec = SystemSpec::fractional(expr("cos(m)"), h, 0.0, 0.0).unwrap();
    let steps = [16usize, 32, 64, 128, 256, 512];
    let fine = TimeGrid::new(1.0, 512).unwrap();
    let plan = NestedPlan {
        fine_grid: fine,
        cases: steps
            .iter()
            .map(|&n| Case {
                spec: spec.clone(),
                kind: SchemeKind::Limiting,
                coarsen: 512 / n,
            })
            .collect(),
        reference: Reference::SameGrid,
        outer: 200,
        inner: 500,
        seed,
        estimator: Default::default(),
    };
    let out = run_nested(&plan, TestFunction::Tanh).unwrap();
    let dts: Vec<f64> = steps.iter().map(|&n| 1.0 / n as f64).collect();
    let errors: Vec<f64> = out.criteria.iter().map(|e| e.value).collect();
    rate_fit(&dts, &errors).unwrap().slope
}

fn rate_2h_minus_1() -> Outcome {
    let start = Instant::now();
    let s75 = rate_slope(0.75, 500);
    let s90 = rate_slope(0.9, 501);
    let elapsed = start.elapsed();
    outcome(
        (0.35..=0.65).contains(&s75) && (0.6..=1.0).contains(&s90) && elapsed <= Duration::from_secs(600),
        format!("slope {s75:.3} at H=0.75 (in [0.35,0.65]), {s90:.3} at H=0.9 (in [0.6,1.0]); {elapsed:.1?} (limit 10 min)"),
    )
}

const AP_DIAGRAM: &str = "
[system]
g = cos(m)+m^2
h = 0.75
epsilon = 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125
[grid]
T = 1
N = 16, 32, 64, 128, 256, 512
[mc]
outer = 200
inner = 500
seed = 600
";

fn commuting_diagram() -> Outcome {
    let cfg = parse_config(AP_DIAGRAM).unwrap();
    let tables = run_experiment(&cfg, ExperimentKind::ApDiagram).unwrap();
    let t = table(&tables, "ap-diagram");
    let tag = t.columns.iter().position(|c| c == "order_tag").unwrap();
    let err = t.columns.iter().position(|c| c == "error").unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for name in ["eps_first", "dt_first"] {
        let curve: Vec<f64> = t
            .rows
            .iter()
            .filter(|r| r[tag].to_string() == name)
            .map(|r| r[err].as_f64().unwrap())
            .collect();
        let last = *curve.last().unwrap();
        let frac = decreasing_fraction(&curve);
        pass &= last < 0.05 && frac >= 0.8;
        detail.push(format!(
            "{name}: final {last:.4} (< 0.05), decreasing {:.0}% (≥ 80%)",
            100.0 * frac
        ));
    }
    outcome(pass, detail.join("; "))
}

const BROWNIAN: &str = "
[system]
g = cos(m)
driver = brownian
[grid]
T = 1
N = 16, 32, 64, 128, 256
[experiment]
eta = 0.25
[mc]
outer = 10000
seed = 700
";

fn brownian_contrast() -> Outcome {
    let cfg = parse_config(BROWNIAN).unwrap();
    let tables = run_experiment(&cfg, ExperimentKind::BrownianCompare).unwrap();
    let law = table(&tables, "brownian-compare");
    let dt = law.column("dt").unwrap();
    let row = dt.iter().position(|&d| d == 1.0 / 256.0).unwrap();
    let var = law.column("var_limiting").unwrap()[row];
    let se = law.column("var_limiting_se").unwrap()[row];
    let target = (1.0 + (-2.0f64).exp()) / 2.0;
    let z = (var - target).abs() / se;
    let p = law.column("ks_pvalue").unwrap()[row];
    let exceed = table(&tables, "brownian-compare-exceed");
    let min_p = exceed
        .column("prob_exceed")
        .unwrap()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    outcome(
        z <= 4.0 && p >= 0.01 && min_p >= 0.2,
        format!(
            "(a) Var = {var:.4} vs {target:.4}, {z:.2} SE (limit 4); (b) KS p = {p:.3} (≥ 0.01); (c) min P(|X−X̄|>0.25) = {min_p:.3} (≥ 0.2)"
        ),
    )
}

fn negative_control() -> Outcome {
    let spec = SystemSpec::fractional(expr("cos(m)+m^2"), 0.75, 0.0, 0.0).unwrap();
    let grid = TimeGrid::new(1.0, 256).unwrap();
    let sampler = CirculantSampler::new(grid, spec.hurst).unwrap();
    let gbar = spec.averaged().unwrap();
    let gaps: Vec<f64> = (0..2000u64)
        .into_par_iter()
        .map(|i| {
            let path = sampler.sample(&mut substream(800, role::FBM, i));
            let gammas = GaussianSeq::sample(256, &mut substream(800, role::GAMMA, i));
            let dt = grid.dt();
            let x = terminal_state(
                &spec,
                path.increments(),
                gammas.as_slice(),
                dt,
                SchemeKind::ImplicitNonAp,
                None,
            )
            .unwrap();
            let xbar = terminal_state(
                &spec,
                path.increments(),
                &[],
                dt,
                SchemeKind::Averaged,
                Some(&gbar),
            )
            .unwrap();
            (x - xbar).abs()
        })
        .collect();
    let mean = Estimate::of_mean(&gaps);
    let bound = 0.3 * (2.0 / std::f64::consts::PI).sqrt() * (-0.5f64).exp();
    outcome(
        mean.value >= bound,
        format!(
            "mean gap {:.4} ± {:.4} vs bound {bound:.4}",
            mean.value, mean.std_error
        ),
    )
}

const VARIATION: &str = "
[system]
g = tanh(x)*cos(m)+sin(x)
h = 0.75
x0 = 0.5
[grid]
T = 1
N = 32, 64, 128, 256, 512
[experiment]
x_points = 11
[mc]
seed = 900
";

fn variation_boundedness() -> Outcome {
    let cfg = parse_config(VARIATION).unwrap();
    let tables = run_experiment(&cfg, ExperimentKind::VariationDiag).unwrap();
    let t = table(&tables, "variation-diag");
    let dt = t.column("dt").unwrap();
    let eta = t.column("sup_eta").unwrap();
    let zeta = t.column("sup_zeta").unwrap();
    let mut levels: Vec<(f64, f64, f64)> = Vec::new();
    for i in 0..dt.len() {
        match levels.last_mut() {
            Some(l) if l.0 == dt[i] => {
                l.1 = l.1.max(eta[i]);
                l.2 = l.2.max(zeta[i]);
            }
            _ => levels.push((dt[i], eta[i], zeta[i])),
        }
    }
    levels.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut worst: f64 = 0.0;
    for w in levels.windows(2) {
        worst = worst.max(w[1].1 / w[0].1).max(w[1].2 / w[0].2);
    }
    outcome(
        levels.len() == 5 && worst <= 2.0,
        format!(
            "{} levels, worst growth ratio per halving {worst:.3} (limit 2)",
            levels.len()
        ),
    )
}

#[test]
fn acceptance() {
    type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        (
            "1 fBm exactness",
            Some(Duration::from_secs(60)),
            fbm_exactness,
        ),
        (
            "2 OU chain exactness",
            Some(Duration::from_secs(10)),
            ou_exactness,
        ),
        ("3 averaging oracles", None, averaging_oracles),
        ("4 discrete AP limit", None, discrete_ap_limit),
        ("5 rate 2H-1", None, rate_2h_minus_1),
        ("6 commuting diagram", None, commuting_diagram),
        ("7 Brownian contrast", None, brownian_contrast),
        ("8 negative control", None, negative_control),
        ("9 variation boundedness", None, variation_boundedness),
    ];
    let mut failed = Vec::new();
    println!();
    for (name, limit, run) in criteria {
        let start = Instant::now();
        let mut o = run();
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                o.pass = false;
                o.detail
                    .push_str(&format!("; runtime {elapsed:.1?} exceeds {limit:?}"));
            }
        }
        println!(
            "[{}] criterion {name}: {} ({elapsed:.1?})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
