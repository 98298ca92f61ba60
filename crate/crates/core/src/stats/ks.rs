//! Kolmogorov-Smirnov tests with asymptotic p-values.

use statrs::function::erf::erfc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl KsResult {
    pub fn rejects_at(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// `Q_KS(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// P-value with Stephens' small-sample correction for effective size `n`.
fn p_value(d: f64, n_eff: f64) -> f64 {
    let en = n_eff.sqrt();
    kolmogorov_survival((en + 0.12 + 0.11 / en) * d)
}

/// One-sample test of `sample` against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    KsResult {
        statistic: d,
        p_value: p_value(d, n),
    }
}

/// Two-sample test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let v = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= v {
            i += 1;
        }
        while j < xb.len() && xb[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    KsResult {
        statistic: d,
        p_value: p_value(d, na * nb / (na + nb)),
    }
}

/// CDF of `N(mean, var)`.
pub fn normal_cdf(x: f64, mean: f64, var: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (2.0 * var).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn survival_reference_values() {
        // Q_KS(1.36) ≈ 0.0494, Q_KS(1.63) ≈ 0.0098
        assert!((kolmogorov_survival(1.36) - 0.049_4).abs() < 2e-4);
        assert!((kolmogorov_survival(1.628) - 0.01).abs() < 2e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        assert!(kolmogorov_survival(5.0) < 1e-20);
    }

    #[test]
    fn normal_sample_passes() {
        let mut rng = substream(1, "ks", 0);
        let xs: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        let r = ks_one_sample(&xs, |x| normal_cdf(x, 0.0, 1.0));
        assert!(!r.rejects_at(0.01), "{r:?}");
        let shifted = ks_one_sample(&xs, |x| normal_cdf(x, 0.2, 1.0));
        assert!(shifted.rejects_at(0.01));
    }

    #[test]
    fn two_sample_behaviour() {
        let mut rng = substream(2, "ks", 0);
        let a: Vec<f64> = (0..3000).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..3000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(!ks_two_sample(&a, &b).rejects_at(0.01));
        let c: Vec<f64> = b.iter().map(|v| 1.3 * v).collect();
        assert!(ks_two_sample(&a, &c).rejects_at(0.01));
        assert_eq!(ks_two_sample(&a, &a).statistic, 0.0);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0, 0.0, 1.0) - 0.5).abs() < 1e-15);
        let v = normal_cdf(1.96, 0.0, 1.0);
        assert!((v - 0.975_002_104_851_779_6).abs() < 2e-12, "{v:e}");
        assert!((normal_cdf(3.0, 1.0, 4.0) - normal_cdf(1.0, 0.0, 1.0)).abs() < 1e-15);
    }
}
