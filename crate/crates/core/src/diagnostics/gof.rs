//! The four residual tests: Kolmogorov-Smirnov against Exp(1), excess
//! dispersion, Ljung-Box Q and KPSS level stationarity.

use serde::{Deserialize, Serialize};

use super::special::{chi_square_sf, kolmogorov_sf, normal_sf};
use crate::error::{HawkesError, Result};

pub const KS_LEVEL: f64 = 0.01;
pub const ED_LEVEL: f64 = 0.01;
pub const LBQ_LEVEL: f64 = 0.01;
pub const KPSS_LEVEL: f64 = 0.05;

/// Level-stationarity KPSS critical values.
pub const KPSS_CRITICAL: [(f64, f64); 4] = [(0.10, 0.347), (0.05, 0.463), (0.025, 0.574), (0.01, 0.739)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "KS")]
    KolmogorovSmirnov,
    #[serde(rename = "ED")]
    ExcessDispersion,
    #[serde(rename = "LBQ")]
    LjungBox,
    #[serde(rename = "KPSS")]
    Kpss,
}

impl TestKind {
    pub const ALL: [TestKind; 4] = [Self::KolmogorovSmirnov, Self::ExcessDispersion, Self::LjungBox, Self::Kpss];

    pub fn code(self) -> &'static str {
        match self {
            Self::KolmogorovSmirnov => "KS",
            Self::ExcessDispersion => "ED",
            Self::LjungBox => "LBQ",
            Self::Kpss => "KPSS",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: TestKind,
    pub statistic: f64,
    /// Asymptotic p-value; `None` for KPSS, which is decided by critical value.
    pub p_value: Option<f64>,
    /// KPSS only: p-value interpolated linearly in the statistic between the
    /// tabulated critical values, clamped to `[0.01, 0.10]`.
    pub table_p_value: Option<f64>,
    pub level: f64,
    pub accept_h0: bool,
    pub n: usize,
    pub warnings: Vec<String>,
}

impl TestReport {
    /// p-value used in report tables: the asymptotic value, or the
    /// table-interpolated one for KPSS.
    pub fn reported_p(&self) -> Option<f64> {
        self.p_value.or(self.table_p_value)
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(HawkesError::domain(format!("significance level {level} outside (0, 1)")));
    }
    Ok(())
}

fn check_finite(sample: &[f64]) -> Result<()> {
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(HawkesError::domain("sample contains non-finite values"));
    }
    Ok(())
}

/// One-sample KS test against `F(x) = 1 - exp(-x)`.
pub fn ks_test(sample: &[f64], level: f64) -> Result<TestReport> {
    check_level(level)?;
    check_finite(sample)?;
    let n = sample.len();
    if n == 0 {
        return Err(HawkesError::Degenerate("KS test needs at least one observation".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = if x > 0.0 { -(-x).exp_m1() } else { 0.0 };
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let p = kolmogorov_sf(nf.sqrt() * d);
    let mut warnings = Vec::new();
    if n < 5 {
        warnings.push(format!("low power: n = {n} < 5"));
    }
    Ok(TestReport {
        test: TestKind::KolmogorovSmirnov,
        statistic: d,
        p_value: Some(p),
        table_p_value: None,
        level,
        accept_h0: p > level,
        n,
        warnings,
    })
}

/// Excess dispersion: `z = sqrt(n/8) (σ̂² - 1)` with `σ̂²` the mean squared
/// deviation from 1, two-sided against N(0, 1).
pub fn excess_dispersion_test(sample: &[f64], level: f64) -> Result<TestReport> {
    check_level(level)?;
    check_finite(sample)?;
    let n = sample.len();
    if n < 2 {
        return Err(HawkesError::Degenerate("excess dispersion test needs n >= 2".into()));
    }
    let nf = n as f64;
    let variance = sample.iter().map(|x| (x - 1.0) * (x - 1.0)).sum::<f64>() / nf;
    let z = (nf / 8.0).sqrt() * (variance - 1.0);
    let p = (2.0 * normal_sf(z.abs())).min(1.0);
    let mut warnings = Vec::new();
    if n < 30 {
        warnings.push(format!("asymptotic test used with n = {n} < 30"));
    }
    Ok(TestReport {
        test: TestKind::ExcessDispersion,
        statistic: z,
        p_value: Some(p),
        table_p_value: None,
        level,
        accept_h0: p > level,
        n,
        warnings,
    })
}

/// Default Ljung-Box lag count `min(20, ⌊n/4⌋)`, at least 1.
pub fn default_lags(n: usize) -> usize {
    (n / 4).clamp(1, 20)
}

/// Ljung-Box portmanteau test on the first `lags` autocorrelations.
pub fn ljung_box_test(sample: &[f64], lags: usize, level: f64) -> Result<TestReport> {
    check_level(level)?;
    check_finite(sample)?;
    let n = sample.len();
    if lags == 0 || lags >= n {
        return Err(HawkesError::domain(format!("Ljung-Box needs n > lags >= 1 (n = {n}, lags = {lags})")));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = sample.iter().map(|x| x - mean).collect();
    let denom: f64 = centered.iter().map(|x| x * x).sum();
    if !(denom > 0.0) {
        return Err(HawkesError::Degenerate("constant series: autocorrelations undefined".into()));
    }
    let q = nf
        * (nf + 2.0)
        * (1..=lags)
            .map(|k| {
                let rho = centered[k..].iter().zip(&centered).map(|(a, b)| a * b).sum::<f64>() / denom;
                rho * rho / (nf - k as f64)
            })
            .sum::<f64>();
    let p = chi_square_sf(q, lags as f64);
    Ok(TestReport {
        test: TestKind::LjungBox,
        statistic: q,
        p_value: Some(p),
        table_p_value: None,
        level,
        accept_h0: p > level,
        n,
        warnings: Vec::new(),
    })
}

/// KPSS bandwidth `⌊4 (n/100)^{1/4}⌋`.
pub fn kpss_bandwidth(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

pub fn kpss_critical_value(level: f64) -> Result<f64> {
    KPSS_CRITICAL
        .iter()
        .find(|(l, _)| (l - level).abs() < 1e-12)
        .map(|&(_, c)| c)
        .ok_or_else(|| HawkesError::domain(format!("no tabulated KPSS critical value for level {level}")))
}

/// Linear interpolation of the tail probability between tabulated points.
fn kpss_table_p(stat: f64) -> f64 {
    let (lo_p, lo_c) = KPSS_CRITICAL[0];
    let (hi_p, hi_c) = KPSS_CRITICAL[KPSS_CRITICAL.len() - 1];
    if stat <= lo_c {
        return lo_p;
    }
    if stat >= hi_c {
        return hi_p;
    }
    for w in KPSS_CRITICAL.windows(2) {
        let ((p0, c0), (p1, c1)) = (w[0], w[1]);
        if stat <= c1 {
            return p0 + (p1 - p0) * (stat - c0) / (c1 - c0);
        }
    }
    hi_p
}

/// KPSS level-stationarity test with a Bartlett-window long-run variance.
pub fn kpss_test(sample: &[f64], level: f64) -> Result<TestReport> {
    check_finite(sample)?;
    let critical = kpss_critical_value(level)?;
    let n = sample.len();
    if n < 3 {
        return Err(HawkesError::Degenerate("KPSS test needs n >= 3".into()));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let resid: Vec<f64> = sample.iter().map(|x| x - mean).collect();
    let bandwidth = kpss_bandwidth(n).min(n - 1);
    let autocov = |j: usize| resid[j..].iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() / nf;
    let mut long_run = autocov(0);
    for j in 1..=bandwidth {
        long_run += 2.0 * (1.0 - j as f64 / (bandwidth as f64 + 1.0)) * autocov(j);
    }
    if !(long_run > 0.0) {
        return Err(HawkesError::Degenerate("zero long-run variance".into()));
    }
    let mut partial = 0.0;
    let mut sum_sq = 0.0;
    for e in &resid {
        partial += e;
        sum_sq += partial * partial;
    }
    let stat = sum_sq / (nf * nf * long_run);
    let mut warnings = Vec::new();
    if n < 30 {
        warnings.push(format!("small sample for KPSS: n = {n} < 30"));
    } else if n == 30 {
        warnings.push("KPSS at minimum sample size n = 30".into());
    }
    Ok(TestReport {
        test: TestKind::Kpss,
        statistic: stat,
        p_value: None,
        table_p_value: Some(kpss_table_p(stat)),
        level,
        accept_h0: stat < critical,
        n,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exp_sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect()
    }

    #[test]
    fn ks_plugin_quantiles_accept() {
        let n = 100;
        let sample: Vec<f64> = (1..=n).map(|k| -(1.0 - k as f64 / (n + 1) as f64).ln()).collect();
        let report = ks_test(&sample, KS_LEVEL).unwrap();
        assert!(report.p_value.unwrap() > 0.99 && report.accept_h0);
    }

    #[test]
    fn ks_statistic_by_hand() {
        // F(ln 2) = 0.5, F(ln 4) = 0.75: D = max(0.5 - 0, 0.75 - 0.5, 1 - 0.75, ...) = 0.5
        let report = ks_test(&[std::f64::consts::LN_2, 4f64.ln()], KS_LEVEL).unwrap();
        assert!((report.statistic - 0.5).abs() < 1e-15);
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn ks_rejects_degenerate_and_uniform() {
        assert!(!ks_test(&[1.0; 50], KS_LEVEL).unwrap().accept_h0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let uniform: Vec<f64> = (0..1000).map(|_| rng.gen::<f64>()).collect();
        assert!(!ks_test(&uniform, KS_LEVEL).unwrap().accept_h0);
        assert!(ks_test(&[], KS_LEVEL).is_err());
    }

    #[test]
    fn ed_unit_variance_accepts() {
        // mean squared deviation from 1 is exactly 1
        let report = excess_dispersion_test(&[0.0, 2.0, 0.0, 2.0], ED_LEVEL).unwrap();
        assert_eq!(report.statistic, 0.0);
        assert!(report.accept_h0 && !report.warnings.is_empty());
    }

    #[test]
    fn ed_detects_scaled_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let scaled: Vec<f64> = exp_sample(&mut rng, 1000).into_iter().map(|x| 2.0 * x).collect();
        assert!(!excess_dispersion_test(&scaled, ED_LEVEL).unwrap().accept_h0);
    }

    #[test]
    fn lbq_detects_ar1() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = exp_sample(&mut rng, 2000);
        let mut x = vec![1.0];
        for e in &noise[1..] {
            let prev = *x.last().unwrap();
            x.push(0.5 * prev + 0.5 * e);
        }
        assert!(x.iter().all(|v| *v > 0.0));
        assert!(!ljung_box_test(&x, default_lags(x.len()), LBQ_LEVEL).unwrap().accept_h0);
    }

    #[test]
    fn lbq_errors() {
        assert!(matches!(ljung_box_test(&[2.0; 40], 5, LBQ_LEVEL), Err(HawkesError::Degenerate(_))));
        assert!(matches!(ljung_box_test(&[1.0, 2.0, 3.0], 3, LBQ_LEVEL), Err(HawkesError::Domain(_))));
        assert_eq!(default_lags(2000), 20);
        assert_eq!(default_lags(40), 10);
        assert_eq!(default_lags(3), 1);
    }

    #[test]
    fn lbq_statistic_by_hand() {
        let x = [1.0, 3.0, 2.0, 5.0, 4.0];
        // mean 3, centered [-2, 0, -1, 2, 1], denom 10, lag-1 products: 0 + 0 - 2 + 2 = 0
        // lag-2 products: 2 + 0 - 1 = 1 -> rho2 = 0.1
        let q = ljung_box_test(&x, 2, LBQ_LEVEL).unwrap().statistic;
        let expected = 5.0 * 7.0 * (0.0 / 4.0 + 0.01 / 3.0);
        assert!((q - expected).abs() < 1e-12);
    }

    #[test]
    fn kpss_trend_rejects() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trended: Vec<f64> = exp_sample(&mut rng, 2000).iter().enumerate().map(|(t, x)| x + t as f64 * 0.002).collect();
        assert!(!kpss_test(&trended, KPSS_LEVEL).unwrap().accept_h0);
    }

    #[test]
    fn kpss_boundary_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let report = kpss_test(&exp_sample(&mut rng, 30), KPSS_LEVEL).unwrap();
        assert!(!report.warnings.is_empty());
        assert!(report.p_value.is_none());
        assert!(matches!(kpss_test(&[1.0; 40], KPSS_LEVEL), Err(HawkesError::Degenerate(_))));
        assert!(kpss_test(&[1.0, 2.0, 3.0, 4.0], 0.07).is_err());
        assert_eq!(kpss_bandwidth(2000), 8);
        assert_eq!(kpss_bandwidth(100), 4);
    }

    #[test]
    fn kpss_table_interpolation() {
        assert_eq!(kpss_table_p(0.1), 0.10);
        assert_eq!(kpss_table_p(5.0), 0.01);
        assert!((kpss_table_p(0.463) - 0.05).abs() < 1e-15);
        assert!((kpss_table_p(0.405) - 0.075).abs() < 1e-12);
    }
}
