//! Normality diagnostics for studentized errors.

use crate::error::{Error, Result};
use crate::special::{chi2_quantile, ks_pvalue, normal_cdf};

pub const COVERAGE_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];
pub const MIN_RECORDS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalityReport {
    pub ks_stat: Vec<f64>,
    pub ks_pvalue: Vec<f64>,
    /// Fraction of `|z|²` below the χ²_m quantile at each of [`COVERAGE_LEVELS`].
    pub coverage: [f64; 3],
}

/// One-sample KS statistic and p-value against N(0, 1).
pub fn ks_normal(xs: &[f64]) -> (f64, f64) {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in v.iter().enumerate() {
        let f = normal_cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    (d, ks_pvalue(d, n))
}

/// Two-sample KS statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    (d, ks_pvalue(d, na * nb / (na + nb)))
}

/// Per-coordinate KS tests and joint χ² coverage of `z` records.
pub fn normality_report(z: &[Vec<f64>]) -> Result<NormalityReport> {
    if z.len() < MIN_RECORDS {
        return Err(Error::TooFewRecords { n: z.len(), min: MIN_RECORDS });
    }
    let m = z[0].len();
    if m == 0 || z.iter().any(|r| r.len() != m) {
        return Err(Error::invalid("z", "records must share a nonzero dimension"));
    }
    let mut ks_stat = Vec::with_capacity(m);
    let mut ks_p = Vec::with_capacity(m);
    for i in 0..m {
        let col: Vec<f64> = z.iter().map(|r| r[i]).collect();
        let (d, p) = ks_normal(&col);
        ks_stat.push(d);
        ks_p.push(p);
    }
    let norms: Vec<f64> = z.iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let mut coverage = [0.0; 3];
    for (c, level) in coverage.iter_mut().zip(COVERAGE_LEVELS) {
        let q = chi2_quantile(level, m);
        *c = norms.iter().filter(|&&s| s <= q).count() as f64 / norms.len() as f64;
    }
    Ok(NormalityReport { ks_stat, ks_pvalue: ks_p, coverage })
}
