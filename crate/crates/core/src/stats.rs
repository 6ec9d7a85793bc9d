//! Sample summaries and the goodness-of-fit tests used by the diagnostics.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for x in samples {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        let se = if n > 1 {
            (m2 / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean: if n == 0 { f64::NAN } else { mean },
            se,
            n,
        }
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(samples: &[f64], q: f64) -> Result<f64> {
    if samples.is_empty() || !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter("quantile needs samples and q in [0, 1]".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// A chi-square statistic, its degrees of freedom and upper-tail p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquare {
    fn new(statistic: f64, dof: usize) -> Result<Self> {
        if dof == 0 {
            return Err(Error::InvalidParameter("chi-square test needs at least one degree of freedom".into()));
        }
        let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Self {
            statistic,
            dof,
            p_value: dist.sf(statistic),
        })
    }

    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

/// Pearson goodness of fit of `observed` against cell probabilities `expected`.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<ChiSquare> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::InvalidParameter("need matching cell lists with at least two cells".into()));
    }
    let total: u64 = observed.iter().sum();
    let psum: f64 = expected.iter().sum();
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(expected) {
        let e = total as f64 * p / psum;
        if !(e > 0.0) {
            return Err(Error::InvalidParameter("expected cell counts must be positive".into()));
        }
        stat += (o as f64 - e).powi(2) / e;
    }
    ChiSquare::new(stat, observed.len() - 1)
}

pub fn chi_square_uniform(observed: &[u64]) -> Result<ChiSquare> {
    chi_square_gof(observed, &vec![1.0; observed.len()])
}

/// Pearson independence test on a contingency table; rows or columns that
/// are entirely empty are dropped.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<ChiSquare> {
    let cols = table.first().map_or(0, Vec::len);
    if table.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidParameter("contingency table rows differ in length".into()));
    }
    let row_tot: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_tot: Vec<u64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let total: u64 = row_tot.iter().sum();
    let rows: Vec<usize> = (0..table.len()).filter(|&i| row_tot[i] > 0).collect();
    let cs: Vec<usize> = (0..cols).filter(|&j| col_tot[j] > 0).collect();
    if rows.len() < 2 || cs.len() < 2 {
        return Err(Error::InvalidParameter("independence test needs two nonempty rows and columns".into()));
    }
    let mut stat = 0.0;
    for &i in &rows {
        for &j in &cs {
            let e = row_tot[i] as f64 * col_tot[j] as f64 / total as f64;
            stat += (table[i][j] as f64 - e).powi(2) / e;
        }
    }
    ChiSquare::new(stat, (rows.len() - 1) * (cs.len() - 1))
}

/// One-sided binomial slack: `k/n ≤ p + z √(p(1−p)/n)`.
pub fn within_binomial_slack(k: u64, n: u64, p: f64, z: f64) -> bool {
    let n = n as f64;
    let p = p.clamp(0.0, 1.0);
    k as f64 / n <= p + z * (p * (1.0 - p) / n).sqrt()
}
