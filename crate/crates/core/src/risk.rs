//! Empirical quantiles, V@R and AV@R of the regulator's net cash flow.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confidence levels reported by default.
pub const STANDARD_LEVELS: [f64; 3] = [0.10, 0.05, 0.01];

/// Sign convention for the risk measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RiskConvention {
    /// Monetary risk: the cash needed to make the position acceptable.
    #[default]
    Standard,
    /// Raw quantile display: V@R is `q(λ)` and AV@R is the lower-tail mean, unsigned.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Var,
    Avar,
}

/// Equally weighted empirical law, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSample {
    sorted: Vec<f64>,
}

impl EmpiricalSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty sample".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("sample contains non-finite values".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalSample { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.len() as f64
    }

    /// Sample standard deviation (n − 1 denominator, 0 for a single point).
    pub fn std_dev(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let ss: f64 = self.sorted.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    /// `P(Y ≤ l)`.
    pub fn cdf(&self, level: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= level) as f64 / self.len() as f64
    }

    /// Index `k` of the order statistic with `k/n ≤ t < (k+1)/n`.
    fn upper_index(&self, t: f64) -> usize {
        let n = self.len();
        ((t * n as f64).floor() as usize).min(n - 1)
    }
}

fn check_level(t: f64, inclusive_one: bool) -> Result<()> {
    let ok = t > 0.0 && (t < 1.0 || (inclusive_one && t == 1.0));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("probability level {t} out of range")))
    }
}

/// Upper quantile `inf{l : P(Y ≤ l) > t}`, right-continuous in `t`.
pub fn upper_quantile(sample: &EmpiricalSample, t: f64) -> Result<f64> {
    check_level(t, false)?;
    Ok(sample.sorted[sample.upper_index(t)])
}

/// `∫_0^λ q(u) du` over the piecewise-constant empirical quantile function.
fn quantile_integral(sample: &EmpiricalSample, lambda: f64) -> f64 {
    let n = sample.len() as f64;
    let mut acc = 0.0;
    for (k, v) in sample.sorted.iter().enumerate() {
        let lo = k as f64 / n;
        if lo >= lambda {
            break;
        }
        let hi = ((k + 1) as f64 / n).min(lambda);
        acc += v * (hi - lo);
    }
    acc
}

/// Value at risk at level `λ ∈ (0, 1]`.
pub fn var(sample: &EmpiricalSample, lambda: f64, convention: RiskConvention) -> Result<f64> {
    check_level(lambda, true)?;
    let q = sample.sorted[sample.upper_index(lambda)];
    Ok(match convention {
        RiskConvention::Standard => -q,
        RiskConvention::Paper => q,
    })
}

/// Average value at risk at level `λ ∈ (0, 1]`.
pub fn avar(sample: &EmpiricalSample, lambda: f64, convention: RiskConvention) -> Result<f64> {
    check_level(lambda, true)?;
    let tail = quantile_integral(sample, lambda) / lambda;
    Ok(match convention {
        RiskConvention::Standard => -tail,
        RiskConvention::Paper => tail,
    })
}

pub fn risk(sample: &EmpiricalSample, measure: Measure, lambda: f64, convention: RiskConvention) -> Result<f64> {
    match measure {
        Measure::Var => var(sample, lambda, convention),
        Measure::Avar => avar(sample, lambda, convention),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub value: f64,
    pub acceptable: bool,
}

/// Applies a standard-convention measure to the nets; acceptable iff no outside funds are needed.
pub fn assess_self_financing(nets: &[f64], measure: Measure, lambda: f64) -> Result<Assessment> {
    let sample = EmpiricalSample::new(nets.to_vec())?;
    let value = risk(&sample, measure, lambda, RiskConvention::Standard)?;
    Ok(Assessment {
        value,
        acceptable: value <= 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub level: f64,
    pub cdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfBin {
    pub lower: f64,
    pub upper: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub cdf: Vec<CdfPoint>,
    pub pdf: Vec<PdfBin>,
}

/// Empirical CDF at the distinct support points and a density histogram over equal-width bins.
///
/// A degenerate sample gets one zero-width bin with unit mass.
pub fn empirical_cdf_pdf(sample: &EmpiricalSample, bins: usize) -> Result<DistributionTable> {
    if bins == 0 {
        return Err(Error::InvalidInput("bins must be at least 1".into()));
    }
    let n = sample.len();
    let mut cdf = Vec::new();
    for (k, v) in sample.sorted.iter().enumerate() {
        if k + 1 < n && sample.sorted[k + 1] == *v {
            continue;
        }
        cdf.push(CdfPoint {
            level: *v,
            cdf: (k + 1) as f64 / n as f64,
        });
    }

    let (lo, hi) = (sample.min(), sample.max());
    let width = (hi - lo) / bins as f64;
    let pdf = if width == 0.0 {
        vec![PdfBin {
            lower: lo,
            upper: hi,
            density: f64::INFINITY,
        }]
    } else {
        let mut counts = vec![0usize; bins];
        for v in &sample.sorted {
            let b = (((v - lo) / width).floor() as usize).min(bins - 1);
            counts[b] += 1;
        }
        counts
            .iter()
            .enumerate()
            .map(|(b, c)| PdfBin {
                lower: lo + b as f64 * width,
                upper: if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width },
                density: *c as f64 / (n as f64 * width),
            })
            .collect()
    };
    Ok(DistributionTable { cdf, pdf })
}

/// Both measures, both conventions, at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub var_standard: f64,
    pub avar_standard: f64,
    pub var_paper: f64,
    pub avar_paper: f64,
    pub var_acceptable: bool,
    pub avar_acceptable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    /// Keyed by the level formatted with two decimals.
    pub levels: BTreeMap<String, LevelReport>,
}

pub fn risk_report(sample: &EmpiricalSample, levels: &[f64]) -> Result<RiskReport> {
    let mut out = BTreeMap::new();
    for &l in levels {
        let var_standard = var(sample, l, RiskConvention::Standard)?;
        let avar_standard = avar(sample, l, RiskConvention::Standard)?;
        out.insert(
            format!("{l:.2}"),
            LevelReport {
                var_standard,
                avar_standard,
                var_paper: var(sample, l, RiskConvention::Paper)?,
                avar_paper: avar(sample, l, RiskConvention::Paper)?,
                var_acceptable: var_standard <= 0.0,
                avar_acceptable: avar_standard <= 0.0,
            },
        );
    }
    Ok(RiskReport {
        count: sample.len(),
        mean: sample.mean(),
        std_dev: sample.std_dev(),
        min: sample.min(),
        max: sample.max(),
        levels: out,
    })
}
