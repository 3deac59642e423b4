//! Stochastic appliance consumption: outlier filtering, Gaussian KDE
//! smoothed CDFs and inverse-transform sampling of hourly average draws.

use rand::Rng;

use crate::error::{Error, Result};

/// Number of points on the CDF grid.
pub const GRID_POINTS: usize = 512;

/// Raw hourly-average power readings for one appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceSamples {
    pub appliance_name: String,
    pub samples: Vec<f64>,
}

impl ApplianceSamples {
    pub fn new(appliance_name: impl Into<String>, samples: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = samples.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::NegativeSample(bad));
        }
        Ok(ApplianceSamples {
            appliance_name: appliance_name.into(),
            samples,
        })
    }

    pub fn mean(&self) -> f64 {
        mean(&self.samples)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Drops readings above `mean + 3 * stdev`. Only the upper tail is cut so
/// legitimate zero readings survive.
pub fn filter_outliers(samples: &ApplianceSamples) -> Result<ApplianceSamples> {
    if samples.samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let threshold = mean(&samples.samples) + 3.0 * population_std(&samples.samples);
    let kept: Vec<f64> = samples
        .samples
        .iter()
        .copied()
        .filter(|&w| w <= threshold)
        .collect();
    if kept.is_empty() {
        return Ok(samples.clone());
    }
    Ok(ApplianceSamples {
        appliance_name: samples.appliance_name.clone(),
        samples: kept,
    })
}

/// Silverman's rule of thumb, `0.9 * min(sd, IQR/1.34) * n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return 0.0;
    }
    let m = mean(samples);
    let sd = (samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => 0.0,
    };
    0.9 * spread * n.powf(-0.2)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// KDE-smoothed CDF stored as a dense `(x, F(x))` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    xs: Vec<f64>,
    fs: Vec<f64>,
    bandwidth: f64,
}

impl EmpiricalCdf {
    pub fn support_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn support_max(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn grid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.fs.iter().copied())
    }

    /// `F(x)` by linear interpolation on the grid.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.support_min() {
            return 0.0;
        }
        if x >= self.support_max() {
            return 1.0;
        }
        let i = self.xs.partition_point(|&g| g < x);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let (f0, f1) = (self.fs[i - 1], self.fs[i]);
        f0 + (f1 - f0) * (x - x0) / (x1 - x0)
    }

    /// Generalized inverse of the CDF at `u`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        sample_inverse(self, u)
    }
}

/// Fits a Gaussian-kernel KDE and integrates it to a CDF on
/// [`GRID_POINTS`] points over `[max(0, min - 3h), max + 3h]`. Mass below
/// 0 W (and beyond the grid) is dropped and the CDF renormalized.
pub fn fit_cdf(samples: &ApplianceSamples, bandwidth: Option<f64>) -> Result<EmpiricalCdf> {
    let data = &samples.samples;
    if data.is_empty() {
        return Err(Error::NoSamples);
    }
    let h = match bandwidth {
        Some(h) if !(h > 0.0) || !h.is_finite() => return Err(Error::InvalidBandwidth(h)),
        Some(h) => h,
        None => {
            let h = silverman_bandwidth(data);
            if h > 0.0 {
                h
            } else {
                // degenerate sample: a narrow step at the common value
                (0.01 * mean(data).abs()).max(1e-3)
            }
        }
    };

    let min = data.iter().copied().fold(f64::INFINITY, f64::min);
    let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = (min - 3.0 * h).max(0.0);
    let hi = max + 3.0 * h;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;

    let raw_cdf = |x: f64| -> f64 {
        data.iter().map(|&xi| std_normal_cdf((x - xi) / h)).sum::<f64>() / data.len() as f64
    };

    let xs: Vec<f64> = (0..GRID_POINTS)
        .map(|i| if i == GRID_POINTS - 1 { hi } else { lo + step * i as f64 })
        .collect();
    let raw: Vec<f64> = xs.iter().map(|&x| raw_cdf(x)).collect();
    let (f_lo, f_hi) = (raw[0], raw[GRID_POINTS - 1]);
    let mass = f_hi - f_lo;
    let mut fs: Vec<f64> = raw.iter().map(|&f| ((f - f_lo) / mass).clamp(0.0, 1.0)).collect();
    // rounding can break monotonicity by an ulp
    for i in 1..fs.len() {
        if fs[i] < fs[i - 1] {
            fs[i] = fs[i - 1];
        }
    }
    fs[0] = 0.0;
    fs[GRID_POINTS - 1] = 1.0;

    Ok(EmpiricalCdf { xs, fs, bandwidth: h })
}

/// Smallest grid point whose CDF reaches `u`, linearly interpolated against
/// the previous grid point.
pub fn sample_inverse(cdf: &EmpiricalCdf, u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::InvalidProbability(u));
    }
    let i = cdf.fs.partition_point(|&f| f < u);
    if i == 0 {
        return Ok(cdf.xs[0]);
    }
    let (x0, x1) = (cdf.xs[i - 1], cdf.xs[i]);
    let (f0, f1) = (cdf.fs[i - 1], cdf.fs[i]);
    Ok(x0 + (x1 - x0) * (u - f0) / (f1 - f0))
}

/// One inverse-transform draw: the appliance's average draw for an hour.
pub fn hourly_draw<R: Rng + ?Sized>(cdf: &EmpiricalCdf, rng: &mut R) -> Result<f64> {
    let u: f64 = rng.random();
    sample_inverse(cdf, u)
}

/// A fitted appliance ready for simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceModel {
    pub name: String,
    pub cdf: EmpiricalCdf,
    /// Rated draw, the 95th percentile of the fitted distribution.
    pub rated: f64,
    /// Mean of the filtered source samples.
    pub source_mean: f64,
}

impl ApplianceModel {
    pub fn fit(samples: &ApplianceSamples, bandwidth: Option<f64>) -> Result<Self> {
        let filtered = filter_outliers(samples)?;
        let cdf = fit_cdf(&filtered, bandwidth)?;
        let rated = sample_inverse(&cdf, 0.95)?;
        Ok(ApplianceModel {
            name: samples.appliance_name.clone(),
            source_mean: filtered.mean(),
            cdf,
            rated,
        })
    }
}
