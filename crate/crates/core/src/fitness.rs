//! χ² objective and goodness-of-fit metrics.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ga::{Chromosome, Objective};
use crate::model::{evaluate_shifted, shift_k};
use crate::paths::PathSet;
use crate::spectra::{FTConfig, KGrid, KSpectrum, KToR, RSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitSpace {
    #[default]
    K,
    R,
    KR,
}

impl FromStr for FitSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "k" => Ok(FitSpace::K),
            "r" => Ok(FitSpace::R),
            "k+r" | "kr" => Ok(FitSpace::KR),
            other => Err(Error::fitness(format!("unknown fit space '{other}'"))),
        }
    }
}

impl FitSpace {
    fn uses_k(self) -> bool {
        matches!(self, FitSpace::K | FitSpace::KR)
    }

    fn uses_r(self) -> bool {
        matches!(self, FitSpace::R | FitSpace::KR)
    }
}

/// Number of independent points in the χ² prefactor `N_indep / N`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum IndepPoints {
    /// `N_indep = N`: stepwise-collected data.
    #[default]
    All,
    /// `N_indep = ratio·N`, `0 < ratio ≤ 1`.
    Ratio(f64),
    Count(usize),
}

impl IndepPoints {
    fn prefactor(self, n: usize) -> Result<f64> {
        match self {
            IndepPoints::All => Ok(1.0),
            IndepPoints::Ratio(r) if r > 0.0 && r <= 1.0 => Ok(r),
            IndepPoints::Ratio(r) => Err(Error::fitness(format!(
                "independent-point ratio must be in (0, 1], got {r}"
            ))),
            IndepPoints::Count(c) if c > 0 && c <= n => Ok(c as f64 / n as f64),
            IndepPoints::Count(c) => Err(Error::fitness(format!(
                "n_indep = {c} must be in 1..={n}"
            ))),
        }
    }
}

/// Per-point measurement uncertainty ε.
#[derive(Debug, Clone, PartialEq)]
pub enum Epsilon {
    Scalar(f64),
    PerPoint(Vec<f64>),
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::Scalar(1.0)
    }
}

impl Epsilon {
    fn check(&self, n: usize) -> Result<()> {
        match self {
            Epsilon::Scalar(e) if *e > 0.0 && e.is_finite() => Ok(()),
            Epsilon::Scalar(e) => Err(Error::fitness(format!("epsilon must be > 0, got {e}"))),
            Epsilon::PerPoint(v) if v.len() != n => Err(Error::fitness(format!(
                "epsilon has {} values for {n} points",
                v.len()
            ))),
            Epsilon::PerPoint(v) if v.iter().all(|e| *e > 0.0 && e.is_finite()) => Ok(()),
            Epsilon::PerPoint(_) => Err(Error::fitness("epsilon must be > 0 everywhere")),
        }
    }

    #[inline]
    fn at(&self, i: usize) -> f64 {
        match self {
            Epsilon::Scalar(e) => *e,
            Epsilon::PerPoint(v) => v[i],
        }
    }
}

/// Scalar ε from the spread of k³χ(k) over the top 15% of the k-range.
pub fn estimate_epsilon(spec: &KSpectrum) -> Result<f64> {
    let g = spec.grid();
    let cut = g.k_max() - 0.15 * (g.k_max() - g.k_min());
    let tail: Vec<f64> = spec
        .weighted(3)
        .into_iter()
        .enumerate()
        .filter(|(i, _)| g.k(*i) >= cut)
        .map(|(_, v)| v)
        .collect();
    if tail.len() < 2 {
        return Err(Error::fitness("too few points in the top 15% of the k-range"));
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (tail.len() - 1) as f64;
    let eps = var.sqrt();
    if eps > 0.0 {
        Ok(eps)
    } else {
        Err(Error::fitness("k³χ(k) is constant over the tail; cannot estimate epsilon"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessConfig {
    pub space: FitSpace,
    pub n_indep: IndepPoints,
    pub epsilon: Epsilon,
    pub k_weight: u32,
    /// Fit range and transform settings; `ft.k_range` bounds the k-space comparison too.
    pub ft: FTConfig,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        Self {
            space: FitSpace::K,
            n_indep: IndepPoints::All,
            epsilon: Epsilon::default(),
            k_weight: 2,
            ft: FTConfig::default(),
        }
    }
}

/// `(N_indep/N)·Σ (model − data)² / ε²` over already-restricted arrays.
pub fn chi2(model: &[f64], data: &[f64], config: &FitnessConfig) -> Result<f64> {
    chi2_with(model, data, &config.epsilon, config.n_indep)
}

fn chi2_with(model: &[f64], data: &[f64], eps: &Epsilon, n_indep: IndepPoints) -> Result<f64> {
    if model.len() != data.len() {
        return Err(Error::fitness(format!(
            "model has {} points but data has {}",
            model.len(),
            data.len()
        )));
    }
    let n = model.len();
    if n == 0 {
        return Err(Error::fitness("empty fit range"));
    }
    eps.check(n)?;
    let pre = n_indep.prefactor(n)?;
    let sum: f64 = model
        .iter()
        .zip(data)
        .enumerate()
        .map(|(i, (m, d))| {
            let r = (m - d) / eps.at(i);
            r * r
        })
        .sum();
    Ok(pre * sum)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub r2: f64,
    pub mae: f64,
    pub rmse: f64,
}

pub fn metrics(model: &[f64], data: &[f64]) -> Result<Metrics> {
    if model.len() != data.len() {
        return Err(Error::fitness("metrics: length mismatch"));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::fitness("metrics need at least two points"));
    }
    let nf = n as f64;
    let mean = data.iter().sum::<f64>() / nf;
    let ss_tot: f64 = data.iter().map(|d| (d - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::fitness("R2 undefined for constant data"));
    }
    let ss_res: f64 = model.iter().zip(data).map(|(m, d)| (d - m).powi(2)).sum();
    let mae = model.iter().zip(data).map(|(m, d)| (d - m).abs()).sum::<f64>() / nf;
    Ok(Metrics {
        r2: 1.0 - ss_res / ss_tot,
        mae,
        rmse: (ss_res / nf).sqrt(),
    })
}

/// Fit quality in the three views reported for a finished fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub chi2: f64,
    /// On k^w·χ(k) over the fit range.
    pub k_weighted: Metrics,
    /// On plain χ(k) over the fit range.
    pub k_unweighted: Metrics,
    /// On |χ(r)| over the r-range.
    pub r: Metrics,
    pub model: KSpectrum,
    pub model_r: RSpectrum,
    pub data_r: RSpectrum,
}

/// χ² of a chromosome against fixed data, with everything that does not depend on
/// the chromosome precomputed.
///
/// The data are cropped to the fit k-range up front. Points outside it carry no
/// window weight, so the R-space term is unaffected, and the model never needs
/// theory arrays beyond the fit range.
#[derive(Debug, Clone)]
pub struct ExafsObjective {
    data: KSpectrum,
    paths: PathSet,
    config: FitnessConfig,
    /// k^w at each grid point.
    kw: Vec<f64>,
    data_kw: Vec<f64>,
    transform: KToR,
    data_r_mag: Vec<f64>,
}

impl ExafsObjective {
    pub fn new(data: KSpectrum, paths: PathSet, config: FitnessConfig) -> Result<Self> {
        if config.k_weight > 3 {
            return Err(Error::fitness(format!(
                "k_weight must be in 0..=3, got {}",
                config.k_weight
            )));
        }
        config.ft.validate()?;
        let full = *data.grid();
        let (a, b) = config.ft.k_range;
        let tol = 1e-9 * full.delta_k();
        let inside: Vec<usize> = (0..full.n_points())
            .filter(|&i| full.k(i) >= a - tol && full.k(i) <= b + tol)
            .collect();
        if inside.len() < 2 {
            return Err(Error::fitness("fit k-range contains fewer than two data points"));
        }
        let (i0, i1) = (inside[0], inside[inside.len() - 1]);
        let grid = KGrid::new(full.k(i0), full.k(i1), full.delta_k())?;
        let data = KSpectrum::new(grid, data.chi()[i0..=i1].to_vec())?;

        if let Epsilon::PerPoint(v) = &config.epsilon {
            if config.space.uses_r() || v.len() != grid.n_points() {
                return Err(Error::fitness(
                    "per-point epsilon is only supported for k-space fits and must match the fit range",
                ));
            }
        }
        let transform = KToR::new(&grid, &config.ft)?;
        let kw: Vec<f64> = (0..grid.n_points())
            .map(|i| grid.k(i).powi(config.k_weight as i32))
            .collect();
        let data_kw = data.chi().iter().zip(&kw).map(|(c, w)| c * w).collect();
        let data_r_mag = transform.magnitude(&grid, data.chi())?;
        Ok(Self {
            data,
            paths,
            config,
            kw,
            data_kw,
            transform,
            data_r_mag,
        })
    }

    /// The data restricted to the fit k-range.
    pub fn data(&self) -> &KSpectrum {
        &self.data
    }

    pub fn paths(&self) -> &PathSet {
        &self.paths
    }

    pub fn config(&self) -> &FitnessConfig {
        &self.config
    }

    pub fn transform(&self) -> &KToR {
        &self.transform
    }

    /// Same data and settings over a different path set.
    pub fn with_paths(&self, paths: PathSet) -> Self {
        Self {
            paths,
            ..self.clone()
        }
    }

    fn model_chi(&self, chromosome: &Chromosome) -> Result<(Vec<f64>, Vec<bool>)> {
        let shifted = shift_k(self.data.grid(), chromosome.delta_e0);
        let chi = evaluate_shifted(&self.paths, &chromosome.per_path, &shifted)?;
        Ok((chi, shifted.valid))
    }

    fn chi2_of(&self, chi: &[f64], valid: &[bool]) -> Result<f64> {
        let mut total = 0.0;
        if self.config.space.uses_k() {
            total += match &self.config.epsilon {
                Epsilon::Scalar(e) => {
                    let mut n = 0usize;
                    let mut sum = 0.0;
                    for i in 0..chi.len() {
                        if valid[i] {
                            let r = (chi[i] * self.kw[i] - self.data_kw[i]) / e;
                            sum += r * r;
                            n += 1;
                        }
                    }
                    if n == 0 {
                        return Err(Error::fitness("no valid points left in the fit range"));
                    }
                    Epsilon::Scalar(*e).check(n)?;
                    self.config.n_indep.prefactor(n)? * sum
                }
                Epsilon::PerPoint(eps) => {
                    let (mut m, mut d, mut e) = (Vec::new(), Vec::new(), Vec::new());
                    for i in (0..chi.len()).filter(|&i| valid[i]) {
                        m.push(chi[i] * self.kw[i]);
                        d.push(self.data_kw[i]);
                        e.push(eps[i]);
                    }
                    chi2_with(&m, &d, &Epsilon::PerPoint(e), self.config.n_indep)?
                }
            };
        }
        if self.config.space.uses_r() {
            let m = self.transform.magnitude(self.data.grid(), chi)?;
            total += chi2_with(&m, &self.data_r_mag, &self.config.epsilon, self.config.n_indep)?;
        }
        Ok(total)
    }

    pub fn chi2(&self, chromosome: &Chromosome) -> Result<f64> {
        let (chi, valid) = self.model_chi(chromosome)?;
        self.chi2_of(&chi, &valid)
    }

    /// χ² plus metrics and spectra for a finished fit.
    pub fn report(&self, chromosome: &Chromosome) -> Result<FitReport> {
        let (chi, valid) = self.model_chi(chromosome)?;
        let chi2 = self.chi2_of(&chi, &valid)?;
        let model = KSpectrum::new(*self.data.grid(), chi)?;
        let model_kw: Vec<f64> = model.chi().iter().zip(&self.kw).map(|(c, w)| c * w).collect();
        let k_weighted = metrics(&model_kw, &self.data_kw)?;
        let k_unweighted = metrics(model.chi(), self.data.chi())?;
        let model_r = self.transform.apply(&model)?;
        let data_r = self.transform.apply(&self.data)?;
        let r = metrics(&model_r.magnitude, &data_r.magnitude)?;
        Ok(FitReport {
            chi2,
            k_weighted,
            k_unweighted,
            r,
            model,
            model_r,
            data_r,
        })
    }
}

impl Objective for ExafsObjective {
    fn fitness(&self, chromosome: &Chromosome) -> Result<f64> {
        self.chi2(chromosome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FitnessConfig {
        FitnessConfig::default()
    }

    #[test]
    fn exact_fit_is_zero() {
        let d = [0.3, -1.0, 2.0];
        assert_eq!(chi2(&d, &d, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn hand_value() {
        let c = FitnessConfig {
            n_indep: IndepPoints::Count(2),
            ..cfg()
        };
        assert_eq!(chi2(&[1.0, 2.0], &[0.0, 0.0], &c).unwrap(), 5.0);
        let half = FitnessConfig {
            n_indep: IndepPoints::Ratio(0.5),
            ..cfg()
        };
        assert_eq!(chi2(&[1.0, 2.0], &[0.0, 0.0], &half).unwrap(), 2.5);
    }

    #[test]
    fn doubling_epsilon_divides_by_four() {
        let m = [0.4, -0.7, 1.9, 0.0];
        let d = [0.1, 0.2, 0.3, 0.4];
        let a = chi2(&m, &d, &cfg()).unwrap();
        let c = FitnessConfig {
            epsilon: Epsilon::Scalar(2.0),
            ..cfg()
        };
        let b = chi2(&m, &d, &c).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn chi2_errors() {
        assert!(chi2(&[1.0], &[1.0, 2.0], &cfg()).is_err());
        assert!(chi2(&[], &[], &cfg()).is_err());
        let bad = FitnessConfig {
            n_indep: IndepPoints::Count(5),
            ..cfg()
        };
        assert!(chi2(&[1.0, 2.0], &[0.0, 0.0], &bad).is_err());
        let bad = FitnessConfig {
            epsilon: Epsilon::Scalar(0.0),
            ..cfg()
        };
        assert!(chi2(&[1.0, 2.0], &[0.0, 0.0], &bad).is_err());
    }

    #[test]
    fn metrics_hand_values() {
        let m = metrics(&[1.0, 1.0], &[0.0, 2.0]).unwrap();
        assert_eq!(m.mae, 1.0);
        assert_eq!(m.rmse, 1.0);
        assert_eq!(m.r2, 0.0);
        let d = [0.1, 0.5, -0.2];
        let m = metrics(&d, &d).unwrap();
        assert_eq!((m.r2, m.mae, m.rmse), (1.0, 0.0, 0.0));
        assert!(metrics(&[1.0, 2.0], &[3.0, 3.0]).is_err());
    }

    #[test]
    fn space_parsing() {
        assert_eq!("K+R".parse::<FitSpace>().unwrap(), FitSpace::KR);
        assert!("x".parse::<FitSpace>().is_err());
    }
}
