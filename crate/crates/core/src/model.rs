//! EXAFS path-sum forward model.
//!
//! Each path contributes
//!
//! ```text
//! χᵢ(k) = S0²·N·F(k) / (k·R²) · exp(−2σ²k²) · exp(−2R/λ(k)) · sin(2kR + φ(k) + δc(k))
//! ```
//!
//! with `R = r_eff + ΔR`, evaluated at the energy-shifted wavenumber
//! `k' = sqrt(k² − ETOK·ΔE0)`. Theory arrays are linearly interpolated at `k'`.
//! Output is unweighted χ(k); k-weighting happens in the fitness and transform.

use crate::error::{Error, Result};
use crate::ga::Chromosome;
use crate::paths::{PathSet, ScatteringPath};
use crate::spectra::{lerp, KGrid, KSpectrum, ETOK};

/// Per-path fitted parameters. ΔE0 is shared and lives on the chromosome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub s02: f64,
    /// Debye-Waller factor, Å².
    pub sigma2: f64,
    /// Correction to r_eff, Å.
    pub delta_r: f64,
}

/// Grid wavenumbers after the ΔE0 shift. Points with `k' = 0` are invalid and
/// contribute nothing to the model or the fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedK {
    pub k: Vec<f64>,
    pub valid: Vec<bool>,
}

impl ShiftedK {
    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

pub fn shift_k(grid: &KGrid, delta_e0: f64) -> ShiftedK {
    let shift = ETOK * delta_e0;
    let k: Vec<f64> = (0..grid.n_points())
        .map(|i| {
            let ki = grid.k(i);
            if delta_e0 == 0.0 {
                ki
            } else {
                (ki * ki - shift).max(0.0).sqrt()
            }
        })
        .collect();
    let valid = k.iter().map(|&v| v > 0.0).collect();
    ShiftedK { k, valid }
}

pub fn path_contribution(
    path: &ScatteringPath,
    params: &PathParams,
    delta_e0: f64,
    grid: &KGrid,
) -> Result<Vec<f64>> {
    let shifted = shift_k(grid, delta_e0);
    let mut out = vec![0.0; grid.n_points()];
    add_contribution(path, params, &shifted, &mut out)?;
    Ok(out)
}

/// Adds one path's χᵢ(k') onto `out`.
pub(crate) fn add_contribution(
    path: &ScatteringPath,
    params: &PathParams,
    shifted: &ShiftedK,
    out: &mut [f64],
) -> Result<()> {
    let r = path.r_eff + params.delta_r;
    if !(r > 0.0) {
        return Err(Error::model(format!(
            "{}: path length r_eff + delta_r = {r} must be > 0",
            path.label
        )));
    }
    if params.s02 == 0.0 {
        return Ok(());
    }
    let (k_lo, k_hi) = path.k_range();
    let tol = 1e-9 * k_hi.abs().max(1.0);
    let amp = params.s02 * path.degeneracy / (r * r);
    let n = path.k.len();
    let mut j = 0;
    for ((&kp, &ok), slot) in shifted.k.iter().zip(&shifted.valid).zip(out.iter_mut()) {
        if !ok {
            continue;
        }
        if kp < k_lo - tol || kp > k_hi + tol {
            return Err(Error::model(format!(
                "{}: shifted k = {kp} lies outside the theory range [{k_lo}, {k_hi}]",
                path.label
            )));
        }
        let kp_c = kp.clamp(k_lo, k_hi);
        // Shifted k' rises with the grid index, so the bracket only moves forward.
        while j + 2 < n && path.k[j + 1] < kp_c {
            j += 1;
        }
        if kp_c < path.k[j] {
            j = path.k.partition_point(|&v| v <= kp_c).saturating_sub(1).min(n - 2);
        }
        let f = lerp(&path.k, &path.f_eff, j, kp_c);
        let phi = lerp(&path.k, &path.phase_scatter, j, kp_c);
        let dc = lerp(&path.k, &path.phase_central, j, kp_c);
        let lambda = lerp(&path.k, &path.lambda, j, kp_c);
        *slot += amp * f / kp
            * (-2.0 * params.sigma2 * kp * kp).exp()
            * (-2.0 * r / lambda).exp()
            * (2.0 * kp * r + phi + dc).sin();
    }
    Ok(())
}

/// Sum of all path contributions with the chromosome's shared ΔE0.
pub fn evaluate_model(paths: &PathSet, chromosome: &Chromosome, grid: &KGrid) -> Result<KSpectrum> {
    let shifted = shift_k(grid, chromosome.delta_e0);
    let chi = evaluate_shifted(paths, &chromosome.per_path, &shifted)?;
    KSpectrum::new(*grid, chi)
}

pub(crate) fn evaluate_shifted(
    paths: &PathSet,
    params: &[PathParams],
    shifted: &ShiftedK,
) -> Result<Vec<f64>> {
    if params.len() != paths.len() {
        return Err(Error::model(format!(
            "chromosome has {} path parameter sets but the path set has {} paths",
            params.len(),
            paths.len()
        )));
    }
    let mut out = vec![0.0; shifted.k.len()];
    for (path, p) in paths.paths().iter().zip(params) {
        add_contribution(path, p, shifted, &mut out)?;
    }
    Ok(out)
}
