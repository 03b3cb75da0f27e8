//! Spectrum containers, uniform k-grids, window functions and the k→R transform.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// 2m/ħ² in eV⁻¹·Å⁻²: converts an energy offset into a shift of k².
pub const ETOK: f64 = 0.262_468_291_7;

const GRID_TOL: f64 = 1e-6;

/// A uniform wavenumber grid `k_min + i·delta_k`, `i = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KGrid {
    k_min: f64,
    k_max: f64,
    delta_k: f64,
    n_points: usize,
}

impl KGrid {
    pub fn new(k_min: f64, k_max: f64, delta_k: f64) -> Result<Self> {
        if !(k_min.is_finite() && k_max.is_finite() && delta_k.is_finite()) {
            return Err(Error::spectra("grid bounds must be finite"));
        }
        if k_min < 0.0 {
            return Err(Error::spectra(format!("k_min must be >= 0, got {k_min}")));
        }
        if k_max <= k_min {
            return Err(Error::spectra(format!(
                "k_max ({k_max}) must exceed k_min ({k_min})"
            )));
        }
        if delta_k <= 0.0 {
            return Err(Error::spectra(format!("delta_k must be > 0, got {delta_k}")));
        }
        let n_points = ((k_max - k_min) / delta_k).round() as usize + 1;
        Ok(Self {
            k_min,
            k_max: k_min + (n_points - 1) as f64 * delta_k,
            delta_k,
            n_points,
        })
    }

    /// Recovers the grid from sample positions, rejecting non-uniform spacing.
    pub fn from_points(k: &[f64]) -> Result<Self> {
        if k.len() < 2 {
            return Err(Error::spectra("a grid needs at least two points"));
        }
        let dk = (k[k.len() - 1] - k[0]) / (k.len() - 1) as f64;
        for (i, pair) in k.windows(2).enumerate() {
            let step = pair[1] - pair[0];
            if (step - dk).abs() > GRID_TOL * dk.abs().max(1.0) {
                return Err(Error::spectra(format!(
                    "non-uniform grid: spacing {step} at index {i} differs from mean spacing {dk}"
                )));
            }
        }
        let grid = Self::new(k[0], k[k.len() - 1], dk)?;
        debug_assert_eq!(grid.n_points, k.len());
        Ok(grid)
    }

    pub fn k_min(&self) -> f64 {
        self.k_min
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    pub fn delta_k(&self) -> f64 {
        self.delta_k
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn k(&self, i: usize) -> f64 {
        self.k_min + i as f64 * self.delta_k
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.k(i)).collect()
    }

    pub fn contains(&self, k: f64) -> bool {
        let tol = GRID_TOL * self.delta_k;
        k >= self.k_min - tol && k <= self.k_max + tol
    }
}

/// χ(k) sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpectrum {
    grid: KGrid,
    chi: Vec<f64>,
}

impl KSpectrum {
    pub fn new(grid: KGrid, chi: Vec<f64>) -> Result<Self> {
        if chi.len() != grid.n_points() {
            return Err(Error::spectra(format!(
                "chi has {} values but the grid has {} points",
                chi.len(),
                grid.n_points()
            )));
        }
        if let Some(i) = chi.iter().position(|v| !v.is_finite()) {
            return Err(Error::spectra(format!("non-finite chi value at index {i}")));
        }
        Ok(Self { grid, chi })
    }

    pub fn zeros(grid: KGrid) -> Self {
        Self {
            grid,
            chi: vec![0.0; grid.n_points()],
        }
    }

    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    pub fn chi(&self) -> &[f64] {
        &self.chi
    }

    pub fn into_chi(self) -> Vec<f64> {
        self.chi
    }

    /// χ(k)·k^w at every grid point.
    pub fn weighted(&self, k_weight: u32) -> Vec<f64> {
        self.chi
            .iter()
            .enumerate()
            .map(|(i, c)| c * self.grid.k(i).powi(k_weight as i32))
            .collect()
    }

    /// Linear interpolation onto `grid`, which must lie inside this spectrum's range.
    pub fn resample_onto(&self, grid: &KGrid) -> Result<KSpectrum> {
        if self.grid == *grid {
            return Ok(self.clone());
        }
        RawSpectrum {
            k: self.grid.points(),
            chi: self.chi.clone(),
        }
        .resample_onto(grid)
    }

    /// Two-column text, one `k chi` pair per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# k chi\n");
        for (i, c) in self.chi.iter().enumerate() {
            let _ = writeln!(out, "{} {}", self.grid.k(i), c);
        }
        out
    }
}

/// Samples as read from disk: strictly increasing but not necessarily uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSpectrum {
    pub k: Vec<f64>,
    pub chi: Vec<f64>,
}

impl RawSpectrum {
    /// Parses whitespace- or comma-delimited `k chi` columns. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut k = Vec::new();
        let mut chi = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() < 2 {
                return Err(Error::spectra(format!(
                    "line {lineno}: expected two columns (k, chi), found {}",
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::spectra(format!("line {lineno}: invalid number '{s}'")))
            };
            let kv = parse(fields[0])?;
            let cv = parse(fields[1])?;
            if let Some(&prev) = k.last() {
                if kv <= prev {
                    return Err(Error::spectra(format!(
                        "line {lineno}: k values must be strictly increasing ({kv} follows {prev})"
                    )));
                }
            }
            k.push(kv);
            chi.push(cv);
        }
        if k.len() < 2 {
            return Err(Error::spectra("spectrum needs at least two data rows"));
        }
        Ok(Self { k, chi })
    }

    pub fn resample_onto(&self, grid: &KGrid) -> Result<KSpectrum> {
        let lo = self.k[0];
        let hi = self.k[self.k.len() - 1];
        let tol = GRID_TOL * grid.delta_k();
        if grid.k_min() < lo - tol || grid.k_max() > hi + tol {
            return Err(Error::spectra(format!(
                "cannot extrapolate: target [{}, {}] exceeds source [{lo}, {hi}]",
                grid.k_min(),
                grid.k_max()
            )));
        }
        let mut out = Vec::with_capacity(grid.n_points());
        let mut j = 0;
        for q in grid.points() {
            let q = q.clamp(lo, hi);
            while j + 2 < self.k.len() && self.k[j + 1] < q {
                j += 1;
            }
            out.push(lerp(&self.k, &self.chi, j, q));
        }
        KSpectrum::new(*grid, out)
    }
}

/// Linear interpolation of `y` at `x`, using the segment that starts at `j`.
#[inline]
pub(crate) fn lerp(xs: &[f64], ys: &[f64], j: usize, x: f64) -> f64 {
    let (x0, x1) = (xs[j], xs[j + 1]);
    let t = (x - x0) / (x1 - x0);
    ys[j] + t * (ys[j + 1] - ys[j])
}

/// Window shape used to taper χ(k) before the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// sin² rise over `window_sill` at each end of the fit range.
    #[default]
    Hanning,
    /// Unit weight across the whole fit range; the sill is ignored.
    Boxcar,
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hanning" | "hann" => Ok(Window::Hanning),
            "boxcar" | "rectangular" => Ok(Window::Boxcar),
            other => Err(Error::spectra(format!("unknown window '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FTConfig {
    pub k_weight: u32,
    pub window: Window,
    pub window_sill: f64,
    pub k_range: (f64, f64),
    pub n_fft: usize,
    pub r_range: (f64, f64),
}

impl Default for FTConfig {
    fn default() -> Self {
        Self {
            k_weight: 2,
            window: Window::Hanning,
            window_sill: 1.0,
            k_range: (2.5, 12.5),
            n_fft: 2048,
            r_range: (0.0, 5.0),
        }
    }
}

impl FTConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_weight > 3 {
            return Err(Error::spectra(format!(
                "k_weight must be in 0..=3, got {}",
                self.k_weight
            )));
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return Err(Error::spectra(format!(
                "n_fft must be a power of two, got {}",
                self.n_fft
            )));
        }
        let (a, b) = self.k_range;
        if !(a.is_finite() && b.is_finite()) || a < 0.0 || b <= a {
            return Err(Error::spectra(format!("invalid k_range [{a}, {b}]")));
        }
        let (r0, r1) = self.r_range;
        if !(r0.is_finite() && r1.is_finite()) || r0 < 0.0 || r1 <= r0 {
            return Err(Error::spectra(format!("invalid r_range [{r0}, {r1}]")));
        }
        if !(self.window_sill >= 0.0) {
            return Err(Error::spectra("window_sill must be >= 0"));
        }
        if self.window == Window::Hanning && 2.0 * self.window_sill > b - a {
            return Err(Error::spectra(format!(
                "window sill {} is wider than half the fit range [{a}, {b}]",
                self.window_sill
            )));
        }
        Ok(())
    }

    fn weight(&self, k: f64) -> f64 {
        let (a, b) = self.k_range;
        if k < a || k > b {
            return 0.0;
        }
        let sill = self.window_sill;
        match self.window {
            Window::Boxcar => 1.0,
            Window::Hanning if sill == 0.0 => 1.0,
            Window::Hanning => {
                if k < a + sill {
                    (FRAC_PI_2 * (k - a) / sill).sin().powi(2)
                } else if k > b - sill {
                    (FRAC_PI_2 * (b - k) / sill).sin().powi(2)
                } else {
                    1.0
                }
            }
        }
    }
}

/// Window weights Ω(k) at each point of `grid`.
pub fn make_window(config: &FTConfig, grid: &KGrid) -> Result<Vec<f64>> {
    config.validate()?;
    let (a, b) = config.k_range;
    if !grid.contains(a) || !grid.contains(b) {
        return Err(Error::spectra(format!(
            "k_range [{a}, {b}] is outside the grid [{}, {}]",
            grid.k_min(),
            grid.k_max()
        )));
    }
    Ok(grid.points().into_iter().map(|k| config.weight(k)).collect())
}

/// Complex χ(r) on `r_m = m·π/(n_fft·δk)`, cropped to the configured r-range.
#[derive(Debug, Clone, PartialEq)]
pub struct RSpectrum {
    pub r: Vec<f64>,
    pub chi_r: Vec<Complex64>,
    pub magnitude: Vec<f64>,
}

impl RSpectrum {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,re,im,magnitude\n");
        for ((r, c), m) in self.r.iter().zip(&self.chi_r).zip(&self.magnitude) {
            let _ = writeln!(out, "{r},{},{},{m}", c.re, c.im);
        }
        out
    }
}

/// A k→R transform prepared for one grid and configuration, reusable across spectra.
#[derive(Clone)]
pub struct KToR {
    grid: KGrid,
    n_fft: usize,
    /// Padded-array index of the first grid point (`k_min / δk`).
    offset: usize,
    /// Ω(k)·k^w per grid point.
    taper: Vec<f64>,
    m_lo: usize,
    m_hi: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for KToR {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KToR")
            .field("grid", &self.grid)
            .field("n_fft", &self.n_fft)
            .field("offset", &self.offset)
            .field("m_range", &(self.m_lo..=self.m_hi))
            .finish()
    }
}

impl KToR {
    pub fn new(grid: &KGrid, config: &FTConfig) -> Result<Self> {
        let window = make_window(config, grid)?;
        let dk = grid.delta_k();
        let offset_f = grid.k_min() / dk;
        let offset = offset_f.round() as usize;
        if (offset_f - offset as f64).abs() > GRID_TOL {
            return Err(Error::spectra(format!(
                "grid start {} is not a multiple of delta_k {dk}",
                grid.k_min()
            )));
        }
        let Some(last) = window.iter().rposition(|&w| w > 0.0) else {
            return Err(Error::spectra("empty fit range: no grid points carry window weight"));
        };
        if offset + last >= config.n_fft {
            return Err(Error::spectra(format!(
                "n_fft {} is too small for k up to {}",
                config.n_fft,
                grid.k(last)
            )));
        }
        let taper = window
            .iter()
            .enumerate()
            .map(|(i, w)| w * grid.k(i).powi(config.k_weight as i32))
            .collect();

        let dr = PI / (config.n_fft as f64 * dk);
        let (r0, r1) = config.r_range;
        let m_lo = (r0 / dr - GRID_TOL).ceil().max(0.0) as usize;
        let m_hi = ((r1 / dr + GRID_TOL).floor() as usize).min(config.n_fft / 2);
        if m_lo > m_hi {
            return Err(Error::spectra(format!(
                "r_range [{r0}, {r1}] contains no r-grid point (spacing {dr})"
            )));
        }
        let fft = FftPlanner::new().plan_fft_inverse(config.n_fft);
        Ok(Self {
            grid: *grid,
            n_fft: config.n_fft,
            offset,
            taper,
            m_lo,
            m_hi,
            fft,
        })
    }

    pub fn r_spacing(&self) -> f64 {
        PI / (self.n_fft as f64 * self.grid.delta_k())
    }

    pub fn r_values(&self) -> Vec<f64> {
        let dr = self.r_spacing();
        (self.m_lo..=self.m_hi).map(|m| m as f64 * dr).collect()
    }

    pub fn apply(&self, spec: &KSpectrum) -> Result<RSpectrum> {
        let chi_r = self.transform_chi(spec.grid(), spec.chi())?;
        let magnitude = chi_r.iter().map(|c| c.norm()).collect();
        Ok(RSpectrum {
            r: self.r_values(),
            chi_r,
            magnitude,
        })
    }

    /// |χ(r)| over the cropped r-range.
    pub fn magnitude(&self, grid: &KGrid, chi: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .transform_chi(grid, chi)?
            .into_iter()
            .map(|c| c.norm())
            .collect())
    }

    fn transform_chi(&self, grid: &KGrid, chi: &[f64]) -> Result<Vec<Complex64>> {
        if *grid != self.grid || chi.len() != self.taper.len() {
            return Err(Error::spectra("spectrum grid differs from the prepared transform grid"));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        for (i, (c, t)) in chi.iter().zip(&self.taper).enumerate() {
            let n = self.offset + i;
            if n < self.n_fft {
                buf[n].re = c * t;
            }
        }
        self.fft.process(&mut buf);
        let scale = Complex64::new(0.0, self.grid.delta_k() / (PI * self.n_fft as f64).sqrt());
        Ok(buf[self.m_lo..=self.m_hi].iter().map(|v| v * scale).collect())
    }
}

/// χ(r_m) = (iδk/√(πN)) Σₙ χ(kₙ)Ω(kₙ)kₙʷ exp(2iπnm/N), with kₙ = n·δk.
pub fn transform_k_to_r(spec: &KSpectrum, config: &FTConfig) -> Result<RSpectrum> {
    KToR::new(spec.grid(), config)?.apply(spec)
}
