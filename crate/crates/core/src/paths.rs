//! Scattering paths: FEFF `feffNNNN.dat` ingestion, a matching writer, and
//! analytic synthetic paths for validation runs.
//!
//! A path file is a free-form header terminated by a line of dashes, then a
//! summary line starting with `nleg deg reff`, the leg coordinates, a column
//! header beginning with `k`, and seven data columns:
//!
//! ```text
//! k  real[2*phc]  mag[feff]  phase[feff]  red factor  lambda  real[p]
//! ```
//!
//! Extra columns are ignored. The reduction-factor column is kept but never
//! applied; the amplitude is carried by the fitted S0².

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectra::KGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringPath {
    pub label: String,
    pub nleg: usize,
    pub degeneracy: f64,
    /// Half path length, Å.
    pub r_eff: f64,
    pub k: Vec<f64>,
    /// Effective scattering amplitude |F(k)|.
    pub f_eff: Vec<f64>,
    /// Scattering phase φ(k), radians.
    pub phase_scatter: Vec<f64>,
    /// Central-atom phase δc(k), radians.
    pub phase_central: Vec<f64>,
    pub red_factor: Vec<f64>,
    /// Mean free path λ(k), Å.
    pub lambda: Vec<f64>,
    pub real_p: Vec<f64>,
}

impl ScatteringPath {
    pub fn validate(&self) -> Result<()> {
        let n = self.k.len();
        if n < 2 {
            return Err(Error::Paths(format!("{}: needs at least two k points", self.label)));
        }
        let columns = [
            ("mag[feff]", &self.f_eff),
            ("phase[feff]", &self.phase_scatter),
            ("real[2*phc]", &self.phase_central),
            ("red factor", &self.red_factor),
            ("lambda", &self.lambda),
            ("real[p]", &self.real_p),
        ];
        for (name, col) in columns {
            if col.len() != n {
                return Err(Error::Paths(format!(
                    "{}: column {name} has {} values, expected {n}",
                    self.label,
                    col.len()
                )));
            }
        }
        if self.k.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Paths(format!("{}: k must be strictly increasing", self.label)));
        }
        if !(self.degeneracy > 0.0) {
            return Err(Error::Paths(format!("{}: degeneracy must be > 0", self.label)));
        }
        if !(self.r_eff > 0.0) {
            return Err(Error::Paths(format!("{}: r_eff must be > 0", self.label)));
        }
        if self.lambda.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Paths(format!("{}: lambda must be > 0", self.label)));
        }
        Ok(())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn k_range(&self) -> (f64, f64) {
        (self.k[0], self.k[self.k.len() - 1])
    }

    /// Writes the path in the layout accepted by [`parse_feff_path`].
    pub fn to_feff_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, " {}", self.label);
        out.push(' ');
        out.push_str(&"-".repeat(71));
        out.push('\n');
        let _ = writeln!(
            out,
            "   {}   {}   {}   0.0000   0.0000     nleg, deg, reff, rnrmav(bohr), edge",
            self.nleg, self.degeneracy, self.r_eff
        );
        out.push_str("        x         y         z   pot at#\n");
        for leg in 0..self.nleg {
            let _ = writeln!(out, "     0.0000    0.0000    0.0000  {leg}   0");
        }
        out.push_str("    k   real[2*phc]   mag[feff]  phase[feff] red factor   lambda     real[p]@#\n");
        for i in 0..self.k.len() {
            let _ = writeln!(
                out,
                " {:e} {:e} {:e} {:e} {:e} {:e} {:e}",
                self.k[i],
                self.phase_central[i],
                self.f_eff[i],
                self.phase_scatter[i],
                self.red_factor[i],
                self.lambda[i],
                self.real_p[i]
            );
        }
        out
    }
}

fn is_separator(line: &str) -> bool {
    let t = line.trim();
    t.len() >= 5 && t.chars().all(|c| c == '-')
}

fn parse_number(token: &str, lineno: usize) -> Result<f64> {
    // Fortran output occasionally uses D exponents.
    let cleaned = token.replace(['D', 'd'], "E");
    cleaned
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(lineno, format!("invalid number '{token}'")))
}

/// Parses a FEFF path file. The label is taken from the first header line.
pub fn parse_feff_path(content: &str) -> Result<ScatteringPath> {
    let lines: Vec<&str> = content.lines().collect();
    let sep = lines
        .iter()
        .position(|l| is_separator(l))
        .ok_or_else(|| Error::parse(lines.len().max(1), "missing dashed header separator"))?;
    let label = lines[..sep]
        .iter()
        .map(|l| l.trim())
        .find(|l| !l.is_empty())
        .unwrap_or("path")
        .to_string();

    let (summary_idx, summary) = lines
        .iter()
        .enumerate()
        .skip(sep + 1)
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| Error::parse(sep + 1, "missing path summary line after separator"))?;
    let fields: Vec<&str> = summary.split_whitespace().collect();
    if fields.len() < 3 {
        return Err(Error::parse(
            summary_idx + 1,
            "summary line must start with nleg, degeneracy, r_eff",
        ));
    }
    let nleg_f = parse_number(fields[0], summary_idx + 1)?;
    if nleg_f < 1.0 || nleg_f.fract() != 0.0 {
        return Err(Error::parse(summary_idx + 1, format!("invalid nleg '{}'", fields[0])));
    }
    let nleg = nleg_f as usize;
    let degeneracy = parse_number(fields[1], summary_idx + 1)?;
    let r_eff = parse_number(fields[2], summary_idx + 1)?;
    if !(degeneracy > 0.0) {
        return Err(Error::parse(summary_idx + 1, "degeneracy must be > 0"));
    }
    if !(r_eff > 0.0) {
        return Err(Error::parse(summary_idx + 1, "r_eff must be > 0"));
    }

    // Data begin after the column header; without one, after the leg coordinates.
    let header = lines.iter().enumerate().skip(summary_idx + 1).find(|(_, l)| {
        l.split_whitespace()
            .next()
            .is_some_and(|t| t.eq_ignore_ascii_case("k"))
    });
    let data_start = match header {
        Some((i, _)) => i + 1,
        None => summary_idx + 2 + nleg,
    };

    let mut cols: [Vec<f64>; 7] = Default::default();
    for (idx, line) in lines.iter().enumerate().skip(data_start) {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 7 {
            return Err(Error::parse(
                lineno,
                format!("expected 7 data columns, found {}", tokens.len()),
            ));
        }
        let mut row = [0.0; 7];
        for (slot, tok) in row.iter_mut().zip(&tokens) {
            *slot = parse_number(tok, lineno)?;
        }
        if let Some(&prev) = cols[0].last() {
            if row[0] <= prev {
                return Err(Error::parse(lineno, format!("k not increasing ({} after {prev})", row[0])));
            }
        }
        if !(row[5] > 0.0) {
            return Err(Error::parse(lineno, format!("lambda must be > 0, got {}", row[5])));
        }
        for (col, v) in cols.iter_mut().zip(row) {
            col.push(v);
        }
    }
    if cols[0].len() < 2 {
        return Err(Error::parse(lines.len().max(1), "fewer than two data rows"));
    }

    let [k, phase_central, f_eff, phase_scatter, red_factor, lambda, real_p] = cols;
    let path = ScatteringPath {
        label,
        nleg,
        degeneracy,
        r_eff,
        k,
        f_eff,
        phase_scatter,
        phase_central,
        red_factor,
        lambda,
        real_p,
    };
    path.validate()?;
    Ok(path)
}

/// Analytic path on `grid`: F(k) = amp·k·exp(−k²/100), φ(k) = −0.3k, δc = 0, λ constant.
pub fn synth_path(
    label: impl Into<String>,
    r_eff: f64,
    degeneracy: f64,
    grid: &KGrid,
    amp_scale: f64,
    lambda_const: f64,
) -> Result<ScatteringPath> {
    if !(r_eff > 0.0 && degeneracy > 0.0 && lambda_const > 0.0 && amp_scale >= 0.0) {
        return Err(Error::Paths(format!(
            "synthetic path needs positive r_eff, degeneracy, lambda and amp_scale >= 0 \
             (got {r_eff}, {degeneracy}, {lambda_const}, {amp_scale})"
        )));
    }
    let k = grid.points();
    let n = k.len();
    let path = ScatteringPath {
        label: label.into(),
        nleg: 2,
        degeneracy,
        r_eff,
        f_eff: k.iter().map(|&k| amp_scale * k * (-k * k / 100.0).exp()).collect(),
        phase_scatter: k.iter().map(|&k| -0.3 * k).collect(),
        phase_central: vec![0.0; n],
        red_factor: vec![1.0; n],
        lambda: vec![lambda_const; n],
        real_p: k.clone(),
        k,
    };
    path.validate()?;
    Ok(path)
}

/// Ordered, non-empty collection of paths with unique labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    paths: Vec<ScatteringPath>,
    pub source: String,
}

impl PathSet {
    pub fn new(paths: Vec<ScatteringPath>, source: impl Into<String>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Paths("path set is empty".into()));
        }
        let mut seen = HashSet::new();
        for p in &paths {
            if !seen.insert(p.label.as_str()) {
                return Err(Error::Paths(format!("duplicate path label '{}'", p.label)));
            }
            p.validate()?;
        }
        Ok(Self {
            paths,
            source: source.into(),
        })
    }

    /// Loads a manifest: one path file per line, optionally followed by a
    /// degeneracy override. Relative names resolve against the manifest's directory.
    pub fn from_manifest(manifest: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest)
            .map_err(|e| Error::Paths(format!("{}: {e}", manifest.display())))?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        let mut paths = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let name = fields.next().unwrap_or_default();
            let file = base.join(name);
            let content = std::fs::read_to_string(&file)
                .map_err(|e| Error::Paths(format!("{}: {e}", file.display())))?;
            let mut path = parse_feff_path(&content).map_err(|e| match e {
                Error::PathParse { line, message } => {
                    Error::Paths(format!("{}: line {line}: {message}", file.display()))
                }
                other => other,
            })?;
            path.label = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| name.to_string());
            if let Some(deg) = fields.next() {
                path.degeneracy = deg.parse::<f64>().ok().filter(|d| *d > 0.0).ok_or_else(|| {
                    Error::Paths(format!(
                        "{}: line {}: invalid degeneracy override '{deg}'",
                        manifest.display(),
                        idx + 1
                    ))
                })?;
            }
            paths.push(path);
        }
        Self::new(paths, manifest.display().to_string())
    }

    pub fn paths(&self) -> &[ScatteringPath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.paths.iter().map(|p| p.label.as_str()).collect()
    }

    /// Keeps the paths at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let paths = indices
            .iter()
            .map(|&i| {
                self.paths
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Paths(format!("path index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(paths, format!("{} (subset)", self.source))
    }

    /// Smallest theory-array coverage shared by every path.
    pub fn common_k_range(&self) -> (f64, f64) {
        self.paths.iter().fold((f64::MIN, f64::MAX), |(lo, hi), p| {
            let (a, b) = p.k_range();
            (lo.max(a), hi.min(b))
        })
    }
}
