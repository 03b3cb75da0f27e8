//! Sectioned key-value run configuration.
//!
//! ```text
//! [run]
//! data_file = data.chi
//! path_manifest = paths.txt
//! output_dir = out
//! seed = 7
//!
//! [ga]
//! population_size = 400
//! mutation = metropolis
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! Unknown sections and keys are rejected with their line number.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use exafs_ga::analysis::HyperRanges;
use exafs_ga::fitness::{Epsilon, FitSpace, FitnessConfig, IndepPoints};
use exafs_ga::ga::{GAConfig, GeneBounds, GeneSpec};
use exafs_ga::spectra::{FTConfig, Window};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Fit,
    CutoffSweep,
    ErrorAnalysis,
    Synth,
    Benchmark,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Fit => "fit",
            Mode::CutoffSweep => "cutoff-sweep",
            Mode::ErrorAnalysis => "error-analysis",
            Mode::Synth => "synth",
            Mode::Benchmark => "benchmark",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fit" => Ok(Mode::Fit),
            "cutoff-sweep" => Ok(Mode::CutoffSweep),
            "error-analysis" => Ok(Mode::ErrorAnalysis),
            "synth" => Ok(Mode::Synth),
            "benchmark" => Ok(Mode::Benchmark),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

/// Data k-grid; unset values are taken from the data file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSettings {
    pub k_min: Option<f64>,
    pub k_max: Option<f64>,
    pub delta_k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffSettings {
    pub percents: Vec<f64>,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSettings {
    pub runs: usize,
    pub ranges: HyperRanges,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub e0: f64,
    pub s02: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub delta_r: Vec<f64>,
    pub snr: Option<f64>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSettings {
    pub n_paths: Vec<usize>,
    pub population: usize,
    pub generations: usize,
    pub repeats: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: PathBuf,
    pub mode: Option<Mode>,
    pub data_file: Option<PathBuf>,
    pub path_manifest: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub grid: GridSettings,
    pub ga: GAConfig,
    pub fitness: FitnessConfig,
    /// Estimate a scalar ε from the data instead of using `fitness.epsilon`.
    pub epsilon_auto: bool,
    pub bounds: GeneBounds,
    pub cutoff: CutoffSettings,
    pub error: ErrorSettings,
    pub synth: SynthSettings,
    pub benchmark: BenchmarkSettings,
}

struct Entry {
    value: String,
    line: usize,
    used: Cell<bool>,
}

struct Ini {
    file: String,
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
}

const SECTIONS: [&str; 10] = [
    "run", "grid", "ga", "fitness", "ft", "genes", "cutoff", "error", "synth", "benchmark",
];

impl Ini {
    fn parse(file: &str, text: &str) -> Result<Self, CliError> {
        let mut sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find(['#', ';']) {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::config_at(file, line, "unterminated section header"))?
                    .trim()
                    .to_ascii_lowercase();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(CliError::config_at(file, line, format!("unknown section [{name}]")));
                }
                if sections.contains_key(&name) {
                    return Err(CliError::config_at(file, line, format!("duplicate section [{name}]")));
                }
                sections.insert(name.clone(), (line, BTreeMap::new()));
                current = Some(name);
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::config_at(file, line, format!("expected 'key = value', got '{content}'")))?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(CliError::config_at(file, line, "empty key"));
            }
            let section = current
                .as_ref()
                .ok_or_else(|| CliError::config_at(file, line, "key outside of any section"))?;
            let entries = &mut sections.get_mut(section).expect("section exists").1;
            if let Some(prev) = entries.get(&key) {
                return Err(CliError::config_at(
                    file,
                    line,
                    format!("duplicate key '{key}' (first set on line {})", prev.line),
                ));
            }
            entries.insert(
                key,
                Entry {
                    value: value.trim().to_string(),
                    line,
                    used: Cell::new(false),
                },
            );
        }
        Ok(Self {
            file: file.to_string(),
            sections,
        })
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        let e = self.sections.get(section)?.1.get(key)?;
        e.used.set(true);
        Some(e)
    }

    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.sections.get(section)?.1.get(key).map(|e| e.line)
    }

    fn get_with<T>(
        &self,
        section: &str,
        key: &str,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<Option<T>, CliError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => parse(&e.value).map(Some).map_err(|msg| {
                CliError::config_at(&self.file, e.line, format!("[{section}] {key}: {msg}"))
            }),
        }
    }

    fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.get_with(section, key, |v| {
            v.parse::<T>().map_err(|e| format!("invalid value '{v}': {e}"))
        })
    }

    fn or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: Display,
    {
        self.get_with(section, key, |v| {
            v.split(',')
                .map(|item| {
                    let item = item.trim();
                    item.parse::<T>().map_err(|e| format!("invalid list item '{item}': {e}"))
                })
                .collect()
        })
    }

    fn reject_unused(&self) -> Result<(), CliError> {
        for (name, (_, entries)) in &self.sections {
            for (key, e) in entries {
                if !e.used.get() {
                    return Err(CliError::config_at(&self.file, e.line, format!("unknown key '{key}' in [{name}]")));
                }
            }
        }
        Ok(())
    }
}

fn parse_patience(v: &str) -> Result<Option<usize>, String> {
    if v.eq_ignore_ascii_case("none") || v.eq_ignore_ascii_case("off") {
        return Ok(None);
    }
    v.parse::<usize>()
        .map(Some)
        .map_err(|e| format!("expected a count or 'none', got '{v}': {e}"))
}

fn parse_indep(v: &str) -> Result<IndepPoints, String> {
    if v.eq_ignore_ascii_case("all") {
        return Ok(IndepPoints::All);
    }
    v.parse::<usize>()
        .map(IndepPoints::Count)
        .map_err(|_| format!("expected 'all' or a point count, got '{v}'"))
}

fn parse_epsilon(v: &str) -> Result<Option<f64>, String> {
    if v.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    match v.parse::<f64>() {
        Ok(e) if e > 0.0 && e.is_finite() => Ok(Some(e)),
        _ => Err(format!("expected 'auto' or a positive number, got '{v}'")),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            location: path.display().to_string(),
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text, path)
    }

    /// Parses `text` as if it had been read from `source`.
    pub fn parse(text: &str, source: &Path) -> Result<Self, CliError> {
        let file = source.display().to_string();
        let ini = Ini::parse(&file, text)?;
        let base = source.parent().map(Path::to_path_buf).unwrap_or_default();
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

        let mode = ini.get::<Mode>("run", "mode")?;
        let data_file = ini.get::<PathBuf>("run", "data_file")?.map(resolve);
        let path_manifest = ini.get::<PathBuf>("run", "path_manifest")?.map(resolve);
        let output_dir = resolve(ini.or("run", "output_dir", PathBuf::from("out"))?);
        let seed = ini.or("run", "seed", 0u64)?;

        let grid = GridSettings {
            k_min: ini.get("grid", "k_min")?,
            k_max: ini.get("grid", "k_max")?,
            delta_k: ini.or("grid", "delta_k", 0.05)?,
        };

        let d = GAConfig::default();
        let ga = GAConfig {
            population_size: ini.or("ga", "population_size", d.population_size)?,
            max_generations: ini.or("ga", "max_generations", d.max_generations)?,
            elite_fraction: ini.or("ga", "elite_fraction", d.elite_fraction)?,
            random_fraction: ini.or("ga", "random_fraction", d.random_fraction)?,
            crossover: ini.or("ga", "crossover", d.crossover)?,
            mutation: ini.or("ga", "mutation", d.mutation)?,
            initial_mutation_rate: ini.or("ga", "initial_mutation_rate", d.initial_mutation_rate)?,
            mutation_rate_bounds: (
                ini.or("ga", "mutation_rate_min", d.mutation_rate_bounds.0)?,
                ini.or("ga", "mutation_rate_max", d.mutation_rate_bounds.1)?,
            ),
            rechenberg_factor: ini.or("ga", "rechenberg_factor", d.rechenberg_factor)?,
            patience: ini.get_with("ga", "patience", parse_patience)?.unwrap_or(d.patience),
            rng_seed: seed,
            workers: d.workers,
        };

        let fd = FTConfig::default();
        let ft = FTConfig {
            k_weight: ini.or("ft", "k_weight", fd.k_weight)?,
            window: ini.or::<Window>("ft", "window", fd.window)?,
            window_sill: ini.or("ft", "window_sill", fd.window_sill)?,
            k_range: (ini.or("ft", "k_min", fd.k_range.0)?, ini.or("ft", "k_max", fd.k_range.1)?),
            n_fft: ini.or("ft", "n_fft", fd.n_fft)?,
            r_range: (ini.or("ft", "r_min", fd.r_range.0)?, ini.or("ft", "r_max", fd.r_range.1)?),
        };

        let n_indep = ini.get_with("fitness", "n_indep", parse_indep)?;
        let ratio = ini.get::<f64>("fitness", "n_indep_ratio")?;
        let n_indep = match (n_indep, ratio) {
            (Some(_), Some(_)) => {
                return Err(CliError::config_at(
                    &file,
                    ini.line_of("fitness", "n_indep_ratio").unwrap_or(0),
                    "[fitness] n_indep and n_indep_ratio are mutually exclusive",
                ))
            }
            (Some(n), None) => n,
            (None, Some(r)) => IndepPoints::Ratio(r),
            (None, None) => IndepPoints::All,
        };
        let epsilon = ini.get_with("fitness", "epsilon", parse_epsilon)?.unwrap_or(Some(1.0));
        let fitness = FitnessConfig {
            space: ini.or::<FitSpace>("fitness", "space", FitSpace::K)?,
            n_indep,
            epsilon: Epsilon::Scalar(epsilon.unwrap_or(1.0)),
            k_weight: ini.or("fitness", "k_weight", 2u32)?,
            ft,
        };

        let gb = GeneBounds::default();
        let gene = |prefix: &str, default: &GeneSpec| -> Result<GeneSpec, CliError> {
            let lower = ini.or("genes", &format!("{prefix}_min"), default.lower)?;
            let upper = ini.or("genes", &format!("{prefix}_max"), default.upper)?;
            let step = ini.or("genes", &format!("{prefix}_step"), default.step)?;
            GeneSpec::new(default.name.clone(), lower, upper, step).map_err(|e| {
                let line = ini
                    .line_of("genes", &format!("{prefix}_min"))
                    .or_else(|| ini.line_of("genes", &format!("{prefix}_max")))
                    .or_else(|| ini.line_of("genes", &format!("{prefix}_step")))
                    .unwrap_or(0);
                CliError::config_at(&file, line, e.to_string())
            })
        };
        let bounds = GeneBounds {
            delta_e0: gene("e0", &gb.delta_e0)?,
            s02: gene("s02", &gb.s02)?,
            sigma2: gene("sigma2", &gb.sigma2)?,
            delta_r: gene("delta_r", &gb.delta_r)?,
        };

        let cutoff = CutoffSettings {
            percents: ini.list("cutoff", "percents")?.unwrap_or_else(|| vec![1.0, 5.0, 10.0]),
            repeats: ini.or("cutoff", "repeats", 10usize)?,
        };

        let hd = HyperRanges::default();
        let error = ErrorSettings {
            runs: ini.or("error", "runs", 20usize)?,
            ranges: HyperRanges {
                population: (
                    ini.or("error", "population_min", hd.population.0)?,
                    ini.or("error", "population_max", hd.population.1)?,
                ),
                generations: (
                    ini.or("error", "generations_min", hd.generations.0)?,
                    ini.or("error", "generations_max", hd.generations.1)?,
                ),
                mutation_rate: (
                    ini.or("error", "mutation_min", hd.mutation_rate.0)?,
                    ini.or("error", "mutation_max", hd.mutation_rate.1)?,
                ),
            },
        };

        let synth = SynthSettings {
            e0: ini.or("synth", "e0", 0.0)?,
            s02: ini.list("synth", "s02")?.unwrap_or_default(),
            sigma2: ini.list("synth", "sigma2")?.unwrap_or_default(),
            delta_r: ini.list("synth", "delta_r")?.unwrap_or_default(),
            snr: ini.get_with("synth", "snr", |v| {
                if v.eq_ignore_ascii_case("none") {
                    return Ok(None);
                }
                match v.parse::<f64>() {
                    Ok(s) if s > 0.0 => Ok(Some(s)),
                    _ => Err(format!("expected 'none' or a positive number, got '{v}'")),
                }
            })?
            .flatten(),
            output: ini.or("synth", "output", "synth.chi".to_string())?,
        };

        let benchmark = BenchmarkSettings {
            n_paths: ini.list("benchmark", "n_paths")?.unwrap_or_else(|| vec![5, 10, 20, 40, 80]),
            population: ini.or("benchmark", "population", 200usize)?,
            generations: ini.or("benchmark", "generations", 5usize)?,
            repeats: ini.or("benchmark", "repeats", 3usize)?,
        };

        ini.reject_unused()?;

        let cfg = RunConfig {
            source: source.to_path_buf(),
            mode,
            data_file,
            path_manifest,
            output_dir,
            seed,
            grid,
            ga,
            fitness,
            epsilon_auto: epsilon.is_none(),
            bounds,
            cutoff,
            error,
            synth,
            benchmark,
        };
        cfg.validate(&ini)?;
        Ok(cfg)
    }

    fn validate(&self, ini: &Ini) -> Result<(), CliError> {
        let file = &ini.file;
        let at = |section: &str, key: &str, msg: String| {
            CliError::config_at(file, ini.line_of(section, key).unwrap_or(0), msg)
        };
        self.ga
            .validate()
            .map_err(|e| at("ga", "population_size", e.to_string()))?;
        self.fitness
            .ft
            .validate()
            .map_err(|e| at("ft", "k_min", e.to_string()))?;
        if self.fitness.k_weight > 3 {
            return Err(at("fitness", "k_weight", "[fitness] k_weight must be in 0..=3".into()));
        }
        if let IndepPoints::Ratio(r) = self.fitness.n_indep {
            if !(r > 0.0 && r <= 1.0) {
                return Err(at("fitness", "n_indep_ratio", format!("[fitness] n_indep_ratio must be in (0, 1], got {r}")));
            }
        }
        if !(self.grid.delta_k > 0.0) {
            return Err(at("grid", "delta_k", "[grid] delta_k must be > 0".into()));
        }
        if self.cutoff.percents.iter().any(|p| !(0.0..=100.0).contains(p)) {
            return Err(at("cutoff", "percents", "[cutoff] percents must lie in [0, 100]".into()));
        }
        if self.cutoff.repeats == 0 {
            return Err(at("cutoff", "repeats", "[cutoff] repeats must be >= 1".into()));
        }
        if self.error.runs < 2 {
            return Err(at("error", "runs", "[error] runs must be >= 2".into()));
        }
        let r = &self.error.ranges;
        if r.population.0 < 2 || r.population.0 > r.population.1 {
            return Err(at("error", "population_min", "[error] population range is empty or below 2".into()));
        }
        if r.generations.0 < 1 || r.generations.0 > r.generations.1 {
            return Err(at("error", "generations_min", "[error] generations range is empty or below 1".into()));
        }
        let (m0, m1) = r.mutation_rate;
        if !(0.0..=100.0).contains(&m0) || !(0.0..=100.0).contains(&m1) || m0 > m1 {
            return Err(at("error", "mutation_min", "[error] mutation range must lie in [0, 100]".into()));
        }
        let n = self.synth.s02.len();
        if self.synth.sigma2.len() != n || self.synth.delta_r.len() != n {
            return Err(at(
                "synth",
                "s02",
                "[synth] s02, sigma2 and delta_r must list the same number of paths".into(),
            ));
        }
        if self.benchmark.n_paths.contains(&0) || self.benchmark.repeats == 0 || self.benchmark.generations == 0 {
            return Err(at("benchmark", "n_paths", "[benchmark] n_paths, repeats and generations must be >= 1".into()));
        }
        Ok(())
    }

    /// Checks that the inputs `mode` needs are configured and exist.
    pub fn require_inputs(&self, mode: Mode) -> Result<(), CliError> {
        let need = |p: &Option<PathBuf>, key: &str| -> Result<(), CliError> {
            let location = self.source.display().to_string();
            match p {
                None => Err(CliError::Config {
                    location,
                    message: format!("mode {} needs [run] {key}", mode.name()),
                }),
                Some(p) if !p.is_file() => Err(CliError::Config {
                    location,
                    message: format!("[run] {key}: {} does not exist", p.display()),
                }),
                Some(_) => Ok(()),
            }
        };
        match mode {
            Mode::Fit | Mode::CutoffSweep | Mode::ErrorAnalysis => {
                need(&self.data_file, "data_file")?;
                need(&self.path_manifest, "path_manifest")
            }
            Mode::Synth => {
                need(&self.path_manifest, "path_manifest")?;
                if self.synth.s02.is_empty() {
                    return Err(CliError::Config {
                        location: self.source.display().to_string(),
                        message: "mode synth needs [synth] s02, sigma2 and delta_r".into(),
                    });
                }
                Ok(())
            }
            Mode::Benchmark => Ok(()),
        }
    }
}
