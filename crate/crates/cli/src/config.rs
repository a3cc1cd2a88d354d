//! Experiment configuration: command-line flags merged over an optional JSON
//! file, merged over built-in defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use gps_core::grid::Lattice;
use gps_core::{Algorithm, PhantomKind, Schedule, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Piecewise-constant fidelity weight, written `start:sigma,start:sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SigmaSchedule(pub Vec<(usize, f64)>);

impl FromStr for SigmaSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|pair| {
                let (it, sigma) = pair
                    .split_once(':')
                    .ok_or_else(|| format!("'{pair}' is not of the form iteration:sigma"))?;
                let it = it.trim().parse().map_err(|_| format!("bad iteration '{it}'"))?;
                let sigma = sigma.trim().parse().map_err(|_| format!("bad sigma '{sigma}'"))?;
                Ok((it, sigma))
            })
            .collect::<Result<_, _>>()
            .map(SigmaSchedule)
    }
}

impl TryFrom<String> for SigmaSchedule {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl fmt::Display for SigmaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(i, s)| format!("{i}:{s}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl From<SigmaSchedule> for String {
    fn from(s: SigmaSchedule) -> String {
        s.to_string()
    }
}

/// Comma-separated per-stage values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StageValues(pub Vec<f64>);

impl FromStr for StageValues {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|v| v.trim().parse().map_err(|_| format!("bad value '{v}'")))
            .collect::<Result<_, _>>()
            .map(StageValues)
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: gps_core::Error| e.to_string())
}

fn parse_phantom(s: &str) -> Result<PhantomKind, String> {
    s.parse().map_err(|e: gps_core::Error| e.to_string())
}

/// Every experiment setting, each optional so that layers can be merged.
/// The same struct is the command-line surface and the JSON config format.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    /// JSON config file; explicit flags take precedence over its values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// er, hio, oss, gps-r, gps-f or gps-rf.
    #[arg(long, value_parser = parse_algorithm)]
    pub algorithm: Option<Algorithm>,
    /// Total iterations, split evenly across stages.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub stages: Option<usize>,
    /// Dual step size s.
    #[arg(long = "step-s")]
    pub step_s: Option<f64>,
    /// Primal step size t.
    #[arg(long = "step-t")]
    pub step_t: Option<f64>,
    /// Fidelity weight schedule, e.g. "0:0.01,400:0.1".
    #[arg(long = "sigma-schedule")]
    pub sigma_schedule: Option<SigmaSchedule>,
    /// Fourier smoothing weight per stage, comma separated.
    #[arg(long = "gamma-schedule")]
    pub gamma_schedule: Option<StageValues>,
    /// Low-pass cutoff per stage in frequency pixels, comma separated.
    #[arg(long = "cutoff-schedule")]
    pub cutoff_schedule: Option<StageValues>,
    /// Use the exact rational Fourier smoothing instead of the exponential.
    #[arg(long = "exact-fourier-prox", num_args = 0..=1, default_missing_value = "true")]
    pub exact_fourier_prox: Option<bool>,
    /// HIO/OSS feedback parameter.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Solver seed; a batch uses seed .. seed + runs - 1.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Number of best runs summarised by a batch.
    #[arg(long)]
    pub topk: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,

    /// Synthetic object: vesicle or disks.
    #[arg(long, value_parser = parse_phantom)]
    pub phantom: Option<PhantomKind>,
    #[arg(long = "phantom-seed")]
    pub phantom_seed: Option<u64>,
    /// Side length of the square object lattice.
    #[arg(long = "object-size")]
    pub object_size: Option<usize>,
    /// Linear oversampling ratio of the detector lattice.
    #[arg(long)]
    pub oversample: Option<f64>,

    /// Measured magnitudes (raw or CSV) instead of a synthetic object.
    /// Sibling datamask.raw, support.raw and truth.raw are picked up when present.
    #[arg(long)]
    pub magnitudes: Option<PathBuf>,
    #[arg(long)]
    pub datamask: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Support mask file; overrides the rectangular support.
    #[arg(long = "support-file")]
    pub support_file: Option<PathBuf>,
    /// Extra pixels on each side of the object rectangle.
    #[arg(long = "support-margin")]
    pub support_margin: Option<usize>,

    /// Beamstop radius in frequency pixels.
    #[arg(long)]
    pub beamstop: Option<f64>,
    /// Poisson flux; overrides calibration to a target noise level.
    #[arg(long)]
    pub flux: Option<f64>,
    /// Gaussian readout noise standard deviation, in photons.
    #[arg(long)]
    pub readout: Option<f64>,
    /// Relative noise level the flux is calibrated to.
    #[arg(long = "target-rnoise")]
    pub target_rnoise: Option<f64>,
    /// Simulate exact magnitudes.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub noiseless: Option<bool>,
    #[arg(long = "noise-seed")]
    pub noise_seed: Option<u64>,

    /// Start from the true phases instead of random ones (needs a truth).
    #[arg(long = "init-from-truth", num_args = 0..=1, default_missing_value = "true")]
    pub init_from_truth: Option<bool>,

    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($top:expr, $base:expr; $($f:ident),* $(,)?) => {
        Options { config: $top.config.or($base.config), $($f: $top.$f.or($base.$f)),* }
    };
}

impl Options {
    /// Values of `self` where set, otherwise those of `base`.
    pub fn over(self, base: Options) -> Options {
        merge_fields!(self, base;
            algorithm, iterations, stages, step_s, step_t, sigma_schedule, gamma_schedule,
            cutoff_schedule, exact_fourier_prox, beta, seed, runs, topk, workers, phantom,
            phantom_seed, object_size, oversample, magnitudes, datamask, truth, support_file,
            support_margin, beamstop, flux, readout, target_rnoise, noiseless, noise_seed,
            init_from_truth, output)
    }

    /// Reads a JSON config. A manifest written by a previous command is
    /// accepted as well: its `config` member is used.
    pub fn from_json_file(path: &Path) -> CliResult<Options> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        let mut opts: Options =
            serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        // Relative paths inside a config file are relative to the file.
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut opts.magnitudes,
            &mut opts.datamask,
            &mut opts.truth,
            &mut opts.support_file,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(opts)
    }

    /// Flags over the config file (if any) over defaults.
    pub fn resolve(self) -> CliResult<ExperimentConfig> {
        let layered = match &self.config {
            Some(path) => self.clone().over(Options::from_json_file(path)?),
            None => self,
        };
        ExperimentConfig::from_options(layered)
    }
}

/// Fully resolved experiment settings. Serialises to a JSON document that
/// [`Options`] reads back, so a manifest can be replayed with `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub stages: usize,
    pub step_s: f64,
    pub step_t: f64,
    pub sigma_schedule: SigmaSchedule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_schedule: Option<StageValues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff_schedule: Option<StageValues>,
    pub exact_fourier_prox: bool,
    pub beta: f64,
    pub seed: u64,
    pub runs: usize,
    pub topk: usize,
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phantom: Option<PhantomKind>,
    pub phantom_seed: u64,
    pub object_size: usize,
    pub oversample: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub magnitudes: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub datamask: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_file: Option<PathBuf>,
    pub support_margin: usize,
    pub beamstop: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flux: Option<f64>,
    pub readout: f64,
    pub target_rnoise: f64,
    pub noiseless: bool,
    pub noise_seed: u64,
    pub init_from_truth: bool,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::GpsF,
            iterations: 1000,
            stages: 10,
            step_s: 0.9,
            step_t: 1.0,
            sigma_schedule: SigmaSchedule(vec![(0, 0.01), (400, 0.1)]),
            gamma_schedule: None,
            cutoff_schedule: None,
            exact_fourier_prox: false,
            beta: 0.9,
            seed: 0,
            runs: 1,
            topk: 5,
            workers: 1,
            phantom: None,
            phantom_seed: 1,
            object_size: 64,
            oversample: 2.0,
            magnitudes: None,
            datamask: None,
            truth: None,
            support_file: None,
            support_margin: 0,
            beamstop: 0.0,
            flux: None,
            readout: 0.0,
            target_rnoise: 0.05,
            noiseless: false,
            noise_seed: 1000,
            init_from_truth: false,
            output: PathBuf::from("out"),
        }
    }
}

/// Input paths are stored absolute so that an echoed config stays valid
/// wherever it is replayed from.
fn absolute(p: Option<PathBuf>) -> CliResult<Option<PathBuf>> {
    p.map(|p| std::path::absolute(&p).map_err(CliError::io(p))).transpose()
}

impl ExperimentConfig {
    pub fn from_options(o: Options) -> CliResult<Self> {
        let d = Self::default();
        let cfg = Self {
            algorithm: o.algorithm.unwrap_or(d.algorithm),
            iterations: o.iterations.unwrap_or(d.iterations),
            stages: o.stages.unwrap_or(d.stages),
            step_s: o.step_s.unwrap_or(d.step_s),
            step_t: o.step_t.unwrap_or(d.step_t),
            sigma_schedule: o.sigma_schedule.unwrap_or(d.sigma_schedule),
            gamma_schedule: o.gamma_schedule,
            cutoff_schedule: o.cutoff_schedule,
            exact_fourier_prox: o.exact_fourier_prox.unwrap_or(d.exact_fourier_prox),
            beta: o.beta.unwrap_or(d.beta),
            seed: o.seed.unwrap_or(d.seed),
            runs: o.runs.unwrap_or(d.runs),
            topk: o.topk.unwrap_or(d.topk),
            workers: o.workers.unwrap_or(d.workers),
            phantom: o.phantom,
            phantom_seed: o.phantom_seed.unwrap_or(d.phantom_seed),
            object_size: o.object_size.unwrap_or(d.object_size),
            oversample: o.oversample.unwrap_or(d.oversample),
            magnitudes: absolute(o.magnitudes)?,
            datamask: absolute(o.datamask)?,
            truth: absolute(o.truth)?,
            support_file: absolute(o.support_file)?,
            support_margin: o.support_margin.unwrap_or(d.support_margin),
            beamstop: o.beamstop.unwrap_or(d.beamstop),
            flux: o.flux,
            readout: o.readout.unwrap_or(d.readout),
            target_rnoise: o.target_rnoise.unwrap_or(d.target_rnoise),
            noiseless: o.noiseless.unwrap_or(d.noiseless),
            noise_seed: o.noise_seed.unwrap_or(d.noise_seed),
            init_from_truth: o.init_from_truth.unwrap_or(d.init_from_truth),
            output: o.output.unwrap_or(d.output),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> CliResult<()> {
        let usage = |m: &str| Err(CliError::Usage(m.into()));
        if self.phantom.is_some() == self.magnitudes.is_some() {
            return usage("give exactly one of --phantom and --magnitudes");
        }
        if self.stages == 0 || self.iterations % self.stages != 0 {
            return usage("--iterations must be a multiple of a nonzero --stages");
        }
        if self.runs == 0 || self.workers == 0 {
            return usage("--runs and --workers must be positive");
        }
        if self.topk == 0 {
            return usage("--topk must be positive");
        }
        if self.flux.is_some_and(|f| !(f > 0.0 && f.is_finite())) {
            return usage("--flux must be positive");
        }
        if !(self.readout >= 0.0 && self.beamstop >= 0.0) {
            return usage("--readout and --beamstop must be nonnegative");
        }
        Ok(())
    }

    /// Solver settings for `lattice` and `seed`; the resulting schedule is
    /// validated.
    pub fn solver_config(&self, lattice: Lattice, seed: u64) -> CliResult<SolverConfig> {
        let mut schedule = Schedule::with_stages(lattice, self.step_s, self.stages, self.iterations / self.stages);
        schedule.sigma_breakpoints = self.sigma_schedule.0.clone();
        if let Some(g) = &self.gamma_schedule {
            schedule.gamma_per_stage = g.0.clone();
        }
        if let Some(c) = &self.cutoff_schedule {
            schedule.cutoff_per_stage = c.0.clone();
        }
        let config = SolverConfig {
            algorithm: self.algorithm,
            s: self.step_s,
            t: self.step_t,
            beta: self.beta,
            schedule,
            seed,
            exact_fourier_prox: self.exact_fourier_prox,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_schedule_round_trips_through_text() {
        let s: SigmaSchedule = "0:0.01, 400:0.1".parse().unwrap();
        assert_eq!(s.0, vec![(0, 0.01), (400, 0.1)]);
        assert_eq!(s.to_string().parse::<SigmaSchedule>().unwrap(), s);
        assert!("0-0.1".parse::<SigmaSchedule>().is_err());
        assert!("x:1".parse::<SigmaSchedule>().is_err());
    }

    #[test]
    fn flags_override_file_values_override_defaults() {
        let file = Options {
            algorithm: Some(Algorithm::Hio),
            iterations: Some(200),
            phantom: Some(PhantomKind::Disks),
            ..Default::default()
        };
        let flags = Options {
            iterations: Some(300),
            stages: Some(3),
            ..Default::default()
        };
        let cfg = ExperimentConfig::from_options(flags.over(file)).unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Hio);
        assert_eq!((cfg.iterations, cfg.stages), (300, 3));
        assert_eq!(cfg.step_s, 0.9);
    }

    #[test]
    fn resolved_config_reads_back_as_options() {
        let cfg = ExperimentConfig {
            phantom: Some(PhantomKind::Vesicle),
            gamma_schedule: Some(StageValues(vec![1.0, 0.5])),
            stages: 2,
            flux: Some(1e6),
            ..Default::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        let opts: Options = serde_json::from_str(&json).unwrap();
        assert_eq!(ExperimentConfig::from_options(opts).unwrap(), cfg);
    }

    #[test]
    fn rejects_inconsistent_settings() {
        let base = || Options {
            phantom: Some(PhantomKind::Disks),
            ..Default::default()
        };
        assert!(ExperimentConfig::from_options(Options::default()).is_err());
        let both = Options {
            magnitudes: Some("m.raw".into()),
            ..base()
        };
        assert!(ExperimentConfig::from_options(both).is_err());
        let uneven = Options {
            iterations: Some(1001),
            ..base()
        };
        assert!(ExperimentConfig::from_options(uneven).is_err());
        assert!(serde_json::from_str::<Options>(r#"{"algoritm":"er"}"#).is_err());
    }
}
