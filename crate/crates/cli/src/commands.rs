//! The `simulate`, `reconstruct`, `batch` and `metrics` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gps_core::grid::{Field, Lattice, SupportMask};
use gps_core::metrics::{iqr, median, r_real_embedded, Histogram};
use gps_core::prox::phase_factor;
use gps_core::sim::{calibrate_flux, make_phantom, oversample, r_noise, simulate_magnitudes};
use gps_core::solver::run_from;
use gps_core::{
    aggregate_embedded, dft2, residual, rf_factor, run, sigma_at, Algorithm, BatchSummary, Domain, MagnitudeData,
    NoiseSpec, RunRecord, SolverConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::raw::{read_array, write_raw, RawArray};

/// Magnitudes, support and (for synthetic data) the true object.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub data: MagnitudeData,
    pub support: SupportMask,
    /// Real-space truth on the detector lattice.
    pub truth: Option<Field>,
    pub noise: Option<NoiseReport>,
}

/// How synthetic magnitudes were corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    /// Poisson flux used, absent for noiseless data.
    pub flux: Option<f64>,
    pub r_noise: f64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a ExperimentConfig,
    lattice: [usize; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<NoiseReport>,
    files: &'a [&'a str],
}

fn write_manifest(cfg: &ExperimentConfig, command: &str, ds: &Dataset, files: &[&str]) -> CliResult<()> {
    let l = ds.data.lattice();
    let m = Manifest {
        command,
        config: cfg,
        lattice: [l.rows(), l.cols()],
        noise: ds.noise,
        files,
    };
    write_json(&cfg.output.join("manifest.json"), &m)
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(CliError::io(path))
}

fn create_output(cfg: &ExperimentConfig) -> CliResult<()> {
    fs::create_dir_all(&cfg.output).map_err(CliError::io(&cfg.output))
}

fn sibling(magnitudes: &Path, name: &str) -> Option<PathBuf> {
    let p = magnitudes.with_file_name(name);
    p.exists().then_some(p)
}

fn check_lattice(what: &str, l: Lattice, expected: Lattice) -> CliResult<()> {
    if l != expected {
        return Err(CliError::Data(format!("{what} is {l}, magnitudes are {expected}")));
    }
    Ok(())
}

/// Builds the dataset described by `cfg`, simulating it for a phantom.
pub fn load_dataset(cfg: &ExperimentConfig) -> CliResult<Dataset> {
    let mut ds = match (&cfg.phantom, &cfg.magnitudes) {
        (Some(_), _) => simulate_dataset(cfg)?,
        (None, Some(path)) => read_dataset(cfg, path)?,
        (None, None) => return Err(CliError::Usage("no data source given".into())),
    };
    if let Some(path) = &cfg.support_file {
        let s = read_array(path)?.to_support()?;
        check_lattice("support", s.lattice(), ds.data.lattice())?;
        ds.support = s;
    }
    Ok(ds)
}

fn simulate_dataset(cfg: &ExperimentConfig) -> CliResult<Dataset> {
    let kind = cfg.phantom.expect("phantom source");
    let object = Lattice::new(cfg.object_size, cfg.object_size)?;
    let phantom = make_phantom(kind, object, cfg.phantom_seed)?;
    let (u0, support) = oversample(&phantom, cfg.oversample, cfg.support_margin)?;
    let noise = if cfg.noiseless {
        NoiseSpec::noiseless()
    } else {
        let flux = match cfg.flux {
            Some(f) => f,
            None => calibrate_flux(&u0, cfg.target_rnoise, cfg.readout, cfg.beamstop, cfg.noise_seed)?.flux,
        };
        NoiseSpec {
            flux,
            readout_sigma: cfg.readout,
            poisson_enabled: true,
            seed: cfg.noise_seed,
        }
    };
    let data = simulate_magnitudes(&u0, &noise, cfg.beamstop)?;
    let report = NoiseReport {
        flux: noise.poisson_enabled.then_some(noise.flux),
        r_noise: r_noise(&data, &u0)?,
    };
    Ok(Dataset {
        data,
        support,
        truth: Some(u0),
        noise: Some(report),
    })
}

fn read_dataset(cfg: &ExperimentConfig, path: &Path) -> CliResult<Dataset> {
    let mags = read_array(path)?;
    let l = mags.lattice()?;
    let b = mags.to_f64()?;
    let measured = match cfg.datamask.clone().or_else(|| sibling(path, "datamask.raw")) {
        Some(p) => {
            let m = read_array(&p)?;
            check_lattice("data mask", m.lattice()?, l)?;
            m.to_mask()
        }
        None => vec![true; l.len()],
    };
    let data = MagnitudeData::new(l, b, measured)?;
    let support = match sibling(path, "support.raw") {
        Some(p) if cfg.support_file.is_none() => {
            let s = read_array(&p)?.to_support()?;
            check_lattice("support", s.lattice(), l)?;
            s
        }
        _ => {
            let side = |n: usize| ((n as f64 / cfg.oversample).round() as usize + 2 * cfg.support_margin).clamp(1, n);
            SupportMask::centered_rect(l, side(l.rows()), side(l.cols()))?
        }
    };
    let truth = match cfg.truth.clone().or_else(|| sibling(path, "truth.raw")) {
        Some(p) => {
            let t = read_array(&p)?.to_field()?;
            check_lattice("truth", t.lattice(), l)?;
            Some(t)
        }
        None => None,
    };
    Ok(Dataset {
        data,
        support,
        truth,
        noise: None,
    })
}

/// Writes the synthetic dataset: `truth.raw`, `magnitudes.raw`,
/// `datamask.raw`, `support.raw` and `manifest.json`.
pub fn simulate(cfg: &ExperimentConfig) -> CliResult<Dataset> {
    if cfg.phantom.is_none() {
        return Err(CliError::Usage("simulate needs --phantom".into()));
    }
    let ds = load_dataset(cfg)?;
    create_output(cfg)?;
    let l = ds.data.lattice();
    let out = &cfg.output;
    write_raw(&out.join("truth.raw"), &RawArray::from_real(ds.truth.as_ref().expect("synthetic truth")))?;
    write_raw(&out.join("magnitudes.raw"), &RawArray::from_f64(l, ds.data.magnitudes().to_vec()))?;
    write_raw(&out.join("datamask.raw"), &RawArray::from_mask(l, ds.data.measured()))?;
    write_raw(&out.join("support.raw"), &RawArray::from_mask(l, ds.support.as_slice()))?;
    write_manifest(
        cfg,
        "simulate",
        &ds,
        &["truth.raw", "magnitudes.raw", "datamask.raw", "support.raw"],
    )?;
    Ok(ds)
}

/// Summary metrics of one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub best_rf: f64,
    pub best_iteration: usize,
    pub iterations_run: usize,
    /// Real-space error against the truth, when one is known.
    pub r_real: Option<f64>,
    /// `|| |F u| - b ||` of the final image over measured pixels.
    pub residual: f64,
}

impl RunMetrics {
    pub fn of(record: &RunRecord, ds: &Dataset) -> CliResult<Self> {
        Ok(Self {
            algorithm: record.config_echo.algorithm,
            seed: record.config_echo.seed,
            best_rf: record.best_rf,
            best_iteration: record.best_iteration,
            iterations_run: record.iterations_run,
            r_real: ds
                .truth
                .as_ref()
                .map(|t| r_real_embedded(&record.final_image, t))
                .transpose()?,
            residual: residual(&record.final_image, &ds.data, Domain::Real)?,
        })
    }
}

/// Fourier-domain start carrying the true phases, with measured magnitudes
/// where available.
pub fn truth_phase_start(truth: &Field, data: &MagnitudeData) -> Field {
    let mut z = dft2(truth);
    for (i, (v, &b)) in z.values_mut().iter_mut().zip(data.magnitudes()).enumerate() {
        if data.is_measured(i) {
            *v = phase_factor(*v) * b;
        }
    }
    z
}

fn run_one(ds: &Dataset, config: &SolverConfig, from_truth: bool) -> CliResult<RunRecord> {
    if from_truth {
        let truth = ds
            .truth
            .as_ref()
            .ok_or_else(|| CliError::Usage("--init-from-truth needs a truth".into()))?;
        Ok(run_from(&ds.data, &ds.support, config, truth_phase_start(truth, &ds.data))?)
    } else {
        Ok(run(&ds.data, &ds.support, config)?)
    }
}

/// Per-iteration trace as CSV: `iteration,rf,sigma,gamma,cutoff,stage`.
/// Baselines have no fidelity weight and report `sigma = 0`.
pub fn trace_csv(record: &RunRecord) -> String {
    let c = &record.config_echo;
    let sched = &c.schedule;
    let gps = c.algorithm.gps_variant().is_some();
    let mut out = String::from("iteration,rf,sigma,gamma,cutoff,stage\n");
    for (it, rf) in record.rf_trace.iter().enumerate() {
        let stage = sched.stage_of(it);
        let sigma = if gps { sigma_at(sched, it) } else { 0.0 };
        let _ = writeln!(
            out,
            "{it},{rf},{sigma},{},{},{stage}",
            sched.gamma_per_stage[stage], sched.cutoff_per_stage[stage]
        );
    }
    out
}

fn warn(config: &SolverConfig) {
    for w in config.warnings() {
        eprintln!("warning: {w}");
    }
}

/// Output of [`reconstruct`].
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub record: RunRecord,
    pub metrics: RunMetrics,
}

/// Single seeded run. Writes `recon.raw`, `rf_trace.csv`, `metrics.json` and
/// `manifest.json`.
pub fn reconstruct(cfg: &ExperimentConfig) -> CliResult<Reconstruction> {
    let ds = load_dataset(cfg)?;
    let config = cfg.solver_config(ds.data.lattice(), cfg.seed)?;
    warn(&config);
    let record = run_one(&ds, &config, cfg.init_from_truth)?;
    let metrics = RunMetrics::of(&record, &ds)?;
    create_output(cfg)?;
    let out = &cfg.output;
    write_raw(&out.join("recon.raw"), &RawArray::from_real(&record.final_image))?;
    write_text(&out.join("rf_trace.csv"), &trace_csv(&record))?;
    write_json(&out.join("metrics.json"), &metrics)?;
    write_manifest(
        cfg,
        "reconstruct",
        &ds,
        &["recon.raw", "rf_trace.csv", "metrics.json"],
    )?;
    Ok(Reconstruction { record, metrics })
}

/// Failed run within a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub succeeded: usize,
    pub failures: Vec<RunFailure>,
    pub k: usize,
    pub rf_mean_topk: f64,
    pub rf_std_topk: f64,
    pub rf_median: f64,
    pub rf_iqr: f64,
    pub r_real_median: Option<f64>,
    pub best_seed: u64,
}

/// Output of [`batch`]; `summary` is absent when every run failed.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub summary: Option<BatchSummary>,
    pub report: Option<BatchReport>,
    pub failures: Vec<RunFailure>,
}

/// Independent runs with seeds `seed .. seed + runs - 1` on a pool of
/// `workers` threads. Results are ordered by seed, so every output file is
/// independent of the worker count. Writes `batch.csv`, `histogram.csv`,
/// `convergence_best.csv`, `summary.json` and `manifest.json`; fails with
/// [`CliError::PartialBatch`] after writing them if any run failed.
pub fn batch(cfg: &ExperimentConfig) -> CliResult<BatchOutcome> {
    let ds = load_dataset(cfg)?;
    let lattice = ds.data.lattice();
    let configs = (0..cfg.runs as u64)
        .map(|i| cfg.solver_config(lattice, cfg.seed + i))
        .collect::<CliResult<Vec<_>>>()?;
    warn(&configs[0]);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let results: Vec<CliResult<RunRecord>> =
        pool.install(|| configs.par_iter().map(|c| run_one(&ds, c, cfg.init_from_truth)).collect());

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut csv = String::from("seed,status,best_rf,best_iteration,r_real,residual\n");
    for (config, result) in configs.iter().zip(results) {
        let seed = config.seed;
        match result.and_then(|r| RunMetrics::of(&r, &ds).map(|m| (r, m))) {
            Ok((record, m)) => {
                let r_real = m.r_real.map_or(String::new(), |v| v.to_string());
                let _ = writeln!(
                    csv,
                    "{seed},ok,{},{},{r_real},{}",
                    m.best_rf, m.best_iteration, m.residual
                );
                records.push(record);
            }
            Err(e) => {
                let error = e.to_string();
                let _ = writeln!(csv, "{seed},failed,,,,");
                failures.push(RunFailure { seed, error });
            }
        }
    }

    create_output(cfg)?;
    let out = &cfg.output;
    write_text(&out.join("batch.csv"), &csv)?;
    let mut files = vec!["batch.csv"];
    let (summary, report) = if records.is_empty() {
        (None, None)
    } else {
        let k = cfg.topk.min(records.len());
        let summary = aggregate_embedded(&records, &ds.data, ds.truth.as_ref(), k)?;
        let rfs: Vec<f64> = summary.per_run.iter().map(|r| r.best_rf).collect();
        let reals: Vec<f64> = summary.per_run.iter().filter_map(|r| r.r_real).collect();
        let report = BatchReport {
            algorithm: cfg.algorithm,
            runs: cfg.runs,
            succeeded: records.len(),
            failures: failures.clone(),
            k,
            rf_mean_topk: summary.rf_mean_topk,
            rf_std_topk: summary.rf_std_topk,
            rf_median: median(&rfs),
            rf_iqr: iqr(&rfs),
            r_real_median: (!reals.is_empty()).then(|| median(&reals)),
            best_seed: summary.best_seed,
        };
        write_text(&out.join("histogram.csv"), &histogram_csv(&summary.rf_histogram))?;
        write_text(&out.join("convergence_best.csv"), &convergence_csv(&summary.best_trace))?;
        write_json(&out.join("summary.json"), &report)?;
        files.extend(["histogram.csv", "convergence_best.csv", "summary.json"]);
        (Some(summary), Some(report))
    };
    write_manifest(cfg, "batch", &ds, &files)?;
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("run {} failed: {}", f.seed, f.error);
        }
        return Err(CliError::PartialBatch {
            failed: failures.len(),
            total: cfg.runs,
        });
    }
    Ok(BatchOutcome {
        summary,
        report,
        failures,
    })
}

fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_start,bin_end,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let (lo, hi) = h.edges(i);
        let _ = writeln!(out, "{lo},{hi},{c}");
    }
    out
}

fn convergence_csv(trace: &[f64]) -> String {
    let mut out = String::from("iteration,rf,best_rf\n");
    let mut best = f64::INFINITY;
    for (it, &rf) in trace.iter().enumerate() {
        best = best.min(rf);
        let _ = writeln!(out, "{it},{rf},{best}");
    }
    out
}

/// Metrics of a stored reconstruction against the configured data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub rf: f64,
    pub r_real: Option<f64>,
    pub residual: f64,
}

/// Scores the real-space image in `recon` and writes `metrics.json`.
pub fn metrics(cfg: &ExperimentConfig, recon: &Path) -> CliResult<ImageMetrics> {
    let ds = load_dataset(cfg)?;
    let image = read_array(recon)?.to_field()?;
    check_lattice("reconstruction", image.lattice(), ds.data.lattice())?;
    let m = ImageMetrics {
        rf: rf_factor(&dft2(&image), &ds.data)?,
        r_real: ds.truth.as_ref().map(|t| r_real_embedded(&image, t)).transpose()?,
        residual: residual(&image, &ds.data, Domain::Real)?,
    };
    create_output(cfg)?;
    write_json(&cfg.output.join("metrics.json"), &m)?;
    Ok(m)
}
