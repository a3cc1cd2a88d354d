//! Reconstruction engines.
//!
//! All algorithms share one contract: a staged schedule, a random-phase start
//! drawn from the configured seed, per-iteration R-factor monitoring of the
//! current estimate, restarts from the best iterate at every stage boundary,
//! and a [`RunRecord`] holding the trace and the best reconstruction.

mod baseline;
mod gps;
mod schedule;

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Lattice, SupportMask};
use crate::prox::MagnitudeData;

pub use baseline::{run_baseline, run_baseline_from};
pub use gps::{run_gps, run_gps_from, DualSmoother, PdhgState};
pub use schedule::{gamma_from_cutoff, sigma_at, Schedule, DEFAULT_ITERS_PER_STAGE, DEFAULT_STAGES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "er")]
    Er,
    #[serde(rename = "hio")]
    Hio,
    #[serde(rename = "oss")]
    Oss,
    #[serde(rename = "gps-r")]
    GpsR,
    #[serde(rename = "gps-f")]
    GpsF,
    #[serde(rename = "gps-rf")]
    GpsRf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Er,
        Algorithm::Hio,
        Algorithm::Oss,
        Algorithm::GpsR,
        Algorithm::GpsF,
        Algorithm::GpsRf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Er => "er",
            Algorithm::Hio => "hio",
            Algorithm::Oss => "oss",
            Algorithm::GpsR => "gps-r",
            Algorithm::GpsF => "gps-f",
            Algorithm::GpsRf => "gps-rf",
        }
    }

    pub fn gps_variant(self) -> Option<GpsVariant> {
        match self {
            Algorithm::GpsR => Some(GpsVariant::R),
            Algorithm::GpsF => Some(GpsVariant::F),
            Algorithm::GpsRf => Some(GpsVariant::Rf),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown algorithm '{s}' (expected one of er, hio, oss, gps-r, gps-f, gps-rf)"
                ))
            })
    }
}

/// Where the GPS dual smoothing acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpsVariant {
    /// Heat-kernel convolution of the dual variable.
    R,
    /// Radial Gaussian weighting of the dual variable.
    F,
    /// Radial weighting followed by heat-kernel convolution.
    Rf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Dual step size.
    pub s: f64,
    /// Primal step size.
    pub t: f64,
    /// HIO/OSS feedback parameter.
    pub beta: f64,
    pub schedule: Schedule,
    pub seed: u64,
    /// Use `1 / (1 + s gamma r^2)` instead of `exp(-s gamma r^2)` for the
    /// Fourier-space dual smoothing.
    #[serde(default)]
    pub exact_fourier_prox: bool,
}

impl SolverConfig {
    /// Defaults `s = 0.9`, `t = 1`, `beta = 0.9` and [`Schedule::default_for`].
    pub fn new(algorithm: Algorithm, lattice: Lattice, seed: u64) -> Self {
        let s = 0.9;
        Self {
            algorithm,
            s,
            t: 1.0,
            beta: 0.9,
            schedule: Schedule::default_for(lattice, s),
            seed,
            exact_fourier_prox: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) || !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step sizes must be positive, got s = {}, t = {}",
                self.s, self.t
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        self.schedule.validate()
    }

    /// Non-fatal configuration concerns.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.algorithm.gps_variant().is_some() && self.s * self.t > 1.0 {
            w.push(format!(
                "s * t = {} exceeds 1; the primal-dual iteration may not converge",
                self.s * self.t
            ));
        }
        w
    }
}

/// Outcome of one seeded reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// R-factor of the current estimate at every iteration.
    pub rf_trace: Vec<f64>,
    pub best_rf: f64,
    pub best_iteration: usize,
    /// Fourier-domain iterate at the best R-factor.
    pub best_iterate: Field,
    /// Real-space reconstruction: the best iterate projected onto the object
    /// constraint.
    pub final_image: Field,
    pub iterations_run: usize,
    pub config_echo: SolverConfig,
}

impl RunRecord {
    /// Running minimum of the trace.
    pub fn best_rf_trace(&self) -> Vec<f64> {
        self.rf_trace
            .iter()
            .scan(f64::INFINITY, |best, &r| {
                *best = best.min(r);
                Some(*best)
            })
            .collect()
    }
}

/// R-factor `sum | |z_i| - b_i | / sum b_i` over measured pixels.
pub fn rf_factor(z: &Field, data: &MagnitudeData) -> Result<f64> {
    data.lattice().check(z.lattice())?;
    let (num, den) = rf_sums(z.values(), data);
    if den <= 0.0 {
        return Err(Error::InvalidData(
            "measured magnitudes sum to zero; R-factor undefined".into(),
        ));
    }
    Ok(num / den)
}

fn rf_sums(z: &[Complex64], data: &MagnitudeData) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((v, &b), &m) in z.iter().zip(data.magnitudes()).zip(data.measured()) {
        if m {
            num += (v.norm() - b).abs();
            den += b;
        }
    }
    (num, den)
}

/// Random-phase start `z0 = b * exp(i theta)` with `theta` uniform on
/// `[0, 2 pi)`, drawn from a ChaCha8 stream seeded with `seed`.
pub fn random_phase_start(data: &MagnitudeData, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = data
        .magnitudes()
        .iter()
        .map(|&b| {
            let theta = rng.random::<f64>() * TAU;
            Complex64::from_polar(b, theta)
        })
        .collect();
    Field::from_parts_unchecked(data.lattice(), values)
}

/// Runs the algorithm selected in `config` from a random-phase start.
pub fn run(data: &MagnitudeData, support: &SupportMask, config: &SolverConfig) -> Result<RunRecord> {
    match config.algorithm.gps_variant() {
        Some(v) => run_gps(data, support, config, v),
        None => run_baseline(data, support, config),
    }
}

/// Like [`run`], from a caller-provided Fourier-domain start `z0`.
pub fn run_from(
    data: &MagnitudeData,
    support: &SupportMask,
    config: &SolverConfig,
    z0: Field,
) -> Result<RunRecord> {
    match config.algorithm.gps_variant() {
        Some(v) => run_gps_from(data, support, config, v, z0),
        None => run_baseline_from(data, support, config, z0),
    }
}

fn check_inputs(data: &MagnitudeData, support: &SupportMask, config: &SolverConfig, z0: &Field) -> Result<()> {
    data.lattice().check(support.lattice())?;
    data.lattice().check(z0.lattice())?;
    config.validate()?;
    let (_, den) = rf_sums(z0.values(), data);
    if den <= 0.0 {
        return Err(Error::InvalidData(
            "measured magnitudes sum to zero; R-factor undefined".into(),
        ));
    }
    Ok(())
}

/// Best-iterate bookkeeping shared by the engines.
struct Best<T> {
    rf: f64,
    iteration: usize,
    state: T,
}

impl<T: Clone> Best<T> {
    fn new(state: T) -> Self {
        Self {
            rf: f64::INFINITY,
            iteration: 0,
            state,
        }
    }

    fn offer(&mut self, rf: f64, iteration: usize, state: &T) {
        if rf < self.rf {
            self.rf = rf;
            self.iteration = iteration;
            self.state = state.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rf_factor_examples() {
        let l = Lattice::new(2, 2).unwrap();
        let data = MagnitudeData::new(l, vec![1.0, 1.0, 0.0, 0.0], vec![true, true, true, true]).unwrap();
        let z = Field::from_real(l, &[2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((rf_factor(&z, &data).unwrap() - 1.0).abs() < 1e-15);

        let exact = Field::from_real(l, &[1.0, -1.0, 0.0, 0.0]).unwrap();
        assert_eq!(rf_factor(&exact, &data).unwrap(), 0.0);

        let masked = MagnitudeData::new(l, vec![1.0, 1.0, 0.0, 0.0], vec![true, true, true, false]).unwrap();
        let gross = Field::from_real(l, &[1.0, 1.0, 0.0, 1e6]).unwrap();
        assert_eq!(rf_factor(&gross, &masked).unwrap(), 0.0);
    }

    #[test]
    fn rf_factor_rejects_zero_data() {
        let l = Lattice::new(2, 2).unwrap();
        let data = MagnitudeData::complete(l, vec![0.0; 4]).unwrap();
        assert!(matches!(rf_factor(&Field::zeros(l), &data), Err(Error::InvalidData(_))));
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("gps".parse::<Algorithm>().is_err());
    }

    #[test]
    fn random_start_has_data_magnitudes() {
        let l = Lattice::new(4, 4).unwrap();
        let data = MagnitudeData::complete(l, (0..16).map(|i| i as f64).collect()).unwrap();
        let z = random_phase_start(&data, 3);
        for (v, b) in z.values().iter().zip(data.magnitudes()) {
            assert!((v.norm() - b).abs() < 1e-12);
        }
        assert_eq!(z, random_phase_start(&data, 3));
        assert_ne!(z, random_phase_start(&data, 4));
    }

    #[test]
    fn warns_on_large_step_product() {
        let l = Lattice::new(8, 8).unwrap();
        let mut c = SolverConfig::new(Algorithm::GpsF, l, 0);
        assert!(c.warnings().is_empty());
        c.s = 2.0;
        assert_eq!(c.warnings().len(), 1);
        c.beta = 1.5;
        assert!(c.validate().is_err());
    }
}
