use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{radial_map, Lattice};

/// Stage layout and per-stage parameters of a reconstruction.
///
/// Each stage runs `iters_per_stage` iterations with fixed filters and
/// restarts from the best iterate found so far. Filters get finer from stage
/// to stage: the Fourier-space weights `gamma_per_stage` never increase and
/// the low-pass cutoffs `cutoff_per_stage` never decrease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub stages: usize,
    pub iters_per_stage: usize,
    /// Fourier-space smoothing weight per stage (GPS-F and GPS-RF).
    pub gamma_per_stage: Vec<f64>,
    /// Gaussian low-pass cutoff per stage, in frequency pixels (GPS-R, GPS-RF
    /// and the OSS baseline).
    pub cutoff_per_stage: Vec<f64>,
    /// Piecewise-constant fidelity weight as `(start_iteration, sigma)`.
    pub sigma_breakpoints: Vec<(usize, f64)>,
}

pub const DEFAULT_STAGES: usize = 10;
pub const DEFAULT_ITERS_PER_STAGE: usize = 100;

impl Schedule {
    /// Default schedule for `lattice` and dual step `s`: 10 stages of 100
    /// iterations, cutoffs spaced linearly from `N/10` to `N` with
    /// `N = max(n1, n2)`, Fourier weights halving each stage from the value
    /// that damps the lattice corner to 1%, and `sigma = 0.01` switching to
    /// `0.1` at iteration 400.
    pub fn default_for(lattice: Lattice, s: f64) -> Self {
        Self::with_stages(lattice, s, DEFAULT_STAGES, DEFAULT_ITERS_PER_STAGE)
    }

    pub fn with_stages(lattice: Lattice, s: f64, stages: usize, iters_per_stage: usize) -> Self {
        Self {
            stages,
            iters_per_stage,
            gamma_per_stage: default_gammas(lattice, s, stages),
            cutoff_per_stage: default_cutoffs(lattice, stages),
            sigma_breakpoints: vec![(0, 0.01), (400, 0.1)],
        }
    }

    /// Replaces the fidelity schedule with a single constant value.
    pub fn with_constant_sigma(mut self, sigma: f64) -> Self {
        self.sigma_breakpoints = vec![(0, sigma)];
        self
    }

    pub fn total_iterations(&self) -> usize {
        self.stages * self.iters_per_stage
    }

    /// Stage index of a global iteration number.
    pub fn stage_of(&self, iteration: usize) -> usize {
        if self.iters_per_stage == 0 {
            0
        } else {
            (iteration / self.iters_per_stage).min(self.stages.saturating_sub(1))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 {
            return Err(Error::Schedule("at least one stage is required".into()));
        }
        for (name, list) in [
            ("gamma_per_stage", &self.gamma_per_stage),
            ("cutoff_per_stage", &self.cutoff_per_stage),
        ] {
            if list.len() != self.stages {
                return Err(Error::Schedule(format!(
                    "{name} has {} entries for {} stages",
                    list.len(),
                    self.stages
                )));
            }
        }
        if let Some(g) = self.gamma_per_stage.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
            return Err(Error::Schedule(format!("gamma must be finite and >= 0, got {g}")));
        }
        if let Some(a) = self.cutoff_per_stage.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::Schedule(format!("cutoff must be finite and > 0, got {a}")));
        }
        if self.gamma_per_stage.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Schedule("gamma_per_stage must be nonincreasing".into()));
        }
        if self.cutoff_per_stage.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Schedule("cutoff_per_stage must be nondecreasing".into()));
        }
        match self.sigma_breakpoints.first() {
            Some((0, _)) => {}
            _ => {
                return Err(Error::Schedule(
                    "sigma schedule must start with a breakpoint at iteration 0".into(),
                ))
            }
        }
        if self.sigma_breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Schedule(
                "sigma breakpoints must be strictly increasing in iteration".into(),
            ));
        }
        if let Some((_, s)) = self
            .sigma_breakpoints
            .iter()
            .find(|(_, s)| !(*s >= 0.0 && s.is_finite()))
        {
            return Err(Error::Schedule(format!("sigma must be finite and >= 0, got {s}")));
        }
        Ok(())
    }
}

/// Fidelity weight in effect at `iteration`: the value of the last breakpoint
/// starting at or before it.
pub fn sigma_at(schedule: &Schedule, iteration: usize) -> f64 {
    schedule
        .sigma_breakpoints
        .iter()
        .take_while(|(start, _)| *start <= iteration)
        .last()
        .map(|&(_, s)| s)
        .unwrap_or(0.0)
}

fn default_cutoffs(lattice: Lattice, stages: usize) -> Vec<f64> {
    let n = lattice.rows().max(lattice.cols()) as f64;
    let (lo, hi) = (n / 10.0, n);
    if stages == 1 {
        return vec![hi];
    }
    (0..stages)
        .map(|l| lo + (hi - lo) * l as f64 / (stages - 1) as f64)
        .collect()
}

fn default_gammas(lattice: Lattice, s: f64, stages: usize) -> Vec<f64> {
    let rmax = radial_map(lattice).max();
    let first = 100f64.ln() / (s * rmax * rmax);
    (0..stages).map(|l| first * 0.5f64.powi(l as i32)).collect()
}

/// Heat-kernel weight whose transfer function matches a Gaussian low-pass of
/// cutoff `alpha` along the longer lattice axis:
/// `exp(-s gamma (2 pi k / N)^2) = exp(-k^2 / (2 alpha^2))`.
pub fn gamma_from_cutoff(lattice: Lattice, alpha: f64, s: f64) -> f64 {
    let n = lattice.rows().max(lattice.cols()) as f64;
    let w = 2.0 * PI / n;
    1.0 / (2.0 * s * alpha * alpha * w * w)
}
