//! Primal-dual GPS iteration.
//!
//! Per iteration, with `z` in Fourier space and `y` in real space:
//!
//! ```text
//! z+ = prox_{t g_sigma}(z - t F y)            (unmeasured pixels pass through)
//! y+ = smooth(proj_{S*}(y + s F^-1 (2 z+ - z)))
//! ```

use crate::error::{Error, Result};
use crate::grid::{dft2, dft2_in_place, idft2, idft2_in_place, radial_map, Field, Lattice, RadialMap, SupportMask};
use crate::prox::{
    apply_spectral_in_place, fourier_weight, heat_multiplier, proj_object_in_place, proj_support_dual_in_place,
    prox_magnitude_in_place, MagnitudeData,
};

use super::schedule::gamma_from_cutoff;
use super::{check_inputs, random_phase_start, rf_factor, sigma_at, Best, GpsVariant, RunRecord, SolverConfig};

/// Dual smoothing applied after the projection onto `S*`, fixed for a stage.
#[derive(Debug, Clone)]
pub enum DualSmoother {
    Identity,
    /// Pointwise real-space weight, `exp(-s gamma r^2)` or `1/(1 + s gamma r^2)`.
    Radial(Vec<f64>),
    /// Transfer function of a convolution.
    Spectral(Vec<f64>),
    /// Radial weight followed by a convolution.
    RadialThenSpectral(Vec<f64>, Vec<f64>),
}

impl DualSmoother {
    /// Smoother of `variant` for one stage with Fourier weight `gamma` and
    /// low-pass cutoff `cutoff`.
    pub fn for_stage(
        variant: GpsVariant,
        lattice: Lattice,
        rmap: &RadialMap,
        gamma: f64,
        cutoff: f64,
        s: f64,
        exact_fourier: bool,
    ) -> Self {
        let radial = || -> Vec<f64> {
            if exact_fourier {
                rmap.as_slice()
                    .iter()
                    .map(|r| 1.0 / (1.0 + s * gamma * r * r))
                    .collect()
            } else {
                fourier_weight(rmap, gamma, s)
            }
        };
        let spectral = || heat_multiplier(lattice, gamma_from_cutoff(lattice, cutoff, s), s);
        match variant {
            GpsVariant::F if gamma == 0.0 => DualSmoother::Identity,
            GpsVariant::F => DualSmoother::Radial(radial()),
            GpsVariant::R => DualSmoother::Spectral(spectral()),
            GpsVariant::Rf => DualSmoother::RadialThenSpectral(radial(), spectral()),
        }
    }

    fn apply(&self, y: &mut Field) {
        match self {
            DualSmoother::Identity => {}
            DualSmoother::Radial(w) => weight_in_place(y, w),
            DualSmoother::Spectral(m) => apply_spectral_in_place(y, m),
            DualSmoother::RadialThenSpectral(w, m) => {
                weight_in_place(y, w);
                apply_spectral_in_place(y, m);
            }
        }
    }
}

fn weight_in_place(y: &mut Field, w: &[f64]) {
    for (v, w) in y.values_mut().iter_mut().zip(w) {
        *v *= *w;
    }
}

/// Primal iterate `z`, dual iterate `y`, and the cached image `F^-1 z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdhgState {
    z: Field,
    y: Field,
    u: Field,
}

impl PdhgState {
    pub fn new(z: Field, y: Field) -> Result<Self> {
        z.lattice().check(y.lattice())?;
        let u = idft2(&z);
        Ok(Self { z, y, u })
    }

    pub fn z(&self) -> &Field {
        &self.z
    }

    pub fn y(&self) -> &Field {
        &self.y
    }

    /// Real-space image `F^-1 z`.
    pub fn image(&self) -> &Field {
        &self.u
    }

    /// The current estimate on the object constraint, in Fourier space.
    pub fn estimate_spectrum(&self, support: &SupportMask) -> Field {
        let mut e = self.u.clone();
        proj_object_in_place(e.values_mut(), support);
        dft2_in_place(&mut e);
        e
    }

    /// One primal-dual update with fidelity weight `sigma`.
    pub fn step(
        &mut self,
        data: &MagnitudeData,
        support: &SupportMask,
        sigma: f64,
        t: f64,
        s: f64,
        smoother: &DualSmoother,
    ) -> Result<()> {
        let l = self.z.lattice();
        l.check(data.lattice())?;
        l.check(support.lattice())?;

        let mut z_next = dft2(&self.y);
        for (zn, z) in z_next.values_mut().iter_mut().zip(self.z.values()) {
            *zn = *z - *zn * t;
        }
        prox_magnitude_in_place(z_next.values_mut(), data, sigma / t);

        let mut u_next = z_next.clone();
        idft2_in_place(&mut u_next);

        let y = self.y.values_mut();
        for ((yv, un), u) in y.iter_mut().zip(u_next.values()).zip(self.u.values()) {
            *yv += (*un * 2.0 - *u) * s;
        }
        proj_support_dual_in_place(y, support);
        smoother.apply(&mut self.y);

        self.z = z_next;
        self.u = u_next;
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.z.is_finite() && self.y.is_finite()
    }
}

/// GPS reconstruction from a random-phase start.
pub fn run_gps(
    data: &MagnitudeData,
    support: &SupportMask,
    config: &SolverConfig,
    variant: GpsVariant,
) -> Result<RunRecord> {
    let z0 = random_phase_start(data, config.seed);
    run_gps_from(data, support, config, variant, z0)
}

/// GPS reconstruction from the Fourier-domain start `z0` with `y0 = 0`.
pub fn run_gps_from(
    data: &MagnitudeData,
    support: &SupportMask,
    config: &SolverConfig,
    variant: GpsVariant,
    z0: Field,
) -> Result<RunRecord> {
    check_inputs(data, support, config, &z0)?;
    let lattice = data.lattice();
    let schedule = &config.schedule;
    let rmap = radial_map(lattice);

    let mut state = PdhgState::new(z0, Field::zeros(lattice))?;
    let mut best = Best::new(state.clone());
    let mut trace = Vec::with_capacity(schedule.total_iterations().max(1));

    let mut iteration = 0;
    for stage in 0..schedule.stages {
        if stage > 0 {
            state = best.state.clone();
        }
        let smoother = DualSmoother::for_stage(
            variant,
            lattice,
            &rmap,
            schedule.gamma_per_stage[stage],
            schedule.cutoff_per_stage[stage],
            config.s,
            config.exact_fourier_prox,
        );
        for _ in 0..schedule.iters_per_stage {
            let rf = rf_factor(&state.estimate_spectrum(support), data)?;
            if !rf.is_finite() {
                return Err(Error::Divergence { iteration });
            }
            trace.push(rf);
            best.offer(rf, iteration, &state);

            let sigma = sigma_at(schedule, iteration);
            state.step(data, support, sigma, config.t, config.s, &smoother)?;
            if !state.is_finite() {
                return Err(Error::Divergence { iteration });
            }
            iteration += 1;
        }
    }
    if trace.is_empty() {
        let rf = rf_factor(&state.estimate_spectrum(support), data)?;
        trace.push(rf);
        best.offer(rf, 0, &state);
    }

    let mut final_image = best.state.u.clone();
    proj_object_in_place(final_image.values_mut(), support);
    Ok(RunRecord {
        rf_trace: trace,
        best_rf: best.rf,
        best_iteration: best.iteration,
        best_iterate: best.state.z,
        final_image,
        iterations_run: iteration,
        config_echo: config.clone(),
    })
}
