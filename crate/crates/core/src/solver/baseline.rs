//! Alternating-projection baselines: error reduction, hybrid input-output
//! and oversampling smoothness.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{dft2_in_place, idft2, idft2_in_place, lowpass_multiplier, Field, SupportMask};
use crate::prox::{proj_object_in_place, prox_magnitude_in_place, MagnitudeData};

use super::{check_inputs, random_phase_start, rf_factor, Algorithm, Best, RunRecord, SolverConfig};

/// ER, HIO or OSS from a random-phase start.
pub fn run_baseline(data: &MagnitudeData, support: &SupportMask, config: &SolverConfig) -> Result<RunRecord> {
    let z0 = random_phase_start(data, config.seed);
    run_baseline_from(data, support, config, z0)
}

/// ER, HIO or OSS starting from the real part of `F^-1 z0`.
pub fn run_baseline_from(
    data: &MagnitudeData,
    support: &SupportMask,
    config: &SolverConfig,
    z0: Field,
) -> Result<RunRecord> {
    check_inputs(data, support, config, &z0)?;
    if config.algorithm.gps_variant().is_some() {
        return Err(Error::InvalidParameter(format!(
            "{} is not a baseline algorithm",
            config.algorithm
        )));
    }
    let lattice = data.lattice();
    let schedule = &config.schedule;
    let beta = config.beta;

    let mut u = idft2(&z0).map(|v| Complex64::new(v.re, 0.0));
    let mut best = Best::new(u.clone());
    let mut trace = Vec::with_capacity(schedule.total_iterations().max(1));
    let estimate = |u: &Field| {
        let mut e = u.clone();
        proj_object_in_place(e.values_mut(), support);
        dft2_in_place(&mut e);
        e
    };

    let mut iteration = 0;
    for stage in 0..schedule.stages {
        if stage > 0 {
            u = best.state.clone();
        }
        let lowpass = match config.algorithm {
            Algorithm::Oss => Some(lowpass_multiplier(lattice, schedule.cutoff_per_stage[stage])?),
            _ => None,
        };
        for _ in 0..schedule.iters_per_stage {
            let rf = rf_factor(&estimate(&u), data)?;
            if !rf.is_finite() {
                return Err(Error::Divergence { iteration });
            }
            trace.push(rf);
            best.offer(rf, iteration, &u);

            // u' = Re F^-1 P_T F u
            let mut projected = u.clone();
            dft2_in_place(&mut projected);
            prox_magnitude_in_place(projected.values_mut(), data, 0.0);
            idft2_in_place(&mut projected);

            let inside = support.as_slice();
            match config.algorithm {
                Algorithm::Er => {
                    for (v, p) in u.values_mut().iter_mut().zip(projected.values()) {
                        *v = Complex64::new(p.re, 0.0);
                    }
                    proj_object_in_place(u.values_mut(), support);
                }
                _ => {
                    for ((v, p), &s) in u.values_mut().iter_mut().zip(projected.values()).zip(inside) {
                        let re = if s && p.re >= 0.0 { p.re } else { v.re - beta * p.re };
                        *v = Complex64::new(re, 0.0);
                    }
                }
            }
            if let Some(mult) = &lowpass {
                let mut smooth = u.clone();
                dft2_in_place(&mut smooth);
                for (v, m) in smooth.values_mut().iter_mut().zip(mult) {
                    *v *= *m;
                }
                idft2_in_place(&mut smooth);
                for ((v, sm), &s) in u.values_mut().iter_mut().zip(smooth.values()).zip(inside) {
                    if !s {
                        *v = Complex64::new(sm.re, 0.0);
                    }
                }
            }
            if !u.is_finite() {
                return Err(Error::Divergence { iteration });
            }
            iteration += 1;
        }
    }
    if trace.is_empty() {
        let rf = rf_factor(&estimate(&u), data)?;
        trace.push(rf);
        best.offer(rf, 0, &u);
    }

    let best_iterate = estimate(&best.state);
    let mut final_image = best.state;
    proj_object_in_place(final_image.values_mut(), support);
    Ok(RunRecord {
        rf_trace: trace,
        best_rf: best.rf,
        best_iteration: best.iteration,
        best_iterate,
        final_image,
        iterations_run: iteration,
        config_echo: config.clone(),
    })
}
