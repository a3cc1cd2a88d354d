//! Reconstruction quality metrics and multi-run aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dft2, Domain, Field, SupportMask};
use crate::prox::MagnitudeData;
use crate::sim::{embed, Phantom};
use crate::solver::RunRecord;

/// Half-width of the translation window searched by [`r_real`].
pub const REGISTRATION_WINDOW: isize = 2;

/// Real-space error `sum |Re u_i - u0_i| / sum u0_i` of a reconstruction
/// against the phantom embedded on the reconstruction lattice, minimised over
/// integer translations within +-2 pixels and over the twin image (the
/// reconstruction rotated by 180 degrees about the lattice center).
pub fn r_real(recon: &Field, truth: &Phantom, support: &SupportMask) -> Result<f64> {
    recon.lattice().check(support.lattice())?;
    let (embedded, _) = embed(truth, recon.lattice())?;
    r_real_embedded(recon, &embedded)
}

/// [`r_real`] against a truth already embedded on the reconstruction lattice.
pub fn r_real_embedded(recon: &Field, truth: &Field) -> Result<f64> {
    recon.lattice().check(truth.lattice())?;
    let l = recon.lattice();
    let (n1, n2) = (l.rows(), l.cols());
    let (c1, c2) = l.center();
    let t = truth.real_parts();
    let den: f64 = t.iter().sum();
    if den <= 0.0 {
        return Err(Error::InvalidData("truth has zero total density".into()));
    }
    let u = recon.real_parts();

    let mut best = f64::INFINITY;
    for twin in [false, true] {
        for dr in -REGISTRATION_WINDOW..=REGISTRATION_WINDOW {
            for dc in -REGISTRATION_WINDOW..=REGISTRATION_WINDOW {
                let mut num = 0.0;
                for r in 0..n1 {
                    for c in 0..n2 {
                        // Source pixel of the transformed reconstruction.
                        let (mut sr, mut sc) = (
                            (r as isize - dr).rem_euclid(n1 as isize) as usize,
                            (c as isize - dc).rem_euclid(n2 as isize) as usize,
                        );
                        if twin {
                            sr = (2 * c1 + n1 - sr) % n1;
                            sc = (2 * c2 + n2 - sc) % n2;
                        }
                        num += (u[l.index(sr, sc)] - t[l.index(r, c)]).abs();
                    }
                }
                best = best.min(num / den);
            }
        }
    }
    Ok(best)
}

/// Euclidean misfit `|| |F u| - b ||` over measured pixels. `domain` says
/// whether `field` is a real-space image (transformed first) or already a
/// Fourier-domain field.
pub fn residual(field: &Field, data: &MagnitudeData, domain: Domain) -> Result<f64> {
    data.lattice().check(field.lattice())?;
    let spectrum;
    let z = match domain {
        Domain::Fourier => field,
        Domain::Real => {
            spectrum = dft2(field);
            &spectrum
        }
    };
    Ok(z.values()
        .iter()
        .zip(data.magnitudes())
        .zip(data.measured())
        .filter(|(_, &m)| m)
        .map(|((v, b), _)| (v.norm() - b).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Interquartile range.
pub fn iqr(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.75) - quantile(&v, 0.25)
}

/// Fixed-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub start: f64,
    pub width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Freedman-Diaconis bin width `2 IQR / n^(1/3)`; data with zero spread
    /// lands in a single bin.
    pub fn freedman_diaconis(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (min, max) = (v[0], v[v.len() - 1]);
        let width = 2.0 * (quantile(&v, 0.75) - quantile(&v, 0.25)) / (v.len() as f64).cbrt();
        if !(width > 0.0) || max == min {
            let width = if max > min { max - min } else { 1.0 };
            return Self {
                start: min,
                width,
                counts: vec![v.len()],
            };
        }
        let bins = (((max - min) / width).ceil() as usize).max(1);
        let mut counts = vec![0; bins];
        for x in &v {
            let b = (((x - min) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self { start: min, width, counts }
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let lo = self.start + bin as f64 * self.width;
        (lo, lo + self.width)
    }
}

/// Metrics of one run within a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub best_rf: f64,
    pub r_real: Option<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub per_run: Vec<RunSummary>,
    pub rf_histogram: Histogram,
    /// Mean of the `k` smallest best R-factors.
    pub rf_mean_topk: f64,
    /// Population standard deviation of the same `k` values.
    pub rf_std_topk: f64,
    pub k: usize,
    /// Seed of the run with the smallest best R-factor.
    pub best_seed: u64,
    /// R-factor trace of that run.
    pub best_trace: Vec<f64>,
}

/// Summarises independent runs on the same data. Ties in the top-k selection
/// are broken by seed, so the result does not depend on the order of `runs`.
pub fn aggregate(
    runs: &[RunRecord],
    data: &MagnitudeData,
    truth: Option<(&Phantom, &SupportMask)>,
    k: usize,
) -> Result<BatchSummary> {
    let embedded = match truth {
        Some((p, s)) => {
            data.lattice().check(s.lattice())?;
            Some(embed(p, data.lattice())?.0)
        }
        None => None,
    };
    aggregate_embedded(runs, data, embedded.as_ref(), k)
}

/// [`aggregate`] against a truth already embedded on the reconstruction
/// lattice.
pub fn aggregate_embedded(
    runs: &[RunRecord],
    data: &MagnitudeData,
    truth: Option<&Field>,
    k: usize,
) -> Result<BatchSummary> {
    if runs.is_empty() {
        return Err(Error::InvalidParameter("cannot aggregate an empty batch".into()));
    }
    if k == 0 || k > runs.len() {
        return Err(Error::InvalidParameter(format!(
            "top-k size {k} must lie in 1..={}",
            runs.len()
        )));
    }
    let mut per_run = runs
        .iter()
        .map(|run| {
            Ok(RunSummary {
                seed: run.config_echo.seed,
                best_rf: run.best_rf,
                r_real: truth.map(|t| r_real_embedded(&run.final_image, t)).transpose()?,
                residual: residual(&run.final_image, data, Domain::Real)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    per_run.sort_by(|a, b| a.seed.cmp(&b.seed));

    let mut ranked: Vec<(f64, u64)> = per_run.iter().map(|r| (r.best_rf, r.seed)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let top: Vec<f64> = ranked[..k].iter().map(|r| r.0).collect();
    let mean = top.iter().sum::<f64>() / k as f64;
    let var = top.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k as f64;

    let best_seed = ranked[0].1;
    let best_trace = runs
        .iter()
        .find(|r| r.config_echo.seed == best_seed)
        .map(|r| r.rf_trace.clone())
        .unwrap_or_default();

    let all: Vec<f64> = per_run.iter().map(|r| r.best_rf).collect();
    Ok(BatchSummary {
        rf_histogram: Histogram::freedman_diaconis(&all),
        per_run,
        rf_mean_topk: mean,
        rf_std_topk: var.sqrt(),
        k,
        best_seed,
        best_trace,
    })
}
