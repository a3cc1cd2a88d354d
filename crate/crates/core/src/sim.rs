//! Ground-truth phantoms and simulated diffraction data.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dft2, frequency_radius, Field, Lattice, SupportMask};
use crate::prox::MagnitudeData;

/// Nonnegative real density on the object lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    lattice: Lattice,
    density: Vec<f64>,
    name: String,
}

impl Phantom {
    /// Requires a finite, nonnegative density that is positive somewhere.
    pub fn new(lattice: Lattice, density: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        if density.len() != lattice.len() {
            return Err(Error::LengthMismatch {
                lattice,
                len: density.len(),
            });
        }
        if let Some(i) = density.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidData(format!(
                "phantom density at pixel {i} is {}",
                density[i]
            )));
        }
        if !density.iter().any(|&d| d > 0.0) {
            return Err(Error::InvalidData("phantom density is identically zero".into()));
        }
        Ok(Self {
            lattice,
            density,
            name: name.into(),
        })
    }

    /// User-supplied array; negative values are clamped to zero.
    pub fn from_array(lattice: Lattice, mut density: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        for d in density.iter_mut() {
            if *d < 0.0 {
                *d = 0.0;
            }
        }
        Self::new(lattice, density, name)
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn total(&self) -> f64 {
        self.density.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomKind {
    /// Lopsided annular shell spanning the object lattice, with granules in
    /// an otherwise empty lumen.
    Vesicle,
    /// Four to six soft disks, one touching each edge of the object lattice.
    Disks,
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhantomKind::Vesicle => "vesicle",
            PhantomKind::Disks => "disks",
        })
    }
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vesicle" => Ok(PhantomKind::Vesicle),
            "disks" => Ok(PhantomKind::Disks),
            other => Err(Error::InvalidParameter(format!(
                "unknown phantom '{other}' (expected vesicle or disks)"
            ))),
        }
    }
}

/// Soft indicator of `d <= radius` with a linear ramp of width `w`.
fn soft_step(d: f64, radius: f64, w: f64) -> f64 {
    ((radius - d) / w + 0.5).clamp(0.0, 1.0)
}

/// Deterministic synthetic phantom. Object lattices smaller than 16x16 are
/// rejected.
pub fn make_phantom(kind: PhantomKind, size: Lattice, seed: u64) -> Result<Phantom> {
    if size.rows() < 16 || size.cols() < 16 {
        return Err(Error::InvalidParameter(format!(
            "phantom lattice must be at least 16x16, got {size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density = match kind {
        PhantomKind::Vesicle => vesicle(size, &mut rng),
        PhantomKind::Disks => disks(size, &mut rng),
    };
    Phantom::new(size, density, kind.to_string())
}

fn vesicle(size: Lattice, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use std::f64::consts::TAU;
    let (n1, n2) = (size.rows() as f64, size.cols() as f64);
    // Lopsided outline in unit coordinates: the odd harmonics make it differ
    // from its 180-degree rotation.
    let (p1, p2, p3) = (rng.random::<f64>() * TAU, rng.random::<f64>() * TAU, rng.random::<f64>() * TAU);
    let outline =
        move |theta: f64| 1.0 + 0.12 * (theta - p1).cos() + 0.08 * (2.0 * theta - p2).cos() + 0.08 * (3.0 * theta - p3).cos();

    // Stretch the outline so that its bounding box spans the whole lattice.
    let (mut y0, mut y1, mut x0, mut x1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for k in 0..3600 {
        let theta = k as f64 * TAU / 3600.0;
        let (y, x) = (outline(theta) * theta.sin(), outline(theta) * theta.cos());
        (y0, y1, x0, x1) = (y0.min(y), y1.max(y), x0.min(x), x1.max(x));
    }
    let (sy, sx) = ((y1 - y0) / n1, (x1 - x0) / n2);
    let px = 1.0 / sy.max(sx);
    let to_unit = move |r: usize, c: usize| (y0 + (r as f64 + 0.5) * sy, x0 + (c as f64 + 0.5) * sx);

    let edge = 1.0 / px;
    let membrane = 0.1 * n1.min(n2) / px;
    let tilt = rng.random::<f64>() * TAU;
    let shade = rng.random::<f64>() * TAU;
    let granules: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(6..=12))
        .map(|_| {
            let ang = rng.random::<f64>() * TAU;
            let rad = 0.6 * (outline(ang) - 2.0 * membrane) * rng.random::<f64>().sqrt();
            let width = rng.random_range(0.03..0.07) * n1.min(n2) / px;
            (rad * ang.sin(), rad * ang.cos(), width, rng.random_range(0.4..1.0))
        })
        .collect();

    let mut density = Vec::with_capacity(size.len());
    for r in 0..size.rows() {
        for c in 0..size.cols() {
            let (y, x) = to_unit(r, c);
            let theta = y.atan2(x);
            let rho = y.hypot(x);
            let bound = outline(theta);
            let body = soft_step(rho, bound, edge);
            // The membrane thickens towards `tilt` and is denser towards `shade`.
            let thickness = membrane * (1.0 + 0.5 * (theta - tilt).cos());
            let interior = soft_step(rho, bound - thickness, edge);
            let shell = 0.75 + 0.25 * (theta - shade).cos();
            let g: f64 = granules
                .iter()
                .map(|&(gy, gx, w, a)| a * (-((y - gy).powi(2) + (x - gx).powi(2)) / (2.0 * w * w)).exp())
                .sum();
            // Granules float in an otherwise empty lumen.
            density.push(shell * (body - interior) + interior * 0.6 * g);
        }
    }
    density
}

fn disks(size: Lattice, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (n1, n2) = (size.rows() as f64, size.cols() as f64);
    let m = n1.min(n2);
    // One disk touches each edge so the object spans its whole lattice,
    // then up to two more land anywhere in the middle.
    let mut disks: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(6);
    for side in 0..4 {
        let rad = rng.random_range(0.08..0.16) * m;
        let along = rng.random_range(0.2..0.8);
        let (y, x) = match side {
            0 => (rad - 0.5, along * n2),
            1 => (n1 - rad - 0.5, along * n2),
            2 => (along * n1, rad - 0.5),
            _ => (along * n1, n2 - rad - 0.5),
        };
        disks.push((y, x, rad, rng.random_range(0.3..1.0)));
    }
    for _ in 0..rng.random_range(0..=2) {
        let rad = rng.random_range(0.08..0.16) * m;
        let y = rng.random_range(0.25..0.75) * n1;
        let x = rng.random_range(0.25..0.75) * n2;
        disks.push((y, x, rad, rng.random_range(0.3..1.0)));
    }
    let mut density = Vec::with_capacity(size.len());
    for r in 0..size.rows() {
        for c in 0..size.cols() {
            let v: f64 = disks
                .iter()
                .map(|&(y, x, rad, a)| a * soft_step((r as f64 - y).hypot(c as f64 - x), rad, 1.0))
                .sum();
            density.push(v);
        }
    }
    density
}

/// Places `p` on `lattice` so that the phantom's center pixel lands on the
/// lattice center. Returns the embedded field and the row/column offset.
pub fn embed(p: &Phantom, lattice: Lattice) -> Result<(Field, (usize, usize))> {
    let (n1, n2) = (p.lattice.rows(), p.lattice.cols());
    if n1 > lattice.rows() || n2 > lattice.cols() {
        return Err(Error::InvalidParameter(format!(
            "phantom {} does not fit in lattice {lattice}",
            p.lattice
        )));
    }
    let (c1, c2) = lattice.center();
    let (o1, o2) = (c1 - n1 / 2, c2 - n2 / 2);
    let mut field = Field::zeros(lattice);
    for r in 0..n1 {
        for c in 0..n2 {
            field.set(r + o1, c + o2, p.density[p.lattice.index(r, c)].into());
        }
    }
    Ok((field, (o1, o2)))
}

/// Zero-pads the phantom into a lattice `ceil(ratio * n)` per axis and marks
/// the embedded rectangle, grown by `margin` pixels on every side, as the
/// support.
pub fn oversample(p: &Phantom, ratio: f64, margin: usize) -> Result<(Field, SupportMask)> {
    if !(ratio >= 1.0 && ratio.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "oversampling ratio must be >= 1, got {ratio}"
        )));
    }
    let (n1, n2) = (p.lattice.rows(), p.lattice.cols());
    let lattice = Lattice::new(
        (ratio * n1 as f64).ceil() as usize,
        (ratio * n2 as f64).ceil() as usize,
    )?;
    let (field, (o1, o2)) = embed(p, lattice)?;
    let r0 = o1.saturating_sub(margin);
    let q0 = o2.saturating_sub(margin);
    let r1 = (o1 + n1 + margin).min(lattice.rows());
    let q1 = (o2 + n2 + margin).min(lattice.cols());
    let mut inside = vec![false; lattice.len()];
    for r in r0..r1 {
        for c in q0..q1 {
            inside[lattice.index(r, c)] = true;
        }
    }
    Ok((field, SupportMask::new(lattice, inside)?))
}

/// Detector model: Poisson counting at a total `flux` plus zero-mean Gaussian
/// readout of standard deviation `readout_sigma` (photon units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub flux: f64,
    pub readout_sigma: f64,
    pub poisson_enabled: bool,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            flux: 1.0,
            readout_sigma: 0.0,
            poisson_enabled: false,
            seed: 0,
        }
    }

    pub fn poisson(flux: f64, seed: u64) -> Self {
        Self {
            flux,
            readout_sigma: 0.0,
            poisson_enabled: true,
            seed,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        !self.poisson_enabled && self.readout_sigma == 0.0
    }

    fn validate(&self) -> Result<()> {
        if !(self.readout_sigma >= 0.0 && self.readout_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "readout sigma must be >= 0, got {}",
                self.readout_sigma
            )));
        }
        if !self.is_noiseless() && !(self.flux > 0.0 && self.flux.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "flux must be positive, got {}",
                self.flux
            )));
        }
        Ok(())
    }
}

/// Simulated Fourier magnitudes of the real-space object `u0`.
///
/// Intensities `|F u0|^2` are scaled to the total flux, Poisson counts and
/// readout noise are drawn pixel by pixel in row-major order, negative values
/// are clamped to zero, and the square root is rescaled back to the units of
/// `|F u0|`. Pixels whose frequency radius is below `beamstop_radius` are
/// marked as not measured.
pub fn simulate_magnitudes(u0: &Field, noise: &NoiseSpec, beamstop_radius: f64) -> Result<MagnitudeData> {
    noise.validate()?;
    if !(beamstop_radius >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beamstop radius must be >= 0, got {beamstop_radius}"
        )));
    }
    let lattice = u0.lattice();
    let spectrum = dft2(u0);
    let exact = spectrum.magnitudes();

    let b = if noise.is_noiseless() {
        exact
    } else {
        let total: f64 = spectrum.norm_sqr();
        if total <= 0.0 {
            return Err(Error::InvalidData("object has no Fourier energy".into()));
        }
        let scale = noise.flux / total;
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        exact
            .iter()
            .map(|&m| {
                let lambda = m * m * scale;
                let mut counts = if noise.poisson_enabled {
                    sample_poisson(&mut rng, lambda)
                } else {
                    lambda
                };
                if noise.readout_sigma > 0.0 {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    counts += noise.readout_sigma * n;
                }
                (counts.max(0.0) / scale).sqrt()
            })
            .collect()
    };

    let measured = frequency_radius(lattice)
        .as_slice()
        .iter()
        .map(|&k| k >= beamstop_radius)
        .collect();
    MagnitudeData::new(lattice, b, measured)
}

fn sample_poisson(rng: &mut ChaCha8Rng, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    match Poisson::new(lambda) {
        Ok(d) => d.sample(rng),
        // Beyond the sampler's range the normal approximation is exact to
        // double precision.
        Err(_) => {
            let n: f64 = StandardNormal.sample(rng);
            (lambda + lambda.sqrt() * n).round()
        }
    }
}

/// Relative deviation of the data from the noise-free magnitudes of `u0`,
/// over measured pixels.
pub fn r_noise(data: &MagnitudeData, u0: &Field) -> Result<f64> {
    data.lattice().check(u0.lattice())?;
    let exact = dft2(u0);
    let mut num = 0.0;
    let mut den = 0.0;
    for ((b, z), &m) in data.magnitudes().iter().zip(exact.values()).zip(data.measured()) {
        if m {
            let a = z.norm();
            num += (b - a).abs();
            den += a;
        }
    }
    if den <= 0.0 {
        return Err(Error::InvalidData("noise-free magnitudes sum to zero".into()));
    }
    Ok(num / den)
}

/// Result of [`calibrate_flux`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxCalibration {
    pub flux: f64,
    /// Median `r_noise` over the calibration seeds at `flux`.
    pub r_noise: f64,
}

pub const CALIBRATION_STEPS: usize = 12;
pub const CALIBRATION_SEEDS: u64 = 5;

/// Finds the Poisson flux at which the median `r_noise` over five seeds
/// (`seed .. seed + 5`) matches `target`, by 12 bisection steps on
/// `log10(flux)` over `[0, 16]`. Fails when the achieved value is more than
/// 10% away from the target.
pub fn calibrate_flux(
    u0: &Field,
    target: f64,
    readout_sigma: f64,
    beamstop_radius: f64,
    seed: u64,
) -> Result<FluxCalibration> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target r_noise must be positive, got {target}"
        )));
    }
    let median_at = |log_flux: f64| -> Result<f64> {
        let flux = 10f64.powf(log_flux);
        let mut values = (0..CALIBRATION_SEEDS)
            .map(|k| {
                let spec = NoiseSpec {
                    flux,
                    readout_sigma,
                    poisson_enabled: true,
                    seed: seed.wrapping_add(k),
                };
                r_noise(&simulate_magnitudes(u0, &spec, beamstop_radius)?, u0)
            })
            .collect::<Result<Vec<f64>>>()?;
        values.sort_by(f64::total_cmp);
        Ok(values[values.len() / 2])
    };

    let (mut lo, mut hi) = (0.0f64, 16.0f64);
    for _ in 0..CALIBRATION_STEPS {
        let mid = 0.5 * (lo + hi);
        // r_noise falls as flux grows.
        if median_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let log_flux = 0.5 * (lo + hi);
    let achieved = median_at(log_flux)?;
    if (achieved - target).abs() > 0.1 * target {
        return Err(Error::InvalidData(format!(
            "flux calibration could not reach r_noise = {target}; achieved {achieved} at flux {:e}",
            10f64.powf(log_flux)
        )));
    }
    Ok(FluxCalibration {
        flux: 10f64.powf(log_flux),
        r_noise: achieved,
    })
}
