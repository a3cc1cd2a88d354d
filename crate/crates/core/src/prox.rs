//! Proximal mappings and projections.
//!
//! The primal variable `z` lives in Fourier space and carries the relaxed
//! magnitude constraint; the dual variable `y` lives in real space and carries
//! the relaxed object constraint through its conjugate, a projection onto
//! `S* = { y : Re(y) <= 0 on S }` followed by a smoothing step.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dft2_in_place, idft2_in_place, signed_frequency, Field, Lattice, RadialMap, SupportMask};

/// Measured Fourier magnitudes `b` and the mask of pixels that were measured.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeData {
    lattice: Lattice,
    b: Vec<f64>,
    measured: Vec<bool>,
}

impl MagnitudeData {
    pub fn new(lattice: Lattice, b: Vec<f64>, measured: Vec<bool>) -> Result<Self> {
        if b.len() != lattice.len() {
            return Err(Error::LengthMismatch { lattice, len: b.len() });
        }
        if measured.len() != lattice.len() {
            return Err(Error::LengthMismatch {
                lattice,
                len: measured.len(),
            });
        }
        if let Some(i) = b.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidData(format!(
                "magnitude at pixel {i} is {}; magnitudes must be finite and nonnegative",
                b[i]
            )));
        }
        Ok(Self { lattice, b, measured })
    }

    /// Every pixel measured.
    pub fn complete(lattice: Lattice, b: Vec<f64>) -> Result<Self> {
        let measured = vec![true; lattice.len()];
        Self::new(lattice, b, measured)
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.b
    }

    pub fn measured(&self) -> &[bool] {
        &self.measured
    }

    #[inline]
    pub fn is_measured(&self, index: usize) -> bool {
        self.measured[index]
    }

    /// Euclidean norm of `b` over measured pixels.
    pub fn measured_norm(&self) -> f64 {
        self.b
            .iter()
            .zip(&self.measured)
            .filter(|(_, &m)| m)
            .map(|(v, _)| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Fidelity relaxation weight `sigma` and the primal/dual step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityWeight {
    pub sigma: f64,
    pub t: f64,
    pub s: f64,
}

impl FidelityWeight {
    pub fn new(sigma: f64, t: f64, s: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
        }
        if !(t > 0.0 && t.is_finite()) || !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step sizes must be positive, got s = {s}, t = {t}"
            )));
        }
        Ok(Self { sigma, t, s })
    }

    /// The interpolation weight `sigma / t`.
    pub fn ratio(&self) -> f64 {
        self.sigma / self.t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothingMode {
    RealSpace,
    FourierSpace,
}

/// Regularization weight `gamma` of the dual smoothing and where it acts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParam {
    pub gamma: f64,
    pub mode: SmoothingMode,
}

impl SmoothingParam {
    pub fn new(gamma: f64, mode: SmoothingMode) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self { gamma, mode })
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
    }
    Ok(())
}

/// Unit phase factor of `z`; zero maps to `1`.
#[inline]
pub fn phase_factor(z: Complex64) -> Complex64 {
    let m = z.norm();
    if m == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        z / m
    }
}

/// Pixelwise unit phase factor `exp(i arg z)`.
pub fn phase(z: &Field) -> Field {
    z.map(phase_factor)
}

/// Proximal map of `t g_sigma` restricted to measured pixels.
///
/// Measured pixels move to `(b e^{i arg z} + (sigma/t) z) / (1 + sigma/t)`;
/// unmeasured pixels are returned unchanged.
pub fn prox_magnitude(z: &Field, data: &MagnitudeData, w: FidelityWeight) -> Result<Field> {
    data.lattice.check(z.lattice())?;
    let mut out = z.clone();
    prox_magnitude_in_place(out.values_mut(), data, w.ratio());
    Ok(out)
}

pub(crate) fn prox_magnitude_in_place(z: &mut [Complex64], data: &MagnitudeData, ratio: f64) {
    let denom = 1.0 + ratio;
    for ((v, &b), &m) in z.iter_mut().zip(&data.b).zip(&data.measured) {
        if m {
            *v = (phase_factor(*v) * b + *v * ratio) / denom;
        }
    }
}

/// Projection onto `S*`: on the support the real part is clipped to `<= 0`.
pub fn proj_support_dual(y: &Field, support: &SupportMask) -> Result<Field> {
    support.lattice().check(y.lattice())?;
    let mut out = y.clone();
    proj_support_dual_in_place(out.values_mut(), support);
    Ok(out)
}

pub(crate) fn proj_support_dual_in_place(y: &mut [Complex64], support: &SupportMask) {
    for (v, &inside) in y.iter_mut().zip(support.as_slice()) {
        if inside && v.re > 0.0 {
            v.re = 0.0;
        }
    }
}

/// Projection onto the object constraint: real, nonnegative on the support,
/// zero elsewhere.
pub fn proj_object(u: &Field, support: &SupportMask) -> Result<Field> {
    support.lattice().check(u.lattice())?;
    let mut out = u.clone();
    proj_object_in_place(out.values_mut(), support);
    Ok(out)
}

pub(crate) fn proj_object_in_place(u: &mut [Complex64], support: &SupportMask) {
    for (v, &inside) in u.iter_mut().zip(support.as_slice()) {
        let re = if inside { v.re.max(0.0) } else { 0.0 };
        *v = Complex64::new(re, 0.0);
    }
}

/// Heat-kernel transfer function for diffusion time `s * gamma`:
/// `exp(-s gamma (w1^2 + w2^2))` with `w_j = 2 pi k_j / n_j`.
///
/// This is convolution with a Gaussian of variance `2 s gamma` pixels^2 per
/// axis.
pub fn heat_multiplier(lattice: Lattice, gamma: f64, s: f64) -> Vec<f64> {
    spectral_multiplier(lattice, |w1, w2| (-s * gamma * (w1 * w1 + w2 * w2)).exp())
}

/// Backward-Euler transfer function `1 / (1 + s gamma lambda)` where `lambda`
/// is the eigenvalue of the negated five-point circular Laplacian.
pub fn euler_multiplier(lattice: Lattice, gamma: f64, s: f64) -> Vec<f64> {
    spectral_multiplier(lattice, |w1, w2| {
        let lambda = 4.0 * (w1 / 2.0).sin().powi(2) + 4.0 * (w2 / 2.0).sin().powi(2);
        1.0 / (1.0 + s * gamma * lambda)
    })
}

fn spectral_multiplier(lattice: Lattice, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let (n1, n2) = (lattice.rows(), lattice.cols());
    let mut out = Vec::with_capacity(lattice.len());
    for i in 0..n1 {
        let w1 = 2.0 * PI * signed_frequency(i, n1) / n1 as f64;
        for j in 0..n2 {
            let w2 = 2.0 * PI * signed_frequency(j, n2) / n2 as f64;
            out.push(f(w1, w2));
        }
    }
    out
}

pub(crate) fn apply_spectral_in_place(y: &mut Field, multiplier: &[f64]) {
    dft2_in_place(y);
    for (v, m) in y.values_mut().iter_mut().zip(multiplier) {
        *v *= *m;
    }
    idft2_in_place(y);
}

/// Real-space smoothing of the dual variable: Gaussian (heat-kernel)
/// convolution for diffusion time `s * gamma`. `gamma = 0` is the identity.
pub fn smooth_dual_real(y: &Field, gamma: f64, s: f64) -> Result<Field> {
    check_gamma(gamma)?;
    check_step(s)?;
    if gamma == 0.0 {
        return Ok(y.clone());
    }
    let mut out = y.clone();
    apply_spectral_in_place(&mut out, &heat_multiplier(y.lattice(), gamma, s));
    Ok(out)
}

/// Backward-Euler form `(I + s gamma D^T D)^{-1} y` with the five-point
/// circular Laplacian, solved by division in frequency space.
pub fn smooth_dual_real_euler(y: &Field, gamma: f64, s: f64) -> Result<Field> {
    check_gamma(gamma)?;
    check_step(s)?;
    if gamma == 0.0 {
        return Ok(y.clone());
    }
    let mut out = y.clone();
    apply_spectral_in_place(&mut out, &euler_multiplier(y.lattice(), gamma, s));
    Ok(out)
}

/// Fourier-space smoothing of the dual variable: `exp(-s gamma r^2) * y`.
pub fn smooth_dual_fourier(y: &Field, rmap: &RadialMap, gamma: f64, s: f64) -> Result<Field> {
    check_gamma(gamma)?;
    check_step(s)?;
    rmap.lattice().check(y.lattice())?;
    let mult = fourier_weight(rmap, gamma, s);
    Ok(apply_weight(y, &mult))
}

/// Exact diagonal prox `y / (1 + s gamma r^2)`.
pub fn smooth_dual_fourier_exact(y: &Field, rmap: &RadialMap, gamma: f64, s: f64) -> Result<Field> {
    check_gamma(gamma)?;
    check_step(s)?;
    rmap.lattice().check(y.lattice())?;
    let mult: Vec<f64> = rmap
        .as_slice()
        .iter()
        .map(|r| 1.0 / (1.0 + s * gamma * r * r))
        .collect();
    Ok(apply_weight(y, &mult))
}

/// Per-pixel weights `exp(-s gamma r^2)`.
pub fn fourier_weight(rmap: &RadialMap, gamma: f64, s: f64) -> Vec<f64> {
    rmap.as_slice()
        .iter()
        .map(|r| (-s * gamma * r * r).exp())
        .collect()
}

fn apply_weight(y: &Field, weight: &[f64]) -> Field {
    let mut out = y.clone();
    for (v, w) in out.values_mut().iter_mut().zip(weight) {
        *v *= *w;
    }
    out
}

/// Dispatches to the real-space or Fourier-space smoother.
pub fn smooth_dual(y: &Field, param: SmoothingParam, s: f64, rmap: &RadialMap) -> Result<Field> {
    match param.mode {
        SmoothingMode::RealSpace => smooth_dual_real(y, param.gamma, s),
        SmoothingMode::FourierSpace => smooth_dual_fourier(y, rmap, param.gamma, s),
    }
}

fn check_step(s: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {s}")));
    }
    Ok(())
}

/// Spectral gradient of a Fourier-domain field along the two frequency axes.
///
/// Component `j` is `(1 / 2 pi) d/d xi_j` of the DFT taken about the image
/// center, evaluated on the frequency grid. It equals
/// `dft2(-i x_j * idft2(v))` up to a unit-modulus factor per bin, where `x_j`
/// is the signed offset from the center pixel, so `||D F u|| = ||r * u||`
/// exactly.
pub fn spectral_gradient(v: &Field) -> [Field; 2] {
    let l = v.lattice();
    let (c1, c2) = l.center();
    let mut u = v.clone();
    idft2_in_place(&mut u);
    let mut d1 = u.clone();
    let mut d2 = u;
    for (idx, (a, b)) in d1.values_mut().iter_mut().zip(d2.values_mut()).enumerate() {
        let (r, c) = l.coords(idx);
        let x1 = r as f64 - c1 as f64;
        let x2 = c as f64 - c2 as f64;
        *a *= Complex64::new(0.0, -x1);
        *b *= Complex64::new(0.0, -x2);
    }
    dft2_in_place(&mut d1);
    dft2_in_place(&mut d2);
    [d1, d2]
}
