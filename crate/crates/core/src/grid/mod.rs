//! Complex fields on a rectangular lattice and the transforms acting on them.
//!
//! Fields are stored row-major. Fourier-domain fields use the unshifted FFT
//! layout (zero frequency at index `(0, 0)`); the signed frequency of index `j`
//! on an axis of length `n` is given by [`signed_frequency`]. The image center
//! is pixel `(n1 / 2, n2 / 2)`, which is also where [`fftshift`] moves the
//! zero-frequency bin, so real-space radii and frequency radii share one
//! convention.

mod fft;
mod filter;

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fft::{dft2, dft2_in_place, idft2, idft2_in_place};
pub use filter::{frequency_radius, gaussian_lowpass, lowpass_multiplier};

/// Shape of the reconstruction lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    n1: usize,
    n2: usize,
}

impl Lattice {
    pub fn new(n1: usize, n2: usize) -> Result<Self> {
        if n1 < 2 || n2 < 2 {
            return Err(Error::InvalidLattice { n1, n2 });
        }
        Ok(Self { n1, n2 })
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.n1
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.n2
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The designated center pixel `(n1 / 2, n2 / 2)`.
    pub fn center(&self) -> (usize, usize) {
        (self.n1 / 2, self.n2 / 2)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n2 + col
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.n2, index % self.n2)
    }

    pub(crate) fn check(&self, other: Lattice) -> Result<()> {
        if *self != other {
            return Err(Error::LatticeMismatch {
                expected: *self,
                found: other,
            });
        }
        Ok(())
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.n1, self.n2)
    }
}

/// Which space a field lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Real,
    Fourier,
}

/// Signed frequency of index `j` on an axis of length `n`, in `[-n/2, n/2)`
/// for even `n`.
#[inline]
pub fn signed_frequency(j: usize, n: usize) -> f64 {
    if j < n - n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

/// A complex amplitude per lattice pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    lattice: Lattice,
    values: Vec<Complex64>,
}

impl Field {
    /// Wraps `values` (row-major). Rejects wrong lengths and non-finite entries.
    pub fn new(lattice: Lattice, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::LengthMismatch {
                lattice,
                len: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { lattice, values })
    }

    pub fn from_real(lattice: Lattice, values: &[f64]) -> Result<Self> {
        Self::new(lattice, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zeros(lattice: Lattice) -> Self {
        Self {
            lattice,
            values: vec![Complex64::new(0.0, 0.0); lattice.len()],
        }
    }

    pub fn constant(lattice: Lattice, value: Complex64) -> Self {
        Self {
            lattice,
            values: vec![value; lattice.len()],
        }
    }

    /// Builds a field from a per-pixel function of `(row, col)`.
    pub fn from_fn(lattice: Lattice, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(lattice.len());
        for r in 0..lattice.rows() {
            for c in 0..lattice.cols() {
                values.push(f(r, c));
            }
        }
        Self { lattice, values }
    }

    pub(crate) fn from_parts_unchecked(lattice: Lattice, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), lattice.len());
        Self { lattice, values }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.values[self.lattice.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        let i = self.lattice.index(row, col);
        self.values[i] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Euclidean (Frobenius) norm.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Hermitian inner product `<self, other> = sum conj(self_i) other_i`.
    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        self.lattice.check(other.lattice)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Pixelwise map.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Field {
        Field {
            lattice: self.lattice,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixelwise combination of two fields on the same lattice.
    pub fn zip_map(&self, other: &Field, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Field> {
        self.lattice.check(other.lattice)?;
        Ok(Field {
            lattice: self.lattice,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, factor: f64) -> Field {
        self.map(|v| v * factor)
    }

    /// Largest pixelwise distance to `other`.
    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.lattice.check(other.lattice)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Circular shift moving pixel `(r, c)` to `(r + dr, c + dc)`.
    pub fn roll(&self, dr: isize, dc: isize) -> Field {
        let (n1, n2) = (self.lattice.rows() as isize, self.lattice.cols() as isize);
        Field::from_fn(self.lattice, |r, c| {
            let sr = (r as isize - dr).rem_euclid(n1) as usize;
            let sc = (c as isize - dc).rem_euclid(n2) as usize;
            self.get(sr, sc)
        })
    }
}

/// Moves the zero-frequency bin from `(0, 0)` to the image center.
pub fn fftshift(field: &Field) -> Field {
    let (c1, c2) = field.lattice().center();
    field.roll(c1 as isize, c2 as isize)
}

/// Inverse of [`fftshift`].
pub fn ifftshift(field: &Field) -> Field {
    let (c1, c2) = field.lattice().center();
    field.roll(-(c1 as isize), -(c2 as isize))
}

/// Pixels belonging to the support `S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask {
    lattice: Lattice,
    inside: Vec<bool>,
}

impl SupportMask {
    /// Requires at least one pixel inside and at least one outside.
    pub fn new(lattice: Lattice, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != lattice.len() {
            return Err(Error::LengthMismatch {
                lattice,
                len: inside.len(),
            });
        }
        let count = inside.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(Error::InvalidData("support is empty".into()));
        }
        if count == inside.len() {
            return Err(Error::InvalidData(
                "support covers the whole lattice; oversampling requires a zero-density region".into(),
            ));
        }
        Ok(Self { lattice, inside })
    }

    /// Rectangle of `rows x cols` pixels centered on the lattice center.
    pub fn centered_rect(lattice: Lattice, rows: usize, cols: usize) -> Result<Self> {
        let (c1, c2) = lattice.center();
        let r0 = c1.saturating_sub(rows / 2);
        let q0 = c2.saturating_sub(cols / 2);
        let r1 = (r0 + rows).min(lattice.rows());
        let q1 = (q0 + cols).min(lattice.cols());
        let mut inside = vec![false; lattice.len()];
        for r in r0..r1 {
            for c in q0..q1 {
                inside[lattice.index(r, c)] = true;
            }
        }
        Self::new(lattice, inside)
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.inside
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.inside[index]
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Whether the bounding box of the support is centered on the lattice
    /// center to within one pixel.
    pub fn is_centered(&self) -> bool {
        let (mut rmin, mut rmax, mut cmin, mut cmax) = (usize::MAX, 0, usize::MAX, 0);
        for (i, _) in self.inside.iter().enumerate().filter(|(_, &b)| b) {
            let (r, c) = self.lattice.coords(i);
            rmin = rmin.min(r);
            rmax = rmax.max(r);
            cmin = cmin.min(c);
            cmax = cmax.max(c);
        }
        let (c1, c2) = self.lattice.center();
        let mid_r = (rmin + rmax) as f64 / 2.0;
        let mid_c = (cmin + cmax) as f64 / 2.0;
        (mid_r - c1 as f64).abs() <= 1.0 && (mid_c - c2 as f64).abs() <= 1.0
    }
}

/// Distance of every pixel from the image center, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialMap {
    lattice: Lattice,
    r: Vec<f64>,
}

impl RadialMap {
    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.r
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.r[self.lattice.index(row, col)]
    }

    pub fn max(&self) -> f64 {
        self.r.iter().copied().fold(0.0, f64::max)
    }
}

/// Radial distance map about the center pixel `(n1 / 2, n2 / 2)`.
pub fn radial_map(lattice: Lattice) -> RadialMap {
    let (c1, c2) = lattice.center();
    let mut r = Vec::with_capacity(lattice.len());
    for i in 0..lattice.rows() {
        for j in 0..lattice.cols() {
            let dy = i as f64 - c1 as f64;
            let dx = j as f64 - c2 as f64;
            r.push(dy.hypot(dx));
        }
    }
    RadialMap { lattice, r }
}
