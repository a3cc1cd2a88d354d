use super::{dft2_in_place, idft2_in_place, signed_frequency, Domain, Field, Lattice, RadialMap};
use crate::error::{Error, Result};

/// Frequency radius `|k|` (in frequency pixels) of every bin of an unshifted
/// Fourier-domain field.
pub fn frequency_radius(lattice: Lattice) -> RadialMap {
    let mut r = Vec::with_capacity(lattice.len());
    for i in 0..lattice.rows() {
        let k1 = signed_frequency(i, lattice.rows());
        for j in 0..lattice.cols() {
            let k2 = signed_frequency(j, lattice.cols());
            r.push(k1.hypot(k2));
        }
    }
    RadialMap { lattice, r }
}

/// Gaussian low-pass transfer function `exp(-k^2 / (2 alpha^2))` on the
/// unshifted frequency grid.
pub fn lowpass_multiplier(lattice: Lattice, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "low-pass cutoff must be positive, got {alpha}"
        )));
    }
    let denom = 2.0 * alpha * alpha;
    Ok(frequency_radius(lattice)
        .as_slice()
        .iter()
        .map(|k| (-k * k / denom).exp())
        .collect())
}

/// Gaussian low-pass filter with cutoff `alpha` in frequency pixels.
///
/// `domain` says where `z` lives: a Fourier-domain field is multiplied
/// directly, a real-space field is transformed, filtered and transformed back.
pub fn gaussian_lowpass(z: &Field, alpha: f64, domain: Domain) -> Result<Field> {
    let mult = lowpass_multiplier(z.lattice(), alpha)?;
    let mut out = z.clone();
    if domain == Domain::Real {
        dft2_in_place(&mut out);
    }
    for (v, m) in out.values_mut().iter_mut().zip(&mult) {
        *v *= *m;
    }
    if domain == Domain::Real {
        idft2_in_place(&mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn rejects_nonpositive_cutoff() {
        let f = Field::zeros(Lattice::new(4, 4).unwrap());
        assert!(gaussian_lowpass(&f, 0.0, Domain::Real).is_err());
        assert!(gaussian_lowpass(&f, -1.0, Domain::Fourier).is_err());
        assert!(gaussian_lowpass(&f, f64::NAN, Domain::Fourier).is_err());
    }

    #[test]
    fn constant_field_is_unchanged() {
        let l = Lattice::new(8, 6).unwrap();
        let f = Field::constant(l, Complex64::new(2.0, 1.0));
        let out = gaussian_lowpass(&f, 0.7, Domain::Real).unwrap();
        assert!(out.max_abs_diff(&f).unwrap() < 1e-12);
    }

    #[test]
    fn huge_cutoff_is_all_pass() {
        let l = Lattice::new(6, 7).unwrap();
        let f = Field::from_fn(l, |r, c| Complex64::new((r * 3 + c) as f64, r as f64 - c as f64));
        for domain in [Domain::Real, Domain::Fourier] {
            let out = gaussian_lowpass(&f, 1e9, domain).unwrap();
            assert!(out.max_abs_diff(&f).unwrap() < 1e-9);
        }
    }
}
