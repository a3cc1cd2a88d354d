//! 16-bit greyscale PGM export.

use std::path::Path;

use clap::ValueEnum;
use gps_core::grid::{fftshift, Field};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::raw::RawArray;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
pub enum Scale {
    #[default]
    Linear,
    /// `ln(1 + |x|)`, for diffraction patterns.
    Log,
}

/// Binary PGM (`P5`, maxval 65535, big-endian samples) of `|x|` or
/// `ln(1 + |x|)`, min-max normalised. A constant image is all black.
pub fn to_pgm(array: &RawArray, scale: Scale, shift: bool) -> CliResult<Vec<u8>> {
    let [n1, n2] = array.shape;
    let mut values = array.abs();
    if shift {
        let l = array.lattice()?;
        values = fftshift(&Field::from_real(l, &values)?).real_parts();
    }
    if scale == Scale::Log {
        values.iter_mut().for_each(|v| *v = v.ln_1p());
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(min.is_finite() && max.is_finite()) && !values.is_empty() {
        return Err(CliError::Data("cannot export non-finite values".into()));
    }
    let range = max - min;
    let mut out = format!("P5\n{n2} {n1}\n65535\n").into_bytes();
    out.reserve(2 * values.len());
    for v in values {
        let level = if range > 0.0 {
            ((v - min) / range * 65535.0).round() as u16
        } else {
            0
        };
        out.extend_from_slice(&level.to_be_bytes());
    }
    Ok(out)
}

pub fn export_image(array: &RawArray, path: &Path, scale: Scale, shift: bool) -> CliResult<()> {
    std::fs::write(path, to_pgm(array, scale, shift)?).map_err(CliError::io(path))
}
