//! Unitary 2D DFT built from 1D `rustfft` passes along rows and columns.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::Field;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transform_in_place(values: &mut [Complex64], n1: usize, n2: usize, direction: FftDirection) {
    debug_assert_eq!(values.len(), n1 * n2);
    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft(n2, direction), p.plan_fft(n1, direction))
    });

    // Rows are contiguous: one call processes all of them.
    row_fft.process(values);

    let mut transposed = vec![Complex64::new(0.0, 0.0); values.len()];
    transpose(values, &mut transposed, n1, n2);
    col_fft.process(&mut transposed);
    transpose(&transposed, values, n2, n1);

    let scale = 1.0 / ((n1 * n2) as f64).sqrt();
    for v in values.iter_mut() {
        *v *= scale;
    }
}

/// `src` is `rows x cols`, `dst` becomes `cols x rows`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        for (c, &v) in row.iter().enumerate() {
            dst[c * rows + r] = v;
        }
    }
}

/// Forward unitary DFT, `1/sqrt(n)` normalisation.
pub fn dft2(u: &Field) -> Field {
    let mut out = u.clone();
    dft2_in_place(&mut out);
    out
}

/// Inverse unitary DFT; also the adjoint of [`dft2`].
pub fn idft2(z: &Field) -> Field {
    let mut out = z.clone();
    idft2_in_place(&mut out);
    out
}

pub fn dft2_in_place(field: &mut Field) {
    let l = field.lattice();
    transform_in_place(field.values_mut(), l.rows(), l.cols(), FftDirection::Forward);
}

pub fn idft2_in_place(field: &mut Field) {
    let l = field.lattice();
    transform_in_place(field.values_mut(), l.rows(), l.cols(), FftDirection::Inverse);
}
