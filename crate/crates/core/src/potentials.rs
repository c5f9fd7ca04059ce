//! Gaussian-class initial potentials.
//!
//! Superexponential decay is what the whole pipeline assumes of `q_0`;
//! linear combinations of Gaussians satisfy it and are dense in L2, so they
//! are the standard test inputs here.

use crate::grid::{ComplexField, ComplexGrid};
use num_complex::Complex64;

/// Centered Gaussian `a * exp(-|z|^2)`.
pub fn gaussian(grid: ComplexGrid, amplitude: f64) -> ComplexField {
    ComplexField::from_fn(grid, |z| Complex64::new(amplitude, 0.0) * (-z.norm_sqr()).exp())
}

/// One Gaussian component of a mixture.
#[derive(Debug, Clone, Copy)]
pub struct GaussianTerm {
    /// Complex weight in front of the exponential.
    pub coeff: Complex64,
    /// Inverse-width: the term is `coeff * exp(-sharpness |z - center|^2)`.
    pub sharpness: f64,
    pub center: Complex64,
}

pub fn gaussian_mix(grid: ComplexGrid, terms: &[GaussianTerm]) -> ComplexField {
    ComplexField::from_fn(grid, |z| {
        terms
            .iter()
            .map(|t| t.coeff * (-t.sharpness * (z - t.center).norm_sqr()).exp())
            .sum()
    })
}

/// Check that a potential is numerically supported inside the box:
/// returns `max boundary-cell magnitude / max magnitude`.
pub fn boundary_support_ratio(q: &ComplexField) -> f64 {
    let m = q.max_abs();
    if m == 0.0 {
        0.0
    } else {
        q.edge_max_abs() / m
    }
}
