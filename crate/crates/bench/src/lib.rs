//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use ds2aw_core::curve::{build_spectral_data, SpectralData};
use ds2aw_core::field::{synthesize, Field, Harmonic};
use num_complex::Complex64;

/// Periods with a single unstable class `±(1, 0)`.
pub const SINGLE: (f64, f64) = (2.0 * PI / 1.2, 2.0 * PI / 2.1);
/// Periods with four unstable classes.
pub const FOUR_CLASSES: (f64, f64) = (2.0 * PI / 1.2, 2.0 * PI / 1.4);

/// `v₀ = cos(1.2 x)` on the single-mode cell.
pub fn cosine_perturbation(n: usize) -> Field {
    let h = [Harmonic { n_x: 1, n_y: 0, c: Complex64::new(0.5, 0.0) }, Harmonic { n_x: -1, n_y: 0, c: Complex64::new(0.5, 0.0) }];
    synthesize(&h, SINGLE.0, SINGLE.1, n, n)
}

/// Every harmonic with `|n_x|, |n_y| ≤ 1`, fixed coefficients.
pub fn four_class_perturbation(n: usize) -> Field {
    let raw = [
        (1, 0, 0.5, 0.1),
        (-1, 0, 0.3, -0.2),
        (0, 1, -0.4, 0.25),
        (0, -1, 0.2, 0.3),
        (1, 1, 0.15, -0.35),
        (-1, -1, 0.45, 0.05),
        (1, -1, -0.3, -0.3),
        (-1, 1, 0.1, 0.4),
    ];
    let h: Vec<Harmonic> = raw.iter().map(|&(n_x, n_y, re, im)| Harmonic { n_x, n_y, c: Complex64::new(re, im) }).collect();
    synthesize(&h, FOUR_CLASSES.0, FOUR_CLASSES.1, n, n)
}

/// Genus-2 spectral data.
pub fn single_mode(eps: f64) -> SpectralData {
    build_spectral_data(SINGLE.0, SINGLE.1, eps, &cosine_perturbation(32), 1.0).expect("single-mode periods are generic")
}

/// Genus-8 spectral data.
pub fn four_classes(eps: f64) -> SpectralData {
    build_spectral_data(FOUR_CLASSES.0, FOUR_CLASSES.1, eps, &four_class_perturbation(32), 1.0).expect("four-class periods are generic")
}

/// Cauchy data `1 + ε cos(1.2 x)` on an `n × n` grid.
pub fn single_mode_data(n: usize, eps: f64) -> Field {
    let mut u = cosine_perturbation(n);
    u.u.iter_mut().for_each(|v| *v = 1.0 + eps * *v);
    u
}
