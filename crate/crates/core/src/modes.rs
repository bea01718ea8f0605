//! Lattice of perturbation harmonics and their linear stability on the constant background.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curve::resonance_roots;

/// Relative tolerance for hits of the instability circle `k² = 4a²`.
pub const CIRCLE_TOL: f64 = 1e-9;
/// Absolute tolerance for coinciding resonant points.
pub const COLLISION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModesError {
    #[error("periods must be positive, got L_x = {lx}, L_y = {ly}")]
    InvalidPeriod { lx: f64, ly: f64 },
    #[error("background amplitude must be positive, got {0}")]
    InvalidAmplitude(f64),
    #[error("zero wave vector has no growth rate")]
    ZeroWavevector,
    #[error("search radius {given} does not cover the instability disk (need >= {required})")]
    SearchRadiusTooSmall { given: i64, required: i64 },
}

/// One Fourier harmonic `(n_x, n_y)` with its wave vector and linearised eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub n_x: i64,
    pub n_y: i64,
    pub k_x: f64,
    pub k_y: f64,
    pub sigma: Complex64,
    pub unstable: bool,
}

impl Mode {
    pub fn new(n_x: i64, n_y: i64, lx: f64, ly: f64, a: f64) -> Result<Self, ModesError> {
        if (n_x, n_y) == (0, 0) {
            return Err(ModesError::ZeroWavevector);
        }
        let k_x = n_x as f64 * 2.0 * PI / lx;
        let k_y = n_y as f64 * 2.0 * PI / ly;
        Self::from_wavevector(n_x, n_y, k_x, k_y, a)
    }

    pub(crate) fn from_wavevector(n_x: i64, n_y: i64, k_x: f64, k_y: f64, a: f64) -> Result<Self, ModesError> {
        let sigma = growth_rate(k_x, k_y, a)?;
        let k2 = k_x * k_x + k_y * k_y;
        let unstable = k2 < 4.0 * a * a && !is_marginal(k_x, k_y, a);
        Ok(Mode { n_x, n_y, k_x, k_y, sigma, unstable })
    }

    pub fn k_sqr(&self) -> f64 {
        self.k_x * self.k_x + self.k_y * self.k_y
    }

    /// `k_x + i k_y`.
    pub fn kappa(&self) -> Complex64 {
        Complex64::new(self.k_x, self.k_y)
    }

    pub fn negated(&self) -> Mode {
        Mode { n_x: -self.n_x, n_y: -self.n_y, k_x: -self.k_x, k_y: -self.k_y, ..*self }
    }

    /// Representative of the `±(n_x, n_y)` class: `n_x > 0`, or `n_x = 0` and `n_y > 0`.
    pub fn is_class_representative(&self) -> bool {
        self.n_x > 0 || (self.n_x == 0 && self.n_y > 0)
    }
}

fn is_marginal(k_x: f64, k_y: f64, a: f64) -> bool {
    (k_x * k_x - k_y * k_y).abs() <= CIRCLE_TOL * a * a
}

/// Linearised eigenvalue of a harmonic perturbation of the background `a`:
/// `σ = (k_x² − k_y²) √(4a² − k²) / |k|`.
///
/// Inside the disk the result is real and carries the sign of `k_x² − k_y²`;
/// outside it is purely imaginary with non-negative imaginary part.
pub fn growth_rate(k_x: f64, k_y: f64, a: f64) -> Result<Complex64, ModesError> {
    let k2 = k_x * k_x + k_y * k_y;
    if k2 == 0.0 {
        return Err(ModesError::ZeroWavevector);
    }
    let d = k_x * k_x - k_y * k_y;
    let radicand = 4.0 * a * a - k2;
    let k = k2.sqrt();
    if radicand >= 0.0 {
        Ok(Complex64::new(d * radicand.sqrt() / k, 0.0))
    } else {
        Ok(Complex64::new(0.0, d.abs() * (-radicand).sqrt() / k))
    }
}

/// Smallest search radius whose square `|n| ≤ R` covers the open disk `k² < 4a²`.
pub fn min_search_radius(lx: f64, ly: f64, a: f64) -> i64 {
    (lx.max(ly) * a / PI).ceil() as i64
}

fn validate(lx: f64, ly: f64, a: f64) -> Result<(), ModesError> {
    if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
        return Err(ModesError::InvalidPeriod { lx, ly });
    }
    if a <= 0.0 || !a.is_finite() {
        return Err(ModesError::InvalidAmplitude(a));
    }
    Ok(())
}

/// All harmonics with `|n_x|, |n_y| ≤ search_radius` except `(0, 0)`, in
/// lexicographic `(n_x, n_y)` order.
pub fn enumerate_modes(lx: f64, ly: f64, a: f64, search_radius: i64) -> Result<Vec<Mode>, ModesError> {
    validate(lx, ly, a)?;
    let required = min_search_radius(lx, ly, a);
    if search_radius < required {
        return Err(ModesError::SearchRadiusTooSmall { given: search_radius, required });
    }
    let mut out = Vec::with_capacity(((2 * search_radius + 1).pow(2) - 1) as usize);
    for n_x in -search_radius..=search_radius {
        for n_y in -search_radius..=search_radius {
            if (n_x, n_y) != (0, 0) {
                out.push(Mode::new(n_x, n_y, lx, ly, a)?);
            }
        }
    }
    Ok(out)
}

/// One representative per `±n` class among the unstable modes, lexicographically ordered.
pub fn unstable_classes(modes: &[Mode]) -> Vec<Mode> {
    modes.iter().filter(|m| m.unstable && m.is_class_representative()).copied().collect()
}

/// Two resonant pairs from different harmonics sharing a point of the unit-disk
/// parameterisation, i.e. a multiplier point with more than two preimages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCollision {
    pub point: Complex64,
    pub first: (i64, i64),
    pub second: (i64, i64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericityReport {
    pub on_circle_violations: Vec<Mode>,
    pub multiplicity_violations: Vec<PointCollision>,
    pub marginal_modes: Vec<Mode>,
    pub ok: bool,
}

/// Checks the genericity hypotheses on the periods: no lattice vector on the
/// circle `|k| = 2a`, no marginal mode inside it and no spectral point shared
/// by two resonance classes. Fails only on invalid inputs.
pub fn check_genericity(lx: f64, ly: f64, a: f64, search_radius: i64) -> Result<GenericityReport, ModesError> {
    let modes = enumerate_modes(lx, ly, a, search_radius)?;
    let four_a2 = 4.0 * a * a;

    let on_circle_violations: Vec<Mode> = modes
        .iter()
        .filter(|m| (m.k_sqr() - four_a2).abs() < CIRCLE_TOL * a * a)
        .copied()
        .collect();
    let marginal_modes: Vec<Mode> = modes
        .iter()
        .filter(|m| m.k_sqr() < four_a2 && is_marginal(m.k_x, m.k_y, a))
        .copied()
        .collect();

    // Every lattice vector contributes the solutions of the resonance system;
    // a point appearing for two different harmonics is a triple (or worse) point.
    // k and -k solve the same system, so one member per class suffices.
    // Work in units with a = 1, where the parameterisation lives.
    let mut points: Vec<(Complex64, (i64, i64))> = Vec::new();
    for m in modes.iter().filter(|m| m.is_class_representative()) {
        let kappa = m.kappa() / a;
        if (kappa.norm_sqr() - 4.0).abs() < CIRCLE_TOL {
            continue;
        }
        for (t1, t2) in resonance_roots(kappa) {
            points.push((t1, (m.n_x, m.n_y)));
            points.push((t2, (m.n_x, m.n_y)));
        }
    }
    let mut multiplicity_violations = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let (p, mi) = points[i];
            let (q, mj) = points[j];
            if mi != mj && (p - q).norm() < COLLISION_TOL * (1.0 + p.norm()) {
                multiplicity_violations.push(PointCollision { point: p, first: mi, second: mj });
            }
        }
    }

    let ok = on_circle_violations.is_empty() && multiplicity_violations.is_empty() && marginal_modes.is_empty();
    Ok(GenericityReport { on_circle_violations, multiplicity_violations, marginal_modes, ok })
}
