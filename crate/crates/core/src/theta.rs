//! Riemann theta function `θ(z | B) = Σ_n exp(½ nᵀBn + nᵀz)` over `n ∈ ℤ^g`.
//!
//! The a-periods are normalised to `2πi`, so `θ` is `2πi`-periodic in every
//! argument and `Re B` must be negative definite. Only this convention is
//! supported; matrices normalised to unit a-periods must be multiplied by `2πi`
//! before use.
//!
//! The series is truncated to the cube `|n_j| ≤ M`. For `r = |n|₂` each term is
//! bounded by `exp(−½ λ r² + r Z)` where `λ` is the smallest eigenvalue of
//! `−Re B` and `Z = |Re z|₂`, which gives a certified bound on the discarded
//! shells `|n|_∞ = m > M`.
//!
//! Inside the cube only the points of the ellipsoid
//! `(n − c)ᵀ P (n − c) ≤ R²` are visited, with `P = −Re B`, `P c = Re z` and
//! `R²` chosen so that every skipped term is below `PRUNE_REL` times the
//! largest possible term divided by the cube size. The skipped mass is added
//! to the certified error.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::curve::PeriodMatrix;

/// Largest truncation radius accepted before giving up.
pub const MAX_RADIUS: usize = 64;
/// Relative size of all skipped interior terms together.
pub const PRUNE_REL: f64 = 1e-24;
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ThetaError {
    #[error("period matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("real part of the period matrix is not negative definite (max eigenvalue {0:e})")]
    NotNegativeDefinite(f64),
    #[error("truncation radius must be at least 1")]
    ZeroRadius,
    #[error("tail bound {bound:e} exceeds tolerance {allowed:e} at radius {radius}")]
    TruncationInsufficient { radius: usize, bound: f64, allowed: f64 },
    #[error("required truncation radius exceeds {MAX_RADIUS}")]
    RadiusOverflow,
    #[error("argument has {got} components, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("theta vanishes at the base point")]
    DivisionByZeroTheta,
}

/// Validated period matrix with the factorizations used by the lattice walk.
#[derive(Debug, Clone)]
pub struct ThetaParams {
    b: PeriodMatrix,
    radius: usize,
    tail_tolerance: f64,
    lambda_min: f64,
    /// `(−Re B)⁻¹`, row-major.
    p_inv: Vec<f64>,
    /// `−Re B = Σ_i a_i (y_i + Σ_{j<i} m_ij y_j)²`.
    pivots: Vec<f64>,
    mult: Vec<f64>,
}

/// Smallest eigenvalue of `−Re B` after checking symmetry.
pub fn negative_definiteness(b: &PeriodMatrix) -> Result<f64, ThetaError> {
    let asym = b.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(ThetaError::NotSymmetric(asym));
    }
    let g = b.dim();
    if g == 0 {
        return Ok(f64::INFINITY);
    }
    let eig = SymmetricEigen::new(neg_real_part(b));
    let lambda = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(ThetaError::NotNegativeDefinite(-lambda));
    }
    Ok(lambda)
}

fn neg_real_part(b: &PeriodMatrix) -> DMatrix<f64> {
    let g = b.dim();
    DMatrix::from_fn(g, g, |j, k| -0.5 * (b.get(j, k).re + b.get(k, j).re))
}

/// Eliminates the last variable first, so that term `i` of the sum of squares
/// involves only `y_0 … y_i`.
fn sequential_squares(p: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let g = p.nrows();
    let mut work = p.clone();
    let mut pivots = vec![0.0; g];
    let mut mult = vec![0.0; g * g];
    for i in (0..g).rev() {
        let a = work[(i, i)];
        pivots[i] = a;
        for j in 0..i {
            mult[i * g + j] = work[(i, j)] / a;
        }
        for j in 0..i {
            for k in 0..i {
                work[(j, k)] -= work[(j, i)] * work[(i, k)] / a;
            }
        }
    }
    (pivots, mult)
}

fn shell_count(g: usize, m: usize) -> f64 {
    let outer = (2 * m + 1) as f64;
    if m == 0 {
        return 1.0;
    }
    outer.powi(g as i32) - ((2 * m - 1) as f64).powi(g as i32)
}

/// Bound on `Σ_{|n|_∞ > M} |exp(½ nᵀBn + nᵀz)|` for every `z` with `|Re z|₂ ≤ z_bound`.
pub fn tail_bound(g: usize, lambda_min: f64, radius: usize, z_bound: f64) -> f64 {
    let peak = z_bound / lambda_min;
    let root_g = (g as f64).sqrt();
    let exponent = |r: f64| -0.5 * lambda_min * r * r + z_bound * r;
    let mut total = 0.0;
    let mut m = radius + 1;
    loop {
        let lo = m as f64;
        let hi = root_g * lo;
        let e = if peak < lo {
            exponent(lo)
        } else if peak > hi {
            exponent(hi)
        } else {
            exponent(peak)
        };
        if e > 700.0 {
            return f64::INFINITY;
        }
        let term = shell_count(g, m) * e.exp();
        total += term;
        // past the peak the shell terms decay faster than geometrically
        if peak < lo && (term == 0.0 || term < total * 1e-17) {
            break;
        }
        m += 1;
        if m > radius + 100_000 {
            return f64::INFINITY;
        }
    }
    total
}

/// Smallest radius `M ≥ 1` whose tail bound is below `tol` for all
/// arguments with `|Re z|₂ ≤ z_bound`.
pub fn adaptive_radius(b: &PeriodMatrix, z_bound: f64, tol: f64) -> Result<usize, ThetaError> {
    let lambda = negative_definiteness(b)?;
    radius_for(b.dim(), lambda, z_bound, tol)
}

fn radius_for(g: usize, lambda: f64, z_bound: f64, tol: f64) -> Result<usize, ThetaError> {
    (1..=MAX_RADIUS)
        .find(|&m| tail_bound(g, lambda, m, z_bound) < tol)
        .ok_or(ThetaError::RadiusOverflow)
}

impl ThetaParams {
    pub fn new(b: PeriodMatrix, radius: usize, tail_tolerance: f64) -> Result<Self, ThetaError> {
        if radius == 0 {
            return Err(ThetaError::ZeroRadius);
        }
        if radius > MAX_RADIUS {
            return Err(ThetaError::RadiusOverflow);
        }
        let lambda_min = negative_definiteness(&b)?;
        let g = b.dim();
        let p = neg_real_part(&b);
        let (pivots, mult) = sequential_squares(&p);
        let p_inv = if g == 0 {
            Vec::new()
        } else {
            let inv = p.cholesky().ok_or(ThetaError::NotNegativeDefinite(-lambda_min))?.inverse();
            (0..g * g).map(|i| inv[(i / g, i % g)]).collect()
        };
        Ok(ThetaParams { b, radius, tail_tolerance, lambda_min, p_inv, pivots, mult })
    }

    /// Params whose radius certifies `tol` for all `|Re z|₂ ≤ z_bound`.
    pub fn adaptive(b: PeriodMatrix, z_bound: f64, tol: f64) -> Result<Self, ThetaError> {
        let lambda = negative_definiteness(&b)?;
        let radius = radius_for(b.dim(), lambda, z_bound, tol)?;
        Self::new(b, radius, tol)
    }

    pub fn g(&self) -> usize {
        self.b.dim()
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn tail_tolerance(&self) -> f64 {
        self.tail_tolerance
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn period_matrix(&self) -> &PeriodMatrix {
        &self.b
    }

    /// Truncated sum over the cube without tail certification.
    pub fn partial_sum(&self, z: &[Complex64]) -> Result<Complex64, ThetaError> {
        Ok(self.sum_with_peak(z)?.0)
    }

    /// Cube sum and `ln` of the largest possible term magnitude.
    fn sum_with_peak(&self, z: &[Complex64]) -> Result<(Complex64, f64), ThetaError> {
        let g = self.g();
        if z.len() != g {
            return Err(ThetaError::DimensionMismatch { expected: g, got: z.len() });
        }
        if g == 0 {
            return Ok((Complex64::new(1.0, 0.0), 0.0));
        }
        let center: Vec<f64> = (0..g).map(|i| (0..g).map(|j| self.p_inv[i * g + j] * z[j].re).sum()).collect();
        let peak = 0.5 * center.iter().zip(z).map(|(c, z)| c * z.re).sum::<f64>();
        let cube = ((2 * self.radius + 1) as f64).powi(g as i32);
        let r2 = 2.0 * (cube.ln() - PRUNE_REL.ln());
        let mut walk = Walk { params: self, z, center: &center, n: vec![0; g], r2, acc: NeumaierSum::default() };
        walk.level(0, 0.0, Complex64::new(0.0, 0.0));
        Ok((walk.acc.total(), peak))
    }
}

/// Depth-first lexicographic walk over the pruned cube.
struct Walk<'a> {
    params: &'a ThetaParams,
    z: &'a [Complex64],
    center: &'a [f64],
    n: Vec<i64>,
    r2: f64,
    acc: NeumaierSum,
}

impl Walk<'_> {
    fn level(&mut self, i: usize, q: f64, e: Complex64) {
        let p = self.params;
        let g = p.g();
        let m = p.radius as i64;
        let shift: f64 = (0..i).map(|j| p.mult[i * g + j] * (self.n[j] as f64 - self.center[j])).sum();
        let mid = self.center[i] - shift;
        let half = ((self.r2 - q) / p.pivots[i]).max(0.0).sqrt();
        let lo = ((mid - half).ceil() as i64).max(-m);
        let hi = ((mid + half).floor() as i64).min(m);
        let cross: Complex64 = (0..i).map(|j| p.b.get(i, j) * self.n[j] as f64).sum();
        let bii = p.b.get(i, i);
        for ni in lo..=hi {
            let nf = ni as f64;
            let dq = p.pivots[i] * (nf - mid) * (nf - mid);
            if q + dq > self.r2 {
                continue;
            }
            let de = nf * cross + 0.5 * bii * nf * nf + nf * self.z[i];
            self.n[i] = ni;
            if i + 1 == g {
                let ex = e + de;
                // exp underflows to exactly zero below this
                if ex.re > -745.0 {
                    self.acc.add(ex.exp());
                }
            } else {
                self.level(i + 1, q + dq, e + de);
            }
        }
    }
}

/// Compensated summation of complex terms, applied to each component.
#[derive(Debug, Default, Clone, Copy)]
struct NeumaierSum {
    sum: Complex64,
    comp: Complex64,
}

impl NeumaierSum {
    #[inline]
    fn add(&mut self, x: Complex64) {
        self.sum.re = neumaier_step(self.sum.re, x.re, &mut self.comp.re);
        self.sum.im = neumaier_step(self.sum.im, x.im, &mut self.comp.im);
    }

    fn total(&self) -> Complex64 {
        self.sum + self.comp
    }
}

#[inline]
fn neumaier_step(sum: f64, x: f64, comp: &mut f64) -> f64 {
    let t = sum + x;
    if sum.abs() >= x.abs() {
        *comp += (sum - t) + x;
    } else {
        *comp += (x - t) + sum;
    }
    t
}

/// Certified evaluation: fails when the tail bound at `|Re z|₂` exceeds
/// `tail_tolerance · |partial sum|`.
pub fn theta(z: &[Complex64], params: &ThetaParams) -> Result<Complex64, ThetaError> {
    let (value, peak) = params.sum_with_peak(z)?;
    let z_bound = z.iter().map(|v| v.re * v.re).sum::<f64>().sqrt();
    let pruned = if params.g() == 0 { 0.0 } else { PRUNE_REL * peak.exp() };
    let bound = tail_bound(params.g(), params.lambda_min, params.radius, z_bound) + pruned;
    let allowed = params.tail_tolerance * value.norm();
    if bound.is_nan() || allowed.is_nan() || bound > allowed {
        return Err(ThetaError::TruncationInsufficient { radius: params.radius, bound, allowed });
    }
    Ok(value)
}

/// `|θ(z + B e_k) − exp(−½ b_kk − z_k) θ(z)| / |θ(z)|` on the truncated lattice.
pub fn quasi_periodicity_residual(z: &[Complex64], k: usize, params: &ThetaParams) -> Result<f64, ThetaError> {
    let base = params.partial_sum(z)?;
    if base.norm() < 1e-300 {
        return Err(ThetaError::DivisionByZeroTheta);
    }
    let b = params.period_matrix();
    let shifted: Vec<Complex64> = z.iter().enumerate().map(|(j, zj)| zj + b.get(j, k)).collect();
    let lhs = params.partial_sum(&shifted)?;
    let rhs = (-0.5 * b.get(k, k) - z[k]).exp() * base;
    Ok((lhs - rhs).norm() / base.norm())
}
