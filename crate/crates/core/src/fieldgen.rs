//! Leading-order finite-gap solution as a ratio of four theta values.
//!
//! With `w = W_z z + W_zbar z̄ + W_t t` (unit coordinates),
//! `u = exp(z Cz + z̄ Czbar + t Ct) · θ(A + w + d) θ(d) / (θ(A + d) θ(w + d)) · u00`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::curve::SpectralData;
use crate::field::{grid_point, Field};
use crate::theta::{theta, ThetaError, ThetaParams};

/// Denominators below this modulus are treated as theta zeros.
pub const THETA_ZERO_TOL: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldgenError {
    #[error("theta params were built for a different period matrix")]
    ParamsMismatch,
    #[error("theta denominator vanishes at (x, y, t) = ({x}, {y}, {t})")]
    ThetaZero { x: f64, y: f64, t: f64 },
    #[error("theta evaluation failed at (x, y, t) = ({x}, {y}, {t}): {source}")]
    Theta { x: f64, y: f64, t: f64, source: ThetaError },
    #[error("grid {nx}x{ny} is too small, need at least 8x8")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("at grid point ({ix}, {iy}), t = {t}: {source}")]
    AtGridPoint { ix: usize, iy: usize, t: f64, source: Box<FieldgenError> },
}

/// Spectral data paired with theta params and the `t`-independent theta values.
#[derive(Debug, Clone)]
pub struct FiniteGapSolution<'a> {
    sd: &'a SpectralData,
    params: &'a ThetaParams,
    theta_d: Complex64,
    theta_ad: Complex64,
    a_plus_d: Vec<Complex64>,
}

impl<'a> FiniteGapSolution<'a> {
    pub fn new(sd: &'a SpectralData, params: &'a ThetaParams) -> Result<Self, FieldgenError> {
        if params.period_matrix() != &sd.b {
            return Err(FieldgenError::ParamsMismatch);
        }
        let wrap = |source| FieldgenError::Theta { x: 0.0, y: 0.0, t: 0.0, source };
        let a_plus_d: Vec<Complex64> = sd.a_inf2.iter().zip(&sd.d).map(|(a, d)| a + d).collect();
        let theta_d = theta(&sd.d, params).map_err(wrap)?;
        let theta_ad = theta(&a_plus_d, params).map_err(wrap)?;
        if theta_ad.norm() < THETA_ZERO_TOL {
            return Err(FieldgenError::ThetaZero { x: 0.0, y: 0.0, t: 0.0 });
        }
        Ok(FiniteGapSolution { sd, params, theta_d, theta_ad, a_plus_d })
    }

    /// Phase vector `w(z, t)` in unit coordinates.
    pub fn phase(&self, xu: f64, yu: f64, tu: f64) -> Vec<Complex64> {
        let z = Complex64::new(xu, yu);
        let zb = z.conj();
        (0..self.sd.g)
            .map(|j| self.sd.w_z[j] * z + self.sd.w_zbar[j] * zb + self.sd.w_t[j] * tu)
            .collect()
    }

    /// `u(x, y, t)` in physical coordinates.
    pub fn u(&self, x: f64, y: f64, t: f64) -> Result<Complex64, FieldgenError> {
        let (xu, yu, tu) = self.sd.rescaling().to_unit(x, y, t);
        let w = self.phase(xu, yu, tu);
        let wrap = |source| FieldgenError::Theta { x, y, t, source };
        let num_arg: Vec<Complex64> = w.iter().zip(&self.a_plus_d).map(|(w, s)| w + s).collect();
        let den_arg: Vec<Complex64> = w.iter().zip(&self.sd.d).map(|(w, d)| w + d).collect();
        let den = theta(&den_arg, self.params).map_err(wrap)?;
        if den.norm() < THETA_ZERO_TOL {
            return Err(FieldgenError::ThetaZero { x, y, t });
        }
        let num = theta(&num_arg, self.params).map_err(wrap)?;
        let z = Complex64::new(xu, yu);
        let prefactor = (z * self.sd.cz + z.conj() * self.sd.czbar + tu * self.sd.ct).exp();
        Ok(prefactor * (num * self.theta_d) / (self.theta_ad * den) * self.sd.u00)
    }
}

/// Single-point evaluation in physical coordinates.
pub fn evaluate_u(x: f64, y: f64, t: f64, sd: &SpectralData, params: &ThetaParams) -> Result<Complex64, FieldgenError> {
    FiniteGapSolution::new(sd, params)?.u(x, y, t)
}

/// One field per requested time on an `nx × ny` grid of the period cell.
pub fn evaluate_grid(
    times: &[f64],
    nx: usize,
    ny: usize,
    sd: &SpectralData,
    params: &ThetaParams,
) -> Result<Vec<Field>, FieldgenError> {
    if nx < 8 || ny < 8 {
        return Err(FieldgenError::GridTooSmall { nx, ny });
    }
    let sol = FiniteGapSolution::new(sd, params)?;
    times
        .iter()
        .map(|&t| {
            let u = (0..nx * ny)
                .into_par_iter()
                .map(|i| {
                    let (ix, iy) = (i % nx, i / nx);
                    let (x, y) = grid_point(sd.lx, sd.ly, nx, ny, ix, iy);
                    sol.u(x, y, t)
                        .map_err(|e| FieldgenError::AtGridPoint { ix, iy, t, source: Box::new(e) })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Field { lx: sd.lx, ly: sd.ly, nx, ny, t, u })
        })
        .collect()
}

/// Heuristic first-appearance time `(1/σ_max) log(1/(ε C))` in physical units.
pub fn first_appearance_estimate(sd: &SpectralData) -> f64 {
    let sigma = sd.w_t.iter().map(|w| w.norm()).fold(0.0, f64::max);
    let c = sd.pairs.iter().map(|p| p.sqrt_alpha_beta.norm()).fold(0.0, f64::max);
    (1.0 / (sd.unit_eps() * c)).ln() / sigma / sd.rescaling().time_scale()
}

/// Bound on `|Re|₂` of every theta argument for physical times in `[t_min, t_max]`.
pub fn argument_bound(sd: &SpectralData, t_min: f64, t_max: f64) -> f64 {
    let ts = sd.rescaling().time_scale();
    let shift = sd.a_inf2.iter().map(|a| a.re * a.re).sum::<f64>().sqrt();
    [t_min, t_max]
        .iter()
        .map(|&t| {
            sd.d.iter()
                .zip(&sd.w_t)
                .zip(&sd.w_z)
                .zip(&sd.w_zbar)
                .map(|(((d, wt), wz), wzb)| {
                    // the spatial part of w is purely imaginary on real (x, y)
                    debug_assert!((wz + wzb).re.abs() < 1e-9);
                    let r = d.re + wt.re * t * ts;
                    r * r
                })
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
        + shift
}

/// Theta params with the smallest radius certifying `tol` on `[t_min, t_max]`.
pub fn theta_params_for(sd: &SpectralData, t_min: f64, t_max: f64, tol: f64) -> Result<ThetaParams, ThetaError> {
    ThetaParams::adaptive(sd.b.clone(), argument_bound(sd, t_min, t_max), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::build_spectral_data;
    use std::f64::consts::PI;

    fn single_mode(eps: f64) -> SpectralData {
        let (lx, ly) = (2.0 * PI / 1.2, 2.0 * PI / 2.1);
        let v0 = Field::from_fn(lx, ly, 32, 32, 0.0, |x, _| Complex64::new((1.2 * x).cos(), 0.0));
        build_spectral_data(lx, ly, eps, &v0, 1.0).unwrap()
    }

    #[test]
    fn normalization_at_origin() {
        let sd = single_mode(0.01);
        let p = theta_params_for(&sd, 0.0, 0.0, 1e-14).unwrap();
        let u = evaluate_u(0.0, 0.0, 0.0, &sd, &p).unwrap();
        assert!((u - sd.u00).norm() <= 1e-15 * sd.u00.norm());
        assert!((sd.u00 - Complex64::new(1.01, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn spatial_periodicity() {
        let sd = single_mode(0.01);
        let p = theta_params_for(&sd, 0.0, 3.0, 1e-13).unwrap();
        let sol = FiniteGapSolution::new(&sd, &p).unwrap();
        for &(x, y, t) in &[(0.3, 0.7, 0.5), (1.9, -0.4, 2.2), (-2.0, 1.1, 1.0)] {
            let u = sol.u(x, y, t).unwrap();
            let ux = sol.u(x + sd.lx, y, t).unwrap();
            let uy = sol.u(x, y + sd.ly, t).unwrap();
            assert!((u - ux).norm() <= 1e-9);
            assert!((u - uy).norm() <= 1e-9);
        }
    }

    #[test]
    fn grid_matches_pointwise_bitwise() {
        let sd = single_mode(0.02);
        let p = theta_params_for(&sd, 0.0, 1.0, 1e-13).unwrap();
        let fields = evaluate_grid(&[0.0, 1.0], 8, 8, &sd, &p).unwrap();
        for f in &fields {
            for iy in 0..8 {
                for ix in 0..8 {
                    let (x, y) = f.coords(ix, iy);
                    assert_eq!(f.at(ix, iy), evaluate_u(x, y, f.t, &sd, &p).unwrap());
                }
            }
        }
    }

    #[test]
    fn first_appearance_values() {
        let sd = single_mode(0.01);
        let t1 = first_appearance_estimate(&sd);
        assert!(t1 > 0.0);
        let t2 = first_appearance_estimate(&single_mode(0.005));
        let sigma = sd.w_t[0].norm();
        assert!((t2 - t1 - 2f64.ln() / sigma).abs() < 1e-10);
    }

    #[test]
    fn mismatched_params_rejected() {
        let sd = single_mode(0.01);
        let other = single_mode(0.02);
        let p = theta_params_for(&other, 0.0, 0.0, 1e-12).unwrap();
        assert_eq!(evaluate_u(0.0, 0.0, 0.0, &sd, &p), Err(FieldgenError::ParamsMismatch));
    }

    #[test]
    fn small_grid_rejected() {
        let sd = single_mode(0.01);
        let p = theta_params_for(&sd, 0.0, 0.0, 1e-12).unwrap();
        assert!(matches!(evaluate_grid(&[0.0], 4, 8, &sd, &p), Err(FieldgenError::GridTooSmall { .. })));
    }
}
