//! Pseudo-spectral Strang-split integrator for `i u_t + u_xx − u_yy + 2 q u = 0`
//! with `q̂ = (k_x² − k_y²)/(k_x² + k_y²) · (|u|²)^` and `q̂(0) = 0`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::Field;

/// Smallest accepted grid side.
pub const MIN_GRID: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("grid {nx}x{ny} must have power-of-two sides of at least {MIN_GRID}")]
    BadGrid { nx: usize, ny: usize },
    #[error("time step {dt} exceeds the accuracy bound {bound}")]
    DtTooLarge { dt: f64, bound: f64 },
    #[error("time step must be finite and nonzero, got {0}")]
    InvalidDt(f64),
    #[error("non-finite sample at t = {t}")]
    NanDetected { t: f64 },
    #[error("snapshot times must be sorted in the direction of integration and lie between {t0} and {t_end}")]
    BadSnapshots { t0: f64, t_end: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverOptions {
    /// Reject steps above `0.5 / max|k_x² − k_y²|`.
    pub enforce_dt_bound: bool,
    /// Apply the 2/3-rule filter after every step.
    pub dealias: bool,
}

/// Worst deviations of `q` from a real zero-mean field seen so far.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QDiagnostics {
    pub max_imag: f64,
    pub max_abs_mean: f64,
    pub evaluations: usize,
}

impl QDiagnostics {
    fn record(&mut self, max_imag: f64, mean: f64) {
        self.max_imag = self.max_imag.max(max_imag);
        self.max_abs_mean = self.max_abs_mean.max(mean.abs());
        self.evaluations += 1;
    }
}

/// Two-dimensional FFT on a row-major `nx × ny` grid, unnormalized forward,
/// normalized inverse. Holds its own transpose and scratch buffers.
#[derive(Clone)]
pub struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    work: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.nx, self.ny)
    }
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        let (fwd_x, inv_x) = (planner.plan_fft_forward(nx), planner.plan_fft_inverse(nx));
        let (fwd_y, inv_y) = (planner.plan_fft_forward(ny), planner.plan_fft_inverse(ny));
        let scratch_len = [&fwd_x, &inv_x, &fwd_y, &inv_y].iter().map(|f| f.get_inplace_scratch_len()).max().unwrap_or(0);
        let zero = Complex64::new(0.0, 0.0);
        Fft2 { nx, ny, fwd_x, inv_x, fwd_y, inv_y, work: vec![zero; nx * ny], scratch: vec![zero; scratch_len] }
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        let (fx, fy) = (self.fwd_x.clone(), self.fwd_y.clone());
        self.apply(data, &fx, &fy);
    }

    /// Inverse transform including the `1/(nx ny)` factor.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        let (fx, fy) = (self.inv_x.clone(), self.inv_y.clone());
        self.apply(data, &fx, &fy);
        let s = 1.0 / (self.nx * self.ny) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    fn apply(&mut self, data: &mut [Complex64], fx: &Arc<dyn Fft<f64>>, fy: &Arc<dyn Fft<f64>>) {
        let (nx, ny) = (self.nx, self.ny);
        // every row at once, then every column through the transposed buffer
        fx.process_with_scratch(data, &mut self.scratch);
        transpose_into(data, &mut self.work, nx, ny);
        fy.process_with_scratch(&mut self.work, &mut self.scratch);
        transpose_into(&self.work, data, ny, nx);
    }
}

/// `rows × cols` row-major `src` into `cols × rows` row-major `dst`.
fn transpose_into(src: &[Complex64], dst: &mut [Complex64], cols: usize, rows: usize) {
    const BLOCK: usize = 16;
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Signed FFT frequency index of bin `i` on an `n`-point grid.
#[inline]
pub fn frequency_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

fn check_grid(nx: usize, ny: usize) -> Result<(), SolverError> {
    let ok = |n: usize| n >= MIN_GRID && n.is_power_of_two();
    if ok(nx) && ok(ny) {
        Ok(())
    } else {
        Err(SolverError::BadGrid { nx, ny })
    }
}

/// Spectral operators of one grid.
#[derive(Debug, Clone)]
pub struct Spectral {
    pub fft: Fft2,
    /// `(k_x² − k_y²)/(k_x² + k_y²)`, zero at the origin.
    pub q_multiplier: Vec<f64>,
    /// `k_x² − k_y²`.
    pub dispersion: Vec<f64>,
    /// Modes kept by the 2/3 rule.
    pub dealias_mask: Vec<bool>,
}

impl Spectral {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self, SolverError> {
        check_grid(nx, ny)?;
        let mut q_multiplier = Vec::with_capacity(nx * ny);
        let mut dispersion = Vec::with_capacity(nx * ny);
        let mut dealias_mask = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            let my = frequency_index(iy, ny);
            let ky = 2.0 * PI * my as f64 / ly;
            for ix in 0..nx {
                let mx = frequency_index(ix, nx);
                let kx = 2.0 * PI * mx as f64 / lx;
                let (kx2, ky2) = (kx * kx, ky * ky);
                q_multiplier.push(if mx == 0 && my == 0 { 0.0 } else { (kx2 - ky2) / (kx2 + ky2) });
                dispersion.push(kx2 - ky2);
                dealias_mask.push(3 * mx.unsigned_abs() as usize <= nx && 3 * my.unsigned_abs() as usize <= ny);
            }
        }
        Ok(Spectral { fft: Fft2::new(nx, ny), q_multiplier, dispersion, dealias_mask })
    }

    /// `0.5 / max|k_x² − k_y²|` over the grid.
    pub fn dt_bound(&self) -> f64 {
        0.5 / self.dispersion.iter().fold(0.0f64, |m, d| m.max(d.abs()))
    }

    /// Mean-flow field from samples of `u`, with the imaginary residue and mean
    /// of the back-transform reported as `(q, max |Im q|, mean q)`.
    pub fn q_with_residue(&mut self, u: &[Complex64]) -> (Vec<f64>, f64, f64) {
        let mut buf: Vec<Complex64> = u.iter().map(|v| Complex64::new(v.norm_sqr(), 0.0)).collect();
        self.fft.forward(&mut buf);
        buf.iter_mut().zip(&self.q_multiplier).for_each(|(v, m)| *v *= m);
        self.fft.inverse(&mut buf);
        let max_imag = buf.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
        let q: Vec<f64> = buf.iter().map(|v| v.re).collect();
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        (q, max_imag, mean)
    }
}

/// Mean-flow field `q` of a sampled `u`.
pub fn q_from_u(field: &Field) -> Result<Vec<f64>, SolverError> {
    let mut sp = Spectral::new(field.lx, field.ly, field.nx, field.ny)?;
    Ok(sp.q_with_residue(&field.u).0)
}

/// Integrator state: current field, nominal step and cached operators.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub field: Field,
    pub dt: f64,
    pub options: SolverOptions,
    spectral: Spectral,
    diagnostics: QDiagnostics,
    cached_h: f64,
    linear_factor: Vec<Complex64>,
}

impl SolverState {
    pub fn new(field: Field, dt: f64, options: SolverOptions) -> Result<Self, SolverError> {
        let spectral = Spectral::new(field.lx, field.ly, field.nx, field.ny)?;
        if !dt.is_finite() || dt == 0.0 {
            return Err(SolverError::InvalidDt(dt));
        }
        let bound = spectral.dt_bound();
        if options.enforce_dt_bound && dt.abs() > bound {
            return Err(SolverError::DtTooLarge { dt, bound });
        }
        Ok(SolverState {
            field,
            dt,
            options,
            spectral,
            diagnostics: QDiagnostics::default(),
            cached_h: f64::NAN,
            linear_factor: Vec::new(),
        })
    }

    pub fn t(&self) -> f64 {
        self.field.t
    }

    pub fn q_multiplier(&self) -> &[f64] {
        &self.spectral.q_multiplier
    }

    pub fn dt_bound(&self) -> f64 {
        self.spectral.dt_bound()
    }

    pub fn diagnostics(&self) -> QDiagnostics {
        self.diagnostics
    }

    /// Current mean-flow field.
    pub fn q(&mut self) -> Vec<f64> {
        self.spectral.q_with_residue(&self.field.u).0
    }

    /// Advances by the nominal step.
    pub fn step(&mut self) -> Result<(), SolverError> {
        self.step_by(self.dt)
    }

    /// Advances by `h`, which may differ from the nominal step.
    pub fn step_by(&mut self, h: f64) -> Result<(), SolverError> {
        self.steps(1, h)
    }

    /// `n` Strang steps of size `h`. Adjacent nonlinear half-steps share the
    /// same `q` (the phase flow preserves `|u|`) and are applied as one.
    pub fn steps(&mut self, n: usize, h: f64) -> Result<(), SolverError> {
        if !h.is_finite() || h == 0.0 {
            return Err(SolverError::InvalidDt(h));
        }
        if self.options.enforce_dt_bound && h.abs() > self.spectral.dt_bound() {
            return Err(SolverError::DtTooLarge { dt: h, bound: self.spectral.dt_bound() });
        }
        if n == 0 {
            return Ok(());
        }
        if h != self.cached_h {
            self.linear_factor = self.spectral.dispersion.iter().map(|d| Complex64::from_polar(1.0, -d * h)).collect();
            self.cached_h = h;
        }
        let t0 = self.field.t;
        self.nonlinear(0.5 * h);
        for i in 1..=n {
            self.linear();
            let t = t0 + i as f64 * h;
            if self.field.u.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                self.field.t = t;
                return Err(SolverError::NanDetected { t });
            }
            self.nonlinear(if i == n { 0.5 * h } else { h });
        }
        self.field.t = t0 + n as f64 * h;
        Ok(())
    }

    /// `û ← û · exp(−i (k_x² − k_y²) h)` with the cached factor.
    fn linear(&mut self) {
        let u = &mut self.field.u;
        self.spectral.fft.forward(u);
        u.iter_mut().zip(&self.linear_factor).for_each(|(v, f)| *v *= f);
        if self.options.dealias {
            u.iter_mut()
                .zip(&self.spectral.dealias_mask)
                .filter(|(_, keep)| !**keep)
                .for_each(|(v, _)| *v = Complex64::new(0.0, 0.0));
        }
        self.spectral.fft.inverse(u);
    }

    /// `u ← u · exp(2 i q s)`, the exact flow of `i u_t + 2 q u = 0` over time `s`.
    fn nonlinear(&mut self, s: f64) {
        let (q, max_imag, mean) = self.spectral.q_with_residue(&self.field.u);
        self.diagnostics.record(max_imag, mean);
        self.field.u.iter_mut().zip(&q).for_each(|(v, q)| *v *= Complex64::from_polar(1.0, 2.0 * q * s));
    }

    /// Integrates to `target` with the largest uniform step not exceeding `|dt|`.
    pub fn advance_to(&mut self, target: f64) -> Result<(), SolverError> {
        let span = target - self.field.t;
        if span.abs() <= 1e-12 * self.dt.abs() {
            self.field.t = target;
            return Ok(());
        }
        let n = (span.abs() / self.dt.abs() - 1e-9).ceil().max(1.0) as usize;
        self.steps(n, span / n as f64)?;
        self.field.t = target;
        Ok(())
    }
}

/// Result of [`evolve`].
#[derive(Debug, Clone)]
pub struct Evolution {
    pub snapshots: Vec<Field>,
    pub final_state: Field,
    pub diagnostics: QDiagnostics,
}

/// Integrates `u0` from `u0.t` to `t_end`, recording snapshots on the way.
/// A negative `dt` runs backward in time.
pub fn evolve(
    u0: Field,
    t_end: f64,
    dt: f64,
    snapshot_times: &[f64],
    options: SolverOptions,
) -> Result<Evolution, SolverError> {
    let t0 = u0.t;
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    if dt * dir < 0.0 && t_end != t0 {
        return Err(SolverError::InvalidDt(dt));
    }
    let inside = |s: f64| (s - t0) * dir >= 0.0 && (t_end - s) * dir >= 0.0;
    let sorted = snapshot_times.windows(2).all(|w| (w[1] - w[0]) * dir >= 0.0);
    if !sorted || !snapshot_times.iter().all(|&s| inside(s)) {
        return Err(SolverError::BadSnapshots { t0, t_end });
    }
    let mut state = SolverState::new(u0, dt, options)?;
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    for &s in snapshot_times {
        state.advance_to(s)?;
        snapshots.push(state.field.clone());
    }
    state.advance_to(t_end)?;
    Ok(Evolution { snapshots, final_state: state.field.clone(), diagnostics: state.diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    const LX: f64 = 2.0 * PI / 1.2;
    const LY: f64 = 2.0 * PI / 2.1;

    #[test]
    fn multiplier_range_and_origin() {
        let sp = Spectral::new(LX, LY, 16, 32).unwrap();
        assert_eq!(sp.q_multiplier[0], 0.0);
        assert!(sp.q_multiplier.iter().all(|m| (-1.0..=1.0).contains(m)));
        assert_eq!(sp.q_multiplier[1], 1.0);
        assert_eq!(sp.q_multiplier[16], -1.0);
    }

    #[test]
    fn grid_restrictions() {
        assert!(matches!(Spectral::new(1.0, 1.0, 8, 16), Err(SolverError::BadGrid { .. })));
        assert!(matches!(Spectral::new(1.0, 1.0, 24, 16), Err(SolverError::BadGrid { .. })));
    }

    #[test]
    fn q_examples() {
        let f = Field::constant(LX, LY, 16, 16, c(0.7, 0.2));
        assert!(q_from_u(&f).unwrap().iter().all(|q| *q == 0.0));
        // |u|² = 1 + cos(kx x) has mean-free part cos(kx x)
        let fx = Field::from_fn(LX, LY, 16, 16, 0.0, |x, _| c((1.0 + (1.2 * x).cos()).sqrt(), 0.0));
        let q = q_from_u(&fx).unwrap();
        for (i, q) in q.iter().enumerate() {
            let (x, _) = fx.coords(i % 16, i / 16);
            assert!((q - (1.2 * x).cos()).abs() < 1e-13);
        }
        let fy = Field::from_fn(LX, LY, 16, 16, 0.0, |_, y| c((1.0 + (2.1 * y).cos()).sqrt(), 0.0));
        let q = q_from_u(&fy).unwrap();
        for (i, q) in q.iter().enumerate() {
            let (_, y) = fy.coords(i % 16, i / 16);
            assert!((q + (2.1 * y).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_background_is_exactly_stationary() {
        let f = Field::constant(LX, LY, 32, 32, c(1.0, 0.0));
        let ev = evolve(f, 1.0, 1e-2, &[], SolverOptions::default()).unwrap();
        assert!(ev.snapshots.is_empty());
        assert!(ev.final_state.u.iter().all(|v| (v - c(1.0, 0.0)).norm() <= 1e-13));
        assert_eq!(ev.final_state.t, 1.0);
    }

    #[test]
    fn snapshots_land_on_requested_times() {
        let f = Field::from_fn(LX, LY, 16, 16, 0.0, |x, _| c(1.0 + 0.01 * (1.2 * x).cos(), 0.0));
        let ev = evolve(f, 0.5, 0.03, &[0.0, 0.1, 0.37], SolverOptions::default()).unwrap();
        let ts: Vec<f64> = ev.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0.0, 0.1, 0.37]);
        assert_eq!(ev.final_state.t, 0.5);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = Field::constant(LX, LY, 16, 16, c(1.0, 0.0));
        assert!(matches!(evolve(f.clone(), 1.0, 0.1, &[0.5, 0.2], SolverOptions::default()), Err(SolverError::BadSnapshots { .. })));
        assert!(matches!(evolve(f.clone(), 1.0, 0.1, &[2.0], SolverOptions::default()), Err(SolverError::BadSnapshots { .. })));
        assert!(matches!(evolve(f.clone(), 1.0, -0.1, &[], SolverOptions::default()), Err(SolverError::InvalidDt(_))));
        let strict = SolverOptions { enforce_dt_bound: true, dealias: false };
        assert!(matches!(SolverState::new(f, 0.1, strict), Err(SolverError::DtTooLarge { .. })));
    }

    #[test]
    fn nan_is_detected() {
        let mut f = Field::constant(LX, LY, 16, 16, c(1.0, 0.0));
        f.u[3] = c(f64::NAN, 0.0);
        let mut s = SolverState::new(f, 0.01, SolverOptions::default()).unwrap();
        assert!(matches!(s.step(), Err(SolverError::NanDetected { .. })));
    }

    #[test]
    fn fft_round_trip() {
        let mut fft = Fft2::new(16, 32);
        let orig: Vec<Complex64> = (0..512).map(|i| c((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let mut d = orig.clone();
        fft.forward(&mut d);
        fft.inverse(&mut d);
        for (a, b) in orig.iter().zip(&d) {
            assert!((a - b).norm() < 1e-14);
        }
    }
}
