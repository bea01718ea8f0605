//! Leading-order spectral data of the perturbed spectral curve.
//!
//! The unperturbed curve `p² + q² = 1` is parameterised by `τ = p + iq` with
//! marked points `τ = 0` and `τ = ∞`. Every unstable harmonic `k` produces two
//! resonant pairs `(τ₁, τ₂)` and `(−τ₁, −τ₂)` on the unit circle, each of which
//! opens into a thin handle of size `O(ε)` once the background is perturbed.
//! Everything here is computed in units with background amplitude 1; see
//! [`Rescaling`] for the map from a general positive amplitude.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field::Field;
use crate::modes::{self, GenericityReport, Mode, ModesError};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Points with `|Im τ|` below this make the matrix elements blow up.
pub const DEGENERATE_IM_TOL: f64 = 1e-9;
/// Two resonant points closer than this are treated as coinciding.
pub const DUPLICATE_POINT_TOL: f64 = 1e-9;
/// `|α β|` below this means the handle does not open at leading order.
pub const DEGENERATE_MODE_TOL: f64 = 1e-14;
/// Largest admissible mean of the perturbation samples.
pub const ZERO_MEAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CurveError {
    #[error(transparent)]
    Modes(#[from] ModesError),
    #[error("periods are not generic: {0:?}")]
    NonGeneric(Box<GenericityReport>),
    #[error("background is stable: no unstable harmonic inside the disk")]
    NoUnstableModes,
    #[error("mode ({n_x}, {n_y}) is not unstable")]
    NotUnstable { n_x: i64, n_y: i64 },
    #[error("mode ({n_x}, {n_y}) is not in the stable region k² > 4")]
    WrongClass { n_x: i64, n_y: i64 },
    #[error("resonant pair of mode ({n_x}, {n_y}) has a point on the real axis")]
    DegeneratePair { n_x: i64, n_y: i64 },
    #[error("resonant point {point} is shared by two pairs")]
    DuplicatePoint { point: Complex64 },
    #[error("perturbation mean {mean} is not zero")]
    NonzeroMean { mean: Complex64 },
    #[error("grid {nx}x{ny} too coarse for search radius {search_radius} (need >= {required} per axis)")]
    Aliasing { nx: usize, ny: usize, search_radius: i64, required: usize },
    #[error("pair {pair}, mode ({n_x}, {n_y}): alpha*beta = {alpha_beta:e} vanishes, handle does not open")]
    DegenerateMode { pair: usize, n_x: i64, n_y: i64, alpha_beta: f64 },
    #[error("cross ratio of pairs {j} and {k} is degenerate")]
    CrossRatioDegenerate { j: usize, k: usize },
    #[error("perturbation amplitude must be positive, got {0}")]
    InvalidEpsilon(f64),
}

/// Scaling `u(x, y, t) = a · ũ(a x, a y, a² t)` that maps a background of
/// amplitude `a > 0` to the unit background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescaling {
    pub a: f64,
}

/// Problem data after rescaling to unit background.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledProblem {
    pub lx: f64,
    pub ly: f64,
    pub eps: f64,
    /// Perturbation samples on the rescaled grid (same samples, periods multiplied by `a`).
    pub v0: Field,
    /// Rescaled time per physical time unit, `a²`.
    pub time_scale: f64,
}

impl Rescaling {
    pub fn new(a: f64) -> Result<Self, CurveError> {
        if a <= 0.0 || !a.is_finite() {
            return Err(ModesError::InvalidAmplitude(a).into());
        }
        Ok(Rescaling { a })
    }

    pub fn time_scale(&self) -> f64 {
        self.a * self.a
    }

    /// Physical `(x, y, t)` to unit-background coordinates.
    pub fn to_unit(&self, x: f64, y: f64, t: f64) -> (f64, f64, f64) {
        (self.a * x, self.a * y, self.a * self.a * t)
    }

    pub fn from_unit(&self, x: f64, y: f64, t: f64) -> (f64, f64, f64) {
        (x / self.a, y / self.a, t / (self.a * self.a))
    }

    /// Maps a physical solution snapshot to the unit-background problem.
    pub fn to_unit_field(&self, f: &Field) -> Field {
        let u = f.u.iter().map(|z| z / self.a).collect();
        Field { lx: f.lx * self.a, ly: f.ly * self.a, t: f.t * self.time_scale(), u, ..*f }
    }

    pub fn from_unit_field(&self, f: &Field) -> Field {
        let u = f.u.iter().map(|z| z * self.a).collect();
        Field { lx: f.lx / self.a, ly: f.ly / self.a, t: f.t / self.time_scale(), u, ..*f }
    }
}

/// Rescales the Cauchy data `a + ε v₀` with `a > 0` to `1 + (ε/a) v₀(·/a)`.
pub fn rescale(a: f64, lx: f64, ly: f64, eps: f64, v0: &Field) -> Result<(RescaledProblem, Rescaling), CurveError> {
    let s = Rescaling::new(a)?;
    let mut v = v0.clone();
    v.lx *= a;
    v.ly *= a;
    v.t *= s.time_scale();
    Ok((RescaledProblem { lx: lx * a, ly: ly * a, eps: eps / a, v0: v, time_scale: s.time_scale() }, s))
}

/// Both solutions `(τ₁, τ₂ = τ₁ + κ)` of the resonance system
/// `τ₂ − τ₁ = κ`, `1/τ₂ − 1/τ₁ = κ̄` for `κ = k_x + i k_y`.
pub fn resonance_roots(kappa: Complex64) -> [(Complex64, Complex64); 2] {
    let k2 = kappa.norm_sqr();
    let s = if k2 < 4.0 {
        Complex64::new(0.0, ((4.0 - k2) / k2).sqrt())
    } else {
        Complex64::new(((k2 - 4.0) / k2).sqrt(), 0.0)
    };
    let half = kappa / 2.0;
    let r1 = half * (-1.0 + s);
    let r2 = half * (-1.0 - s);
    [(r1, r1 + kappa), (r2, r2 + kappa)]
}

/// Residuals of the two resonance equations for a candidate pair.
pub fn resonance_residual(tau_1: Complex64, tau_2: Complex64, kappa: Complex64) -> f64 {
    let r1 = (tau_2 - tau_1 - kappa).norm();
    let r2 = (tau_2.inv() - tau_1.inv() - kappa.conj()).norm();
    r1.max(r2)
}

/// Geometry of one resonant pair before matrix elements are attached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonantPoints {
    pub tau_1: Complex64,
    pub tau_2: Complex64,
    /// Direction of the pair's wave vector: `k = 2 cos φ (cos θ, sin θ)`.
    pub theta_angle: f64,
    pub phi_angle: f64,
    /// Harmonic with `τ₂ − τ₁ = k_x + i k_y`.
    pub mode: Mode,
}

impl ResonantPoints {
    /// `Im(τ₂ τ̄₁)`, negative for correctly oriented pairs.
    pub fn im_ratio(&self) -> f64 {
        (self.tau_2 * self.tau_1.conj()).im
    }

    pub fn negated(&self) -> ResonantPoints {
        ResonantPoints {
            tau_1: -self.tau_1,
            tau_2: -self.tau_2,
            theta_angle: wrap_angle(self.theta_angle + PI),
            phi_angle: self.phi_angle,
            mode: self.mode.negated(),
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

fn pair_for_wavevector(mode: Mode) -> Result<ResonantPoints, CurveError> {
    let kappa = mode.kappa();
    let (tau_1, tau_2) = resonance_roots(kappa)
        .into_iter()
        .find(|(t1, t2)| (t1 * t2.inv()).im > 0.0)
        .ok_or(CurveError::DegeneratePair { n_x: mode.n_x, n_y: mode.n_y })?;
    if tau_1.im.abs() < DEGENERATE_IM_TOL || tau_2.im.abs() < DEGENERATE_IM_TOL {
        return Err(CurveError::DegeneratePair { n_x: mode.n_x, n_y: mode.n_y });
    }
    Ok(ResonantPoints {
        tau_1,
        tau_2,
        theta_angle: kappa.arg(),
        phi_angle: (kappa.norm() / 2.0).acos(),
        mode,
    })
}

/// The two resonant pairs of an unstable mode: the one resonant with `k` and
/// its negative, resonant with `−k`.
pub fn resonant_pair(mode: &Mode) -> Result<[ResonantPoints; 2], CurveError> {
    if !mode.unstable {
        return Err(CurveError::NotUnstable { n_x: mode.n_x, n_y: mode.n_y });
    }
    let first = pair_for_wavevector(*mode)?;
    let second = pair_for_wavevector(mode.negated())?;
    Ok([first, second])
}

/// Resonant pair of a stable mode, `τ₂ = −1/τ̄₁`. Diagnostic only.
pub fn stable_resonant_pair(mode: &Mode) -> Result<(Complex64, Complex64), CurveError> {
    let k2 = mode.k_sqr();
    if mode.unstable || k2 <= 4.0 {
        return Err(CurveError::WrongClass { n_x: mode.n_x, n_y: mode.n_y });
    }
    let tau_1 = mode.kappa() / 2.0 * (-1.0 + ((k2 - 4.0) / k2).sqrt());
    Ok((tau_1, -tau_1.conj().inv()))
}

/// Orders pairs so that the first points `τ₁, τ₃, …` run clockwise around the
/// unit circle. The sweep starts at the first point met just below the
/// negative real axis, i.e. the first point has the smallest polar angle in
/// `(−π, π]`; pair `j + N` is then the negative of pair `j`.
pub fn order_pairs(mut pairs: Vec<ResonantPoints>) -> Result<Vec<ResonantPoints>, CurveError> {
    let pts: Vec<Complex64> = pairs.iter().flat_map(|p| [p.tau_1, p.tau_2]).collect();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if (pts[i] - pts[j]).norm() < DUPLICATE_POINT_TOL {
                return Err(CurveError::DuplicatePoint { point: pts[i] });
            }
        }
    }
    pairs.sort_by(|a, b| b.tau_1.arg().total_cmp(&a.tau_1.arg()));
    if !pairs.is_empty() {
        pairs.rotate_right(1);
    }
    Ok(pairs)
}

/// Fourier coefficients `(c_j, c_{−j})` of `exp(±i k·x)` in `v₀ = Σ c_n exp(i k_n·x)`.
pub fn perturbation_coefficients(v0: &Field, mode: &Mode, search_radius: i64) -> Result<(Complex64, Complex64), CurveError> {
    let mean = v0.mean();
    if mean.norm() > ZERO_MEAN_TOL {
        return Err(CurveError::NonzeroMean { mean });
    }
    let required = (4 * search_radius.max(1)) as usize;
    if v0.nx < required || v0.ny < required {
        return Err(CurveError::Aliasing { nx: v0.nx, ny: v0.ny, search_radius, required });
    }
    Ok((v0.fourier_coefficient(mode.n_x, mode.n_y), v0.fourier_coefficient(-mode.n_x, -mode.n_y)))
}

/// Matrix elements of the perturbation in the two-dimensional resonant subspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixElements {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub sqrt_alpha_beta: Complex64,
}

/// `√z` with `Re > 0`, or `Re = 0` and `Im ≥ 0`.
pub fn fixed_sqrt(z: Complex64) -> Complex64 {
    let s = z.sqrt();
    if s.re < 0.0 || (s.re == 0.0 && s.im < 0.0) {
        -s
    } else {
        s
    }
}

/// `α = −(c̄_j + τ̄₁τ₂ c_{−j}) / (2 Im τ₁)`, `β = (c̄_{−j} + τ̄₂τ₁ c_j) / (2 Im τ₂)`.
pub fn alpha_beta(pair: &ResonantPoints, c_j: Complex64, c_mj: Complex64) -> Result<MatrixElements, CurveError> {
    let (t1, t2) = (pair.tau_1, pair.tau_2);
    let (q1, q2) = (t1.im, t2.im);
    if q1.abs() < DEGENERATE_IM_TOL || q2.abs() < DEGENERATE_IM_TOL {
        return Err(CurveError::DegeneratePair { n_x: pair.mode.n_x, n_y: pair.mode.n_y });
    }
    let alpha = -(c_j.conj() + t1.conj() * t2 * c_mj) / (2.0 * q1);
    let beta = (c_mj.conj() + t2.conj() * t1 * c_j) / (2.0 * q2);
    let ab = alpha * beta;
    if ab.norm() < DEGENERATE_MODE_TOL {
        return Err(CurveError::DegenerateMode { pair: 0, n_x: pair.mode.n_x, n_y: pair.mode.n_y, alpha_beta: ab.norm() });
    }
    Ok(MatrixElements { alpha, beta, sqrt_alpha_beta: fixed_sqrt(ab) })
}

/// A resonant pair with its index and matrix elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonantPair {
    /// 1-based position in the ordered list.
    pub j: usize,
    pub tau_1: Complex64,
    pub tau_2: Complex64,
    pub theta_angle: f64,
    pub phi_angle: f64,
    pub mode: Mode,
    pub alpha: Complex64,
    pub beta: Complex64,
    pub sqrt_alpha_beta: Complex64,
}

impl ResonantPair {
    pub fn new(j: usize, p: &ResonantPoints, m: &MatrixElements) -> Self {
        ResonantPair {
            j,
            tau_1: p.tau_1,
            tau_2: p.tau_2,
            theta_angle: p.theta_angle,
            phi_angle: p.phi_angle,
            mode: p.mode,
            alpha: m.alpha,
            beta: m.beta,
            sqrt_alpha_beta: m.sqrt_alpha_beta,
        }
    }

    pub fn im_ratio(&self) -> f64 {
        (self.tau_2 * self.tau_1.conj()).im
    }

    pub fn alpha_beta(&self) -> Complex64 {
        self.alpha * self.beta
    }
}

/// Leading-order branch points `E_{4j−3}, E_{4j−2}` around `τ₁` and
/// `E_{4j−1}, E_{4j}` around `τ₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoints {
    pub j: usize,
    pub e: [Complex64; 4],
}

pub fn branch_points(pair: &ResonantPair, eps: f64) -> BranchPoints {
    let scale = eps * pair.sqrt_alpha_beta / (I * pair.im_ratio());
    let d1 = 2.0 * pair.tau_1 * pair.tau_2.im * scale;
    let d2 = 2.0 * pair.tau_2 * pair.tau_1.im * scale;
    BranchPoints { j: pair.j, e: [pair.tau_1 + d1, pair.tau_1 - d1, pair.tau_2 + d2, pair.tau_2 - d2] }
}

/// Symmetric `g × g` complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodMatrix {
    g: usize,
    data: Vec<Complex64>,
}

impl PeriodMatrix {
    pub fn zeros(g: usize) -> Self {
        PeriodMatrix { g, data: vec![Complex64::new(0.0, 0.0); g * g] }
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Option<Self> {
        let g = rows.len();
        if rows.iter().any(|r| r.len() != g) {
            return None;
        }
        Some(PeriodMatrix { g, data: rows.into_iter().flatten().collect() })
    }

    pub fn diagonal(values: &[Complex64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.g
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.data[j * self.g + k]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, v: Complex64) {
        self.data[j * self.g + k] = v;
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        self.data.chunks(self.g.max(1)).take(self.g).map(|r| r.to_vec()).collect()
    }

    /// Simultaneous row/column permutation: `out[i][k] = self[perm[i]][perm[k]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.g);
        for i in 0..self.g {
            for k in 0..self.g {
                out.set(i, k, self.get(perm[i], perm[k]));
            }
        }
        out
    }

    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.g {
            for k in 0..j {
                worst = worst.max((self.get(j, k) - self.get(k, j)).norm());
            }
        }
        worst
    }
}

impl Serialize for PeriodMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PeriodMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<Complex64>>::deserialize(d)?;
        PeriodMatrix::from_rows(rows).ok_or_else(|| serde::de::Error::custom("period matrix must be square"))
    }
}

/// Principal log of a real number, `log|r| + iπ` for negative `r`.
fn log_real(r: f64) -> Complex64 {
    Complex64::new(r.abs().ln(), if r < 0.0 { PI } else { 0.0 })
}

/// Cross ratio `(τ₂ⱼ − τ₂ₖ)(τ₂ⱼ₋₁ − τ₂ₖ₋₁) / ((τ₂ⱼ − τ₂ₖ₋₁)(τ₂ⱼ₋₁ − τ₂ₖ))`.
pub fn cross_ratio(pj: &ResonantPair, pk: &ResonantPair) -> Complex64 {
    let num = (pj.tau_2 - pk.tau_2) * (pj.tau_1 - pk.tau_1);
    let den = (pj.tau_2 - pk.tau_1) * (pj.tau_1 - pk.tau_2);
    num / den
}

/// Diagonal period `b_jj`; `Re b_jj ≈ 2 log ε`.
pub fn diagonal_period(pair: &ResonantPair, eps: f64) -> Complex64 {
    let (t1, t2) = (pair.tau_1, pair.tau_2);
    let im = pair.im_ratio();
    let z = t1 * t2 * (t1.im * t2.im) / (im * im * (t1 - t2) * (t1 - t2)) * (eps * eps) * pair.alpha_beta();
    z.ln()
}

/// Riemann matrix: handle-size diagonal and off-diagonal logs of cross ratios
/// computed on the unperturbed curve.
pub fn period_matrix(pairs: &[ResonantPair], eps: f64) -> Result<PeriodMatrix, CurveError> {
    let g = pairs.len();
    let mut b = PeriodMatrix::zeros(g);
    for (j, pj) in pairs.iter().enumerate() {
        b.set(j, j, diagonal_period(pj, eps));
        for (k, pk) in pairs.iter().enumerate().take(j) {
            let r = cross_ratio(pj, pk);
            if !r.re.is_finite() || r.re == 0.0 {
                return Err(CurveError::CrossRatioDegenerate { j: j + 1, k: k + 1 });
            }
            // four concyclic points: the cross ratio is real
            let v = log_real(r.re);
            b.set(j, k, v);
            b.set(k, j, v);
        }
    }
    Ok(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVectors {
    pub w_z: Vec<Complex64>,
    pub w_zbar: Vec<Complex64>,
    pub w_t: Vec<Complex64>,
}

/// b-periods of the normalised second-kind differentials in `z`, `z̄` and `t`.
pub fn frequency_vectors(pairs: &[ResonantPair]) -> FrequencyVectors {
    let half_i = Complex64::new(0.0, 0.5);
    FrequencyVectors {
        w_z: pairs.iter().map(|p| half_i * (p.tau_2.conj() - p.tau_1.conj())).collect(),
        w_zbar: pairs.iter().map(|p| half_i * (p.tau_2 - p.tau_1)).collect(),
        w_t: pairs
            .iter()
            .map(|p| Complex64::new((p.tau_1 * p.tau_1 - p.tau_2 * p.tau_2).im, 0.0))
            .collect(),
    }
}

/// `A(∞₂)` with `A(∞₁) = 0`: `log(τ₂ⱼ₋₁ τ̄₂ⱼ)`.
pub fn abel_infinity(pairs: &[ResonantPair]) -> Vec<Complex64> {
    pairs.iter().map(|p| (p.tau_1 * p.tau_2.conj()).ln()).collect()
}

/// Abel transform of the branch point `E_{4j−3}` from base point `τ = 0`.
pub fn abel_branch_point(pair: &ResonantPair, eps: f64) -> Complex64 {
    let (t1, t2) = (pair.tau_1, pair.tau_2);
    let arg = t2 * t2.im * eps * pair.sqrt_alpha_beta / (I * pair.im_ratio() * (t1 - t2));
    -arg.ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbelData {
    /// Divisor image, measured from `E_{4j−3}` in each handle.
    pub a_div: Vec<Complex64>,
    /// Riemann constants.
    pub k: Vec<Complex64>,
    /// Theta argument offset `−A(D) − K`.
    pub d: Vec<Complex64>,
}

pub fn divisor_and_constants(pairs: &[ResonantPair], b: &PeriodMatrix, eps: f64) -> AbelData {
    let a_div: Vec<Complex64> = pairs.iter().map(|p| (p.alpha / p.sqrt_alpha_beta).ln()).collect();
    let k: Vec<Complex64> = pairs
        .iter()
        .enumerate()
        .map(|(j, p)| b.get(j, j) / 2.0 - I * PI + abel_branch_point(p, eps))
        .collect();
    let d = a_div.iter().zip(&k).map(|(a, k)| -a - k).collect();
    AbelData { a_div, k, d }
}

/// Residual of the reality condition between pair `j` and its mirror `j + N`:
/// `exp(A_j) τ₂ⱼ₋₁/τ₂ⱼ = −s conj(exp(A_{j+N}))`, relative to `|exp(A_j)|`.
/// `s = ±1` is the relative sign of `√(α_{j+N}β_{j+N})` and `conj √(α_jβ_j)`,
/// which the fixed root convention may flip when `α_jβ_j` is negative real.
pub fn reality_residuals(pairs: &[ResonantPair], a_div: &[Complex64]) -> Vec<f64> {
    let n = pairs.len() / 2;
    (0..n)
        .map(|j| {
            let s = (pairs[j + n].sqrt_alpha_beta / pairs[j].sqrt_alpha_beta.conj()).re.signum();
            let lhs = a_div[j].exp() * pairs[j].tau_1 / pairs[j].tau_2;
            let rhs = -s * a_div[j + n].exp().conj();
            (lhs - rhs).norm() / a_div[j].exp().norm()
        })
        .collect()
}

/// Complete leading-order data entering the theta-function formula.
///
/// All curve quantities live in unit-background coordinates; `a` converts
/// physical `(x, y, t)` on evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub g: usize,
    pub pairs: Vec<ResonantPair>,
    #[serde(rename = "B")]
    pub b: PeriodMatrix,
    #[serde(rename = "W_z")]
    pub w_z: Vec<Complex64>,
    #[serde(rename = "W_zbar")]
    pub w_zbar: Vec<Complex64>,
    #[serde(rename = "W_t")]
    pub w_t: Vec<Complex64>,
    #[serde(rename = "A_inf2")]
    pub a_inf2: Vec<Complex64>,
    #[serde(rename = "A_div")]
    pub a_div: Vec<Complex64>,
    #[serde(rename = "K")]
    pub k: Vec<Complex64>,
    pub d: Vec<Complex64>,
    #[serde(rename = "C0")]
    pub c0: Complex64,
    #[serde(rename = "Cz")]
    pub cz: Complex64,
    #[serde(rename = "Czbar")]
    pub czbar: Complex64,
    #[serde(rename = "Ct")]
    pub ct: Complex64,
    pub eps: f64,
    pub u00: Complex64,
    /// Physical background amplitude.
    pub a: f64,
    #[serde(rename = "L_x")]
    pub lx: f64,
    #[serde(rename = "L_y")]
    pub ly: f64,
}

impl SpectralData {
    /// Number of unstable modes `N = g / 2`.
    pub fn n_modes(&self) -> usize {
        self.g / 2
    }

    pub fn rescaling(&self) -> Rescaling {
        Rescaling { a: self.a }
    }

    /// Rescaled perturbation amplitude `ε / a` the curve was built with.
    pub fn unit_eps(&self) -> f64 {
        self.eps / self.a
    }

    /// Genus-zero data of the unperturbed background `u ≡ a`.
    pub fn unperturbed(lx: f64, ly: f64, a: f64) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        SpectralData {
            g: 0,
            pairs: Vec::new(),
            b: PeriodMatrix::zeros(0),
            w_z: Vec::new(),
            w_zbar: Vec::new(),
            w_t: Vec::new(),
            a_inf2: Vec::new(),
            a_div: Vec::new(),
            k: Vec::new(),
            d: Vec::new(),
            c0: zero,
            cz: zero,
            czbar: zero,
            ct: zero,
            eps: 0.0,
            u00: Complex64::new(a, 0.0),
            a,
            lx,
            ly,
        }
    }
}

fn with_pair(err: CurveError, j: usize) -> CurveError {
    match err {
        CurveError::DegenerateMode { n_x, n_y, alpha_beta, .. } => CurveError::DegenerateMode { pair: j, n_x, n_y, alpha_beta },
        other => other,
    }
}

/// Builds the spectral data of the Cauchy problem `u(x, y, 0) = a + ε v₀(x, y)`.
pub fn build_spectral_data(lx: f64, ly: f64, eps: f64, v0: &Field, a: f64) -> Result<SpectralData, CurveError> {
    if eps.is_nan() || eps < 0.0 {
        return Err(CurveError::InvalidEpsilon(eps));
    }
    let (prob, _) = rescale(a, lx, ly, eps, v0)?;
    let radius = modes::min_search_radius(prob.lx, prob.ly, 1.0);
    let report = modes::check_genericity(prob.lx, prob.ly, 1.0, radius)?;
    if !report.ok {
        return Err(CurveError::NonGeneric(Box::new(report)));
    }
    let all = modes::enumerate_modes(prob.lx, prob.ly, 1.0, radius)?;
    let classes = modes::unstable_classes(&all);
    if classes.is_empty() {
        return Err(CurveError::NoUnstableModes);
    }

    let mut raw = Vec::with_capacity(2 * classes.len());
    for m in &classes {
        raw.extend(resonant_pair(m)?);
    }
    let ordered = order_pairs(raw)?;

    let mut pairs = Vec::with_capacity(ordered.len());
    for (idx, p) in ordered.iter().enumerate() {
        let j = idx + 1;
        if prob.eps == 0.0 {
            return Err(CurveError::DegenerateMode { pair: j, n_x: p.mode.n_x, n_y: p.mode.n_y, alpha_beta: 0.0 });
        }
        let (c_j, c_mj) = perturbation_coefficients(&prob.v0, &p.mode, radius)?;
        let me = alpha_beta(p, c_j, c_mj).map_err(|e| with_pair(e, j))?;
        pairs.push(ResonantPair::new(j, p, &me));
    }

    let b = period_matrix(&pairs, prob.eps)?;
    let fv = frequency_vectors(&pairs);
    let a_inf2 = abel_infinity(&pairs);
    let abel = divisor_and_constants(&pairs, &b, prob.eps);
    let zero = Complex64::new(0.0, 0.0);

    Ok(SpectralData {
        g: pairs.len(),
        pairs,
        b,
        w_z: fv.w_z,
        w_zbar: fv.w_zbar,
        w_t: fv.w_t,
        a_inf2,
        a_div: abel.a_div,
        k: abel.k,
        d: abel.d,
        c0: zero,
        cz: zero,
        czbar: zero,
        ct: zero,
        eps,
        u00: Complex64::new(a, 0.0) + eps * v0.u[0],
        a,
        lx,
        ly,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{synthesize, Harmonic};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single_mode() -> Mode {
        Mode::new(1, 0, 2.0 * PI / 1.2, 2.0 * PI / 2.1, 1.0).unwrap()
    }

    #[test]
    fn single_mode_pairs() {
        let [p, q] = resonant_pair(&single_mode()).unwrap();
        assert!((p.tau_1 - c(-0.6, 0.8)).norm() < 1e-14);
        assert!((p.tau_2 - c(0.6, 0.8)).norm() < 1e-14);
        assert!((q.tau_1 - c(0.6, -0.8)).norm() < 1e-14);
        assert!((q.tau_2 - c(-0.6, -0.8)).norm() < 1e-14);
        for pr in [p, q] {
            assert!(resonance_residual(pr.tau_1, pr.tau_2, pr.mode.kappa()) < 1e-12);
            assert!((pr.tau_1 / pr.tau_2).im > 0.0);
            let (t, f) = (pr.theta_angle, pr.phi_angle);
            assert!((2.0 * f.cos() * t.cos() - pr.mode.k_x).abs() < 1e-12);
            assert!((2.0 * f.cos() * t.sin() - pr.mode.k_y).abs() < 1e-12);
            assert!((pr.tau_1 + Complex64::from_polar(1.0, t - f)).norm() < 1e-12);
            assert!((pr.tau_2 - Complex64::from_polar(1.0, t + f)).norm() < 1e-12);
        }
    }

    #[test]
    fn stable_mode_rejected_for_unstable_pair() {
        let m = Mode::new(3, 0, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        assert!(matches!(resonant_pair(&m), Err(CurveError::NotUnstable { .. })));
        assert!(matches!(stable_resonant_pair(&single_mode()), Err(CurveError::WrongClass { .. })));
    }

    #[test]
    fn stable_pairs_satisfy_resonance() {
        for (n_x, n_y) in [(3, 0), (2, 2), (1, 3), (-4, 1)] {
            let m = Mode::new(n_x, n_y, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
            let (t1, t2) = stable_resonant_pair(&m).unwrap();
            assert!(resonance_residual(t1, t2, m.kappa()) < 1e-12, "{n_x},{n_y}");
            assert!((t2 * t1.conj() + 1.0).norm() < 1e-15);
            assert!((t1.norm() - 1.0).abs() > 1e-3);
        }
    }

    #[test]
    fn ordering_single_mode() {
        let ordered = order_pairs(resonant_pair(&single_mode()).unwrap().to_vec()).unwrap();
        assert_eq!(ordered.len(), 2);
        assert_eq!(ordered[1].tau_1, -ordered[0].tau_1);
        assert_eq!(ordered[1].tau_2, -ordered[0].tau_2);
    }

    #[test]
    fn duplicate_points_rejected() {
        let [p, _] = resonant_pair(&single_mode()).unwrap();
        assert!(matches!(order_pairs(vec![p, p]), Err(CurveError::DuplicatePoint { .. })));
    }

    #[test]
    fn sqrt_branch() {
        assert_eq!(fixed_sqrt(c(-4.0, 0.0)), c(0.0, 2.0));
        assert!(fixed_sqrt(c(-4.0, -1e-300)).re >= 0.0);
        let s = fixed_sqrt(c(-3.0, -4.0));
        assert!(s.re > 0.0 && (s * s - c(-3.0, -4.0)).norm() < 1e-14);
    }

    #[test]
    fn zero_coefficients_are_degenerate() {
        let [p, _] = resonant_pair(&single_mode()).unwrap();
        let z = c(0.0, 0.0);
        assert!(matches!(alpha_beta(&p, z, z), Err(CurveError::DegenerateMode { .. })));
    }

    #[test]
    fn cos_perturbation_coefficients() {
        let (lx, ly) = (2.0 * PI / 1.2, 2.0 * PI / 1.4);
        let v0 = Field::from_fn(lx, ly, 16, 16, 0.0, |x, _| c((1.2 * x).cos(), 0.0));
        let m = Mode::new(1, 0, lx, ly, 1.0).unwrap();
        let (cj, cmj) = perturbation_coefficients(&v0, &m, 2).unwrap();
        assert!((cj - c(0.5, 0.0)).norm() < 1e-15);
        assert!((cmj - c(0.5, 0.0)).norm() < 1e-15);
        let m11 = Mode::new(1, 1, lx, ly, 1.0).unwrap();
        let (a, b) = perturbation_coefficients(&v0, &m11, 2).unwrap();
        assert!(a.norm() < 1e-15 && b.norm() < 1e-15);

        let v1 = Field::from_fn(lx, ly, 16, 16, 0.0, |x, y| Complex64::from_polar(1.0, 1.2 * x + 1.4 * y));
        let (a, b) = perturbation_coefficients(&v1, &m11, 2).unwrap();
        assert!((a - 1.0).norm() < 1e-14 && b.norm() < 1e-14);
    }

    #[test]
    fn coefficient_preconditions() {
        let (lx, ly) = (2.0 * PI / 1.2, 2.0 * PI / 1.4);
        let m = Mode::new(1, 0, lx, ly, 1.0).unwrap();
        let biased = Field::constant(lx, ly, 16, 16, c(1e-6, 0.0));
        assert!(matches!(perturbation_coefficients(&biased, &m, 2), Err(CurveError::NonzeroMean { .. })));
        let coarse = Field::constant(lx, ly, 4, 16, c(0.0, 0.0));
        assert!(matches!(perturbation_coefficients(&coarse, &m, 2), Err(CurveError::Aliasing { .. })));
    }

    #[test]
    fn eps_zero_is_degenerate() {
        let (lx, ly) = (2.0 * PI / 1.2, 2.0 * PI / 2.1);
        let v0 = synthesize(&[Harmonic { n_x: 1, n_y: 0, c: c(0.5, 0.0) }, Harmonic { n_x: -1, n_y: 0, c: c(0.5, 0.0) }], lx, ly, 16, 16);
        assert!(matches!(build_spectral_data(lx, ly, 0.0, &v0, 1.0), Err(CurveError::DegenerateMode { pair: 1, .. })));
    }

    #[test]
    fn rescale_identity_and_scaling() {
        let v0 = Field::constant(1.0, 2.0, 8, 8, c(0.0, 0.0));
        let (p, s) = rescale(1.0, 1.0, 2.0, 0.1, &v0).unwrap();
        assert_eq!((p.lx, p.ly, p.eps, p.time_scale), (1.0, 2.0, 0.1, 1.0));
        assert_eq!(s.to_unit(0.3, 0.4, 0.5), (0.3, 0.4, 0.5));
        let (p, s) = rescale(2.0, 1.0, 2.0, 0.1, &v0).unwrap();
        assert_eq!((p.lx, p.ly, p.eps, p.time_scale), (2.0, 4.0, 0.05, 4.0));
        let (x, y, t) = s.from_unit(2.0, 4.0, 4.0);
        assert_eq!((x, y, t), (1.0, 2.0, 1.0));
        let (p, _) = rescale(0.5, 1.0, 2.0, 0.1, &v0).unwrap();
        assert_eq!(p.eps, 0.2);
        assert!(rescale(0.0, 1.0, 1.0, 0.1, &v0).is_err());
    }
}
