//! Anomalous waves of the focusing DS2 equation on a doubly-periodic domain:
//! unstable-mode census, degenerate spectral curve data, Riemann theta
//! evaluation, the finite-gap field and a pseudo-spectral reference solver.

pub mod curve;
pub mod field;
pub mod fieldgen;
pub mod modes;
pub mod refsolver;
pub mod theta;

pub use curve::{build_spectral_data, CurveError, PeriodMatrix, ResonantPair, SpectralData};
pub use field::{synthesize, Field, FieldError, Harmonic};
pub use fieldgen::{evaluate_grid, evaluate_u, first_appearance_estimate, FieldgenError, FiniteGapSolution};
pub use modes::{check_genericity, enumerate_modes, growth_rate, unstable_classes, GenericityReport, Mode, ModesError};
pub use refsolver::{evolve, q_from_u, Evolution, SolverError, SolverOptions, SolverState};
pub use theta::{adaptive_radius, quasi_periodicity_residual, theta, ThetaError, ThetaParams};

pub use num_complex::Complex64;
