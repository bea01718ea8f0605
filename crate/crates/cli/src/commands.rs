//! The five pipeline stages behind the subcommands.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ds2aw_core::curve::{build_spectral_data, reality_residuals, SpectralData};
use ds2aw_core::field::{synthesize, Field};
use ds2aw_core::fieldgen::{evaluate_grid, first_appearance_estimate, theta_params_for};
use ds2aw_core::modes::{check_genericity, enumerate_modes, min_search_radius, unstable_classes, GenericityReport, Mode};
use ds2aw_core::refsolver::{evolve, SolverOptions};
use ds2aw_core::theta::ThetaParams;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{Format, Radius, RunConfig, SCHEMA_VERSION};
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
/// Relative tolerance for matching periods and times between runs.
pub const MATCH_TOL: f64 = 1e-12;

/// A config together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl Run {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let config = RunConfig::load(path)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Run { config, base_dir })
    }

    pub fn new(config: RunConfig, base_dir: impl Into<PathBuf>) -> Self {
        Run { config, base_dir: base_dir.into() }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.config.outputs.dir)
    }

    /// `v₀` sampled on the configured grid.
    pub fn perturbation(&self) -> Result<Field, CliError> {
        let c = &self.config;
        let (nx, ny) = (c.grid.nx, c.grid.ny);
        if let Some(h) = &c.perturbation.harmonics {
            return Ok(synthesize(h, c.lx, c.ly, nx, ny));
        }
        let path = self.base_dir.join(c.perturbation.grid_file.as_ref().expect("validated config has a source"));
        let v0 = read_field(&path, 0.0)?;
        if (v0.nx, v0.ny) != (nx, ny) {
            return Err(CliError::GridMismatch(format!("{} is {}x{}, config grid is {nx}x{ny}", path.display(), v0.nx, v0.ny)));
        }
        if !close(v0.lx, c.lx) || !close(v0.ly, c.ly) {
            return Err(CliError::GridMismatch(format!(
                "{} has periods ({}, {}), config has ({}, {})",
                path.display(),
                v0.lx,
                v0.ly,
                c.lx,
                c.ly
            )));
        }
        Ok(v0)
    }

    /// Cauchy data `a + ε v₀`.
    pub fn initial_field(&self) -> Result<Field, CliError> {
        let mut u = self.perturbation()?;
        let (a, eps) = (self.config.a, self.config.eps);
        u.u.iter_mut().for_each(|v| *v = a + eps * *v);
        u.t = 0.0;
        Ok(u)
    }

    pub fn spectral_data(&self) -> Result<SpectralData, CliError> {
        let c = &self.config;
        Ok(build_spectral_data(c.lx, c.ly, c.eps, &self.perturbation()?, c.a)?)
    }

    pub fn theta_params(&self, sd: &SpectralData) -> Result<ThetaParams, CliError> {
        let c = &self.config;
        let tol = c.theta.tail_tol;
        Ok(match c.theta.m {
            Radius::Fixed(m) => ThetaParams::new(sd.b.clone(), m, tol)?,
            Radius::Adaptive(_) => theta_params_for(sd, c.times[0], *c.times.last().expect("times are non-empty"), tol)?,
        })
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { enforce_dt_bound: self.config.solver.strict_dt, dealias: self.config.solver.dealias }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= MATCH_TOL * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    #[serde(rename = "L_x")]
    pub lx: f64,
    #[serde(rename = "L_y")]
    pub ly: f64,
    pub a: f64,
    pub search_radius: i64,
    /// Every lattice mode inside the instability disk `|k| < 2a`.
    pub modes: Vec<Mode>,
    pub unstable_classes: Vec<Mode>,
    pub genus: usize,
    pub genericity: GenericityReport,
}

pub fn analyze(run: &Run) -> Result<AnalyzeReport, CliError> {
    let c = &run.config;
    let radius = min_search_radius(c.lx, c.ly, c.a);
    let all = enumerate_modes(c.lx, c.ly, c.a, radius)?;
    let classes = unstable_classes(&all);
    let modes = all.into_iter().filter(|m| m.k_sqr() < 4.0 * c.a * c.a).collect();
    let genericity = check_genericity(c.lx, c.ly, c.a, radius)?;
    Ok(AnalyzeReport { lx: c.lx, ly: c.ly, a: c.a, search_radius: radius, modes, genus: 2 * classes.len(), unstable_classes: classes, genericity })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Mismatch of the reality identity linking each pair to its mirror.
    pub reality_residuals: Vec<f64>,
    /// `|(W_t)_j| − |σ|` of the pair's mode, unit-background units.
    pub growth_rate_deltas: Vec<f64>,
    /// `|α_{j+N}β_{j+N} − conj(α_jβ_j)|`.
    pub mirror_residuals: Vec<f64>,
    pub b_asymmetry: f64,
    pub b_diagonal: Vec<Complex64>,
    /// `b_jj(ε/2) − b_jj(ε)`.
    pub b_diagonal_delta_half_eps: Vec<Complex64>,
    pub first_appearance_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDocument {
    #[serde(flatten)]
    pub data: SpectralData,
    pub diagnostics: Diagnostics,
}

pub fn spectrum(run: &Run) -> Result<SpectrumDocument, CliError> {
    let c = &run.config;
    let v0 = run.perturbation()?;
    let sd = build_spectral_data(c.lx, c.ly, c.eps, &v0, c.a)?;
    let half = build_spectral_data(c.lx, c.ly, 0.5 * c.eps, &v0, c.a)?;
    let n = sd.n_modes();
    let diag = |s: &SpectralData| (0..s.g).map(|j| s.b.get(j, j)).collect::<Vec<_>>();
    let b_diagonal = diag(&sd);
    let diagnostics = Diagnostics {
        reality_residuals: reality_residuals(&sd.pairs, &sd.a_div),
        growth_rate_deltas: sd.pairs.iter().zip(&sd.w_t).map(|(p, w)| w.norm() - p.mode.sigma.norm()).collect(),
        mirror_residuals: (0..n).map(|j| (sd.pairs[j + n].alpha_beta() - sd.pairs[j].alpha_beta().conj()).norm()).collect(),
        b_asymmetry: sd.b.asymmetry(),
        b_diagonal_delta_half_eps: diag(&half).iter().zip(&b_diagonal).map(|(h, b)| h - b).collect(),
        b_diagonal,
        first_appearance_time: first_appearance_estimate(&sd),
    };
    Ok(SpectrumDocument { data: sd, diagnostics })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Fg,
    Ref,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub kind: RunKind,
    pub config_hash: String,
    pub format: Format,
    pub nx: usize,
    pub ny: usize,
    #[serde(rename = "L_x")]
    pub lx: f64,
    #[serde(rename = "L_y")]
    pub ly: f64,
    pub snapshots: Vec<Snapshot>,
    /// Theta truncation radius of a finite-gap run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_radius: Option<usize>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    /// Loads every snapshot, preferring the lossless binary file.
    pub fn fields(&self, dir: &Path) -> Result<Vec<Field>, CliError> {
        self.snapshots
            .iter()
            .map(|s| {
                let name = s.bin.as_ref().or(s.csv.as_ref()).ok_or_else(|| CliError::Input(format!("snapshot at t = {} lists no file", s.t)))?;
                read_field(&dir.join(name), s.t)
            })
            .collect()
    }
}

/// Reads a DS2F binary field, or CSV when the extension is `.csv`.
pub fn read_field(path: &Path, t: f64) -> Result<Field, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let reader = BufReader::new(file);
    let res = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        Field::read_csv(reader, t)
    } else {
        Field::read_binary(reader)
    };
    res.map_err(|source| CliError::FieldFile { path: path.to_owned(), source })
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn write_run(run: &Run, kind: RunKind, fields: &[Field], out: &Path, format: Format, theta_radius: Option<usize>) -> Result<Manifest, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut snapshots = Vec::with_capacity(fields.len());
    for (i, f) in fields.iter().enumerate() {
        let stem = format!("u_{i:04}");
        let mut s = Snapshot { t: f.t, csv: None, bin: None };
        if format.csv() {
            let name = format!("{stem}.csv");
            write_file(&out.join(&name), |w| f.write_csv(w))?;
            s.csv = Some(name);
        }
        if format.bin() {
            let name = format!("{stem}.bin");
            write_file(&out.join(&name), |w| f.write_binary(w))?;
            s.bin = Some(name);
        }
        snapshots.push(s);
    }
    let c = &run.config;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        kind,
        config_hash: c.hash(),
        format,
        nx: c.grid.nx,
        ny: c.grid.ny,
        lx: c.lx,
        ly: c.ly,
        snapshots,
        theta_radius,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Finite-gap fields at the configured times.
pub fn finite_gap_fields(run: &Run) -> Result<(Vec<Field>, usize), CliError> {
    let sd = run.spectral_data()?;
    let params = run.theta_params(&sd)?;
    let c = &run.config;
    Ok((evaluate_grid(&c.times, c.grid.nx, c.grid.ny, &sd, &params)?, params.radius()))
}

/// Reference-solver fields at the configured times.
pub fn reference_fields(run: &Run) -> Result<Vec<Field>, CliError> {
    let c = &run.config;
    let t_end = *c.times.last().expect("times are non-empty");
    Ok(evolve(run.initial_field()?, t_end, c.dt, &c.times, run.solver_options())?.snapshots)
}

pub fn evolve_fg(run: &Run, out: &Path, format: Format) -> Result<Manifest, CliError> {
    let (fields, radius) = finite_gap_fields(run)?;
    write_run(run, RunKind::Fg, &fields, out, format, Some(radius))
}

pub fn evolve_ref(run: &Run, out: &Path, format: Format) -> Result<Manifest, CliError> {
    let fields = reference_fields(run)?;
    write_run(run, RunKind::Ref, &fields, out, format, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub times: Vec<f64>,
    /// `‖u − u_ref‖₂ / ‖u_ref‖₂` per time.
    pub rel_l2: Vec<f64>,
    /// `max|u − u_ref| / max|u_ref|` per time.
    pub rel_linf: Vec<f64>,
    pub max_abs_run: Vec<f64>,
    pub max_abs_reference: Vec<f64>,
    pub worst_rel_l2: f64,
    pub worst_rel_linf: f64,
}

pub fn compare_fields(run: &[Field], reference: &[Field]) -> Result<Comparison, CliError> {
    if run.len() != reference.len() {
        return Err(CliError::TimeMismatch(format!("{} snapshots against {}", run.len(), reference.len())));
    }
    let mut cmp = Comparison {
        times: Vec::new(),
        rel_l2: Vec::new(),
        rel_linf: Vec::new(),
        max_abs_run: Vec::new(),
        max_abs_reference: Vec::new(),
        worst_rel_l2: 0.0,
        worst_rel_linf: 0.0,
    };
    for (a, b) in run.iter().zip(reference) {
        if (a.nx, a.ny) != (b.nx, b.ny) || !close(a.lx, b.lx) || !close(a.ly, b.ly) {
            return Err(CliError::GridMismatch(format!(
                "{}x{} on ({}, {}) against {}x{} on ({}, {})",
                a.nx, a.ny, a.lx, a.ly, b.nx, b.ny, b.lx, b.ly
            )));
        }
        if !close(a.t, b.t) {
            return Err(CliError::TimeMismatch(format!("t = {} against t = {}", a.t, b.t)));
        }
        let (mut diff2, mut ref2, mut diff_inf) = (0.0, 0.0, 0.0f64);
        for (u, v) in a.u.iter().zip(&b.u) {
            let d = (u - v).norm();
            diff2 += d * d;
            ref2 += v.norm_sqr();
            diff_inf = diff_inf.max(d);
        }
        let ref_inf = b.max_abs();
        let rel_l2 = if ref2 > 0.0 { (diff2 / ref2).sqrt() } else { diff2.sqrt() };
        let rel_linf = if ref_inf > 0.0 { diff_inf / ref_inf } else { diff_inf };
        cmp.times.push(b.t);
        cmp.rel_l2.push(rel_l2);
        cmp.rel_linf.push(rel_linf);
        cmp.max_abs_run.push(a.max_abs());
        cmp.max_abs_reference.push(ref_inf);
        cmp.worst_rel_l2 = cmp.worst_rel_l2.max(rel_l2);
        cmp.worst_rel_linf = cmp.worst_rel_linf.max(rel_linf);
    }
    Ok(cmp)
}

/// Compares two run directories; errors are relative to the second.
pub fn compare(run_dir: &Path, reference_dir: &Path) -> Result<Comparison, CliError> {
    let (ma, mb) = (Manifest::load(run_dir)?, Manifest::load(reference_dir)?);
    if (ma.nx, ma.ny) != (mb.nx, mb.ny) || !close(ma.lx, mb.lx) || !close(ma.ly, mb.ly) {
        return Err(CliError::GridMismatch(format!(
            "{}x{} on ({}, {}) against {}x{} on ({}, {})",
            ma.nx, ma.ny, ma.lx, ma.ly, mb.nx, mb.ny, mb.lx, mb.ly
        )));
    }
    let ta: Vec<f64> = ma.snapshots.iter().map(|s| s.t).collect();
    let tb: Vec<f64> = mb.snapshots.iter().map(|s| s.t).collect();
    if ta.len() != tb.len() || ta.iter().zip(&tb).any(|(a, b)| !close(*a, *b)) {
        return Err(CliError::TimeMismatch(format!("times {ta:?} against {tb:?}")));
    }
    compare_fields(&ma.fields(run_dir)?, &mb.fields(reference_dir)?)
}
