//! Doubly-periodic complex sample grids and their on-disk formats.
//!
//! Samples are stored row-major: `u[iy * nx + ix] = u(ix * L_x / nx, iy * L_y / ny, t)`.
//!
//! Binary layout (all little-endian): magic `DS2F`, `u32` version, `u32` nx,
//! `u32` ny, `f64` L_x, `f64` L_y, `f64` t, then `nx * ny` complex values as
//! `(re: f64, im: f64)` in row-major order.

use std::f64::consts::PI;
use std::io::{self, BufRead, Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const BINARY_MAGIC: &[u8; 4] = b"DS2F";
pub const BINARY_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "x,y,re_u,im_u,abs_u";

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("grid {nx}x{ny} does not match sample count {len}")]
    ShapeMismatch { nx: usize, ny: usize, len: usize },
    #[error("bad magic bytes, not a DS2F field file")]
    BadMagic,
    #[error("unsupported DS2F version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed field file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Complex samples of a doubly-periodic function on a uniform grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub t: f64,
    pub u: Vec<Complex64>,
}

impl Field {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize, t: f64, u: Vec<Complex64>) -> Result<Self, FieldError> {
        if u.len() != nx * ny {
            return Err(FieldError::ShapeMismatch { nx, ny, len: u.len() });
        }
        Ok(Field { lx, ly, nx, ny, t, u })
    }

    /// Fills the grid from a closure of the physical coordinates.
    pub fn from_fn(lx: f64, ly: f64, nx: usize, ny: usize, t: f64, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let mut u = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let (x, y) = grid_point(lx, ly, nx, ny, ix, iy);
                u.push(f(x, y));
            }
        }
        Field { lx, ly, nx, ny, t, u }
    }

    pub fn constant(lx: f64, ly: f64, nx: usize, ny: usize, value: Complex64) -> Self {
        Field { lx, ly, nx, ny, t: 0.0, u: vec![value; nx * ny] }
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.u[iy * self.nx + ix]
    }

    pub fn coords(&self, ix: usize, iy: usize) -> (f64, f64) {
        grid_point(self.lx, self.ly, self.nx, self.ny, ix, iy)
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.lx == other.lx && self.ly == other.ly
    }

    pub fn mean(&self) -> Complex64 {
        self.u.iter().sum::<Complex64>() / (self.u.len() as f64)
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Discrete L² norm squared, `sum |u|² * dx * dy`.
    pub fn l2_norm_sqr(&self) -> f64 {
        let cell = self.lx * self.ly / (self.u.len() as f64);
        self.u.iter().map(|z| z.norm_sqr()).sum::<f64>() * cell
    }

    /// Coefficient of `exp(i(k_x x + k_y y))` with `k = (2π n_x / L_x, 2π n_y / L_y)`
    /// under the convention `u = Σ c_n exp(i k_n · x)`.
    pub fn fourier_coefficient(&self, n_x: i64, n_y: i64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for iy in 0..self.ny {
            let row = &self.u[iy * self.nx..(iy + 1) * self.nx];
            let mut row_acc = Complex64::new(0.0, 0.0);
            for (ix, &v) in row.iter().enumerate() {
                row_acc += v * unit_phase(-(ix as i64) * n_x, self.nx);
            }
            acc += row_acc * unit_phase(-(iy as i64) * n_y, self.ny);
        }
        acc / ((self.nx * self.ny) as f64)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let (x, y) = self.coords(ix, iy);
                let v = self.at(ix, iy);
                writeln!(w, "{x:.17e},{y:.17e},{:.17e},{:.17e},{:.17e}", v.re, v.im, v.norm())?;
            }
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&BINARY_VERSION.to_le_bytes())?;
        w.write_all(&(self.nx as u32).to_le_bytes())?;
        w.write_all(&(self.ny as u32).to_le_bytes())?;
        for v in [self.lx, self.ly, self.t] {
            w.write_all(&v.to_le_bytes())?;
        }
        for z in &self.u {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, FieldError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(FieldError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != BINARY_VERSION {
            return Err(FieldError::UnsupportedVersion(version));
        }
        let nx = read_u32(&mut r)? as usize;
        let ny = read_u32(&mut r)? as usize;
        let lx = read_f64(&mut r)?;
        let ly = read_f64(&mut r)?;
        let t = read_f64(&mut r)?;
        let mut u = Vec::with_capacity(nx * ny);
        for _ in 0..nx * ny {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            u.push(Complex64::new(re, im));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(FieldError::Malformed("trailing bytes after samples".into()));
        }
        Field::new(lx, ly, nx, ny, t, u)
    }

    /// Reads a CSV written by [`Field::write_csv`]. Grid sizes and periods are
    /// inferred from the coordinates, so at least two distinct x and y values are needed.
    pub fn read_csv<R: BufRead>(r: R, t: f64) -> Result<Self, FieldError> {
        let mut lines = r.lines();
        match lines.next().transpose()? {
            Some(h) if h.trim() == CSV_HEADER => {}
            _ => return Err(FieldError::Malformed("missing CSV header".into())),
        }
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| FieldError::Malformed(e.to_string()))?;
            if vals.len() != 5 {
                return Err(FieldError::Malformed(format!("expected 5 columns, got {}", vals.len())));
            }
            rows.push(vals);
        }
        let nx = rows.iter().take_while(|v| v[1] == rows[0][1]).count();
        if nx < 2 || rows.len() % nx != 0 {
            return Err(FieldError::Malformed("cannot infer grid shape".into()));
        }
        let ny = rows.len() / nx;
        if ny < 2 {
            return Err(FieldError::Malformed("cannot infer grid shape".into()));
        }
        let lx = rows[1][0] * nx as f64;
        let ly = rows[nx][1] * ny as f64;
        let u = rows.iter().map(|v| Complex64::new(v[2], v[3])).collect();
        Field::new(lx, ly, nx, ny, t, u)
    }
}

/// `exp(2πi m / n)` with the index reduced mod `n` first, so large products stay exact.
#[inline]
fn unit_phase(m: i64, n: usize) -> Complex64 {
    let r = m.rem_euclid(n as i64) as f64 / n as f64;
    Complex64::from_polar(1.0, 2.0 * PI * r)
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[inline]
pub fn grid_point(lx: f64, ly: f64, nx: usize, ny: usize, ix: usize, iy: usize) -> (f64, f64) {
    (ix as f64 * lx / nx as f64, iy as f64 * ly / ny as f64)
}

/// One Fourier harmonic `c · exp(i(k_x x + k_y y))` of a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub n_x: i64,
    pub n_y: i64,
    pub c: Complex64,
}

/// Samples `Σ c exp(i k · x)` on an `nx × ny` grid.
pub fn synthesize(harmonics: &[Harmonic], lx: f64, ly: f64, nx: usize, ny: usize) -> Field {
    let mut field = Field::constant(lx, ly, nx, ny, Complex64::new(0.0, 0.0));
    for h in harmonics {
        for iy in 0..ny {
            let ey = unit_phase(iy as i64 * h.n_y, ny);
            for ix in 0..nx {
                field.u[iy * nx + ix] += h.c * ey * unit_phase(ix as i64 * h.n_x, nx);
            }
        }
    }
    field
}
