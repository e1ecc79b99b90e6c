//! Pseudospectral representation of fields on the periodized waveguide
//! [-L/2, L/2) x T^d, with the transform pair
//!
//!   Fhat(xi, p) = (1/2pi) int e^{-i x xi} F  dx  x  (2pi)^{-d} int e^{-i p.y} F dy,
//!   F(x, y)     = int e^{i x xi} Fhat dxi    x  sum_p e^{i p.y},
//!
//! discretized on a regular grid: xi_k = (2pi/L) k, y on the uniform torus
//! grid.  All normalization constants are collected in the two mass
//! constants below; Parseval holds exactly up to round-off.

mod norms;
mod ops;

pub use norms::{norm_hn, norm_linf_h1, norm_s, norm_splus, norm_z, x_weighted_l2};
pub use ops::{
    evolve, field_diagnostics, linear_flow, nonlinear_form, resonant_form, step_strang,
    EvolveOptions, Stepper, WaveDiagnostics, WaveTrajectory, BOUNDARY_WARN_FRACTION,
};

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::LatticePoint;

/// Which representation a field's samples currently hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// Samples F(x_j, y_m) on the space grid.
    Physical,
    /// Coefficients Fhat(xi_k, p_m), x-frequencies in FFT order.
    Fourier,
}

/// Grid, frequency tables and cached FFT plans for one resolution.
pub struct Discretization {
    dim_y: usize,
    period: f64,
    n_x: usize,
    n_y: usize,
    n_yd: usize,
    xi: Vec<f64>,
    y_modes: Vec<LatticePoint>,
    y_index: HashMap<LatticePoint, usize>,
    fft_x_fwd: Arc<dyn Fft<f64>>,
    fft_x_inv: Arc<dyn Fft<f64>>,
    fft_y_fwd: Arc<dyn Fft<f64>>,
    fft_y_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discretization")
            .field("dim_y", &self.dim_y)
            .field("period", &self.period)
            .field("n_x", &self.n_x)
            .field("n_y", &self.n_y)
            .finish()
    }
}

impl Discretization {
    pub fn new(dim_y: usize, period: f64, n_x: usize, n_y: usize) -> Result<Arc<Self>> {
        if !(1..=4).contains(&dim_y) {
            return Err(Error::InvalidParameter(format!(
                "torus dimension d = {dim_y} must be in 1..=4"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "x-period L = {period} must be positive"
            )));
        }
        for (name, n) in [("N_x", n_x), ("N_y", n_y)] {
            if n < 2 || !n.is_power_of_two() {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {n} must be a power of two >= 2"
                )));
            }
        }
        let n_yd = n_y.pow(dim_y as u32);
        let dxi = 2.0 * PI / period;
        let xi = (0..n_x).map(|j| dxi * signed_index(j, n_x) as f64).collect();
        let mut y_modes = Vec::with_capacity(n_yd);
        for m in 0..n_yd {
            let mut coords = [0i64; 4];
            let mut rem = m;
            for axis in (0..dim_y).rev() {
                coords[axis] = signed_index(rem % n_y, n_y);
                rem /= n_y;
            }
            y_modes.push(LatticePoint::new(&coords[..dim_y])?);
        }
        let y_index = y_modes
            .iter()
            .enumerate()
            .map(|(m, p)| (*p, m))
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Self {
            dim_y,
            period,
            n_x,
            n_y,
            n_yd,
            xi,
            y_modes,
            y_index,
            fft_x_fwd: planner.plan_fft_forward(n_x),
            fft_x_inv: planner.plan_fft_inverse(n_x),
            fft_y_fwd: planner.plan_fft_forward(n_y),
            fft_y_inv: planner.plan_fft_inverse(n_y),
        }))
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    /// Number of y grid points / y modes per x slice (N_y^d).
    pub fn n_y_total(&self) -> usize {
        self.n_yd
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_yd
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.period / self.n_x as f64
    }

    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.period
    }

    /// x grid point x_j in [-L/2, L/2).
    pub fn x_coord(&self, j: usize) -> f64 {
        -self.period / 2.0 + j as f64 * self.dx()
    }

    /// x frequencies in FFT storage order.
    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// y grid coordinate along one axis for a flat y index.
    pub fn y_coord(&self, m: usize, axis: usize) -> f64 {
        let mut rem = m;
        let mut k = 0;
        for a in (0..self.dim_y).rev() {
            if a == axis {
                k = rem % self.n_y;
            }
            rem /= self.n_y;
        }
        2.0 * PI * k as f64 / self.n_y as f64
    }

    /// y mode for a flat y index (FFT storage order per axis).
    pub fn y_mode(&self, m: usize) -> &LatticePoint {
        &self.y_modes[m]
    }

    pub fn y_modes(&self) -> &[LatticePoint] {
        &self.y_modes
    }

    pub fn y_mode_index(&self, p: &LatticePoint) -> Option<usize> {
        self.y_index.get(p).copied()
    }

    /// Constant c with mass = c * sum |Fhat|^2 in the Fourier representation.
    pub fn fourier_mass_constant(&self) -> f64 {
        2.0 * PI * self.dxi() * (2.0 * PI).powi(self.dim_y as i32)
    }

    /// Constant c with mass = c * sum |F|^2 in the physical representation.
    pub fn physical_mass_constant(&self) -> f64 {
        self.dx() * (2.0 * PI / self.n_y as f64).powi(self.dim_y as i32)
    }
}

fn signed_index(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// A complex field over the waveguide grid, in one of the two
/// representations.  Layout: `data[j * N_y^d + m]`, x index slowest.
#[derive(Debug, Clone)]
pub struct WaveField {
    disc: Arc<Discretization>,
    data: Vec<Complex64>,
    repr: Representation,
}

impl WaveField {
    pub fn zero(disc: Arc<Discretization>, repr: Representation) -> Self {
        let n = disc.len();
        Self {
            disc,
            data: vec![Complex64::ZERO; n],
            repr,
        }
    }

    pub fn from_samples(
        disc: Arc<Discretization>,
        data: Vec<Complex64>,
        repr: Representation,
    ) -> Result<Self> {
        if data.len() != disc.len() {
            return Err(Error::InvalidParameter(format!(
                "{} samples for a grid of {} points",
                data.len(),
                disc.len()
            )));
        }
        Ok(Self { disc, data, repr })
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Flat index of grid/mode point (j, m).
    pub fn idx(&self, j: usize, m: usize) -> usize {
        j * self.disc.n_yd + m
    }

    /// Sets a single Fourier coefficient; the field must be in Fourier
    /// representation and the mode on the grid.
    pub fn set_fourier_mode(&mut self, k: usize, p: &LatticePoint, value: Complex64) -> Result<()> {
        if self.repr != Representation::Fourier {
            return Err(Error::InvalidParameter(
                "set_fourier_mode requires the Fourier representation".into(),
            ));
        }
        let m = self.disc.y_mode_index(p).ok_or_else(|| {
            Error::SupportOutsideBall(format!("y mode {p} is not representable on this grid"))
        })?;
        if k >= self.disc.n_x {
            return Err(Error::InvalidParameter(format!(
                "x frequency index {k} out of range"
            )));
        }
        let i = self.idx(k, m);
        self.data[i] = value;
        Ok(())
    }

    pub fn to_fourier(&mut self) {
        if self.repr == Representation::Fourier {
            return;
        }
        let disc = self.disc.clone();
        x_lines_fft(&mut self.data, &disc, true);
        y_slices_fft(&mut self.data, &disc, true);
        let scale = disc.dx() / (2.0 * PI) / disc.n_yd as f64;
        self.data.iter_mut().for_each(|v| *v *= scale);
        self.repr = Representation::Fourier;
    }

    pub fn to_physical(&mut self) {
        if self.repr == Representation::Physical {
            return;
        }
        let disc = self.disc.clone();
        let scale = disc.dxi();
        self.data.iter_mut().for_each(|v| *v *= scale);
        y_slices_fft(&mut self.data, &disc, false);
        x_lines_fft(&mut self.data, &disc, false);
        self.repr = Representation::Physical;
    }

    pub fn fourier_clone(&self) -> WaveField {
        let mut f = self.clone();
        f.to_fourier();
        f
    }

    pub fn physical_clone(&self) -> WaveField {
        let mut f = self.clone();
        f.to_physical();
        f
    }

    /// L^2 mass of the field, evaluated in the current representation.
    pub fn mass(&self) -> f64 {
        let c = match self.repr {
            Representation::Physical => self.disc.physical_mass_constant(),
            Representation::Fourier => self.disc.fourier_mass_constant(),
        };
        c * self.data.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub(crate) fn check_same_disc(&self, other: &WaveField) -> Result<()> {
        if !Arc::ptr_eq(&self.disc, &other.disc) {
            return Err(Error::CutoffMismatch(
                "fields do not share a discretization".into(),
            ));
        }
        Ok(())
    }

    /// Serializes the field (discretization parameters and samples) to the
    /// versioned binary snapshot format.
    pub fn write_snapshot<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.disc.dim_y as u32).to_le_bytes())?;
        w.write_all(&(self.disc.n_x as u64).to_le_bytes())?;
        w.write_all(&(self.disc.n_y as u64).to_le_bytes())?;
        w.write_all(&self.disc.period.to_le_bytes())?;
        let repr: u8 = match self.repr {
            Representation::Physical => 0,
            Representation::Fourier => 1,
        };
        w.write_all(&[repr])?;
        let mut buf = Vec::with_capacity(self.data.len() * 16);
        for v in &self.data {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads a snapshot written by [`WaveField::write_snapshot`], rebuilding
    /// the discretization (and its transform plans) from the stored
    /// parameters.
    pub fn read_snapshot<R: std::io::Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != *SNAPSHOT_MAGIC {
            return Err(Error::CorruptCache("bad field snapshot magic".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != SNAPSHOT_VERSION {
            return Err(Error::CorruptCache(format!(
                "unsupported field snapshot version {version}"
            )));
        }
        r.read_exact(&mut u32buf)?;
        let dim_y = u32::from_le_bytes(u32buf) as usize;
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let n_x = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let n_y = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let period = f64::from_le_bytes(u64buf);
        let mut reprbuf = [0u8; 1];
        r.read_exact(&mut reprbuf)?;
        let repr = match reprbuf[0] {
            0 => Representation::Physical,
            1 => Representation::Fourier,
            other => {
                return Err(Error::CorruptCache(format!(
                    "unknown representation tag {other}"
                )))
            }
        };
        let disc = Discretization::new(dim_y, period, n_x, n_y)?;
        let mut data = vec![Complex64::ZERO; disc.len()];
        let mut sample = [0u8; 16];
        for v in data.iter_mut() {
            r.read_exact(&mut sample)?;
            let re = f64::from_le_bytes(sample[..8].try_into().expect("8-byte slice"));
            let im = f64::from_le_bytes(sample[8..].try_into().expect("8-byte slice"));
            *v = Complex64::new(re, im);
        }
        Ok(WaveField { disc, data, repr })
    }

    /// [`WaveField::write_snapshot`] into a file created at `path`.
    pub fn write_snapshot_file(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_snapshot(std::io::BufWriter::new(file))
    }

    /// [`WaveField::read_snapshot`] from the file at `path`.
    pub fn read_snapshot_file(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_snapshot(std::io::BufReader::new(file))
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"WGF\0";
const SNAPSHOT_VERSION: u32 = 1;

/// FFT along the x axis of every y column.  The (-1)^k factors translate
/// between the centered x interval and the FFT's origin-based indexing;
/// they are applied on the frequency side (after a forward transform,
/// before an inverse one).
fn x_lines_fft(data: &mut [Complex64], disc: &Discretization, forward: bool) {
    let n_x = disc.n_x;
    let n_yd = disc.n_yd;
    let mut buf = vec![Complex64::ZERO; data.len()];
    for j in 0..n_x {
        for m in 0..n_yd {
            buf[m * n_x + j] = data[j * n_yd + m];
        }
    }
    let fft = if forward {
        &disc.fft_x_fwd
    } else {
        &disc.fft_x_inv
    };
    buf.par_chunks_mut(n_x).for_each_init(
        || vec![Complex64::ZERO; fft.get_inplace_scratch_len()],
        |scratch, line| {
            if forward {
                fft.process_with_scratch(line, scratch);
                for (k, v) in line.iter_mut().enumerate() {
                    if k % 2 == 1 {
                        *v = -*v;
                    }
                }
            } else {
                for (k, v) in line.iter_mut().enumerate() {
                    if k % 2 == 1 {
                        *v = -*v;
                    }
                }
                fft.process_with_scratch(line, scratch);
            }
        },
    );
    for j in 0..n_x {
        for m in 0..n_yd {
            data[j * n_yd + m] = buf[m * n_x + j];
        }
    }
}

/// FFTs along every y axis within each x slice (unscaled).
fn y_slices_fft(data: &mut [Complex64], disc: &Discretization, forward: bool) {
    let fft = if forward {
        &disc.fft_y_fwd
    } else {
        &disc.fft_y_inv
    };
    let n_y = disc.n_y;
    let dim_y = disc.dim_y;
    let n_yd = disc.n_yd;
    data.par_chunks_mut(n_yd).for_each_init(
        || {
            (
                vec![Complex64::ZERO; n_y],
                vec![Complex64::ZERO; fft.get_inplace_scratch_len()],
            )
        },
        |(line, scratch), slice| {
            for axis in 0..dim_y {
                let stride = n_y.pow((dim_y - 1 - axis) as u32);
                let block = n_y * stride;
                for base_block in 0..(n_yd / block) {
                    for off in 0..stride {
                        let base = base_block * block + off;
                        for t in 0..n_y {
                            line[t] = slice[base + t * stride];
                        }
                        fft.process_with_scratch(line, scratch);
                        for t in 0..n_y {
                            slice[base + t * stride] = line[t];
                        }
                    }
                }
            }
        },
    );
}
