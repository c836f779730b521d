//! Uniform periodic grids, unitary FFTs, spectral derivatives and quadrature.
//!
//! Coordinates along every axis run over `[-L/2, L/2)` with spacing `L/n`;
//! index `i` sits at `-L/2 + i * L/n`. Flat indices are row-major with the
//! last axis fastest. Wave numbers follow the usual FFT ordering
//! `0, 1, .., n/2-1, -n/2, .., -1` times `2π/L`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    dim: usize,
    n: usize,
    length: f64,
}

impl SpatialGrid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::config(format!("dimension {dim} not in 1..=3")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::config(format!(
                "points per axis must be a power of two >= 2, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::config(format!("box length must be positive, got {length}")));
        }
        Ok(Self { dim, n, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Total number of grid points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Coordinate of index `i` along one axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.spacing()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coordinate(i)).collect()
    }

    /// Per-axis indices of a flat index (unused axes are zero).
    pub fn axis_indices(&self, flat: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = rem % self.n;
            rem /= self.n;
        }
        out
    }

    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        idx[..self.dim].iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.axis_indices(flat);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = self.coordinate(idx[axis]);
        }
        x
    }

    /// Signed FFT mode number of index `i`.
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * PI / self.length * self.mode(i) as f64
    }

    pub fn wave_vector(&self, flat: usize) -> [f64; 3] {
        let idx = self.axis_indices(flat);
        let mut k = [0.0; 3];
        for axis in 0..self.dim {
            k[axis] = self.wavenumber(idx[axis]);
        }
        k
    }

    /// Wraps a displacement into `[-L/2, L/2)`.
    pub fn min_image(&self, d: f64) -> f64 {
        let l = self.length;
        d - l * ((d + 0.5 * l) / l).floor()
    }

    /// Signed index offset of the minimum image of `j` (mod n).
    pub fn offset_of(&self, j: usize) -> i64 {
        self.mode(j % self.n)
    }

    pub fn wrap_index(&self, i: i64) -> usize {
        i.rem_euclid(self.n as i64) as usize
    }

    /// Grids agree in dimension, count and extent.
    pub fn same_as(&self, other: &SpatialGrid) -> bool {
        self.dim == other.dim && self.n == other.n && (self.length - other.length).abs() < 1e-12
    }
}

/// Position grid times an independent momentum grid.
///
/// The momentum grid is stored as a [`SpatialGrid`] of extent `2P`, so its
/// points are `-P + j * 2P/m`. Field values are flattened position-major:
/// `flat = iq * momentum.len() + ip`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub position: SpatialGrid,
    pub momentum: SpatialGrid,
}

impl PhaseGrid {
    pub fn new(position: SpatialGrid, momentum: SpatialGrid) -> Result<Self> {
        if position.dim() != momentum.dim() {
            return Err(Error::config("position and momentum grids differ in dimension"));
        }
        Ok(Self { position, momentum })
    }

    /// Builds the phase grid from `(dim, n, L, m, P)`.
    pub fn from_extents(dim: usize, n: usize, length: f64, m: usize, p_max: f64) -> Result<Self> {
        let position = SpatialGrid::new(dim, n, length)?;
        let momentum = SpatialGrid::new(dim, m, 2.0 * p_max)?;
        Self::new(position, momentum)
    }

    pub fn dim(&self) -> usize {
        self.position.dim()
    }

    pub fn p_max(&self) -> f64 {
        0.5 * self.momentum.length()
    }

    pub fn len(&self) -> usize {
        self.position.len() * self.momentum.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.position.cell_volume() * self.momentum.cell_volume()
    }

    pub fn index(&self, iq: usize, ip: usize) -> usize {
        iq * self.momentum.len() + ip
    }

    /// Sums a phase-space field against the cell volume.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        field.iter().sum::<f64>() * self.cell_volume()
    }
}

/// Cached FFT plans for one [`SpatialGrid`].
#[derive(Clone)]
pub struct Spectral {
    grid: SpatialGrid,
    forward: Arc<dyn Fft<f64>>,
    backward: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: &SpatialGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid: *grid,
            forward: planner.plan_fft(grid.n(), FftDirection::Forward),
            backward: planner.plan_fft(grid.n(), FftDirection::Inverse),
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    fn transform_raw(&self, data: &mut [C64], direction: FftDirection) {
        assert_eq!(data.len(), self.grid.len(), "field size does not match grid");
        let plan = match direction {
            FftDirection::Forward => &self.forward,
            FftDirection::Inverse => &self.backward,
        };
        let n = self.grid.n();
        let dim = self.grid.dim();
        let mut line = vec![C64::new(0.0, 0.0); n];
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            if stride == 1 {
                plan.process(data);
                continue;
            }
            let block = stride * n;
            for start in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (i, v) in line.iter_mut().enumerate() {
                        *v = data[base + i * stride];
                    }
                    plan.process(&mut line);
                    for (i, v) in line.iter().enumerate() {
                        data[base + i * stride] = *v;
                    }
                }
            }
        }
    }

    /// Unitary forward transform in place.
    pub fn forward_in_place(&self, data: &mut [C64]) {
        self.transform_raw(data, FftDirection::Forward);
        let scale = 1.0 / (self.grid.len() as f64).sqrt();
        data.iter_mut().for_each(|v| *v *= scale);
    }

    /// Unitary inverse transform in place.
    pub fn inverse_in_place(&self, data: &mut [C64]) {
        self.transform_raw(data, FftDirection::Inverse);
        let scale = 1.0 / (self.grid.len() as f64).sqrt();
        data.iter_mut().for_each(|v| *v *= scale);
    }

    pub fn fft_forward(&self, field: &[C64]) -> Vec<C64> {
        let mut out = field.to_vec();
        self.forward_in_place(&mut out);
        out
    }

    pub fn fft_inverse(&self, coeffs: &[C64]) -> Vec<C64> {
        let mut out = coeffs.to_vec();
        self.inverse_in_place(&mut out);
        out
    }

    /// Multiplies the spectrum of `field` by `multiplier(k)` and transforms back.
    pub fn apply_multiplier(&self, field: &[C64], multiplier: impl Fn([f64; 3]) -> C64) -> Vec<C64> {
        let mut data = self.fft_forward(field);
        for (flat, v) in data.iter_mut().enumerate() {
            *v *= multiplier(self.grid.wave_vector(flat));
        }
        self.inverse_in_place(&mut data);
        data
    }

    /// Gradient by multiplication with `i k`. The Nyquist mode is dropped so
    /// real input gives real output.
    pub fn gradient_complex(&self, field: &[C64]) -> Vec<Vec<C64>> {
        let spectrum = self.fft_forward(field);
        let n = self.grid.n();
        (0..self.grid.dim())
            .map(|axis| {
                let mut comp: Vec<C64> = spectrum
                    .iter()
                    .enumerate()
                    .map(|(flat, &v)| {
                        let idx = self.grid.axis_indices(flat)[axis];
                        if idx == n / 2 {
                            C64::new(0.0, 0.0)
                        } else {
                            v * C64::new(0.0, self.grid.wavenumber(idx))
                        }
                    })
                    .collect();
                self.inverse_in_place(&mut comp);
                comp
            })
            .collect()
    }

    pub fn spectral_gradient(&self, field: &[f64]) -> Vec<Vec<f64>> {
        let c: Vec<C64> = field.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.gradient_complex(&c)
            .into_iter()
            .map(|comp| comp.into_iter().map(|v| v.re).collect())
            .collect()
    }

    /// Periodic convolution `(K * ρ)(x) = Σ_y K(x - y) ρ(y) dV` for a kernel
    /// given by its continuous Fourier coefficients `K̂(k)` sampled on the
    /// dual grid (so `K(x) = L^{-d} Σ_k K̂(k) e^{ikx}`).
    pub fn convolve(&self, field: &[f64], multiplier: &[f64]) -> Vec<f64> {
        assert_eq!(multiplier.len(), self.grid.len());
        let mut data: Vec<C64> = field.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.forward_in_place(&mut data);
        for (v, &m) in data.iter_mut().zip(multiplier) {
            *v *= m;
        }
        self.inverse_in_place(&mut data);
        data.into_iter().map(|v| v.re).collect()
    }

    /// Samples `x ↦ g(x + delta)` by a phase shift of the spectrum.
    pub fn shift(&self, field: &[f64], delta: [f64; 3]) -> Vec<f64> {
        let n = self.grid.n();
        let mut data: Vec<C64> = field.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.forward_in_place(&mut data);
        for (flat, v) in data.iter_mut().enumerate() {
            let idx = self.grid.axis_indices(flat);
            let mut phase = 0.0;
            let mut nyquist = false;
            for axis in 0..self.grid.dim() {
                if idx[axis] == n / 2 {
                    nyquist = true;
                }
                phase += self.grid.wavenumber(idx[axis]) * delta[axis];
            }
            if nyquist {
                *v *= phase.cos();
            } else {
                *v *= C64::from_polar(1.0, phase);
            }
        }
        self.inverse_in_place(&mut data);
        data.into_iter().map(|v| v.re).collect()
    }
}

/// Cell-sum quadrature.
pub fn integrate<T>(field: &[T], grid: &SpatialGrid) -> T
where
    T: Copy + std::iter::Sum<T> + std::ops::Mul<f64, Output = T>,
{
    field.iter().copied().sum::<T>() * grid.cell_volume()
}

/// Discrete L2 norm `(Σ |u|^2 dV)^{1/2}`.
pub fn l2_norm(field: &[C64], grid: &SpatialGrid) -> f64 {
    (field.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.cell_volume()).sqrt()
}

/// Weighted inner product `Σ conj(a) b dV`.
pub fn inner(a: &[C64], b: &[C64], grid: &SpatialGrid) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>() * grid.cell_volume()
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(points: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(points >= 1);
    let n = points;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        // Newton iteration on P_n from the Chebyshev guess.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}
