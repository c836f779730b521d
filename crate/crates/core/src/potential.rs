//! Gaussian-mollified Coulomb interaction on the periodic box.
//!
//! The kernel is defined through its Fourier multiplier
//! `V̂(k) = C / |k|^2 · exp(-(|k| β / 2)^2)` with the zero mode removed. `C`
//! is `4π` in three dimensions, which makes `V → 1/|x|` as `β → 0`, and `1`
//! for the one- and two-dimensional Poisson Green's functions.
//!
//! Real-space samples are stored in displacement order: entry `j` is the
//! kernel at displacement `j·dx` (wrapped), so entry 0 is the kernel at the
//! origin. A constant is added to the samples so that their minimum is zero;
//! forces are unaffected by that constant.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::grid::{gauss_legendre_unit, SpatialGrid, Spectral};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    Coulomb3d,
    Green1d,
    Green2d,
}

impl KernelMode {
    pub fn dim(self) -> usize {
        match self {
            KernelMode::Coulomb3d => 3,
            KernelMode::Green1d => 1,
            KernelMode::Green2d => 2,
        }
    }

    /// Strength `C` in `V̂(k) = C/|k|^2 · ...`.
    pub fn coupling(self) -> f64 {
        match self {
            KernelMode::Coulomb3d => 4.0 * PI,
            KernelMode::Green1d | KernelMode::Green2d => 1.0,
        }
    }

    pub fn for_dim(dim: usize) -> Result<Self> {
        match dim {
            1 => Ok(KernelMode::Green1d),
            2 => Ok(KernelMode::Green2d),
            3 => Ok(KernelMode::Coulomb3d),
            _ => Err(Error::config(format!("no kernel for dimension {dim}"))),
        }
    }
}

impl FromStr for KernelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coulomb3d" => Ok(KernelMode::Coulomb3d),
            "green1d" => Ok(KernelMode::Green1d),
            "green2d" => Ok(KernelMode::Green2d),
            other => Err(Error::config(format!("unknown kernel mode '{other}'"))),
        }
    }
}

/// `β_N = N^{-ε}`.
pub fn beta_for(particles: usize, epsilon: f64) -> f64 {
    (particles as f64).powf(-epsilon)
}

#[derive(Debug, Clone)]
pub struct RegularizedKernel {
    beta: f64,
    mode: Option<KernelMode>,
    grid: SpatialGrid,
    spectral: Spectral,
    multiplier: Vec<f64>,
    real_space: Vec<f64>,
    gradient: Vec<Vec<f64>>,
    offset: f64,
}

impl RegularizedKernel {
    /// Mollified kernel with width `beta`, which must be resolved by the grid.
    pub fn build(beta: f64, grid: &SpatialGrid, mode: KernelMode) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::config(format!("beta must be positive, got {beta}")));
        }
        if beta < 2.0 * grid.spacing() {
            return Err(Error::config(format!(
                "beta = {beta} is below the resolvable width 2·dx = {}",
                2.0 * grid.spacing()
            )));
        }
        Self::assemble(beta, grid, Some(mode))
    }

    /// The bare Green's function (`β = 0`), used for the limiting kinetic equation.
    pub fn bare(grid: &SpatialGrid, mode: KernelMode) -> Result<Self> {
        Self::assemble(0.0, grid, Some(mode))
    }

    /// The identically vanishing interaction.
    pub fn zero(grid: &SpatialGrid) -> Self {
        Self::assemble(0.0, grid, None).expect("zero kernel is always valid")
    }

    fn assemble(beta: f64, grid: &SpatialGrid, mode: Option<KernelMode>) -> Result<Self> {
        if let Some(mode) = mode {
            if mode.dim() != grid.dim() {
                return Err(Error::config(format!(
                    "kernel mode {mode:?} needs a {}-dimensional grid, got {}",
                    mode.dim(),
                    grid.dim()
                )));
            }
        }
        let spectral = Spectral::new(grid);
        let multiplier: Vec<f64> = (0..grid.len())
            .map(|flat| {
                let Some(mode) = mode else { return 0.0 };
                let k = grid.wave_vector(flat);
                let k2: f64 = k.iter().map(|v| v * v).sum();
                if k2 == 0.0 {
                    0.0
                } else {
                    mode.coupling() / k2 * (-(k2 * beta * beta) / 4.0).exp()
                }
            })
            .collect();

        // Fourier-series samples: K(j dx) = L^{-d} Σ_k K̂(k) e^{ik·j dx}.
        let scale = (grid.len() as f64).sqrt() / grid.volume();
        let to_real = |spectrum: Vec<C64>| -> Vec<f64> {
            spectral.fft_inverse(&spectrum).into_iter().map(|v| v.re * scale).collect()
        };
        let mean_zero = to_real(multiplier.iter().map(|&m| C64::new(m, 0.0)).collect());
        let n = grid.n();
        let gradient: Vec<Vec<f64>> = (0..grid.dim())
            .map(|axis| {
                let spectrum = multiplier
                    .iter()
                    .enumerate()
                    .map(|(flat, &m)| {
                        let idx = grid.axis_indices(flat)[axis];
                        if idx == n / 2 {
                            C64::new(0.0, 0.0)
                        } else {
                            C64::new(0.0, grid.wavenumber(idx) * m)
                        }
                    })
                    .collect();
                to_real(spectrum)
            })
            .collect();
        let offset = if mode.is_some() {
            -mean_zero.iter().copied().fold(f64::INFINITY, f64::min)
        } else {
            0.0
        };
        let real_space = mean_zero.iter().map(|v| v + offset).collect();
        Ok(Self { beta, mode, grid: *grid, spectral, multiplier, real_space, gradient, offset })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mode(&self) -> Option<KernelMode> {
        self.mode
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn is_zero(&self) -> bool {
        self.mode.is_none()
    }

    /// Fourier multiplier on the dual grid (zero mode is 0).
    pub fn multiplier(&self) -> &[f64] {
        &self.multiplier
    }

    /// Kernel samples in displacement order, shifted so the minimum is 0.
    pub fn real_space(&self) -> &[f64] {
        &self.real_space
    }

    /// Gradient samples in displacement order, one vector per axis.
    pub fn gradient(&self) -> &[Vec<f64>] {
        &self.gradient
    }

    /// Constant added to the mean-zero samples.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Kernel value at a displacement given in grid-index units (any sign).
    pub fn value_at(&self, offset: [i64; 3]) -> f64 {
        self.real_space[self.displacement_index(offset)]
    }

    pub fn displacement_index(&self, offset: [i64; 3]) -> usize {
        let mut idx = [0usize; 3];
        for axis in 0..self.grid.dim() {
            idx[axis] = self.grid.wrap_index(offset[axis]);
        }
        self.grid.flat_index(idx)
    }

    /// Kernel samples reordered to grid coordinates (origin at the box center).
    pub fn samples_centered(&self) -> Vec<f64> {
        let half = (self.grid.n() / 2) as i64;
        (0..self.grid.len())
            .map(|flat| {
                let idx = self.grid.axis_indices(flat);
                let mut off = [0i64; 3];
                for axis in 0..self.grid.dim() {
                    off[axis] = idx[axis] as i64 - half;
                }
                self.value_at(off)
            })
            .collect()
    }

    /// `max_x |∇V(x)|` over the grid.
    pub fn grad_sup_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.gradient.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `(V * ρ)(x)` including the gauge constant times the mass of `ρ`.
    pub fn convolve(&self, rho: &[f64]) -> Vec<f64> {
        let mass = crate::grid::integrate(rho, &self.grid);
        self.spectral
            .convolve(rho, &self.multiplier)
            .into_iter()
            .map(|v| v + self.offset * mass)
            .collect()
    }

    /// `((∇V) * ρ)(x)`, one vector per axis.
    pub fn convolve_force(&self, rho: &[f64]) -> Vec<Vec<f64>> {
        let mut data: Vec<C64> = rho.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.spectral.forward_in_place(&mut data);
        let n = self.grid.n();
        (0..self.grid.dim())
            .map(|axis| {
                let mut comp: Vec<C64> = data
                    .iter()
                    .zip(&self.multiplier)
                    .enumerate()
                    .map(|(flat, (&v, &m))| {
                        let idx = self.grid.axis_indices(flat)[axis];
                        if idx == n / 2 {
                            C64::new(0.0, 0.0)
                        } else {
                            v * C64::new(0.0, self.grid.wavenumber(idx) * m)
                        }
                    })
                    .collect();
                self.spectral.inverse_in_place(&mut comp);
                comp.into_iter().map(|v| v.re).collect()
            })
            .collect()
    }

    /// Gradient samples of `V` smoothed by an extra multiplier `s(k)`, in
    /// displacement order. Used to fold envelope densities into the force.
    pub fn smoothed_gradient(&self, extra: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(extra.len(), self.grid.len());
        let scale = (self.grid.len() as f64).sqrt() / self.grid.volume();
        let n = self.grid.n();
        (0..self.grid.dim())
            .map(|axis| {
                let spectrum: Vec<C64> = self
                    .multiplier
                    .iter()
                    .zip(extra)
                    .enumerate()
                    .map(|(flat, (&m, &e))| {
                        let idx = self.grid.axis_indices(flat)[axis];
                        if idx == n / 2 {
                            C64::new(0.0, 0.0)
                        } else {
                            C64::new(0.0, self.grid.wavenumber(idx) * m * e)
                        }
                    })
                    .collect();
                self.spectral.fft_inverse(&spectrum).into_iter().map(|v| v.re * scale).collect()
            })
            .collect()
    }

    /// Free-space radial profile `V(r)` on `ℝ^3`, evaluated from the
    /// multiplier by the radial inverse Fourier integral
    /// `V(r) = (2/π) ∫_0^∞ sinc(k r) exp(-(kβ/2)^2) dk` (for `C = 4π`).
    pub fn free_space_profile(&self, r: f64) -> Result<f64> {
        if self.mode != Some(KernelMode::Coulomb3d) || self.beta <= 0.0 {
            return Err(Error::Capability(
                "free-space profile needs a mollified 3D Coulomb kernel".into(),
            ));
        }
        Ok(coulomb3d_profile_fourier(self.beta, r))
    }
}

/// Radial inverse Fourier transform of `4π/k^2 · exp(-(kβ/2)^2)` in 3D.
pub fn coulomb3d_profile_fourier(beta: f64, r: f64) -> f64 {
    let k_max = 14.0 / beta;
    let panels = 400;
    let (nodes, weights) = gauss_legendre_unit(16);
    let h = k_max / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let a = p as f64 * h;
        for (x, w) in nodes.iter().zip(&weights) {
            let k = a + x * h;
            let kr = k * r;
            let sinc = if kr.abs() < 1e-8 { 1.0 - kr * kr / 6.0 } else { kr.sin() / kr };
            acc += w * h * sinc * (-(k * beta / 2.0).powi(2)).exp();
        }
    }
    2.0 / PI * acc
}
