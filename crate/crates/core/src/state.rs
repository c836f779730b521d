//! Reduced density matrices, Slater determinants and few-body wave functions.
//!
//! Kernels are stored densely on the grid. A one-body kernel `γ(x;y)` acts
//! on functions by `(γf)(x) = Σ_y γ(x;y) f(y) dV`, so orbitals normalized
//! with `Σ |e|^2 dV = 1` give `Tr γ = Σ_x γ(x;x) dV = N`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{inner, SpatialGrid, Spectral};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest `n^d` handled with dense one-body storage.
pub const MAX_DENSE_POINTS: usize = 4096;

#[derive(Debug, Clone)]
pub struct SlaterState {
    grid: SpatialGrid,
    hbar: f64,
    orbitals: Vec<Vec<C64>>,
}

impl SlaterState {
    /// Validates orthonormality to `1e-10`.
    pub fn new(grid: SpatialGrid, hbar: f64, orbitals: Vec<Vec<C64>>) -> Result<Self> {
        if !(hbar > 0.0) {
            return Err(Error::config("hbar must be positive"));
        }
        if orbitals.iter().any(|o| o.len() != grid.len()) {
            return Err(Error::GridMismatch("orbital length differs from grid size".into()));
        }
        let err = orthonormality_error(&orbitals, &grid);
        if err > 1e-10 {
            return Err(Error::validation(format!("orbitals not orthonormal (error {err:.3e})")));
        }
        Ok(Self { grid, hbar, orbitals })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn orbitals(&self) -> &[Vec<C64>] {
        &self.orbitals
    }

    pub fn particle_count(&self) -> usize {
        self.orbitals.len()
    }
}

pub fn orthonormality_error(orbitals: &[Vec<C64>], grid: &SpatialGrid) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in orbitals.iter().enumerate() {
        for (j, b) in orbitals.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((inner(a, b, grid) - target).norm());
        }
    }
    worst
}

/// Modified Gram-Schmidt, applied twice.
pub fn orthonormalize(mut orbitals: Vec<Vec<C64>>, grid: &SpatialGrid) -> Result<Vec<Vec<C64>>> {
    for _ in 0..2 {
        for i in 0..orbitals.len() {
            let (done, rest) = orbitals.split_at_mut(i);
            let v = &mut rest[0];
            for u in done.iter() {
                let c = inner(u, v, grid);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
            let norm = crate::grid::l2_norm(v, grid);
            if norm < 1e-8 {
                return Err(Error::validation("orbitals are linearly dependent"));
            }
            v.iter_mut().for_each(|x| *x /= norm);
        }
    }
    Ok(orbitals)
}

/// Orbital families for initial Slater data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitalKind {
    /// Lowest plane-wave modes of the box.
    LowestModes,
    /// Harmonic-oscillator eigenfunctions at scale `√ħ` (1D).
    Harmonic,
    /// Gaussians of width `√ħ` at seeded centers, orthonormalized.
    Gaussians,
}

impl std::str::FromStr for OrbitalKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowest-modes" => Ok(OrbitalKind::LowestModes),
            "harmonic" => Ok(OrbitalKind::Harmonic),
            "gaussians" => Ok(OrbitalKind::Gaussians),
            other => Err(Error::config(format!("unknown orbital family '{other}'"))),
        }
    }
}

impl SlaterState {
    pub fn build(kind: OrbitalKind, grid: SpatialGrid, particles: usize, hbar: f64, seed: u64) -> Result<Self> {
        let orbitals = match kind {
            OrbitalKind::LowestModes => lowest_modes(&grid, particles)?,
            OrbitalKind::Harmonic => harmonic_orbitals(&grid, particles, hbar)?,
            OrbitalKind::Gaussians => gaussian_orbitals(&grid, particles, hbar, seed)?,
        };
        Self::new(grid, hbar, orbitals)
    }
}

/// Plane waves `e^{ik·x}/√V` ordered by `|k|^2`, ties broken by mode index.
pub fn lowest_modes(grid: &SpatialGrid, particles: usize) -> Result<Vec<Vec<C64>>> {
    if particles > grid.len() {
        return Err(Error::config("more particles than grid modes"));
    }
    let mut modes: Vec<usize> = (0..grid.len()).collect();
    let key = |flat: usize| -> (i64, Vec<i64>) {
        let idx = grid.axis_indices(flat);
        let m: Vec<i64> = (0..grid.dim()).map(|a| grid.mode(idx[a])).collect();
        let norm = m.iter().map(|v| v * v).sum();
        // positive before negative at equal |k|
        let tie = m.iter().map(|&v| if v >= 0 { 2 * v } else { -2 * v + 1 }).collect();
        (norm, tie)
    };
    modes.sort_by_key(|&f| key(f));
    let amp = 1.0 / grid.volume().sqrt();
    Ok(modes[..particles]
        .iter()
        .map(|&mode| {
            let k = grid.wave_vector(mode);
            (0..grid.len())
                .map(|flat| {
                    let x = grid.point(flat);
                    let phase: f64 = (0..grid.dim()).map(|a| k[a] * x[a]).sum();
                    C64::from_polar(amp, phase)
                })
                .collect()
        })
        .collect())
}

/// Normalized Hermite functions `ħ^{-1/4} h_j(x/√ħ)` for `j < particles`.
pub fn harmonic_orbitals(grid: &SpatialGrid, particles: usize, hbar: f64) -> Result<Vec<Vec<C64>>> {
    if grid.dim() != 1 {
        return Err(Error::Capability("harmonic orbitals are implemented for d = 1".into()));
    }
    let xs = grid.coordinates();
    let sq = hbar.sqrt();
    let mut table = vec![vec![0.0; xs.len()]; particles];
    for (i, &x) in xs.iter().enumerate() {
        let xi = x / sq;
        let mut prev = 0.0;
        let mut cur = std::f64::consts::PI.powf(-0.25) * (-0.5 * xi * xi).exp();
        for (j, row) in table.iter_mut().enumerate() {
            row[i] = cur / sq.sqrt();
            let next = (2.0 / (j + 1) as f64).sqrt() * xi * cur - (j as f64 / (j + 1) as f64).sqrt() * prev;
            prev = cur;
            cur = next;
        }
    }
    let orbitals = table.into_iter().map(|r| r.into_iter().map(|v| C64::new(v, 0.0)).collect()).collect();
    orthonormalize(orbitals, grid)
}

/// Gaussians of width `√ħ` centered at seeded points in the inner half of the box.
pub fn gaussian_orbitals(grid: &SpatialGrid, particles: usize, hbar: f64, seed: u64) -> Result<Vec<Vec<C64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quarter = 0.25 * grid.length();
    let orbitals = (0..particles)
        .map(|_| {
            let center: Vec<f64> = (0..grid.dim()).map(|_| rng.random_range(-quarter..quarter)).collect();
            (0..grid.len())
                .map(|flat| {
                    let x = grid.point(flat);
                    let r2: f64 = (0..grid.dim()).map(|a| (x[a] - center[a]).powi(2)).sum();
                    C64::new((-r2 / (2.0 * hbar)).exp(), 0.0)
                })
                .collect()
        })
        .collect();
    orthonormalize(orbitals, grid)
}

/// One-body reduced density matrix `γ(x;y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneBodyDensity {
    grid: SpatialGrid,
    hbar: f64,
    particles: usize,
    kernel: Vec<C64>,
}

impl OneBodyDensity {
    pub fn from_kernel(grid: SpatialGrid, hbar: f64, particles: usize, kernel: Vec<C64>) -> Result<Self> {
        if grid.len() > MAX_DENSE_POINTS {
            return Err(Error::Capability(format!(
                "dense one-body storage needs n^d <= {MAX_DENSE_POINTS}, got {}",
                grid.len()
            )));
        }
        if kernel.len() != grid.len() * grid.len() {
            return Err(Error::GridMismatch("kernel size is not (n^d)^2".into()));
        }
        Ok(Self { grid, hbar, particles, kernel })
    }

    /// `Σ_j λ_j e_j(x) conj(e_j(y))`.
    pub fn from_orbitals(
        grid: SpatialGrid,
        hbar: f64,
        particles: usize,
        orbitals: &[Vec<C64>],
        occupations: &[f64],
    ) -> Result<Self> {
        let len = grid.len();
        if len > MAX_DENSE_POINTS {
            return Err(Error::Capability(format!("dense storage limited to n^d <= {MAX_DENSE_POINTS}")));
        }
        let mut kernel = vec![ZERO; len * len];
        kernel.par_chunks_mut(len).enumerate().for_each(|(x, row)| {
            for (orb, &occ) in orbitals.iter().zip(occupations) {
                let ex = orb[x] * occ;
                for (y, v) in row.iter_mut().enumerate() {
                    *v += ex * orb[y].conj();
                }
            }
        });
        Self::from_kernel(grid, hbar, particles, kernel)
    }

    pub fn zero(grid: SpatialGrid, hbar: f64, particles: usize) -> Result<Self> {
        let len = grid.len();
        Self::from_kernel(grid, hbar, particles, vec![ZERO; len * len])
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn particle_count(&self) -> usize {
        self.particles
    }

    pub fn kernel(&self) -> &[C64] {
        &self.kernel
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> C64 {
        self.kernel[x * self.grid.len() + y]
    }

    pub fn row(&self, x: usize) -> &[C64] {
        let len = self.grid.len();
        &self.kernel[x * len..(x + 1) * len]
    }

    /// Diagonal `γ(x;x)` (real part).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|x| self.at(x, x).re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// `(γ f)(x) = Σ_y γ(x;y) f(y) dV`.
    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        let dv = self.grid.cell_volume();
        (0..self.grid.len())
            .map(|x| self.row(x).iter().zip(f).map(|(g, v)| g * v).sum::<C64>() * dv)
            .collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let len = self.grid.len();
        let mut worst: f64 = 0.0;
        for x in 0..len {
            for y in x..len {
                worst = worst.max((self.at(x, y) - self.at(y, x).conj()).norm());
            }
        }
        worst
    }

    /// Operator matrix `γ·dV` in the orthonormal grid basis.
    pub fn operator_matrix(&self) -> DMatrix<C64> {
        let len = self.grid.len();
        let dv = self.grid.cell_volume();
        DMatrix::from_fn(len, len, |i, j| self.at(i, j) * dv)
    }

    /// Eigenvalues of the operator (occupation numbers), ascending.
    pub fn occupations(&self) -> Vec<f64> {
        let mut m = self.operator_matrix();
        // symmetrize against round-off before the Hermitian solver
        let mt = m.adjoint();
        m = (m + mt) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Eigenpairs with occupation above `threshold`; eigenvectors are
    /// returned as grid functions normalized with `Σ |e|^2 dV = 1`.
    pub fn natural_orbitals(&self, threshold: f64) -> (Vec<f64>, Vec<Vec<C64>>) {
        let mut m = self.operator_matrix();
        let mt = m.adjoint();
        m = (m + mt) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(m);
        let scale = 1.0 / self.grid.cell_volume().sqrt();
        let mut occ = Vec::new();
        let mut orbs = Vec::new();
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda > threshold {
                occ.push(lambda);
                orbs.push(eig.eigenvectors.column(k).iter().map(|v| v * scale).collect());
            }
        }
        (occ, orbs)
    }

    /// Frobenius norm of `G^2 - G` for the operator `G = γ dV`.
    pub fn projector_error(&self) -> f64 {
        let g = self.operator_matrix();
        let g2 = &g * &g;
        (g2 - g).norm()
    }

    /// Checks hermiticity (1e-10), trace `N` (1e-8) and occupations in `[0, 1]` (1e-8).
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::validation(format!("kernel not Hermitian (error {herm:.3e})")));
        }
        let tr = self.trace();
        if (tr - self.particles as f64).abs() > 1e-8 {
            return Err(Error::validation(format!("trace {tr} differs from N = {}", self.particles)));
        }
        let occ = self.occupations();
        let (lo, hi) = (occ[0], occ[occ.len() - 1]);
        if lo < -1e-8 || hi > 1.0 + 1e-8 {
            return Err(Error::validation(format!("occupations outside [0,1]: [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// Trace-norm distance `‖γ_a − γ_b‖_1` of the operators.
    pub fn trace_distance(&self, other: &OneBodyDensity) -> Result<f64> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("densities live on different grids".into()));
        }
        let mut d = self.operator_matrix() - other.operator_matrix();
        let dt = d.adjoint();
        d = (d + dt) * C64::new(0.5, 0.0);
        Ok(SymmetricEigen::new(d).eigenvalues.iter().map(|v| v.abs()).sum())
    }
}

pub fn slater_density(state: &SlaterState) -> Result<OneBodyDensity> {
    let err = orthonormality_error(state.orbitals(), state.grid());
    if err > 1e-10 {
        return Err(Error::validation(format!("orbitals not orthonormal (error {err:.3e})")));
    }
    let occ = vec![1.0; state.particle_count()];
    OneBodyDensity::from_orbitals(*state.grid(), state.hbar(), state.particle_count(), state.orbitals(), &occ)
}

/// `⟨K⟩ = (ħ^2/2) Tr(−Δ γ)`, evaluated in the plane-wave basis.
pub fn kinetic_expectation(gamma: &OneBodyDensity) -> f64 {
    let grid = gamma.grid();
    let len = grid.len();
    let spectral = Spectral::new(grid);
    let dv = grid.cell_volume();
    // R(x, k) = Σ_y G(x,y) φ_k(y), with φ_k the unitary plane waves.
    let mut r: Vec<C64> = gamma.kernel().iter().map(|v| v * dv).collect();
    r.par_chunks_mut(len).for_each(|row| spectral.inverse_in_place(row));
    // T(k,k) = Σ_x conj(φ_k(x)) R(x,k): forward transform of each column.
    let diag: f64 = (0..len)
        .into_par_iter()
        .map(|k| {
            let col: Vec<C64> = (0..len).map(|x| r[x * len + k]).collect();
            let t = spectral.fft_forward(&col);
            let kv = grid.wave_vector(k);
            let k2: f64 = kv.iter().map(|v| v * v).sum();
            k2 * t[k].re
        })
        .sum();
    0.5 * gamma.hbar() * gamma.hbar() * diag
}

/// Result of the cutoff number-operator quadrature.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CutoffReport {
    pub value: f64,
    pub bound: f64,
    /// Volume of the ball of radius `R` in `d` dimensions.
    pub ball_volume: f64,
}

pub fn ball_volume(dim: usize, radius: f64) -> f64 {
    use std::f64::consts::PI;
    match dim {
        1 => 2.0 * radius,
        2 => PI * radius * radius,
        _ => 4.0 / 3.0 * PI * radius.powi(3),
    }
}

/// Radius of the unit-volume ball.
pub fn unit_ball_radius(dim: usize) -> f64 {
    let v1 = ball_volume(dim, 1.0);
    v1.powf(-1.0 / dim as f64)
}

/// `∬ dq dx χ(|x−q| ≤ √ħ R) γ(x;x)` and the comparison bound
/// `ħ^{-d/2} |B_R|`.
///
/// The `q` integral is the measure of the cut-off ball on the torus, taken
/// cell by cell: exact fractions in one dimension, an 8^d sub-sampling of
/// each cell otherwise.
pub fn cutoff_number_expectation(gamma: &OneBodyDensity, radius: f64) -> Result<CutoffReport> {
    if !(radius > 0.0) {
        return Err(Error::config("cutoff radius must be positive"));
    }
    let grid = gamma.grid();
    let dim = grid.dim();
    let hbar = gamma.hbar();
    let r = hbar.sqrt() * radius;
    let dx = grid.spacing();
    let q_measure = if dim == 1 {
        // cells [q - dx/2, q + dx/2] intersected with [-r, r], over all q
        (0..grid.n())
            .map(|i| {
                let c = grid.min_image(i as f64 * dx);
                let lo = (c - 0.5 * dx).max(-r);
                let hi = (c + 0.5 * dx).min(r);
                (hi - lo).max(0.0)
            })
            .sum::<f64>()
    } else {
        let sub = 8usize;
        let total_sub = sub.pow(dim as u32);
        (0..grid.len())
            .map(|flat| {
                let idx = grid.axis_indices(flat);
                let inside = (0..total_sub)
                    .filter(|&s| {
                        let mut rem = s;
                        let mut d2 = 0.0;
                        for axis in 0..dim {
                            let frac = (rem % sub) as f64;
                            rem /= sub;
                            let c = grid.min_image(idx[axis] as f64 * dx) + ((frac + 0.5) / sub as f64 - 0.5) * dx;
                            d2 += c * c;
                        }
                        d2 <= r * r
                    })
                    .count();
                inside as f64 / total_sub as f64 * grid.cell_volume()
            })
            .sum::<f64>()
    };
    let value = q_measure * gamma.trace();
    let ball = ball_volume(dim, radius);
    Ok(CutoffReport { value, bound: hbar.powf(-0.5 * dim as f64) * ball, ball_volume: ball })
}

/// Antisymmetric `N`-particle wave function on the `N`-fold product grid,
/// `N ∈ {2, 3}`. Index `((x1·len) + x2)·len + x3`.
#[derive(Debug, Clone)]
pub struct FewBodyWavefunction {
    grid: SpatialGrid,
    hbar: f64,
    particles: usize,
    psi: Vec<C64>,
}

/// Largest product-grid size for few-body wave functions.
pub const MAX_FEW_BODY_POINTS: usize = 1 << 18;

fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    match n {
        2 => vec![(vec![0, 1], 1.0), (vec![1, 0], -1.0)],
        3 => vec![
            (vec![0, 1, 2], 1.0),
            (vec![1, 2, 0], 1.0),
            (vec![2, 0, 1], 1.0),
            (vec![1, 0, 2], -1.0),
            (vec![0, 2, 1], -1.0),
            (vec![2, 1, 0], -1.0),
        ],
        _ => unreachable!(),
    }
}

impl FewBodyWavefunction {
    fn check_size(grid: &SpatialGrid, particles: usize) -> Result<()> {
        if !(2..=3).contains(&particles) {
            return Err(Error::Capability(format!(
                "exact few-body representation supports N in {{2,3}}, got {particles}"
            )));
        }
        let total = grid.len().pow(particles as u32);
        if total > MAX_FEW_BODY_POINTS {
            return Err(Error::Capability(format!(
                "few-body grid has {total} points, limit {MAX_FEW_BODY_POINTS}"
            )));
        }
        Ok(())
    }

    /// Validates normalization and antisymmetry to `1e-10`.
    pub fn new(grid: SpatialGrid, hbar: f64, particles: usize, psi: Vec<C64>) -> Result<Self> {
        Self::check_size(&grid, particles)?;
        if psi.len() != grid.len().pow(particles as u32) {
            return Err(Error::GridMismatch("wave function size mismatch".into()));
        }
        let wf = Self { grid, hbar, particles, psi };
        let norm = wf.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::validation(format!("wave function norm {norm} != 1")));
        }
        let anti = wf.antisymmetry_error();
        if anti > 1e-10 {
            return Err(Error::validation(format!("wave function not antisymmetric (error {anti:.3e})")));
        }
        Ok(wf)
    }

    /// Normalized determinant `(N!)^{-1/2} det[e_j(x_i)]`.
    pub fn from_slater(state: &SlaterState) -> Result<Self> {
        let grid = *state.grid();
        let n = state.particle_count();
        Self::check_size(&grid, n)?;
        let len = grid.len();
        let e = state.orbitals();
        let perms = permutations(n);
        let norm = 1.0 / (if n == 2 { 2.0f64 } else { 6.0 }).sqrt();
        let psi = (0..len.pow(n as u32))
            .into_par_iter()
            .map(|flat| {
                let xs = split_index(flat, len, n);
                perms
                    .iter()
                    .map(|(p, sign)| {
                        let mut prod = C64::new(*sign, 0.0);
                        for (i, &pi) in p.iter().enumerate() {
                            prod *= e[pi][xs[i]];
                        }
                        prod
                    })
                    .sum::<C64>()
                    * norm
            })
            .collect();
        Self::new(grid, state.hbar(), n, psi)
    }

    /// Unsymmetrized product `e_1(x_1)·…·e_N(x_N)`; fails validation.
    pub fn product_unchecked(state: &SlaterState) -> Result<Vec<C64>> {
        let n = state.particle_count();
        let len = state.grid().len();
        Self::check_size(state.grid(), n)?;
        Ok((0..len.pow(n as u32))
            .map(|flat| {
                let xs = split_index(flat, len, n);
                (0..n).map(|i| state.orbitals()[i][xs[i]]).product()
            })
            .collect())
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn particle_count(&self) -> usize {
        self.particles
    }

    pub fn values(&self) -> &[C64] {
        &self.psi
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.psi
    }

    pub fn norm(&self) -> f64 {
        let dv = self.grid.cell_volume().powi(self.particles as i32);
        (self.psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * dv).sqrt()
    }

    /// `max_π ‖P_π ψ − sign(π) ψ‖` in the weighted L2 norm.
    pub fn antisymmetry_error(&self) -> f64 {
        let len = self.grid.len();
        let n = self.particles;
        let dv = self.grid.cell_volume().powi(n as i32);
        permutations(n)
            .iter()
            .map(|(p, sign)| {
                let s: f64 = (0..self.psi.len())
                    .map(|flat| {
                        let xs = split_index(flat, len, n);
                        let permuted: Vec<usize> = p.iter().map(|&pi| xs[pi]).collect();
                        let other = self.psi[join_index(&permuted, len)];
                        (other - self.psi[flat] * *sign).norm_sqr()
                    })
                    .sum();
                (s * dv).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `γ^{(1)}(x;y) = N Σ_r ψ(x,r) conj ψ(y,r) dV^{N-1}`.
    pub fn one_body_density(&self) -> Result<OneBodyDensity> {
        let len = self.grid.len();
        let n = self.particles;
        let rest = len.pow(n as u32 - 1);
        let w = n as f64 * self.grid.cell_volume().powi(n as i32 - 1);
        let mut kernel = vec![ZERO; len * len];
        kernel.par_chunks_mut(len).enumerate().for_each(|(x, row)| {
            let px = &self.psi[x * rest..(x + 1) * rest];
            for (y, v) in row.iter_mut().enumerate() {
                let py = &self.psi[y * rest..(y + 1) * rest];
                *v = px.iter().zip(py).map(|(a, b)| a * b.conj()).sum::<C64>() * w;
            }
        });
        OneBodyDensity::from_kernel(self.grid, self.hbar, n, kernel)
    }
}

pub(crate) fn split_index(flat: usize, len: usize, n: usize) -> [usize; 3] {
    let mut out = [0usize; 3];
    let mut rem = flat;
    for i in (0..n).rev() {
        out[i] = rem % len;
        rem /= len;
    }
    out
}

pub(crate) fn join_index(xs: &[usize], len: usize) -> usize {
    xs.iter().fold(0, |acc, &x| acc * len + x)
}

/// Two-body density `γ^{(2)}(x1,x2;y1,y2)` from an exact few-body state,
/// kept as `N(N−1) Σ_r ψ(x1,x2,r) conj ψ(y1,y2,r) dV^{N−2}`.
#[derive(Debug, Clone)]
pub struct DenseTwoBody {
    grid: SpatialGrid,
    hbar: f64,
    particles: usize,
    /// Row `(x1·len + x2)` holds `ψ(x1,x2,·)` scaled by `√(N(N−1) dV^{N−2})`.
    factors: Vec<C64>,
    rank: usize,
}

impl DenseTwoBody {
    /// Number of spectator configurations `r`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Scaled factor row `Φ(x1,x2,·)` with `γ^{(2)} = Σ_r Φ(x,r) conj Φ(y,r)`.
    pub fn factor_row(&self, x1: usize, x2: usize) -> &[C64] {
        let len = self.grid.len();
        &self.factors[(x1 * len + x2) * self.rank..(x1 * len + x2 + 1) * self.rank]
    }

    #[inline]
    pub fn eval(&self, x1: usize, x2: usize, y1: usize, y2: usize) -> C64 {
        let len = self.grid.len();
        let a = &self.factors[(x1 * len + x2) * self.rank..(x1 * len + x2 + 1) * self.rank];
        let b = &self.factors[(y1 * len + y2) * self.rank..(y1 * len + y2 + 1) * self.rank];
        a.iter().zip(b).map(|(u, v)| u * v.conj()).sum()
    }
}

/// Two-body kernel access, either dense (exact few-body) or derived from a
/// one-body density.
#[derive(Debug, Clone)]
pub enum TwoBodyView {
    /// Wick factorization `γ(x1;y1)γ(x2;y2) − γ(x1;y2)γ(x2;y1)`.
    QuasiFree(OneBodyDensity),
    /// Direct product `γ(x1;y1)γ(x2;y2)` with no exchange term.
    Factorized(OneBodyDensity),
    Dense(DenseTwoBody),
}

impl TwoBodyView {
    pub fn grid(&self) -> &SpatialGrid {
        match self {
            TwoBodyView::QuasiFree(g) | TwoBodyView::Factorized(g) => g.grid(),
            TwoBodyView::Dense(d) => &d.grid,
        }
    }

    pub fn hbar(&self) -> f64 {
        match self {
            TwoBodyView::QuasiFree(g) | TwoBodyView::Factorized(g) => g.hbar(),
            TwoBodyView::Dense(d) => d.hbar,
        }
    }

    pub fn particle_count(&self) -> usize {
        match self {
            TwoBodyView::QuasiFree(g) | TwoBodyView::Factorized(g) => g.particle_count(),
            TwoBodyView::Dense(d) => d.particles,
        }
    }

    #[inline]
    pub fn eval(&self, x1: usize, x2: usize, y1: usize, y2: usize) -> C64 {
        match self {
            TwoBodyView::QuasiFree(g) => g.at(x1, y1) * g.at(x2, y2) - g.at(x1, y2) * g.at(x2, y1),
            TwoBodyView::Factorized(g) => g.at(x1, y1) * g.at(x2, y2),
            TwoBodyView::Dense(d) => d.eval(x1, x2, y1, y2),
        }
    }

    /// `∫ γ^{(2)}(x1,w;y1,w) dw` as a dense `len × len` kernel.
    pub fn partial_trace(&self) -> Vec<C64> {
        let grid = *self.grid();
        let len = grid.len();
        let dv = grid.cell_volume();
        let mut out = vec![ZERO; len * len];
        out.par_chunks_mut(len).enumerate().for_each(|(x1, row)| {
            for (y1, v) in row.iter_mut().enumerate() {
                *v = (0..len).map(|w| self.eval(x1, w, y1, w)).sum::<C64>() * dv;
            }
        });
        out
    }

    /// `Σ γ^{(2)}(x1,x2;x1,x2) dV^2`.
    pub fn trace(&self) -> f64 {
        let len = self.grid().len();
        let dv = self.grid().cell_volume();
        (0..len)
            .into_par_iter()
            .map(|x1| (0..len).map(|x2| self.eval(x1, x2, x1, x2).re).sum::<f64>())
            .sum::<f64>()
            * dv
            * dv
    }

    /// Antisymmetry residual under the simultaneous swap of both argument pairs.
    pub fn swap_error(&self) -> f64 {
        let len = self.grid().len();
        (0..len)
            .into_par_iter()
            .map(|x1| {
                let mut worst: f64 = 0.0;
                for x2 in 0..len {
                    for y1 in 0..len {
                        for y2 in 0..len {
                            let a = self.eval(x1, x2, y1, y2);
                            let b = self.eval(x2, x1, y2, y1);
                            let c = self.eval(x2, x1, y1, y2);
                            worst = worst.max((a - b).norm()).max((a + c).norm());
                        }
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }
}

pub fn quasi_free_two_body(gamma: &OneBodyDensity) -> TwoBodyView {
    TwoBodyView::QuasiFree(gamma.clone())
}

pub fn two_body_from_wavefunction(psi: &FewBodyWavefunction) -> Result<TwoBodyView> {
    let n = psi.particle_count();
    if n > 3 {
        return Err(Error::Capability("dense two-body kernels need N <= 3".into()));
    }
    let len = psi.grid().len();
    let rank = len.pow(n as u32 - 2);
    let scale = ((n * (n - 1)) as f64 * psi.grid().cell_volume().powi(n as i32 - 2)).sqrt();
    let factors = psi.values().iter().map(|v| v * scale).collect();
    Ok(TwoBodyView::Dense(DenseTwoBody {
        grid: *psi.grid(),
        hbar: psi.hbar(),
        particles: n,
        factors,
        rank,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid1(n: usize, l: f64) -> SpatialGrid {
        SpatialGrid::new(1, n, l).unwrap()
    }

    fn random_orbitals(grid: &SpatialGrid, k: usize, seed: u64) -> Vec<Vec<C64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = (0..k)
            .map(|_| {
                (0..grid.len())
                    .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        orthonormalize(raw, grid).unwrap()
    }

    #[test]
    fn single_orbital_is_rank_one_projector() {
        let g = grid1(32, 4.0);
        let s = SlaterState::new(g, 0.1, random_orbitals(&g, 1, 3)).unwrap();
        let gamma = slater_density(&s).unwrap();
        assert!((gamma.trace() - 1.0).abs() < 1e-12);
        let occ = gamma.occupations();
        assert!((occ[31] - 1.0).abs() < 1e-10);
        assert!(occ[..31].iter().all(|v| v.abs() < 1e-10));
        gamma.validate().unwrap();
    }

    #[test]
    fn plane_waves_give_diagonal_fourier_kernel() {
        let g = grid1(32, 2.0);
        let s = SlaterState::build(OrbitalKind::LowestModes, g, 5, 0.1, 0).unwrap();
        let gamma = slater_density(&s).unwrap();
        assert!((gamma.trace() - 5.0).abs() < 1e-10);
        // translation invariant: γ(x;y) depends only on x - y
        for x in 0..32 {
            for y in 0..32 {
                let a = gamma.at(x, y);
                let b = gamma.at((x + 3) % 32, (y + 3) % 32);
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn random_slater_is_a_projector() {
        let g = grid1(48usize.next_power_of_two(), 3.0);
        let s = SlaterState::new(g, 0.2, random_orbitals(&g, 6, 11)).unwrap();
        let gamma = slater_density(&s).unwrap();
        assert!(gamma.projector_error() < 1e-8);
    }

    #[test]
    fn non_orthonormal_orbitals_rejected() {
        let g = grid1(16, 1.0);
        let mut orbs = random_orbitals(&g, 2, 5);
        orbs[1] = orbs[0].clone();
        assert!(matches!(SlaterState::new(g, 0.1, orbs), Err(Error::Validation(_))));
    }

    #[test]
    fn quasi_free_partial_trace_and_pauli() {
        let g = grid1(16, 4.0);
        let s = SlaterState::new(g, 0.2, random_orbitals(&g, 3, 21)).unwrap();
        let gamma = slater_density(&s).unwrap();
        let two = quasi_free_two_body(&gamma);
        let pt = two.partial_trace();
        let scale = gamma.kernel().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in pt.iter().zip(gamma.kernel()) {
            assert!((a - b * 2.0).norm() <= 1e-6 * scale);
        }
        for x in 0..16 {
            assert!(two.eval(x, x, x, x).norm() < 1e-14);
        }
        assert!(two.swap_error() < 1e-12);
        assert!((two.trace() - 6.0).abs() < 1e-10);
    }

    #[test]
    fn few_body_density_matches_wick() {
        for n in [2usize, 3] {
            let g = grid1(16, 4.0);
            let s = SlaterState::new(g, 0.2, random_orbitals(&g, n, 40 + n as u64)).unwrap();
            let psi = FewBodyWavefunction::from_slater(&s).unwrap();
            let gamma = psi.one_body_density().unwrap();
            let direct = slater_density(&s).unwrap();
            for (a, b) in gamma.kernel().iter().zip(direct.kernel()) {
                assert!((a - b).norm() < 1e-10);
            }
            let dense = two_body_from_wavefunction(&psi).unwrap();
            let wick = quasi_free_two_body(&direct);
            assert!(((dense.trace()) - (n * (n - 1)) as f64).abs() < 1e-10);
            let mut worst: f64 = 0.0;
            for x1 in 0..16 {
                for x2 in 0..16 {
                    for y1 in (0..16).step_by(3) {
                        for y2 in (0..16).step_by(5) {
                            worst = worst.max((dense.eval(x1, x2, y1, y2) - wick.eval(x1, x2, y1, y2)).norm());
                        }
                    }
                }
            }
            assert!(worst < 1e-8, "N={n}: {worst}");
        }
    }

    #[test]
    fn product_state_fails_antisymmetry() {
        let g = grid1(16, 4.0);
        let s = SlaterState::new(g, 0.2, random_orbitals(&g, 2, 9)).unwrap();
        let raw = FewBodyWavefunction::product_unchecked(&s).unwrap();
        assert!(matches!(FewBodyWavefunction::new(g, 0.2, 2, raw), Err(Error::Validation(_))));
    }

    #[test]
    fn four_particles_rejected_for_dense() {
        let g = grid1(8, 4.0);
        let s = SlaterState::new(g, 0.2, random_orbitals(&g, 4, 2)).unwrap();
        assert!(matches!(FewBodyWavefunction::from_slater(&s), Err(Error::Capability(_))));
    }

    #[test]
    fn kinetic_of_plane_wave_and_box_modes() {
        let g = grid1(64, 2.0 * PI);
        let hbar = 0.3;
        let s = SlaterState::build(OrbitalKind::LowestModes, g, 5, hbar, 0).unwrap();
        let gamma = slater_density(&s).unwrap();
        // modes 0, ±1, ±2 with k = mode (L = 2π)
        let expected: f64 = [0.0f64, 1.0, 1.0, 4.0, 4.0].iter().map(|k2| 0.5 * hbar * hbar * k2).sum();
        assert!((kinetic_expectation(&gamma) - expected).abs() < 1e-10);

        let single = SlaterState::new(g, hbar, vec![s.orbitals()[3].clone()]).unwrap();
        let k1 = kinetic_expectation(&slater_density(&single).unwrap());
        let p0 = hbar * 2.0;
        assert!((k1 - 0.5 * p0 * p0).abs() < 1e-10);
    }

    #[test]
    fn harmonic_orbitals_are_orthonormal_and_localized() {
        let g = grid1(256, 8.0);
        let s = SlaterState::build(OrbitalKind::Harmonic, g, 16, 1.0 / 16.0, 0).unwrap();
        let gamma = slater_density(&s).unwrap();
        gamma.validate().unwrap();
        // virial: kinetic = total/2 for the oscillator, total = ħ Σ (j + 1/2) = ħ N^2 / 2
        let hbar = 1.0 / 16.0;
        let expected = 0.5 * hbar * (16.0 * 16.0) / 2.0;
        assert!((kinetic_expectation(&gamma) - expected).abs() < 1e-8);
    }

    #[test]
    fn cutoff_number_matches_bound_and_double_sum() {
        let g = grid1(256, 8.0);
        let n = 16;
        let hbar = 1.0 / n as f64;
        let s = SlaterState::build(OrbitalKind::Harmonic, g, n, hbar, 0).unwrap();
        let gamma = slater_density(&s).unwrap();
        let rep = cutoff_number_expectation(&gamma, unit_ball_radius(1)).unwrap();
        assert!(rep.value <= rep.bound * (1.0 + 1e-10));
        assert!((rep.bound - hbar.powf(-0.5)).abs() < 1e-12);

        let small = cutoff_number_expectation(&gamma, 1e-6).unwrap();
        assert!(small.value < 1e-4);

        // Uniform diagonal: radius chosen so the ball holds exactly 2k+1 points.
        let dx = g.spacing();
        let k = 5;
        let radius = (k as f64 + 0.5) * dx / hbar.sqrt();
        let uniform = OneBodyDensity::from_kernel(
            g,
            hbar,
            n,
            (0..256 * 256)
                .map(|i| if i / 256 == i % 256 { C64::new(n as f64 / 8.0, 0.0) } else { ZERO })
                .collect(),
        )
        .unwrap();
        let rep = cutoff_number_expectation(&uniform, radius).unwrap();
        let r = hbar.sqrt() * radius;
        let mut direct = 0.0;
        for qi in 0..256 {
            for xi in 0..256 {
                let d = g.min_image(g.coordinate(xi) - g.coordinate(qi));
                if d.abs() <= r + 1e-12 {
                    direct += uniform.at(xi, xi).re * dx * dx;
                }
            }
        }
        assert!((rep.value - direct).abs() / direct < 1e-8);
    }

    #[test]
    fn trace_distance_of_orthogonal_projectors() {
        let g = grid1(16, 2.0);
        let orbs = random_orbitals(&g, 2, 77);
        let a = slater_density(&SlaterState::new(g, 0.1, vec![orbs[0].clone()]).unwrap()).unwrap();
        let b = slater_density(&SlaterState::new(g, 0.1, vec![orbs[1].clone()]).unwrap()).unwrap();
        assert!((a.trace_distance(&b).unwrap() - 2.0).abs() < 1e-10);
    }
}
