//! Quantum time evolution: exact few-body Schrödinger and Hartree-Fock.
//!
//! Both propagators use Strang splitting with the kinetic part applied
//! exactly in Fourier space. The Hamiltonian is
//! `Σ_j −(ħ²/2)Δ_j + (1/N) Σ_{i<j} V(x_i − x_j)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{SpatialGrid, Spectral};
use crate::potential::RegularizedKernel;
use crate::state::{kinetic_expectation, split_index, FewBodyWavefunction, OneBodyDensity};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

fn require_1d(grid: &SpatialGrid) -> Result<()> {
    if grid.dim() != 1 {
        return Err(Error::Capability("quantum propagators are implemented for d = 1".into()));
    }
    Ok(())
}

fn check_kernel(kernel: &RegularizedKernel, grid: &SpatialGrid) -> Result<()> {
    if !kernel.grid().same_as(grid) {
        return Err(Error::GridMismatch("kernel and state grids differ".into()));
    }
    Ok(())
}

/// Largest `dt` for which the fastest resolved mode turns by at most `π`
/// per step: `dt · ħ k_max² / 2 ≤ π`.
pub fn stability_bound(grid: &SpatialGrid, hbar: f64) -> f64 {
    let k_max = std::f64::consts::PI / grid.spacing();
    2.0 * std::f64::consts::PI / (hbar * k_max * k_max)
}

/// Multiplies the `N`-particle spectrum by `e^{-i ħ |k|² τ / 2}`.
fn kinetic_phase(spectral: &Spectral, data: &mut [C64], hbar: f64, tau: f64) {
    let grid = *spectral.grid();
    spectral.forward_in_place(data);
    data.par_iter_mut().enumerate().for_each(|(flat, v)| {
        let k = grid.wave_vector(flat);
        let k2: f64 = k.iter().map(|x| x * x).sum();
        *v *= C64::from_polar(1.0, -0.5 * hbar * k2 * tau);
    });
    spectral.inverse_in_place(data);
}

/// Pair interaction `(1/N) Σ_{i<j} V(x_i − x_j)` on the product grid.
fn pair_potential(kernel: &RegularizedKernel, len: usize, particles: usize) -> Vec<f64> {
    let inv_n = 1.0 / particles as f64;
    (0..len.pow(particles as u32))
        .into_par_iter()
        .map(|flat| {
            let xs = split_index(flat, len, particles);
            let mut s = 0.0;
            for i in 0..particles {
                for j in i + 1..particles {
                    s += kernel.value_at([xs[i] as i64 - xs[j] as i64, 0, 0]);
                }
            }
            s * inv_n
        })
        .collect()
}

/// Exact few-body propagator for `N ∈ {2, 3}` on a 1D grid.
#[derive(Debug, Clone)]
pub struct ExactPropagator {
    spectral: Spectral,
    potential: Vec<f64>,
    hbar: f64,
    dt: f64,
}

impl ExactPropagator {
    pub fn new(psi: &FewBodyWavefunction, kernel: &RegularizedKernel, dt: f64) -> Result<Self> {
        require_1d(psi.grid())?;
        check_kernel(kernel, psi.grid())?;
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::config("dt must be finite and non-zero"));
        }
        let g = psi.grid();
        let product = SpatialGrid::new(psi.particle_count(), g.n(), g.length())?;
        Ok(Self {
            spectral: Spectral::new(&product),
            potential: pair_potential(kernel, g.len(), psi.particle_count()),
            hbar: psi.hbar(),
            dt,
        })
    }

    pub fn step(&self, psi: &mut FewBodyWavefunction) {
        let data = psi.values_mut();
        kinetic_phase(&self.spectral, data, self.hbar, 0.5 * self.dt);
        let c = -self.dt / self.hbar;
        data.par_iter_mut().zip(&self.potential).for_each(|(v, &u)| *v *= C64::from_polar(1.0, c * u));
        kinetic_phase(&self.spectral, data, self.hbar, 0.5 * self.dt);
    }

    /// `⟨ψ, H ψ⟩`.
    pub fn energy(&self, psi: &FewBodyWavefunction) -> f64 {
        let dv = psi.grid().cell_volume().powi(psi.particle_count() as i32);
        let spectrum = self.spectral.fft_forward(psi.values());
        let grid = *self.spectral.grid();
        let kinetic: f64 = spectrum
            .par_iter()
            .enumerate()
            .map(|(flat, v)| {
                let k = grid.wave_vector(flat);
                0.5 * self.hbar * self.hbar * k.iter().map(|x| x * x).sum::<f64>() * v.norm_sqr()
            })
            .sum();
        let potential: f64 = psi.values().par_iter().zip(&self.potential).map(|(v, u)| v.norm_sqr() * u).sum();
        (kinetic + potential) * dv
    }
}

/// Advances `psi` by `steps` Strang steps; aborts if the norm drifts by more
/// than `1e-6`.
pub fn evolve_exact(
    psi: &FewBodyWavefunction,
    kernel: &RegularizedKernel,
    dt: f64,
    steps: usize,
) -> Result<FewBodyWavefunction> {
    let prop = ExactPropagator::new(psi, kernel, dt)?;
    let mut out = psi.clone();
    for step in 0..steps {
        prop.step(&mut out);
        let norm = out.norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Instability(format!("norm {norm} after step {}", step + 1)));
        }
    }
    Ok(out)
}

/// Energy of an exact few-body state.
pub fn exact_energy(psi: &FewBodyWavefunction, kernel: &RegularizedKernel) -> Result<f64> {
    Ok(ExactPropagator::new(psi, kernel, 1.0)?.energy(psi))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HFConfig {
    pub dt: f64,
    pub steps: usize,
    /// Snapshot cadence in steps (0: only the initial and final states).
    pub snapshot_every: usize,
    pub exchange: bool,
    /// Re-evaluate the mean field at the half step before the interaction update.
    pub midpoint: bool,
}

impl HFConfig {
    pub fn new(dt: f64, steps: usize) -> Self {
        Self { dt, steps, snapshot_every: 0, exchange: true, midpoint: true }
    }

    pub fn validate(&self, grid: &SpatialGrid, hbar: f64) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("dt must be positive"));
        }
        let bound = stability_bound(grid, hbar);
        if self.dt > bound {
            return Err(Error::config(format!("dt = {} exceeds the stability bound {bound}", self.dt)));
        }
        Ok(())
    }
}

/// Natural-orbital representation of a one-body density under Hartree-Fock.
#[derive(Debug, Clone)]
pub struct HartreeFockPropagator {
    grid: SpatialGrid,
    spectral: Spectral,
    hbar: f64,
    particles: usize,
    occupations: Vec<f64>,
    orbitals: Vec<Vec<C64>>,
    /// `V` in displacement order (includes the gauge constant).
    potential: Vec<f64>,
    kernel: RegularizedKernel,
    config: HFConfig,
    time: f64,
}

impl HartreeFockPropagator {
    pub fn new(gamma: &OneBodyDensity, kernel: &RegularizedKernel, config: HFConfig) -> Result<Self> {
        require_1d(gamma.grid())?;
        check_kernel(kernel, gamma.grid())?;
        config.validate(gamma.grid(), gamma.hbar())?;
        let (occupations, orbitals) = gamma.natural_orbitals(1e-12);
        Ok(Self {
            grid: *gamma.grid(),
            spectral: Spectral::new(gamma.grid()),
            hbar: gamma.hbar(),
            particles: gamma.particle_count(),
            occupations,
            orbitals,
            potential: kernel.real_space().to_vec(),
            kernel: kernel.clone(),
            config,
            time: 0.0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn density(&self) -> OneBodyDensity {
        OneBodyDensity::from_orbitals(self.grid, self.hbar, self.particles, &self.orbitals, &self.occupations)
            .expect("grid size was validated at construction")
    }

    fn rho(orbitals: &[Vec<C64>], occupations: &[f64], len: usize) -> Vec<f64> {
        let mut rho = vec![0.0; len];
        for (o, &l) in orbitals.iter().zip(occupations) {
            rho.iter_mut().zip(o).for_each(|(r, v)| *r += l * v.norm_sqr());
        }
        rho
    }

    /// Dense mean-field operator `h = U − X` as a matrix acting with weight `dx`.
    fn mean_field(&self, orbitals: &[Vec<C64>]) -> (Vec<f64>, Option<Vec<C64>>) {
        let len = self.grid.len();
        let inv_n = 1.0 / self.particles as f64;
        let rho = Self::rho(orbitals, &self.occupations, len);
        let u: Vec<f64> = self.kernel.convolve(&rho).into_iter().map(|v| v * inv_n).collect();
        if !self.config.exchange || self.kernel.is_zero() {
            return (u, None);
        }
        let mut x = vec![ZERO; len * len];
        x.par_chunks_mut(len).enumerate().for_each(|(a, row)| {
            for (b, slot) in row.iter_mut().enumerate() {
                let mut g = ZERO;
                for (o, &l) in orbitals.iter().zip(&self.occupations) {
                    g += o[a] * o[b].conj() * l;
                }
                let v = self.potential[self.grid.wrap_index(a as i64 - b as i64)];
                *slot = g * (v * inv_n);
            }
        });
        (u, Some(x))
    }

    fn apply_h(&self, h: &(Vec<f64>, Option<Vec<C64>>), f: &[C64]) -> Vec<C64> {
        let len = self.grid.len();
        let dx = self.grid.spacing();
        let mut out: Vec<C64> = f.iter().zip(&h.0).map(|(v, u)| v * u).collect();
        if let Some(x) = &h.1 {
            out.par_iter_mut().enumerate().for_each(|(a, o)| {
                let row = &x[a * len..(a + 1) * len];
                *o -= row.iter().zip(f).map(|(k, v)| k * v).sum::<C64>() * dx;
            });
        }
        out
    }

    /// `exp(−i h τ / ħ) f` by Taylor series.
    fn exp_apply(&self, h: &(Vec<f64>, Option<Vec<C64>>), f: &[C64], tau: f64) -> Vec<C64> {
        let c = C64::new(0.0, -tau / self.hbar);
        let mut out = f.to_vec();
        let mut term = f.to_vec();
        let base: f64 = f.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
        for k in 1..200 {
            let hv = self.apply_h(h, &term);
            let scale = c / k as f64;
            term = hv.into_iter().map(|v| v * scale).collect();
            out.iter_mut().zip(&term).for_each(|(o, t)| *o += t);
            let tn: f64 = term.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if tn < 1e-16 * base {
                break;
            }
        }
        out
    }

    fn kinetic_half(&self, orbitals: &mut [Vec<C64>]) {
        let tau = 0.5 * self.config.dt;
        for o in orbitals.iter_mut() {
            kinetic_phase(&self.spectral, o, self.hbar, tau);
        }
    }

    pub fn step(&mut self) {
        let mut orbitals = std::mem::take(&mut self.orbitals);
        self.kinetic_half(&mut orbitals);
        if !self.kernel.is_zero() {
            let dt = self.config.dt;
            let h0 = self.mean_field(&orbitals);
            let h = if self.config.midpoint {
                let half: Vec<Vec<C64>> = orbitals.par_iter().map(|o| self.exp_apply(&h0, o, 0.5 * dt)).collect();
                self.mean_field(&half)
            } else {
                h0
            };
            orbitals = orbitals.par_iter().map(|o| self.exp_apply(&h, o, dt)).collect();
        }
        self.kinetic_half(&mut orbitals);
        self.orbitals = orbitals;
        self.time += self.config.dt;
    }

    pub fn trace(&self) -> f64 {
        let dx = self.grid.spacing();
        self.orbitals
            .iter()
            .zip(&self.occupations)
            .map(|(o, l)| l * o.iter().map(|v| v.norm_sqr()).sum::<f64>() * dx)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub gamma: OneBodyDensity,
}

/// Runs Hartree-Fock and returns snapshots (always including the initial and
/// final states). Aborts if the trace drifts by more than `1e-6`.
pub fn evolve_hartree_fock(
    gamma: &OneBodyDensity,
    kernel: &RegularizedKernel,
    config: HFConfig,
) -> Result<Vec<Snapshot>> {
    let mut prop = HartreeFockPropagator::new(gamma, kernel, config)?;
    let initial_trace = prop.trace();
    let mut out = vec![Snapshot { step: 0, time: 0.0, gamma: gamma.clone() }];
    for step in 1..=config.steps {
        prop.step();
        let tr = prop.trace();
        if (tr - initial_trace).abs() > 1e-6 {
            return Err(Error::Instability(format!("trace {tr} (initially {initial_trace}) at step {step}")));
        }
        let cadence = config.snapshot_every > 0 && step % config.snapshot_every == 0;
        if cadence || step == config.steps {
            out.push(Snapshot { step, time: prop.time(), gamma: prop.density() });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    /// `(1/2N) ∬ V ρ ρ`.
    pub direct: f64,
    /// `(1/2N) ∬ V |γ|²`, entering with a minus sign.
    pub exchange: f64,
    pub total: f64,
}

/// Quasi-free energy `⟨K⟩ + (1/2N)∬ V(x−y)[ρ(x)ρ(y) − |γ(x;y)|²]`.
pub fn total_energy(gamma: &OneBodyDensity, kernel: &RegularizedKernel) -> Result<EnergyBreakdown> {
    check_kernel(kernel, gamma.grid())?;
    let kinetic = kinetic_expectation(gamma);
    if kernel.is_zero() {
        return Ok(EnergyBreakdown { kinetic, direct: 0.0, exchange: 0.0, total: kinetic });
    }
    let grid = gamma.grid();
    let len = grid.len();
    let dv = grid.cell_volume();
    let factor = 0.5 / gamma.particle_count() as f64;
    let rho = gamma.diagonal();
    let u = kernel.convolve(&rho);
    let direct = factor * rho.iter().zip(&u).map(|(r, v)| r * v).sum::<f64>() * dv;
    let exchange = factor
        * (0..len)
            .into_par_iter()
            .map(|x| {
                let ix = grid.axis_indices(x);
                (0..len)
                    .map(|y| {
                        let iy = grid.axis_indices(y);
                        let mut off = [0i64; 3];
                        for a in 0..grid.dim() {
                            off[a] = ix[a] as i64 - iy[a] as i64;
                        }
                        kernel.value_at(off) * gamma.at(x, y).norm_sqr()
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
        * dv
        * dv;
    Ok(EnergyBreakdown { kinetic, direct, exchange, total: kinetic + direct - exchange })
}
