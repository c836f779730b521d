//! Vlasov-Poisson in one dimension by spectral Strang splitting.
//!
//! `∂_t m + p ∂_q m = (V' ∗ ϱ) ∂_p m`, `ϱ(q) = ∫ m dp`. Free flight shifts
//! each momentum row in `q`; the kick shifts each position column in `p`.
//! Both shifts are Fourier phase factors, so mass is conserved exactly and
//! the scheme is time-reversible.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{PhaseGrid, Spectral};
use crate::potential::RegularizedKernel;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VlasovState {
    pub grid: PhaseGrid,
    pub time: f64,
    /// Flattened position-major, see [`PhaseGrid::index`].
    pub values: Vec<f64>,
}

impl VlasovState {
    pub fn new(grid: PhaseGrid, values: Vec<f64>) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::Capability("the Vlasov solver is implemented for d = 1".into()));
        }
        if values.len() != grid.len() {
            return Err(Error::GridMismatch("field size does not match the phase grid".into()));
        }
        Ok(Self { grid, time: 0.0, values })
    }

    /// Samples `f(q, p)` on the grid.
    pub fn from_fn(grid: PhaseGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let qs = grid.position.coordinates();
        let ps = grid.momentum.coordinates();
        let values = qs.iter().flat_map(|&q| ps.iter().map(move |&p| (q, p))).map(|(q, p)| f(q, p)).collect();
        Self::new(grid, values)
    }

    pub fn density(&self) -> Vec<f64> {
        let m = self.grid.momentum.len();
        let dp = self.grid.momentum.cell_volume();
        self.values.chunks(m).map(|row| row.iter().sum::<f64>() * dp).collect()
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }
}

/// Two-stream datum `(1 + a cos(2πq/L)) · ½[G(p − v) + G(p + v)]`, `G` a
/// unit Gaussian of width `σ`, normalized to unit mass.
pub fn two_stream(grid: PhaseGrid, amplitude: f64, drift: f64, width: f64) -> Result<VlasovState> {
    let l = grid.position.length();
    let g = |p: f64| (-(p * p) / (2.0 * width * width)).exp() / (width * (2.0 * std::f64::consts::PI).sqrt());
    let mut st = VlasovState::from_fn(grid, |q, p| {
        (1.0 + amplitude * (2.0 * std::f64::consts::PI * q / l).cos()) * 0.5 * (g(p - drift) + g(p + drift)) / l
    })?;
    let mass = st.mass();
    st.values.iter_mut().for_each(|v| *v /= mass);
    Ok(st)
}

/// `(2π)^{-1} 1{q² + p² ≤ 2 E}` with a `tanh` edge of width `edge`: the
/// semiclassical limit of the harmonic-oscillator Slater state with
/// `Nħ = E`.
pub fn disk_limit(grid: PhaseGrid, energy: f64, edge: f64) -> Result<VlasovState> {
    let r0 = (2.0 * energy).sqrt();
    VlasovState::from_fn(grid, |q, p| {
        let r = (q * q + p * p).sqrt();
        0.5 * (1.0 - ((r - r0) / edge).tanh()) / (2.0 * std::f64::consts::PI)
    })
}

/// Kernel and spectral plans for repeated steps.
#[derive(Debug, Clone)]
pub struct VlasovSolver {
    kernel: RegularizedKernel,
    q_spectral: Spectral,
    p_spectral: Spectral,
}

impl VlasovSolver {
    pub fn new(grid: &PhaseGrid, kernel: &RegularizedKernel) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::Capability("the Vlasov solver is implemented for d = 1".into()));
        }
        if !kernel.grid().same_as(&grid.position) {
            return Err(Error::GridMismatch("kernel grid differs from the position grid".into()));
        }
        Ok(Self {
            kernel: kernel.clone(),
            q_spectral: Spectral::new(&grid.position),
            p_spectral: Spectral::new(&grid.momentum),
        })
    }

    pub fn force(&self, state: &VlasovState) -> Vec<f64> {
        self.kernel.convolve_force(&state.density()).swap_remove(0)
    }

    fn transport(&self, state: &mut VlasovState, tau: f64) {
        let (n, m) = (state.grid.position.n(), state.grid.momentum.n());
        let ps = state.grid.momentum.coordinates();
        let mut columns: Vec<Vec<f64>> = (0..m).map(|ip| (0..n).map(|iq| state.values[iq * m + ip]).collect()).collect();
        columns.par_iter_mut().zip(&ps).for_each(|(col, &p)| {
            *col = self.q_spectral.shift(col, [-p * tau, 0.0, 0.0]);
        });
        for (ip, col) in columns.iter().enumerate() {
            for (iq, v) in col.iter().enumerate() {
                state.values[iq * m + ip] = *v;
            }
        }
    }

    fn kick(&self, state: &mut VlasovState, force: &[f64], tau: f64) {
        let m = state.grid.momentum.n();
        state.values.par_chunks_mut(m).zip(force).for_each(|(row, &f)| {
            let shifted = self.p_spectral.shift(row, [f * tau, 0.0, 0.0]);
            row.copy_from_slice(&shifted);
        });
    }

    /// One Strang step. `dt` may be negative (backward step).
    pub fn step(&self, state: &mut VlasovState, dt: f64) -> Result<()> {
        let dq = state.grid.position.spacing();
        let dp = state.grid.momentum.spacing();
        let p_max = state.grid.p_max();
        if dt.abs() * p_max > dq {
            return Err(Error::config(format!(
                "CFL violated: |dt|·P = {} exceeds dq = {dq}",
                dt.abs() * p_max
            )));
        }
        self.transport(state, 0.5 * dt);
        let force = self.force(state);
        let f_max = force.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if dt.abs() * f_max > dp {
            return Err(Error::config(format!(
                "CFL violated: |dt|·max|force| = {} exceeds dp = {dp}",
                dt.abs() * f_max
            )));
        }
        self.kick(state, &force, dt);
        self.transport(state, 0.5 * dt);
        state.time += dt;
        Ok(())
    }

    pub fn moments(&self, state: &VlasovState) -> Moments {
        let qs = state.grid.position.coordinates();
        let ps = state.grid.momentum.coordinates();
        let m = ps.len();
        let w = state.grid.cell_volume();
        let mut out = Moments::default();
        for (iq, &q) in qs.iter().enumerate() {
            for (ip, &p) in ps.iter().enumerate() {
                let v = state.values[iq * m + ip];
                out.mass += v * w;
                out.first_q += q * v * w;
                out.abs_q += q.abs() * v * w;
                out.second_p += p * p * v * w;
            }
        }
        let rho = state.density();
        let u = self.kernel.convolve(&rho);
        let dq = state.grid.position.spacing();
        let potential = 0.5 * rho.iter().zip(&u).map(|(r, v)| r * v).sum::<f64>() * dq;
        out.energy = 0.5 * out.second_p + potential;
        out
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Moments {
    pub mass: f64,
    /// `∬ q m`.
    pub first_q: f64,
    /// `∬ |q| m`.
    pub abs_q: f64,
    /// `∬ p² m`.
    pub second_p: f64,
    /// `∬ p²/2 m + ½ ∫ ϱ (V ∗ ϱ)`.
    pub energy: f64,
}

/// Convenience wrapper: one step with a fresh solver.
pub fn vlasov_step(state: &VlasovState, kernel: &RegularizedKernel, dt: f64) -> Result<VlasovState> {
    let solver = VlasovSolver::new(&state.grid, kernel)?;
    let mut out = state.clone();
    solver.step(&mut out, dt)?;
    Ok(out)
}

pub fn moments(state: &VlasovState, kernel: &RegularizedKernel) -> Result<Moments> {
    Ok(VlasovSolver::new(&state.grid, kernel)?.moments(state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::KernelMode;

    fn grid() -> PhaseGrid {
        PhaseGrid::from_extents(1, 64, 2.0 * std::f64::consts::PI, 64, 4.0).unwrap()
    }

    #[test]
    fn free_transport_is_exact() {
        let g = grid();
        let m0 = |q: f64, p: f64| (1.0 + 0.3 * q.cos() + 0.1 * (2.0 * q).sin()) * (-p * p / 0.5).exp();
        let mut st = VlasovState::from_fn(g, m0).unwrap();
        let solver = VlasovSolver::new(&g, &RegularizedKernel::zero(&g.position)).unwrap();
        let dt = 0.01;
        for _ in 0..50 {
            solver.step(&mut st, dt).unwrap();
        }
        let exact = VlasovState::from_fn(g, |q, p| m0(q - 0.5 * p, p)).unwrap();
        let worst = st.values.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = grid();
        let st = two_stream(g, 0.1, 1.0, 0.3).unwrap();
        let kernel = RegularizedKernel::bare(&g.position, KernelMode::Green1d).unwrap();
        assert!(matches!(vlasov_step(&st, &kernel, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn symmetric_datum_has_zero_first_moment() {
        let g = grid();
        let st = disk_limit(g, 1.0, 0.1).unwrap();
        let mo = moments(&st, &RegularizedKernel::zero(&g.position)).unwrap();
        assert!(mo.first_q.abs() < 1e-10);
        assert!((mo.mass - 1.0).abs() < 1e-2);
    }
}
