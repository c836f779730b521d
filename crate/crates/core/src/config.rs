//! Flat key-value experiment configuration (TOML).
//!
//! ```toml
//! dim = 1
//! n = 256
//! L = 8.0
//! N_list = [4, 8, 16]
//! epsilon = 0.04
//! hbar = "coupled"      # or a number
//! pipeline = ["init", "evolve", "transform", "residuals", "report"]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::stability_bound;
use crate::grid::{PhaseGrid, SpatialGrid};
use crate::residuals::{BumpTest, HbarRule, SweepConfig};
use crate::semiclassical::Envelope;
use crate::state::OrbitalKind;
use crate::{Error, Result};

/// Upper end of the admissible `ε` range (exclusive).
pub const EPSILON_MAX: f64 = 1.0 / 24.0;

pub const STAGES: [&str; 6] = ["init", "evolve", "transform", "residuals", "sweep", "report"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HbarSetting {
    Rule(HbarKeyword),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HbarKeyword {
    Coupled,
}

impl HbarSetting {
    pub fn rule(self) -> HbarRule {
        match self {
            HbarSetting::Rule(HbarKeyword::Coupled) => HbarRule::Coupled,
            HbarSetting::Value(h) => HbarRule::Manual(h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    /// State grid points per axis.
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
    /// Phase grid positions (must divide `n`).
    pub nq: usize,
    /// Phase grid momenta.
    pub m: usize,
    #[serde(rename = "P")]
    pub p_max: f64,
    #[serde(rename = "N_list")]
    pub particles: Vec<usize>,
    pub epsilon: f64,
    /// Reported next to fitted slopes; they do not change any computation.
    pub alpha1: f64,
    pub alpha2: f64,
    pub t_final: f64,
    pub dt: f64,
    pub snapshot_every: usize,
    pub envelope: Envelope,
    pub exchange: bool,
    pub hbar: HbarSetting,
    pub orbitals: OrbitalKind,
    pub seed: u64,
    /// Kernel width of the limit equation; absent means the bare kernel.
    pub vlasov_beta: Option<f64>,
    pub disk_edge: f64,
    pub phi_q_radius: f64,
    pub phi_p_radius: f64,
    pub pipeline: Vec<String>,
    /// Output directory, relative to the output root.
    pub output: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sweep = SweepConfig::default();
        Self {
            dim: 1,
            n: sweep.n,
            length: sweep.length,
            nq: sweep.phase_n,
            m: sweep.phase_m,
            p_max: sweep.p_max,
            particles: sweep.particles.clone(),
            epsilon: sweep.epsilon,
            alpha1: 0.9,
            alpha2: 0.75,
            t_final: sweep.t_final,
            dt: sweep.dt,
            snapshot_every: 0,
            envelope: sweep.envelope,
            exchange: sweep.exchange,
            hbar: HbarSetting::Rule(HbarKeyword::Coupled),
            orbitals: OrbitalKind::Harmonic,
            seed: 0,
            vlasov_beta: sweep.vlasov_beta,
            disk_edge: sweep.disk_edge,
            phi_q_radius: sweep.phi_q.radius,
            phi_p_radius: sweep.phi_p.radius,
            pipeline: ["init", "evolve", "transform", "residuals", "report"].map(String::from).to_vec(),
            output: "run".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("cannot parse configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn hbar_for(&self, particles: usize) -> f64 {
        self.hbar.rule().hbar(particles, self.dim)
    }

    /// Every violated invariant, in order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.epsilon > 0.0 && self.epsilon < EPSILON_MAX) {
            out.push(format!("epsilon = {} must lie in (0, 1/24)", self.epsilon));
        }
        if self.dim != 1 {
            out.push(format!("dim = {}: experiments are implemented for d = 1", self.dim));
        }
        for (name, v) in [("n", self.n), ("nq", self.nq), ("m", self.m)] {
            if v < 2 || !v.is_power_of_two() {
                out.push(format!("{name} = {v} must be a power of two"));
            }
        }
        if self.nq > self.n || (self.nq > 0 && self.n % self.nq != 0) {
            out.push(format!("nq = {} must divide n = {}", self.nq, self.n));
        }
        if !(self.length > 0.0) || !(self.p_max > 0.0) {
            out.push("L and P must be positive".into());
        }
        if self.particles.is_empty() || self.particles.contains(&0) {
            out.push("N_list must contain positive particle numbers".into());
        }
        if let HbarSetting::Value(h) = self.hbar {
            if !(h > 0.0) {
                out.push(format!("hbar = {h} must be positive"));
            }
        }
        if !(self.t_final >= 0.0) {
            out.push("t_final must be non-negative".into());
        }
        if !(self.dt > 0.0) {
            out.push(format!("dt = {} must be positive", self.dt));
        } else if let Ok(grid) = SpatialGrid::new(1, self.n.max(2), self.length.max(1e-12)) {
            for &np in self.particles.iter().filter(|&&np| np > 0) {
                let bound = stability_bound(&grid, self.hbar_for(np));
                if self.dt > bound {
                    out.push(format!("dt = {} exceeds the stability bound {bound:.6e} at N = {np}", self.dt));
                }
            }
            let dq = self.length / self.nq.max(1) as f64;
            if self.dt * self.p_max > dq {
                out.push(format!("dt·P = {} exceeds the phase-grid spacing {dq}", self.dt * self.p_max));
            }
        }
        if let Some(b) = self.vlasov_beta {
            if !(b >= 0.0) {
                out.push(format!("vlasov_beta = {b} must be non-negative"));
            }
        }
        let half = 0.5 * self.length;
        if !(self.phi_q_radius > 0.0 && self.phi_q_radius < half && self.phi_p_radius > 0.0 && self.phi_p_radius < self.p_max) {
            out.push("test-function radii must be positive and inside the phase grid".into());
        }
        for s in &self.pipeline {
            if !STAGES.contains(&s.as_str()) {
                out.push(format!("unknown pipeline stage '{s}'"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid configuration: {}", v.join("; "))))
        }
    }

    pub fn state_grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.dim, self.n, self.length)
    }

    pub fn phase_grid(&self) -> Result<PhaseGrid> {
        PhaseGrid::from_extents(self.dim, self.nq, self.length, self.m, self.p_max)
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            n: self.n,
            length: self.length,
            phase_n: self.nq,
            phase_m: self.m,
            p_max: self.p_max,
            particles: self.particles.clone(),
            epsilon: self.epsilon,
            t_final: self.t_final,
            dt: self.dt,
            envelope: self.envelope,
            exchange: self.exchange,
            hbar: self.hbar.rule(),
            vlasov_beta: self.vlasov_beta,
            disk_edge: self.disk_edge,
            phi_q: BumpTest::new(0.0, self.phi_q_radius),
            phi_p: BumpTest::new(0.0, self.phi_p_radius),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let c = ExperimentConfig::default();
        assert!(c.violations().is_empty(), "{:?}", c.violations());
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn flat_keys_parse() {
        let c = ExperimentConfig::from_toml("n = 128\nL = 6.0\nN_list = [4, 8]\nhbar = 0.1\nenvelope = \"gauss\"\n").unwrap();
        assert_eq!(c.n, 128);
        assert_eq!(c.particles, vec![4, 8]);
        assert_eq!(c.hbar, HbarSetting::Value(0.1));
        assert_eq!(c.envelope, Envelope::Gaussian);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn invariants_are_enforced() {
        let mut c = ExperimentConfig { epsilon: 1.0 / 24.0, ..Default::default() };
        assert!(c.validate().is_err());
        c.epsilon = 0.02;
        c.n = 200;
        assert!(c.violations().iter().any(|v| v.contains("power of two")));
        c.n = 256;
        c.dt = 0.1;
        assert!(c.violations().iter().any(|v| v.contains("stability")));
    }
}
