//! Orchestration: the staged pipeline behind `run`, and the invariant suite
//! behind `check`.
//!
//! A run lives in `<root>/<output>/<hash>`, where `hash` is the SHA-256 of
//! the canonical configuration. Stages whose recorded outputs are still on
//! disk with matching checksums are skipped, so reruns are free and leave the
//! manifest untouched.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dynamics::{evolve_hartree_fock, total_energy, HFConfig};
use crate::grid::{PhaseGrid, SpatialGrid, Spectral};
use crate::io;
use crate::potential::{beta_for, KernelMode, RegularizedKernel};
use crate::residuals::{pairing, residual_fields, scaling_sweep, transport_identity_check, BumpTest, Slot, CHORD_POINTS};
use crate::semiclassical::{husimi_from_wigner, husimi_k1, husimi_k2, wigner_k1, CoherentFrame, Envelope};
use crate::state::{orthonormalize, quasi_free_two_body, slater_density, OneBodyDensity, OrbitalKind, SlaterState, TwoBodyView};
use crate::vlasov::{two_stream, VlasovSolver};
use crate::{Error, Result, C64};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub outputs: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub versions: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn complete(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Completed)
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub directory: PathBuf,
    pub manifest: RunManifest,
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    io::sha256_hex(config.to_toml().as_bytes())
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("phasespace-core".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("field-format".to_string(), io::FORMAT_VERSION.to_string()),
    ])
}

fn index_file(dir: &Path, rel: &str) -> Result<FileEntry> {
    let path = dir.join(rel);
    let bytes = fs::metadata(&path)?.len();
    Ok(FileEntry { path: rel.to_string(), sha256: io::file_sha256(&path)?, bytes })
}

fn stage_intact(dir: &Path, record: &StageRecord, files: &[FileEntry]) -> bool {
    record.status == StageStatus::Completed
        && record.outputs.iter().all(|rel| {
            files.iter().find(|f| &f.path == rel).is_some_and(|f| {
                io::file_sha256(&dir.join(rel)).map(|h| h == f.sha256).unwrap_or(false)
            })
        })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

struct Stages<'a> {
    cfg: &'a ExperimentConfig,
    dir: &'a Path,
}

impl Stages<'_> {
    fn kernel(&self, particles: usize, grid: &SpatialGrid) -> Result<RegularizedKernel> {
        RegularizedKernel::build(beta_for(particles, self.cfg.epsilon), grid, KernelMode::Green1d)
    }

    fn state_at(&self, particles: usize, tag: &str) -> Result<OneBodyDensity> {
        Ok(io::load_density(&self.dir.join(format!("state_N{particles}_{tag}.bin")))?.0)
    }

    fn execute(&self, stage: &str) -> Result<Vec<String>> {
        let cfg = self.cfg;
        let grid = cfg.state_grid()?;
        let phase = cfg.phase_grid()?;
        let mut out = Vec::new();
        match stage {
            "init" => {
                for &np in &cfg.particles {
                    let st = SlaterState::build(cfg.orbitals, grid, np, cfg.hbar_for(np), cfg.seed)?;
                    let name = format!("state_N{np}_t0.bin");
                    io::save_density(&self.dir.join(&name), &slater_density(&st)?, 0.0)?;
                    out.push(name);
                }
            }
            "evolve" => {
                for &np in &cfg.particles {
                    let gamma = self.state_at(np, "t0")?;
                    let kernel = self.kernel(np, &grid)?;
                    let steps = (cfg.t_final / cfg.dt).round() as usize;
                    let mut hf = HFConfig::new(cfg.dt, steps);
                    hf.exchange = cfg.exchange;
                    hf.snapshot_every = cfg.snapshot_every;
                    let e0 = total_energy(&gamma, &kernel)?.total;
                    let snaps = evolve_hartree_fock(&gamma, &kernel, hf)?;
                    for s in &snaps[1..snaps.len() - 1] {
                        let name = format!("state_N{np}_s{:06}.bin", s.step);
                        io::save_density(&self.dir.join(&name), &s.gamma, s.time)?;
                        out.push(name);
                    }
                    let last = snaps.last().expect("final snapshot");
                    let name = format!("state_N{np}_final.bin");
                    io::save_density(&self.dir.join(&name), &last.gamma, last.time)?;
                    out.push(name);
                    let e1 = total_energy(&last.gamma, &kernel)?.total;
                    let name = format!("evolve_N{np}.json");
                    write_json(
                        &self.dir.join(&name),
                        &serde_json::json!({ "N": np, "steps": steps, "energy_initial": e0, "energy_final": e1,
                            "trace_final": last.gamma.trace() }),
                    )?;
                    out.push(name);
                }
            }
            "transform" => {
                for &np in &cfg.particles {
                    let gamma = self.state_at(np, "final")?;
                    let frame = CoherentFrame::new(cfg.envelope, gamma.hbar(), grid)?;
                    let name = format!("husimi_N{np}.bin");
                    io::save_husimi(&self.dir.join(&name), &husimi_k1(&gamma, &frame, &phase)?)?;
                    out.push(name);
                }
            }
            "residuals" => {
                let sweep = cfg.sweep();
                for &np in &cfg.particles {
                    let (gamma, time) = io::load_density(&self.dir.join(format!("state_N{np}_final.bin")))?;
                    let frame = CoherentFrame::new(cfg.envelope, gamma.hbar(), grid)?;
                    let kernel = self.kernel(np, &grid)?;
                    let r = residual_fields(&gamma, &quasi_free_two_body(&gamma), &frame, &kernel, &phase, CHORD_POINTS, time)?;
                    let stacked: Vec<f64> = [&r.r_tilde[..], &r.dq_r_tilde, &r.r1, &r.dp_r1, &r.r2, &r.dp_r2].concat();
                    let name = format!("residuals_N{np}.bin");
                    io::save_phase_field(
                        &self.dir.join(&name),
                        "residuals",
                        &phase,
                        &stacked,
                        serde_json::json!({ "fields": ["r_tilde", "dq_r_tilde", "r1", "dp_r1", "r2", "dp_r2"],
                            "hbar": r.hbar, "N": np, "beta": r.beta, "time": time }),
                    )?;
                    out.push(name);
                    let p = |f: &[f64], slot| pairing(f, &phase, &sweep.phi_q, &sweep.phi_p, slot).map(|p| p.value);
                    let name = format!("residuals_N{np}.json");
                    write_json(
                        &self.dir.join(&name),
                        &serde_json::json!({ "N": np, "hbar": r.hbar, "beta": r.beta, "time": time,
                            "pairing_r_tilde": p(&r.r_tilde, Slot::GradQ)?,
                            "pairing_r1": p(&r.r1, Slot::GradP)?,
                            "pairing_r2": p(&r.r2, Slot::GradP)? }),
                    )?;
                    out.push(name);
                }
            }
            "sweep" => {
                let result = scaling_sweep(&cfg.sweep());
                fs::write(self.dir.join("sweep.csv"), result.to_csv())?;
                write_json(
                    &self.dir.join("sweep.json"),
                    &serde_json::json!({ "rows": result.rows, "slope_r_tilde": result.slope_r_tilde,
                        "slope_r1": result.slope_r1, "slope_r2": result.slope_r2, "slope_vlasov": result.slope_vlasov,
                        "alpha1": cfg.alpha1, "alpha2": cfg.alpha2 }),
                )?;
                out.extend(["sweep.csv".to_string(), "sweep.json".to_string()]);
                if let Some(row) = result.rows.iter().find(|r| r.error.is_some()) {
                    return Err(Error::Instability(format!(
                        "sweep row N = {} failed: {}",
                        row.particles,
                        row.error.as_deref().unwrap_or_default()
                    )));
                }
            }
            "report" => {
                let mut entries = Vec::new();
                for &np in &cfg.particles {
                    let mut entry = serde_json::json!({ "N": np });
                    for prefix in ["evolve", "residuals"] {
                        let path = self.dir.join(format!("{prefix}_N{np}.json"));
                        if path.exists() {
                            entry[prefix] = serde_json::from_str(&fs::read_to_string(path)?)?;
                        }
                    }
                    let husimi = self.dir.join(format!("husimi_N{np}.bin"));
                    if husimi.exists() {
                        let m = io::load_husimi(&husimi)?;
                        entry["husimi_mass_ratio"] = (m.mass() / (2.0 * PI * m.hbar * np as f64)).into();
                        entry["husimi_min"] = m.min().into();
                        entry["husimi_max"] = m.max().into();
                    }
                    entries.push(entry);
                }
                write_json(&self.dir.join("report.json"), &entries)?;
                out.push("report.json".into());
            }
            other => return Err(Error::config(format!("unknown stage '{other}'"))),
        }
        Ok(out)
    }
}

/// Executes the configured pipeline under `root`.
pub fn run(config: &ExperimentConfig, root: &Path) -> Result<RunReport> {
    config.validate()?;
    let hash = config_hash(config);
    let dir = root.join(&config.output).join(&hash[..16]);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), config.to_toml())?;
    let manifest_path = dir.join(MANIFEST);
    let previous: Option<RunManifest> = fs::read_to_string(&manifest_path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .filter(|m: &RunManifest| m.config_hash == hash);

    let mut manifest = RunManifest { config_hash: hash, versions: versions(), stages: Vec::new(), files: Vec::new() };
    let mut report = RunReport { directory: dir.clone(), manifest: manifest.clone(), executed: vec![], skipped: vec![] };
    let stages = Stages { cfg: config, dir: &dir };
    for name in &config.pipeline {
        if let Some(prev) = &previous {
            if let Some(rec) = prev.stages.iter().find(|s| &s.name == name) {
                if stage_intact(&dir, rec, &prev.files) {
                    manifest.stages.push(rec.clone());
                    manifest.files.extend(prev.files.iter().filter(|f| rec.outputs.contains(&f.path)).cloned());
                    report.skipped.push(name.clone());
                    continue;
                }
            }
        }
        report.executed.push(name.clone());
        let start = Instant::now();
        let outcome = stages.execute(name);
        let seconds = start.elapsed().as_secs_f64();
        match outcome {
            Ok(outputs) => {
                for rel in &outputs {
                    manifest.files.push(index_file(&dir, rel)?);
                }
                manifest.stages.push(StageRecord { name: name.clone(), status: StageStatus::Completed, seconds, outputs, error: None });
            }
            Err(e) => {
                manifest.stages.push(StageRecord {
                    name: name.clone(),
                    status: StageStatus::Failed,
                    seconds,
                    outputs: vec![],
                    error: Some(e.to_string()),
                });
                break;
            }
        }
    }
    if !report.executed.is_empty() || previous.is_none() {
        write_json(&manifest_path, &manifest)?;
    }
    report.manifest = manifest;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckEntry {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub suite: String,
    pub entries: Vec<CheckEntry>,
    pub pass: bool,
}

pub const SUITES: [&str; 9] = ["grid", "potential", "state", "semiclassical", "dynamics", "vlasov", "residuals", "io", "all"];

struct Collector {
    suite: &'static str,
    entries: Vec<CheckEntry>,
}

impl Collector {
    /// Records `value <= bound` (NaN fails).
    fn le(&mut self, name: &str, value: f64, bound: f64) {
        self.entries.push(CheckEntry {
            suite: self.suite.into(),
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
            detail: None,
        });
    }

    fn failed(&mut self, name: &str, err: impl std::fmt::Display) {
        self.entries.push(CheckEntry {
            suite: self.suite.into(),
            name: name.into(),
            value: f64::NAN,
            bound: f64::NAN,
            pass: false,
            detail: Some(err.to_string()),
        });
    }

    fn guard(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<()>) {
        if let Err(e) = f(self) {
            self.failed(name, e);
        }
    }
}

fn reference_state() -> Result<OneBodyDensity> {
    let grid = SpatialGrid::new(1, 128, 8.0)?;
    slater_density(&SlaterState::build(OrbitalKind::Harmonic, grid, 4, 0.25, 0)?)
}

fn check_grid(c: &mut Collector) {
    c.guard("fft_unitarity", |c| {
        let grid = SpatialGrid::new(2, 16, 3.0)?;
        let sp = Spectral::new(&grid);
        let f: Vec<C64> = (0..grid.len()).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let back = sp.fft_inverse(&sp.fft_forward(&f));
        c.le("fft_unitarity", back.iter().zip(&f).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max), 1e-12);
        Ok(())
    });
}

fn check_potential(c: &mut Collector) {
    c.guard("kernel_beta_scaling", |c| {
        let grid = SpatialGrid::new(1, 512, 8.0)?;
        let betas = [0.1, 0.2, 0.4];
        let sups: Vec<f64> = betas
            .iter()
            .map(|&b| RegularizedKernel::build(b, &grid, KernelMode::Green1d).map(|k| k.grad_sup_norm()))
            .collect::<Result<_>>()?;
        // in one dimension the force stays bounded by 1/2 and sharpens as β shrinks
        c.le("kernel_force_bound", sups.iter().copied().fold(0.0, f64::max), 0.5);
        c.le("kernel_force_monotone", if sups.windows(2).all(|w| w[0] >= w[1]) { 0.0 } else { 1.0 }, 0.0);
        let k = RegularizedKernel::build(0.5, &grid, KernelMode::Green1d)?;
        let min = k.real_space().iter().copied().fold(f64::INFINITY, f64::min);
        c.le("kernel_nonnegative", -min, 1e-12);
        Ok(())
    });
}

fn check_state(c: &mut Collector, gamma: &OneBodyDensity) {
    c.le("hermiticity", gamma.hermiticity_error(), 1e-10);
    c.le("trace", (gamma.trace() - gamma.particle_count() as f64).abs(), 1e-8);
    c.le("projector", gamma.projector_error(), 1e-8);
    c.guard("validate", |c| {
        c.le("validate", if gamma.validate().is_ok() { 0.0 } else { 1.0 }, 0.0);
        Ok(())
    });
}

fn check_semiclassical(c: &mut Collector, gamma: &OneBodyDensity) {
    c.guard("husimi_bounds", |c| {
        let frame = CoherentFrame::new(Envelope::Bump, gamma.hbar(), *gamma.grid())?;
        let l = gamma.grid().length();
        let p_max = (PI * gamma.hbar() / gamma.grid().spacing()).min(6.0);
        let phase = PhaseGrid::from_extents(1, 32, l, 32, p_max)?;
        let m = husimi_k1(gamma, &frame, &phase)?;
        c.le("husimi_bounds", (-m.min()).max(m.max() - 1.0), 1e-8);
        let target = 2.0 * PI * gamma.hbar() * gamma.trace();
        c.le("mass_identity", (m.mass() / target - 1.0).abs(), 5e-3);
        Ok(())
    });
    c.guard("wigner_convolution", |c| {
        let hbar: f64 = 1.0 / 16.0;
        let grid = SpatialGrid::new(1, 64, 14.0 * hbar.sqrt())?;
        let raw = [(-0.3, 0.2), (0.4, -0.3)]
            .iter()
            .map(|&(q, p): &(f64, f64)| {
                grid.coordinates().iter().map(|&x| C64::from_polar((-(x - q).powi(2) / (2.0 * hbar)).exp(), p * x / hbar)).collect()
            })
            .collect();
        let g = slater_density(&SlaterState::new(grid, hbar, orthonormalize(raw, &grid)?)?)?;
        let w = wigner_k1(&g)?;
        let frame = CoherentFrame::new(Envelope::Gaussian, hbar, grid)?;
        let direct = husimi_k1(&g, &frame, &w.grid)?;
        let smoothed = husimi_from_wigner(&w)?;
        let err = smoothed.values.iter().zip(&direct.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        c.le("wigner_convolution", err, 1e-6);
        Ok(())
    });
    c.guard("k2_swap_symmetry", |c| {
        let grid = SpatialGrid::new(1, 64, 8.0)?;
        let g = slater_density(&SlaterState::build(OrbitalKind::Harmonic, grid, 4, 0.25, 0)?)?;
        let frame = CoherentFrame::new(Envelope::Bump, 0.25, grid)?;
        let phase = PhaseGrid::from_extents(1, 8, 8.0, 8, 3.0)?;
        c.le("k2_swap_symmetry", husimi_k2(&quasi_free_two_body(&g), &frame, &phase)?.swap_asymmetry(), 1e-8);
        Ok(())
    });
}

fn check_dynamics(c: &mut Collector) {
    c.guard("hf_conservation", |c| {
        let grid = SpatialGrid::new(1, 64, 8.0)?;
        let g = slater_density(&SlaterState::build(OrbitalKind::Harmonic, grid, 4, 0.25, 0)?)?;
        let kernel = RegularizedKernel::build(0.8, &grid, KernelMode::Green1d)?;
        let e0 = total_energy(&g, &kernel)?.total;
        let snaps = evolve_hartree_fock(&g, &kernel, HFConfig::new(0.005, 40))?;
        let last = &snaps.last().expect("final").gamma;
        c.le("hf_trace", (last.trace() - 4.0).abs(), 1e-8);
        c.le("hf_energy_drift", ((total_energy(last, &kernel)?.total - e0) / e0).abs(), 1e-6);
        Ok(())
    });
}

fn check_vlasov(c: &mut Collector) {
    c.guard("vlasov", |c| {
        let phase = PhaseGrid::from_extents(1, 32, 4.0 * PI, 64, 5.0)?;
        let kernel = RegularizedKernel::bare(&phase.position, KernelMode::Green1d)?;
        let solver = VlasovSolver::new(&phase, &kernel)?;
        let st0 = two_stream(phase, 0.05, 1.5, 0.4)?;
        let mut st = st0.clone();
        for _ in 0..10 {
            solver.step(&mut st, 0.05)?;
        }
        c.le("vlasov_mass", (st.mass() - st0.mass()).abs() / 10.0, 1e-12);
        for _ in 0..10 {
            solver.step(&mut st, -0.05)?;
        }
        let back = st.values.iter().zip(&st0.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        c.le("vlasov_reversibility", back, 1e-8);
        Ok(())
    });
}

fn check_residuals(c: &mut Collector) {
    c.guard("residuals", |c| {
        let grid = SpatialGrid::new(1, 64, 8.0)?;
        let g = slater_density(&SlaterState::build(OrbitalKind::Harmonic, grid, 4, 0.25, 0)?)?;
        let frame = CoherentFrame::new(Envelope::Bump, 0.25, grid)?;
        let phase = PhaseGrid::from_extents(1, 16, 8.0, 16, 3.0)?;
        let kernel = RegularizedKernel::build(0.8, &grid, KernelMode::Green1d)?;
        let f = residual_fields(&g, &TwoBodyView::Factorized(g.clone()), &frame, &kernel, &phase, CHORD_POINTS, 0.0)?;
        c.le("r2_factorized_zero", f.r2.iter().fold(0.0, |a, b| a.max(b.abs())), 1e-12);
        let constant = vec![1.0; phase.len()];
        let p = pairing(&constant, &phase, &BumpTest::new(0.0, 3.5), &BumpTest::new(0.0, 2.5), Slot::GradP)?;
        c.le("pairing_constant_zero", p.value.abs(), 1e-3);

        let grid = SpatialGrid::new(1, 128, 8.0)?;
        let g = slater_density(&SlaterState::build(OrbitalKind::Harmonic, grid, 4, 0.25, 0)?)?;
        let kernel = RegularizedKernel::zero(&grid);
        let mut hf = HFConfig::new(0.002, 2);
        hf.snapshot_every = 1;
        let snaps = evolve_hartree_fock(&g, &kernel, hf)?;
        let frame = CoherentFrame::new(Envelope::Gaussian, 0.25, grid)?;
        let r = transport_identity_check(&snaps, &frame, &kernel, &phase)?;
        c.le("identity_free_closure", r.max_relative, 10.0 * grid.spacing().powi(2));
        Ok(())
    });
}

fn check_io(c: &mut Collector) {
    c.guard("io_corruption_detected", |c| {
        let dir = std::env::temp_dir().join(format!("phasespace-check-{}", std::process::id()));
        fs::create_dir_all(&dir)?;
        let path = dir.join("probe.bin");
        let g = reference_state()?;
        io::save_density(&path, &g, 0.0)?;
        let round_trip = io::load_density(&path).map(|(h, _)| h == g).unwrap_or(false);
        let mut bytes = fs::read(&path)?;
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&path, &bytes)?;
        let detected = io::load_density(&path).is_err();
        let _ = fs::remove_dir_all(&dir);
        c.le("io_round_trip", if round_trip { 0.0 } else { 1.0 }, 0.0);
        c.le("io_corruption_detected", if detected { 0.0 } else { 1.0 }, 0.0);
        Ok(())
    });
}

/// Runs the named suite. With `state`, the state and semiclassical checks use
/// that file; a file that cannot be loaded shows up as a failing entry.
pub fn check(suite: &str, state: Option<&Path>) -> CheckReport {
    let mut entries = Vec::new();
    let wants = |s: &str| suite == "all" || suite == s;
    if !SUITES.contains(&suite) {
        entries.push(CheckEntry {
            suite: suite.into(),
            name: "unknown_suite".into(),
            value: f64::NAN,
            bound: f64::NAN,
            pass: false,
            detail: Some(format!("known suites: {}", SUITES.join(", "))),
        });
    }
    let gamma: std::result::Result<OneBodyDensity, String> = match state {
        Some(path) => io::load_density(path).map(|(g, _)| g).map_err(|e| e.to_string()),
        None => reference_state().map_err(|e| e.to_string()),
    };
    let mut run = |name: &'static str, f: &dyn Fn(&mut Collector)| {
        if wants(name) {
            let mut c = Collector { suite: name, entries: Vec::new() };
            f(&mut c);
            entries.extend(c.entries);
        }
    };
    run("grid", &check_grid);
    run("potential", &check_potential);
    run("state", &|c| match &gamma {
        Ok(g) => check_state(c, g),
        Err(e) => c.failed("state_file", e),
    });
    run("semiclassical", &|c| match &gamma {
        Ok(g) => check_semiclassical(c, g),
        Err(e) => c.failed("state_file", e),
    });
    run("dynamics", &check_dynamics);
    run("vlasov", &check_vlasov);
    run("residuals", &check_residuals);
    run("io", &check_io);
    let pass = entries.iter().all(|e| e.pass);
    CheckReport { suite: suite.into(), entries, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_pipeline_has_no_stages() {
        let root = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { pipeline: vec![], ..Default::default() };
        let r = run(&cfg, root.path()).unwrap();
        assert!(r.manifest.stages.is_empty() && r.manifest.files.is_empty());
    }

    #[test]
    fn invalid_config_lists_violations() {
        let root = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { epsilon: 0.5, n: 100, ..Default::default() };
        let err = run(&cfg, root.path()).unwrap_err().to_string();
        assert!(err.contains("epsilon") && err.contains("power of two"), "{err}");
    }

    #[test]
    fn unknown_suite_is_a_failing_entry() {
        let r = check("nonsense", None);
        assert!(!r.pass && r.entries[0].name == "unknown_suite");
    }
}
