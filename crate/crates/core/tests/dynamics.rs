use phasespace_core::dynamics::*;
use phasespace_core::potential::{KernelMode, RegularizedKernel};
use phasespace_core::state::*;
use phasespace_core::{SpatialGrid, C64};

fn packets(grid: &SpatialGrid, hbar: f64, list: &[(f64, f64)]) -> SlaterState {
    let raw = list
        .iter()
        .map(|&(c, p)| {
            grid.coordinates()
                .iter()
                .map(|&x| C64::from_polar((-(x - c).powi(2) / (2.0 * hbar)).exp(), p * x / hbar))
                .collect()
        })
        .collect();
    SlaterState::new(*grid, hbar, orthonormalize(raw, grid).unwrap()).unwrap()
}

fn l2_distance(a: &FewBodyWavefunction, b: &FewBodyWavefunction) -> f64 {
    let dv = a.grid().cell_volume().powi(a.particle_count() as i32);
    (a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() * dv).sqrt()
}

#[test]
fn exact_strang_is_second_order() {
    let g = SpatialGrid::new(1, 32, 6.0).unwrap();
    let hbar = 0.25;
    let psi = FewBodyWavefunction::from_slater(&packets(&g, hbar, &[(-0.8, 0.3), (0.7, -0.2)])).unwrap();
    let kernel = RegularizedKernel::build(0.5, &g, KernelMode::Green1d).unwrap();
    let t = 0.4;
    let run = |steps: usize| evolve_exact(&psi, &kernel, t / steps as f64, steps).unwrap();
    let reference = run(20 * 32);
    let e1 = l2_distance(&run(20), &reference);
    let e2 = l2_distance(&run(40), &reference);
    println!("exact: {e1:.3e} {e2:.3e} ratio {}", e1 / e2);
    assert!((3.5..=4.5).contains(&(e1 / e2)));
}

#[test]
fn hf_energy_trace_and_order() {
    let g = SpatialGrid::new(1, 64, 8.0).unwrap();
    let n = 8;
    let hbar = 1.0 / n as f64;
    let s = SlaterState::build(OrbitalKind::Harmonic, g, n, hbar, 0).unwrap();
    let gamma = slater_density(&s).unwrap();
    let kernel = RegularizedKernel::build(phasespace_core::potential::beta_for(n, 0.04), &g, KernelMode::Green1d).unwrap();
    let e0 = total_energy(&gamma, &kernel).unwrap();
    let mut cfg = HFConfig::new(0.005, 100);
    cfg.snapshot_every = 10;
    let snaps = evolve_hartree_fock(&gamma, &kernel, cfg).unwrap();
    let mut worst: f64 = 0.0;
    for s in &snaps {
        let e = total_energy(&s.gamma, &kernel).unwrap();
        worst = worst.max(((e.total - e0.total) / e0.total).abs());
        assert!(e.kinetic <= e0.total);
        assert!((s.gamma.trace() - n as f64).abs() < 1e-8);
    }
    println!("HF energy drift {worst:.3e}, E0 {e0:?}");

    let run = |steps: usize| {
        let cfg = HFConfig::new(0.5 / steps as f64, steps);
        evolve_hartree_fock(&gamma, &kernel, cfg).unwrap().pop().unwrap().gamma
    };
    let reference = run(25 * 32);
    let d1 = run(25).trace_distance(&reference).unwrap();
    let d2 = run(50).trace_distance(&reference).unwrap();
    println!("HF order: {d1:.3e} {d2:.3e} ratio {}", d1 / d2);
}

#[test]
fn hf_tracks_exact_dynamics_for_two_particles() {
    let g = SpatialGrid::new(1, 32, 6.0).unwrap();
    let hbar = 0.25;
    let s = packets(&g, hbar, &[(-0.8, 0.3), (0.7, -0.2)]);
    let psi = FewBodyWavefunction::from_slater(&s).unwrap();
    let gamma = slater_density(&s).unwrap();
    let kernel = RegularizedKernel::build(0.5, &g, KernelMode::Green1d).unwrap();
    let t = 0.5;
    let exact = evolve_exact(&psi, &kernel, t / 400.0, 400).unwrap().one_body_density().unwrap();
    let hf = |steps: usize| {
        evolve_hartree_fock(&gamma, &kernel, HFConfig::new(t / steps as f64, steps)).unwrap().pop().unwrap().gamma
    };
    let d1 = hf(25).trace_distance(&exact).unwrap();
    let d2 = hf(50).trace_distance(&exact).unwrap();
    println!("HF vs exact: {d1:.3e} {d2:.3e}");
    assert!(d1 <= 10.0 * d2 && d2 < 0.05 * 2.0);
}
