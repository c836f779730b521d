use phasespace_core::potential::{KernelMode, RegularizedKernel};
use phasespace_core::vlasov::*;
use phasespace_core::PhaseGrid;

#[test]
fn two_stream_conserves_mass_energy_and_reverses() {
    let g = PhaseGrid::from_extents(1, 64, 4.0 * std::f64::consts::PI, 128, 5.0).unwrap();
    let kernel = RegularizedKernel::bare(&g.position, KernelMode::Green1d).unwrap();
    let solver = VlasovSolver::new(&g, &kernel).unwrap();
    let mut st = two_stream(g, 0.05, 1.2, 0.3).unwrap();
    let m0 = st.clone();
    let mo0 = solver.moments(&st);
    let max0 = m0.values.iter().copied().fold(f64::MIN, f64::max);
    let dt = 0.02;
    let c = mo0.abs_q + mo0.second_p;
    let (mut e_drift, mut mass_step, mut max_over): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut prev_mass = mo0.mass;
    for _ in 0..50 {
        solver.step(&mut st, dt).unwrap();
        let mo = solver.moments(&st);
        e_drift = e_drift.max(((mo.energy - mo0.energy) / mo0.energy).abs());
        mass_step = mass_step.max(((mo.mass - prev_mass) / prev_mass).abs());
        prev_mass = mo.mass;
        max_over = max_over.max(st.values.iter().copied().fold(f64::MIN, f64::max) - max0);
        assert!(mo.abs_q + mo.second_p <= c * (1.0 + st.time));
    }
    println!("energy drift {e_drift:.3e}, mass/step {mass_step:.3e}, max overshoot {max_over:.3e}");
    assert!(e_drift <= 1e-4 && mass_step <= 1e-12);
    for _ in 0..50 {
        solver.step(&mut st, -dt).unwrap();
    }
    let back = st.values.iter().zip(&m0.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("reversibility {back:.3e}");
    assert!(back <= 1e-8);
}
