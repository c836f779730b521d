//! Acceptance criteria, one line each. Run with
//! `cargo test -p phasespace-core --test acceptance`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use phasespace_core::dynamics::*;
use phasespace_core::potential::{beta_for, coulomb3d_profile_fourier, KernelMode, RegularizedKernel};
use phasespace_core::residuals::*;
use phasespace_core::semiclassical::*;
use phasespace_core::state::*;
use phasespace_core::vlasov::*;
use phasespace_core::{PhaseGrid, SpatialGrid, C64};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

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

fn husimi_suite() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for np in [4usize, 8, 16] {
        let hbar = 1.0 / np as f64;
        let grid = SpatialGrid::new(1, 256, 8.0).unwrap();
        let gamma = slater_density(&SlaterState::build(OrbitalKind::Harmonic, grid, np, hbar, 0).unwrap()).unwrap();
        let frame = CoherentFrame::new(Envelope::Bump, hbar, grid).unwrap();
        let phase = PhaseGrid::from_extents(1, 64, 8.0, 64, 6.0).unwrap();
        let m = husimi_k1(&gamma, &frame, &phase).unwrap();
        let bounds = m.min() >= 0.0 && m.max() <= 1.0 + 1e-8;
        let mass = m.mass() / (2.0 * PI * hbar * np as f64) - 1.0;
        let qf = quasi_free_two_body(&gamma);
        let marg = husimi_k2_marginal(&qf, &frame, &phase).unwrap();
        let scaled: Vec<f64> = m.values.iter().map(|v| (np - 1) as f64 * v).collect();
        let marginal = max_abs_diff(&marg, &scaled) / scaled.iter().copied().fold(0.0, f64::max);
        let coarse = PhaseGrid::from_extents(1, 16, 8.0, 16, 6.0).unwrap();
        let swap = husimi_k2(&qf, &frame, &coarse).unwrap().swap_asymmetry();
        pass &= bounds && mass.abs() <= 5e-3 && swap <= 1e-8 && marginal <= 1e-2;
        notes.push(format!(
            "N={np}: m∈[{:.1e},{:.3}] mass {mass:+.1e} swap {swap:.1e} marginal {marginal:.1e}",
            m.min(),
            m.max()
        ));
    }
    verdict(pass, notes.join("; "))
}

fn wigner_vs_husimi(envelope: Envelope) -> f64 {
    let hbar: f64 = 1.0 / 16.0;
    let grid = SpatialGrid::new(1, 64, 14.0 * hbar.sqrt()).unwrap();
    let gamma = slater_density(&packets(&grid, hbar, &[(-0.3, 0.2), (0.4, -0.3)])).unwrap();
    let frame = CoherentFrame::new(envelope, hbar, grid).unwrap();
    let w = wigner_k1(&gamma).unwrap();
    let smoothed = husimi_from_wigner(&w).unwrap();
    let direct = husimi_k1(&gamma, &frame, &w.grid).unwrap();
    max_abs_diff(&smoothed.values, &direct.values)
}

fn wigner_convolution() -> Verdict {
    let g = wigner_vs_husimi(Envelope::Gaussian);
    let b = wigner_vs_husimi(Envelope::Bump);
    verdict(g <= 1e-6 && b > 1e-3, format!("gaussian {g:.2e} (≤1e-6), bump {b:.2e} (>1e-3 expected)"))
}

// ∫ G_β(y)/|x−y| dy by the shell theorem, G_β the unit-mass Gaussian of
// width β: shells inside r act as a point charge (Simpson), shells outside
// contribute 4π∫_r^∞ s G ds in closed form.
fn shell_quadrature(beta: f64, r: f64) -> f64 {
    let norm = (PI * beta * beta).powf(-1.5);
    let outer = 2.0 * PI * norm * beta * beta * (-(r * r) / (beta * beta)).exp();
    if r == 0.0 {
        return outer;
    }
    let panels = 2000;
    let h = r / panels as f64;
    let f = |s: f64| 4.0 * PI * s * s * norm * (-(s * s) / (beta * beta)).exp() / r;
    let mut acc = f(0.0) + f(r);
    for i in 1..panels {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    outer + acc * h / 3.0
}

fn kernel_law() -> Verdict {
    let grid = SpatialGrid::new(3, 128, 24.0).unwrap();
    let betas: Vec<f64> = (0..5).map(|i| 0.4 * 10f64.powf(i as f64 / 4.0)).collect();
    let sups: Vec<f64> = betas
        .iter()
        .map(|&b| RegularizedKernel::build(b, &grid, KernelMode::Coulomb3d).unwrap().grad_sup_norm())
        .collect();
    let slope = fit_slope(&betas.iter().map(|b| b.ln()).collect::<Vec<_>>(), &sups.iter().map(|s| s.ln()).collect::<Vec<_>>());
    let mut worst: f64 = 0.0;
    for &beta in &[0.4, 1.0, 4.0] {
        for &r in &[0.0, 0.3, 1.0, 3.0] {
            let q = shell_quadrature(beta, r);
            worst = worst.max((coulomb3d_profile_fourier(beta, r) - q).abs() / q);
        }
    }
    verdict(
        (slope + 2.0).abs() <= 0.1 && worst <= 1e-6,
        format!("slope {slope:.3} (−2±0.1), Fourier vs quadrature {worst:.1e}"),
    )
}

fn l2_distance(a: &FewBodyWavefunction, b: &FewBodyWavefunction) -> f64 {
    let dv = a.grid().cell_volume().powi(a.particle_count() as i32);
    (a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() * dv).sqrt()
}

fn propagators() -> Verdict {
    // exact two-body dynamics
    let g = SpatialGrid::new(1, 32, 6.0).unwrap();
    let hbar = 0.25;
    let s2 = packets(&g, hbar, &[(-0.8, 0.3), (0.7, -0.2)]);
    let psi = FewBodyWavefunction::from_slater(&s2).unwrap();
    let kernel2 = RegularizedKernel::build(0.5, &g, KernelMode::Green1d).unwrap();
    let t = 0.4;
    let prop = ExactPropagator::new(&psi, &kernel2, t / 100.0).unwrap();
    let mut cur = psi.clone();
    let e0 = prop.energy(&cur);
    let (mut norm_step, mut exact_drift): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let before = cur.norm();
        prop.step(&mut cur);
        norm_step = norm_step.max((cur.norm() - before).abs());
        exact_drift = exact_drift.max(((prop.energy(&cur) - e0) / e0).abs());
    }
    let run = |steps: usize| evolve_exact(&psi, &kernel2, t / steps as f64, steps).unwrap();
    let reference = run(20 * 32);
    let exact_ratio = l2_distance(&run(20), &reference) / l2_distance(&run(40), &reference);

    // Hartree-Fock, N = 8
    let g8 = SpatialGrid::new(1, 64, 8.0).unwrap();
    let gamma = slater_density(&SlaterState::build(OrbitalKind::Harmonic, g8, 8, 0.125, 0).unwrap()).unwrap();
    let kernel8 = RegularizedKernel::build(beta_for(8, 0.04), &g8, KernelMode::Green1d).unwrap();
    let e0 = total_energy(&gamma, &kernel8).unwrap().total;
    let mut hf = HartreeFockPropagator::new(&gamma, &kernel8, HFConfig::new(0.005, 100)).unwrap();
    let (mut trace_step, mut hf_drift): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let before = hf.trace();
        hf.step();
        trace_step = trace_step.max((hf.trace() - before).abs());
        hf_drift = hf_drift.max(((total_energy(&hf.density(), &kernel8).unwrap().total - e0) / e0).abs());
    }
    let hf_run = |steps: usize| {
        evolve_hartree_fock(&gamma, &kernel8, HFConfig::new(0.5 / steps as f64, steps)).unwrap().pop().unwrap().gamma
    };
    let reference = hf_run(25 * 32);
    let hf_ratio = hf_run(25).trace_distance(&reference).unwrap() / hf_run(50).trace_distance(&reference).unwrap();

    // N = 2: HF against exact
    let gamma2 = slater_density(&s2).unwrap();
    let exact = evolve_exact(&psi, &kernel2, 0.5 / 400.0, 400).unwrap().one_body_density().unwrap();
    let hf2 = |steps: usize| {
        evolve_hartree_fock(&gamma2, &kernel2, HFConfig::new(0.5 / steps as f64, steps)).unwrap().pop().unwrap().gamma
    };
    let (a, b, c) = (hf2(25), hf2(50), hf2(100));
    let gap = c.trace_distance(&exact).unwrap() / 2.0;
    let conv = a.trace_distance(&b).unwrap() / b.trace_distance(&c).unwrap();

    let pass = norm_step <= 1e-8
        && trace_step <= 1e-8
        && exact_drift <= 1e-6
        && hf_drift <= 1e-6
        && (3.5..=4.5).contains(&exact_ratio)
        && (3.5..=4.5).contains(&hf_ratio)
        && gap <= 0.05
        && conv >= 3.0;
    verdict(
        pass,
        format!(
            "norm/step {norm_step:.1e}, trace/step {trace_step:.1e}, drift exact {exact_drift:.1e} HF {hf_drift:.1e}, \
             Strang ratio exact {exact_ratio:.2} HF {hf_ratio:.2}, N=2 HF–exact {gap:.1e} (self-convergence ×{conv:.2})"
        ),
    )
}

fn vlasov() -> Verdict {
    // free transport of a trigonometric polynomial in q is exact
    let g = PhaseGrid::from_extents(1, 64, 2.0 * PI, 64, 4.0).unwrap();
    let f0 = |q: f64, p: f64| (1.2 + 0.3 * q.cos() + 0.2 * (2.0 * q).sin()) * (-p * p).exp();
    let free = VlasovSolver::new(&g, &RegularizedKernel::zero(&g.position)).unwrap();
    let mut st = VlasovState::from_fn(g, f0).unwrap();
    for _ in 0..50 {
        free.step(&mut st, 0.02).unwrap();
    }
    let exact = VlasovState::from_fn(g, |q, p| f0(q - p * st.time, p)).unwrap();
    let free_err = max_abs_diff(&st.values, &exact.values);

    let g = PhaseGrid::from_extents(1, 64, 4.0 * PI, 128, 5.0).unwrap();
    let kernel = RegularizedKernel::bare(&g.position, KernelMode::Green1d).unwrap();
    let solver = VlasovSolver::new(&g, &kernel).unwrap();
    let mut st = two_stream(g, 0.05, 1.2, 0.3).unwrap();
    let initial = st.clone();
    let mo0 = solver.moments(&st);
    let c = mo0.abs_q + mo0.second_p;
    let (mut mass_step, mut affine): (f64, f64) = (0.0, 0.0);
    let mut prev = mo0.mass;
    let dt = 0.02;
    for _ in 0..50 {
        solver.step(&mut st, dt).unwrap();
        let mo = solver.moments(&st);
        mass_step = mass_step.max(((mo.mass - prev) / prev).abs());
        prev = mo.mass;
        affine = affine.max((mo.abs_q + mo.second_p) / (c * (1.0 + st.time)));
    }
    for _ in 0..50 {
        solver.step(&mut st, -dt).unwrap();
    }
    let back = max_abs_diff(&st.values, &initial.values);
    verdict(
        free_err <= 1e-10 && mass_step <= 1e-12 && back <= 1e-8 && affine <= 1.0,
        format!(
            "free transport {free_err:.1e}, mass/step {mass_step:.1e}, reversibility {back:.1e}, \
             moment/(C(1+t)) ≤ {affine:.3}"
        ),
    )
}

fn identity_mismatch(dt: f64) -> f64 {
    let np = 8;
    let hbar = 1.0 / np as f64;
    let grid = SpatialGrid::new(1, 256, 8.0).unwrap();
    let gamma = slater_density(&SlaterState::build(OrbitalKind::Harmonic, grid, np, hbar, 0).unwrap()).unwrap();
    let kernel = RegularizedKernel::build(beta_for(np, 0.04), &grid, KernelMode::Green1d).unwrap();
    let mut cfg = HFConfig::new(dt, 2);
    cfg.snapshot_every = 1;
    let snaps = evolve_hartree_fock(&gamma, &kernel, cfg).unwrap();
    let frame = CoherentFrame::new(Envelope::Gaussian, hbar, grid).unwrap();
    let phase = PhaseGrid::from_extents(1, 32, 8.0, 32, 4.0).unwrap();
    transport_identity_check(&snaps, &frame, &kernel, &phase).unwrap().max_relative
}

fn transport_identity() -> Verdict {
    let coarse = identity_mismatch(0.004);
    let fine = identity_mismatch(0.002);
    let ratio = coarse / fine;
    verdict(
        coarse <= 0.05 && fine <= 0.05 && (3.5..=4.5).contains(&ratio),
        format!("mismatch {coarse:.2e} → {fine:.2e} under dt halving (×{ratio:.2})"),
    )
}

fn decreasing(rows: &[SweepRow], f: impl Fn(&SweepRow) -> f64) -> bool {
    rows.windows(2).all(|w| f(&w[1]).abs() < f(&w[0]).abs())
}

fn residual_smallness(sweep: &SweepResult) -> Verdict {
    let rows = &sweep.rows;
    let finite = rows.iter().all(|r| r.error.is_none());
    let dec = [
        decreasing(rows, |r| r.pairing_r_tilde),
        decreasing(rows, |r| r.pairing_r1),
        decreasing(rows, |r| r.pairing_r2),
    ];

    let grid = SpatialGrid::new(1, 64, 8.0).unwrap();
    let phase = PhaseGrid::from_extents(1, 16, 8.0, 16, 3.0).unwrap();
    let kernel = RegularizedKernel::build(0.6, &grid, KernelMode::Green1d).unwrap();
    let hbar = 0.5;
    let st = SlaterState::build(OrbitalKind::Harmonic, grid, 2, hbar, 0).unwrap();
    let gamma = slater_density(&st).unwrap();
    let frame = CoherentFrame::new(Envelope::Bump, hbar, grid).unwrap();
    let fields = |view: &TwoBodyView| residual_fields(&gamma, view, &frame, &kernel, &phase, CHORD_POINTS, 0.0).unwrap();
    let factorized = fields(&TwoBodyView::Factorized(gamma.clone()));
    let r2_zero = factorized.r2.iter().chain(&factorized.dp_r2).map(|v| v.abs()).fold(0.0, f64::max);
    let dense = fields(&two_body_from_wavefunction(&FewBodyWavefunction::from_slater(&st).unwrap()).unwrap());
    let qf = fields(&quasi_free_two_body(&gamma));
    let agree = max_abs_diff(&dense.r1, &qf.r1).max(max_abs_diff(&dense.r2, &qf.r2));

    let pass = finite && dec.iter().all(|&d| d) && sweep.slope_r_tilde >= 0.4 && r2_zero <= 1e-12 && agree <= 1e-6;
    verdict(
        pass,
        format!(
            "decreasing R̃/R1/R2 {dec:?}, R̃ slope {:.2} (≥0.4), R1 slope {:.2}, R2 slope {:.2}, \
             factorized R2 {r2_zero:.1e}, dense vs quasi-free {agree:.1e}",
            sweep.slope_r_tilde, sweep.slope_r1, sweep.slope_r2
        ),
    )
}

fn vlasov_convergence(sweep: &SweepResult) -> Verdict {
    let d: Vec<String> = sweep.rows.iter().map(|r| format!("{:.3e}", r.vlasov_distance)).collect();
    verdict(
        sweep.rows.iter().all(|r| r.error.is_none()) && decreasing(&sweep.rows, |r| r.vlasov_distance),
        format!("distance at t=0.5 for N=4,8,16: {} (slope {:.2})", d.join(" → "), sweep.slope_vlasov),
    )
}

fn oscillation() -> Verdict {
    let hbars: Vec<f64> = (0..5).map(|i| 0.1 * 10f64.powf(-(i as f64) / 4.0)).collect();
    let r = oscillation_probe(TestFunction::Bump, &hbars, 0.5, 2).unwrap();
    verdict(r.exponent >= r.target - 0.3, format!("exponent {:.2} vs target {:.2} − 0.3", r.exponent, r.target))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, f: &dyn Fn() -> Verdict| {
        let start = Instant::now();
        let v = f();
        println!(
            "criterion {id} {name}: {} ({}) [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!v.pass);
    };
    report(1, "husimi properties", &husimi_suite);
    report(2, "husimi = wigner * gaussian", &wigner_convolution);
    report(3, "regularized kernel law", &kernel_law);
    report(4, "quantum propagators", &propagators);
    report(5, "vlasov solver", &vlasov);
    report(6, "transport identity", &transport_identity);
    let sweep = scaling_sweep(&SweepConfig::default());
    report(7, "residual smallness", &|| residual_smallness(&sweep));
    report(8, "vlasov limit", &|| vlasov_convergence(&sweep));
    report(9, "oscillation probe", &oscillation);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
