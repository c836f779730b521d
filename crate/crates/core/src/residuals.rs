//! Remainder terms of the Husimi transport equation.
//!
//! For `m(q,p) = ⟨f, γ f⟩` with `f = f_{q,p}` the equation of motion reads
//!
//! ```text
//! ∂_t m + p ∂_q m = ∂_q R̃ + c (V' ∗ ϱ) ∂_p m + ∂_p (R1 + R2),   c = 1/(N (2πħ))
//! ```
//!
//! with `R̃ = ħ Im⟨f, γ ∂_q f⟩`, `R1` the chord-averaged force minus the
//! frozen force at `q`, and `R2` the correlation part of the frozen force.
//! Every coherent integral is restricted to the envelope support around
//! `q`, so a phase point costs `O(s²)` with `s` the support size in cells.
//!
//! The integral over the second coherent pair `(q2, p2)` is done exactly by
//! Parseval: it turns `V'` into `Ṽ' = V' ∗ |F_ħ|²`, sampled on the state grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_hartree_fock, HFConfig, Snapshot};
use crate::grid::{gauss_legendre_unit, PhaseGrid, SpatialGrid, Spectral};
use crate::potential::{beta_for, KernelMode, RegularizedKernel};
use crate::semiclassical::{fit_slope, husimi_k1, CoherentFrame, Envelope};
use crate::state::{quasi_free_two_body, slater_density, OneBodyDensity, OrbitalKind, SlaterState, TwoBodyView};
use crate::vlasov::{disk_limit, VlasovSolver};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Chord quadrature used by default.
pub const CHORD_POINTS: usize = 8;

/// Every term of the transport identity at one time, on one phase grid.
/// Fields are flattened position-major like [`PhaseGrid::index`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualField {
    pub grid: PhaseGrid,
    pub hbar: f64,
    pub particles: usize,
    pub beta: f64,
    pub time: f64,
    pub m: Vec<f64>,
    pub dq_m: Vec<f64>,
    pub dp_m: Vec<f64>,
    pub r_tilde: Vec<f64>,
    pub dq_r_tilde: Vec<f64>,
    pub r1: Vec<f64>,
    pub dp_r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub dp_r2: Vec<f64>,
    /// `c (V' ∗ ϱ)(q)`, one value per position.
    pub force: Vec<f64>,
}

impl ResidualField {
    pub fn is_finite(&self) -> bool {
        [&self.m, &self.dq_m, &self.dp_m, &self.r_tilde, &self.dq_r_tilde, &self.r1, &self.dp_r1, &self.r2, &self.dp_r2]
            .iter()
            .all(|f| f.iter().all(|v| v.is_finite()))
    }

    /// `c (V' ∗ ϱ) ∂_p m` on the grid.
    pub fn force_term(&self) -> Vec<f64> {
        let m = self.grid.momentum.len();
        self.dp_m.iter().enumerate().map(|(i, v)| self.force[i / m] * v).collect()
    }
}

/// A phase-space field together with its analytic divergence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceField {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
    pub divergence: Vec<f64>,
}

/// Shared tables for evaluating residuals of one state.
struct Engine<'a> {
    frame: CoherentFrame,
    phase: PhaseGrid,
    kernel: &'a RegularizedKernel,
    stride: usize,
    /// `Ṽ'` in displacement order.
    smooth_force: Vec<f64>,
    /// Chord-averaged `V'`: `chord[j + J][m] = Σ_s ω_s V'(m dx + s j dx)`.
    chord: Vec<Vec<f64>>,
    reach: i64,
}

impl<'a> Engine<'a> {
    fn new(
        grid: &SpatialGrid,
        hbar: f64,
        frame: &CoherentFrame,
        kernel: &'a RegularizedKernel,
        phase: &PhaseGrid,
        chord_points: usize,
    ) -> Result<Self> {
        if grid.dim() != 1 || phase.dim() != 1 {
            return Err(Error::Capability("residuals are implemented for d = 1".into()));
        }
        if !frame.grid.same_as(grid) || !kernel.grid().same_as(grid) {
            return Err(Error::GridMismatch("frame, kernel and state grids must coincide".into()));
        }
        if (frame.hbar - hbar).abs() > 1e-14 * hbar {
            return Err(Error::config(format!("frame ħ = {} but state ħ = {hbar}", frame.hbar)));
        }
        let pos = &phase.position;
        let n = grid.n();
        if (pos.length() - grid.length()).abs() > 1e-12 * grid.length() || pos.n() > n || n % pos.n() != 0 {
            return Err(Error::GridMismatch(
                "phase positions must be a subsample of the state grid".into(),
            ));
        }
        if chord_points == 0 {
            return Err(Error::config("chord quadrature needs at least one point"));
        }
        let stride = n / pos.n();
        let dx = grid.spacing();

        let base = frame.vector(grid.coordinate(0), 0.0);
        let offsets: Vec<i64> = base.positions.iter().map(|y| ((y - grid.coordinate(0)) / dx).round() as i64).collect();
        let half = offsets.iter().map(|o| o.abs()).max().unwrap_or(0);
        let reach = (2 * half).min(n as i64 / 2);

        let force = &kernel.gradient()[0];
        let mut envelope_density = vec![0.0; n];
        for (&o, &a) in offsets.iter().zip(&base.amplitudes) {
            envelope_density[grid.wrap_index(o)] += a * a;
        }
        let smooth_force: Vec<f64> = (0..n)
            .map(|d| {
                offsets
                    .iter()
                    .map(|&e| force[grid.wrap_index(d as i64 - e)] * envelope_density[grid.wrap_index(e)])
                    .sum::<f64>()
                    * dx
            })
            .collect();

        let (nodes, weights) = gauss_legendre_unit(chord_points);
        let spectral: &Spectral = kernel.spectral();
        let chord: Vec<Vec<f64>> = (-reach..=reach)
            .into_par_iter()
            .map(|j| {
                let mut acc = vec![0.0; n];
                if kernel.is_zero() {
                    return acc;
                }
                for (s, w) in nodes.iter().zip(&weights) {
                    let shifted = spectral.shift(force, [s * j as f64 * dx, 0.0, 0.0]);
                    for (a, v) in acc.iter_mut().zip(shifted) {
                        *a += w * v;
                    }
                }
                acc
            })
            .collect();
        Ok(Self { frame: *frame, phase: *phase, kernel, stride, smooth_force, chord, reach })
    }

    fn chord_at(&self, j: i64, m: usize) -> f64 {
        self.chord[(j + self.reach) as usize][m]
    }

    /// `B(w, j) = Σ_k A_j(w − k) γ2(w+j, k; w, k) dx`, `j ∈ [-J, J]`.
    fn chord_contraction(&self, view: &TwoBodyView) -> Vec<C64> {
        let grid = self.frame.grid;
        let n = grid.n();
        let dx = grid.spacing();
        let width = (2 * self.reach + 1) as usize;
        let mut out = vec![ZERO; n * width];
        if self.kernel.is_zero() {
            return out;
        }
        out.par_chunks_mut(width).enumerate().for_each(|(w, row)| {
            for (slot, j) in row.iter_mut().zip(-self.reach..=self.reach) {
                let u = grid.wrap_index(w as i64 + j);
                let table = |k: usize| self.chord_at(j, grid.wrap_index(w as i64 - k as i64));
                *slot = match view {
                    TwoBodyView::QuasiFree(g) => {
                        let guw = g.at(u, w);
                        (0..n).map(|k| table(k) * (guw * g.at(k, k).re - g.at(u, k) * g.at(k, w))).sum::<C64>()
                    }
                    TwoBodyView::Factorized(g) => {
                        let guw = g.at(u, w);
                        (0..n).map(|k| table(k) * guw * g.at(k, k).re).sum::<C64>()
                    }
                    TwoBodyView::Dense(_) => (0..n).map(|k| table(k) * view.eval(u, k, w, k)).sum::<C64>(),
                } * dx;
            }
        });
        out
    }

    /// `C_q(u, w) = Σ_{w2} Ṽ'(q − w2) γ2(u, w2; w, w2) dx` on the support block.
    fn frozen_block(&self, view: &TwoBodyView, iq_state: usize, idx: &[usize], out: &mut [C64]) {
        let grid = self.frame.grid;
        let n = grid.n();
        let dx = grid.spacing();
        let s = idx.len();
        let weight: Vec<f64> = (0..n).map(|w2| self.smooth_force[grid.wrap_index(iq_state as i64 - w2 as i64)]).collect();
        match view {
            TwoBodyView::QuasiFree(g) | TwoBodyView::Factorized(g) => {
                let direct: f64 = (0..n).map(|w2| weight[w2] * g.at(w2, w2).re).sum();
                let exchange = matches!(view, TwoBodyView::QuasiFree(_));
                for a in 0..s {
                    for b in 0..s {
                        let (u, w) = (idx[a], idx[b]);
                        let mut v = g.at(u, w) * direct;
                        if exchange {
                            v -= (0..n).map(|w2| g.at(u, w2) * g.at(w2, w) * weight[w2]).sum::<C64>();
                        }
                        out[a * s + b] = v * dx;
                    }
                }
            }
            TwoBodyView::Dense(_) => {
                for a in 0..s {
                    for b in 0..s {
                        let (u, w) = (idx[a], idx[b]);
                        out[a * s + b] = (0..n).map(|w2| view.eval(u, w2, w, w2) * weight[w2]).sum::<C64>() * dx;
                    }
                }
            }
        }
    }

    fn evaluate(&self, gamma: &OneBodyDensity, view: &TwoBodyView, time: f64) -> ResidualField {
        let grid = self.frame.grid;
        let hbar = self.frame.hbar;
        let dx = grid.spacing();
        let n = grid.n();
        let inv_n = 1.0 / gamma.particle_count() as f64;
        let rho = gamma.diagonal();
        let chord = self.chord_contraction(view);
        let width = (2 * self.reach + 1) as usize;
        let qs = self.phase.position.coordinates();
        let ps = self.phase.momentum.coordinates();
        let mp = ps.len();

        let rows: Vec<(f64, Vec<[f64; 9]>)> = (0..qs.len())
            .into_par_iter()
            .map(|iq| {
                let q_state = iq * self.stride;
                let q = grid.coordinate(q_state);
                let base = self.frame.vector(q, 0.0);
                let idx = &base.indices;
                let s = idx.len();
                let disp: Vec<f64> = base.positions.iter().map(|y| y - q).collect();
                let steps: Vec<i64> = disp.iter().map(|d| (d / dx).round() as i64).collect();

                let mut g = vec![ZERO; s * s];
                let mut b = vec![ZERO; s * s];
                let mut bp = vec![ZERO; s * s];
                let mut c = vec![ZERO; s * s];
                let mut cp = vec![ZERO; s * s];
                self.frozen_block(view, q_state, idx, &mut c);
                for a in 0..s {
                    for e in 0..s {
                        let k = a * s + e;
                        g[k] = gamma.at(idx[a], idx[e]);
                        let j = (steps[a] - steps[e]).clamp(-self.reach, self.reach);
                        b[k] = chord[idx[e] * width + (j + self.reach) as usize];
                        let dphase = C64::new(0.0, (disp[e] - disp[a]) / hbar);
                        bp[k] = b[k] * dphase;
                        cp[k] = c[k] * dphase;
                    }
                }
                let force = inv_n
                    * (0..n).map(|w| self.smooth_force[grid.wrap_index(q_state as i64 - w as i64)] * rho[w]).sum::<f64>()
                    * dx;

                let apply = |mat: &[C64], v: &[C64]| -> Vec<C64> {
                    mat.chunks(s).map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
                };
                let form = |v: &[C64], w: &[C64]| -> C64 { v.iter().zip(w).map(|(x, y)| x.conj() * y).sum::<C64>() * dx * dx };
                let values: Vec<[f64; 9]> = ps
                    .iter()
                    .map(|&p| {
                        let f: Vec<C64> = base
                            .amplitudes
                            .iter()
                            .zip(&base.positions)
                            .map(|(&a, &y)| C64::from_polar(a, p * y / hbar))
                            .collect();
                        let (fq, fqq) = self.frame.q_derivatives(&base, q, p);
                        let t = apply(&g, &f);
                        let m = form(&f, &t).re;
                        let weighted: Vec<C64> = f.iter().zip(&disp).map(|(v, d)| v * (*d / hbar)).collect();
                        let dp_m = 2.0 * form(&weighted, &t).im;
                        let tq = form(&f, &apply(&g, &fq));
                        let dq_m = 2.0 * tq.re;
                        let r_tilde = hbar * tq.im;
                        let dq_r_tilde = hbar * form(&f, &apply(&g, &fqq)).im;
                        let a_val = inv_n * form(&f, &apply(&b, &f)).re;
                        let dp_a = inv_n * form(&f, &apply(&bp, &f)).re;
                        let frozen = inv_n * form(&f, &apply(&c, &f)).re;
                        let dp_frozen = inv_n * form(&f, &apply(&cp, &f)).re;
                        [
                            m,
                            dq_m,
                            dp_m,
                            r_tilde,
                            dq_r_tilde,
                            a_val - frozen,
                            dp_a - dp_frozen,
                            frozen - force * m,
                            dp_frozen - force * dp_m,
                        ]
                    })
                    .collect();
                (force, values)
            })
            .collect();

        let len = qs.len() * mp;
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(len); 9];
        let mut force = Vec::with_capacity(qs.len());
        for (fq, row) in rows {
            force.push(fq);
            for v in row {
                for (col, x) in cols.iter_mut().zip(v) {
                    col.push(x);
                }
            }
        }
        let mut it = cols.into_iter();
        let mut next = || it.next().unwrap();
        ResidualField {
            grid: self.phase,
            hbar,
            particles: gamma.particle_count(),
            beta: self.kernel.beta(),
            time,
            m: next(),
            dq_m: next(),
            dp_m: next(),
            r_tilde: next(),
            dq_r_tilde: next(),
            r1: next(),
            dp_r1: next(),
            r2: next(),
            dp_r2: next(),
            force,
        }
    }
}

fn check_view(view: &TwoBodyView, gamma: &OneBodyDensity) -> Result<()> {
    if !view.grid().same_as(gamma.grid()) || view.particle_count() != gamma.particle_count() {
        return Err(Error::GridMismatch("two-body and one-body inputs describe different systems".into()));
    }
    Ok(())
}

/// All residual fields of a state with one- and two-body densities `gamma`, `view`.
pub fn residual_fields(
    gamma: &OneBodyDensity,
    view: &TwoBodyView,
    frame: &CoherentFrame,
    kernel: &RegularizedKernel,
    phase: &PhaseGrid,
    chord_points: usize,
    time: f64,
) -> Result<ResidualField> {
    check_view(view, gamma)?;
    let engine = Engine::new(gamma.grid(), gamma.hbar(), frame, kernel, phase, chord_points)?;
    Ok(engine.evaluate(gamma, view, time))
}

/// `R̃` and its `q`-derivative.
pub fn residual_tilde(gamma: &OneBodyDensity, frame: &CoherentFrame, phase: &PhaseGrid) -> Result<DivergenceField> {
    let kernel = RegularizedKernel::zero(gamma.grid());
    let view = TwoBodyView::Factorized(gamma.clone());
    let r = residual_fields(gamma, &view, frame, &kernel, phase, 1, 0.0)?;
    Ok(DivergenceField { grid: *phase, values: r.r_tilde, divergence: r.dq_r_tilde })
}

/// `R1` and its `p`-derivative. `gamma` must be the one-body marginal of `view`.
pub fn residual_r1(
    view: &TwoBodyView,
    gamma: &OneBodyDensity,
    frame: &CoherentFrame,
    kernel: &RegularizedKernel,
    phase: &PhaseGrid,
) -> Result<DivergenceField> {
    let r = residual_fields(gamma, view, frame, kernel, phase, CHORD_POINTS, 0.0)?;
    Ok(DivergenceField { grid: *phase, values: r.r1, divergence: r.dp_r1 })
}

/// `R2` and its `p`-derivative.
pub fn residual_r2(
    view: &TwoBodyView,
    gamma: &OneBodyDensity,
    frame: &CoherentFrame,
    kernel: &RegularizedKernel,
    phase: &PhaseGrid,
) -> Result<DivergenceField> {
    let r = residual_fields(gamma, view, frame, kernel, phase, CHORD_POINTS, 0.0)?;
    Ok(DivergenceField { grid: *phase, values: r.r2, divergence: r.dp_r2 })
}

/// `R̃(q,p)` by dense quadrature over the whole grid (reference path).
pub fn residual_tilde_direct(gamma: &OneBodyDensity, frame: &CoherentFrame, q: f64, p: f64) -> (f64, f64) {
    let len = frame.grid.len();
    let dx = frame.grid.spacing();
    let base = frame.vector(q, p);
    let f = base.to_dense(len);
    let (fq, fqq) = frame.q_derivatives(&base, q, p);
    let mut dq = vec![ZERO; len];
    let mut dqq = vec![ZERO; len];
    for (k, &i) in base.indices.iter().enumerate() {
        dq[i] = fq[k];
        dqq[i] = fqq[k];
    }
    let mut a = ZERO;
    let mut b = ZERO;
    for u in 0..len {
        for w in 0..len {
            let g = gamma.at(u, w);
            a += f[u].conj() * g * dq[w];
            b += f[u].conj() * g * dqq[w];
        }
    }
    (frame.hbar * (a * dx * dx).im, frame.hbar * (b * dx * dx).im)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub times: Vec<f64>,
    /// `‖Δ‖∞ / max_term ‖term‖∞` per interior snapshot.
    pub relative: Vec<f64>,
    pub max_relative: f64,
    /// Sup norms of `∂_t m, p∂_q m, force term, ∂_q R̃, ∂_p R1, ∂_p R2` at the worst snapshot.
    pub term_norms: [f64; 6],
    pub mismatch: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Evaluates the transport identity with centered time differences at every
/// interior snapshot of a Hartree-Fock trajectory.
pub fn transport_identity_check(
    snapshots: &[Snapshot],
    frame: &CoherentFrame,
    kernel: &RegularizedKernel,
    phase: &PhaseGrid,
) -> Result<IdentityReport> {
    if snapshots.len() < 3 {
        return Err(Error::config("the transport identity needs at least three snapshots"));
    }
    let h = snapshots[1].time - snapshots[0].time;
    if !(h > 0.0) || snapshots.windows(2).any(|w| ((w[1].time - w[0].time) - h).abs() > 1e-9 * h.abs().max(1.0)) {
        return Err(Error::config("snapshots must be equally spaced in time"));
    }
    let husimi: Vec<Vec<f64>> =
        snapshots.iter().map(|s| husimi_k1(&s.gamma, frame, phase).map(|m| m.values)).collect::<Result<_>>()?;
    let ps = phase.momentum.coordinates();
    let mp = ps.len();
    let engine = Engine::new(snapshots[0].gamma.grid(), snapshots[0].gamma.hbar(), frame, kernel, phase, CHORD_POINTS)?;
    let mut report = IdentityReport {
        times: Vec::new(),
        relative: Vec::new(),
        max_relative: 0.0,
        term_norms: [0.0; 6],
        mismatch: 0.0,
    };
    for k in 1..snapshots.len() - 1 {
        let snap = &snapshots[k];
        let view = quasi_free_two_body(&snap.gamma);
        let r = engine.evaluate(&snap.gamma, &view, snap.time);
        let dt_m: Vec<f64> = husimi[k + 1].iter().zip(&husimi[k - 1]).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let transport: Vec<f64> = r.dq_m.iter().enumerate().map(|(i, v)| ps[i % mp] * v).collect();
        let force = r.force_term();
        let delta: Vec<f64> = (0..dt_m.len())
            .map(|i| dt_m[i] + transport[i] - force[i] - r.dq_r_tilde[i] - r.dp_r1[i] - r.dp_r2[i])
            .collect();
        let norms = [sup(&dt_m), sup(&transport), sup(&force), sup(&r.dq_r_tilde), sup(&r.dp_r1), sup(&r.dp_r2)];
        let scale = norms.iter().copied().fold(0.0, f64::max);
        let mismatch = sup(&delta);
        let rel = if scale > 0.0 { mismatch / scale } else { mismatch };
        if rel >= report.max_relative {
            report.max_relative = rel;
            report.term_norms = norms;
            report.mismatch = mismatch;
        }
        report.times.push(snap.time);
        report.relative.push(rel);
    }
    Ok(report)
}

/// Smooth test function `φ(x) = b((x − center)/radius)`, `b(x) = exp(1 − 1/(1 − x²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpTest {
    pub center: f64,
    pub radius: f64,
}

impl BumpTest {
    pub fn new(center: f64, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn value(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.radius;
        if t.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - t * t)).exp()
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.radius;
        if t.abs() >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - t * t;
        -(1.0 - 1.0 / u).exp() * 2.0 * t / (u * u) / self.radius
    }

    fn inside(&self, grid: &SpatialGrid) -> bool {
        let lo = grid.coordinate(0);
        let hi = grid.coordinate(grid.n() - 1);
        self.center - self.radius > lo && self.center + self.radius < hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    GradQ,
    GradP,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Pairing {
    pub value: f64,
    /// A test function reaches the edge of the phase grid.
    pub boundary_warning: bool,
}

fn boundary(phase: &PhaseGrid, phi_q: &BumpTest, phi_p: &BumpTest) -> bool {
    !(phi_q.inside(&phase.position) && phi_p.inside(&phase.momentum))
}

/// `∬ φ(q)φ(p) ∂_slot F` with the derivative moved onto the test function.
pub fn pairing(field: &[f64], phase: &PhaseGrid, phi_q: &BumpTest, phi_p: &BumpTest, slot: Slot) -> Result<Pairing> {
    if field.len() != phase.len() {
        return Err(Error::GridMismatch("field size does not match the phase grid".into()));
    }
    let qs = phase.position.coordinates();
    let ps = phase.momentum.coordinates();
    let (wq, wp): (Vec<f64>, Vec<f64>) = match slot {
        Slot::GradQ => (qs.iter().map(|&q| phi_q.derivative(q)).collect(), ps.iter().map(|&p| phi_p.value(p)).collect()),
        Slot::GradP => (qs.iter().map(|&q| phi_q.value(q)).collect(), ps.iter().map(|&p| phi_p.derivative(p)).collect()),
    };
    let mp = ps.len();
    let s: f64 = field.iter().enumerate().map(|(i, v)| wq[i / mp] * wp[i % mp] * v).sum();
    Ok(Pairing { value: -s * phase.cell_volume(), boundary_warning: boundary(phase, phi_q, phi_p) })
}

/// Same pairing, differentiating the field spectrally instead.
pub fn pairing_direct(field: &[f64], phase: &PhaseGrid, phi_q: &BumpTest, phi_p: &BumpTest, slot: Slot) -> Result<Pairing> {
    if field.len() != phase.len() {
        return Err(Error::GridMismatch("field size does not match the phase grid".into()));
    }
    let (nq, mp) = (phase.position.len(), phase.momentum.len());
    let mut div = vec![0.0; field.len()];
    match slot {
        Slot::GradQ => {
            let sp = Spectral::new(&phase.position);
            for ip in 0..mp {
                let col: Vec<f64> = (0..nq).map(|iq| field[iq * mp + ip]).collect();
                let d = sp.spectral_gradient(&col).swap_remove(0);
                for iq in 0..nq {
                    div[iq * mp + ip] = d[iq];
                }
            }
        }
        Slot::GradP => {
            let sp = Spectral::new(&phase.momentum);
            for iq in 0..nq {
                let d = sp.spectral_gradient(&field[iq * mp..(iq + 1) * mp]).swap_remove(0);
                div[iq * mp..(iq + 1) * mp].copy_from_slice(&d);
            }
        }
    }
    Ok(pairing_divergence(&div, phase, phi_q, phi_p))
}

/// `∬ φ(q)φ(p) D` for an already evaluated divergence `D`.
pub fn pairing_divergence(divergence: &[f64], phase: &PhaseGrid, phi_q: &BumpTest, phi_p: &BumpTest) -> Pairing {
    let qs = phase.position.coordinates();
    let ps = phase.momentum.coordinates();
    let mp = ps.len();
    let wq: Vec<f64> = qs.iter().map(|&q| phi_q.value(q)).collect();
    let wp: Vec<f64> = ps.iter().map(|&p| phi_p.value(p)).collect();
    let s: f64 = divergence.iter().enumerate().map(|(i, v)| wq[i / mp] * wp[i % mp] * v).sum();
    Pairing { value: s * phase.cell_volume(), boundary_warning: boundary(phase, phi_q, phi_p) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HbarRule {
    /// `ħ = N^{-1/d}`.
    Coupled,
    Manual(f64),
}

impl HbarRule {
    pub fn hbar(&self, particles: usize, dim: usize) -> f64 {
        match *self {
            HbarRule::Coupled => (particles as f64).powf(-1.0 / dim as f64),
            HbarRule::Manual(h) => h,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// State grid.
    pub n: usize,
    pub length: f64,
    /// Phase grid (positions must divide `n`).
    pub phase_n: usize,
    pub phase_m: usize,
    pub p_max: f64,
    pub particles: Vec<usize>,
    pub epsilon: f64,
    pub t_final: f64,
    pub dt: f64,
    pub envelope: Envelope,
    pub exchange: bool,
    pub hbar: HbarRule,
    /// `None`: bare kernel for the limit equation.
    pub vlasov_beta: Option<f64>,
    /// Edge width of the limiting disk.
    pub disk_edge: f64,
    pub phi_q: BumpTest,
    pub phi_p: BumpTest,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n: 256,
            length: 8.0,
            phase_n: 64,
            phase_m: 64,
            p_max: 4.0,
            particles: vec![4, 8, 16],
            epsilon: 0.04,
            t_final: 0.5,
            dt: 0.002,
            envelope: Envelope::Bump,
            exchange: true,
            hbar: HbarRule::Coupled,
            vlasov_beta: None,
            disk_edge: 0.05,
            phi_q: BumpTest::new(0.0, 3.0),
            phi_p: BumpTest::new(0.0, 3.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub particles: usize,
    pub hbar: f64,
    pub beta: f64,
    pub pairing_r_tilde: f64,
    pub pairing_r1: f64,
    pub pairing_r2: f64,
    pub vlasov_distance: f64,
    /// Set when the row failed; the numeric columns are then NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Log-log slopes against ħ over the successful rows.
    pub slope_r_tilde: f64,
    pub slope_r1: f64,
    pub slope_r2: f64,
    pub slope_vlasov: f64,
}

pub const SWEEP_HEADER: &str = "N,hbar,beta,pairing_r_tilde,pairing_r1,pairing_r2,vlasov_distance";

impl SweepResult {
    /// CSV with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.particles, r.hbar, r.beta, r.pairing_r_tilde, r.pairing_r1, r.pairing_r2, r.vlasov_distance
            ));
        }
        out
    }
}

/// The phase grid and Vlasov state of the limit equation at `t_final`.
fn vlasov_reference(cfg: &SweepConfig, energy: f64) -> Result<crate::vlasov::VlasovState> {
    let phase = PhaseGrid::from_extents(1, cfg.phase_n, cfg.length, cfg.phase_m, cfg.p_max)?;
    let kernel = match cfg.vlasov_beta {
        None => RegularizedKernel::bare(&phase.position, KernelMode::Green1d)?,
        Some(b) => RegularizedKernel::build(b, &phase.position, KernelMode::Green1d)?,
    };
    let solver = VlasovSolver::new(&phase, &kernel)?;
    let mut st = disk_limit(phase, energy, cfg.disk_edge)?;
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    for _ in 0..steps {
        solver.step(&mut st, cfg.dt)?;
    }
    Ok(st)
}

fn sweep_row(cfg: &SweepConfig, particles: usize) -> Result<SweepRow> {
    let hbar = cfg.hbar.hbar(particles, 1);
    let beta = beta_for(particles, cfg.epsilon);
    let grid = SpatialGrid::new(1, cfg.n, cfg.length)?;
    let phase = PhaseGrid::from_extents(1, cfg.phase_n, cfg.length, cfg.phase_m, cfg.p_max)?;
    let kernel = RegularizedKernel::build(beta, &grid, KernelMode::Green1d)?;
    let slater = SlaterState::build(OrbitalKind::Harmonic, grid, particles, hbar, 0)?;
    let gamma0 = slater_density(&slater)?;
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let mut hf = HFConfig::new(cfg.dt, steps);
    hf.exchange = cfg.exchange;
    let snaps = evolve_hartree_fock(&gamma0, &kernel, hf)?;
    let gamma = &snaps.last().expect("final snapshot").gamma;
    let frame = CoherentFrame::new(cfg.envelope, hbar, grid)?;
    let view = quasi_free_two_body(gamma);
    let r = residual_fields(gamma, &view, &frame, &kernel, &phase, CHORD_POINTS, cfg.t_final)?;
    let tilde = pairing(&r.r_tilde, &phase, &cfg.phi_q, &cfg.phi_p, Slot::GradQ)?;
    let r1 = pairing(&r.r1, &phase, &cfg.phi_q, &cfg.phi_p, Slot::GradP)?;
    let r2 = pairing(&r.r2, &phase, &cfg.phi_q, &cfg.phi_p, Slot::GradP)?;

    let limit = vlasov_reference(cfg, particles as f64 * hbar)?;
    let c = 1.0 / (particles as f64 * 2.0 * std::f64::consts::PI * hbar);
    let qs = phase.position.coordinates();
    let ps = phase.momentum.coordinates();
    let mp = ps.len();
    let distance = r
        .m
        .iter()
        .zip(&limit.values)
        .enumerate()
        .map(|(i, (mq, mv))| cfg.phi_q.value(qs[i / mp]) * cfg.phi_p.value(ps[i % mp]) * (c * mq - mv))
        .sum::<f64>()
        * phase.cell_volume();
    Ok(SweepRow {
        particles,
        hbar,
        beta,
        pairing_r_tilde: tilde.value.abs(),
        pairing_r1: r1.value.abs(),
        pairing_r2: r2.value.abs(),
        vlasov_distance: distance.abs(),
        error: None,
    })
}

/// Runs the sweep row by row; a failing row is recorded and skipped.
pub fn scaling_sweep(cfg: &SweepConfig) -> SweepResult {
    let rows: Vec<SweepRow> = cfg
        .particles
        .iter()
        .map(|&n| {
            sweep_row(cfg, n).unwrap_or_else(|e| SweepRow {
                particles: n,
                hbar: cfg.hbar.hbar(n, 1),
                beta: beta_for(n, cfg.epsilon),
                pairing_r_tilde: f64::NAN,
                pairing_r1: f64::NAN,
                pairing_r2: f64::NAN,
                vlasov_distance: f64::NAN,
                error: Some(e.to_string()),
            })
        })
        .collect();
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let slope = |pick: fn(&SweepRow) -> f64| -> f64 {
        if ok.len() < 2 {
            return f64::NAN;
        }
        let x: Vec<f64> = ok.iter().map(|r| r.hbar.ln()).collect();
        let y: Vec<f64> = ok.iter().map(|r| pick(r).ln()).collect();
        fit_slope(&x, &y)
    };
    SweepResult {
        slope_r_tilde: slope(|r| r.pairing_r_tilde),
        slope_r1: slope(|r| r.pairing_r1),
        slope_r2: slope(|r| r.pairing_r2),
        slope_vlasov: slope(|r| r.vlasov_distance),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{FewBodyWavefunction, two_body_from_wavefunction};

    fn setup(particles: usize, n: usize, hbar: f64) -> (OneBodyDensity, CoherentFrame, PhaseGrid) {
        let grid = SpatialGrid::new(1, n, 8.0).unwrap();
        let st = SlaterState::build(OrbitalKind::Harmonic, grid, particles, hbar, 0).unwrap();
        let gamma = slater_density(&st).unwrap();
        let frame = CoherentFrame::new(Envelope::Bump, hbar, grid).unwrap();
        let phase = PhaseGrid::from_extents(1, n / 4, 8.0, 32, 4.0).unwrap();
        (gamma, frame, phase)
    }

    #[test]
    fn r_tilde_vanishes_at_zero_momentum_for_real_kernels() {
        let (gamma, frame, _) = setup(4, 128, 0.25);
        let phase = PhaseGrid::from_extents(1, 32, 8.0, 2, 1.0).unwrap();
        // momentum grid {-1, 0}
        let r = residual_tilde(&gamma, &frame, &phase).unwrap();
        for iq in 0..32 {
            assert!(r.values[phase.index(iq, 1)].abs() < 1e-10);
        }
    }

    #[test]
    fn r_tilde_matches_dense_quadrature() {
        let (gamma, frame, phase) = setup(4, 128, 0.25);
        let r = residual_tilde(&gamma, &frame, &phase).unwrap();
        let qs = phase.position.coordinates();
        let ps = phase.momentum.coordinates();
        for &(iq, ip) in &[(10, 5), (16, 16), (20, 25), (13, 17), (7, 30)] {
            let (v, d) = residual_tilde_direct(&gamma, &frame, qs[iq], ps[ip]);
            let k = phase.index(iq, ip);
            assert!((v - r.values[k]).abs() < 1e-8, "{v} {}", r.values[k]);
            assert!((d - r.divergence[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_force_gives_zero_r1() {
        let (gamma, frame, phase) = setup(4, 64, 0.25);
        let kernel = RegularizedKernel::zero(gamma.grid());
        let r = residual_r1(&quasi_free_two_body(&gamma), &gamma, &frame, &kernel, &phase).unwrap();
        assert!(sup(&r.values) == 0.0 && sup(&r.divergence) == 0.0);
    }

    #[test]
    fn factorized_input_gives_zero_r2() {
        let (gamma, frame, phase) = setup(4, 64, 0.25);
        let kernel = RegularizedKernel::build(0.8, gamma.grid(), KernelMode::Green1d).unwrap();
        let r = residual_r2(&TwoBodyView::Factorized(gamma.clone()), &gamma, &frame, &kernel, &phase).unwrap();
        assert!(sup(&r.values) < 1e-12 && sup(&r.divergence) < 1e-12);
    }

    #[test]
    fn dense_and_quasi_free_agree_for_two_particles() {
        let (gamma, frame, phase) = setup(2, 32, 0.5);
        let grid = *gamma.grid();
        let st = SlaterState::build(OrbitalKind::Harmonic, grid, 2, 0.5, 0).unwrap();
        let psi = FewBodyWavefunction::from_slater(&st).unwrap();
        let dense = two_body_from_wavefunction(&psi).unwrap();
        let kernel = RegularizedKernel::build(0.8, &grid, KernelMode::Green1d).unwrap();
        let a = residual_fields(&gamma, &dense, &frame, &kernel, &phase, CHORD_POINTS, 0.0).unwrap();
        let b = residual_fields(&gamma, &quasi_free_two_body(&gamma), &frame, &kernel, &phase, CHORD_POINTS, 0.0).unwrap();
        for (x, y) in [(&a.r1, &b.r1), (&a.r2, &b.r2), (&a.dp_r1, &b.dp_r1), (&a.dp_r2, &b.dp_r2)] {
            let err = x.iter().zip(y).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "{err}");
        }
    }

    #[test]
    fn chord_quadrature_is_converged() {
        let (gamma, frame, phase) = setup(4, 64, 0.25);
        let kernel = RegularizedKernel::build(0.8, gamma.grid(), KernelMode::Green1d).unwrap();
        let view = quasi_free_two_body(&gamma);
        let a = residual_fields(&gamma, &view, &frame, &kernel, &phase, 8, 0.0).unwrap();
        let b = residual_fields(&gamma, &view, &frame, &kernel, &phase, 16, 0.0).unwrap();
        let err = a.r1.iter().zip(&b.r1).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn pairing_of_constant_field_vanishes() {
        // bump spectra decay like exp(-c√k): resolve the test functions well
        let phase = PhaseGrid::from_extents(1, 1024, 8.0, 1024, 4.0).unwrap();
        let field = vec![2.5; phase.len()];
        let (a, b) = (BumpTest::new(0.3, 2.0), BumpTest::new(-0.2, 1.5));
        for slot in [Slot::GradQ, Slot::GradP] {
            let p = pairing(&field, &phase, &a, &b, slot).unwrap();
            assert!(p.value.abs() < 1e-10, "{}", p.value);
            assert!(!p.boundary_warning);
        }
        assert!(pairing(&field, &phase, &BumpTest::new(3.5, 1.0), &b, Slot::GradQ).unwrap().boundary_warning);
    }

    #[test]
    fn pairing_paths_agree_on_smooth_fields() {
        let phase = PhaseGrid::from_extents(1, 512, 8.0, 512, 8.0).unwrap();
        let qs = phase.position.coordinates();
        let ps = phase.momentum.coordinates();
        let field: Vec<f64> = qs
            .iter()
            .flat_map(|&q| ps.iter().map(move |&p| (-(q - 0.3) * (q - 0.3) - 0.5 * p * p).exp() * (1.0 + q * p)))
            .collect();
        let (a, b) = (BumpTest::new(0.0, 3.0), BumpTest::new(0.5, 3.0));
        for slot in [Slot::GradQ, Slot::GradP] {
            let x = pairing(&field, &phase, &a, &b, slot).unwrap().value;
            let y = pairing_direct(&field, &phase, &a, &b, slot).unwrap().value;
            assert!((x - y).abs() < 1e-8, "{x} {y}");
        }
    }
}
