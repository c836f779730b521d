//! Coherent states, Husimi and Wigner transforms (one spatial dimension).
//!
//! Coherent vectors are `f_{q,p}(y) = ħ^{-1/4} F((y-q)/√ħ) e^{ipy/ħ}` with
//! `y = q + d` and `d` the minimum-image displacement, so they stay
//! unwrapped around `q`. Each vector is renormalized on the grid.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{gauss_legendre_unit, PhaseGrid, SpatialGrid, Spectral};
use crate::state::{OneBodyDensity, SlaterState, TwoBodyView};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    /// `π^{-1/4} e^{-x²/2}`, truncated at `|x| = 8`.
    #[serde(alias = "gauss")]
    Gaussian,
    /// Normalized `exp(1 - 1/(1-x²))` on `|x| < 1`.
    Bump,
}

impl std::str::FromStr for Envelope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss" | "gaussian" => Ok(Envelope::Gaussian),
            "bump" => Ok(Envelope::Bump),
            other => Err(Error::config(format!("unknown envelope '{other}'"))),
        }
    }
}

fn bump_raw(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - x * x)).exp()
    }
}

fn bump_l2_constant() -> f64 {
    static CONST: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *CONST.get_or_init(|| {
        let (nodes, weights) = gauss_legendre_unit(32);
        let panels = 400;
        let h = 2.0 / panels as f64;
        let mut s = 0.0;
        for k in 0..panels {
            let a = -1.0 + k as f64 * h;
            for (x, w) in nodes.iter().zip(&weights) {
                s += w * h * bump_raw(a + x * h).powi(2);
            }
        }
        1.0 / s.sqrt()
    })
}

impl Envelope {
    /// Support radius in units of `√ħ`.
    pub fn support_radius(self) -> f64 {
        match self {
            Envelope::Gaussian => 8.0,
            Envelope::Bump => 1.0,
        }
    }

    pub fn value(self, x: f64) -> f64 {
        match self {
            Envelope::Gaussian => PI.powf(-0.25) * (-0.5 * x * x).exp(),
            Envelope::Bump => bump_l2_constant() * bump_raw(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Envelope::Gaussian => -x * self.value(x),
            Envelope::Bump => {
                if x.abs() >= 1.0 {
                    return 0.0;
                }
                let s = 1.0 - x * x;
                self.value(x) * (-2.0 * x / (s * s))
            }
        }
    }

    pub fn second_derivative(self, x: f64) -> f64 {
        match self {
            Envelope::Gaussian => (x * x - 1.0) * self.value(x),
            Envelope::Bump => {
                if x.abs() >= 1.0 {
                    return 0.0;
                }
                let s = 1.0 - x * x;
                let x2 = x * x;
                self.value(x) * (4.0 * x2 / s.powi(4) - 2.0 / (s * s) - 8.0 * x2 / s.powi(3))
            }
        }
    }
}

/// Envelope, semiclassical parameter and the state grid it samples on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentFrame {
    pub envelope: Envelope,
    pub hbar: f64,
    pub grid: SpatialGrid,
}

/// Coherent vector restricted to the support of its envelope.
#[derive(Debug, Clone)]
pub struct CoherentVector {
    pub indices: Vec<usize>,
    /// Unwrapped positions `y = q + d`.
    pub positions: Vec<f64>,
    pub values: Vec<C64>,
    /// Scaled envelope samples `ħ^{-1/4}F(d/√ħ)` (before modulation).
    pub amplitudes: Vec<f64>,
    /// Normalization applied to `amplitudes` to give unit norm on the grid.
    pub normalization: f64,
    /// The envelope support reaches half the box.
    pub leaked: bool,
}

impl CoherentVector {
    pub fn to_dense(&self, len: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); len];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    /// `Σ conj f(y) h(y)` over the support (no cell weight).
    #[inline]
    pub fn dot(&self, h: &[C64]) -> C64 {
        self.indices.iter().zip(&self.values).map(|(&i, v)| v.conj() * h[i]).sum()
    }
}

impl CoherentFrame {
    pub fn new(envelope: Envelope, hbar: f64, grid: SpatialGrid) -> Result<Self> {
        if !(hbar > 0.0) {
            return Err(Error::config("hbar must be positive"));
        }
        if grid.dim() != 1 {
            return Err(Error::Capability("phase-space transforms are implemented for d = 1".into()));
        }
        Ok(Self { envelope, hbar, grid })
    }

    /// Support radius `√ħ R` in position units.
    pub fn radius(&self) -> f64 {
        self.hbar.sqrt() * self.envelope.support_radius()
    }

    fn support(&self, q: f64) -> (Vec<usize>, Vec<f64>, bool) {
        let r = self.radius();
        let half = 0.5 * self.grid.length();
        let cutoff = r.min(half);
        let mut idx = Vec::new();
        let mut disp = Vec::new();
        for i in 0..self.grid.n() {
            let d = self.grid.min_image(self.grid.coordinate(i) - q);
            if d.abs() < cutoff {
                idx.push(i);
                disp.push(d);
            }
        }
        (idx, disp, r >= half)
    }

    /// The normalized coherent vector at `(q, p)`.
    pub fn vector(&self, q: f64, p: f64) -> CoherentVector {
        let (indices, disp, leaked) = self.support(q);
        let sq = self.hbar.sqrt();
        let scale = self.hbar.powf(-0.25);
        let raw: Vec<f64> = disp.iter().map(|&d| scale * self.envelope.value(d / sq)).collect();
        let norm2: f64 = raw.iter().map(|v| v * v).sum::<f64>() * self.grid.spacing();
        let normalization = if norm2 > 0.0 { 1.0 / norm2.sqrt() } else { 0.0 };
        let amplitudes: Vec<f64> = raw.iter().map(|v| v * normalization).collect();
        let positions: Vec<f64> = disp.iter().map(|d| q + d).collect();
        let values = amplitudes
            .iter()
            .zip(&positions)
            .map(|(&a, &y)| C64::from_polar(a, p * y / self.hbar))
            .collect();
        CoherentVector { indices, positions, values, amplitudes, normalization, leaked }
    }

    /// `∂_q f` (first) and `∂_q² f` (second) at grid points, with the same
    /// normalization as [`CoherentFrame::vector`].
    pub fn q_derivatives(&self, base: &CoherentVector, q: f64, p: f64) -> (Vec<C64>, Vec<C64>) {
        let sq = self.hbar.sqrt();
        let c1 = -self.hbar.powf(-0.75) * base.normalization;
        let c2 = self.hbar.powf(-1.25) * base.normalization;
        let mut first = Vec::with_capacity(base.indices.len());
        let mut second = Vec::with_capacity(base.indices.len());
        for &y in &base.positions {
            let x = (y - q) / sq;
            let phase = C64::from_polar(1.0, p * y / self.hbar);
            first.push(phase * (c1 * self.envelope.derivative(x)));
            second.push(phase * (c2 * self.envelope.second_derivative(x)));
        }
        (first, second)
    }
}

/// Dense coherent vector (the operation exposed to callers).
pub fn coherent_vector(frame: &CoherentFrame, q: f64, p: f64) -> (Vec<C64>, bool) {
    let v = frame.vector(q, p);
    (v.to_dense(frame.grid.len()), v.leaked)
}

/// Real function on a phase grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HusimiField {
    pub grid: PhaseGrid,
    pub hbar: f64,
    pub particles: usize,
    pub values: Vec<f64>,
}

impl HusimiField {
    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `ϱ(q) = ∫ m(q,p) dp`.
    pub fn position_density(&self) -> Vec<f64> {
        let m = self.grid.momentum.len();
        let dp = self.grid.momentum.cell_volume();
        self.values.chunks(m).map(|row| row.iter().sum::<f64>() * dp).collect()
    }
}

fn check_frame(frame: &CoherentFrame, grid: &SpatialGrid, hbar: f64, phase: &PhaseGrid) -> Result<()> {
    if !frame.grid.same_as(grid) {
        return Err(Error::GridMismatch("frame and state grids differ".into()));
    }
    if (frame.hbar - hbar).abs() > 1e-14 * hbar {
        return Err(Error::config(format!("frame ħ = {} but state ħ = {}", frame.hbar, hbar)));
    }
    if phase.dim() != 1 {
        return Err(Error::Capability("phase grids are implemented for d = 1".into()));
    }
    Ok(())
}

/// `m(q,p) = ⟨f_{q,p}, γ f_{q,p}⟩` on every phase-grid point.
pub fn husimi_k1(gamma: &OneBodyDensity, frame: &CoherentFrame, phase: &PhaseGrid) -> Result<HusimiField> {
    check_frame(frame, gamma.grid(), gamma.hbar(), phase)?;
    let qs = phase.position.coordinates();
    let ps = phase.momentum.coordinates();
    let dx = frame.grid.spacing();
    let values: Vec<f64> = qs
        .par_iter()
        .flat_map_iter(|&q| {
            let base = frame.vector(q, 0.0);
            let s = base.indices.len();
            let block: Vec<C64> = base
                .indices
                .iter()
                .flat_map(|&u| base.indices.iter().map(move |&w| gamma.at(u, w)))
                .collect();
            let mut v = vec![C64::new(0.0, 0.0); s];
            ps.iter()
                .map(|&p| {
                    for (k, slot) in v.iter_mut().enumerate() {
                        *slot = C64::from_polar(base.amplitudes[k], p * base.positions[k] / frame.hbar);
                    }
                    let mut acc = C64::new(0.0, 0.0);
                    for a in 0..s {
                        let row = &block[a * s..(a + 1) * s];
                        let t: C64 = row.iter().zip(&v).map(|(g, x)| g * x).sum();
                        acc += v[a].conj() * t;
                    }
                    acc.re * dx * dx
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(HusimiField { grid: *phase, hbar: gamma.hbar(), particles: gamma.particle_count(), values })
}

/// `Σ_j |⟨f_{q,p}, e_j⟩|²`: the Husimi function of a Slater state summed
/// orbital by orbital.
pub fn husimi_slater_orbital_sum(state: &SlaterState, frame: &CoherentFrame, phase: &PhaseGrid) -> Result<HusimiField> {
    check_frame(frame, state.grid(), state.hbar(), phase)?;
    let qs = phase.position.coordinates();
    let ps = phase.momentum.coordinates();
    let dx = frame.grid.spacing();
    let values = qs
        .par_iter()
        .flat_map_iter(|&q| {
            ps.iter()
                .map(|&p| {
                    let f = frame.vector(q, p);
                    state.orbitals().iter().map(|e| (f.dot(e) * dx).norm_sqr()).sum::<f64>()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(HusimiField { grid: *phase, hbar: state.hbar(), particles: state.particle_count(), values })
}

/// Two-point Husimi function; `values[a * P + b] = m⁽²⁾(z_a, z_b)` with `P`
/// the number of phase points.
#[derive(Debug, Clone)]
pub struct Husimi2Field {
    pub grid: PhaseGrid,
    pub hbar: f64,
    pub particles: usize,
    pub values: Vec<f64>,
}

impl Husimi2Field {
    pub fn swap_asymmetry(&self) -> f64 {
        let n = self.grid.len();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                worst = worst.max((self.values[a * n + b] - self.values[b * n + a]).abs());
            }
        }
        worst
    }
}

/// Row evaluator for `m⁽²⁾(z_a, ·)`.
struct K2Rows<'a> {
    view: &'a TwoBodyView,
    frame: &'a CoherentFrame,
    vectors: Vec<CoherentVector>,
    diagonal: Vec<f64>,
}

impl<'a> K2Rows<'a> {
    fn new(view: &'a TwoBodyView, frame: &'a CoherentFrame, phase: &PhaseGrid) -> Result<Self> {
        check_frame(frame, view.grid(), view.hbar(), phase)?;
        let qs = phase.position.coordinates();
        let ps = phase.momentum.coordinates();
        let vectors: Vec<CoherentVector> =
            qs.iter().flat_map(|&q| ps.iter().map(move |&p| (q, p))).map(|(q, p)| frame.vector(q, p)).collect();
        let dx = frame.grid.spacing();
        let diagonal = match view {
            TwoBodyView::QuasiFree(g) | TwoBodyView::Factorized(g) => vectors
                .par_iter()
                .map(|f| {
                    let h: Vec<C64> = apply_sparse(g, f);
                    (f.dot(&h) * dx).re
                })
                .collect(),
            TwoBodyView::Dense(_) => Vec::new(),
        };
        Ok(Self { view, frame, vectors, diagonal })
    }

    fn row(&self, a: usize) -> Vec<f64> {
        let dx = self.frame.grid.spacing();
        let fa = &self.vectors[a];
        match self.view {
            TwoBodyView::QuasiFree(g) => {
                let h = g.apply(&fa.to_dense(self.frame.grid.len()));
                self.vectors
                    .iter()
                    .enumerate()
                    .map(|(b, fb)| {
                        let o = fb.dot(&h) * dx;
                        self.diagonal[a] * self.diagonal[b] - o.norm_sqr()
                    })
                    .collect()
            }
            TwoBodyView::Factorized(_) => self.diagonal.iter().map(|mb| self.diagonal[a] * mb).collect(),
            TwoBodyView::Dense(d) => {
                let len = self.frame.grid.len();
                let rank = d.rank();
                // T(x2, r) = Σ_{x1} conj f_a(x1) Φ(x1, x2, r) dx
                let mut t = vec![C64::new(0.0, 0.0); len * rank];
                for (&x1, v) in fa.indices.iter().zip(&fa.values) {
                    let c = v.conj() * dx;
                    for x2 in 0..len {
                        let row = d.factor_row(x1, x2);
                        let dst = &mut t[x2 * rank..(x2 + 1) * rank];
                        dst.iter_mut().zip(row).for_each(|(o, r)| *o += c * r);
                    }
                }
                self.vectors
                    .iter()
                    .map(|fb| {
                        let mut acc = vec![C64::new(0.0, 0.0); rank];
                        for (&x2, v) in fb.indices.iter().zip(&fb.values) {
                            let c = v.conj() * dx;
                            acc.iter_mut().zip(&t[x2 * rank..(x2 + 1) * rank]).for_each(|(o, r)| *o += c * r);
                        }
                        acc.iter().map(|v| v.norm_sqr()).sum()
                    })
                    .collect()
            }
        }
    }
}

fn apply_sparse(gamma: &OneBodyDensity, f: &CoherentVector) -> Vec<C64> {
    let dx = gamma.grid().spacing();
    (0..gamma.grid().len())
        .map(|x| {
            let row = gamma.row(x);
            f.indices.iter().zip(&f.values).map(|(&w, v)| row[w] * v).sum::<C64>() * dx
        })
        .collect()
}

/// `m⁽²⁾(z_1, z_2) = ⟨f_{z1}⊗f_{z2}, γ⁽²⁾ f_{z1}⊗f_{z2}⟩` on all pairs of phase points.
pub fn husimi_k2(view: &TwoBodyView, frame: &CoherentFrame, phase: &PhaseGrid) -> Result<Husimi2Field> {
    let rows = K2Rows::new(view, frame, phase)?;
    let n = phase.len();
    let values: Vec<f64> = (0..n).into_par_iter().flat_map_iter(|a| rows.row(a)).collect();
    Ok(Husimi2Field { grid: *phase, hbar: frame.hbar, particles: view.particle_count(), values })
}

/// `(2πħ)^{-1} ∬ m⁽²⁾(z, z_2) dz_2` at every phase point `z`, without storing
/// the two-point field.
pub fn husimi_k2_marginal(view: &TwoBodyView, frame: &CoherentFrame, phase: &PhaseGrid) -> Result<Vec<f64>> {
    let rows = K2Rows::new(view, frame, phase)?;
    let w = phase.cell_volume() / (2.0 * PI * frame.hbar);
    Ok((0..phase.len()).into_par_iter().map(|a| rows.row(a).iter().sum::<f64>() * w).collect())
}

/// Brute-force `Σ conj f1(u1) conj f2(u2) γ⁽²⁾(u1,u2;w1,w2) f1(w1) f2(w2) dx⁴`.
pub fn husimi_k2_direct(view: &TwoBodyView, frame: &CoherentFrame, z1: (f64, f64), z2: (f64, f64)) -> f64 {
    let f1 = frame.vector(z1.0, z1.1);
    let f2 = frame.vector(z2.0, z2.1);
    let dx = frame.grid.spacing();
    let mut acc = C64::new(0.0, 0.0);
    for (&u1, a1) in f1.indices.iter().zip(&f1.values) {
        for (&u2, a2) in f2.indices.iter().zip(&f2.values) {
            let left = a1.conj() * a2.conj();
            for (&w1, b1) in f1.indices.iter().zip(&f1.values) {
                for (&w2, b2) in f2.indices.iter().zip(&f2.values) {
                    acc += left * view.eval(u1, u2, w1, w2) * b1 * b2;
                }
            }
        }
    }
    acc.re * dx.powi(4)
}

/// Signed phase-space function from the Wigner transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WignerField {
    pub grid: PhaseGrid,
    pub hbar: f64,
    pub particles: usize,
    pub values: Vec<f64>,
}

impl WignerField {
    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Phase grid natural to the discrete Wigner transform: the state's
/// positions and `n` momenta `p_k = πħk/L`, `k ∈ [-n/2, n/2)`.
pub fn wigner_phase_grid(grid: &SpatialGrid, hbar: f64) -> Result<PhaseGrid> {
    let n = grid.n();
    let momentum = SpatialGrid::new(1, n, n as f64 * PI * hbar / grid.length())?;
    PhaseGrid::new(*grid, momentum)
}

/// `W(x,p) = N^{-1} ∫ γ(x + ħy/2; x − ħy/2) e^{-ipy} dy`, realized with
/// `ħy/2 = j·dx` and `|j| ≤ n/4`.
pub fn wigner_k1(gamma: &OneBodyDensity) -> Result<WignerField> {
    let grid = *gamma.grid();
    if grid.dim() != 1 {
        return Err(Error::Capability("the Wigner transform is implemented for d = 1".into()));
    }
    let hbar = gamma.hbar();
    let n = grid.n();
    let phase = wigner_phase_grid(&grid, hbar)?;
    let twiddle: Vec<C64> = (0..n).map(|t| C64::from_polar(1.0, -2.0 * PI * t as f64 / n as f64)).collect();
    let scale = 2.0 * grid.spacing() / (hbar * gamma.particle_count() as f64);
    let values = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            // Separations 2j·dx beyond half the box belong to the antipodal
            // midpoint; |j| = n/4 sits on the seam and gets half weight.
            let quarter = (n / 4) as i64;
            let samples: Vec<(i64, C64)> = (-quarter..=quarter)
                .map(|j| {
                    let a = grid.wrap_index(i as i64 + j);
                    let b = grid.wrap_index(i as i64 - j);
                    let w = if j.abs() == quarter { 0.5 } else { 1.0 };
                    (j, gamma.at(a, b) * w)
                })
                .collect();
            let twiddle = &twiddle;
            (0..n).map(move |ip| {
                let k = ip as i64 - (n / 2) as i64;
                let s: C64 = samples
                    .iter()
                    .map(|&(j, v)| v * twiddle[(k * j).rem_euclid(n as i64) as usize])
                    .sum();
                s.re * scale
            })
        })
        .collect();
    Ok(WignerField { grid: phase, hbar, particles: gamma.particle_count(), values })
}

/// `m = ħN · (W ∗ 𝒢^ħ)` with `𝒢^ħ = (πħ)^{-1} e^{-(q²+p²)/ħ}`, as a periodic
/// convolution on the Wigner grid.
pub fn husimi_from_wigner(w: &WignerField) -> Result<HusimiField> {
    let n = w.grid.position.n();
    if w.grid.momentum.n() != n || w.grid.dim() != 1 {
        return Err(Error::GridMismatch("Wigner grid must be square and one-dimensional".into()));
    }
    let hbar = w.hbar;
    let dq = w.grid.position.spacing();
    let dp = w.grid.momentum.spacing();
    let square = SpatialGrid::new(2, n, 1.0)?;
    let spectral = Spectral::new(&square);
    let kernel: Vec<C64> = (0..n * n)
        .map(|flat| {
            let q = square.mode(flat / n) as f64 * dq;
            let p = square.mode(flat % n) as f64 * dp;
            C64::new((-(q * q + p * p) / hbar).exp() / (PI * hbar), 0.0)
        })
        .collect();
    let mut a: Vec<C64> = w.values.iter().map(|&v| C64::new(v, 0.0)).collect();
    spectral.forward_in_place(&mut a);
    let b = spectral.fft_forward(&kernel);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y);
    spectral.inverse_in_place(&mut a);
    let factor = n as f64 * dq * dp * hbar * w.particles as f64;
    Ok(HusimiField {
        grid: w.grid,
        hbar,
        particles: w.particles,
        values: a.iter().map(|v| v.re * factor).collect(),
    })
}

/// Test functions for the oscillatory-integral probe, supported in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    Bump,
    /// Indicator of `[-1, 1]`.
    Step,
}

impl TestFunction {
    pub fn value(self, p: f64) -> f64 {
        match self {
            TestFunction::Bump => bump_raw(p),
            TestFunction::Step => {
                if p.abs() <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫ e^{ikp} g(p) dp` by composite Gauss-Legendre.
    pub fn fourier(self, k: f64) -> C64 {
        let (nodes, weights) = gauss_legendre_unit(16);
        let panels = 256 + (k.abs() * 2.0) as usize;
        let h = 2.0 / panels as f64;
        let mut s = C64::new(0.0, 0.0);
        for j in 0..panels {
            let a = -1.0 + j as f64 * h;
            for (x, w) in nodes.iter().zip(&weights) {
                let p = a + x * h;
                s += C64::from_polar(w * h * self.value(p), k * p);
            }
        }
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscillationReport {
    pub alpha: f64,
    pub order: u32,
    pub hbars: Vec<f64>,
    /// `sup |∫ e^{ipx/ħ} g(p) dp|` over `|x| ∈ ħ^α·[1, 4]`.
    pub sup_values: Vec<f64>,
    /// Fitted exponent `e` in `sup ~ ħ^e`.
    pub exponent: f64,
    /// `(1 − α)·s`.
    pub target: f64,
    /// `exponent / (1 − α)`: the Fourier decay order actually seen.
    pub effective_order: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn oscillation_probe(g: TestFunction, hbars: &[f64], alpha: f64, order: u32) -> Result<OscillationReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if hbars.len() < 2 || hbars.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::config("need at least two positive ħ values"));
    }
    let samples = 400;
    let sup_values: Vec<f64> = hbars
        .par_iter()
        .map(|&hbar| {
            let base = hbar.powf(alpha);
            (0..=samples)
                .map(|i| {
                    let x = base * (1.0 + 3.0 * i as f64 / samples as f64);
                    g.fourier(x / hbar).norm()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let lx: Vec<f64> = hbars.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = sup_values.iter().map(|v| v.ln()).collect();
    let exponent = fit_slope(&lx, &ly);
    Ok(OscillationReport {
        alpha,
        order,
        hbars: hbars.to_vec(),
        sup_values,
        exponent,
        target: (1.0 - alpha) * order as f64,
        effective_order: exponent / (1.0 - alpha),
    })
}
