//! Closed control loops around the exceptional point, fixed-step RK4
//! integration of i dψ/dt = H(t)ψ along them, and permutation extraction.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::eigen::eigenvalues;
use crate::error::{Error, Result};
use crate::hamiltonian::{
    build_perturbed_nhh, compute_alpha, compute_phi, field_point, metric_for_phi, unit_field, FieldPoint,
    SystemConfig,
};
use crate::linalg::{inner, norm, ComplexMatrix, ZERO};
use crate::permutation::Permutation;
use crate::spectral::{eigensystem_sorted, EigenSystem, REALITY_TOLERANCE};

/// Minimum distance a loop must keep from the exceptional points (0, ±1).
pub const EP_EXCLUSION_RADIUS: f64 = 1e-2;

pub const DEFAULT_STEPS: usize = 200_000;
pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_THRESHOLD: f64 = 0.9;

/// A state norm above this aborts the integration.
pub const NORM_BLOWUP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub enum Direction {
    CounterClockwise,
    Clockwise,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::CounterClockwise => 1.0,
            Direction::Clockwise => -1.0,
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Direction::CounterClockwise => Direction::Clockwise,
            Direction::Clockwise => Direction::CounterClockwise,
        }
    }
}

impl TryFrom<i32> for Direction {
    type Error = String;
    fn try_from(v: i32) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Direction::CounterClockwise),
            -1 => Ok(Direction::Clockwise),
            _ => Err(format!("direction must be +1 or -1, got {v}")),
        }
    }
}

impl From<Direction> for i32 {
    fn from(d: Direction) -> i32 {
        d.sign() as i32
    }
}

/// Elliptic loop x = r_x sin θ, y = r_y (1 + cos θ), θ = ±ωt + φ₀, with the
/// couplings of `modulated` pairs scaled by cos²(ωt/2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationSchedule {
    pub config: SystemConfig,
    pub r_x: f64,
    pub r_y: f64,
    pub period: f64,
    pub phi0: f64,
    pub direction: Direction,
    /// Modulated qubit pairs, 1-based, k < l.
    pub modulated: Vec<(usize, usize)>,
}

impl ModulationSchedule {
    pub fn new(
        config: SystemConfig,
        r_x: f64,
        r_y: f64,
        period: f64,
        phi0: f64,
        direction: Direction,
        modulated: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let s = Self { config, r_x, r_y, period, phi0, direction, modulated };
        s.validate()?;
        Ok(s)
    }

    /// Counter-clockwise loop starting at the origin (φ₀ = π).
    pub fn from_origin(config: SystemConfig, r_x: f64, r_y: f64, period: f64, modulated: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(config, r_x, r_y, period, PI, Direction::CounterClockwise, modulated)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidParameter("period must be positive".into()));
        }
        if !(self.r_x.is_finite() && self.r_y.is_finite() && self.phi0.is_finite()) {
            return Err(Error::InvalidParameter("loop parameters must be finite".into()));
        }
        let n = self.config.n_qubits;
        for &(k, l) in &self.modulated {
            if k == 0 || l == 0 || k > n || l > n || k == l {
                return Err(Error::InvalidParameter(format!("modulated pair ({k},{l}) is not a qubit pair")));
            }
        }
        let (clearance, (x, y)) = self.ep_clearance();
        if clearance < EP_EXCLUSION_RADIUS {
            return Err(Error::Divergent {
                x,
                y,
                reason: format!(
                    "loop passes within {clearance:.3e} of an exceptional point (exclusion radius {EP_EXCLUSION_RADIUS})"
                ),
            });
        }
        Ok(())
    }

    pub fn with_direction(&self, direction: Direction) -> Self {
        Self { direction, ..self.clone() }
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI / self.period
    }

    pub fn theta(&self, t: f64) -> f64 {
        self.direction.sign() * self.omega() * t + self.phi0
    }

    pub fn control(&self, t: f64) -> (f64, f64) {
        let th = self.theta(t);
        (self.r_x * th.sin(), self.r_y * (1.0 + th.cos()))
    }

    pub fn is_modulated(&self, k: usize, l: usize) -> bool {
        self.modulated.iter().any(|&(a, b)| (a == k + 1 && b == l + 1) || (a == l + 1 && b == k + 1))
    }

    pub fn envelope(&self, t: f64) -> f64 {
        let c = (0.5 * self.omega() * t).cos();
        c * c
    }

    pub fn couplings_at(&self, t: f64) -> Vec<Vec<f64>> {
        let env = self.envelope(t);
        let n = self.config.n_qubits;
        (0..n)
            .map(|k| {
                (0..n)
                    .map(|l| {
                        let j = self.config.couplings[k][l];
                        if self.is_modulated(k, l) { j * env } else { j }
                    })
                    .collect()
            })
            .collect()
    }

    /// Smallest distance of the loop from (0, ±1) and the loop point where
    /// it is attained.
    pub fn ep_clearance(&self) -> (f64, (f64, f64)) {
        let dist = |th: f64| {
            let (x, y) = (self.r_x * th.sin(), self.r_y * (1.0 + th.cos()));
            (x.hypot(y - 1.0).min(x.hypot(y + 1.0)), (x, y))
        };
        const N: usize = 4096;
        let step = 2.0 * PI / N as f64;
        let mut best = (f64::INFINITY, (0.0, 0.0), 0.0);
        for i in 0..N {
            let th = i as f64 * step;
            let (d, p) = dist(th);
            if d < best.0 {
                best = (d, p, th);
            }
        }
        // Golden-section refinement around the coarse minimum.
        let (mut a, mut b) = (best.2 - step, best.2 + step);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if dist(c).0 < dist(d).0 {
                b = d;
            } else {
                a = c;
            }
        }
        let (d, p) = dist(0.5 * (a + b));
        if d < best.0 { (d, p) } else { (best.0, best.1) }
    }
}

/// Control point and coupling matrix at time t ∈ [0, T].
pub fn schedule_eval(s: &ModulationSchedule, t: f64) -> Result<(FieldPoint, Vec<Vec<f64>>)> {
    if !(0.0..=s.period).contains(&t) {
        return Err(Error::InvalidParameter(format!("t = {t} outside [0, {}]", s.period)));
    }
    let (x, y) = s.control(t);
    let p = field_point(&s.config, x, y)?;
    let (fx, fy) = (x.hypot(y - 1.0), x.hypot(y + 1.0));
    if fx.min(fy) < EP_EXCLUSION_RADIUS {
        return Err(Error::Divergent { x, y, reason: "inside the loop exclusion disk".into() });
    }
    Ok((p, s.couplings_at(t)))
}

/// Dense H(t) + ε σ_z¹.
pub fn hamiltonian_at(s: &ModulationSchedule, t: f64, epsilon: f64) -> Result<ComplexMatrix> {
    let (p, j) = schedule_eval(s, t)?;
    build_perturbed_nhh(&s.config, &p, Some(&j), epsilon)
}

/// Matrix-free H(t) acting through bit operations on basis indices.
pub(crate) struct SpinOperator {
    dim: usize,
    scales: Vec<f64>,
    masks: Vec<usize>,
    pairs: Vec<(usize, usize, f64, bool)>,
    zz: Vec<Vec<f64>>,
    z1: Vec<f64>,
}

/// Coefficients of H at one instant.
pub(crate) struct Instant {
    up: Vec<C64>,
    down: Vec<C64>,
    diag: Vec<f64>,
}

impl SpinOperator {
    pub(crate) fn new(s: &ModulationSchedule) -> Self {
        let n = s.config.n_qubits;
        let dim = 1 << n;
        let masks: Vec<usize> = (0..n).map(|k| 1 << (n - 1 - k)).collect();
        let sign = |i: usize, k: usize| if i & masks[k] == 0 { 1.0 } else { -1.0 };
        let pairs: Vec<(usize, usize, f64, bool)> = s
            .config
            .pairs()
            .into_iter()
            .map(|(k, l)| (k, l, s.config.couplings[k][l], s.is_modulated(k, l)))
            .filter(|p| p.2 != 0.0)
            .collect();
        let zz = pairs.iter().map(|&(k, l, _, _)| (0..dim).map(|i| sign(i, k) * sign(i, l)).collect()).collect();
        let z1 = (0..dim).map(|i| sign(i, 0)).collect();
        Self { dim, scales: s.config.field_scales.clone(), masks, pairs, zz, z1 }
    }

    pub(crate) fn instant(&self, s: &ModulationSchedule, t: f64, epsilon: f64, out: &mut Instant) -> Result<()> {
        let (x, y) = s.control(t);
        let phi = compute_phi(x, y);
        let alpha = compute_alpha(x, y)?;
        let (bx, by) = unit_field(phi, alpha);
        let iby = C64::new(-by.im, by.re);
        for (k, f) in self.scales.iter().enumerate() {
            out.up[k] = (bx + iby) * *f;
            out.down[k] = (bx - iby) * *f;
        }
        let env = s.envelope(t);
        for i in 0..self.dim {
            out.diag[i] = epsilon * self.z1[i];
        }
        for (p, &(_, _, j, modulated)) in self.pairs.iter().enumerate() {
            let j = if modulated { j * env } else { j };
            for (d, z) in out.diag.iter_mut().zip(&self.zz[p]) {
                *d += j * z;
            }
        }
        Ok(())
    }

    pub(crate) fn blank(&self) -> Instant {
        Instant { up: vec![ZERO; self.scales.len()], down: vec![ZERO; self.scales.len()], diag: vec![0.0; self.dim] }
    }

    /// out = −i H psi.
    #[inline]
    pub(crate) fn apply_minus_i(&self, h: &Instant, psi: &[C64], out: &mut [C64]) {
        for i in 0..self.dim {
            let mut acc = psi[i] * h.diag[i];
            for (k, &m) in self.masks.iter().enumerate() {
                let c = if i & m != 0 { h.up[k] } else { h.down[k] };
                acc += c * psi[i ^ m];
            }
            out[i] = C64::new(acc.im, -acc.re);
        }
    }
}

/// Classic RK4 over `windings` periods with `steps` steps per period.
/// `observe(step, t, ψ)` runs at step 0 and after every step.
pub(crate) fn integrate(
    s: &ModulationSchedule,
    psi0: &[C64],
    steps: usize,
    windings: usize,
    epsilon: f64,
    mut observe: impl FnMut(usize, f64, &[C64]) -> Result<()>,
) -> Result<Vec<C64>> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be positive".into()));
    }
    let op = SpinOperator::new(s);
    let dim = op.dim;
    if psi0.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, actual: psi0.len() });
    }
    let total = steps * windings;
    let h = s.period / steps as f64;
    let time = |i: usize| s.period * (i as f64 / steps as f64);
    let mut psi = psi0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim]);
    let (mut h0, mut hm, mut h1) = (op.blank(), op.blank(), op.blank());
    op.instant(s, 0.0, epsilon, &mut h0)?;
    observe(0, 0.0, &psi)?;
    for i in 0..total {
        let t = time(i);
        op.instant(s, t + 0.5 * h, epsilon, &mut hm)?;
        op.instant(s, time(i + 1), epsilon, &mut h1)?;
        op.apply_minus_i(&h0, &psi, &mut k1);
        for j in 0..dim {
            tmp[j] = psi[j] + k1[j] * (0.5 * h);
        }
        op.apply_minus_i(&hm, &tmp, &mut k2);
        for j in 0..dim {
            tmp[j] = psi[j] + k2[j] * (0.5 * h);
        }
        op.apply_minus_i(&hm, &tmp, &mut k3);
        for j in 0..dim {
            tmp[j] = psi[j] + k3[j] * h;
        }
        op.apply_minus_i(&h1, &tmp, &mut k4);
        for j in 0..dim {
            psi[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
        }
        std::mem::swap(&mut h0, &mut h1);
        if i % 64 == 63 || i + 1 == total {
            let nrm = norm(&psi);
            if !(nrm < NORM_BLOWUP) {
                return Err(Error::StepUnstable { t: time(i + 1), norm: nrm });
            }
        }
        observe(i + 1, time(i + 1), &psi)?;
    }
    Ok(psi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// RK4 steps per period.
    pub steps: usize,
    /// Coefficient of σ_z on the first qubit.
    pub epsilon: f64,
    /// Uniform output samples per run (both ends included).
    pub samples: usize,
    /// Number of times the loop is traversed.
    pub windings: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { steps: DEFAULT_STEPS, epsilon: 0.0, samples: DEFAULT_SAMPLES, windings: 1 }
    }
}

impl EvolveOptions {
    pub fn with_steps(steps: usize) -> Self {
        Self { steps, ..Self::default() }
    }
}

/// Eigenbasis of H(0) (+ ε σ_z¹) in ascending order: the state labels ψ_k.
pub fn initial_basis(s: &ModulationSchedule, epsilon: f64) -> Result<EigenSystem> {
    eigensystem_sorted(&hamiltonian_at(s, 0.0, epsilon)?, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    /// fidelities[i][k] = |⟨ψ_k|ψ(t_i)⟩|² with ψ(t_i) normalized.
    pub fidelities: Vec<Vec<f64>>,
    /// ⟨ψ|η(t)|ψ⟩ for the unnormalized state; NaN where η is undefined.
    pub eta_norms: Vec<f64>,
    pub state_norms: Vec<f64>,
}

impl Trajectory {
    pub fn final_fidelities(&self) -> &[f64] {
        self.fidelities.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Relative drift of the η-norm against its initial value.
    pub fn eta_drift(&self) -> f64 {
        let e0 = self.eta_norms[0];
        self.eta_norms.iter().fold(0.0, |m, e| m.max((e - e0).abs() / e0))
    }

    /// CSV with columns t, fidelity_1 … fidelity_n, eta_norm, state_norm.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.fidelities.first().map(|f| f.len()).unwrap_or(0);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|k| format!("fidelity_{k}")));
        header.push("eta_norm".into());
        header.push("state_norm".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.times.len() {
            let mut row = vec![format!("{:.16e}", self.times[i])];
            row.extend(self.fidelities[i].iter().map(|f| format!("{f:.16e}")));
            row.push(format!("{:.16e}", self.eta_norms[i]));
            row.push(format!("{:.16e}", self.state_norms[i]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn fidelities_against(basis: &[Vec<C64>], psi: &[C64]) -> Vec<f64> {
    let n = norm(psi);
    basis.iter().map(|b| inner(b, psi).norm_sqr() / (n * n)).collect()
}

fn sample_steps(total: usize, samples: usize) -> Vec<usize> {
    let samples = samples.max(2);
    let mut v: Vec<usize> = (0..samples).map(|j| j * total / (samples - 1)).collect();
    v.dedup();
    v
}

/// Integrates from `initial_state`, recording fidelities against the
/// initial eigenbasis, η-norms and Euclidean norms at uniform samples.
pub fn evolve(s: &ModulationSchedule, initial_state: &[C64], options: &EvolveOptions) -> Result<Trajectory> {
    let basis = initial_basis(s, options.epsilon)?;
    evolve_with_basis(s, initial_state, options, &basis.right_vectors)
}

pub fn evolve_with_basis(
    s: &ModulationSchedule,
    initial_state: &[C64],
    options: &EvolveOptions,
    basis: &[Vec<C64>],
) -> Result<Trajectory> {
    let total = options.steps * options.windings.max(1);
    let wanted = sample_steps(total, options.samples);
    let mut next = 0;
    let mut traj = Trajectory {
        times: Vec::with_capacity(wanted.len()),
        states: Vec::with_capacity(wanted.len()),
        fidelities: Vec::with_capacity(wanted.len()),
        eta_norms: Vec::with_capacity(wanted.len()),
        state_norms: Vec::with_capacity(wanted.len()),
    };
    let n = s.config.n_qubits;
    integrate(s, initial_state, options.steps, options.windings.max(1), options.epsilon, |step, t, psi| {
        if next < wanted.len() && step == wanted[next] {
            next += 1;
            let (x, y) = s.control(t);
            let eta = metric_for_phi(n, compute_phi(x, y))
                .map(|eta| inner(psi, &eta.matvec(psi)).re)
                .unwrap_or(f64::NAN);
            traj.times.push(t);
            traj.states.push(psi.to_vec());
            traj.fidelities.push(fidelities_against(basis, psi));
            traj.eta_norms.push(eta);
            traj.state_norms.push(norm(psi));
        }
        Ok(())
    })?;
    Ok(traj)
}

/// Final state only; cheapest path.
pub fn propagate(s: &ModulationSchedule, initial_state: &[C64], options: &EvolveOptions) -> Result<Vec<C64>> {
    integrate(s, initial_state, options.steps, options.windings.max(1), options.epsilon, |_, _, _| Ok(()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    /// Entry k is the 1-based label j maximizing |⟨ψ_j|ψ(T)⟩|² from ψ_{k+1}.
    pub mapping: Vec<usize>,
    pub confidences: Vec<f64>,
    pub valid: bool,
    /// Cycle notation when the mapping is bijective.
    pub cycles: Option<String>,
    #[serde(skip)]
    pub threshold: f64,
    /// final_fidelities[k][j] = |⟨ψ_j|ψ(T)⟩|² from ψ_k.
    #[serde(skip)]
    pub final_fidelities: Vec<Vec<f64>>,
}

impl PermutationOutcome {
    pub fn from_fidelities(final_fidelities: Vec<Vec<f64>>, threshold: f64) -> Self {
        let (mapping, confidences): (Vec<usize>, Vec<f64>) = final_fidelities
            .iter()
            .map(|row| {
                let (j, f) = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(j, f)| (j + 1, *f))
                    .unwrap_or((0, 0.0));
                (j, f)
            })
            .unzip();
        let perm = Permutation::from_images(&mapping).ok();
        let valid = perm.is_some() && confidences.iter().all(|&c| c >= threshold);
        Self { mapping, confidences, valid, cycles: perm.map(|p| p.to_string()), threshold, final_fidelities }
    }

    pub fn permutation(&self) -> Option<Permutation> {
        Permutation::from_images(&self.mapping).ok()
    }

    pub fn min_confidence(&self) -> f64 {
        self.confidences.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// The permutation, or the reason it cannot be trusted.
    pub fn require_valid(&self) -> Result<Permutation> {
        let Some(p) = self.permutation() else {
            let mut counts = vec![0usize; self.mapping.len() + 1];
            for &j in &self.mapping {
                counts[j] += 1;
            }
            let targets = (1..counts.len()).filter(|&j| counts[j] > 1).collect();
            return Err(Error::NotBijective { targets });
        };
        if self.min_confidence() < self.threshold {
            return Err(Error::LowConfidence { min_confidence: self.min_confidence(), threshold: self.threshold });
        }
        Ok(p)
    }
}

/// Runs every eigenstate of H(0) once around the loop and records where it
/// lands.
pub fn extract_permutation(s: &ModulationSchedule, options: &EvolveOptions, threshold: f64) -> Result<PermutationOutcome> {
    if !(threshold > 0.5 && threshold <= 1.0) {
        return Err(Error::InvalidParameter("threshold must lie in (0.5, 1]".into()));
    }
    let basis = initial_basis(s, options.epsilon)?;
    let rows = crate::par_map(&basis.right_vectors, |v| {
        propagate(s, v, options).map(|psi| fidelities_against(&basis.right_vectors, &psi))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PermutationOutcome::from_fidelities(rows, threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiralityReport {
    pub epsilon: f64,
    pub counter_clockwise: PermutationOutcome,
    pub clockwise: PermutationOutcome,
    pub agree: bool,
    pub min_fidelity_counter_clockwise: f64,
    pub min_fidelity_clockwise: f64,
    /// Largest |Im E| / spectral radius of H(t) + ε σ_z¹ along the loop.
    pub max_imag_energy: f64,
    /// Whether that ratio exceeds the reality tolerance.
    pub complex_spectrum: bool,
}

/// Winds the loop in both directions with perturbation ε.
pub fn chirality_probe(s: &ModulationSchedule, epsilon: f64, options: &EvolveOptions, threshold: f64) -> Result<ChiralityReport> {
    if epsilon < 0.0 {
        return Err(Error::InvalidParameter("epsilon must be non-negative".into()));
    }
    let opts = EvolveOptions { epsilon, ..*options };
    let ccw = extract_permutation(&s.with_direction(Direction::CounterClockwise), &opts, threshold)?;
    let cw = extract_permutation(&s.with_direction(Direction::Clockwise), &opts, threshold)?;
    let agree = ccw.mapping == cw.mapping;
    let max_imag_energy = max_imag_along_loop(s, epsilon, 256)?;
    Ok(ChiralityReport {
        epsilon,
        min_fidelity_counter_clockwise: ccw.min_confidence(),
        min_fidelity_clockwise: cw.min_confidence(),
        counter_clockwise: ccw,
        clockwise: cw,
        agree,
        max_imag_energy,
        complex_spectrum: max_imag_energy > REALITY_TOLERANCE,
    })
}

/// Largest |Im E| / spectral radius of the raw spectrum at `samples`
/// points along the loop.
pub fn max_imag_along_loop(s: &ModulationSchedule, epsilon: f64, samples: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..samples {
        let t = s.period * (i as f64 + 0.5) / samples as f64;
        let ev = eigenvalues(&hamiltonian_at(s, t, epsilon)?)?;
        let radius = ev.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(f64::MIN_POSITIVE);
        worst = ev.iter().fold(worst, |m, z| m.max(z.im.abs() / radius));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiffnessOptions {
    pub period: f64,
    pub steps: usize,
    /// Fidelity is recorded every `sample_stride` integrator steps.
    pub sample_stride: usize,
    /// Width (time units) of the centered moving average used for detrending.
    pub detrend_window: f64,
    pub threshold: f64,
}

impl Default for StiffnessOptions {
    fn default() -> Self {
        Self { period: 2500.0, steps: DEFAULT_STEPS, sample_stride: 10, detrend_window: 10.0, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopStiffness {
    pub r_x: f64,
    pub r_y: f64,
    /// Detrended peak-to-peak fidelity oscillation in (T/2, T), per initial state.
    pub amplitudes: Vec<f64>,
    pub outcome: PermutationOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiffnessReport {
    pub circle: LoopStiffness,
    pub ellipse: LoopStiffness,
}

impl StiffnessReport {
    /// Smallest circle amplitude over `states` divided by the largest
    /// ellipse amplitude over the same states (1-based labels).
    pub fn suppression_ratio(&self, states: &[usize]) -> f64 {
        let c = states.iter().map(|&k| self.circle.amplitudes[k - 1]).fold(f64::INFINITY, f64::min);
        let e = states.iter().map(|&k| self.ellipse.amplitudes[k - 1]).fold(0.0, f64::max);
        c / e
    }
}

/// Compares fidelity ripple on a circular loop of radius `circle_radius`
/// with an elliptic loop, both unmodulated and starting at the origin.
pub fn stiffness_probe(
    config: &SystemConfig,
    circle_radius: f64,
    ellipse: (f64, f64),
    options: &StiffnessOptions,
) -> Result<StiffnessReport> {
    let run = |r_x: f64, r_y: f64| -> Result<LoopStiffness> {
        let s = ModulationSchedule::from_origin(config.clone(), r_x, r_y, options.period, vec![])?;
        loop_stiffness(&s, options)
    };
    Ok(StiffnessReport { circle: run(circle_radius, circle_radius)?, ellipse: run(ellipse.0, ellipse.1)? })
}

pub fn loop_stiffness(s: &ModulationSchedule, options: &StiffnessOptions) -> Result<LoopStiffness> {
    let basis = initial_basis(s, 0.0)?;
    let stride = options.sample_stride.max(1);
    let dt = s.period / options.steps as f64 * stride as f64;
    let half = ((options.detrend_window / dt) / 2.0).round().max(1.0) as usize;
    let traces = crate::par_map(&basis.right_vectors, |v| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let mut times = Vec::new();
        let mut series = Vec::new();
        integrate(s, v, options.steps, 1, 0.0, |step, t, psi| {
            if step % stride == 0 {
                times.push(t);
                series.push(fidelities_against(&basis.right_vectors, psi));
            }
            Ok(())
        })?;
        Ok((times, series))
    });
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;
    let finals: Vec<Vec<f64>> = traces.iter().map(|(_, s)| s.last().cloned().unwrap_or_default()).collect();
    let outcome = PermutationOutcome::from_fidelities(finals, options.threshold);
    let amplitudes = traces
        .iter()
        .zip(&outcome.mapping)
        .map(|((times, series), &target)| {
            let f: Vec<f64> = series.iter().map(|row| row[target - 1]).collect();
            detrended_peak_to_peak(times, &f, half, 0.5 * s.period, s.period)
        })
        .collect();
    Ok(LoopStiffness { r_x: s.r_x, r_y: s.r_y, amplitudes, outcome })
}

/// Peak-to-peak of f minus its centered moving average (2·half+1 samples),
/// over samples whose whole window lies inside (lo, hi).
pub fn detrended_peak_to_peak(times: &[f64], f: &[f64], half: usize, lo: f64, hi: f64) -> f64 {
    let mut prefix = vec![0.0; f.len() + 1];
    for (i, v) in f.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for j in half..f.len().saturating_sub(half) {
        if times[j - half] <= lo || times[j + half] >= hi {
            continue;
        }
        let mean = (prefix[j + half + 1] - prefix[j - half]) / (2 * half + 1) as f64;
        let r = f[j] - mean;
        min = min.min(r);
        max = max.max(r);
    }
    if max >= min { max - min } else { 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::build_nhh;

    fn base_config() -> SystemConfig {
        SystemConfig::uniform(vec![1.0, 1.0, 2.0], 1.0).unwrap()
    }

    #[test]
    fn schedule_start_and_midpoint() {
        let s = ModulationSchedule::from_origin(base_config(), 3.0, 6.0, 2500.0, vec![(1, 3)]).unwrap();
        let (p, j) = schedule_eval(&s, 0.0).unwrap();
        assert!(p.x.abs() < 1e-15 && p.y.abs() < 1e-15);
        assert_eq!(j, base_config().couplings);
        let (p, j) = schedule_eval(&s, 1250.0).unwrap();
        assert!(p.x.abs() < 1e-12);
        assert!((p.y - 12.0).abs() < 1e-12);
        assert!(j[0][2].abs() < 1e-30);
        assert_eq!(j[0][1], 1.0);
    }

    #[test]
    fn loop_closes() {
        let s = ModulationSchedule::from_origin(base_config(), 3.0, 6.0, 2500.0, vec![(1, 2)]).unwrap();
        let (a, b) = (s.control(0.0), s.control(2500.0));
        assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        assert!((s.couplings_at(0.0)[0][1] - s.couplings_at(2500.0)[0][1]).abs() < 1e-12);
    }

    #[test]
    fn loop_through_ep_is_rejected() {
        let err = ModulationSchedule::from_origin(base_config(), 1.0, 0.5, 100.0, vec![]).unwrap_err();
        assert!(matches!(err, Error::Divergent { .. }), "{err:?}");
    }

    #[test]
    fn bad_pair_is_rejected() {
        assert!(ModulationSchedule::from_origin(base_config(), 1.0, 2.0, 100.0, vec![(1, 4)]).is_err());
        assert!(ModulationSchedule::from_origin(base_config(), 1.0, 2.0, 100.0, vec![(2, 2)]).is_err());
    }

    #[test]
    fn fast_operator_matches_dense() {
        let s = ModulationSchedule::from_origin(base_config(), 3.0, 6.0, 2500.0, vec![(1, 2), (2, 3)]).unwrap();
        let op = SpinOperator::new(&s);
        let mut inst = op.blank();
        let psi: Vec<C64> = (0..8).map(|i| C64::new(i as f64 * 0.3 - 1.0, (i * i) as f64 * 0.1)).collect();
        for &t in &[0.0, 310.0, 777.7, 1250.0, 2100.0] {
            let eps = 0.01;
            op.instant(&s, t, eps, &mut inst).unwrap();
            let mut fast = vec![ZERO; 8];
            op.apply_minus_i(&inst, &psi, &mut fast);
            let dense = hamiltonian_at(&s, t, eps).unwrap().matvec(&psi);
            for (a, b) in fast.iter().zip(&dense) {
                assert!((a - b * C64::new(0.0, -1.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn static_eigenstate_keeps_fidelity() {
        let s = ModulationSchedule::from_origin(base_config(), 0.0, 0.0, 50.0, vec![]).unwrap();
        let basis = initial_basis(&s, 0.0).unwrap();
        let opts = EvolveOptions { steps: 5000, samples: 50, ..Default::default() };
        let traj = evolve(&s, &basis.right_vectors[2], &opts).unwrap();
        for f in &traj.fidelities {
            assert!((f[2] - 1.0).abs() < 1e-9);
        }
        assert_eq!(traj.times.len(), 50);
        assert_eq!(*traj.times.last().unwrap(), 50.0);
    }

    #[test]
    fn trajectory_csv_header() {
        let s = ModulationSchedule::from_origin(base_config(), 0.0, 0.0, 1.0, vec![]).unwrap();
        let basis = initial_basis(&s, 0.0).unwrap();
        let traj = evolve(&s, &basis.right_vectors[0], &EvolveOptions { steps: 10, samples: 3, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,fidelity_1,fidelity_2,fidelity_3,fidelity_4,fidelity_5,fidelity_6,fidelity_7,fidelity_8,eta_norm,state_norm\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn outcome_validation() {
        let rows = vec![vec![0.1, 0.95], vec![0.97, 0.02]];
        let o = PermutationOutcome::from_fidelities(rows, 0.9);
        assert!(o.valid);
        assert_eq!(o.cycles.as_deref(), Some("(1,2)"));
        let rows = vec![vec![0.1, 0.95], vec![0.1, 0.9]];
        let o = PermutationOutcome::from_fidelities(rows, 0.9);
        assert!(!o.valid);
        assert_eq!(o.require_valid().unwrap_err(), Error::NotBijective { targets: vec![2] });
        let rows = vec![vec![0.2, 0.8], vec![0.97, 0.02]];
        let o = PermutationOutcome::from_fidelities(rows, 0.9);
        assert!(matches!(o.require_valid(), Err(Error::LowConfidence { .. })));
        let json = serde_json::to_value(&o).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys, vec!["confidences", "cycles", "mapping", "valid"]);
    }

    #[test]
    fn detrending_removes_slow_trend() {
        let times: Vec<f64> = (0..2001).map(|i| i as f64 * 0.5).collect();
        let slow: Vec<f64> = times.iter().map(|t| 0.5 + 0.4 * (t / 300.0).sin()).collect();
        // Fast period 3.5 = one third of the 21-sample window.
        let fast: Vec<f64> = times.iter().zip(&slow).map(|(t, s)| s + 0.05 * (t * 2.0 * PI / 3.5).sin()).collect();
        assert!(detrended_peak_to_peak(&times, &slow, 10, 500.0, 1000.0) < 1e-3);
        let a = detrended_peak_to_peak(&times, &fast, 10, 500.0, 1000.0);
        assert!((a - 0.1).abs() < 0.01, "{a}");
    }

    #[test]
    fn direction_serializes_as_sign() {
        assert_eq!(serde_json::to_string(&Direction::Clockwise).unwrap(), "-1");
        assert_eq!(serde_json::from_str::<Direction>("1").unwrap(), Direction::CounterClockwise);
        assert!(serde_json::from_str::<Direction>("0").is_err());
    }

    #[test]
    fn dense_builder_agrees_with_schedule() {
        let s = ModulationSchedule::from_origin(base_config(), 1.0, 2.0, 100.0, vec![(1, 2)]).unwrap();
        let (p, j) = schedule_eval(&s, 30.0).unwrap();
        let h = build_nhh(&s.config, &p, Some(&j)).unwrap();
        assert_eq!(h, hamiltonian_at(&s, 30.0, 0.0).unwrap());
    }
}
