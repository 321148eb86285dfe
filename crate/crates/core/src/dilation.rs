//! Dilation of the non-Hermitian evolution into a Hermitian one of twice
//! the dimension, built from the metric: η = I + D†D with D = √(κη − I).

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{hamiltonian_at, ModulationSchedule};
use crate::error::{Error, Result};
use crate::hamiltonian::{build_nhh, compute_phi, metric_for_phi, single_qubit_metric, FieldPoint, SystemConfig};
use crate::linalg::{hermitian_eigen, ComplexMatrix, I, ZERO};

/// Below this min eigenvalue of κη − I the ancilla map D counts as singular.
pub const SINGULAR_D_LIMIT: f64 = 1e-8;

/// How the metric is scaled before forming D. Any positive multiple of a
/// metric is again a metric; η built from the analytic spinors has unit
/// determinant, so η − I is never positive semidefinite away from the
/// Hermitian phase and a scale κ > 1/λ_min(η) is needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MetricScaling {
    Unscaled,
    /// κ = 2/λ_min(η), so κη − I has minimum eigenvalue 1.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilationResult {
    pub kappa: f64,
    pub d_matrix: ComplexMatrix,
    pub h1: ComplexMatrix,
    pub h2: ComplexMatrix,
    pub h3: ComplexMatrix,
    pub dilated: ComplexMatrix,
    pub hermiticity_residual: f64,
    /// Hermitian point: h1 = H and D = h2 = h3 = 0.
    pub trivial: bool,
}

/// Spectral data of η = ξ^{⊗N}, kept factored.
struct FactoredMetric {
    values: [f64; 2],
    vectors: ComplexMatrix,
    n: usize,
}

impl FactoredMetric {
    fn new(n: usize, phi: C64) -> Result<Self> {
        let (vals, vecs) = hermitian_eigen(&single_qubit_metric(phi)?)?;
        Ok(Self { values: [vals[0], vals[1]], vectors: vecs, n })
    }

    fn min_eigenvalue(&self) -> f64 {
        self.values[0].min(self.values[1]).powi(self.n as i32)
    }

    /// Σ_s g(κ Π λ_s) |s⟩⟨s| over product eigenvectors.
    fn function(&self, kappa: f64, g: impl Fn(f64) -> f64) -> ComplexMatrix {
        let dim = 1usize << self.n;
        let mut out = ComplexMatrix::zeros(dim);
        for s in 0..dim {
            let mut lambda = kappa;
            let mut v = vec![C64::new(1.0, 0.0)];
            for q in 0..self.n {
                let bit = (s >> (self.n - 1 - q)) & 1;
                lambda *= self.values[bit];
                let col = self.vectors.column(bit);
                v = v.iter().flat_map(|a| col.iter().map(move |b| a * b)).collect();
            }
            let w = g(lambda);
            for i in 0..dim {
                for j in 0..dim {
                    out[(i, j)] += v[i] * v[j].conj() * w;
                }
            }
        }
        out
    }
}

fn resolve_kappa(metric: &FactoredMetric, scaling: MetricScaling) -> f64 {
    match scaling {
        MetricScaling::Unscaled => 1.0,
        MetricScaling::Auto => 2.0 / metric.min_eigenvalue(),
        MetricScaling::Fixed(k) => k,
    }
}

fn check_dilatable(metric: &FactoredMetric, kappa: f64) -> Result<()> {
    let min = kappa * metric.min_eigenvalue() - 1.0;
    if min < -1e-12 {
        return Err(Error::MetricNotDilatable { min_eigenvalue: min });
    }
    if min < SINGULAR_D_LIMIT {
        return Err(Error::PartialDilation { min_eigenvalue: min });
    }
    Ok(())
}

/// Blocks h1 = H + iḊD − H†D², h2 = (H − h1)D⁻¹, h3 = 0 (D Hermitian).
fn assemble(h: &ComplexMatrix, d: &ComplexMatrix, d_inv: &ComplexMatrix, d_dot: Option<&ComplexMatrix>, kappa: f64) -> DilationResult {
    let dim = h.dim();
    let d2 = d * d;
    let mut h1 = h - &(&h.dagger() * &d2);
    if let Some(dd) = d_dot {
        h1 = &h1 + &(dd * d).scale(I);
    }
    let h2 = &(h - &h1) * d_inv;
    let h3 = ComplexMatrix::zeros(dim);
    let dilated = ComplexMatrix::block(&h1, &h2, &h2.dagger(), &h3);
    let hermiticity_residual = dilated.hermiticity_residual();
    DilationResult { kappa, d_matrix: d.clone(), h1, h2, h3, dilated, hermiticity_residual, trivial: false }
}

fn trivial(h: ComplexMatrix) -> DilationResult {
    let dim = h.dim();
    let z = ComplexMatrix::zeros(dim);
    let dilated = ComplexMatrix::block(&h, &z, &z, &z);
    DilationResult {
        kappa: 1.0,
        d_matrix: z.clone(),
        hermiticity_residual: dilated.hermiticity_residual(),
        h1: h,
        h2: z.clone(),
        h3: z,
        dilated,
        trivial: true,
    }
}

/// Static dilation at a single control point (Ḋ = 0).
pub fn build_dilation(config: &SystemConfig, point: &FieldPoint, scaling: MetricScaling) -> Result<DilationResult> {
    let h = build_nhh(config, point, None)?;
    if point.phi.im == 0.0 {
        return Ok(trivial(h));
    }
    let metric = FactoredMetric::new(config.n_qubits, point.phi)?;
    let kappa = resolve_kappa(&metric, scaling);
    check_dilatable(&metric, kappa)?;
    let d = metric.function(kappa, |l| (l - 1.0).max(0.0).sqrt());
    let d_inv = metric.function(kappa, |l| 1.0 / (l - 1.0).sqrt());
    Ok(assemble(&h, &d, &d_inv, None, kappa))
}

/// κ = 2/min_t λ_min(η(t)) over `samples` points of the loop.
pub fn schedule_kappa(s: &ModulationSchedule, samples: usize) -> Result<f64> {
    let mut min = f64::INFINITY;
    for i in 0..samples {
        let (x, y) = s.control(s.period * i as f64 / samples as f64);
        min = min.min(FactoredMetric::new(s.config.n_qubits, compute_phi(x, y))?.min_eigenvalue());
    }
    Ok(2.0 / min)
}

fn d_at(s: &ModulationSchedule, t: f64, kappa: f64) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let (x, y) = s.control(t);
    let metric = FactoredMetric::new(s.config.n_qubits, compute_phi(x, y))?;
    check_dilatable(&metric, kappa)?;
    Ok((
        metric.function(kappa, |l| (l - 1.0).max(0.0).sqrt()),
        metric.function(kappa, |l| 1.0 / (l - 1.0).sqrt()),
    ))
}

/// Dilation at time t of a loop from the instantaneous metric, with Ḋ from
/// a central difference of step T·10⁻⁶ and a fixed metric scale κ. The
/// instantaneous metric solves the metric equation only approximately, so
/// the result is Hermitian up to that residual; `dilated_dynamics` evolves
/// the metric instead.
pub fn dilation_along(s: &ModulationSchedule, t: f64, kappa: f64) -> Result<DilationResult> {
    let h = hamiltonian_at(s, t, 0.0)?;
    let (d, d_inv) = d_at(s, t, kappa)?;
    let dt = s.period * 1e-6;
    let (dp, _) = d_at(s, t + dt, kappa)?;
    let (dm, _) = d_at(s, t - dt, kappa)?;
    let d_dot = (&dp - &dm).scale(C64::new(0.5 / dt, 0.0));
    Ok(assemble(&h, &d, &d_inv, Some(&d_dot), kappa))
}

/// Dilation for a given (scaled) metric η and its derivative: D = √(η − I)
/// and Ḋ from the Sylvester equation ḊD + DḊ = η̇ in the eigenbasis of D.
pub fn dilation_from_metric(h: &ComplexMatrix, eta: &ComplexMatrix, eta_dot: Option<&ComplexMatrix>) -> Result<DilationResult> {
    let dim = h.dim();
    if eta.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, actual: eta.dim() });
    }
    let shifted = eta - &ComplexMatrix::identity(dim);
    let (mu, v) = hermitian_eigen(&shifted)?;
    let min = mu.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-12 {
        return Err(Error::MetricNotDilatable { min_eigenvalue: min });
    }
    if min < SINGULAR_D_LIMIT {
        return Err(Error::PartialDilation { min_eigenvalue: min });
    }
    let root: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
    let vd = v.dagger();
    let spectral = |w: &dyn Fn(usize, usize) -> C64| -> ComplexMatrix {
        &(&v * &ComplexMatrix::from_fn(dim, w)) * &vd
    };
    let d = spectral(&|i, j| if i == j { root[i].into() } else { ZERO });
    let d_inv = spectral(&|i, j| if i == j { (1.0 / root[i]).into() } else { ZERO });
    let d_dot = eta_dot.map(|ed| {
        let rotated = &(&vd * ed) * &v;
        spectral(&|i, j| rotated[(i, j)] / (root[i] + root[j]))
    });
    Ok(assemble(h, &d, &d_inv, d_dot.as_ref(), 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilatedDynamics {
    pub kappa: f64,
    pub end_time: f64,
    /// max over steps of ‖top block of Ψ(t) − ψ(t)‖.
    pub max_deviation: f64,
    /// Step-halving error estimates at the end time, plain plus dilated.
    pub integrator_tolerance: f64,
    /// max over steps of the dilated matrix's Hermiticity residual.
    pub max_hermiticity_residual: f64,
    /// Smallest eigenvalue of η(t) − I met along the way.
    pub min_d_eigenvalue: f64,
}

struct DilatedRun {
    top: Vec<Vec<C64>>,
    max_herm: f64,
    min_mu: f64,
}

/// Joint RK4 for Ψ under the dilated Hamiltonian and for the metric under
/// iη̇ = H†η − ηH, so that the dilation is exactly Hermitian at every stage.
fn run_dilated(s: &ModulationSchedule, psi0: &[C64], eta0: &ComplexMatrix, nsteps: usize, h: f64) -> Result<DilatedRun> {
    let dim = psi0.len();
    let eta_dot = |ham: &ComplexMatrix, eta: &ComplexMatrix| -> ComplexMatrix {
        (&(&ham.dagger() * eta) - &(eta * ham)).scale(-I)
    };
    let d0 = dilation_from_metric(&hamiltonian_at(s, 0.0, 0.0)?, eta0, None)?;
    let mut psi: Vec<C64> = psi0.iter().cloned().chain(d0.d_matrix.matvec(psi0)).collect();
    let mut eta = eta0.clone();
    let mut out = DilatedRun { top: vec![psi[..dim].to_vec()], max_herm: 0.0, min_mu: f64::INFINITY };
    let stage = |t: f64, psi: &[C64], eta: &ComplexMatrix, out: &mut DilatedRun| -> Result<(Vec<C64>, ComplexMatrix)> {
        let ham = hamiltonian_at(s, t, 0.0)?;
        let ed = eta_dot(&ham, eta);
        let dil = dilation_from_metric(&ham, eta, Some(&ed))?;
        out.max_herm = out.max_herm.max(dil.hermiticity_residual);
        let (mu, _) = hermitian_eigen(&(eta - &ComplexMatrix::identity(dim)))?;
        out.min_mu = out.min_mu.min(mu[0]);
        Ok((dil.dilated.matvec(psi).into_iter().map(|z| z * -I).collect(), ed))
    };
    let axpy = |a: &[C64], b: &[C64], c: f64| -> Vec<C64> { a.iter().zip(b).map(|(x, y)| x + y * c).collect() };
    for i in 0..nsteps {
        let t = i as f64 * h;
        let (k1, e1) = stage(t, &psi, &eta, &mut out)?;
        let (k2, e2) = stage(t + 0.5 * h, &axpy(&psi, &k1, 0.5 * h), &(&eta + &e1.scale((0.5 * h).into())), &mut out)?;
        let (k3, e3) = stage(t + 0.5 * h, &axpy(&psi, &k2, 0.5 * h), &(&eta + &e2.scale((0.5 * h).into())), &mut out)?;
        let (k4, e4) = stage(t + h, &axpy(&psi, &k3, h), &(&eta + &e3.scale(h.into())), &mut out)?;
        for j in 0..psi.len() {
            psi[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
        }
        let incr = &(&e1 + &e4) + &(&e2 + &e3).scale(2.0.into());
        eta = &eta + &incr.scale((h / 6.0).into());
        out.top.push(psi[..dim].to_vec());
    }
    Ok(out)
}

/// Dense RK4 for H(t) from t = 0 over `nsteps` steps of size `h`, keeping
/// every intermediate state.
fn plain_rk4(s: &ModulationSchedule, psi0: &[C64], nsteps: usize, h: f64) -> Result<Vec<Vec<C64>>> {
    let mut v = psi0.to_vec();
    let mut states = vec![v.clone()];
    let mut m0 = hamiltonian_at(s, 0.0, 0.0)?;
    let axpy = |a: &[C64], b: &[C64], c: f64| -> Vec<C64> { a.iter().zip(b).map(|(x, y)| x + y * c).collect() };
    let rhs = |m: &ComplexMatrix, v: &[C64]| -> Vec<C64> { m.matvec(v).into_iter().map(|z| z * -I).collect() };
    for i in 0..nsteps {
        let t = i as f64 * h;
        let mm = hamiltonian_at(s, t + 0.5 * h, 0.0)?;
        let m1 = hamiltonian_at(s, t + h, 0.0)?;
        let k1 = rhs(&m0, &v);
        let k2 = rhs(&mm, &axpy(&v, &k1, 0.5 * h));
        let k3 = rhs(&mm, &axpy(&v, &k2, 0.5 * h));
        let k4 = rhs(&m1, &axpy(&v, &k3, h));
        for j in 0..v.len() {
            v[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
        }
        states.push(v.clone());
        m0 = m1;
    }
    Ok(states)
}

fn distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Evolves ψ under H(t) and Ψ = (ψ, D(0)ψ) under the dilated Hamiltonian
/// over the first `fraction` of the loop with the same RK4 steps, and
/// compares the top block of Ψ with ψ. The metric starts at κη(0) with
/// κ = 2/min_t λ_min and follows the metric equation.
pub fn dilated_dynamics(
    s: &ModulationSchedule,
    initial_state: &[C64],
    steps_per_period: usize,
    fraction: f64,
) -> Result<DilatedDynamics> {
    if !(fraction > 0.0 && fraction <= 1.0) || steps_per_period == 0 {
        return Err(Error::InvalidParameter("fraction must lie in (0, 1] and steps must be positive".into()));
    }
    let kappa = schedule_kappa(s, 2000)?;
    let h = s.period / steps_per_period as f64;
    let nsteps = ((fraction * steps_per_period as f64).round() as usize).max(1);
    let end_time = nsteps as f64 * h;
    let eta0 = metric_at(s, 0.0)?.scale(kappa.into());

    let plain = plain_rk4(s, initial_state, nsteps, h)?;
    let plain_fine = plain_rk4(s, initial_state, 2 * nsteps, 0.5 * h)?;
    let dil = run_dilated(s, initial_state, &eta0, nsteps, h)?;
    let dil_fine = run_dilated(s, initial_state, &eta0, 2 * nsteps, 0.5 * h)?;

    let max_deviation = dil.top.iter().zip(&plain).map(|(a, b)| distance(a, b)).fold(0.0, f64::max);
    let tol_plain = distance(&plain[nsteps], &plain_fine[2 * nsteps]);
    let tol_dil = distance(&dil.top[nsteps], &dil_fine.top[2 * nsteps]);
    Ok(DilatedDynamics {
        kappa,
        end_time,
        max_deviation,
        integrator_tolerance: tol_plain + tol_dil,
        max_hermiticity_residual: dil.max_herm,
        min_d_eigenvalue: dil.min_mu,
    })
}

/// ‖i(η(t+dt) − η(t−dt))/(2dt) − (H†η − ηH)(t)‖_F / ‖η(t)‖_F.
pub fn check_metric_equation(s: &ModulationSchedule, t: f64, dt: f64) -> Result<f64> {
    let (fd, rhs, eta) = metric_equation_terms(s, t, dt)?;
    Ok((&fd - &rhs).frobenius_norm() / eta.frobenius_norm())
}

fn metric_at(s: &ModulationSchedule, t: f64) -> Result<ComplexMatrix> {
    let (x, y) = s.control(t);
    metric_for_phi(s.config.n_qubits, compute_phi(x, y))
}

fn metric_equation_terms(s: &ModulationSchedule, t: f64, dt: f64) -> Result<(ComplexMatrix, ComplexMatrix, ComplexMatrix)> {
    if !(dt > 0.0) || t - dt < 0.0 || t + dt > s.period {
        return Err(Error::InvalidParameter(format!("t ± dt must stay inside [0, {}]", s.period)));
    }
    let eta = metric_at(s, t)?;
    let fd = (&metric_at(s, t + dt)? - &metric_at(s, t - dt)?).scale(I * (0.5 / dt));
    let h = hamiltonian_at(s, t, 0.0)?;
    let rhs = &(&h.dagger() * &eta) - &(&eta * &h);
    Ok((fd, rhs, eta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConvergence {
    pub dts: Vec<f64>,
    pub residuals: Vec<f64>,
    /// ‖FD(dt_k) − FD(dt_{k+1})‖ / ‖η‖ between successive halvings.
    pub increments: Vec<f64>,
    /// increments[k] / increments[k+1]; 4 for a second-order difference.
    pub ratios: Vec<f64>,
}

impl MetricConvergence {
    pub fn observed_orders(&self) -> Vec<f64> {
        self.ratios.iter().map(|r| r.log2()).collect()
    }
}

/// Residuals of the central-difference metric equation at dt0, dt0/2, ….
pub fn metric_equation_convergence(s: &ModulationSchedule, t: f64, dt0: f64, levels: usize) -> Result<MetricConvergence> {
    let mut dts = Vec::new();
    let mut residuals = Vec::new();
    let mut fds = Vec::new();
    let mut scale = 1.0;
    for k in 0..levels {
        let dt = dt0 / (1u64 << k) as f64;
        let (fd, rhs, eta) = metric_equation_terms(s, t, dt)?;
        scale = eta.frobenius_norm();
        residuals.push((&fd - &rhs).frobenius_norm() / scale);
        dts.push(dt);
        fds.push(fd);
    }
    let increments: Vec<f64> = fds.windows(2).map(|w| (&w[0] - &w[1]).frobenius_norm() / scale).collect();
    let ratios = increments.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(MetricConvergence { dts, residuals, increments, ratios })
}

/// Zero matrix helper for callers that want an explicit h3 choice.
pub fn zero_block(dim: usize) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&vec![ZERO; dim])
}
