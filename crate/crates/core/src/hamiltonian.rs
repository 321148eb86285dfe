//! The N-qubit Hamiltonian with complex transverse fields and ZZ couplings,
//! its (x, y) parametrization, the metric operator and perturbed variants.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{normalized_overlap, ComplexMatrix, I, ONE, ZERO};

/// Radius of the disk around (0, ±1) where `compute_alpha` refuses to evaluate.
pub const EP_EVALUATION_RADIUS: f64 = 1e-6;

/// Below this |sin(Im φ)| the first-order series branch replaces the 0/0 formula.
pub const SERIES_BRANCH_THRESHOLD: f64 = 1e-9;

/// Normalized eigenvector overlap above which the metric is refused.
pub const METRIC_OVERLAP_LIMIT: f64 = 1.0 - 1e-10;

/// Static system: qubit count, per-qubit field scales and the symmetric
/// coupling matrix (zero diagonal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_qubits: usize,
    pub field_scales: Vec<f64>,
    pub couplings: Vec<Vec<f64>>,
}

impl SystemConfig {
    pub fn new(field_scales: Vec<f64>, couplings: Vec<Vec<f64>>) -> Result<Self> {
        let cfg = Self { n_qubits: field_scales.len(), field_scales, couplings };
        cfg.validate()?;
        Ok(cfg)
    }

    /// All pairs coupled with the same strength `j`.
    pub fn uniform(field_scales: Vec<f64>, j: f64) -> Result<Self> {
        let n = field_scales.len();
        let couplings =
            (0..n).map(|k| (0..n).map(|l| if k == l { 0.0 } else { j }).collect()).collect();
        Self::new(field_scales, couplings)
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::InvalidParameter("n_qubits must be at least 1".into()));
        }
        if self.n_qubits > 6 {
            return Err(Error::InvalidParameter("at most 6 qubits are supported".into()));
        }
        if self.field_scales.len() != self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                actual: self.field_scales.len(),
            });
        }
        validate_couplings(self.n_qubits, &self.couplings)
    }

    /// Index pairs (k, l), k < l, 0-based.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_qubits;
        (0..n).flat_map(|k| (k + 1..n).map(move |l| (k, l))).collect()
    }
}

pub(crate) fn validate_couplings(n: usize, j: &[Vec<f64>]) -> Result<()> {
    if j.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: j.len() });
    }
    for (k, row) in j.iter().enumerate() {
        if row.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: row.len() });
        }
        if row[k] != 0.0 {
            return Err(Error::InvalidParameter(format!("coupling diagonal J[{k}][{k}] must be 0")));
        }
        for (l, v) in row.iter().enumerate() {
            if !v.is_finite() || *v != j[l][k] {
                return Err(Error::InvalidParameter(format!(
                    "coupling matrix must be finite and symmetric (J[{k}][{l}])"
                )));
            }
        }
    }
    Ok(())
}

/// Control point with its derived field parametrization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub x: f64,
    pub y: f64,
    pub phi: C64,
    pub alpha: f64,
    /// Per qubit (B_x^k, B_y^k) including the scale f_k.
    pub b_components: Vec<(C64, C64)>,
}

impl FieldPoint {
    /// Unscaled field (α sin φ, α cos φ) shared by all qubits.
    pub fn unit_field(&self) -> (C64, C64) {
        unit_field(self.phi, self.alpha)
    }

    pub fn is_hermitian(&self) -> bool {
        self.phi.im == 0.0
    }
}

pub(crate) fn unit_field(phi: C64, alpha: f64) -> (C64, C64) {
    (phi.sin() * alpha, phi.cos() * alpha)
}

/// φ = arctan(1/(x+iy)) on the principal branch, written as
/// φ = ½ arg((z+i)/(z−i)) − (i/4) ln|(z+i)/(z−i)|² so that Im φ keeps full
/// relative precision near the real axis. On x = 0 the x → 0⁺ limit is taken.
pub fn compute_phi(x: f64, y: f64) -> C64 {
    // Signed zero would select the x → 0⁻ side of the cut.
    let x = if x == 0.0 { 0.0 } else { x };
    let re = 0.5 * (2.0 * x).atan2(x * x + y * y - 1.0);
    let im = -0.25 * (4.0 * y / (x * x + (y - 1.0) * (y - 1.0))).ln_1p();
    C64::new(re, im)
}

/// α = y sin(Re φ)/sin(Im φ). Where sin(Im φ) vanishes with y → 0 the
/// leading series Im φ ≈ −y/(1+x²) is used; at the exceptional points
/// (0, ±1) and on the rings where Im φ crosses a nonzero multiple of π the
/// value diverges and `Divergent` is returned.
pub fn compute_alpha(x: f64, y: f64) -> Result<f64> {
    alpha_from_phi(x, y, compute_phi(x, y))
}

fn alpha_from_phi(x: f64, y: f64, phi: C64) -> Result<f64> {
    let ep_dist = x.hypot(y - 1.0).min(x.hypot(y + 1.0));
    if ep_dist < EP_EVALUATION_RADIUS {
        return Err(Error::Divergent { x, y, reason: "inside the exceptional-point disk".into() });
    }
    let s = phi.im.sin();
    if s.abs() < SERIES_BRANCH_THRESHOLD {
        if phi.im.abs() >= 1.0 {
            return Err(Error::Divergent { x, y, reason: "sin(Im phi) vanishes at a pole ring".into() });
        }
        return Ok(-(1.0 + x * x) * phi.re.sin());
    }
    let a = y * phi.re.sin() / s;
    if !a.is_finite() {
        return Err(Error::Divergent { x, y, reason: "alpha is not finite".into() });
    }
    Ok(a)
}

pub fn field_point(config: &SystemConfig, x: f64, y: f64) -> Result<FieldPoint> {
    let phi = compute_phi(x, y);
    let alpha = alpha_from_phi(x, y, phi)?;
    let (bx, by) = unit_field(phi, alpha);
    let b_components = config.field_scales.iter().map(|&f| (bx * f, by * f)).collect();
    Ok(FieldPoint { x, y, phi, alpha, b_components })
}

/// Single-qubit Pauli matrices.
pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_fn(2, |i, j| if i != j { ONE } else { ZERO })
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_fn(2, |i, j| match (i, j) {
        (0, 1) => -I,
        (1, 0) => I,
        _ => ZERO,
    })
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[ONE, -ONE])
}

/// `op` acting on qubit `k` (0-based, qubit 0 is the leftmost factor).
pub fn embed(op: &ComplexMatrix, k: usize, n: usize) -> ComplexMatrix {
    let id = ComplexMatrix::identity(2);
    let mut out = ComplexMatrix::identity(1);
    for q in 0..n {
        out = out.kron(if q == k { op } else { &id });
    }
    out
}

pub fn build_nhh(
    config: &SystemConfig,
    point: &FieldPoint,
    couplings_override: Option<&[Vec<f64>]>,
) -> Result<ComplexMatrix> {
    let n = config.n_qubits;
    if point.b_components.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: point.b_components.len() });
    }
    let j = match couplings_override {
        Some(j) => {
            validate_couplings(n, j)?;
            j
        }
        None => &config.couplings[..],
    };
    let (sx, sy, sz) = (pauli_x(), pauli_y(), pauli_z());
    let mut h = ComplexMatrix::zeros(config.dim());
    for (k, (bx, by)) in point.b_components.iter().enumerate() {
        h = &h + &embed(&sx, k, n).scale(*bx);
        h = &h + &embed(&sy, k, n).scale(*by);
    }
    for (k, l) in config.pairs() {
        if j[k][l] != 0.0 {
            let zz = &embed(&sz, k, n) * &embed(&sz, l, n);
            h = &h + &zz.scale(j[k][l].into());
        }
    }
    Ok(h)
}

/// H + ε σ_z on the first qubit.
pub fn build_perturbed_nhh(
    config: &SystemConfig,
    point: &FieldPoint,
    couplings_override: Option<&[Vec<f64>]>,
    epsilon: f64,
) -> Result<ComplexMatrix> {
    let h = build_nhh(config, point, couplings_override)?;
    if epsilon == 0.0 {
        return Ok(h);
    }
    Ok(&h + &embed(&pauli_z(), 0, config.n_qubits).scale(epsilon.into()))
}

/// The rotation exp(+iπσ_x/4) that carries the analytic spinors onto right
/// eigenvectors of α(sin φ σ_x + cos φ σ_y).
fn rotation_dagger() -> [[C64; 2]; 2] {
    let c = std::f64::consts::FRAC_1_SQRT_2;
    [[C64::new(c, 0.0), C64::new(0.0, c)], [C64::new(0.0, c), C64::new(c, 0.0)]]
}

/// Unnormalized single-qubit right eigenvectors and their eigenvalues
/// (−α, +α): ψ₁ = R†(−sin(φ/2), cos(φ/2)), ψ₂ = R†(cos(φ/2), sin(φ/2)).
pub fn single_qubit_eigenpair(phi: C64, alpha: f64) -> ([[C64; 2]; 2], [f64; 2]) {
    let r = rotation_dagger();
    let h = phi * 0.5;
    let u1 = [-h.sin(), h.cos()];
    let u2 = [h.cos(), h.sin()];
    let rot = |u: [C64; 2]| [r[0][0] * u[0] + r[0][1] * u[1], r[1][0] * u[0] + r[1][1] * u[1]];
    ([rot(u1), rot(u2)], [-alpha, alpha])
}

/// Single-qubit metric ξ = Σ_i |ν_i⟩⟨ν_i| from the left eigenvectors.
/// With the analytic normalization det ξ = 1 and its eigenvalues are e^{±|Im φ|}.
pub fn single_qubit_metric(phi: C64) -> Result<ComplexMatrix> {
    let ([p1, p2], _) = single_qubit_eigenpair(phi, 1.0);
    let overlap = normalized_overlap(&p1, &p2);
    if !(overlap <= METRIC_OVERLAP_LIMIT) {
        return Err(Error::IllConditioned { overlap });
    }
    // Left eigenvectors of H are σ_x·conj(right); for the 2×2 block this
    // equals conj(R u_i), the conjugated analytic spinors.
    let left = |p: [C64; 2]| [p[1].conj(), p[0].conj()];
    let (n1, n2) = (left(p1), left(p2));
    Ok(ComplexMatrix::from_fn(2, |i, j| n1[i] * n1[j].conj() + n2[i] * n2[j].conj()))
}

/// η = ⊗_k ξ_k. Every qubit shares the same φ, so the factors coincide.
pub fn build_metric(config: &SystemConfig, point: &FieldPoint) -> Result<ComplexMatrix> {
    metric_for_phi(config.n_qubits, point.phi)
}

pub(crate) fn metric_for_phi(n: usize, phi: C64) -> Result<ComplexMatrix> {
    let xi = single_qubit_metric(phi)?;
    let mut eta = ComplexMatrix::identity(1);
    for _ in 0..n {
        eta = eta.kron(&xi);
    }
    Ok(eta)
}

/// ‖ηHη⁻¹ − H†‖_F / ‖H‖_F.
pub fn pseudo_hermiticity_residual(h: &ComplexMatrix, eta: &ComplexMatrix) -> Result<f64> {
    let inv = eta.inverse()?;
    let lhs = &(eta * h) * &inv;
    Ok((&lhs - &h.dagger()).frobenius_norm() / h.frobenius_norm().max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn two_qubit_config() -> SystemConfig {
        SystemConfig::new(vec![1.0, 2.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn phi_on_real_axis() {
        let phi = compute_phi(1.0, 0.0);
        assert!((phi.re - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(phi.im, 0.0);
    }

    #[test]
    fn phi_on_branch_cut_is_imaginary() {
        let phi = compute_phi(0.0, 2.0);
        assert_eq!(phi.re, 0.0);
        assert!((phi.im + 0.5f64.atanh()).abs() < 1e-15);
    }

    #[test]
    fn phi_matches_library_arctan_off_the_cut() {
        for &(x, y) in &[(0.3, 0.2), (-1.5, 0.7), (2.0, -3.0), (0.01, 5.0)] {
            let z = C64::new(x, y);
            let reference = (C64::new(1.0, 0.0) / z).atan();
            assert!((compute_phi(x, y) - reference).norm() < 1e-13, "({x}, {y})");
        }
    }

    #[test]
    fn phi_small_y_series() {
        let y = 1e-7;
        let phi = compute_phi(0.0, y);
        assert!((phi.re - FRAC_PI_2).abs() < 1e-15);
        assert!((phi.im + y).abs() < 1e-20);
    }

    #[test]
    fn alpha_on_cut_vanishes() {
        assert_eq!(compute_alpha(0.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn alpha_limit_at_origin() {
        assert_eq!(compute_alpha(0.0, 0.0).unwrap(), -1.0);
        let a = compute_alpha(0.0, 1e-8).unwrap();
        // L'Hôpital: y sin(Re φ)/(−y/(1+x²)) → −1 at x = 0.
        assert!((a + 1.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_diverges_at_ep() {
        assert!(matches!(compute_alpha(0.0, 1.0), Err(Error::Divergent { .. })));
        assert!(matches!(compute_alpha(0.0, -1.0), Err(Error::Divergent { .. })));
        assert!(compute_alpha(1e-3, 1.0).is_ok());
    }

    #[test]
    fn real_field_on_real_axis() {
        let cfg = two_qubit_config();
        let p = field_point(&cfg, 1.0, 0.0).unwrap();
        for (bx, by) in &p.b_components {
            assert_eq!(bx.im, 0.0);
            assert_eq!(by.im, 0.0);
        }
        let h = build_nhh(&cfg, &p, None).unwrap();
        assert!(h.hermiticity_residual() < 1e-15);
    }

    #[test]
    fn origin_field_has_unit_magnitude() {
        let cfg = two_qubit_config();
        let p = field_point(&cfg, 0.0, 0.0).unwrap();
        for ((bx, by), f) in p.b_components.iter().zip(&cfg.field_scales) {
            assert!(bx.im.abs() < 1e-15 && by.im.abs() < 1e-15);
            assert!(((bx.norm_sqr() + by.norm_sqr()).sqrt() - f).abs() < 1e-15);
        }
    }

    #[test]
    fn single_qubit_hamiltonian_form() {
        let cfg = SystemConfig::new(vec![1.0], vec![vec![0.0]]).unwrap();
        let p = field_point(&cfg, 0.7, 0.0).unwrap();
        let h = build_nhh(&cfg, &p, None).unwrap();
        let expect = &pauli_x().scale((p.phi.sin() * p.alpha).into())
            + &pauli_y().scale((p.phi.cos() * p.alpha).into());
        assert!((&h - &expect).frobenius_norm() < 1e-15);
    }

    #[test]
    fn eigenpair_residual() {
        for &(x, y) in &[(0.4, 0.3), (-1.2, 2.5), (2.0, 0.9)] {
            let phi = compute_phi(x, y);
            let alpha = compute_alpha(x, y).unwrap();
            let (vecs, vals) = single_qubit_eigenpair(phi, alpha);
            let (bx, by) = unit_field(phi, alpha);
            let h = &pauli_x().scale(bx) + &pauli_y().scale(by);
            for (v, e) in vecs.iter().zip(vals) {
                let hv = h.matvec(v);
                let r: f64 = hv.iter().zip(v).map(|(a, b)| (a - b * e).norm()).sum();
                assert!(r < 1e-12, "({x}, {y}) residual {r}");
            }
        }
    }

    #[test]
    fn metric_is_identity_for_real_phi() {
        let cfg = two_qubit_config();
        let p = field_point(&cfg, 1.3, 0.0).unwrap();
        let eta = build_metric(&cfg, &p).unwrap();
        assert!((&eta - &ComplexMatrix::identity(4)).frobenius_norm() < 1e-14);
    }

    #[test]
    fn metric_refused_near_ep() {
        let cfg = two_qubit_config();
        let p = FieldPoint { x: 0.0, y: 1.0, phi: compute_phi(1e-13, 1.0), alpha: 1.0, b_components: vec![] };
        assert!(matches!(build_metric(&cfg, &p), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn perturbation_norm() {
        let cfg = SystemConfig::uniform(vec![1.0, 1.0, 2.0], 1.0).unwrap();
        let p = field_point(&cfg, 0.4, 0.9).unwrap();
        let h0 = build_nhh(&cfg, &p, None).unwrap();
        assert_eq!(build_perturbed_nhh(&cfg, &p, None, 0.0).unwrap(), h0);
        let h1 = build_perturbed_nhh(&cfg, &p, None, 1e-3).unwrap();
        assert!(((&h1 - &h0).frobenius_norm() - 1e-3 * 8f64.sqrt()).abs() < 1e-15);
        // σ_z on the leftmost factor: first half of the diagonal +ε, second half −ε.
        assert!(((h1[(0, 0)] - h0[(0, 0)]).re - 1e-3).abs() < 1e-14);
        assert!(((h1[(4, 4)] - h0[(4, 4)]).re + 1e-3).abs() < 1e-14);
    }

    #[test]
    fn override_dimension_is_checked() {
        let cfg = two_qubit_config();
        let p = field_point(&cfg, 0.4, 0.9).unwrap();
        let bad = vec![vec![0.0; 3]; 3];
        assert!(matches!(build_nhh(&cfg, &p, Some(&bad)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::new(vec![], vec![]).is_err());
        assert!(SystemConfig::new(vec![1.0, 1.0], vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(SystemConfig::new(vec![1.0, 1.0], vec![vec![1.0, 0.0], vec![0.0, 0.0]]).is_err());
    }
}
