//! Lossy Kerr-cavity modes monitored by β-dyne detection: parameter mapping
//! onto the spin Hamiltonian and the single-photon effective Hamiltonian.
//!
//! With a_k = |0⟩⟨1| on mode k the spin field term B_x σ_x + B_y σ_y equals
//! (B_x − iB_y) a + (B_x + iB_y) a†, so the effective Hamiltonian
//! Ĥ − iγβ* a − (iγ/2) n − iγ|β|²/2 reproduces it for
//!
//!   η_k = B_x + iB_y,  γβ_k = −2(Im B_x + i Im B_y),
//!   Δ_i = −2 Σ_{k≠i} J_ik + iγ/2,  U_jk = 4 J_jk,
//!
//! up to the scalar −(iγ/2) Σ|β_k|² once the constant Σ_{j<k} J_jk from
//! σ_zσ_z = (1 − 2n_j)(1 − 2n_k) is carried as `offset`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{build_nhh, embed, FieldPoint, SystemConfig};
use crate::linalg::{ComplexMatrix, I, ONE, ZERO};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetadyneParams {
    /// Complex detunings Δ_i.
    pub delta: Vec<C64>,
    /// Kerr cross couplings U_jk (symmetric, zero diagonal).
    pub kerr_u: Vec<Vec<f64>>,
    /// Displacements β_k.
    pub beta: Vec<C64>,
    /// Coherent drives η_k.
    pub drive_eta: Vec<C64>,
    pub gamma: f64,
    /// Scalar energy offset Σ_{j<k} J_jk.
    pub offset: f64,
}

impl BetadyneParams {
    /// Inverts the mapping: per-mode (B_x, B_y).
    pub fn reconstruct_fields(&self) -> Vec<(C64, C64)> {
        self.drive_eta
            .iter()
            .zip(&self.beta)
            .map(|(u, b)| {
                let v = -*b * (0.5 * self.gamma);
                let bx = C64::new(u.re + v.im, v.re);
                let by = C64::new(u.im - v.re, v.im);
                (bx, by)
            })
            .collect()
    }
}

pub fn map_to_betadyne(config: &SystemConfig, point: &FieldPoint, gamma: f64) -> Result<BetadyneParams> {
    config.validate()?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("decay rate must be positive and finite, got {gamma}")));
    }
    let n = config.n_qubits;
    if point.b_components.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: point.b_components.len() });
    }
    let j = &config.couplings;
    let delta = (0..n)
        .map(|i| {
            let s: f64 = (0..n).filter(|&k| k != i).map(|k| j[i][k]).sum();
            C64::new(-2.0 * s, 0.5 * gamma)
        })
        .collect();
    let kerr_u = j.iter().map(|row| row.iter().map(|v| 4.0 * v).collect()).collect();
    let beta = point
        .b_components
        .iter()
        .map(|(bx, by)| C64::new(bx.im, by.im) * (-2.0 / gamma))
        .collect();
    let drive_eta = point.b_components.iter().map(|(bx, by)| bx + I * by).collect();
    let offset = config.pairs().iter().map(|&(k, l)| j[k][l]).sum();
    Ok(BetadyneParams { delta, kerr_u, beta, drive_eta, gamma, offset })
}

/// Ĥ_eff(β) on the single-photon truncation, assembled from a, a† and n.
pub fn build_betadyne_nhh(params: &BetadyneParams, config: &SystemConfig) -> Result<ComplexMatrix> {
    config.validate()?;
    let n = config.n_qubits;
    for len in [params.delta.len(), params.beta.len(), params.drive_eta.len(), params.kerr_u.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, actual: len });
        }
    }
    let lower = ComplexMatrix::from_fn(2, |r, c| if (r, c) == (0, 1) { ONE } else { ZERO });
    let a: Vec<ComplexMatrix> = (0..n).map(|k| embed(&lower, k, n)).collect();
    let ad: Vec<ComplexMatrix> = a.iter().map(ComplexMatrix::dagger).collect();
    let num: Vec<ComplexMatrix> = (0..n).map(|k| &ad[k] * &a[k]).collect();
    let g = params.gamma;

    let mut h = ComplexMatrix::identity(config.dim()).scale(params.offset.into());
    for i in 0..n {
        h = &h + &num[i].scale(params.delta[i]);
        h = &h + &a[i].scale(params.drive_eta[i].conj());
        h = &h + &ad[i].scale(params.drive_eta[i]);
    }
    for (k, l) in config.pairs() {
        if params.kerr_u[k][l] != 0.0 {
            h = &h + &(&num[k] * &num[l]).scale(params.kerr_u[k][l].into());
        }
    }
    // Affine β shift of the jump operators plus the no-jump decay.
    for i in 0..n {
        let b = params.beta[i];
        h = &h - &a[i].scale(I * g * b.conj());
        h = &h - &num[i].scale(I * (0.5 * g));
    }
    let shift: f64 = params.beta.iter().map(|b| b.norm_sqr()).sum();
    h = &h - &ComplexMatrix::identity(config.dim()).scale(I * (0.5 * g * shift));
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetadyneEquivalence {
    /// Mean diagonal of Ĥ_eff(β) − Ĥ_spin.
    pub shift: C64,
    /// ‖Ĥ_eff(β) − Ĥ_spin − shift·I‖_F / ‖Ĥ_spin‖_F.
    pub residual: f64,
}

/// Compares Ĥ_eff(β) with the spin Hamiltonian at `point`.
pub fn betadyne_equivalence(config: &SystemConfig, point: &FieldPoint, gamma: f64) -> Result<BetadyneEquivalence> {
    let params = map_to_betadyne(config, point, gamma)?;
    let eff = build_betadyne_nhh(&params, config)?;
    let spin = build_nhh(config, point, None)?;
    let diff = &eff - &spin;
    let shift = diff.trace() / config.dim() as f64;
    let rest = &diff - &ComplexMatrix::identity(config.dim()).scale(shift);
    Ok(BetadyneEquivalence { shift, residual: rest.frobenius_norm() / spin.frobenius_norm().max(1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::field_point;

    fn cfg() -> SystemConfig {
        SystemConfig::uniform(vec![1.0, 1.0, 1.0], 1.0).unwrap()
    }

    #[test]
    fn uniform_coupling_values() {
        let p = field_point(&cfg(), 0.4, 0.7).unwrap();
        let b = map_to_betadyne(&cfg(), &p, 0.5).unwrap();
        for i in 0..3 {
            assert_eq!(b.delta[i].re, -4.0);
            for k in 0..3 {
                assert_eq!(b.kerr_u[i][k], if i == k { 0.0 } else { 4.0 });
            }
        }
        assert_eq!(b.offset, 3.0);
    }

    #[test]
    fn real_field_has_no_displacement() {
        let p = field_point(&cfg(), 0.3, 0.0).unwrap();
        let b = map_to_betadyne(&cfg(), &p, 1.0).unwrap();
        assert!(b.beta.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn round_trip_fields() {
        let p = field_point(&cfg(), -0.8, 1.9).unwrap();
        let b = map_to_betadyne(&cfg(), &p, 0.3).unwrap();
        for (got, want) in b.reconstruct_fields().iter().zip(&p.b_components) {
            assert!((got.0 - want.0).norm() < 1e-12);
            assert!((got.1 - want.1).norm() < 1e-12);
        }
    }

    #[test]
    fn equivalence_is_imaginary_scalar() {
        let p = field_point(&cfg(), 0.6, 2.5).unwrap();
        let e = betadyne_equivalence(&cfg(), &p, 0.7).unwrap();
        assert!(e.residual < 1e-12, "{}", e.residual);
        assert!(e.shift.re.abs() < 1e-12);
        assert!(e.shift.im < 0.0);
    }

    #[test]
    fn rejects_nonpositive_gamma() {
        let p = field_point(&cfg(), 0.6, 2.5).unwrap();
        assert!(matches!(map_to_betadyne(&cfg(), &p, 0.0), Err(Error::InvalidParameter(_))));
    }
}
