//! Sorted eigensystems, Riemann-sheet sampling, branch-cut pairing and the
//! 3×3 extended Hamiltonian.

use std::io::{self, Write};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::eigen::{eigen, orthonormalize};
use crate::error::{Error, Result};
use crate::hamiltonian::{build_nhh, compute_phi, field_point, SystemConfig, EP_EVALUATION_RADIUS};
use crate::linalg::{inner, norm, normalized_overlap, numerical_rank, ComplexMatrix, ZERO};

pub use crate::hamiltonian::single_qubit_eigenpair;

/// Relative imaginary part below which an eigenvalue is declared real.
pub const REALITY_TOLERANCE: f64 = 1e-9;

/// Relative distance under which eigenvalues are treated as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-8;

/// Grid cells closer than this to an exceptional point are masked.
pub const SHEET_MASK_RADIUS: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    pub dim: usize,
    /// Real parts, ascending.
    pub eigenvalues: Vec<f64>,
    /// Imaginary parts after truncation of numerical dust.
    pub imag_parts: Vec<f64>,
    pub right_vectors: Vec<Vec<C64>>,
    pub left_vectors: Vec<Vec<C64>>,
    /// Set when some eigenvalue keeps an imaginary part above tolerance.
    pub complex_spectrum: bool,
    pub spectral_radius: f64,
}

impl EigenSystem {
    pub fn complex_eigenvalues(&self) -> Vec<C64> {
        self.eigenvalues.iter().zip(&self.imag_parts).map(|(&r, &i)| C64::new(r, i)).collect()
    }

    pub fn max_imag(&self) -> f64 {
        self.imag_parts.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// max_k ‖H v_k − E_k v_k‖.
    pub fn max_residual(&self, h: &ComplexMatrix) -> f64 {
        self.complex_eigenvalues()
            .iter()
            .zip(&self.right_vectors)
            .map(|(e, v)| {
                let hv = h.matvec(v);
                hv.iter().zip(v).map(|(a, b)| (a - b * e).norm_sqr()).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Full eigendecomposition with ascending real eigenvalues. Degenerate
/// blocks are oriented along `hint` (same sorted positions) when given,
/// otherwise along the standard basis.
pub fn eigensystem_sorted(h: &ComplexMatrix, hint: Option<&EigenSystem>) -> Result<EigenSystem> {
    eigensystem_with_tolerance(h, hint, DEGENERACY_TOLERANCE)
}

/// `eigensystem_sorted` with an explicit relative degeneracy tolerance.
pub fn eigensystem_with_tolerance(h: &ComplexMatrix, hint: Option<&EigenSystem>, degeneracy: f64) -> Result<EigenSystem> {
    let n = h.dim();
    let scale = h.max_abs().max(1.0);
    let raw = eigen(h, degeneracy * scale)?;
    let radius = raw.values.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let cut = REALITY_TOLERANCE * radius.max(f64::MIN_POSITIVE);
    let values: Vec<C64> = raw
        .values
        .iter()
        .map(|z| if z.im.abs() < cut { C64::new(z.re, 0.0) } else { *z })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].re.total_cmp(&values[b].re).then(values[a].im.total_cmp(&values[b].im)));
    let sorted: Vec<C64> = order.iter().map(|&k| values[k]).collect();
    let mut right: Vec<Vec<C64>> = order.iter().map(|&k| raw.vectors[k].clone()).collect();

    let tol = degeneracy * scale;
    let hint = hint.filter(|s| s.dim == n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (sorted[end] - sorted[end - 1]).norm() <= tol {
            end += 1;
        }
        if end - start > 1 {
            let refs: Option<Vec<Vec<C64>>> = hint.map(|s| s.right_vectors[start..end].to_vec());
            align_block(&mut right[start..end], refs.as_deref());
        }
        start = end;
    }
    for v in right.iter_mut() {
        normalize_phase(v);
    }
    let left = left_vectors(h, &sorted, &right)?;

    Ok(EigenSystem {
        dim: n,
        eigenvalues: sorted.iter().map(|z| z.re).collect(),
        imag_parts: sorted.iter().map(|z| z.im).collect(),
        right_vectors: right,
        left_vectors: left,
        complex_spectrum: sorted.iter().any(|z| z.im != 0.0),
        spectral_radius: radius,
    })
}

/// Rotates an orthonormal degenerate block onto the projections of the
/// reference vectors (or of the standard basis vectors it overlaps most).
fn align_block(block: &mut [Vec<C64>], refs: Option<&[Vec<C64>]>) {
    let m = block.len();
    let gram_ok = (0..m).all(|i| {
        (0..m).all(|j| {
            let g = inner(&block[i], &block[j]).norm();
            if i == j { (g - 1.0).abs() < 1e-8 } else { g < 1e-8 }
        })
    });
    if !gram_ok {
        // Non-orthogonal (defective) block: its vectors carry no freedom.
        return;
    }
    let project = |r: &[C64]| -> Vec<C64> {
        let mut p = vec![ZERO; r.len()];
        for b in block.iter() {
            let c = inner(b, r);
            for (x, y) in p.iter_mut().zip(b) {
                *x += c * y;
            }
        }
        p
    };
    let mut chosen: Vec<Vec<C64>> = Vec::with_capacity(m);
    match refs {
        Some(refs) => {
            for r in refs {
                chosen.push(project(r));
            }
        }
        None => {
            let dim = block[0].len();
            let mut used = vec![false; dim];
            for _ in 0..m {
                let mut best = (0, -1.0);
                for j in (0..dim).filter(|&j| !used[j]) {
                    let mut e = vec![ZERO; dim];
                    e[j] = C64::new(1.0, 0.0);
                    let mut p = project(&e);
                    for c in &chosen {
                        let o = inner(c, &p);
                        for (x, y) in p.iter_mut().zip(c) {
                            *x -= o * y;
                        }
                    }
                    let w = norm(&p);
                    if w > best.1 + 1e-12 {
                        best = (j, w);
                    }
                }
                used[best.0] = true;
                let mut e = vec![ZERO; dim];
                e[best.0] = C64::new(1.0, 0.0);
                let mut p = project(&e);
                for c in &chosen {
                    let o = inner(c, &p);
                    for (x, y) in p.iter_mut().zip(c) {
                        *x -= o * y;
                    }
                }
                let w = norm(&p);
                chosen.push(p.into_iter().map(|z| z / w).collect());
            }
        }
    }
    orthonormalize(&mut chosen);
    if chosen.iter().all(|v| norm(v) > 0.5) {
        block.clone_from_slice(&chosen);
    }
}

/// Scales to unit norm and makes the first component of (near) maximal
/// modulus real and positive.
pub(crate) fn normalize_phase(v: &mut [C64]) {
    let nv = norm(v);
    let max = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if nv == 0.0 || max == 0.0 {
        return;
    }
    let pivot = v.iter().find(|z| z.norm() >= max * (1.0 - 1e-6)).copied().unwrap();
    let phase = pivot.conj() / pivot.norm();
    for z in v.iter_mut() {
        *z = *z * phase / nv;
    }
}

/// Unit left eigenvectors paired with `right`, phased so ⟨ν_k|ψ_k⟩ > 0.
fn left_vectors(h: &ComplexMatrix, values: &[C64], right: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
    let n = h.dim();
    let vmat = ComplexMatrix::from_columns(right);
    let rows: Vec<Vec<C64>> = match vmat.inverse() {
        Ok(inv) => (0..n).map(|k| inv.row(k).iter().map(|z| z.conj()).collect()).collect(),
        Err(_) => {
            // Defective: take eigenvectors of H† at the conjugate eigenvalues.
            let scale = h.max_abs().max(1.0);
            let raw = eigen(&h.dagger(), DEGENERACY_TOLERANCE * scale)?;
            let mut used = vec![false; n];
            values
                .iter()
                .map(|v| {
                    let j = (0..n)
                        .filter(|&j| !used[j])
                        .min_by(|&a, &b| {
                            (raw.values[a] - v.conj()).norm().total_cmp(&(raw.values[b] - v.conj()).norm())
                        })
                        .unwrap();
                    used[j] = true;
                    raw.vectors[j].clone()
                })
                .collect()
        }
    };
    Ok(rows
        .into_iter()
        .zip(right)
        .map(|(l, r)| {
            let o = inner(&l, r);
            let phase = if o.norm() > 0.0 { o / o.norm() } else { C64::new(1.0, 0.0) };
            let nl = norm(&l);
            l.into_iter().map(|z| z * phase / nl).collect()
        })
        .collect())
}

/// Sampled Riemann sheets on a rectangular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetGrid {
    pub x_samples: Vec<f64>,
    pub y_samples: Vec<f64>,
    pub sheets: usize,
    /// Row-major over (ix, iy); `None` marks a masked cell.
    pub energies: Vec<Option<Vec<f64>>>,
}

impl SheetGrid {
    pub fn cell(&self, ix: usize, iy: usize) -> Option<&[f64]> {
        self.energies[ix * self.y_samples.len() + iy].as_deref()
    }

    pub fn masked_count(&self) -> usize {
        self.energies.iter().filter(|e| e.is_none()).count()
    }

    /// CSV with columns x, y, sheet_index (1-based), energy, masked.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,sheet_index,energy,masked")?;
        for (ix, x) in self.x_samples.iter().enumerate() {
            for (iy, y) in self.y_samples.iter().enumerate() {
                match self.cell(ix, iy) {
                    Some(es) => {
                        for (s, e) in es.iter().enumerate() {
                            writeln!(w, "{x:.16e},{y:.16e},{},{e:.16e},0", s + 1)?;
                        }
                    }
                    None => {
                        for s in 0..self.sheets {
                            writeln!(w, "{x:.16e},{y:.16e},{},,1", s + 1)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Sorted spectrum at one control point with couplings scaled by
/// `couplings_scale`; `None` inside the mask or on numerical failure.
pub fn sheet_energies(config: &SystemConfig, x: f64, y: f64, couplings_scale: f64) -> Option<Vec<f64>> {
    if x.hypot(y - 1.0).min(x.hypot(y + 1.0)) < SHEET_MASK_RADIUS {
        return None;
    }
    let point = field_point(config, x, y).ok()?;
    let j: Vec<Vec<f64>> =
        config.couplings.iter().map(|r| r.iter().map(|v| v * couplings_scale).collect()).collect();
    let h = build_nhh(config, &point, Some(&j)).ok()?;
    eigensystem_sorted(&h, None).ok().map(|s| s.eigenvalues)
}

pub fn sheet_grid(
    config: &SystemConfig,
    x_range: (f64, f64),
    y_range: (f64, f64),
    resolution: (usize, usize),
    couplings_scale: f64,
) -> Result<SheetGrid> {
    config.validate()?;
    if resolution.0 < 2 || resolution.1 < 2 {
        return Err(Error::InvalidParameter("grid resolution must be at least 2 per axis".into()));
    }
    let xs = linspace(x_range.0, x_range.1, resolution.0);
    let ys = linspace(y_range.0, y_range.1, resolution.1);
    let cells: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
    let energies = crate::par_map(&cells, |&(x, y)| sheet_energies(config, x, y, couplings_scale));
    Ok(SheetGrid { x_samples: xs, y_samples: ys, sheets: config.dim(), energies })
}

/// Tuning for the branch-cut continuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchCutOptions {
    /// Continuation runs along y = y_probe from x = −half_width to +half_width.
    pub half_width: f64,
    /// Number of base intervals; odd so x = 0 is never sampled.
    pub intervals: usize,
    /// Minimum accepted eigenvector overlap between neighbouring samples.
    pub min_overlap: f64,
    pub max_refinements: usize,
    /// Relative degeneracy tolerance; pairs split at second order in x
    /// near the cut must stay resolved.
    pub degeneracy: f64,
}

impl Default for BranchCutOptions {
    fn default() -> Self {
        Self { half_width: 1.0, intervals: 401, min_overlap: 0.9, max_refinements: 24, degeneracy: 1e-11 }
    }
}

/// Result of following the sorted sheets across the cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchCut {
    /// Entry k (0-based) is the sorted index reached on the x > 0 side.
    pub mapping: Vec<usize>,
    /// Exchanged sheet pairs, 1-based, each (i, j) with i < j.
    pub pairs: Vec<(usize, usize)>,
}

/// Follows every sorted sheet by eigenvector continuity along y = y_probe
/// from the x < 0 side of the cut to the x > 0 side and reports which sorted
/// levels are exchanged.
pub fn branch_cut_couplings(
    config: &SystemConfig,
    y_probe: f64,
    couplings_override: Option<&[Vec<f64>]>,
    options: &BranchCutOptions,
) -> Result<BranchCut> {
    if !(y_probe > 1.0) {
        return Err(Error::InvalidParameter("branch-cut probe needs y > 1".into()));
    }
    let mut intervals = options.intervals.max(1);
    if intervals % 2 == 0 {
        intervals += 1;
    }
    let system_at = |x: f64| -> Result<EigenSystem> {
        let p = field_point(config, x, y_probe)?;
        eigensystem_with_tolerance(&build_nhh(config, &p, couplings_override)?, None, options.degeneracy)
    };
    let xs = linspace(-options.half_width, options.half_width, intervals + 1);
    let n = config.dim();
    let mut pos: Vec<usize> = (0..n).collect();
    let mut prev = system_at(xs[0])?;
    for w in xs.windows(2) {
        let (step, next) = follow(&system_at, &prev, w[0], w[1], options, 0)?;
        for p in pos.iter_mut() {
            *p = step[*p];
        }
        prev = next;
    }
    let pairs = (0..n).filter(|&k| pos[k] > k && pos[pos[k]] == k).map(|k| (k + 1, pos[k] + 1)).collect();
    Ok(BranchCut { mapping: pos, pairs })
}

type StepMap = (Vec<usize>, EigenSystem);

fn follow(
    system_at: &dyn Fn(f64) -> Result<EigenSystem>,
    prev: &EigenSystem,
    xa: f64,
    xb: f64,
    options: &BranchCutOptions,
    depth: usize,
) -> Result<StepMap> {
    let next = system_at(xb)?;
    let n = prev.dim;
    let mut map = vec![0; n];
    let mut worst = 1.0f64;
    for i in 0..n {
        let (j, o) = (0..n)
            .map(|j| (j, normalized_overlap(&prev.right_vectors[i], &next.right_vectors[j])))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        map[i] = j;
        worst = worst.min(o);
    }
    let mut seen = vec![false; n];
    let bijective = map.iter().all(|&j| !std::mem::replace(&mut seen[j], true));
    if bijective && worst >= options.min_overlap {
        return Ok((map, next));
    }
    if depth >= options.max_refinements {
        return Err(Error::AmbiguousPairing { overlap: worst, x: xb });
    }
    let mid = 0.5 * (xa + xb);
    let (m1, s1) = follow(system_at, prev, xa, mid, options, depth + 1)?;
    let (m2, s2) = follow(system_at, &s1, mid, xb, options, depth + 1)?;
    Ok((m1.iter().map(|&j| m2[j]).collect(), s2))
}

/// The 3×3 extended Hamiltonian H′ with γ = Δ sin(Re φ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extended3x3 {
    pub x: f64,
    pub y: f64,
    pub delta: f64,
    pub phi: C64,
    pub gamma: f64,
    pub matrix: ComplexMatrix,
    /// Closed form (γ/sin φ, −γ/sin φ, sin(Im φ)/sin φ).
    pub eigenvalues: [C64; 3],
    /// Evaluated with the limiting values at an exceptional point.
    pub at_ep: bool,
}

impl Extended3x3 {
    /// Upper-left 2×2 block scaled by sin φ / sin(Im φ); `None` where that
    /// factor is undefined (exceptional point or real φ).
    pub fn projective_block(&self) -> Option<ComplexMatrix> {
        let s = self.phi.im.sin();
        if self.at_ep || s == 0.0 {
            return None;
        }
        let f = self.phi.sin() / s;
        Some(ComplexMatrix::from_fn(2, |i, j| self.matrix[(i, j)] * f))
    }

    /// Dimension of the eigenspace of `lambda` (nullity of H′ − λ).
    pub fn eigenspace_dimension(&self, lambda: C64) -> Result<usize> {
        let mut m = self.matrix.clone();
        for i in 0..3 {
            m[(i, i)] -= lambda;
        }
        Ok(3 - numerical_rank(&m, 1e-10)?)
    }
}

pub fn extended_3x3(x: f64, y: f64, delta: f64) -> Extended3x3 {
    let near_upper = x.hypot(y - 1.0) < EP_EVALUATION_RADIUS;
    let near_lower = x.hypot(y + 1.0) < EP_EVALUATION_RADIUS;
    if near_upper || near_lower {
        // Limits approaching along y = ±1 from x > 0: Re φ → π/4,
        // Im φ → ∓∞, so cot φ → ±i and 1/sin φ → 0.
        let phi = C64::new(std::f64::consts::FRAC_PI_4, if near_upper { f64::NEG_INFINITY } else { f64::INFINITY });
        let gamma = delta * std::f64::consts::FRAC_1_SQRT_2;
        let cot = if near_upper { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) };
        let matrix = ComplexMatrix::from_fn(3, |i, j| match (i, j) {
            (0, 0) => cot * gamma,
            (1, 1) => -cot * gamma,
            (0, 1) | (1, 0) => gamma.into(),
            _ => ZERO,
        });
        return Extended3x3 { x, y, delta, phi, gamma, matrix, eigenvalues: [ZERO; 3], at_ep: true };
    }
    let phi = compute_phi(x, y);
    let gamma = delta * phi.re.sin();
    let (s, c) = (phi.sin(), phi.cos());
    let cot = c / s;
    let third = C64::new(phi.im.sin(), 0.0) / s;
    let matrix = ComplexMatrix::from_fn(3, |i, j| match (i, j) {
        (0, 0) => cot * gamma,
        (1, 1) => -cot * gamma,
        (0, 1) | (1, 0) => gamma.into(),
        (2, 2) => third,
        _ => ZERO,
    });
    let l = C64::new(gamma, 0.0) / s;
    Extended3x3 { x, y, delta, phi, gamma, matrix, eigenvalues: [l, -l, third], at_ep: false }
}
