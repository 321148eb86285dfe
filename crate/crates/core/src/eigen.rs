//! General complex eigensolver: Householder reduction to Hessenberg form,
//! single-shift QR with Wilkinson shifts and deflation, then (block) inverse
//! iteration on the original matrix for the eigenvectors.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, inner, norm, ComplexMatrix, Lu, ZERO};

/// Iteration cap per eigenvalue for the QR sweep.
pub const MAX_QR_ITERATIONS: usize = 500;

/// Raw eigen-decomposition: eigenvalues in the order the QR sweep deflated
/// them, with unit-norm right eigenvectors.
#[derive(Debug, Clone)]
pub struct RawEigen {
    pub values: Vec<C64>,
    pub vectors: Vec<Vec<C64>>,
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(m: &ComplexMatrix) -> Result<Vec<C64>> {
    let mut h = m.clone();
    hessenberg(&mut h);
    schur_values(&mut h)
}

/// Eigenvalues and right eigenvectors. Eigenvalues closer than
/// `cluster_tol` are treated as one cluster whose invariant subspace is
/// found by block inverse iteration.
pub fn eigen(m: &ComplexMatrix, cluster_tol: f64) -> Result<RawEigen> {
    let n = m.dim();
    let values = eigenvalues(m)?;
    let scale = m.max_abs().max(f64::MIN_POSITIVE);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a].re.total_cmp(&values[b].re).then(values[a].im.total_cmp(&values[b].im))
    });
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &k in &order {
        match clusters
            .iter_mut()
            .find(|c| c.iter().any(|&j| (values[j] - values[k]).norm() <= cluster_tol))
        {
            Some(c) => c.push(k),
            None => clusters.push(vec![k]),
        }
    }

    let mut vectors = vec![Vec::new(); n];
    for cluster in &clusters {
        let mu = cluster.iter().map(|&k| values[k]).sum::<C64>() / cluster.len() as f64;
        let basis = block_inverse_iteration(m, mu, cluster.len(), scale);
        if cluster.len() == 1 {
            vectors[cluster[0]] = basis.into_iter().next().unwrap();
            continue;
        }
        for (slot, v) in cluster.iter().zip(resolve_cluster(m, &basis, scale)?) {
            vectors[*slot] = v;
        }
    }
    Ok(RawEigen { values, vectors })
}

fn hessenberg(h: &mut ComplexMatrix) {
    let n = h.dim();
    for k in 0..n.saturating_sub(2) {
        let x: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let xnorm = norm(&x);
        if xnorm == 0.0 {
            continue;
        }
        let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { C64::new(1.0, 0.0) };
        let mut v = x;
        v[0] += phase * xnorm;
        let vnorm = norm(&v);
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // H <- (I - 2vv†) H (I - 2vv†), acting on rows/cols k+1..n.
        for j in 0..n {
            let s: C64 = (0..v.len()).map(|i| v[i].conj() * h[(k + 1 + i, j)]).sum();
            for i in 0..v.len() {
                h[(k + 1 + i, j)] -= v[i] * s * 2.0;
            }
        }
        for i in 0..n {
            let s: C64 = (0..v.len()).map(|j| h[(i, k + 1 + j)] * v[j]).sum();
            for j in 0..v.len() {
                h[(i, k + 1 + j)] -= s * v[j].conj() * 2.0;
            }
        }
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
    }
}

/// Givens rotation `[[c, s], [-s̄, c]]` mapping (a, b) to (r, 0).
fn givens(a: C64, b: C64) -> (f64, C64) {
    if b == ZERO {
        return (1.0, ZERO);
    }
    if a == ZERO {
        return (0.0, C64::new(1.0, 0.0));
    }
    let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let an = a.norm();
    (an / r, (a / an) * b.conj() / r)
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let half_tr = (a + d) * 0.5;
    let disc = ((a - d) * 0.5 * ((a - d) * 0.5) + b * c).sqrt();
    let l1 = half_tr + disc;
    let l2 = half_tr - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

fn schur_values(h: &mut ComplexMatrix) -> Result<Vec<C64>> {
    let n = h.dim();
    if n == 0 {
        return Ok(Vec::new());
    }
    let scale = h.max_abs();
    let mut hi = n - 1;
    let mut iter = 0usize;
    while hi > 0 {
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let mut diag = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            if diag == 0.0 {
                diag = scale;
            }
            if sub <= f64::EPSILON * diag || sub <= f64::MIN_POSITIVE {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        if iter > MAX_QR_ITERATIONS {
            return Err(Error::NoConvergence { iterations: MAX_QR_ITERATIONS });
        }
        let mut shift = wilkinson_shift(
            h[(hi - 1, hi - 1)],
            h[(hi - 1, hi)],
            h[(hi, hi - 1)],
            h[(hi, hi)],
        );
        if iter % 11 == 10 {
            // Exceptional shift to break rare stagnation cycles.
            shift += C64::new(0.75 * h[(hi, hi - 1)].norm(), 0.0);
        }
        for k in lo..=hi {
            h[(k, k)] -= shift;
        }
        let mut rots = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
            for j in k..n {
                let (x, y) = (h[(k, j)], h[(k + 1, j)]);
                h[(k, j)] = x * c + s * y;
                h[(k + 1, j)] = -s.conj() * x + y * c;
            }
            rots.push((c, s));
        }
        for (idx, &(c, s)) in rots.iter().enumerate() {
            let k = lo + idx;
            for i in 0..=(k + 1).min(hi) {
                let (x, y) = (h[(i, k)], h[(i, k + 1)]);
                h[(i, k)] = x * c + s.conj() * y;
                h[(i, k + 1)] = -s * x + y * c;
            }
        }
        for k in lo..=hi {
            h[(k, k)] += shift;
        }
    }
    Ok((0..n).map(|i| h[(i, i)]).collect())
}

/// Orthonormal basis (size `m`) of the invariant subspace belonging to the
/// eigenvalues near `mu`.
fn block_inverse_iteration(a: &ComplexMatrix, mu: C64, m: usize, scale: f64) -> Vec<Vec<C64>> {
    let n = a.dim();
    // A slightly perturbed shift keeps the factorization finite when mu is exact.
    let sigma = mu + C64::new(1e-10, 1e-10) * scale;
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= sigma;
    }
    let lu = Lu::factor_shifted(&shifted, f64::EPSILON * scale);
    // Deterministic start vectors that are generic with respect to any basis.
    let mut block: Vec<Vec<C64>> = (0..m)
        .map(|j| {
            (0..n)
                .map(|i| {
                    let t = (i * (m + 1) + j * 7 + 1) as f64;
                    C64::new((t * 0.7548776662).fract() + 0.1, (t * 0.5698402910).fract() - 0.5)
                })
                .collect()
        })
        .collect();
    orthonormalize(&mut block);
    for _ in 0..3 {
        block = block.iter().map(|v| lu.solve(v)).collect();
        orthonormalize(&mut block);
    }
    block
}

/// Modified Gram–Schmidt with re-orthogonalization.
pub(crate) fn orthonormalize(vs: &mut [Vec<C64>]) {
    for k in 0..vs.len() {
        for _ in 0..2 {
            for j in 0..k {
                let p = inner(&vs[j], &vs[k]);
                let (head, tail) = vs.split_at_mut(k);
                for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= p * y;
                }
            }
        }
        let nk = norm(&vs[k]);
        if nk > 0.0 {
            for x in vs[k].iter_mut() {
                *x /= nk;
            }
        }
    }
}

/// Eigenvectors inside a clustered invariant subspace. A (numerically)
/// scalar restriction means the whole subspace is an eigenspace and the
/// orthonormal basis is returned; otherwise each eigenvector is the null
/// vector of the restricted operator shifted by its Ritz value.
fn resolve_cluster(a: &ComplexMatrix, basis: &[Vec<C64>], scale: f64) -> Result<Vec<Vec<C64>>> {
    let m = basis.len();
    let av: Vec<Vec<C64>> = basis.iter().map(|v| a.matvec(v)).collect();
    let restricted = ComplexMatrix::from_fn(m, |i, j| inner(&basis[i], &av[j]));
    let mu = restricted.trace() / m as f64;
    let nilpotent = &restricted - &ComplexMatrix::identity(m).scale(mu);
    if nilpotent.frobenius_norm() <= 1e-8 * scale {
        return Ok(basis.to_vec());
    }
    let ritz = eigenvalues(&restricted)?;
    let mut out = Vec::with_capacity(m);
    for lambda in ritz {
        let mut shifted = restricted.clone();
        for i in 0..m {
            shifted[(i, i)] -= lambda;
        }
        let gram = &shifted.dagger() * &shifted;
        let (_, vecs) = hermitian_eigen(&gram)?;
        let coeffs = vecs.column(0);
        let mut v = vec![ZERO; a.dim()];
        for (c, b) in coeffs.iter().zip(basis) {
            for (x, y) in v.iter_mut().zip(b) {
                *x += c * y;
            }
        }
        let nv = norm(&v);
        out.push(v.into_iter().map(|z| z / nv).collect());
    }
    Ok(out)
}
