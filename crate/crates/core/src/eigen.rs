//! Small dense and iterative symmetric eigenvalue routines used by the
//! spectral checks: a cyclic Jacobi solver for the projected block matrices
//! and a block Lanczos iteration with full reorthogonalization for the
//! extreme eigenvalues of large symmetric operators.

use crate::error::SpectrumError;

/// Eigenvalues (ascending) of a small dense symmetric matrix by the cyclic
/// Jacobi method. `a` is row-major `n x n` and is destroyed.
pub fn jacobi_eigenvalues(a: &mut [f64], n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    let idx = |i: usize, j: usize| i * n + j;
    for _sweep in 0..60 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[idx(i, j)] * a[idx(i, j)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(a)) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[idx(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[idx(p, p)];
                let aqq = a[idx(q, q)];
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[idx(k, p)];
                    let akq = a[idx(k, q)];
                    a[idx(k, p)] = c * akp - s * akq;
                    a[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[idx(p, k)];
                    let aqk = a[idx(q, k)];
                    a[idx(p, k)] = c * apk - s * aqk;
                    a[idx(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| a[idx(i, i)]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eigs
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * xi;
    }
}

/// Orthogonalizes `v` against each vector in `basis` (assumed orthonormal).
fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let alpha = dot(v, b);
        axpy(v, -alpha, b);
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        let inv = 1.0 / norm;
        for x in v.iter_mut() {
            *x *= inv;
        }
    }
    norm
}

/// Deterministic start vectors: a fixed splitmix sequence, so reruns (and
/// thread counts) cannot change the spectrum report.
fn seeded_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(0x2545f4914f6cdd1d);
    (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            (z as f64) / (u64::MAX as f64) - 0.5
        })
        .collect()
}

/// The `k_want` smallest eigenvalues (ascending) of a symmetric operator
/// restricted to the orthogonal complement of `exclude`, by block Lanczos
/// on the reversed spectrum `shift I - A`.
///
/// `apply` must evaluate `y = A x`; `shift` must dominate the spectrum
/// (Gershgorin bound). `exclude` must be orthonormal; the Krylov basis is
/// kept orthogonal to it throughout, so multiplicities inside the excluded
/// span are invisible to the iteration.
pub fn smallest_eigenvalues(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    n: usize,
    shift: f64,
    exclude: &[Vec<f64>],
    k_want: usize,
    max_steps: usize,
) -> Result<Vec<f64>, SpectrumError> {
    let block = (k_want + 3).min(n);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    // T is assembled densely in the Krylov basis.
    let max_dim = (block * max_steps).min(n);
    let mut t = vec![0.0f64; max_dim * max_dim];
    let mut dim = 0usize;

    // Start block.
    let mut current: Vec<Vec<f64>> = Vec::new();
    for b in 0..block {
        let mut v = seeded_vector(n, 0xC0FFEE + b as u64);
        project_out(&mut v, exclude);
        project_out(&mut v, &current);
        if normalize(&mut v) < 1e-12 {
            return Err(SpectrumError::NonConvergence("degenerate start block".into()));
        }
        current.push(v);
    }

    let mut last_eigs: Vec<f64> = Vec::new();
    for step in 0..max_steps {
        if dim + block > max_dim {
            break;
        }
        // Append the current block to the basis.
        let base = dim;
        for v in current.drain(..) {
            basis.push(v);
        }
        dim += block;

        // Apply the operator to each new basis vector and fill T.
        let mut next: Vec<Vec<f64>> = Vec::new();
        for local in 0..block {
            let col = base + local;
            let av = apply(&basis[col]);
            // w = (shift I - A) v, projected and reorthogonalized.
            let mut w: Vec<f64> = basis[col]
                .iter()
                .zip(av.iter())
                .map(|(v, a)| shift * v - a)
                .collect();
            project_out(&mut w, exclude);
            for (j, b) in basis.iter().enumerate() {
                let alpha = dot(&w, b);
                // T entries are assigned, not accumulated: intra-block pairs
                // are visited from both sides and must stay idempotent.
                t[col * max_dim + j] = alpha;
                t[j * max_dim + col] = alpha;
                axpy(&mut w, -alpha, b);
            }
            // Second reorthogonalization pass for stability.
            project_out(&mut w, exclude);
            for b in basis.iter().chain(next.iter()) {
                let alpha = dot(&w, b);
                axpy(&mut w, -alpha, b);
            }
            if normalize(&mut w) > 1e-10 {
                next.push(w);
            } else {
                // Krylov space exhausted in this direction; restart with a
                // fresh random vector.
                let mut v = seeded_vector(n, 0xDEAD + (step * block + local) as u64);
                project_out(&mut v, exclude);
                for b in basis.iter().chain(next.iter()) {
                    let alpha = dot(&v, b);
                    axpy(&mut v, -alpha, b);
                }
                if normalize(&mut v) < 1e-12 {
                    break;
                }
                next.push(v);
            }
        }

        // Ritz values so far.
        if step % 2 == 1 || dim + block > max_dim || next.len() < block {
            let mut sub = vec![0.0f64; dim * dim];
            for i in 0..dim {
                for j in 0..dim {
                    sub[i * dim + j] = t[i * max_dim + j];
                }
            }
            let eigs = jacobi_eigenvalues(&mut sub, dim);
            // Largest of (shift - A) are the smallest of A.
            let mut smallest: Vec<f64> =
                eigs.iter().rev().take(k_want).map(|lam| shift - lam).collect();
            smallest.reverse();
            smallest.sort_by(|x, y| x.partial_cmp(y).unwrap());
            if smallest.len() == k_want && !last_eigs.is_empty() {
                let close = smallest.iter().zip(last_eigs.iter()).all(|(a, b)| {
                    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
                });
                if close {
                    return Ok(smallest);
                }
            }
            last_eigs = smallest;
        }
        if next.len() < block {
            break;
        }
        current = next;
    }
    if last_eigs.len() == k_want {
        Ok(last_eigs)
    } else {
        Err(SpectrumError::NonConvergence(format!(
            "Lanczos basis exhausted with {} Ritz values",
            last_eigs.len()
        )))
    }
}
