//! Small dense symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! The correlation matrices this toolkit decomposes are at most a few dozen
//! rows, where Jacobi is simple, dependency-free, and deterministic across
//! platforms. Convergence is declared when the off-diagonal Frobenius mass
//! drops below `1e-14` times the Frobenius norm of the input.

/// Row-major square matrix view used by the decomposition.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues, sorted non-increasing.
    pub values: Vec<f64>,
    /// Row-major `n x n`; row `r` is the unit eigenvector for `values[r]`,
    /// sign-fixed so its largest-magnitude component is positive.
    pub vectors: Vec<f64>,
}

const CONVERGENCE: f64 = 1e-14;
const MAX_SWEEPS: usize = 64;

fn frob(m: &[f64]) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn off_diag_frob(m: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[i * n + j] * m[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Eigendecomposition of a symmetric matrix (row-major, length `n*n`).
///
/// Panics if the input length is not `n*n`. The input only needs to be
/// symmetric to working precision; it is symmetrized internally.
pub fn eigen_sym(matrix: &[f64], n: usize) -> SymEig {
    assert_eq!(matrix.len(), n * n, "matrix must be n x n");
    if n == 0 {
        return SymEig {
            values: vec![],
            vectors: vec![],
        };
    }
    let mut a: Vec<f64> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            0.5 * (matrix[i * n + j] + matrix[j * n + i])
        })
        .collect();
    // v starts as identity; rows accumulate the rotations.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = frob(&a).max(f64::MIN_POSITIVE);

    for _sweep in 0..MAX_SWEEPS {
        if off_diag_frob(&a, n) <= CONVERGENCE * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                // stable tangent of the rotation angle
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vpk = v[p * n + k];
                    let vqk = v[q * n + k];
                    v[p * n + k] = c * vpk - s * vqk;
                    v[q * n + k] = s * vpk + c * vqk;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        a[y * n + y]
            .partial_cmp(&a[x * n + x])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = vec![0.0; n * n];
    for (r, &src) in order.iter().enumerate() {
        values.push(a[src * n + src]);
        let row = &v[src * n..(src + 1) * n];
        // sign convention: first component of largest magnitude made positive
        let mut lead = 0usize;
        for (k, val) in row.iter().enumerate() {
            if val.abs() > row[lead].abs() {
                lead = k;
            }
        }
        let flip = if row[lead] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[r * n + k] = flip * row[k];
        }
    }
    SymEig { values, vectors }
}

/// Max residual `||X v - lambda v||_2` over all eigenpairs, for tests.
pub fn eigen_residual(matrix: &[f64], n: usize, eig: &SymEig) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..eig.values.len() {
        let vr = &eig.vectors[r * n..(r + 1) * n];
        let mut res = 0.0;
        for i in 0..n {
            let mut xv = 0.0;
            for j in 0..n {
                xv += matrix[i * n + j] * vr[j];
            }
            let d = xv - eig.values[r] * vr[i];
            res += d * d;
        }
        worst = worst.max(res.sqrt());
    }
    worst
}
