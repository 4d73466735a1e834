//! Dense helpers shared by the operators and the oracle.

use nalgebra::{DMatrix, SymmetricEigen};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out = M x` for a column-major nalgebra matrix.
pub fn matvec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.ncols(), x.len());
    debug_assert_eq!(m.nrows(), out.len());
    out.fill(0.0);
    for (j, xj) in x.iter().enumerate() {
        if *xj == 0.0 {
            continue;
        }
        for (o, mij) in out.iter_mut().zip(m.column(j).iter()) {
            *o += mij * xj;
        }
    }
}

/// `out += Mᵀ x`
pub fn matvec_t_add(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.nrows(), x.len());
    debug_assert_eq!(m.ncols(), out.len());
    for (j, o) in out.iter_mut().enumerate() {
        *o += dot(m.column(j).as_slice(), x);
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, s| acc.max(*s))
}

/// Eigenvalues of the symmetric part `(M + Mᵀ)/2`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Result of a power iteration run.
#[derive(Clone, Copy, Debug)]
pub struct PowerEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration for the dominant eigenvalue of a symmetric PSD operator.
///
/// Starts from a fixed, non-degenerate vector so the estimate is reproducible.
pub fn power_iteration<F>(dim: usize, mut apply: F, max_iter: usize, rel_tol: f64) -> PowerEstimate
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return PowerEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_7).sin()).collect();
    let s = norm(&v);
    v.iter_mut().for_each(|e| *e /= s);
    let mut w = vec![0.0; dim];
    let mut value = 0.0;
    for it in 1..=max_iter {
        apply(&v, &mut w);
        let next = dot(&v, &w);
        let wn = norm(&w);
        if wn == 0.0 {
            return PowerEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        if it > 1 && (next - value).abs() <= rel_tol * next.abs() {
            return PowerEstimate {
                value: next,
                iterations: it,
                converged: true,
            };
        }
        value = next;
    }
    PowerEstimate {
        value,
        iterations: max_iter,
        converged: false,
    }
}
