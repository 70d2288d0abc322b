//! Small dense helpers and matrix-free Lanczos routines.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Eigenvalues and eigenvectors of a real symmetric tridiagonal matrix.
pub fn tridiag_eig(alpha: &[f64], beta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let e = t.symmetric_eigen();
    (e.eigenvalues, e.eigenvectors)
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc })
}

fn deterministic_start(dim: usize) -> Vec<C64> {
    // fixed pseudo-random start so results do not depend on global RNG state
    let mut s: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut v: Vec<C64> = (0..dim)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            let a = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            let b = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            C64::new(a, b)
        })
        .collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Largest eigenvalue of a Hermitian operator given only its action.
///
/// Restarted Lanczos with full reorthogonalization. Returns the eigenvalue and
/// its Ritz vector, which can seed a later call on a nearby operator.
pub fn lanczos_max_eig<F>(
    dim: usize,
    mut apply: F,
    start: Option<&[C64]>,
    tol: f64,
    max_matvecs: usize,
) -> (f64, Vec<C64>)
where
    F: FnMut(&[C64], &mut [C64]),
{
    let mut v0 = match start {
        Some(s) if norm(s) > 0.0 => {
            let n = norm(s);
            s.iter().map(|x| x / n).collect()
        }
        _ => deterministic_start(dim),
    };
    let m_max = dim.min(40).max(1);
    let mut used = 0usize;
    let mut best = (f64::NEG_INFINITY, v0.clone());
    let mut w = vec![C64::default(); dim];
    loop {
        let mut basis: Vec<Vec<C64>> = vec![v0.clone()];
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        let mut converged = false;
        for k in 0..m_max {
            apply(&basis[k], &mut w);
            used += 1;
            let a = dot(&basis[k], &w).re;
            alpha.push(a);
            for b in basis.iter() {
                let h = dot(b, &w);
                axpy(-h, b, &mut w);
            }
            for b in basis.iter() {
                let h = dot(b, &w);
                axpy(-h, b, &mut w);
            }
            let bn = norm(&w);
            let (vals, vecs) = tridiag_eig(&alpha, &beta);
            let (imax, theta) = argmax(vals.as_slice());
            let scale = theta.abs().max(1e-300);
            let residual = bn * vecs[(k, imax)].abs();
            if bn <= 1e-14 * scale || k + 1 == dim || residual <= tol * scale {
                converged = true;
                break;
            }
            if used >= max_matvecs {
                break;
            }
            beta.push(bn);
            basis.push(w.iter().map(|x| x / bn).collect());
        }
        let (vals, vecs) = tridiag_eig(&alpha, &beta);
        let (imax, theta) = argmax(vals.as_slice());
        let mut ritz = vec![C64::default(); dim];
        for (j, b) in basis.iter().take(alpha.len()).enumerate() {
            axpy(C64::new(vecs[(j, imax)], 0.0), b, &mut ritz);
        }
        let rn = norm(&ritz);
        ritz.iter_mut().for_each(|x| *x /= rn);
        let restart_gain = (theta - best.0).abs();
        if theta > best.0 {
            best = (theta, ritz.clone());
        }
        let scale = theta.abs().max(1e-300);
        if converged || used >= max_matvecs || restart_gain <= tol * scale {
            return best;
        }
        v0 = ritz;
    }
}

/// Dense complex product through the blocked `zgemm` kernel.
pub fn matmul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = DMatrix::<C64>::zeros(m, n);
    // SAFETY: Complex<f64> is repr(C) with layout [f64; 2]; nalgebra storage is
    // column-major and contiguous, so row stride 1 and column stride = nrows.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    c
}

/// Hermitian eigen-decomposition of a small dense matrix.
pub fn hermitian_eig(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let e = m.clone().symmetric_eigen();
    (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
}

/// Eigenvalues of a small dense Hermitian matrix.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    m.clone().symmetric_eigenvalues().iter().copied().collect()
}

/// `V diag(exp(-i theta lambda)) V^dagger`.
pub fn unitary_from_eig(vals: &[f64], vecs: &DMatrix<C64>, theta: f64) -> DMatrix<C64> {
    let d = vals.len();
    let mut scaled = vecs.clone();
    for (j, &l) in vals.iter().enumerate() {
        let ph = C64::from_polar(1.0, -theta * l);
        for i in 0..d {
            scaled[(i, j)] *= ph;
        }
    }
    scaled * vecs.adjoint()
}
