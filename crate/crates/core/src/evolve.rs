//! Exact time evolution `exp(-i H t)|psi>`.
//!
//! Small registers use a cached dense eigendecomposition. Larger ones use a
//! restarted Lanczos-Krylov propagator driven by Pauli-sum matvecs.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, axpy, dot, norm};
use crate::pauli::{PauliOperator, PauliSum};
use crate::state::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvolutionMethod {
    /// Dense eigendecomposition up to `eig_cap` qubits, Krylov above.
    Auto,
    Eigen,
    Krylov,
}

#[derive(Clone, Copy, Debug)]
pub struct EvolverOptions {
    pub method: EvolutionMethod,
    pub eig_cap: usize,
    pub krylov_dim: usize,
    /// Error target per Krylov substep.
    pub krylov_tol: f64,
}

impl Default for EvolverOptions {
    fn default() -> Self {
        EvolverOptions {
            method: EvolutionMethod::Auto,
            eig_cap: 8,
            krylov_dim: 30,
            krylov_tol: 1e-13,
        }
    }
}

type Eig = (Vec<f64>, DMatrix<C64>);

pub struct ExactEvolver {
    n_qubits: usize,
    hamiltonian: PauliSum,
    op: PauliOperator,
    use_eigen: bool,
    opts: EvolverOptions,
    eig: OnceLock<Eig>,
}

impl ExactEvolver {
    pub fn new(hamiltonian: &PauliSum, opts: EvolverOptions) -> Result<Self> {
        if !hamiltonian.is_hermitian(1e-12) {
            return Err(Error::NotHermitian("Hamiltonian has complex coefficients".into()));
        }
        let n = hamiltonian.n_qubits();
        let use_eigen = match opts.method {
            EvolutionMethod::Auto => n <= opts.eig_cap,
            EvolutionMethod::Eigen => {
                if n > opts.eig_cap {
                    return Err(Error::CapExceeded {
                        what: "dense eigendecomposition qubits".into(),
                        needed: n,
                        cap: opts.eig_cap,
                    });
                }
                true
            }
            EvolutionMethod::Krylov => false,
        };
        Ok(ExactEvolver {
            n_qubits: n,
            hamiltonian: hamiltonian.clone(),
            op: hamiltonian.compile(),
            use_eigen,
            opts,
            eig: OnceLock::new(),
        })
    }

    pub fn hamiltonian(&self) -> &PauliSum {
        &self.hamiltonian
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn uses_eigen(&self) -> bool {
        self.use_eigen
    }

    fn eig(&self) -> &Eig {
        self.eig.get_or_init(|| {
            let h = self.hamiltonian.to_dense().expect("dense Hamiltonian");
            linalg::hermitian_eig(&h)
        })
    }

    /// `exp(-i H t)|psi>`; negative `t` runs backwards.
    pub fn evolve(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        if psi.n_qubits() != self.n_qubits {
            return Err(Error::InvalidArgument(format!(
                "state has {} qubits, Hamiltonian {}",
                psi.n_qubits(),
                self.n_qubits
            )));
        }
        let amps = self.evolve_raw(psi.amplitudes(), t);
        StateVector::from_amplitudes(self.n_qubits, amps)
    }

    /// Same as [`ExactEvolver::evolve`] on a raw amplitude vector of any norm.
    pub fn evolve_raw(&self, v: &[C64], t: f64) -> Vec<C64> {
        if t == 0.0 {
            return v.to_vec();
        }
        if self.use_eigen {
            let (vals, vecs) = self.eig();
            let x = DVector::from_column_slice(v);
            let mut c = vecs.adjoint() * x;
            for (ci, &l) in c.iter_mut().zip(vals) {
                *ci *= C64::from_polar(1.0, -l * t);
            }
            (vecs * c).as_slice().to_vec()
        } else {
            krylov_expm(&self.op, v, t, self.opts.krylov_dim, self.opts.krylov_tol)
        }
    }

    /// Dense `exp(-i H t)`.
    ///
    /// Without a cached eigenbasis, columns are propagated over a short time
    /// `t / 2^k` and the result is squared `k` times.
    pub fn unitary(&self, t: f64) -> DMatrix<C64> {
        let dim = 1usize << self.n_qubits;
        if self.use_eigen {
            let (vals, vecs) = self.eig();
            return linalg::unitary_from_eig(vals, vecs, t);
        }
        let scale = self.hamiltonian.one_norm() * t.abs();
        let k = if scale > 1.0 { scale.log2().ceil() as u32 } else { 0 };
        let tau = t / 2f64.powi(k as i32);
        let mut u = DMatrix::<C64>::zeros(dim, dim);
        let mut e = vec![C64::default(); dim];
        for col in 0..dim {
            e[col] = C64::new(1.0, 0.0);
            let v = self.evolve_raw(&e, tau);
            u.column_mut(col).copy_from_slice(&v);
            e[col] = C64::default();
        }
        for _ in 0..k {
            u = linalg::matmul(&u, &u);
        }
        u
    }
}

/// One-shot convenience wrapper around [`ExactEvolver`].
pub fn exact_evolve(hamiltonian: &PauliSum, psi: &StateVector, t: f64) -> Result<StateVector> {
    ExactEvolver::new(hamiltonian, EvolverOptions::default())?.evolve(psi, t)
}

/// Lanczos propagator for `exp(-i H t) v` with adaptive substeps.
pub fn krylov_expm(op: &PauliOperator, v: &[C64], t: f64, m_max: usize, tol: f64) -> Vec<C64> {
    let dim = v.len();
    let mut cur = v.to_vec();
    let mut remaining = t;
    let mut w = vec![C64::default(); dim];
    while remaining != 0.0 {
        let nv = norm(&cur);
        if nv == 0.0 {
            return cur;
        }
        let mut basis: Vec<Vec<C64>> = vec![cur.iter().map(|x| x / nv).collect()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut breakdown = false;
        let mut last_beta = 0.0;
        for k in 0..m_max.min(dim) {
            op.apply(&basis[k], &mut w);
            alpha.push(dot(&basis[k], &w).re);
            for _ in 0..2 {
                for b in basis.iter() {
                    let h = dot(b, &w);
                    axpy(-h, b, &mut w);
                }
            }
            let bn = norm(&w);
            last_beta = bn;
            if bn < 1e-12 * alpha.iter().fold(1.0f64, |a, x| a.max(x.abs())) {
                breakdown = true;
                break;
            }
            if k + 1 == m_max.min(dim) {
                break;
            }
            beta.push(bn);
            basis.push(w.iter().map(|x| x / bn).collect());
        }
        let m = alpha.len();
        let (theta, q) = linalg::tridiag_eig(&alpha, &beta);
        let coeffs = |tau: f64| -> Vec<C64> {
            // y = Q exp(-i Theta tau) Q^T e1
            (0..m)
                .map(|i| {
                    (0..m)
                        .map(|j| C64::from_polar(q[(i, j)] * q[(0, j)], -theta[j] * tau))
                        .sum()
                })
                .collect()
        };
        let mut tau = remaining;
        let y = loop {
            let y = coeffs(tau);
            if breakdown {
                break y;
            }
            let err = last_beta * y[m - 1].norm();
            if err <= tol || tau.abs() < 1e-300 {
                break y;
            }
            let shrink = 0.9 * (tol / err).powf(1.0 / m as f64);
            tau *= shrink.clamp(0.1, 0.5);
        };
        let mut next = vec![C64::default(); dim];
        for (b, yi) in basis.iter().zip(&y) {
            axpy(yi * nv, b, &mut next);
        }
        cur = next;
        remaining -= tau;
        if remaining.abs() <= 1e-15 * t.abs() {
            break;
        }
    }
    cur
}
