//! Spin-chain Hamiltonians and their two-part splits.
//!
//! Sites are 0-indexed with open boundaries.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliString, PauliSum};

/// Couplings of the mixed-field Ising chain `hx ΣX + hy ΣY + J ΣXX`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QimfParams {
    pub hx: f64,
    pub hy: f64,
    pub j: f64,
}

impl QimfParams {
    pub const TYPICAL: QimfParams = QimfParams {
        hx: 0.8090,
        hy: 0.9045,
        j: 1.0,
    };
    pub const ATYPICAL: QimfParams = QimfParams {
        hx: 0.0,
        hy: 0.9045,
        j: 1.0,
    };
}

/// Ordered parts `H = Σ_l H_l`; each part is exponentiated exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSplit {
    pub n_qubits: usize,
    pub parts: Vec<PauliSum>,
    /// Whether every pair of terms inside a part commutes.
    pub within_part_commuting: Vec<bool>,
    pub label: String,
}

impl HamiltonianSplit {
    pub fn new(n_qubits: usize, parts: Vec<PauliSum>, label: impl Into<String>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("split needs at least one part".into()));
        }
        for p in &parts {
            if !p.is_hermitian(1e-12) {
                return Err(Error::NotHermitian("split part has complex coefficients".into()));
            }
        }
        let within_part_commuting = parts.iter().map(termwise_commuting).collect();
        Ok(HamiltonianSplit {
            n_qubits,
            parts,
            within_part_commuting,
            label: label.into(),
        })
    }

    pub fn hamiltonian(&self) -> PauliSum {
        self.parts
            .iter()
            .fold(PauliSum::zero(self.n_qubits), |acc, p| acc.add(p))
    }

    pub fn a(&self) -> &PauliSum {
        &self.parts[0]
    }

    pub fn b(&self) -> &PauliSum {
        &self.parts[1]
    }
}

fn termwise_commuting(p: &PauliSum) -> bool {
    let keys: Vec<&PauliString> = p.terms().map(|(k, _)| k).collect();
    keys.iter()
        .enumerate()
        .all(|(i, a)| keys[i + 1..].iter().all(|b| a.commutes_with(b)))
}

fn r(v: f64) -> C64 {
    C64::new(v, 0.0)
}

fn two(a: usize, pa: Pauli, b: usize, pb: Pauli) -> PauliString {
    PauliString::new([(a, pa), (b, pb)]).expect("distinct sites")
}

/// `A = hx ΣX_j + J ΣX_jX_{j+1}`, `B = hy ΣY_j`.
pub fn build_qimf(n: usize, params: QimfParams) -> Result<HamiltonianSplit> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("QIMF chain needs N >= 2, got {n}")));
    }
    let mut a = PauliSum::zero(n);
    let mut b = PauliSum::zero(n);
    for s in 0..n {
        a.add_term(r(params.hx), PauliString::single(s, Pauli::X));
        b.add_term(r(params.hy), PauliString::single(s, Pauli::Y));
    }
    for s in 0..n - 1 {
        a.add_term(r(params.j), two(s, Pauli::X, s + 1, Pauli::X));
    }
    HamiltonianSplit::new(n, vec![a, b], format!("qimf(n={n})"))
}

/// Even/odd bond split of `Σ(XX + YY + ZZ) + Σ h_j Z_j`.
///
/// Part A holds bonds `(0,1), (2,3), ...` and fields on even sites; part B holds
/// bonds `(1,2), (3,4), ...` and fields on odd sites.
pub fn build_heisenberg(n: usize, fields: &[f64]) -> Result<HamiltonianSplit> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidSize(format!(
            "Heisenberg split needs even N >= 2, got {n}"
        )));
    }
    if fields.len() != n {
        return Err(Error::InvalidArgument(format!(
            "expected {n} field values, got {}",
            fields.len()
        )));
    }
    let mut parts = [PauliSum::zero(n), PauliSum::zero(n)];
    for s in 0..n - 1 {
        let part = &mut parts[s % 2];
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            part.add_term(r(1.0), two(s, p, s + 1, p));
        }
    }
    for (s, &h) in fields.iter().enumerate() {
        parts[s % 2].add_term(r(h), PauliString::single(s, Pauli::Z));
    }
    let [a, b] = parts;
    HamiltonianSplit::new(n, vec![a, b], format!("heisenberg(n={n})"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(s: &str) -> PauliString {
        PauliString::from_dense_str(s).unwrap()
    }

    #[test]
    fn qimf_term_counts() {
        let s = build_qimf(4, QimfParams::TYPICAL).unwrap();
        assert_eq!(s.a().len(), 7);
        assert_eq!(s.b().len(), 4);
        assert!(s.within_part_commuting.iter().all(|&c| c));
    }

    #[test]
    fn atypical_drops_x_field() {
        let s = build_qimf(4, QimfParams::ATYPICAL).unwrap();
        assert_eq!(s.a().len(), 3);
    }

    #[test]
    fn qimf_rejects_single_site() {
        assert!(matches!(
            build_qimf(1, QimfParams::TYPICAL),
            Err(Error::InvalidSize(_))
        ));
    }

    #[test]
    fn heisenberg_zero_field_counts() {
        let s = build_heisenberg(4, &[0.0; 4]).unwrap();
        assert_eq!(s.a().len(), 6);
        assert_eq!(s.b().len(), 3);
    }

    #[test]
    fn heisenberg_field_placement() {
        let s = build_heisenberg(4, &[1.0; 4]).unwrap();
        assert_eq!(s.a().coeff(&ps("ZIII")), C64::new(1.0, 0.0));
        assert_eq!(s.a().coeff(&ps("IIZI")), C64::new(1.0, 0.0));
        assert_eq!(s.b().coeff(&ps("IZII")), C64::new(1.0, 0.0));
        assert_eq!(s.b().coeff(&ps("IIIZ")), C64::new(1.0, 0.0));
        assert!(!s.within_part_commuting[0]);
    }

    #[test]
    fn heisenberg_rejects_odd() {
        assert!(build_heisenberg(5, &[0.0; 5]).is_err());
        assert!(build_heisenberg(4, &[0.0; 3]).is_err());
    }

    #[test]
    fn qimf_first_commutator_closed_form() {
        // [A,B] = 2i hx hy ΣZ + 2i J hy Σ(Z X + X Z)
        let p = QimfParams::TYPICAL;
        let n = 5;
        let s = build_qimf(n, p).unwrap();
        let k = s.a().commutator(s.b());
        let mut want = PauliSum::zero(n);
        for j in 0..n {
            want.add_term(C64::new(0.0, 2.0 * p.hx * p.hy), PauliString::single(j, Pauli::Z));
        }
        for j in 0..n - 1 {
            let c = C64::new(0.0, 2.0 * p.j * p.hy);
            want.add_term(c, two(j, Pauli::Z, j + 1, Pauli::X));
            want.add_term(c, two(j, Pauli::X, j + 1, Pauli::Z));
        }
        assert!(k.sub(&want).one_norm() < 1e-13);
        let bound = 2.0 * p.hx * p.hy * n as f64 + 4.0 * p.hy * p.j * (n - 1) as f64;
        assert!((k.one_norm() - bound).abs() < 1e-12);
    }

    #[test]
    fn qimf_nested_commutators_closed_form() {
        let p = QimfParams::TYPICAL;
        let (hx, hy, jj) = (p.hx, p.hy, p.j);
        let n = 6;
        let s = build_qimf(n, p).unwrap();
        let ab = s.a().commutator(s.b());
        let aab = s.a().commutator(&ab);
        let bab = s.b().commutator(&ab);
        let y = |j| PauliString::single(j, Pauli::Y);
        let mut want = PauliSum::zero(n);
        for j in 0..n {
            want.add_term(r(4.0 * hx * hx * hy), y(j));
        }
        for j in 0..n - 1 {
            want.add_term(r(4.0 * jj * jj * hy), y(j));
            want.add_term(r(4.0 * jj * jj * hy), y(j + 1));
            want.add_term(r(8.0 * jj * hx * hy), two(j, Pauli::Y, j + 1, Pauli::X));
            want.add_term(r(8.0 * jj * hx * hy), two(j, Pauli::X, j + 1, Pauli::Y));
        }
        for j in 0..n - 2 {
            let xyx = PauliString::new([(j, Pauli::X), (j + 1, Pauli::Y), (j + 2, Pauli::X)])
                .unwrap();
            want.add_term(r(8.0 * jj * jj * hy), xyx);
        }
        assert!(aab.sub(&want).one_norm() < 1e-12);

        let mut want = PauliSum::zero(n);
        for j in 0..n {
            want.add_term(r(-4.0 * hx * hy * hy), PauliString::single(j, Pauli::X));
        }
        for j in 0..n - 1 {
            want.add_term(r(8.0 * jj * hy * hy), two(j, Pauli::Z, j + 1, Pauli::Z));
            want.add_term(r(-8.0 * jj * hy * hy), two(j, Pauli::X, j + 1, Pauli::X));
        }
        assert!(bab.sub(&want).one_norm() < 1e-12);
    }
}
