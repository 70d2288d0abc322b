//! Dense statevectors: construction, local updates, sampling and file I/O.
//!
//! Qubit `q` is bit `q` of the amplitude index.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::pauli::{i_pow, Pauli, PauliOperator, PauliString, PauliSum};

/// Largest register a statevector may hold.
pub const MAX_QUBITS: usize = 30;

pub const NORM_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

/// JSON sidecar written next to a binary amplitude file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSidecar {
    pub n_qubits: usize,
    pub norm: f64,
    pub seed_provenance: Option<String>,
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::InvalidSize(format!(
            "register of {n} qubits outside 1..={MAX_QUBITS}"
        )));
    }
    Ok(())
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_size(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::InvalidArgument(format!("basis index {index} >= {dim}")));
        }
        let mut amps = vec![C64::default(); dim];
        amps[index] = C64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amps })
    }

    /// Wraps amplitudes, rejecting wrong lengths and unnormalized input.
    pub fn from_amplitudes(n_qubits: usize, amps: Vec<C64>) -> Result<Self> {
        check_size(n_qubits)?;
        if amps.len() != 1usize << n_qubits {
            return Err(Error::InvalidSize(format!(
                "{} amplitudes for {n_qubits} qubits",
                amps.len()
            )));
        }
        let n = linalg::norm(&amps);
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(n));
        }
        Ok(StateVector { n_qubits, amps })
    }

    /// Tensor product of single-qubit eigenstates; `(P, true)` is the +1 eigenstate of `P`.
    pub fn product_eigenstates(letters: &[(Pauli, bool)]) -> Result<Self> {
        check_size(letters.len())?;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let one = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let locals: Vec<[C64; 2]> = letters
            .iter()
            .map(|&(p, plus)| {
                let s = if plus { 1.0 } else { -1.0 };
                match p {
                    Pauli::Z if plus => [one, C64::default()],
                    Pauli::Z => [C64::default(), one],
                    Pauli::X => [one * h, one * (s * h)],
                    Pauli::Y => [one * h, i * (s * h)],
                }
            })
            .collect();
        let dim = 1usize << letters.len();
        let amps = (0..dim)
            .map(|idx| {
                locals
                    .iter()
                    .enumerate()
                    .map(|(q, l)| l[(idx >> q) & 1])
                    .product()
            })
            .collect();
        Ok(StateVector {
            n_qubits: letters.len(),
            amps,
        })
    }

    /// Haar-random pure state from normalized complex Gaussian amplitudes.
    pub fn haar_random<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Result<Self> {
        check_size(n_qubits)?;
        let dim = 1usize << n_qubits;
        let mut amps: Vec<C64> = (0..dim)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let n = linalg::norm(&amps);
        amps.iter_mut().for_each(|a| *a /= n);
        Ok(StateVector { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.amps)
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        self.amps.iter_mut().for_each(|a| *a /= n);
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        linalg::dot(&self.amps, &other.amps)
    }

    /// `|| self - other ||`.
    pub fn distance(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Unnormalized vector `M |psi>`.
    pub fn apply_operator(&self, op: &PauliOperator) -> Vec<C64> {
        let mut out = vec![C64::default(); self.dim()];
        op.apply(&self.amps, &mut out);
        out
    }

    /// `exp(-i angle P)` for the Pauli string with masks `(x, z, n_y)`.
    pub fn apply_pauli_rotation(&mut self, x: usize, z: usize, ny: u8, angle: f64) {
        let (s, c) = angle.sin_cos();
        let amps = &mut self.amps;
        if x == 0 {
            let plus = C64::new(c, -s);
            let minus = C64::new(c, s);
            for (i, a) in amps.iter_mut().enumerate() {
                *a *= if (i & z).count_ones() & 1 == 1 { minus } else { plus };
            }
            return;
        }
        // new_i = c a_i - i s ph sgn(j) a_j with j = i ^ x
        let m = C64::new(0.0, -s) * i_pow(ny);
        let low = x & x.wrapping_neg();
        for i in 0..amps.len() {
            if i & low != 0 {
                continue;
            }
            let j = i ^ x;
            let (ai, aj) = (amps[i], amps[j]);
            let si = if (i & z).count_ones() & 1 == 1 { -m } else { m };
            let sj = if (j & z).count_ones() & 1 == 1 { -m } else { m };
            amps[i] = c * ai + sj * aj;
            amps[j] = c * aj + si * ai;
        }
    }

    pub fn apply_pauli_string_rotation(&mut self, p: &PauliString, angle: f64) {
        let (x, z, ny) = p.masks();
        self.apply_pauli_rotation(x, z, ny, angle);
    }

    /// Applies a `2^k x 2^k` unitary on `qubits`; `qubits[k]` is bit `k` of the local index.
    pub fn apply_gate(&mut self, qubits: &[usize], m: &DMatrix<C64>) -> Result<()> {
        let k = qubits.len();
        let d = 1usize << k;
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::InvalidArgument("gate dimension mismatch".into()));
        }
        let mask: usize = qubits.iter().fold(0, |acc, &q| acc | (1 << q));
        if mask.count_ones() as usize != k || qubits.iter().any(|&q| q >= self.n_qubits) {
            return Err(Error::InvalidArgument("bad gate qubits".into()));
        }
        let offsets: Vec<usize> = (0..d)
            .map(|l| {
                qubits
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| (l >> b) & 1 == 1)
                    .fold(0, |acc, (_, &q)| acc | (1 << q))
            })
            .collect();
        let mut buf = vec![C64::default(); d];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            for (l, &o) in offsets.iter().enumerate() {
                buf[l] = self.amps[base | o];
            }
            for (r, &o) in offsets.iter().enumerate() {
                let mut acc = C64::default();
                for (l, b) in buf.iter().enumerate() {
                    acc += m[(r, l)] * b;
                }
                self.amps[base | o] = acc;
            }
        }
        Ok(())
    }

    pub fn expectation(&self, sum: &PauliSum) -> Result<C64> {
        if sum.n_qubits() > self.n_qubits {
            return Err(Error::InvalidArgument("observable wider than register".into()));
        }
        let v = self.apply_operator(&sum.compile());
        Ok(linalg::dot(&self.amps, &v))
    }

    /// Draws a computational-basis outcome from `|amplitude|^2`.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            acc += a.norm_sqr();
            if u < acc {
                return i;
            }
        }
        self.amps.len() - 1
    }

    /// Writes little-endian `(re, im)` f64 pairs to `path` and a JSON sidecar next to it.
    pub fn write_binary(&self, path: &Path, seed_provenance: Option<String>) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.amps.len() * 16);
        for a in &self.amps {
            bytes.extend_from_slice(&a.re.to_le_bytes());
            bytes.extend_from_slice(&a.im.to_le_bytes());
        }
        fs::write(path, bytes)?;
        let side = StateSidecar {
            n_qubits: self.n_qubits,
            norm: self.norm(),
            seed_provenance,
        };
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<(Self, StateSidecar)> {
        let side: StateSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let bytes = fs::read(path)?;
        check_size(side.n_qubits)?;
        let dim = 1usize << side.n_qubits;
        if bytes.len() != dim * 16 {
            return Err(Error::Format(format!(
                "expected {} bytes for {} qubits, found {}",
                dim * 16,
                side.n_qubits,
                bytes.len()
            )));
        }
        let amps = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        Ok((StateVector::from_amplitudes(side.n_qubits, amps)?, side))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ps(s: &str) -> PauliString {
        PauliString::from_dense_str(s).unwrap()
    }

    fn dense_rotation(p: &str, angle: f64) -> DMatrix<C64> {
        let sum = PauliSum::from_terms(p.len(), [(C64::new(1.0, 0.0), ps(p))]).unwrap();
        let m = sum.to_dense().unwrap();
        let d = m.nrows();
        DMatrix::<C64>::identity(d, d) * C64::new(angle.cos(), 0.0)
            - m * C64::new(0.0, angle.sin())
    }

    #[test]
    fn zero_state_has_unit_first_amplitude() {
        let z = StateVector::zero(3).unwrap();
        assert_eq!(z.amplitudes()[0], C64::new(1.0, 0.0));
        assert_eq!(z.dim(), 8);
    }

    #[test]
    fn rejects_unnormalized() {
        let r = StateVector::from_amplitudes(1, vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        assert!(matches!(r, Err(Error::NotNormalized(_))));
    }

    #[test]
    fn rejects_zero_qubits() {
        assert!(matches!(StateVector::zero(0), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn product_eigenstates_are_eigenstates() {
        let letters = [(Pauli::X, true), (Pauli::Y, true), (Pauli::Z, false), (Pauli::Y, false)];
        let psi = StateVector::product_eigenstates(&letters).unwrap();
        let obs = PauliSum::from_terms(4, [(C64::new(1.0, 0.0), ps("XYZY"))]).unwrap();
        let e = psi.expectation(&obs).unwrap();
        assert!((e - C64::new(1.0, 0.0)).norm() < 1e-14, "{e}");
    }

    #[test]
    fn rotation_matches_dense_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in ["XIZ", "YYI", "ZIZ", "IYX", "YZX"] {
            let psi = StateVector::haar_random(3, &mut rng).unwrap();
            let mut fast = psi.clone();
            fast.apply_pauli_string_rotation(&ps(p), 0.37);
            let v = nalgebra::DVector::from_vec(psi.amplitudes().to_vec());
            let want = dense_rotation(p, 0.37) * v;
            let err: f64 = fast
                .amplitudes()
                .iter()
                .zip(want.iter())
                .map(|(a, b)| (a - b).norm())
                .sum();
            assert!(err < 1e-13, "{p}: {err}");
        }
    }

    #[test]
    fn gate_matches_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = StateVector::haar_random(4, &mut rng).unwrap();
        let mut a = psi.clone();
        a.apply_pauli_string_rotation(&ps("IXIY"), -0.8);
        let mut b = psi.clone();
        b.apply_gate(&[1, 3], &dense_rotation("XY", -0.8)).unwrap();
        assert!(a.distance(&b) < 1e-13);
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.bin");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = StateVector::haar_random(5, &mut rng).unwrap();
        psi.write_binary(&path, Some("seed=5".into())).unwrap();
        let (back, side) = StateVector::read_binary(&path).unwrap();
        assert_eq!(back, psi);
        assert_eq!(side.seed_provenance.as_deref(), Some("seed=5"));
    }

    #[test]
    fn binary_rejects_truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.bin");
        StateVector::zero(3).unwrap().write_binary(&path, None).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        assert!(matches!(
            StateVector::read_binary(&path),
            Err(Error::Format(_))
        ));
    }

    proptest! {
        #[test]
        fn rotations_preserve_norm(seed in 0u64..1000, angle in -3.0f64..3.0, x in 0usize..32, z in 0usize..32) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut psi = StateVector::haar_random(5, &mut rng).unwrap();
            let ny = (x & z).count_ones() as u8;
            psi.apply_pauli_rotation(x, z, ny, angle);
            prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
        }
    }
}
