//! Reduced density matrices and entanglement measures. Entropies are in bits.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::state::StateVector;

/// Subset count above which [`k_uniformity_delta`] samples instead of enumerating.
pub const DEFAULT_SUBSET_CAP: usize = 2000;

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    /// `qubits[k]` is bit `k` of the local index.
    pub qubits: Vec<usize>,
    pub rho: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.rho)
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }
}

fn check_support(n: usize, support: &[usize]) -> Result<()> {
    let set: BTreeSet<usize> = support.iter().copied().collect();
    if set.len() != support.len() {
        return Err(Error::InvalidArgument("repeated qubit in support".into()));
    }
    if let Some(&q) = set.iter().next_back() {
        if q >= n {
            return Err(Error::InvalidArgument(format!(
                "qubit {q} out of range for {n} qubits"
            )));
        }
    }
    Ok(())
}

/// `rho_S = tr_{not S} |psi><psi|`.
pub fn reduced_density_matrix(psi: &StateVector, support: &[usize]) -> Result<DensityMatrix> {
    let n = psi.n_qubits();
    check_support(n, support)?;
    let k = support.len();
    let env: Vec<usize> = (0..n).filter(|q| !support.contains(q)).collect();
    let rows = 1usize << k;
    let cols = 1usize << env.len();
    let mut m = DMatrix::<C64>::zeros(rows, cols);
    for (i, &a) in psi.amplitudes().iter().enumerate() {
        let l = support
            .iter()
            .enumerate()
            .fold(0, |acc, (b, &q)| acc | (((i >> q) & 1) << b));
        let e = env
            .iter()
            .enumerate()
            .fold(0, |acc, (b, &q)| acc | (((i >> q) & 1) << b));
        m[(l, e)] = a;
    }
    let rho = linalg::matmul(&m, &m.adjoint());
    Ok(DensityMatrix {
        qubits: support.to_vec(),
        rho,
    })
}

fn entropy_of(eigs: &[f64]) -> f64 {
    eigs.iter()
        .filter(|&&l| l > 1e-15)
        .map(|&l| -l * l.log2())
        .sum::<f64>()
        .max(0.0)
}

pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    entropy_of(&rho.eigenvalues())
}

/// `tr(rho^2)`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.rho.iter().map(|c| c.norm_sqr()).sum()
}

/// `-log2 tr(rho^2)`.
pub fn renyi2_entropy(rho: &DensityMatrix) -> f64 {
    (-purity(rho).log2()).max(0.0)
}

/// Trace norm `tr|rho - I/d|`.
pub fn dist_to_maximally_mixed(rho: &DensityMatrix) -> f64 {
    let d = rho.dim() as f64;
    rho.eigenvalues().iter().map(|l| (l - 1.0 / d).abs()).sum()
}

/// Pinsker-type bound on [`dist_to_maximally_mixed`]: `sqrt(2 ln2 (log2 d - S))`.
pub fn pinsker_distance_bound(n_qubits: usize, entropy_bits: f64) -> f64 {
    (2.0 * std::f64::consts::LN_2 * (n_qubits as f64 - entropy_bits).max(0.0)).sqrt()
}

pub fn mutual_information(psi: &StateVector, a: &[usize], b: &[usize]) -> Result<f64> {
    if a.iter().any(|q| b.contains(q)) {
        return Err(Error::InvalidArgument("subsets overlap".into()));
    }
    let ab: Vec<usize> = a.iter().chain(b).copied().collect();
    let sa = von_neumann_entropy(&reduced_density_matrix(psi, a)?);
    let sb = von_neumann_entropy(&reduced_density_matrix(psi, b)?);
    let sab = von_neumann_entropy(&reduced_density_matrix(psi, &ab)?);
    Ok((sa + sb - sab).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KUniformity {
    /// Largest `tr|rho_S - I/2^k|` found.
    pub delta: f64,
    pub worst_subset: Vec<usize>,
    pub n_checked: usize,
    pub exhaustive: bool,
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Maximum distance to the maximally mixed state over `k`-qubit marginals.
///
/// Enumerates all subsets when there are at most `cap`, otherwise checks `cap`
/// uniformly sampled subsets drawn from `seed`.
pub fn k_uniformity_delta(psi: &StateVector, k: usize, cap: usize, seed: u64) -> Result<KUniformity> {
    let n = psi.n_qubits();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={n}")));
    }
    let total = binomial(n, k);
    let exhaustive = total <= cap;
    let list: Vec<Vec<usize>> = if exhaustive {
        subsets(n, k)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..cap)
            .map(|_| {
                let mut s = index::sample(&mut rng, n, k).into_vec();
                s.sort_unstable();
                s
            })
            .collect()
    };
    let mut best = KUniformity {
        delta: 0.0,
        worst_subset: list[0].clone(),
        n_checked: list.len(),
        exhaustive,
    };
    for s in &list {
        let d = dist_to_maximally_mixed(&reduced_density_matrix(psi, s)?);
        if d > best.delta {
            best.delta = d;
            best.worst_subset = s.clone();
        }
    }
    Ok(best)
}
