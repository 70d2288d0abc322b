//! Classical shadows from random single-qubit Pauli measurements.
//!
//! Snapshot `ρ̂ = ⊗_q (3 u_q^† |b_q><b_q| u_q - I)`; a Pauli string `P` then has
//! single-shot estimate `3^{w(P)} Π_q (-1)^{b_q}` when every basis matches and 0
//! otherwise.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{ErrorFamily, ErrorTermSet};
use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliSum, PauliString};
use crate::state::StateVector;

const MAGIC: &[u8; 4] = b"SHDW";
const VERSION: u8 = 1;

/// One randomized measurement: per-qubit basis and outcome bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Snapshot {
    /// Qubits measured in `X`.
    pub x_mask: u64,
    /// Qubits measured in `Y`.
    pub y_mask: u64,
    /// Outcome bits; 1 means eigenvalue `-1`.
    pub outcomes: u64,
}

impl Snapshot {
    pub fn basis(&self, q: usize) -> Pauli {
        if self.x_mask >> q & 1 == 1 {
            Pauli::X
        } else if self.y_mask >> q & 1 == 1 {
            Pauli::Y
        } else {
            Pauli::Z
        }
    }

    pub fn outcome(&self, q: usize) -> bool {
        self.outcomes >> q & 1 == 1
    }

    /// Single-shot estimate of `<P>`.
    pub fn pauli_value(&self, p: &PauliString) -> f64 {
        let mut v = 1.0;
        for &(q, l) in p.ops() {
            if self.basis(q) != l {
                return 0.0;
            }
            v *= if self.outcome(q) { -3.0 } else { 3.0 };
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShadowSet {
    pub n_qubits: usize,
    pub seed: u64,
    pub source: String,
    pub snapshots: Vec<Snapshot>,
}

/// Mean with standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

fn mean_se(values: impl Iterator<Item = f64>) -> Estimate {
    let v: Vec<f64> = values.collect();
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return Estimate { mean, se: f64::INFINITY };
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Estimate {
        mean,
        se: (var / m).sqrt(),
    }
}

/// RNG for snapshot `index` under `seed`.
pub fn snapshot_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn rotate_into_basis(amps: &mut [C64], q: usize, basis: Pauli) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    // rows of u with u P u^† = Z
    let (u00, u01, u10, u11) = match basis {
        Pauli::Z => return,
        Pauli::X => (C64::new(h, 0.0), C64::new(h, 0.0), C64::new(h, 0.0), C64::new(-h, 0.0)),
        Pauli::Y => (C64::new(h, 0.0), C64::new(0.0, -h), C64::new(h, 0.0), C64::new(0.0, h)),
    };
    let bit = 1usize << q;
    for i in 0..amps.len() {
        if i & bit == 0 {
            let (a, b) = (amps[i], amps[i | bit]);
            amps[i] = u00 * a + u01 * b;
            amps[i | bit] = u10 * a + u11 * b;
        }
    }
}

/// Draws `m` snapshots of `psi`; snapshot `k` uses stream `k` of `seed`.
pub fn collect_shadows(psi: &StateVector, m: usize, seed: u64, source: impl Into<String>) -> Result<ShadowSet> {
    if m == 0 {
        return Err(Error::InvalidArgument("shadow count must be positive".into()));
    }
    let n = psi.n_qubits();
    if n > 64 {
        return Err(Error::InvalidSize(format!("{n} qubits exceed the snapshot width")));
    }
    let mut snapshots = Vec::with_capacity(m);
    let mut work = vec![C64::default(); psi.dim()];
    for k in 0..m {
        let mut rng = snapshot_rng(seed, k as u64);
        let (mut x_mask, mut y_mask) = (0u64, 0u64);
        work.copy_from_slice(psi.amplitudes());
        for q in 0..n {
            let basis = match rng.random_range(0..3u8) {
                0 => Pauli::X,
                1 => Pauli::Y,
                _ => Pauli::Z,
            };
            match basis {
                Pauli::X => x_mask |= 1 << q,
                Pauli::Y => y_mask |= 1 << q,
                Pauli::Z => {}
            }
            rotate_into_basis(&mut work, q, basis);
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = work.len() - 1;
        for (i, a) in work.iter().enumerate() {
            acc += a.norm_sqr();
            if u < acc {
                idx = i;
                break;
            }
        }
        snapshots.push(Snapshot {
            x_mask,
            y_mask,
            outcomes: idx as u64,
        });
    }
    Ok(ShadowSet {
        n_qubits: n,
        seed,
        source: source.into(),
        snapshots,
    })
}

impl ShadowSet {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Binary layout: magic, version, `n_qubits: u32`, `M: u64`, `seed: u64`,
    /// source length `u32` and UTF-8 bytes, then 3 bits per qubit per
    /// snapshot (2 basis bits, 1 outcome bit) packed LSB first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.n_qubits as u32).to_le_bytes());
        out.extend_from_slice(&(self.snapshots.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.source.len() as u32).to_le_bytes());
        out.extend_from_slice(self.source.as_bytes());
        let mut writer = BitWriter::default();
        for s in &self.snapshots {
            for q in 0..self.n_qubits {
                let code = match s.basis(q) {
                    Pauli::X => 0,
                    Pauli::Y => 1,
                    Pauli::Z => 2,
                };
                writer.push(code, 2);
                writer.push(s.outcome(q) as u8, 1);
            }
        }
        out.extend(writer.finish());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |m: &str| Error::Format(format!("shadow set: {m}"));
        let mut cur = bytes;
        let mut take = |k: usize| -> Result<&[u8]> {
            if cur.len() < k {
                return Err(fail("truncated"));
            }
            let (a, b) = cur.split_at(k);
            cur = b;
            Ok(a)
        };
        if take(4)? != MAGIC {
            return Err(fail("bad magic"));
        }
        if take(1)?[0] != VERSION {
            return Err(fail("unsupported version"));
        }
        let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let m = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let sl = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let source = String::from_utf8(take(sl)?.to_vec()).map_err(|_| fail("source not UTF-8"))?;
        if n > 64 {
            return Err(fail("too many qubits"));
        }
        let payload_bits = n.checked_mul(m).and_then(|v| v.checked_mul(3)).ok_or_else(|| fail("size overflow"))?;
        let payload = take(payload_bits.div_ceil(8))?;
        let mut reader = BitReader { data: payload, pos: 0 };
        let mut snapshots = Vec::with_capacity(m);
        for _ in 0..m {
            let mut s = Snapshot {
                x_mask: 0,
                y_mask: 0,
                outcomes: 0,
            };
            for q in 0..n {
                match reader.read(2) {
                    0 => s.x_mask |= 1 << q,
                    1 => s.y_mask |= 1 << q,
                    2 => {}
                    _ => return Err(fail("invalid basis code")),
                }
                if reader.read(1) == 1 {
                    s.outcomes |= 1 << q;
                }
            }
            snapshots.push(s);
        }
        Ok(ShadowSet {
            n_qubits: n,
            seed,
            source,
            snapshots,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    nbits: usize,
}

impl BitWriter {
    fn push(&mut self, value: u8, width: usize) {
        for b in 0..width {
            if self.nbits % 8 == 0 {
                self.bytes.push(0);
            }
            if value >> b & 1 == 1 {
                *self.bytes.last_mut().unwrap() |= 1 << (self.nbits % 8);
            }
            self.nbits += 1;
        }
    }

    fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn read(&mut self, width: usize) -> u8 {
        let mut v = 0;
        for b in 0..width {
            let bit = self.data[self.pos / 8] >> (self.pos % 8) & 1;
            v |= bit << b;
            self.pos += 1;
        }
        v
    }
}

/// Mean single-shot estimate of `<P>`.
pub fn estimate_pauli(shadows: &ShadowSet, p: &PauliString) -> Estimate {
    mean_se(shadows.snapshots.iter().map(|s| s.pauli_value(p)))
}

/// Per-snapshot estimates of `<op>` (real part; `op` should be Hermitian).
pub fn observable_samples(shadows: &ShadowSet, op: &PauliSum) -> Vec<f64> {
    let terms: Vec<(&PauliString, f64)> = op.terms().map(|(p, c)| (p, c.re)).collect();
    shadows
        .snapshots
        .iter()
        .map(|s| terms.iter().map(|(p, c)| c * s.pauli_value(p)).sum())
        .collect()
}

/// Estimate of `<op>` with standard error from per-snapshot totals.
pub fn estimate_observable(shadows: &ShadowSet, op: &PauliSum) -> Result<Estimate> {
    if !op.is_hermitian(1e-12) {
        return Err(Error::NotHermitian("shadow observable".into()));
    }
    Ok(mean_se(observable_samples(shadows, op).into_iter()))
}

/// Sample variance of the single-snapshot estimator of `<op>`.
pub fn single_shot_variance(shadows: &ShadowSet, op: &PauliSum) -> f64 {
    let e = mean_se(observable_samples(shadows, op).into_iter());
    e.se * e.se * shadows.len() as f64
}

/// `tr(ρ̂_q ρ̂'_q)` for one qubit: 5 for equal basis and outcome, -4 for equal
/// basis and different outcome, 1/2 for different bases.
fn pair_factor(basis_a: u8, bit_a: u8, basis_b: u8, bit_b: u8) -> f64 {
    if basis_a != basis_b {
        0.5
    } else if bit_a == bit_b {
        5.0
    } else {
        -4.0
    }
}

fn purity_u_statistic(snaps: &[Snapshot], support: &[usize]) -> f64 {
    let k = support.len();
    let encode = |s: &Snapshot| -> usize {
        support.iter().fold(0usize, |acc, &q| {
            let b = match s.basis(q) {
                Pauli::X => 0,
                Pauli::Y => 1,
                Pauli::Z => 2,
            };
            acc * 6 + b * 2 + s.outcome(q) as usize
        })
    };
    let mut counts: HashMap<usize, u64> = HashMap::new();
    for s in snaps {
        *counts.entry(encode(s)).or_default() += 1;
    }
    let mut keys: Vec<(usize, u64)> = counts.into_iter().collect();
    keys.sort_unstable();
    let value = |mut a: usize, mut b: usize| -> f64 {
        let mut v = 1.0;
        for _ in 0..k {
            let (ca, cb) = (a % 6, b % 6);
            v *= pair_factor((ca / 2) as u8, (ca % 2) as u8, (cb / 2) as u8, (cb % 2) as u8);
            a /= 6;
            b /= 6;
        }
        v
    };
    let mut total = 0.0;
    for &(a, na) in &keys {
        for &(b, nb) in &keys {
            let pairs = if a == b { na * (na - 1) } else { na * nb };
            if pairs > 0 {
                total += pairs as f64 * value(a, b);
            }
        }
    }
    let m = snaps.len() as f64;
    total / (m * (m - 1.0))
}

/// Unbiased U-statistic for `tr(rho_S^2)` over all ordered distinct snapshot pairs.
pub fn estimate_purity(shadows: &ShadowSet, support: &[usize]) -> Result<f64> {
    check_purity_args(shadows, support, 2)?;
    Ok(purity_u_statistic(&shadows.snapshots, support))
}

/// Median of U-statistics over `batches` contiguous batches.
pub fn estimate_purity_mom(shadows: &ShadowSet, support: &[usize], batches: usize) -> Result<f64> {
    let batches = batches.max(1);
    check_purity_args(shadows, support, 2 * batches)?;
    let size = shadows.len() / batches;
    let mut vals: Vec<f64> = (0..batches)
        .map(|b| purity_u_statistic(&shadows.snapshots[b * size..(b + 1) * size], support))
        .collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    let mid = vals.len() / 2;
    Ok(if vals.len() % 2 == 1 {
        vals[mid]
    } else {
        0.5 * (vals[mid - 1] + vals[mid])
    })
}

pub const DEFAULT_MOM_BATCHES: usize = 10;
pub const MAX_PURITY_SUPPORT: usize = 6;

fn check_purity_args(shadows: &ShadowSet, support: &[usize], min_m: usize) -> Result<()> {
    if shadows.len() < min_m {
        return Err(Error::InvalidArgument(format!(
            "purity estimate needs at least {min_m} snapshots, got {}",
            shadows.len()
        )));
    }
    if support.len() > MAX_PURITY_SUPPORT {
        return Err(Error::CapExceeded {
            what: "purity support qubits".into(),
            needed: support.len(),
            cap: MAX_PURITY_SUPPORT,
        });
    }
    if support.iter().any(|&q| q >= shadows.n_qubits) {
        return Err(Error::InvalidArgument("support outside register".into()));
    }
    Ok(())
}

/// `Σ_{j,j'} E_j^† E_j' = E^† E` with the identity part split off.
#[derive(Clone, Debug)]
pub struct RefinedObservable {
    pub offset: f64,
    pub observable: PauliSum,
}

impl RefinedObservable {
    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        Ok(self.offset + psi.expectation(&self.observable)?.re)
    }
}

pub fn refined_error_observable(family: &ErrorFamily) -> Result<RefinedObservable> {
    let full = family.operator.dagger().mul(&family.operator);
    if !full.is_hermitian(1e-10) {
        return Err(Error::NotHermitian("refined observable".into()));
    }
    let (offset, rest) = full.split_identity();
    let mut observable = PauliSum::zero(rest.n_qubits());
    for (p, c) in rest.terms() {
        observable.add_term(C64::new(c.re, 0.0), p.clone());
    }
    Ok(RefinedObservable {
        offset: offset.re,
        observable,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrotterErrorEstimate {
    /// `Σ_f s_f dt^{p+1} sqrt(max(0, m_f))`.
    pub value: f64,
    /// First-order propagated standard error of `value`.
    pub se: f64,
    /// Measured `||E_f psi||^2` per family, unclamped.
    pub squared: Vec<Estimate>,
}

/// Shadow estimate of the leading Trotter error on the measured state.
pub fn estimate_trotter_error(shadows: &ShadowSet, terms: &ErrorTermSet, dt: f64) -> Result<TrotterErrorEstimate> {
    let pow = dt.powi(terms.order as i32 + 1);
    let mut value = 0.0;
    let mut var = 0.0;
    let mut squared = Vec::new();
    for f in &terms.families {
        let obs = refined_error_observable(f)?;
        let mut e = estimate_observable(shadows, &obs.observable)?;
        e.mean += obs.offset;
        let m = e.mean.max(0.0);
        value += f.scale * pow * m.sqrt();
        if m > 0.0 {
            var += (f.scale * pow * e.se / (2.0 * m.sqrt())).powi(2);
        }
        squared.push(e);
    }
    Ok(TrotterErrorEstimate {
        value,
        se: var.sqrt(),
        squared,
    })
}
