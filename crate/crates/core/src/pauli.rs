//! Sparse Pauli strings, Pauli sums and their commutator algebra.
//!
//! A [`PauliString`] stores only its non-identity letters, sorted by site.
//! A [`PauliSum`] keeps one complex coefficient per distinct string and drops
//! coefficients below [`ZERO_TOL`] after every operation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Coefficients with modulus below this are dropped.
pub const ZERO_TOL: f64 = 1e-14;

/// Largest support handled by [`PauliSum::spectral_norm_dense`].
pub const DEFAULT_DENSE_CAP: usize = 12;

const I_POW: [C64; 4] = [
    C64::new(1.0, 0.0),
    C64::new(0.0, 1.0),
    C64::new(-1.0, 0.0),
    C64::new(0.0, -1.0),
];

pub fn i_pow(k: u8) -> C64 {
    I_POW[(k % 4) as usize]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            'X' | 'x' => Some(Pauli::X),
            'Y' | 'y' => Some(Pauli::Y),
            'Z' | 'z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    /// `(x, z)` symplectic bits.
    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    /// Single-site product `self * other = i^k * letter`.
    pub fn mul(self, other: Pauli) -> (u8, Option<Pauli>) {
        use Pauli::*;
        match (self, other) {
            (a, b) if a == b => (0, None),
            (X, Y) => (1, Some(Z)),
            (Y, X) => (3, Some(Z)),
            (Y, Z) => (1, Some(X)),
            (Z, Y) => (3, Some(X)),
            (Z, X) => (1, Some(Y)),
            (X, Z) => (3, Some(Y)),
            _ => unreachable!(),
        }
    }

    pub fn matrix(self) -> [[C64; 2]; 2] {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::X => [[o, l], [l, o]],
            Pauli::Y => [[o, -i], [i, o]],
            Pauli::Z => [[l, o], [o, -l]],
        }
    }
}

/// Tensor product of single-site Pauli letters; identity sites are omitted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliString {
    ops: Vec<(usize, Pauli)>,
}

impl PauliString {
    pub fn identity() -> Self {
        PauliString { ops: Vec::new() }
    }

    pub fn single(site: usize, p: Pauli) -> Self {
        PauliString {
            ops: vec![(site, p)],
        }
    }

    /// Builds a string from `(site, letter)` pairs in any order.
    pub fn new(ops: impl IntoIterator<Item = (usize, Pauli)>) -> Result<Self> {
        let mut ops: Vec<_> = ops.into_iter().collect();
        ops.sort_by_key(|&(s, _)| s);
        if ops.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("repeated site in Pauli string".into()));
        }
        Ok(PauliString { ops })
    }

    /// Parses compact notation such as `"XZY"` starting at site 0; `I` is skipped.
    pub fn from_dense_str(s: &str) -> Result<Self> {
        let mut ops = Vec::new();
        for (site, c) in s.chars().enumerate() {
            if c == 'I' || c == 'i' {
                continue;
            }
            let p = Pauli::from_char(c)
                .ok_or_else(|| Error::InvalidArgument(format!("bad Pauli letter {c:?}")))?;
            ops.push((site, p));
        }
        Ok(PauliString { ops })
    }

    pub fn ops(&self) -> &[(usize, Pauli)] {
        &self.ops
    }

    pub fn weight(&self) -> usize {
        self.ops.len()
    }

    pub fn is_identity(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.ops.iter().map(|&(s, _)| s)
    }

    pub fn min_site(&self) -> Option<usize> {
        self.ops.first().map(|&(s, _)| s)
    }

    pub fn max_site(&self) -> Option<usize> {
        self.ops.last().map(|&(s, _)| s)
    }

    pub fn letter(&self, site: usize) -> Option<Pauli> {
        self.ops
            .binary_search_by_key(&site, |&(s, _)| s)
            .ok()
            .map(|k| self.ops[k].1)
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let (mut a, mut b) = (0, 0);
        let mut clashes = 0usize;
        while a < self.ops.len() && b < other.ops.len() {
            let (sa, pa) = self.ops[a];
            let (sb, pb) = other.ops[b];
            if sa < sb {
                a += 1;
            } else if sb < sa {
                b += 1;
            } else {
                if pa != pb {
                    clashes += 1;
                }
                a += 1;
                b += 1;
            }
        }
        clashes % 2 == 0
    }

    /// Product `self * other = i^k * string`.
    pub fn mul(&self, other: &PauliString) -> (u8, PauliString) {
        let mut ops = Vec::with_capacity(self.ops.len() + other.ops.len());
        let mut phase = 0u8;
        let (mut a, mut b) = (0, 0);
        while a < self.ops.len() || b < other.ops.len() {
            let sa = self.ops.get(a).map(|x| x.0).unwrap_or(usize::MAX);
            let sb = other.ops.get(b).map(|x| x.0).unwrap_or(usize::MAX);
            if sa < sb {
                ops.push(self.ops[a]);
                a += 1;
            } else if sb < sa {
                ops.push(other.ops[b]);
                b += 1;
            } else {
                let (k, p) = self.ops[a].1.mul(other.ops[b].1);
                phase = (phase + k) % 4;
                if let Some(p) = p {
                    ops.push((sa, p));
                }
                a += 1;
                b += 1;
            }
        }
        (phase, PauliString { ops })
    }

    /// `(x_mask, z_mask, n_y)` with site `q` mapped to bit `q`.
    pub fn masks(&self) -> (usize, usize, u8) {
        let (mut x, mut z, mut ny) = (0usize, 0usize, 0u8);
        for &(s, p) in &self.ops {
            let (bx, bz) = p.bits();
            if bx {
                x |= 1 << s;
            }
            if bz {
                z |= 1 << s;
            }
            if p == Pauli::Y {
                ny += 1;
            }
        }
        (x, z, ny)
    }

    /// Relabels sites through `map` (old site -> new site).
    pub fn relabel(&self, map: &BTreeMap<usize, usize>) -> Result<PauliString> {
        PauliString::new(self.ops.iter().map(|&(s, p)| {
            (*map.get(&s).expect("site missing from relabel map"), p)
        }))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ops.is_empty() {
            return write!(f, "I");
        }
        let parts: Vec<String> = self
            .ops
            .iter()
            .map(|&(s, p)| format!("{}{}", p.as_char(), s))
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Compiled form of a Pauli sum for repeated action on amplitude vectors.
#[derive(Clone, Debug)]
pub struct PauliOperator {
    pub n_qubits: usize,
    /// `(x_mask, z_mask, coefficient * i^n_y)`.
    pub terms: Vec<(usize, usize, C64)>,
}

impl PauliOperator {
    /// `out = M * input`.
    pub fn apply(&self, input: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        self.apply_add(input, out);
    }

    /// `out += M * input`.
    pub fn apply_add(&self, input: &[C64], out: &mut [C64]) {
        for &(x, z, c) in &self.terms {
            if z == 0 {
                for (i, &a) in input.iter().enumerate() {
                    out[i ^ x] += c * a;
                }
            } else {
                for (i, &a) in input.iter().enumerate() {
                    let v = if (i & z).count_ones() & 1 == 1 { -c } else { c };
                    out[i ^ x] += v * a;
                }
            }
        }
    }

    /// `out = M^dagger * input`.
    pub fn apply_adjoint(&self, input: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        for &(x, z, c) in &self.terms {
            let c = c.conj();
            for (j, &a) in input.iter().enumerate() {
                let i = j ^ x;
                let v = if (i & z).count_ones() & 1 == 1 { -c } else { c };
                out[i] += v * a;
            }
        }
    }
}

/// Weighted sum of Pauli strings on `n_qubits` sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliSum {
    n_qubits: usize,
    terms: BTreeMap<PauliString, C64>,
}

impl PauliSum {
    pub fn zero(n_qubits: usize) -> Self {
        PauliSum {
            n_qubits,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n_qubits: usize) -> Self {
        let mut s = Self::zero(n_qubits);
        s.add_term(C64::new(1.0, 0.0), PauliString::identity());
        s
    }

    pub fn from_terms(
        n_qubits: usize,
        terms: impl IntoIterator<Item = (C64, PauliString)>,
    ) -> Result<Self> {
        let mut s = Self::zero(n_qubits);
        for (c, p) in terms {
            if let Some(m) = p.max_site() {
                if m >= n_qubits {
                    return Err(Error::InvalidArgument(format!(
                        "site {m} out of range for {n_qubits} qubits"
                    )));
                }
            }
            s.add_term(c, p);
        }
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&PauliString, &C64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, p: &PauliString) -> C64 {
        self.terms.get(p).copied().unwrap_or_default()
    }

    pub fn add_term(&mut self, c: C64, p: PauliString) {
        let e = self.terms.entry(p.clone()).or_default();
        *e += c;
        if e.norm() < ZERO_TOL {
            self.terms.remove(&p);
        }
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| c.norm() >= ZERO_TOL);
    }

    pub fn scale(&self, s: C64) -> PauliSum {
        let mut out = self.clone();
        out.terms.values_mut().for_each(|c| *c *= s);
        out.prune();
        out
    }

    pub fn add(&self, other: &PauliSum) -> PauliSum {
        let mut out = self.clone();
        out.n_qubits = self.n_qubits.max(other.n_qubits);
        for (p, &c) in &other.terms {
            *out.terms.entry(p.clone()).or_default() += c;
        }
        out.prune();
        out
    }

    pub fn sub(&self, other: &PauliSum) -> PauliSum {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &PauliSum) -> PauliSum {
        let mut acc: BTreeMap<PauliString, C64> = BTreeMap::new();
        for (p, &a) in &self.terms {
            for (q, &b) in &other.terms {
                let (k, r) = p.mul(q);
                *acc.entry(r).or_default() += a * b * i_pow(k);
            }
        }
        let mut out = PauliSum {
            n_qubits: self.n_qubits.max(other.n_qubits),
            terms: acc,
        };
        out.prune();
        out
    }

    pub fn dagger(&self) -> PauliSum {
        let mut out = self.clone();
        out.terms.values_mut().for_each(|c| *c = c.conj());
        out
    }

    /// `[self, other] = self*other - other*self`; only anticommuting pairs contribute.
    pub fn commutator(&self, other: &PauliSum) -> PauliSum {
        let mut acc: BTreeMap<PauliString, C64> = BTreeMap::new();
        for (p, &a) in &self.terms {
            for (q, &b) in &other.terms {
                if p.commutes_with(q) {
                    continue;
                }
                let (k, r) = p.mul(q);
                *acc.entry(r).or_default() += 2.0 * a * b * i_pow(k);
            }
        }
        let mut out = PauliSum {
            n_qubits: self.n_qubits.max(other.n_qubits),
            terms: acc,
        };
        out.prune();
        out
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.terms.values().all(|c| c.im.abs() <= tol)
    }

    pub fn one_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum()
    }

    /// Normalized Frobenius norm `sqrt(tr(M^dagger M) / 2^n)`.
    pub fn frobenius_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn support(&self) -> BTreeSet<usize> {
        self.terms.keys().flat_map(|p| p.support()).collect()
    }

    pub fn max_weight(&self) -> usize {
        self.terms.keys().map(|p| p.weight()).max().unwrap_or(0)
    }

    /// Coefficient of the identity string.
    pub fn identity_coeff(&self) -> C64 {
        self.coeff(&PauliString::identity())
    }

    /// Removes the identity part, returning it separately.
    pub fn split_identity(&self) -> (C64, PauliSum) {
        let mut rest = self.clone();
        let c = rest
            .terms
            .remove(&PauliString::identity())
            .unwrap_or_default();
        (c, rest)
    }

    /// Groups terms by the leftmost site of their support; identity goes to site 0.
    pub fn group_by_leftmost(&self) -> Vec<(usize, PauliSum)> {
        let mut groups: BTreeMap<usize, PauliSum> = BTreeMap::new();
        for (p, &c) in &self.terms {
            let s = p.min_site().unwrap_or(0);
            groups
                .entry(s)
                .or_insert_with(|| PauliSum::zero(self.n_qubits))
                .add_term(c, p.clone());
        }
        groups.into_iter().collect()
    }

    pub fn compile(&self) -> PauliOperator {
        let terms = self
            .terms
            .iter()
            .map(|(p, &c)| {
                let (x, z, ny) = p.masks();
                (x, z, c * i_pow(ny))
            })
            .collect();
        PauliOperator {
            n_qubits: self.n_qubits,
            terms,
        }
    }

    /// Dense matrix on the listed sites; site `support[k]` is bit `k` of the index.
    pub fn to_dense_on(&self, support: &[usize]) -> Result<DMatrix<C64>> {
        let map: BTreeMap<usize, usize> =
            support.iter().enumerate().map(|(k, &s)| (s, k)).collect();
        if map.len() != support.len() {
            return Err(Error::InvalidArgument("repeated site in support".into()));
        }
        let mut relabeled = PauliSum::zero(support.len());
        for (p, &c) in &self.terms {
            if p.support().any(|s| !map.contains_key(&s)) {
                return Err(Error::InvalidArgument(format!(
                    "term {p} acts outside the requested support"
                )));
            }
            relabeled.add_term(c, p.relabel(&map)?);
        }
        let dim = 1usize << support.len();
        let op = relabeled.compile();
        let mut m = DMatrix::<C64>::zeros(dim, dim);
        for &(x, z, c) in &op.terms {
            for i in 0..dim {
                let v = if (i & z).count_ones() & 1 == 1 { -c } else { c };
                m[(i ^ x, i)] += v;
            }
        }
        Ok(m)
    }

    /// Dense matrix on all `n_qubits` sites.
    pub fn to_dense(&self) -> Result<DMatrix<C64>> {
        let support: Vec<usize> = (0..self.n_qubits).collect();
        self.to_dense_on(&support)
    }

    /// Exact operator norm restricted to the support of the sum.
    ///
    /// Small supports use a dense SVD; larger ones run Lanczos on `M^dagger M`.
    pub fn spectral_norm_dense(&self, cap: usize) -> Result<f64> {
        let support: Vec<usize> = self.support().into_iter().collect();
        if support.len() > cap {
            return Err(Error::CapExceeded {
                what: "spectral norm support".into(),
                needed: support.len(),
                cap,
            });
        }
        if self.is_empty() {
            return Ok(0.0);
        }
        if support.len() <= 7 {
            let m = self.to_dense_on(&support)?;
            return Ok(m.singular_values().max());
        }
        let map: BTreeMap<usize, usize> =
            support.iter().enumerate().map(|(k, &s)| (s, k)).collect();
        let mut relabeled = PauliSum::zero(support.len());
        for (p, &c) in &self.terms {
            relabeled.add_term(c, p.relabel(&map)?);
        }
        let op = relabeled.compile();
        let dim = 1usize << support.len();
        let mut tmp = vec![C64::default(); dim];
        let (lam, _) = linalg::lanczos_max_eig(
            dim,
            |v, out| {
                op.apply(v, &mut tmp);
                op.apply_adjoint(&tmp, out);
            },
            None,
            1e-13,
            400,
        );
        Ok(lam.max(0.0).sqrt())
    }

    /// One line per term: `re im site:letter ...`.
    pub fn to_text(&self) -> String {
        let mut s = format!("# n_qubits {}\n", self.n_qubits);
        for (p, c) in &self.terms {
            s.push_str(&format!("{} {}", c.re, c.im));
            for &(site, l) in p.ops() {
                s.push_str(&format!(" {}:{}", site, l.as_char()));
            }
            s.push('\n');
        }
        s
    }

    /// Parses the format written by [`PauliSum::to_text`].
    pub fn from_text(text: &str) -> Result<PauliSum> {
        let mut n_qubits: Option<usize> = None;
        let mut raw = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut it = rest.split_whitespace();
                if it.next() == Some("n_qubits") {
                    let v = it.next().and_then(|v| v.parse().ok()).ok_or(Error::Parse {
                        line: ln + 1,
                        msg: "bad n_qubits header".into(),
                    })?;
                    n_qubits = Some(v);
                }
                continue;
            }
            let perr = |msg: String| Error::Parse { line: ln + 1, msg };
            let mut it = line.split_whitespace();
            let re: f64 = it
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| perr("missing real part".into()))?;
            let im: f64 = it
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| perr("missing imaginary part".into()))?;
            let mut ops = Vec::new();
            for tok in it {
                let (site, letter) = tok
                    .split_once(':')
                    .ok_or_else(|| perr(format!("bad token {tok:?}")))?;
                let site: usize = site
                    .parse()
                    .map_err(|_| perr(format!("bad site in {tok:?}")))?;
                let mut chars = letter.chars();
                let p = match (chars.next().and_then(Pauli::from_char), chars.next()) {
                    (Some(p), None) => p,
                    _ => return Err(perr(format!("bad letter in {tok:?}"))),
                };
                ops.push((site, p));
            }
            let p = PauliString::new(ops).map_err(|e| perr(e.to_string()))?;
            raw.push((C64::new(re, im), p));
        }
        let n = n_qubits.unwrap_or_else(|| {
            raw.iter()
                .filter_map(|(_, p)| p.max_site())
                .max()
                .map_or(0, |m| m + 1)
        });
        PauliSum::from_terms(n, raw)
    }
}

impl fmt::Display for PauliSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(p, c)| format!("({}{:+}i) {}", c.re, c.im, p))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}
