//! Spin-1/2 chain Hamiltonians and Pauli-string observables as dense matrices.
//!
//! Basis convention: site `s` is bit `s` of the basis-state index, and bit
//! value 0 is spin up (the +1 eigenvector of σ^z). Sites are 0-based, so the
//! mid-chain observable sits at site `⌊L/2⌋`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Largest chain length built unless a caller raises the limit explicitly.
pub const DEFAULT_MAX_LENGTH: usize = 14;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

/// `H = Σ_j (γ X_j + λ Z_j) + j1 Σ Z_j Z_{j+1} + j2 Σ Z_j Z_{j+2}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinChainSpec {
    pub length: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub j1: f64,
    pub j2: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl SpinChainSpec {
    pub fn new(length: usize, gamma: f64, lambda: f64, j1: f64, j2: f64) -> Self {
        Self {
            length,
            gamma,
            lambda,
            j1,
            j2,
            boundary: Boundary::Open,
        }
    }

    /// Non-integrable point `(γ, λ, j1, j2) = (0.8, 0.5, 1, 1)`.
    pub fn eth(length: usize) -> Self {
        Self::new(length, 0.8, 0.5, 1.0, 1.0)
    }

    /// Transverse-field Ising point `(−0.5, 0, −0.5, 0)`.
    pub fn integrable(length: usize) -> Self {
        Self::new(length, -0.5, 0.0, -0.5, 0.0)
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::InvalidSpec(format!(
                "length must be at least 2, got {}",
                self.length
            )));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("j1", self.j1),
            ("j2", self.j2),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidSpec(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1usize << self.length
    }

    /// Site pairs `(j, j + range)` coupled by a ZZ term. Open chains stop at
    /// the edge; periodic chains wrap, skipping pairs that would fold onto a
    /// single site.
    pub fn bonds(&self, range: usize) -> Vec<(usize, usize)> {
        let l = self.length;
        match self.boundary {
            Boundary::Open => (0..l.saturating_sub(range)).map(|j| (j, j + range)).collect(),
            Boundary::Periodic => (0..l)
                .map(|j| (j, (j + range) % l))
                .filter(|(a, b)| a != b)
                .collect(),
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding; keys the spectrum cache.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        hex(&Sha256::digest(bytes))
    }

    pub fn mid_site(&self) -> usize {
        self.length / 2
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Tensor product of single-site Pauli matrices on distinct sites.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PauliString {
    ops: Vec<(usize, Axis)>,
}

impl PauliString {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn single(site: usize, axis: Axis) -> Self {
        Self {
            ops: vec![(site, axis)],
        }
    }

    pub fn new(ops: impl IntoIterator<Item = (usize, Axis)>) -> Result<Self> {
        let ops: Vec<_> = ops.into_iter().collect();
        for (i, &(s, _)) in ops.iter().enumerate() {
            if ops[..i].iter().any(|&(t, _)| t == s) {
                return Err(Error::DuplicateSite(s));
            }
        }
        Ok(Self { ops })
    }

    pub fn ops(&self) -> &[(usize, Axis)] {
        &self.ops
    }

    pub fn is_identity(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn max_site(&self) -> Option<usize> {
        self.ops.iter().map(|&(s, _)| s).max()
    }

    /// Bit mask of sites the string flips (X or Y).
    fn flip_mask(&self) -> usize {
        self.ops
            .iter()
            .filter(|(_, a)| *a != Axis::Z)
            .fold(0, |m, &(s, _)| m | (1 << s))
    }

    /// Phase picked up by basis state `s` (before the flip).
    fn phase(&self, s: usize) -> Complex64 {
        let mut ph = Complex64::new(1.0, 0.0);
        for &(site, axis) in &self.ops {
            let down = (s >> site) & 1 == 1;
            ph *= match (axis, down) {
                (Axis::X, _) => Complex64::new(1.0, 0.0),
                (Axis::Y, false) => Complex64::new(0.0, 1.0),
                (Axis::Y, true) => Complex64::new(0.0, -1.0),
                (Axis::Z, false) => Complex64::new(1.0, 0.0),
                (Axis::Z, true) => Complex64::new(-1.0, 0.0),
            };
        }
        ph
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ops.is_empty() {
            return f.write_str("I");
        }
        for (i, (s, a)) in self.ops.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{a:?}{s}")?;
        }
        Ok(())
    }
}

/// Parses strings like `"X3"`, `"X3 Z4"` or `"x0*y1"`; `"I"` or `""` is the identity.
impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut ops = Vec::new();
        for tok in s.split(|c: char| c.is_whitespace() || c == '*').filter(|t| !t.is_empty()) {
            if tok.eq_ignore_ascii_case("i") {
                continue;
            }
            let mut chars = tok.chars();
            let axis = match chars.next().map(|c| c.to_ascii_uppercase()) {
                Some('X') => Axis::X,
                Some('Y') => Axis::Y,
                Some('Z') => Axis::Z,
                _ => return Err(Error::InvalidArgument(format!("bad Pauli token {tok:?}"))),
            };
            let site = chars
                .as_str()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad site in Pauli token {tok:?}")))?;
            ops.push((site, axis));
        }
        Self::new(ops)
    }
}

impl Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dense `2^L × 2^L` operator.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub matrix: ComplexMatrix,
    pub hermitian: bool,
}

impl DenseOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.matrix.get(i, j)
    }

    pub fn to_row_major(&self) -> Vec<Complex64> {
        self.matrix.to_row_major()
    }

    /// Wraps an arbitrary square matrix, setting the flag if it is Hermitian to 1e-12.
    pub fn from_matrix(matrix: ComplexMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let hermitian = matrix.hermitian_defect() <= 1e-12;
        Ok(Self { matrix, hermitian })
    }
}

fn check_length(length: usize, max: usize) -> Result<()> {
    if length > max || length >= usize::BITS as usize - 1 {
        return Err(Error::DimensionOverflow { length, max });
    }
    Ok(())
}

pub fn build_pauli_string(ps: &PauliString, length: usize) -> Result<DenseOperator> {
    check_length(length, DEFAULT_MAX_LENGTH)?;
    if let Some(site) = ps.ops.iter().map(|&(s, _)| s).find(|&s| s >= length) {
        return Err(Error::SiteOutOfRange { site, length });
    }
    let d = 1usize << length;
    let mask = ps.flip_mask();
    let mut m = ComplexMatrix::zeros(d, d);
    let has_y = ps.ops.iter().any(|(_, a)| *a == Axis::Y);
    for s in 0..d {
        let ph = ps.phase(s);
        m.re_mut()[(s ^ mask, s)] = ph.re;
        if has_y {
            m.im_mut()[(s ^ mask, s)] = ph.im;
        }
    }
    Ok(DenseOperator {
        matrix: m,
        hermitian: true,
    })
}

pub fn build_hamiltonian(spec: &SpinChainSpec) -> Result<DenseOperator> {
    build_hamiltonian_with_limit(spec, DEFAULT_MAX_LENGTH)
}

/// Real-symmetric construction: diagonal Z/ZZ terms plus single-bit X flips.
pub fn build_hamiltonian_with_limit(spec: &SpinChainSpec, max_length: usize) -> Result<DenseOperator> {
    spec.validate()?;
    check_length(spec.length, max_length)?;
    let l = spec.length;
    let d = spec.dim();
    let nn = spec.bonds(1);
    let nnn = spec.bonds(2);
    let z = |s: usize, j: usize| if (s >> j) & 1 == 0 { 1.0 } else { -1.0 };
    let mut h = ComplexMatrix::zeros(d, d);
    let re = h.re_mut();
    for s in 0..d {
        let mut diag = 0.0;
        if spec.lambda != 0.0 {
            diag += spec.lambda * (0..l).map(|j| z(s, j)).sum::<f64>();
        }
        if spec.j1 != 0.0 {
            diag += spec.j1 * nn.iter().map(|&(a, b)| z(s, a) * z(s, b)).sum::<f64>();
        }
        if spec.j2 != 0.0 {
            diag += spec.j2 * nnn.iter().map(|&(a, b)| z(s, a) * z(s, b)).sum::<f64>();
        }
        re[(s, s)] = diag;
        if spec.gamma != 0.0 {
            for j in 0..l {
                re[(s ^ (1 << j), s)] += spec.gamma;
            }
        }
    }
    Ok(DenseOperator {
        matrix: h,
        hermitian: true,
    })
}

/// σ^x on site `⌊L/2⌋`.
pub fn default_observable(spec: &SpinChainSpec) -> Result<DenseOperator> {
    spec.validate()?;
    build_pauli_string(&PauliString::single(spec.mid_site(), Axis::X), spec.length)
}
