//! Pauli strings in binary symplectic form.

use std::fmt;
use std::str::FromStr;

use crate::error::CodeError;
use crate::gf2::BitVec;

/// Single-qubit Pauli symbol, `(x|z)`: `(0|0)=I`, `(0|1)=Z`, `(1|0)=X`, `(1|1)=Y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (false, true) => Pauli::Z,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::Z => (false, true),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// An `n`-qubit Pauli operator, phase dropped.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    x: BitVec,
    z: BitVec,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        Self {
            x: BitVec::zeros(n),
            z: BitVec::zeros(n),
        }
    }

    pub fn from_parts(x: BitVec, z: BitVec) -> Result<Self, CodeError> {
        if x.len() != z.len() {
            return Err(CodeError::LengthMismatch {
                x: x.len(),
                z: z.len(),
            });
        }
        Ok(Self { x, z })
    }

    pub fn x_type(bits: BitVec) -> Self {
        let n = bits.len();
        Self {
            x: bits,
            z: BitVec::zeros(n),
        }
    }

    pub fn z_type(bits: BitVec) -> Self {
        let n = bits.len();
        Self {
            x: BitVec::zeros(n),
            z: bits,
        }
    }

    pub fn single(n: usize, qubit: usize, p: Pauli) -> Self {
        let mut s = Self::identity(n);
        s.set(qubit, p);
        s
    }

    #[inline]
    pub fn num_qubits(&self) -> usize {
        self.x.len()
    }

    pub fn x_bits(&self) -> &BitVec {
        &self.x
    }

    pub fn z_bits(&self) -> &BitVec {
        &self.z
    }

    pub fn get(&self, q: usize) -> Pauli {
        Pauli::from_bits(self.x.get(q), self.z.get(q))
    }

    pub fn set(&mut self, q: usize, p: Pauli) {
        let (x, z) = p.bits();
        self.x.set(q, x);
        self.z.set(q, z);
    }

    pub fn support_bits(&self) -> BitVec {
        self.x.or(&self.z)
    }

    /// Qubits acted on non-trivially, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.support_bits().ones().collect()
    }

    pub fn weight(&self) -> usize {
        self.support_bits().count_ones()
    }

    pub fn is_identity(&self) -> bool {
        self.x.is_zero() && self.z.is_zero()
    }

    /// True when only `X` (or `I`) appears.
    pub fn is_x_type(&self) -> bool {
        self.z.is_zero()
    }

    /// True when only `Z` (or `I`) appears.
    pub fn is_z_type(&self) -> bool {
        self.x.is_zero()
    }

    /// Symplectic inner product: `1` iff the operators anticommute.
    pub fn symplectic_product(&self, other: &PauliString) -> u8 {
        (self.x.dot(&other.z) ^ self.z.dot(&other.x)) as u8
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        self.symplectic_product(other) == 0
    }

    /// Product up to phase.
    pub fn mul(&self, other: &PauliString) -> PauliString {
        PauliString {
            x: self.x.xor(&other.x),
            z: self.z.xor(&other.z),
        }
    }

    /// `[x | z]` as one length-`2n` vector.
    pub fn to_symplectic(&self) -> BitVec {
        self.x.concat(&self.z)
    }

    pub fn from_symplectic(v: &BitVec) -> Result<Self, CodeError> {
        if v.len() % 2 != 0 {
            return Err(CodeError::Parse(format!(
                "symplectic vector has odd length {}",
                v.len()
            )));
        }
        let n = v.len() / 2;
        Ok(Self {
            x: v.slice(0, n),
            z: v.slice(n, n),
        })
    }

    /// `x_bits|z_bits`, qubit index ascending.
    pub fn to_symplectic_string(&self) -> String {
        format!("{}|{}", self.x.to_bit_string(), self.z.to_bit_string())
    }

    pub fn parse_symplectic(s: &str) -> Result<Self, CodeError> {
        let (xs, zs) = s
            .split_once('|')
            .ok_or_else(|| CodeError::Parse(format!("expected `x|z` bit strings, got `{s}`")))?;
        let x = BitVec::parse_bit_string(xs)
            .ok_or_else(|| CodeError::Parse(format!("bad bit string `{xs}`")))?;
        let z = BitVec::parse_bit_string(zs)
            .ok_or_else(|| CodeError::Parse(format!("bad bit string `{zs}`")))?;
        Self::from_parts(x, z)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.num_qubits() {
            write!(f, "{}", self.get(q).symbol())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliString({self})")
    }
}

impl FromStr for PauliString {
    type Err = CodeError;

    /// Parses `IXYZ`-style strings; `_` is accepted for identity.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n = s.chars().count();
        let mut p = PauliString::identity(n);
        for (q, ch) in s.chars().enumerate() {
            let sym = match ch {
                'I' | '_' => Pauli::I,
                'X' => Pauli::X,
                'Y' => Pauli::Y,
                'Z' => Pauli::Z,
                other => {
                    return Err(CodeError::Parse(format!(
                        "unexpected Pauli symbol `{other}`"
                    )))
                }
            };
            p.set(q, sym);
        }
        Ok(p)
    }
}
