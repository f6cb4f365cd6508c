//! Stabilizer codes in binary symplectic form.

mod families;
mod io;

use std::fmt;

pub use families::{
    build_bb_code, build_color_code, build_surface_code, BbPreset, Monomial, BB_POLY_A, BB_POLY_B,
};
pub use io::{read_code, write_code};

use crate::error::CodeError;
use crate::gf2::{BitMatrix, BitVec, IncrementalBasis};
use crate::pauli::PauliString;

/// Largest code for which the exhaustive distance search is run during
/// validation.
pub const EXHAUSTIVE_DISTANCE_LIMIT: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CodeFamily {
    Color,
    Bb,
    Surface,
    Custom,
}

impl CodeFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            CodeFamily::Color => "color",
            CodeFamily::Bb => "bb",
            CodeFamily::Surface => "surface",
            CodeFamily::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CodeError> {
        match s {
            "color" => Ok(CodeFamily::Color),
            "bb" => Ok(CodeFamily::Bb),
            "surface" => Ok(CodeFamily::Surface),
            "custom" => Ok(CodeFamily::Custom),
            other => Err(CodeError::Parse(format!("unknown code family `{other}`"))),
        }
    }
}

impl fmt::Display for CodeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-stabilizer CX ordering: entry `i` names the data qubit touched in
/// CX layer `i`, or `None` when that check idles in the layer.
pub type CxSchedule = Vec<Vec<Option<usize>>>;

/// An `[[n, k, d]]` stabilizer code.
///
/// Stabilizers are stored one generator per row; the generators are linearly
/// independent so there are exactly `n - k` of them.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilizerCode {
    pub n: usize,
    pub k: usize,
    pub d: Option<usize>,
    pub stabilizers: Vec<PauliString>,
    pub logical_x: Vec<PauliString>,
    pub logical_z: Vec<PauliString>,
    pub family: CodeFamily,
    /// Optional hand-tuned gate order used by the circuit builder.
    pub cx_schedule: Option<CxSchedule>,
}

impl StabilizerCode {
    /// Builds a CSS code from X- and Z-check matrices.
    ///
    /// Redundant rows are dropped, `k` is computed from the GF(2) rank and a
    /// symplectically paired set of logical operators is derived.
    pub fn from_css(
        hx: &BitMatrix,
        hz: &BitMatrix,
        d: Option<usize>,
        family: CodeFamily,
    ) -> Result<Self, CodeError> {
        let n = hx.num_cols();
        if hz.num_cols() != n {
            return Err(CodeError::InvalidParameter(format!(
                "check matrices disagree on qubit count ({n} vs {})",
                hz.num_cols()
            )));
        }
        if !hx.mul(&hz.transpose()).rows().iter().all(BitVec::is_zero) {
            return Err(CodeError::InvalidParameter(
                "X and Z checks do not commute".into(),
            ));
        }
        let x_rows = hx.independent_rows();
        let z_rows = hz.independent_rows();
        let used = x_rows.len() + z_rows.len();
        if used >= n {
            return Err(CodeError::Degenerate(format!(
                "stabilizer rank {used} leaves no logical qubits on {n} qubits"
            )));
        }
        let k = n - used;

        let logical_x_raw = complement_basis(hx, &hz.nullspace());
        let logical_z_raw = complement_basis(hz, &hx.nullspace());
        if logical_x_raw.len() != k || logical_z_raw.len() != k {
            return Err(CodeError::Internal(format!(
                "found {} X and {} Z logicals, expected {k}",
                logical_x_raw.len(),
                logical_z_raw.len()
            )));
        }
        let pairing = BitMatrix::from_rows(
            k,
            logical_x_raw
                .iter()
                .map(|lx| BitVec::from_bools(&logical_z_raw.iter().map(|lz| lx.dot(lz)).collect::<Vec<_>>()))
                .collect(),
        );
        let inv = pairing
            .inverse()
            .ok_or_else(|| CodeError::Internal("logical pairing matrix is singular".into()))?;
        // LZ' = (M^-1)^T LZ makes <LX_i, LZ'_j> = delta_ij.
        let combo = inv.transpose();
        let logical_z_paired: Vec<BitVec> = combo
            .rows()
            .iter()
            .map(|row| {
                let mut acc = BitVec::zeros(n);
                for j in row.ones() {
                    acc.xor_assign(&logical_z_raw[j]);
                }
                acc
            })
            .collect();

        let mut stabilizers = Vec::with_capacity(used);
        stabilizers.extend(x_rows.iter().map(|&r| PauliString::x_type(hx.row(r).clone())));
        stabilizers.extend(z_rows.iter().map(|&r| PauliString::z_type(hz.row(r).clone())));

        Ok(Self {
            n,
            k,
            d,
            stabilizers,
            logical_x: logical_x_raw.into_iter().map(PauliString::x_type).collect(),
            logical_z: logical_z_paired.into_iter().map(PauliString::z_type).collect(),
            family,
            cx_schedule: None,
        })
    }

    /// `(n - k) x 2n` matrix `[X | Z]`, one generator per row.
    pub fn stabilizer_matrix(&self) -> BitMatrix {
        BitMatrix::from_rows(
            2 * self.n,
            self.stabilizers.iter().map(PauliString::to_symplectic).collect(),
        )
    }

    pub fn is_css(&self) -> bool {
        self.stabilizers
            .iter()
            .all(|s| s.is_x_type() || s.is_z_type())
    }

    pub fn label(&self) -> String {
        match self.d {
            Some(d) => format!("[[{},{},{}]]", self.n, self.k, d),
            None => format!("[[{},{},?]]", self.n, self.k),
        }
    }

    /// Smallest weight of a Pauli that commutes with every stabilizer but is not
    /// itself a stabilizer, searching weights `1..=max_weight` exhaustively.
    ///
    /// Returns `Ok(None)` when no such operator exists up to `max_weight`.
    pub fn min_logical_weight(&self, max_weight: usize) -> Result<Option<usize>, CodeError> {
        if self.n > 64 {
            return Err(CodeError::InvalidParameter(format!(
                "exhaustive search supports at most 64 qubits, code has {}",
                self.n
            )));
        }
        let stabs: Vec<(u64, u64)> = self.stabilizers.iter().map(pack_u64).collect();
        let span = U128Span::new(stabs.iter().map(|&(x, z)| join(x, z)));
        let n = self.n;
        for w in 1..=max_weight.min(n) {
            let mut support: Vec<usize> = (0..w).collect();
            loop {
                let mut digits = vec![0u8; w];
                loop {
                    let (mut x, mut z) = (0u64, 0u64);
                    for (&q, &dg) in support.iter().zip(&digits) {
                        match dg {
                            0 => x |= 1 << q,
                            1 => {
                                x |= 1 << q;
                                z |= 1 << q;
                            }
                            _ => z |= 1 << q,
                        }
                    }
                    let commutes = stabs
                        .iter()
                        .all(|&(sx, sz)| ((x & sz) ^ (z & sx)).count_ones() & 1 == 0);
                    if commutes && !span.contains(join(x, z)) {
                        return Ok(Some(w));
                    }
                    if !next_base3(&mut digits) {
                        break;
                    }
                }
                if !next_combination(&mut support, n) {
                    break;
                }
            }
        }
        Ok(None)
    }

    /// Checks every code invariant; failures are report entries, not errors.
    pub fn validate(&self) -> ValidationReport {
        let mut entries = Vec::new();
        let n = self.n;

        let shape_ok = self
            .stabilizers
            .iter()
            .chain(&self.logical_x)
            .chain(&self.logical_z)
            .all(|p| p.num_qubits() == n)
            && self.k <= n
            && self.stabilizers.len() == n - self.k
            && self.logical_x.len() == self.k
            && self.logical_z.len() == self.k;
        entries.push(ValidationEntry::new(
            Invariant::Shape,
            shape_ok,
            format!(
                "{} stabilizers, {} X / {} Z logicals for n={}, k={}",
                self.stabilizers.len(),
                self.logical_x.len(),
                self.logical_z.len(),
                n,
                self.k
            ),
        ));
        if !self
            .stabilizers
            .iter()
            .chain(&self.logical_x)
            .chain(&self.logical_z)
            .all(|p| p.num_qubits() == n)
        {
            // Remaining checks need consistent lengths.
            for inv in [
                Invariant::StabilizersCommute,
                Invariant::LogicalsCommuteWithStabilizers,
                Invariant::LogicalPairing,
                Invariant::StabilizerRank,
                Invariant::Distance,
            ] {
                entries.push(ValidationEntry::fail(inv, "operator lengths disagree with n"));
            }
            return ValidationReport { entries };
        }

        let mut bad_pair = None;
        'outer: for (i, a) in self.stabilizers.iter().enumerate() {
            for (j, b) in self.stabilizers.iter().enumerate().skip(i + 1) {
                if !a.commutes_with(b) {
                    bad_pair = Some((i, j));
                    break 'outer;
                }
            }
        }
        entries.push(ValidationEntry::new(
            Invariant::StabilizersCommute,
            bad_pair.is_none(),
            match bad_pair {
                Some((i, j)) => format!("stabilizers {i} and {j} anticommute"),
                None => "all pairs commute".into(),
            },
        ));

        let bad_logical = self
            .logical_x
            .iter()
            .map(|l| ("X", l))
            .chain(self.logical_z.iter().map(|l| ("Z", l)))
            .enumerate()
            .find_map(|(idx, (kind, l))| {
                self.stabilizers
                    .iter()
                    .position(|s| !s.commutes_with(l))
                    .map(|s| format!("logical {kind} #{} anticommutes with stabilizer {s}", idx % self.k.max(1)))
            });
        entries.push(ValidationEntry::new(
            Invariant::LogicalsCommuteWithStabilizers,
            bad_logical.is_none(),
            bad_logical.unwrap_or_else(|| "all logicals commute with all stabilizers".into()),
        ));

        let mut pairing_err = None;
        for (i, lx) in self.logical_x.iter().enumerate() {
            for (j, lz) in self.logical_z.iter().enumerate() {
                let anti = lx.symplectic_product(lz) == 1;
                if anti != (i == j) {
                    pairing_err = Some(format!("X_{i} / Z_{j} product is {}", anti as u8));
                }
            }
            for (j, other) in self.logical_x.iter().enumerate().skip(i + 1) {
                if !lx.commutes_with(other) {
                    pairing_err = Some(format!("X_{i} anticommutes with X_{j}"));
                }
            }
        }
        for (i, lz) in self.logical_z.iter().enumerate() {
            for (j, other) in self.logical_z.iter().enumerate().skip(i + 1) {
                if !lz.commutes_with(other) {
                    pairing_err = Some(format!("Z_{i} anticommutes with Z_{j}"));
                }
            }
        }
        entries.push(ValidationEntry::new(
            Invariant::LogicalPairing,
            pairing_err.is_none(),
            pairing_err.unwrap_or_else(|| "X_i and Z_j anticommute iff i = j".into()),
        ));

        let rank = self.stabilizer_matrix().rank();
        entries.push(ValidationEntry::new(
            Invariant::StabilizerRank,
            self.k <= n && rank == n - self.k,
            format!("rank {rank}, n - k = {}", n as isize - self.k as isize),
        ));

        let distance_entry = match self.d {
            None => ValidationEntry::skipped(Invariant::Distance, "distance not declared"),
            Some(_) if n > EXHAUSTIVE_DISTANCE_LIMIT => ValidationEntry::skipped(
                Invariant::Distance,
                format!("n = {n} exceeds exhaustive-search limit {EXHAUSTIVE_DISTANCE_LIMIT}"),
            ),
            Some(d) => match self.min_logical_weight(d) {
                Ok(Some(w)) => ValidationEntry::new(
                    Invariant::Distance,
                    w == d,
                    format!("minimum logical weight {w}, declared {d}"),
                ),
                Ok(None) => ValidationEntry::fail(
                    Invariant::Distance,
                    format!("no logical operator of weight <= {d}"),
                ),
                Err(e) => ValidationEntry::fail(Invariant::Distance, e.to_string()),
            },
        };
        entries.push(distance_entry);

        ValidationReport { entries }
    }
}

/// Vectors from `candidates` that extend the row space of `base`, i.e. a basis
/// for `span(candidates) / rowspace(base)` when `rowspace(base) ⊆ span(candidates)`.
fn complement_basis(base: &BitMatrix, candidates: &[BitVec]) -> Vec<BitVec> {
    let mut basis = IncrementalBasis::new(base.num_cols());
    for r in base.rows() {
        basis.insert(r.clone());
    }
    candidates
        .iter()
        .filter(|v| basis.insert((*v).clone()))
        .cloned()
        .collect()
}

fn pack_u64(p: &PauliString) -> (u64, u64) {
    let pack = |b: &BitVec| b.words().first().copied().unwrap_or(0);
    (pack(p.x_bits()), pack(p.z_bits()))
}

#[inline]
fn join(x: u64, z: u64) -> u128 {
    (x as u128) | ((z as u128) << 64)
}

struct U128Span {
    rows: Vec<u128>,
}

impl U128Span {
    fn new(vectors: impl Iterator<Item = u128>) -> Self {
        let mut rows: Vec<u128> = Vec::new();
        for v in vectors {
            let r = Self::reduce_with(&rows, v);
            if r != 0 {
                rows.push(r);
                rows.sort_unstable_by(|a, b| b.cmp(a));
            }
        }
        Self { rows }
    }

    fn reduce_with(rows: &[u128], mut v: u128) -> u128 {
        // Rows are sorted by descending leading bit.
        for &r in rows {
            let lead = 127 - r.leading_zeros();
            if v >> lead & 1 == 1 {
                v ^= r;
            }
        }
        v
    }

    fn contains(&self, v: u128) -> bool {
        Self::reduce_with(&self.rows, v) == 0
    }
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn next_base3(d: &mut [u8]) -> bool {
    for digit in d.iter_mut() {
        if *digit < 2 {
            *digit += 1;
            return true;
        }
        *digit = 0;
    }
    false
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Invariant {
    Shape,
    StabilizersCommute,
    LogicalsCommuteWithStabilizers,
    LogicalPairing,
    StabilizerRank,
    Distance,
}

impl Invariant {
    pub fn name(self) -> &'static str {
        match self {
            Invariant::Shape => "shape",
            Invariant::StabilizersCommute => "stabilizers-commute",
            Invariant::LogicalsCommuteWithStabilizers => "logicals-commute-with-stabilizers",
            Invariant::LogicalPairing => "logical-pairing",
            Invariant::StabilizerRank => "stabilizer-rank",
            Invariant::Distance => "distance",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug)]
pub struct ValidationEntry {
    pub invariant: Invariant,
    pub status: CheckStatus,
    pub detail: String,
}

impl ValidationEntry {
    fn new(invariant: Invariant, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            invariant,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            detail: detail.into(),
        }
    }

    fn fail(invariant: Invariant, detail: impl Into<String>) -> Self {
        Self::new(invariant, false, detail)
    }

    fn skipped(invariant: Invariant, detail: impl Into<String>) -> Self {
        Self {
            invariant,
            status: CheckStatus::Skipped,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.status != CheckStatus::Fail)
    }

    pub fn status(&self, invariant: Invariant) -> Option<CheckStatus> {
        self.entries
            .iter()
            .find(|e| e.invariant == invariant)
            .map(|e| e.status)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let tag = match e.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skipped => "skip",
            };
            writeln!(f, "{tag:>4}  {:<36} {}", e.invariant.name(), e.detail)?;
        }
        Ok(())
    }
}
