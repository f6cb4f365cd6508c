//! Extended Tanner graphs: data, check and logical nodes.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::code::StabilizerCode;
use crate::error::CodeError;
use crate::gf2::BitVec;
use crate::pauli::PauliString;

/// Exhaustive coset enumeration is used up to this many generators.
pub const EXHAUSTIVE_COSET_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    X,
    Z,
}

impl Basis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "x" | "X" => Some(Basis::X),
            "z" | "Z" => Some(Basis::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Basis::X => 'X',
            Basis::Z => 'Z',
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CheckKind {
    X,
    Z,
    Mixed,
}

impl CheckKind {
    pub fn of(p: &PauliString) -> Self {
        if p.is_z_type() {
            CheckKind::Z
        } else if p.is_x_type() {
            CheckKind::X
        } else {
            CheckKind::Mixed
        }
    }

    /// True when this check is deterministic in the first cycle of a memory
    /// experiment prepared in `basis`.
    pub fn matches(self, basis: Basis) -> bool {
        matches!(
            (self, basis),
            (CheckKind::X, Basis::X) | (CheckKind::Z, Basis::Z)
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckNode {
    /// Row of `code.stabilizers` measured by this node.
    pub stabilizer: usize,
    pub kind: CheckKind,
}

/// Bipartite graph between data qubits and {checks, logicals}.
///
/// Node order is canonical: data nodes by qubit index, check nodes Z-type
/// first then X-type (then mixed), each by stabilizer row, logical nodes by
/// logical index.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedTannerGraph {
    pub num_data: usize,
    pub checks: Vec<CheckNode>,
    pub stabilizer_edges: Vec<Vec<usize>>,
    pub logical_edges: Vec<Vec<usize>>,
    pub basis: Basis,
    /// Chosen representative of each memory-basis logical operator.
    pub logical_reps: Vec<PauliString>,
}

impl ExtendedTannerGraph {
    pub fn num_checks(&self) -> usize {
        self.checks.len()
    }

    pub fn num_logicals(&self) -> usize {
        self.logical_edges.len()
    }

    pub fn num_stabilizer_edges(&self) -> usize {
        self.stabilizer_edges.iter().map(Vec::len).sum()
    }

    pub fn num_logical_edges(&self) -> usize {
        self.logical_edges.iter().map(Vec::len).sum()
    }

    /// Data-node neighbourhoods: the checks touching each data qubit.
    pub fn data_to_checks(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_data];
        for (c, edges) in self.stabilizer_edges.iter().enumerate() {
            for &q in edges {
                adj[q].push(c);
            }
        }
        adj
    }

    /// Hex SHA-256 over the canonical node and edge lists.
    pub fn fingerprint(&self) -> String {
        let mut text = String::new();
        writeln!(text, "data {} basis {}", self.num_data, self.basis).unwrap();
        for (node, edges) in self.checks.iter().zip(&self.stabilizer_edges) {
            writeln!(text, "check {:?} {:?}", node.kind, edges).unwrap();
        }
        for edges in &self.logical_edges {
            writeln!(text, "logical {edges:?}").unwrap();
        }
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
    }
}

/// Builds the extended Tanner graph for a memory experiment in `basis`.
pub fn build_extended_tanner(
    code: &StabilizerCode,
    basis: Basis,
) -> Result<ExtendedTannerGraph, CodeError> {
    let mut order: Vec<(u8, usize, CheckKind)> = code
        .stabilizers
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let kind = CheckKind::of(s);
            let rank = match kind {
                CheckKind::Z => 0,
                CheckKind::X => 1,
                CheckKind::Mixed => 2,
            };
            (rank, i, kind)
        })
        .collect();
    order.sort_unstable_by_key(|&(rank, i, _)| (rank, i));
    let checks: Vec<CheckNode> = order
        .iter()
        .map(|&(_, stabilizer, kind)| CheckNode { stabilizer, kind })
        .collect();
    let stabilizer_edges = checks
        .iter()
        .map(|c| code.stabilizers[c.stabilizer].support())
        .collect();

    let logical_reps = memory_logical_representatives(code, basis)?;
    let logical_edges = logical_reps.iter().map(PauliString::support).collect();

    Ok(ExtendedTannerGraph {
        num_data: code.n,
        checks,
        stabilizer_edges,
        logical_edges,
        basis,
        logical_reps,
    })
}

/// Minimum-weight representative of each memory-basis logical within its coset
/// of same-type stabilizers. Ties go to the lexicographically smallest support.
pub fn memory_logical_representatives(
    code: &StabilizerCode,
    basis: Basis,
) -> Result<Vec<PauliString>, CodeError> {
    let (logicals, kind) = match basis {
        Basis::Z => (&code.logical_z, CheckKind::Z),
        Basis::X => (&code.logical_x, CheckKind::X),
    };
    let half = |p: &PauliString| -> BitVec {
        match basis {
            Basis::Z => p.z_bits().clone(),
            Basis::X => p.x_bits().clone(),
        }
    };
    let generators: Vec<BitVec> = code
        .stabilizers
        .iter()
        .filter(|s| CheckKind::of(s) == kind)
        .map(half)
        .collect();

    logicals
        .iter()
        .enumerate()
        .map(|(j, l)| {
            if CheckKind::of(l) != kind {
                return Err(CodeError::Internal(format!(
                    "logical {j} has no {basis}-type representative"
                )));
            }
            let best = if generators.len() <= EXHAUSTIVE_COSET_LIMIT {
                min_coset_exhaustive(&half(l), &generators)
            } else {
                min_coset_greedy(&half(l), &generators)
            };
            if best.is_zero() {
                return Err(CodeError::Internal(format!(
                    "logical {j} lies in the stabilizer group"
                )));
            }
            Ok(match basis {
                Basis::Z => PauliString::z_type(best),
                Basis::X => PauliString::x_type(best),
            })
        })
        .collect()
}

fn better(a: &BitVec, b: &BitVec) -> bool {
    match a.count_ones().cmp(&b.count_ones()) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.support_cmp(b) == Ordering::Less,
    }
}

fn min_coset_exhaustive(start: &BitVec, gens: &[BitVec]) -> BitVec {
    let mut cur = start.clone();
    let mut best = cur.clone();
    // Gray code walk: step i flips generator trailing_zeros(i).
    for i in 1u64..(1u64 << gens.len()) {
        cur.xor_assign(&gens[i.trailing_zeros() as usize]);
        if better(&cur, &best) {
            best = cur.clone();
        }
    }
    best
}

fn min_coset_greedy(start: &BitVec, gens: &[BitVec]) -> BitVec {
    let mut cur = start.clone();
    loop {
        let mut best: Option<BitVec> = None;
        for g in gens {
            let cand = cur.xor(g);
            if better(&cand, best.as_ref().unwrap_or(&cur)) {
                best = Some(cand);
            }
        }
        match best {
            Some(b) => cur = b,
            None => return cur,
        }
    }
}
