use std::collections::HashMap;

use super::{CodeFamily, StabilizerCode};
use crate::error::CodeError;
use crate::gf2::{BitMatrix, BitVec};

fn check_odd_distance(d: usize) -> Result<(), CodeError> {
    if d < 3 || d % 2 == 0 {
        return Err(CodeError::InvalidParameter(format!(
            "distance must be odd and at least 3, got {d}"
        )));
    }
    Ok(())
}

/// Triangular 6.6.6 color code of odd distance `d`.
///
/// Sites of a triangular lattice `(r, c)` with `0 <= c <= r <= 3(d-1)/2` are
/// split into plaquette centres (`(r + c) % 3 == 1`) and qubits (everything
/// else). Each plaquette acts on its lattice neighbours, giving weight-6 bulk
/// and weight-4 boundary checks. X and Z checks share supports.
pub fn build_color_code(d: usize) -> Result<StabilizerCode, CodeError> {
    check_odd_distance(d)?;
    let size = 3 * (d - 1) / 2;
    let mut qubit_index = HashMap::new();
    let mut plaquettes = Vec::new();
    for r in 0..=size {
        for c in 0..=r {
            if (r + c) % 3 == 1 {
                plaquettes.push((r, c));
            } else {
                let next = qubit_index.len();
                qubit_index.insert((r, c), next);
            }
        }
    }
    let n = qubit_index.len();
    let offsets: [(isize, isize); 6] = [(0, -1), (0, 1), (-1, 0), (1, 0), (1, 1), (-1, -1)];
    let mut h = BitMatrix::new(n);
    for &(r, c) in &plaquettes {
        let mut row = BitVec::zeros(n);
        for (dr, dc) in offsets {
            let (rr, cc) = (r as isize + dr, c as isize + dc);
            if rr < 0 || cc < 0 {
                continue;
            }
            if let Some(&q) = qubit_index.get(&(rr as usize, cc as usize)) {
                row.set(q, true);
            }
        }
        h.push_row(row);
    }
    StabilizerCode::from_css(&h, &h, Some(d), CodeFamily::Color)
}

/// `x^x_exp y^y_exp` in `F2[x, y] / (x^l - 1, y^m - 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Monomial {
    pub x_exp: usize,
    pub y_exp: usize,
}

impl Monomial {
    pub const fn new(x_exp: usize, y_exp: usize) -> Self {
        Self { x_exp, y_exp }
    }
}

/// Named bivariate bicycle codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BbPreset {
    /// `[[72,12,6]]`
    Bb72,
    /// `[[144,12,12]]`
    Bb144,
}

/// `A = x^3 + y + y^2`
pub const BB_POLY_A: [Monomial; 3] = [Monomial::new(3, 0), Monomial::new(0, 1), Monomial::new(0, 2)];
/// `B = y^3 + x + x^2`
pub const BB_POLY_B: [Monomial; 3] = [Monomial::new(0, 3), Monomial::new(1, 0), Monomial::new(2, 0)];

impl BbPreset {
    pub fn from_n(n: usize) -> Option<Self> {
        match n {
            72 => Some(BbPreset::Bb72),
            144 => Some(BbPreset::Bb144),
            _ => None,
        }
    }

    /// `(l, m, distance)`
    pub fn params(self) -> (usize, usize, usize) {
        match self {
            BbPreset::Bb72 => (6, 6, 6),
            BbPreset::Bb144 => (12, 6, 12),
        }
    }

    pub fn build(self) -> Result<StabilizerCode, CodeError> {
        let (l, m, d) = self.params();
        let mut code = build_bb_code(l, m, &BB_POLY_A, &BB_POLY_B)?;
        code.d = Some(d);
        Ok(code)
    }
}

fn bb_polynomial_matrix(l: usize, m: usize, poly: &[Monomial]) -> BitMatrix {
    let n = l * m;
    let mut mat = BitMatrix::zeros(n, n);
    for i in 0..l {
        for j in 0..m {
            let row = i * m + j;
            for mono in poly {
                let col = ((i + mono.x_exp) % l) * m + (j + mono.y_exp) % m;
                let cur = mat.get(row, col);
                mat.set(row, col, !cur);
            }
        }
    }
    mat
}

/// Bivariate bicycle code with `Hx = [A | B]`, `Hz = [B^T | A^T]`.
///
/// `x` is the cyclic shift on `l` sites and `y` on `m` sites; qubit
/// `(i, j)` of each block sits at index `i * m + j`. `k` is always computed
/// from the check-matrix rank. The distance is left undeclared; the presets
/// in [`BbPreset`] fill it in.
pub fn build_bb_code(
    l: usize,
    m: usize,
    poly_a: &[Monomial],
    poly_b: &[Monomial],
) -> Result<StabilizerCode, CodeError> {
    if l < 2 || m < 2 {
        return Err(CodeError::InvalidParameter(format!(
            "l and m must be at least 2, got l={l}, m={m}"
        )));
    }
    for mono in poly_a.iter().chain(poly_b) {
        if mono.x_exp >= l || mono.y_exp >= m {
            return Err(CodeError::InvalidParameter(format!(
                "monomial x^{} y^{} not reduced mod (l={l}, m={m})",
                mono.x_exp, mono.y_exp
            )));
        }
    }
    let a = bb_polynomial_matrix(l, m, poly_a);
    let b = bb_polynomial_matrix(l, m, poly_b);
    let hx = a.hstack(&b);
    let hz = b.transpose().hstack(&a.transpose());
    StabilizerCode::from_css(&hx, &hz, None, CodeFamily::Bb)
}

/// Rotated surface code of odd distance `d` on a `d x d` grid of data qubits.
///
/// Data qubit `(r, c)` has index `r * d + c`. Checks sit on the `(d+1)^2`
/// grid vertices; vertex `(i, j)` touches the data qubits at
/// `(i-1, j-1), (i-1, j), (i, j-1), (i, j)` that exist. Bulk vertices are
/// X-type when `i + j` is even; the top and bottom edges carry only
/// weight-two X checks, the left and right edges only weight-two Z checks.
///
/// The returned code carries the usual interleaving CX order
/// (X: NW, NE, SW, SE; Z: NW, SW, NE, SE).
pub fn build_surface_code(d: usize) -> Result<StabilizerCode, CodeError> {
    check_odd_distance(d)?;
    let n = d * d;
    let mut hx = BitMatrix::new(n);
    let mut hz = BitMatrix::new(n);
    let mut sched_x = Vec::new();
    let mut sched_z = Vec::new();
    for i in 0..=d {
        for j in 0..=d {
            let x_type = (i + j) % 2 == 0;
            let on_row_edge = i == 0 || i == d;
            let on_col_edge = j == 0 || j == d;
            let keep = match (on_row_edge, on_col_edge) {
                (true, true) => false,
                (true, false) => x_type,
                (false, true) => !x_type,
                (false, false) => true,
            };
            if !keep {
                continue;
            }
            let corner = |di: usize, dj: usize| -> Option<usize> {
                // (i - 1 + di, j - 1 + dj) with bounds.
                let r = (i + di).checked_sub(1)?;
                let c = (j + dj).checked_sub(1)?;
                (r < d && c < d).then_some(r * d + c)
            };
            let (nw, ne, sw, se) = (corner(0, 0), corner(0, 1), corner(1, 0), corner(1, 1));
            let support = BitVec::from_indices(n, [nw, ne, sw, se].into_iter().flatten());
            if x_type {
                hx.push_row(support);
                sched_x.push(vec![nw, ne, sw, se]);
            } else {
                hz.push_row(support);
                sched_z.push(vec![nw, sw, ne, se]);
            }
        }
    }
    let mut code = StabilizerCode::from_css(&hx, &hz, Some(d), CodeFamily::Surface)?;
    if code.stabilizers.len() != sched_x.len() + sched_z.len() {
        return Err(CodeError::Internal(
            "surface checks unexpectedly dependent".into(),
        ));
    }
    sched_x.extend(sched_z);
    code.cx_schedule = Some(sched_x);
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_sizes() {
        for (d, n) in [(3, 7), (5, 19), (7, 37), (9, 61), (11, 91)] {
            let code = build_color_code(d).unwrap();
            assert_eq!((code.n, code.k), (n, 1), "d={d}");
            assert_eq!(code.n, (3 * d * d + 1) / 4);
        }
    }

    #[test]
    fn steane_plaquettes_have_weight_four() {
        let code = build_color_code(3).unwrap();
        assert_eq!(code.stabilizers.len(), 6);
        assert!(code.stabilizers.iter().all(|s| s.weight() == 4));
    }

    #[test]
    fn bad_distances_rejected() {
        for d in [0, 1, 2, 4, 6] {
            assert!(build_color_code(d).is_err());
            assert!(build_surface_code(d).is_err());
        }
    }

    #[test]
    fn surface_sizes_and_schedule() {
        for d in [3, 5, 7] {
            let code = build_surface_code(d).unwrap();
            assert_eq!((code.n, code.k), (d * d, 1));
            let sched = code.cx_schedule.as_ref().unwrap();
            for (stab, order) in code.stabilizers.iter().zip(sched) {
                let mut touched: Vec<usize> = order.iter().flatten().copied().collect();
                touched.sort_unstable();
                assert_eq!(touched, stab.support());
            }
        }
    }

    #[test]
    fn bb_presets_match_known_parameters() {
        let c72 = BbPreset::Bb72.build().unwrap();
        assert_eq!((c72.n, c72.k, c72.d), (72, 12, Some(6)));
        let c144 = BbPreset::Bb144.build().unwrap();
        assert_eq!((c144.n, c144.k, c144.d), (144, 12, Some(12)));
        assert!(c72.validate().passed());
    }

    #[test]
    fn bb_rejects_unreduced_exponents() {
        let bad = [Monomial::new(6, 0)];
        assert!(build_bb_code(6, 6, &bad, &BB_POLY_B).is_err());
    }
}
