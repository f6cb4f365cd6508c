//! Break-even maps: where the per-cycle logical error rate beats the
//! physical error rate.

use crate::ler::LerEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    /// Per-cycle LER strictly below `p`.
    Below,
    NotBelow,
    /// No failures observed, so the rate is not resolved.
    Unknown,
}

/// Grid of estimates: row `i` is a code size, column `j` the physical rate
/// `ps[j]` (ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct BreakEvenMap {
    pub rows: Vec<String>,
    pub ps: Vec<f64>,
    pub cells: Vec<Vec<Cell>>,
    /// `(row, p)` points where the map changes from below to not below,
    /// interpolated in `ln(pc / p)` against `ln p`.
    pub contour: Vec<(usize, f64)>,
}

fn classify(e: &LerEstimate, p: f64) -> Cell {
    if e.failures == 0 {
        return Cell::Unknown;
    }
    match e.per_cycle_pc {
        Some(pc) if pc < p => Cell::Below,
        _ => Cell::NotBelow,
    }
}

/// Log margin `ln(pc / p)`; negative means below break-even.
fn margin(e: &LerEstimate, p: f64) -> Option<f64> {
    match e.per_cycle_pc {
        Some(pc) if e.failures > 0 && pc > 0.0 => Some((pc / p).ln()),
        _ => None,
    }
}

pub fn break_even_map(rows: Vec<String>, ps: Vec<f64>, grid: &[Vec<LerEstimate>]) -> BreakEvenMap {
    let cells: Vec<Vec<Cell>> = grid
        .iter()
        .map(|row| row.iter().zip(&ps).map(|(e, &p)| classify(e, p)).collect())
        .collect();
    let mut contour = Vec::new();
    for (i, row) in grid.iter().enumerate() {
        for j in 1..row.len().min(ps.len()) {
            let (a, b) = (margin(&row[j - 1], ps[j - 1]), margin(&row[j], ps[j]));
            if let (Some(a), Some(b)) = (a, b) {
                if (a < 0.0) != (b < 0.0) {
                    let t = a / (a - b);
                    let lp = ps[j - 1].ln() + t * (ps[j].ln() - ps[j - 1].ln());
                    contour.push((i, lp.exp()));
                }
            }
        }
    }
    BreakEvenMap { rows, ps, cells, contour }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(pc: f64, failures: usize) -> LerEstimate {
        let mut e = LerEstimate::from_counts(failures, 1000, 1, vec![failures], 1);
        e.per_cycle_pc = Some(pc);
        e
    }

    #[test]
    fn equality_is_not_below() {
        let m = break_even_map(vec!["a".into()], vec![0.01], &[vec![est(0.01, 10)]]);
        assert_eq!(m.cells[0][0], Cell::NotBelow);
    }

    #[test]
    fn zero_failures_are_unknown() {
        let m = break_even_map(vec!["a".into()], vec![0.01], &[vec![est(0.0, 0)]]);
        assert_eq!(m.cells[0][0], Cell::Unknown);
    }
}
