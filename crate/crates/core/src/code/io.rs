//! Plain-text code files.
//!
//! ```text
//! code 7 1 3 color
//! <n-k stabilizer lines>
//! <k logical X lines>
//! <k logical Z lines>
//! cx 0,1,-,3          (optional, one per stabilizer)
//! ```
//!
//! Operator lines are `x_bits|z_bits` with qubit 0 first. An unknown distance
//! is written as `?`. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;

use super::{CodeFamily, StabilizerCode};
use crate::error::CodeError;
use crate::pauli::PauliString;

pub fn write_code(code: &StabilizerCode) -> String {
    let mut out = String::new();
    let d = code.d.map_or_else(|| "?".to_string(), |d| d.to_string());
    writeln!(out, "code {} {} {} {}", code.n, code.k, d, code.family).unwrap();
    for p in code
        .stabilizers
        .iter()
        .chain(&code.logical_x)
        .chain(&code.logical_z)
    {
        writeln!(out, "{}", p.to_symplectic_string()).unwrap();
    }
    if let Some(schedule) = &code.cx_schedule {
        for order in schedule {
            let items: Vec<String> = order
                .iter()
                .map(|q| q.map_or_else(|| "-".to_string(), |q| q.to_string()))
                .collect();
            writeln!(out, "cx {}", items.join(",")).unwrap();
        }
    }
    out
}

pub fn read_code(text: &str) -> Result<StabilizerCode, CodeError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines
        .next()
        .ok_or_else(|| CodeError::Parse("empty code file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "code" {
        return Err(CodeError::Parse(format!(
            "line {hline}: expected `code n k d family`, got `{header}`"
        )));
    }
    let num = |s: &str, what: &str| -> Result<usize, CodeError> {
        s.parse()
            .map_err(|_| CodeError::Parse(format!("line {hline}: bad {what} `{s}`")))
    };
    let n = num(fields[1], "n")?;
    let k = num(fields[2], "k")?;
    let d = if fields[3] == "?" {
        None
    } else {
        Some(num(fields[3], "d")?)
    };
    let family = CodeFamily::parse(fields[4])?;
    if k > n {
        return Err(CodeError::Parse(format!("line {hline}: k={k} exceeds n={n}")));
    }

    let expected = (n - k) + 2 * k;
    let mut ops = Vec::with_capacity(expected);
    let mut schedule = Vec::new();
    for (lineno, line) in lines {
        if let Some(rest) = line.strip_prefix("cx ") {
            let mut order = Vec::new();
            for item in rest.split(',') {
                let item = item.trim();
                order.push(if item == "-" {
                    None
                } else {
                    let q: usize = item.parse().map_err(|_| {
                        CodeError::Parse(format!("line {lineno}: bad qubit `{item}`"))
                    })?;
                    if q >= n {
                        return Err(CodeError::Parse(format!(
                            "line {lineno}: qubit {q} out of range"
                        )));
                    }
                    Some(q)
                });
            }
            schedule.push(order);
            continue;
        }
        if !schedule.is_empty() {
            return Err(CodeError::Parse(format!(
                "line {lineno}: operator after cx schedule"
            )));
        }
        let p = PauliString::parse_symplectic(line)
            .map_err(|e| CodeError::Parse(format!("line {lineno}: {e}")))?;
        if p.num_qubits() != n {
            return Err(CodeError::Parse(format!(
                "line {lineno}: operator has {} qubits, expected {n}",
                p.num_qubits()
            )));
        }
        ops.push(p);
    }
    if ops.len() != expected {
        return Err(CodeError::Parse(format!(
            "expected {expected} operator lines, found {}",
            ops.len()
        )));
    }
    let logical_z = ops.split_off(n);
    let logical_x = ops.split_off(n - k);
    let cx_schedule = if schedule.is_empty() {
        None
    } else if schedule.len() == n - k {
        Some(schedule)
    } else {
        return Err(CodeError::Parse(format!(
            "expected {} cx lines, found {}",
            n - k,
            schedule.len()
        )));
    };
    Ok(StabilizerCode {
        n,
        k,
        d,
        stabilizers: ops,
        logical_x,
        logical_z,
        family,
        cx_schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{build_color_code, build_surface_code};

    #[test]
    fn round_trip_preserves_everything() {
        for code in [build_color_code(5).unwrap(), build_surface_code(3).unwrap()] {
            let text = write_code(&code);
            let back = read_code(&text).unwrap();
            assert_eq!(back, code);
            assert_eq!(write_code(&back), text);
        }
    }

    #[test]
    fn header_errors() {
        assert!(read_code("").is_err());
        assert!(read_code("code 3 1 color").is_err());
        assert!(read_code("code 1 1 ? weird\n").is_err());
    }

    #[test]
    fn wrong_operator_count() {
        let text = "code 1 0 ? custom\n0|1\n0|1\n";
        assert!(read_code(text).is_err());
        let ok = read_code("code 1 0 ? custom\n0|1\n").unwrap();
        assert_eq!(ok.stabilizers.len(), 1);
    }
}
