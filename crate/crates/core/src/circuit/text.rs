//! Line-oriented circuit text.
//!
//! Supported: `R`, `RX`, `H`, `CX`, `M`, `MR`, `X_ERROR(p)`, `Z_ERROR(p)`,
//! `DEPOLARIZE1(p)`, `DEPOLARIZE2(p)`, `TICK`, `DETECTOR rec[-k] ...`,
//! `OBSERVABLE_INCLUDE(i) rec[-k] ...`. `#` starts a comment. The pragma
//! comments `#@qubits N`, `#@basis X|Z`, `#@cycle` and `#@readout` carry the
//! qubit count and segment structure; other tools see them as comments.

use std::fmt::Write as _;

use super::{Instruction, NoiseChannel, NoisyCircuit};
use crate::error::CircuitError;
use crate::tanner::Basis;

pub fn emit_circuit_text(circuit: &NoisyCircuit) -> String {
    let mut out = String::new();
    writeln!(out, "#@qubits {}", circuit.num_qubits).unwrap();
    if let Some(b) = circuit.basis {
        writeln!(out, "#@basis {b}").unwrap();
    }
    let mut measured = 0usize;
    let recs = |records: &[usize], measured: usize| -> String {
        records
            .iter()
            .map(|&r| format!(" rec[-{}]", measured - r))
            .collect()
    };
    let qubits = |ts: &[usize]| -> String { ts.iter().map(|q| format!(" {q}")).collect() };
    for (i, inst) in circuit.instructions.iter().enumerate() {
        for &s in &circuit.cycle_starts {
            if s == i {
                out.push_str("#@cycle\n");
            }
        }
        if circuit.readout_start == Some(i) {
            out.push_str("#@readout\n");
        }
        match inst {
            Instruction::Reset { basis, targets } => {
                let name = match basis {
                    Basis::Z => "R",
                    Basis::X => "RX",
                };
                writeln!(out, "{name}{}", qubits(targets)).unwrap();
            }
            Instruction::H(ts) => writeln!(out, "H{}", qubits(ts)).unwrap(),
            Instruction::Cx(pairs) => {
                let flat: Vec<usize> = pairs.iter().flat_map(|&(c, t)| [c, t]).collect();
                writeln!(out, "CX{}", qubits(&flat)).unwrap();
            }
            Instruction::Measure { targets, reset } => {
                let name = if *reset { "MR" } else { "M" };
                writeln!(out, "{name}{}", qubits(targets)).unwrap();
            }
            Instruction::Noise {
                channel,
                p,
                targets,
            } => writeln!(out, "{}({p}){}", channel.name(), qubits(targets)).unwrap(),
            Instruction::Detector(r) => writeln!(out, "DETECTOR{}", recs(r, measured)).unwrap(),
            Instruction::Observable { index, records } => {
                writeln!(out, "OBSERVABLE_INCLUDE({index}){}", recs(records, measured)).unwrap()
            }
            Instruction::Tick => out.push_str("TICK\n"),
        }
        measured += inst.num_measurements();
    }
    let n = circuit.instructions.len();
    for &s in &circuit.cycle_starts {
        if s == n {
            out.push_str("#@cycle\n");
        }
    }
    if circuit.readout_start == Some(n) {
        out.push_str("#@readout\n");
    }
    out
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokens(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &line[s..i],
                    column: line[..s].chars().count() + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: line[..s].chars().count() + 1,
        });
    }
    out
}

pub fn parse_circuit_text(text: &str) -> Result<NoisyCircuit, CircuitError> {
    let mut instructions = Vec::new();
    let mut cycle_starts = Vec::new();
    let mut readout_start = None;
    let mut basis = None;
    let mut declared_qubits = None;
    let mut max_qubit: Option<usize> = None;
    let mut measured = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let syntax = |column: usize, message: String| CircuitError::Syntax {
            line: line_no,
            column,
            message,
        };
        let trimmed = raw.trim_start();
        if let Some(pragma) = trimmed.strip_prefix("#@") {
            let col = raw.len() - trimmed.len() + 1;
            let mut parts = pragma.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some("cycle"), None) => cycle_starts.push(instructions.len()),
                (Some("readout"), None) => {
                    if readout_start.is_some() {
                        return Err(syntax(col, "duplicate #@readout marker".into()));
                    }
                    readout_start = Some(instructions.len());
                }
                (Some("basis"), Some(b)) => {
                    basis = Some(
                        Basis::parse(b)
                            .ok_or_else(|| syntax(col, format!("unknown basis `{b}`")))?,
                    );
                }
                (Some("qubits"), Some(n)) => {
                    declared_qubits = Some(
                        n.parse::<usize>()
                            .map_err(|_| syntax(col, format!("bad qubit count `{n}`")))?,
                    );
                }
                _ => return Err(syntax(col, format!("unknown pragma `#@{pragma}`"))),
            }
            continue;
        }
        let body = raw.split('#').next().unwrap_or("");
        let toks = tokens(body);
        let Some(head) = toks.first() else { continue };

        let (name, arg) = match head.text.find('(') {
            Some(open) => {
                let close = head.text.rfind(')').filter(|&c| c == head.text.len() - 1).ok_or_else(
                    || syntax(head.column + open, "unterminated argument list".into()),
                )?;
                (&head.text[..open], Some((&head.text[open + 1..close], head.column + open + 1)))
            }
            None => (head.text, None),
        };
        let args = &toks[1..];

        let parse_qubits = |args: &[Token]| -> Result<Vec<usize>, CircuitError> {
            args.iter()
                .map(|t| {
                    t.text
                        .parse::<usize>()
                        .map_err(|_| syntax(t.column, format!("expected qubit index, got `{}`", t.text)))
                })
                .collect()
        };
        let parse_records = |args: &[Token], measured: usize| -> Result<Vec<usize>, CircuitError> {
            args.iter()
                .map(|t| {
                    let inner = t
                        .text
                        .strip_prefix("rec[-")
                        .and_then(|s| s.strip_suffix(']'))
                        .ok_or_else(|| syntax(t.column, format!("expected rec[-k], got `{}`", t.text)))?;
                    let k: usize = inner
                        .parse()
                        .map_err(|_| syntax(t.column, format!("bad record offset `{inner}`")))?;
                    if k == 0 || k > measured {
                        return Err(CircuitError::MissingMeasurement {
                            line: line_no,
                            offset: k,
                            available: measured,
                        });
                    }
                    Ok(measured - k)
                })
                .collect()
        };
        let no_arg = |what: &str| -> Result<(), CircuitError> {
            match arg {
                Some((_, col)) => Err(syntax(col, format!("{what} takes no argument"))),
                None => Ok(()),
            }
        };
        let prob = || -> Result<f64, CircuitError> {
            let (a, col) = arg.ok_or_else(|| syntax(head.column, format!("{name} needs a probability")))?;
            let p: f64 = a
                .trim()
                .parse()
                .map_err(|_| syntax(col, format!("bad probability `{a}`")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(CircuitError::Probability(p));
            }
            Ok(p)
        };

        let inst = match name {
            "R" | "RZ" | "RX" => {
                no_arg(name)?;
                let basis = if name == "RX" { Basis::X } else { Basis::Z };
                Instruction::Reset {
                    basis,
                    targets: parse_qubits(args)?,
                }
            }
            "H" => {
                no_arg(name)?;
                Instruction::H(parse_qubits(args)?)
            }
            "CX" | "CNOT" => {
                no_arg(name)?;
                let qs = parse_qubits(args)?;
                if qs.len() % 2 != 0 {
                    return Err(syntax(head.column, "CX needs an even number of targets".into()));
                }
                let pairs: Vec<(usize, usize)> = qs.chunks(2).map(|c| (c[0], c[1])).collect();
                if let Some(i) = pairs.iter().position(|(c, t)| c == t) {
                    return Err(syntax(
                        args[2 * i + 1].column,
                        "CX control and target coincide".into(),
                    ));
                }
                Instruction::Cx(pairs)
            }
            "M" | "MZ" | "MR" => {
                no_arg(name)?;
                Instruction::Measure {
                    targets: parse_qubits(args)?,
                    reset: name == "MR",
                }
            }
            "X_ERROR" | "Z_ERROR" | "DEPOLARIZE1" | "DEPOLARIZE2" => {
                let channel = match name {
                    "X_ERROR" => NoiseChannel::XError,
                    "Z_ERROR" => NoiseChannel::ZError,
                    "DEPOLARIZE1" => NoiseChannel::Depolarize1,
                    _ => NoiseChannel::Depolarize2,
                };
                let p = prob()?;
                let targets = parse_qubits(args)?;
                if targets.len() % channel.arity() != 0 {
                    return Err(syntax(head.column, format!("{name} needs target pairs")));
                }
                Instruction::Noise {
                    channel,
                    p,
                    targets,
                }
            }
            "TICK" => {
                no_arg(name)?;
                if !args.is_empty() {
                    return Err(syntax(args[0].column, "TICK takes no targets".into()));
                }
                Instruction::Tick
            }
            // Detector coordinates are accepted and dropped.
            "DETECTOR" => Instruction::Detector(parse_records(args, measured)?),
            "OBSERVABLE_INCLUDE" => {
                let (a, col) = arg.ok_or_else(|| syntax(head.column, "OBSERVABLE_INCLUDE needs an index".into()))?;
                let index = a
                    .trim()
                    .parse()
                    .map_err(|_| syntax(col, format!("bad observable index `{a}`")))?;
                Instruction::Observable {
                    index,
                    records: parse_records(args, measured)?,
                }
            }
            other => {
                return Err(syntax(head.column, format!("unknown instruction `{other}`")));
            }
        };
        let touched = match &inst {
            Instruction::Reset { targets, .. }
            | Instruction::H(targets)
            | Instruction::Measure { targets, .. }
            | Instruction::Noise { targets, .. } => targets.iter().copied().max(),
            Instruction::Cx(p) => p.iter().map(|&(c, t)| c.max(t)).max(),
            _ => None,
        };
        if let Some(q) = touched {
            max_qubit = Some(max_qubit.map_or(q, |m: usize| m.max(q)));
        }
        measured += inst.num_measurements();
        instructions.push(inst);
    }

    let needed = max_qubit.map_or(0, |m| m + 1);
    let num_qubits = match declared_qubits {
        Some(n) if n < needed => {
            return Err(CircuitError::InvalidParameter(format!(
                "#@qubits {n} but qubit {} is used",
                needed - 1
            )))
        }
        Some(n) => n,
        None => needed,
    };
    let circuit = NoisyCircuit {
        num_qubits,
        instructions,
        cycle_starts,
        readout_start,
        basis,
    };
    circuit.validate()?;
    Ok(circuit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_program() {
        let c = parse_circuit_text("R 0\nX_ERROR(0.25) 0\nM 0\nDETECTOR rec[-1]").unwrap();
        assert_eq!(c.num_qubits, 1);
        assert_eq!(c.num_detectors(), 1);
        assert_eq!(c.instructions[3], Instruction::Detector(vec![0]));
    }

    #[test]
    fn missing_record_is_reported() {
        let err = parse_circuit_text("M 0\nDETECTOR rec[-2]").unwrap_err();
        match err {
            CircuitError::MissingMeasurement {
                line,
                offset,
                available,
            } => assert_eq!((line, offset, available), (2, 2, 1)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_string("M 0\nDETECTOR rec[-2]").contains("rec[-2]"));
    }

    fn err_string(src: &str) -> String {
        parse_circuit_text(src).unwrap_err().to_string()
    }

    #[test]
    fn unknown_instruction_position() {
        let err = parse_circuit_text("R 0\n  SWAP 0 1\n").unwrap_err();
        match err {
            CircuitError::Syntax { line, column, .. } => assert_eq!((line, column), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_circuit_text("M 0 x").unwrap_err();
        assert!(matches!(err, CircuitError::Syntax { line: 1, column: 5, .. }));
    }

    #[test]
    fn bad_probability() {
        assert!(matches!(
            parse_circuit_text("X_ERROR(1.5) 0"),
            Err(CircuitError::Probability(_))
        ));
        assert!(parse_circuit_text("X_ERROR 0").is_err());
        assert!(parse_circuit_text("DEPOLARIZE2(0.1) 0").is_err());
    }

    #[test]
    fn comments_and_pragmas() {
        let src = "#@qubits 3\n# hello\n#@cycle\nR 0 # trailing\nM 0\nDETECTOR rec[-1]\n#@readout\nM 1\n";
        let c = parse_circuit_text(src).unwrap();
        assert_eq!(c.num_qubits, 3);
        assert_eq!(c.cycle_starts, vec![0]);
        assert_eq!(c.readout_start, Some(3));
        assert_eq!(parse_circuit_text(&emit_circuit_text(&c)).unwrap(), c);
    }
}
