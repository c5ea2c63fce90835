//! Text assembly: one instruction per line, `IDX: MNEMONIC operands`.
//!
//! ```text
//! # comment
//! .registers 64
//! .memory 12
//! .preload r7 = 0.5
//! 0: LD r0, [5]
//! 1: MUL r2, r0, r7
//! 2: SUB r3, r2, r0
//! 3: SQRT r4, r3
//! 4: ST [6], r4
//! ```

use std::fmt::Write as _;

use super::{Addr, Instruction, OpClass, Program, Reg};
use crate::error::{Error, Result};

pub fn disassemble(program: &Program) -> String {
    let mut out = String::new();
    let _ = writeln!(out, ".registers {}", program.num_registers);
    let _ = writeln!(out, ".memory {}", program.memory_words);
    for (r, v) in &program.preloaded {
        let _ = writeln!(out, ".preload {r} = {v:?}");
    }
    for (idx, inst) in program.instructions.iter().enumerate() {
        let _ = writeln!(out, "{idx}: {}", format_instruction(inst));
    }
    out
}

fn format_instruction(inst: &Instruction) -> String {
    let mut operands: Vec<String> = Vec::with_capacity(3);
    match inst.op {
        OpClass::Load => {
            operands.extend(inst.dst.map(|r| r.to_string()));
            operands.extend(inst.addr.map(|a| a.to_string()));
        }
        OpClass::Store => {
            operands.extend(inst.addr.map(|a| a.to_string()));
            operands.extend(inst.src1.map(|r| r.to_string()));
        }
        _ => {
            operands.extend(inst.dst.map(|r| r.to_string()));
            operands.extend(inst.sources().map(|r| r.to_string()));
        }
    }
    if operands.is_empty() {
        inst.mnemonic().to_string()
    } else {
        format!("{} {}", inst.mnemonic(), operands.join(", "))
    }
}

fn parse_reg(tok: &str, line: usize) -> Result<Reg> {
    tok.strip_prefix('r')
        .and_then(|n| n.parse::<u16>().ok())
        .map(Reg)
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected register, found `{tok}`"),
        })
}

fn parse_addr(tok: &str, line: usize) -> Result<Addr> {
    tok.strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .and_then(|n| n.trim().parse::<u32>().ok())
        .map(Addr)
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected [address], found `{tok}`"),
        })
}

fn parse_count(rest: &str, line: usize) -> Result<usize> {
    rest.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a count, found `{}`", rest.trim()),
    })
}

/// Parses the text produced by [`disassemble`]. `#` starts a comment;
/// blank lines are ignored. Instruction indices must be consecutive from 0.
pub fn parse(text: &str) -> Result<Program> {
    let mut program = Program::new(0, 0);
    let mut saw_regs = false;
    let mut saw_mem = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(directive) = body.strip_prefix('.') {
            let (name, rest) = directive.split_once(char::is_whitespace).unwrap_or((directive, ""));
            match name {
                "registers" => {
                    program.num_registers = parse_count(rest, line)?;
                    saw_regs = true;
                }
                "memory" => {
                    program.memory_words = parse_count(rest, line)?;
                    saw_mem = true;
                }
                "preload" => {
                    let (reg, value) = rest.split_once('=').ok_or_else(|| Error::Parse {
                        line,
                        msg: "expected `.preload rN = value`".into(),
                    })?;
                    let reg = parse_reg(reg.trim(), line)?;
                    let value: f64 = value.trim().parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("bad constant `{}`", value.trim()),
                    })?;
                    program.preloaded.insert(reg, value);
                }
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown directive `.{other}`"),
                    })
                }
            }
            continue;
        }

        let (idx, inst) = body.split_once(':').ok_or_else(|| Error::Parse {
            line,
            msg: "expected `IDX: MNEMONIC operands`".into(),
        })?;
        let idx: usize = idx.trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad instruction index `{}`", idx.trim()),
        })?;
        if idx != program.instructions.len() {
            return Err(Error::Parse {
                line,
                msg: format!(
                    "instruction index {idx} out of sequence (expected {})",
                    program.instructions.len()
                ),
            });
        }
        program.instructions.push(parse_instruction(inst.trim(), line)?);
    }

    if !saw_regs || !saw_mem {
        return Err(Error::Parse {
            line: 0,
            msg: "missing `.registers` or `.memory` directive".into(),
        });
    }
    Ok(program)
}

fn parse_instruction(text: &str, line: usize) -> Result<Instruction> {
    let (mnemonic, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
    let ops: Vec<&str> = rest
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();

    let (op, negate) = match mnemonic.to_ascii_uppercase().as_str() {
        "MUL" => (OpClass::Mul, false),
        "ADD" => (OpClass::Add, false),
        "SUB" => (OpClass::Add, true),
        "SQRT" => (OpClass::Sqrt, false),
        "DIV" => (OpClass::Div, false),
        "LD" => (OpClass::Load, false),
        "ST" => (OpClass::Store, false),
        other => {
            return Err(Error::Parse {
                line,
                msg: format!("unknown mnemonic `{other}`"),
            })
        }
    };

    let mut inst = Instruction {
        op,
        dst: None,
        src1: None,
        src2: None,
        addr: None,
        negate,
    };
    let too_many = || Error::Parse {
        line,
        msg: format!("too many operands for {mnemonic}"),
    };
    match op {
        OpClass::Load => {
            if ops.len() > 2 {
                return Err(too_many());
            }
            for tok in ops {
                if tok.starts_with('[') {
                    inst.addr = Some(parse_addr(tok, line)?);
                } else {
                    inst.dst = Some(parse_reg(tok, line)?);
                }
            }
        }
        OpClass::Store => {
            if ops.len() > 2 {
                return Err(too_many());
            }
            for tok in ops {
                if tok.starts_with('[') {
                    inst.addr = Some(parse_addr(tok, line)?);
                } else {
                    inst.src1 = Some(parse_reg(tok, line)?);
                }
            }
        }
        _ => {
            if ops.len() > 3 {
                return Err(too_many());
            }
            let regs = ops
                .iter()
                .map(|t| parse_reg(t, line))
                .collect::<Result<Vec<_>>>()?;
            inst.dst = regs.first().copied();
            inst.src1 = regs.get(1).copied();
            inst.src2 = regs.get(2).copied();
        }
    }
    Ok(inst)
}
