//! Text form of programs.
//!
//! ```text
//! ; comment to end of line
//! LDI 0x0000, 256                  ; input features: base, length in bytes
//! LDW 0, 0x2000, 144               ; weights of cell body 0
//! LDB 0, 0x2090, 4
//! STO 0, 0x3000, 196
//! CONV w=8 h=8 d=1 sl=1 zp=0
//! FLUSH
//! HALT
//! ```
//!
//! Mnemonics are case-insensitive. Integers are decimal or `0x` hex. Naming
//! the same port twice before the next `CONV` is rejected.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use super::{encode_instruction, ConfigOp, Instruction, MemKind};
use crate::memory::{AddressSpace, WORD_BYTES};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct AsmError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok<'a> {
    Word(&'a str),
    Int(u64),
    Comma,
    Equals,
}

#[derive(Debug, Clone)]
struct Token<'a> {
    tok: Tok<'a>,
    text: &'a str,
    column: usize,
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
    pos: usize,
    end_column: usize,
}

impl<'a> Line<'a> {
    fn err(&self, column: usize, message: impl Into<String>) -> AsmError {
        AsmError {
            line: self.number,
            column,
            message: message.into(),
        }
    }

    fn next(&mut self, expected: &str) -> Result<Token<'a>, AsmError> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err(self.end_column, format!("expected {expected}, found end of line")))?;
        self.pos += 1;
        Ok(t)
    }

    fn int(&mut self, what: &str, max: u64) -> Result<(u64, usize), AsmError> {
        let t = self.next(what)?;
        match t.tok {
            Tok::Int(v) if v <= max => Ok((v, t.column)),
            Tok::Int(v) => Err(self.err(t.column, format!("{what} {v} exceeds {max}"))),
            _ => Err(self.err(t.column, format!("expected {what}, found `{}`", t.text))),
        }
    }

    fn comma(&mut self) -> Result<(), AsmError> {
        let t = self.next("`,`")?;
        if t.tok != Tok::Comma {
            return Err(self.err(t.column, format!("expected `,`, found `{}`", t.text)));
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), AsmError> {
        match self.tokens.get(self.pos) {
            None => Ok(()),
            Some(t) => Err(self.err(t.column, format!("unexpected `{}`", t.text))),
        }
    }

    fn length(&mut self) -> Result<u32, AsmError> {
        let (len, col) = self.int("length", u32::MAX as u64)?;
        if !(len as usize).is_multiple_of(WORD_BYTES) {
            return Err(self.err(col, format!("length {len} is not a multiple of {WORD_BYTES} bytes")));
        }
        Ok(len as u32)
    }
}

fn lex(number: usize, text: &str) -> Result<Line<'_>, AsmError> {
    let code = text.split(';').next().unwrap_or("");
    let mut tokens = Vec::new();
    let bytes = code.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let column = i + 1;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b',' || c == b'=' {
            tokens.push(Token {
                tok: if c == b',' { Tok::Comma } else { Tok::Equals },
                text: &code[i..i + 1],
                column,
            });
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
            i += 1;
        }
        if start == i {
            return Err(AsmError {
                line: number,
                column,
                message: format!("unexpected character `{}`", code[i..].chars().next().unwrap()),
            });
        }
        let s = &code[start..i];
        let tok = if c.is_ascii_digit() {
            let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
                Some(hex) => u64::from_str_radix(hex, 16),
                None => s.parse(),
            };
            Tok::Int(parsed.map_err(|_| AsmError {
                line: number,
                column,
                message: format!("invalid integer `{s}`"),
            })?)
        } else {
            Tok::Word(s)
        };
        tokens.push(Token { tok, text: s, column });
    }
    Ok(Line {
        number,
        tokens,
        pos: 0,
        end_column: code.trim_end().len() + 1,
    })
}

fn parse_conv(line: &mut Line<'_>) -> Result<Instruction, AsmError> {
    const KEYS: [&str; 5] = ["w", "h", "d", "sl", "zp"];
    let mut values: [Option<u64>; 5] = [None; 5];
    while line.pos < line.tokens.len() {
        let key = line.next("operand")?;
        let idx = match key.tok {
            Tok::Word(w) => KEYS.iter().position(|k| k.eq_ignore_ascii_case(w)),
            _ => None,
        }
        .ok_or_else(|| {
            line.err(
                key.column,
                format!("expected one of w, h, d, sl, zp, found `{}`", key.text),
            )
        })?;
        if values[idx].is_some() {
            return Err(line.err(key.column, format!("operand `{}` given twice", KEYS[idx])));
        }
        let eq = line.next("`=`")?;
        if eq.tok != Tok::Equals {
            return Err(line.err(eq.column, format!("expected `=`, found `{}`", eq.text)));
        }
        let max = if idx == 4 { 1 } else { u32::MAX as u64 };
        values[idx] = Some(line.int(KEYS[idx], max)?.0);
    }
    if let Some(i) = values.iter().position(Option::is_none) {
        return Err(line.err(line.end_column, format!("missing operand `{}`", KEYS[i])));
    }
    let v = values.map(|v| v.unwrap());
    Ok(Instruction::convolve(
        v[0] as u32,
        v[1] as u32,
        v[2] as u32,
        v[3] as u32,
        v[4] == 1,
    ))
}

fn parse_line(line: &mut Line<'_>) -> Result<Option<(Instruction, usize)>, AsmError> {
    let Some(first) = line.tokens.first().cloned() else {
        return Ok(None);
    };
    line.pos = 1;
    let Tok::Word(mnemonic) = first.tok else {
        return Err(line.err(first.column, format!("expected a mnemonic, found `{}`", first.text)));
    };
    let ins = match mnemonic.to_ascii_uppercase().as_str() {
        "NOP" => Instruction::nop(),
        "HALT" => Instruction::stop(),
        "FLUSH" => Instruction::flush(),
        "CONV" => parse_conv(line)?,
        "LDI" => {
            let (base, _) = line.int("base address", u32::MAX as u64)?;
            line.comma()?;
            let len = line.length()?;
            Instruction::load_input(AddressSpace {
                base: base as u32,
                length: len,
            })
        }
        m @ ("LDW" | "LDB" | "STO") => {
            let kind = match m {
                "LDW" => MemKind::Weights,
                "LDB" => MemKind::Biases,
                _ => MemKind::Outputs,
            };
            let (cbu, _) = line.int("cell body index", u32::MAX as u64)?;
            line.comma()?;
            let (base, _) = line.int("base address", u32::MAX as u64)?;
            line.comma()?;
            let len = line.length()?;
            Instruction::memory(
                kind,
                cbu as u32,
                AddressSpace {
                    base: base as u32,
                    length: len,
                },
            )
        }
        _ => return Err(line.err(first.column, format!("unknown mnemonic `{mnemonic}`"))),
    };
    line.finish()?;
    encode_instruction(&ins).map_err(|e| line.err(first.column, e.to_string()))?;
    Ok(Some((ins, first.column)))
}

pub fn assemble(text: &str) -> Result<Vec<Instruction>, AsmError> {
    let mut program = Vec::new();
    let mut ports: HashSet<(MemKind, u32)> = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let mut line = lex(i + 1, raw)?;
        let Some((ins, column)) = parse_line(&mut line)? else {
            continue;
        };
        match ins {
            Instruction::MemControl(mc) => {
                if !ports.insert((mc.kind, mc.cbu)) {
                    let target = if mc.kind.is_per_cbu() {
                        format!(" for cell body {}", mc.cbu)
                    } else {
                        String::new()
                    };
                    return Err(line.err(
                        column,
                        format!("{} already set{target} before the next CONV", mc.kind.mnemonic()),
                    ));
                }
            }
            Instruction::MwControl(mw) if mw.config == ConfigOp::Convolve => ports.clear(),
            Instruction::MwControl(_) => {}
        }
        program.push(ins);
    }
    Ok(program)
}

/// Canonical text, one instruction per line.
pub fn disassemble(program: &[Instruction]) -> String {
    let mut out = String::new();
    for ins in program {
        match ins {
            Instruction::MwControl(mw) => match mw.config {
                ConfigOp::Nop => out.push_str("NOP"),
                ConfigOp::Stop => out.push_str("HALT"),
                ConfigOp::Flush => out.push_str("FLUSH"),
                ConfigOp::Convolve => {
                    let _ = write!(
                        out,
                        "CONV w={} h={} d={} sl={} zp={}",
                        mw.ifd_width, mw.ifd_height, mw.ifd_depth, mw.stride, mw.zero_pad as u8
                    );
                }
            },
            Instruction::MemControl(mc) => {
                out.push_str(mc.kind.mnemonic());
                out.push(' ');
                if mc.kind.is_per_cbu() {
                    let _ = write!(out, "{}, ", mc.cbu);
                }
                let _ = write!(out, "{:#x}, {}", mc.space.base, mc.space.length);
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::tests::valid_instruction;
    use proptest::prelude::*;

    #[test]
    fn halt() {
        assert_eq!(assemble("HALT").unwrap(), vec![Instruction::stop()]);
        assert_eq!(assemble("  halt ; done\n").unwrap(), vec![Instruction::stop()]);
    }

    #[test]
    fn load_weights_maps_directly() {
        assert_eq!(
            assemble("LDW 0, 0x2000, 144").unwrap(),
            vec![Instruction::load_weights(0, AddressSpace::new(0x2000, 144).unwrap())]
        );
    }

    #[test]
    fn missing_length_points_at_token() {
        let err = assemble("LDW 0 0x2000").unwrap_err();
        assert_eq!((err.line, err.column), (1, 7));
        assert!(err.message.contains("expected `,`"), "{err}");

        let err = assemble("NOP\nLDW 0, 0x2000").unwrap_err();
        assert_eq!((err.line, err.column), (2, 14));
        assert!(err.message.contains("end of line"));
    }

    #[test]
    fn diagnostics() {
        let err = assemble("NOP\n\n  FOO 1").unwrap_err();
        assert_eq!((err.line, err.column), (3, 3));
        assert!(err.message.contains("unknown mnemonic"));

        assert!(assemble("LDI 0, 6").unwrap_err().message.contains("multiple of 4"));
        assert!(assemble("CONV w=8 h=8 d=1 sl=1")
            .unwrap_err()
            .message
            .contains("missing operand `zp`"));
        assert!(assemble("CONV w=8 h=8 d=1 sl=1 zp=2").is_err());
        assert!(assemble("CONV w=8 w=8 h=8 d=1 sl=1 zp=0")
            .unwrap_err()
            .message
            .contains("twice"));
        assert!(assemble("CONV w=8 h=8 d=1 sl=256 zp=0")
            .unwrap_err()
            .message
            .contains("SL"));
        assert!(assemble("HALT 3").is_err());
        assert!(assemble("LDW 0, 0x, 4")
            .unwrap_err()
            .message
            .contains("invalid integer"));
        assert!(assemble("LDW 0, 0x10, 4 $")
            .unwrap_err()
            .message
            .contains("unexpected character"));
    }

    #[test]
    fn duplicate_port_before_conv() {
        let dup = "LDW 0, 0x0, 4\nLDW 0, 0x10, 4\n";
        let err = assemble(dup).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("LDW already set for cell body 0"));

        assert!(assemble("LDI 0x0, 4\nLDI 0x10, 4").is_err());
        // a different cell body, or a CONV in between, is fine
        assemble("LDW 0, 0x0, 4\nLDW 1, 0x10, 4\nCONV w=1 h=1 d=1 sl=1 zp=0\nLDW 0, 0x0, 4").unwrap();
    }

    #[test]
    fn empty_and_comment_only() {
        assert_eq!(assemble("").unwrap(), vec![]);
        assert_eq!(assemble("; nothing\n\n   \n").unwrap(), vec![]);
        assert_eq!(disassemble(&[]), "");
    }

    #[test]
    fn canonical_text() {
        let text = "LDI 0x0, 256\nLDW 0, 0x2000, 144\nLDB 0, 0x2090, 4\nSTO 0, 0x3000, 196\n\
                    CONV w=8 h=8 d=1 sl=1 zp=0\nFLUSH\nNOP\nHALT\n";
        assert_eq!(disassemble(&assemble(text).unwrap()), text);
    }

    proptest! {
        #[test]
        fn single_instruction_round_trip(ins in valid_instruction()) {
            let text = disassemble(&[ins]);
            prop_assert_eq!(assemble(&text).unwrap(), vec![ins]);
        }
    }
}
