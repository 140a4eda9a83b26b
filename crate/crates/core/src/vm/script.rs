//! The contract instruction set and its one-instruction-per-line assembly
//! text format.
//!
//! ```text
//! # comments start with '#'
//! caller
//! push 0x2a          # decimal or 0x-prefixed hex
//! eq
//! jumpi @ok          # label or absolute instruction index
//! push 1
//! emit
//! revert
//! ok:
//! return
//! ```

use std::collections::HashMap;
use std::fmt;

use primitive_types::U256;

use crate::codec::{Decode, DecodeError, Decoder, Encode, Encoder};

/// Stack machine instruction. Words are 256-bit; arithmetic is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instr {
    Push(U256),
    Pop,
    /// Duplicate the n-th stack item (1 = top).
    Dup(u8),
    /// Swap the top with the (n+1)-th item.
    Swap(u8),
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Gt,
    Eq,
    IsZero,
    SLoad,
    SStore,
    Caller,
    Address,
    SelfBalance,
    Balance,
    /// Pops `to`, then `amount`; moves tokens out of the executing contract.
    Transfer,
    Jump(u32),
    JumpI(u32),
    CallDataLoad,
    CallDataSize,
    /// Pops `target`, `offset`, `length`; calls `target` with that slice of
    /// the current calldata. Pushes 1 on success, 0 on callee failure.
    Call,
    CodeExists,
    ReturnDataSize,
    /// Appends the popped word to the output buffer.
    Emit,
    /// Appends the last call's return data to the output buffer.
    EmitReturnData,
    BlockNumber,
    /// Windowed block hash: zero outside the configured window.
    BlockHash,
    /// Full-domain block hash.
    BlockHashFd,
    ChainId,
    Return,
    Revert,
}

impl Instr {
    fn opcode(&self) -> u8 {
        use Instr::*;
        match self {
            Push(_) => 0x01,
            Pop => 0x02,
            Dup(_) => 0x03,
            Swap(_) => 0x04,
            Add => 0x10,
            Sub => 0x11,
            Mul => 0x12,
            Div => 0x13,
            Mod => 0x14,
            Lt => 0x15,
            Gt => 0x16,
            Eq => 0x17,
            IsZero => 0x18,
            SLoad => 0x20,
            SStore => 0x21,
            Caller => 0x30,
            Address => 0x31,
            SelfBalance => 0x32,
            Balance => 0x33,
            Transfer => 0x34,
            Jump(_) => 0x40,
            JumpI(_) => 0x41,
            CallDataLoad => 0x50,
            CallDataSize => 0x51,
            Call => 0x52,
            CodeExists => 0x53,
            ReturnDataSize => 0x54,
            Emit => 0x55,
            EmitReturnData => 0x56,
            BlockNumber => 0x60,
            BlockHash => 0x61,
            BlockHashFd => 0x62,
            ChainId => 0x63,
            Return => 0x70,
            Revert => 0x71,
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        use Instr::*;
        match self {
            Push(_) => "push",
            Pop => "pop",
            Dup(_) => "dup",
            Swap(_) => "swap",
            Add => "add",
            Sub => "sub",
            Mul => "mul",
            Div => "div",
            Mod => "mod",
            Lt => "lt",
            Gt => "gt",
            Eq => "eq",
            IsZero => "iszero",
            SLoad => "sload",
            SStore => "sstore",
            Caller => "caller",
            Address => "address",
            SelfBalance => "selfbalance",
            Balance => "balance",
            Transfer => "transfer",
            Jump(_) => "jump",
            JumpI(_) => "jumpi",
            CallDataLoad => "calldataload",
            CallDataSize => "calldatasize",
            Call => "call",
            CodeExists => "codeexists",
            ReturnDataSize => "returndatasize",
            Emit => "emit",
            EmitReturnData => "emitreturndata",
            BlockNumber => "blocknumber",
            BlockHash => "blockhash",
            BlockHashFd => "blockhash_fd",
            ChainId => "chainid",
            Return => "return",
            Revert => "revert",
        }
    }

    fn nullary(mnemonic: &str) -> Option<Instr> {
        use Instr::*;
        Some(match mnemonic {
            "pop" => Pop,
            "add" => Add,
            "sub" => Sub,
            "mul" => Mul,
            "div" => Div,
            "mod" => Mod,
            "lt" => Lt,
            "gt" => Gt,
            "eq" => Eq,
            "iszero" => IsZero,
            "sload" => SLoad,
            "sstore" => SStore,
            "caller" => Caller,
            "address" => Address,
            "selfbalance" => SelfBalance,
            "balance" => Balance,
            "transfer" => Transfer,
            "calldataload" => CallDataLoad,
            "calldatasize" => CallDataSize,
            "call" => Call,
            "codeexists" => CodeExists,
            "returndatasize" => ReturnDataSize,
            "emit" => Emit,
            "emitreturndata" => EmitReturnData,
            "blocknumber" => BlockNumber,
            "blockhash" => BlockHash,
            "blockhash_fd" => BlockHashFd,
            "chainid" => ChainId,
            "return" => Return,
            "revert" => Revert,
            _ => return None,
        })
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Push(v) => write!(f, "push {v:#x}"),
            Instr::Dup(n) | Instr::Swap(n) => write!(f, "{} {n}", self.mnemonic()),
            Instr::Jump(t) | Instr::JumpI(t) => write!(f, "{} {t}", self.mnemonic()),
            other => f.write_str(other.mnemonic()),
        }
    }
}

/// A finite contract program.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Script {
    pub code: Vec<Instr>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmError {
    #[error("line {line}: unknown instruction `{text}`")]
    UnknownInstruction { line: usize, text: String },
    #[error("line {line}: bad operand `{text}`")]
    BadOperand { line: usize, text: String },
    #[error("line {line}: undefined label `{label}`")]
    UndefinedLabel { line: usize, label: String },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
}

impl Script {
    pub fn new(code: Vec<Instr>) -> Self {
        Script { code }
    }

    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }

    /// Parses assembly text. Labels are resolved to absolute instruction
    /// indices.
    pub fn parse(text: &str) -> Result<Script, AsmError> {
        enum Pending {
            Ready(Instr),
            Jump {
                conditional: bool,
                label: String,
                line: usize,
            },
        }

        let mut labels: HashMap<String, u32> = HashMap::new();
        let mut pending = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(label) = body.strip_suffix(':') {
                let label = label.trim().to_string();
                if labels.insert(label.clone(), pending.len() as u32).is_some() {
                    return Err(AsmError::DuplicateLabel { line, label });
                }
                continue;
            }
            let mut parts = body.split_whitespace();
            let mnemonic = parts.next().unwrap().to_ascii_lowercase();
            let operand = parts.next();
            if let Some(extra) = parts.next() {
                return Err(AsmError::BadOperand {
                    line,
                    text: extra.to_string(),
                });
            }
            let bad = |text: &str| AsmError::BadOperand {
                line,
                text: text.to_string(),
            };
            let item = match (mnemonic.as_str(), operand) {
                ("push", Some(op)) => {
                    Pending::Ready(Instr::Push(parse_word(op).ok_or_else(|| bad(op))?))
                }
                ("dup", Some(op)) | ("swap", Some(op)) => {
                    let n: u8 = op.parse().map_err(|_| bad(op))?;
                    if !(1..=16).contains(&n) {
                        return Err(bad(op));
                    }
                    Pending::Ready(if mnemonic == "dup" {
                        Instr::Dup(n)
                    } else {
                        Instr::Swap(n)
                    })
                }
                ("jump", Some(op)) | ("jumpi", Some(op)) => {
                    let conditional = mnemonic == "jumpi";
                    if let Some(label) = op.strip_prefix('@') {
                        Pending::Jump {
                            conditional,
                            label: label.to_string(),
                            line,
                        }
                    } else {
                        let t: u32 = op.parse().map_err(|_| bad(op))?;
                        Pending::Ready(if conditional {
                            Instr::JumpI(t)
                        } else {
                            Instr::Jump(t)
                        })
                    }
                }
                (m, None) => match Instr::nullary(m) {
                    Some(i) => Pending::Ready(i),
                    None => {
                        return Err(AsmError::UnknownInstruction {
                            line,
                            text: body.to_string(),
                        })
                    }
                },
                (m, Some(op)) => {
                    if Instr::nullary(m).is_some() {
                        return Err(bad(op));
                    }
                    return Err(AsmError::UnknownInstruction {
                        line,
                        text: body.to_string(),
                    });
                }
            };
            pending.push(item);
        }

        let code = pending
            .into_iter()
            .map(|p| match p {
                Pending::Ready(i) => Ok(i),
                Pending::Jump {
                    conditional,
                    label,
                    line,
                } => {
                    let target = *labels
                        .get(&label)
                        .ok_or(AsmError::UndefinedLabel { line, label })?;
                    Ok(if conditional {
                        Instr::JumpI(target)
                    } else {
                        Instr::Jump(target)
                    })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Script { code })
    }

    /// Renders assembly text with numeric jump targets; `parse` accepts it.
    pub fn to_asm(&self) -> String {
        let mut out = String::new();
        for instr in &self.code {
            out.push_str(&instr.to_string());
            out.push('\n');
        }
        out
    }
}

fn parse_word(s: &str) -> Option<U256> {
    if let Some(hex) = s.strip_prefix("0x") {
        U256::from_str_radix(hex, 16).ok()
    } else {
        U256::from_dec_str(s).ok()
    }
}

impl Encode for Script {
    fn encode(&self, enc: &mut Encoder) {
        enc.u32(self.code.len() as u32);
        for instr in &self.code {
            enc.u8(instr.opcode());
            match instr {
                Instr::Push(v) => {
                    enc.word(*v);
                }
                Instr::Dup(n) | Instr::Swap(n) => {
                    enc.u8(*n);
                }
                Instr::Jump(t) | Instr::JumpI(t) => {
                    enc.u32(*t);
                }
                _ => {}
            }
        }
    }
}

impl Decode for Script {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let len = dec.u32()? as usize;
        if len > dec.remaining() {
            return Err(DecodeError::Truncated(len));
        }
        let mut code = Vec::with_capacity(len);
        for _ in 0..len {
            let op = dec.u8()?;
            let instr = match op {
                0x01 => Instr::Push(dec.word()?),
                0x03 => Instr::Dup(dec.u8()?),
                0x04 => Instr::Swap(dec.u8()?),
                0x40 => Instr::Jump(dec.u32()?),
                0x41 => Instr::JumpI(dec.u32()?),
                _ => ALL_NULLARY
                    .iter()
                    .copied()
                    .find(|i| i.opcode() == op)
                    .ok_or(DecodeError::BadTag {
                        what: "opcode",
                        tag: op,
                    })?,
            };
            code.push(instr);
        }
        Ok(Script { code })
    }
}

const ALL_NULLARY: [Instr; 30] = [
    Instr::Pop,
    Instr::Add,
    Instr::Sub,
    Instr::Mul,
    Instr::Div,
    Instr::Mod,
    Instr::Lt,
    Instr::Gt,
    Instr::Eq,
    Instr::IsZero,
    Instr::SLoad,
    Instr::SStore,
    Instr::Caller,
    Instr::Address,
    Instr::SelfBalance,
    Instr::Balance,
    Instr::Transfer,
    Instr::CallDataLoad,
    Instr::CallDataSize,
    Instr::Call,
    Instr::CodeExists,
    Instr::ReturnDataSize,
    Instr::Emit,
    Instr::EmitReturnData,
    Instr::BlockNumber,
    Instr::BlockHash,
    Instr::BlockHashFd,
    Instr::ChainId,
    Instr::Return,
    Instr::Revert,
];
