//! Script interpreter.

use primitive_types::U256;

use super::script::{Instr, Script};
use super::{BlockCtx, Fault, TransferEvent, VmConfig};
use crate::hash::word_to_bytes;
use crate::state::{AccountId, AccountState, DbState};

pub(crate) enum Halt {
    /// The frame reverted; its state changes are discarded.
    Revert { data: Vec<u8>, fault: Fault },
    /// Aborts every frame up to the top-level transaction.
    Fatal(Fault),
}

impl Halt {
    pub(crate) fn into_parts(self) -> (Vec<u8>, Fault) {
        match self {
            Halt::Revert { data, fault } => (data, fault),
            Halt::Fatal(fault) => (Vec::new(), fault),
        }
    }
}

pub(crate) struct Machine<'c, 't> {
    ctx: &'c BlockCtx<'t>,
    cfg: &'c VmConfig,
    pub(crate) gas_used: u64,
    pub(crate) transfers: Vec<TransferEvent>,
}

/// Moves `amount` between accounts, creating the recipient if needed.
pub(crate) fn move_balance(
    db: &mut DbState,
    from: AccountId,
    to: AccountId,
    amount: U256,
) -> Result<(), Fault> {
    let available = db.balance(&from);
    let debited = available
        .checked_sub(amount)
        .ok_or(Fault::InsufficientBalance)?;
    if from == to {
        return Ok(());
    }
    let credited = db
        .balance(&to)
        .checked_add(amount)
        .ok_or(Fault::ArithmeticOverflow)?;
    db.account_mut(from).balance = debited;
    db.account_mut(to).balance = credited;
    Ok(())
}

impl<'c, 't> Machine<'c, 't> {
    pub(crate) fn new(ctx: &'c BlockCtx<'t>, cfg: &'c VmConfig) -> Self {
        Machine {
            ctx,
            cfg,
            gas_used: 0,
            transfers: Vec::new(),
        }
    }

    pub(crate) fn transfer(
        &mut self,
        db: &mut DbState,
        from: AccountId,
        to: AccountId,
        amount: U256,
    ) -> Result<(), Fault> {
        move_balance(db, from, to, amount)?;
        if !amount.is_zero() {
            self.transfers.push(TransferEvent { from, to, amount });
        }
        Ok(())
    }

    /// Runs `contract` with `calldata`. On any halt the state and transfer
    /// log are restored to their values at entry.
    pub(crate) fn call(
        &mut self,
        db: &mut DbState,
        contract: AccountId,
        calldata: &[u8],
        caller: AccountId,
        depth: usize,
    ) -> Result<Vec<u8>, Halt> {
        let code = match db.get(&contract).and_then(|a| a.code.clone()) {
            Some(code) => code,
            None => {
                return Err(Halt::Revert {
                    data: Vec::new(),
                    fault: Fault::NoCode(contract),
                })
            }
        };
        let snapshot = db.clone();
        let mark = self.transfers.len();
        let result = self.run_frame(db, &code, contract, calldata, caller, depth);
        if result.is_err() {
            *db = snapshot;
            self.transfers.truncate(mark);
        }
        result
    }

    fn run_frame(
        &mut self,
        db: &mut DbState,
        code: &Script,
        this: AccountId,
        calldata: &[u8],
        caller: AccountId,
        depth: usize,
    ) -> Result<Vec<u8>, Halt> {
        let mut stack: Vec<U256> = Vec::new();
        let mut output: Vec<u8> = Vec::new();
        let mut last_return: Vec<u8> = Vec::new();
        let mut pc = 0usize;

        macro_rules! fault {
            ($f:expr) => {
                return Err(Halt::Revert {
                    data: Vec::new(),
                    fault: $f,
                })
            };
        }
        macro_rules! pop {
            () => {
                match stack.pop() {
                    Some(v) => v,
                    None => fault!(Fault::StackUnderflow),
                }
            };
        }
        macro_rules! push {
            ($v:expr) => {{
                if stack.len() >= self.cfg.max_stack {
                    fault!(Fault::StackOverflow);
                }
                stack.push($v)
            }};
        }
        macro_rules! checked {
            ($e:expr) => {
                match $e {
                    Some(v) => v,
                    None => fault!(Fault::ArithmeticOverflow),
                }
            };
        }
        let flag = |b: bool| if b { U256::one() } else { U256::zero() };

        while pc < code.code.len() {
            if self.gas_used >= self.cfg.step_limit {
                return Err(Halt::Fatal(Fault::OutOfGas));
            }
            self.gas_used += 1;
            let instr = code.code[pc];
            pc += 1;
            match instr {
                Instr::Push(v) => push!(v),
                Instr::Pop => {
                    pop!();
                }
                Instr::Dup(n) => {
                    let n = n as usize;
                    if n == 0 || n > stack.len() {
                        fault!(Fault::StackUnderflow);
                    }
                    let v = stack[stack.len() - n];
                    push!(v);
                }
                Instr::Swap(n) => {
                    let n = n as usize;
                    if n == 0 || stack.len() < n + 1 {
                        fault!(Fault::StackUnderflow);
                    }
                    let top = stack.len() - 1;
                    stack.swap(top, top - n);
                }
                Instr::Add => {
                    let (a, b) = (pop!(), pop!());
                    push!(checked!(a.checked_add(b)));
                }
                Instr::Sub => {
                    let (a, b) = (pop!(), pop!());
                    push!(checked!(a.checked_sub(b)));
                }
                Instr::Mul => {
                    let (a, b) = (pop!(), pop!());
                    push!(checked!(a.checked_mul(b)));
                }
                Instr::Div => {
                    let (a, b) = (pop!(), pop!());
                    if b.is_zero() {
                        fault!(Fault::DivisionByZero);
                    }
                    push!(a / b);
                }
                Instr::Mod => {
                    let (a, b) = (pop!(), pop!());
                    if b.is_zero() {
                        fault!(Fault::DivisionByZero);
                    }
                    let r =
                        if self.cfg.legacy_mod_mask && b > U256::one() && (b & (b - 1)).is_zero() {
                            // Legacy masking defect: uses the divisor itself as
                            // the mask instead of divisor - 1.
                            a & b
                        } else {
                            a % b
                        };
                    push!(r);
                }
                Instr::Lt => {
                    let (a, b) = (pop!(), pop!());
                    push!(flag(a < b));
                }
                Instr::Gt => {
                    let (a, b) = (pop!(), pop!());
                    push!(flag(a > b));
                }
                Instr::Eq => {
                    let (a, b) = (pop!(), pop!());
                    push!(flag(a == b));
                }
                Instr::IsZero => {
                    let a = pop!();
                    push!(flag(a.is_zero()));
                }
                Instr::SLoad => {
                    let addr = pop!();
                    push!(db.storage(&this, addr));
                }
                Instr::SStore => {
                    let addr = pop!();
                    let value = pop!();
                    db.set_storage(this, addr, value);
                }
                Instr::Caller => push!(caller.to_word()),
                Instr::Address => push!(this.to_word()),
                Instr::SelfBalance => push!(db.balance(&this)),
                Instr::Balance => {
                    let who = AccountId::from_word(pop!());
                    push!(db.balance(&who));
                }
                Instr::Transfer => {
                    let to = AccountId::from_word(pop!());
                    let amount = pop!();
                    if let Err(f) = self.transfer(db, this, to, amount) {
                        fault!(f);
                    }
                }
                Instr::Jump(t) => {
                    if t as usize >= code.code.len() {
                        fault!(Fault::BadJump(t));
                    }
                    pc = t as usize;
                }
                Instr::JumpI(t) => {
                    let cond = pop!();
                    if !cond.is_zero() {
                        if t as usize >= code.code.len() {
                            fault!(Fault::BadJump(t));
                        }
                        pc = t as usize;
                    }
                }
                Instr::CallDataLoad => {
                    let off = pop!();
                    let mut word = [0u8; 32];
                    if off < U256::from(calldata.len()) {
                        let off = off.as_usize();
                        let n = (calldata.len() - off).min(32);
                        word[..n].copy_from_slice(&calldata[off..off + n]);
                    }
                    push!(U256::from_big_endian(&word));
                }
                Instr::CallDataSize => push!(U256::from(calldata.len())),
                Instr::Call => {
                    let target = AccountId::from_word(pop!());
                    let off = pop!();
                    let len = pop!();
                    let end = checked!(off.checked_add(len));
                    if end > U256::from(calldata.len()) {
                        fault!(Fault::CalldataRange);
                    }
                    let slice = &calldata[off.as_usize()..end.as_usize()];
                    if depth + 1 > self.cfg.max_call_depth {
                        last_return.clear();
                        push!(U256::zero());
                        continue;
                    }
                    match self.call(db, target, slice, this, depth + 1) {
                        Ok(ret) => {
                            last_return = ret;
                            push!(U256::one());
                        }
                        Err(Halt::Revert { data, .. }) => {
                            last_return = data;
                            push!(U256::zero());
                        }
                        Err(fatal @ Halt::Fatal(_)) => return Err(fatal),
                    }
                }
                Instr::CodeExists => {
                    let who = AccountId::from_word(pop!());
                    push!(flag(db.get(&who).is_some_and(AccountState::is_contract)));
                }
                Instr::ReturnDataSize => push!(U256::from(last_return.len())),
                Instr::Emit => {
                    let w = pop!();
                    output.extend_from_slice(&word_to_bytes(w));
                }
                Instr::EmitReturnData => output.extend_from_slice(&last_return),
                Instr::BlockNumber => push!(U256::from(self.ctx.height)),
                Instr::BlockHash => {
                    let k = pop!();
                    push!(self.ctx.blockhash(k));
                }
                Instr::BlockHashFd => {
                    let k = pop!();
                    push!(self.ctx.blockhash_fd(k));
                }
                Instr::ChainId => push!(self.ctx.fork_id.to_word()),
                Instr::Return => return Ok(output),
                Instr::Revert => {
                    return Err(Halt::Revert {
                        data: output,
                        fault: Fault::Explicit,
                    })
                }
            }
        }
        Ok(output)
    }
}
