//! Deterministic transaction semantics.
//!
//! [`apply_txn`] distinguishes transactions that are not sequenced at all
//! (bad signature, nonce or fee: no state change) from transactions that are
//! sequenced but revert (sender nonce incremented, flat fee charged, nothing
//! else changes).

pub mod contracts;
mod interp;
pub mod script;
pub mod txn;

use primitive_types::U256;
use serde::{Deserialize, Serialize};

use crate::blocktree::{BlockId, BlockTree, TreeError};
use crate::hash::ForkId;
use crate::leash::{leash_check, LeashRevert, LeashVerdict};
use crate::state::{AccountId, AccountState, DbState};
use interp::{move_balance, Halt, Machine};
use script::Script;
use txn::{SignedTxn, TxnBody};

pub const DEFAULT_BLOCKHASH_WINDOW: u64 = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmConfig {
    /// Flat fee charged to every sequenced transaction.
    pub base_fee: U256,
    pub fee_sink: AccountId,
    /// Instruction budget per top-level transaction.
    pub step_limit: u64,
    pub max_call_depth: usize,
    pub max_calldata: usize,
    pub max_stack: usize,
    /// Reproduces the legacy `mod` masking defect (see the interpreter).
    /// Patched semantics leave this off.
    pub legacy_mod_mask: bool,
}

impl Default for VmConfig {
    fn default() -> Self {
        VmConfig {
            base_fee: U256::from(10),
            fee_sink: AccountId::named("fee-sink"),
            step_limit: 100_000,
            max_call_depth: 8,
            max_calldata: 4096,
            max_stack: 1024,
            legacy_mod_mask: false,
        }
    }
}

impl VmConfig {
    pub fn legacy() -> Self {
        VmConfig {
            legacy_mod_mask: true,
            ..Default::default()
        }
    }
}

/// Execution context: the child of `parent` is the block being built.
#[derive(Debug, Clone, Copy)]
pub struct BlockCtx<'a> {
    pub tree: &'a BlockTree,
    pub parent: BlockId,
    pub height: u64,
    pub fork_id: ForkId,
    /// `blockhash` returns zero for blocks more than this many behind.
    pub blockhash_window: u64,
    /// Limit for `blockhash_fd`; `None` is the full domain.
    pub fd_window: Option<u64>,
}

impl<'a> BlockCtx<'a> {
    pub fn new(tree: &'a BlockTree, parent: BlockId, fork_id: ForkId) -> Result<Self, TreeError> {
        Ok(BlockCtx {
            tree,
            parent,
            height: tree.depth(&parent)? + 1,
            fork_id,
            blockhash_window: DEFAULT_BLOCKHASH_WINDOW,
            fd_window: None,
        })
    }

    pub fn with_window(mut self, window: u64) -> Self {
        self.blockhash_window = window;
        self
    }

    pub fn with_fd_window(mut self, window: Option<u64>) -> Self {
        self.fd_window = window;
        self
    }

    /// Id of the ancestor at height `k`, for `k` below the block being built.
    pub fn ancestor_at(&self, k: u64) -> Option<BlockId> {
        if k >= self.height {
            return None;
        }
        self.tree.up(&self.parent, self.height - 1 - k).ok()
    }

    fn hash_in_window(&self, k: U256, window: Option<u64>) -> U256 {
        if k > U256::from(u64::MAX) {
            return U256::zero();
        }
        let k = k.as_u64();
        let lowest = window.map_or(0, |w| self.height.saturating_sub(w));
        if k < lowest {
            return U256::zero();
        }
        self.ancestor_at(k)
            .map_or(U256::zero(), |id| id.0.to_word())
    }

    pub fn blockhash(&self, k: U256) -> U256 {
        self.hash_in_window(k, Some(self.blockhash_window))
    }

    pub fn blockhash_fd(&self, k: U256) -> U256 {
        self.hash_in_window(k, self.fd_window)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxnStatus {
    Committed,
    Reverted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeashOutcome {
    NotLeashed,
    Passed,
    RevertedByLeash(LeashRevert),
}

/// Why a sequenced transaction reverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    Explicit,
    OutOfGas,
    ArithmeticOverflow,
    DivisionByZero,
    StackUnderflow,
    StackOverflow,
    BadJump(u32),
    InsufficientBalance,
    CalldataRange,
    NoCode(AccountId),
    ContractExists(AccountId),
    Leash(LeashRevert),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEvent {
    pub from: AccountId,
    pub to: AccountId,
    pub amount: U256,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub status: TxnStatus,
    pub gas_used: u64,
    pub return_data: Vec<u8>,
    pub leash_outcome: LeashOutcome,
    pub fault: Option<Fault>,
    /// Token movements of a committed transaction, including script-internal
    /// transfers. Empty when reverted. Fees are not listed.
    pub transfers: Vec<TransferEvent>,
    pub fee: U256,
}

impl Receipt {
    pub fn committed(&self) -> bool {
        self.status == TxnStatus::Committed
    }
}

/// Reasons a transaction is not sequenced at all.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum TxnError {
    #[error("bad signature")]
    BadSignature,
    #[error("bad nonce: expected {expected}, got {got}")]
    BadNonce { expected: U256, got: U256 },
    #[error("insufficient fee: need {required}, have {available}")]
    InsufficientFee { required: U256, available: U256 },
    #[error("calldata of {len} bytes exceeds {max}")]
    CalldataTooLong { len: usize, max: usize },
}

/// Result of running a contract outside the transaction wrapper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptOutcome {
    /// Post-state; equal to the input state when reverted.
    pub state: DbState,
    pub result: Result<Vec<u8>, (Vec<u8>, Fault)>,
    pub gas_used: u64,
    pub transfers: Vec<TransferEvent>,
}

pub fn execute_script(
    db: &DbState,
    contract: AccountId,
    calldata: &[u8],
    ctx: &BlockCtx<'_>,
    caller: AccountId,
    cfg: &VmConfig,
) -> ScriptOutcome {
    let mut state = db.clone();
    let mut machine = Machine::new(ctx, cfg);
    let result = machine
        .call(&mut state, contract, calldata, caller, 0)
        .map_err(Halt::into_parts);
    if result.is_err() {
        state = db.clone();
    }
    ScriptOutcome {
        state,
        result,
        gas_used: machine.gas_used,
        transfers: machine.transfers,
    }
}

/// Applies one transaction. Leash parameters carried as metadata are
/// checked before any script is loaded.
pub fn apply_txn(
    db: &DbState,
    txn: &SignedTxn,
    ctx: &BlockCtx<'_>,
    cfg: &VmConfig,
) -> Result<(DbState, Receipt), TxnError> {
    if !txn.verify_signature() {
        return Err(TxnError::BadSignature);
    }
    let sender = txn.sender();
    let expected = db.nonce(&sender);
    if txn.nonce() != expected {
        return Err(TxnError::BadNonce {
            expected,
            got: txn.nonce(),
        });
    }
    if txn.inner.max_fee < cfg.base_fee {
        return Err(TxnError::InsufficientFee {
            required: cfg.base_fee,
            available: txn.inner.max_fee,
        });
    }
    let available = db.balance(&sender);
    if available < cfg.base_fee {
        return Err(TxnError::InsufficientFee {
            required: cfg.base_fee,
            available,
        });
    }
    if let TxnBody::Call { calldata, .. } = txn.body() {
        if calldata.len() > cfg.max_calldata {
            return Err(TxnError::CalldataTooLong {
                len: calldata.len(),
                max: cfg.max_calldata,
            });
        }
    }

    // Sequencing: nonce and fee, kept even if the body reverts.
    let mut base = db.clone();
    move_balance(&mut base, sender, cfg.fee_sink, cfg.base_fee).expect("fee balance checked");
    let acct = base.account_mut(sender);
    acct.nonce = acct
        .nonce
        .checked_add(U256::one())
        .expect("nonce space exhausted");

    let reverted = |base: DbState, gas_used, return_data, leash_outcome, fault| {
        let receipt = Receipt {
            status: TxnStatus::Reverted,
            gas_used,
            return_data,
            leash_outcome,
            fault: Some(fault),
            transfers: Vec::new(),
            fee: cfg.base_fee,
        };
        (base, receipt)
    };

    let leash_outcome = match txn.leash() {
        None => LeashOutcome::NotLeashed,
        Some(params) => match leash_check(params, ctx) {
            LeashVerdict::Pass => LeashOutcome::Passed,
            LeashVerdict::Revert(reason) => {
                return Ok(reverted(
                    base,
                    0,
                    Vec::new(),
                    LeashOutcome::RevertedByLeash(reason),
                    Fault::Leash(reason),
                ));
            }
        },
    };

    let mut work = base.clone();
    let mut machine = Machine::new(ctx, cfg);
    let result: Result<Vec<u8>, (Vec<u8>, Fault)> = match txn.body() {
        TxnBody::Transfer { to, amount } => machine
            .transfer(&mut work, sender, *to, *amount)
            .map(|_| Vec::new())
            .map_err(|f| (Vec::new(), f)),
        TxnBody::Call { contract, calldata } => machine
            .call(&mut work, *contract, calldata, sender, 0)
            .map_err(Halt::into_parts),
        TxnBody::Deploy { script, endowment } => deploy(
            &mut work,
            &mut machine,
            sender,
            txn.nonce(),
            script,
            *endowment,
        )
        .map(|addr| addr.0.as_bytes().to_vec())
        .map_err(|f| (Vec::new(), f)),
    };

    Ok(match result {
        Ok(return_data) => {
            let receipt = Receipt {
                status: TxnStatus::Committed,
                gas_used: machine.gas_used,
                return_data,
                leash_outcome,
                fault: None,
                transfers: machine.transfers,
                fee: cfg.base_fee,
            };
            (work, receipt)
        }
        Err((data, fault)) => reverted(base, machine.gas_used, data, leash_outcome, fault),
    })
}

fn deploy(
    db: &mut DbState,
    machine: &mut Machine<'_, '_>,
    creator: AccountId,
    nonce: U256,
    script: &Script,
    endowment: U256,
) -> Result<AccountId, Fault> {
    let addr = AccountId::contract(&creator, nonce);
    if db.get(&addr).is_some_and(AccountState::is_contract) {
        return Err(Fault::ContractExists(addr));
    }
    let prior = db.balance(&addr);
    db.accounts
        .insert(addr, AccountState::contract(script.clone(), prior));
    machine.transfer(db, creator, addr, endowment)?;
    Ok(addr)
}

/// Outcome of applying a list of transactions left to right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceOutcome {
    pub state: DbState,
    pub receipts: Vec<Receipt>,
    /// Index and error of the first transaction that could not be sequenced.
    /// Processing stops there.
    pub halted: Option<(usize, TxnError)>,
}

pub fn apply_sequence(
    db: &DbState,
    txns: &[SignedTxn],
    ctx: &BlockCtx<'_>,
    cfg: &VmConfig,
) -> SequenceOutcome {
    let mut state = db.clone();
    let mut receipts = Vec::with_capacity(txns.len());
    for (i, t) in txns.iter().enumerate() {
        match apply_txn(&state, t, ctx, cfg) {
            Ok((next, receipt)) => {
                state = next;
                receipts.push(receipt);
            }
            Err(e) => {
                return SequenceOutcome {
                    state,
                    receipts,
                    halted: Some((i, e)),
                }
            }
        }
    }
    SequenceOutcome {
        state,
        receipts,
        halted: None,
    }
}

/// Result of executing a block body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockOutcome {
    pub state: DbState,
    /// Receipts of sequenced transactions, paired with their index in the
    /// body.
    pub receipts: Vec<(usize, Receipt)>,
    /// Transactions that could not be sequenced; they have no effect.
    pub dropped: Vec<(usize, TxnError)>,
}

/// Block semantics: like [`apply_sequence`] but skips, rather than stops
/// at, transactions that cannot be sequenced.
pub fn execute_block(
    db: &DbState,
    txns: &[SignedTxn],
    ctx: &BlockCtx<'_>,
    cfg: &VmConfig,
) -> BlockOutcome {
    let mut state = db.clone();
    let mut receipts = Vec::new();
    let mut dropped = Vec::new();
    for (i, t) in txns.iter().enumerate() {
        match apply_txn(&state, t, ctx, cfg) {
            Ok((next, receipt)) => {
                state = next;
                receipts.push((i, receipt));
            }
            Err(e) => dropped.push((i, e)),
        }
    }
    BlockOutcome {
        state,
        receipts,
        dropped,
    }
}
