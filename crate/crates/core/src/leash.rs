//! Short leashes: tie a transaction to an anchor block so that it only takes
//! effect in blocks descending from the anchor within a bounded distance and
//! carrying the expected fork identity.
//!
//! Three enforcement modes share one predicate:
//!
//! * metadata: parameters ride in the signed transaction and
//!   [`crate::vm::apply_txn`] checks them before loading any code;
//! * wrapper: [`wrap_script`] emits a per-anchor contract that checks the
//!   parameters with `blocknumber`/`blockhash(_fd)`/`chainid` and then calls
//!   the target;
//! * gateway: one shared contract ([`gateway_contract`]) reads the parameters
//!   from a fixed calldata prefix and forwards the rest to the target.
//!
//! # Gateway calldata layout (format version 1)
//!
//! Seven big-endian 32-byte words (224 bytes), then the inner calldata:
//!
//! | offset | word                                   |
//! |--------|----------------------------------------|
//! | 0      | format version (= 1)                   |
//! | 32     | fork id                                |
//! | 64     | anchor height `i`                      |
//! | 96     | anchor hash `v`                        |
//! | 128    | leash length `l`                       |
//! | 160    | target account                         |
//! | 192    | reserved, must be zero                 |
//!
//! Return data (and revert data) starts with three words (96 bytes):
//! `[status, 64, length]` followed by `length` bytes of inner return data.
//! Status 1 is success; failure codes are listed on [`GatewayStatus`].

use primitive_types::U256;
use serde::{Deserialize, Serialize};

use crate::blocktree::{BlockId, BlockTree, TreeError};
use crate::codec::Encoder;
use crate::hash::{tagged_hash, word_to_bytes, Digest, ForkId};
use crate::keys::Keypair;
use crate::state::{AccountId, AccountState, DbState};
use crate::vm::script::Script;
use crate::vm::txn::{SignedTxn, UnsignedTxn};
use crate::vm::{BlockCtx, LeashOutcome, Receipt};

pub const GATEWAY_FORMAT_VERSION: u64 = 1;
pub const GATEWAY_PREFIX_LEN: usize = 224;
pub const GATEWAY_RETURN_PREFIX_LEN: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeashParams {
    pub anchor_height: u64,
    pub anchor_hash: Digest,
    pub length: U256,
    pub fork_id: ForkId,
}

impl LeashParams {
    /// Leash anchored at `anchor` as seen in `tree`.
    pub fn anchored_at(
        tree: &BlockTree,
        anchor: BlockId,
        length: U256,
        fork_id: ForkId,
    ) -> Result<Self, TreeError> {
        Ok(LeashParams {
            anchor_height: tree.depth(&anchor)?,
            anchor_hash: anchor.0,
            length,
            fork_id,
        })
    }

    /// End of the valid window, `i + l`, or `None` on overflow.
    pub fn window_end(&self) -> Option<U256> {
        U256::from(self.anchor_height).checked_add(self.length)
    }

    pub fn is_well_formed(&self) -> bool {
        self.window_end().is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeashRevert {
    ForkMismatch,
    AnchorInFuture,
    LeashExpired,
    AnchorHashMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeashVerdict {
    Pass,
    Revert(LeashRevert),
}

impl LeashVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, LeashVerdict::Pass)
    }
}

/// The leash predicate, evaluated for a transaction executing in the child
/// of `ctx.parent`.
///
/// Checks run in a fixed order shared by all modes: fork identity, empty
/// window (`l == 0` or `i + l` overflowing), anchor above the parent, window
/// end reached, anchor hash.
pub fn leash_check(params: &LeashParams, ctx: &BlockCtx<'_>) -> LeashVerdict {
    use LeashRevert::*;
    if params.fork_id != ctx.fork_id {
        return LeashVerdict::Revert(ForkMismatch);
    }
    let Some(end) = params.window_end().filter(|_| !params.length.is_zero()) else {
        return LeashVerdict::Revert(LeashExpired);
    };
    let Ok(depth) = ctx.tree.depth(&ctx.parent) else {
        return LeashVerdict::Revert(AnchorHashMismatch);
    };
    if depth < params.anchor_height {
        return LeashVerdict::Revert(AnchorInFuture);
    }
    if U256::from(depth) >= end {
        return LeashVerdict::Revert(LeashExpired);
    }
    match ctx.tree.up(&ctx.parent, depth - params.anchor_height) {
        Ok(anchor) if anchor.0 == params.anchor_hash => LeashVerdict::Pass,
        _ => LeashVerdict::Revert(AnchorHashMismatch),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LeashError {
    #[error("malformed leash parameters: {0}")]
    MalformedParams(&'static str),
    #[error("inner calldata of {len} bytes exceeds the {max}-byte budget")]
    CalldataTooLong { len: usize, max: usize },
    #[error("malformed gateway prefix: {0}")]
    MalformedPrefix(&'static str),
}

/// Attaches `params` as signed metadata.
pub fn wrap_metadata(
    mut txn: UnsignedTxn,
    params: LeashParams,
    key: &Keypair,
) -> Result<SignedTxn, LeashError> {
    if !params.is_well_formed() {
        return Err(LeashError::MalformedParams(
            "anchor height plus length overflows",
        ));
    }
    if params.fork_id != txn.fork_id {
        return Err(LeashError::MalformedParams(
            "leash fork id differs from transaction fork id",
        ));
    }
    txn.leash = Some(params);
    Ok(txn.sign(key))
}

/// Which block-hash instruction a wrapper uses to look up the anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnchorLookup {
    /// `blockhash`: zero beyond the block-hash window.
    Windowed,
    /// `blockhash_fd`: full domain.
    FullDomain,
}

/// Status word carried in wrapper and gateway return/revert data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GatewayStatus {
    Ok,
    Malformed,
    BadVersion,
    Leash(LeashRevert),
    NoSuchTarget,
    InnerReverted,
}

impl GatewayStatus {
    pub fn code(&self) -> u64 {
        match self {
            GatewayStatus::Ok => 1,
            GatewayStatus::Malformed => 0x10,
            GatewayStatus::BadVersion => 0x11,
            GatewayStatus::Leash(LeashRevert::ForkMismatch) => 0x12,
            GatewayStatus::Leash(LeashRevert::AnchorInFuture) => 0x13,
            GatewayStatus::Leash(LeashRevert::LeashExpired) => 0x14,
            GatewayStatus::Leash(LeashRevert::AnchorHashMismatch) => 0x15,
            GatewayStatus::NoSuchTarget => 0x16,
            GatewayStatus::InnerReverted => 0x17,
        }
    }

    pub fn from_code(code: U256) -> Option<Self> {
        if code > U256::from(u64::MAX) {
            return None;
        }
        Some(match code.as_u64() {
            1 => GatewayStatus::Ok,
            0x10 => GatewayStatus::Malformed,
            0x11 => GatewayStatus::BadVersion,
            0x12 => GatewayStatus::Leash(LeashRevert::ForkMismatch),
            0x13 => GatewayStatus::Leash(LeashRevert::AnchorInFuture),
            0x14 => GatewayStatus::Leash(LeashRevert::LeashExpired),
            0x15 => GatewayStatus::Leash(LeashRevert::AnchorHashMismatch),
            0x16 => GatewayStatus::NoSuchTarget,
            0x17 => GatewayStatus::InnerReverted,
            _ => return None,
        })
    }
}

const FAIL_TAIL: &str = "fail:\n\
                         emit\n\
                         push 64\n\
                         emit\n\
                         push 0\n\
                         emit\n\
                         revert\n";

fn fail_stubs() -> String {
    let mut s = String::new();
    for (label, status) in [
        ("malformed", GatewayStatus::Malformed),
        ("bad_version", GatewayStatus::BadVersion),
        (
            "fork_mismatch",
            GatewayStatus::Leash(LeashRevert::ForkMismatch),
        ),
        ("future", GatewayStatus::Leash(LeashRevert::AnchorInFuture)),
        ("expired", GatewayStatus::Leash(LeashRevert::LeashExpired)),
        (
            "mismatch",
            GatewayStatus::Leash(LeashRevert::AnchorHashMismatch),
        ),
        ("no_target", GatewayStatus::NoSuchTarget),
    ] {
        s.push_str(&format!(
            "{label}:\npush {:#x}\njump @fail\n",
            status.code()
        ));
    }
    s.push_str(FAIL_TAIL);
    s
}

/// Forwarding tail shared by wrapper and gateway: expects `[len, off, target]`
/// on the stack.
const FORWARD: &str = "call\n\
                       iszero\n\
                       jumpi @inner_failed\n\
                       push 1\n\
                       emit\n\
                       push 64\n\
                       emit\n\
                       returndatasize\n\
                       emit\n\
                       emitreturndata\n\
                       return\n\
                       inner_failed:\n\
                       push 0x17\n\
                       emit\n\
                       push 64\n\
                       emit\n\
                       returndatasize\n\
                       emit\n\
                       emitreturndata\n\
                       revert\n";

/// Per-anchor wrapper contract: checks the leash, then calls `target` with
/// the wrapper's own calldata. Output uses the gateway status prefix.
pub fn wrap_script(target: AccountId, params: &LeashParams, lookup: AnchorLookup) -> Script {
    let mut s = String::new();
    s.push_str(&format!(
        "chainid\npush {:#x}\neq\niszero\njumpi @fork_mismatch\n",
        params.fork_id.to_word()
    ));
    match params.window_end().filter(|_| !params.length.is_zero()) {
        None => s.push_str("jump @expired\n"),
        Some(end) => {
            let i = params.anchor_height;
            let hash_op = match lookup {
                AnchorLookup::Windowed => "blockhash",
                AnchorLookup::FullDomain => "blockhash_fd",
            };
            s.push_str(&format!(
                "push {i}\npush 1\nblocknumber\nsub\nlt\njumpi @future\n\
                 push {end:#x}\npush 1\nblocknumber\nsub\nlt\niszero\njumpi @expired\n\
                 push {i}\n{hash_op}\npush {v:#x}\neq\niszero\njumpi @mismatch\n\
                 push {target:#x}\ncodeexists\niszero\njumpi @no_target\n\
                 calldatasize\npush 0\npush {target:#x}\n",
                v = params.anchor_hash.to_word(),
                target = target.to_word(),
            ));
            s.push_str(FORWARD);
        }
    }
    s.push_str(&fail_stubs());
    Script::parse(&s).expect("wrapper assembles")
}

/// Well-known account of the shared gateway contract.
pub fn gateway_address() -> AccountId {
    AccountId::named("leash-gateway")
}

/// The generic gateway contract.
pub fn gateway_contract() -> Script {
    let mut s = format!(
        "push 224\n\
         calldatasize\n\
         lt\n\
         jumpi @malformed\n\
         push 192\n\
         calldataload\n\
         jumpi @malformed\n\
         push 0\n\
         calldataload\n\
         push {version}\n\
         eq\n\
         iszero\n\
         jumpi @bad_version\n\
         push 32\n\
         calldataload\n\
         chainid\n\
         eq\n\
         iszero\n\
         jumpi @fork_mismatch\n\
         push 128\n\
         calldataload\n\
         iszero\n\
         jumpi @expired\n\
         push 64\n\
         calldataload\n\
         push {max:#x}\n\
         sub\n\
         push 128\n\
         calldataload\n\
         gt\n\
         jumpi @expired\n\
         push 64\n\
         calldataload\n\
         push 1\n\
         blocknumber\n\
         sub\n\
         lt\n\
         jumpi @future\n\
         push 128\n\
         calldataload\n\
         push 64\n\
         calldataload\n\
         add\n\
         push 1\n\
         blocknumber\n\
         sub\n\
         lt\n\
         iszero\n\
         jumpi @expired\n\
         push 64\n\
         calldataload\n\
         blockhash_fd\n\
         push 96\n\
         calldataload\n\
         eq\n\
         iszero\n\
         jumpi @mismatch\n\
         push 160\n\
         calldataload\n\
         codeexists\n\
         iszero\n\
         jumpi @no_target\n\
         push 224\n\
         calldatasize\n\
         sub\n\
         push 224\n\
         push 160\n\
         calldataload\n",
        version = GATEWAY_FORMAT_VERSION,
        max = U256::MAX,
    );
    s.push_str(FORWARD);
    s.push_str(&fail_stubs());
    Script::parse(&s).expect("gateway assembles")
}

/// Builds gateway calldata: 224-byte prefix followed by `inner`.
pub fn gateway_encode(
    params: &LeashParams,
    target: AccountId,
    inner: &[u8],
    max_calldata: usize,
) -> Result<Vec<u8>, LeashError> {
    let budget = max_calldata.saturating_sub(GATEWAY_PREFIX_LEN);
    if inner.len() > budget {
        return Err(LeashError::CalldataTooLong {
            len: inner.len(),
            max: budget,
        });
    }
    let mut out = Vec::with_capacity(GATEWAY_PREFIX_LEN + inner.len());
    out.extend_from_slice(&word_to_bytes(GATEWAY_FORMAT_VERSION.into()));
    out.extend_from_slice(params.fork_id.0.as_bytes());
    out.extend_from_slice(&word_to_bytes(params.anchor_height.into()));
    out.extend_from_slice(params.anchor_hash.as_bytes());
    out.extend_from_slice(&word_to_bytes(params.length));
    out.extend_from_slice(target.0.as_bytes());
    out.extend_from_slice(&[0u8; 32]);
    out.extend_from_slice(inner);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayCall {
    pub params: LeashParams,
    pub target: AccountId,
    pub inner: Vec<u8>,
}

pub fn gateway_decode(bytes: &[u8]) -> Result<GatewayCall, LeashError> {
    if bytes.len() < GATEWAY_PREFIX_LEN {
        return Err(LeashError::MalformedPrefix("shorter than 224 bytes"));
    }
    let word = |i: usize| U256::from_big_endian(&bytes[i * 32..(i + 1) * 32]);
    let digest = |i: usize| Digest(bytes[i * 32..(i + 1) * 32].try_into().unwrap());
    if word(0) != U256::from(GATEWAY_FORMAT_VERSION) {
        return Err(LeashError::MalformedPrefix("unsupported format version"));
    }
    if word(2) > U256::from(u64::MAX) {
        return Err(LeashError::MalformedPrefix("anchor height exceeds 64 bits"));
    }
    if !word(6).is_zero() {
        return Err(LeashError::MalformedPrefix("reserved word is not zero"));
    }
    Ok(GatewayCall {
        params: LeashParams {
            anchor_height: word(2).as_u64(),
            anchor_hash: digest(3),
            length: word(4),
            fork_id: ForkId(digest(1)),
        },
        target: AccountId(digest(5)),
        inner: bytes[GATEWAY_PREFIX_LEN..].to_vec(),
    })
}

/// Splits gateway/wrapper output into its status and inner bytes.
pub fn decode_status_prefix(data: &[u8]) -> Option<(GatewayStatus, Vec<u8>)> {
    if data.len() < GATEWAY_RETURN_PREFIX_LEN {
        return None;
    }
    let word = |i: usize| U256::from_big_endian(&data[i * 32..(i + 1) * 32]);
    let status = GatewayStatus::from_code(word(0))?;
    if word(1) != U256::from(64) {
        return None;
    }
    let len = word(2);
    let body = &data[GATEWAY_RETURN_PREFIX_LEN..];
    if len != U256::from(body.len()) {
        return None;
    }
    Some((status, body.to_vec()))
}

/// Account at which the wrapper for `(target, params, lookup)` is installed.
pub fn wrapper_address(target: AccountId, params: &LeashParams, lookup: AnchorLookup) -> AccountId {
    let mut enc = Encoder::new();
    enc.put(&target).put(params).u8(lookup as u8);
    AccountId(tagged_hash(
        b"leashsim/wrapper-address",
        &[&enc.into_bytes()],
    ))
}

/// Installs the gateway and the wrappers for `(target, params)` so every
/// mode can run against the same pre-state.
pub fn install_mode_contracts(db: &mut DbState, target: AccountId, params: &LeashParams) {
    db.accounts
        .entry(gateway_address())
        .or_insert_with(|| AccountState::contract(gateway_contract(), U256::zero()));
    for lookup in [AnchorLookup::Windowed, AnchorLookup::FullDomain] {
        db.accounts
            .entry(wrapper_address(target, params, lookup))
            .or_insert_with(|| {
                AccountState::contract(wrap_script(target, params, lookup), U256::zero())
            });
    }
}

/// Enforcement mode, for comparing verdicts across modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeashMode {
    Metadata,
    Wrapper(AnchorLookup),
    Gateway,
}

/// What a receipt says about the leash, whatever the mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservedVerdict {
    Pass,
    Revert(LeashRevert),
    /// Reverted for a reason other than the leash.
    OtherRevert,
}

pub fn observed_verdict(mode: LeashMode, receipt: &Receipt) -> ObservedVerdict {
    match mode {
        LeashMode::Metadata => match receipt.leash_outcome {
            LeashOutcome::RevertedByLeash(r) => ObservedVerdict::Revert(r),
            _ if receipt.committed() => ObservedVerdict::Pass,
            _ => ObservedVerdict::OtherRevert,
        },
        LeashMode::Wrapper(_) | LeashMode::Gateway => {
            if receipt.committed() {
                return ObservedVerdict::Pass;
            }
            match decode_status_prefix(&receipt.return_data) {
                Some((GatewayStatus::Leash(r), _)) => ObservedVerdict::Revert(r),
                _ => ObservedVerdict::OtherRevert,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocktree::Block;
    use crate::hash::sha256;
    use std::collections::BTreeMap;

    fn fork() -> ForkId {
        ForkId::named("main")
    }

    fn chain(n: u64) -> (BlockTree, Vec<BlockId>) {
        let mut tree = BlockTree::new();
        let mut ids = vec![tree
            .insert_block(Block::genesis(fork(), Digest::ZERO))
            .unwrap()];
        for h in 1..n {
            let b = Block {
                parent: Some(*ids.last().unwrap()),
                height: h,
                epoch: 0,
                fork_id: fork(),
                txs: vec![],
                transition: None,
                state_root: sha256(&h.to_be_bytes()),
                committee_sigs: BTreeMap::new(),
            };
            ids.push(tree.insert_block(b).unwrap());
        }
        (tree, ids)
    }

    fn params(tree: &BlockTree, anchor: BlockId, l: u64) -> LeashParams {
        LeashParams::anchored_at(tree, anchor, l.into(), fork()).unwrap()
    }

    #[test]
    fn zero_length_always_expires() {
        let (tree, ids) = chain(6);
        let ctx = BlockCtx::new(&tree, ids[5], fork()).unwrap();
        for a in &ids {
            assert_eq!(
                leash_check(&params(&tree, *a, 0), &ctx),
                LeashVerdict::Revert(LeashRevert::LeashExpired)
            );
        }
        // Anchor above the parent, still zero-length.
        let ctx_low = BlockCtx::new(&tree, ids[1], fork()).unwrap();
        assert_eq!(
            leash_check(&params(&tree, ids[4], 0), &ctx_low),
            LeashVerdict::Revert(LeashRevert::LeashExpired)
        );
    }

    #[test]
    fn anchor_at_parent_with_length_one_passes() {
        let (tree, ids) = chain(6);
        let ctx = BlockCtx::new(&tree, ids[5], fork()).unwrap();
        assert_eq!(
            leash_check(&params(&tree, ids[5], 1), &ctx),
            LeashVerdict::Pass
        );
        // One block later the window [5, 6) is exhausted.
        let (tree2, ids2) = chain(7);
        let ctx2 = BlockCtx::new(&tree2, ids2[6], fork()).unwrap();
        assert_eq!(
            leash_check(&params(&tree2, ids2[5], 1), &ctx2),
            LeashVerdict::Revert(LeashRevert::LeashExpired)
        );
    }

    #[test]
    fn side_branch_anchor_mismatches() {
        let (mut tree, ids) = chain(6);
        let side = Block {
            parent: Some(ids[2]),
            height: 3,
            epoch: 0,
            fork_id: fork(),
            txs: vec![],
            transition: None,
            state_root: sha256(b"bogus"),
            committee_sigs: BTreeMap::new(),
        };
        let side_id = tree.insert_block(side).unwrap();
        let ctx = BlockCtx::new(&tree, ids[5], fork()).unwrap();
        assert_eq!(
            leash_check(&params(&tree, side_id, 10), &ctx),
            LeashVerdict::Revert(LeashRevert::AnchorHashMismatch)
        );
        assert_eq!(
            leash_check(&params(&tree, ids[3], 10), &ctx),
            LeashVerdict::Pass
        );
    }

    #[test]
    fn other_reasons() {
        let (tree, ids) = chain(6);
        let ctx = BlockCtx::new(&tree, ids[2], fork()).unwrap();
        assert_eq!(
            leash_check(&params(&tree, ids[4], 10), &ctx),
            LeashVerdict::Revert(LeashRevert::AnchorInFuture)
        );
        let mut p = params(&tree, ids[1], 10);
        p.fork_id = ForkId::named("other");
        assert_eq!(
            leash_check(&p, &ctx),
            LeashVerdict::Revert(LeashRevert::ForkMismatch)
        );
        let mut p = params(&tree, ids[1], 10);
        p.length = U256::MAX;
        assert_eq!(
            leash_check(&p, &ctx),
            LeashVerdict::Revert(LeashRevert::LeashExpired)
        );
    }

    #[test]
    fn wrap_metadata_rejects_malformed() {
        let k = Keypair::derive("alice");
        let t = UnsignedTxn::new(
            AccountId::of_key(&k.public()),
            0.into(),
            crate::vm::txn::TxnBody::Transfer {
                to: AccountId::named("bob"),
                amount: 1.into(),
            },
            fork(),
            10.into(),
        );
        let bad = LeashParams {
            anchor_height: 5,
            anchor_hash: Digest::ZERO,
            length: U256::MAX,
            fork_id: fork(),
        };
        assert!(matches!(
            wrap_metadata(t.clone(), bad, &k),
            Err(LeashError::MalformedParams(_))
        ));
        let other_fork = LeashParams {
            length: 3.into(),
            fork_id: ForkId::named("x"),
            ..bad
        };
        assert!(matches!(
            wrap_metadata(t.clone(), other_fork, &k),
            Err(LeashError::MalformedParams(_))
        ));
        let ok = LeashParams {
            length: 3.into(),
            ..bad
        };
        let s = wrap_metadata(t, ok, &k).unwrap();
        assert!(s.verify_signature());
        assert_eq!(s.leash(), Some(&ok));
    }

    #[test]
    fn gateway_prefix_layout() {
        let p = LeashParams {
            anchor_height: 0x0102,
            anchor_hash: sha256(b"v"),
            length: 77.into(),
            fork_id: fork(),
        };
        let target = AccountId::named("counter");
        let enc = gateway_encode(&p, target, b"inner", 4096).unwrap();
        assert_eq!(enc.len(), GATEWAY_PREFIX_LEN + 5);
        assert_eq!(&enc[..32], &word_to_bytes(1.into()));
        assert_eq!(&enc[32..64], fork().0.as_bytes());
        assert_eq!(&enc[94..96], &[0x01, 0x02]);
        assert_eq!(&enc[96..128], p.anchor_hash.as_bytes());
        assert_eq!(enc[159], 77);
        assert_eq!(&enc[160..192], target.0.as_bytes());
        assert_eq!(&enc[192..224], &[0u8; 32]);
        assert_eq!(&enc[224..], b"inner");

        let dec = gateway_decode(&enc).unwrap();
        assert_eq!(
            dec,
            GatewayCall {
                params: p,
                target,
                inner: b"inner".to_vec()
            }
        );

        assert!(matches!(
            gateway_encode(&p, target, &[0; 4000], 4096),
            Err(LeashError::CalldataTooLong { .. })
        ));
        assert!(gateway_decode(&enc[..100]).is_err());
        let mut bad = enc.clone();
        bad[223] = 1;
        assert!(gateway_decode(&bad).is_err());
        let mut bad = enc;
        bad[31] = 2;
        assert!(gateway_decode(&bad).is_err());
    }

    #[test]
    fn status_codes_roundtrip() {
        use GatewayStatus::*;
        for s in [
            Ok,
            Malformed,
            BadVersion,
            Leash(LeashRevert::ForkMismatch),
            Leash(LeashRevert::AnchorInFuture),
            Leash(LeashRevert::LeashExpired),
            Leash(LeashRevert::AnchorHashMismatch),
            NoSuchTarget,
            InnerReverted,
        ] {
            assert_eq!(GatewayStatus::from_code(s.code().into()), Some(s));
        }
        assert_eq!(GatewayStatus::from_code(0.into()), None);
    }

    #[test]
    fn scripts_assemble() {
        let (tree, ids) = chain(3);
        assert!(!gateway_contract().is_empty());
        for l in [0u64, 5] {
            for lookup in [AnchorLookup::Windowed, AnchorLookup::FullDomain] {
                assert!(
                    !wrap_script(AccountId::named("t"), &params(&tree, ids[1], l), lookup)
                        .is_empty()
                );
            }
        }
    }
}
