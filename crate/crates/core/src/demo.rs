//! Built-in fixtures: the parity counterexample for schedule analysis and
//! the demo chain used for replay.

use std::collections::BTreeSet;

use primitive_types::U256;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocktree::{Block, BlockId, BlockTree};
use crate::chain::{HonestChain, Wallet};
use crate::hash::ForkId;
use crate::leash::LeashParams;
use crate::state::{AccountId, AccountState, DbState};
use crate::vm::contracts::{counter, parity_payout, parity_payout_calldata};
use crate::vm::script::Script;
use crate::vm::txn::{SignedTxn, TxnBody};
use crate::vm::{BlockCtx, VmConfig};

pub const PAYOUT: u64 = 1_000_000;

/// DB_1 and T = (t1, t2) for the state-dependence counterexample: t1 is an
/// odd deposit by Bob into the parity contract, t2 the owner-triggered
/// payout to the adversary.
#[derive(Debug, Clone)]
pub struct ParityFixture {
    pub tree: BlockTree,
    pub parent: BlockId,
    pub fork_id: ForkId,
    pub db: DbState,
    pub txns: Vec<SignedTxn>,
    pub adversary: BTreeSet<AccountId>,
    pub cfg: VmConfig,
}

impl ParityFixture {
    pub fn ctx(&self) -> BlockCtx<'_> {
        BlockCtx::new(&self.tree, self.parent, self.fork_id).expect("fixture parent is stored")
    }
}

pub fn parity_counterexample() -> ParityFixture {
    let fork_id = ForkId::named("main");
    let mut bob = Wallet::new("bob");
    let mut dave = Wallet::new("dave");
    let cobb = Wallet::new("cobb").account;
    let contract = AccountId::named("parity-contract");

    let mut db = DbState::new();
    db.accounts
        .insert(bob.account, AccountState::eoa(1_000.into()));
    db.accounts
        .insert(dave.account, AccountState::eoa(1_000.into()));
    db.accounts.insert(
        contract,
        AccountState::contract(parity_payout(dave.account), 10_000_000.into()),
    );

    let t1 = bob.sign(
        TxnBody::Transfer {
            to: contract,
            amount: 1.into(),
        },
        fork_id,
    );
    let t2 = dave.sign(
        TxnBody::Call {
            contract,
            calldata: parity_payout_calldata(cobb, PAYOUT.into()),
        },
        fork_id,
    );

    let mut tree = BlockTree::new();
    let parent = tree
        .insert_block(Block::genesis(fork_id, db.root()))
        .expect("fresh tree");
    ParityFixture {
        tree,
        parent,
        fork_id,
        db,
        txns: vec![t1, t2],
        adversary: [cobb].into_iter().collect(),
        cfg: VmConfig::default(),
    }
}

/// Stores `blockhash(number - 1)` at slot `number - 1`.
pub fn blockhash_recorder() -> Script {
    Script::parse(
        "push 1\n\
         blocknumber\n\
         sub\n\
         dup 1\n\
         blockhash\n\
         swap 1\n\
         sstore\n\
         return\n",
    )
    .expect("recorder assembles")
}

#[derive(Debug, Clone)]
pub struct DemoChain {
    /// Genesis first.
    pub blocks: Vec<Block>,
    pub genesis_state: DbState,
    /// Semantics the chain was produced under: the legacy `mod` defect.
    pub cfg: VmConfig,
    pub fork_id: ForkId,
    pub recorder: AccountId,
    pub parity: AccountId,
    pub adversary: AccountId,
    /// Block index and leash of the metadata-leashed transfer, if the chain
    /// is long enough to carry it.
    pub leashed: Option<(usize, LeashParams)>,
}

pub const DEMO_PAYOUT_BLOCKS: [usize; 3] = [5, 10, 15];
pub const DEMO_LEASH_ANCHOR: usize = 7;
pub const DEMO_LEASHED_BLOCK: usize = 9;

/// Chain of `n` blocks after genesis, produced under the legacy `mod`
/// semantics. The parity contract's balance makes the payout at block 5
/// behave differently once the defect is patched.
pub fn demo_chain(n: usize, seed: u64) -> DemoChain {
    let fork_id = ForkId::named("main");
    let cfg = VmConfig::legacy();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alice = Wallet::new("alice");
    let mut bob = Wallet::new("bob");
    let mut carol = Wallet::new("carol");
    let mut dave = Wallet::new("dave");
    let cobb = Wallet::new("cobb").account;
    let recorder = AccountId::named("blockhash-recorder");
    let count = AccountId::named("counter");
    let parity = AccountId::named("parity-contract");

    let mut db = DbState::new();
    for w in [&alice, &bob, &carol] {
        db.accounts
            .insert(w.account, AccountState::eoa(1_000_000.into()));
    }
    db.accounts
        .insert(dave.account, AccountState::eoa(1_000.into()));
    db.accounts.insert(
        recorder,
        AccountState::contract(blockhash_recorder(), 0.into()),
    );
    db.accounts
        .insert(count, AccountState::contract(counter(), 0.into()));
    // Even, but bit 1 set: the legacy mask reads it as odd.
    db.accounts.insert(
        parity,
        AccountState::contract(parity_payout(dave.account), 10_000_002.into()),
    );

    let mut chain = HonestChain::new(db.clone(), fork_id, cfg.clone(), 4, 5, "demo-validator");
    let mut leashed = None;
    for j in 1..=n {
        let mut txs = vec![
            bob.sign(
                TxnBody::Call {
                    contract: count,
                    calldata: vec![],
                },
                fork_id,
            ),
            bob.sign(
                TxnBody::Call {
                    contract: recorder,
                    calldata: vec![],
                },
                fork_id,
            ),
            carol.sign(
                TxnBody::Transfer {
                    to: bob.account,
                    amount: rng.gen_range(1u64..=1000).into(),
                },
                fork_id,
            ),
        ];
        if DEMO_PAYOUT_BLOCKS.contains(&j) {
            txs.push(dave.sign(
                TxnBody::Call {
                    contract: parity,
                    calldata: parity_payout_calldata(cobb, PAYOUT.into()),
                },
                fork_id,
            ));
        }
        if j == DEMO_LEASHED_BLOCK {
            let anchor = chain
                .at_height(DEMO_LEASH_ANCHOR as u64)
                .expect("anchor below tip");
            let params =
                LeashParams::anchored_at(chain.ledger.tree(), anchor, U256::from(10), fork_id)
                    .expect("anchor stored");
            txs.push(
                alice
                    .sign_leashed(
                        TxnBody::Transfer {
                            to: carol.account,
                            amount: 7.into(),
                        },
                        params,
                    )
                    .expect("well-formed leash"),
            );
            leashed = Some((j, params));
        }
        let produced = chain.extend(txs).expect("honest extension");
        debug_assert!(produced.dropped.is_empty());
    }
    DemoChain {
        blocks: chain.blocks(),
        genesis_state: db,
        cfg,
        fork_id,
        recorder,
        parity,
        adversary: cobb,
        leashed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::adversary_amounts;

    #[test]
    fn counterexample_amounts() {
        let f = parity_counterexample();
        let ctx = f.ctx();
        let full = adversary_amounts(&f.txns, &f.db, &ctx, &f.cfg, &f.adversary);
        assert_eq!(full.received, U256::one());
        let t2_only = adversary_amounts(&f.txns[1..], &f.db, &ctx, &f.cfg, &f.adversary);
        assert_eq!(t2_only.received, U256::from(PAYOUT));
        assert_eq!(full.sent, U256::zero());
    }

    #[test]
    fn demo_chain_is_deterministic() {
        let a = demo_chain(12, 3);
        let b = demo_chain(12, 3);
        assert_eq!(a.blocks, b.blocks);
        assert_eq!(a.blocks.len(), 13);
        assert!(a.leashed.is_some());
        let c = demo_chain(12, 4);
        assert_ne!(a.blocks, c.blocks);
    }
}
