//! Ledgers: a block tree together with the post-state of every executed
//! block, and an honest producer that rotates committees on a schedule.

use std::collections::{BTreeMap, HashMap};

use primitive_types::U256;

use crate::blocktree::{Block, BlockId, BlockTree, TreeError};
use crate::consensus::{
    draft_child, mint_block, register_transition, LightClientState, ValidatorSet,
};
use crate::hash::ForkId;
use crate::keys::Keypair;
use crate::leash::{
    gateway_address, gateway_encode, wrap_metadata, wrapper_address, LeashError, LeashMode,
    LeashParams,
};
use crate::state::{AccountId, DbState};
use crate::vm::txn::{SignedTxn, TxnBody, UnsignedTxn};
use crate::vm::{execute_block, BlockCtx, Receipt, TxnError, VmConfig, DEFAULT_BLOCKHASH_WINDOW};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("no executed state for block {0}")]
    UnknownState(BlockId),
    #[error("no validator set for epoch {0}")]
    NoValidators(u64),
}

#[derive(Debug, Clone)]
pub struct Produced {
    pub id: BlockId,
    /// Receipts of the included transactions, in block order.
    pub receipts: Vec<Receipt>,
    /// Proposals left out because they could not be sequenced.
    pub dropped: Vec<(SignedTxn, TxnError)>,
}

#[derive(Debug, Clone)]
pub struct Ledger {
    tree: BlockTree,
    states: HashMap<BlockId, DbState>,
    pub cfg: VmConfig,
    pub blockhash_window: u64,
}

impl Ledger {
    pub fn new(genesis_db: DbState, fork_id: ForkId, cfg: VmConfig) -> Self {
        let mut tree = BlockTree::new();
        let g = tree
            .insert_block(Block::genesis(fork_id, genesis_db.root()))
            .expect("empty tree accepts genesis");
        let mut states = HashMap::new();
        states.insert(g, genesis_db);
        Ledger {
            tree,
            states,
            cfg,
            blockhash_window: DEFAULT_BLOCKHASH_WINDOW,
        }
    }

    pub fn tree(&self) -> &BlockTree {
        &self.tree
    }

    pub fn genesis(&self) -> BlockId {
        self.tree.genesis().expect("ledger has genesis")
    }

    pub fn block(&self, id: &BlockId) -> Result<&Block, LedgerError> {
        Ok(self.tree.get(id)?)
    }

    /// Executed post-state of `id`. Blocks inserted with
    /// [`Ledger::insert_unexecuted`] have none.
    pub fn state(&self, id: &BlockId) -> Result<&DbState, LedgerError> {
        self.states.get(id).ok_or(LedgerError::UnknownState(*id))
    }

    pub fn ctx(&self, parent: BlockId, fork_id: ForkId) -> Result<BlockCtx<'_>, LedgerError> {
        Ok(BlockCtx::new(&self.tree, parent, fork_id)?.with_window(self.blockhash_window))
    }

    /// Runs `txn` as if it were the only transaction in a child of `parent`.
    pub fn simulate(
        &self,
        parent: BlockId,
        fork_id: ForkId,
        txn: &SignedTxn,
    ) -> Result<Result<(DbState, Receipt), TxnError>, LedgerError> {
        let db = self.state(&parent)?;
        let ctx = self.ctx(parent, fork_id)?;
        Ok(crate::vm::apply_txn(db, txn, &ctx, &self.cfg))
    }

    /// Executes the draft's transactions on the parent state, keeps the
    /// sequenced ones, commits the resulting root, signs and stores.
    pub fn produce(&mut self, mut draft: Block, keys: &[Keypair]) -> Result<Produced, LedgerError> {
        let parent = draft.parent.expect("produced blocks have a parent");
        let db = self.state(&parent)?;
        let ctx = self.ctx(parent, draft.fork_id)?;
        let out = execute_block(db, &draft.txs, &ctx, &self.cfg);
        let mut keep = Vec::with_capacity(out.receipts.len());
        let mut receipts = Vec::with_capacity(out.receipts.len());
        for (i, r) in out.receipts {
            keep.push(draft.txs[i].clone());
            receipts.push(r);
        }
        let dropped = out
            .dropped
            .into_iter()
            .map(|(i, e)| (draft.txs[i].clone(), e))
            .collect();
        draft.txs = keep;
        draft.state_root = out.state.root();
        let block = mint_block(keys, draft);
        let id = self.tree.insert_block(block)?;
        self.states.insert(id, out.state);
        Ok(Produced {
            id,
            receipts,
            dropped,
        })
    }

    /// Stores a block without executing it, optionally with the state the
    /// inserter claims it commits to.
    pub fn insert_unexecuted(
        &mut self,
        block: Block,
        claimed: Option<DbState>,
    ) -> Result<BlockId, LedgerError> {
        let id = self.tree.insert_block(block)?;
        if let Some(db) = claimed {
            self.states.insert(id, db);
        }
        Ok(id)
    }
}

/// Key plus locally tracked nonce for an externally owned account.
#[derive(Debug, Clone)]
pub struct Wallet {
    pub key: Keypair,
    pub account: AccountId,
    pub nonce: U256,
    pub max_fee: U256,
}

impl Wallet {
    pub fn new(label: &str) -> Self {
        let key = Keypair::derive(label);
        let account = AccountId::of_key(&key.public());
        Wallet {
            key,
            account,
            nonce: U256::zero(),
            max_fee: U256::from(10),
        }
    }

    pub fn unsigned(&self, body: TxnBody, fork_id: ForkId) -> UnsignedTxn {
        UnsignedTxn::new(self.account, self.nonce, body, fork_id, self.max_fee)
    }

    /// Signs with the current nonce and advances it.
    pub fn sign(&mut self, body: TxnBody, fork_id: ForkId) -> SignedTxn {
        let t = self.unsigned(body, fork_id).sign(&self.key);
        self.nonce += U256::one();
        t
    }

    pub fn sign_leashed(
        &mut self,
        body: TxnBody,
        params: LeashParams,
    ) -> Result<SignedTxn, LeashError> {
        let t = wrap_metadata(self.unsigned(body, params.fork_id), params, &self.key)?;
        self.nonce += U256::one();
        Ok(t)
    }

    /// Leashed call of `target` in the given mode. Wrapper and gateway modes
    /// expect [`crate::leash::install_mode_contracts`] to have run.
    pub fn sign_leashed_call(
        &mut self,
        mode: LeashMode,
        target: AccountId,
        calldata: Vec<u8>,
        params: LeashParams,
        max_calldata: usize,
    ) -> Result<SignedTxn, LeashError> {
        match mode {
            LeashMode::Metadata => self.sign_leashed(
                TxnBody::Call {
                    contract: target,
                    calldata,
                },
                params,
            ),
            LeashMode::Wrapper(lookup) => {
                let contract = wrapper_address(target, &params, lookup);
                Ok(self.sign(TxnBody::Call { contract, calldata }, params.fork_id))
            }
            LeashMode::Gateway => {
                let calldata = gateway_encode(&params, target, &calldata, max_calldata)?;
                Ok(self.sign(
                    TxnBody::Call {
                        contract: gateway_address(),
                        calldata,
                    },
                    params.fork_id,
                ))
            }
        }
    }
}

/// Honest chain producer. Committees have `committee_size` members and
/// rotate every `blocks_per_epoch` blocks: the block at a height divisible
/// by `blocks_per_epoch` announces the next committee.
#[derive(Debug, Clone)]
pub struct HonestChain {
    pub ledger: Ledger,
    pub validators: BTreeMap<u64, ValidatorSet>,
    pub tip: BlockId,
    pub committee_size: usize,
    pub blocks_per_epoch: u64,
    pub validator_prefix: String,
}

impl HonestChain {
    pub fn new(
        genesis_db: DbState,
        fork_id: ForkId,
        cfg: VmConfig,
        committee_size: usize,
        blocks_per_epoch: u64,
        validator_prefix: &str,
    ) -> Self {
        let ledger = Ledger::new(genesis_db, fork_id, cfg);
        let mut validators = BTreeMap::new();
        validators.insert(
            0,
            ValidatorSet::generate(validator_prefix, 0, committee_size),
        );
        let tip = ledger.genesis();
        HonestChain {
            ledger,
            validators,
            tip,
            committee_size,
            blocks_per_epoch: blocks_per_epoch.max(1),
            validator_prefix: validator_prefix.to_string(),
        }
    }

    pub fn tip_block(&self) -> &Block {
        self.ledger.block(&self.tip).expect("tip is stored")
    }

    pub fn height(&self) -> u64 {
        self.tip_block().height
    }

    pub fn current_epoch(&self) -> u64 {
        self.tip_block().epoch
    }

    pub fn fork_id(&self) -> ForkId {
        self.tip_block().fork_id
    }

    pub fn validator_set(&self, epoch: u64) -> Result<&ValidatorSet, LedgerError> {
        self.validators
            .get(&epoch)
            .ok_or(LedgerError::NoValidators(epoch))
    }

    pub fn extend(&mut self, txs: Vec<SignedTxn>) -> Result<Produced, LedgerError> {
        let fork_id = self.fork_id();
        self.extend_on_fork(txs, fork_id)
    }

    /// Extends the tip, switching the chain's fork identity to `fork_id`
    /// from this block on.
    pub fn extend_on_fork(
        &mut self,
        txs: Vec<SignedTxn>,
        fork_id: ForkId,
    ) -> Result<Produced, LedgerError> {
        let parent = self.tip_block().clone();
        let mut draft = draft_child(self.tip, &parent);
        draft.txs = txs;
        draft.fork_id = fork_id;
        let set = self.validator_set(draft.epoch)?.clone();
        if draft.height % self.blocks_per_epoch == 0 {
            let next = ValidatorSet::generate(
                &self.validator_prefix,
                draft.epoch + 1,
                self.committee_size,
            );
            let rec =
                register_transition(&set.committee, next.committee.clone(), set.quorum_keys())
                    .expect("honest committee reaches quorum");
            draft.transition = Some(rec);
            self.validators.insert(draft.epoch + 1, next);
        }
        let produced = self.ledger.produce(draft, set.quorum_keys())?;
        self.tip = produced.id;
        Ok(produced)
    }

    /// Consensus path, genesis first.
    pub fn path(&self) -> Vec<BlockId> {
        self.ledger
            .tree()
            .path_from_genesis(&self.tip)
            .expect("tip is stored")
    }

    pub fn blocks(&self) -> Vec<Block> {
        self.path()
            .iter()
            .map(|id| self.ledger.block(id).unwrap().clone())
            .collect()
    }

    pub fn at_height(&self, h: u64) -> Option<BlockId> {
        let depth = self.height();
        (h <= depth).then(|| self.ledger.tree().up(&self.tip, depth - h).unwrap())
    }

    /// Light client trusting block `id` of this chain.
    pub fn client_at(
        &self,
        id: BlockId,
        recent_window: u64,
    ) -> Result<LightClientState, LedgerError> {
        let block = self.ledger.block(&id)?;
        let committee = &self.validator_set(block.epoch)?.committee;
        Ok(LightClientState::trusting(
            id,
            block,
            committee,
            recent_window,
        ))
    }
}
