//! Long-range attack scenarios: Alice sleeps, Cobb collects old committee
//! keys, forges a side chain that Alice's light client accepts, and shows
//! her whatever state he likes. Her proposals are then submitted to the
//! consensus chain and the harm is read off Cobb's balance there.
//!
//! The victim is built from a [`PreSleepView`] and afterwards sees only
//! [`Presentation`]s produced by the adversary. It holds no reference to the
//! honest chain, and the runner checks that every message it consumed was
//! one the adversary emitted.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use primitive_types::U256;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocktree::{Block, BlockId, BlockTree, TreeError};
use crate::chain::{HonestChain, LedgerError, Produced, Wallet};
use crate::consensus::{
    child_epoch, draft_child, leakable_epochs, light_verify, mint_block, Committee,
    LightClientState, LightVerdict, RejectReason, TransitionRecord, ValidatorSet,
};
use crate::hash::{Digest, ForkId};
use crate::keys::Keypair;
use crate::leash::LeashParams;
use crate::scenario::{
    epoch_at, AdversarySection, ChainSection, ClaimMode, ConfigError, ExpectSection,
    HardForkSection, HardForkVariant, Scenario, ScenarioKind, VictimSection, SCENARIO_FORMAT,
};
use crate::state::{prove, verify, AccountId, AccountState, DbState, LeafValue, StateProof};
use crate::vm::contracts::{flag_register, word_calldata};
use crate::vm::txn::{SignedTxn, TxnBody};
use crate::vm::{Receipt, VmConfig};

pub const REPORT_FORMAT: &str = "leashsim-report/1";
/// Registry slot the victim's payment decision depends on.
pub const REGISTRY_SLOT: u64 = 0;
const VALIDATOR_PREFIX: &str = "validator";
const ADVERSARY_PREFIX: &str = "cobb-committee";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdversaryError {
    #[error("leaked keys for epoch {epoch} give {have} signatures, quorum needs {need}")]
    InsufficientKeys {
        epoch: u64,
        have: usize,
        need: usize,
    },
    #[error(
        "proof for {account} (address {address:?}) does not verify against the tip's state root"
    )]
    ProofRejected {
        account: AccountId,
        address: Option<U256>,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("scenario assertion failed: {0}")]
    Assertion(String),
}

impl From<LedgerError> for ScenarioError {
    fn from(e: LedgerError) -> Self {
        ScenarioError::Adversary(e.into())
    }
}

impl From<TreeError> for ScenarioError {
    fn from(e: TreeError) -> Self {
        ScenarioError::Adversary(e.into())
    }
}

/// Signing keys the adversary holds, by epoch.
#[derive(Debug, Clone, Default)]
pub struct KeyStore {
    by_epoch: BTreeMap<u64, Vec<Keypair>>,
}

impl KeyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, epoch: u64, keys: impl IntoIterator<Item = Keypair>) {
        let slot = self.by_epoch.entry(epoch).or_default();
        for k in keys {
            if !slot.iter().any(|have| have.public() == k.public()) {
                slot.push(k);
            }
        }
    }

    pub fn epochs(&self) -> impl Iterator<Item = u64> + '_ {
        self.by_epoch.keys().copied()
    }

    /// Held keys that are members of `committee`.
    pub fn signers(&self, committee: &Committee) -> Vec<Keypair> {
        self.by_epoch
            .values()
            .flatten()
            .filter(|k| committee.contains(&k.public()))
            .fold(Vec::new(), |mut acc: Vec<Keypair>, k| {
                if !acc.iter().any(|a| a.public() == k.public()) {
                    acc.push(k.clone());
                }
                acc
            })
    }
}

/// What the forged blocks look like.
#[derive(Debug, Clone)]
pub struct SidePlan {
    pub blocks: u64,
    /// Root every forged block commits to. It need not be the result of
    /// executing anything.
    pub state_root: Digest,
    /// Fork identity announced from the first forged block on.
    pub fork_id: Option<ForkId>,
    pub blocks_per_epoch: u64,
    pub committee_size: usize,
    /// Label prefix for the adversary's own committees after the first
    /// forged rotation.
    pub key_prefix: String,
}

#[derive(Debug, Clone)]
pub struct SideChain {
    pub blocks: Vec<Block>,
    /// Committee that signs the child of the last block.
    pub next_committee: Committee,
}

impl SideChain {
    pub fn tip(&self) -> Option<&Block> {
        self.blocks.last()
    }
}

/// Mints `plan.blocks` descendants of `parent` with whatever keys are held,
/// rotating to self-owned committees on schedule. No quorum check.
pub fn forge_segment(
    parent_id: BlockId,
    parent: &Block,
    signing: &Committee,
    keys: &mut KeyStore,
    plan: &SidePlan,
) -> SideChain {
    let mut blocks = Vec::with_capacity(plan.blocks as usize);
    let mut committee = signing.clone();
    let (mut pid, mut prev) = (parent_id, parent.clone());
    for _ in 0..plan.blocks {
        let mut draft = draft_child(pid, &prev);
        draft.state_root = plan.state_root;
        if let Some(f) = plan.fork_id {
            draft.fork_id = f;
        }
        let signers = keys.signers(&committee);
        if draft.height % plan.blocks_per_epoch.max(1) == 0 {
            let next =
                ValidatorSet::generate(&plan.key_prefix, draft.epoch + 1, plan.committee_size);
            keys.add(draft.epoch + 1, next.keys.iter().cloned());
            draft.transition = Some(TransitionRecord::signed_by(
                next.committee.clone(),
                &signers,
            ));
        }
        let block = mint_block(&signers, draft);
        if let Some(t) = &block.transition {
            committee = t.new_committee.clone();
        }
        pid = block.id();
        prev = block.clone();
        blocks.push(block);
    }
    SideChain {
        blocks,
        next_committee: committee,
    }
}

/// Forged fork from `fork_point`, whose children are signed by `signing`.
/// Fails unless the held keys reach that committee's quorum.
pub fn build_side_chain(
    tree: &BlockTree,
    fork_point: BlockId,
    signing: &Committee,
    keys: &mut KeyStore,
    plan: &SidePlan,
) -> Result<SideChain, AdversaryError> {
    let parent = tree.get(&fork_point)?;
    let have = keys.signers(signing).len();
    if have < signing.threshold {
        return Err(AdversaryError::InsufficientKeys {
            epoch: signing.epoch,
            have,
            need: signing.threshold,
        });
    }
    Ok(forge_segment(fork_point, parent, signing, keys, plan))
}

/// A state value together with its inclusion proof.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Claim {
    pub account: AccountId,
    pub address: Option<U256>,
    pub value: LeafValue,
    pub proof: StateProof,
}

impl Claim {
    fn of(db: &DbState, account: AccountId, address: Option<U256>) -> Option<Self> {
        prove(db, account, address)
            .ok()
            .map(|(value, proof)| Claim {
                account,
                address,
                value,
                proof,
            })
    }
}

/// Checks `claim` against the tip's state root. With `verify_proofs` off
/// the value is taken on faith.
pub fn victim_inspect(
    tip: &Block,
    claim: &Claim,
    verify_proofs: bool,
) -> Result<LeafValue, AdversaryError> {
    if verify_proofs
        && !verify(
            &tip.state_root,
            claim.account,
            claim.address,
            &claim.value,
            &claim.proof,
        )
    {
        return Err(AdversaryError::ProofRejected {
            account: claim.account,
            address: claim.address,
        });
    }
    Ok(claim.value)
}

/// One message from the adversary to the eclipsed victim.
#[derive(Debug, Clone)]
pub struct Presentation {
    pub round: u64,
    /// Extends the victim's current trusted block.
    pub segment: Vec<Block>,
    pub claims: Vec<Claim>,
}

impl Presentation {
    fn fingerprint(&self) -> (u64, Vec<BlockId>, usize) {
        (
            self.round,
            self.segment.iter().map(Block::id).collect(),
            self.claims.len(),
        )
    }
}

/// Everything the victim knew when it went to sleep.
#[derive(Debug, Clone)]
pub struct PreSleepView {
    pub block_id: BlockId,
    pub block: Block,
    /// Committee of the sleep block's epoch.
    pub committee: Committee,
    pub base_fee: U256,
    pub registry: AccountId,
    pub payee: AccountId,
}

#[derive(Debug, Clone)]
pub enum Decision {
    SegmentRejected {
        index: usize,
        reason: RejectReason,
    },
    Aborted(AdversaryError),
    Declined(String),
    Signed {
        txn: SignedTxn,
        leash: Option<LeashParams>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InspectionRecord {
    pub label: String,
    pub value: String,
    pub proof: &'static str,
}

/// Alice. Pays Cobb when the registry shows `pay_if_flag` and her displayed
/// balance covers the payment.
#[derive(Debug, Clone)]
pub struct Victim {
    wallet: Wallet,
    client: LightClientState,
    tip: Block,
    tip_id: BlockId,
    view: PreSleepView,
    policy: VictimSection,
    consumed: Vec<(u64, Vec<BlockId>, usize)>,
}

impl Victim {
    pub fn new(
        wallet: Wallet,
        view: PreSleepView,
        policy: VictimSection,
        recent_window: u64,
    ) -> Self {
        let client =
            LightClientState::trusting(view.block_id, &view.block, &view.committee, recent_window);
        Victim {
            wallet,
            client,
            tip: view.block.clone(),
            tip_id: view.block_id,
            view,
            policy,
            consumed: Vec::new(),
        }
    }

    pub fn account(&self) -> AccountId {
        self.wallet.account
    }

    pub fn client(&self) -> &LightClientState {
        &self.client
    }

    /// Light-verifies the segment, inspects the claims against the new tip
    /// and decides whether to sign.
    pub fn consider(
        &mut self,
        msg: &Presentation,
        leashed: bool,
    ) -> (LightVerdict, Vec<InspectionRecord>, Decision) {
        self.consumed.push(msg.fingerprint());
        let verdict = light_verify(&self.client, &msg.segment);
        let mut records = Vec::new();
        match &verdict {
            LightVerdict::Reject { index, reason } => {
                return (
                    verdict.clone(),
                    records,
                    Decision::SegmentRejected {
                        index: *index,
                        reason: *reason,
                    },
                )
            }
            LightVerdict::Accept(next) => {
                self.client = next.clone();
                if let Some(b) = msg.segment.last() {
                    self.tip = b.clone();
                    self.tip_id = b.id();
                }
            }
        }
        let find = |account: AccountId, address: Option<U256>| {
            msg.claims
                .iter()
                .find(|c| c.account == account && c.address == address)
        };
        let proof_label = if self.policy.verify_proofs {
            "verified"
        } else {
            "skipped"
        };

        let slot = Some(U256::from(REGISTRY_SLOT));
        let Some(flag_claim) = find(self.view.registry, slot) else {
            return (
                verdict,
                records,
                Decision::Declined("no registry value offered".into()),
            );
        };
        let flag = match victim_inspect(&self.tip, flag_claim, self.policy.verify_proofs) {
            Ok(v) => v.as_storage().unwrap_or_default(),
            Err(e) => {
                records.push(InspectionRecord {
                    label: "registry".into(),
                    value: "?".into(),
                    proof: "rejected",
                });
                return (verdict, records, Decision::Aborted(e));
            }
        };
        records.push(InspectionRecord {
            label: "registry".into(),
            value: format!("slot{REGISTRY_SLOT}={flag}"),
            proof: proof_label,
        });

        let Some(acct_claim) = find(self.wallet.account, None) else {
            return (
                verdict,
                records,
                Decision::Declined("no account summary offered".into()),
            );
        };
        let summary = match victim_inspect(&self.tip, acct_claim, self.policy.verify_proofs) {
            Ok(LeafValue::Account(s)) => s,
            Ok(LeafValue::Storage(_)) => {
                return (
                    verdict,
                    records,
                    Decision::Declined("account claim is not a summary".into()),
                )
            }
            Err(e) => {
                records.push(InspectionRecord {
                    label: "alice".into(),
                    value: "?".into(),
                    proof: "rejected",
                });
                return (verdict, records, Decision::Aborted(e));
            }
        };
        records.push(InspectionRecord {
            label: "alice".into(),
            value: format!("balance={} nonce={}", summary.balance, summary.nonce),
            proof: proof_label,
        });

        if flag != U256::from(self.policy.pay_if_flag) {
            return (
                verdict,
                records,
                Decision::Declined(format!("registry shows {flag}")),
            );
        }
        let payment = U256::from(self.policy.payment);
        if summary.balance < payment.saturating_add(self.view.base_fee) {
            return (
                verdict,
                records,
                Decision::Declined("displayed balance too low".into()),
            );
        }
        self.wallet.nonce = summary.nonce;
        let body = TxnBody::Transfer {
            to: self.view.payee,
            amount: payment,
        };
        let decision = if leashed {
            let params = LeashParams {
                anchor_height: self.tip.height,
                anchor_hash: self.tip_id.0,
                length: self.policy.leash_length.into(),
                fork_id: self.tip.fork_id,
            };
            match self.wallet.sign_leashed(body, params) {
                Ok(txn) => Decision::Signed {
                    txn,
                    leash: Some(params),
                },
                Err(e) => Decision::Declined(format!("cannot leash: {e}")),
            }
        } else {
            Decision::Signed {
                txn: self.wallet.sign(body, self.tip.fork_id),
                leash: None,
            }
        };
        (verdict, records, decision)
    }
}

/// The honest chain and the participants, before the attack starts.
#[derive(Debug, Clone)]
struct World {
    chain: HonestChain,
    alice: Wallet,
    cobb: AccountId,
    bystander: Wallet,
    registry: AccountId,
    merchant: AccountId,
}

impl World {
    fn build(s: &Scenario) -> Result<Self, ScenarioError> {
        let fee = U256::from(s.chain.base_fee);
        let funded = |label| Wallet {
            max_fee: fee,
            ..Wallet::new(label)
        };
        let alice = funded("alice");
        let cobb = Wallet::new("cobb").account;
        let mut registrar = funded("registrar");
        let mut bystander = funded("bystander");
        let registry = AccountId::named("registry");
        let merchant = AccountId::named("merchant");

        let mut db = DbState::new();
        for (label, balance) in &s.accounts {
            db.accounts.insert(
                Wallet::new(label).account,
                AccountState::eoa((*balance).into()),
            );
        }
        db.accounts.insert(
            registry,
            AccountState::contract(
                flag_register(registrar.account, REGISTRY_SLOT.into()),
                0.into(),
            ),
        );

        let cfg = VmConfig {
            base_fee: s.chain.base_fee.into(),
            ..VmConfig::default()
        };
        let fork = ForkId::named(&s.chain.fork_name);
        let mut chain = HonestChain::new(
            db,
            fork,
            cfg,
            s.chain.committee_size,
            s.chain.blocks_per_epoch,
            VALIDATOR_PREFIX,
        );
        chain.ledger.blockhash_window = s.chain.blockhash_window;

        let hidden = s
            .hard_fork
            .as_ref()
            .filter(|hf| hf.variant == HardForkVariant::HiddenReal);
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        for h in 1..=s.chain.honest_blocks {
            let mut txs = vec![filler(&mut bystander, merchant, &mut rng, chain.fork_id())];
            for (_, value) in s.chain.flag_writes.iter().filter(|(at, _)| *at == h) {
                let calldata = word_calldata(&[U256::from(*value)]);
                txs.push(registrar.sign(
                    TxnBody::Call {
                        contract: registry,
                        calldata,
                    },
                    chain.fork_id(),
                ));
            }
            let produced = match hidden {
                Some(hf) if h >= hf.fork_height => {
                    chain.extend_on_fork(txs, ForkId::named(&hf.new_fork_name))?
                }
                _ => chain.extend(txs)?,
            };
            expect_all_committed(&produced, h)?;
        }
        Ok(World {
            chain,
            alice,
            cobb,
            bystander,
            registry,
            merchant,
        })
    }
}

fn filler(bystander: &mut Wallet, to: AccountId, rng: &mut ChaCha8Rng, fork: ForkId) -> SignedTxn {
    bystander.sign(
        TxnBody::Transfer {
            to,
            amount: rng.gen_range(1u64..=1000).into(),
        },
        fork,
    )
}

fn expect_all_committed(p: &Produced, height: u64) -> Result<(), ScenarioError> {
    if !p.dropped.is_empty() || !p.receipts.iter().all(Receipt::committed) {
        return Err(ScenarioError::Assertion(format!(
            "honest block {height} did not execute cleanly"
        )));
    }
    Ok(())
}

/// Cobb: reads the honest chain freely, forges, and talks to the victim.
struct Cobb<'s> {
    s: &'s Scenario,
    keys: KeyStore,
    tree: BlockTree,
    side: Option<(BlockId, Committee)>,
    observed_nonce: Option<U256>,
    emitted: Vec<(u64, Vec<BlockId>, usize)>,
}

impl<'s> Cobb<'s> {
    fn new(s: &'s Scenario, chain: &HonestChain) -> Result<Self, ScenarioError> {
        let mut keys = KeyStore::new();
        for &e in &s.adversary.leaked_epochs {
            let set = chain.validator_set(e)?;
            let n = s.adversary.leaked_per_epoch.unwrap_or(set.keys.len());
            keys.add(e, set.keys.iter().take(n).cloned());
        }
        Ok(Cobb {
            s,
            keys,
            tree: chain.ledger.tree().clone(),
            side: None,
            observed_nonce: None,
            emitted: Vec::new(),
        })
    }

    /// State the forged blocks commit to: the real state at the fork point
    /// with the registry flipped and the victim's balance inflated.
    fn bogus_state(&self, real: &DbState, alice: AccountId, registry: AccountId) -> DbState {
        let a = &self.s.adversary;
        let mut db = real.clone();
        db.set_storage(registry, REGISTRY_SLOT.into(), a.bogus_flag.into());
        let acct = db.account_mut(alice);
        acct.balance = acct.balance.saturating_add(a.inflate_victim_balance.into());
        if let Some(n) = self.observed_nonce {
            acct.nonce = n;
        }
        db
    }

    fn present(
        &mut self,
        round: u64,
        world: &World,
        chain: &HonestChain,
    ) -> Result<Presentation, ScenarioError> {
        let s = self.s;
        let a = &s.adversary;
        let fork_point = chain
            .at_height(a.fork_height)
            .expect("validated fork height");
        let real = chain.ledger.state(&fork_point)?;
        let mut segment = Vec::new();
        if round == 1 {
            for h in s.victim.sleep_height + 1..=a.fork_height {
                segment.push(chain.ledger.block(&chain.at_height(h).unwrap())?.clone());
            }
        }
        let shown = if a.side_blocks == 0 {
            real.clone()
        } else {
            let bogus = self.bogus_state(real, world.alice.account, world.registry);
            let (parent, signing) = match &self.side {
                Some((tip, committee)) => (*tip, committee.clone()),
                None => {
                    let fb = chain.ledger.block(&fork_point)?;
                    let signing = chain.validator_set(child_epoch(fb))?.committee.clone();
                    (fork_point, signing)
                }
            };
            let plan = SidePlan {
                blocks: a.side_blocks,
                state_root: bogus.root(),
                fork_id: bogus_fork(s),
                blocks_per_epoch: s.chain.blocks_per_epoch,
                committee_size: s.chain.committee_size,
                key_prefix: ADVERSARY_PREFIX.to_string(),
            };
            let side = build_side_chain(&self.tree, parent, &signing, &mut self.keys, &plan)?;
            for b in &side.blocks {
                self.tree.insert_block(b.clone())?;
            }
            self.side = Some((
                side.tip().expect("non-empty plan").id(),
                side.next_committee.clone(),
            ));
            segment.extend(side.blocks);
            bogus
        };
        let slot = Some(U256::from(REGISTRY_SLOT));
        let mut claims = Vec::new();
        let registry_claim = match a.claim {
            ClaimMode::Consistent => Claim::of(&shown, world.registry, slot),
            ClaimMode::Forged => {
                let mut fake = shown.clone();
                fake.set_storage(world.registry, REGISTRY_SLOT.into(), a.bogus_flag.into());
                Claim::of(&fake, world.registry, slot)
            }
        };
        claims.extend(registry_claim);
        claims.extend(Claim::of(&shown, world.alice.account, None));
        let msg = Presentation {
            round,
            segment,
            claims,
        };
        self.emitted.push(msg.fingerprint());
        Ok(msg)
    }

    fn observe(&mut self, chain: &HonestChain, alice: AccountId) {
        if self.s.adversary.adaptive {
            self.observed_nonce = Some(
                chain
                    .ledger
                    .state(&chain.tip)
                    .expect("tip executed")
                    .nonce(&alice),
            );
        }
    }
}

fn bogus_fork(s: &Scenario) -> Option<ForkId> {
    s.hard_fork
        .as_ref()
        .filter(|hf| hf.variant == HardForkVariant::BogusAdversarial)
        .map(|hf| ForkId::named(&hf.new_fork_name))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRecord {
    pub round: u64,
    pub shown_tip: (u64, BlockId, ForkId),
    pub segment_len: usize,
    pub forged_blocks: usize,
    pub stale_client: String,
    pub current_client: String,
    pub inspections: Vec<InspectionRecord>,
    pub decision: String,
    pub outcome: String,
    pub consensus_block: Option<(u64, BlockId)>,
    pub anchored_on_consensus: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmReport {
    pub leashed: bool,
    pub rounds: Vec<RoundRecord>,
    /// Adversary balance gain on the consensus chain.
    pub harm: U256,
    pub victim_loss: U256,
    /// Consensus state roots of the blocks produced during the attack.
    pub root_trajectory: Vec<(u64, Digest)>,
}

impl ArmReport {
    pub fn label(&self) -> &'static str {
        if self.leashed {
            "leashed"
        } else {
            "unleashed"
        }
    }

    /// Outcome of the last round.
    pub fn outcome(&self) -> &str {
        self.rounds.last().map_or("none", |r| r.outcome.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioReport {
    pub name: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub note: Option<String>,
    pub consensus_height: u64,
    pub consensus_epoch: u64,
    pub consensus_fork: ForkId,
    pub sleep_block: BlockId,
    pub leaked_epochs: Vec<u64>,
    pub arms: Vec<ArmReport>,
}

fn verdict_label(v: &LightVerdict) -> String {
    match v {
        LightVerdict::Accept(_) => "Accept".into(),
        LightVerdict::Reject { index, reason } => format!("Reject({reason:?}@{index})"),
    }
}

/// Short label for a receipt: `Committed`, `Reverted(<reason>)`.
pub fn receipt_label(r: &Receipt) -> String {
    match (&r.fault, r.committed()) {
        (_, true) => "Committed".into(),
        (Some(crate::vm::Fault::Leash(reason)), false) => format!("Reverted({reason:?})"),
        (Some(f), false) => format!("Reverted({f:?})"),
        (None, false) => "Reverted".into(),
    }
}

impl ScenarioReport {
    pub fn arm(&self, leashed: bool) -> &ArmReport {
        self.arms
            .iter()
            .find(|a| a.leashed == leashed)
            .expect("both arms run")
    }

    /// Mismatches between the report and the scenario's expectations.
    pub fn check(&self, e: &ExpectSection) -> Vec<String> {
        let mut out = Vec::new();
        for (want, arm) in [
            (&e.leashed, self.arm(true)),
            (&e.unleashed, self.arm(false)),
        ] {
            if let Some(w) = want {
                for r in arm.rounds.iter().filter(|r| &r.outcome != w) {
                    out.push(format!(
                        "{} round {}: expected {w}, got {}",
                        arm.label(),
                        r.round,
                        r.outcome
                    ));
                }
            }
        }
        if let Some(h) = e.leashed_harm {
            let got = self.arm(true).harm;
            if got != U256::from(h) {
                out.push(format!("leashed harm: expected {h}, got {got}"));
            }
        }
        if let Some(l) = e.leashed_victim_loss {
            let got = self.arm(true).victim_loss;
            if got != U256::from(l) {
                out.push(format!("leashed victim loss: expected {l}, got {got}"));
            }
        }
        if let Some(p) = e.unleashed_harm_positive {
            if (self.arm(false).harm > U256::zero()) != p {
                out.push(format!(
                    "unleashed harm positive: expected {p}, got {}",
                    self.arm(false).harm
                ));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let w = &mut o;
        let _ = writeln!(w, "{REPORT_FORMAT}");
        let _ = writeln!(
            w,
            "scenario {} kind={:?} seed={}",
            self.name, self.kind, self.seed
        );
        if let Some(n) = &self.note {
            let _ = writeln!(w, "note {n}");
        }
        let _ = writeln!(
            w,
            "consensus height={} epoch={} fork={}",
            self.consensus_height, self.consensus_epoch, self.consensus_fork.0
        );
        let _ = writeln!(w, "victim trusted={}", self.sleep_block.0);
        let _ = writeln!(w, "adversary leaked_epochs={:?}", self.leaked_epochs);
        for arm in &self.arms {
            let _ = writeln!(w, "\narm {}", arm.label());
            for r in &arm.rounds {
                let _ = writeln!(w, "  round {}", r.round);
                let (h, id, fork) = &r.shown_tip;
                let _ = writeln!(w, "    shown_tip height={h} id={} fork={}", id.0, fork.0);
                let _ = writeln!(
                    w,
                    "    segment blocks={} forged={}",
                    r.segment_len, r.forged_blocks
                );
                let _ = writeln!(
                    w,
                    "    light_verify stale_client={} current_client={}",
                    r.stale_client, r.current_client
                );
                for i in &r.inspections {
                    let _ = writeln!(w, "    inspect {} {} proof={}", i.label, i.value, i.proof);
                }
                let _ = writeln!(w, "    decision {}", r.decision);
                if let Some((h, id)) = &r.consensus_block {
                    let _ = writeln!(w, "    consensus_block height={h} id={}", id.0);
                }
                let anchored = r
                    .anchored_on_consensus
                    .map_or("n/a".to_string(), |b| b.to_string());
                let _ = writeln!(
                    w,
                    "    outcome {} anchor_on_consensus={anchored}",
                    r.outcome
                );
            }
            for (h, root) in &arm.root_trajectory {
                let _ = writeln!(w, "  root height={h} {root}");
            }
            let _ = writeln!(w, "  harm {}", arm.harm);
            let _ = writeln!(w, "  victim_loss {}", arm.victim_loss);
        }
        let _ = writeln!(w, "\nsummary");
        let _ = writeln!(
            w,
            "| {:<9} | {:>6} | {:<28} | {:>10} | {:>11} |",
            "arm", "rounds", "outcome", "harm", "victim_loss"
        );
        let _ = writeln!(
            w,
            "|{:-<11}|{:-<8}|{:-<30}|{:-<12}|{:-<13}|",
            "", "", "", "", ""
        );
        for arm in &self.arms {
            let _ = writeln!(
                w,
                "| {:<9} | {:>6} | {:<28} | {:>10} | {:>11} |",
                arm.label(),
                arm.rounds.len(),
                arm.outcome(),
                arm.harm.to_string(),
                arm.victim_loss.to_string()
            );
        }
        o
    }
}

fn run_arm(s: &Scenario, world: &World, leashed: bool) -> Result<ArmReport, ScenarioError> {
    let mut chain = world.chain.clone();
    let mut bystander = world.bystander.clone();
    let mut cobb = Cobb::new(s, &chain)?;

    let sleep_id = chain
        .at_height(s.victim.sleep_height)
        .expect("validated sleep height");
    let sleep_block = chain.ledger.block(&sleep_id)?.clone();
    let view = PreSleepView {
        block_id: sleep_id,
        committee: chain.validator_set(sleep_block.epoch)?.committee.clone(),
        block: sleep_block,
        base_fee: chain.ledger.cfg.base_fee,
        registry: world.registry,
        payee: world.cobb,
    };
    // From here on the victim sees only what Cobb sends.
    let mut victim = Victim::new(
        world.alice.clone(),
        view,
        s.victim.clone(),
        s.chain.recent_window,
    );

    let start = chain.ledger.state(&chain.tip)?.clone();
    let mut rounds = Vec::new();
    let mut trajectory = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x5eed);
    for round in 1..=s.adversary.rounds {
        if round > 1 {
            for _ in 0..s.round_gap() {
                let p = chain.extend(vec![filler(
                    &mut bystander,
                    world.merchant,
                    &mut rng,
                    chain.fork_id(),
                )])?;
                expect_all_committed(&p, chain.height())?;
                trajectory.push((chain.height(), chain.tip_block().state_root));
            }
        }
        let msg = cobb.present(round, world, &chain)?;
        let current = chain.client_at(chain.tip, s.chain.recent_window)?;
        let current_client = if msg.segment.is_empty() {
            "n/a".to_string()
        } else {
            verdict_label(&light_verify(&current, &msg.segment))
        };
        let (verdict, inspections, decision) = victim.consider(&msg, leashed);
        let tip_block = msg.segment.last().cloned();
        let shown_tip = match &tip_block {
            Some(b) => (b.height, b.id(), b.fork_id),
            None => rounds.last().map(|r: &RoundRecord| r.shown_tip).unwrap_or((
                victim_height(&victim),
                victim.client().trusted_block,
                chain.fork_id(),
            )),
        };
        let forged = msg
            .segment
            .iter()
            .filter(|b| !chain.ledger.tree().contains(&b.id()))
            .count();
        let mut rec = RoundRecord {
            round,
            shown_tip,
            segment_len: msg.segment.len(),
            forged_blocks: forged,
            stale_client: verdict_label(&verdict),
            current_client,
            inspections,
            decision: String::new(),
            outcome: String::new(),
            consensus_block: None,
            anchored_on_consensus: None,
        };
        match decision {
            Decision::SegmentRejected { index, reason } => {
                rec.decision = format!("segment rejected at {index}: {reason:?}");
                rec.outcome = "NotSubmitted(SegmentRejected)".into();
            }
            Decision::Aborted(e) => {
                rec.decision = format!("aborted: {e}");
                rec.outcome = "NotSubmitted(ProofRejected)".into();
            }
            Decision::Declined(why) => {
                rec.decision = format!("declined: {why}");
                rec.outcome = "NotSubmitted(Declined)".into();
            }
            Decision::Signed { txn, leash } => {
                rec.decision = match &leash {
                    Some(p) => format!(
                        "signed leashed transfer i={} v={} l={} fork={}",
                        p.anchor_height, p.anchor_hash, p.length, p.fork_id.0
                    ),
                    None => "signed unleashed transfer".into(),
                };
                rec.anchored_on_consensus =
                    leash.map(|p| chain.at_height(p.anchor_height) == Some(BlockId(p.anchor_hash)));
                let produced = chain.extend(vec![txn])?;
                rec.consensus_block = Some((chain.height(), produced.id));
                trajectory.push((chain.height(), chain.tip_block().state_root));
                rec.outcome = match (produced.receipts.first(), produced.dropped.first()) {
                    (Some(r), _) => receipt_label(r),
                    (None, Some((_, e))) => format!("Dropped({})", dropped_label(e)),
                    (None, None) => unreachable!("one proposal in, one result out"),
                };
                if leashed && rec.anchored_on_consensus == Some(false) && rec.outcome == "Committed"
                {
                    return Err(ScenarioError::Assertion(format!(
                        "round {round}: leashed proposal anchored off the consensus chain committed"
                    )));
                }
                cobb.observe(&chain, world.alice.account);
            }
        }
        rounds.push(rec);
    }

    if victim.consumed != cobb.emitted {
        return Err(ScenarioError::Assertion(
            "victim consumed a message the adversary did not send".into(),
        ));
    }
    let genesis = chain.ledger.genesis();
    let from_genesis = chain.client_at(genesis, s.chain.recent_window)?;
    if !light_verify(&from_genesis, &chain.blocks()[1..]).accepted() {
        return Err(ScenarioError::Assertion(
            "consensus chain fails light verification".into(),
        ));
    }

    let end = chain.ledger.state(&chain.tip)?;
    let harm = end
        .balance(&world.cobb)
        .saturating_sub(start.balance(&world.cobb));
    let victim_loss = start
        .balance(&world.alice.account)
        .saturating_sub(end.balance(&world.alice.account));
    Ok(ArmReport {
        leashed,
        rounds,
        harm,
        victim_loss,
        root_trajectory: trajectory,
    })
}

fn victim_height(v: &Victim) -> u64 {
    v.client().trusted_height
}

fn dropped_label(e: &crate::vm::TxnError) -> &'static str {
    use crate::vm::TxnError::*;
    match e {
        BadSignature => "BadSignature",
        BadNonce { .. } => "BadNonce",
        InsufficientFee { .. } => "InsufficientFee",
        CalldataTooLong { .. } => "CalldataTooLong",
    }
}

/// Runs the leashed and the unleashed arm of a scenario on identical
/// honest histories.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioReport, ScenarioError> {
    s.validate()?;
    let world = World::build(s)?;
    let leashed = run_arm(s, &world, true)?;
    let unleashed = run_arm(s, &world, false)?;
    // Dominance is claimed only for leashes anchored off the consensus chain;
    // a victim fooled into anchoring on a real block gets no protection.
    let side_anchored = leashed
        .rounds
        .iter()
        .all(|r| r.anchored_on_consensus != Some(true));
    if side_anchored
        && (leashed.harm > unleashed.harm
            || (leashed.harm == unleashed.harm && !leashed.harm.is_zero()))
    {
        return Err(ScenarioError::Assertion(format!(
            "leashing did not reduce harm: {} vs {}",
            leashed.harm, unleashed.harm
        )));
    }
    let tip = world.chain.tip_block();
    Ok(ScenarioReport {
        name: s.name.clone(),
        kind: s.kind,
        seed: s.seed,
        note: s.note.clone(),
        consensus_height: tip.height,
        consensus_epoch: tip.epoch,
        consensus_fork: tip.fork_id,
        sleep_block: world
            .chain
            .at_height(s.victim.sleep_height)
            .expect("validated"),
        leaked_epochs: s.adversary.leaked_epochs.clone(),
        arms: vec![leashed, unleashed],
    })
}

/// [`run_scenario`] for scenarios that involve a governance fork.
pub fn run_hard_fork_scenario(s: &Scenario) -> Result<ScenarioReport, ScenarioError> {
    if s.kind != ScenarioKind::HardFork {
        return Err(ConfigError::Invalid("not a hard_fork scenario".into()).into());
    }
    run_scenario(s)
}

/// A random member of the LRA family: random chain shape, sleep and fork
/// points, bogus state and leash length. Always valid.
pub fn random_lra(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bpe = rng.gen_range(2u64..=5);
    let committee_size = rng.gen_range(4usize..=7);
    let honest_blocks = rng.gen_range(6 * bpe..=8 * bpe);
    let recent_window = rng.gen_range(1u64..=2);
    let sleep_height = rng.gen_range(1..=2 * bpe);
    let fork_height = sleep_height + rng.gen_range(0..=bpe);
    let side_blocks = rng.gen_range(1..=(honest_blocks - fork_height).min(3 * bpe));
    let leaked = epoch_at(fork_height + 1, bpe);
    let s = Scenario {
        format: SCENARIO_FORMAT.into(),
        name: format!("random_lra_{seed}"),
        kind: ScenarioKind::Lra,
        seed,
        note: None,
        chain: ChainSection {
            committee_size,
            blocks_per_epoch: bpe,
            honest_blocks,
            recent_window,
            base_fee: rng.gen_range(1..=20),
            blockhash_window: crate::vm::DEFAULT_BLOCKHASH_WINDOW,
            flag_writes: vec![(rng.gen_range(1..=honest_blocks), rng.gen_range(2..=9))],
            fork_name: "main".into(),
        },
        accounts: [
            ("alice", 1_000_000u64),
            ("registrar", 1_000_000),
            ("bystander", 1_000_000),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect(),
        victim: VictimSection {
            sleep_height,
            leash_length: rng.gen_range(1..=48),
            payment: rng.gen_range(1..=100_000),
            verify_proofs: true,
            pay_if_flag: 1,
        },
        adversary: AdversarySection {
            fork_height,
            side_blocks,
            leaked_epochs: vec![leaked],
            leaked_per_epoch: None,
            inflate_victim_balance: rng.gen_range(0..=5_000_000),
            bogus_flag: 1,
            claim: ClaimMode::Consistent,
            rounds: rng.gen_range(1..=2),
            round_gap: Some(rng.gen_range(0..=2)),
            adaptive: rng.gen_bool(0.5),
        },
        hard_fork: None::<HardForkSection>,
        expect: ExpectSection::default(),
    };
    debug_assert!(s.validate().is_ok(), "{:?}", s.validate());
    s
}

/// One randomized committee history probing the light client's threat
/// boundary.
#[derive(Debug, Clone)]
pub struct BoundaryTrial {
    pub seed: u64,
    pub committee_size: usize,
    pub blocks_per_epoch: u64,
    pub height: u64,
    pub recent_window: u64,
    /// Per leakable epoch: verdict of a client trusting the fork point, and
    /// of a client trusting the current tip.
    pub old_forks: Vec<(u64, LightVerdict, LightVerdict)>,
    /// Per recent epoch: verdict on a fork signed with every old key plus
    /// the dishonest minority of the recent committee.
    pub recent_forks: Vec<(u64, LightVerdict)>,
}

impl BoundaryTrial {
    pub fn holds(&self) -> bool {
        !self.old_forks.is_empty()
            && self
                .old_forks
                .iter()
                .all(|(_, stale, current)| stale.accepted() && !current.accepted())
            && self.recent_forks.iter().all(|(_, v)| !v.accepted())
    }
}

pub fn threat_boundary_trial(seed: u64) -> Result<BoundaryTrial, AdversaryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let committee_size = rng.gen_range(4usize..=7);
    let bpe = rng.gen_range(2u64..=5);
    let recent_window = rng.gen_range(1u64..=3);
    let epochs = recent_window + rng.gen_range(2u64..=4);
    let height = epochs * bpe + rng.gen_range(1..=bpe);
    let mut chain = HonestChain::new(
        DbState::new(),
        ForkId::named("main"),
        VmConfig::default(),
        committee_size,
        bpe,
        &format!("trial{seed}"),
    );
    for _ in 0..height {
        chain.extend(vec![])?;
    }
    let current_epoch = chain.current_epoch();
    let tip_client = chain.client_at(chain.tip, recent_window)?;
    let bogus_root = Digest(rng.gen());
    let plan = |blocks| SidePlan {
        blocks,
        state_root: bogus_root,
        fork_id: None,
        blocks_per_epoch: bpe,
        committee_size,
        key_prefix: format!("trial{seed}-adversary"),
    };

    let leakable = leakable_epochs(current_epoch, recent_window);
    let mut leaked = KeyStore::new();
    for e in leakable.clone() {
        leaked.add(e, chain.validator_set(e)?.keys.iter().cloned());
    }
    let mut old_forks = Vec::new();
    for e in leakable.clone() {
        // A fork point whose children belong to epoch e.
        let h = e * bpe + rng.gen_range(0..bpe);
        let fp = chain.at_height(h).expect("below tip");
        let signing = chain.validator_set(e)?.committee.clone();
        let mut keys = leaked.clone();
        let side = build_side_chain(
            chain.ledger.tree(),
            fp,
            &signing,
            &mut keys,
            &plan(rng.gen_range(1..=2 * bpe + 1)),
        )?;
        let stale = light_verify(&chain.client_at(fp, recent_window)?, &side.blocks);
        let current = light_verify(&tip_client, &side.blocks);
        old_forks.push((e, stale, current));
    }

    let mut recent_forks = Vec::new();
    for e in leakable.end..=current_epoch {
        let set = chain.validator_set(e)?;
        let mut keys = leaked.clone();
        // The dishonest part of the committee; the honest quorum is withheld.
        keys.add(e, set.keys.iter().skip(set.committee.threshold).cloned());
        let lo = (e * bpe).min(chain.height());
        let hi = ((e + 1) * bpe).min(chain.height() + 1).max(lo + 1);
        let h = rng.gen_range(lo..hi);
        let fp = chain.at_height(h).expect("below tip");
        let fb = chain.ledger.block(&fp)?.clone();
        let signing = chain.validator_set(child_epoch(&fb))?.committee.clone();
        debug_assert!(keys.signers(&signing).len() < signing.threshold);
        let side = forge_segment(
            fp,
            &fb,
            &signing,
            &mut keys,
            &plan(rng.gen_range(1..=bpe + 1)),
        );
        recent_forks.push((
            e,
            light_verify(&chain.client_at(fp, recent_window)?, &side.blocks),
        ));
    }
    Ok(BoundaryTrial {
        seed,
        committee_size,
        blocks_per_epoch: bpe,
        height,
        recent_window,
        old_forks,
        recent_forks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::bundled;

    fn fixture(name: &str) -> Scenario {
        Scenario::parse(bundled(name).unwrap()).unwrap()
    }

    #[test]
    fn insufficient_keys() {
        let mut s = fixture("canonical_lra");
        s.adversary.leaked_per_epoch = Some(2);
        match run_scenario(&s) {
            Err(ScenarioError::Adversary(AdversaryError::InsufficientKeys {
                epoch: 1,
                have: 2,
                need: 3,
            })) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn real_root_rejects_bogus_value() {
        let mut s = fixture("skip_verification");
        s.victim.verify_proofs = true;
        let r = run_scenario(&s).unwrap();
        for arm in &r.arms {
            assert_eq!(arm.outcome(), "NotSubmitted(ProofRejected)");
            assert!(arm.harm.is_zero() && arm.victim_loss.is_zero());
        }
    }

    #[test]
    fn bogus_root_proof_verifies() {
        let r = run_scenario(&fixture("canonical_lra")).unwrap();
        let round = &r.arm(true).rounds[0];
        assert_eq!(round.stale_client, "Accept");
        assert_eq!(round.current_client, "Reject(BadLink@0)");
        assert!(round.inspections.iter().all(|i| i.proof == "verified"));
        assert!(round
            .inspections
            .iter()
            .any(|i| i.value.starts_with("balance=6000000")));
    }

    #[test]
    fn no_fork_behaves_as_canonical() {
        let mut s = fixture("bogus_fork");
        s.hard_fork.as_mut().unwrap().variant = HardForkVariant::None;
        let r = run_hard_fork_scenario(&s).unwrap();
        assert_eq!(r.arm(true).outcome(), "Reverted(AnchorHashMismatch)");
        assert!(run_hard_fork_scenario(&fixture("canonical_lra")).is_err());
    }

    #[test]
    fn non_adaptive_rounds_get_dropped() {
        let mut s = fixture("adaptive");
        s.adversary.adaptive = false;
        let r = run_scenario(&s).unwrap();
        let leashed = r.arm(true);
        assert_eq!(leashed.rounds[0].outcome, "Reverted(AnchorHashMismatch)");
        assert_eq!(leashed.rounds[1].outcome, "Dropped(BadNonce)");
    }

    #[test]
    fn boundary_trial_holds() {
        let t = threat_boundary_trial(1).unwrap();
        assert!(t.holds(), "{t:?}");
        assert!(t
            .recent_forks
            .iter()
            .all(|(_, v)| v.reason() == Some(RejectReason::BadQuorum)));
    }
}
