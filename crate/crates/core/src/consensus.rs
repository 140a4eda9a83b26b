//! Epoch committees, quorum-signed blocks and the light-client verifier.
//!
//! A block is signed by the committee of its epoch. A block may carry a
//! [`TransitionRecord`] announcing the next committee; the record must be
//! quorum-signed by the current committee and takes effect from the block's
//! child. The light client checks exactly this metadata and never executes
//! transactions or recomputes state roots.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::blocktree::{Block, BlockId};
use crate::codec::{Decode, DecodeError, Decoder, Encode, Encoder};
use crate::hash::{BlockHasher, Sha256Hasher};
use crate::keys::{self, Keypair, PublicKey, Signature};

const TRANSITION_TAG: &[u8] = b"leashsim/transition/1";

/// Number of committee elections treated as recent unless configured.
pub const DEFAULT_RECENT_WINDOW: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committee {
    pub epoch: u64,
    /// Sorted, without duplicates.
    pub members: Vec<PublicKey>,
    pub threshold: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsensusError {
    #[error("committee has no members")]
    EmptyCommittee,
    #[error("threshold {threshold} is not a BFT quorum of {members} members")]
    WeakThreshold { threshold: usize, members: usize },
    #[error("{have} valid signatures, quorum needs {need}")]
    BadQuorum { have: usize, need: usize },
}

impl Committee {
    pub fn new(
        epoch: u64,
        members: impl IntoIterator<Item = PublicKey>,
        threshold: usize,
    ) -> Result<Self, ConsensusError> {
        let members: Vec<PublicKey> = members
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let c = Committee {
            epoch,
            members,
            threshold,
        };
        c.validate()?;
        Ok(c)
    }

    /// Committee with the smallest threshold above two thirds.
    pub fn bft(
        epoch: u64,
        members: impl IntoIterator<Item = PublicKey>,
    ) -> Result<Self, ConsensusError> {
        let set: BTreeSet<PublicKey> = members.into_iter().collect();
        let threshold = bft_threshold(set.len());
        Committee::new(epoch, set, threshold)
    }

    pub fn validate(&self) -> Result<(), ConsensusError> {
        if self.members.is_empty() {
            return Err(ConsensusError::EmptyCommittee);
        }
        let sorted = self.members.windows(2).all(|w| w[0] < w[1]);
        if !sorted
            || 3 * self.threshold <= 2 * self.members.len()
            || self.threshold > self.members.len()
        {
            return Err(ConsensusError::WeakThreshold {
                threshold: self.threshold,
                members: self.members.len(),
            });
        }
        Ok(())
    }

    pub fn contains(&self, key: &PublicKey) -> bool {
        self.members.binary_search(key).is_ok()
    }

    /// Members with a valid signature over `msg`.
    pub fn count_valid(&self, msg: &[u8], sigs: &BTreeMap<PublicKey, Signature>) -> usize {
        sigs.iter()
            .filter(|(k, s)| self.contains(k) && keys::verify(k, msg, s))
            .count()
    }

    pub fn check_quorum(
        &self,
        msg: &[u8],
        sigs: &BTreeMap<PublicKey, Signature>,
    ) -> Result<(), ConsensusError> {
        let have = self.count_valid(msg, sigs);
        if have >= self.threshold {
            Ok(())
        } else {
            Err(ConsensusError::BadQuorum {
                have,
                need: self.threshold,
            })
        }
    }
}

pub fn bft_threshold(n: usize) -> usize {
    2 * n / 3 + 1
}

impl Encode for Committee {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.epoch)
            .u32(self.threshold as u32)
            .put(&self.members);
    }
}

impl Decode for Committee {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let epoch = dec.u64()?;
        let threshold = dec.u32()? as usize;
        let members = dec.get()?;
        let c = Committee {
            epoch,
            members,
            threshold,
        };
        c.validate()
            .map_err(|_| DecodeError::Invalid("committee"))?;
        Ok(c)
    }
}

/// A committee and the signing keys of its members.
#[derive(Debug, Clone)]
pub struct ValidatorSet {
    pub committee: Committee,
    pub keys: Vec<Keypair>,
}

impl ValidatorSet {
    /// `size` validators with keys derived from `"{prefix}/e{epoch}/v{j}"`.
    pub fn generate(prefix: &str, epoch: u64, size: usize) -> Self {
        let keys: Vec<Keypair> = (0..size)
            .map(|j| Keypair::derive(&format!("{prefix}/e{epoch}/v{j}")))
            .collect();
        let committee =
            Committee::bft(epoch, keys.iter().map(Keypair::public)).expect("non-empty committee");
        ValidatorSet { committee, keys }
    }

    pub fn quorum_keys(&self) -> &[Keypair] {
        &self.keys[..self.committee.threshold]
    }
}

/// Committee change carried in a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRecord {
    pub new_committee: Committee,
    pub sigs: BTreeMap<PublicKey, Signature>,
}

impl TransitionRecord {
    pub fn payload(new_committee: &Committee) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(TRANSITION_TAG).put(new_committee);
        enc.into_bytes()
    }

    /// Signs without checking membership; forged records are built this way.
    pub fn signed_by(new_committee: Committee, keys: &[Keypair]) -> Self {
        let msg = Self::payload(&new_committee);
        let sigs = keys.iter().map(|k| (k.public(), k.sign(&msg))).collect();
        TransitionRecord {
            new_committee,
            sigs,
        }
    }
}

/// Honest construction: fails unless `keys` reach quorum in `current`.
pub fn register_transition(
    current: &Committee,
    new_committee: Committee,
    keys: &[Keypair],
) -> Result<TransitionRecord, ConsensusError> {
    new_committee.validate()?;
    let rec = TransitionRecord::signed_by(new_committee, keys);
    current.check_quorum(&TransitionRecord::payload(&rec.new_committee), &rec.sigs)?;
    Ok(rec)
}

impl Encode for TransitionRecord {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.new_committee).u32(self.sigs.len() as u32);
        for (k, s) in &self.sigs {
            enc.put(k).put(s);
        }
    }
}

impl Decode for TransitionRecord {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let new_committee = dec.get()?;
        let n = dec.u32()?;
        let mut sigs = BTreeMap::new();
        let mut last: Option<PublicKey> = None;
        for _ in 0..n {
            let k: PublicKey = dec.get()?;
            if last.is_some_and(|l| l >= k) {
                return Err(DecodeError::Invalid(
                    "transition signatures not strictly sorted",
                ));
            }
            last = Some(k);
            sigs.insert(k, dec.get()?);
        }
        Ok(TransitionRecord {
            new_committee,
            sigs,
        })
    }
}

/// Epoch of a child of `parent`.
pub fn child_epoch(parent: &Block) -> u64 {
    parent.epoch + u64::from(parent.transition.is_some())
}

/// Unsigned child of `parent` with the parent's fork id and state root and
/// no transactions.
pub fn draft_child(parent_id: BlockId, parent: &Block) -> Block {
    Block {
        parent: Some(parent_id),
        height: parent.height + 1,
        epoch: child_epoch(parent),
        fork_id: parent.fork_id,
        txs: Vec::new(),
        transition: None,
        state_root: parent.state_root,
        committee_sigs: BTreeMap::new(),
    }
}

/// Replaces the block's signatures with one from each key. No validity
/// check: the adversary mints with whatever keys it holds.
pub fn mint_block(keys: &[Keypair], mut block: Block) -> Block {
    let msg = block.signing_bytes();
    block.committee_sigs = keys.iter().map(|k| (k.public(), k.sign(&msg))).collect();
    block
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LightClientState {
    pub trusted_block: BlockId,
    pub trusted_height: u64,
    /// Committee that signs the child of the trusted block.
    pub trusted_committee: Committee,
    /// Elections treated as recent; informs which keys the threat model lets
    /// leak, not the verification rules.
    pub recent_window: u64,
}

impl LightClientState {
    /// Client that trusts `block` (by id) and knows the committee signing its
    /// children.
    pub fn trusting(
        block_id: BlockId,
        block: &Block,
        block_committee: &Committee,
        recent_window: u64,
    ) -> Self {
        let trusted_committee = match &block.transition {
            Some(t) => t.new_committee.clone(),
            None => block_committee.clone(),
        };
        LightClientState {
            trusted_block: block_id,
            trusted_height: block.height,
            trusted_committee,
            recent_window,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    BadLink,
    BadQuorum,
    BadTransition,
    BadHeight,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LightVerdict {
    Accept(LightClientState),
    Reject { index: usize, reason: RejectReason },
}

impl LightVerdict {
    pub fn accepted(&self) -> bool {
        matches!(self, LightVerdict::Accept(_))
    }

    pub fn reason(&self) -> Option<RejectReason> {
        match self {
            LightVerdict::Accept(_) => None,
            LightVerdict::Reject { reason, .. } => Some(*reason),
        }
    }
}

pub fn light_verify(client: &LightClientState, segment: &[Block]) -> LightVerdict {
    light_verify_with(client, segment, &Sha256Hasher)
}

/// Verifies consensus metadata only: linkage, heights, epoch quorums and
/// committee transitions.
pub fn light_verify_with(
    client: &LightClientState,
    segment: &[Block],
    hasher: &dyn BlockHasher,
) -> LightVerdict {
    let mut state = client.clone();
    for (index, block) in segment.iter().enumerate() {
        let reject = |reason| LightVerdict::Reject { index, reason };
        if block.parent != Some(state.trusted_block) {
            return reject(RejectReason::BadLink);
        }
        if block.height != state.trusted_height + 1 {
            return reject(RejectReason::BadHeight);
        }
        if block.epoch != state.trusted_committee.epoch {
            return reject(RejectReason::BadTransition);
        }
        if state
            .trusted_committee
            .check_quorum(&block.signing_bytes(), &block.committee_sigs)
            .is_err()
        {
            return reject(RejectReason::BadQuorum);
        }
        let next = match &block.transition {
            None => state.trusted_committee.clone(),
            Some(t) => {
                let ok = t.new_committee.epoch == block.epoch + 1
                    && t.new_committee.validate().is_ok()
                    && state
                        .trusted_committee
                        .check_quorum(&TransitionRecord::payload(&t.new_committee), &t.sigs)
                        .is_ok();
                if !ok {
                    return reject(RejectReason::BadTransition);
                }
                t.new_committee.clone()
            }
        };
        state.trusted_block = block.id_with(hasher);
        state.trusted_height = block.height;
        state.trusted_committee = next;
    }
    LightVerdict::Accept(state)
}

/// Epochs whose keys may have leaked when the chain is at `current_epoch`:
/// those more than `recent_window - 1` elections old.
pub fn leakable_epochs(current_epoch: u64, recent_window: u64) -> std::ops::Range<u64> {
    0..(current_epoch + 1).saturating_sub(recent_window.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::{sha256, Digest, ForkId};

    fn fork() -> ForkId {
        ForkId::named("main")
    }

    /// Honest chain of `n` blocks after genesis, rotating committees every
    /// `per_epoch` blocks.
    fn honest(n: u64, per_epoch: u64) -> (Vec<Block>, Vec<ValidatorSet>) {
        let mut sets = vec![ValidatorSet::generate("val", 0, 4)];
        let g = Block::genesis(fork(), Digest::ZERO);
        let mut blocks = vec![g];
        for h in 1..=n {
            let parent = blocks.last().unwrap();
            let mut b = draft_child(parent.id(), parent);
            b.state_root = sha256(&h.to_be_bytes());
            let set = &sets[b.epoch as usize];
            if h % per_epoch == 0 {
                let next = ValidatorSet::generate("val", b.epoch + 1, 4);
                b.transition = Some(
                    register_transition(&set.committee, next.committee.clone(), set.quorum_keys())
                        .unwrap(),
                );
                let signed = mint_block(set.quorum_keys(), b);
                sets.push(next);
                blocks.push(signed);
            } else {
                blocks.push(mint_block(set.quorum_keys(), b));
            }
        }
        (blocks, sets)
    }

    fn client_at(blocks: &[Block], sets: &[ValidatorSet], i: usize) -> LightClientState {
        LightClientState::trusting(
            blocks[i].id(),
            &blocks[i],
            &sets[blocks[i].epoch as usize].committee,
            2,
        )
    }

    #[test]
    fn threshold_is_bft() {
        assert_eq!(bft_threshold(4), 3);
        assert_eq!(bft_threshold(3), 3);
        assert_eq!(bft_threshold(7), 5);
        let keys: Vec<_> = (0..4)
            .map(|i| Keypair::derive(&format!("k{i}")).public())
            .collect();
        assert!(Committee::new(0, keys.clone(), 2).is_err());
        assert!(Committee::new(0, keys.clone(), 3).is_ok());
        assert!(Committee::new(0, keys, 5).is_err());
        assert_eq!(
            Committee::new(0, vec![], 1),
            Err(ConsensusError::EmptyCommittee)
        );
    }

    #[test]
    fn honest_segment_with_rotation_accepted() {
        let (blocks, sets) = honest(10, 4);
        assert!(sets.len() >= 3);
        let v = light_verify(&client_at(&blocks, &sets, 0), &blocks[1..]);
        match v {
            LightVerdict::Accept(s) => {
                assert_eq!(s.trusted_block, blocks[10].id());
                assert_eq!(s.trusted_committee.epoch, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quorum_failure_rejected() {
        let (blocks, sets) = honest(3, 100);
        let mut b = draft_child(blocks[3].id(), &blocks[3]);
        b.state_root = sha256(b"x");
        let b = mint_block(&sets[0].keys[..2], b);
        let v = light_verify(&client_at(&blocks, &sets, 3), &[b]);
        assert_eq!(v.reason(), Some(RejectReason::BadQuorum));
    }

    #[test]
    fn forged_transition_rejected() {
        let (blocks, sets) = honest(2, 100);
        let outsiders = ValidatorSet::generate("mallory", 1, 4);
        let mut b = draft_child(blocks[2].id(), &blocks[2]);
        b.transition = Some(TransitionRecord::signed_by(
            outsiders.committee.clone(),
            &outsiders.keys,
        ));
        let b = mint_block(sets[0].quorum_keys(), b);
        let v = light_verify(&client_at(&blocks, &sets, 2), &[b]);
        assert_eq!(v.reason(), Some(RejectReason::BadTransition));
    }

    #[test]
    fn link_and_height_checked() {
        let (blocks, sets) = honest(4, 100);
        let c = client_at(&blocks, &sets, 1);
        assert_eq!(
            light_verify(&c, &blocks[3..]).reason(),
            Some(RejectReason::BadLink)
        );
        let mut b = draft_child(blocks[1].id(), &blocks[1]);
        b.height = 7;
        let b = mint_block(sets[0].quorum_keys(), b);
        assert_eq!(
            light_verify(&c, &[b]).reason(),
            Some(RejectReason::BadHeight)
        );
    }

    #[test]
    fn transition_roundtrip() {
        let set = ValidatorSet::generate("v", 3, 5);
        let rec = TransitionRecord::signed_by(set.committee.clone(), &set.keys);
        let back = TransitionRecord::from_bytes(&rec.to_bytes()).unwrap();
        assert_eq!(back, rec);
        assert!(
            register_transition(&set.committee, set.committee.clone(), &set.keys[..3]).is_err()
        );
    }

    #[test]
    fn leakable_range() {
        assert_eq!(leakable_epochs(5, 2), 0..4);
        assert_eq!(leakable_epochs(1, 2), 0..0);
        assert_eq!(leakable_epochs(3, 0), 0..3);
    }
}
