//! Ledger database state and its Merkle commitment.
//!
//! The commitment is a sorted binary Merkle tree over domain-separated
//! leaves: one leaf per account (nonce, balance, code digest) and one leaf
//! per non-zero contract storage slot. The leaf count is bound into the root
//! so leaf positions are authenticated, which makes adjacent-leaf absence
//! proofs sound.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use primitive_types::U256;
use serde::{Deserialize, Serialize};

use crate::codec::{Decode, DecodeError, Decoder, Encode, Encoder};
use crate::hash::{sha256, tagged_hash, Digest};
use crate::keys::PublicKey;
use crate::vm::script::Script;

const LEAF_TAG: &[u8] = b"leashsim/state-leaf";
const NODE_TAG: &[u8] = b"leashsim/state-node";
const ROOT_TAG: &[u8] = b"leashsim/state-root";
const STATE_FORMAT: u8 = 1;

/// 256-bit account identifier: a public-key hash for EOAs, a derived
/// number for contracts.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AccountId(pub Digest);

impl AccountId {
    pub fn of_key(key: &PublicKey) -> Self {
        AccountId(tagged_hash(b"leashsim/eoa", &[key.0.as_bytes()]))
    }

    /// Contract account number derived from the creator and its nonce.
    pub fn contract(creator: &AccountId, nonce: U256) -> Self {
        let mut n = [0u8; 32];
        nonce.to_big_endian(&mut n);
        AccountId(tagged_hash(
            b"leashsim/contract",
            &[creator.0.as_bytes(), &n],
        ))
    }

    /// Well-known system or fixture account.
    pub fn named(label: &str) -> Self {
        AccountId(tagged_hash(b"leashsim/named-account", &[label.as_bytes()]))
    }

    pub fn to_word(&self) -> U256 {
        self.0.to_word()
    }

    pub fn from_word(w: U256) -> Self {
        AccountId(Digest::from_word(w))
    }
}

impl fmt::Debug for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Account({})", self.0.short())
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.short())
    }
}

impl Encode for AccountId {
    fn encode(&self, enc: &mut Encoder) {
        enc.digest(&self.0);
    }
}

impl Decode for AccountId {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(AccountId(dec.digest()?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AccountState {
    pub nonce: U256,
    pub balance: U256,
    pub code: Option<Arc<Script>>,
    /// Contract storage. Zero values are never stored.
    pub storage: BTreeMap<U256, U256>,
}

impl AccountState {
    pub fn eoa(balance: U256) -> Self {
        AccountState {
            balance,
            ..Default::default()
        }
    }

    pub fn contract(code: Script, balance: U256) -> Self {
        AccountState {
            balance,
            code: Some(Arc::new(code)),
            ..Default::default()
        }
    }

    pub fn is_contract(&self) -> bool {
        self.code.is_some()
    }

    pub fn code_hash(&self) -> Option<Digest> {
        self.code.as_ref().map(|c| sha256(&c.to_bytes()))
    }

    pub fn summary(&self) -> AccountSummary {
        AccountSummary {
            nonce: self.nonce,
            balance: self.balance,
            code_hash: self.code_hash(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DbState {
    pub accounts: BTreeMap<AccountId, AccountState>,
}

impl DbState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &AccountId) -> Option<&AccountState> {
        self.accounts.get(id)
    }

    pub fn account_mut(&mut self, id: AccountId) -> &mut AccountState {
        self.accounts.entry(id).or_default()
    }

    pub fn balance(&self, id: &AccountId) -> U256 {
        self.accounts.get(id).map(|a| a.balance).unwrap_or_default()
    }

    pub fn nonce(&self, id: &AccountId) -> U256 {
        self.accounts.get(id).map(|a| a.nonce).unwrap_or_default()
    }

    pub fn storage(&self, id: &AccountId, address: U256) -> U256 {
        self.accounts
            .get(id)
            .and_then(|a| a.storage.get(&address).copied())
            .unwrap_or_default()
    }

    pub fn set_storage(&mut self, id: AccountId, address: U256, value: U256) {
        let acct = self.account_mut(id);
        if value.is_zero() {
            acct.storage.remove(&address);
        } else {
            acct.storage.insert(address, value);
        }
    }

    /// Sum of all balances; `None` if it does not fit in 256 bits.
    pub fn total_supply(&self) -> Option<U256> {
        self.accounts
            .values()
            .try_fold(U256::zero(), |acc, a| acc.checked_add(a.balance))
    }

    /// The contract-storage part of the state: every account with a
    /// non-empty store.
    pub fn storage_projection(&self) -> BTreeMap<AccountId, BTreeMap<U256, U256>> {
        self.accounts
            .iter()
            .filter(|(_, a)| !a.storage.is_empty())
            .map(|(id, a)| (*id, a.storage.clone()))
            .collect()
    }

    pub fn root(&self) -> Digest {
        state_root(self)
    }
}

impl Encode for DbState {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(STATE_FORMAT);
        enc.u32(self.accounts.len() as u32);
        for (id, acct) in &self.accounts {
            enc.put(id).word(acct.nonce).word(acct.balance);
            enc.put(&acct.code.as_deref().cloned());
            enc.u32(acct.storage.len() as u32);
            for (k, v) in &acct.storage {
                enc.word(*k).word(*v);
            }
        }
    }
}

impl Decode for DbState {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let version = dec.u8()?;
        if version != STATE_FORMAT {
            return Err(DecodeError::Version(version));
        }
        let n = dec.u32()?;
        let mut accounts = BTreeMap::new();
        let mut last: Option<AccountId> = None;
        for _ in 0..n {
            let id: AccountId = dec.get()?;
            if last.is_some_and(|l| l >= id) {
                return Err(DecodeError::Invalid("accounts not strictly sorted"));
            }
            last = Some(id);
            let nonce = dec.word()?;
            let balance = dec.word()?;
            let code: Option<Script> = dec.get()?;
            let slots = dec.u32()?;
            let mut storage = BTreeMap::new();
            let mut last_slot: Option<U256> = None;
            for _ in 0..slots {
                let (k, v) = (dec.word()?, dec.word()?);
                if last_slot.is_some_and(|l| l >= k) {
                    return Err(DecodeError::Invalid("storage not strictly sorted"));
                }
                if v.is_zero() {
                    return Err(DecodeError::Invalid("zero storage value"));
                }
                last_slot = Some(k);
                storage.insert(k, v);
            }
            if code.is_none() && !storage.is_empty() {
                return Err(DecodeError::Invalid("EOA with contract storage"));
            }
            accounts.insert(
                id,
                AccountState {
                    nonce,
                    balance,
                    code: code.map(Arc::new),
                    storage,
                },
            );
        }
        Ok(DbState { accounts })
    }
}

/// What an account leaf commits to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountSummary {
    pub nonce: U256,
    pub balance: U256,
    pub code_hash: Option<Digest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeafKey {
    Account(AccountId),
    Storage(AccountId, U256),
}

impl LeafKey {
    pub fn for_query(account: AccountId, address: Option<U256>) -> Self {
        match address {
            None => LeafKey::Account(account),
            Some(a) => LeafKey::Storage(account, a),
        }
    }

    fn bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        match self {
            LeafKey::Account(id) => {
                enc.u8(0x00).put(id);
            }
            LeafKey::Storage(id, addr) => {
                enc.u8(0x01).put(id).word(*addr);
            }
        }
        enc.into_bytes()
    }
}

impl PartialOrd for LeafKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LeafKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bytes().cmp(&other.bytes())
    }
}

/// The committed value returned by [`prove`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeafValue {
    Account(AccountSummary),
    Storage(U256),
}

impl LeafValue {
    fn bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        match self {
            LeafValue::Account(s) => {
                enc.u8(0x00).word(s.nonce).word(s.balance).put(&s.code_hash);
            }
            LeafValue::Storage(v) => {
                enc.u8(0x01).word(*v);
            }
        }
        enc.into_bytes()
    }

    pub fn as_storage(&self) -> Option<U256> {
        match self {
            LeafValue::Storage(v) => Some(*v),
            LeafValue::Account(_) => None,
        }
    }
}

fn leaf_hash(key: &LeafKey, value: &LeafValue) -> Digest {
    tagged_hash(LEAF_TAG, &[&key.bytes(), &value.bytes()])
}

fn node_hash(left: &Digest, right: &Digest) -> Digest {
    tagged_hash(NODE_TAG, &[left.as_bytes(), right.as_bytes()])
}

fn bind_count(count: u64, top: &Digest) -> Digest {
    tagged_hash(ROOT_TAG, &[&count.to_be_bytes(), top.as_bytes()])
}

/// Position of a sibling relative to the node on the proof path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateProof {
    pub leaf_count: u64,
    pub index: u64,
    /// Sibling digests from the leaf level upwards. Levels where the node is
    /// promoted without a sibling have no entry.
    pub path: Vec<(Digest, Side)>,
}

impl StateProof {
    /// Recomputes the root committed by this proof for a given leaf digest,
    /// or `None` when the path shape does not match `(index, leaf_count)`.
    fn fold(&self, leaf: Digest) -> Option<Digest> {
        if self.index >= self.leaf_count {
            return None;
        }
        let mut idx = self.index;
        let mut width = self.leaf_count;
        let mut acc = leaf;
        let mut steps = self.path.iter();
        while width > 1 {
            let promoted = idx == width - 1 && width % 2 == 1;
            if !promoted {
                let (sibling, side) = steps.next()?;
                let expected = if idx % 2 == 0 {
                    Side::Right
                } else {
                    Side::Left
                };
                if *side != expected {
                    return None;
                }
                acc = match side {
                    Side::Right => node_hash(&acc, sibling),
                    Side::Left => node_hash(sibling, &acc),
                };
            }
            idx /= 2;
            width = width.div_ceil(2);
        }
        if steps.next().is_some() {
            return None;
        }
        Some(bind_count(self.leaf_count, &acc))
    }
}

/// Proof that a key is not committed: the two adjacent leaves that bracket
/// it, each with its inclusion proof.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsenceProof {
    pub leaf_count: u64,
    pub left: Option<(LeafKey, LeafValue, StateProof)>,
    pub right: Option<(LeafKey, LeafValue, StateProof)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StateError {
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("account {0} is not a contract")]
    NotAContract(AccountId),
    #[error("account {account} has no value at address {address:#x}")]
    UnknownAddress { account: AccountId, address: U256 },
    #[error("key is present; use an inclusion proof")]
    KeyPresent,
}

/// The built Merkle tree over a state's leaves.
#[derive(Debug, Clone)]
pub struct Commitment {
    leaves: Vec<(LeafKey, LeafValue)>,
    levels: Vec<Vec<Digest>>,
    root: Digest,
}

impl Commitment {
    pub fn build(db: &DbState) -> Self {
        let mut leaves = Vec::new();
        for (id, acct) in &db.accounts {
            leaves.push((LeafKey::Account(*id), LeafValue::Account(acct.summary())));
            for (addr, val) in &acct.storage {
                if !val.is_zero() {
                    leaves.push((LeafKey::Storage(*id, *addr), LeafValue::Storage(*val)));
                }
            }
        }
        leaves.sort_by(|a, b| a.0.cmp(&b.0));

        let mut levels = vec![leaves
            .iter()
            .map(|(k, v)| leaf_hash(k, v))
            .collect::<Vec<_>>()];
        while levels.last().unwrap().len() > 1 {
            let next = levels
                .last()
                .unwrap()
                .chunks(2)
                .map(|pair| match pair {
                    [l, r] => node_hash(l, r),
                    [single] => *single,
                    _ => unreachable!(),
                })
                .collect();
            levels.push(next);
        }
        let top = levels
            .last()
            .unwrap()
            .first()
            .copied()
            .unwrap_or(Digest::ZERO);
        let root = bind_count(leaves.len() as u64, &top);
        Commitment {
            leaves,
            levels,
            root,
        }
    }

    pub fn root(&self) -> Digest {
        self.root
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    fn position(&self, key: &LeafKey) -> Result<usize, usize> {
        self.leaves.binary_search_by(|(k, _)| k.cmp(key))
    }

    fn proof_at(&self, index: usize) -> StateProof {
        let mut path = Vec::new();
        let mut idx = index;
        for level in &self.levels[..self.levels.len() - 1] {
            let sibling = idx ^ 1;
            if sibling < level.len() {
                let side = if idx % 2 == 0 {
                    Side::Right
                } else {
                    Side::Left
                };
                path.push((level[sibling], side));
            }
            idx /= 2;
        }
        StateProof {
            leaf_count: self.leaves.len() as u64,
            index: index as u64,
            path,
        }
    }

    pub fn prove_key(&self, key: &LeafKey) -> Option<(LeafValue, StateProof)> {
        let idx = self.position(key).ok()?;
        Some((self.leaves[idx].1, self.proof_at(idx)))
    }

    pub fn prove_absent(&self, key: &LeafKey) -> Result<AbsenceProof, StateError> {
        let insert_at = match self.position(key) {
            Ok(_) => return Err(StateError::KeyPresent),
            Err(i) => i,
        };
        let entry = |i: usize| {
            let (k, v) = self.leaves[i];
            (k, v, self.proof_at(i))
        };
        Ok(AbsenceProof {
            leaf_count: self.leaves.len() as u64,
            left: insert_at.checked_sub(1).map(entry),
            right: (insert_at < self.leaves.len()).then(|| entry(insert_at)),
        })
    }
}

pub fn state_root(db: &DbState) -> Digest {
    Commitment::build(db).root()
}

/// Root of the empty state.
pub fn empty_root() -> Digest {
    bind_count(0, &Digest::ZERO)
}

/// Proves an account summary (`address == None`) or a storage value.
pub fn prove(
    db: &DbState,
    account: AccountId,
    address: Option<U256>,
) -> Result<(LeafValue, StateProof), StateError> {
    let acct = db
        .get(&account)
        .ok_or(StateError::UnknownAccount(account))?;
    if let Some(address) = address {
        if !acct.is_contract() {
            return Err(StateError::NotAContract(account));
        }
        if acct.storage.get(&address).map_or(true, |v| v.is_zero()) {
            return Err(StateError::UnknownAddress { account, address });
        }
    }
    let key = LeafKey::for_query(account, address);
    Ok(Commitment::build(db)
        .prove_key(&key)
        .expect("present key has a leaf"))
}

pub fn prove_absent(db: &DbState, key: &LeafKey) -> Result<AbsenceProof, StateError> {
    Commitment::build(db).prove_absent(key)
}

/// True iff `proof` binds `(account, address, value)` to `root`.
pub fn verify(
    root: &Digest,
    account: AccountId,
    address: Option<U256>,
    value: &LeafValue,
    proof: &StateProof,
) -> bool {
    let kind_matches = matches!(
        (address, value),
        (None, LeafValue::Account(_)) | (Some(_), LeafValue::Storage(_))
    );
    if !kind_matches {
        return false;
    }
    if let LeafValue::Storage(v) = value {
        if v.is_zero() {
            return false;
        }
    }
    let key = LeafKey::for_query(account, address);
    proof
        .fold(leaf_hash(&key, value))
        .is_some_and(|r| &r == root)
}

/// True iff `proof` shows that `key` has no leaf under `root`.
pub fn verify_absent(root: &Digest, key: &LeafKey, proof: &AbsenceProof) -> bool {
    let check = |entry: &(LeafKey, LeafValue, StateProof)| {
        let (k, v, p) = entry;
        p.leaf_count == proof.leaf_count && p.fold(leaf_hash(k, v)).is_some_and(|r| &r == root)
    };
    match (&proof.left, &proof.right) {
        (None, None) => proof.leaf_count == 0 && *root == empty_root(),
        (Some(l), None) => check(l) && l.0 < *key && l.2.index + 1 == proof.leaf_count,
        (None, Some(r)) => check(r) && *key < r.0 && r.2.index == 0,
        (Some(l), Some(r)) => {
            check(l) && check(r) && l.0 < *key && *key < r.0 && l.2.index + 1 == r.2.index
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::script::Instr;
    use proptest::prelude::*;

    fn sample_db() -> DbState {
        let mut db = DbState::new();
        db.accounts
            .insert(AccountId::named("alice"), AccountState::eoa(100.into()));
        db.accounts
            .insert(AccountId::named("bob"), AccountState::eoa(7.into()));
        let c = AccountId::named("counter");
        db.accounts.insert(
            c,
            AccountState::contract(Script::new(vec![Instr::Return]), 5.into()),
        );
        db.set_storage(c, 1.into(), 42.into());
        db.set_storage(c, 9.into(), 3.into());
        db
    }

    #[test]
    fn empty_root_is_fixed_constant() {
        assert_eq!(state_root(&DbState::new()), empty_root());
        assert_eq!(
            empty_root(),
            tagged_hash(ROOT_TAG, &[&0u64.to_be_bytes(), Digest::ZERO.as_bytes()])
        );
    }

    #[test]
    fn one_balance_change_changes_root() {
        let a = sample_db();
        let mut b = a.clone();
        b.account_mut(AccountId::named("bob")).balance = 8.into();
        assert_ne!(state_root(&a), state_root(&b));
    }

    #[test]
    fn root_survives_serialization_roundtrip() {
        let db = sample_db();
        let back = DbState::from_bytes(&db.to_bytes()).unwrap();
        assert_eq!(back, db);
        assert_eq!(state_root(&back), state_root(&db));
    }

    #[test]
    fn decode_rejects_eoa_with_storage() {
        let mut db = DbState::new();
        let id = AccountId::named("x");
        db.accounts.insert(id, AccountState::eoa(1.into()));
        db.accounts
            .get_mut(&id)
            .unwrap()
            .storage
            .insert(1.into(), 1.into());
        assert_eq!(
            DbState::from_bytes(&db.to_bytes()),
            Err(DecodeError::Invalid("EOA with contract storage"))
        );
    }

    #[test]
    fn prove_verify_roundtrip_and_wrong_root() {
        let db = sample_db();
        let root = state_root(&db);
        let c = AccountId::named("counter");
        let (v, p) = prove(&db, c, Some(1.into())).unwrap();
        assert_eq!(v, LeafValue::Storage(42.into()));
        assert!(verify(&root, c, Some(1.into()), &v, &p));
        assert!(!verify(&empty_root(), c, Some(1.into()), &v, &p));
        assert!(!verify(
            &root,
            c,
            Some(1.into()),
            &LeafValue::Storage(43.into()),
            &p
        ));
        assert!(!verify(&root, c, Some(2.into()), &v, &p));

        let alice = AccountId::named("alice");
        let (v, p) = prove(&db, alice, None).unwrap();
        assert!(verify(&root, alice, None, &v, &p));
        assert!(!verify(&root, alice, Some(0.into()), &v, &p));
    }

    #[test]
    fn prove_error_paths() {
        let db = sample_db();
        let nobody = AccountId::named("nobody");
        assert_eq!(
            prove(&db, nobody, None),
            Err(StateError::UnknownAccount(nobody))
        );
        let alice = AccountId::named("alice");
        assert_eq!(
            prove(&db, alice, Some(1.into())),
            Err(StateError::NotAContract(alice))
        );
        let c = AccountId::named("counter");
        assert!(matches!(
            prove(&db, c, Some(2.into())),
            Err(StateError::UnknownAddress { .. })
        ));
    }

    #[test]
    fn flipping_any_sibling_breaks_verification() {
        let db = sample_db();
        let root = state_root(&db);
        let c = AccountId::named("counter");
        let (v, p) = prove(&db, c, Some(9.into())).unwrap();
        assert!(!p.path.is_empty());
        for pos in 0..p.path.len() {
            for bit in [0usize, 77, 255] {
                let mut bad = p.clone();
                bad.path[pos].0 .0[bit / 8] ^= 1 << (bit % 8);
                assert!(
                    !verify(&root, c, Some(9.into()), &v, &bad),
                    "pos {pos} bit {bit}"
                );
            }
            let mut flipped_side = p.clone();
            flipped_side.path[pos].1 = match p.path[pos].1 {
                Side::Left => Side::Right,
                Side::Right => Side::Left,
            };
            assert!(!verify(&root, c, Some(9.into()), &v, &flipped_side));
        }
    }

    #[test]
    fn absence_proofs() {
        let db = sample_db();
        let root = state_root(&db);
        let c = AccountId::named("counter");
        for key in [
            LeafKey::Storage(c, 5.into()),
            LeafKey::Account(AccountId::named("carol")),
            LeafKey::Storage(AccountId::named("zz"), U256::MAX),
        ] {
            let proof = prove_absent(&db, &key).unwrap();
            assert!(verify_absent(&root, &key, &proof), "{key:?}");
        }
        let present = LeafKey::Storage(c, 1.into());
        assert_eq!(prove_absent(&db, &present), Err(StateError::KeyPresent));

        // An absence proof for one key does not transfer to a present key.
        let gap = LeafKey::Storage(c, 5.into());
        let proof = prove_absent(&db, &gap).unwrap();
        assert!(!verify_absent(&root, &present, &proof));

        let empty = DbState::new();
        let proof = prove_absent(&empty, &gap).unwrap();
        assert!(verify_absent(&empty_root(), &gap, &proof));
        assert!(!verify_absent(&root, &gap, &proof));
    }

    #[test]
    fn absence_proof_cannot_skip_a_leaf() {
        let db = sample_db();
        let root = state_root(&db);
        let c = AccountId::named("counter");
        let present = LeafKey::Storage(c, 1.into());
        let commit = Commitment::build(&db);
        let idx = commit.position(&present).unwrap();
        let entry = |i: usize| {
            let (k, v) = commit.leaves[i];
            (k, v, commit.proof_at(i))
        };
        // Bracket the present key with its two neighbours.
        let forged = AbsenceProof {
            leaf_count: commit.leaf_count() as u64,
            left: Some(entry(idx - 1)),
            right: Some(entry(idx + 1)),
        };
        assert!(!verify_absent(&root, &present, &forged));
    }

    fn arb_db() -> impl Strategy<Value = DbState> {
        proptest::collection::btree_map(
            any::<[u8; 4]>(),
            (
                any::<u64>(),
                proptest::collection::btree_map(0u64..50, 1u64..1000, 0..4),
            ),
            1..12,
        )
        .prop_map(|m| {
            let mut db = DbState::new();
            for (seed, (bal, slots)) in m {
                let id = AccountId(sha256(&seed));
                if slots.is_empty() {
                    db.accounts.insert(id, AccountState::eoa(bal.into()));
                } else {
                    let mut acct = AccountState::contract(Script::default(), bal.into());
                    acct.storage = slots
                        .into_iter()
                        .map(|(k, v)| (k.into(), v.into()))
                        .collect();
                    db.accounts.insert(id, acct);
                }
            }
            db
        })
    }

    proptest! {
        #[test]
        fn every_leaf_has_a_verifying_proof(db in arb_db()) {
            let commit = Commitment::build(&db);
            for (k, v) in &commit.leaves {
                let (pv, p) = commit.prove_key(k).unwrap();
                prop_assert_eq!(&pv, v);
                let (acct, addr) = match k {
                    LeafKey::Account(a) => (*a, None),
                    LeafKey::Storage(a, s) => (*a, Some(*s)),
                };
                prop_assert!(verify(&commit.root(), acct, addr, v, &p));
            }
        }

        #[test]
        fn root_is_insertion_order_independent(db in arb_db()) {
            let mut reversed = DbState::new();
            for (id, acct) in db.accounts.iter().rev() {
                reversed.accounts.insert(*id, acct.clone());
            }
            prop_assert_eq!(state_root(&reversed), state_root(&db));
        }
    }
}
