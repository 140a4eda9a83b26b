//! Content-addressable block store forming a tree rooted at genesis.
//!
//! # Block byte layout (format 1)
//!
//! | field            | encoding                                        |
//! |------------------|-------------------------------------------------|
//! | format           | `u8` = 1                                        |
//! | parent           | `0x00`, or `0x01` + 32-byte id                  |
//! | height           | `u64` big-endian                                |
//! | epoch            | `u64` big-endian                                |
//! | fork_id          | 32 bytes                                        |
//! | txs              | `u32` count + each transaction (see `vm::txn`)  |
//! | transition       | optional committee transition record            |
//! | state_root       | 32 bytes                                        |
//! | committee_sigs   | `u32` count + (32-byte key, 64-byte sig), keys strictly ascending |
//!
//! The block id is the configured hasher applied to this byte string. The
//! signed payload is the same layout with the signature list omitted and a
//! domain tag prepended.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::codec::{Decode, DecodeError, Decoder, Encode, Encoder};
use crate::consensus::TransitionRecord;
use crate::hash::{BlockHasher, Digest, ForkId, Sha256Hasher};
use crate::keys::{PublicKey, Signature};
use crate::vm::txn::SignedTxn;

pub const BLOCK_FORMAT: u8 = 1;
const HEADER_TAG: &[u8] = b"leashsim/block-signing/1";
pub const FIXTURE_HEADER: &str = "leashsim-blocks/1";

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockId(pub Digest);

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block({})", self.0.short())
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.short())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub parent: Option<BlockId>,
    pub height: u64,
    pub epoch: u64,
    pub fork_id: ForkId,
    pub txs: Vec<SignedTxn>,
    /// Committee change announced by this block; effective from its child.
    pub transition: Option<TransitionRecord>,
    pub state_root: Digest,
    pub committee_sigs: BTreeMap<PublicKey, Signature>,
}

impl Block {
    pub fn genesis(fork_id: ForkId, state_root: Digest) -> Self {
        Block {
            parent: None,
            height: 0,
            epoch: 0,
            fork_id,
            txs: Vec::new(),
            transition: None,
            state_root,
            committee_sigs: BTreeMap::new(),
        }
    }

    fn encode_unsigned(&self, enc: &mut Encoder) {
        enc.u8(BLOCK_FORMAT);
        enc.put(&self.parent.map(|p| p.0));
        enc.u64(self.height).u64(self.epoch);
        enc.digest(&self.fork_id.0);
        enc.put(&self.txs);
        enc.put(&self.transition);
        enc.digest(&self.state_root);
    }

    /// Bytes covered by committee signatures (everything but the signatures).
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(HEADER_TAG);
        self.encode_unsigned(&mut enc);
        enc.into_bytes()
    }

    pub fn id_with(&self, hasher: &dyn BlockHasher) -> BlockId {
        BlockId(hasher.digest(&self.to_bytes()))
    }

    /// Id under the default SHA-256 hasher.
    pub fn id(&self) -> BlockId {
        self.id_with(&Sha256Hasher)
    }
}

impl Encode for Block {
    fn encode(&self, enc: &mut Encoder) {
        self.encode_unsigned(enc);
        enc.u32(self.committee_sigs.len() as u32);
        for (k, s) in &self.committee_sigs {
            enc.put(k).put(s);
        }
    }
}

impl Decode for Block {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let version = dec.u8()?;
        if version != BLOCK_FORMAT {
            return Err(DecodeError::Version(version));
        }
        let parent: Option<Digest> = dec.get()?;
        let height = dec.u64()?;
        let epoch = dec.u64()?;
        let fork_id = ForkId(dec.digest()?);
        let txs = dec.get()?;
        let transition = dec.get()?;
        let state_root = dec.digest()?;
        let n = dec.u32()?;
        let mut committee_sigs = BTreeMap::new();
        let mut last: Option<PublicKey> = None;
        for _ in 0..n {
            let k: PublicKey = dec.get()?;
            if last.is_some_and(|l| l >= k) {
                return Err(DecodeError::Invalid("signatures not strictly sorted"));
            }
            last = Some(k);
            committee_sigs.insert(k, dec.get()?);
        }
        Ok(Block {
            parent: parent.map(BlockId),
            height,
            epoch,
            fork_id,
            txs,
            transition,
            state_root,
            committee_sigs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("parent {0} is not in the store")]
    MissingParent(BlockId),
    #[error("height {found} does not follow parent height (expected {expected})")]
    HeightMismatch { expected: u64, found: u64 },
    #[error("a genesis block is already stored")]
    GenesisConflict,
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("cannot go {k} hops up from depth {depth}")]
    PastRoot { depth: u64, k: u64 },
    #[error("stored block {0} no longer hashes to its key")]
    KeyMismatch(BlockId),
    #[error("parent cycle detected at {0}")]
    Cycle(BlockId),
}

/// Immutable-after-insert block store.
#[derive(Clone)]
pub struct BlockTree {
    hasher: Arc<dyn BlockHasher>,
    blocks: BTreeMap<BlockId, Block>,
    depth_cache: HashMap<BlockId, u64>,
    children: BTreeMap<BlockId, Vec<BlockId>>,
    genesis: Option<BlockId>,
}

impl fmt::Debug for BlockTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockTree")
            .field("hasher", &self.hasher.describe())
            .field("blocks", &self.blocks.len())
            .field("genesis", &self.genesis)
            .finish()
    }
}

impl Default for BlockTree {
    fn default() -> Self {
        Self::new()
    }
}

impl BlockTree {
    pub fn new() -> Self {
        Self::with_hasher(Arc::new(Sha256Hasher))
    }

    pub fn with_hasher(hasher: Arc<dyn BlockHasher>) -> Self {
        BlockTree {
            hasher,
            blocks: BTreeMap::new(),
            depth_cache: HashMap::new(),
            children: BTreeMap::new(),
            genesis: None,
        }
    }

    pub fn hasher(&self) -> &Arc<dyn BlockHasher> {
        &self.hasher
    }

    /// Replaces the hasher. Fails, leaving the tree unchanged, if any stored
    /// block would move to a different key.
    pub fn rebind_hasher(&mut self, hasher: Arc<dyn BlockHasher>) -> Result<(), TreeError> {
        for (id, block) in &self.blocks {
            if block.id_with(hasher.as_ref()) != *id {
                return Err(TreeError::KeyMismatch(*id));
            }
        }
        self.hasher = hasher;
        Ok(())
    }

    pub fn genesis(&self) -> Option<BlockId> {
        self.genesis
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.blocks.contains_key(id)
    }

    pub fn get(&self, id: &BlockId) -> Result<&Block, TreeError> {
        self.blocks.get(id).ok_or(TreeError::UnknownBlock(*id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BlockId, &Block)> {
        self.blocks.iter()
    }

    pub fn children(&self, id: &BlockId) -> &[BlockId] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn id_of(&self, block: &Block) -> BlockId {
        block.id_with(self.hasher.as_ref())
    }

    /// Stores `block` under its content hash. Idempotent for identical blocks.
    pub fn insert_block(&mut self, block: Block) -> Result<BlockId, TreeError> {
        let id = self.id_of(&block);
        if self.blocks.contains_key(&id) {
            return Ok(id);
        }
        let depth = match block.parent {
            None => {
                if self.genesis.is_some() {
                    return Err(TreeError::GenesisConflict);
                }
                if block.height != 0 {
                    return Err(TreeError::HeightMismatch {
                        expected: 0,
                        found: block.height,
                    });
                }
                0
            }
            Some(parent) => {
                let parent_block = self
                    .blocks
                    .get(&parent)
                    .ok_or(TreeError::MissingParent(parent))?;
                let expected = parent_block.height + 1;
                if block.height != expected {
                    return Err(TreeError::HeightMismatch {
                        expected,
                        found: block.height,
                    });
                }
                self.depth_cache[&parent] + 1
            }
        };
        if let Some(parent) = block.parent {
            self.children.entry(parent).or_default().push(id);
        } else {
            self.genesis = Some(id);
        }
        self.depth_cache.insert(id, depth);
        self.blocks.insert(id, block);
        Ok(id)
    }

    /// Number of parent edges from `n` to genesis.
    pub fn depth(&self, n: &BlockId) -> Result<u64, TreeError> {
        self.depth_cache
            .get(n)
            .copied()
            .ok_or(TreeError::UnknownBlock(*n))
    }

    /// Depth computed by walking parent pointers, without the cache.
    pub fn depth_by_walk(&self, n: &BlockId) -> Result<u64, TreeError> {
        let mut cur = self.get(n)?;
        let mut edges = 0u64;
        while let Some(p) = cur.parent {
            edges += 1;
            if edges as usize > self.blocks.len() {
                return Err(TreeError::Cycle(*n));
            }
            cur = self.get(&p)?;
        }
        Ok(edges)
    }

    pub fn parent(&self, n: &BlockId) -> Result<Option<BlockId>, TreeError> {
        Ok(self.get(n)?.parent)
    }

    /// The ancestor `k` hops up from `n`.
    pub fn up(&self, n: &BlockId, k: u64) -> Result<BlockId, TreeError> {
        let depth = self.depth(n)?;
        if k > depth {
            return Err(TreeError::PastRoot { depth, k });
        }
        let mut cur = *n;
        for _ in 0..k {
            cur = self
                .get(&cur)?
                .parent
                .expect("depth accounts for every parent edge");
        }
        Ok(cur)
    }

    /// Reflexive: a node is its own ancestor.
    pub fn is_ancestor_of(&self, n1: &BlockId, n2: &BlockId) -> Result<bool, TreeError> {
        let d1 = self.depth(n1)?;
        let d2 = self.depth(n2)?;
        if d1 > d2 {
            return Ok(false);
        }
        Ok(self.up(n2, d2 - d1)? == *n1)
    }

    pub fn lowest_common_ancestor(&self, a: &BlockId, b: &BlockId) -> Result<BlockId, TreeError> {
        let (da, db) = (self.depth(a)?, self.depth(b)?);
        let common = da.min(db);
        let mut x = self.up(a, da - common)?;
        let mut y = self.up(b, db - common)?;
        while x != y {
            x = self
                .get(&x)?
                .parent
                .expect("distinct nodes below a shared root");
            y = self
                .get(&y)?
                .parent
                .expect("distinct nodes below a shared root");
        }
        Ok(x)
    }

    /// Edge count of the tree path between `n1` and `n2`, through their
    /// lowest common ancestor.
    pub fn dist(&self, n1: &BlockId, n2: &BlockId) -> Result<u64, TreeError> {
        let lca = self.lowest_common_ancestor(n1, n2)?;
        let dl = self.depth(&lca)?;
        Ok(self.depth(n1)? - dl + self.depth(n2)? - dl)
    }

    /// Block ids from genesis to `tip`, inclusive.
    pub fn path_from_genesis(&self, tip: &BlockId) -> Result<Vec<BlockId>, TreeError> {
        let mut path = Vec::with_capacity(self.depth(tip)? as usize + 1);
        let mut cur = Some(*tip);
        while let Some(id) = cur {
            path.push(id);
            cur = self.get(&id)?.parent;
        }
        path.reverse();
        Ok(path)
    }

    /// Re-serializes and re-hashes every stored block and walks every parent
    /// chain to the root.
    pub fn verify_content_addressing(&self) -> Result<(), TreeError> {
        for (id, block) in &self.blocks {
            if self.id_of(block) != *id {
                return Err(TreeError::KeyMismatch(*id));
            }
            if self.depth_by_walk(id)? != self.depth(id)? {
                return Err(TreeError::Cycle(*id));
            }
        }
        Ok(())
    }
}

/// Renders blocks as a fixture file: a header line, then one hex-encoded
/// block per line.
pub fn write_blocks_fixture(blocks: &[Block]) -> String {
    let mut out = String::from(FIXTURE_HEADER);
    out.push('\n');
    for b in blocks {
        out.push_str(&hex::encode(b.to_bytes()));
        out.push('\n');
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("missing or unsupported header line (expected `{FIXTURE_HEADER}`)")]
    Header,
    #[error("line {line}: {source}")]
    Hex {
        line: usize,
        source: hex::FromHexError,
    },
    #[error("line {line}: {source}")]
    Decode { line: usize, source: DecodeError },
}

pub fn parse_blocks_fixture(text: &str) -> Result<Vec<Block>, FixtureError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(FIXTURE_HEADER) {
        return Err(FixtureError::Header);
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line = i + 2;
            let raw = hex::decode(l.trim()).map_err(|source| FixtureError::Hex { line, source })?;
            Block::from_bytes(&raw).map_err(|source| FixtureError::Decode { line, source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::sha256;
    use proptest::prelude::*;

    fn child(parent: BlockId, height: u64, salt: u8) -> Block {
        Block {
            parent: Some(parent),
            height,
            epoch: 0,
            fork_id: ForkId::named("test"),
            txs: vec![],
            transition: None,
            state_root: sha256(&[salt]),
            committee_sigs: BTreeMap::new(),
        }
    }

    fn linear(n: usize) -> (BlockTree, Vec<BlockId>) {
        let mut tree = BlockTree::new();
        let g = tree
            .insert_block(Block::genesis(ForkId::named("test"), Digest::ZERO))
            .unwrap();
        let mut ids = vec![g];
        for h in 1..n as u64 {
            let id = tree
                .insert_block(child(*ids.last().unwrap(), h, 0))
                .unwrap();
            ids.push(id);
        }
        (tree, ids)
    }

    #[test]
    fn genesis_id_is_hash_of_serialization() {
        let mut tree = BlockTree::new();
        let g = Block::genesis(ForkId::named("test"), Digest::ZERO);
        let id = tree.insert_block(g.clone()).unwrap();
        assert_eq!(id.0, sha256(&g.to_bytes()));
        assert_eq!(tree.depth(&id).unwrap(), 0);
    }

    #[test]
    fn insertion_errors() {
        let (mut tree, ids) = linear(3);
        assert_eq!(
            tree.insert_block(Block::genesis(ForkId::named("other"), Digest::ZERO)),
            Err(TreeError::GenesisConflict)
        );
        assert_eq!(
            tree.insert_block(child(ids[1], 5, 0)),
            Err(TreeError::HeightMismatch {
                expected: 2,
                found: 5
            })
        );
        let ghost = BlockId(sha256(b"ghost"));
        assert_eq!(
            tree.insert_block(child(ghost, 1, 0)),
            Err(TreeError::MissingParent(ghost))
        );
        // Idempotent re-insert.
        let again = tree.insert_block(child(ids[0], 1, 0)).unwrap();
        assert_eq!(again, ids[1]);
        assert_eq!(tree.len(), 3);
    }

    #[test]
    fn depth_on_linear_chain() {
        let (tree, ids) = linear(10);
        assert_eq!(tree.depth(&ids[9]).unwrap(), 9);
        assert_eq!(tree.depth_by_walk(&ids[9]).unwrap(), 9);
        assert_eq!(tree.depth(&ids[1]).unwrap(), 1);
    }

    #[test]
    fn up_examples() {
        let (tree, ids) = linear(10);
        assert_eq!(tree.up(&ids[9], 0).unwrap(), ids[9]);
        assert_eq!(tree.up(&ids[9], 9).unwrap(), ids[0]);
        assert_eq!(tree.up(&ids[5], 2).unwrap(), ids[3]);
        assert_eq!(
            tree.up(&ids[5], 6),
            Err(TreeError::PastRoot { depth: 5, k: 6 })
        );
    }

    #[test]
    fn branches_dist_and_ancestry() {
        let (mut tree, ids) = linear(4);
        let g = ids[0];
        let a1 = ids[1];
        let a2 = ids[2];
        let b1 = tree.insert_block(child(g, 1, 9)).unwrap();
        let b2 = tree.insert_block(child(b1, 2, 9)).unwrap();
        assert_eq!(tree.dist(&a2, &a2).unwrap(), 0);
        assert_eq!(tree.dist(&g, &ids[3]).unwrap(), 3);
        assert_eq!(tree.dist(&a2, &b2).unwrap(), 4);
        assert_eq!(tree.dist(&a1, &b2).unwrap(), 3);
        assert!(tree.is_ancestor_of(&g, &b2).unwrap());
        assert!(tree.is_ancestor_of(&a2, &a2).unwrap());
        assert!(!tree.is_ancestor_of(&ids[3], &g).unwrap());
        assert!(!tree.is_ancestor_of(&a2, &b2).unwrap());
        assert!(!tree.is_ancestor_of(&b2, &a2).unwrap());
        assert_eq!(tree.children(&g).len(), 2);
        let ghost = BlockId(sha256(b"ghost"));
        assert_eq!(tree.depth(&ghost), Err(TreeError::UnknownBlock(ghost)));
        assert_eq!(
            tree.is_ancestor_of(&g, &ghost),
            Err(TreeError::UnknownBlock(ghost))
        );
    }

    #[test]
    fn fixture_roundtrip_preserves_ids() {
        let (tree, ids) = linear(5);
        let blocks: Vec<Block> = ids.iter().map(|i| tree.get(i).unwrap().clone()).collect();
        let text = write_blocks_fixture(&blocks);
        let back = parse_blocks_fixture(&text).unwrap();
        assert_eq!(back, blocks);
        for (b, id) in back.iter().zip(&ids) {
            assert_eq!(b.id(), *id);
        }
        assert!(matches!(
            parse_blocks_fixture("nope\n"),
            Err(FixtureError::Header)
        ));
    }

    #[test]
    fn rebind_hasher_refuses_key_changes() {
        #[derive(Debug)]
        struct Other;
        impl BlockHasher for Other {
            fn digest(&self, bytes: &[u8]) -> Digest {
                sha256(&[bytes, b"!"].concat())
            }
            fn describe(&self) -> String {
                "other".into()
            }
        }
        let (mut tree, _) = linear(3);
        assert!(matches!(
            tree.rebind_hasher(Arc::new(Other)),
            Err(TreeError::KeyMismatch(_))
        ));
        assert_eq!(tree.hasher().describe(), "sha256");
        tree.rebind_hasher(Arc::new(Sha256Hasher)).unwrap();
    }

    /// Random trees: each new block attaches to a uniformly chosen earlier block.
    fn arb_tree() -> impl Strategy<Value = (BlockTree, Vec<BlockId>)> {
        proptest::collection::vec(any::<prop::sample::Index>(), 1..40).prop_map(|choices| {
            let mut tree = BlockTree::new();
            let g = tree
                .insert_block(Block::genesis(ForkId::named("t"), Digest::ZERO))
                .unwrap();
            let mut ids = vec![g];
            for (n, c) in choices.iter().enumerate() {
                let parent = ids[c.index(ids.len())];
                let h = tree.depth(&parent).unwrap() + 1;
                ids.push(tree.insert_block(child(parent, h, n as u8)).unwrap());
            }
            (tree, ids)
        })
    }

    proptest! {
        #[test]
        fn tree_navigation_laws((tree, ids) in arb_tree(), a in any::<prop::sample::Index>(),
                                b in any::<prop::sample::Index>(), c in any::<prop::sample::Index>()) {
            let (a, b, c) = (ids[a.index(ids.len())], ids[b.index(ids.len())], ids[c.index(ids.len())]);
            let da = tree.depth(&a).unwrap();
            for k in 0..=da {
                let u = tree.up(&a, k).unwrap();
                prop_assert_eq!(tree.depth(&u).unwrap(), da - k);
                prop_assert!(tree.is_ancestor_of(&u, &a).unwrap());
            }
            let db = tree.depth(&b).unwrap();
            let by_up = (0..=db).any(|k| tree.up(&b, k).unwrap() == a);
            prop_assert_eq!(tree.is_ancestor_of(&a, &b).unwrap(), by_up);
            prop_assert_eq!(tree.dist(&a, &b).unwrap(), tree.dist(&b, &a).unwrap());
            prop_assert!(tree.dist(&a, &c).unwrap() <= tree.dist(&a, &b).unwrap() + tree.dist(&b, &c).unwrap());
            prop_assert!(tree.verify_content_addressing().is_ok());
        }
    }
}
