//! Checkpoint/replay after a semantic fix, with hash swizzling.
//!
//! Replaying blocks `z..=n` under amended VM semantics changes their state
//! roots and therefore their hashes. The swizzler `g` swaps each pair
//! `{h(B_j), h(B'_j)}` and fixes every other digest, so `h' = g . h` maps
//! each forked block to its original id. Parent pointers, `blockhash`
//! results and leash anchors taken before the fork all keep their values.
//!
//! `h'` is collision resistant iff `h` is: `g` is a fixed permutation, so a
//! collision `h'(x) = h'(y)` is exactly a collision `h(x) = h(y)`.
//! [`collision_check`] is only an empirical guard over a finite corpus.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::blocktree::{Block, BlockTree, TreeError};
use crate::codec::{Decode, DecodeError, Decoder, Encode, Encoder};
use crate::hash::{BlockHasher, Digest, Sha256Hasher};
use crate::state::DbState;
use crate::vm::{execute_block, BlockCtx, Receipt, TxnError, VmConfig, DEFAULT_BLOCKHASH_WINDOW};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SwizzleError {
    #[error("digest {0} appears more than once")]
    NotDistinct(Digest),
}

/// Set of disjoint digest pairs. Both directions of the swap are derived
/// from the same pair, so the induced map is an involution by construction.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct SwizzleMap {
    pairs: Vec<(Digest, Digest)>,
    partner: HashMap<Digest, Digest>,
}

impl fmt::Debug for SwizzleMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.pairs.iter().map(|(a, b)| (a.short(), b.short())))
            .finish()
    }
}

impl SwizzleMap {
    pub fn new(pairs: impl IntoIterator<Item = (Digest, Digest)>) -> Result<Self, SwizzleError> {
        let mut map = SwizzleMap::default();
        for (a, b) in pairs {
            map.push(a, b)?;
        }
        Ok(map)
    }

    pub fn push(&mut self, a: Digest, b: Digest) -> Result<(), SwizzleError> {
        if a == b {
            return Err(SwizzleError::NotDistinct(a));
        }
        for d in [a, b] {
            if self.partner.contains_key(&d) {
                return Err(SwizzleError::NotDistinct(d));
            }
        }
        self.partner.insert(a, b);
        self.partner.insert(b, a);
        self.pairs.push((a, b));
        Ok(())
    }

    /// Pairs as `(original, forked)` in insertion order.
    pub fn pairs(&self) -> &[(Digest, Digest)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// All digests moved by the map.
    pub fn support(&self) -> impl Iterator<Item = Digest> + '_ {
        self.pairs.iter().flat_map(|(a, b)| [*a, *b])
    }

    pub fn apply(&self, x: Digest) -> Digest {
        self.partner.get(&x).copied().unwrap_or(x)
    }
}

pub fn swizzle_apply(g: &SwizzleMap, x: Digest) -> Digest {
    g.apply(x)
}

impl Encode for SwizzleMap {
    fn encode(&self, enc: &mut Encoder) {
        enc.u32(self.pairs.len() as u32);
        for (a, b) in &self.pairs {
            enc.digest(a).digest(b);
        }
    }
}

impl Decode for SwizzleMap {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let n = dec.u32()?;
        let mut map = SwizzleMap::default();
        for _ in 0..n {
            let (a, b) = (dec.digest()?, dec.digest()?);
            map.push(a, b)
                .map_err(|_| DecodeError::Invalid("swizzle pairs not distinct"))?;
        }
        Ok(map)
    }
}

/// Stack of swizzles, innermost first: `apply(x) = g_k(...g_1(x))`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComposedSwizzle {
    layers: Vec<SwizzleMap>,
}

impl ComposedSwizzle {
    pub fn single(g: SwizzleMap) -> Self {
        ComposedSwizzle { layers: vec![g] }
    }

    pub fn layers(&self) -> &[SwizzleMap] {
        &self.layers
    }

    /// `self` followed by `outer`.
    pub fn then(mut self, outer: SwizzleMap) -> Self {
        self.layers.push(outer);
        self
    }

    pub fn apply(&self, x: Digest) -> Digest {
        self.layers.iter().fold(x, |d, g| g.apply(d))
    }

    pub fn invert(&self, y: Digest) -> Digest {
        self.layers.iter().rev().fold(y, |d, g| g.apply(d))
    }

    /// Every digest moved by some layer.
    pub fn support(&self) -> Vec<Digest> {
        let mut all: Vec<Digest> = self
            .layers
            .iter()
            .flat_map(|g| g.support().collect::<Vec<_>>())
            .collect();
        all.sort();
        all.dedup();
        all
    }
}

/// `outer . inner`, the swizzle of a second fork taken on top of a first.
pub fn compose_swizzles(outer: &SwizzleMap, inner: &SwizzleMap) -> ComposedSwizzle {
    ComposedSwizzle::single(inner.clone()).then(outer.clone())
}

/// `h'(x) = g(h(x))`.
#[derive(Debug, Clone)]
pub struct ForkedHash {
    pub base: Arc<dyn BlockHasher>,
    pub swizzle: ComposedSwizzle,
}

impl ForkedHash {
    pub fn new(base: Arc<dyn BlockHasher>, g: SwizzleMap) -> Self {
        ForkedHash {
            base,
            swizzle: ComposedSwizzle::single(g),
        }
    }

    pub fn composed(base: Arc<dyn BlockHasher>, swizzle: ComposedSwizzle) -> Self {
        ForkedHash { base, swizzle }
    }
}

impl BlockHasher for ForkedHash {
    fn digest(&self, bytes: &[u8]) -> Digest {
        self.swizzle.apply(self.base.digest(bytes))
    }

    fn describe(&self) -> String {
        let sizes: Vec<String> = self
            .swizzle
            .layers()
            .iter()
            .map(|g| g.len().to_string())
            .collect();
        format!(
            "swizzled({}; pairs per layer {})",
            self.base.describe(),
            sizes.join("+")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("replay index {z} outside 1..={n}")]
    IndexOutOfRange { z: usize, n: usize },
    #[error("block {index} does not point at its predecessor")]
    BrokenChain { index: usize },
    #[error("block {index} state root does not match re-execution under the original semantics")]
    RootMismatch { index: usize },
    #[error(transparent)]
    Swizzle(#[from] SwizzleError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// One row of the pointer-stability table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilityRow {
    pub index: usize,
    pub original_id: Digest,
    /// `h'(B'_j)`.
    pub forked_id: Digest,
    /// `h(B'_j)`, the unswizzled digest.
    pub raw_forked_id: Digest,
    pub old_root: Digest,
    pub new_root: Digest,
}

impl StabilityRow {
    pub fn stable(&self) -> bool {
        self.original_id == self.forked_id
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub z: usize,
    /// `B'`: identical to the input before `z`.
    pub forked: Vec<Block>,
    pub swizzle: SwizzleMap,
    pub hasher: Arc<ForkedHash>,
    /// The forked chain stored under `h'`.
    pub tree: BlockTree,
    pub rows: Vec<StabilityRow>,
    /// Receipts of the replayed blocks under the amended semantics.
    pub receipts: Vec<Vec<(usize, Receipt)>>,
    pub dropped: Vec<(usize, usize, TxnError)>,
    pub final_state: DbState,
    pub warnings: Vec<String>,
}

impl ReplayOutcome {
    pub fn all_stable(&self) -> bool {
        self.rows.iter().all(StabilityRow::stable)
    }
}

/// Semantics and context for replay.
#[derive(Debug, Clone)]
pub struct ReplayConfig {
    pub original: VmConfig,
    pub amended: VmConfig,
    pub blockhash_window: u64,
    /// Hasher under which the input chain is linked (`h`). For a second fork
    /// this is the first fork's `h'`.
    pub base: Arc<dyn BlockHasher>,
}

impl ReplayConfig {
    pub fn new(original: VmConfig, amended: VmConfig) -> Self {
        ReplayConfig {
            original,
            amended,
            blockhash_window: DEFAULT_BLOCKHASH_WINDOW,
            base: Arc::new(Sha256Hasher),
        }
    }
}

/// Replays `chain[z..]` (genesis at index 0) under `cfg.amended`, starting
/// from the state obtained by executing `chain[1..z]` under `cfg.original`
/// from `genesis_state`.
pub fn replay_from(
    chain: &[Block],
    z: usize,
    genesis_state: &DbState,
    cfg: &ReplayConfig,
) -> Result<ReplayOutcome, ReplayError> {
    let n = chain.len().saturating_sub(1);
    if z == 0 || z > n {
        return Err(ReplayError::IndexOutOfRange { z, n });
    }
    let base = cfg.base.clone();
    for (j, pair) in chain.windows(2).enumerate() {
        if pair[1].parent != Some(pair[0].id_with(base.as_ref())) {
            return Err(ReplayError::BrokenChain { index: j + 1 });
        }
    }
    if chain[0].state_root != genesis_state.root() {
        return Err(ReplayError::RootMismatch { index: 0 });
    }

    // Prefix under the original semantics, verified against the roots.
    let mut tree = BlockTree::with_hasher(base.clone());
    let mut state = genesis_state.clone();
    tree.insert_block(chain[0].clone())?;
    for (j, block) in chain.iter().enumerate().take(z).skip(1) {
        let ctx = BlockCtx::new(&tree, block.parent.unwrap(), block.fork_id)?
            .with_window(cfg.blockhash_window);
        state = execute_block(&state, &block.txs, &ctx, &cfg.original).state;
        if state.root() != block.state_root {
            return Err(ReplayError::RootMismatch { index: j });
        }
        tree.insert_block(block.clone())?;
    }

    let mut forked: Vec<Block> = chain[..z].to_vec();
    let mut swizzle = SwizzleMap::default();
    let mut rows = Vec::new();
    let mut receipts = Vec::new();
    let mut dropped = Vec::new();
    let mut hasher = Arc::new(ForkedHash::new(base.clone(), swizzle.clone()));
    for (j, block) in chain.iter().enumerate().skip(z) {
        let ctx = BlockCtx::new(&tree, block.parent.unwrap(), block.fork_id)?
            .with_window(cfg.blockhash_window);
        let out = execute_block(&state, &block.txs, &ctx, &cfg.amended);
        state = out.state;
        dropped.extend(out.dropped.into_iter().map(|(i, e)| (j, i, e)));
        receipts.push(out.receipts);

        let mut b2 = block.clone();
        b2.state_root = state.root();
        let original_id = block.id_with(base.as_ref()).0;
        let raw_forked_id = b2.id_with(base.as_ref()).0;
        if raw_forked_id != original_id {
            swizzle.push(original_id, raw_forked_id)?;
            hasher = Arc::new(ForkedHash::new(base.clone(), swizzle.clone()));
            tree.rebind_hasher(hasher.clone())?;
        }
        tree.insert_block(b2.clone())?;
        rows.push(StabilityRow {
            index: j,
            original_id,
            forked_id: b2.id_with(hasher.as_ref()).0,
            raw_forked_id,
            old_root: block.state_root,
            new_root: b2.state_root,
        });
        forked.push(b2);
    }
    tree.rebind_hasher(hasher.clone())?;

    let mut warnings = Vec::new();
    if swizzle.is_empty() {
        warnings.push(format!(
            "replay from {z} changed no state root; the swizzle map is empty"
        ));
    }
    if !dropped.is_empty() {
        warnings.push(format!(
            "{} transactions could not be sequenced under the amended semantics",
            dropped.len()
        ));
    }
    Ok(ReplayOutcome {
        z,
        forked,
        swizzle,
        hasher,
        tree,
        rows,
        receipts,
        dropped,
        final_state: state,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionReport {
    pub inputs: usize,
    pub distinct_inputs: usize,
    /// Pairs of distinct inputs (by index) with equal digests.
    pub collisions: Vec<(usize, usize)>,
}

impl CollisionReport {
    pub fn clean(&self) -> bool {
        self.collisions.is_empty()
    }
}

/// Hashes every corpus element and reports distinct inputs sharing a digest.
pub fn collision_check(hasher: &dyn BlockHasher, corpus: &[Vec<u8>]) -> CollisionReport {
    let mut seen: BTreeMap<Digest, usize> = BTreeMap::new();
    let mut firsts: BTreeMap<&[u8], usize> = BTreeMap::new();
    let mut collisions = Vec::new();
    for (i, bytes) in corpus.iter().enumerate() {
        if firsts.contains_key(bytes.as_slice()) {
            continue;
        }
        firsts.insert(bytes, i);
        let d = hasher.digest(bytes);
        if let Some(&j) = seen.get(&d) {
            collisions.push((j, i));
        } else {
            seen.insert(d, i);
        }
    }
    CollisionReport {
        inputs: corpus.len(),
        distinct_inputs: firsts.len(),
        collisions,
    }
}
