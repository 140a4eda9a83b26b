use std::collections::BTreeSet;
use std::sync::Arc;

use leashsim::blocktree::BlockId;
use leashsim::codec::Encode;
use leashsim::demo::{demo_chain, DEMO_LEASHED_BLOCK};
use leashsim::hash::{BlockHasher, Sha256Hasher};
use leashsim::replay::{collision_check, compose_swizzles, replay_from, ForkedHash, ReplayConfig};
use leashsim::vm::{LeashOutcome, VmConfig};

fn patched() -> ReplayConfig {
    ReplayConfig::new(VmConfig::legacy(), VmConfig::default())
}

#[test]
fn fix_at_five_keeps_pointers_stable() {
    let demo = demo_chain(20, 1);
    let out = replay_from(&demo.blocks, 5, &demo.genesis_state, &patched()).unwrap();
    assert_eq!(out.rows.len(), 16);
    assert!(out.all_stable());
    for row in &out.rows {
        assert_ne!(
            row.old_root, row.new_root,
            "block {} root unchanged",
            row.index
        );
        assert_eq!(
            out.hasher.digest(&out.forked[row.index].to_bytes()),
            Sha256Hasher.digest(&demo.blocks[row.index].to_bytes())
        );
    }
    for j in 0..5 {
        assert_eq!(out.forked[j].to_bytes(), demo.blocks[j].to_bytes());
    }
    for j in 5..=20 {
        let (a, b) = (&demo.blocks[j], &out.forked[j]);
        assert_eq!(a.txs, b.txs);
        assert_eq!(a.parent, b.parent);
        assert_eq!(a.committee_sigs, b.committee_sigs);
    }
    assert!(out.warnings.is_empty(), "{:?}", out.warnings);
}

#[test]
fn identity_replay_is_degenerate() {
    let demo = demo_chain(8, 2);
    let cfg = ReplayConfig::new(VmConfig::legacy(), VmConfig::legacy());
    let out = replay_from(&demo.blocks, 3, &demo.genesis_state, &cfg).unwrap();
    assert!(out.swizzle.is_empty());
    assert_eq!(out.forked, demo.blocks);
    assert_eq!(out.warnings.len(), 1);
}

#[test]
fn out_of_range_and_bad_prefix() {
    let demo = demo_chain(6, 2);
    assert!(replay_from(&demo.blocks, 0, &demo.genesis_state, &patched()).is_err());
    assert!(replay_from(&demo.blocks, 7, &demo.genesis_state, &patched()).is_err());
    // Prefix executed under the wrong semantics no longer matches the roots
    // once the payout block is inside it.
    let wrong = ReplayConfig::new(VmConfig::default(), VmConfig::default());
    assert!(replay_from(&demo.blocks, 6, &demo.genesis_state, &wrong).is_err());
}

#[test]
fn leash_anchored_before_fork_still_passes() {
    let demo = demo_chain(20, 5);
    let out = replay_from(&demo.blocks, 5, &demo.genesis_state, &patched()).unwrap();
    let receipts = &out.receipts[DEMO_LEASHED_BLOCK - 5];
    let leashed = receipts
        .iter()
        .find(|(_, r)| r.leash_outcome != LeashOutcome::NotLeashed)
        .unwrap();
    assert_eq!(leashed.1.leash_outcome, LeashOutcome::Passed);
}

#[test]
fn blockhash_observations_survive_replay() {
    let demo = demo_chain(20, 5);
    let out = replay_from(&demo.blocks, 5, &demo.genesis_state, &patched()).unwrap();
    for k in 0..20u64 {
        let recorded = out.final_state.storage(&demo.recorder, k.into());
        let expected = demo.blocks[k as usize].id().0.to_word();
        assert_eq!(recorded, expected, "slot {k}");
    }
}

#[test]
fn double_fork_composes() {
    let demo = demo_chain(20, 9);
    let first = replay_from(&demo.blocks, 5, &demo.genesis_state, &patched()).unwrap();
    let mut cfg = ReplayConfig::new(
        VmConfig::default(),
        VmConfig {
            base_fee: 12.into(),
            ..VmConfig::default()
        },
    );
    cfg.base = first.hasher.clone();
    let second = replay_from(&first.forked, 12, &demo.genesis_state, &cfg).unwrap();
    assert!(second.all_stable());
    let composed = ForkedHash::composed(
        Arc::new(Sha256Hasher),
        compose_swizzles(&second.swizzle, &first.swizzle),
    );
    for j in 0..=20 {
        assert_eq!(
            BlockId(composed.digest(&second.forked[j].to_bytes())),
            demo.blocks[j].id(),
            "block {j}"
        );
    }
    let support = composed.swizzle.support();
    let images: BTreeSet<_> = support.iter().map(|d| composed.swizzle.apply(*d)).collect();
    assert_eq!(images.len(), support.len());
    assert!(images.iter().all(|d| support.contains(d)));

    let corpus: Vec<Vec<u8>> = demo
        .blocks
        .iter()
        .chain(&first.forked)
        .chain(&second.forked)
        .map(|b| b.to_bytes())
        .collect();
    assert!(collision_check(&composed, &corpus).clean());
}
