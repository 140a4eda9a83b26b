use std::collections::HashSet;
use std::sync::OnceLock;

use leashsim::blocktree::BlockId;
use leashsim::chain::HonestChain;
use leashsim::hash::{Digest, ForkId};
use leashsim::leash::{
    gateway_decode, gateway_encode, leash_check, LeashParams, LeashRevert, LeashVerdict,
};
use leashsim::replay::{compose_swizzles, SwizzleMap};
use leashsim::schedule::{
    acceptable_schedules, count_closed_form, shape_transactions, small, Shape,
};
use leashsim::state::{AccountId, DbState};
use primitive_types::U256;
use proptest::prelude::*;

const CHAIN_LEN: u64 = 40;

fn chain() -> &'static HonestChain {
    static CHAIN: OnceLock<HonestChain> = OnceLock::new();
    CHAIN.get_or_init(|| {
        let mut c = HonestChain::new(
            DbState::new(),
            ForkId::named("main"),
            Default::default(),
            4,
            5,
            "prop",
        );
        for _ in 0..CHAIN_LEN {
            c.extend(vec![]).unwrap();
        }
        c
    })
}

/// Leash predicate computed from the chain's path by index.
fn oracle(path: &[BlockId], parent: u64, p: &LeashParams, fork: ForkId) -> LeashVerdict {
    use LeashRevert::*;
    let i = U256::from(p.anchor_height);
    let verdict = if p.fork_id != fork {
        Some(ForkMismatch)
    } else if p.length.is_zero() || i.checked_add(p.length).is_none() {
        Some(LeashExpired)
    } else if parent < p.anchor_height {
        Some(AnchorInFuture)
    } else if U256::from(parent) >= i + p.length {
        Some(LeashExpired)
    } else if path[p.anchor_height as usize].0 != p.anchor_hash {
        Some(AnchorHashMismatch)
    } else {
        None
    };
    verdict.map_or(LeashVerdict::Pass, LeashVerdict::Revert)
}

fn arb_length() -> impl Strategy<Value = U256> {
    prop_oneof![
        Just(U256::zero()),
        (1u64..60).prop_map(U256::from),
        Just(U256::MAX),
        Just(U256::MAX - U256::from(5)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn leash_check_matches_oracle(
        parent in 0..=CHAIN_LEN,
        anchor in 0..CHAIN_LEN + 10,
        real_hash in any::<bool>(),
        noise in any::<[u8; 32]>(),
        length in arb_length(),
        same_fork in prop::bool::weighted(0.85),
    ) {
        let c = chain();
        let path = c.path();
        let hash = if real_hash && anchor <= CHAIN_LEN { path[anchor as usize].0 } else { Digest(noise) };
        let fork = if same_fork { c.fork_id() } else { ForkId::named("other") };
        let p = LeashParams { anchor_height: anchor, anchor_hash: hash, length, fork_id: fork };
        let ctx = c.ledger.ctx(path[parent as usize], c.fork_id()).unwrap();
        let got = leash_check(&p, &ctx);
        // The oracle indexes the path, so an anchor above the parent must
        // be rejected before the hash is looked at.
        if anchor > CHAIN_LEN {
            prop_assert!(!got.passed());
        } else {
            prop_assert_eq!(got, oracle(&path, parent, &p, c.fork_id()));
        }
    }

    #[test]
    fn gateway_prefix_roundtrip(
        height in any::<u64>(),
        hash in any::<[u8; 32]>(),
        length in any::<[u8; 32]>(),
        fork in any::<[u8; 32]>(),
        target in any::<[u8; 32]>(),
        inner in proptest::collection::vec(any::<u8>(), 0..100),
    ) {
        let p = LeashParams {
            anchor_height: height,
            anchor_hash: Digest(hash),
            length: U256::from_big_endian(&length),
            fork_id: ForkId(Digest(fork)),
        };
        let bytes = gateway_encode(&p, AccountId(Digest(target)), &inner, 4096).unwrap();
        let call = gateway_decode(&bytes).unwrap();
        prop_assert_eq!(call.params, p);
        prop_assert_eq!(call.target, AccountId(Digest(target)));
        prop_assert_eq!(call.inner, inner);
    }

    #[test]
    fn swizzle_is_an_involution(
        pairs in proptest::collection::vec(any::<([u8; 32], [u8; 32])>(), 0..20),
        probes in proptest::collection::vec(any::<[u8; 32]>(), 0..20),
    ) {
        let mut seen = HashSet::new();
        let pairs: Vec<(Digest, Digest)> = pairs
            .into_iter()
            .filter(|(a, b)| a != b && seen.insert(*a) && seen.insert(*b))
            .map(|(a, b)| (Digest(a), Digest(b)))
            .collect();
        let g = SwizzleMap::new(pairs.clone()).unwrap();
        for &(a, b) in &pairs {
            prop_assert_eq!(g.apply(a), b);
            prop_assert_eq!(g.apply(b), a);
        }
        for x in probes.into_iter().map(Digest).chain(g.support()) {
            prop_assert_eq!(g.apply(g.apply(x)), x);
            if !seen.contains(&x.0) {
                prop_assert_eq!(g.apply(x), x);
            }
        }
        let images: HashSet<Digest> = g.support().map(|d| g.apply(d)).collect();
        prop_assert_eq!(images.len(), g.support().count());

        // Composition with itself is the identity; inversion undoes it.
        let twice = compose_swizzles(&g, &g);
        for x in g.support() {
            prop_assert_eq!(twice.apply(x), x);
            prop_assert_eq!(twice.invert(twice.apply(x)), x);
        }
    }

    #[test]
    fn overlapping_pairs_are_refused(a in any::<[u8; 32]>(), b in any::<[u8; 32]>(), c in any::<[u8; 32]>()) {
        prop_assume!(a != b && b != c && a != c);
        let (a, b, c) = (Digest(a), Digest(b), Digest(c));
        prop_assert!(SwizzleMap::new([(a, b), (b, c)]).is_err());
        prop_assert!(SwizzleMap::new([(a, a)]).is_err());
    }

    #[test]
    fn schedules_respect_sender_order(k in 0usize..=5, independent in any::<bool>()) {
        let shape = if independent { Shape::IndependentEoas } else { Shape::SingleEoa };
        let txns = shape_transactions(k, shape);
        let set = acceptable_schedules(&txns).unwrap();
        let all: Vec<Vec<usize>> = set.iter().collect();
        let distinct: HashSet<&Vec<usize>> = all.iter().collect();
        prop_assert_eq!(distinct.len(), all.len());
        prop_assert_eq!(small(&count_closed_form(k, shape, 8).unwrap()), Some(all.len() as u128));
        for s in &all {
            let unique: HashSet<&usize> = s.iter().collect();
            prop_assert_eq!(unique.len(), s.len());
            if !independent {
                // One sender: only nonce-ordered prefixes.
                prop_assert_eq!(s, &(0..s.len()).collect::<Vec<_>>());
            }
        }
    }
}
