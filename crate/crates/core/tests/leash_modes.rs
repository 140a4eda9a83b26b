use leashsim::blocktree::BlockId;
use leashsim::chain::{HonestChain, Wallet};
use leashsim::consensus::draft_child;
use leashsim::hash::{sha256, ForkId};
use leashsim::leash::{
    decode_status_prefix, gateway_address, gateway_encode, install_mode_contracts, leash_check,
    observed_verdict, AnchorLookup, GatewayStatus, LeashMode, LeashParams, LeashRevert,
    LeashVerdict, ObservedVerdict,
};
use leashsim::state::{AccountId, AccountState, DbState};
use leashsim::vm::contracts::counter;
use leashsim::vm::txn::TxnBody;
use leashsim::vm::{apply_txn, Receipt};
use primitive_types::U256;

const MODES: [LeashMode; 4] = [
    LeashMode::Metadata,
    LeashMode::Wrapper(AnchorLookup::FullDomain),
    LeashMode::Wrapper(AnchorLookup::Windowed),
    LeashMode::Gateway,
];

struct Setup {
    chain: HonestChain,
    alice: Wallet,
    target: AccountId,
    side: BlockId,
}

fn setup(blocks: u64) -> Setup {
    let alice = Wallet::new("alice");
    let target = AccountId::named("counter");
    let mut db = DbState::new();
    db.accounts
        .insert(alice.account, AccountState::eoa(1_000_000.into()));
    db.accounts
        .insert(target, AccountState::contract(counter(), 0.into()));
    let mut chain = HonestChain::new(db, ForkId::named("main"), Default::default(), 4, 8, "val");
    for _ in 0..blocks {
        chain.extend(vec![]).unwrap();
    }
    // An unsigned side block off height 2.
    let base = chain.at_height(2).unwrap();
    let mut side = draft_child(base, chain.ledger.block(&base).unwrap());
    side.state_root = sha256(b"bogus");
    let side = chain.ledger.insert_unexecuted(side, None).unwrap();
    Setup {
        chain,
        alice,
        target,
        side,
    }
}

fn run(s: &Setup, mode: LeashMode, params: LeashParams) -> (DbState, Receipt) {
    let mut db = s.chain.ledger.state(&s.chain.tip).unwrap().clone();
    install_mode_contracts(&mut db, s.target, &params);
    let mut alice = s.alice.clone();
    let t = alice
        .sign_leashed_call(mode, s.target, vec![], params, 4096)
        .unwrap();
    let ctx = s.chain.ledger.ctx(s.chain.tip, s.chain.fork_id()).unwrap();
    apply_txn(&db, &t, &ctx, &s.chain.ledger.cfg).unwrap()
}

fn params(s: &Setup, anchor: BlockId, l: u64) -> LeashParams {
    LeashParams::anchored_at(
        s.chain.ledger.tree(),
        anchor,
        l.into(),
        ForkId::named("main"),
    )
    .unwrap()
}

fn expect_all(s: &Setup, p: LeashParams, expect: ObservedVerdict) -> Vec<DbState> {
    MODES
        .iter()
        .map(|&m| {
            let (db, r) = run(s, m, p);
            assert_eq!(observed_verdict(m, &r), expect, "mode {m:?}");
            let counted = db.storage(&s.target, 0.into());
            assert_eq!(
                counted,
                U256::from(u64::from(expect == ObservedVerdict::Pass)),
                "mode {m:?}"
            );
            db
        })
        .collect()
}

#[test]
fn valid_anchor_passes_everywhere_with_equal_roots() {
    let s = setup(10);
    let p = params(&s, s.chain.at_height(7).unwrap(), 5);
    let states = expect_all(&s, p, ObservedVerdict::Pass);
    assert!(states.windows(2).all(|w| w[0].root() == w[1].root()));
    let ctx = s.chain.ledger.ctx(s.chain.tip, s.chain.fork_id()).unwrap();
    assert_eq!(leash_check(&p, &ctx), LeashVerdict::Pass);
}

#[test]
fn gateway_return_prefix() {
    let s = setup(4);
    let p = params(&s, s.chain.tip, 3);
    let (_, r) = run(&s, LeashMode::Gateway, p);
    assert!(r.committed());
    let (status, inner) = decode_status_prefix(&r.return_data).unwrap();
    assert_eq!(status, GatewayStatus::Ok);
    assert_eq!(inner.len(), 32);
    assert_eq!(r.return_data.len(), 96 + 32);
}

#[test]
fn side_anchor_reverts_everywhere() {
    let s = setup(10);
    let p = params(&s, s.side, 20);
    let states = expect_all(
        &s,
        p,
        ObservedVerdict::Revert(LeashRevert::AnchorHashMismatch),
    );
    assert!(states.windows(2).all(|w| w[0].root() == w[1].root()));
}

#[test]
fn other_reasons_agree() {
    let s = setup(10);
    expect_all(
        &s,
        params(&s, s.chain.at_height(3).unwrap(), 0),
        ObservedVerdict::Revert(LeashRevert::LeashExpired),
    );
    expect_all(
        &s,
        params(&s, s.chain.at_height(3).unwrap(), 4),
        ObservedVerdict::Revert(LeashRevert::LeashExpired),
    );
    let mut future = params(&s, s.chain.at_height(3).unwrap(), 4);
    future.anchor_height = 40;
    expect_all(
        &s,
        future,
        ObservedVerdict::Revert(LeashRevert::AnchorInFuture),
    );
    let mut other = params(&s, s.chain.at_height(3).unwrap(), 40);
    other.fork_id = ForkId::named("other");
    expect_all(
        &s,
        other,
        ObservedVerdict::Revert(LeashRevert::ForkMismatch),
    );
    let mut huge = params(&s, s.chain.at_height(3).unwrap(), 4);
    huge.length = U256::MAX;
    // Metadata wrapping refuses overflowing leashes; script modes revert.
    for m in [
        LeashMode::Wrapper(AnchorLookup::FullDomain),
        LeashMode::Gateway,
    ] {
        let (_, r) = run(&s, m, huge);
        assert_eq!(
            observed_verdict(m, &r),
            ObservedVerdict::Revert(LeashRevert::LeashExpired)
        );
    }
}

#[test]
fn windowed_blockhash_breaks_beyond_window() {
    let s = setup(310);
    let p = params(&s, s.chain.at_height(10).unwrap(), 400);
    for m in [
        LeashMode::Metadata,
        LeashMode::Wrapper(AnchorLookup::FullDomain),
        LeashMode::Gateway,
    ] {
        let (_, r) = run(&s, m, p);
        assert_eq!(observed_verdict(m, &r), ObservedVerdict::Pass, "{m:?}");
    }
    let m = LeashMode::Wrapper(AnchorLookup::Windowed);
    let (_, r) = run(&s, m, p);
    assert_eq!(
        observed_verdict(m, &r),
        ObservedVerdict::Revert(LeashRevert::AnchorHashMismatch)
    );
}

#[test]
fn gateway_failure_statuses() {
    let s = setup(6);
    let p = params(&s, s.chain.at_height(3).unwrap(), 10);
    let mut db = s.chain.ledger.state(&s.chain.tip).unwrap().clone();
    install_mode_contracts(&mut db, s.target, &p);
    let ctx = s.chain.ledger.ctx(s.chain.tip, s.chain.fork_id()).unwrap();
    let call = |calldata: Vec<u8>| {
        let mut alice = s.alice.clone();
        let t = alice.sign(
            TxnBody::Call {
                contract: gateway_address(),
                calldata,
            },
            s.chain.fork_id(),
        );
        let (post, r) = apply_txn(&db, &t, &ctx, &s.chain.ledger.cfg).unwrap();
        assert!(!r.committed());
        assert_eq!(post.storage(&s.target, 0.into()), U256::zero());
        decode_status_prefix(&r.return_data).unwrap().0
    };
    let missing = gateway_encode(&p, AccountId::named("nobody"), &[], 4096).unwrap();
    assert_eq!(call(missing), GatewayStatus::NoSuchTarget);
    assert_eq!(call(vec![0u8; 100]), GatewayStatus::Malformed);
    let mut bad_version = gateway_encode(&p, s.target, &[], 4096).unwrap();
    bad_version[31] = 9;
    assert_eq!(call(bad_version), GatewayStatus::BadVersion);
    let mut reserved = gateway_encode(&p, s.target, &[], 4096).unwrap();
    reserved[200] = 1;
    assert_eq!(call(reserved), GatewayStatus::Malformed);
}

#[test]
fn metadata_stale_anchor_charges_fee_only() {
    let s = setup(10);
    let p = params(&s, s.chain.at_height(2).unwrap(), 3);
    let mut alice = s.alice.clone();
    let t = alice
        .sign_leashed(
            TxnBody::Transfer {
                to: AccountId::named("bob"),
                amount: 5.into(),
            },
            p,
        )
        .unwrap();
    let db = s.chain.ledger.state(&s.chain.tip).unwrap();
    let ctx = s.chain.ledger.ctx(s.chain.tip, s.chain.fork_id()).unwrap();
    let (post, r) = apply_txn(db, &t, &ctx, &s.chain.ledger.cfg).unwrap();
    assert!(!r.committed());
    assert_eq!(r.gas_used, 0);
    assert_eq!(post.nonce(&s.alice.account), U256::one());
    assert_eq!(
        post.balance(&s.alice.account),
        db.balance(&s.alice.account) - 10
    );
    assert_eq!(post.balance(&AccountId::named("bob")), U256::zero());
}
