//! Acceptable transaction schedules and adversary amounts over them.
//!
//! A(T) holds every sequence that uses transactions of T at most once and,
//! for each sender, uses a prefix of that sender's transactions in nonce
//! order. The empty sequence is included.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use primitive_types::U256;
use serde::{Deserialize, Serialize};

use crate::hash::ForkId;
use crate::keys::Keypair;
use crate::state::AccountId;
use crate::state::DbState;
use crate::vm::txn::{SignedTxn, TxnBody, UnsignedTxn};
use crate::vm::{apply_sequence, BlockCtx, TxnError, VmConfig};

/// Enumeration above this many transactions needs an explicit override.
pub const DEFAULT_K_LIMIT: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("sender {sender:?}: expected nonce {expected}, found {found}")]
    NonceGap {
        sender: AccountId,
        expected: U256,
        found: U256,
    },
    #[error("{k} transactions exceeds the enumeration limit {limit}")]
    TooLarge { k: usize, limit: usize },
}

/// Per-sender queues over a base sequence T.
#[derive(Debug, Clone)]
pub struct ScheduleSet<'t> {
    txns: &'t [SignedTxn],
    queues: Vec<Vec<usize>>,
}

pub fn acceptable_schedules(txns: &[SignedTxn]) -> Result<ScheduleSet<'_>, ScheduleError> {
    let mut by_sender: BTreeMap<AccountId, Vec<usize>> = BTreeMap::new();
    let mut order: Vec<AccountId> = Vec::new();
    for (i, t) in txns.iter().enumerate() {
        let q = by_sender.entry(t.sender()).or_insert_with(|| {
            order.push(t.sender());
            Vec::new()
        });
        if let Some(&prev) = q.last() {
            let expected = txns[prev].nonce() + 1;
            if t.nonce() != expected {
                return Err(ScheduleError::NonceGap {
                    sender: t.sender(),
                    expected,
                    found: t.nonce(),
                });
            }
        }
        q.push(i);
    }
    let queues = order.iter().map(|s| by_sender.remove(s).unwrap()).collect();
    Ok(ScheduleSet { txns, queues })
}

impl<'t> ScheduleSet<'t> {
    pub fn base(&self) -> &'t [SignedTxn] {
        self.txns
    }

    /// Per-sender index queues, in order of first appearance in T.
    pub fn queues(&self) -> &[Vec<usize>] {
        &self.queues
    }

    /// Lazily enumerates schedules as index sequences into T.
    pub fn iter(&self) -> Schedules {
        Schedules {
            queues: self.queues.clone(),
            pos: vec![0; self.queues.len()],
            seq: Vec::new(),
            chosen: Vec::new(),
            frames: Vec::new(),
            started: false,
        }
    }

    pub fn count(&self) -> usize {
        self.iter().count()
    }

    pub fn materialize(&self, schedule: &[usize]) -> Vec<SignedTxn> {
        schedule.iter().map(|&i| self.txns[i].clone()).collect()
    }
}

/// Depth-first enumeration: every node of the search tree is a schedule.
#[derive(Debug, Clone)]
pub struct Schedules {
    queues: Vec<Vec<usize>>,
    pos: Vec<usize>,
    seq: Vec<usize>,
    chosen: Vec<usize>,
    /// Next queue to try at each open node.
    frames: Vec<usize>,
    started: bool,
}

impl Iterator for Schedules {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if !self.started {
            self.started = true;
            self.frames.push(0);
            return Some(Vec::new());
        }
        loop {
            let frame = self.frames.last_mut()?;
            let mut q = *frame;
            while q < self.queues.len() && self.pos[q] >= self.queues[q].len() {
                q += 1;
            }
            if q < self.queues.len() {
                *frame = q + 1;
                self.seq.push(self.queues[q][self.pos[q]]);
                self.pos[q] += 1;
                self.chosen.push(q);
                self.frames.push(0);
                return Some(self.seq.clone());
            }
            self.frames.pop();
            if let Some(q) = self.chosen.pop() {
                self.pos[q] -= 1;
                self.seq.pop();
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    /// k transactions from one sender.
    SingleEoa,
    /// k transactions from k distinct senders.
    IndependentEoas,
}

pub fn factorial(k: usize) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// |A(T)| for the two shapes with closed forms.
pub fn count_closed_form(k: usize, shape: Shape, k_limit: usize) -> Result<BigUint, ScheduleError> {
    if k > k_limit {
        return Err(ScheduleError::TooLarge { k, limit: k_limit });
    }
    Ok(match shape {
        Shape::SingleEoa => BigUint::from(k + 1),
        // sum over i of k!/i!, built from the top: 1, k, k(k-1), ...
        Shape::IndependentEoas => {
            let mut term = BigUint::one();
            let mut sum = BigUint::one();
            for j in (1..=k).rev() {
                term *= BigUint::from(j);
                sum += &term;
            }
            sum
        }
    })
}

/// Rational bounds `lo < e < hi` from the series truncated after `n` terms:
/// the tail beyond `1/n!` is below `1/(n! * n)`.
pub fn e_bounds(n: usize) -> (BigRational, BigRational) {
    let n = n.max(1);
    let mut lo = BigRational::zero();
    for i in 0..=n {
        lo += BigRational::new(BigUint::one().into(), factorial(i).into());
    }
    let tail = BigRational::new(
        BigUint::one().into(),
        (factorial(n) * BigUint::from(n)).into(),
    );
    let hi = &lo + tail;
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundCheck {
    pub k: usize,
    pub count: BigUint,
    /// `floor(k! e)`, determined exactly from rational bounds.
    pub floor_k_fact_e: BigUint,
    /// `count < k! e`, established via `count < k! * lo` with `lo < e`.
    pub below: bool,
}

/// Checks `count < k! e` in exact arithmetic and reports `floor(k! e)`.
pub fn check_factorial_e_bound(k: usize, count: &BigUint) -> BoundCheck {
    let kf: BigRational = BigRational::from_integer(factorial(k).into());
    let mut n = k + 2;
    let floor = loop {
        let (lo, hi) = e_bounds(n);
        let (a, b) = ((&kf * &lo).floor(), (&kf * &hi).floor());
        // Tighten until both bounds share an integer part.
        if a == b {
            break a.to_integer();
        }
        n += 2;
    };
    let (lo, _) = e_bounds(k + 2);
    let c = BigRational::from_integer(count.clone().into());
    BoundCheck {
        k,
        count: count.clone(),
        floor_k_fact_e: floor.to_biguint().expect("positive"),
        below: c < kf * lo,
    }
}

/// Token flows of adversary accounts while executing one schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryAmounts {
    pub sent: U256,
    pub received: U256,
    pub adversary_accounts: BTreeSet<AccountId>,
    /// First not-sequenced transaction, if execution stopped early.
    pub halted: Option<(usize, TxnError)>,
}

/// Executes `schedule` from `db` and sums every transfer, including those
/// made inside scripts, leaving (`sent`) or entering (`received`) the
/// adversary set. Fees are not transfers.
pub fn adversary_amounts(
    schedule: &[SignedTxn],
    db: &DbState,
    ctx: &BlockCtx<'_>,
    cfg: &VmConfig,
    adversary: &BTreeSet<AccountId>,
) -> AdversaryAmounts {
    let out = apply_sequence(db, schedule, ctx, cfg);
    let mut sent = U256::zero();
    let mut received = U256::zero();
    for r in &out.receipts {
        for t in &r.transfers {
            if adversary.contains(&t.from) {
                sent = sent.saturating_add(t.amount);
            }
            if adversary.contains(&t.to) {
                received = received.saturating_add(t.amount);
            }
        }
    }
    AdversaryAmounts {
        sent,
        received,
        adversary_accounts: adversary.clone(),
        halted: out.halted,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmountExtremes {
    pub schedules: usize,
    pub min_received: U256,
    pub max_received: U256,
    pub min_sent: U256,
    pub max_sent: U256,
    /// First schedule (index sequence) reaching `max_received`.
    pub argmax_received: Vec<usize>,
    /// Amounts of the full base sequence T.
    pub full_received: U256,
    pub full_sent: U256,
}

pub fn amounts_over_all_schedules(
    txns: &[SignedTxn],
    db: &DbState,
    ctx: &BlockCtx<'_>,
    cfg: &VmConfig,
    adversary: &BTreeSet<AccountId>,
    k_limit: usize,
) -> Result<AmountExtremes, ScheduleError> {
    if txns.len() > k_limit {
        return Err(ScheduleError::TooLarge {
            k: txns.len(),
            limit: k_limit,
        });
    }
    let set = acceptable_schedules(txns)?;
    let full = adversary_amounts(txns, db, ctx, cfg, adversary);
    let mut ext = AmountExtremes {
        schedules: 0,
        min_received: U256::MAX,
        max_received: U256::zero(),
        min_sent: U256::MAX,
        max_sent: U256::zero(),
        argmax_received: Vec::new(),
        full_received: full.received,
        full_sent: full.sent,
    };
    for s in set.iter() {
        let a = adversary_amounts(&set.materialize(&s), db, ctx, cfg, adversary);
        ext.schedules += 1;
        if a.received > ext.max_received || ext.schedules == 1 {
            ext.max_received = a.received;
            ext.argmax_received = s.clone();
        }
        ext.min_received = ext.min_received.min(a.received);
        ext.min_sent = ext.min_sent.min(a.sent);
        ext.max_sent = ext.max_sent.max(a.sent);
    }
    Ok(ext)
}

/// `k` unit transfers to a sink, laid out in the given shape: one sender with
/// nonces `0..k`, or `k` senders at nonce 0.
pub fn shape_transactions(k: usize, shape: Shape) -> Vec<SignedTxn> {
    let sink = AccountId::named("sink");
    (0..k)
        .map(|i| {
            let (label, nonce) = match shape {
                Shape::SingleEoa => ("eoa".to_string(), i as u64),
                Shape::IndependentEoas => (format!("eoa{i}"), 0),
            };
            let key = Keypair::derive(&label);
            let body = TxnBody::Transfer {
                to: sink,
                amount: U256::one(),
            };
            UnsignedTxn::new(
                AccountId::of_key(&key.public()),
                nonce.into(),
                body,
                ForkId::named("main"),
                10.into(),
            )
            .sign(&key)
        })
        .collect()
}

/// `BigUint` to `u128` for display and small-k tests.
pub fn small(n: &BigUint) -> Option<u128> {
    n.to_u128()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn txn(who: &str, nonce: u64) -> SignedTxn {
        let k = Keypair::derive(who);
        UnsignedTxn::new(
            AccountId::of_key(&k.public()),
            nonce.into(),
            TxnBody::Transfer {
                to: AccountId::named("sink"),
                amount: 1.into(),
            },
            ForkId::named("main"),
            10.into(),
        )
        .sign(&k)
    }

    #[test]
    fn single_sender_prefixes() {
        let t: Vec<_> = (0..3).map(|n| txn("a", n)).collect();
        let all: Vec<_> = acceptable_schedules(&t).unwrap().iter().collect();
        assert_eq!(all, vec![vec![], vec![0], vec![0, 1], vec![0, 1, 2]]);
    }

    #[test]
    fn independent_counts() {
        for (k, expect) in [(0usize, 1usize), (1, 2), (2, 5), (3, 16), (4, 65)] {
            let t: Vec<_> = (0..k).map(|i| txn(&format!("s{i}"), 0)).collect();
            let set = acceptable_schedules(&t).unwrap();
            assert_eq!(set.count(), expect, "k={k}");
            assert_eq!(
                count_closed_form(k, Shape::IndependentEoas, 8).unwrap(),
                BigUint::from(expect)
            );
        }
    }

    #[test]
    fn nonce_gap_rejected() {
        let t = vec![txn("a", 0), txn("a", 2)];
        assert!(matches!(
            acceptable_schedules(&t),
            Err(ScheduleError::NonceGap { .. })
        ));
        let t = vec![txn("a", 1), txn("a", 0)];
        assert!(acceptable_schedules(&t).is_err());
    }

    #[test]
    fn closed_forms() {
        assert_eq!(
            count_closed_form(0, Shape::SingleEoa, 7).unwrap(),
            BigUint::from(1u32)
        );
        assert_eq!(
            count_closed_form(0, Shape::IndependentEoas, 7).unwrap(),
            BigUint::from(1u32)
        );
        assert_eq!(
            count_closed_form(5, Shape::SingleEoa, 7).unwrap(),
            BigUint::from(6u32)
        );
        assert_eq!(
            count_closed_form(6, Shape::IndependentEoas, 7).unwrap(),
            BigUint::from(1957u32)
        );
        assert_eq!(
            count_closed_form(9, Shape::SingleEoa, 7),
            Err(ScheduleError::TooLarge { k: 9, limit: 7 })
        );
    }

    #[test]
    fn factorial_e_floor_matches_count() {
        for k in 1..=12 {
            let c = count_closed_form(k, Shape::IndependentEoas, 20).unwrap();
            let b = check_factorial_e_bound(k, &c);
            assert!(b.below);
            assert_eq!(b.floor_k_fact_e, c, "k={k}");
        }
        let b = check_factorial_e_bound(0, &BigUint::one());
        assert!(b.below);
        assert_eq!(b.floor_k_fact_e, BigUint::from(2u32));
    }

    #[test]
    fn e_bounds_bracket() {
        let (lo, hi) = e_bounds(10);
        let e = std::f64::consts::E;
        assert!(lo.to_f64().unwrap() < e && e < hi.to_f64().unwrap());
    }
}
