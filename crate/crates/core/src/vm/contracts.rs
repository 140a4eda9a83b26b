//! Reference contracts used by scenarios, the schedule analysis and tests.
//!
//! Binary operators take `a` from the top of the stack and `b` from below it
//! and push `a op b`. `transfer` pops the recipient, then the amount.

use primitive_types::U256;

use super::script::Script;
use crate::hash::word_to_bytes;
use crate::state::AccountId;

fn asm(text: &str) -> Script {
    Script::parse(text).expect("built-in contract assembles")
}

/// Increments storage slot 0 and returns the new value.
pub fn counter() -> Script {
    asm("push 0\n\
         sload\n\
         push 1\n\
         add\n\
         dup 1\n\
         push 0\n\
         sstore\n\
         emit\n\
         return\n")
}

/// Returns the caller id as one word.
pub fn echo_caller() -> Script {
    asm("caller\nemit\nreturn\n")
}

/// Owner-only payout whose amount depends on the contract's balance parity.
///
/// Calldata: `[recipient, amount]`. When the contract balance is even the
/// requested amount is paid; when it is odd only one base unit is paid.
/// Any other caller is refused.
pub fn parity_payout(owner: AccountId) -> Script {
    asm(&format!(
        "caller\n\
         push {owner:#x}\n\
         eq\n\
         jumpi @owner\n\
         revert\n\
         owner:\n\
         push 2\n\
         selfbalance\n\
         mod\n\
         jumpi @odd\n\
         push 32\n\
         calldataload\n\
         push 0\n\
         calldataload\n\
         transfer\n\
         return\n\
         odd:\n\
         push 1\n\
         push 0\n\
         calldataload\n\
         transfer\n\
         return\n",
        owner = owner.to_word()
    ))
}

/// Calldata for [`parity_payout`].
pub fn parity_payout_calldata(recipient: AccountId, amount: U256) -> Vec<u8> {
    let mut out = recipient.0.as_bytes().to_vec();
    out.extend_from_slice(&word_to_bytes(amount));
    out
}

/// Registry slot written only by `setter`: stores calldata word 0 at
/// `slot`.
pub fn flag_register(setter: AccountId, slot: U256) -> Script {
    asm(&format!(
        "caller\n\
         push {setter:#x}\n\
         eq\n\
         jumpi @ok\n\
         revert\n\
         ok:\n\
         push 0\n\
         calldataload\n\
         push {slot:#x}\n\
         sstore\n\
         return\n",
        setter = setter.to_word()
    ))
}

pub fn word_calldata(words: &[U256]) -> Vec<u8> {
    words.iter().flat_map(|w| word_to_bytes(*w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocktree::{Block, BlockTree};
    use crate::hash::{Digest, ForkId};
    use crate::state::{AccountState, DbState};
    use crate::vm::{execute_script, BlockCtx, VmConfig};

    fn ctx_tree() -> (BlockTree, crate::blocktree::BlockId) {
        let mut tree = BlockTree::new();
        let g = tree
            .insert_block(Block::genesis(ForkId::named("t"), Digest::ZERO))
            .unwrap();
        (tree, g)
    }

    #[test]
    fn parity_payout_depends_on_balance_parity() {
        let (tree, g) = ctx_tree();
        let ctx = BlockCtx::new(&tree, g, ForkId::named("t")).unwrap();
        let cfg = VmConfig::default();
        let owner = AccountId::named("alice");
        let cobb = AccountId::named("cobb");
        let contract = AccountId::named("parity");
        let calldata = parity_payout_calldata(cobb, 1_000_000.into());

        let mut db = DbState::new();
        db.accounts.insert(
            contract,
            AccountState::contract(parity_payout(owner), 10_000_000.into()),
        );
        let even = execute_script(&db, contract, &calldata, &ctx, owner, &cfg);
        assert!(even.result.is_ok());
        assert_eq!(even.state.balance(&cobb), U256::from(1_000_000));

        db.account_mut(contract).balance = 10_000_003.into();
        let odd = execute_script(&db, contract, &calldata, &ctx, owner, &cfg);
        assert!(odd.result.is_ok());
        assert_eq!(odd.state.balance(&cobb), U256::one());

        let refused = execute_script(&db, contract, &calldata, &ctx, cobb, &cfg);
        assert!(refused.result.is_err());
        assert_eq!(refused.state, db);
    }

    #[test]
    fn echo_caller_returns_caller() {
        let (tree, g) = ctx_tree();
        let ctx = BlockCtx::new(&tree, g, ForkId::named("t")).unwrap();
        let c = AccountId::named("echo");
        let who = AccountId::named("someone");
        let mut db = DbState::new();
        db.accounts
            .insert(c, AccountState::contract(echo_caller(), 0.into()));
        let out = execute_script(&db, c, &[], &ctx, who, &VmConfig::default());
        assert_eq!(out.result.unwrap(), who.0.as_bytes().to_vec());
    }

    #[test]
    fn counter_increments() {
        let (tree, g) = ctx_tree();
        let ctx = BlockCtx::new(&tree, g, ForkId::named("t")).unwrap();
        let c = AccountId::named("counter");
        let mut db = DbState::new();
        db.accounts
            .insert(c, AccountState::contract(counter(), 0.into()));
        let once = execute_script(&db, c, &[], &ctx, c, &VmConfig::default());
        let twice = execute_script(&once.state, c, &[], &ctx, c, &VmConfig::default());
        assert_eq!(twice.state.storage(&c, 0.into()), U256::from(2));
        assert_eq!(twice.result.unwrap(), word_calldata(&[2.into()]));
    }
}
