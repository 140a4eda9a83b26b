//! Transaction proposals and their signatures.
//!
//! The signature covers the canonical encoding of every other field,
//! including the optional leash and the fork identity.

use primitive_types::U256;

use crate::codec::{Decode, DecodeError, Decoder, Encode, Encoder};
use crate::hash::{Digest, ForkId};
use crate::keys::{self, Keypair, PublicKey, Signature};
use crate::leash::LeashParams;
use crate::state::AccountId;
use crate::vm::script::Script;

const TXN_TAG: &[u8] = b"leashsim/txn/1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxnBody {
    Transfer {
        to: AccountId,
        amount: U256,
    },
    Call {
        contract: AccountId,
        calldata: Vec<u8>,
    },
    Deploy {
        script: Script,
        endowment: U256,
    },
}

impl Encode for TxnBody {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            TxnBody::Transfer { to, amount } => {
                enc.u8(0).put(to).word(*amount);
            }
            TxnBody::Call { contract, calldata } => {
                enc.u8(1).put(contract).var_bytes(calldata);
            }
            TxnBody::Deploy { script, endowment } => {
                enc.u8(2).put(script).word(*endowment);
            }
        }
    }
}

impl Decode for TxnBody {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(match dec.u8()? {
            0 => TxnBody::Transfer {
                to: dec.get()?,
                amount: dec.word()?,
            },
            1 => TxnBody::Call {
                contract: dec.get()?,
                calldata: dec.var_bytes()?.to_vec(),
            },
            2 => TxnBody::Deploy {
                script: dec.get()?,
                endowment: dec.word()?,
            },
            tag => {
                return Err(DecodeError::BadTag {
                    what: "txn body",
                    tag,
                })
            }
        })
    }
}

/// A transaction before signing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnsignedTxn {
    pub sender: AccountId,
    pub nonce: U256,
    pub body: TxnBody,
    pub leash: Option<LeashParams>,
    pub fork_id: ForkId,
    pub max_fee: U256,
}

impl UnsignedTxn {
    pub fn new(
        sender: AccountId,
        nonce: U256,
        body: TxnBody,
        fork_id: ForkId,
        max_fee: U256,
    ) -> Self {
        UnsignedTxn {
            sender,
            nonce,
            body,
            leash: None,
            fork_id,
            max_fee,
        }
    }

    fn payload(&self, signer: &PublicKey) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(TXN_TAG)
            .put(&self.sender)
            .word(self.nonce)
            .put(&self.body)
            .put(&self.leash)
            .digest(&self.fork_id.0)
            .word(self.max_fee)
            .put(signer);
        enc.into_bytes()
    }

    pub fn sign(self, key: &Keypair) -> SignedTxn {
        let signer = key.public();
        let sig = key.sign(&self.payload(&signer));
        SignedTxn {
            inner: self,
            signer,
            sig,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedTxn {
    pub inner: UnsignedTxn,
    pub signer: PublicKey,
    pub sig: Signature,
}

impl SignedTxn {
    pub fn sender(&self) -> AccountId {
        self.inner.sender
    }

    pub fn nonce(&self) -> U256 {
        self.inner.nonce
    }

    pub fn body(&self) -> &TxnBody {
        &self.inner.body
    }

    pub fn leash(&self) -> Option<&LeashParams> {
        self.inner.leash.as_ref()
    }

    /// Signature is valid and the signer's key hashes to the sender account.
    pub fn verify_signature(&self) -> bool {
        AccountId::of_key(&self.signer) == self.inner.sender
            && keys::verify(&self.signer, &self.inner.payload(&self.signer), &self.sig)
    }

    pub fn digest(&self) -> Digest {
        crate::hash::sha256(&self.to_bytes())
    }
}

impl Encode for LeashParams {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.anchor_height)
            .digest(&self.anchor_hash)
            .word(self.length)
            .digest(&self.fork_id.0);
    }
}

impl Decode for LeashParams {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(LeashParams {
            anchor_height: dec.u64()?,
            anchor_hash: dec.digest()?,
            length: dec.word()?,
            fork_id: ForkId(dec.digest()?),
        })
    }
}

impl Encode for SignedTxn {
    fn encode(&self, enc: &mut Encoder) {
        let t = &self.inner;
        enc.put(&t.sender)
            .word(t.nonce)
            .put(&t.body)
            .put(&t.leash)
            .digest(&t.fork_id.0)
            .word(t.max_fee)
            .put(&self.signer)
            .put(&self.sig);
    }
}

impl Decode for SignedTxn {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let inner = UnsignedTxn {
            sender: dec.get()?,
            nonce: dec.word()?,
            body: dec.get()?,
            leash: dec.get()?,
            fork_id: ForkId(dec.digest()?),
            max_fee: dec.word()?,
        };
        Ok(SignedTxn {
            inner,
            signer: dec.get()?,
            sig: dec.get()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::sha256;

    fn alice_txn() -> (Keypair, UnsignedTxn) {
        let k = Keypair::derive("alice");
        let sender = AccountId::of_key(&k.public());
        let t = UnsignedTxn::new(
            sender,
            0.into(),
            TxnBody::Transfer {
                to: AccountId::named("bob"),
                amount: 5.into(),
            },
            ForkId::named("main"),
            10.into(),
        );
        (k, t)
    }

    #[test]
    fn signature_roundtrip_and_encoding() {
        let (k, t) = alice_txn();
        let s = t.sign(&k);
        assert!(s.verify_signature());
        let back = SignedTxn::from_bytes(&s.to_bytes()).unwrap();
        assert_eq!(back, s);
        assert!(back.verify_signature());
    }

    #[test]
    fn signature_covers_leash_and_fork() {
        let (k, mut t) = alice_txn();
        t.leash = Some(LeashParams {
            anchor_height: 3,
            anchor_hash: sha256(b"anchor"),
            length: 10.into(),
            fork_id: ForkId::named("main"),
        });
        let s = t.sign(&k);
        assert!(s.verify_signature());

        let mut tampered = s.clone();
        tampered.inner.leash.as_mut().unwrap().length = 11.into();
        assert!(!tampered.verify_signature());

        let mut tampered = s.clone();
        tampered.inner.fork_id = ForkId::named("other");
        assert!(!tampered.verify_signature());

        let mut stripped = s;
        stripped.inner.leash = None;
        assert!(!stripped.verify_signature());
    }

    #[test]
    fn signer_must_own_sender_account() {
        let (_, t) = alice_txn();
        let s = t.sign(&Keypair::derive("mallory"));
        assert!(!s.verify_signature());
    }
}
