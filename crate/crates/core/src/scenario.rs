//! Scenario configuration files.
//!
//! A scenario is a TOML document whose first key is the format header:
//!
//! ```toml
//! format = "leashsim-scenario/1"
//! name = "canonical_lra"
//! kind = "lra"
//! seed = 7
//!
//! [chain]
//! committee_size = 4
//! blocks_per_epoch = 4
//! honest_blocks = 24
//! flag_writes = [[3, 2]]     # (height, value) written to the registry by the registrar
//!
//! [victim]
//! sleep_height = 6
//! leash_length = 32
//! payment = 50000
//!
//! [adversary]
//! fork_height = 6
//! side_blocks = 6
//! leaked_epochs = [1]
//! ```
//!
//! Every other field has a default. Bundled fixtures live in `fixtures/`
//! and are also compiled in, see [`bundled`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::consensus::{leakable_epochs, DEFAULT_RECENT_WINDOW};
use crate::vm::DEFAULT_BLOCKHASH_WINDOW;

pub const SCENARIO_FORMAT: &str = "leashsim-scenario/1";
pub const CHAIN_FORMAT: &str = "leashsim-chain/1";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported format header {found:?}, expected {expected:?}")]
    Format {
        found: String,
        expected: &'static str,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("no bundled fixture named {0:?}")]
    UnknownFixture(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Lra,
    StaleState,
    SkipVerification,
    Adaptive,
    HardFork,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimMode {
    /// Claims are proven against the state the shown tip commits to.
    Consistent,
    /// The registry value is replaced by the bogus flag while the shown tip
    /// keeps its real root.
    Forged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardForkVariant {
    /// The real chain moves to a new fork id; the adversary keeps extending
    /// the old one.
    HiddenReal,
    /// The side chain announces a fork the real chain never had.
    BogusAdversarial,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(default = "d_committee")]
    pub committee_size: usize,
    #[serde(default = "d_bpe")]
    pub blocks_per_epoch: u64,
    pub honest_blocks: u64,
    #[serde(default = "d_recent")]
    pub recent_window: u64,
    #[serde(default = "d_fee")]
    pub base_fee: u64,
    #[serde(default = "d_window")]
    pub blockhash_window: u64,
    #[serde(default)]
    pub flag_writes: Vec<(u64, u64)>,
    #[serde(default = "d_fork_name")]
    pub fork_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VictimSection {
    pub sleep_height: u64,
    pub leash_length: u64,
    pub payment: u64,
    #[serde(default = "d_true")]
    pub verify_proofs: bool,
    /// Registry value that makes the victim pay.
    #[serde(default = "d_one")]
    pub pay_if_flag: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    /// Last real block shown to the victim; forged blocks follow it.
    pub fork_height: u64,
    #[serde(default)]
    pub side_blocks: u64,
    #[serde(default)]
    pub leaked_epochs: Vec<u64>,
    /// Keys leaked per epoch, taken from the front of the committee.
    #[serde(default)]
    pub leaked_per_epoch: Option<usize>,
    #[serde(default)]
    pub inflate_victim_balance: u64,
    #[serde(default = "d_one")]
    pub bogus_flag: u64,
    #[serde(default = "d_claim")]
    pub claim: ClaimMode,
    #[serde(default = "d_one")]
    pub rounds: u64,
    /// Honest blocks produced between rounds.
    #[serde(default)]
    pub round_gap: Option<u64>,
    /// Whether the adversary learns the victim's nonce from earlier rounds.
    #[serde(default = "d_true")]
    pub adaptive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardForkSection {
    pub variant: HardForkVariant,
    #[serde(default)]
    pub fork_height: u64,
    pub new_fork_name: String,
}

/// Expected results, checked by the runner's caller.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectSection {
    pub leashed: Option<String>,
    pub unleashed: Option<String>,
    pub leashed_harm: Option<u64>,
    pub unleashed_harm_positive: Option<bool>,
    pub leashed_victim_loss: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format: String,
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub note: Option<String>,
    pub chain: ChainSection,
    /// Genesis balances by account label.
    #[serde(default = "d_accounts")]
    pub accounts: BTreeMap<String, u64>,
    pub victim: VictimSection,
    pub adversary: AdversarySection,
    #[serde(default)]
    pub hard_fork: Option<HardForkSection>,
    #[serde(default)]
    pub expect: ExpectSection,
}

fn d_committee() -> usize {
    4
}
fn d_bpe() -> u64 {
    4
}
fn d_recent() -> u64 {
    DEFAULT_RECENT_WINDOW
}
fn d_fee() -> u64 {
    10
}
fn d_window() -> u64 {
    DEFAULT_BLOCKHASH_WINDOW
}
fn d_fork_name() -> String {
    "main".into()
}
fn d_true() -> bool {
    true
}
fn d_one() -> u64 {
    1
}
fn d_claim() -> ClaimMode {
    ClaimMode::Consistent
}
fn d_accounts() -> BTreeMap<String, u64> {
    [
        ("alice", 1_000_000),
        ("registrar", 1_000_000),
        ("bystander", 1_000_000),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Labels every scenario relies on.
pub const REQUIRED_ACCOUNTS: [&str; 3] = ["alice", "registrar", "bystander"];

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let s: Scenario = toml::from_str(text)?;
        if s.format != SCENARIO_FORMAT {
            return Err(ConfigError::Format {
                found: s.format,
                expected: SCENARIO_FORMAT,
            });
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Epoch of the consensus tip once the honest chain is built.
    pub fn tip_epoch(&self) -> u64 {
        epoch_at(self.chain.honest_blocks, self.chain.blocks_per_epoch)
    }

    pub fn round_gap(&self) -> u64 {
        self.adversary
            .round_gap
            .unwrap_or(self.adversary.side_blocks)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.chain;
        let v = &self.victim;
        let a = &self.adversary;
        if c.committee_size == 0 || c.blocks_per_epoch == 0 {
            return invalid("committee_size and blocks_per_epoch must be positive");
        }
        for label in REQUIRED_ACCOUNTS {
            if !self.accounts.contains_key(label) {
                return invalid(format!("accounts must fund {label:?}"));
            }
        }
        if self.accounts.contains_key("cobb") {
            return invalid("the adversary account starts empty so its balance delta is the harm");
        }
        if v.sleep_height > a.fork_height {
            return invalid("fork_height must not precede sleep_height: the victim saw every block up to its sleep point");
        }
        if a.fork_height > c.honest_blocks {
            return invalid("fork_height beyond the honest chain");
        }
        if a.rounds == 0 {
            return invalid("rounds must be at least 1");
        }
        if let Some(&(h, _)) = c
            .flag_writes
            .iter()
            .find(|(h, _)| *h == 0 || *h > c.honest_blocks)
        {
            return invalid(format!("flag write at height {h} outside the honest chain"));
        }
        let leakable = leakable_epochs(self.tip_epoch(), c.recent_window);
        if let Some(e) = a.leaked_epochs.iter().find(|e| !leakable.contains(e)) {
            return invalid(format!(
                "epoch {e} is within the recent window (leakable epochs are {}..{})",
                leakable.start, leakable.end
            ));
        }
        if let Some(n) = a.leaked_per_epoch {
            if n > c.committee_size {
                return invalid("leaked_per_epoch exceeds the committee size");
            }
        }
        match (&self.kind, &self.hard_fork) {
            (ScenarioKind::HardFork, None) => {
                return invalid("hard_fork scenarios need a [hard_fork] section")
            }
            (ScenarioKind::HardFork, Some(hf)) => {
                if hf.variant == HardForkVariant::HiddenReal
                    && (hf.fork_height <= v.sleep_height || hf.fork_height > c.honest_blocks)
                {
                    return invalid(
                        "a hidden fork happens after the sleep point and within the honest chain",
                    );
                }
                if hf.new_fork_name == c.fork_name && hf.variant != HardForkVariant::None {
                    return invalid("new_fork_name must differ from the chain's fork name");
                }
            }
            (_, Some(_)) => {
                return invalid("[hard_fork] is only meaningful for kind = \"hard_fork\"")
            }
            _ => {}
        }
        Ok(())
    }
}

/// Epoch of the block at `height` under the honest rotation schedule.
pub fn epoch_at(height: u64, blocks_per_epoch: u64) -> u64 {
    height.saturating_sub(1) / blocks_per_epoch.max(1)
}

/// Parameters of the demo chain used by `replay-fork`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFixture {
    pub format: String,
    pub name: String,
    pub blocks: usize,
    #[serde(default)]
    pub seed: u64,
    pub fix_height: usize,
}

impl ChainFixture {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let f: ChainFixture = toml::from_str(text)?;
        if f.format != CHAIN_FORMAT {
            return Err(ConfigError::Format {
                found: f.format,
                expected: CHAIN_FORMAT,
            });
        }
        if f.fix_height == 0 || f.fix_height > f.blocks {
            return invalid("fix_height must be within 1..=blocks");
        }
        Ok(f)
    }
}

const BUNDLED: [(&str, &str); 7] = [
    (
        "canonical_lra",
        include_str!("../fixtures/canonical_lra.toml"),
    ),
    ("stale_state", include_str!("../fixtures/stale_state.toml")),
    (
        "skip_verification",
        include_str!("../fixtures/skip_verification.toml"),
    ),
    ("adaptive", include_str!("../fixtures/adaptive.toml")),
    ("hidden_fork", include_str!("../fixtures/hidden_fork.toml")),
    ("bogus_fork", include_str!("../fixtures/bogus_fork.toml")),
    ("demo_chain", include_str!("../fixtures/demo_chain.toml")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// Source text of a bundled fixture.
pub fn bundled(name: &str) -> Result<&'static str, ConfigError> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| ConfigError::UnknownFixture(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_fixtures_parse() {
        for name in bundled_names() {
            let text = bundled(name).unwrap();
            if name == "demo_chain" {
                ChainFixture::parse(text).unwrap();
            } else {
                let s = Scenario::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
                assert_eq!(s.name, name);
                let again = Scenario::parse(&s.to_toml()).unwrap();
                assert_eq!(again, s);
            }
        }
    }

    #[test]
    fn rejects_bad_headers_and_recent_leaks() {
        let text = bundled("canonical_lra").unwrap();
        let wrong = text.replace(SCENARIO_FORMAT, "leashsim-scenario/9");
        assert!(matches!(
            Scenario::parse(&wrong),
            Err(ConfigError::Format { .. })
        ));
        let mut s = Scenario::parse(text).unwrap();
        s.adversary.leaked_epochs = vec![s.tip_epoch()];
        assert!(matches!(s.validate(), Err(ConfigError::Invalid(_))));
        let mut s = Scenario::parse(text).unwrap();
        s.adversary.fork_height = s.victim.sleep_height - 1;
        assert!(s.validate().is_err());
        assert!(matches!(
            bundled("nope"),
            Err(ConfigError::UnknownFixture(_))
        ));
    }

    #[test]
    fn epochs_follow_rotation() {
        assert_eq!(epoch_at(0, 4), 0);
        assert_eq!(epoch_at(4, 4), 0);
        assert_eq!(epoch_at(5, 4), 1);
        assert_eq!(epoch_at(24, 4), 5);
    }
}
