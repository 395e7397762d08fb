//! Scripted attacker behaviors. An attack only swaps the compromised node's
//! handler behavior; the engine and honest handlers are untouched.

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::crypto::{keygen, Signature};
use crate::ids::{DeviceId, NodeId};
use crate::ledger::{build_multisig, ActionKind, ChainTx, LedgerKind, MultisigTransaction, RequesterState};
use crate::time::SimDuration;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FakeKind {
    /// Requester key does not hash to the previous commitment.
    #[default]
    PkLink,
    /// A real pooled transaction with its requestee signature corrupted.
    BadSignature,
}

/// How a (possibly compromised) OBM deviates from the protocol.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum ObmBehavior {
    #[default]
    Honest,
    /// Replace `fakes_per_block` transactions of every own block with fakes.
    Appending { fakes_per_block: usize, fake: FakeKind },
    /// Emit `burst` blocks `gap` apart whenever it generates.
    BreakingInterval { burst: u32, gap: SimDuration },
    /// Skip the waiting period.
    EarlyBlocks,
    /// Silently drop member submissions.
    Dropping,
    /// Vote for this consensus period in every throughput window.
    ConsensusPeriodForge { cp: SimDuration },
}

impl ObmBehavior {
    pub fn is_honest(&self) -> bool {
        matches!(self, ObmBehavior::Honest)
    }
}

/// A fake transaction chained onto `anchor` with a fresh requester key. It
/// fails verification at the key-hash link.
pub fn fake_transaction<R: RngCore + CryptoRng>(anchor: &ChainTx, rng: &mut R) -> MultisigTransaction {
    let state = RequesterState {
        ledger: LedgerKind::Multisig,
        active: keygen(rng),
        upcoming: keygen(rng),
        prev_tx_id: anchor.tx_id(),
        prev_counters: anchor.counters(),
    };
    let requestee = keygen(rng);
    build_multisig(&state, &requestee, ActionKind::Access, DeviceId(0), true, rng).expect("fresh ed25519 keys always convert")
}

/// A real transaction whose requestee signature was corrupted. The chain link
/// stays valid, so only the signature check catches it.
pub fn tamper_signature(real: &MultisigTransaction) -> MultisigTransaction {
    let mut tx = real.clone();
    let mut s = tx.requestee_sig.map(|s| s.0).unwrap_or([0; 64]);
    s[0] ^= 1;
    tx.requestee_sig = Some(Signature(s));
    tx.refresh_id();
    tx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Appending,
    BreakingTimeInterval,
    FalseReputation,
    Dropping,
    ConsensusPeriodForge,
    EarlyBlocks,
    Modification,
    DeviceInjection,
    LinkingProbe,
}

/// Attack section of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackScript {
    pub kind: AttackKind,
    /// Compromised node ids (OBM ids for overlay attacks).
    #[serde(default)]
    pub nodes: Vec<u32>,
    /// Seconds after which the behavior switches on.
    #[serde(default)]
    pub start: f64,
    #[serde(default = "one")]
    pub fakes_per_block: usize,
    #[serde(default)]
    pub fake: FakeKind,
    #[serde(default = "three")]
    pub burst: u32,
    #[serde(default = "burst_gap")]
    pub burst_gap: f64,
    /// Forged consensus period, seconds.
    #[serde(default = "forged_cp")]
    pub forged_cp: f64,
}

fn one() -> usize {
    1
}
fn three() -> u32 {
    3
}
fn burst_gap() -> f64 {
    0.001
}
fn forged_cp() -> f64 {
    0.5
}

impl AttackScript {
    pub fn new(kind: AttackKind, nodes: Vec<u32>) -> Self {
        AttackScript {
            kind,
            nodes,
            start: 0.0,
            fakes_per_block: 1,
            fake: FakeKind::PkLink,
            burst: 3,
            burst_gap: burst_gap(),
            forged_cp: forged_cp(),
        }
    }

    pub fn compromised(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| NodeId(*n))
    }

    /// Behavior installed on compromised OBMs, if this is an overlay attack.
    pub fn obm_behavior(&self) -> Option<ObmBehavior> {
        Some(match self.kind {
            AttackKind::Appending => ObmBehavior::Appending { fakes_per_block: self.fakes_per_block, fake: self.fake },
            AttackKind::BreakingTimeInterval => {
                ObmBehavior::BreakingInterval { burst: self.burst, gap: SimDuration::from_secs_f64(self.burst_gap) }
            }
            AttackKind::EarlyBlocks => ObmBehavior::EarlyBlocks,
            AttackKind::Dropping => ObmBehavior::Dropping,
            AttackKind::ConsensusPeriodForge => {
                ObmBehavior::ConsensusPeriodForge { cp: SimDuration::from_secs_f64(self.forged_cp) }
            }
            _ => return None,
        })
    }
}

/// Requester-side reputation inflation: bump output[0] by `extra` beyond the
/// honest increment and re-sign as both parties would.
pub fn inflate_reputation(
    state: &RequesterState,
    requestee: &crate::crypto::KeyPair,
    extra_accepted: u64,
    extra_rejected: u64,
    rng: &mut (impl RngCore + CryptoRng),
) -> MultisigTransaction {
    let mut tx = build_multisig(state, requestee, ActionKind::Access, DeviceId(0), true, rng)
        .expect("fresh ed25519 keys always convert");
    tx.output.accepted += extra_accepted;
    tx.output.rejected += extra_rejected;
    tx.requester_sig = state.active.sign(&tx.requester_body());
    tx.requestee_sig = Some(requestee.sign(&tx.requestee_body()));
    tx.refresh_id();
    tx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{check_transaction, GenesisTransaction, TxIndex, TxRejection};
    use crate::rng::stream;

    fn setup() -> (TxIndex, RequesterState, crate::crypto::KeyPair, ChainTx) {
        let mut r = stream(3, "adv", 0);
        let root = keygen(&mut r);
        let owner = keygen(&mut r);
        let active = keygen(&mut r);
        let upcoming = keygen(&mut r);
        let g = GenesisTransaction::certified(LedgerKind::Multisig, &owner, &active.public(), &root);
        let st = RequesterState::after_genesis(&g, active, upcoming).unwrap();
        let mut idx = TxIndex::default();
        let g = ChainTx::Genesis(g);
        idx.insert(g.clone());
        (idx, st, keygen(&mut r), g)
    }

    #[test]
    fn fakes_fail_transaction_checks() {
        let (idx, _, _, g) = setup();
        let mut r = stream(4, "adv", 0);
        let f = fake_transaction(&g, &mut r);
        assert_eq!(check_transaction(&f, &idx), Err(TxRejection::PkHashMismatch));
        let (_, st, requestee, _) = setup();
        let real = build_multisig(&st, &requestee, ActionKind::Monitor, DeviceId(1), true, &mut r).unwrap();
        assert_eq!(check_transaction(&real, &idx), Ok(()));
        assert_eq!(check_transaction(&tamper_signature(&real), &idx), Err(TxRejection::BadRequesteeSig));
    }

    #[test]
    fn inflated_outputs_are_rejected() {
        let (idx, st, requestee, _) = setup();
        let mut r = stream(5, "adv", 0);
        let honest = inflate_reputation(&st, &requestee, 0, 0, &mut r);
        assert_eq!(check_transaction(&honest, &idx), Ok(()));
        let plus_two = inflate_reputation(&st, &requestee, 1, 0, &mut r);
        assert_eq!(check_transaction(&plus_two, &idx), Err(TxRejection::BadOutputDelta));
        let both = inflate_reputation(&st, &requestee, 0, 1, &mut r);
        assert_eq!(check_transaction(&both, &idx), Err(TxRejection::BadOutputDelta));
    }
}
