//! Brute-force reference calculators. Each answers a question the protocol
//! code also answers, by a deliberately different route.

use serde::Serialize;

use crate::crypto::{keygen, Hash256, KeyPair, Signature};
use crate::ids::DeviceId;
use crate::ledger::{
    build_multisig, check_transaction, ActionKind, ChainTx, GenesisTransaction, LedgerKind, MultisigTransaction,
    RequesterState, TxIndex,
};
use crate::rng::stream;

/// All k-subsets of 0..n in lexicographic order, visited one by one.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        if idx[i] == i + n - k {
            return;
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Transactions a verifier samples at `ptv` percent of `n`, rounding up.
pub fn sampled(ptv: u32, n: usize) -> usize {
    let k = (ptv as f64 * n as f64 / 100.0).ceil() as usize;
    k.min(n)
}

/// Probability that one verifier's sample misses every fake, counted over
/// every possible sample.
pub fn miss_prob_enumerated(t_max: usize, fakes: usize, ptv: u32) -> f64 {
    let k = sampled(ptv, t_max);
    let (mut miss, mut total) = (0u64, 0u64);
    for_each_subset(t_max, k, |s| {
        total += 1;
        // Fakes sit at the first `fakes` positions; by symmetry any placement gives the same count.
        if s.iter().all(|i| *i >= fakes) {
            miss += 1;
        }
    });
    miss as f64 / total as f64
}

/// Probability that at least one of `verifiers` independent honest verifiers
/// catches a fake.
pub fn detect_prob(t_max: usize, fakes: usize, ptv: u32, verifiers: usize) -> f64 {
    1.0 - miss_prob_enumerated(t_max, fakes, ptv).powi(verifiers as i32)
}

/// Utilization relation solved for the consensus period, unrounded.
pub fn eq1_consensus_period(alpha: f64, t_max: usize, m: usize, rate: f64) -> f64 {
    alpha * t_max as f64 * m as f64 / rate
}

/// Utilization for a load `rate` against a chain appending `t_max` per block,
/// one block per OBM per `cp` seconds.
pub fn eq1_alpha(rate: f64, cp: f64, t_max: usize, m: usize) -> f64 {
    rate * cp / (t_max as f64 * m as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MutationReport {
    pub chain_len: usize,
    pub mutants: usize,
    pub survivors: usize,
    pub clean_chain_ok: bool,
    /// (position, field) of every surviving mutant.
    pub surviving: Vec<(usize, String)>,
}

/// A requester chain of `len` multisig transactions after its genesis.
pub fn honest_chain(len: usize, seed: u64) -> (ChainTx, Vec<MultisigTransaction>) {
    let mut r = stream(seed, "oracle-chain", 0);
    let root = keygen(&mut r);
    let owner = keygen(&mut r);
    let active = keygen(&mut r);
    let g = GenesisTransaction::certified(LedgerKind::Multisig, &owner, &active.public(), &root);
    let mut st = RequesterState::after_genesis(&g, active, keygen(&mut r)).expect("genesis commits to active key");
    let requestee = keygen(&mut r);
    let mut txs = Vec::with_capacity(len);
    for i in 0..len {
        let accept = i % 3 != 2;
        let tx = build_multisig(&st, &requestee, ActionKind::Access, DeviceId(1), accept, &mut r).expect("keys convert");
        st.commit(&ChainTx::Multisig(tx.clone()), &mut r);
        txs.push(tx);
    }
    (ChainTx::Genesis(g), txs)
}

/// Every transaction checked in order against the ones before it.
pub fn chain_verifies(genesis: &ChainTx, txs: &[MultisigTransaction]) -> bool {
    let mut idx = TxIndex::default();
    idx.insert(genesis.clone());
    for tx in txs {
        if check_transaction(tx, &idx).is_err() {
            return false;
        }
        idx.insert(ChainTx::Multisig(tx.clone()));
    }
    true
}

fn flip(sig: &Signature, byte: usize) -> Signature {
    let mut s = sig.0;
    s[byte] ^= 0x01;
    Signature(s)
}

fn mutants_of(tx: &MultisigTransaction, ids: &[Hash256], genesis_id: Hash256, stranger: &KeyPair) -> Vec<(String, MultisigTransaction)> {
    let mut out: Vec<(String, MultisigTransaction)> = Vec::new();
    let mut push = |name: &str, f: &dyn Fn(&mut MultisigTransaction)| {
        let mut m = tx.clone();
        f(&mut m);
        m.refresh_id();
        out.push((name.to_string(), m));
    };
    push("requester_pk", &|m| m.requester_pk = stranger.public());
    for b in [0usize, 31, 63] {
        push(&format!("requester_sig[{b}]"), &|m| m.requester_sig = flip(&m.requester_sig, b));
        push(&format!("requestee_sig[{b}]"), &|m| m.requestee_sig = m.requestee_sig.as_ref().map(|s| flip(s, b)));
    }
    push("requestee_sig=none", &|m| m.requestee_sig = None);
    push("accepted+1", &|m| m.output.accepted += 1);
    push("rejected+1", &|m| m.output.rejected += 1);
    if tx.output.accepted > 0 {
        push("accepted-1", &|m| m.output.accepted -= 1);
    }
    if tx.output.rejected > 0 {
        push("rejected-1", &|m| m.output.rejected -= 1);
    }
    push("next_pk_hash", &|m| m.output.next_pk_hash = stranger.public().hash());
    let mut prevs: Vec<Hash256> = ids.iter().copied().filter(|p| *p != tx.prev_tx_id && *p != tx.tx_id).collect();
    prevs.push(genesis_id);
    prevs.push(Hash256([0xab; 32]));
    prevs.retain(|p| *p != tx.prev_tx_id);
    for (i, p) in prevs.into_iter().enumerate() {
        push(&format!("prev_tx_id#{i}"), &|m| m.prev_tx_id = p);
    }
    // Stale id after an otherwise harmless edit.
    let mut stale = tx.clone();
    stale.metadata.push(0);
    out.push(("metadata/stale_id".into(), stale));
    out
}

/// Apply every single-field mutation to every position of an honest chain
/// and count mutants the checker lets through.
pub fn mutate_chain(len: usize, seed: u64) -> MutationReport {
    let (genesis, txs) = honest_chain(len, seed);
    let clean_chain_ok = chain_verifies(&genesis, &txs);
    let ids: Vec<Hash256> = txs.iter().map(|t| t.tx_id).collect();
    let stranger = keygen(&mut stream(seed, "oracle-stranger", 0));
    let mut mutants = 0;
    let mut surviving = Vec::new();
    for (i, tx) in txs.iter().enumerate() {
        for (field, m) in mutants_of(tx, &ids, genesis.tx_id(), &stranger) {
            mutants += 1;
            let mut chain = txs.clone();
            chain[i] = m;
            if chain_verifies(&genesis, &chain) {
                surviving.push((i, field));
            }
        }
    }
    MutationReport { chain_len: len, mutants, survivors: surviving.len(), clean_chain_ok, surviving }
}
