//! The per-home immutable ledger: hash-linked blocks, each carrying a policy header.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codec::Enc;
use crate::crypto::{hash, Hash256, PublicKey};
use crate::ids::DeviceId;
use crate::ledger::tx::ActionKind;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySubject {
    Device(DeviceId),
    Key(PublicKey),
    Any,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub subject: PolicySubject,
    pub action: ActionKind,
    pub target_device: DeviceId,
    /// Reserved; never interpreted.
    pub extra: Option<String>,
}

impl PolicyEntry {
    pub fn new(subject: PolicySubject, action: ActionKind, target_device: DeviceId) -> Self {
        PolicyEntry { subject, action, target_device, extra: None }
    }

    fn encode(&self, e: &mut Enc) {
        match &self.subject {
            PolicySubject::Device(d) => {
                e.u8(0).u32(d.0);
            }
            PolicySubject::Key(pk) => {
                e.u8(1).pk(pk);
            }
            PolicySubject::Any => {
                e.u8(2);
            }
        }
        e.u8(self.action.tag()).u32(self.target_device.0).opt(self.extra.as_ref(), |e, s| {
            e.bytes(s.as_bytes());
        });
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Requester {
    Device(DeviceId),
    Key(PublicKey),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Allow,
    Deny,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalTxType {
    Genesis,
    KeyGrant,
    KeyRevoke,
    Action(ActionKind),
}

impl LocalTxType {
    fn tag(self) -> u8 {
        match self {
            LocalTxType::Genesis => 0,
            LocalTxType::KeyGrant => 1,
            LocalTxType::KeyRevoke => 2,
            LocalTxType::Action(a) => 16 + a.tag(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalIlTransaction {
    pub prev_tx_ptr: Option<Hash256>,
    pub tx_id: Hash256,
    pub device_id: DeviceId,
    pub tx_type: LocalTxType,
    pub overlay_tx_hash: Option<Hash256>,
}

impl LocalIlTransaction {
    fn encode(&self, e: &mut Enc) {
        e.opt(self.prev_tx_ptr.as_ref(), |e, h| {
            e.hash(h);
        })
        .hash(&self.tx_id)
        .u32(self.device_id.0)
        .u8(self.tx_type.tag())
        .opt(self.overlay_tx_hash.as_ref(), |e, h| {
            e.hash(h);
        });
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalIlBlock {
    pub prev_block_hash: Hash256,
    pub policy: Vec<PolicyEntry>,
    pub txs: Vec<LocalIlTransaction>,
}

impl LocalIlBlock {
    pub fn encode(&self, e: &mut Enc) {
        e.hash(&self.prev_block_hash).u32(self.policy.len() as u32);
        for p in &self.policy {
            p.encode(e);
        }
        e.u32(self.txs.len() as u32);
        for t in &self.txs {
            t.encode(e);
        }
    }

    pub fn hash(&self) -> Hash256 {
        let mut e = Enc::tagged(b"lsb/il/block");
        self.encode(&mut e);
        hash(e.as_slice())
    }
}

#[derive(Clone, Debug)]
pub struct LocalIl {
    blocks: Vec<LocalIlBlock>,
    capacity: usize,
    seq: u64,
    device_heads: BTreeMap<DeviceId, Hash256>,
}

impl LocalIl {
    pub fn new(policy: Vec<PolicyEntry>, capacity: usize) -> Self {
        LocalIl {
            blocks: vec![LocalIlBlock { prev_block_hash: Hash256::ZERO, policy, txs: Vec::new() }],
            capacity: capacity.max(1),
            seq: 0,
            device_heads: BTreeMap::new(),
        }
    }

    pub fn blocks(&self) -> &[LocalIlBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [LocalIlBlock] {
        &mut self.blocks
    }

    pub fn current_policy(&self) -> &[PolicyEntry] {
        &self.blocks.last().expect("il always has a block").policy
    }

    fn open_new_block(&mut self, policy: Vec<PolicyEntry>) {
        let prev = self.blocks.last().expect("il always has a block").hash();
        self.blocks.push(LocalIlBlock { prev_block_hash: prev, policy, txs: Vec::new() });
    }

    /// Seal the open block and start a new one under `policy`.
    pub fn update_policy(&mut self, policy: Vec<PolicyEntry>) {
        self.open_new_block(policy);
    }

    pub fn append(
        &mut self,
        device_id: DeviceId,
        tx_type: LocalTxType,
        overlay_tx_hash: Option<Hash256>,
    ) -> LocalIlTransaction {
        if self.blocks.last().expect("il always has a block").txs.len() >= self.capacity {
            let policy = self.current_policy().to_vec();
            self.open_new_block(policy);
        }
        let prev_tx_ptr = self.device_heads.get(&device_id).copied();
        let mut e = Enc::tagged(b"lsb/il/tx");
        e.opt(prev_tx_ptr.as_ref(), |e, h| {
            e.hash(h);
        })
        .u32(device_id.0)
        .u8(tx_type.tag())
        .opt(overlay_tx_hash.as_ref(), |e, h| {
            e.hash(h);
        })
        .u64(self.seq);
        self.seq += 1;
        let tx = LocalIlTransaction { prev_tx_ptr, tx_id: hash(e.as_slice()), device_id, tx_type, overlay_tx_hash };
        self.device_heads.insert(device_id, tx.tx_id);
        self.blocks.last_mut().expect("il always has a block").txs.push(tx.clone());
        tx
    }

    pub fn transactions(&self) -> impl Iterator<Item = &LocalIlTransaction> {
        self.blocks.iter().flat_map(|b| b.txs.iter())
    }

    pub fn tx_count(&self) -> usize {
        self.blocks.iter().map(|b| b.txs.len()).sum()
    }

    /// Digest over the full serialized ledger.
    pub fn digest(&self) -> Hash256 {
        let mut e = Enc::tagged(b"lsb/il/digest");
        e.u32(self.blocks.len() as u32);
        for b in &self.blocks {
            b.encode(&mut e);
        }
        hash(e.as_slice())
    }

    /// Height of the first block whose predecessor link is broken.
    pub fn validate_links(&self) -> Result<(), usize> {
        let mut prev = Hash256::ZERO;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.prev_block_hash != prev {
                return Err(i);
            }
            prev = b.hash();
        }
        Ok(())
    }

    pub fn policy_check(&self, requester: &Requester, action: ActionKind, device: DeviceId) -> Decision {
        policy_check(self, requester, action, device)
    }
}

/// Newest policy header only; deny unless an entry matches.
pub fn policy_check(il: &LocalIl, requester: &Requester, action: ActionKind, device: DeviceId) -> Decision {
    let hit = il.current_policy().iter().any(|p| {
        let who = match (&p.subject, requester) {
            (PolicySubject::Any, _) => true,
            (PolicySubject::Device(a), Requester::Device(b)) => a == b,
            (PolicySubject::Key(a), Requester::Key(b)) => a == b,
            _ => false,
        };
        who && p.action == action && p.target_device == device
    });
    if hit {
        Decision::Allow
    } else {
        Decision::Deny
    }
}
