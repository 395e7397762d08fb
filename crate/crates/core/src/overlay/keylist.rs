//! Per-OBM filter deciding which requesters may reach which cluster members.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::crypto::PublicKey;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyRequester {
    Key(PublicKey),
    /// Matches every requester.
    Broadcast,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeyListEntry {
    pub requester: KeyRequester,
    pub requestee: PublicKey,
}

#[derive(Clone, Debug, Default)]
pub struct KeyList {
    allow: BTreeSet<KeyListEntry>,
    deny: BTreeSet<(PublicKey, PublicKey)>,
}

impl KeyList {
    pub fn add(&mut self, entry: KeyListEntry) {
        self.allow.insert(entry);
    }

    pub fn remove(&mut self, entry: &KeyListEntry) -> bool {
        self.allow.remove(entry)
    }

    /// Block one requester for one requestee regardless of allow entries.
    pub fn deny(&mut self, requester: PublicKey, requestee: PublicKey) {
        self.deny.insert((requester, requestee));
    }

    pub fn allows(&self, requester: &PublicKey, requestee: &PublicKey) -> bool {
        if self.deny.contains(&(*requester, *requestee)) {
            return false;
        }
        self.allow.contains(&KeyListEntry { requester: KeyRequester::Key(*requester), requestee: *requestee })
            || self.allow.contains(&KeyListEntry { requester: KeyRequester::Broadcast, requestee: *requestee })
    }

    pub fn len(&self) -> usize {
        self.allow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allow.is_empty()
    }
}
