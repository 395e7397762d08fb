//! Local storage inside the home.

use std::collections::BTreeMap;

use crate::crypto::{decrypt, hash, DhGroupParams, Hash256, PublicKey, SymmetricKey};
use crate::error::SmartHomeError;
use crate::ids::DeviceId;
use crate::smarthome::device::DhIdentity;
use crate::time::SimTime;

/// Who may read a record back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Credential {
    /// Local records belong to the device that wrote them.
    Device(DeviceId),
    /// Cloud records are filed under a per-device account key.
    Account(PublicKey),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StorageRecord {
    pub blob: Vec<u8>,
    /// Hash of the blob at write time. Later changes to `blob` do not touch it.
    pub data_hash: Hash256,
    pub credential: Credential,
    pub timestamp: SimTime,
}

impl StorageRecord {
    pub fn new(blob: Vec<u8>, credential: Credential, timestamp: SimTime) -> Self {
        StorageRecord { data_hash: hash(&blob), blob, credential, timestamp }
    }

    pub fn intact(&self) -> bool {
        hash(&self.blob) == self.data_hash
    }
}

/// Accepts only blobs encrypted under a key the LBM granted.
#[derive(Clone, Debug)]
pub struct LocalStorage {
    pub dh: DhIdentity,
    keys: BTreeMap<DeviceId, SymmetricKey>,
    records: Vec<StorageRecord>,
    pub rejected: u64,
}

impl LocalStorage {
    pub fn new<R: rand::RngCore>(params: &DhGroupParams, rng: &mut R) -> Self {
        LocalStorage { dh: DhIdentity::generate(params, rng), keys: BTreeMap::new(), records: Vec::new(), rejected: 0 }
    }

    pub fn install_key(&mut self, device: DeviceId, key: SymmetricKey) {
        self.keys.insert(device, key);
    }

    pub fn drop_key(&mut self, device: DeviceId) {
        self.keys.remove(&device);
    }

    pub fn key_for(&self, device: DeviceId) -> Option<&SymmetricKey> {
        self.keys.get(&device)
    }

    /// Authenticate and store a blob sent by `device`.
    pub fn accept(&mut self, device: DeviceId, ciphertext: &[u8], now: SimTime) -> Result<&StorageRecord, SmartHomeError> {
        let Some(key) = self.keys.get(&device) else {
            self.rejected += 1;
            return Err(SmartHomeError::NoKeyGrant);
        };
        let blob = match decrypt(key, ciphertext) {
            Ok(b) => b,
            Err(_) => {
                self.rejected += 1;
                return Err(SmartHomeError::Unauthenticated);
            }
        };
        self.records.push(StorageRecord::new(blob, Credential::Device(device), now));
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn records(&self) -> &[StorageRecord] {
        &self.records
    }

    pub fn latest(&self, device: DeviceId) -> Option<&StorageRecord> {
        self.records.iter().rev().find(|r| r.credential == Credential::Device(device))
    }
}
