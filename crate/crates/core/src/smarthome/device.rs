//! Home devices and their synthetic data sources.

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::crypto::{dh_keygen, dh_shared_key, encrypt, hash_parts, DhGroupParams, DhSecret, SymmetricKey};
use crate::error::SmartHomeError;
use crate::ids::DeviceId;
use crate::ledger::ActionKind;
use crate::time::SimTime;

/// Pseudo device id of the home's local storage when it takes part in a key grant.
pub const STORAGE: DeviceId = DeviceId(u32::MAX);
/// Pseudo device id of the LBM itself.
pub const LBM: DeviceId = DeviceId(u32::MAX - 1);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    Constant { value: f64 },
    /// Sine wave with the given period in seconds.
    Periodic { period: f64, amplitude: f64 },
    /// A counter bumped on every query.
    QueryBased,
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Constant { value: 21.5 }
    }
}

impl DataSource {
    pub fn value(&self, t: SimTime, query: u64) -> f64 {
        match self {
            DataSource::Constant { value } => *value,
            DataSource::Periodic { period, amplitude } => {
                amplitude * (std::f64::consts::TAU * t.as_secs_f64() / period.max(f64::MIN_POSITIVE)).sin()
            }
            DataSource::QueryBased => query as f64,
        }
    }
}

/// Key for one grant epoch. Mixing in the epoch keeps a re-grant from
/// reproducing a key that was revoked earlier.
pub fn epoch_key(dh: &SymmetricKey, epoch: u64) -> SymmetricKey {
    SymmetricKey(hash_parts(&[b"lsb/home/grant", &dh.0, &epoch.to_le_bytes()]).0)
}

/// Anything holding a home-tier DH key pair: devices and the local storage.
#[derive(Clone, Debug)]
pub struct DhIdentity {
    secret: DhSecret,
    pub public: u64,
}

impl DhIdentity {
    pub fn generate<R: RngCore>(params: &DhGroupParams, rng: &mut R) -> Self {
        let (secret, public) = dh_keygen(params, rng);
        DhIdentity { secret, public }
    }

    pub fn derive(&self, peer_public: u64, epoch: u64, params: &DhGroupParams) -> Result<SymmetricKey, SmartHomeError> {
        Ok(epoch_key(&dh_shared_key(self.secret, peer_public, params)?, epoch))
    }
}

#[derive(Clone, Debug)]
pub struct Device {
    pub id: DeviceId,
    pub capabilities: BTreeSet<ActionKind>,
    pub source: DataSource,
    pub dh: DhIdentity,
    /// Set once the genesis transaction is in the local ledger.
    pub shared_key_with_lbm: Option<SymmetricKey>,
    /// One live key per peer.
    keys: BTreeMap<DeviceId, SymmetricKey>,
    queries: u64,
}

impl Device {
    pub fn new<R: RngCore>(
        id: DeviceId,
        capabilities: impl IntoIterator<Item = ActionKind>,
        source: DataSource,
        params: &DhGroupParams,
        rng: &mut R,
    ) -> Self {
        Device {
            id,
            capabilities: capabilities.into_iter().collect(),
            source,
            dh: DhIdentity::generate(params, rng),
            shared_key_with_lbm: None,
            keys: BTreeMap::new(),
            queries: 0,
        }
    }

    pub fn install_key(&mut self, peer: DeviceId, key: SymmetricKey) {
        self.keys.insert(peer, key);
    }

    pub fn drop_key(&mut self, peer: DeviceId) {
        self.keys.remove(&peer);
    }

    pub fn key_for(&self, peer: DeviceId) -> Option<&SymmetricKey> {
        self.keys.get(&peer)
    }

    pub fn peers(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.keys.keys().copied()
    }

    pub fn seal_for<R: RngCore + CryptoRng>(
        &self,
        peer: DeviceId,
        plaintext: &[u8],
        rng: &mut R,
    ) -> Result<Vec<u8>, SmartHomeError> {
        let key = self.keys.get(&peer).ok_or(SmartHomeError::NoKeyGrant)?;
        Ok(encrypt(key, plaintext, rng))
    }

    /// Current reading: value as f64 LE followed by the query counter.
    pub fn reading(&mut self, t: SimTime) -> Vec<u8> {
        self.queries += 1;
        let v = self.source.value(t, self.queries);
        let mut out = v.to_le_bytes().to_vec();
        out.extend_from_slice(&self.queries.to_le_bytes());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn sources_follow_their_pattern() {
        let p = DataSource::Periodic { period: 4.0, amplitude: 2.0 };
        assert!((p.value(SimTime::from_secs_f64(1.0), 0) - 2.0).abs() < 1e-9);
        assert!(p.value(SimTime::from_secs_f64(2.0), 0).abs() < 1e-9);
        assert_eq!(DataSource::QueryBased.value(SimTime::ZERO, 7), 7.0);
    }

    #[test]
    fn epochs_separate_keys() {
        let params = DhGroupParams::default();
        let mut r = stream(1, "dev", 0);
        let a = DhIdentity::generate(&params, &mut r);
        let b = DhIdentity::generate(&params, &mut r);
        let k0 = a.derive(b.public, 0, &params).unwrap();
        assert_eq!(k0, b.derive(a.public, 0, &params).unwrap());
        assert_ne!(k0, a.derive(b.public, 1, &params).unwrap());
    }
}
