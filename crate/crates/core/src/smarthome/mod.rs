//! The home tier: devices, local storage, the cloud and the LBM that ties them together.

pub mod cloud;
pub mod device;
pub mod lbm;
pub mod storage;

pub use cloud::CloudStorage;
pub use device::{DataSource, Device, DhIdentity, LBM, STORAGE};
pub use lbm::{CloudAccount, KeyGrant, LbmConfig, LbmState, OverlayResponse, OwnerApproval, StoreReceipt};
pub use storage::{Credential, LocalStorage, StorageRecord};
