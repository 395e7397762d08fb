use thiserror::Error;

use crate::crypto::Hash256;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("ciphertext failed authentication")]
    Decrypt,
    #[error("public key is not a valid curve point")]
    BadPublicKey,
    #[error("{0} is not an element of the configured group")]
    NotGroupElement(u64),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("block {height}: prev hash {got} does not match tip {expected}")]
    PrevHashMismatch { height: usize, expected: Hash256, got: Hash256 },
    #[error("block carries {0} transactions, outside [1, t_max]")]
    BadBlockSize(usize),
    #[error("transaction {0} already on chain")]
    DuplicateTx(Hash256),
    #[error("unknown parent block {0}")]
    UnknownParent(Hash256),
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("unexpected end of input")]
    Eof,
    #[error("unknown tag {0}")]
    Tag(u8),
    #[error("trailing bytes after decode")]
    Trailing,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SmartHomeError {
    #[error("device {0} is already registered")]
    DuplicateDevice(u32),
    #[error("device {0} is not registered")]
    UnknownDevice(u32),
    #[error("owner did not approve")]
    NotApproved,
    #[error("policy denies the request")]
    PolicyDenied,
    #[error("no valid key grant")]
    NoKeyGrant,
    #[error("message failed authentication")]
    Unauthenticated,
    #[error("local ledger is empty")]
    EmptyLedger,
    #[error("no overlay identity or cloud account configured")]
    NotAttached,
    #[error("a store request is still outstanding")]
    Pending,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}
