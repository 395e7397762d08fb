//! Transaction and block formats for both tiers, transaction verification and
//! chain maintenance.

pub mod block;
pub mod chain;
pub mod dump;
pub mod genesis;
pub mod local_il;
pub mod tx;
pub mod verify;

pub use block::{Block, BlockHeader};
pub use chain::PublicChain;
pub use genesis::{verify_genesis, GenesisProof, GenesisTransaction, MockBurnLedger, TrustRoots};
pub use local_il::{policy_check, Decision, LocalIl, LocalIlBlock, LocalIlTransaction, LocalTxType, PolicyEntry, PolicySubject, Requester};
pub use tx::{
    build_multisig, requestee_sign, ActionKind, ChainTx, LedgerKind, Metadata, MultisigTransaction, RequesterState,
    SingleSigTransaction, TransactionOutput,
};
pub use verify::{check_transaction, verify_transaction, ChainView, StagedView, TxIndex, TxRejection};
