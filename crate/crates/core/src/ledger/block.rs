use serde::{Deserialize, Serialize};

use crate::codec::{Dec, Enc};
use crate::crypto::{hash, verify, Hash256, KeyPair, PublicKey, Signature};
use crate::error::CodecError;
use crate::ids::{NodeId, ObmId};
use crate::ledger::tx::ChainTx;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub prev_block_hash: Hash256,
    pub generator_id: ObmId,
    pub generator_sig: Signature,
    /// Kept sorted by id so replicas serialize identically.
    pub verifier_sigs: Vec<(ObmId, Signature)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<ChainTx>,
}

pub fn verifier_message(block_hash: &Hash256) -> Vec<u8> {
    let mut e = Enc::tagged(b"lsb/block/verifier");
    e.hash(block_hash);
    e.finish()
}

fn generator_message(block_hash: &Hash256) -> Vec<u8> {
    let mut e = Enc::tagged(b"lsb/block/generator");
    e.hash(block_hash);
    e.finish()
}

impl Block {
    pub fn new(prev_block_hash: Hash256, generator_id: ObmId, txs: Vec<ChainTx>, key: &KeyPair) -> Self {
        let mut b = Block {
            header: BlockHeader {
                prev_block_hash,
                generator_id,
                generator_sig: Signature([0; 64]),
                verifier_sigs: Vec::new(),
            },
            txs,
        };
        b.header.generator_sig = key.sign(&generator_message(&b.hash()));
        b
    }

    /// Hash over the linking header fields and the recomputed ids of every
    /// transaction. Signatures are excluded since they attach to this hash.
    pub fn hash(&self) -> Hash256 {
        let mut e = Enc::tagged(b"lsb/block/hash");
        e.hash(&self.header.prev_block_hash).u32(self.header.generator_id.0).u32(self.txs.len() as u32);
        for tx in &self.txs {
            e.hash(&tx.compute_id());
        }
        hash(e.as_slice())
    }

    pub fn generator_sig_valid(&self, generator_pk: &PublicKey) -> bool {
        verify(generator_pk, &generator_message(&self.hash()), &self.header.generator_sig)
    }

    /// Ids as stored must match contents.
    pub fn ids_consistent(&self) -> bool {
        self.txs.iter().all(|t| t.tx_id() == t.compute_id())
    }

    pub fn add_verifier_sig(&mut self, id: ObmId, sig: Signature) {
        match self.header.verifier_sigs.binary_search_by_key(&id, |(i, _)| *i) {
            Ok(_) => {}
            Err(pos) => self.header.verifier_sigs.insert(pos, (id, sig)),
        }
    }

    pub fn encode(&self, e: &mut Enc) {
        e.hash(&self.header.prev_block_hash)
            .u32(self.header.generator_id.0)
            .sig(&self.header.generator_sig)
            .u32(self.header.verifier_sigs.len() as u32);
        for (id, s) in &self.header.verifier_sigs {
            e.u32(id.0).sig(s);
        }
        e.u32(self.txs.len() as u32);
        for tx in &self.txs {
            tx.encode(e);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Enc::new();
        self.encode(&mut e);
        e.finish()
    }

    pub fn decode(d: &mut Dec) -> Result<Self, CodecError> {
        let prev_block_hash = d.hash()?;
        let generator_id = NodeId(d.u32()?);
        let generator_sig = d.sig()?;
        let nv = d.u32()? as usize;
        let mut verifier_sigs = Vec::with_capacity(nv.min(1024));
        for _ in 0..nv {
            verifier_sigs.push((NodeId(d.u32()?), d.sig()?));
        }
        let nt = d.u32()? as usize;
        let mut txs = Vec::with_capacity(nt.min(1024));
        for _ in 0..nt {
            txs.push(ChainTx::decode(d)?);
        }
        Ok(Block { header: BlockHeader { prev_block_hash, generator_id, generator_sig, verifier_sigs }, txs })
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CodecError> {
        let mut d = Dec::new(buf);
        let b = Block::decode(&mut d)?;
        d.finish()?;
        Ok(b)
    }
}
