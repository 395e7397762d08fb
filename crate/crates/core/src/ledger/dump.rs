//! Newline-delimited JSON dumps for debugging and replica comparison.

use serde::Serialize;

use crate::crypto::Hash256;
use crate::ledger::block::Block;
use crate::ledger::chain::PublicChain;
use crate::ledger::local_il::{LocalIl, LocalIlBlock};

#[derive(Serialize)]
struct Line<'a, B> {
    height: usize,
    hash: Hash256,
    block: &'a B,
}

pub fn dump_chain(chain: &PublicChain) -> String {
    dump_blocks(chain.blocks(), Block::hash)
}

pub fn dump_il(il: &LocalIl) -> String {
    dump_blocks(il.blocks(), LocalIlBlock::hash)
}

fn dump_blocks<B: Serialize>(blocks: &[B], h: impl Fn(&B) -> Hash256) -> String {
    let mut out = String::new();
    for (height, block) in blocks.iter().enumerate() {
        let line = Line { height, hash: h(block), block };
        out.push_str(&serde_json::to_string(&line).expect("chain types serialize"));
        out.push('\n');
    }
    out
}
