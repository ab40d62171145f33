use std::io::Write;

use serde::Serialize;

use super::FactorOracle;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Block {
    /// Literal symbol at frame `pos`.
    NewSymbol { pos: usize },
    /// Frames `pos..pos + length` copied from `source_pos..source_pos + length`.
    /// The source starts strictly before `pos` and may overlap the block.
    Repeat {
        pos: usize,
        source_pos: usize,
        length: usize,
    },
}

impl Block {
    pub fn pos(&self) -> usize {
        match *self {
            Block::NewSymbol { pos } | Block::Repeat { pos, .. } => pos,
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            Block::NewSymbol { .. } => 1,
            Block::Repeat { length, .. } => length,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComprorCode {
    pub blocks: Vec<Block>,
    pub total_bits: f64,
    /// Block cost spread evenly over the block's frames.
    pub per_position_bits: Vec<f64>,
    pub alphabet_size: usize,
}

impl ComprorCode {
    pub fn n_frames(&self) -> usize {
        self.per_position_bits.len()
    }

    /// Rebuild the label sequence, reading literals from `literal(pos)`.
    pub fn decode(&self, literal: impl Fn(usize) -> usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_frames());
        for b in &self.blocks {
            match *b {
                Block::NewSymbol { pos } => out.push(literal(pos)),
                Block::Repeat {
                    source_pos, length, ..
                } => {
                    for k in 0..length {
                        out.push(out[source_pos + k]);
                    }
                }
            }
        }
        out
    }
}

/// Greedy left-to-right parse. From each block start the block is extended
/// while the next state's repeated suffix still covers it; a block of one
/// or more frames becomes a Repeat pointing behind the suffix link.
///
/// Costs: `log2 |S|` per literal, `log2 T + log2 L` per repeat of length `L`.
pub fn compror_encode(oracle: &FactorOracle) -> ComprorCode {
    let n = oracle.len();
    let lit = (oracle.alphabet_size.max(1) as f64).log2();
    let log_t = (n.max(1) as f64).log2();
    let mut blocks = Vec::new();
    let mut per_position_bits = Vec::with_capacity(n);
    let mut total_bits = 0.0;
    let mut j = 0;
    while j < n {
        let mut i = j;
        while i < n && oracle.lrs[i + 1] > i - j {
            i += 1;
        }
        if i == j {
            blocks.push(Block::NewSymbol { pos: j });
            per_position_bits.push(lit);
            total_bits += lit;
            j += 1;
        } else {
            let length = i - j;
            let src_end = oracle.sfx[i].expect("states past 0 have suffix links");
            blocks.push(Block::Repeat {
                pos: j,
                source_pos: src_end - length,
                length,
            });
            let cost = log_t + (length as f64).log2();
            per_position_bits.extend(std::iter::repeat_n(cost / length as f64, length));
            total_bits += cost;
            j = i;
        }
    }
    ComprorCode {
        blocks,
        total_bits,
        per_position_bits,
        alphabet_size: oracle.alphabet_size,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IRProfile {
    /// `max(0, log2 |S| - c(t))` per frame, in bits.
    pub per_bar: Vec<f64>,
    pub total: f64,
    pub theta: f64,
    pub alphabet_size: usize,
}

impl IRProfile {
    pub fn len(&self) -> usize {
        self.per_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_bar.is_empty()
    }

    /// CSV with columns `bar_index,ir_bits`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bar_index,ir_bits")?;
        for (t, v) in self.per_bar.iter().enumerate() {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Per-frame compression gain of the code over literal coding.
pub fn ir_profile(oracle: &FactorOracle, code: &ComprorCode) -> Result<IRProfile> {
    if code.alphabet_size == 0 {
        return Err(Error::InsufficientData("empty alphabet".into()));
    }
    if code.n_frames() != oracle.len() {
        return Err(Error::DimensionMismatch {
            context: "compror code length",
            expected: oracle.len(),
            actual: code.n_frames(),
        });
    }
    let lit = (code.alphabet_size as f64).log2();
    let per_bar: Vec<f64> = code
        .per_position_bits
        .iter()
        .map(|c| (lit - c).max(0.0))
        .collect();
    Ok(IRProfile {
        total: per_bar.iter().sum(),
        per_bar,
        theta: oracle.theta,
        alphabet_size: code.alphabet_size,
    })
}
