//! Chunk vectors of `p` consecutive frames and their context cascades.

use crate::error::{Error, Result};
use crate::features::mel::MelPowerSpectrogram;

/// Chunks of `p` concatenated mel frames. The last frame is repeated to
/// complete a trailing partial chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSequence {
    p: usize,
    n_mels: usize,
    source_frames: usize,
    chunks: Vec<Vec<f64>>,
}

impl ChunkSequence {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn dim(&self) -> usize {
        self.p * self.n_mels
    }

    /// Frame count before padding.
    pub fn source_frames(&self) -> usize {
        self.source_frames
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunk(&self, c: usize) -> &[f64] {
        &self.chunks[c]
    }

    pub fn chunks(&self) -> &[Vec<f64>] {
        &self.chunks
    }

    /// Padded frame sequence, `len() * p` frames.
    pub fn flatten(&self) -> Vec<f64> {
        self.chunks.concat()
    }
}

pub fn make_chunks(mps: &MelPowerSpectrogram, p: usize) -> Result<ChunkSequence> {
    if p == 0 {
        return Err(Error::invalid("chunk size p must be at least 1"));
    }
    let frames = mps.frames();
    let count = frames.div_ceil(p);
    let chunks = (0..count)
        .map(|c| {
            (c * p..(c + 1) * p)
                .flat_map(|t| mps.frame(t.min(frames - 1)).iter().copied())
                .collect()
        })
        .collect();
    Ok(ChunkSequence {
        p,
        n_mels: mps.n_mels(),
        source_frames: frames,
        chunks,
    })
}

/// Context vector for every chunk: chunks `c-F+1 ..= c`, with chunk 0
/// repeated in place of chunks before the start.
pub fn make_context(cs: &ChunkSequence, context: usize) -> Result<Vec<Vec<f64>>> {
    if context == 0 {
        return Err(Error::invalid("context length F must be at least 1"));
    }
    if cs.is_empty() {
        return Err(Error::invalid("cannot build context from an empty chunk sequence"));
    }
    Ok((0..cs.len())
        .map(|c| {
            (0..context)
                .flat_map(|j| {
                    let idx = (c + j + 1).saturating_sub(context);
                    cs.chunk(idx).iter().copied()
                })
                .collect()
        })
        .collect())
}
