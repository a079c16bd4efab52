//! Seeded Toeplitz-hashing randomness extraction over GF(2).
//!
//! A `j x k` Toeplitz matrix is defined by `k + j - 1` seed bits laid out as
//! the first column (length `j`) followed by the first row's remaining
//! `k - 1` bits. Output sizing follows the leftover hash lemma
//! `j <= k * R / bits_per_sample - 2 * log2(1/epsilon)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bitstream::BitBuffer;
use crate::error::Error;
use crate::rng::{substream, Stage};
use crate::synth::SampleBlock;
use crate::Result;

/// Default extractor dimensions of the reference system: 3072-bit input
/// blocks (256 12-bit samples) hashed to 1792 bits, collision budget 2^-100.
pub const DEFAULT_K: usize = 3072;
pub const DEFAULT_J: usize = 1792;
pub const DEFAULT_EPSILON_LOG2: u32 = 100;

/// Extractor dimensions and seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractorConfig {
    /// Input bits per block.
    pub k: usize,
    /// Output bits per block.
    pub j: usize,
    /// `-log2` of the collision probability budget.
    pub epsilon_log2: u32,
    /// `k + j - 1` seed bits: first column, then the first row's tail.
    pub seed: BitBuffer,
}

impl ExtractorConfig {
    pub fn new(k: usize, j: usize, epsilon_log2: u32, seed: BitBuffer) -> Result<Self> {
        if !(j >= 1 && j < k) {
            return Err(Error::InvalidParameter(format!(
                "extractor dimensions must satisfy 1 <= j < k, got k = {k}, j = {j}"
            )));
        }
        if seed.len() != k + j - 1 {
            return Err(Error::LengthMismatch {
                expected: k + j - 1,
                got: seed.len(),
            });
        }
        Ok(Self {
            k,
            j,
            epsilon_log2,
            seed,
        })
    }

    /// Draw the seed from a seeded generator; the digest ties the run
    /// manifest to the exact matrix used.
    pub fn with_random_seed(k: usize, j: usize, epsilon_log2: u32, seed: u64) -> Result<Self> {
        let mut rng = substream(seed, Stage::ExtractorSeed, 0);
        let mut bits = BitBuffer::with_capacity(k + j - 1);
        let mut remaining = k + j - 1;
        while remaining > 0 {
            let take = remaining.min(64);
            bits.push_low_bits(rand::RngCore::next_u64(&mut rng), take);
            remaining -= take;
        }
        Self::new(k, j, epsilon_log2, bits)
    }

    /// SHA-256 over the dimensions and packed seed bits.
    pub fn seed_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.k as u64).to_le_bytes());
        h.update((self.j as u64).to_le_bytes());
        h.update(self.seed.to_bytes());
        hex::encode(h.finalize())
    }

    /// Seed bit backing matrix entry `T[row][col]` (`row - col` indexes the
    /// first column for nonnegative differences, the first row otherwise).
    pub fn matrix_bit(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.j && col < self.k);
        if row >= col {
            self.seed.get(row - col)
        } else {
            self.seed.get(self.j - 1 + (col - row))
        }
    }
}

/// Maximum output bits per `k`-bit block certified at `r_dis_avg` bits per
/// `bits_per_sample`-bit sample:
/// `floor(k * r / bits_per_sample - 2 * epsilon_log2)`.
pub fn size_output(
    k: usize,
    r_dis_avg: f64,
    bits_per_sample: u32,
    epsilon_log2: u32,
) -> Result<usize> {
    if bits_per_sample == 0 || !k.is_multiple_of(bits_per_sample as usize) {
        return Err(Error::InvalidParameter(format!(
            "block size k = {k} must be a multiple of the sample precision {bits_per_sample}"
        )));
    }
    if !(r_dis_avg > 0.0 && r_dis_avg <= bits_per_sample as f64) {
        return Err(Error::InvalidParameter(format!(
            "certified rate {r_dis_avg} must lie in (0, {bits_per_sample}]"
        )));
    }
    let bound = (k as f64 * r_dis_avg / bits_per_sample as f64 - 2.0 * epsilon_log2 as f64).floor();
    if bound < 1.0 {
        return Err(Error::NoExtractableOutput(format!(
            "leftover-hash bound {bound} admits no output bits \
             (k = {k}, r = {r_dis_avg}, epsilon = 2^-{epsilon_log2})"
        )));
    }
    Ok(bound as usize)
}

/// Toeplitz multiplier with precomputed rows for word-wide AND/popcount.
#[derive(Debug, Clone)]
pub struct ToeplitzHasher {
    config: ExtractorConfig,
    /// Row-major packed rows, `words_per_row` words each; bit order matches
    /// `BitBuffer`.
    rows: Vec<u64>,
    words_per_row: usize,
}

impl ToeplitzHasher {
    pub fn new(config: ExtractorConfig) -> Self {
        let words_per_row = config.k.div_ceil(64);
        let mut rows = vec![0u64; config.j * words_per_row];
        for row in 0..config.j {
            let base = row * words_per_row;
            for col in 0..config.k {
                if config.matrix_bit(row, col) {
                    rows[base + col / 64] |= 1u64 << (63 - (col % 64));
                }
            }
        }
        Self {
            config,
            rows,
            words_per_row,
        }
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    /// `T * x` over GF(2) for one exact `k`-bit input block.
    pub fn extract_block(&self, input: &BitBuffer) -> Result<BitBuffer> {
        if input.len() != self.config.k {
            return Err(Error::LengthMismatch {
                expected: self.config.k,
                got: input.len(),
            });
        }
        Ok(self.extract_block_words(input.words()))
    }

    fn extract_block_words(&self, input: &[u64]) -> BitBuffer {
        debug_assert_eq!(input.len(), self.words_per_row);
        let mut out = BitBuffer::with_capacity(self.config.j);
        for row in 0..self.config.j {
            let base = row * self.words_per_row;
            let mut acc = 0u32;
            for (w, &x) in self.rows[base..base + self.words_per_row].iter().zip(input) {
                acc ^= (w & x).count_ones();
            }
            out.push_bit(acc & 1 == 1);
        }
        out
    }
}

/// Summary of one extraction run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionManifest {
    pub k: usize,
    pub j: usize,
    pub epsilon_log2: u32,
    pub seed_digest: String,
    pub bits_per_sample: u32,
    pub r_dis_avg: f64,
    pub input_samples: u64,
    pub blocks_processed: u64,
    pub discarded_tail_bits: u64,
    pub output_bits: u64,
    pub config_hash: String,
    pub master_seed: u64,
    pub stage_version: String,
}

/// Streaming block assembly around the per-block hash.
///
/// Sample codes are concatenated MSB-first into `k`-bit blocks; complete
/// blocks are hashed (in parallel, output order preserved) and the trailing
/// partial block is discarded and counted. Chunk boundaries of the input
/// never change the output.
pub struct StreamExtractor {
    hasher: ToeplitzHasher,
    bits_per_sample: u32,
    current: BitBuffer,
    ready: Vec<Vec<u64>>,
    out: BitBuffer,
    input_samples: u64,
    blocks_processed: u64,
    r_dis_avg: f64,
}

/// Number of buffered blocks hashed per parallel flush.
const FLUSH_BLOCKS: usize = 4096;

impl StreamExtractor {
    /// Refuses configurations that violate the leftover-hash bound: safety
    /// over throughput.
    pub fn new(hasher: ToeplitzHasher, r_dis_avg: f64, bits_per_sample: u32) -> Result<Self> {
        let bound = size_output(
            hasher.config.k,
            r_dis_avg,
            bits_per_sample,
            hasher.config.epsilon_log2,
        )?;
        if hasher.config.j > bound {
            return Err(Error::NoExtractableOutput(format!(
                "j = {} exceeds the leftover-hash bound {} at rate {}",
                hasher.config.j, bound, r_dis_avg
            )));
        }
        Ok(Self {
            hasher,
            bits_per_sample,
            current: BitBuffer::new(),
            ready: Vec::new(),
            out: BitBuffer::new(),
            input_samples: 0,
            blocks_processed: 0,
            r_dis_avg,
        })
    }

    pub fn push_block(&mut self, block: &SampleBlock) -> Result<()> {
        if block.bits != self.bits_per_sample {
            return Err(Error::InvalidParameter(format!(
                "sample precision {} does not match extractor setup {}",
                block.bits, self.bits_per_sample
            )));
        }
        self.push_codes(&block.codes);
        Ok(())
    }

    /// Append raw codes (low `bits_per_sample` bits each, MSB-first).
    pub fn push_codes(&mut self, codes: &[i16]) {
        let nbits = self.bits_per_sample as usize;
        let mask = (1u64 << nbits) - 1;
        for &code in codes {
            self.current.push_low_bits(code as u16 as u64 & mask, nbits);
            if self.current.len() == self.hasher.config.k {
                let full = std::mem::take(&mut self.current);
                self.ready.push(full.words().to_vec());
            }
        }
        self.input_samples += codes.len() as u64;
        if self.ready.len() >= FLUSH_BLOCKS {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.ready.is_empty() {
            return;
        }
        let hashed: Vec<BitBuffer> = self
            .ready
            .par_iter()
            .map(|words| self.hasher.extract_block_words(words))
            .collect();
        for h in &hashed {
            self.out.extend_bits(h);
        }
        self.blocks_processed += self.ready.len() as u64;
        self.ready.clear();
    }

    /// Hash any remaining full blocks, drop the partial tail and return the
    /// packed output with its manifest.
    pub fn finish(mut self) -> (BitBuffer, ExtractionManifest) {
        self.flush();
        let discarded = self.current.len() as u64;
        let manifest = ExtractionManifest {
            k: self.hasher.config.k,
            j: self.hasher.config.j,
            epsilon_log2: self.hasher.config.epsilon_log2,
            seed_digest: self.hasher.config.seed_digest(),
            bits_per_sample: self.bits_per_sample,
            r_dis_avg: self.r_dis_avg,
            input_samples: self.input_samples,
            blocks_processed: self.blocks_processed,
            discarded_tail_bits: discarded,
            output_bits: self.out.len() as u64,
            config_hash: String::new(),
            master_seed: 0,
            stage_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        (self.out, manifest)
    }
}

impl ExtractionManifest {
    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// Naive double-loop GF(2) Toeplitz multiply, the independent reference
    /// for the fast path.
    pub fn naive_extract(config: &ExtractorConfig, input: &BitBuffer) -> BitBuffer {
        assert_eq!(input.len(), config.k);
        let mut out = BitBuffer::with_capacity(config.j);
        for row in 0..config.j {
            let mut bit = false;
            for col in 0..config.k {
                bit ^= config.matrix_bit(row, col) && input.get(col);
            }
            out.push_bit(bit);
        }
        out
    }
}
