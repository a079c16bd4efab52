//! Word-backed bit buffer with MSB-first stream semantics.
//!
//! Stream bit `i` lives in word `i / 64` at bit position `63 - (i % 64)`, so
//! `to_bytes` yields the stream MSB-first within each byte — the canonical
//! packing for sample concatenation and extractor output.

/// Growable bit sequence over `u64` words.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitBuffer {
    words: Vec<u64>,
    len: usize,
}

impl BitBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self {
            words: Vec::with_capacity(bits.div_ceil(64)),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Backing words; bits beyond `len` are always zero.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn push_bit(&mut self, bit: bool) {
        self.push_low_bits(bit as u64, 1);
    }

    /// Append the `n` low bits of `v`, most significant of those `n` first.
    ///
    /// For a 12-bit ADC code this appends the two's-complement pattern
    /// MSB-first: `push_low_bits(code as u64 & 0xfff, 12)`.
    pub fn push_low_bits(&mut self, v: u64, n: usize) {
        debug_assert!(n <= 64);
        if n == 0 {
            return;
        }
        let v = if n == 64 { v } else { v & ((1u64 << n) - 1) };
        let used = self.len % 64;
        if used == 0 {
            self.words.push(0);
        }
        let last = self.words.len() - 1;
        let free = 64 - used;
        if n <= free {
            self.words[last] |= v << (free - n);
        } else {
            let spill = n - free;
            self.words[last] |= v >> spill;
            self.words.push((v & ((1u64 << spill) - 1)) << (64 - spill));
        }
        self.len += n;
    }

    /// Append the top `n` bits of `w` (stream order within a word).
    fn push_top_bits(&mut self, w: u64, n: usize) {
        if n == 0 {
            return;
        }
        self.push_low_bits(w >> (64 - n), n);
    }

    /// Append all bits of `other`.
    pub fn extend_bits(&mut self, other: &BitBuffer) {
        let mut remaining = other.len;
        for &w in &other.words {
            let take = remaining.min(64);
            self.push_top_bits(w, take);
            remaining -= take;
            if remaining == 0 {
                break;
            }
        }
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (63 - (i % 64))) & 1 == 1
    }

    /// Total number of set bits.
    pub fn ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Set bits in `[start, end)`.
    pub fn ones_range(&self, start: usize, end: usize) -> u64 {
        debug_assert!(start <= end && end <= self.len);
        if start == end {
            return 0;
        }
        let (ws, we) = (start / 64, (end - 1) / 64);
        let head_mask = u64::MAX >> (start % 64);
        let tail_mask = mask_top(end - we * 64);
        if ws == we {
            return (self.words[ws] & head_mask & tail_mask).count_ones() as u64;
        }
        let mut total = (self.words[ws] & head_mask).count_ones() as u64;
        for w in &self.words[ws + 1..we] {
            total += w.count_ones() as u64;
        }
        total + (self.words[we] & tail_mask).count_ones() as u64
    }

    /// The word whose top bits are the stream starting at bit `start`
    /// (bits past the end read as zero).
    fn word_at(&self, start: usize) -> u64 {
        let q = start / 64;
        let r = start % 64;
        let lo = self.words.get(q).copied().unwrap_or(0);
        if r == 0 {
            lo
        } else {
            let hi = self.words.get(q + 1).copied().unwrap_or(0);
            (lo << r) | (hi >> (64 - r))
        }
    }

    /// `sum_i b[i] & b[i + lag]` over `i < len - lag`.
    pub fn lag_and_count(&self, lag: usize) -> u64 {
        debug_assert!(lag < self.len);
        let valid = self.len - lag;
        let mut total = 0u64;
        let mut i = 0;
        while i < valid {
            let take = (valid - i).min(64);
            let a = self.word_at(i) & mask_top(take);
            let b = self.word_at(i + lag);
            total += (a & b).count_ones() as u64;
            i += take;
        }
        total
    }

    /// Pack to bytes, MSB-first within each byte; the final partial byte is
    /// zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n_bytes = self.len.div_ceil(8);
        let mut out = Vec::with_capacity(n_bytes);
        for w in &self.words {
            out.extend_from_slice(&w.to_be_bytes());
        }
        out.truncate(n_bytes);
        out
    }

    pub fn from_bytes(bytes: &[u8], n_bits: usize) -> Self {
        assert!(n_bits <= bytes.len() * 8, "n_bits exceeds byte data");
        let mut buf = Self::with_capacity(n_bits);
        let mut remaining = n_bits;
        for &b in bytes {
            let take = remaining.min(8);
            if take == 0 {
                break;
            }
            buf.push_low_bits((b >> (8 - take)) as u64, take);
            remaining -= take;
        }
        buf
    }
}

/// Mask keeping the top `n` bits of a word (`n` in 1..=64).
fn mask_top(n: usize) -> u64 {
    debug_assert!((1..=64).contains(&n));
    u64::MAX << (64 - n)
}
