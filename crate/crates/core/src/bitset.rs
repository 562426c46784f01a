//! Dense bitsets over column levels with shift-and-popcount kernels.

use serde::{Deserialize, Serialize};

const WORD: usize = 64;

/// A set of level indices in `[0, len)`. Bits past `len` are always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LevelBits {
    len: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for LevelBits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LevelBits")
            .field("len", &self.len)
            .field("ones", &self.iter_ones().collect::<Vec<_>>())
            .finish()
    }
}

impl LevelBits {
    pub fn new(len: usize) -> Self {
        LevelBits {
            len,
            words: vec![0; len.div_ceil(WORD)],
        }
    }

    pub fn full(len: usize) -> Self {
        let mut b = LevelBits {
            len,
            words: vec![u64::MAX; len.div_ceil(WORD)],
        };
        b.mask_tail();
        b
    }

    /// Returns `None` if some index is out of range.
    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Option<Self> {
        let mut b = Self::new(len);
        for i in indices {
            if i >= len {
                return None;
            }
            b.set(i);
        }
        Some(b)
    }

    fn mask_tail(&mut self) {
        let rem = self.len % WORD;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        i < self.len && (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    /// Panics if `i >= len`.
    #[inline]
    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "index {i} out of range {}", self.len);
        self.words[i / WORD] |= 1 << (i % WORD);
    }

    pub fn unset(&mut self, i: usize) {
        if i < self.len {
            self.words[i / WORD] &= !(1 << (i % WORD));
        }
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Number of members in `[lo, hi)`, clamped to the valid range.
    pub fn count_range(&self, lo: usize, hi: usize) -> u64 {
        let hi = hi.min(self.len);
        if lo >= hi {
            return 0;
        }
        let (wl, wh) = (lo / WORD, (hi - 1) / WORD);
        let lo_mask = u64::MAX << (lo % WORD);
        let hi_mask = u64::MAX >> (WORD - 1 - (hi - 1) % WORD);
        if wl == wh {
            return (self.words[wl] & lo_mask & hi_mask).count_ones() as u64;
        }
        let mut total = (self.words[wl] & lo_mask).count_ones() as u64;
        total += self.words[wl + 1..wh]
            .iter()
            .map(|w| w.count_ones() as u64)
            .sum::<u64>();
        total + (self.words[wh] & hi_mask).count_ones() as u64
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(k, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let t = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(k * WORD + t)
                }
            })
        })
    }

    /// The 64 bits starting at bit `pos`, zero past the end.
    #[inline]
    fn window(&self, pos: usize) -> u64 {
        let (w, o) = (pos / WORD, pos % WORD);
        let lo = self.words.get(w).copied().unwrap_or(0);
        if o == 0 {
            lo
        } else {
            let hi = self.words.get(w + 1).copied().unwrap_or(0);
            (lo >> o) | (hi << (WORD - o))
        }
    }

    /// `self |= src << shift`, dropping bits that land past `len`.
    pub fn or_shifted_from(&mut self, src: &LevelBits, shift: usize) {
        if shift >= self.len {
            return;
        }
        let (ws, o) = (shift / WORD, shift % WORD);
        for (k, &w) in src.words.iter().enumerate() {
            if w == 0 {
                continue;
            }
            let t = k + ws;
            if t >= self.words.len() {
                break;
            }
            self.words[t] |= w << o;
            if o != 0 && t + 1 < self.words.len() {
                self.words[t + 1] |= w >> (WORD - o);
            }
        }
        self.mask_tail();
    }

    pub fn union_with(&mut self, other: &LevelBits) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_count(&self, other: &LevelBits) -> u64 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum()
    }

    /// Sorted maximal runs `[start, end)`.
    pub fn runs(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for i in self.iter_ones() {
            match out.last_mut() {
                Some(last) if last.1 == i => last.1 += 1,
                _ => out.push((i, i + 1)),
            }
        }
        out
    }

    pub fn from_runs(len: usize, runs: &[(usize, usize)]) -> Option<Self> {
        let mut b = Self::new(len);
        for &(s, e) in runs {
            if s > e || e > len {
                return None;
            }
            for i in s..e {
                b.set(i);
            }
        }
        Some(b)
    }
}

/// `#{j : a[j] and b[j + shift]}`; negative shifts count `b[j] and a[j - shift]`.
pub fn shifted_and_count(a: &LevelBits, b: &LevelBits, shift: i64) -> u64 {
    if shift < 0 {
        return shifted_and_count(b, a, -shift);
    }
    let shift = shift as usize;
    if shift >= b.len {
        return 0;
    }
    a.words
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            if w == 0 {
                0
            } else {
                (w & b.window(k * WORD + shift)).count_ones() as u64
            }
        })
        .sum()
}

/// Run-length encoded form used in snapshots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLength {
    pub len: usize,
    pub runs: Vec<(usize, usize)>,
}

impl From<&LevelBits> for RunLength {
    fn from(b: &LevelBits) -> Self {
        RunLength {
            len: b.len,
            runs: b.runs(),
        }
    }
}

impl RunLength {
    pub fn to_bits(&self) -> Option<LevelBits> {
        LevelBits::from_runs(self.len, &self.runs)
    }
}
