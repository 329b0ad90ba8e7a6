use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use serde::{Deserialize, Serialize};

use super::BaselineError;

/// Byte-pair encoding over integer base tokens. Merge `i` creates token
/// `base_vocab + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BpeFile", into = "BpeFile")]
pub struct BpeModel {
    base_vocab: u32,
    merges: Vec<[u32; 3]>,
    ranks: BTreeMap<(u32, u32), u32>,
}

#[derive(Serialize, Deserialize)]
struct BpeFile {
    base_vocab: u32,
    merges: Vec<[u32; 3]>,
}

impl From<BpeModel> for BpeFile {
    fn from(m: BpeModel) -> Self {
        Self {
            base_vocab: m.base_vocab,
            merges: m.merges,
        }
    }
}

impl TryFrom<BpeFile> for BpeModel {
    type Error = String;

    fn try_from(f: BpeFile) -> Result<Self, String> {
        Self::from_merges(f.base_vocab, f.merges).map_err(|e| format!("{e}"))
    }
}

const GONE: u32 = u32::MAX;
const NIL: u32 = u32::MAX;

impl BpeModel {
    pub fn from_merges(base_vocab: u32, merges: Vec<[u32; 3]>) -> Result<Self, BaselineError> {
        let mut ranks = BTreeMap::new();
        for (i, &[a, b, new]) in merges.iter().enumerate() {
            let expect = base_vocab + i as u32;
            if new != expect || a >= new || b >= new {
                return Err(BaselineError::InvalidArgument(format!(
                    "merge {i} ({a}, {b}) -> {new} must create token {expect} from earlier tokens"
                )));
            }
            if ranks.insert((a, b), i as u32).is_some() {
                return Err(BaselineError::InvalidArgument(format!("pair ({a}, {b}) merged twice")));
            }
        }
        Ok(Self {
            base_vocab,
            merges,
            ranks,
        })
    }

    /// Greedy most-frequent-pair merging until `target_vocab` tokens exist
    /// or no adjacent pair occurs twice. Ties go to the smallest first
    /// token, then the smallest second token.
    pub fn train(streams: &[Vec<u32>], base_vocab: u32, target_vocab: u32) -> Result<Self, BaselineError> {
        if streams.iter().all(|s| s.is_empty()) {
            return Err(BaselineError::EmptyCorpus);
        }
        if target_vocab <= base_vocab {
            return Err(BaselineError::InvalidArgument(format!(
                "target vocabulary {target_vocab} must exceed base vocabulary {base_vocab}"
            )));
        }
        if let Some(&t) = streams.iter().flatten().find(|&&t| t >= base_vocab) {
            return Err(BaselineError::InvalidArgument(format!(
                "base token {t} outside vocabulary {base_vocab}"
            )));
        }

        // Doubly linked token lists, one per stream, over a flat buffer.
        let mut tok: Vec<u32> = streams.iter().flatten().copied().collect();
        let n = tok.len();
        let mut next = vec![NIL; n];
        let mut prev = vec![NIL; n];
        let mut pos = 0;
        for s in streams {
            for i in 0..s.len() {
                if i + 1 < s.len() {
                    next[pos + i] = (pos + i + 1) as u32;
                }
                if i > 0 {
                    prev[pos + i] = (pos + i - 1) as u32;
                }
            }
            pos += s.len();
        }

        let mut counts: BTreeMap<(u32, u32), i64> = BTreeMap::new();
        let mut sites: BTreeMap<(u32, u32), Vec<u32>> = BTreeMap::new();
        for p in 0..n {
            if next[p] != NIL {
                let pair = (tok[p], tok[next[p] as usize]);
                *counts.entry(pair).or_default() += 1;
                sites.entry(pair).or_default().push(p as u32);
            }
        }
        let mut heap: BinaryHeap<(i64, Reverse<(u32, u32)>)> = counts.iter().map(|(&p, &c)| (c, Reverse(p))).collect();

        let mut merges = Vec::new();
        let mut new = base_vocab;
        while new < target_vocab {
            let Some((c, Reverse(pair))) = heap.pop() else { break };
            if counts.get(&pair).copied() != Some(c) {
                continue;
            }
            if c < 2 {
                break;
            }
            let (a, b) = pair;
            let mut touched: BTreeMap<(u32, u32), i64> = BTreeMap::new();
            let mut at = sites.remove(&pair).unwrap_or_default();
            at.sort_unstable();
            at.dedup();
            for p in at {
                let p = p as usize;
                let q = next[p];
                if tok[p] != a || q == NIL || tok[q as usize] != b {
                    continue;
                }
                let q = q as usize;
                let (x, y) = (prev[p], next[q]);
                *touched.entry((a, b)).or_default() -= 1;
                if x != NIL {
                    *touched.entry((tok[x as usize], a)).or_default() -= 1;
                }
                if y != NIL {
                    *touched.entry((b, tok[y as usize])).or_default() -= 1;
                }
                tok[p] = new;
                tok[q] = GONE;
                next[p] = y;
                if y != NIL {
                    prev[y as usize] = p as u32;
                    let pr = (new, tok[y as usize]);
                    *touched.entry(pr).or_default() += 1;
                    sites.entry(pr).or_default().push(p as u32);
                }
                if x != NIL {
                    let pr = (tok[x as usize], new);
                    *touched.entry(pr).or_default() += 1;
                    sites.entry(pr).or_default().push(x);
                }
            }
            for (pr, delta) in touched {
                if delta == 0 {
                    continue;
                }
                let c = counts.entry(pr).or_default();
                *c += delta;
                if *c <= 0 {
                    counts.remove(&pr);
                } else {
                    heap.push((*c, Reverse(pr)));
                }
            }
            merges.push([a, b, new]);
            new += 1;
        }
        Self::from_merges(base_vocab, merges)
    }

    pub fn base_vocab(&self) -> u32 {
        self.base_vocab
    }

    pub fn merges(&self) -> &[[u32; 3]] {
        &self.merges
    }

    pub fn vocab_size(&self) -> usize {
        self.base_vocab as usize + self.merges.len()
    }

    /// Applies merges in rank order: repeatedly merges every occurrence of
    /// the lowest-ranked pair present, left to right.
    pub fn encode(&self, stream: &[u32]) -> Result<Vec<u32>, BaselineError> {
        if let Some(&t) = stream.iter().find(|&&t| t >= self.base_vocab) {
            return Err(BaselineError::InvalidArgument(format!(
                "base token {t} outside vocabulary {}",
                self.base_vocab
            )));
        }
        let mut seq = stream.to_vec();
        loop {
            let best = seq.windows(2).filter_map(|w| self.ranks.get(&(w[0], w[1]))).min();
            let Some(&rank) = best else { break };
            let [a, b, new] = self.merges[rank as usize];
            let mut out = Vec::with_capacity(seq.len());
            let mut i = 0;
            while i < seq.len() {
                if i + 1 < seq.len() && seq[i] == a && seq[i + 1] == b {
                    out.push(new);
                    i += 2;
                } else {
                    out.push(seq[i]);
                    i += 1;
                }
            }
            seq = out;
        }
        Ok(seq)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<Vec<u32>, BaselineError> {
        let mut out = Vec::with_capacity(ids.len() * 2);
        let mut stack = Vec::new();
        for &id in ids {
            if id as usize >= self.vocab_size() {
                return Err(BaselineError::DecodeFailure(format!(
                    "token {id} not in vocabulary of {}",
                    self.vocab_size()
                )));
            }
            stack.push(id);
            while let Some(t) = stack.pop() {
                if t < self.base_vocab {
                    out.push(t);
                } else {
                    let [a, b, _] = self.merges[(t - self.base_vocab) as usize];
                    stack.push(b);
                    stack.push(a);
                }
            }
        }
        Ok(out)
    }
}
