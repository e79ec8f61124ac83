//! Words in `n` non-commuting symmetric letters.
//!
//! Letters are stored zero-based: letter `i` stands for `X_{i+1}`. Words are
//! ordered by degree first and lexicographically by letter index second,
//! which is also the row/column order of every moment and Gram matrix.

use std::cmp::Ordering;

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    /// Builds a word from zero-based letter indices.
    pub fn new(letters: Vec<u8>) -> Self {
        Word(letters)
    }

    pub fn letter(i: u8) -> Self {
        Word(vec![i])
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The involution `w*`.
    pub fn reverse(&self) -> Word {
        Word(self.0.iter().rev().copied().collect())
    }

    /// Moves the first `j mod deg` letters to the back.
    pub fn rotate(&self, j: usize) -> Word {
        if self.0.is_empty() {
            return self.clone();
        }
        let mut v = self.0.clone();
        v.rotate_left(j % self.0.len());
        Word(v)
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Word(v)
    }

    /// `w X_i`
    pub fn append(&self, letter: u8) -> Word {
        let mut v = self.0.clone();
        v.push(letter);
        Word(v)
    }

    /// `X_i w`
    pub fn prepend(&self, letter: u8) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(letter);
        v.extend_from_slice(&self.0);
        Word(v)
    }

    /// Splits off the last letter: `w = prefix · X_i`.
    pub fn split_last(&self) -> Option<(Word, u8)> {
        self.0
            .split_last()
            .map(|(&l, rest)| (Word(rest.to_vec()), l))
    }

    pub fn max_letter(&self) -> Option<u8> {
        self.0.iter().copied().max()
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Which orbit a canonical key quotients by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Equivalence {
    /// Rotations only; used for cyclic equivalence of polynomials.
    Cyclic,
    /// Rotations of the word and of its reverse; indexes tracial moments.
    Tracial,
}

/// Canonical representative of a cyclic or tracial word class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CyclicKey {
    mode: Equivalence,
    representative: Word,
}

impl CyclicKey {
    pub fn new(w: &Word, mode: Equivalence) -> Self {
        let representative = match mode {
            Equivalence::Cyclic => canon_cyclic(w),
            Equivalence::Tracial => canon_tracial(w),
        };
        CyclicKey {
            mode,
            representative,
        }
    }

    pub fn representative(&self) -> &Word {
        &self.representative
    }

    pub fn mode(&self) -> Equivalence {
        self.mode
    }
}

pub fn reverse(w: &Word) -> Word {
    w.reverse()
}

fn min_rotation(letters: &[u8], best: &mut Option<Vec<u8>>) {
    let d = letters.len();
    for j in 0..d.max(1) {
        let cand: Vec<u8> = letters[j..].iter().chain(&letters[..j]).copied().collect();
        if best.as_ref().is_none_or(|b| cand < *b) {
            *best = Some(cand);
        }
    }
}

/// Least rotation of `w`.
pub fn canon_cyclic(w: &Word) -> Word {
    let mut best = None;
    min_rotation(&w.0, &mut best);
    Word(best.unwrap_or_default())
}

/// Least element among the rotations of `w` and of `w*`.
pub fn canon_tracial(w: &Word) -> Word {
    let mut best = None;
    min_rotation(&w.0, &mut best);
    let rev: Vec<u8> = w.0.iter().rev().copied().collect();
    min_rotation(&rev, &mut best);
    Word(best.unwrap_or_default())
}

/// All words of exactly degree `d` in lexicographic order.
pub fn words_of_degree(n: usize, d: usize) -> Vec<Word> {
    assert!(n >= 1 && n <= u8::MAX as usize + 1, "variable count out of range");
    let count = n.checked_pow(d as u32).expect("word count overflow");
    let mut out = Vec::with_capacity(count);
    let mut cur = vec![0u8; d];
    loop {
        out.push(Word(cur.clone()));
        // odometer increment from the right
        let mut pos = d;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if (cur[pos] as usize) + 1 < n {
                cur[pos] += 1;
                for c in &mut cur[pos + 1..] {
                    *c = 0;
                }
                break;
            }
        }
    }
}

/// All words of degree `≤ max_deg`, ordered by (degree, lex). The first
/// entry is the empty word.
pub fn enumerate_words(n: usize, max_deg: usize) -> Vec<Word> {
    (0..=max_deg).flat_map(|d| words_of_degree(n, d)).collect()
}

/// Number of words of degree `≤ k` in `n` letters.
pub fn basis_size(n: usize, k: usize) -> usize {
    (0..=k).map(|d| n.pow(d as u32)).sum()
}

/// Canonical tracial representatives of degree `≤ max_deg`, sorted.
pub fn tracial_classes(n: usize, max_deg: usize) -> Vec<Word> {
    enumerate_words(n, max_deg)
        .into_iter()
        .filter(|w| canon_tracial(w) == *w)
        .collect()
}

/// Canonical cyclic representatives of degree `≤ max_deg`, sorted.
pub fn cyclic_classes(n: usize, max_deg: usize) -> Vec<Word> {
    enumerate_words(n, max_deg)
        .into_iter()
        .filter(|w| canon_cyclic(w) == *w)
        .collect()
}
