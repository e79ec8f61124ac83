//! Flat extensions of tracial moment matrices.
//!
//! When `rank M_k = rank M_{k-1}`, every degree-`k` word agrees with a
//! combination of lower-degree words modulo `ker M_k`. That relation fixes
//! the next block row of `M_{k+1}` uniquely, and the extension stays flat,
//! so it can be iterated to any order.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moment::{build_moment_matrix, MomentMatrix, TracialSequence};
use crate::numeric::{self, select_columns, SymMatrix};
use crate::poly::render_word;
use crate::words::{basis_size, canon_tracial, words_of_degree, Word};

/// Maximum relative spread tolerated between repeated entries of one class,
/// as a multiple of `tol`.
const SPREAD_FACTOR: f64 = 100.0;

/// One flat extension step `M_k -> M_{k+1}`.
#[derive(Debug, Clone)]
pub struct FlatExtension {
    pub base: TracialSequence,
    pub extended: TracialSequence,
    /// Low-degree words whose columns span `ran M_k`.
    pub basis: Vec<Word>,
    /// Columns `(r_{v'} X_i)^` for every degree-`k+1` word `v = v' X_i`.
    pub w: DMatrix<f64>,
    /// `M_k W`
    pub b: DMatrix<f64>,
    /// `Wᵀ M_k W`
    pub c: DMatrix<f64>,
    pub rank: usize,
    /// Largest disagreement among entries of `M_{k+1}` sharing a tracial class.
    pub max_spread: f64,
}

impl FlatExtension {
    /// The assembled `M_{k+1}`.
    pub fn moment_matrix(&self) -> Result<MomentMatrix> {
        build_moment_matrix(&self.extended, self.base.max_k() + 1)
    }
}

/// `(rank M_{k-1}, rank M_k)` under the relative tolerance `tol`.
pub fn flat_ranks(y: &TracialSequence, k: usize, tol: f64) -> Result<(usize, usize)> {
    if k == 0 {
        return Err(Error::InvalidSequence("flatness needs k >= 1".into()));
    }
    let m = build_moment_matrix(y, k)?;
    let prev = m.leading(k - 1).numeric_rank(tol)?.0;
    let rank = m.numeric_rank(tol)?.0;
    Ok((prev, rank))
}

pub fn is_flat(y: &TracialSequence, k: usize, tol: f64) -> Result<bool> {
    let (prev, rank) = flat_ranks(y, k, tol)?;
    Ok(prev == rank)
}

pub fn flat_extend(y: &TracialSequence, k: usize, tol: f64) -> Result<FlatExtension> {
    let low = basis_size(y.n(), k.saturating_sub(1));
    flat_extend_with_order(y, k, tol, &(0..low).collect::<Vec<_>>())
}

/// [`flat_extend`] with the low-degree columns offered to the basis search in
/// `column_order` (indices into `enumerate_words(n, k-1)`).
pub fn flat_extend_with_order(
    y: &TracialSequence,
    k: usize,
    tol: f64,
    column_order: &[usize],
) -> Result<FlatExtension> {
    let y = y.truncate(2 * k)?;
    let n = y.n();
    let m = build_moment_matrix(&y, k)?;
    let (psd, min_eig) = m.psd_check(tol)?;
    if !psd {
        return Err(Error::NotPsd { min_eig });
    }
    let (prev, rank) = flat_ranks(&y, k, tol)?;
    if prev != rank {
        return Err(Error::NotFlat { k, prev, rank });
    }

    let low = basis_size(n, k - 1);
    if column_order.iter().any(|&j| j >= low) {
        return Err(Error::Dimension("basis candidates must have degree < k".into()));
    }
    let mk: &DMatrix<f64> = m.matrix();
    let thr = numeric::sym_eig(m.matrix())?.threshold(tol);
    let cols = select_columns(mk, column_order.iter().copied(), thr, rank);
    if cols.len() < rank {
        return Err(Error::BasisExtraction {
            k,
            found: cols.len(),
            rank,
        });
    }
    let basis: Vec<Word> = cols.iter().map(|&j| m.basis()[j].clone()).collect();
    let gram = SymMatrix::new(mk.select_rows(&cols).select_columns(&cols))?;
    let gram_eig = numeric::sym_eig(&gram)?;

    // r_w for every degree-k word, as coefficients on `basis`
    let eta = m.dim();
    let mut residual_coeffs = Vec::with_capacity(eta - low);
    for j in low..eta {
        let rhs: DVector<f64> = DVector::from_iterator(cols.len(), cols.iter().map(|&i| mk[(i, j)]));
        residual_coeffs.push(numeric::pinv_apply(&gram_eig, &rhs, tol));
    }

    // W: one column per degree-(k+1) word v = v'X_i, holding (r_{v'} X_i)^
    let top = words_of_degree(n, k + 1);
    let mut w = DMatrix::zeros(eta, top.len());
    for (col, v) in top.iter().enumerate() {
        let (prefix, letter) = v.split_last().expect("degree k+1 >= 1");
        let coeffs = &residual_coeffs[m.index_of(&prefix).expect("degree k word") - low];
        for (bj, c) in basis.iter().zip(coeffs.iter()) {
            let row = m.index_of(&bj.append(letter)).expect("degree <= k word");
            w[(row, col)] += c;
        }
    }
    let b = mk * &w;
    let c = w.transpose() * &b;

    let (extended, max_spread) = read_extension(&y, &m, &b, &c, &top, tol)?;
    Ok(FlatExtension {
        base: y,
        extended,
        basis,
        w,
        b,
        c: (&c + c.transpose()) * 0.5,
        rank,
        max_spread,
    })
}

/// Averages the new blocks over tracial classes. Classes already in `y` keep
/// their values, but their new occurrences still count toward the spread.
fn read_extension(
    y: &TracialSequence,
    m: &MomentMatrix,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    top: &[Word],
    tol: f64,
) -> Result<(TracialSequence, f64)> {
    struct Acc {
        sum: f64,
        count: usize,
        min: f64,
        max: f64,
    }
    let mut acc: BTreeMap<Word, Acc> = BTreeMap::new();
    let mut push = |w: Word, v: f64| {
        let key = canon_tracial(&w);
        let e = acc.entry(key).or_insert(Acc {
            sum: 0.0,
            count: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        });
        e.sum += v;
        e.count += 1;
        e.min = e.min.min(v);
        e.max = e.max.max(v);
    };
    for (i, u) in m.basis().iter().enumerate() {
        let us = u.reverse();
        for (j, v) in top.iter().enumerate() {
            push(us.concat(v), b[(i, j)]);
        }
    }
    for (i, u) in top.iter().enumerate() {
        let us = u.reverse();
        for (j, v) in top.iter().enumerate().skip(i) {
            push(us.concat(v), c[(i, j)]);
        }
    }

    let scale = acc
        .values()
        .map(|a| a.min.abs().max(a.max.abs()))
        .fold(y.max_abs(), f64::max)
        .max(1.0);
    let mut max_spread = 0.0f64;
    for (w, a) in &acc {
        let mut spread = a.max - a.min;
        if w.degree() <= y.order() {
            let old = y.get(w)?;
            spread = spread.max((a.max - old).abs()).max((a.min - old).abs());
        }
        if spread > SPREAD_FACTOR * tol * scale {
            return Err(Error::Consistency {
                word: render_word(w, y.n()),
                spread,
            });
        }
        max_spread = max_spread.max(spread);
    }
    let order = y.order() + 2;
    let extended = TracialSequence::from_fn(y.n(), order, |w| {
        if w.degree() <= y.order() {
            y.get(w).expect("base class")
        } else {
            let a = &acc[w];
            a.sum / a.count as f64
        }
    });
    Ok((extended, max_spread))
}

/// Iterates [`flat_extend`] from `k` up to order `2 * target_k`. Data of `y`
/// above order `2k` is ignored.
pub fn extend_to_degree(y: &TracialSequence, k: usize, target_k: usize, tol: f64) -> Result<TracialSequence> {
    if target_k <= k {
        if !is_flat(y, k, tol)? {
            let (prev, rank) = flat_ranks(y, k, tol)?;
            return Err(Error::NotFlat { k, prev, rank });
        }
        return y.truncate(2 * target_k);
    }
    let mut cur = y.truncate(2 * k)?;
    for j in k..target_k {
        cur = flat_extend(&cur, j, tol)?.extended;
    }
    Ok(cur)
}
