//! Tracial sequences and their moment matrices.
//!
//! A [`TracialSequence`] stores one value per tracial word class (rotations
//! and reversal merged) up to a fixed even order `2k`. Moment matrices
//! `M_k(y) = (y_{u*v})` are assembled over [`enumerate_words`] so that
//! `M_{k-1}` is always the leading principal block of `M_k`.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, SymMatrix};
use crate::poly::{check_tuple, parse_word, render_word, word_matrix, Polynomial};
use crate::words::{basis_size, canon_tracial, enumerate_words, tracial_classes, Word};

pub use crate::numeric::psd_check;

/// Default relative eigenvalue threshold for ranks and kernels.
pub const RANK_TOL: f64 = 1e-8;

/// Input values for one class may disagree by at most this much.
const DUPLICATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TracialSequence {
    n: usize,
    order: usize,
    values: BTreeMap<Word, f64>,
}

impl TracialSequence {
    /// Builds a sequence from arbitrary (not necessarily canonical) words.
    ///
    /// Every tracial class of degree `≤ order` must be covered, repeated
    /// classes must agree within `1e-9`, and `y_∅` must equal 1.
    pub fn from_entries(
        n: usize,
        order: usize,
        entries: impl IntoIterator<Item = (Word, f64)>,
    ) -> Result<Self> {
        if n == 0 || n > 256 {
            return Err(Error::InvalidSequence(format!("unsupported variable count {n}")));
        }
        if !order.is_multiple_of(2) {
            return Err(Error::InvalidSequence(format!("order must be even, got {order}")));
        }
        let mut values = BTreeMap::new();
        for (w, v) in entries {
            if let Some(l) = w.max_letter() {
                if l as usize >= n {
                    return Err(Error::VariableOutOfRange {
                        index: l as usize + 1,
                        n,
                    });
                }
            }
            if w.degree() > order {
                return Err(Error::DegreeOverflow {
                    degree: w.degree(),
                    order,
                });
            }
            if !v.is_finite() {
                return Err(Error::InvalidSequence(format!(
                    "non-finite value for {}",
                    render_word(&w, n)
                )));
            }
            match values.entry(canon_tracial(&w)) {
                Entry::Vacant(e) => {
                    e.insert(v);
                }
                Entry::Occupied(e) => {
                    let first = *e.get();
                    if (first - v).abs() > DUPLICATE_TOL {
                        return Err(Error::InconsistentMoment {
                            word: render_word(e.key(), n),
                            first,
                            second: v,
                        });
                    }
                }
            }
        }
        for class in tracial_classes(n, order) {
            if !values.contains_key(&class) {
                return Err(Error::MissingMoment(render_word(&class, n)));
            }
        }
        let y0 = values[&Word::empty()];
        if (y0 - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(y0));
        }
        Ok(TracialSequence { n, order, values })
    }

    /// Evaluates `f` once per tracial class representative.
    pub(crate) fn from_fn(n: usize, order: usize, mut f: impl FnMut(&Word) -> f64) -> Self {
        let values = tracial_classes(n, order)
            .into_iter()
            .map(|w| {
                let v = f(&w);
                (w, v)
            })
            .collect();
        TracialSequence { n, order, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Largest `k` with `M_k` available.
    pub fn max_k(&self) -> usize {
        self.order / 2
    }

    pub fn get(&self, w: &Word) -> Result<f64> {
        if w.degree() > self.order {
            return Err(Error::DegreeOverflow {
                degree: w.degree(),
                order: self.order,
            });
        }
        self.values
            .get(&canon_tracial(w))
            .copied()
            .ok_or_else(|| Error::MissingMoment(render_word(w, self.n)))
    }

    /// Canonical class representatives with their values, in (degree, lex) order.
    pub fn values(&self) -> impl Iterator<Item = (&Word, f64)> {
        self.values.iter().map(|(w, v)| (w, *v))
    }

    pub fn truncate(&self, order: usize) -> Result<Self> {
        if order > self.order || !order.is_multiple_of(2) {
            return Err(Error::DegreeOverflow {
                degree: order,
                order: self.order,
            });
        }
        Ok(TracialSequence {
            n: self.n,
            order,
            values: self
                .values
                .iter()
                .filter(|(w, _)| w.degree() <= order)
                .map(|(w, v)| (w.clone(), *v))
                .collect(),
        })
    }

    /// Max `|y_w - z_w|` over classes both sequences define.
    pub fn max_abs_diff(&self, other: &TracialSequence) -> f64 {
        self.values
            .iter()
            .filter_map(|(w, v)| other.values.get(w).map(|u| (v - u).abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.values().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Tracial Riesz functional `L_y(p) = Σ p_w y_w`.
    pub fn riesz(&self, p: &Polynomial) -> Result<f64> {
        if p.n() > self.n {
            return Err(Error::Dimension(format!(
                "polynomial uses {} variables, sequence has {}",
                p.n(),
                self.n
            )));
        }
        if p.degree() > self.order {
            return Err(Error::DegreeOverflow {
                degree: p.degree(),
                order: self.order,
            });
        }
        p.terms().map(|(w, c)| Ok(c * self.get(w)?)).sum()
    }

    pub fn to_file(&self) -> SequenceFile {
        SequenceFile {
            variables: self.n,
            order: self.order,
            moments: self
                .values
                .iter()
                .map(|(w, v)| MomentEntry {
                    word: render_word(w, self.n),
                    value: *v,
                })
                .collect(),
        }
    }

    pub fn from_file(file: &SequenceFile) -> Result<Self> {
        let n = file.variables;
        let entries = file
            .moments
            .iter()
            .map(|m| Ok((parse_word(&m.word, n)?, m.value)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(n, file.order, entries)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("sequence serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk sequence format.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SequenceFile {
    pub variables: usize,
    pub order: usize,
    pub moments: Vec<MomentEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MomentEntry {
    pub word: String,
    pub value: f64,
}

/// One weighted tuple of symmetric matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub mats: Vec<DMatrix<f64>>,
}

impl Atom {
    pub fn new(weight: f64, mats: Vec<DMatrix<f64>>) -> Self {
        Atom { weight, mats }
    }

    pub fn size(&self) -> usize {
        self.mats.first().map_or(0, |m| m.nrows())
    }
}

/// `y_w = Σ λ_i Tr(w(A^(i)))` for every class of degree `≤ order`.
pub fn moments_from_atoms(atoms: &[Atom], order: usize) -> Result<TracialSequence> {
    if atoms.is_empty() {
        return Err(Error::Weights("no atoms".into()));
    }
    if let Some(a) = atoms.iter().find(|a| !(a.weight >= 0.0)) {
        return Err(Error::Weights(format!("negative weight {}", a.weight)));
    }
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Weights(format!("weights sum to {total}, expected 1")));
    }
    if !order.is_multiple_of(2) {
        return Err(Error::InvalidSequence(format!("order must be even, got {order}")));
    }
    let n = atoms[0].mats.len();
    if n == 0 {
        return Err(Error::Dimension("atoms carry no matrices".into()));
    }
    mixture_moments(atoms, n, order)
}

/// Same as [`moments_from_atoms`] without the weight checks.
pub(crate) fn mixture_moments(atoms: &[Atom], n: usize, order: usize) -> Result<TracialSequence> {
    let mut per_atom = Vec::with_capacity(atoms.len());
    for a in atoms {
        let t = check_tuple(&a.mats, n)?;
        if t == 0 {
            return Err(Error::Dimension("empty matrices".into()));
        }
        per_atom.push(normalized_traces(&a.mats, n, t, order));
    }
    Ok(TracialSequence::from_fn(n, order, |w| {
        let idx = word_index(n, w);
        atoms
            .iter()
            .zip(&per_atom)
            .map(|(a, tr)| a.weight * tr[idx])
            .sum()
    }))
}

/// Position of `w` in `enumerate_words(n, ·)`.
pub(crate) fn word_index(n: usize, w: &Word) -> usize {
    let d = w.degree();
    let offset = if d == 0 { 0 } else { basis_size(n, d - 1) };
    offset
        + w.letters()
            .iter()
            .fold(0usize, |acc, &l| acc * n + l as usize)
}

/// Normalized traces of every word of degree `≤ order`, indexed by [`word_index`].
fn normalized_traces(mats: &[DMatrix<f64>], n: usize, t: usize, order: usize) -> Vec<f64> {
    let words = enumerate_words(n, order);
    let mut products: Vec<DMatrix<f64>> = Vec::with_capacity(words.len());
    let mut traces = Vec::with_capacity(words.len());
    for w in &words {
        let p = match w.split_last() {
            None => DMatrix::identity(t, t),
            Some((prefix, l)) => &products[word_index(n, &prefix)] * &mats[l as usize],
        };
        traces.push(p.trace() / t as f64);
        products.push(p);
    }
    debug_assert!(words
        .iter()
        .take(4)
        .all(|w| (word_matrix(w, mats, t).trace() / t as f64 - traces[word_index(n, w)]).abs() < 1e-9));
    traces
}

/// `M_k(y)` together with its word labels.
#[derive(Debug, Clone)]
pub struct MomentMatrix {
    n: usize,
    k: usize,
    basis: Vec<Word>,
    entries: SymMatrix,
}

pub fn build_moment_matrix(y: &TracialSequence, k: usize) -> Result<MomentMatrix> {
    if 2 * k > y.order() {
        return Err(Error::DegreeOverflow {
            degree: 2 * k,
            order: y.order(),
        });
    }
    let basis = enumerate_words(y.n(), k);
    let eta = basis.len();
    let mut m = DMatrix::zeros(eta, eta);
    for i in 0..eta {
        let ui = basis[i].reverse();
        for j in i..eta {
            let v = y.get(&ui.concat(&basis[j]))?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(MomentMatrix {
        n: y.n(),
        k,
        basis,
        entries: SymMatrix::from_symmetric(m),
    })
}

impl MomentMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn basis(&self) -> &[Word] {
        &self.basis
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Row/column of `w`, if `deg w ≤ k`.
    pub fn index_of(&self, w: &Word) -> Option<usize> {
        self.basis.binary_search(w).ok()
    }

    /// `M_j` as the leading principal block, for `j ≤ k`.
    pub fn leading(&self, j: usize) -> MomentMatrix {
        assert!(j <= self.k);
        let eta = basis_size(self.n, j);
        MomentMatrix {
            n: self.n,
            k: j,
            basis: self.basis[..eta].to_vec(),
            entries: SymMatrix::from_symmetric(self.entries.view((0, 0), (eta, eta)).into_owned()),
        }
    }

    /// `p̂` in this matrix's word basis; fails if `deg p > k`.
    pub fn coefficients(&self, p: &Polynomial) -> Result<DVector<f64>> {
        if p.degree() > self.k {
            return Err(Error::DegreeOverflow {
                degree: p.degree(),
                order: self.k,
            });
        }
        Ok(p.coefficient_vector(&self.basis))
    }

    /// `p̂ᵀ M_k q̂`.
    pub fn bilinear(&self, p: &Polynomial, q: &Polynomial) -> Result<f64> {
        let a = self.coefficients(p)?;
        let b = self.coefficients(q)?;
        Ok(a.dot(&(&*self.entries * b)))
    }

    pub fn psd_check(&self, tol: f64) -> Result<(bool, f64)> {
        psd_check(&self.entries, tol)
    }

    /// Numerical rank and pivot words, preferring lower-degree labels.
    pub fn numeric_rank(&self, tol: f64) -> Result<(usize, Vec<Word>)> {
        let (r, piv) = numeric_rank(&self.entries, tol)?;
        Ok((r, piv.into_iter().map(|i| self.basis[i].clone()).collect()))
    }

    pub fn kernel_basis(&self, tol: f64) -> Result<KernelBasis> {
        let eig = numeric::sym_eig(&self.entries)?;
        let thr = eig.threshold(tol);
        let mut vectors = Vec::new();
        let mut polys = Vec::new();
        for (j, l) in eig.values.iter().enumerate() {
            if l.abs() <= thr || *l == 0.0 {
                let v: DVector<f64> = eig.vectors.column(j).into_owned();
                polys.push(Polynomial::from_vector(self.n, &self.basis, &v));
                vectors.push(v);
            }
        }
        Ok(KernelBasis { polys, vectors, tol })
    }
}

/// Rank by relative eigenvalue threshold plus greedy pivot columns in
/// natural (degree, lex) order.
pub fn numeric_rank(m: &SymMatrix, tol: f64) -> Result<(usize, Vec<usize>)> {
    numeric::rank_with_pivots(m, tol)
}

/// Orthonormal numerical kernel of `M_k`, read back as polynomials.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub polys: Vec<Polynomial>,
    pub vectors: Vec<DVector<f64>>,
    pub tol: f64,
}

impl KernelBasis {
    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    /// Distance of `v` from the kernel span.
    pub fn distance(&self, v: &DVector<f64>) -> f64 {
        let mut r = v.clone();
        for q in &self.vectors {
            let d = q.dot(&r);
            r.axpy(-d, q, 1.0);
        }
        r.norm()
    }
}
