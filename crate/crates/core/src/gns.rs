//! Finite-atomic representations from flat moment data.
//!
//! For flat `M_k(y) ⪰ 0` the quotient of the polynomials of degree `< k` by
//! `ker M_k` is a Hilbert space of dimension `t = rank M_k` on which right
//! multiplication by each letter acts as a symmetric operator. Splitting the
//! operator tuple into irreducible blocks and fitting nonnegative weights to
//! the moments yields `y_w = Σ λ_i tr(w(A^(i)))`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flat::flat_ranks;
use crate::moment::{build_moment_matrix, mixture_moments, Atom, TracialSequence};
use crate::numeric::{self, nnls, select_columns, SymMatrix};
use crate::poly::word_matrix;
use crate::words::{basis_size, tracial_classes, Word};

/// Recursion limit of [`block_decompose`].
const MAX_DEPTH: usize = 64;
/// Relative eigenvalue gap separating eigenspaces of a commutant sample.
const SPLIT_GAP: f64 = 1e-6;
/// Weight of the `Σλ = 1` row in the weight fit.
const SUM_ROW_WEIGHT: f64 = 1e4;

/// The GNS space of a flat moment matrix and the letters acting on it.
#[derive(Debug, Clone)]
pub struct GnsModel {
    pub basis_words: Vec<Word>,
    /// `⟨b_i, b_j⟩ = y_{b_i* b_j}`
    pub gram: DMatrix<f64>,
    /// `A_i` in an orthonormal basis, symmetrized.
    pub ops: Vec<DMatrix<f64>>,
    /// Image of the empty word; `y_w = eᵀ w(A) e`.
    pub state_vector: DVector<f64>,
    /// `max_i ‖A_i - A_iᵀ‖_max / 2` before symmetrization.
    pub symmetrization_defect: f64,
}

impl GnsModel {
    pub fn dim(&self) -> usize {
        self.basis_words.len()
    }

    /// `eᵀ w(A) e`
    pub fn functional(&self, w: &Word) -> f64 {
        let m = word_matrix(w, &self.ops, self.dim());
        self.state_vector.dot(&(m * &self.state_vector))
    }
}

fn require_flat_psd(y: &TracialSequence, k: usize, tol: f64) -> Result<()> {
    let m = build_moment_matrix(y, k)?;
    let (psd, min_eig) = m.psd_check(tol)?;
    if !psd {
        return Err(Error::NotPsd { min_eig });
    }
    let (prev, rank) = flat_ranks(y, k, tol)?;
    if prev != rank {
        return Err(Error::NotFlat { k, prev, rank });
    }
    Ok(())
}

pub fn gns_operators(y: &TracialSequence, k: usize, tol: f64) -> Result<GnsModel> {
    require_flat_psd(y, k, tol)?;
    let n = y.n();
    let m = build_moment_matrix(y, k)?;
    let mk: &DMatrix<f64> = m.matrix();
    let eig = numeric::sym_eig(m.matrix())?;
    let rank = eig
        .values
        .iter()
        .filter(|l| l.abs() > eig.threshold(tol) && **l != 0.0)
        .count();
    let low = basis_size(n, k - 1);
    let cols = select_columns(mk, 0..low, eig.threshold(tol), rank);
    if cols.len() < rank {
        return Err(Error::BasisExtraction {
            k,
            found: cols.len(),
            rank,
        });
    }
    let basis_words: Vec<Word> = cols.iter().map(|&j| m.basis()[j].clone()).collect();
    let t = cols.len();
    let gram = SymMatrix::new(mk.select_rows(&cols).select_columns(&cols))?;
    let gram_eig = numeric::sym_eig(&gram)?;

    // column j of R_i: coordinates of b_j X_i modulo ker M_k
    let raw: Vec<DMatrix<f64>> = (0..n as u8)
        .map(|i| {
            let mut r = DMatrix::zeros(t, t);
            for (j, bj) in basis_words.iter().enumerate() {
                let col = m.index_of(&bj.append(i)).expect("degree <= k");
                let rhs = DVector::from_iterator(t, cols.iter().map(|&row| mk[(row, col)]));
                r.set_column(j, &numeric::pinv_apply(&gram_eig, &rhs, tol));
            }
            r
        })
        .collect();

    let (root, inv_root) = numeric::psd_sqrt_pair(&gram, tol)?;
    let mut defect = 0.0f64;
    let mut ops = Vec::with_capacity(n);
    for r in &raw {
        let a = &root * r * &inv_root;
        let scale = a.amax().max(1.0);
        defect = defect.max((&a - a.transpose()).amax() / 2.0 / scale);
        ops.push((&a + a.transpose()) * 0.5);
    }
    if defect > 100.0 * tol {
        return Err(Error::SymmetrizationDefect { defect });
    }
    let one = m.index_of(&Word::empty()).expect("empty word");
    let unit = DVector::from_iterator(t, cols.iter().map(|&row| mk[(row, one)]));
    let state_vector = &root * numeric::pinv_apply(&gram_eig, &unit, tol);
    Ok(GnsModel {
        basis_words,
        gram: gram.into_inner(),
        ops,
        state_vector,
        symmetrization_defect: defect,
    })
}

/// Orthogonal change of basis splitting an operator tuple into irreducible blocks.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    /// Columns grouped by block, in the order of `sizes`.
    pub u: DMatrix<f64>,
    pub sizes: Vec<usize>,
    /// Largest entry of any `Uᵀ A_i U` outside the diagonal blocks.
    pub off_block: f64,
}

impl BlockDecomposition {
    /// `(Uᵀ A_i U)` restricted to block `j`.
    pub fn block(&self, ops: &[DMatrix<f64>], j: usize) -> Vec<DMatrix<f64>> {
        let start: usize = self.sizes[..j].iter().sum();
        let q = self.u.columns(start, self.sizes[j]);
        ops.iter()
            .map(|a| {
                let b = q.transpose() * a * q;
                (&b + b.transpose()) * 0.5
            })
            .collect()
    }

    pub fn blocks(&self, ops: &[DMatrix<f64>]) -> Vec<Vec<DMatrix<f64>>> {
        (0..self.sizes.len()).map(|j| self.block(ops, j)).collect()
    }
}

/// Orthonormal basis (Frobenius) of `{S = Sᵀ : S A_i = A_i S for all i}`.
pub fn symmetric_commutant(ops: &[DMatrix<f64>], tol: f64) -> Result<Vec<DMatrix<f64>>> {
    let t = ops.first().map_or(0, |a| a.nrows());
    let units: Vec<DMatrix<f64>> = (0..t)
        .flat_map(|a| (a..t).map(move |b| (a, b)))
        .map(|(a, b)| {
            let mut e = DMatrix::zeros(t, t);
            if a == b {
                e[(a, a)] = 1.0;
            } else {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                e[(a, b)] = s;
                e[(b, a)] = s;
            }
            e
        })
        .collect();
    let images: Vec<Vec<f64>> = units
        .iter()
        .map(|e| {
            ops.iter()
                .flat_map(|a| (e * a - a * e).iter().copied().collect::<Vec<_>>())
                .collect()
        })
        .collect();
    let p = units.len();
    let normal = DMatrix::from_fn(p, p, |i, j| {
        images[i].iter().zip(&images[j]).map(|(x, y)| x * y).sum::<f64>()
    });
    let eig = numeric::sym_eig(&SymMatrix::new(normal)?)?;
    let thr = tol * eig.max_abs();
    Ok((0..p)
        .filter(|&j| eig.values[j] <= thr)
        .map(|j| {
            units
                .iter()
                .zip(eig.vectors.column(j).iter())
                .fold(DMatrix::zeros(t, t), |acc, (e, c)| acc + e * *c)
        })
        .collect())
}

/// Splits `ops` along eigenspaces of random symmetric commutant elements
/// until every block has a one-dimensional symmetric commutant.
pub fn block_decompose(ops: &[DMatrix<f64>], tol: f64, seed: u64) -> Result<BlockDecomposition> {
    let t = ops.first().map_or(0, |a| a.nrows());
    if ops.iter().any(|a| a.nrows() != t || a.ncols() != t) {
        return Err(Error::Dimension("operators must share one square size".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    split(ops, DMatrix::identity(t, t), tol, 0, &mut rng, &mut blocks)?;
    let sizes: Vec<usize> = blocks.iter().map(|q| q.ncols()).collect();
    let mut u = DMatrix::zeros(t, t);
    let mut start = 0;
    for q in &blocks {
        u.columns_mut(start, q.ncols()).copy_from(q);
        start += q.ncols();
    }
    let mut off_block = 0.0f64;
    for a in ops {
        let c = u.transpose() * a * &u;
        let mut offset = 0;
        for &s in &sizes {
            for i in offset..offset + s {
                for j in 0..t {
                    if j < offset || j >= offset + s {
                        off_block = off_block.max(c[(i, j)].abs());
                    }
                }
            }
            offset += s;
        }
    }
    Ok(BlockDecomposition { u, sizes, off_block })
}

/// `q` spans an invariant subspace (orthonormal columns) of the original operators.
fn split(
    ops: &[DMatrix<f64>],
    q: DMatrix<f64>,
    tol: f64,
    depth: usize,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<DMatrix<f64>>,
) -> Result<()> {
    if depth > MAX_DEPTH {
        return Err(Error::BlockDecomposition { depth: MAX_DEPTH });
    }
    if q.ncols() == 1 {
        out.push(q);
        return Ok(());
    }
    let local: Vec<DMatrix<f64>> = ops
        .iter()
        .map(|a| {
            let b = q.transpose() * a * &q;
            (&b + b.transpose()) * 0.5
        })
        .collect();
    let commutant = symmetric_commutant(&local, tol)?;
    if commutant.len() <= 1 {
        out.push(q);
        return Ok(());
    }
    let m = q.ncols();
    let sample = commutant.iter().fold(DMatrix::zeros(m, m), |acc, s| {
        let g: f64 = StandardNormal.sample(rng);
        acc + s * g
    });
    let eig = numeric::sym_eig(&SymMatrix::new(sample)?)?;
    let vals = &eig.values;
    let spread = vals[m - 1] - vals[0];
    let gap = SPLIT_GAP * spread.max(eig.max_abs());
    let mut groups: Vec<Vec<usize>> = vec![vec![0]];
    for j in 1..m {
        if vals[j] - vals[j - 1] > gap {
            groups.push(Vec::new());
        }
        groups.last_mut().expect("non-empty").push(j);
    }
    if groups.len() == 1 {
        return Err(Error::BlockDecomposition { depth });
    }
    for g in groups {
        let sub = &q * eig.vectors.select_columns(&g);
        split(ops, sub, tol, depth + 1, rng, out)?;
    }
    Ok(())
}

/// Nonnegative weights for `blocks` and the largest moment mismatch they leave.
#[derive(Debug, Clone)]
pub struct WeightFit {
    pub weights: Vec<f64>,
    pub residual: f64,
}

/// Fits `y_w ≈ Σ λ_i tr(w(B_i))` over tracial classes of degree
/// `≤ max_deg` with `λ ≥ 0` and `Σλ = 1`. Fails when the residual exceeds
/// `tol · max(1, max |y|)`.
pub fn fit_weights(
    y: &TracialSequence,
    blocks: &[Vec<DMatrix<f64>>],
    max_deg: usize,
    tol: f64,
) -> Result<WeightFit> {
    if blocks.is_empty() {
        return Err(Error::Weights("no blocks to weight".into()));
    }
    let max_deg = max_deg.min(y.order());
    let classes: Vec<Word> = tracial_classes(y.n(), max_deg);
    let traces: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| block_traces(b, y.n(), &classes))
        .collect::<Result<_>>()?;
    let rows = classes.len();
    let mut a = DMatrix::zeros(rows, blocks.len());
    let mut rhs = DVector::zeros(rows);
    for (r, w) in classes.iter().enumerate() {
        // the empty word carries Σλ = 1
        let weight = if w.is_empty() { SUM_ROW_WEIGHT } else { 1.0 };
        rhs[r] = weight * y.get(w)?;
        for (c, tr) in traces.iter().enumerate() {
            a[(r, c)] = weight * tr[r];
        }
    }
    let mut lambda = nnls(&a, &rhs);
    let total = lambda.sum();
    if !(total > 0.0) {
        return Err(Error::Weights("fit produced zero weights".into()));
    }
    lambda /= total;
    // the weighted row only approximates Σλ = 1; re-solve on the support with it exact
    let support: Vec<usize> = (0..lambda.len()).filter(|&i| lambda[i] > 0.0).collect();
    if let Some(exact) = sum_constrained_solve(&a, &rhs, &support) {
        if exact.iter().all(|v| *v >= 0.0) {
            lambda.fill(0.0);
            for (&i, v) in support.iter().zip(exact.iter()) {
                lambda[i] = *v;
            }
        }
    }
    let residual = classes
        .iter()
        .enumerate()
        .map(|(r, w)| {
            let model: f64 = traces.iter().zip(lambda.iter()).map(|(tr, l)| l * tr[r]).sum();
            (model - y.get(w).unwrap_or(0.0)).abs()
        })
        .fold(0.0, f64::max);
    if residual > tol * y.max_abs().max(1.0) {
        return Err(Error::Residual { residual, tol });
    }
    Ok(WeightFit {
        weights: lambda.iter().copied().collect(),
        residual,
    })
}

/// `min ‖A_S λ - b‖` subject to `Σλ = 1`, parametrized as
/// `λ = e_1 + Σ_j z_j (e_j - e_1)`.
fn sum_constrained_solve(a: &DMatrix<f64>, b: &DVector<f64>, support: &[usize]) -> Option<DVector<f64>> {
    let m = support.len();
    if m == 0 {
        return None;
    }
    let sub = a.select_columns(support);
    let base = sub.column(0).into_owned();
    if m == 1 {
        return Some(DVector::from_element(1, 1.0));
    }
    let dirs = DMatrix::from_fn(a.nrows(), m - 1, |r, j| sub[(r, j + 1)] - base[r]);
    let z = dirs.svd(true, true).solve(&(b - &base), 1e-14).ok()?;
    let mut out = DVector::zeros(m);
    out[0] = 1.0 - z.sum();
    out.rows_mut(1, m - 1).copy_from(&z);
    Some(out)
}

fn block_traces(block: &[DMatrix<f64>], n: usize, classes: &[Word]) -> Result<Vec<f64>> {
    let t = crate::poly::check_tuple(block, n)?;
    Ok(classes
        .iter()
        .map(|w| word_matrix(w, block, t).trace() / t as f64)
        .collect())
}

/// `y_w = Σ λ_i tr(w(A^(i)))` with normalized traces.
#[derive(Debug, Clone, PartialEq)]
pub struct TracialRepresentation {
    pub weights: Vec<f64>,
    pub atoms: Vec<Vec<DMatrix<f64>>>,
}

/// On-disk representation format: one list of row lists per matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationFile {
    pub weights: Vec<f64>,
    pub atoms: Vec<Vec<Vec<Vec<f64>>>>,
}

impl TracialRepresentation {
    /// Validates weights (`λ ≥ 0`, `Σλ = 1` within `1e-9`) and symmetry.
    pub fn new(weights: Vec<f64>, atoms: Vec<Vec<DMatrix<f64>>>) -> Result<Self> {
        if weights.len() != atoms.len() || atoms.is_empty() {
            return Err(Error::Weights(format!(
                "{} weights for {} atoms",
                weights.len(),
                atoms.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::Weights(format!("negative weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Weights(format!("weights sum to {total}, expected 1")));
        }
        let n = atoms[0].len();
        for a in &atoms {
            crate::poly::check_tuple(a, n)?;
        }
        Ok(TracialRepresentation { weights, atoms })
    }

    pub fn n(&self) -> usize {
        self.atoms.first().map_or(0, Vec::len)
    }

    /// `Σ t_i`
    pub fn total_size(&self) -> usize {
        self.atoms.iter().map(|a| a.first().map_or(0, |m| m.nrows())).sum()
    }

    pub fn to_atoms(&self) -> Vec<Atom> {
        self.weights
            .iter()
            .zip(&self.atoms)
            .map(|(w, a)| Atom::new(*w, a.clone()))
            .collect()
    }

    pub fn to_file(&self) -> RepresentationFile {
        RepresentationFile {
            weights: self.weights.clone(),
            atoms: self
                .atoms
                .iter()
                .map(|a| {
                    a.iter()
                        .map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn from_file(file: &RepresentationFile) -> Result<Self> {
        let mut atoms = Vec::with_capacity(file.atoms.len());
        for a in &file.atoms {
            let mut mats = Vec::with_capacity(a.len());
            for rows in a {
                let t = rows.len();
                if rows.iter().any(|r| r.len() != t) {
                    return Err(Error::Dimension("atom matrices must be square".into()));
                }
                mats.push(DMatrix::from_fn(t, t, |i, j| rows[i][j]));
            }
            atoms.push(mats);
        }
        Self::new(file.weights.clone(), atoms)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("representation serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }
}

/// Largest `|y_w - Σ λ_i tr(w(A^(i)))|` over all classes of `y`.
pub fn verify_representation(y: &TracialSequence, rep: &TracialRepresentation) -> Result<f64> {
    if rep.n() != y.n() {
        return Err(Error::Dimension(format!(
            "representation has {} variables, sequence has {}",
            rep.n(),
            y.n()
        )));
    }
    let model = mixture_moments(&rep.to_atoms(), y.n(), y.order())?;
    Ok(y.max_abs_diff(&model))
}

/// GNS operators, irreducible blocks and fitted weights for flat `M_k(y) ⪰ 0`.
///
/// Blocks with identical moments are merged first. Weights are fitted on
/// degree `≤ 2` and, if that misses, refitted on every degree of `y`. The
/// result reproduces `y` within `tol · max(1, max |y|)` or the call fails.
pub fn extract_representation(
    y: &TracialSequence,
    k: usize,
    tol: f64,
    seed: u64,
) -> Result<TracialRepresentation> {
    let model = gns_operators(y, k, tol)?;
    let decomposition = block_decompose(&model.ops, tol, seed)?;
    let blocks = merge_equivalent(decomposition.blocks(&model.ops), y.n(), y.order());
    let bound = tol * y.max_abs().max(1.0);
    let mut last = f64::INFINITY;
    for max_deg in [2, y.order()] {
        let fit = match fit_weights(y, &blocks, max_deg, tol) {
            Ok(fit) => fit,
            Err(Error::Residual { residual, .. }) => {
                last = residual;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (weights, atoms): (Vec<f64>, Vec<_>) = fit
            .weights
            .iter()
            .zip(&blocks)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, b)| (*w, b.clone()))
            .unzip();
        let total: f64 = weights.iter().sum();
        let rep = TracialRepresentation::new(weights.iter().map(|w| w / total).collect(), atoms)?;
        last = verify_representation(y, &rep)?;
        if last <= bound {
            return Ok(rep);
        }
    }
    Err(Error::Residual { residual: last, tol: bound })
}

/// Keeps one block per distinct moment vector up to `order`.
fn merge_equivalent(blocks: Vec<Vec<DMatrix<f64>>>, n: usize, order: usize) -> Vec<Vec<DMatrix<f64>>> {
    let classes = tracial_classes(n, order);
    let mut kept: Vec<(Vec<DMatrix<f64>>, Vec<f64>)> = Vec::new();
    for b in blocks {
        let Ok(tr) = block_traces(&b, n, &classes) else {
            continue;
        };
        let scale = tr.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let same = kept.iter().any(|(kb, ktr)| {
            kb[0].nrows() == b[0].nrows()
                && ktr.iter().zip(&tr).all(|(p, q)| (p - q).abs() <= 1e-6 * scale)
        });
        if !same {
            kept.push((b, tr));
        }
    }
    kept.into_iter().map(|(b, _)| b).collect()
}
