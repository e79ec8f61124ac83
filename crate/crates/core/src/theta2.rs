//! Sums of hermitian squares modulo commutators.
//!
//! `f` is cyclically equivalent to `Σ g_i* g_i` with `deg g_i ≤ k` exactly
//! when some PSD Gram matrix `G` over `enumerate_words(n, k)` reproduces the
//! cyclic class sums of `f`. Feasibility is searched by Dykstra's alternating
//! projections with an occasional face-restricted polish. A negative verdict
//! is only ever issued with a tracial sequence `y` such that `M_k(y) ⪰ 0` and
//! `L_y(f) < 0`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::moment::{build_moment_matrix, moments_from_atoms, Atom, SequenceFile, TracialSequence};
use crate::numeric::{self, random_symmetric, EigDecomp, SymMatrix};
use crate::poly::{render_word, CyclicReduction, Polynomial};
use crate::words::{canon_cyclic, canon_tracial, cyclic_classes, enumerate_words, tracial_classes, Word};

/// Dykstra iterations between polish attempts.
const REFINE_FACTOR: f64 = 1e-3;
const FACTOR_STEPS: usize = 30;
const POLISH_STEPS: usize = 100;
const POLISH_EVERY: usize = 50;
/// Iterations between stall checks of the projection gap.
const STALL_WINDOW: usize = 250;

/// Linear constraints `Σ_{(u,v) ∈ c} G_uv = f_c`, one per cyclic class `c`.
#[derive(Debug, Clone)]
pub struct GramSystem {
    pub n: usize,
    pub k: usize,
    pub basis: Vec<Word>,
    /// Canonical cyclic classes of degree `≤ 2k`.
    pub classes: Vec<Word>,
    /// Class sums of `f`.
    pub rhs: DVector<f64>,
    /// Matrix positions `(i, j)` with `basis[i]* basis[j]` in each class.
    pub members: Vec<Vec<(usize, usize)>>,
    class_gram: EigDecomp,
}

pub fn gram_constraints(f: &Polynomial, k: usize) -> Result<GramSystem> {
    if f.degree() > 2 * k {
        return Err(Error::DegreeOverflow {
            degree: f.degree(),
            order: 2 * k,
        });
    }
    let n = f.n();
    let basis = enumerate_words(n, k);
    let classes = cyclic_classes(n, 2 * k);
    let index: BTreeMap<&Word, usize> = classes.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut members = vec![Vec::new(); classes.len()];
    for (i, u) in basis.iter().enumerate() {
        let us = u.reverse();
        for (j, v) in basis.iter().enumerate() {
            members[index[&canon_cyclic(&us.concat(v))]].push((i, j));
        }
    }
    let reduced = f.cyclic_reduce();
    let rhs = DVector::from_iterator(classes.len(), classes.iter().map(|c| reduced.get(c)));

    // ⟨sym E_c, sym E_d⟩ on symmetric matrices
    let eta = basis.len();
    let sym: Vec<DMatrix<f64>> = members.iter().map(|m| class_matrix(m, eta)).collect();
    let p = classes.len();
    let gram = DMatrix::from_fn(p, p, |a, b| sym[a].dot(&sym[b]));
    let class_gram = numeric::sym_eig(&SymMatrix::new(gram)?)?;
    Ok(GramSystem {
        n,
        k,
        basis,
        classes,
        rhs,
        members,
        class_gram,
    })
}

fn class_matrix(members: &[(usize, usize)], eta: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(eta, eta);
    for &(i, j) in members {
        s[(i, j)] += 0.5;
        s[(j, i)] += 0.5;
    }
    s
}

impl GramSystem {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Class sums of `g`.
    pub fn apply(&self, g: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.classes.len(),
            self.members
                .iter()
                .map(|m| m.iter().map(|&(i, j)| g[(i, j)]).sum::<f64>()),
        )
    }

    /// `max_c |Σ_{(u,v) ∈ c} G_uv - f_c|`
    pub fn residual(&self, g: &DMatrix<f64>) -> f64 {
        (self.apply(g) - &self.rhs).amax()
    }

    /// Orthogonal projection of symmetric `g` onto the affine constraint set
    /// (least-squares if the constraints are inconsistent).
    pub fn project_affine(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let r = self.apply(g) - &self.rhs;
        let mu = numeric::pinv_apply(&self.class_gram, &r, 1e-12);
        let mut out = g.clone();
        for (m, c) in self.members.iter().zip(mu.iter()) {
            for &(i, j) in m {
                out[(i, j)] -= 0.5 * c;
                out[(j, i)] -= 0.5 * c;
            }
        }
        out
    }

    /// Tries `G = V Z Vᵀ` on the span `V` of the leading eigenvectors of `g`,
    /// correcting `Z` by the least-norm change meeting the constraints.
    /// Levenberg-Marquardt on a factor `G = R Rᵀ` with `r` columns, for
    /// `r = 1, 2, …`, started from the top eigenpairs of `g`. Works when the
    /// feasible set has no interior, where Dykstra crawls; the narrowest
    /// feasible factor keeps the Jacobian well conditioned.
    fn factor_polish(&self, g: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
        let eta = self.dim();
        let eig = numeric::sym_eig(&SymMatrix::from_symmetric(g.clone())).ok()?;
        let mats: Vec<DMatrix<f64>> = self.members.iter().map(|m| class_matrix(m, eta)).collect();
        for width in 1..=eta {
            let mut r = eig.vectors.columns(eta - width, width).into_owned();
            for j in 0..width {
                r.column_mut(j).scale_mut(eig.values[eta - width + j].max(0.0).sqrt());
            }
            if let Some(out) = self.levenberg_marquardt(r, &mats, tol, tol) {
                return Some(out);
            }
        }
        None
    }

    /// Iterates until the residual reaches `target`; succeeds if it is within `tol`.
    fn levenberg_marquardt(
        &self,
        mut r: DMatrix<f64>,
        mats: &[DMatrix<f64>],
        target: f64,
        tol: f64,
    ) -> Option<DMatrix<f64>> {
        let (eta, width) = r.shape();
        let value = |r: &DMatrix<f64>| {
            let g = r * r.transpose();
            let res = self.apply(&g) - &self.rhs;
            (g, res)
        };
        let (mut g, mut res) = value(&r);
        let mut mu = 0.0;
        for _ in 0..FACTOR_STEPS {
            if res.amax() <= target {
                break;
            }
            let rows: Vec<DMatrix<f64>> = mats.iter().map(|s| s * &r * 2.0).collect();
            let jac = DMatrix::from_fn(rows.len(), eta * width, |c, e| rows[c][e]);
            let normal = &jac * jac.transpose();
            if mu == 0.0 {
                mu = 1e-6 * normal.diagonal().amax().max(1e-12);
            }
            let norm = res.norm();
            let mut improved = false;
            for _ in 0..12 {
                let mut damped = normal.clone();
                for i in 0..damped.nrows() {
                    damped[(i, i)] += mu;
                }
                let Some(chol) = damped.cholesky() else {
                    mu *= 10.0;
                    continue;
                };
                let step = jac.transpose() * chol.solve(&res);
                let trial = &r - DMatrix::from_column_slice(eta, width, step.as_slice());
                let (tg, tres) = value(&trial);
                if tres.norm() < norm {
                    r = trial;
                    g = tg;
                    res = tres;
                    mu = (mu * 0.3).max(1e-15);
                    improved = true;
                    break;
                }
                mu *= 10.0;
            }
            if !improved {
                break;
            }
        }
        (res.amax() <= tol).then(|| (&g + g.transpose()) * 0.5)
    }

    /// Drives the residual of a feasible `g` far below `tol`, keeping its rank,
    /// so that squares read from it recombine with margin.
    fn refine(&self, g: DMatrix<f64>, tol: f64) -> DMatrix<f64> {
        let eta = self.dim();
        let Ok(eig) = numeric::sym_eig(&SymMatrix::from_symmetric(g.clone())) else {
            return g;
        };
        let top = eig.values[eta - 1];
        let width = eig.values.iter().filter(|&&l| l > 1e-9 * top).count();
        if width == 0 {
            return g;
        }
        let mut r = eig.vectors.columns(eta - width, width).into_owned();
        for j in 0..width {
            r.column_mut(j).scale_mut(eig.values[eta - width + j].sqrt());
        }
        let mats: Vec<DMatrix<f64>> = self.members.iter().map(|m| class_matrix(m, eta)).collect();
        let before = self.residual(&g);
        match self.levenberg_marquardt(r, &mats, REFINE_FACTOR * tol, before) {
            Some(out) if self.residual(&out) < before => out,
            _ => g,
        }
    }

    fn polish(&self, g: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
        let eig = numeric::sym_eig(&SymMatrix::from_symmetric(g.clone())).ok()?;
        let eta = self.dim();
        let top = eig.values[eta - 1];
        if !(top > 0.0) {
            return (self.residual(&DMatrix::zeros(eta, eta)) <= tol).then(|| DMatrix::zeros(eta, eta));
        }
        let max_rank = eig.values.iter().filter(|&&l| l > 1e-12 * top).count();
        let widest = (max_rank + 2).min(eta);
        for r in (1..=widest).rev() {
            let v = eig.vectors.columns(eta - r, r).into_owned();
            let pairs: Vec<(usize, usize)> = (0..r).flat_map(|a| (a..r).map(move |b| (a, b))).collect();
            let reduced: Vec<DMatrix<f64>> = self
                .members
                .iter()
                .map(|m| {
                    let s = class_matrix(m, eta);
                    v.transpose() * s * &v
                })
                .collect();
            let c = DMatrix::from_fn(self.classes.len(), pairs.len(), |row, col| {
                let (a, b) = pairs[col];
                if a == b {
                    reduced[row][(a, a)]
                } else {
                    2.0 * reduced[row][(a, b)]
                }
            });
            let Ok(c_pinv) = c.clone().pseudo_inverse(1e-13) else {
                continue;
            };
            // alternate between the affine slice of the face and its PSD cone
            let mut z = v.transpose() * g * &v;
            for _ in 0..POLISH_STEPS {
                let z_vec = DVector::from_iterator(pairs.len(), pairs.iter().map(|&(a, b)| z[(a, b)]));
                let dz = &c_pinv * (&self.rhs - &c * &z_vec);
                for (&(a, b), d) in pairs.iter().zip(dz.iter()) {
                    z[(a, b)] += d;
                    if a != b {
                        z[(b, a)] += d;
                    }
                }
                let Ok(zeig) = numeric::sym_eig(&SymMatrix::from_symmetric(z.clone())) else {
                    break;
                };
                if zeig.min() >= -tol {
                    let zc = zeig.map_values(|l| l.max(0.0));
                    let out = &v * zc * v.transpose();
                    let out = (&out + out.transpose()) * 0.5;
                    if self.residual(&out) <= tol {
                        return Some(out);
                    }
                }
                z = zeig.map_values(|l| l.max(0.0));
            }
        }
        None
    }
}

/// A PSD Gram matrix for `f` together with the squares read from it.
#[derive(Debug, Clone)]
pub struct GramCertificate {
    pub f: Polynomial,
    pub k: usize,
    pub basis: Vec<Word>,
    pub gram: DMatrix<f64>,
    /// Largest constraint violation.
    pub residual: f64,
    pub min_eig: f64,
    pub squares: Vec<Polynomial>,
}

/// A tracial sequence separating `f` from the sums of hermitian squares.
#[derive(Debug, Clone)]
pub struct DualWitness {
    pub y: TracialSequence,
    /// Smallest eigenvalue of `M_k(y)`.
    pub min_eig: f64,
    /// `L_y(f)`
    pub value: f64,
}

#[derive(Debug, Clone)]
pub enum Theta2Verdict {
    Member(GramCertificate),
    NotMember(DualWitness),
    Unknown {
        /// Constraint residual of the last PSD iterate.
        residual: f64,
        iterations: usize,
    },
}

/// Decides `f ∈ Θ²_k` as far as the iteration budget allows.
pub fn theta2_feasibility(f: &Polynomial, k: usize, tol: f64, max_iter: usize, seed: u64) -> Result<Theta2Verdict> {
    let system = gram_constraints(f, k)?;
    let run = dykstra(&system, tol, max_iter);
    if let Some(gram) = run.found {
        if let Some(cert) = certificate(f, &system, gram, tol)? {
            return Ok(Theta2Verdict::Member(cert));
        }
    }
    match witness_from_gap(f, k, &run.gap, tol, seed) {
        Ok(w) => Ok(Theta2Verdict::NotMember(w)),
        Err(_) => Ok(Theta2Verdict::Unknown {
            residual: run.residual,
            iterations: run.iterations,
        }),
    }
}

struct DykstraRun {
    found: Option<DMatrix<f64>>,
    /// Constraint residual of the last PSD iterate.
    residual: f64,
    iterations: usize,
    /// PSD iterate minus affine iterate; tends to the minimal displacement
    /// between the two sets.
    gap: DMatrix<f64>,
}

fn dykstra(system: &GramSystem, tol: f64, max_iter: usize) -> DykstraRun {
    let eta = system.dim();
    let mut x = DMatrix::zeros(eta, eta);
    let mut p = DMatrix::zeros(eta, eta);
    let mut q = DMatrix::zeros(eta, eta);
    let mut gap = DMatrix::zeros(eta, eta);
    let mut last_gap = f64::INFINITY;
    let mut residual = system.residual(&x);
    let done = |found, residual, iterations, gap| DykstraRun {
        found,
        residual,
        iterations,
        gap,
    };
    for it in 1..=max_iter {
        let y = system.project_affine(&(&x + &p));
        p = &x + &p - &y;
        let Ok(eig) = numeric::sym_eig(&SymMatrix::from_symmetric(&y + &q)) else {
            return done(None, residual, it, gap);
        };
        let next = eig.map_values(|l| l.max(0.0));
        q = &y + &q - &next;
        gap = &next - &y;
        x = next;
        residual = system.residual(&x);
        if residual <= tol {
            return done(Some(x), residual, it, gap);
        }
        if it % POLISH_EVERY == 0 {
            // the factor search is costly on infeasible systems, so it backs off
            let rounds = it / POLISH_EVERY;
            let factor = || (rounds.is_power_of_two()).then(|| system.factor_polish(&x, tol)).flatten();
            if let Some(g) = system.polish(&x, tol).or_else(factor) {
                return done(Some(g), residual, it, gap);
            }
        }
        if it % STALL_WINDOW == 0 {
            // an infeasible system settles at a fixed positive gap
            let norm = gap.norm();
            if norm > 1e-6 && (last_gap - norm).abs() <= 1e-6 * norm {
                return done(None, residual, it, gap);
            }
            last_gap = norm;
        }
    }
    done(None, residual, max_iter, gap)
}

fn certificate(f: &Polynomial, system: &GramSystem, gram: DMatrix<f64>, tol: f64) -> Result<Option<GramCertificate>> {
    let gram = system.refine(gram, tol);
    let min_eig = numeric::sym_eig(&SymMatrix::from_symmetric(gram.clone()))?.min();
    let mut cert = GramCertificate {
        f: f.clone(),
        k: system.k,
        basis: system.basis.clone(),
        residual: system.residual(&gram),
        gram,
        min_eig,
        squares: Vec::new(),
    };
    if cert.min_eig < -tol || cert.residual > tol {
        return Ok(None);
    }
    match extract_sohs(&cert, tol) {
        Ok(squares) => {
            cert.squares = squares;
            Ok(Some(cert))
        }
        Err(Error::Residual { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Squares `g_i = sqrt(λ_i) q_i` from the eigenpairs of the Gram matrix,
/// checked to satisfy `Σ g_i* g_i ∼cyc f` within `tol`.
pub fn extract_sohs(cert: &GramCertificate, tol: f64) -> Result<Vec<Polynomial>> {
    let n = cert.f.n();
    let eig = numeric::sym_eig(&SymMatrix::new(cert.gram.clone())?)?;
    let top = eig.values.iter().copied().fold(0.0f64, f64::max);
    // far below tol so dropping cannot move the class sums by tol
    let drop = 1e-3 * tol * top.max(1.0);
    let mut squares = Vec::new();
    for j in (0..eig.values.len()).rev() {
        let l = eig.values[j];
        if l <= drop {
            continue;
        }
        let v: DVector<f64> = eig.vectors.column(j) * l.sqrt();
        squares.push(Polynomial::from_vector(n, &cert.basis, &v));
    }
    let residual = sohs_residual(&cert.f, &squares);
    if residual > tol {
        return Err(Error::Residual { residual, tol });
    }
    Ok(squares)
}

/// `max_c |(Σ g_i* g_i - f)_c|` over cyclic classes.
pub fn sohs_residual(f: &Polynomial, squares: &[Polynomial]) -> f64 {
    let mut sum = Polynomial::zero(f.n());
    for g in squares {
        sum = &sum + &(&g.involution() * g);
    }
    let a: CyclicReduction = sum.cyclic_reduce();
    a.max_abs_diff(&f.cyclic_reduce())
}

/// Searches for `y` with `y_∅ = 1`, `M_k(y) ⪰ 0` and `L_y(f) < -tol`.
///
/// Runs the Gram feasibility iteration; when it does not close, the limit
/// displacement `d` between the PSD cone and the constraint set is PSD,
/// constant on tracial classes and has `⟨d, G⟩ = -‖d‖²` on the constraint set,
/// so `d = M_k(z)` with `L_z(f) < 0`. `z` is normalized and mixed with a
/// strictly feasible center until `M_k` is exactly PSD.
pub fn dual_witness_search(f: &Polynomial, k: usize, tol: f64, max_iter: usize, seed: u64) -> Result<DualWitness> {
    let system = gram_constraints(f, k)?;
    let run = dykstra(&system, tol, max_iter);
    if run.found.is_some() {
        return Err(Error::NoWitness("the Gram system is feasible".into()));
    }
    witness_from_gap(f, k, &run.gap, tol, seed)
}

fn witness_from_gap(f: &Polynomial, k: usize, gap: &DMatrix<f64>, tol: f64, seed: u64) -> Result<DualWitness> {
    let space = WitnessSpace::new(f, k, seed)?;
    let z = space.class_average(gap);
    let lz = space.grad.dot(&z);
    if !(lz < 0.0) {
        return Err(Error::NoWitness(format!("the displacement gives L(f) = {lz:.3e}")));
    }
    // y(t) = (c + t z) / (1 + t z_∅) runs from the center toward z / z_∅
    let mut best: Option<(DVector<f64>, f64)> = None;
    for e in 0..=16 {
        let t = 10f64.powi(e - 4);
        let y = (&space.center + &z * t) / (1.0 + t * z[0]);
        let (cand, _) = space.repair(&y)?;
        let value = space.grad.dot(&cand);
        if best.as_ref().is_none_or(|(_, b)| value < *b) {
            best = Some((cand, value));
        }
    }
    let (cand, _) = best.expect("at least one candidate");
    let witness = TracialSequence::from_fn(space.n, 2 * k, |w| cand[space.class_index[w]]);
    let m = build_moment_matrix(&witness, k)?;
    let min_eig = numeric::sym_eig(m.matrix())?.min();
    let value = witness.riesz(f)?;
    if value < -tol && min_eig >= -tol {
        Ok(DualWitness { y: witness, min_eig, value })
    } else {
        Err(Error::NoWitness(format!("best candidate has L(f) = {value:.3e}, min eigenvalue {min_eig:.3e}")))
    }
}

/// Tracial-class coordinates of `M_k(y)`.
struct WitnessSpace {
    n: usize,
    eta: usize,
    class_index: BTreeMap<Word, usize>,
    entry_class: Vec<usize>,
    class_count: Vec<f64>,
    /// `∂ L_y(f) / ∂ y_c`
    grad: DVector<f64>,
    center: DVector<f64>,
    center_inv_root: DMatrix<f64>,
}

impl WitnessSpace {
    fn new(f: &Polynomial, k: usize, seed: u64) -> Result<Self> {
        let n = f.n();
        let classes = tracial_classes(n, 2 * k);
        let class_index: BTreeMap<Word, usize> = classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        let basis = enumerate_words(n, k);
        let eta = basis.len();
        let entry_class: Vec<usize> = (0..eta * eta)
            .map(|e| class_index[&canon_tracial(&basis[e / eta].reverse().concat(&basis[e % eta]))])
            .collect();
        let mut class_count = vec![0.0; classes.len()];
        for &c in &entry_class {
            class_count[c] += 1.0;
        }
        let mut grad = DVector::zeros(classes.len());
        for (w, v) in f.terms() {
            grad[class_index[&canon_tracial(w)]] += v;
        }
        let center_seq = strictly_feasible_center(n, k, seed)?;
        let center = DVector::from_iterator(classes.len(), classes.iter().map(|c| center_seq.get(c).expect("class")));
        let center_matrix = build_matrix(&center, &entry_class, eta);
        let (_, center_inv_root) = numeric::psd_sqrt_pair(&SymMatrix::from_symmetric(center_matrix), 0.0)?;
        Ok(WitnessSpace {
            n,
            eta,
            class_index,
            entry_class,
            class_count,
            grad,
            center,
            center_inv_root,
        })
    }

    fn matrix(&self, y: &DVector<f64>) -> DMatrix<f64> {
        build_matrix(y, &self.entry_class, self.eta)
    }

    /// Mean of the entries of `x` in each tracial class.
    fn class_average(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let mut avg = DVector::zeros(self.class_count.len());
        for (e, &c) in self.entry_class.iter().enumerate() {
            avg[c] += x[(e / self.eta, e % self.eta)];
        }
        for (c, v) in avg.iter_mut().enumerate() {
            *v /= self.class_count[c];
        }
        avg
    }

    /// Smallest `α` with `(1-α) M_k(y) + α M_k(center) ⪰ 0`, and the mixed point.
    fn repair(&self, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let scaled = &self.center_inv_root * self.matrix(y) * &self.center_inv_root;
        let lmin = numeric::sym_eig(&SymMatrix::from_symmetric((&scaled + scaled.transpose()) * 0.5))?.min();
        let alpha = if lmin >= 0.0 {
            0.0
        } else {
            (-lmin / (1.0 - lmin) * (1.0 + 1e-9)).min(1.0)
        };
        Ok((y * (1.0 - alpha) + &self.center * alpha, alpha))
    }
}

fn build_matrix(y: &DVector<f64>, entry_class: &[usize], eta: usize) -> DMatrix<f64> {
    DMatrix::from_fn(eta, eta, |i, j| y[entry_class[i * eta + j]])
}

/// Moments of random matrices large enough that `M_k` is positive definite.
fn strictly_feasible_center(n: usize, k: usize, seed: u64) -> Result<TracialSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let eta = crate::words::basis_size(n, k);
    let mut t = ((eta as f64).sqrt().ceil() as usize).max(2) + 1;
    for _ in 0..8 {
        let scale = 0.5 / (t as f64).sqrt();
        let atoms: Vec<Atom> = (0..2)
            .map(|_| Atom::new(0.5, (0..n).map(|_| random_symmetric(t, &mut rng) * scale).collect()))
            .collect();
        let y = moments_from_atoms(&atoms, 2 * k)?;
        let m = build_moment_matrix(&y, k)?;
        let eig = numeric::sym_eig(m.matrix())?;
        if eig.min() > 1e-6 * eig.max_abs() {
            return Ok(y);
        }
        t += 2;
    }
    Err(Error::Eigen("no positive definite center found".into()))
}

/// JSON form of a verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateFile {
    pub verdict: String,
    pub gram: Option<Vec<Vec<f64>>>,
    pub squares: Vec<String>,
    pub witness: Option<SequenceFile>,
    pub residuals: serde_json::Value,
}

impl Theta2Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Theta2Verdict::Member(_) => "member",
            Theta2Verdict::NotMember(_) => "not_member",
            Theta2Verdict::Unknown { .. } => "unknown",
        }
    }

    pub fn to_file(&self) -> CertificateFile {
        match self {
            Theta2Verdict::Member(c) => CertificateFile {
                verdict: self.label().into(),
                gram: Some(c.gram.row_iter().map(|r| r.iter().copied().collect()).collect()),
                squares: c.squares.iter().map(|g| g.to_string()).collect(),
                witness: None,
                residuals: json!({
                    "constraint": c.residual,
                    "min_eig": c.min_eig,
                    "sohs": sohs_residual(&c.f, &c.squares),
                    "basis": c.basis.iter().map(|w| render_word(w, c.f.n())).collect::<Vec<_>>(),
                }),
            },
            Theta2Verdict::NotMember(w) => CertificateFile {
                verdict: self.label().into(),
                gram: None,
                squares: Vec::new(),
                witness: Some(w.y.to_file()),
                residuals: json!({ "min_eig": w.min_eig, "riesz": w.value }),
            },
            Theta2Verdict::Unknown { residual, iterations } => CertificateFile {
                verdict: self.label().into(),
                gram: None,
                squares: Vec::new(),
                witness: None,
                residuals: json!({ "constraint": residual, "iterations": iterations }),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment::RANK_TOL;
    use crate::poly::parse_poly;
    use rand::Rng;

    const MOTZKIN_M3: &str = include_str!("../../../fixtures/motzkin_m3.json");
    const MOTZKIN: &str = "X*Y^4*X + Y*X^4*Y - 3*X*Y^2*X + 1";

    fn p(s: &str, n: usize) -> Polynomial {
        parse_poly(s, n).unwrap()
    }

    fn random_sohs(rng: &mut impl Rng, n: usize, k: usize, squares: usize) -> Polynomial {
        let basis = enumerate_words(n, k);
        let mut f = Polynomial::zero(n);
        for _ in 0..squares {
            let g = Polynomial::from_vector(n, &basis, &DVector::from_fn(basis.len(), |_, _| rng.random_range(-1.0..1.0)));
            f = &f + &(&g.involution() * &g);
        }
        f
    }

    #[test]
    fn constraint_examples() {
        let s = gram_constraints(&p("X^2", 1), 1).unwrap();
        assert_eq!(s.classes.len(), 3);
        assert_eq!(s.rhs.as_slice(), &[0.0, 0.0, 1.0]);
        let s = gram_constraints(&p("X*Y - Y*X", 2), 1).unwrap();
        assert!(s.rhs.iter().all(|v| *v == 0.0));
        let s = gram_constraints(&p(MOTZKIN, 2), 3).unwrap();
        let nonzero: BTreeMap<String, f64> = s
            .classes
            .iter()
            .zip(s.rhs.iter())
            .filter(|(_, v)| **v != 0.0)
            .map(|(c, v)| (render_word(c, 2), *v))
            .collect();
        let want: BTreeMap<String, f64> =
            [("1", 1.0), ("X^2*Y^2", -3.0), ("X^2*Y^4", 1.0), ("X^4*Y^2", 1.0)].iter().map(|(w, v)| (w.to_string(), *v)).collect();
        assert_eq!(nonzero, want);
        assert!(matches!(gram_constraints(&p("X^3", 1), 1), Err(Error::DegreeOverflow { .. })));
    }

    #[test]
    fn every_class_has_a_gram_entry() {
        let s = gram_constraints(&p("X*Y", 3), 2).unwrap();
        assert!(s.members.iter().all(|m| !m.is_empty()));
        let total: usize = s.members.iter().map(Vec::len).sum();
        assert_eq!(total, s.dim() * s.dim());
    }

    #[test]
    fn affine_projection_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_sohs(&mut rng, 2, 2, 2);
        let s = gram_constraints(&f, 2).unwrap();
        let g = random_symmetric(s.dim(), &mut rng);
        let pg = s.project_affine(&g);
        assert!(s.residual(&pg) < 1e-10);
        // g - P(g) is orthogonal to the constraint null space
        let h = s.project_affine(&random_symmetric(s.dim(), &mut rng)) - &pg;
        assert!((&g - &pg).dot(&h).abs() < 1e-9);
    }

    #[test]
    fn square_is_member() {
        match theta2_feasibility(&p("X^2", 1), 1, 1e-8, 5000, 0).unwrap() {
            Theta2Verdict::Member(c) => {
                assert!((c.gram[(1, 1)] - 1.0).abs() < 1e-8);
                assert!(c.gram[(0, 0)].abs() < 1e-8 && c.gram[(0, 1)].abs() < 1e-8);
                assert_eq!(c.squares.len(), 1);
                assert!(c.squares[0].approx_eq(&p("X", 1), 1e-8) || c.squares[0].approx_eq(&p("-X", 1), 1e-8));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn commutator_is_member_with_zero_gram() {
        match theta2_feasibility(&p("X*Y - Y*X", 2), 1, 1e-8, 5000, 0).unwrap() {
            Theta2Verdict::Member(c) => {
                assert!(c.gram.amax() < 1e-8);
                assert!(c.squares.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn motzkin_is_not_a_member() {
        let f = p(MOTZKIN, 2);
        match theta2_feasibility(&f, 3, 1e-8, 20000, 0).unwrap() {
            Theta2Verdict::NotMember(w) => {
                let m = build_moment_matrix(&w.y, 3).unwrap();
                assert!(m.psd_check(1e-8).unwrap().0);
                assert!(w.y.riesz(&f).unwrap() < 0.0);
                assert!((w.y.riesz(&f).unwrap() - w.value).abs() < 1e-12);
                assert_eq!(w.y.get(&Word::empty()).unwrap(), 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn witness_checker_accepts_the_known_witness() {
        let y = TracialSequence::from_json(MOTZKIN_M3).unwrap();
        let m = build_moment_matrix(&y, 3).unwrap();
        assert!(m.psd_check(1e-8).unwrap().0);
        assert!((y.riesz(&p(MOTZKIN, 2)).unwrap() + 5.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn witness_search_fails_on_squares() {
        assert!(dual_witness_search(&p("X^2", 1), 1, 1e-8, 2000, 0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_sohs(&mut rng, 2, 2, 3);
        assert!(dual_witness_search(&f, 2, 1e-8, 2000, 1).is_err());
    }

    #[test]
    fn random_sums_of_squares_are_certified() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for case in 0..12 {
            let k = 1 + case % 2;
            let f = random_sohs(&mut rng, 2, k, 1 + case % 3);
            match theta2_feasibility(&f, k, 1e-8, 5000, case as u64).unwrap() {
                Theta2Verdict::Member(c) => {
                    assert!(sohs_residual(&f, &c.squares) <= 1e-8);
                    assert!(c.squares.len() <= c.basis.len());
                    // members are trace-positive
                    for t in 1..=4 {
                        let mats: Vec<DMatrix<f64>> = (0..2).map(|_| random_symmetric(t, &mut rng)).collect();
                        assert!(f.evaluate_trace(&mats).unwrap() >= -1e-8);
                    }
                }
                other => panic!("case {case}: {other:?}"),
            }
        }
    }

    #[test]
    fn sums_of_squares_are_not_cyclically_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let f = random_sohs(&mut rng, 2, 2, 2);
            assert!(!f.cyclic_reduce().is_zero(1e-9));
        }
    }

    #[test]
    fn weak_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let f = random_sohs(&mut rng, 2, 2, 2);
        let Theta2Verdict::Member(c) = theta2_feasibility(&f, 2, 1e-8, 5000, 0).unwrap() else {
            panic!("expected member");
        };
        for _ in 0..10 {
            let atoms = vec![Atom::new(1.0, (0..2).map(|_| random_symmetric(3, &mut rng)).collect())];
            let y = moments_from_atoms(&atoms, 4).unwrap();
            let bound = c.basis.len().pow(2) as f64 * c.residual + c.min_eig.min(0.0).abs();
            assert!(y.riesz(&f).unwrap() >= -bound - 1e-12);
        }
    }

    #[test]
    fn extract_examples() {
        let mut gram = DMatrix::zeros(2, 2);
        gram[(1, 1)] = 1.0;
        let cert = GramCertificate {
            f: p("X^2", 1),
            k: 1,
            basis: enumerate_words(1, 1),
            gram: gram.clone(),
            residual: 0.0,
            min_eig: 0.0,
            squares: Vec::new(),
        };
        let sq = extract_sohs(&cert, RANK_TOL).unwrap();
        assert_eq!(sq.len(), 1);
        assert!((sq[0].coeff(&Word::letter(0)).abs() - 1.0).abs() < 1e-12);
        let zero = GramCertificate {
            f: Polynomial::zero(1),
            gram: DMatrix::zeros(2, 2),
            ..cert.clone()
        };
        assert!(extract_sohs(&zero, RANK_TOL).unwrap().is_empty());
        let wrong = GramCertificate { f: p("2*X^2", 1), ..cert };
        assert!(matches!(extract_sohs(&wrong, RANK_TOL), Err(Error::Residual { .. })));
    }

    #[test]
    fn certificate_json_shapes() {
        let v = theta2_feasibility(&p("X^2", 1), 1, 1e-8, 5000, 0).unwrap();
        let file = v.to_file();
        assert_eq!(file.verdict, "member");
        assert_eq!(file.gram.as_ref().unwrap().len(), 2);
        assert_eq!(file.squares.len(), 1);
        let text = serde_json::to_string(&file).unwrap();
        let back: CertificateFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.verdict, "member");
    }
}
