//! Non-commutative polynomials with real coefficients.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moment::TracialSequence;
use crate::words::{canon_cyclic, Word};

/// `Σ f_w w` over words in `n` letters; zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<Word, f64>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::monomial(n, Word::empty(), c)
    }

    pub fn monomial(n: usize, w: Word, c: f64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(w, c);
        p
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (Word, f64)>) -> Self {
        let mut p = Self::zero(n);
        for (w, c) in terms {
            p.add_term(w, c);
        }
        p
    }

    /// Reads coefficients against a word basis (e.g. a kernel vector).
    pub fn from_vector(n: usize, basis: &[Word], coeffs: &DVector<f64>) -> Self {
        Self::from_terms(n, basis.iter().cloned().zip(coeffs.iter().copied()))
    }

    pub fn add_term(&mut self, w: Word, c: f64) {
        debug_assert!(w.max_letter().is_none_or(|l| (l as usize) < self.n));
        match self.terms.entry(w) {
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if *e.get() == 0.0 {
                    e.remove();
                }
            }
            Entry::Vacant(e) => {
                if c != 0.0 {
                    e.insert(c);
                }
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Word::degree).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, f64)> {
        self.terms.iter().map(|(w, c)| (w, *c))
    }

    pub fn coeff(&self, w: &Word) -> f64 {
        self.terms.get(w).copied().unwrap_or(0.0)
    }

    /// Coefficient vector against `basis`; terms outside the basis are ignored.
    pub fn coefficient_vector(&self, basis: &[Word]) -> DVector<f64> {
        DVector::from_iterator(basis.len(), basis.iter().map(|w| self.coeff(w)))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_terms(self.n, self.terms().map(|(w, c)| (w.clone(), c * s)))
    }

    pub fn l1_norm(&self) -> f64 {
        self.terms.values().map(|c| c.abs()).sum()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// Drops coefficients with `|c| ≤ tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        Polynomial {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(w, c)| (w.clone(), *c))
                .collect(),
        }
    }

    /// Coefficient-wise comparison with absolute tolerance.
    pub fn approx_eq(&self, other: &Polynomial, tol: f64) -> bool {
        (self - other).max_abs_coeff() <= tol
    }

    /// `p*`: coefficients carried onto reversed words.
    pub fn involution(&self) -> Self {
        Self::from_terms(self.n, self.terms().map(|(w, c)| (w.reverse(), c)))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.approx_eq(&self.involution(), tol)
    }

    pub fn cyclic_reduce(&self) -> CyclicReduction {
        let mut classes = BTreeMap::new();
        for (w, c) in self.terms() {
            *classes.entry(canon_cyclic(w)).or_insert(0.0) += c;
        }
        classes.retain(|_, v| *v != 0.0);
        CyclicReduction { classes }
    }

    /// `p ∼cyc q` up to `tol` on class sums.
    pub fn cyclically_equivalent(&self, other: &Polynomial, tol: f64) -> bool {
        self.cyclic_reduce().approx_eq(&other.cyclic_reduce(), tol)
    }

    pub fn riesz(&self, y: &TracialSequence) -> Result<f64> {
        y.riesz(self)
    }

    /// Normalized trace of `p(A_1, …, A_n)`.
    pub fn evaluate_trace(&self, mats: &[DMatrix<f64>]) -> Result<f64> {
        let t = check_tuple(mats, self.n)?;
        if t == 0 {
            return Err(Error::Dimension("empty matrices".into()));
        }
        let mut total = 0.0;
        for (w, c) in self.terms() {
            total += c * word_matrix(w, mats, t).trace();
        }
        Ok(total / t as f64)
    }
}

/// Validates a tuple of `n` symmetric matrices of one common size; returns the size.
pub(crate) fn check_tuple(mats: &[DMatrix<f64>], n: usize) -> Result<usize> {
    if mats.len() != n {
        return Err(Error::Dimension(format!(
            "expected {n} matrices, got {}",
            mats.len()
        )));
    }
    let t = mats.first().map_or(0, |m| m.nrows());
    for m in mats {
        if m.nrows() != t || m.ncols() != t {
            return Err(Error::Dimension(format!(
                "matrices must all be {t}x{t}, found {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let defect = (m - m.transpose()).amax();
        if defect > 1e-9 * m.amax().max(1.0) {
            return Err(Error::NotSymmetric { defect });
        }
    }
    Ok(t)
}

/// `w(A)` as a plain matrix product.
pub(crate) fn word_matrix(w: &Word, mats: &[DMatrix<f64>], t: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::identity(t, t);
    for &l in w.letters() {
        acc *= &mats[l as usize];
    }
    acc
}

/// Class sums of a polynomial keyed by least rotation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CyclicReduction {
    pub classes: BTreeMap<Word, f64>,
}

impl CyclicReduction {
    pub fn get(&self, class: &Word) -> f64 {
        self.classes.get(class).copied().unwrap_or(0.0)
    }

    pub fn max_abs_diff(&self, other: &CyclicReduction) -> f64 {
        let mut m = 0.0f64;
        for (k, v) in &self.classes {
            m = m.max((v - other.get(k)).abs());
        }
        for (k, v) in &other.classes {
            m = m.max((v - self.get(k)).abs());
        }
        m
    }

    pub fn approx_eq(&self, other: &CyclicReduction, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.classes.values().all(|v| v.abs() <= tol)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        out.n = out.n.max(rhs.n);
        for (w, c) in rhs.terms() {
            out.add_term(w.clone(), c);
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero(self.n.max(rhs.n));
        for (a, ca) in self.terms() {
            for (b, cb) in rhs.terms() {
                out.add_term(a.concat(b), ca * cb);
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Text syntax

/// Renders a word: `X*Y^4*X` for up to three letters, `x1^2*x4` otherwise,
/// and `1` for the empty word.
pub fn render_word(w: &Word, n: usize) -> String {
    if w.is_empty() {
        return "1".to_string();
    }
    let letters = w.letters();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < letters.len() {
        let l = letters[i];
        let mut run = 1;
        while i + run < letters.len() && letters[i + run] == l {
            run += 1;
        }
        let name = letter_name(l, n);
        parts.push(if run == 1 {
            name
        } else {
            format!("{name}^{run}")
        });
        i += run;
    }
    parts.join("*")
}

fn letter_name(l: u8, n: usize) -> String {
    if n <= 3 {
        ["X", "Y", "Z"][l as usize].to_string()
    } else {
        format!("x{}", l as usize + 1)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (w, c)) in self.terms.iter().rev().enumerate() {
            let (sign, mag) = if *c < 0.0 { ("-", -c) } else { ("+", *c) };
            match (i, sign) {
                (0, "-") => write!(f, "-")?,
                (0, _) => {}
                _ => write!(f, " {sign} ")?,
            }
            if w.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{}", render_word(w, self.n))?;
            } else {
                write!(f, "{mag}*{}", render_word(w, self.n))?;
            }
        }
        Ok(())
    }
}

pub fn parse_poly(text: &str, n: usize) -> Result<Polynomial> {
    Parser::new(text, n).poly()
}

/// Parses a single word (a coefficient-free monomial); `1` and the empty
/// string denote the empty word.
pub fn parse_word(text: &str, n: usize) -> Result<Word> {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed == "1" {
        return Ok(Word::empty());
    }
    let mut p = Parser::new(text, n);
    p.skip_ws();
    let w = p.factors(true)?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected trailing input in word"));
    }
    Ok(w)
}

/// Highest variable index used in `text`, for inferring the variable count.
pub fn infer_variable_count(text: &str) -> usize {
    let bytes = text.as_bytes();
    let mut n = 1;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'y' | b'Y' => n = n.max(2),
            b'z' | b'Z' => n = n.max(3),
            b'x' | b'X' => {
                let start = i + 1;
                let mut end = start;
                while end < bytes.len() && bytes[end].is_ascii_digit() {
                    end += 1;
                }
                if end > start {
                    if let Ok(v) = text[start..end].parse::<usize>() {
                        n = n.max(v);
                    }
                }
                i = end;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    n
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
    n: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, n: usize) -> Self {
        Parser {
            src: text.as_bytes(),
            text,
            pos: 0,
            n,
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn poly(&mut self) -> Result<Polynomial> {
        let mut p = Polynomial::zero(self.n);
        let mut sign = 1.0;
        match self.peek() {
            None => return Err(self.err("empty polynomial")),
            Some(b'-') => {
                sign = -1.0;
                self.pos += 1;
            }
            Some(b'+') => self.pos += 1,
            _ => {}
        }
        loop {
            let (c, w) = self.term()?;
            p.add_term(w, sign * c);
            match self.peek() {
                None => return Ok(p),
                Some(b'+') => sign = 1.0,
                Some(b'-') => sign = -1.0,
                Some(_) => return Err(self.err("expected '+' or '-'")),
            }
            self.pos += 1;
        }
    }

    fn term(&mut self) -> Result<(f64, Word)> {
        let coeff = match self.peek() {
            Some(b) if b.is_ascii_digit() || b == b'.' => Some(self.number()?),
            _ => None,
        };
        let w = self.factors(coeff.is_none())?;
        Ok((coeff.unwrap_or(1.0), w))
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        self.text[start..i].parse::<f64>().map_err(|_| {
            self.pos = start;
            self.err("malformed number")
        }).inspect(|_v| {
            self.pos = i;
        })
    }

    /// `('*'? factor)*`; at least one factor when `required`.
    fn factors(&mut self, required: bool) -> Result<Word> {
        let mut letters = Vec::new();
        let mut first = true;
        loop {
            let save = self.pos;
            let star = self.peek() == Some(b'*');
            if star && first && required {
                return Err(self.err("expected a number or variable"));
            }
            if star {
                self.pos += 1;
            }
            match self.peek() {
                Some(b'x' | b'X' | b'y' | b'Y' | b'z' | b'Z') => {
                    let (l, rep) = self.factor()?;
                    letters.extend(std::iter::repeat_n(l, rep));
                    first = false;
                }
                _ => {
                    if star {
                        return Err(self.err("expected a variable after '*'"));
                    }
                    self.pos = save;
                    if first && required {
                        return Err(self.err("expected a number or variable"));
                    }
                    return Ok(Word::new(letters));
                }
            }
        }
    }

    fn factor(&mut self) -> Result<(u8, usize)> {
        let start = self.pos;
        let c = self.src[self.pos];
        self.pos += 1;
        let index = match c {
            b'x' | b'X' => {
                let ds = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if ds == self.pos {
                    1
                } else {
                    let v: usize = self.text[ds..self.pos].parse().map_err(|_| {
                        Error::Parse {
                            pos: ds,
                            msg: "variable index too large".into(),
                        }
                    })?;
                    if v == 0 {
                        return Err(Error::Parse {
                            pos: start,
                            msg: "variable indices start at 1".into(),
                        });
                    }
                    v
                }
            }
            b'y' | b'Y' => 2,
            _ => 3,
        };
        if index > self.n || index > 256 {
            return Err(Error::VariableOutOfRange { index, n: self.n });
        }
        let mut rep = 1;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let ds = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if ds == self.pos {
                return Err(self.err("expected an exponent after '^'"));
            }
            rep = self.text[ds..self.pos]
                .parse()
                .map_err(|_| self.err("exponent too large"))?;
        }
        Ok(((index - 1) as u8, rep))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::random_symmetric;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const MOTZKIN: &str = "X*Y^4*X + Y*X^4*Y - 3*X*Y^2*X + 1";

    fn w(s: &str) -> Word {
        parse_word(s, 3).unwrap()
    }

    #[test]
    fn parses_motzkin() {
        let p = parse_poly(MOTZKIN, 2).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.coeff(&w("XYYYYX")), 1.0);
        assert_eq!(p.coeff(&w("YXXXXY")), 1.0);
        assert_eq!(p.coeff(&w("XYYX")), -3.0);
        assert_eq!(p.coeff(&Word::empty()), 1.0);
        assert_eq!(p.degree(), 6);
    }

    #[test]
    fn parses_constants_and_general_syntax() {
        let one = parse_poly("1", 1).unwrap();
        assert_eq!(one, Polynomial::constant(1, 1.0));
        let c = parse_poly("x1*x2 - x2*x1", 2).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.coeff(&Word::new(vec![1, 0])), -1.0);
        let j = parse_poly("-2.5 XY + 3e-1 yx^2 + x2", 2).unwrap();
        assert_eq!(j.coeff(&w("XY")), -2.5);
        assert_eq!(j.coeff(&w("YXX")), 0.3);
        assert_eq!(j.coeff(&w("Y")), 1.0);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_poly("X*Y", 1), Err(Error::VariableOutOfRange { index: 2, n: 1 })));
        assert!(matches!(parse_poly("x5", 4), Err(Error::VariableOutOfRange { index: 5, n: 4 })));
        match parse_poly("X + * Y", 2) {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
        assert!(parse_poly("", 2).is_err());
        assert!(parse_poly("X^", 2).is_err());
        assert!(parse_poly("2 3", 2).is_err());
        assert!(parse_poly("x0", 2).is_err());
    }

    #[test]
    fn renders_and_round_trips() {
        let p = parse_poly(MOTZKIN, 2).unwrap();
        let text = p.to_string();
        assert_eq!(parse_poly(&text, 2).unwrap(), p);
        let q = parse_poly("0.5*x1^2*x4 - x3", 4).unwrap();
        assert!(q.to_string().contains("x1^2*x4"));
        assert_eq!(parse_poly(&q.to_string(), 4).unwrap(), q);
        assert_eq!(Polynomial::zero(2).to_string(), "0");
    }

    #[test]
    fn involution_examples() {
        let p = parse_poly("x1*x2^2 - x2*x1", 2).unwrap();
        let q = parse_poly("x2^2*x1 - x1*x2", 2).unwrap();
        assert_eq!(p.involution(), q);
        let s = parse_poly("X*Y + Y*X", 2).unwrap();
        assert_eq!(s.involution(), s);
        let pal = parse_poly("3*X*Y*X", 2).unwrap();
        assert_eq!(pal.involution(), pal);
    }

    #[test]
    fn cyclic_reduction_examples() {
        assert!(parse_poly("X*Y - Y*X", 2).unwrap().cyclic_reduce().classes.is_empty());
        let m = parse_poly(MOTZKIN, 2).unwrap().cyclic_reduce();
        let expect: BTreeMap<Word, f64> = [
            (w("XXYYYY"), 1.0),
            (w("XXXXYY"), 1.0),
            (w("XXYY"), -3.0),
            (Word::empty(), 1.0),
        ]
        .into_iter()
        .collect();
        assert_eq!(m.classes, expect);
        assert_eq!(parse_poly("1", 1).unwrap().cyclic_reduce().classes.len(), 1);
    }

    #[test]
    fn trace_examples() {
        let x2 = parse_poly("X^2", 1).unwrap();
        let a = DMatrix::from_element(1, 1, -1.0);
        assert_eq!(x2.evaluate_trace(&[a]).unwrap(), 1.0);
        let m = parse_poly(MOTZKIN, 2).unwrap();
        let z = DMatrix::zeros(1, 1);
        assert_eq!(m.evaluate_trace(&[z.clone(), z]).unwrap(), 1.0);
    }

    #[test]
    fn trace_input_validation() {
        let p = parse_poly("X*Y", 2).unwrap();
        let a = DMatrix::identity(2, 2);
        assert!(matches!(p.evaluate_trace(std::slice::from_ref(&a)), Err(Error::Dimension(_))));
        assert!(matches!(
            p.evaluate_trace(&[a.clone(), DMatrix::identity(3, 3)]),
            Err(Error::Dimension(_))
        ));
        let skew = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(p.evaluate_trace(&[a, skew]), Err(Error::NotSymmetric { .. })));
    }

    fn random_poly(rng: &mut impl Rng, n: usize, max_deg: usize, terms: usize) -> Polynomial {
        let mut p = Polynomial::zero(n);
        for _ in 0..terms {
            let d = rng.random_range(0..=max_deg);
            let letters = (0..d).map(|_| rng.random_range(0..n as u8)).collect();
            p.add_term(Word::new(letters), rng.random_range(-2.0..2.0));
        }
        p
    }

    // unnormalized trace from explicit nested loops, divided by t
    fn dense_trace(p: &Polynomial, mats: &[DMatrix<f64>]) -> f64 {
        let t = mats[0].nrows();
        let mut total = 0.0;
        for (w, c) in p.terms() {
            let mut cur: Vec<Vec<f64>> = (0..t).map(|i| (0..t).map(|j| (i == j) as u8 as f64).collect()).collect();
            for &l in w.letters() {
                let a = &mats[l as usize];
                let mut next = vec![vec![0.0; t]; t];
                for i in 0..t {
                    for j in 0..t {
                        for m in 0..t {
                            next[i][j] += cur[i][m] * a[(m, j)];
                        }
                    }
                }
                cur = next;
            }
            total += c * (0..t).map(|i| cur[i][i]).sum::<f64>();
        }
        total / t as f64
    }

    #[test]
    fn trace_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let p = random_poly(&mut rng, 2, 5, 6);
            let mats = vec![random_symmetric(3, &mut rng), random_symmetric(3, &mut rng)];
            let got = p.evaluate_trace(&mats).unwrap();
            let want = dense_trace(&p, &mats);
            assert!((got - want).abs() < 1e-10 * want.abs().max(1.0));
            // Tr p(A) = Tr p*(A)
            let star = p.involution().evaluate_trace(&mats).unwrap();
            assert!((got - star).abs() < 1e-9 * got.abs().max(1.0));
        }
    }

    #[test]
    fn cyclically_equivalent_polynomials_share_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let f = random_poly(&mut rng, 2, 4, 5);
            let a = random_poly(&mut rng, 2, 2, 3);
            let b = random_poly(&mut rng, 2, 2, 3);
            let g = &f + &(&(&a * &b) - &(&b * &a));
            assert!(f.cyclically_equivalent(&g, 1e-12));
            let t = rng.random_range(1..4);
            let mats = vec![random_symmetric(t, &mut rng), random_symmetric(t, &mut rng)];
            let tf = f.evaluate_trace(&mats).unwrap();
            let tg = g.evaluate_trace(&mats).unwrap();
            assert!((tf - tg).abs() < 1e-9 * tf.abs().max(1.0));
        }
    }

    fn poly_strategy() -> impl Strategy<Value = Polynomial> {
        prop::collection::vec((prop::collection::vec(0u8..2, 0..5), -5i32..6), 0..6).prop_map(|ts| {
            Polynomial::from_terms(2, ts.into_iter().map(|(l, c)| (Word::new(l), c as f64 * 0.25)))
        })
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(p in poly_strategy()) {
            if !p.is_zero() {
                prop_assert_eq!(parse_poly(&p.to_string(), 2).unwrap(), p);
            }
        }

        #[test]
        fn involution_is_anti_automorphism(p in poly_strategy(), q in poly_strategy()) {
            prop_assert_eq!(p.involution().involution(), p.clone());
            prop_assert_eq!(p.involution().l1_norm(), p.l1_norm());
            let lhs = (&p * &q).involution();
            let rhs = &q.involution() * &p.involution();
            prop_assert!(lhs.approx_eq(&rhs, 1e-12));
        }

        #[test]
        fn commutators_reduce_to_zero(p in poly_strategy(), q in poly_strategy()) {
            let c = &(&p * &q) - &(&q * &p);
            prop_assert!(c.cyclic_reduce().is_zero(1e-12));
        }
    }
}
