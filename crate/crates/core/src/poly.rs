//! Sparse homogeneous polynomials in the projective coordinates.
//!
//! Terms are kept sorted in descending graded-lexicographic order, so the
//! first term of a nonzero polynomial is its leading (pivot) monomial.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Exponent = Vec<u32>;

/// Graded-lexicographic comparison; `Greater` means `a` comes first.
pub fn grlex_cmp(a: &[u32], b: &[u32]) -> Ordering {
    let da: u32 = a.iter().sum();
    let db: u32 = b.iter().sum();
    da.cmp(&db).then_with(|| a.cmp(b))
}

/// `a` divides `b` as monomials.
pub fn divides(a: &[u32], b: &[u32]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// All exponent vectors of total degree `degree` in `nvars` variables,
/// in descending graded-lex order.
pub fn monomials(nvars: usize, degree: u32) -> Vec<Exponent> {
    fn rec(nvars: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Exponent>) {
        if prefix.len() + 1 == nvars {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            rec(nvars, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if nvars == 0 {
        return out;
    }
    rec(nvars, degree, &mut Vec::with_capacity(nvars), &mut out);
    out
}

/// One entry of the JSON coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub exponent: Vec<u32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// A polynomial given either as text or as a coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolynomialSpec {
    Text {
        polynomial: String,
        #[serde(default)]
        variables: Option<usize>,
    },
    Table {
        variables: usize,
        coefficients: Vec<CoefficientEntry>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: Vec<(Exponent, Complex64)>,
}

impl Polynomial {
    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Exponent, Complex64)>) -> Result<Self> {
        let mut map: BTreeMap<Exponent, Complex64> = BTreeMap::new();
        for (e, c) in terms {
            if e.len() != nvars {
                return Err(Error::Dimension { expected: nvars, got: e.len() });
            }
            *map.entry(e).or_default() += c;
        }
        let mut terms: Vec<_> = map.into_iter().filter(|(_, c)| *c != Complex64::new(0.0, 0.0)).collect();
        terms.sort_by(|a, b| grlex_cmp(&b.0, &a.0));
        Ok(Self { nvars, terms })
    }

    pub fn from_table(nvars: usize, table: &[CoefficientEntry]) -> Result<Self> {
        Self::from_terms(nvars, table.iter().map(|t| (t.exponent.clone(), Complex64::new(t.re, t.im))))
    }

    pub fn from_spec(spec: &PolynomialSpec) -> Result<Self> {
        match spec {
            PolynomialSpec::Text { polynomial, variables } => Self::parse(polynomial, *variables),
            PolynomialSpec::Table { variables, coefficients } => Self::from_table(*variables, coefficients),
        }
    }

    pub fn to_spec(&self) -> PolynomialSpec {
        PolynomialSpec::Table { variables: self.nvars, coefficients: self.to_table() }
    }

    pub fn to_table(&self) -> Vec<CoefficientEntry> {
        self.terms
            .iter()
            .map(|(e, c)| CoefficientEntry { exponent: e.clone(), re: c.re, im: c.im })
            .collect()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[(Exponent, Complex64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Common degree of all terms, or an error naming two distinct degrees.
    pub fn homogeneous_degree(&self) -> Result<u32> {
        let mut degs = self.terms.iter().map(|(e, _)| e.iter().sum::<u32>());
        let first = degs.next().ok_or(Error::ZeroPolynomial)?;
        for d in degs {
            if d != first {
                return Err(Error::NotHomogeneous(first, d));
            }
        }
        Ok(first)
    }

    pub fn leading(&self) -> Option<&(Exponent, Complex64)> {
        self.terms.first()
    }

    /// Sum of coefficient moduli; bounds |F| on the unit polydisc.
    pub fn l1_norm(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.norm()).sum()
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        self.terms.iter().map(|(e, c)| c * monomial_value(e, z)).sum()
    }

    pub fn derivative(&self, var: usize) -> Polynomial {
        let terms = self.terms.iter().filter(|(e, _)| e[var] > 0).map(|(e, c)| {
            let mut e2 = e.clone();
            e2[var] -= 1;
            (e2, c * e[var] as f64)
        });
        Polynomial::from_terms(self.nvars, terms).expect("derivative keeps arity")
    }

    /// Coefficients (lowest degree first) of t ↦ F(p + t·q).
    pub fn restrict_to_line(&self, p: &[Complex64], q: &[Complex64]) -> Vec<Complex64> {
        let d = self.terms.iter().map(|(e, _)| e.iter().sum::<u32>()).max().unwrap_or(0) as usize;
        let mut out = vec![Complex64::new(0.0, 0.0); d + 1];
        for (e, c) in &self.terms {
            let mut acc = vec![*c];
            for (i, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
                    for (j, a) in acc.iter().enumerate() {
                        next[j] += a * p[i];
                        next[j + 1] += a * q[i];
                    }
                    acc = next;
                }
            }
            for (j, a) in acc.into_iter().enumerate() {
                out[j] += a;
            }
        }
        out
    }

    /// Parses a textual polynomial. Variables are `x y z w` (indices 0..3)
    /// or indexed `x0 x1 …`; `nvars` overrides the arity inferred from the
    /// highest variable index used.
    pub fn parse(text: &str, nvars: Option<usize>) -> Result<Self> {
        let mut p = Parser { chars: text.char_indices().collect(), pos: 0, max_var: None, style: None };
        let sparse = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.err("unexpected trailing input"));
        }
        let inferred = p.max_var.map(|v| v + 1).unwrap_or(1);
        let n = nvars.unwrap_or(inferred);
        if n < inferred {
            return Err(Error::Parse { pos: 0, msg: format!("polynomial uses {inferred} variables but arity {n} was requested") });
        }
        Polynomial::from_terms(
            n,
            sparse.into_iter().map(|(e, c)| {
                let mut full = vec![0u32; n];
                for (i, k) in e.into_iter().enumerate() {
                    full[i] = k;
                }
                (full, c)
            }),
        )
    }
}

impl std::fmt::Display for Polynomial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if c.im == 0.0 {
                write!(f, "{}", c.re)?;
            } else {
                write!(f, "({}{:+}i)", c.re, c.im)?;
            }
            for (v, &k) in e.iter().enumerate() {
                if k > 0 {
                    write!(f, "*x{v}^{k}")?;
                }
            }
        }
        Ok(())
    }
}

pub fn monomial_value(e: &[u32], z: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for (&k, zi) in e.iter().zip(z) {
        if k > 0 {
            acc *= zi.powu(k);
        }
    }
    acc
}

// Parser: expressions over sparse polynomials with +, -, *, ^, parentheses.

type Sparse = BTreeMap<Vec<u32>, Complex64>;

fn sp_const(c: Complex64) -> Sparse {
    let mut m = Sparse::new();
    m.insert(Vec::new(), c);
    m
}

fn sp_add(mut a: Sparse, b: Sparse, sign: f64) -> Sparse {
    for (e, c) in b {
        *a.entry(e).or_default() += c * sign;
    }
    a.retain(|_, c| *c != Complex64::new(0.0, 0.0));
    a
}

fn sp_mul(a: &Sparse, b: &Sparse) -> Sparse {
    let mut out = Sparse::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let n = ea.len().max(eb.len());
            let e: Vec<u32> = (0..n).map(|i| ea.get(i).copied().unwrap_or(0) + eb.get(i).copied().unwrap_or(0)).collect();
            let e = trim(e);
            *out.entry(e).or_default() += ca * cb;
        }
    }
    out.retain(|_, c| *c != Complex64::new(0.0, 0.0));
    out
}

fn trim(mut e: Vec<u32>) -> Vec<u32> {
    while e.last() == Some(&0) {
        e.pop();
    }
    e
}

#[derive(Clone, Copy, PartialEq)]
enum VarStyle {
    Letters,
    Indexed,
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
    max_var: Option<usize>,
    style: Option<VarStyle>,
}

const SUPERSCRIPTS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];

impl Parser {
    fn err(&self, msg: &str) -> Error {
        let pos = self.chars.get(self.pos).map(|c| c.0).unwrap_or_else(|| self.chars.last().map(|c| c.0 + 1).unwrap_or(0));
        Error::Parse { pos, msg: msg.to_string() }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn expr(&mut self) -> Result<Sparse> {
        self.skip_ws();
        let mut sign = 1.0;
        if let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            if c == '-' {
                sign = -1.0;
            }
        }
        let mut acc = sp_add(Sparse::new(), self.term()?, sign);
        loop {
            self.skip_ws();
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    let t = self.term()?;
                    acc = sp_add(acc, t, 1.0);
                }
                Some('-') => {
                    self.pos += 1;
                    let t = self.term()?;
                    acc = sp_add(acc, t, -1.0);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Sparse> {
        let mut acc = self.power()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    let f = self.power()?;
                    acc = sp_mul(&acc, &f);
                }
                Some(c) if c == '(' || c.is_ascii_alphanumeric() || c == '.' => {
                    let f = self.power()?;
                    acc = sp_mul(&acc, &f);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn power(&mut self) -> Result<Sparse> {
        let base = self.atom()?;
        let exp = self.exponent()?;
        match exp {
            None => Ok(base),
            Some(k) => {
                let mut acc = sp_const(Complex64::new(1.0, 0.0));
                for _ in 0..k {
                    acc = sp_mul(&acc, &base);
                }
                Ok(acc)
            }
        }
    }

    fn exponent(&mut self) -> Result<Option<u32>> {
        self.skip_ws();
        if self.peek() == Some('^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected integer exponent after '^'"));
            }
            let s: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
            return s.parse().map(Some).map_err(|_| self.err("exponent out of range"));
        }
        let mut k: Option<u32> = None;
        while let Some(d) = self.peek().and_then(|c| SUPERSCRIPTS.iter().position(|&s| s == c)) {
            k = Some(k.unwrap_or(0) * 10 + d as u32);
            self.pos += 1;
        }
        Ok(k)
    }

    fn atom(&mut self) -> Result<Sparse> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some('i') => {
                self.pos += 1;
                Ok(sp_const(Complex64::new(0.0, 1.0)))
            }
            Some(c) if c.is_ascii_alphabetic() => self.variable(),
            _ => Err(self.err("expected a number, variable or '('")),
        }
    }

    fn number(&mut self) -> Result<Sparse> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let s: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
        let v: f64 = s.parse().map_err(|_| Error::Parse { pos: self.chars[start].0, msg: format!("bad number '{s}'") })?;
        if self.peek() == Some('i') {
            self.pos += 1;
            return Ok(sp_const(Complex64::new(0.0, v)));
        }
        Ok(sp_const(Complex64::new(v, 0.0)))
    }

    fn variable(&mut self) -> Result<Sparse> {
        let c = self.peek().expect("checked by caller");
        let at = self.pos;
        self.pos += 1;
        let start = self.pos;
        while matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
            self.pos += 1;
        }
        let (idx, style) = if start != self.pos {
            if c != 'x' && c != 'z' {
                self.pos = at;
                return Err(self.err("indexed variables must be written x0, x1, … or z0, z1, …"));
            }
            let s: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
            (s.parse::<usize>().map_err(|_| self.err("variable index out of range"))?, VarStyle::Indexed)
        } else {
            let idx = match c {
                'x' => 0,
                'y' => 1,
                'z' => 2,
                'w' => 3,
                _ => {
                    self.pos = at;
                    return Err(self.err("unknown variable (use x, y, z, w or x0, x1, …)"));
                }
            };
            (idx, VarStyle::Letters)
        };
        match self.style {
            Some(s) if s != style => {
                self.pos = at;
                return Err(self.err("cannot mix lettered and indexed variables"));
            }
            _ => self.style = Some(style),
        }
        self.max_var = Some(self.max_var.map_or(idx, |m| m.max(idx)));
        let mut e = vec![0u32; idx + 1];
        e[idx] = 1;
        let mut m = Sparse::new();
        m.insert(e, Complex64::new(1.0, 0.0));
        Ok(m)
    }
}
