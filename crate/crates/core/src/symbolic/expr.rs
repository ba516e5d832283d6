//! Canonical scalar expressions.
//!
//! An [`Expr`] is always kept in normal form: a finite sum of rational
//! coefficients times monomials over generators. Generators are coordinate
//! symbols, transcendental atoms whose arguments are themselves normalized,
//! and denominators (primitive multi-term sums carried with a negative
//! exponent). Two expressions built from semantically equal polynomial or
//! rational input normalize to structurally equal values.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::SymbolicError;

pub type Rational = BigRational;

/// Coordinate name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(name: &str) -> Self {
        Symbol(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Symbol {
    fn from(s: &str) -> Self {
        Symbol::new(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AtomKind {
    Exp,
    Log,
    /// `psi0(t) = e^{-1/t^2} / (1 + e^{-1/t^2})`, extended by 0 at `t = 0`.
    Psi0,
    /// `flatexp(u) = e^{-1/u}` for `u > 0`, and 0 for `u <= 0`.
    FlatExp,
}

impl AtomKind {
    pub fn name(self) -> &'static str {
        match self {
            AtomKind::Exp => "exp",
            AtomKind::Log => "log",
            AtomKind::Psi0 => "psi0",
            AtomKind::FlatExp => "flatexp",
        }
    }

    /// Atoms whose value and all derivatives vanish together.
    pub fn is_flat(self) -> bool {
        matches!(self, AtomKind::Psi0 | AtomKind::FlatExp)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Gen {
    Var(Symbol),
    Atom(AtomKind, Arc<Expr>),
    /// A primitive sum `P`; only ever appears with a negative exponent.
    Denom(Arc<Expr>),
}

impl Gen {
    fn is_exp(&self) -> bool {
        matches!(self, Gen::Atom(AtomKind::Exp, _))
    }

    fn is_flat(&self) -> bool {
        matches!(self, Gen::Atom(k, _) if k.is_flat())
    }
}

/// Product of generator powers, sorted by generator, no zero exponents.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<(Gen, i32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    fn single(g: Gen, e: i32) -> Self {
        if e == 0 {
            Monomial::one()
        } else {
            Monomial(vec![(g, e)])
        }
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factors(&self) -> &[(Gen, i32)] {
        &self.0
    }

    pub fn exponent(&self, g: &Gen) -> i32 {
        self.0
            .binary_search_by(|(h, _)| h.cmp(g))
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    /// Exponent-wise sum without atom merging.
    fn mul_raw(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() || j < other.0.len() {
            let ord = match (self.0.get(i), other.0.get(j)) {
                (Some(a), Some(b)) => a.0.cmp(&b.0),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => unreachable!(),
            };
            match ord {
                Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    let e = self.0[i].1 + other.0[j].1;
                    if e != 0 {
                        out.push((self.0[i].0.clone(), e));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        Monomial(out)
    }

    fn scale_raw(&self, k: i32) -> Monomial {
        if k == 0 {
            return Monomial::one();
        }
        Monomial(self.0.iter().map(|(g, e)| (g.clone(), e * k)).collect())
    }

    fn with_exponent(&self, g: &Gen, e: i32) -> Monomial {
        let mut v: Vec<(Gen, i32)> = self.0.iter().filter(|(h, _)| h != g).cloned().collect();
        if e != 0 {
            let pos = v.partition_point(|(h, _)| h < g);
            v.insert(pos, (g.clone(), e));
        }
        Monomial(v)
    }

    /// `self / other` when every exponent of `other` is dominated.
    fn div_exact(&self, other: &Monomial) -> Option<Monomial> {
        let q = self.mul_raw(&other.scale_raw(-1));
        if q.0.iter().all(|(_, e)| *e > 0) {
            Some(q)
        } else {
            None
        }
    }

    /// Collapse exponential atoms: `exp(a)^i * exp(b)^j = exp(i a + j b)`.
    /// Returns the monomial without exponentials and the merged argument.
    fn split_exps(self) -> (Monomial, Option<Expr>) {
        if !self.0.iter().any(|(g, _)| g.is_exp()) {
            return (self, None);
        }
        let mut arg = Expr::zero();
        let mut rest = Vec::with_capacity(self.0.len());
        for (g, e) in self.0 {
            match g {
                Gen::Atom(AtomKind::Exp, a) => arg = &arg + &(&*a * &Expr::int(e as i64)),
                other => rest.push((other, e)),
            }
        }
        (Monomial(rest), Some(arg))
    }

    fn has_denom(&self) -> bool {
        self.0.iter().any(|(g, _)| matches!(g, Gen::Denom(_)))
    }
}

/// Lexicographic monomial order driven by the generator order.
fn lex_cmp(a: &Monomial, b: &Monomial) -> Ordering {
    let (mut i, mut j) = (0, 0);
    loop {
        match (a.0.get(i), b.0.get(j)) {
            (None, None) => return Ordering::Equal,
            (Some((_, ea)), None) => return ea.cmp(&0),
            (None, Some((_, eb))) => return 0.cmp(eb),
            (Some((ga, ea)), Some((gb, eb))) => match ga.cmp(gb) {
                Ordering::Less => return ea.cmp(&0),
                Ordering::Greater => return 0.cmp(eb),
                Ordering::Equal => {
                    if ea != eb {
                        return ea.cmp(eb);
                    }
                    i += 1;
                    j += 1;
                }
            },
        }
    }
}

type RawPoly = BTreeMap<Monomial, Rational>;

fn raw_add_term(p: &mut RawPoly, m: Monomial, c: Rational) {
    if c.is_zero() {
        return;
    }
    match p.entry(m) {
        std::collections::btree_map::Entry::Vacant(v) => {
            v.insert(c);
        }
        std::collections::btree_map::Entry::Occupied(mut o) => {
            let s = o.get() + c;
            if s.is_zero() {
                o.remove();
            } else {
                *o.get_mut() = s;
            }
        }
    }
}

fn raw_leading(p: &RawPoly) -> Option<(Monomial, Rational)> {
    p.iter()
        .max_by(|a, b| lex_cmp(a.0, b.0))
        .map(|(m, c)| (m.clone(), c.clone()))
}

/// Single-divisor division in the polynomial ring. `divisor` must have
/// non-negative exponents and no exponential atoms.
fn raw_divrem(dividend: &RawPoly, divisor: &RawPoly) -> (RawPoly, RawPoly) {
    let mut shift: BTreeMap<Gen, i32> = BTreeMap::new();
    for m in dividend.keys() {
        for (g, e) in &m.0 {
            if *e < 0 {
                let s = shift.entry(g.clone()).or_insert(0);
                *s = (*s).max(-e);
            }
        }
    }
    let shift = Monomial(shift.into_iter().collect());
    let unshift = shift.scale_raw(-1);
    let mut rest: RawPoly = dividend
        .iter()
        .map(|(m, c)| (m.mul_raw(&shift), c.clone()))
        .collect();
    let (lm_d, lc_d) = raw_leading(divisor).expect("nonzero divisor");
    let mut quo = RawPoly::new();
    let mut rem = RawPoly::new();
    while let Some((lm, lc)) = raw_leading(&rest) {
        match lm.div_exact(&lm_d).or_else(|| (lm == lm_d).then(Monomial::one)) {
            Some(t) => {
                let k = &lc / &lc_d;
                for (m, c) in divisor {
                    raw_add_term(&mut rest, t.mul_raw(m), -(c * &k));
                }
                raw_add_term(&mut quo, t, k);
            }
            None => {
                rest.remove(&lm);
                raw_add_term(&mut rem, lm, lc);
            }
        }
    }
    let back = |p: RawPoly| -> RawPoly { p.into_iter().map(|(m, c)| (m.mul_raw(&unshift), c)).collect() };
    (back(quo), back(rem))
}

/// Exact symbolic scalar field in canonical sum-of-monomials form.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Expr {
    terms: BTreeMap<Monomial, Rational>,
}

impl Expr {
    pub fn zero() -> Self {
        Expr::default()
    }

    pub fn one() -> Self {
        Expr::constant(Rational::one())
    }

    pub fn int(n: i64) -> Self {
        Expr::constant(Rational::from_integer(BigInt::from(n)))
    }

    pub fn ratio(p: i64, q: i64) -> Self {
        Expr::constant(Rational::new(BigInt::from(p), BigInt::from(q)))
    }

    pub fn constant(c: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Monomial::one(), c);
        }
        Expr { terms }
    }

    pub fn var(name: &str) -> Self {
        Expr::symbol(Symbol::new(name))
    }

    pub fn symbol(s: Symbol) -> Self {
        Expr::from_monomial(Monomial::single(Gen::Var(s), 1), Rational::one())
    }

    fn from_monomial(m: Monomial, c: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        Expr { terms }
    }

    fn atom(kind: AtomKind, arg: Expr) -> Self {
        Expr::from_monomial(Monomial::single(Gen::Atom(kind, Arc::new(arg)), 1), Rational::one())
    }

    pub fn exp(u: &Expr) -> Self {
        if u.is_zero() {
            return Expr::one();
        }
        Expr::atom(AtomKind::Exp, u.clone())
    }

    pub fn log(u: &Expr) -> Self {
        if u.is_one() {
            return Expr::zero();
        }
        if let Some((m, c)) = u.single_term() {
            if c.is_one() && m.0.len() == 1 {
                if let (Gen::Atom(AtomKind::Exp, a), 1) = &m.0[0] {
                    return (**a).clone();
                }
            }
        }
        Expr::atom(AtomKind::Log, u.clone())
    }

    /// The even flat atom; the argument sign is canonicalized.
    pub fn psi0(u: &Expr) -> Self {
        if u.is_zero() {
            return Expr::zero();
        }
        let arg = match u.leading_coefficient() {
            Some(c) if c.is_negative() => -u,
            _ => u.clone(),
        };
        Expr::atom(AtomKind::Psi0, arg)
    }

    pub fn flatexp(u: &Expr) -> Self {
        if let Some(c) = u.as_constant() {
            if !c.is_positive() {
                return Expr::zero();
            }
        }
        Expr::atom(AtomKind::FlatExp, u.clone())
    }

    fn from_terms(terms: RawPoly) -> Self {
        let has_denom = terms.keys().any(Monomial::has_denom);
        let e = Expr { terms };
        if has_denom {
            e.reduce_denominators()
        } else {
            e
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.as_constant().is_some_and(|c| c.is_one())
    }

    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => self.terms.get(&Monomial::one()).cloned(),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.as_constant().is_some()
    }

    pub fn coefficient(&self, m: &Monomial) -> Rational {
        self.terms.get(m).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    fn single_term(&self) -> Option<(&Monomial, &Rational)> {
        if self.terms.len() == 1 {
            self.terms.iter().next()
        } else {
            None
        }
    }

    /// Coefficient of the lexicographically leading monomial.
    pub fn leading_coefficient(&self) -> Option<Rational> {
        raw_leading(&self.terms).map(|(_, c)| c)
    }

    pub fn scale(&self, k: &Rational) -> Expr {
        if k.is_zero() {
            return Expr::zero();
        }
        Expr {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect(),
        }
    }

    fn mul_monomials(a: &Monomial, b: &Monomial) -> (Monomial, Option<Expr>) {
        let raw = a.mul_raw(b);
        let mut exps = raw.0.iter().filter(|(g, _)| g.is_exp());
        match (exps.next(), exps.next()) {
            (None, _) | (Some((_, 1)), None) => (raw, None),
            _ => raw.split_exps(),
        }
    }

    pub fn pow(&self, n: i64) -> Result<Expr, SymbolicError> {
        if n < 0 {
            return self.recip()?.pow(-n);
        }
        if n == 0 {
            return Ok(Expr::one());
        }
        let mut base = self.clone();
        let mut acc = Expr::one();
        let mut k = n as u64;
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        Ok(acc)
    }

    /// Multiplicative inverse. Multi-term sums become denominator generators.
    pub fn recip(&self) -> Result<Expr, SymbolicError> {
        if self.is_zero() {
            return Err(SymbolicError::DivisionByZero);
        }
        if let Some((m, c)) = self.single_term() {
            return Ok(monomial_inverse(m).scale(&c.recip()));
        }
        let content = self.content();
        if !content.is_one() {
            let inv_content = monomial_inverse(&content);
            let primitive = self * &inv_content;
            return Ok(&primitive.recip()? * &inv_content);
        }
        let lc = self.leading_coefficient().expect("nonzero");
        let p = self.scale(&lc.recip());
        if let Some((m, c)) = p.single_term() {
            return Ok(monomial_inverse(m).scale(&(c * &lc).recip()));
        }
        Ok(Expr::from_monomial(
            Monomial::single(Gen::Denom(Arc::new(p)), -1),
            lc.recip(),
        ))
    }

    pub fn checked_div(&self, other: &Expr) -> Result<Expr, SymbolicError> {
        Ok(self * &other.recip()?)
    }

    /// Largest monomial dividing every term.
    fn content(&self) -> Monomial {
        let mut gens: BTreeSet<&Gen> = BTreeSet::new();
        for m in self.terms.keys() {
            for (g, _) in &m.0 {
                gens.insert(g);
            }
        }
        let mut out = Vec::new();
        for g in gens {
            let exps: Vec<i32> = self.terms.keys().map(|m| m.exponent(g)).collect();
            let e = if g.is_exp() {
                if exps.iter().all(|&e| e == 1) {
                    1
                } else {
                    0
                }
            } else {
                *exps.iter().min().unwrap()
            };
            if e != 0 {
                out.push((g.clone(), e));
            }
        }
        Monomial(out)
    }

    /// Bring every denominator block into reduced form modulo its sum.
    fn reduce_denominators(self) -> Expr {
        let denoms: BTreeSet<Arc<Expr>> = self
            .terms
            .keys()
            .flat_map(|m| m.0.iter())
            .filter_map(|(g, _)| match g {
                Gen::Denom(p) => Some(p.clone()),
                _ => None,
            })
            .collect();
        let mut terms = self.terms;
        for p in denoms {
            if p.terms.keys().any(|m| m.0.iter().any(|(g, _)| g.is_exp() || g.is_flat())) {
                continue;
            }
            let gen = Gen::Denom(p.clone());
            let mut groups: BTreeMap<i32, RawPoly> = BTreeMap::new();
            for (m, c) in std::mem::take(&mut terms) {
                let k = -m.exponent(&gen);
                let stripped = if k == 0 { m } else { m.with_exponent(&gen, 0) };
                raw_add_term(groups.entry(k).or_default(), stripped, c);
            }
            let max_k = *groups.keys().next_back().unwrap_or(&0);
            for k in (1..=max_k).rev() {
                let Some(block) = groups.remove(&k) else { continue };
                let (q, r) = raw_divrem(&block, &p.terms);
                let lower = groups.entry(k - 1).or_default();
                for (m, c) in q {
                    raw_add_term(lower, m, c);
                }
                if !r.is_empty() {
                    groups.insert(k, r);
                }
            }
            for (k, block) in groups {
                for (m, c) in block {
                    let m = if k == 0 { m } else { m.with_exponent(&gen, -k) };
                    raw_add_term(&mut terms, m, c);
                }
            }
        }
        Expr { terms }
    }

    /// Exact partial derivative with respect to a coordinate.
    pub fn partial(&self, c: &Symbol) -> Expr {
        let mut acc = RawPoly::new();
        let mut pieces: Vec<Expr> = Vec::new();
        for (m, k) in &self.terms {
            for (g, e) in &m.0 {
                let dlog = gen_log_derivative(g, c);
                if dlog.is_zero() {
                    continue;
                }
                let scale = k * Rational::from_integer(BigInt::from(*e));
                let term = Expr::from_monomial(m.clone(), scale);
                pieces.push(&term * &dlog);
            }
        }
        for p in pieces {
            for (m, k) in p.terms {
                raw_add_term(&mut acc, m, k);
            }
        }
        Expr::from_terms(acc)
    }

    /// Replace coordinates by expressions, recursing into atom arguments.
    pub fn substitute(&self, map: &BTreeMap<Symbol, Expr>) -> Result<Expr, SymbolicError> {
        self.transform(&mut |g| match g {
            Gen::Var(s) => Ok(map.get(s).cloned()),
            _ => Ok(None),
        })
    }

    /// Rebuild the expression, letting `f` supply a replacement value for a
    /// generator; atom arguments and denominators are rebuilt recursively.
    pub(crate) fn transform(
        &self,
        f: &mut dyn FnMut(&Gen) -> Result<Option<Expr>, SymbolicError>,
    ) -> Result<Expr, SymbolicError> {
        let mut out = Expr::zero();
        for (m, c) in &self.terms {
            let mut term = Expr::constant(c.clone());
            for (g, e) in &m.0 {
                let base = match f(g)? {
                    Some(v) => v,
                    None => match g {
                        Gen::Var(_) => Expr::from_monomial(Monomial::single(g.clone(), 1), Rational::one()),
                        Gen::Atom(kind, a) => {
                            let a = a.transform(f)?;
                            apply_atom(*kind, &a)
                        }
                        Gen::Denom(p) => p.transform(f)?,
                    },
                };
                term = &term * &base.pow(*e as i64)?;
                if term.is_zero() {
                    break;
                }
            }
            out = &out + &term;
        }
        Ok(out)
    }

    /// Coordinates occurring anywhere, including inside atoms.
    pub fn free_symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<Symbol>) {
        for m in self.terms.keys() {
            for (g, _) in &m.0 {
                match g {
                    Gen::Var(s) => {
                        out.insert(s.clone());
                    }
                    Gen::Atom(_, a) | Gen::Denom(a) => a.collect_symbols(out),
                }
            }
        }
    }

    pub fn depends_on(&self, s: &Symbol) -> bool {
        self.free_symbols().contains(s)
    }

    /// Every quantity this expression divides by, for nonvanishing checks.
    pub fn denominators(&self) -> Vec<Expr> {
        let mut out = BTreeSet::new();
        self.collect_denominators(&mut out);
        out.into_iter().collect()
    }

    fn collect_denominators(&self, out: &mut BTreeSet<Expr>) {
        for m in self.terms.keys() {
            for (g, e) in &m.0 {
                if *e < 0 {
                    out.insert(match g {
                        Gen::Denom(p) => (**p).clone(),
                        _ => Expr::from_monomial(Monomial::single(g.clone(), 1), Rational::one()),
                    });
                }
                match g {
                    Gen::Atom(_, a) | Gen::Denom(a) => a.collect_denominators(out),
                    Gen::Var(_) => {}
                }
            }
        }
    }

    /// Atoms occurring at the top level of some term.
    pub fn top_level_atoms(&self) -> BTreeSet<(AtomKind, Expr)> {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter())
            .filter_map(|(g, _)| match g {
                Gen::Atom(k, a) => Some((*k, (**a).clone())),
                _ => None,
            })
            .collect()
    }
}

pub(crate) fn apply_atom(kind: AtomKind, arg: &Expr) -> Expr {
    match kind {
        AtomKind::Exp => Expr::exp(arg),
        AtomKind::Log => Expr::log(arg),
        AtomKind::Psi0 => Expr::psi0(arg),
        AtomKind::FlatExp => Expr::flatexp(arg),
    }
}

fn monomial_inverse(m: &Monomial) -> Expr {
    let mut plain = Vec::new();
    let mut out = Expr::one();
    for (g, e) in &m.0 {
        match g {
            Gen::Atom(AtomKind::Exp, a) => {
                out = &out * &Expr::exp(&(&**a * &Expr::int(-(*e as i64))));
            }
            Gen::Denom(p) => {
                // negative exponent: inverting gives a positive power of the sum
                let mut k = -*e;
                while k > 0 {
                    out = &out * &**p;
                    k -= 1;
                }
            }
            _ => plain.push((g.clone(), -e)),
        }
    }
    &out * &Expr::from_monomial(Monomial(plain), Rational::one())
}

/// `(d g / d c) / g` for a single generator.
fn gen_log_derivative(g: &Gen, c: &Symbol) -> Expr {
    match g {
        Gen::Var(s) => {
            if s == c {
                Expr::from_monomial(Monomial::single(g.clone(), -1), Rational::one())
            } else {
                Expr::zero()
            }
        }
        Gen::Atom(kind, a) => {
            let da = a.partial(c);
            if da.is_zero() {
                return Expr::zero();
            }
            if *kind == AtomKind::Exp {
                return da;
            }
            let inv = a.recip().expect("atom argument is nonzero");
            match kind {
                AtomKind::Exp => unreachable!(),
                AtomKind::Log => {
                    let inv_log = Expr::from_monomial(Monomial::single(g.clone(), -1), Rational::one());
                    &(&da * &inv) * &inv_log
                }
                AtomKind::Psi0 => {
                    // psi0'(u) = 2 u^-3 psi0(u) (1 - psi0(u))
                    let psi = Expr::from_monomial(Monomial::single(g.clone(), 1), Rational::one());
                    let inv3 = inv.pow(3).expect("nonzero");
                    &(&(&inv3 * &(&Expr::one() - &psi)) * &da) * &Expr::int(2)
                }
                AtomKind::FlatExp => {
                    // flatexp'(u) = u^-2 flatexp(u)
                    &inv.pow(2).expect("nonzero") * &da
                }
            }
        }
        Gen::Denom(p) => {
            let dp = p.partial(c);
            if dp.is_zero() {
                return Expr::zero();
            }
            // g stands for P; d log P = dP / P
            let inv = Expr::from_monomial(Monomial::single(g.clone(), -1), Rational::one());
            &dp * &inv
        }
    }
}

impl<'a> Add<&'a Expr> for &'a Expr {
    type Output = Expr;
    fn add(self, rhs: &Expr) -> Expr {
        if rhs.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return rhs.clone();
        }
        let mut terms = self.terms.clone();
        for (m, c) in &rhs.terms {
            raw_add_term(&mut terms, m.clone(), c.clone());
        }
        Expr::from_terms(terms)
    }
}

impl<'a> Sub<&'a Expr> for &'a Expr {
    type Output = Expr;
    fn sub(self, rhs: &Expr) -> Expr {
        self + &(-rhs)
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

impl<'a> Mul<&'a Expr> for &'a Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        if self.is_zero() || rhs.is_zero() {
            return Expr::zero();
        }
        let mut terms = RawPoly::new();
        let mut merged: Vec<(Monomial, Rational, Expr)> = Vec::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                let c = ca * cb;
                match Expr::mul_monomials(ma, mb) {
                    (m, None) => raw_add_term(&mut terms, m, c),
                    (m, Some(arg)) => merged.push((m, c, arg)),
                }
            }
        }
        for (m, c, arg) in merged {
            if arg.is_zero() {
                raw_add_term(&mut terms, m, c);
            } else {
                let m = m.mul_raw(&Monomial::single(Gen::Atom(AtomKind::Exp, Arc::new(arg)), 1));
                raw_add_term(&mut terms, m, c);
            }
        }
        Expr::from_terms(terms)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr<Expr> for Expr {
            type Output = Expr;
            fn $f(self, rhs: Expr) -> Expr {
                (&self).$f(&rhs)
            }
        }
        impl<'a> $tr<&'a Expr> for Expr {
            type Output = Expr;
            fn $f(self, rhs: &Expr) -> Expr {
                (&self).$f(rhs)
            }
        }
        impl<'a> $tr<Expr> for &'a Expr {
            type Output = Expr;
            fn $f(self, rhs: Expr) -> Expr {
                self.$f(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Self {
        Expr::int(n)
    }
}

impl From<Rational> for Expr {
    fn from(c: Rational) -> Self {
        Expr::constant(c)
    }
}
