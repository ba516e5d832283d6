use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};

use crate::chart::Chart;
use crate::config::ZeroTestConfig;
use crate::error::Error;
use crate::foliation::{Foliation, FoliationFamily};
use crate::forms::{ext_d, form_power, wedge, CoordinateMap, Form};
use crate::gv::{solve_mu, MuChoice};
use crate::region::Region;
use crate::singular::TubularData;
use crate::symbolic::{Expr, Rational};
use crate::testfn::{bump, strengthen, BumpSpec, ClosedSetSpec};

use super::diagnostics::{Diagnostic, DiagnosticKind, Pos};
use super::document::{CheckDirective, CheckSpec, SpecDocument, WeakCoverDecl, CHECK_KINDS};
use super::lexer::{lex, Tok, Token};

pub const MAX_EXPONENT: i64 = 32;
pub const MAX_DEPTH: usize = 64;
pub const MAX_TERMS: usize = 2_000;
const MAX_DECIMAL_EXPONENT: i64 = 400;

type PResult<T> = Result<T, Diagnostic>;

fn diag(kind: DiagnosticKind, pos: Pos, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(kind, pos, msg)
}

fn engine(pos: Pos, e: Error) -> Diagnostic {
    let kind = match e {
        Error::DegreeMismatch { .. } => DiagnosticKind::Degree,
        Error::UnknownCoordinate(_) => DiagnosticKind::Unresolved,
        _ => DiagnosticKind::Invalid,
    };
    diag(kind, pos, e.to_string())
}

/// Scalars are 0-forms; kept apart so arithmetic can coerce literal zero.
#[derive(Clone, Debug)]
enum Value {
    Scalar(Expr),
    Form(Form),
}

impl Value {
    fn degree(&self) -> usize {
        match self {
            Value::Scalar(_) => 0,
            Value::Form(f) => f.degree(),
        }
    }

    fn into_form(self, chart: &Chart) -> Form {
        match self {
            Value::Scalar(e) => Form::scalar(chart, e),
            Value::Form(f) => f,
        }
    }

    fn is_zero_scalar(&self) -> bool {
        matches!(self, Value::Scalar(e) if e.is_zero())
    }
}

fn parse_decimal(s: &str) -> Option<Rational> {
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i64>().ok()?),
        None => (s, 0),
    };
    let (int, frac) = match mant.find('.') {
        Some(i) => (&mant[..i], &mant[i + 1..]),
        None => (mant, ""),
    };
    let digits = format!("{int}{frac}");
    let digits = if digits.is_empty() { "0".to_string() } else { digits };
    let n: BigInt = digits.parse().ok()?;
    let shift = exp - frac.len() as i64;
    if shift.abs() > MAX_DECIMAL_EXPONENT {
        return None;
    }
    let ten = BigInt::from(10);
    let p = num_traits::pow(ten, shift.unsigned_abs() as usize);
    Some(if shift >= 0 {
        Rational::from_integer(n * p)
    } else {
        Rational::new(n, p)
    })
}

/// Number of monomials of degree `n` in `t` variables, an upper bound on the
/// terms of a `t`-term sum raised to the `n`-th power.
fn expansion_bound(t: usize, n: u64) -> u128 {
    let k = t.saturating_sub(1) as u128;
    let mut c: u128 = 1;
    for i in 1..=k.min(64) {
        c = c.saturating_mul(n as u128 + i) / i;
        if c > u64::MAX as u128 {
            return c;
        }
    }
    c
}

fn split_top<'a>(toks: &'a [Token], sep: &str) -> Vec<&'a [Token]> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, t) in toks.iter().enumerate() {
        match &t.tok {
            Tok::Sym("(") | Tok::Sym("[") => depth += 1,
            Tok::Sym(")") | Tok::Sym("]") => depth -= 1,
            Tok::Sym(s) if *s == sep && depth == 0 => {
                out.push(&toks[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&toks[start..]);
    out
}

fn find_top(toks: &[Token], syms: &[&str]) -> Option<usize> {
    let mut depth = 0i32;
    for (i, t) in toks.iter().enumerate() {
        match &t.tok {
            Tok::Sym("(") | Tok::Sym("[") => depth += 1,
            Tok::Sym(")") | Tok::Sym("]") => depth -= 1,
            Tok::Sym(s) if depth == 0 && syms.contains(s) => return Some(i),
            _ => {}
        }
    }
    None
}

fn pos_of(toks: &[Token], fallback: Pos) -> Pos {
    toks.first().map(|t| t.pos).unwrap_or(fallback)
}

const FUNCTIONS: [&str; 6] = ["exp", "log", "psi0", "flatexp", "strengthen", "d"];
const KEYWORDS: [&str; 15] = [
    "chart", "config", "scalar", "form", "region", "foliation", "family", "mu", "map", "bump", "ball", "closed", "testfn", "tubular", "check",
];

struct Builder {
    chart: Option<Chart>,
    bounds: Vec<(f64, f64)>,
    config: ZeroTestConfig,
    seed_declared: bool,
    names: BTreeMap<String, Pos>,
    scalars: BTreeMap<String, Expr>,
    forms: BTreeMap<String, Form>,
    regions: BTreeMap<String, Region>,
    foliations: BTreeMap<String, Foliation>,
    families: BTreeMap<String, FoliationFamily>,
    mus: BTreeMap<String, BTreeMap<String, Option<Form>>>,
    maps: BTreeMap<String, CoordinateMap>,
    bumps: BTreeMap<String, BumpSpec>,
    balls: BTreeMap<String, (Vec<f64>, f64)>,
    closed: BTreeMap<String, ClosedSetSpec>,
    covers: BTreeMap<String, WeakCoverDecl>,
    tubulars: BTreeMap<String, TubularData>,
    checks: Vec<CheckDirective>,
    working_box: Option<Region>,
    diags: Vec<Diagnostic>,
}

struct ExprParser<'a> {
    b: &'a Builder,
    chart: &'a Chart,
    toks: &'a [Token],
    i: usize,
    depth: usize,
    end: Pos,
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.i)
    }

    fn pos(&self) -> Pos {
        self.peek().map(|t| t.pos).unwrap_or(self.end)
    }

    fn eat(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Token { tok: Tok::Sym(x), .. }) if *x == s) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> PResult<()> {
        if self.eat(s) {
            Ok(())
        } else {
            let found = self.peek().map(|t| t.tok.describe()).unwrap_or_else(|| "end of expression".into());
            Err(diag(DiagnosticKind::Syntax, self.pos(), format!("expected `{s}`, found {found}")))
        }
    }

    fn full(&mut self) -> PResult<Value> {
        if self.toks.is_empty() {
            return Err(diag(DiagnosticKind::Syntax, self.end, "expected an expression"));
        }
        let v = self.sum()?;
        if let Some(t) = self.peek() {
            return Err(diag(DiagnosticKind::Syntax, t.pos, format!("unexpected {} in expression", t.tok.describe())));
        }
        Ok(v)
    }

    fn guard(&self, pos: Pos, e: &Expr) -> PResult<()> {
        if e.term_count() > MAX_TERMS {
            return Err(diag(DiagnosticKind::Invalid, pos, format!("expression exceeds {MAX_TERMS} terms")));
        }
        Ok(())
    }

    fn guard_value(&self, pos: Pos, v: &Value) -> PResult<()> {
        match v {
            Value::Scalar(e) => self.guard(pos, e),
            Value::Form(f) => f.coeffs().values().try_for_each(|c| self.guard(pos, c)),
        }
    }

    fn add(&self, pos: Pos, a: Value, b: Value, negate: bool) -> PResult<Value> {
        let v = match (a, b) {
            (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(if negate { &x - &y } else { &x + &y }),
            (a, b) => {
                let (a, b) = if a.is_zero_scalar() && b.degree() > 0 {
                    (Value::Form(Form::zero(self.chart, b.degree())), b)
                } else if b.is_zero_scalar() && a.degree() > 0 {
                    let d = a.degree();
                    (a, Value::Form(Form::zero(self.chart, d)))
                } else {
                    (a, b)
                };
                if a.degree() != b.degree() {
                    return Err(diag(
                        DiagnosticKind::Degree,
                        pos,
                        format!("cannot add forms of degree {} and {}", a.degree(), b.degree()),
                    ));
                }
                let (fa, fb) = (a.into_form(self.chart), b.into_form(self.chart));
                let r = if negate { fa.checked_sub(&fb) } else { fa.checked_add(&fb) };
                Value::Form(r.map_err(|e| engine(pos, e))?)
            }
        };
        self.guard_value(pos, &v)?;
        Ok(v)
    }

    fn mul(&self, pos: Pos, a: Value, b: Value) -> PResult<Value> {
        let size = |v: &Value| match v {
            Value::Scalar(e) => e.term_count(),
            Value::Form(f) => f.coeffs().values().map(|c| c.term_count()).max().unwrap_or(0),
        };
        if size(&a).saturating_mul(size(&b)) > 10 * MAX_TERMS {
            return Err(diag(DiagnosticKind::Invalid, pos, "product is too large"));
        }
        let v = match (a, b) {
            (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(&x * &y),
            (Value::Scalar(x), Value::Form(f)) | (Value::Form(f), Value::Scalar(x)) => Value::Form(f.scale(&x)),
            (Value::Form(_), Value::Form(_)) => {
                return Err(diag(DiagnosticKind::Degree, pos, "product of two forms; use `^` for the wedge product"))
            }
        };
        self.guard_value(pos, &v)?;
        Ok(v)
    }

    fn sum(&mut self) -> PResult<Value> {
        let mut acc = self.term()?;
        loop {
            let pos = self.pos();
            if self.eat("+") {
                let rhs = self.term()?;
                acc = self.add(pos, acc, rhs, false)?;
            } else if self.eat("-") {
                let rhs = self.term()?;
                acc = self.add(pos, acc, rhs, true)?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> PResult<Value> {
        let mut acc = self.unary()?;
        loop {
            let pos = self.pos();
            if self.eat("*") {
                let rhs = self.unary()?;
                acc = self.mul(pos, acc, rhs)?;
            } else if self.eat("/") {
                let rhs = self.unary()?;
                let Value::Scalar(den) = rhs else {
                    return Err(diag(DiagnosticKind::Degree, pos, "division by a form of positive degree"));
                };
                let inv = den
                    .recip()
                    .map_err(|_| diag(DiagnosticKind::Invalid, pos, "division by the zero expression"))?;
                acc = self.mul(pos, acc, Value::Scalar(inv))?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> PResult<Value> {
        let pos = self.pos();
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(diag(DiagnosticKind::Syntax, pos, format!("expression nesting exceeds {MAX_DEPTH}")));
        }
        let v = if self.eat("-") {
            match self.unary()? {
                Value::Scalar(e) => Value::Scalar(-&e),
                Value::Form(f) => Value::Form(-&f),
            }
        } else if self.eat("+") {
            self.unary()?
        } else {
            self.power()?
        };
        self.depth -= 1;
        Ok(v)
    }

    fn power(&mut self) -> PResult<Value> {
        let base = self.primary()?;
        let pos = self.pos();
        if !self.eat("^") {
            return Ok(base);
        }
        let rhs = self.unary()?;
        match rhs {
            Value::Form(f) if f.degree() > 0 => {
                let b = base.into_form(self.chart);
                let w = wedge(&b, &f).map_err(|e| engine(pos, e))?;
                let v = Value::Form(w);
                self.guard_value(pos, &v)?;
                Ok(v)
            }
            other => {
                let e = match other {
                    Value::Scalar(e) => e,
                    Value::Form(f) => f.as_scalar().unwrap_or_default(),
                };
                let Some(n) = e.as_constant().filter(|c| c.is_integer()).and_then(|c| c.to_integer().to_i64()) else {
                    return Err(diag(DiagnosticKind::Invalid, pos, "exponent must be an integer constant or a form"));
                };
                if n.abs() > MAX_EXPONENT {
                    return Err(diag(DiagnosticKind::Invalid, pos, format!("exponent {n} exceeds {MAX_EXPONENT}")));
                }
                match base {
                    Value::Scalar(b) => {
                        let mut b = b;
                        let mut n = n;
                        if n < 0 {
                            b = b.recip().map_err(|_| diag(DiagnosticKind::Invalid, pos, "negative power of zero"))?;
                            n = -n;
                        }
                        if expansion_bound(b.term_count(), n as u64) > MAX_TERMS as u128 {
                            return Err(diag(
                                DiagnosticKind::Invalid,
                                pos,
                                format!("power may expand beyond {MAX_TERMS} terms"),
                            ));
                        }
                        let mut acc = Expr::one();
                        for _ in 0..n {
                            if acc.term_count().saturating_mul(b.term_count()) > 10 * MAX_TERMS {
                                return Err(diag(DiagnosticKind::Invalid, pos, "power is too large"));
                            }
                            acc = &acc * &b;
                            self.guard(pos, &acc)?;
                        }
                        Ok(Value::Scalar(acc))
                    }
                    Value::Form(f) => {
                        if n < 0 {
                            return Err(diag(DiagnosticKind::Invalid, pos, "negative power of a form"));
                        }
                        let v = Value::Form(form_power(&f, n as usize));
                        self.guard_value(pos, &v)?;
                        Ok(v)
                    }
                }
            }
        }
    }

    fn primary(&mut self) -> PResult<Value> {
        let pos = self.pos();
        let Some(t) = self.peek() else {
            return Err(diag(DiagnosticKind::Syntax, pos, "expression ends early"));
        };
        match &t.tok {
            Tok::Number(s) => {
                self.i += 1;
                let r = parse_decimal(s).ok_or_else(|| diag(DiagnosticKind::Syntax, pos, format!("bad number `{s}`")))?;
                Ok(Value::Scalar(Expr::constant(r)))
            }
            Tok::Sym("(") => {
                self.i += 1;
                let v = self.sum()?;
                self.expect(")")?;
                Ok(v)
            }
            Tok::Ident(name) => {
                self.i += 1;
                if FUNCTIONS.contains(&name.as_str()) && matches!(self.peek(), Some(Token { tok: Tok::Sym("("), .. })) {
                    self.i += 1;
                    let arg = self.sum()?;
                    self.expect(")")?;
                    return self.apply(pos, name, arg);
                }
                self.lookup(pos, name)
            }
            other => Err(diag(DiagnosticKind::Syntax, pos, format!("unexpected {}", other.describe()))),
        }
    }

    fn apply(&self, pos: Pos, name: &str, arg: Value) -> PResult<Value> {
        if name == "d" {
            let v = Value::Form(ext_d(&arg.into_form(self.chart)));
            self.guard_value(pos, &v)?;
            return Ok(v);
        }
        let e = match arg {
            Value::Scalar(e) => e,
            Value::Form(f) if f.degree() == 0 => f.as_scalar().unwrap_or_default(),
            Value::Form(_) => return Err(diag(DiagnosticKind::Degree, pos, format!("`{name}` needs a scalar argument"))),
        };
        Ok(Value::Scalar(match name {
            "exp" => Expr::exp(&e),
            "log" => {
                if e.is_zero() {
                    return Err(diag(DiagnosticKind::Invalid, pos, "log(0)"));
                }
                Expr::log(&e)
            }
            "psi0" => Expr::psi0(&e),
            "strengthen" => strengthen(&e),
            _ => Expr::flatexp(&e),
        }))
    }

    fn lookup(&self, pos: Pos, name: &str) -> PResult<Value> {
        if self.chart.index_of(name).is_some() {
            return Ok(Value::Scalar(Expr::var(name)));
        }
        if let Some(e) = self.b.scalars.get(name) {
            return Ok(Value::Scalar(e.clone()));
        }
        if let Some(f) = self.b.forms.get(name) {
            return Ok(Value::Form(f.clone()));
        }
        if let Some(c) = name.strip_prefix('d') {
            if self.chart.index_of(c).is_some() {
                return Ok(Value::Form(Form::dx(self.chart, c).expect("coordinate exists")));
            }
        }
        let what = if self.b.names.contains_key(name) {
            format!("`{name}` does not name a scalar or form")
        } else {
            format!("`{name}` is not defined")
        };
        Err(diag(DiagnosticKind::Unresolved, pos, what))
    }
}

/// One `;`-separated body item as `key = value`, or a bare item.
struct Item<'a> {
    key: Option<(String, Pos)>,
    value: &'a [Token],
    pos: Pos,
}

fn items<'a>(body: &'a [Token], at: Pos) -> Vec<Item<'a>> {
    split_top(body, ";")
        .into_iter()
        .filter(|s| !s.is_empty())
        .map(|s| {
            let pos = pos_of(s, at);
            match s {
                [Token { tok: Tok::Ident(k), pos: kp }, Token { tok: Tok::Sym("="), .. }, rest @ ..] => Item {
                    key: Some((k.clone(), *kp)),
                    value: rest,
                    pos,
                },
                _ => Item { key: None, value: s, pos },
            }
        })
        .collect()
}

struct Args<'a> {
    map: BTreeMap<String, (Pos, &'a [Token])>,
    at: Pos,
}

impl<'a> Args<'a> {
    fn from_items(list: Vec<Item<'a>>, at: Pos) -> PResult<(Args<'a>, Vec<Item<'a>>)> {
        let mut map = BTreeMap::new();
        let mut bare = Vec::new();
        for it in list {
            match it.key {
                Some((k, kp)) => {
                    if map.insert(k.clone(), (kp, it.value)).is_some() {
                        return Err(diag(DiagnosticKind::Duplicate, kp, format!("key `{k}` given twice")));
                    }
                }
                None => bare.push(it),
            }
        }
        Ok((Args { map, at }, bare))
    }

    fn req(&self, key: &str) -> PResult<(Pos, &'a [Token])> {
        self.map
            .get(key)
            .copied()
            .ok_or_else(|| diag(DiagnosticKind::Arity, self.at, format!("missing `{key} = ...`")))
    }

    fn opt(&self, key: &str) -> Option<(Pos, &'a [Token])> {
        self.map.get(key).copied()
    }

    fn only(&self, allowed: &[&str]) -> PResult<()> {
        match self.map.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            Some((k, (p, _))) => Err(diag(
                DiagnosticKind::Arity,
                *p,
                format!("unexpected key `{k}` (expected one of: {})", allowed.join(", ")),
            )),
            None => Ok(()),
        }
    }
}

fn ident(toks: &[Token], at: Pos) -> PResult<(String, Pos)> {
    match toks {
        [Token { tok: Tok::Ident(s), pos }] => Ok((s.clone(), *pos)),
        _ => Err(diag(DiagnosticKind::Syntax, pos_of(toks, at), "expected a single name")),
    }
}

fn bracketed<'a>(toks: &'a [Token], open: &str, close: &str, at: Pos) -> PResult<Vec<&'a [Token]>> {
    match toks {
        [Token { tok: Tok::Sym(o), .. }, inner @ .., Token { tok: Tok::Sym(c), .. }] if *o == open && *c == close => {
            if inner.is_empty() {
                return Ok(Vec::new());
            }
            let parts = split_top(inner, ",");
            if parts.iter().any(|p| p.is_empty()) {
                return Err(diag(DiagnosticKind::Syntax, pos_of(toks, at), "empty list element"));
            }
            Ok(parts)
        }
        _ => Err(diag(DiagnosticKind::Syntax, pos_of(toks, at), format!("expected `{open} ... {close}`"))),
    }
}

/// A name that may contain hyphens, such as `gv-min`.
fn hyphenated(toks: &[Token], at: Pos) -> PResult<String> {
    let mut out = String::new();
    for (i, t) in toks.iter().enumerate() {
        match (&t.tok, i % 2) {
            (Tok::Ident(s), 0) => out.push_str(s),
            (Tok::Sym("-"), 1) if i + 1 < toks.len() => out.push('-'),
            _ => return Err(diag(DiagnosticKind::Syntax, t.pos, "expected a kind name")),
        }
    }
    if out.is_empty() {
        return Err(diag(DiagnosticKind::Syntax, at, "expected a kind name"));
    }
    Ok(out)
}

fn uint(toks: &[Token], at: Pos) -> PResult<u64> {
    match toks {
        [Token { tok: Tok::Number(s), pos }] => s
            .parse::<u64>()
            .map_err(|_| diag(DiagnosticKind::Syntax, *pos, format!("expected a non-negative integer, found `{s}`"))),
        _ => Err(diag(DiagnosticKind::Syntax, pos_of(toks, at), "expected a non-negative integer")),
    }
}

fn boolean(toks: &[Token], at: Pos) -> PResult<bool> {
    match ident(toks, at)?.0.as_str() {
        "true" | "yes" => Ok(true),
        "false" | "no" => Ok(false),
        other => Err(diag(DiagnosticKind::Syntax, pos_of(toks, at), format!("expected true or false, found `{other}`"))),
    }
}

impl Builder {
    fn new() -> Self {
        Builder {
            chart: None,
            bounds: Vec::new(),
            config: ZeroTestConfig::default(),
            seed_declared: false,
            names: BTreeMap::new(),
            scalars: BTreeMap::new(),
            forms: BTreeMap::new(),
            regions: BTreeMap::new(),
            foliations: BTreeMap::new(),
            families: BTreeMap::new(),
            mus: BTreeMap::new(),
            maps: BTreeMap::new(),
            bumps: BTreeMap::new(),
            balls: BTreeMap::new(),
            closed: BTreeMap::new(),
            covers: BTreeMap::new(),
            tubulars: BTreeMap::new(),
            checks: Vec::new(),
            working_box: None,
            diags: Vec::new(),
        }
    }

    fn chart(&self, at: Pos) -> PResult<Chart> {
        self.chart
            .clone()
            .ok_or_else(|| diag(DiagnosticKind::Invalid, at, "no chart declared before this statement"))
    }

    fn expr_value(&self, toks: &[Token], at: Pos) -> PResult<Value> {
        let chart = self.chart(at)?;
        let end = toks.last().map(|t| Pos { line: t.pos.line, col: t.pos.col + 1 }).unwrap_or(at);
        let mut p = ExprParser {
            b: self,
            chart: &chart,
            toks,
            i: 0,
            depth: 0,
            end,
        };
        p.full()
    }

    fn scalar(&self, toks: &[Token], at: Pos) -> PResult<Expr> {
        match self.expr_value(toks, at)? {
            Value::Scalar(e) => Ok(e),
            Value::Form(f) if f.degree() == 0 => Ok(f.as_scalar().unwrap_or_default()),
            Value::Form(f) => Err(diag(
                DiagnosticKind::Degree,
                pos_of(toks, at),
                format!("expected a scalar, found a {}-form", f.degree()),
            )),
        }
    }

    fn form(&self, toks: &[Token], at: Pos, degree: Option<usize>) -> PResult<Form> {
        let chart = self.chart(at)?;
        let v = self.expr_value(toks, at)?;
        let f = match (v, degree) {
            (v, Some(d)) if v.is_zero_scalar() => Form::zero(&chart, d),
            (v, _) => v.into_form(&chart),
        };
        if let Some(d) = degree {
            if f.degree() != d {
                return Err(diag(
                    DiagnosticKind::Degree,
                    pos_of(toks, at),
                    format!("expected a {d}-form, found a {}-form", f.degree()),
                ));
            }
        }
        Ok(f)
    }

    fn constant(&self, toks: &[Token], at: Pos) -> PResult<Rational> {
        let e = self.scalar(toks, at)?;
        e.as_constant()
            .ok_or_else(|| diag(DiagnosticKind::Invalid, pos_of(toks, at), "expected a numeric constant"))
    }

    fn real(&self, toks: &[Token], at: Pos) -> PResult<f64> {
        let c = self.constant(toks, at)?;
        c.to_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| diag(DiagnosticKind::Invalid, pos_of(toks, at), "constant is out of range"))
    }

    fn coords_tuple(&self, toks: &[Token], at: Pos) -> PResult<Vec<f64>> {
        let chart = self.chart(at)?;
        let parts = if matches!(toks.first(), Some(Token { tok: Tok::Sym("("), .. })) && find_top(toks, &[","]).is_none() {
            bracketed(toks, "(", ")", at)?
        } else if matches!(toks.first(), Some(Token { tok: Tok::Sym("("), .. })) {
            bracketed(toks, "(", ")", at)?
        } else {
            vec![toks]
        };
        if parts.len() != chart.dim() {
            return Err(diag(
                DiagnosticKind::Arity,
                pos_of(toks, at),
                format!("point needs {} coordinates, found {}", chart.dim(), parts.len()),
            ));
        }
        parts.into_iter().map(|p| self.real(p, at)).collect()
    }

    fn lookup<'m, T>(&self, map: &'m BTreeMap<String, T>, toks: &[Token], at: Pos, what: &str) -> PResult<&'m T> {
        let (name, pos) = ident(toks, at)?;
        map.get(&name)
            .ok_or_else(|| diag(DiagnosticKind::Unresolved, pos, format!("`{name}` is not a declared {what}")))
    }

    fn declare(&mut self, name: &str, pos: Pos) -> PResult<()> {
        let reserved = FUNCTIONS.contains(&name)
            || matches!(name, "auto" | "true" | "false" | "whole")
            || self.chart.as_ref().is_some_and(|c| {
                c.index_of(name).is_some() || name.strip_prefix('d').is_some_and(|s| c.index_of(s).is_some())
            });
        if reserved {
            return Err(diag(DiagnosticKind::Invalid, pos, format!("`{name}` is reserved")));
        }
        if let Some(prev) = self.names.get(name) {
            return Err(diag(DiagnosticKind::Duplicate, pos, format!("`{name}` already declared at {prev}")));
        }
        self.names.insert(name.to_string(), pos);
        Ok(())
    }

    fn statement(&mut self, toks: &[Token]) -> PResult<()> {
        let at = toks[0].pos;
        let Tok::Ident(kw) = &toks[0].tok else {
            return Err(diag(DiagnosticKind::Syntax, at, format!("expected a keyword, found {}", toks[0].tok.describe())));
        };
        let kw = kw.as_str();
        if !KEYWORDS.contains(&kw) {
            return Err(diag(DiagnosticKind::Syntax, at, format!("unknown statement `{kw}`")));
        }
        if kw == "chart" || kw == "config" {
            let body = match toks.get(1) {
                Some(Token { tok: Tok::Sym(":"), .. }) => &toks[2..],
                _ => return Err(diag(DiagnosticKind::Syntax, at, format!("expected `{kw}: ...`"))),
            };
            return if kw == "chart" { self.chart_stmt(body, at) } else { self.config_stmt(body, at) };
        }
        let (name, npos) = match toks.get(1) {
            Some(Token { tok: Tok::Ident(n), pos }) => (n.clone(), *pos),
            Some(t) => return Err(diag(DiagnosticKind::Syntax, t.pos, format!("expected a name, found {}", t.tok.describe()))),
            None => return Err(diag(DiagnosticKind::Syntax, at, format!("`{kw}` needs a name"))),
        };
        let rest = &toks[2..];
        if kw == "scalar" || kw == "form" {
            let body = match rest.first() {
                Some(Token { tok: Tok::Sym("="), .. }) => &rest[1..],
                _ => return Err(diag(DiagnosticKind::Syntax, pos_of(rest, at), format!("expected `{kw} {name} = ...`"))),
            };
            if kw == "scalar" {
                let e = self.scalar(body, at)?;
                self.declare(&name, npos)?;
                self.scalars.insert(name, e);
            } else {
                let f = self.form(body, at, None)?;
                self.declare(&name, npos)?;
                self.forms.insert(name, f);
            }
            return Ok(());
        }
        let body: &[Token] = match rest.first() {
            None => &[],
            Some(Token { tok: Tok::Sym(":"), .. }) => &rest[1..],
            Some(t) => return Err(diag(DiagnosticKind::Syntax, t.pos, format!("expected `:`, found {}", t.tok.describe()))),
        };
        self.chart(at)?;
        let list = items(body, at);
        match kw {
            "region" => self.region_stmt(&name, npos, list, at),
            "foliation" => self.foliation_stmt(&name, npos, list, at),
            "family" => self.family_stmt(&name, npos, list, at),
            "mu" => self.mu_stmt(&name, npos, list, at),
            "map" => self.map_stmt(&name, npos, list, at),
            "bump" | "ball" => self.ball_stmt(kw, &name, npos, list, at),
            "closed" => self.closed_stmt(&name, npos, list, at),
            "testfn" => self.testfn_stmt(&name, npos, list, at),
            "tubular" => self.tubular_stmt(&name, npos, list, at),
            _ => self.check_stmt(&name, npos, list, at),
        }
    }

    fn chart_stmt(&mut self, body: &[Token], at: Pos) -> PResult<()> {
        if self.chart.is_some() {
            return Err(diag(DiagnosticKind::Duplicate, at, "chart declared twice"));
        }
        let mut names = Vec::new();
        let mut bounds = Vec::new();
        for it in items(body, at) {
            let (coord, rest) = match it.value {
                [Token { tok: Tok::Ident(c), .. }, Token { tok: Tok::Ident(k), .. }, rest @ ..] if k == "in" => (c.clone(), rest),
                _ => return Err(diag(DiagnosticKind::Syntax, it.pos, "expected `coordinate in [low, high]`")),
            };
            if names.contains(&coord) || KEYWORDS.contains(&coord.as_str()) || FUNCTIONS.contains(&coord.as_str()) {
                return Err(diag(DiagnosticKind::Duplicate, it.pos, format!("coordinate `{coord}` is repeated or reserved")));
            }
            let ends = bracketed(rest, "[", "]", it.pos)?;
            if ends.len() != 2 {
                return Err(diag(DiagnosticKind::Arity, it.pos, "an interval needs two ends"));
            }
            let num = |t: &[Token]| -> PResult<f64> {
                let mut p = ExprParser {
                    b: self,
                    chart: &Chart::new(Vec::<String>::new()),
                    toks: t,
                    i: 0,
                    depth: 0,
                    end: it.pos,
                };
                match p.full()? {
                    Value::Scalar(e) => e
                        .as_constant()
                        .and_then(|c| c.to_f64())
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| diag(DiagnosticKind::Invalid, pos_of(t, it.pos), "interval ends must be constants")),
                    _ => Err(diag(DiagnosticKind::Invalid, pos_of(t, it.pos), "interval ends must be constants")),
                }
            };
            let (lo, hi) = (num(ends[0])?, num(ends[1])?);
            if !(lo < hi) {
                return Err(diag(DiagnosticKind::Invalid, it.pos, format!("empty interval [{lo}, {hi}]")));
            }
            names.push(coord);
            bounds.push((lo, hi));
        }
        if names.is_empty() {
            return Err(diag(DiagnosticKind::Arity, at, "chart needs at least one coordinate"));
        }
        let chart = Chart::new(names);
        self.working_box = Some(Region::new(chart.clone(), "box", bounds.clone()).map_err(|e| engine(at, e))?);
        self.chart = Some(chart);
        self.bounds = bounds;
        Ok(())
    }

    fn config_stmt(&mut self, body: &[Token], at: Pos) -> PResult<()> {
        let (args, bare) = Args::from_items(items(body, at), at)?;
        if let Some(b) = bare.first() {
            return Err(diag(DiagnosticKind::Syntax, b.pos, "expected `key = value`"));
        }
        args.only(&["seed", "samples", "abs_tol", "rel_tol", "tol"])?;
        let mut cfg = self.config.clone();
        let mut seed_declared = self.seed_declared;
        let real_const = |toks: &[Token], p: Pos| -> PResult<f64> {
            let mut ep = ExprParser {
                b: self,
                chart: &Chart::new(Vec::<String>::new()),
                toks,
                i: 0,
                depth: 0,
                end: p,
            };
            match ep.full()? {
                Value::Scalar(e) => e.as_constant().and_then(|c| c.to_f64()).ok_or_else(|| diag(DiagnosticKind::Invalid, p, "expected a constant")),
                _ => Err(diag(DiagnosticKind::Invalid, p, "expected a constant")),
            }
        };
        if let Some((p, t)) = args.opt("seed") {
            cfg.rng_seed = uint(t, p)?;
            seed_declared = true;
        }
        if let Some((p, t)) = args.opt("samples") {
            cfg.sample_count = uint(t, p)?.min(1 << 20) as usize;
        }
        if let Some((p, t)) = args.opt("tol") {
            let v = real_const(t, p)?;
            cfg.abs_tol = v;
            cfg.rel_tol = v;
        }
        if let Some((p, t)) = args.opt("abs_tol") {
            cfg.abs_tol = real_const(t, p)?;
        }
        if let Some((p, t)) = args.opt("rel_tol") {
            cfg.rel_tol = real_const(t, p)?;
        }
        cfg.validate().map_err(|e| engine(at, e))?;
        self.config = cfg;
        self.seed_declared = seed_declared;
        Ok(())
    }

    fn working_box(&self, at: Pos) -> PResult<Region> {
        self.working_box
            .clone()
            .ok_or_else(|| diag(DiagnosticKind::Invalid, at, "no chart declared before this statement"))
    }

    fn region_stmt(&mut self, name: &str, npos: Pos, list: Vec<Item>, at: Pos) -> PResult<()> {
        let chart = self.chart(at)?;
        let mut bounds = self.bounds.clone();
        let mut constraints = Vec::new();
        for it in list {
            if it.key.is_some() {
                return Err(diag(DiagnosticKind::Syntax, it.pos, "expected an inequality, a box restriction or a region name"));
            }
            let v = it.value;
            if let [Token { tok: Tok::Ident(c), pos }, Token { tok: Tok::Ident(k), .. }, rest @ ..] = v {
                if k == "in" {
                    let i = chart
                        .index_of(c)
                        .ok_or_else(|| diag(DiagnosticKind::Unresolved, *pos, format!("`{c}` is not a coordinate")))?;
                    let ends = bracketed(rest, "[", "]", it.pos)?;
                    if ends.len() != 2 {
                        return Err(diag(DiagnosticKind::Arity, it.pos, "an interval needs two ends"));
                    }
                    let lo = self.real(ends[0], it.pos)?.max(bounds[i].0);
                    let hi = self.real(ends[1], it.pos)?.min(bounds[i].1);
                    if !(lo < hi) {
                        return Err(diag(DiagnosticKind::Invalid, it.pos, "box restriction is empty"));
                    }
                    bounds[i] = (lo, hi);
                    continue;
                }
            }
            if let Some(k) = find_top(v, &[">", "<"]) {
                let lhs = self.scalar(&v[..k], it.pos)?;
                let rhs = self.scalar(&v[k + 1..], it.pos)?;
                let g = if matches!(v[k].tok, Tok::Sym(">")) { &lhs - &rhs } else { &rhs - &lhs };
                if let Some(c) = g.as_constant() {
                    if !c.is_positive() {
                        return Err(diag(DiagnosticKind::Invalid, it.pos, "constraint is never satisfied"));
                    }
                    continue;
                }
                constraints.push(g);
                continue;
            }
            let other = self.lookup(&self.regions, v, it.pos, "region")?;
            for (b, o) in bounds.iter_mut().zip(other.bounds()) {
                *b = (b.0.max(o.0), b.1.min(o.1));
            }
            if bounds.iter().any(|(lo, hi)| lo >= hi) {
                return Err(diag(DiagnosticKind::Invalid, it.pos, "region boxes are disjoint"));
            }
            constraints.extend(other.constraints().iter().cloned());
        }
        let mut r = Region::new(chart, name, bounds).map_err(|e| engine(at, e))?;
        for g in constraints {
            r = r.with_constraint(g);
        }
        self.declare(name, npos)?;
        self.regions.insert(name.to_string(), r);
        Ok(())
    }

    fn foliation_stmt(&mut self, name: &str, npos: Pos, list: Vec<Item>, at: Pos) -> PResult<()> {
        let chart = self.chart(at)?;
        let (args, bare) = Args::from_items(list, at)?;
        if let Some(b) = bare.first() {
            return Err(diag(DiagnosticKind::Syntax, b.pos, "expected `key = value`"));
        }
        args.only(&["region", "leaf_dim", "nu", "gens", "adapted"])?;
        let region = match args.opt("region") {
            Some((p, t)) => self.lookup(&self.regions, t, p, "region")?.clone(),
            None => self.working_box(at)?,
        };
        let (lp, lt) = args.req("leaf_dim")?;
        let leaf_dim = uint(lt, lp)? as usize;
        if leaf_dim > chart.dim() {
            return Err(diag(DiagnosticKind::Invalid, lp, format!("leaf dimension exceeds {}", chart.dim())));
        }
        let q = chart.dim() - leaf_dim;
        let nu = match args.opt("nu") {
            Some((p, t)) => self.form(t, p, Some(q))?,
            None if q == 0 => Form::one(&chart),
            None => return Err(diag(DiagnosticKind::Arity, at, "missing `nu = ...`")),
        };
        let gens = match args.opt("gens") {
            Some((p, t)) => Some(
                bracketed(t, "[", "]", p)?
                    .into_iter()
                    .map(|g| self.form(g, p, Some(1)))
                    .collect::<PResult<Vec<_>>>()?,
            ),
            None => None,
        };
        let adapted = match args.opt("adapted") {
            Some((p, t)) => Some(
                bracketed(t, "[", "]", p)?
                    .into_iter()
                    .map(|c| {
                        let (n, cp) = ident(c, p)?;
                        chart
                            .index_of(&n)
                            .ok_or_else(|| diag(DiagnosticKind::Unresolved, cp, format!("`{n}` is not a coordinate")))
                    })
                    .collect::<PResult<Vec<_>>>()?,
            ),
            None => None,
        };
        let f = Foliation::new(name, region, leaf_dim, nu, gens, adapted).map_err(|e| engine(at, e))?;
        self.declare(name, npos)?;
        self.foliations.insert(name.to_string(), f);
        Ok(())
    }

    fn family_stmt(&mut self, name: &str, npos: Pos, list: Vec<Item>, at: Pos) -> PResult<()> {
        let (args, bare) = Args::from_items(list, at)?;
        if let Some(b) = bare.first() {
            return Err(diag(DiagnosticKind::Syntax, b.pos, "expected `key = value`"));
        }
        args.only(&["members", "saturated"])?;
        let (mp, mt) = args.req("members")?;
        let members = bracketed(mt, "[", "]", mp)?
            .into_iter()
            .map(|t| self.lookup(&self.foliations, t, mp, "foliation").cloned())
            .collect::<PResult<Vec<_>>>()?;
        let saturated = match args.opt("saturated") {
            Some((p, t)) => boolean(t, p)?,
            None => false,
        };
        let fam = FoliationFamily::new(self.working_box(at)?, members, saturated).map_err(|e| engine(mp, e))?;
        self.declare(name, npos)?;
        self.families.insert(name.to_string(), fam);
        Ok(())
    }

    fn mu_stmt(&mut self, name: &str, npos: Pos, list: Vec<Item>, _at: Pos) -> PResult<()> {
        let mut decl = BTreeMap::new();
        for it in list {
            let Some((fname, fpos)) = it.key else {
                return Err(diag(DiagnosticKind::Syntax, it.pos, "expected `foliation = one-form` or `foliation = auto`"));
            };
            let f = self
                .foliations
                .get(&fname)
                .ok_or_else(|| diag(DiagnosticKind::Unresolved, fpos, format!("`{fname}` is not a declared foliation")))?;
            let form = match it.value {
                [Token { tok: Tok::Ident(a), .. }] if a == "auto" => {
                    solve_mu(f).map_err(|e| engine(it.pos, e))?;
                    None
                }
                v => Some(self.form(v, it.pos, Some(1))?),
            };
            if decl.insert(fname.clone(), form).is_some() {
                return Err(diag(DiagnosticKind::Duplicate, fpos, format!("`{fname}` given twice")));
            }
        }
        self.declare(name, npos)?;
        self.mus.insert(name.to_string(), decl);
        Ok(())
    }

    fn map_stmt(&mut self, name: &str, npos: Pos, list: Vec<Item>, at: Pos) -> PResult<()> {
        let chart = self.chart(at)?;
        let mut comps: Vec<Option<Expr>> = vec![None; chart.dim()];
        for it in list {
            let (c, cpos, rest) = match it.value {
                [Token { tok: Tok::Ident(c), pos }, Token { tok: Tok::Sym("->"), .. }, rest @ ..] => (c.clone(), *pos, rest),
                _ => return Err(diag(DiagnosticKind::Syntax, it.pos, "expected `coordinate -> expression`")),
            };
            let i = chart
                .index_of(&c)
                .ok_or_else(|| diag(DiagnosticKind::Unresolved, cpos, format!("`{c}` is not a coordinate")))?;
            if comps[i].is_some() {
                return Err(diag(DiagnosticKind::Duplicate, cpos, format!("component `{c}` given twice")));
            }
            comps[i] = Some(self.scalar(rest, it.pos)?);
        }
        let comps = comps
            .into_iter()
            .enumerate()
            .map(|(i, c)| c.unwrap_or_else(|| Expr::symbol(chart.symbol(i).clone())))
            .collect();
        let m = CoordinateMap::new(chart.clone(), chart, comps).map_err(|e| engine(at, e))?;
        self.declare(name, npos)?;
        self.maps.insert(name.to_string(), m);
        Ok(())
    }

    fn ball_stmt(&mut self, kw: &str, name: &str, npos: Pos, list: Vec<Item>, at: Pos) -> PResult<()> {
        let (args, bare) = Args::from_items(list, at)?;
        if let Some(b) = bare.first() {
            return Err(diag(DiagnosticKind::Syntax, b.pos, "expected `key = value`"));
        }
        args.only(&["center", "radius"])?;
        let (cp, ct) = args.req("center")?;
        let center = self.coords_tuple(ct, cp)?;
        let (rp, rt) = args.req("radius")?;
        let radius = self.real(rt, rp)?;
        if kw == "bump" {
            let b = BumpSpec::new(center, radius).map_err(|e| engine(rp, e))?;
            b.check_inside(&self.bounds).map_err(|e| engine(cp, e))?;
            self.declare(name, npos)?;
            self.bumps.insert(name.to_string(), b);
        } else {
            if radius < 0.0 {
                return Err(diag(DiagnosticKind::Invalid, rp, "radius must be non-negative"));
            }
            self.declare(name, npos)?;
            self.balls.insert(name.to_string(), (center, radius));
        }
        Ok(())
    }

    fn closed_stmt(&mut self, name: &str, npos: Pos, list: Vec<Item>, at: Pos) -> PResult<()> {
        let set = match list.as_slice() {
            [Item { key: None, value: [Token { tok: Tok::Ident(w), .. }], .. }] if w == "whole" => ClosedSetSpec::Whole,
            [Item { key: Some((k, _)), value, pos }] => match k.as_str() {
                "zero_set" => ClosedSetSpec::ZeroSet(self.scalar(value, *pos)?),
                "balls" => ClosedSetSpec::ClosedBalls(
                    bracketed(value, "[", "]", *pos)?
                        .into_iter()
                        .map(|t| self.lookup(&self.balls, t, *pos, "ball").cloned())
                        .collect::<PResult<Vec<_>>>()?,
                ),
                "minus_support" => ClosedSetSpec::BoxMinusBalls(
                    bracketed(value, "[", "]", *pos)?
                        .into_iter()
                        .map(|t| self.lookup(&self.bumps, t, *pos, "bump").map(|b| (b.center.clone(), b.outer_radius())))
                        .collect::<PResult<Vec<_>>>()?,
                ),
                other => return Err(diag(DiagnosticKind::Arity, *pos, format!("unknown closed-set key `{other}`"))),
            },
            _ => {
                return Err(diag(
                    DiagnosticKind::Syntax,
                    at,
                    "expected one of `whole`, `zero_set = f`, `balls = [...]`, `minus_support = [...]`",
                ))
            }
        };
        if matches!(&set, ClosedSetSpec::ClosedBalls(b) | ClosedSetSpec::BoxMinusBalls(b) if b.is_empty()) {
            return Err(diag(DiagnosticKind::Arity, at, "ball list is empty"));
        }
        self.declare(name, npos)?;
        self.closed.insert(name.to_string(), set);
        Ok(())
    }

    fn testfn_stmt(&mut self, name: &str, npos: Pos, list: Vec<Item>, at: Pos) -> PResult<()> {
        let chart = self.chart(at)?;
        let (args, bare) = Args::from_items(list, at)?;
        if let Some(b) = bare.first() {
            return Err(diag(DiagnosticKind::Syntax, b.pos, "expected `key = value`"));
        }
        let (kp, kt) = args.req("kind")?;
        let kind = ident(kt, kp)?.0;
        let expr = match kind.as_str() {
            "cover" => {
                args.only(&["kind", "bumps", "set", "samples"])?;
                let (bp, bt) = args.req("bumps")?;
                let bumps = bracketed(bt, "[", "]", bp)?
                    .into_iter()
                    .map(|t| self.lookup(&self.bumps, t, bp, "bump").cloned())
                    .collect::<PResult<Vec<_>>>()?;
                let (sp, st) = args.req("set")?;
                let set = self.lookup(&self.closed, st, sp, "closed set")?.clone();
                let samples = match args.opt("samples") {
                    Some((p, t)) => (uint(t, p)? as usize).clamp(1, 1 << 16),
                    None => 64,
                };
                let mut e = Expr::zero();
                for b in &bumps {
                    e = &e + &bump(&chart, b).map_err(|err| engine(bp, err))?;
                }
                self.covers.insert(name.to_string(), WeakCoverDecl { bumps, set, samples });
                e
            }
            "strong" | "weak" => {
                args.only(&["kind", "f"])?;
                let (fp, ft) = args.req("f")?;
                let f = self.scalar(ft, fp)?;
                if kind == "strong" {
                    strengthen(&f)
                } else {
                    f
                }
            }
            "bump" => {
                args.only(&["kind", "bump"])?;
                let (bp, bt) = args.req("bump")?;
                let b = self.lookup(&self.bumps, bt, bp, "bump")?;
                bump(&chart, b).map_err(|e| engine(bp, e))?
            }
            other => {
                return Err(diag(
                    DiagnosticKind::Invalid,
                    kp,
                    format!("unknown test-function kind `{other}` (cover, strong, weak, bump)"),
                ))
            }
        };
        if let Err(e) = self.declare(name, npos) {
            self.covers.remove(name);
            return Err(e);
        }
        self.scalars.insert(name.to_string(), expr);
        Ok(())
    }

    fn tubular_stmt(&mut self, name: &str, npos: Pos, list: Vec<Item>, at: Pos) -> PResult<()> {
        let chart = self.chart(at)?;
        let (args, bare) = Args::from_items(list, at)?;
        if let Some(b) = bare.first() {
            return Err(diag(DiagnosticKind::Syntax, b.pos, "expected `key = value`"));
        }
        args.only(&["f", "t", "eps", "eps_outer"])?;
        let (fp, ft) = args.req("f")?;
        let f = self.scalar(ft, fp)?;
        let (tp, tt) = args.req("t")?;
        let (t, tpos) = ident(tt, tp)?;
        if chart.index_of(&t).is_none() {
            return Err(diag(DiagnosticKind::Unresolved, tpos, format!("`{t}` is not a coordinate")));
        }
        let (ep, et) = args.req("eps")?;
        let eps = self.constant(et, ep)?;
        let (op, ot) = args.req("eps_outer")?;
        let eps_outer = self.constant(ot, op)?;
        let td = TubularData::new(&chart, f, &t, eps, eps_outer).map_err(|e| engine(ep, e))?;
        self.declare(name, npos)?;
        self.tubulars.insert(name.to_string(), td);
        Ok(())
    }

    fn region_arg(&self, args: &Args, default: Option<Region>, at: Pos) -> PResult<Region> {
        match args.opt("region") {
            Some((p, t)) => Ok(self.lookup(&self.regions, t, p, "region")?.clone()),
            None => match default {
                Some(r) => Ok(r),
                None => self.working_box(at),
            },
        }
    }

    fn foliation_arg(&self, args: &Args, key: &str) -> PResult<Foliation> {
        let (p, t) = args.req(key)?;
        Ok(self.lookup(&self.foliations, t, p, "foliation")?.clone())
    }

    fn family_arg(&self, args: &Args) -> PResult<FoliationFamily> {
        let (p, t) = args.req("family")?;
        Ok(self.lookup(&self.families, t, p, "family")?.clone())
    }

    fn mu_choice_arg(&self, args: &Args, fam: &FoliationFamily) -> PResult<MuChoice> {
        let Some((p, t)) = args.opt("mu") else {
            return Ok(MuChoice::new());
        };
        let decl = self.lookup(&self.mus, t, p, "mu choice")?;
        let mut choice = MuChoice::new();
        for (fname, form) in decl {
            let idx = fam
                .members()
                .iter()
                .position(|f| f.name() == fname)
                .ok_or_else(|| diag(DiagnosticKind::Unresolved, p, format!("`{fname}` is not a member of the family")))?;
            if let Some(form) = form {
                choice = choice.with(idx, form.clone());
            }
        }
        Ok(choice)
    }

    /// A one-form argument, or `auto` to solve it from the foliation.
    fn mu_form_arg(&self, args: &Args, key: &str, f: Option<&Foliation>) -> PResult<Option<Form>> {
        let Some((p, t)) = args.opt(key) else { return Ok(None) };
        if let [Token { tok: Tok::Ident(a), .. }] = t {
            if a == "auto" {
                let Some(f) = f else {
                    return Err(diag(DiagnosticKind::Invalid, p, "`auto` needs a foliation"));
                };
                return Ok(Some(solve_mu(f).map_err(|e| engine(p, e))?));
            }
        }
        Ok(Some(self.form(t, p, Some(1))?))
    }

    fn check_stmt(&mut self, name: &str, npos: Pos, list: Vec<Item>, at: Pos) -> PResult<()> {
        let chart = self.chart(at)?;
        let (args, bare) = Args::from_items(list, at)?;
        if let Some(b) = bare.first() {
            return Err(diag(DiagnosticKind::Syntax, b.pos, "expected `key = value`"));
        }
        let (kp, kt) = args.req("kind")?;
        let kind_name = hyphenated(kt, kp)?;
        let Some(&kind) = CHECK_KINDS.iter().find(|k| **k == kind_name) else {
            return Err(diag(
                DiagnosticKind::Invalid,
                kp,
                format!("unknown check kind `{kind_name}` (registered: {})", CHECK_KINDS.join(", ")),
            ));
        };
        let spec = match kind {
            "frobenius" => {
                args.only(&["kind", "foliation", "nu", "mu", "region"])?;
                if args.opt("foliation").is_some() {
                    let f = self.foliation_arg(&args, "foliation")?;
                    let mu = self.mu_form_arg(&args, "mu", Some(&f))?.ok_or_else(|| diag(DiagnosticKind::Arity, at, "missing `mu = ...`"))?;
                    let region = self.region_arg(&args, Some(f.region().clone()), at)?;
                    CheckSpec::Frobenius { nu: f.nu().clone(), mu, region }
                } else {
                    let (np, nt) = args.req("nu")?;
                    let nu = self.form(nt, np, None)?;
                    let mu = self.mu_form_arg(&args, "mu", None)?.ok_or_else(|| diag(DiagnosticKind::Arity, at, "missing `mu = ...`"))?;
                    CheckSpec::Frobenius { nu, mu, region: self.region_arg(&args, None, at)? }
                }
            }
            "gv-closed" => {
                args.only(&["kind", "mu", "q", "foliation", "region"])?;
                let f = match args.opt("foliation") {
                    Some(_) => Some(self.foliation_arg(&args, "foliation")?),
                    None => None,
                };
                let mu = self.mu_form_arg(&args, "mu", f.as_ref())?.ok_or_else(|| diag(DiagnosticKind::Arity, at, "missing `mu = ...`"))?;
                let q = match (args.opt("q"), &f) {
                    (Some((p, t)), _) => uint(t, p)? as usize,
                    (None, Some(f)) => f.codim(),
                    (None, None) => return Err(diag(DiagnosticKind::Arity, at, "missing `q = ...` or `foliation = ...`")),
                };
                if q > chart.dim() {
                    return Err(diag(DiagnosticKind::Invalid, at, "q exceeds the dimension"));
                }
                let region = self.region_arg(&args, f.map(|f| f.region().clone()), at)?;
                CheckSpec::GvClosed { mu, q, region }
            }
            "overlap-vanishing" => {
                args.only(&["kind", "family", "mu"])?;
                let family = self.family_arg(&args)?;
                let mu = self.mu_choice_arg(&args, &family)?;
                CheckSpec::OverlapVanishing { family, mu }
            }
            "gv-min" => {
                args.only(&["kind", "family", "mu", "stratum"])?;
                let family = self.family_arg(&args)?;
                let mu = self.mu_choice_arg(&args, &family)?;
                let stratum = match args.opt("stratum") {
                    Some((p, t)) => {
                        let s = uint(t, p)? as usize;
                        if s >= family.ranks().len() {
                            return Err(diag(DiagnosticKind::Invalid, p, format!("stratum index {s} out of range")));
                        }
                        s
                    }
                    None => 0,
                };
                CheckSpec::GvMin { family, mu, stratum }
            }
            "basic" => {
                args.only(&["kind", "phi", "foliation", "region"])?;
                let (pp, pt) = args.req("phi")?;
                let phi = self.scalar(pt, pp)?;
                let foliation = self.foliation_arg(&args, "foliation")?;
                let region = self.region_arg(&args, Some(foliation.region().clone()), at)?;
                CheckSpec::Basic { phi, foliation, region }
            }
            "gv-weighted" => {
                args.only(&["kind", "phi", "mu", "foliation"])?;
                let (pp, pt) = args.req("phi")?;
                let phi = self.scalar(pt, pp)?;
                let foliation = self.foliation_arg(&args, "foliation")?;
                let mu = self
                    .mu_form_arg(&args, "mu", Some(&foliation))?
                    .ok_or_else(|| diag(DiagnosticKind::Arity, at, "missing `mu = ...`"))?;
                CheckSpec::GvWeighted { phi, mu, foliation }
            }
            "overlap-identities" | "theta" => {
                if kind == "theta" {
                    args.only(&["kind", "sub", "sup", "region"])?;
                } else {
                    args.only(&["kind", "sub", "sup", "mu1", "mu2", "region"])?;
                }
                let sub = self.foliation_arg(&args, "sub")?;
                let sup = self.foliation_arg(&args, "sup")?;
                let default = sub.region().intersect(sup.region()).map_err(|e| engine(at, e))?;
                let region = self.region_arg(&args, Some(default), at)?;
                if kind == "theta" {
                    CheckSpec::Theta { sub, sup, region }
                } else {
                    let mu1 = self.mu_form_arg(&args, "mu1", Some(&sub))?;
                    let mu2 = self.mu_form_arg(&args, "mu2", Some(&sup))?;
                    CheckSpec::OverlapIdentities { sub, sup, mu1, mu2, region }
                }
            }
            "foliation" => {
                args.only(&["kind", "foliation"])?;
                CheckSpec::Foliation { foliation: self.foliation_arg(&args, "foliation")? }
            }
            "family" => {
                args.only(&["kind", "family"])?;
                CheckSpec::Family { family: self.family_arg(&args)? }
            }
            "invariance" => {
                args.only(&["kind", "map", "foliation"])?;
                let (mp, mt) = args.req("map")?;
                let map = self.lookup(&self.maps, mt, mp, "map")?.clone();
                CheckSpec::Invariance { map, foliation: self.foliation_arg(&args, "foliation")? }
            }
            "ideal" => {
                args.only(&["kind", "form", "gens", "region"])?;
                let (fp, ft) = args.req("form")?;
                let form = self.form(ft, fp, None)?;
                let (gp, gt) = args.req("gens")?;
                let gens = bracketed(gt, "[", "]", gp)?
                    .into_iter()
                    .map(|g| self.form(g, gp, Some(1)))
                    .collect::<PResult<Vec<_>>>()?;
                CheckSpec::Ideal { form, gens, region: self.region_arg(&args, None, at)? }
            }
            "equal" => {
                args.only(&["kind", "lhs", "rhs", "region"])?;
                let (lp, lt) = args.req("lhs")?;
                let (rp, rt) = args.req("rhs")?;
                let lhs = self.form(lt, lp, None)?;
                let rhs = self.form(rt, rp, Some(lhs.degree()))?;
                CheckSpec::Equal { lhs, rhs, region: self.region_arg(&args, None, at)? }
            }
            "exactness" => {
                args.only(&["kind", "nu", "tau", "region"])?;
                let (np, nt) = args.req("nu")?;
                let nu = self.form(nt, np, None)?;
                if nu.degree() == 0 {
                    return Err(diag(DiagnosticKind::Degree, np, "a primitive needs a form of positive degree"));
                }
                let (tp, tt) = args.req("tau")?;
                let tau = self.form(tt, tp, Some(nu.degree() - 1))?;
                CheckSpec::Exactness { nu, tau, region: self.region_arg(&args, None, at)? }
            }
            "flatness" => {
                args.only(&["kind", "f", "set"])?;
                let (fp, ft) = args.req("f")?;
                let f = self.scalar(ft, fp)?;
                let (sp, st) = args.req("set")?;
                CheckSpec::Flatness { f, set: self.lookup(&self.closed, st, sp, "closed set")?.clone() }
            }
            "weak-cover" => {
                args.only(&["kind", "testfn"])?;
                let (tp, tt) = args.req("testfn")?;
                CheckSpec::WeakCover { cover: self.lookup(&self.covers, tt, tp, "cover test function")?.clone() }
            }
            "prex02" => {
                args.only(&["kind", "foliation", "phi", "mu", "tubular", "tau"])?;
                let foliation = self.foliation_arg(&args, "foliation")?;
                let (pp, pt) = args.req("phi")?;
                let phi = self.scalar(pt, pp)?;
                let mu = self
                    .mu_form_arg(&args, "mu", Some(&foliation))?
                    .ok_or_else(|| diag(DiagnosticKind::Arity, at, "missing `mu = ...`"))?;
                let (tp, tt) = args.req("tubular")?;
                let tubular = self.lookup(&self.tubulars, tt, tp, "tubular")?.clone();
                let (up, ut) = args.req("tau")?;
                let tau = self.form(ut, up, Some(2 * foliation.codim()))?;
                CheckSpec::Prex02 { foliation, phi, mu, tubular, tau }
            }
            "df-closed" => {
                args.only(&["kind", "f", "form", "region"])?;
                let (fp, ft) = args.req("f")?;
                let f = self.scalar(ft, fp)?;
                let (wp, wt) = args.req("form")?;
                let form = self.form(wt, wp, None)?;
                CheckSpec::DfClosed { f, form, region: self.region_arg(&args, None, at)? }
            }
            "decomposition" => {
                args.only(&["kind", "nu", "q", "alpha", "beta", "tubular", "region"])?;
                let (np, nt) = args.req("nu")?;
                let nu = self.form(nt, np, None)?;
                let (qp, qt) = args.req("q")?;
                let q = uint(qt, qp)? as usize;
                if q > chart.dim() {
                    return Err(diag(DiagnosticKind::Invalid, qp, "q exceeds the dimension"));
                }
                let (ap, atoks) = args.req("alpha")?;
                let alpha = self.form(atoks, ap, Some(nu.degree()))?;
                if nu.degree() == 0 {
                    return Err(diag(DiagnosticKind::Degree, np, "nu must have positive degree"));
                }
                let (bp, bt) = args.req("beta")?;
                let beta = self.form(bt, bp, Some(nu.degree() - 1))?;
                let (tp, tt) = args.req("tubular")?;
                let tubular = self.lookup(&self.tubulars, tt, tp, "tubular")?.clone();
                CheckSpec::Decomposition { nu, q, alpha, beta, tubular, region: self.region_arg(&args, None, at)? }
            }
            _ => {
                args.only(&["kind", "family", "point", "expect"])?;
                let family = self.family_arg(&args)?;
                let (pp, pt) = args.req("point")?;
                let point = self.coords_tuple(pt, pp)?;
                let expect = match args.opt("expect") {
                    Some((p, t)) => Some(uint(t, p)? as usize),
                    None => None,
                };
                CheckSpec::Rank { family, point, expect }
            }
        };
        self.declare(name, npos)?;
        self.checks.push(CheckDirective {
            name: name.to_string(),
            kind,
            pos: at,
            spec,
        });
        Ok(())
    }
}

/// Parses and resolves a document; on failure returns every diagnostic
/// found, each with its source position.
pub fn parse_spec(text: &str) -> Result<SpecDocument, Vec<Diagnostic>> {
    let toks = lex(text)?;
    let mut b = Builder::new();
    let mut start = 0;
    for i in 0..toks.len() {
        if matches!(toks[i].tok, Tok::Newline | Tok::Eof) {
            let stmt = &toks[start..i];
            start = i + 1;
            if stmt.is_empty() {
                continue;
            }
            if let Err(d) = b.statement(stmt) {
                b.diags.push(d);
            }
        }
    }
    if b.chart.is_none() && b.diags.is_empty() {
        b.diags.push(diag(DiagnosticKind::Invalid, Pos { line: 1, col: 1 }, "document declares no chart"));
    }
    if !b.diags.is_empty() {
        return Err(b.diags);
    }
    let chart = b.chart.expect("chart checked above");
    Ok(SpecDocument {
        working_box: b.working_box.expect("set with the chart"),
        chart,
        config: b.config,
        seed_declared: b.seed_declared,
        scalars: b.scalars,
        forms: b.forms,
        regions: b.regions,
        foliations: b.foliations,
        families: b.families,
        mus: b.mus,
        maps: b.maps,
        bumps: b.bumps,
        closed_sets: b.closed,
        covers: b.covers,
        tubulars: b.tubulars,
        checks: b.checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(text: &str) -> SpecDocument {
        parse_spec(text).unwrap_or_else(|d| panic!("{}", d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\n")))
    }

    const HEAD: &str = "chart: x in [-2, 2]; y in [-2, 2]; z in [-2, 2]\n";

    #[test]
    fn minimal_document() {
        let doc = ok("chart: x in [-1, 1]; y in [-1, 1]\nregion all\nfoliation F: region = all; leaf_dim = 1; nu = dy\ncheck c: kind = frobenius; foliation = F; mu = 0\n");
        assert_eq!(doc.checks.len(), 1);
        assert_eq!(doc.checks[0].kind, "frobenius");
    }

    #[test]
    fn unresolved_reference_is_located() {
        let errs = parse_spec(&format!("{HEAD}form a = dx\ncheck c: kind = exactness; nu = d(a); tau = mu7\n")).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].kind, DiagnosticKind::Unresolved);
        assert_eq!(errs[0].pos.line, 3);
        assert!(errs[0].message.contains("mu7"));
    }

    #[test]
    fn expressions_follow_precedence() {
        let doc = ok(&format!(
            "{HEAD}scalar a = 3/2*x^2 - -y\nform w = x*dx^dy + 2*dz^dx\nform v = (dy - y*dx)^(z*dx)\nscalar e = 0.25e1\nform k = d(x*dy)\n"
        ));
        assert_eq!(doc.scalars["a"].to_string(), "3/2*x^2 + y");
        assert_eq!(doc.scalars["e"], Expr::ratio(5, 2));
        let c = &doc.chart;
        let dxdy = Form::monomial(c, &[0, 1], Expr::one());
        assert_eq!(doc.forms["k"], dxdy);
        assert_eq!(doc.forms["v"], -&dxdy.scale(&Expr::var("z")));
        assert!(parse_spec(&format!("{HEAD}form w = dx + dx^dy\n")).is_err());
        assert!(parse_spec(&format!("{HEAD}form w = dx*dy\n")).is_err());
    }

    #[test]
    fn form_text_reparses() {
        let doc = ok(&format!("{HEAD}form w = -(1 + y*z)*dx^dy + z*dy^dz + x^(-1)*y*dx^dz\n"));
        let text = doc.forms["w"].to_string();
        assert_eq!(ok(&format!("{HEAD}form w = {text}\n")).forms["w"], doc.forms["w"]);
        let doc2 = ok(&format!("{HEAD}form w = exp(-x)*(dy - y*dx) + psi0(x/2)*dz\n"));
        let text = doc2.forms["w"].to_string();
        let doc3 = ok(&format!("{HEAD}form w = {text}\n"));
        assert_eq!(doc2.forms["w"], doc3.forms["w"]);
    }

    #[test]
    fn limits_are_enforced() {
        assert!(parse_spec(&format!("{HEAD}scalar a = x^33\n")).is_err());
        assert!(parse_spec(&format!("{HEAD}scalar a = (x+y+z+1)^32\n")).is_err());
        assert!(parse_spec(&format!("{HEAD}scalar a = (x+y+z+1)^8\n")).is_ok());
        let deep = format!("{HEAD}scalar a = {}x{}\n", "(".repeat(200), ")".repeat(200));
        assert!(parse_spec(&deep).is_err());
        assert!(parse_spec(&format!("{HEAD}scalar a = 1e99999\n")).is_err());
    }

    #[test]
    fn duplicates_and_reserved_names() {
        assert!(parse_spec(&format!("{HEAD}scalar a = x\nscalar a = y\n")).is_err());
        assert!(parse_spec(&format!("{HEAD}scalar dx = x\n")).is_err());
        assert!(parse_spec(&format!("{HEAD}scalar x = 1\n")).is_err());
        assert!(parse_spec("scalar a = 1\n").is_err());
    }

    #[test]
    fn unknown_check_kind() {
        let errs = parse_spec(&format!("{HEAD}check c: kind = magic\n")).unwrap_err();
        assert_eq!(errs[0].kind, DiagnosticKind::Invalid);
    }

    #[test]
    fn regions_and_config() {
        let doc = ok(&format!(
            "{HEAD}config: seed = 7; samples = 16; tol = 1e-8\nregion U: x > 0; y < 1; z in [0, 1]\nregion V: U; x < 1\n"
        ));
        assert_eq!(doc.config.rng_seed, 7);
        assert!(doc.seed_declared);
        assert_eq!(doc.config.sample_count, 16);
        assert_eq!(doc.regions["V"].constraints().len(), 3);
        assert_eq!(doc.regions["V"].bounds()[2], (0.0, 1.0));
    }
}

#[cfg(test)]
mod totality {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn arbitrary_text_yields_document_or_diagnostics(text in "[a-z0-9 =:;,()\\[\\]+*/^.<>#\\\\\n-]{0,160}") {
            let doc = format!("chart: x in [-1, 1]; y in [-1, 1]\n{text}\n");
            match parse_spec(&doc) {
                Ok(_) => {}
                Err(ds) => prop_assert!(!ds.is_empty()),
            }
        }
    }
}
