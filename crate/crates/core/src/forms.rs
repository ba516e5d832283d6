//! Sparse differential forms over a chart: wedge, exterior derivative,
//! powers, pullback, and the zero / ideal-membership tests built on them.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use nalgebra::DMatrix;

use crate::chart::Chart;
use crate::config::ZeroTestConfig;
use crate::error::{Error, Result};
use crate::region::Region;
use crate::symbolic::{Expr, Point, Symbol};
use crate::verdict::{components_zero_on, draw_samples, Verdict};

/// Degree-`p` form; keys are strictly increasing coordinate index tuples of
/// length `p`, absent keys are zero coefficients.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Form {
    chart: Chart,
    degree: usize,
    coeffs: BTreeMap<Vec<usize>, Expr>,
}

/// Sign of the permutation sorting `idx`, or `None` on a repeated index.
fn sort_sign(idx: &[usize]) -> Option<(Vec<usize>, bool)> {
    let mut v = idx.to_vec();
    let mut odd = false;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            odd = !odd;
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((v, odd))
}

impl Form {
    pub fn zero(chart: &Chart, degree: usize) -> Form {
        Form {
            chart: chart.clone(),
            degree,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn scalar(chart: &Chart, e: Expr) -> Form {
        let mut f = Form::zero(chart, 0);
        f.add_term(Vec::new(), e);
        f
    }

    pub fn one(chart: &Chart) -> Form {
        Form::scalar(chart, Expr::one())
    }

    /// `c dx_{i1} ^ ... ^ dx_{ip}` for indices in any order.
    pub fn monomial(chart: &Chart, indices: &[usize], c: Expr) -> Form {
        let mut f = Form::zero(chart, indices.len());
        if let Some((sorted, odd)) = sort_sign(indices) {
            f.add_term(sorted, if odd { -&c } else { c });
        }
        f
    }

    /// Differential of the named coordinate.
    pub fn dx(chart: &Chart, name: &str) -> Result<Form> {
        let i = chart.require(name)?;
        Ok(Form::monomial(chart, &[i], Expr::one()))
    }

    /// Total differential of a scalar.
    pub fn differential(chart: &Chart, e: &Expr) -> Form {
        ext_d(&Form::scalar(chart, e.clone()))
    }

    pub fn from_coeffs(chart: &Chart, degree: usize, coeffs: impl IntoIterator<Item = (Vec<usize>, Expr)>) -> Result<Form> {
        let mut f = Form::zero(chart, degree);
        for (idx, c) in coeffs {
            if idx.len() != degree {
                return Err(Error::DegreeMismatch {
                    expected: degree,
                    found: idx.len(),
                });
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= chart.dim()) {
                return Err(Error::UnknownCoordinate(format!("index {bad}")));
            }
            if let Some((sorted, odd)) = sort_sign(&idx) {
                f.add_term(sorted, if odd { -&c } else { c });
            }
        }
        Ok(f)
    }

    fn add_term(&mut self, idx: Vec<usize>, c: Expr) {
        if c.is_zero() {
            return;
        }
        match self.coeffs.entry(idx) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get() + &c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &BTreeMap<Vec<usize>, Expr> {
        &self.coeffs
    }

    pub fn coefficient(&self, idx: &[usize]) -> Expr {
        self.coeffs.get(idx).cloned().unwrap_or_default()
    }

    /// Coefficient of a 0-form.
    pub fn as_scalar(&self) -> Option<Expr> {
        (self.degree == 0).then(|| self.coefficient(&[]))
    }

    /// Structural zero of the normal form.
    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn map_coeffs(&self, mut f: impl FnMut(&Expr) -> Expr) -> Form {
        let mut out = Form::zero(&self.chart, self.degree);
        for (idx, c) in &self.coeffs {
            out.add_term(idx.clone(), f(c));
        }
        out
    }

    pub fn try_map_coeffs(&self, mut f: impl FnMut(&Expr) -> Result<Expr>) -> Result<Form> {
        let mut out = Form::zero(&self.chart, self.degree);
        for (idx, c) in &self.coeffs {
            out.add_term(idx.clone(), f(c)?);
        }
        Ok(out)
    }

    pub fn scale(&self, e: &Expr) -> Form {
        if e.is_zero() {
            return Form::zero(&self.chart, self.degree);
        }
        self.map_coeffs(|c| c * e)
    }

    pub fn checked_add(&self, other: &Form) -> Result<Form> {
        self.chart.ensure_same(&other.chart)?;
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                found: other.degree,
            });
        }
        let mut out = self.clone();
        for (idx, c) in &other.coeffs {
            out.add_term(idx.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Form) -> Result<Form> {
        self.checked_add(&-other)
    }

    /// Labelled coefficients, e.g. `("dx^dy", c)`.
    pub fn components(&self) -> Vec<(String, Expr)> {
        self.coeffs
            .iter()
            .map(|(idx, c)| (self.basis_name(idx), c.clone()))
            .collect()
    }

    pub fn basis_name(&self, idx: &[usize]) -> String {
        if idx.is_empty() {
            return "1".into();
        }
        idx.iter()
            .map(|&i| format!("d{}", self.chart.symbol(i)))
            .collect::<Vec<_>>()
            .join("^")
    }

    /// Coefficients at a point, keyed like the sparse map.
    pub fn eval(&self, p: &Point) -> Result<BTreeMap<Vec<usize>, f64>> {
        let mut out = BTreeMap::new();
        for (idx, c) in &self.coeffs {
            out.insert(idx.clone(), c.eval(p)?);
        }
        Ok(out)
    }

    /// Dense covector of a 1-form at a point.
    pub fn covector_at(&self, p: &Point) -> Result<Vec<f64>> {
        if self.degree != 1 {
            return Err(Error::DegreeMismatch {
                expected: 1,
                found: self.degree,
            });
        }
        let mut v = vec![0.0; self.chart.dim()];
        for (idx, c) in &self.coeffs {
            v[idx[0]] = c.eval(p)?;
        }
        Ok(v)
    }

    pub fn depends_on(&self, s: &Symbol) -> bool {
        self.coeffs.values().any(|c| c.depends_on(s))
    }

    /// Whether some basis differential involves the named coordinate.
    pub fn uses_differential(&self, i: usize) -> bool {
        self.coeffs.keys().any(|idx| idx.contains(&i))
    }

    pub fn simplify_on(&self, r: &Region) -> Form {
        self.map_coeffs(|c| r.simplify(c))
    }

    pub fn to_latex(&self) -> String {
        if self.coeffs.is_empty() {
            return "0".into();
        }
        let mut out = String::new();
        for (k, (idx, c)) in self.coeffs.iter().enumerate() {
            let basis = idx
                .iter()
                .map(|&i| format!("d{}", crate::symbolic::latex_symbol(self.chart.symbol(i).as_str())))
                .collect::<Vec<_>>()
                .join(" \\wedge ");
            let (neg, mag) = match c.as_constant() {
                Some(v) if num_traits::Signed::is_negative(&v) => (true, Expr::constant(-v)),
                _ if c.term_count() == 1 && c.leading_coefficient().is_some_and(|v| num_traits::Signed::is_negative(&v)) => (true, -c),
                _ => (false, c.clone()),
            };
            if k > 0 {
                out.push_str(if neg { " - " } else { " + " });
            } else if neg {
                out.push('-');
            }
            let coef = if mag.is_one() && !basis.is_empty() {
                String::new()
            } else if mag.term_count() > 1 && !basis.is_empty() {
                format!("\\left({}\\right)", mag.to_latex())
            } else {
                mag.to_latex()
            };
            match (coef.is_empty(), basis.is_empty()) {
                (true, _) => out.push_str(&basis),
                (false, true) => out.push_str(&coef),
                (false, false) => {
                    out.push_str(&coef);
                    out.push_str("\\, ");
                    out.push_str(&basis);
                }
            }
        }
        out
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return f.write_str("0");
        }
        for (k, (idx, c)) in self.coeffs.iter().enumerate() {
            let term = if idx.is_empty() {
                let s = c.to_string();
                if c.term_count() > 1 && k > 0 {
                    format!("({s})")
                } else {
                    s
                }
            } else {
                let basis = self.basis_name(idx);
                if c.is_one() {
                    basis
                } else if (-c).is_one() {
                    format!("-{basis}")
                } else if c.term_count() == 1 {
                    format!("{c}*{basis}")
                } else {
                    format!("({c})*{basis}")
                }
            };
            if k == 0 {
                f.write_str(&term)?;
            } else if let Some(rest) = term.strip_prefix('-') {
                write!(f, " - {rest}")?;
            } else {
                write!(f, " + {term}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-form[{}]", self.degree, self)
    }
}

impl Neg for &Form {
    type Output = Form;
    fn neg(self) -> Form {
        self.map_coeffs(|c| -c)
    }
}

impl Neg for Form {
    type Output = Form;
    fn neg(self) -> Form {
        -&self
    }
}

/// Panicking sum for forms known to share chart and degree.
impl Add for &Form {
    type Output = Form;
    fn add(self, rhs: &Form) -> Form {
        self.checked_add(rhs).expect("forms of one chart and degree")
    }
}

impl Sub for &Form {
    type Output = Form;
    fn sub(self, rhs: &Form) -> Form {
        self.checked_sub(rhs).expect("forms of one chart and degree")
    }
}

pub fn wedge(a: &Form, b: &Form) -> Result<Form> {
    a.chart.ensure_same(&b.chart)?;
    let mut out = Form::zero(&a.chart, a.degree + b.degree);
    if out.degree > a.chart.dim() {
        return Ok(out);
    }
    for (i, ca) in &a.coeffs {
        for (j, cb) in &b.coeffs {
            if j.iter().any(|x| i.contains(x)) {
                continue;
            }
            let inversions: usize = i.iter().map(|x| j.iter().filter(|y| *y < x).count()).sum();
            let mut idx: Vec<usize> = i.iter().chain(j).copied().collect();
            idx.sort_unstable();
            let c = ca * cb;
            out.add_term(idx, if inversions % 2 == 1 { -&c } else { c });
        }
    }
    Ok(out)
}

/// Wedge of a list of forms on one chart; the empty product is the 0-form 1.
pub fn wedge_all<'a>(chart: &Chart, forms: impl IntoIterator<Item = &'a Form>) -> Result<Form> {
    let mut acc = Form::one(chart);
    for f in forms {
        acc = wedge(&acc, f)?;
    }
    Ok(acc)
}

pub fn ext_d(a: &Form) -> Form {
    let chart = &a.chart;
    let mut out = Form::zero(chart, a.degree + 1);
    if out.degree > chart.dim() {
        return out;
    }
    for (idx, c) in &a.coeffs {
        for j in 0..chart.dim() {
            if idx.contains(&j) {
                continue;
            }
            let dc = c.partial(chart.symbol(j));
            if dc.is_zero() {
                continue;
            }
            let before = idx.iter().filter(|&&i| i < j).count();
            let mut new_idx = idx.clone();
            new_idx.insert(before, j);
            out.add_term(new_idx, if before % 2 == 1 { -&dc } else { dc });
        }
    }
    out
}

/// k-fold wedge power; the 0th power is the 0-form 1.
pub fn form_power(a: &Form, k: usize) -> Form {
    let mut acc = Form::one(&a.chart);
    for _ in 0..k {
        if acc.is_zero() {
            return Form::zero(&a.chart, a.degree * k);
        }
        acc = wedge(&acc, a).expect("same chart");
    }
    acc
}

/// Smooth map given by one component expression per target coordinate,
/// each written in the source coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateMap {
    source: Chart,
    target: Chart,
    components: Vec<Expr>,
}

impl CoordinateMap {
    pub fn new(source: Chart, target: Chart, components: Vec<Expr>) -> Result<Self> {
        if components.len() != target.dim() {
            return Err(Error::Domain(format!(
                "map has {} components for {} target coordinates",
                components.len(),
                target.dim()
            )));
        }
        for c in &components {
            if let Some(s) = c.free_symbols().into_iter().find(|s| source.index_of(s.as_str()).is_none()) {
                return Err(Error::UnknownCoordinate(s.to_string()));
            }
        }
        Ok(CoordinateMap {
            source,
            target,
            components,
        })
    }

    pub fn identity(chart: &Chart) -> Self {
        let components = chart.coords().iter().map(|s| Expr::symbol(s.clone())).collect();
        CoordinateMap {
            source: chart.clone(),
            target: chart.clone(),
            components,
        }
    }

    pub fn source(&self) -> &Chart {
        &self.source
    }

    pub fn target(&self) -> &Chart {
        &self.target
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn substitution(&self) -> BTreeMap<Symbol, Expr> {
        self.target.coords().iter().cloned().zip(self.components.iter().cloned()).collect()
    }

    /// Image of a source point.
    pub fn apply(&self, p: &Point) -> Result<Point> {
        let values = self
            .components
            .iter()
            .map(|c| c.eval(p))
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(self.target.point(&values))
    }
}

pub fn pullback(m: &CoordinateMap, a: &Form) -> Result<Form> {
    m.target.ensure_same(&a.chart)?;
    let subst = m.substitution();
    let diffs: Vec<Form> = m.components.iter().map(|c| Form::differential(&m.source, c)).collect();
    let mut out = Form::zero(&m.source, a.degree);
    for (idx, c) in &a.coeffs {
        let coef = c.substitute(&subst)?;
        let term = wedge_all(&m.source, idx.iter().map(|&i| &diffs[i]))?;
        out = out.checked_add(&term.scale(&coef))?;
    }
    Ok(out)
}

/// Zero test of every coefficient against one shared sample set.
pub fn form_zero_on(a: &Form, r: &Region, cfg: &ZeroTestConfig) -> Result<Verdict> {
    a.chart.ensure_same(r.chart())?;
    Ok(match components_zero_on(&a.components(), r, cfg)? {
        Verdict::NonZero(mut w) => {
            w.residual = a.simplify_on(r).to_string();
            Verdict::NonZero(w)
        }
        v => v,
    })
}

pub fn forms_equal(a: &Form, b: &Form, r: &Region, cfg: &ZeroTestConfig) -> Result<Verdict> {
    if a.degree != b.degree {
        return Err(Error::DegreeMismatch {
            expected: a.degree,
            found: b.degree,
        });
    }
    form_zero_on(&a.checked_sub(b)?, r, cfg)
}

/// Normalized Gram determinant `det(G G^T) / prod |g_i|^2` of covectors;
/// 1 for orthogonal rows, 0 for dependent ones.
pub fn gram_ratio(rows: &[Vec<f64>]) -> f64 {
    if rows.is_empty() {
        return 1.0;
    }
    let n = rows.len();
    let m = rows[0].len();
    let g = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
    let gram = &g * g.transpose();
    let norms: f64 = (0..n).map(|i| gram[(i, i)]).product();
    if norms == 0.0 {
        return 0.0;
    }
    gram.determinant() / norms
}

/// Threshold under which sampled generators count as dependent.
pub const GRAM_TOLERANCE: f64 = 1e-9;

/// Checks pointwise independence of 1-forms at the region samples.
pub fn check_independent(gens: &[Form], r: &Region, cfg: &ZeroTestConfig) -> Result<()> {
    if gens.is_empty() {
        return Ok(());
    }
    for g in gens {
        g.chart.ensure_same(r.chart())?;
        if g.degree != 1 {
            return Err(Error::DegreeMismatch {
                expected: 1,
                found: g.degree,
            });
        }
    }
    for p in draw_samples(r, cfg)? {
        let rows = gens.iter().map(|g| g.covector_at(&p)).collect::<Result<Vec<_>>>()?;
        let ratio = gram_ratio(&rows);
        if !(ratio > GRAM_TOLERANCE) {
            return Err(Error::precondition(
                format!("generators are dependent (normalized Gram determinant {ratio:e})"),
                Some(p),
            ));
        }
    }
    Ok(())
}

/// Membership of `b` in the ideal generated by pointwise independent
/// 1-forms, decided by `b ^ g1 ^ ... ^ gq = 0`.
pub fn ideal_member(b: &Form, gens: &[Form], r: &Region, cfg: &ZeroTestConfig) -> Result<Verdict> {
    b.chart.ensure_same(r.chart())?;
    check_independent(gens, r, cfg)?;
    let w = wedge(b, &wedge_all(&b.chart, gens)?)?;
    form_zero_on(&w, r, cfg)
}


#[cfg(test)]
mod laws {
    use proptest::prelude::*;

    use super::*;
    use crate::random::{random_form, random_map, rng, Shape};

    fn setup() -> (Chart, Region, ZeroTestConfig) {
        let c = Chart::new(["x", "y", "z"]);
        let r = Region::new(c.clone(), "box", vec![(-1.0, 1.0); 3]).unwrap();
        (c, r, ZeroTestConfig::default())
    }

    fn sign(k: usize) -> Expr {
        if k % 2 == 0 {
            Expr::one()
        } else {
            Expr::int(-1)
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn d_squared_vanishes(seed: u64, k in 0usize..3) {
            let (c, r, cfg) = setup();
            let w = random_form(&mut rng(seed), &c, k, &Shape::default());
            prop_assert!(form_zero_on(&ext_d(&ext_d(&w)), &r, &cfg).unwrap().is_proved());
        }

        #[test]
        fn graded_leibniz(seed: u64, p in 0usize..3, q in 0usize..2) {
            let (c, r, cfg) = setup();
            let mut g = rng(seed);
            let a = random_form(&mut g, &c, p, &Shape::default());
            let b = random_form(&mut g, &c, q, &Shape::default());
            let lhs = ext_d(&wedge(&a, &b).unwrap());
            let rhs = &wedge(&ext_d(&a), &b).unwrap() + &wedge(&a, &ext_d(&b)).unwrap().scale(&sign(p));
            prop_assert!(forms_equal(&lhs, &rhs, &r, &cfg).unwrap().is_proved());
        }

        #[test]
        fn graded_anticommutativity(seed: u64, p in 0usize..4, q in 0usize..4) {
            let (c, r, cfg) = setup();
            let mut g = rng(seed);
            let a = random_form(&mut g, &c, p, &Shape::default());
            let b = random_form(&mut g, &c, q, &Shape::default());
            let lhs = wedge(&a, &b).unwrap();
            let rhs = wedge(&b, &a).unwrap().scale(&sign(p * q));
            prop_assert!(forms_equal(&lhs, &rhs, &r, &cfg).unwrap().is_proved());
        }

        #[test]
        fn pullback_is_natural(seed: u64, k in 0usize..3) {
            let (c, r, cfg) = setup();
            let mut g = rng(seed);
            let m = random_map(&mut g, &c, &Shape::polynomial());
            let a = random_form(&mut g, &c, k, &Shape::polynomial());
            let b = random_form(&mut g, &c, 1, &Shape::polynomial());
            let d_first = pullback(&m, &ext_d(&a)).unwrap();
            let d_after = ext_d(&pullback(&m, &a).unwrap());
            prop_assert!(forms_equal(&d_first, &d_after, &r, &cfg).unwrap().is_proved());
            let w = pullback(&m, &wedge(&a, &b).unwrap()).unwrap();
            let w2 = wedge(&pullback(&m, &a).unwrap(), &pullback(&m, &b).unwrap()).unwrap();
            prop_assert!(forms_equal(&w, &w2, &r, &cfg).unwrap().is_proved());
        }
    }
}
