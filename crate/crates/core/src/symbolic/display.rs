use std::fmt::{self, Write};

use num_traits::{One, Signed};

use super::expr::{AtomKind, Expr, Gen, Monomial, Rational};

fn write_factor(out: &mut String, g: &Gen, e: i32) {
    match g {
        Gen::Var(s) => out.push_str(s.as_str()),
        Gen::Atom(k, a) => {
            let _ = write!(out, "{}({})", k.name(), a);
        }
        Gen::Denom(p) => {
            let _ = write!(out, "({p})");
        }
    }
    if e < 0 {
        let _ = write!(out, "^({e})");
    } else if e != 1 {
        let _ = write!(out, "^{e}");
    }
}

fn write_monomial(out: &mut String, m: &Monomial) {
    for (i, (g, e)) in m.factors().iter().enumerate() {
        if i > 0 {
            out.push('*');
        }
        write_factor(out, g, *e);
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut out = String::new();
        for (i, (m, c)) in self.terms().enumerate() {
            let neg = c.is_negative();
            match (i, neg) {
                (0, true) => out.push('-'),
                (0, false) => {}
                (_, true) => out.push_str(" - "),
                (_, false) => out.push_str(" + "),
            }
            let a = c.abs();
            if m.is_one() {
                out.push_str(&a.to_string());
            } else {
                if !a.is_one() {
                    let _ = write!(out, "{a}*");
                }
                write_monomial(&mut out, m);
            }
        }
        f.write_str(&out)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

fn latex_rational(c: &Rational) -> String {
    if c.denom().is_one() {
        c.numer().to_string()
    } else {
        format!("\\frac{{{}}}{{{}}}", c.numer(), c.denom())
    }
}

fn latex_factor(g: &Gen, e: i32) -> String {
    let base = match g {
        Gen::Var(s) => latex_symbol(s.as_str()),
        Gen::Atom(AtomKind::Exp, a) => return exp_latex(a, e),
        Gen::Atom(AtomKind::Log, a) => format!("\\log\\left({}\\right)", a.to_latex()),
        Gen::Atom(AtomKind::Psi0, a) => format!("\\psi_0\\left({}\\right)", a.to_latex()),
        Gen::Atom(AtomKind::FlatExp, a) => {
            format!("\\operatorname{{flatexp}}\\left({}\\right)", a.to_latex())
        }
        Gen::Denom(p) => format!("\\left({}\\right)", p.to_latex()),
    };
    if e == 1 {
        base
    } else {
        format!("{base}^{{{e}}}")
    }
}

fn exp_latex(a: &Expr, e: i32) -> String {
    if e == 1 {
        format!("e^{{{}}}", a.to_latex())
    } else {
        format!("\\left(e^{{{}}}\\right)^{{{e}}}", a.to_latex())
    }
}

/// `x1` becomes `x_{1}`; anything else is typeset verbatim.
pub(crate) fn latex_symbol(name: &str) -> String {
    let split = name.find(|c: char| c.is_ascii_digit());
    match split {
        Some(i) if i > 0 && name[i..].chars().all(|c| c.is_ascii_digit()) => {
            format!("{}_{{{}}}", &name[..i], &name[i..])
        }
        _ => name.to_string(),
    }
}

impl Expr {
    pub fn to_latex(&self) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut out = String::new();
        for (i, (m, c)) in self.terms().enumerate() {
            let neg = c.is_negative();
            match (i, neg) {
                (0, true) => out.push('-'),
                (0, false) => {}
                (_, true) => out.push_str(" - "),
                (_, false) => out.push_str(" + "),
            }
            let a = c.abs();
            if m.is_one() {
                out.push_str(&latex_rational(&a));
            } else {
                if !a.is_one() {
                    out.push_str(&latex_rational(&a));
                    out.push_str(" \\, ");
                }
                let parts: Vec<String> = m.factors().iter().map(|(g, e)| latex_factor(g, *e)).collect();
                out.push_str(&parts.join(" \\, "));
            }
        }
        out
    }
}
