use serde::{Deserialize, Serialize};

use super::expr::{AtomKind, Expr, Gen, Monomial};
use num_traits::ToPrimitive;

/// Binding of every chart coordinate to a binary-64 value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub coords: Vec<(String, f64)>,
}

impl Point {
    pub fn new<S: Into<String>>(coords: impl IntoIterator<Item = (S, f64)>) -> Self {
        Point {
            coords: coords.into_iter().map(|(s, v)| (s.into(), v)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.coords.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn values(&self) -> Vec<f64> {
        self.coords.iter().map(|(_, v)| *v).collect()
    }

    pub fn with(&self, name: &str, value: f64) -> Point {
        let mut p = self.clone();
        for (n, v) in &mut p.coords {
            if n == name {
                *v = value;
            }
        }
        p
    }
}

impl std::fmt::Display for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("{")?;
        for (i, (n, v)) in self.coords.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{n}: {v}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("coordinate `{0}` is not bound by the point")]
    Unbound(String),
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("log of non-positive value {value} in `{expr}`")]
    LogDomain { expr: String, value: f64 },
}

pub fn psi0_value(t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let e = (-1.0 / (t * t)).exp();
    e / (1.0 + e)
}

pub fn flatexp_value(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

impl Expr {
    /// IEEE evaluation at a point.
    pub fn eval(&self, p: &Point) -> Result<f64, EvalError> {
        self.eval_with_scale(p).map(|(v, _)| v)
    }

    /// Value together with the sum of absolute term values, used as the
    /// magnitude scale for relative tolerances.
    pub fn eval_with_scale(&self, p: &Point) -> Result<(f64, f64), EvalError> {
        let mut sum = 0.0;
        let mut scale = 0.0;
        for (m, c) in self.terms() {
            let t = c.to_f64().unwrap_or(f64::NAN) * eval_monomial(m, p)?;
            sum += t;
            scale += t.abs();
        }
        Ok((sum, scale))
    }
}

fn eval_monomial(m: &Monomial, p: &Point) -> Result<f64, EvalError> {
    // a vanishing flat factor kills the term before any other factor is
    // looked at, which realizes the extension by zero of flat atoms
    for (g, e) in m.factors() {
        if let Gen::Atom(kind, _) = g {
            if kind.is_flat() && *e > 0 && eval_gen(g, p)? == 0.0 {
                return Ok(0.0);
            }
        }
    }
    let mut acc = 1.0;
    for (g, e) in m.factors() {
        let v = eval_gen(g, p)?;
        if *e < 0 && v == 0.0 {
            return Err(EvalError::DivisionByZero(gen_text(g)));
        }
        acc *= v.powi(*e);
    }
    Ok(acc)
}

fn gen_text(g: &Gen) -> String {
    match g {
        Gen::Var(s) => s.to_string(),
        Gen::Atom(k, a) => format!("{}({})", k.name(), a),
        Gen::Denom(p) => p.to_string(),
    }
}

fn eval_gen(g: &Gen, p: &Point) -> Result<f64, EvalError> {
    match g {
        Gen::Var(s) => p.get(s.as_str()).ok_or_else(|| EvalError::Unbound(s.to_string())),
        Gen::Denom(q) => q.eval(p),
        Gen::Atom(kind, a) => {
            let u = a.eval(p)?;
            Ok(match kind {
                AtomKind::Exp => u.exp(),
                AtomKind::Log => {
                    if u <= 0.0 {
                        return Err(EvalError::LogDomain {
                            expr: gen_text(g),
                            value: u,
                        });
                    }
                    u.ln()
                }
                AtomKind::Psi0 => psi0_value(u),
                AtomKind::FlatExp => flatexp_value(u),
            })
        }
    }
}
