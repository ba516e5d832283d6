//! Exact symbolic scalars: construction, normalization, differentiation,
//! floating-point evaluation and rendering.

mod display;
mod eval;
mod expr;

pub use eval::{EvalError, Point};
pub use expr::{AtomKind, Expr, Gen, Monomial, Rational, Symbol};

pub(crate) use display::latex_symbol;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SymbolicError {
    #[error("division by the zero expression")]
    DivisionByZero,
}

/// Canonical form of an expression.
///
/// Expressions are normalized on construction, so this re-runs the
/// arithmetic from scratch through a substitution of every coordinate by
/// itself. The result is structurally identical to the input.
pub fn normalize(e: &Expr) -> Expr {
    e.substitute(&Default::default())
        .expect("an already-built expression re-normalizes")
}

/// Exact partial derivative.
pub fn partial(e: &Expr, c: &str) -> Expr {
    e.partial(&Symbol::new(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::var("x")
    }
    fn y() -> Expr {
        Expr::var("y")
    }
    fn at(pairs: &[(&str, f64)]) -> Point {
        Point::new(pairs.iter().map(|(k, v)| (*k, *v)))
    }

    fn richardson(e: &Expr, p: &Point, c: &str) -> f64 {
        let x0 = p.get(c).unwrap();
        let central = |h: f64| (e.eval(&p.with(c, x0 + h)).unwrap() - e.eval(&p.with(c, x0 - h)).unwrap()) / (2.0 * h);
        let estimates: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|h| (4.0 * central(h / 2.0) - central(*h)) / 3.0)
            .collect();
        estimates[1]
    }

    #[test]
    fn commuted_products_collect() {
        let e = &(&x() * &y()) + &(&y() * &x());
        assert_eq!(e, &Expr::int(2) * &(&x() * &y()));
        assert_eq!(e.to_string(), "2*x*y");
    }

    #[test]
    fn atom_arguments_are_canonical() {
        let a = Expr::exp(&(&x() + &y()));
        let b = Expr::exp(&(&y() + &x()));
        assert!((&a - &b).is_zero());
    }

    #[test]
    fn binomial_square_cancels() {
        let s = &x() + &Expr::one();
        let e = &(&(&(&s * &s) - &(&x() * &x())) - &(&Expr::int(2) * &x())) - &Expr::one();
        assert!(e.is_zero());
    }

    #[test]
    fn normalize_is_idempotent_on_rational_functions() {
        let e = &(&x() + &y()).recip().unwrap() * &(&x() * &x() - &(&y() * &y()));
        assert_eq!(normalize(&e), e);
        assert_eq!(normalize(&normalize(&e)), normalize(&e));
        assert_eq!(e, &x() - &y());
    }

    #[test]
    fn elementary_partials() {
        assert_eq!(partial(&(&(&x() * &x()) * &y()), "x"), &Expr::int(2) * &(&x() * &y()));
        let xy = &x() * &y();
        assert_eq!(partial(&Expr::exp(&xy), "x"), &y() * &Expr::exp(&xy));
        assert!(partial(&Expr::exp(&xy), "z").is_zero());
    }

    #[test]
    fn atom_derivatives_match_finite_differences() {
        let t = Expr::var("t");
        let cases = [
            Expr::psi0(&t),
            Expr::flatexp(&t),
            Expr::log(&(&(&t * &t) + &Expr::one())),
            Expr::exp(&(&t * &t)),
            (&(&t * &t) + &Expr::int(3)).recip().unwrap(),
            &Expr::flatexp(&t) * &(&Expr::flatexp(&t) + &Expr::flatexp(&(&Expr::one() - &t))).recip().unwrap(),
        ];
        for e in &cases {
            let de = partial(e, "t");
            for tv in [0.35, 0.5, 0.8, 1.0, 1.7] {
                let p = at(&[("t", tv)]);
                let exact = de.eval(&p).unwrap_or_else(|err| panic!("{e} -> {de}: {err}"));
                let fd = richardson(e, &p, "t");
                assert!((exact - fd).abs() <= 1e-6 * exact.abs().max(1.0), "{e}: {exact} vs {fd} at {tv}");
            }
        }
    }

    #[test]
    fn evaluation_examples() {
        let e = &(&x() * &x()) + &(&y() * &y());
        assert_eq!(e.eval(&at(&[("x", 3.0), ("y", 4.0)])).unwrap(), 25.0);
        let t = Expr::var("t");
        let v = Expr::psi0(&t).eval(&at(&[("t", 1.0)])).unwrap();
        let oracle = (-1f64).exp() / (1.0 + (-1f64).exp());
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.268941).abs() < 1e-6);
        assert_eq!(Expr::flatexp(&x()).eval(&at(&[("x", -2.0)])).unwrap(), 0.0);
        assert_eq!(Expr::psi0(&t).eval(&at(&[("t", 0.0)])).unwrap(), 0.0);
    }

    #[test]
    fn evaluation_errors() {
        let r = x().recip().unwrap();
        assert!(matches!(r.eval(&at(&[("x", 0.0)])), Err(EvalError::DivisionByZero(_))));
        assert!(matches!(Expr::log(&x()).eval(&at(&[("x", -1.0)])), Err(EvalError::LogDomain { .. })));
        assert!(matches!(x().eval(&at(&[("y", 1.0)])), Err(EvalError::Unbound(_))));
    }

    #[test]
    fn flat_factor_kills_singular_cofactor() {
        let e = &Expr::flatexp(&x()) * &x().pow(-4).unwrap();
        assert_eq!(e.eval(&at(&[("x", -1.0)])).unwrap(), 0.0);
    }

    #[test]
    fn psi0_is_even() {
        let t = Expr::var("t");
        assert_eq!(Expr::psi0(&t), Expr::psi0(&-&t));
        for v in [0.1, 0.4, 1.0, 2.5, 7.0] {
            let a = Expr::psi0(&t).eval(&at(&[("t", v)])).unwrap();
            let b = Expr::psi0(&t).eval(&at(&[("t", -v)])).unwrap();
            assert_eq!(a, b);
            assert!((0.0..=0.5).contains(&a));
        }
    }

    #[test]
    fn exp_and_log_simplify() {
        assert!((&(&Expr::exp(&x()) * &Expr::exp(&y())) - &Expr::exp(&(&x() + &y()))).is_zero());
        assert_eq!(Expr::log(&Expr::exp(&x())), x());
        assert!(Expr::log(&Expr::one()).is_zero());
        assert!(Expr::flatexp(&Expr::int(-3)).is_zero());
        assert_eq!(Expr::exp(&Expr::zero()), Expr::one());
    }

    #[test]
    fn quotient_denominators_are_tracked() {
        let e = &x() * &(&y() + &Expr::one()).recip().unwrap();
        assert_eq!(e.denominators(), vec![&y() + &Expr::one()]);
        let q = (&x() + &y()).checked_div(&(&x() + &y())).unwrap();
        assert!(q.is_one());
        assert!(x().checked_div(&Expr::zero()).is_err());
    }

    #[test]
    fn display_shapes() {
        assert_eq!((-&x()).to_string(), "-x");
        assert_eq!(Expr::ratio(3, 2).to_string(), "3/2");
        assert_eq!(Expr::ratio(-1, 3).to_string(), "-1/3");
        assert!(Expr::exp(&x()).to_latex().contains("e^{"));
    }
}
