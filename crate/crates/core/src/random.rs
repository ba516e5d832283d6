//! Seeded random expressions, forms and maps for property checks and fuzzing.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chart::Chart;
use crate::forms::{CoordinateMap, Form};
use crate::symbolic::Expr;

#[derive(Clone, Debug)]
pub struct Shape {
    pub max_degree: u32,
    pub max_terms: usize,
    pub coeff_bound: i64,
    /// Chance of an `exp(linear)` factor on a scalar.
    pub exp_chance: f64,
    /// Chance of dividing a scalar by `1 + c^2`.
    pub denom_chance: f64,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            max_degree: 2,
            max_terms: 3,
            coeff_bound: 3,
            exp_chance: 0.25,
            denom_chance: 0.15,
        }
    }
}

impl Shape {
    pub fn polynomial() -> Self {
        Shape {
            exp_chance: 0.0,
            denom_chance: 0.0,
            ..Shape::default()
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn coeff(rng: &mut ChaCha8Rng, bound: i64) -> i64 {
    loop {
        let c = rng.gen_range(-bound..=bound);
        if c != 0 {
            return c;
        }
    }
}

pub fn random_poly(rng: &mut ChaCha8Rng, chart: &Chart, shape: &Shape) -> Expr {
    let n = rng.gen_range(1..=shape.max_terms.max(1));
    let mut e = Expr::zero();
    for _ in 0..n {
        let mut t = Expr::int(coeff(rng, shape.coeff_bound));
        for _ in 0..rng.gen_range(0..=shape.max_degree) {
            let i = rng.gen_range(0..chart.dim());
            t = &t * &Expr::symbol(chart.symbol(i).clone());
        }
        e = &e + &t;
    }
    e
}

pub fn random_scalar(rng: &mut ChaCha8Rng, chart: &Chart, shape: &Shape) -> Expr {
    let mut e = random_poly(rng, chart, shape);
    if rng.gen_bool(shape.exp_chance) {
        let i = rng.gen_range(0..chart.dim());
        let lin = &Expr::int(coeff(rng, 2)) * &Expr::symbol(chart.symbol(i).clone());
        e = &e * &Expr::exp(&lin);
    }
    if rng.gen_bool(shape.denom_chance) {
        let i = rng.gen_range(0..chart.dim());
        let c = Expr::symbol(chart.symbol(i).clone());
        let den = &Expr::one() + &(&c * &c);
        e = e.checked_div(&den).expect("1 + c^2 is not zero");
    }
    e
}

/// A `degree`-form with a random scalar on each basis element, about half
/// of them left zero.
pub fn random_form(rng: &mut ChaCha8Rng, chart: &Chart, degree: usize, shape: &Shape) -> Form {
    let mut f = Form::zero(chart, degree);
    for idx in subsets(chart.dim(), degree) {
        if degree == 0 || rng.gen_bool(0.6) {
            let c = random_scalar(rng, chart, shape);
            f = f.checked_add(&Form::monomial(chart, &idx, c)).expect("same chart and degree");
        }
    }
    f
}

pub fn random_map(rng: &mut ChaCha8Rng, chart: &Chart, shape: &Shape) -> CoordinateMap {
    let comps = (0..chart.dim()).map(|_| random_poly(rng, chart, shape)).collect();
    CoordinateMap::new(chart.clone(), chart.clone(), comps).expect("one component per coordinate")
}

/// Increasing index tuples of length `k` from `0..n`.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        go(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded() {
        let c = Chart::new(["x", "y", "z"]);
        let a = random_form(&mut rng(5), &c, 2, &Shape::default());
        let b = random_form(&mut rng(5), &c, 2, &Shape::default());
        assert_eq!(a, b);
        assert_eq!(subsets(4, 2).len(), 6);
        assert_eq!(subsets(3, 0), vec![Vec::<usize>::new()]);
    }
}
