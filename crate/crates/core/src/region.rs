//! Open subsets of a coordinate box cut out by strict inequalities, and the
//! seeded rejection sampler every numeric check draws from.

use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::symbolic::{AtomKind, Expr, Gen, Point, Rational};

/// Rejection attempts per sample before a region is declared exhausted.
pub const MAX_ATTEMPTS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("sampler exhausted for region `{region}` after {attempts} attempts")]
pub struct SamplingError {
    pub region: String,
    pub attempts: usize,
}

/// `{ x in open box : g(x) > 0 for every constraint g }`.
#[derive(Clone, Debug)]
pub struct Region {
    chart: Chart,
    name: String,
    constraints: Vec<Expr>,
    bounds: Vec<(f64, f64)>,
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index.wrapping_add(1))))
}

impl Region {
    pub fn new(chart: Chart, name: impl Into<String>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != chart.dim() {
            return Err(Error::Domain(format!(
                "box has {} intervals for a {}-dimensional chart",
                bounds.len(),
                chart.dim()
            )));
        }
        for (lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Domain(format!("box interval [{lo}, {hi}] is not a finite nonempty interval")));
            }
        }
        Ok(Region {
            chart,
            name: name.into(),
            constraints: Vec::new(),
            bounds,
        })
    }

    /// Adds the constraint `g > 0`.
    pub fn with_constraint(mut self, g: Expr) -> Self {
        if !self.constraints.contains(&g) {
            self.constraints.push(g);
        }
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn constraints(&self) -> &[Expr] {
        &self.constraints
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn intersect(&self, other: &Region) -> Result<Region> {
        self.chart.ensure_same(&other.chart)?;
        let bounds: Vec<(f64, f64)> = self
            .bounds
            .iter()
            .zip(&other.bounds)
            .map(|(a, b)| (a.0.max(b.0), a.1.min(b.1)))
            .collect();
        if bounds.iter().any(|(lo, hi)| lo >= hi) {
            return Err(Error::Domain(format!("boxes of `{}` and `{}` are disjoint", self.name, other.name)));
        }
        let mut r = Region {
            chart: self.chart.clone(),
            name: format!("{} & {}", self.name, other.name),
            constraints: self.constraints.clone(),
            bounds,
        };
        for g in &other.constraints {
            r = r.with_constraint(g.clone());
        }
        Ok(r)
    }

    pub fn in_box(&self, values: &[f64]) -> bool {
        values.len() == self.bounds.len()
            && values.iter().zip(&self.bounds).all(|(v, (lo, hi))| lo < v && v < hi)
    }

    pub fn contains(&self, p: &Point) -> bool {
        let Ok(values) = self.chart.values(p) else { return false };
        self.in_box(&values)
            && self
                .constraints
                .iter()
                .all(|g| matches!(g.eval(p), Ok(v) if v > 0.0))
    }

    /// Sample number `index` of the seeded stream; the same `(seed, index)`
    /// always yields the same point.
    pub fn sample(&self, seed: u64, index: u64) -> Result<Point, SamplingError> {
        let mut rng = sample_rng(seed, index);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: Rng>(&self, rng: &mut R) -> Result<Point, SamplingError> {
        let mut values = vec![0.0; self.bounds.len()];
        for _ in 0..MAX_ATTEMPTS {
            for (v, (lo, hi)) in values.iter_mut().zip(&self.bounds) {
                *v = lo + (hi - lo) * rng.gen::<f64>();
            }
            if !self.in_box(&values) {
                continue;
            }
            let p = self.chart.point(&values);
            if self.contains(&p) {
                return Ok(p);
            }
        }
        Err(SamplingError {
            region: self.name.clone(),
            attempts: MAX_ATTEMPTS,
        })
    }

    pub fn samples(&self, seed: u64, count: usize) -> Result<Vec<Point>, SamplingError> {
        (0..count as u64).map(|i| self.sample(seed, i)).collect()
    }

    /// Constraints including the box faces, all of the form `g > 0`.
    fn all_constraints(&self) -> Vec<Expr> {
        let mut out = self.constraints.clone();
        for (s, (lo, hi)) in self.chart.coords().iter().zip(&self.bounds) {
            let x = Expr::symbol(s.clone());
            if let (Some(lo), Some(hi)) = (Rational::from_float(*lo), Rational::from_float(*hi)) {
                out.push(&x - &Expr::constant(lo));
                out.push(&Expr::constant(hi) - &x);
            }
        }
        out
    }

    /// Sound sufficient test for `u <= 0` on the whole region: `-u` is a
    /// non-negative constant plus a positive multiple of a constraint.
    pub fn proves_nonpositive(&self, u: &Expr) -> bool {
        let neg = -u;
        if let Some(c) = neg.as_constant() {
            return !c.is_negative();
        }
        for g in self.all_constraints() {
            let Some((m, gc)) = g.terms().find(|(m, _)| !m.is_one()) else { continue };
            let k = neg.coefficient(m) / gc;
            if !k.is_positive() {
                continue;
            }
            let rest = &neg - &g.scale(&k);
            if let Some(d) = rest.as_constant() {
                if !d.is_negative() {
                    return true;
                }
            }
        }
        false
    }

    /// Drops every `flatexp(u)` factor that provably vanishes on the region.
    pub fn simplify(&self, e: &Expr) -> Expr {
        let has_flat = |e: &Expr| format!("{e}").contains("flatexp(");
        if !has_flat(e) {
            return e.clone();
        }
        e.transform(&mut |g| match g {
            Gen::Atom(AtomKind::FlatExp, u) if self.proves_nonpositive(u) => Ok(Some(Expr::zero())),
            _ => Ok(None),
        })
        .unwrap_or_else(|_| e.clone())
    }

    /// Region name used in reports.
    pub fn describe(&self) -> String {
        if self.constraints.is_empty() {
            return format!("{} (box)", self.name);
        }
        let cs: Vec<String> = self.constraints.iter().map(|g| format!("{g} > 0")).collect();
        format!("{}: {}", self.name, cs.join(", "))
    }

    pub fn is_zero_free(&self) -> bool {
        self.constraints.iter().all(|g| !g.is_zero())
    }
}

