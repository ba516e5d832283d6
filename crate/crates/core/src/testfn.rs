//! Flat test functions: `psi0` strengthening, radial bumps, finite-cover
//! sums, and the numeric flatness check near a closed set.

use rand::Rng;

use crate::chart::Chart;
use crate::config::ZeroTestConfig;
use crate::error::{Error, Result};
use crate::region::{sample_rng, Region};
use crate::symbolic::{AtomKind, Expr, Gen, Point, Rational};
use crate::verdict::{Finding, Verdict, Witness};

fn exact(v: f64) -> Result<Rational> {
    Rational::from_float(v).ok_or_else(|| Error::Domain(format!("{v} is not a finite number")))
}

fn squared_distance(chart: &Chart, center: &[f64]) -> Result<Expr> {
    let mut s = Expr::zero();
    for (sym, c) in chart.coords().iter().zip(center) {
        let d = &Expr::symbol(sym.clone()) - &Expr::constant(exact(*c)?);
        s = &s + &(&d * &d);
    }
    Ok(s)
}

pub fn psi0(t: &Expr) -> Expr {
    Expr::psi0(t)
}

/// `psi0(f)`: same zeros as `f`, flat at them.
pub fn strengthen(f: &Expr) -> Expr {
    Expr::psi0(f)
}

/// `flatexp(u) / (flatexp(u) + flatexp(1 - u))`: 0 for `u <= 0`, 1 for `u >= 1`.
pub fn smooth_step(u: &Expr) -> Expr {
    let a = Expr::flatexp(u);
    let b = Expr::flatexp(&(&Expr::one() - u));
    let den = (&a + &b).recip().expect("sum of two flat atoms is not the zero expression");
    &a * &den
}

/// Ball `B(center, 2r)` carrying a bump equal to 1 on `B(center, r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpSpec {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BumpSpec {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!("bump radius {radius} must be positive")));
        }
        Ok(BumpSpec { center, radius })
    }

    pub fn outer_radius(&self) -> f64 {
        2.0 * self.radius
    }

    fn distance2(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn in_support(&self, values: &[f64]) -> bool {
        self.distance2(values) < self.outer_radius() * self.outer_radius()
    }

    /// Support ball inside the open box.
    pub fn check_inside(&self, bounds: &[(f64, f64)]) -> Result<()> {
        let ok = bounds.len() == self.center.len()
            && self
                .center
                .iter()
                .zip(bounds)
                .all(|(c, (lo, hi))| c - self.outer_radius() >= *lo && c + self.outer_radius() <= *hi);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "support ball of radius {} around {:?} leaves the working box",
                self.outer_radius(),
                self.center
            )))
        }
    }
}

/// Smooth bump: `g((4r^2 - |x-p|^2) / (3r^2))` with the smooth step `g`.
pub fn bump(chart: &Chart, b: &BumpSpec) -> Result<Expr> {
    if b.center.len() != chart.dim() {
        return Err(Error::Domain(format!("bump center has {} coordinates", b.center.len())));
    }
    let r2 = exact(b.radius)?;
    let r2 = &r2 * &r2;
    let four = Rational::from_integer(4.into());
    let three = Rational::from_integer(3.into());
    let num = &Expr::constant(&four * &r2) - &squared_distance(chart, &b.center)?;
    Ok(smooth_step(&num.scale(&(Rational::from_integer(1.into()) / (&three * &r2)))))
}

/// Closed subset of the working box.
#[derive(Clone, Debug)]
pub enum ClosedSetSpec {
    Whole,
    /// `{f = 0}`.
    ZeroSet(Expr),
    /// Union of closed balls; radius 0 gives points.
    ClosedBalls(Vec<(Vec<f64>, f64)>),
    /// Box minus a union of open balls.
    BoxMinusBalls(Vec<(Vec<f64>, f64)>),
}

fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn unit_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 && norm <= 1.0 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// Newton steps along the gradient onto `{f = 0}`.
fn project(f: &Expr, grad: &[Expr], chart: &Chart, start: &[f64]) -> Option<Vec<f64>> {
    let mut x = start.to_vec();
    for _ in 0..200 {
        let p = chart.point(&x);
        let v = f.eval(&p).ok()?;
        if v.abs() < 1e-13 {
            return Some(x);
        }
        let g: Vec<f64> = grad.iter().map(|e| e.eval(&p)).collect::<Result<_, _>>().ok()?;
        let n2: f64 = g.iter().map(|a| a * a).sum();
        if n2 == 0.0 || !n2.is_finite() {
            return None;
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= v * gi / n2;
        }
    }
    None
}

impl ClosedSetSpec {
    pub fn contains(&self, chart: &Chart, values: &[f64]) -> bool {
        match self {
            ClosedSetSpec::Whole => true,
            ClosedSetSpec::ZeroSet(f) => f.eval(&chart.point(values)).is_ok_and(|v| v == 0.0),
            ClosedSetSpec::ClosedBalls(bs) => bs.iter().any(|(c, r)| d2(values, c) <= r * r),
            ClosedSetSpec::BoxMinusBalls(bs) => bs.iter().all(|(c, r)| d2(values, c) >= r * r),
        }
    }

    /// The open complement inside the box, where it is a single region.
    fn complement_region(&self, bx: &Region) -> Option<Region> {
        let chart = bx.chart();
        match self {
            ClosedSetSpec::ZeroSet(f) => Some(bx.clone().renamed("complement").with_constraint(f * f)),
            ClosedSetSpec::ClosedBalls(bs) => {
                let mut r = bx.clone().renamed("complement");
                for (c, rad) in bs {
                    let g = &squared_distance(chart, c).ok()? - &Expr::constant(exact(rad * rad).ok()?);
                    r = r.with_constraint(g);
                }
                Some(r)
            }
            _ => None,
        }
    }

    /// Samples of the complement of the set in the box.
    pub fn sample_complement(&self, bx: &Region, seed: u64, count: usize) -> Result<Vec<Point>> {
        match self {
            ClosedSetSpec::Whole => Ok(Vec::new()),
            ClosedSetSpec::BoxMinusBalls(bs) => {
                let n = bx.chart().dim();
                let mut out = Vec::with_capacity(count);
                for i in 0..count as u64 {
                    let mut rng = sample_rng(seed ^ 0xc0, i);
                    let mut found = None;
                    for _ in 0..crate::region::MAX_ATTEMPTS {
                        let (c, r) = &bs[rng.gen_range(0..bs.len())];
                        let dir = unit_vector(&mut rng, n);
                        let rho = r * rng.gen::<f64>().powf(1.0 / n as f64);
                        let v: Vec<f64> = c.iter().zip(&dir).map(|(a, b)| a + rho * b).collect();
                        if bx.in_box(&v) && !self.contains(bx.chart(), &v) {
                            found = Some(v);
                            break;
                        }
                    }
                    match found {
                        Some(v) => out.push(bx.chart().point(&v)),
                        None => {
                            return Err(crate::region::SamplingError {
                                region: "complement".into(),
                                attempts: crate::region::MAX_ATTEMPTS,
                            }
                            .into())
                        }
                    }
                }
                Ok(out)
            }
            _ => {
                let r = self.complement_region(bx).expect("single-region complement");
                Ok(r.samples(seed ^ 0xc0, count)?)
            }
        }
    }

    /// Samples of the set itself.
    pub fn sample_set(&self, bx: &Region, seed: u64, count: usize) -> Result<Vec<Point>> {
        let chart = bx.chart();
        let n = chart.dim();
        match self {
            ClosedSetSpec::Whole => Ok(bx.samples(seed ^ 0x5e7, count)?),
            ClosedSetSpec::BoxMinusBalls(bs) => {
                let mut r = bx.clone().renamed("closed set");
                for (c, rad) in bs {
                    r = r.with_constraint(&squared_distance(chart, c)? - &Expr::constant(exact(rad * rad)?));
                }
                Ok(r.samples(seed ^ 0x5e7, count)?)
            }
            ClosedSetSpec::ClosedBalls(bs) => Ok((0..count as u64)
                .map(|i| {
                    let mut rng = sample_rng(seed ^ 0x5e7, i);
                    let (c, r) = &bs[rng.gen_range(0..bs.len())];
                    let dir = unit_vector(&mut rng, n);
                    let rho = r * rng.gen::<f64>().powf(1.0 / n as f64);
                    chart.point(&c.iter().zip(&dir).map(|(a, b)| a + rho * b).collect::<Vec<_>>())
                })
                .collect()),
            ClosedSetSpec::ZeroSet(_) => Ok(self.boundary(bx, seed, count)?.into_iter().map(|(p, _)| p).collect()),
        }
    }

    /// Boundary points with a unit direction pointing into the complement.
    pub fn boundary(&self, bx: &Region, seed: u64, count: usize) -> Result<Vec<(Point, Vec<f64>)>> {
        let chart = bx.chart();
        let n = chart.dim();
        let mut out = Vec::with_capacity(count);
        match self {
            ClosedSetSpec::Whole => {}
            ClosedSetSpec::ClosedBalls(bs) | ClosedSetSpec::BoxMinusBalls(bs) => {
                let inward = matches!(self, ClosedSetSpec::BoxMinusBalls(_));
                for i in 0..count as u64 {
                    let mut rng = sample_rng(seed ^ 0xb0, i);
                    let (c, r) = &bs[rng.gen_range(0..bs.len())];
                    let dir = unit_vector(&mut rng, n);
                    let v: Vec<f64> = c.iter().zip(&dir).map(|(a, b)| a + r * b).collect();
                    let into: Vec<f64> = if inward { dir.iter().map(|x| -x).collect() } else { dir };
                    out.push((chart.point(&v), into));
                }
            }
            ClosedSetSpec::ZeroSet(f) => {
                let grad: Vec<Expr> = chart.coords().iter().map(|s| f.partial(s)).collect();
                let mut attempts = 0;
                let mut i = 0u64;
                while out.len() < count {
                    attempts += 1;
                    if attempts > crate::region::MAX_ATTEMPTS {
                        return Err(crate::region::SamplingError {
                            region: "zero set".into(),
                            attempts,
                        }
                        .into());
                    }
                    let start = bx.sample(seed ^ 0xb0, i)?;
                    i += 1;
                    let Some(x) = project(f, &grad, chart, &start.values()) else { continue };
                    if !bx.in_box(&x) {
                        continue;
                    }
                    let p = chart.point(&x);
                    let g: Vec<f64> = grad.iter().map(|e| e.eval(&p)).collect::<Result<_, _>>()?;
                    let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
                    let dir = if norm > 0.0 {
                        g.iter().map(|a| a / norm).collect()
                    } else {
                        unit_vector(&mut sample_rng(seed ^ 0xd1, i), n)
                    };
                    out.push((p, dir));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct WeakTest {
    pub expr: Expr,
    pub findings: Vec<Finding>,
}

/// Sum of bumps whose support balls are checked to cover exactly the
/// complement of `m0` at sampled points.
pub fn weak_test_from_cover(
    bx: &Region,
    balls: &[BumpSpec],
    m0: &ClosedSetSpec,
    samples: usize,
    cfg: &ZeroTestConfig,
) -> Result<WeakTest> {
    let chart = bx.chart();
    let mut expr = Expr::zero();
    for b in balls {
        b.check_inside(bx.bounds())?;
        expr = &expr + &bump(chart, b)?;
    }
    let outside = m0.sample_complement(bx, cfg.rng_seed, samples)?;
    for p in &outside {
        let v = p.values();
        if !balls.iter().any(|b| b.in_support(&v)) {
            return Err(Error::Coverage {
                message: "sample outside the closed set is in no support ball".into(),
                witness: Some(p.clone()),
            });
        }
    }
    let inside = m0.sample_set(bx, cfg.rng_seed, samples)?;
    let zero = inside.iter().try_fold(Verdict::ProvedZero, |acc, p| {
        let v = expr.eval(p)?;
        Ok::<_, Error>(if v != 0.0 && acc.is_proved() {
            Verdict::NonZero(Witness {
                point: p.clone(),
                value: v,
                residual: "test function is nonzero on the closed set".into(),
            })
        } else {
            acc
        })
    });
    let positive = outside.iter().try_fold(Verdict::ProvedZero, |acc, p| {
        let v = expr.eval(p)?;
        Ok::<_, Error>(if !(v > 0.0) && acc.is_proved() {
            Verdict::NonZero(Witness {
                point: p.clone(),
                value: v,
                residual: "test function is not positive off the closed set".into(),
            })
        } else {
            acc
        })
    });
    let findings = vec![
        Finding::new(format!("zero at {} samples of the closed set", inside.len()), zero),
        Finding::new(format!("positive at {} samples of the complement", outside.len()), positive),
    ];
    Ok(WeakTest { expr, findings })
}

pub const FLATNESS_DISTANCES: [f64; 3] = [1e-1, 1e-2, 1e-3];
pub const FLATNESS_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct FlatnessReport {
    /// `estimates[k][j]`: largest derivative estimate of order `j + 1` at
    /// distance `FLATNESS_DISTANCES[k]`.
    pub estimates: Vec<[f64; 3]>,
    pub structural: bool,
    pub passed: bool,
    pub witness: Option<Point>,
    pub summary: String,
}

fn derivative_estimates(f: &Expr, chart: &Chart, x: &[f64], axis: usize, h: f64) -> Result<[f64; 3]> {
    let at = |k: f64| -> Result<f64> {
        let mut y = x.to_vec();
        y[axis] += k * h;
        Ok(f.eval(&chart.point(&y))?)
    };
    let (m2, m1, c, p1, p2) = (at(-2.0)?, at(-1.0)?, at(0.0)?, at(1.0)?, at(2.0)?);
    Ok([
        (p1 - m1) / (2.0 * h),
        (p1 - 2.0 * c + m1) / (h * h),
        (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * h * h * h),
    ])
}

/// Every term carries a positive power of a flat atom that evaluates to 0
/// at every sample of the set.
fn structurally_flat(f: &Expr, set_samples: &[Point]) -> bool {
    !set_samples.is_empty()
        && f.terms().all(|(m, _)| {
            m.factors().iter().any(|(g, e)| {
                *e > 0
                    && matches!(g, Gen::Atom(k, _) if k.is_flat())
                    && set_samples.iter().all(|p| {
                        let Gen::Atom(kind, arg) = g else { return false };
                        let atom = if *kind == AtomKind::Psi0 { Expr::psi0(arg) } else { Expr::flatexp(arg) };
                        atom.eval(p).is_ok_and(|v| v == 0.0)
                    })
            })
        })
}

/// Finite-difference derivatives of orders 1-3 at distances 1e-1, 1e-2,
/// 1e-3 from the boundary, on the complement side.
pub fn flatness_check(f: &Expr, m0: &ClosedSetSpec, bx: &Region, cfg: &ZeroTestConfig) -> Result<FlatnessReport> {
    let chart = bx.chart();
    if matches!(m0, ClosedSetSpec::Whole) {
        return Ok(FlatnessReport {
            estimates: Vec::new(),
            structural: false,
            passed: true,
            witness: None,
            summary: "closed set is the whole box; nothing to check".into(),
        });
    }
    let count = cfg.sample_count.clamp(4, 16);
    let boundary = m0.boundary(bx, cfg.rng_seed, count)?;
    let set_samples = m0.sample_set(bx, cfg.rng_seed, count)?;
    let structural = structurally_flat(f, &set_samples);
    let mut estimates = Vec::new();
    let mut worst_point = None;
    let mut worst = 0.0f64;
    for d in FLATNESS_DISTANCES {
        let mut row = [0.0f64; 3];
        for (p, dir) in &boundary {
            let x: Vec<f64> = p.values().iter().zip(dir).map(|(a, b)| a + d * b).collect();
            for axis in 0..chart.dim() {
                let est = derivative_estimates(f, chart, &x, axis, d / 10.0)?;
                for j in 0..3 {
                    let a = est[j].abs();
                    row[j] = row[j].max(if a.is_finite() { a } else { f64::INFINITY });
                    if d == FLATNESS_DISTANCES[2] && a > worst {
                        worst = a;
                        worst_point = Some(chart.point(&x));
                    }
                }
            }
        }
        estimates.push(row);
    }
    let last = estimates[estimates.len() - 1];
    let decaying = (0..3).all(|j| {
        estimates
            .windows(2)
            .all(|w| w[1][j] <= w[0][j] || w[1][j] < FLATNESS_FLOOR)
    });
    let numeric = last.iter().all(|e| *e < FLATNESS_FLOOR) && decaying;
    let passed = numeric || structural;
    let summary = format!(
        "max |D^k| at d=1e-3: k=1 {:.3e}, k=2 {:.3e}, k=3 {:.3e}{}",
        last[0],
        last[1],
        last[2],
        if structural { "; every term has a flat factor vanishing on the set" } else { "" }
    );
    Ok(FlatnessReport {
        estimates,
        structural,
        passed,
        witness: if passed { None } else { worst_point },
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(h: f64) -> (Chart, Region) {
        let c = Chart::new(["x", "y"]);
        let r = Region::new(c.clone(), "box", vec![(-h, h), (-h, h)]).unwrap();
        (c, r)
    }

    fn norm2() -> Expr {
        let x = Expr::var("x");
        let y = Expr::var("y");
        &(&x * &x) + &(&y * &y)
    }

    fn origin() -> ClosedSetSpec {
        ClosedSetSpec::ClosedBalls(vec![(vec![0.0, 0.0], 0.0)])
    }

    #[test]
    fn psi0_values() {
        let t = Expr::var("t");
        let at = |v: f64| psi0(&t).eval(&Point::new([("t", v)])).unwrap();
        assert_eq!(at(0.0), 0.0);
        assert!((at(1.0) - 0.268941).abs() < 1e-6);
        for v in [0.2, 0.7, 1.3, 3.0] {
            assert_eq!(at(v), at(-v));
        }
        assert!(strengthen(&Expr::zero()).is_zero());
    }

    #[test]
    fn bump_profile() {
        let (c, _) = plane(2.0);
        let b = BumpSpec::new(vec![0.25, -0.5], 0.2).unwrap();
        let e = bump(&c, &b).unwrap();
        let at = |dx: f64| e.eval(&c.point(&[0.25 + dx, -0.5])).unwrap();
        assert!((at(0.0) - 1.0).abs() < 1e-12);
        assert!((at(0.2) - 1.0).abs() < 1e-12);
        assert_eq!(at(0.6), 0.0);
        let mid = at(0.3);
        assert!(mid > 0.0 && mid < 1.0);
        assert!(BumpSpec::new(vec![0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn strengthened_origin_test_is_flat() {
        let (_, bx) = plane(1.0);
        let cfg = ZeroTestConfig::default();
        let weak = flatness_check(&norm2(), &origin(), &bx, &cfg).unwrap();
        assert!(!weak.passed);
        assert!((weak.estimates[2][1] - 2.0).abs() < 0.2);
        let strong = flatness_check(&strengthen(&norm2()), &origin(), &bx, &cfg).unwrap();
        assert!(strong.passed, "{}", strong.summary);
        assert!(strong.estimates[2].iter().all(|e| *e < 1e-6));
    }

    #[test]
    fn zero_on_whole_box_is_flat() {
        let (_, bx) = plane(1.0);
        let rep = flatness_check(&Expr::zero(), &ClosedSetSpec::Whole, &bx, &ZeroTestConfig::default()).unwrap();
        assert!(rep.passed);
    }

    #[test]
    fn ball_test_function_is_flat_from_outside() {
        let (_, bx) = plane(1.5);
        let m0 = ClosedSetSpec::ClosedBalls(vec![(vec![0.0, 0.0], 0.5)]);
        let phi = Expr::flatexp(&(&norm2() - &Expr::ratio(1, 4)));
        let rep = flatness_check(&phi, &m0, &bx, &ZeroTestConfig::default()).unwrap();
        assert!(rep.passed, "{}", rep.summary);
    }

    #[test]
    fn zero_set_boundary_is_projected() {
        let (c, bx) = plane(1.5);
        let f = &Expr::var("y") - &(&Expr::var("x") * &Expr::var("x"));
        let pts = ClosedSetSpec::ZeroSet(f.clone()).boundary(&bx, 3, 8).unwrap();
        for (p, dir) in pts {
            assert!(f.eval(&p).unwrap().abs() < 1e-12);
            assert!((dir.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(c.values(&p).is_ok());
        }
    }

    #[test]
    fn four_bump_cover() {
        let (_, bx) = plane(1.5);
        let centers = [(-0.6, -0.6), (-0.6, 0.6), (0.6, -0.6), (0.6, 0.6)];
        let balls: Vec<BumpSpec> = centers.iter().map(|(a, b)| BumpSpec::new(vec![*a, *b], 0.3).unwrap()).collect();
        let m0 = ClosedSetSpec::BoxMinusBalls(balls.iter().map(|b| (b.center.clone(), b.outer_radius())).collect());
        let w = weak_test_from_cover(&bx, &balls, &m0, 64, &ZeroTestConfig::default()).unwrap();
        assert!(w.findings.iter().all(|f| f.passed()), "{:#?}", w.findings);
        let too_small = ClosedSetSpec::BoxMinusBalls(balls.iter().map(|b| (b.center.clone(), 0.7)).collect());
        assert!(matches!(
            weak_test_from_cover(&bx, &balls, &too_small, 64, &ZeroTestConfig::default()),
            Err(Error::Coverage { .. })
        ));
        let empty = weak_test_from_cover(&bx, &[], &ClosedSetSpec::Whole, 64, &ZeroTestConfig::default()).unwrap();
        assert!(empty.expr.is_zero());
    }
}
