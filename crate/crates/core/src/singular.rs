//! The twisted differential `d_f`, the map `w -> f^p w`, collar extension of
//! forms from a level set, and the exactness pipeline for weighted GV forms.

use crate::chart::Chart;
use crate::config::ZeroTestConfig;
use crate::error::{Error, Result};
use crate::foliation::Foliation;
use crate::forms::{ext_d, form_zero_on, forms_equal, pullback, wedge, CoordinateMap, Form};
use crate::gv::{check_basic, gv_form, verify_frobenius};
use crate::region::Region;
use crate::symbolic::{Expr, Point, Rational};
use crate::testfn::smooth_step;
use crate::verdict::{Finding, Verdict};

/// `f dw - p df ^ w` for a `p`-form `w`.
pub fn d_f(f: &Expr, w: &Form) -> Result<Form> {
    let p = Expr::int(w.degree() as i64);
    let df = Form::differential(w.chart(), f);
    ext_d(w).scale(f).checked_sub(&wedge(&df, w)?.scale(&p))
}

/// `f^p w`.
pub fn phi_map(f: &Expr, w: &Form) -> Result<Form> {
    Ok(w.scale(&f.pow(w.degree() as i64)?))
}

/// Collar `|t| < eps'` around `S = {t = 0}` with the cutoff `rho(t)`, equal
/// to 1 for `|t| <= eps` and 0 for `|t| >= eps'`.
#[derive(Clone, Debug)]
pub struct TubularData {
    pub f: Expr,
    pub t: usize,
    pub eps: Rational,
    pub eps_outer: Rational,
    pub rho: Expr,
    pub projection: CoordinateMap,
}

impl TubularData {
    pub fn new(chart: &Chart, f: Expr, t: &str, eps: Rational, eps_outer: Rational) -> Result<Self> {
        let ti = chart.require(t)?;
        let zero = Rational::from_integer(0.into());
        if !(eps > zero && eps_outer > eps) {
            return Err(Error::Domain(format!("collar needs 0 < eps < eps_outer, got {eps} and {eps_outer}")));
        }
        let tv = Expr::symbol(chart.symbol(ti).clone());
        let outer2 = &eps_outer * &eps_outer;
        let inner2 = &eps * &eps;
        let u = (&Expr::constant(outer2.clone()) - &(&tv * &tv)).scale(&(Rational::from_integer(1.into()) / (&outer2 - &inner2)));
        let rho = smooth_step(&u);
        let components = chart
            .coords()
            .iter()
            .enumerate()
            .map(|(i, s)| if i == ti { Expr::zero() } else { Expr::symbol(s.clone()) })
            .collect();
        let projection = CoordinateMap::new(chart.clone(), chart.clone(), components)?;
        Ok(TubularData {
            f,
            t: ti,
            eps,
            eps_outer,
            rho,
            projection,
        })
    }

    pub fn chart(&self) -> &Chart {
        self.projection.source()
    }

    fn eps_f64(&self) -> (f64, f64) {
        use num_traits::ToPrimitive;
        (self.eps.to_f64().unwrap_or(0.0), self.eps_outer.to_f64().unwrap_or(0.0))
    }

    /// `rho = 1` on `|t| <= eps`, `rho = 0` on `|t| >= eps'`, and `f`
    /// vanishes exactly on `t = 0`, at samples of the region.
    pub fn check(&self, r: &Region, cfg: &ZeroTestConfig) -> Vec<Finding> {
        let (e, eo) = self.eps_f64();
        let mut plateau = Ok(Verdict::ProvedZero);
        let mut support = Ok(Verdict::ProvedZero);
        let mut slice = Ok(Verdict::ProvedZero);
        let samples = match r.samples(cfg.rng_seed, cfg.sample_count) {
            Ok(s) => s,
            Err(err) => return vec![Finding::new("collar samples", Err(err.into()))],
        };
        let tname = self.chart().symbol(self.t).as_str().to_string();
        for (k, p) in samples.iter().enumerate() {
            let frac = (k as f64 + 0.5) / samples.len() as f64;
            let inner = p.with(&tname, e * (2.0 * frac - 1.0));
            let outer = p.with(&tname, if k % 2 == 0 { eo } else { -eo } * (1.0 + frac));
            let on_s = p.with(&tname, 0.0);
            let bad = |q: &Point, what: &str, value: f64| {
                Err(Error::precondition(format!("{what} (value {value:e})"), Some(q.clone())))
            };
            match self.rho.eval(&inner) {
                Ok(v) if (v - 1.0).abs() > 1e-12 && plateau.is_ok() => plateau = bad(&inner, "rho is not 1 inside the inner collar", v),
                Err(err) => plateau = Err(err.into()),
                _ => {}
            }
            match self.rho.eval(&outer) {
                Ok(v) if v != 0.0 && support.is_ok() => support = bad(&outer, "rho is not 0 outside the outer collar", v),
                Err(err) => support = Err(err.into()),
                _ => {}
            }
            if slice.is_ok() {
                match (self.f.eval(&on_s), self.f.eval(p)) {
                    (Ok(a), _) if a != 0.0 => slice = bad(&on_s, "f does not vanish on t = 0", a),
                    (_, Ok(b)) if b == 0.0 && p.get(&tname) != Some(0.0) => slice = bad(p, "f vanishes off t = 0", b),
                    (Err(err), _) | (_, Err(err)) => slice = Err(err.into()),
                    _ => {}
                }
            }
        }
        vec![
            Finding::new("rho = 1 on the inner collar", plateau),
            Finding::new("rho = 0 outside the outer collar", support),
            Finding::new("zero set of f is the slice t = 0", slice),
        ]
    }
}

/// `rho(t) pi^* beta` for a form on the slice coordinates.
pub fn tilde_extend(beta: &Form, td: &TubularData) -> Result<Form> {
    let t = td.chart().symbol(td.t).clone();
    if beta.depends_on(&t) || beta.uses_differential(td.t) {
        return Err(Error::Domain(format!("form {beta} involves the transverse coordinate {t}")));
    }
    Ok(pullback(&td.projection, beta)?.scale(&td.rho))
}

#[derive(Clone, Debug)]
pub struct IsoImage {
    pub form: Form,
    pub findings: Vec<Finding>,
}

/// `f^p alpha + f^(p-1) df ^ beta~` for closed `alpha` (degree `p`) and
/// closed `beta` (degree `p - 1`), with its `d_f`-closedness.
pub fn iso_decompose(alpha: &Form, beta: &Form, td: &TubularData, r: &Region, cfg: &ZeroTestConfig) -> Result<IsoImage> {
    let p = alpha.degree();
    if p == 0 || beta.degree() + 1 != p {
        return Err(Error::DegreeMismatch {
            expected: p.saturating_sub(1),
            found: beta.degree(),
        });
    }
    for (name, w) in [("alpha", alpha), ("beta", beta)] {
        let v = form_zero_on(&ext_d(w), r, cfg)?;
        if let Verdict::NonZero(wit) = v {
            return Err(Error::precondition(format!("d({name}) = {} is not zero", wit.residual), Some(wit.point)));
        }
    }
    let f = &td.f;
    let df = Form::differential(td.chart(), f);
    let first = alpha.scale(&f.pow(p as i64)?);
    let second = wedge(&df, &tilde_extend(beta, td)?)?.scale(&f.pow(p as i64 - 1)?);
    let form = first.checked_add(&second)?;
    let closed = form_zero_on(&d_f(f, &form)?, r, cfg);
    Ok(IsoImage {
        form,
        findings: vec![Finding::new("image is d_f-closed", closed)],
    })
}

/// `phi^q nu_bar = phi^(1+2q) alpha + phi^(2q) d(phi) ^ beta~`.
pub fn verify_decomposition(
    nu_bar: &Form,
    q: usize,
    alpha: &Form,
    beta: &Form,
    td: &TubularData,
    r: &Region,
    cfg: &ZeroTestConfig,
) -> Result<Verdict> {
    let phi = &td.f;
    let lhs = nu_bar.scale(&phi.pow(q as i64)?);
    let rhs = alpha
        .scale(&phi.pow(1 + 2 * q as i64)?)
        .checked_add(&wedge(&Form::differential(td.chart(), phi), &tilde_extend(beta, td)?)?.scale(&phi.pow(2 * q as i64)?))?;
    forms_equal(&lhs, &rhs, r, cfg)
}

/// `d(tau) = nu_bar`.
pub fn verify_exact(nu_bar: &Form, tau: &Form, r: &Region, cfg: &ZeroTestConfig) -> Result<Verdict> {
    if tau.degree() + 1 != nu_bar.degree() {
        return Err(Error::DegreeMismatch {
            expected: nu_bar.degree().saturating_sub(1),
            found: tau.degree(),
        });
    }
    forms_equal(&ext_d(tau), nu_bar, r, cfg)
}

pub const REGULAR_VALUE_FLOOR: f64 = 1e-6;

/// Smallest gradient norm of `f` over samples of `S` and of the collar.
pub fn check_regular_value(f: &Expr, td: &TubularData, r: &Region, cfg: &ZeroTestConfig) -> Result<f64> {
    let chart = td.chart();
    let tname = chart.symbol(td.t).as_str().to_string();
    let (_, eo) = td.eps_f64();
    let tv = Expr::symbol(chart.symbol(td.t).clone());
    let eo_exact = Expr::constant(td.eps_outer.clone());
    let collar = r.clone().renamed("collar").with_constraint(&(&eo_exact * &eo_exact) - &(&tv * &tv));
    let grad: Vec<Expr> = chart.coords().iter().map(|s| f.partial(s)).collect();
    let mut points = collar.samples(cfg.rng_seed, cfg.sample_count)?;
    let on_s: Vec<Point> = points.iter().map(|p| p.with(&tname, 0.0)).collect();
    points.extend(on_s);
    let mut min = f64::INFINITY;
    for p in &points {
        let n = grad
            .iter()
            .map(|g| g.eval(p).map(|v| v * v))
            .sum::<Result<f64, _>>()?
            .sqrt();
        if !(n > REGULAR_VALUE_FLOOR) {
            return Err(Error::precondition(
                format!("0 is not a regular value: |grad f| = {n:e} within the collar |{tname}| < {eo}"),
                Some(p.clone()),
            ));
        }
        min = min.min(n);
    }
    Ok(min)
}

/// Verdicts (a) `nu_bar = phi^(1+q) mu ^ (d mu)^q`, (b) `d(nu_bar) = 0`,
/// (c) `d(phi) ^ nu_bar = 0`, (d) `d(tau) = nu_bar`, with `nu_bar` built from
/// the weighted witness `phi mu`.
pub fn check_prex02_pipeline(
    f: &Foliation,
    phi: &Expr,
    mu: &Form,
    td: &TubularData,
    tau: &Form,
    cfg: &ZeroTestConfig,
) -> Result<Vec<Finding>> {
    let r = f.region();
    let basic = Finding::new("phi is basic", check_basic(phi, f, r, cfg));
    let regular = match check_regular_value(phi, td, r, cfg) {
        Ok(min_grad) => Finding::holds("0 is a regular value of phi").with_note(format!(
            "min |grad phi| = {min_grad:.3e} on sampled collar and slice; connectedness of the slice assumed"
        )),
        Err(e) => Finding::new("0 is a regular value of phi", Err(e)),
    };
    if basic.failed() || regular.failed() {
        return Ok(vec![basic, regular]);
    }
    let q = f.codim();
    let chart = f.chart();
    let nu_bar = gv_form(&mu.scale(phi), q);
    let classical = gv_form(mu, q).scale(&phi.pow(1 + q as i64)?);
    let dphi = Form::differential(chart, phi);
    Ok(vec![
        basic,
        regular,
        Finding::new("mu is a Frobenius witness", verify_frobenius(f.nu(), mu, r, cfg)),
        Finding::new("(a) nu_bar = phi^(1+q) mu ^ (d mu)^q", forms_equal(&nu_bar, &classical, r, cfg)),
        Finding::new("(b) d(nu_bar) = 0", form_zero_on(&ext_d(&nu_bar), r, cfg)),
        Finding::new("(c) d(phi) ^ nu_bar = 0", wedge(&dphi, &nu_bar).and_then(|w| form_zero_on(&w, r, cfg))),
        Finding::new("(d) d(tau) = nu_bar", verify_exact(&nu_bar, tau, r, cfg)),
    ])
}

/// `nu_bar` of the pipeline, for reporting.
pub fn weighted_form(phi: &Expr, mu: &Form, q: usize) -> Form {
    gv_form(&mu.scale(phi), q)
}


#[cfg(test)]
mod tests {
    use super::*;

    fn v(n: &str) -> Expr {
        Expr::var(n)
    }

    fn r3() -> (Chart, Region) {
        let c = Chart::new(["x", "y", "z"]);
        let r = Region::new(c.clone(), "box", vec![(-1.0, 1.0); 3]).unwrap();
        (c, r)
    }

    fn d(c: &Chart, n: &str) -> Form {
        Form::dx(c, n).unwrap()
    }

    #[test]
    fn twisted_differential_examples() {
        let (c, _) = r3();
        let x = v("x");
        assert_eq!(d_f(&x, &Form::scalar(&c, v("y"))).unwrap(), d(&c, "y").scale(&x));
        assert_eq!(d_f(&x, &d(&c, "y")).unwrap(), Form::monomial(&c, &[0, 1], Expr::int(-1)));
        assert_eq!(d_f(&x, &d(&c, "x").scale(&v("y"))).unwrap(), Form::monomial(&c, &[0, 1], -&x));
    }

    #[test]
    fn chain_map_instance() {
        let (c, _) = r3();
        let x = v("x");
        let w = d(&c, "z").scale(&v("y"));
        let lhs = d_f(&x, &phi_map(&x, &w).unwrap()).unwrap();
        let rhs = phi_map(&x, &ext_d(&w)).unwrap();
        assert_eq!(lhs, rhs);
        assert_eq!(lhs, Form::monomial(&c, &[1, 2], &x * &x));
        assert_eq!(phi_map(&x, &Form::scalar(&c, v("y"))).unwrap(), Form::scalar(&c, v("y")));
    }

    fn collar(c: &Chart) -> TubularData {
        TubularData::new(c, v("t"), "t", Rational::new(1.into(), 10.into()), Rational::new(1.into(), 5.into())).unwrap()
    }

    #[test]
    fn tilde_extension() {
        let c = Chart::new(["s1", "s2", "t"]);
        let r = Region::new(c.clone(), "box", vec![(-1.0, 1.0); 3]).unwrap();
        let td = collar(&c);
        assert!(td.check(&r, &ZeroTestConfig::default()).iter().all(|f| f.passed()));
        assert_eq!(tilde_extend(&Form::one(&c), &td).unwrap(), Form::scalar(&c, td.rho.clone()));
        let ds = d(&c, "s1");
        assert_eq!(tilde_extend(&ds, &td).unwrap(), ds.scale(&td.rho));
        assert!(tilde_extend(&d(&c, "t"), &td).is_err());
        let beta = ds.scale(&v("s1"));
        let dt = d(&c, "t");
        let lhs = wedge(&dt, &ext_d(&tilde_extend(&beta, &td).unwrap())).unwrap();
        let rhs = wedge(&dt, &tilde_extend(&ext_d(&beta), &td).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        let w = &tilde_extend(&d(&c, "s2"), &td).unwrap();
        for tv in [0.25, -0.3, 0.9] {
            let p = Point::new([("s1", 0.1), ("s2", 0.2), ("t", tv)]);
            assert_eq!(w.coefficient(&[1]).eval(&p).unwrap(), 0.0);
        }
    }

    #[test]
    fn iso_examples() {
        let c = Chart::new(["s", "t"]);
        let r = Region::new(c.clone(), "box", vec![(-1.0, 1.0); 2]).unwrap();
        let td = collar(&c);
        let cfg = ZeroTestConfig::default();
        let img = iso_decompose(&Form::zero(&c, 1), &Form::zero(&c, 0), &td, &r, &cfg).unwrap();
        assert!(img.form.is_zero());
        let alpha = wedge(&d(&c, "t"), &d(&c, "s")).unwrap();
        let img = iso_decompose(&alpha, &Form::zero(&c, 1), &td, &r, &cfg).unwrap();
        assert_eq!(img.form, alpha.scale(&(&v("t") * &v("t"))));
        assert!(img.findings[0].passed());
        let open = d(&c, "s").scale(&v("t"));
        assert!(iso_decompose(&open, &Form::zero(&c, 0), &td, &r, &cfg).is_err());
    }

    #[test]
    fn exactness_examples() {
        let (c, r) = r3();
        let cfg = ZeroTestConfig::default();
        let phi = &v("y") * &Expr::exp(&-&v("x"));
        let nu3 = Form::monomial(&c, &[0, 1, 2], phi.pow(3).unwrap());
        let y3 = v("y").pow(3).unwrap();
        let tau3 = Form::monomial(&c, &[1, 2], (&y3 * &Expr::exp(&(&Expr::int(-3) * &v("x")))).scale(&Rational::new((-1).into(), 3.into())));
        assert!(verify_exact(&nu3, &tau3, &r, &cfg).unwrap().is_proved());
        assert!(verify_exact(&Form::zero(&c, 3), &Form::zero(&c, 2), &r, &cfg).unwrap().is_proved());
        let vol = Form::monomial(&c, &[0, 1, 2], Expr::one());
        assert!(verify_exact(&vol, &Form::monomial(&c, &[1, 2], v("x")), &r, &cfg).unwrap().is_proved());
        assert!(verify_exact(&vol, &vol, &r, &cfg).is_err());
    }

    #[test]
    fn critical_level_set_is_rejected() {
        let (c, r) = r3();
        let phi = &(&v("y") * &v("y")) * &Expr::exp(&-&v("x"));
        let td = TubularData::new(&c, phi.clone(), "y", Rational::new(1.into(), 10.into()), Rational::new(1.into(), 5.into())).unwrap();
        let err = check_regular_value(&phi, &td, &r, &ZeroTestConfig::default()).unwrap_err();
        assert!(err.witness().is_some());
    }
}
