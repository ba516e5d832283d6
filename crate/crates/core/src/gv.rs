//! Frobenius witnesses, Godbillon-Vey forms, the overlap factorization
//! between nested foliations, and the extension-by-zero gluing of the form
//! of minimal leaf dimension.

use std::collections::BTreeMap;

use crate::config::ZeroTestConfig;
use crate::error::{Error, Result};
use crate::foliation::{overlap, Foliation, FoliationFamily, PiecewiseForm, NO_OVERLAP};
use crate::forms::{ext_d, form_power, form_zero_on, forms_equal, ideal_member, wedge, Form};
use crate::region::Region;
use crate::symbolic::Expr;
use crate::verdict::{Finding, Verdict};

fn sign(k: usize) -> Expr {
    if k % 2 == 0 {
        Expr::one()
    } else {
        Expr::int(-1)
    }
}

/// `(h, idx)` when `nu = h dx_idx` has a single coefficient, on the adapted
/// transverse coordinates of the foliation when those are declared.
fn adapted_shape(f: &Foliation) -> Result<(Expr, Vec<usize>)> {
    let coeffs: Vec<_> = f.nu().coeffs().iter().collect();
    let idx = match f.adapted() {
        Some(a) => {
            let mut idx = a.to_vec();
            idx.sort_unstable();
            idx
        }
        None => match coeffs.as_slice() {
            [(k, _)] => (*k).clone(),
            _ => {
                return Err(Error::UnsupportedShape(format!(
                    "nu of `{}` has several coefficients and no adapted coordinates; supply mu explicitly",
                    f.name()
                )))
            }
        },
    };
    match coeffs.as_slice() {
        [(k, h)] if **k == idx => Ok(((*h).clone(), idx)),
        [] if f.codim() == 0 => Ok((Expr::one(), idx)),
        _ => Err(Error::UnsupportedShape(format!(
            "nu of `{}` is not h times the wedge of its adapted differentials; supply mu explicitly",
            f.name()
        ))),
    }
}

/// `mu = (-1)^q dh / h` for `nu = h dc1 ^ ... ^ dcq`; zero when `q = 0`.
pub fn solve_mu(f: &Foliation) -> Result<Form> {
    if f.codim() == 0 {
        return Ok(Form::zero(f.chart(), 1));
    }
    let (h, _) = adapted_shape(f)?;
    let inv = h.recip()?;
    Ok(Form::differential(f.chart(), &h).scale(&(&inv * &sign(f.codim()))))
}

/// `d nu - nu ^ mu = 0` on the region.
pub fn verify_frobenius(nu: &Form, mu: &Form, r: &Region, cfg: &ZeroTestConfig) -> Result<Verdict> {
    if mu.degree() != 1 {
        return Err(Error::DegreeMismatch {
            expected: 1,
            found: mu.degree(),
        });
    }
    let lhs = ext_d(nu).checked_sub(&wedge(nu, mu)?)?;
    form_zero_on(&lhs, r, cfg)
}

/// `mu ^ (d mu)^q`.
pub fn gv_form(mu: &Form, q: usize) -> Form {
    let p = form_power(&ext_d(mu), q);
    wedge(mu, &p).expect("same chart")
}

/// `(-1)^q2 (mu1 - (-1)^q1 mu2)`.
pub fn mu3(mu1: &Form, mu2: &Form, q1: usize, q2: usize) -> Result<Form> {
    Ok(mu1.checked_sub(&mu2.scale(&sign(q1)))?.scale(&sign(q2)))
}

#[derive(Clone, Debug)]
pub struct Theta {
    pub theta: Form,
    /// `+1` when the first candidate satisfied `w1 = w2 ^ theta`, `-1` when
    /// its negative did.
    pub sign: i8,
    pub verdict: Verdict,
}

/// Factor `w1 = w2 ^ theta` on the overlap of nested foliations in adapted
/// coordinates, with the first candidate `(h1/h2) dx~1 ^ ... ^ dx~q1`.
pub fn solve_theta(sub: &Foliation, sup: &Foliation, ov: &Region, cfg: &ZeroTestConfig) -> Result<Theta> {
    let (h1, idx1) = adapted_shape(sub)?;
    let (h2, idx2) = adapted_shape(sup)?;
    if idx2.iter().any(|i| !idx1.contains(i)) {
        return Err(Error::UnsupportedShape(format!(
            "transverse coordinates of `{}` are not among those of `{}`",
            sup.name(),
            sub.name()
        )));
    }
    if sub.codim() <= sup.codim() {
        return Err(Error::Domain(format!(
            "`{}` must have strictly larger codimension than `{}`",
            sub.name(),
            sup.name()
        )));
    }
    for p in ov.samples(cfg.rng_seed, cfg.sample_count)? {
        let v = h2.eval(&p)?;
        if v == 0.0 {
            return Err(Error::precondition(format!("h2 = {h2} vanishes"), Some(p)));
        }
    }
    let tilde: Vec<usize> = idx1.iter().copied().filter(|i| !idx2.contains(i)).collect();
    let ratio = h1.checked_div(&h2)?;
    let candidate = Form::monomial(sub.chart(), &tilde, ratio);
    let w1 = sub.nu();
    let w2 = sup.nu();
    let first = form_zero_on(&w1.checked_sub(&wedge(w2, &candidate)?)?, ov, cfg)?;
    if first.is_proved() {
        return Ok(Theta {
            theta: candidate,
            sign: 1,
            verdict: first,
        });
    }
    let flipped = -&candidate;
    let second = form_zero_on(&w1.checked_sub(&wedge(w2, &flipped)?)?, ov, cfg)?;
    if second.is_proved() {
        return Ok(Theta {
            theta: flipped,
            sign: -1,
            verdict: second,
        });
    }
    Ok(Theta {
        theta: candidate,
        sign: 1,
        verdict: first,
    })
}

/// Memberships in the transverse ideal of `sup` on the overlap:
/// (a) `d theta - (-1)^q2 theta ^ (mu1 - (-1)^q1 mu2)`, (b) `theta ^ d mu3`,
/// (c) `d mu3`, (d) `d mu1`.
pub fn check_overlap_identities(
    sub: &Foliation,
    sup: &Foliation,
    mu1: &Form,
    mu2: &Form,
    theta: &Form,
    ov: &Region,
    cfg: &ZeroTestConfig,
) -> Vec<Finding> {
    let q2 = sup.codim();
    let q1 = sub.codim().saturating_sub(q2);
    let gens = sup.generators();
    let member = |b: Result<Form>| b.and_then(|b| ideal_member(&b, gens, ov, cfg));
    let shift = mu1.checked_sub(&mu2.scale(&sign(q1)));
    let a = shift
        .clone()
        .and_then(|s| wedge(theta, &s))
        .and_then(|t| ext_d(theta).checked_sub(&t.scale(&sign(q2))));
    let m3 = mu3(mu1, mu2, q1, q2);
    let dm3 = m3.map(|m| ext_d(&m));
    let b = dm3.clone().and_then(|d| wedge(theta, &d));
    vec![
        Finding::new("(a) d(theta) - (-1)^q2 theta ^ (mu1 - (-1)^q1 mu2) in I(sup)", member(a)),
        Finding::new("(b) theta ^ d(mu3) in I(sup)", member(b)),
        Finding::new("(c) d(mu3) in I(sup)", member(dm3)),
        Finding::new("(d) d(mu1) in I(sup)", member(Ok(ext_d(mu1)))),
    ]
}

/// Frobenius witness per family member, by member index.
#[derive(Clone, Debug, Default)]
pub struct MuChoice {
    pub forms: BTreeMap<usize, Form>,
}

impl MuChoice {
    pub fn new() -> Self {
        MuChoice::default()
    }

    pub fn with(mut self, index: usize, mu: Form) -> Self {
        self.forms.insert(index, mu);
        self
    }

    /// Supplied witness, else `0` for one-leaf members, else the adapted
    /// solution.
    pub fn resolve(&self, fam: &FoliationFamily, index: usize) -> Result<Form> {
        let f = &fam.members()[index];
        if let Some(mu) = self.forms.get(&index) {
            return Ok(mu.clone());
        }
        solve_mu(f)
    }
}

/// Frobenius verdicts for every member and its resolved witness.
pub fn check_mu_choice(fam: &FoliationFamily, mu: &MuChoice, cfg: &ZeroTestConfig) -> Vec<Finding> {
    (0..fam.members().len())
        .map(|i| {
            let f = &fam.members()[i];
            let v = mu
                .resolve(fam, i)
                .and_then(|m| verify_frobenius(f.nu(), &m, f.region(), cfg));
            Finding::new(format!("{}: d(nu) = nu ^ mu", f.name()), v)
        })
        .collect()
}

const GAUGE_ADVICE: &str = "the supplied mu does not have closed differential here; a gauge change mu -> mu + f*w may fix this";

/// On each overlap of the minimal-leaf member with a member of smaller
/// codimension `q_j`: `(d mu_min)^(1+q_j) = 0` and the GV form vanishes.
pub fn check_minimal_vanishing(fam: &FoliationFamily, mu: &MuChoice, cfg: &ZeroTestConfig) -> Vec<Finding> {
    let (imin, fmin) = fam.by_rank()[0];
    let mut out = Vec::new();
    let mu_min = match mu.resolve(fam, imin) {
        Ok(m) => m,
        Err(e) => return vec![Finding::new(format!("{}: mu", fmin.name()), Err(e))],
    };
    let qmax = fmin.codim();
    let dmu = ext_d(&mu_min);
    let gv = gv_form(&mu_min, qmax);
    for (_, other) in fam.by_rank().into_iter().skip(1) {
        if other.codim() >= qmax {
            continue;
        }
        let tag = format!("{} on {}", fmin.name(), other.region().name());
        match overlap(fmin.region(), other.region(), cfg) {
            Ok(None) => {
                out.push(Finding::holds(format!("{tag}: (d mu)^(1+{}) = 0", other.codim())).with_note(NO_OVERLAP));
            }
            Ok(Some(ov)) => {
                let power = form_zero_on(&form_power(&dmu, 1 + other.codim()), &ov, cfg);
                let mut f = Finding::new(format!("{tag}: (d mu)^(1+{}) = 0", other.codim()), power);
                if f.failed() {
                    f = f.with_note(GAUGE_ADVICE);
                }
                out.push(f);
                out.push(Finding::new(format!("{tag}: GV form vanishes"), form_zero_on(&gv, &ov, cfg)));
            }
            Err(e) => out.push(Finding::new(tag, Err(e))),
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct GvMin {
    /// Rank whose stratum `Sigma >= r` carries the form.
    pub rank: usize,
    pub degree: usize,
    /// The form on the region of leaves of dimension `rank`.
    pub form: Form,
    pub piecewise: PiecewiseForm,
    pub glued: bool,
    pub findings: Vec<Finding>,
}

/// The family restricted to `Sigma >= r_i`, `r_i` the i-th smallest rank.
pub fn restrict_to_stratum(fam: &FoliationFamily, i: usize) -> Result<(FoliationFamily, Vec<usize>)> {
    let ranks = fam.ranks();
    let Some(&r) = ranks.get(i) else {
        return Err(Error::Domain(format!("stratum index {i} out of range 0..{}", ranks.len())));
    };
    let kept: Vec<usize> = (0..fam.members().len()).filter(|&j| fam.members()[j].leaf_dim() >= r).collect();
    let members = kept.iter().map(|&j| fam.members()[j].clone()).collect();
    Ok((FoliationFamily::new(fam.working_box().clone(), members, fam.saturated())?, kept))
}

/// GV form of the leaves of minimal dimension on `Sigma >= r_i`, extended by
/// zero over the other members.
pub fn gv_min(fam: &FoliationFamily, mu: &MuChoice, i: usize, cfg: &ZeroTestConfig) -> Result<GvMin> {
    let (sub, kept) = restrict_to_stratum(fam, i)?;
    let remapped = MuChoice {
        forms: kept
            .iter()
            .enumerate()
            .filter_map(|(k, j)| mu.forms.get(j).map(|m| (k, m.clone())))
            .collect(),
    };
    let (imin, fmin) = sub.by_rank()[0];
    let mu_min = remapped.resolve(&sub, imin)?;
    let q = fmin.codim();
    let mut findings = Vec::new();
    let frob = Finding::new(
        format!("{}: d(nu) = nu ^ mu", fmin.name()),
        verify_frobenius(fmin.nu(), &mu_min, fmin.region(), cfg),
    );
    if frob.failed() {
        return Err(Error::Gluing {
            message: format!("mu is not a Frobenius witness: {frob}"),
            witness: frob.outcome.as_ref().ok().and_then(|v| v.witness()).map(|w| w.point.clone()),
        });
    }
    findings.push(frob);
    let vanishing = check_minimal_vanishing(&sub, &remapped, cfg);
    if let Some(bad) = vanishing.iter().find(|f| f.failed()) {
        let witness = match &bad.outcome {
            Ok(v) => v.witness().map(|w| w.point.clone()),
            Err(e) => e.witness().cloned(),
        };
        return Err(Error::Gluing {
            message: bad.to_string(),
            witness,
        });
    }
    findings.extend(vanishing);
    let form = gv_form(&mu_min, q).simplify_on(fmin.region());
    findings.push(Finding::new(
        format!("{}: GV form closed", fmin.name()),
        form_zero_on(&ext_d(&form), fmin.region(), cfg),
    ));
    let mut pieces = vec![(fmin.region().clone(), form.clone())];
    for (k, f) in sub.members().iter().enumerate() {
        if k != imin {
            pieces.push((f.region().clone(), Form::zero(f.chart(), form.degree())));
        }
    }
    let piecewise = PiecewiseForm::new(pieces)?;
    findings.extend(piecewise.check_well_defined(cfg));
    let glued = findings.iter().all(|f| f.passed());
    Ok(GvMin {
        rank: fmin.leaf_dim(),
        degree: 2 * q + 1,
        form,
        piecewise,
        glued,
        findings,
    })
}

/// `d(phi)` in the transverse ideal: `phi` is constant along leaves.
pub fn check_basic(phi: &Expr, f: &Foliation, r: &Region, cfg: &ZeroTestConfig) -> Result<Verdict> {
    ideal_member(&Form::differential(f.chart(), phi), f.generators(), r, cfg)
}

#[derive(Clone, Debug)]
pub struct WeightedGv {
    pub nu_bar: Form,
    pub findings: Vec<Finding>,
}

/// `(phi mu) ^ (d(phi mu))^q` for a basic weight, with its factorization,
/// closedness and the lemma `d(phi) ^ mu ^ (d mu)^q = 0`.
pub fn gv_weighted(phi: &Expr, mu: &Form, q: usize, f: &Foliation, cfg: &ZeroTestConfig) -> Result<WeightedGv> {
    let r = f.region();
    let basic = check_basic(phi, f, r, cfg)?;
    if let Verdict::NonZero(w) = &basic {
        return Err(Error::precondition(
            format!("weight {phi} is not basic: d(phi) ^ nu = {}", w.residual),
            Some(w.point.clone()),
        ));
    }
    let chart = f.chart();
    let mu_bar = mu.scale(phi);
    let nu_bar = gv_form(&mu_bar, q);
    let classical = gv_form(mu, q);
    let factor = phi.pow(1 + q as i64)?;
    let findings = vec![
        Finding::new("weight is basic", Ok(basic)),
        Finding::new("mu is a Frobenius witness", verify_frobenius(f.nu(), mu, r, cfg)),
        Finding::new(
            "nu_bar = phi^(1+q) mu ^ (d mu)^q",
            forms_equal(&nu_bar, &classical.scale(&factor), r, cfg),
        ),
        Finding::new("d(nu_bar) = 0", form_zero_on(&ext_d(&nu_bar), r, cfg)),
        Finding::new(
            "d(phi) ^ mu ^ (d mu)^q = 0",
            wedge(&Form::differential(chart, phi), &classical).and_then(|w| form_zero_on(&w, r, cfg)),
        ),
    ];
    Ok(WeightedGv { nu_bar, findings })
}
