//! Regular foliations on regions, families of them with distinct leaf
//! dimensions, rank and strata, and invariance under coordinate maps.

use std::fmt;

use crate::chart::Chart;
use crate::config::ZeroTestConfig;
use crate::error::{Error, Result};
use crate::forms::{check_independent, ext_d, form_zero_on, forms_equal, ideal_member, pullback, wedge, wedge_all, CoordinateMap, Form};
use crate::region::Region;
use crate::symbolic::{Expr, Point};
use crate::verdict::{Finding, Verdict};

/// Regular foliation of a region with leaves of dimension `r`, defined by a
/// decomposable `q`-form `nu = w1 ^ ... ^ wq`, `q = m - r`.
#[derive(Clone, Debug)]
pub struct Foliation {
    name: String,
    region: Region,
    leaf_dim: usize,
    nu: Form,
    decomposition: Vec<Form>,
    adapted: Option<Vec<usize>>,
}

impl Foliation {
    /// Without an explicit decomposition, codimension 0 and 1 are
    /// decomposed trivially and a single-coefficient `h dc1 ^ ... ^ dcq` as
    /// `(h dc1) ^ dc2 ^ ... ^ dcq`.
    pub fn new(
        name: impl Into<String>,
        region: Region,
        leaf_dim: usize,
        nu: Form,
        decomposition: Option<Vec<Form>>,
        adapted: Option<Vec<usize>>,
    ) -> Result<Self> {
        let name = name.into();
        let chart = region.chart().clone();
        chart.ensure_same(nu.chart())?;
        let m = chart.dim();
        if leaf_dim > m {
            return Err(Error::Domain(format!("leaf dimension {leaf_dim} exceeds dimension {m}")));
        }
        let q = m - leaf_dim;
        if nu.degree() != q {
            return Err(Error::DegreeMismatch {
                expected: q,
                found: nu.degree(),
            });
        }
        if q == 0 && !nu.as_scalar().is_some_and(|c| c.is_one()) {
            return Err(Error::Domain(format!("one-leaf foliation `{name}` must use nu = 1")));
        }
        let decomposition = match decomposition {
            Some(d) => d,
            None if q == 0 => Vec::new(),
            None if q == 1 => vec![nu.clone()],
            None => match nu.coeffs().iter().collect::<Vec<_>>().as_slice() {
                [(idx, h)] => idx
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| Form::monomial(&chart, &[i], if k == 0 { (*h).clone() } else { Expr::one() }))
                    .collect(),
                _ => {
                    return Err(Error::UnsupportedShape(format!(
                        "nu of `{name}` is not a single wedge of differentials; supply its decomposition"
                    )))
                }
            },
        };
        if decomposition.len() != q {
            return Err(Error::Domain(format!(
                "`{name}` needs {q} transverse 1-forms, got {}",
                decomposition.len()
            )));
        }
        for w in &decomposition {
            chart.ensure_same(w.chart())?;
            if w.degree() != 1 {
                return Err(Error::DegreeMismatch {
                    expected: 1,
                    found: w.degree(),
                });
            }
        }
        if let Some(a) = &adapted {
            if a.len() != q || a.iter().any(|&i| i >= m) {
                return Err(Error::Domain(format!(
                    "`{name}` needs exactly {q} adapted transverse coordinates"
                )));
            }
        }
        Ok(Foliation {
            name,
            region,
            leaf_dim,
            nu,
            decomposition,
            adapted,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn chart(&self) -> &Chart {
        self.region.chart()
    }

    pub fn leaf_dim(&self) -> usize {
        self.leaf_dim
    }

    pub fn codim(&self) -> usize {
        self.chart().dim() - self.leaf_dim
    }

    pub fn nu(&self) -> &Form {
        &self.nu
    }

    pub fn generators(&self) -> &[Form] {
        &self.decomposition
    }

    /// Transverse coordinate indices, when declared.
    pub fn adapted(&self) -> Option<&[usize]> {
        self.adapted.as_deref()
    }

    pub fn with_region(&self, region: Region) -> Result<Foliation> {
        self.chart().ensure_same(region.chart())?;
        let mut f = self.clone();
        f.region = region;
        Ok(f)
    }
}

/// Decomposition product, pointwise independence and integrability
/// `d(w^a) ^ nu = 0`.
pub fn validate_foliation(f: &Foliation, cfg: &ZeroTestConfig) -> Vec<Finding> {
    let r = &f.region;
    let product = wedge_all(f.chart(), f.generators()).and_then(|w| forms_equal(&w, &f.nu, r, cfg));
    let independence = check_independent(f.generators(), r, cfg).map(|_| Verdict::ProvedZero);
    let integrable = f
        .generators()
        .iter()
        .map(|w| wedge(&ext_d(w), &f.nu).and_then(|t| form_zero_on(&t, r, cfg)))
        .collect::<Result<Vec<_>>>()
        .map(Verdict::all);
    vec![
        Finding::new(format!("{}: decomposition wedge equals nu", f.name), product),
        Finding::new(format!("{}: generators pointwise independent", f.name), independence),
        Finding::new(format!("{}: integrability d(w) ^ nu = 0", f.name), integrable),
    ]
}

/// Finite cover of the working box by foliated regions.
#[derive(Clone, Debug)]
pub struct FoliationFamily {
    working_box: Region,
    members: Vec<Foliation>,
    saturated: bool,
}

impl FoliationFamily {
    pub fn new(working_box: Region, members: Vec<Foliation>, saturated: bool) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Domain("a family needs at least one foliation".into()));
        }
        for f in &members {
            working_box.chart().ensure_same(f.chart())?;
        }
        Ok(FoliationFamily {
            working_box,
            members,
            saturated,
        })
    }

    pub fn members(&self) -> &[Foliation] {
        &self.members
    }

    pub fn working_box(&self) -> &Region {
        &self.working_box
    }

    pub fn chart(&self) -> &Chart {
        self.working_box.chart()
    }

    /// Whether the user asserts saturation by whole leaves.
    pub fn saturated(&self) -> bool {
        self.saturated
    }

    /// Sorted distinct leaf dimensions.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.members.iter().map(|f| f.leaf_dim).collect();
        r.sort_unstable();
        r.dedup();
        r
    }

    /// Member with the smallest leaf dimension.
    pub fn minimal(&self) -> &Foliation {
        self.members.iter().min_by_key(|f| f.leaf_dim).expect("nonempty")
    }

    pub fn index_of_rank(&self, r: usize) -> Option<usize> {
        self.members.iter().position(|f| f.leaf_dim == r)
    }

    /// Members indexed in increasing leaf dimension.
    pub fn by_rank(&self) -> Vec<(usize, &Foliation)> {
        let mut v: Vec<(usize, &Foliation)> = self.members.iter().enumerate().collect();
        v.sort_by_key(|(_, f)| f.leaf_dim);
        v
    }
}

/// Overlap of two regions, or `None` when the sampler finds no point of it.
pub fn overlap(a: &Region, b: &Region, cfg: &ZeroTestConfig) -> Result<Option<Region>> {
    let r = match a.intersect(b) {
        Ok(r) => r,
        Err(Error::Domain(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    match r.sample(cfg.rng_seed, 0) {
        Ok(_) => Ok(Some(r)),
        Err(_) => Ok(None),
    }
}

pub const NO_OVERLAP: &str = "no overlap detected";

/// Member validity, distinct leaf dimensions, cover of the working box and
/// tangency `T F_i` inside `T F_j` on overlaps with `r_i < r_j`.
pub fn check_family(fam: &FoliationFamily, cfg: &ZeroTestConfig) -> Vec<Finding> {
    let mut out = Vec::new();
    for f in &fam.members {
        let member = validate_foliation(f, cfg);
        out.extend(member.into_iter().map(|mut x| {
            x.label = format!("F1 {}", x.label);
            x
        }));
    }
    for (i, a) in fam.members.iter().enumerate() {
        for b in &fam.members[i + 1..] {
            let label = format!("F2 {} vs {}: distinct leaf dimensions", a.name, b.name);
            out.push(if a.leaf_dim != b.leaf_dim {
                Finding::holds(label)
            } else {
                Finding::new(label, Err(Error::Domain(format!("both have leaf dimension {}", a.leaf_dim))))
            });
        }
    }
    out.push(Finding::new("cover of the working box", check_cover(fam, cfg)));
    for (_, a) in fam.by_rank() {
        for (_, b) in fam.by_rank() {
            if a.leaf_dim >= b.leaf_dim {
                continue;
            }
            let label = format!("F3 {} in {}: tangency on overlap", a.name, b.name);
            let f = match overlap(&a.region, &b.region, cfg) {
                Ok(None) => Finding::holds(label).with_note(NO_OVERLAP),
                Ok(Some(ov)) => {
                    let verdicts = b
                        .generators()
                        .iter()
                        .map(|w| ideal_member(w, a.generators(), &ov, cfg))
                        .collect::<Result<Vec<_>>>()
                        .map(Verdict::all);
                    Finding::new(label, verdicts)
                }
                Err(e) => Finding::new(label, Err(e)),
            };
            out.push(f);
        }
    }
    let note = if fam.saturated {
        "saturation by whole leaves asserted by the document, not verified"
    } else {
        "saturation by whole leaves not asserted"
    };
    out.push(Finding::holds("F3' saturation").with_note(note));
    out
}

fn check_cover(fam: &FoliationFamily, cfg: &ZeroTestConfig) -> Result<Verdict> {
    for p in fam.working_box.samples(cfg.rng_seed, cfg.sample_count)? {
        if !fam.members.iter().any(|f| f.region.contains(&p)) {
            return Err(Error::Coverage {
                message: "box sample lies in no member region".into(),
                witness: Some(p),
            });
        }
    }
    Ok(Verdict::ProvedZero)
}

/// `max r_i` over member regions containing `p`.
pub fn rank_at(fam: &FoliationFamily, p: &Point) -> Result<usize> {
    fam.members
        .iter()
        .filter(|f| f.region.contains(p))
        .map(|f| f.leaf_dim)
        .max()
        .ok_or_else(|| Error::Coverage {
            message: format!("{p} lies in no member region"),
            witness: Some(p.clone()),
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StratumMode {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl StratumMode {
    pub fn symbol(self) -> &'static str {
        match self {
            StratumMode::Eq => "=",
            StratumMode::Lt => "<",
            StratumMode::Le => "<=",
            StratumMode::Gt => ">",
            StratumMode::Ge => ">=",
        }
    }

    fn accepts(self, rank: usize, r: usize) -> bool {
        match self {
            StratumMode::Eq => rank == r,
            StratumMode::Lt => rank < r,
            StratumMode::Le => rank <= r,
            StratumMode::Gt => rank > r,
            StratumMode::Ge => rank >= r,
        }
    }
}

/// `{x : r(x) mode r}`. The open strata (`>=`, `>`) also carry the member
/// regions whose union realizes them.
#[derive(Clone, Debug)]
pub struct Stratum {
    pub rank: usize,
    pub mode: StratumMode,
    pub open_cover: Option<Vec<Region>>,
    ranked: Vec<(usize, Region)>,
}

impl Stratum {
    pub fn contains(&self, p: &Point) -> bool {
        let rank = self
            .ranked
            .iter()
            .filter(|(_, r)| r.contains(p))
            .map(|(k, _)| *k)
            .max();
        rank.is_some_and(|k| self.mode.accepts(k, self.rank))
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sigma{}{}", self.mode.symbol(), self.rank)?;
        if let Some(cover) = &self.open_cover {
            let parts: Vec<String> = cover.iter().map(|r| r.describe()).collect();
            write!(f, " = union of [{}]", parts.join("; "))?;
        }
        Ok(())
    }
}

pub fn stratum(fam: &FoliationFamily, r: usize, mode: StratumMode) -> Result<Stratum> {
    if !fam.ranks().contains(&r) {
        return Err(Error::Domain(format!("{r} is not a leaf dimension of the family {:?}", fam.ranks())));
    }
    let ranked: Vec<(usize, Region)> = fam.members.iter().map(|f| (f.leaf_dim, f.region.clone())).collect();
    let open_cover = matches!(mode, StratumMode::Ge | StratumMode::Gt).then(|| {
        ranked
            .iter()
            .filter(|(k, _)| mode.accepts(*k, r))
            .map(|(_, reg)| reg.clone())
            .collect()
    });
    Ok(Stratum {
        rank: r,
        mode,
        open_cover,
        ranked,
    })
}

/// Whether `m` maps the foliation's region into itself and pulls every
/// transverse generator back into the transverse ideal.
pub fn check_invariance(m: &CoordinateMap, f: &Foliation, cfg: &ZeroTestConfig) -> Result<Verdict> {
    m.source().ensure_same(f.chart())?;
    m.target().ensure_same(f.chart())?;
    for p in f.region.samples(cfg.rng_seed, cfg.sample_count)? {
        let image = m.apply(&p)?;
        if !f.region.contains(&image) {
            return Err(Error::precondition(
                format!("map sends the sample outside `{}` (image {image})", f.region.name()),
                Some(p),
            ));
        }
    }
    let mut verdicts = Vec::new();
    for w in f.generators() {
        let pulled = pullback(m, w)?;
        verdicts.push(form_zero_on(&wedge(&pulled, &f.nu)?, &f.region, cfg)?);
    }
    Ok(Verdict::all(verdicts))
}

/// Forms on several regions, all of one degree.
#[derive(Clone, Debug)]
pub struct PiecewiseForm {
    pub pieces: Vec<(Region, Form)>,
    pub degree: usize,
}

impl PiecewiseForm {
    pub fn new(pieces: Vec<(Region, Form)>) -> Result<Self> {
        let degree = pieces.first().map(|(_, f)| f.degree()).unwrap_or(0);
        for (r, f) in &pieces {
            r.chart().ensure_same(f.chart())?;
            if f.degree() != degree {
                return Err(Error::DegreeMismatch {
                    expected: degree,
                    found: f.degree(),
                });
            }
        }
        Ok(PiecewiseForm { pieces, degree })
    }

    /// Agreement of the pieces on every sampled pairwise overlap.
    pub fn check_well_defined(&self, cfg: &ZeroTestConfig) -> Vec<Finding> {
        let mut out = Vec::new();
        for (i, (ra, fa)) in self.pieces.iter().enumerate() {
            for (rb, fb) in &self.pieces[i + 1..] {
                let label = format!("pieces agree on {} & {}", ra.name(), rb.name());
                out.push(match overlap(ra, rb, cfg) {
                    Ok(None) => Finding::holds(label).with_note(NO_OVERLAP),
                    Ok(Some(ov)) => Finding::new(label, forms_equal(fa, fb, &ov, cfg)),
                    Err(e) => Finding::new(label, Err(e)),
                });
            }
        }
        out
    }

    /// Piece whose region contains the point, first match wins.
    pub fn piece_at(&self, p: &Point) -> Option<&Form> {
        self.pieces.iter().find(|(r, _)| r.contains(p)).map(|(_, f)| f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(n: &str) -> Expr {
        Expr::var(n)
    }

    fn plane_family() -> FoliationFamily {
        let c = Chart::new(["x", "y"]);
        let bx = Region::new(c.clone(), "box", vec![(-2.0, 2.0), (-2.0, 2.0)]).unwrap();
        let u1 = bx.clone().renamed("U1").with_constraint(v("x"));
        let u2 = bx.clone().renamed("U2").with_constraint(&Expr::one() - &v("x"));
        let f1 = Foliation::new("F1", u1, 2, Form::one(&c), None, None).unwrap();
        let f2 = Foliation::new("F2", u2, 1, Form::dx(&c, "y").unwrap(), None, Some(vec![1])).unwrap();
        FoliationFamily::new(bx, vec![f1, f2], false).unwrap()
    }

    fn pt(x: f64, y: f64) -> Point {
        Point::new([("x", x), ("y", y)])
    }

    #[test]
    fn plane_family_satisfies_the_conditions() {
        let fam = plane_family();
        let findings = check_family(&fam, &ZeroTestConfig::default());
        assert!(findings.iter().all(|f| f.passed()), "{findings:#?}");
    }

    #[test]
    fn equal_leaf_dimensions_violate_distinctness() {
        let c = Chart::new(["x", "y"]);
        let bx = Region::new(c.clone(), "box", vec![(-2.0, 2.0), (-2.0, 2.0)]).unwrap();
        let a = Foliation::new("A", bx.clone(), 1, Form::dx(&c, "x").unwrap(), None, None).unwrap();
        let b = Foliation::new("B", bx.clone(), 1, Form::dx(&c, "y").unwrap(), None, None).unwrap();
        let fam = FoliationFamily::new(bx, vec![a, b], false).unwrap();
        let findings = check_family(&fam, &ZeroTestConfig::default());
        assert!(findings.iter().any(|f| f.label.starts_with("F2") && f.failed()));
    }

    #[test]
    fn rank_profile_of_the_plane_family() {
        let fam = plane_family();
        assert_eq!(rank_at(&fam, &pt(2.0 - 1e-9, 0.0)).unwrap(), 2);
        assert_eq!(rank_at(&fam, &pt(1.5, 0.0)).unwrap(), 2);
        assert_eq!(rank_at(&fam, &pt(-1.0, 0.0)).unwrap(), 1);
        assert_eq!(rank_at(&fam, &pt(0.5, 0.0)).unwrap(), 2);
        assert!(rank_at(&fam, &pt(5.0, 0.0)).is_err());
    }

    #[test]
    fn strata_of_the_plane_family() {
        let fam = plane_family();
        let top = stratum(&fam, 2, StratumMode::Ge).unwrap();
        let cover = top.open_cover.as_ref().unwrap();
        assert_eq!(cover.len(), 1);
        assert_eq!(cover[0].constraints(), &[v("x")]);
        let all = stratum(&fam, 1, StratumMode::Ge).unwrap();
        assert_eq!(all.open_cover.as_ref().unwrap().len(), 2);
        let low = stratum(&fam, 1, StratumMode::Eq).unwrap();
        assert!(low.open_cover.is_none());
        for x in [-1.9, -1.0, -0.3, 0.0] {
            assert!(low.contains(&pt(x, 0.3)));
        }
        for x in [0.01, 0.5, 1.5] {
            assert!(!low.contains(&pt(x, 0.3)));
        }
        assert!(stratum(&fam, 0, StratumMode::Ge).is_err());
    }

    #[test]
    fn contact_form_is_not_integrable() {
        let c = Chart::new(["x", "y", "z"]);
        let bx = Region::new(c.clone(), "box", vec![(-2.0, 2.0); 3]).unwrap();
        let nu = &Form::dx(&c, "z").unwrap() + &Form::dx(&c, "y").unwrap().scale(&v("x"));
        let f = Foliation::new("C", bx, 2, nu, None, None).unwrap();
        let findings = validate_foliation(&f, &ZeroTestConfig::default());
        assert!(findings[0].passed() && findings[1].passed());
        let w = findings[2].outcome.as_ref().unwrap().witness().unwrap();
        assert_eq!(w.residual, "dx^dy^dz");
    }

    #[test]
    fn invariance_examples() {
        let c = Chart::new(["x", "y"]);
        let disk = Region::new(c.clone(), "disk", vec![(-1.0, 1.0), (-1.0, 1.0)])
            .unwrap()
            .with_constraint(&Expr::one() - &(&(&v("x") * &v("x")) + &(&v("y") * &v("y"))));
        let f = Foliation::new("H", disk, 1, Form::dx(&c, "y").unwrap(), None, None).unwrap();
        let rot = CoordinateMap::new(c.clone(), c.clone(), vec![-&v("y"), v("x")]).unwrap();
        assert!(check_invariance(&rot, &f, &ZeroTestConfig::default()).unwrap().is_nonzero());
        let strip = Region::new(c.clone(), "strip", vec![(-1e6, 1e6), (-1.0, 1.0)]).unwrap();
        let h = Foliation::new("H", strip, 1, Form::dx(&c, "y").unwrap(), None, None).unwrap();
        let shift = CoordinateMap::new(c.clone(), c.clone(), vec![&v("x") + &Expr::one(), v("y")]).unwrap();
        assert!(check_invariance(&shift, &h, &ZeroTestConfig::default()).unwrap().is_proved());
    }
}
