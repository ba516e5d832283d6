//! Tri-state outcome of a zero test and the scalar zero test itself.

use std::fmt;

use rayon::prelude::*;

use crate::config::ZeroTestConfig;
use crate::error::{Error, Result};
use crate::region::Region;
use crate::symbolic::{EvalError, Expr, Point};

/// Sample at which a supposedly vanishing quantity was observed nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub point: Point,
    pub value: f64,
    /// Normal form of the quantity that failed to vanish.
    pub residual: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    ProvedZero,
    NonZero(Witness),
    Undecided(String),
}

impl Verdict {
    pub fn is_proved(&self) -> bool {
        matches!(self, Verdict::ProvedZero)
    }

    pub fn is_nonzero(&self) -> bool {
        matches!(self, Verdict::NonZero(_))
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::NonZero(w) => Some(w),
            _ => None,
        }
    }

    /// Worst of two verdicts: NONZERO beats UNDECIDED beats PROVED-ZERO.
    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (v @ Verdict::NonZero(_), _) | (_, v @ Verdict::NonZero(_)) => v,
            (v @ Verdict::Undecided(_), _) | (_, v @ Verdict::Undecided(_)) => v,
            _ => Verdict::ProvedZero,
        }
    }

    pub fn all(vs: impl IntoIterator<Item = Verdict>) -> Verdict {
        vs.into_iter().fold(Verdict::ProvedZero, Verdict::and)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::ProvedZero => "PROVED-ZERO",
            Verdict::NonZero(_) => "NONZERO",
            Verdict::Undecided(_) => "UNDECIDED",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::ProvedZero => f.write_str("PROVED-ZERO"),
            Verdict::NonZero(w) => write!(f, "NONZERO at {} (value {:e}): {}", w.point, w.value, w.residual),
            Verdict::Undecided(why) => write!(f, "UNDECIDED ({why})"),
        }
    }
}

/// One labelled claim inside an engine report. `Ok(ProvedZero)` means the
/// claim holds; errors are failed preconditions.
#[derive(Clone, Debug)]
pub struct Finding {
    pub label: String,
    pub outcome: std::result::Result<Verdict, Error>,
    pub note: Option<String>,
}

impl Finding {
    pub fn new(label: impl Into<String>, outcome: Result<Verdict>) -> Self {
        Finding {
            label: label.into(),
            outcome,
            note: None,
        }
    }

    pub fn holds(label: impl Into<String>) -> Self {
        Finding::new(label, Ok(Verdict::ProvedZero))
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        matches!(self.outcome, Ok(Verdict::ProvedZero))
    }

    pub fn undecided(&self) -> bool {
        matches!(self.outcome, Ok(Verdict::Undecided(_)))
    }

    pub fn failed(&self) -> bool {
        !self.passed() && !self.undecided()
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.outcome {
            Ok(v) => write!(f, "{}: {v}", self.label)?,
            Err(e) => write!(f, "{}: {e}", self.label)?,
        }
        if let Some(n) = &self.note {
            write!(f, " [{n}]")?;
        }
        Ok(())
    }
}

pub(crate) enum SampleOutcome {
    Small,
    Large(f64),
    Failed(EvalError),
}

pub(crate) fn classify(e: &Expr, p: &Point, cfg: &ZeroTestConfig) -> SampleOutcome {
    match e.eval_with_scale(p) {
        Ok((v, scale)) if !v.is_finite() => SampleOutcome::Large(v.max(scale)),
        Ok((v, scale)) if v.abs() > cfg.abs_tol + cfg.rel_tol * scale => SampleOutcome::Large(v),
        Ok(_) => SampleOutcome::Small,
        Err(err) => SampleOutcome::Failed(err),
    }
}

/// Samples shared by every component of one form-level zero test.
pub fn draw_samples(r: &Region, cfg: &ZeroTestConfig) -> Result<Vec<Point>> {
    Ok(r.samples(cfg.rng_seed, cfg.sample_count)?)
}

/// Zero test of several scalars against one sample set; the first
/// nonvanishing component (in order) supplies the witness.
pub fn components_zero_on(
    parts: &[(String, Expr)],
    r: &Region,
    cfg: &ZeroTestConfig,
) -> Result<Verdict> {
    cfg.validate()?;
    let parts: Vec<(&String, Expr)> = parts
        .iter()
        .map(|(label, e)| (label, r.simplify(e)))
        .filter(|(_, e)| !e.is_zero())
        .collect();
    if parts.is_empty() {
        return Ok(Verdict::ProvedZero);
    }
    let points = draw_samples(r, cfg)?;
    let mut failure: Option<String> = None;
    for (label, e) in &parts {
        let outcomes: Vec<SampleOutcome> = points.par_iter().map(|p| classify(e, p, cfg)).collect();
        for (p, o) in points.iter().zip(outcomes) {
            match o {
                SampleOutcome::Large(value) => {
                    let residual = if label.is_empty() { e.to_string() } else { format!("[{label}] {e}") };
                    return Ok(Verdict::NonZero(Witness {
                        point: p.clone(),
                        value,
                        residual,
                    }));
                }
                SampleOutcome::Failed(err) if failure.is_none() => {
                    failure = Some(format!("evaluation failed at {p}: {err}"));
                }
                _ => {}
            }
        }
    }
    Ok(Verdict::Undecided(failure.unwrap_or_else(|| {
        format!(
            "not reducible to zero; numerically zero at {} samples",
            points.len()
        )
    })))
}

/// PROVED-ZERO when the canonical form (after region-valid flat-atom
/// elimination) is zero, NONZERO with a witness when some sample exceeds
/// the tolerance, UNDECIDED otherwise.
pub fn is_zero_on(e: &Expr, r: &Region, cfg: &ZeroTestConfig) -> Result<Verdict> {
    components_zero_on(&[(String::new(), e.clone())], r, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;

    fn line(lo: f64, hi: f64) -> Region {
        Region::new(Chart::new(["x"]), "I", vec![(lo, hi)]).unwrap()
    }

    fn plane() -> Region {
        Region::new(Chart::new(["x", "y"]), "B", vec![(-2.0, 2.0), (-2.0, 2.0)]).unwrap()
    }

    #[test]
    fn polynomial_identity_is_proved() {
        let x = Expr::var("x");
        let y = Expr::var("y");
        let s = &x + &y;
        let e = &(&(&s * &s) - &(&x * &x)) - &(&(&Expr::int(2) * &(&x * &y)) + &(&y * &y));
        let v = is_zero_on(&e, &plane(), &ZeroTestConfig::default()).unwrap();
        assert_eq!(v, Verdict::ProvedZero);
    }

    #[test]
    fn shifted_coordinate_has_witness() {
        let r = line(-2.0, 2.0);
        let r = r.with_constraint(Expr::var("x"));
        let v = is_zero_on(&(&Expr::var("x") - &Expr::one()), &r, &ZeroTestConfig::default()).unwrap();
        let w = v.witness().expect("witness");
        let x = w.point.get("x").unwrap();
        assert!(x > 0.0 && (x - 1.0).abs() > 1e-9);
    }

    #[test]
    fn transcendental_identity_is_never_refuted() {
        let x = Expr::var("x");
        let g = Expr::exp(&(-&(&x * &x).recip().unwrap()));
        let e = &(&Expr::psi0(&x) * &(&Expr::one() + &g)) - &g;
        let r = line(-2.0, 2.0).with_constraint(x.clone());
        let v = is_zero_on(&e, &r, &ZeroTestConfig::default()).unwrap();
        assert!(!v.is_nonzero(), "{v}");
    }

    #[test]
    fn flat_atom_vanishes_where_its_argument_is_negative() {
        let x = Expr::var("x");
        let r = line(-2.0, 2.0).with_constraint(&Expr::one() - &x);
        let e = Expr::flatexp(&(&x - &Expr::one()));
        assert_eq!(is_zero_on(&e, &r, &ZeroTestConfig::default()).unwrap(), Verdict::ProvedZero);
        let r = line(-2.0, 0.5);
        assert_eq!(is_zero_on(&e, &r, &ZeroTestConfig::default()).unwrap(), Verdict::ProvedZero);
        let r = line(-2.0, 2.0);
        assert!(is_zero_on(&e, &r, &ZeroTestConfig::default()).unwrap().is_nonzero());
    }

    #[test]
    fn verdicts_are_seed_deterministic() {
        let r = plane();
        let e = &Expr::var("x") * &Expr::var("y");
        let cfg = ZeroTestConfig::default().with_seed(99);
        assert_eq!(is_zero_on(&e, &r, &cfg).unwrap(), is_zero_on(&e, &r, &cfg).unwrap());
    }
}
