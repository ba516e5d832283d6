//! Executes the check directives of a resolved document.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::ZeroTestConfig;
use crate::error::{Error, Result};
use crate::foliation::{check_family, check_invariance, rank_at, validate_foliation};
use crate::forms::{ext_d, form_zero_on, forms_equal, ideal_member, Form};
use crate::gv::{
    check_basic, check_minimal_vanishing, check_mu_choice, check_overlap_identities, gv_form, gv_min, gv_weighted,
    solve_mu, solve_theta, verify_frobenius,
};
use crate::region::Region;
use crate::report::{Entry, Environment, Produced, Report};
use crate::singular::{check_prex02_pipeline, d_f, verify_decomposition, verify_exact};
use crate::spec::{CheckDirective, CheckSpec, SpecDocument};
use crate::testfn::{flatness_check, weak_test_from_cover};
use crate::verdict::{Finding, Verdict, Witness};

pub const SEED_ENV: &str = "FOLIAGE_SEED";

/// Overrides from the command line and the environment.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub env_seed: Option<String>,
    pub samples: Option<usize>,
    pub tol: Option<f64>,
    pub timing: bool,
}

impl RunOptions {
    pub fn with_process_env(mut self) -> Self {
        self.env_seed = std::env::var(SEED_ENV).ok();
        self
    }
}

/// Seed precedence: built-in default, then the document, then the
/// environment variable, then the flag.
pub fn resolve_config(doc: &SpecDocument, opts: &RunOptions) -> Result<(ZeroTestConfig, String)> {
    let mut cfg = doc.config.clone();
    let mut source = if doc.seed_declared { "document" } else { "default" }.to_string();
    if let Some(raw) = &opts.env_seed {
        cfg.rng_seed = raw
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        source = format!("environment {SEED_ENV}");
    }
    if let Some(s) = opts.seed {
        cfg.rng_seed = s;
        source = "flag --seed".into();
    }
    if let Some(n) = opts.samples {
        cfg.sample_count = n;
    }
    if let Some(t) = opts.tol {
        cfg.abs_tol = t;
        cfg.rel_tol = t;
    }
    cfg.validate()?;
    Ok((cfg, source))
}

pub fn environment(cfg: &ZeroTestConfig, source: &str) -> Environment {
    Environment {
        seed: cfg.rng_seed,
        seed_source: source.to_string(),
        samples: cfg.sample_count,
        abs_tol: cfg.abs_tol,
        rel_tol: cfg.rel_tol,
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

pub fn run_checks(doc: &SpecDocument, opts: &RunOptions) -> Result<Report> {
    let (cfg, source) = resolve_config(doc, opts)?;
    Ok(run_with_config(doc, &cfg, &source, opts.timing))
}

pub fn run_with_config(doc: &SpecDocument, cfg: &ZeroTestConfig, seed_source: &str, timing: bool) -> Report {
    let entries: Vec<Entry> = doc
        .checks
        .par_iter()
        .map(|c| {
            let start = Instant::now();
            let mut e = run_one(c, &doc.working_box, cfg);
            if timing {
                e.timing_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            }
            e
        })
        .collect();
    Report::new(environment(cfg, seed_source), entries)
}

pub fn run_one(c: &CheckDirective, bx: &Region, cfg: &ZeroTestConfig) -> Entry {
    let (findings, produced) = match catch_unwind(AssertUnwindSafe(|| execute(&c.spec, bx, cfg))) {
        Ok(r) => r,
        Err(_) => (
            vec![Finding::new("engine", Err(Error::Domain("internal error while running the check".into())))],
            None,
        ),
    };
    let produced = produced.map(|f| Produced {
        text: f.to_string(),
        latex: f.to_latex(),
        degree: f.degree(),
    });
    Entry::from_findings(&c.name, c.kind, &findings, produced)
}

fn failed(label: &str, e: Error) -> Vec<Finding> {
    vec![Finding::new(label, Err(e))]
}

/// Findings of one directive, plus the form it computes if any.
pub fn execute(spec: &CheckSpec, bx: &Region, cfg: &ZeroTestConfig) -> (Vec<Finding>, Option<Form>) {
    match spec {
        CheckSpec::Frobenius { nu, mu, region } => {
            (vec![Finding::new("d(nu) = nu ^ mu", verify_frobenius(nu, mu, region, cfg))], None)
        }
        CheckSpec::GvClosed { mu, q, region } => {
            let gv = gv_form(mu, *q);
            (vec![Finding::new("d(mu ^ (d mu)^q) = 0", form_zero_on(&ext_d(&gv), region, cfg))], Some(gv))
        }
        CheckSpec::OverlapVanishing { family, mu } => {
            let mut fs = check_mu_choice(family, mu, cfg);
            fs.extend(check_minimal_vanishing(family, mu, cfg));
            (fs, None)
        }
        CheckSpec::GvMin { family, mu, stratum } => match gv_min(family, mu, *stratum, cfg) {
            Ok(g) => {
                let mut fs = g.findings;
                let glued = if g.glued { "GLUED" } else { "NOT GLUED" };
                fs.push(Finding::new(
                    format!("{glued}: piecewise form of degree {} on the stratum of rank >= {}", g.degree, g.rank),
                    Ok(if g.glued {
                        Verdict::ProvedZero
                    } else {
                        Verdict::Undecided("extension by zero not established".into())
                    }),
                ));
                (fs, Some(g.form))
            }
            Err(e) => (failed("gv_min", e), None),
        },
        CheckSpec::Basic { phi, foliation, region } => {
            (vec![Finding::new("d(phi) in I(F)", check_basic(phi, foliation, region, cfg))], None)
        }
        CheckSpec::GvWeighted { phi, mu, foliation } => match gv_weighted(phi, mu, foliation.codim(), foliation, cfg) {
            Ok(w) => (w.findings, Some(w.nu_bar)),
            Err(e) => (failed("weighted GV form", e), None),
        },
        CheckSpec::OverlapIdentities { sub, sup, mu1, mu2, region } => {
            let run = || -> Result<Vec<Finding>> {
                let mu1 = match mu1 {
                    Some(m) => m.clone(),
                    None => solve_mu(sub)?,
                };
                let mu2 = match mu2 {
                    Some(m) => m.clone(),
                    None => solve_mu(sup)?,
                };
                let th = solve_theta(sub, sup, region, cfg)?;
                let mut fs = vec![Finding::new("theta: nu1 = nu2 ^ theta", Ok(th.verdict.clone()))];
                fs.extend(check_overlap_identities(sub, sup, &mu1, &mu2, &th.theta, region, cfg));
                Ok(fs)
            };
            (run().unwrap_or_else(|e| failed("overlap identities", e)), None)
        }
        CheckSpec::Theta { sub, sup, region } => match solve_theta(sub, sup, region, cfg) {
            Ok(th) => (
                vec![Finding::new("nu1 = nu2 ^ theta", Ok(th.verdict)).with_note(format!("sign {:+}", th.sign))],
                Some(th.theta),
            ),
            Err(e) => (failed("theta", e), None),
        },
        CheckSpec::Foliation { foliation } => (validate_foliation(foliation, cfg), None),
        CheckSpec::Family { family } => (check_family(family, cfg), None),
        CheckSpec::Invariance { map, foliation } => {
            (vec![Finding::new("pullback of nu in I(F)", check_invariance(map, foliation, cfg))], None)
        }
        CheckSpec::Ideal { form, gens, region } => {
            (vec![Finding::new("form in ideal", ideal_member(form, gens, region, cfg))], None)
        }
        CheckSpec::Equal { lhs, rhs, region } => (vec![Finding::new("lhs = rhs", forms_equal(lhs, rhs, region, cfg))], None),
        CheckSpec::Exactness { nu, tau, region } => {
            (vec![Finding::new("d(tau) = nu", verify_exact(nu, tau, region, cfg))], None)
        }
        CheckSpec::Flatness { f, set } => match flatness_check(f, set, bx, cfg) {
            Ok(r) => {
                let finding = if r.passed {
                    Finding::holds("flat on the closed set").with_note(r.summary)
                } else {
                    let worst = r.estimates.last().map(|e| e.iter().cloned().fold(0.0, f64::max)).unwrap_or(f64::NAN);
                    match r.witness {
                        Some(point) => Finding::new(
                            "flat on the closed set",
                            Ok(Verdict::NonZero(Witness {
                                point,
                                value: worst,
                                residual: r.summary,
                            })),
                        ),
                        None => Finding::new("flat on the closed set", Err(Error::precondition(r.summary, None))),
                    }
                };
                (vec![finding], None)
            }
            Err(e) => (failed("flatness", e), None),
        },
        CheckSpec::WeakCover { cover } => match weak_test_from_cover(bx, &cover.bumps, &cover.set, cover.samples, cfg) {
            Ok(w) => (w.findings, None),
            Err(e) => (failed("weak test function", e), None),
        },
        CheckSpec::Prex02 { foliation, phi, mu, tubular, tau } => {
            match check_prex02_pipeline(foliation, phi, mu, tubular, tau, cfg) {
                Ok(fs) => {
                    let nu_bar = (fs.len() > 2).then(|| gv_form(&mu.scale(phi), foliation.codim()));
                    (fs, nu_bar)
                }
                Err(e) => (failed("pipeline preconditions", e), None),
            }
        }
        CheckSpec::DfClosed { f, form, region } => {
            let v = d_f(f, form).and_then(|w| form_zero_on(&w, region, cfg));
            (vec![Finding::new("d_f(form) = 0", v)], None)
        }
        CheckSpec::Decomposition { nu, q, alpha, beta, tubular, region } => {
            let mut fs = tubular.check(region, cfg);
            fs.push(Finding::new(
                "phi^q nu = phi^(1+2q) alpha + phi^(2q) d(phi) ^ beta~",
                verify_decomposition(nu, *q, alpha, beta, tubular, region, cfg),
            ));
            (fs, None)
        }
        CheckSpec::Rank { family, point, expect } => {
            let p = family.chart().point(point);
            let finding = match (rank_at(family, &p), expect) {
                (Ok(r), Some(e)) if r != *e => Finding::new(
                    "rank",
                    Ok(Verdict::NonZero(Witness {
                        point: p,
                        value: r as f64,
                        residual: format!("rank {r}, expected {e}"),
                    })),
                ),
                (Ok(r), _) => Finding::holds("rank").with_note(format!("r = {r}")),
                (Err(e), _) => Finding::new("rank", Err(e)),
            };
            (vec![finding], None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Status;
    use crate::spec::parse_spec;

    fn gallery(name: &str) -> String {
        let path = format!("{}/../../gallery/{name}", env!("CARGO_MANIFEST_DIR"));
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
    }

    fn run(text: &str) -> Report {
        let doc = parse_spec(text).unwrap_or_else(|d| panic!("{d:?}"));
        run_checks(&doc, &RunOptions::default()).unwrap()
    }

    #[test]
    fn frobenius_directives() {
        let head = "chart: x in [-1, 1]; y in [-1, 1]; z in [-1, 1]\n";
        let rep = run(&format!(
            "{head}check good: kind = frobenius; nu = dy - y*dx; mu = -dx\ncheck bad: kind = frobenius; nu = dy; mu = dx\n"
        ));
        assert_eq!(rep.entries[0].verdict, Status::Pass);
        assert_eq!(rep.entries[1].verdict, Status::Fail);
        let w = rep.entries[1].witness.as_ref().unwrap();
        assert!(w.point.is_some());
        assert_eq!(w.normal_form.as_deref(), Some("dx^dy"));
    }

    #[test]
    fn gallery_gv_min_glues() {
        let rep = run(&gallery("prex01.spec"));
        let gv = rep.entries.iter().find(|e| e.kind == "gv-min").unwrap();
        assert_eq!(gv.verdict, Status::Pass);
        assert!(gv.messages.iter().any(|m| m.starts_with("GLUED")));
        assert_eq!(gv.produced.as_ref().unwrap().text, "flatexp(-1 + x)*dx^dy^dz");
        assert_eq!(rep.exit_code(), 0);
    }

    #[test]
    fn weighted_gallery_has_six_checks() {
        let doc = parse_spec(&gallery("prex02.spec")).unwrap();
        assert_eq!(doc.checks.len(), 6);
    }

    #[test]
    fn seed_precedence() {
        let doc = parse_spec("chart: x in [0, 1]\nconfig: seed = 9\n").unwrap();
        let mut opts = RunOptions::default();
        assert_eq!(resolve_config(&doc, &opts).unwrap().0.rng_seed, 9);
        opts.env_seed = Some("12".into());
        let (cfg, src) = resolve_config(&doc, &opts).unwrap();
        assert_eq!((cfg.rng_seed, src.as_str()), (12, "environment FOLIAGE_SEED"));
        opts.seed = Some(3);
        assert_eq!(resolve_config(&doc, &opts).unwrap().0.rng_seed, 3);
        opts.env_seed = Some("abc".into());
        assert!(resolve_config(&doc, &opts).is_err());
        let bare = parse_spec("chart: x in [0, 1]\n").unwrap();
        assert_eq!(resolve_config(&bare, &RunOptions::default()).unwrap().1, "default");
    }

    #[test]
    fn seeded_runs_are_identical() {
        let text = gallery("plane.spec");
        let a = crate::report::render_report(&run(&text), crate::report::Format::Json);
        let b = crate::report::render_report(&run(&text), crate::report::Format::Json);
        assert_eq!(a, b);
    }
}
