//! Acceptance criteria for the engine and the batch verifier. Prints one
//! line per criterion and exits non-zero when any of them fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;

use foliage::foliation::{validate_foliation, Foliation};
use foliage::forms::{ext_d, form_zero_on, forms_equal, ideal_member, pullback, wedge};
use foliage::gv::{
    check_basic, check_overlap_identities, gv_form, gv_min, gv_weighted, solve_mu, solve_theta, verify_frobenius,
};
use foliage::random::{random_form, random_map, random_poly, rng, subsets, Shape};
use foliage::report::{render_report, Format};
use foliage::runner::{run_checks, RunOptions};
use foliage::singular::{check_prex02_pipeline, d_f, phi_map, TubularData};
use foliage::spec::parse_spec;
use foliage::testfn::{flatness_check, strengthen, weak_test_from_cover, BumpSpec, ClosedSetSpec};
use foliage::verdict::{Finding, Verdict};
use foliage::{Chart, Expr, Form, Point, Region, ZeroTestConfig};

type Outcome = Result<String, String>;

fn cfg() -> ZeroTestConfig {
    ZeroTestConfig::default()
}

fn chart(dim: usize) -> Chart {
    Chart::new(["x", "y", "z", "w"].into_iter().take(dim))
}

fn cube(c: &Chart, half: f64) -> Region {
    Region::new(c.clone(), "box", vec![(-half, half); c.dim()]).unwrap()
}

fn d(c: &Chart, n: &str) -> Form {
    Form::dx(c, n).unwrap()
}

fn v(n: &str) -> Expr {
    Expr::var(n)
}

fn sign(k: usize) -> Expr {
    if k % 2 == 0 {
        Expr::one()
    } else {
        Expr::int(-1)
    }
}

fn gallery(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../gallery").join(name)
}

fn gallery_text(name: &str) -> String {
    std::fs::read_to_string(gallery(name)).unwrap()
}

fn proved(v: foliage::Result<Verdict>) -> bool {
    matches!(v, Ok(Verdict::ProvedZero))
}

fn omega(c: &Chart) -> Form {
    &d(c, "y") - &d(c, "x").scale(&v("y"))
}

fn gauge_mu(c: &Chart) -> Form {
    &d(c, "x").scale(&-&(&Expr::one() + &(&v("y") * &v("z")))) + &d(c, "y").scale(&v("z"))
}

fn exterior_laws() -> Outcome {
    const N: u64 = 150;
    let mut fails = Vec::new();
    for i in 0..N {
        let c = chart(3 + (i % 2) as usize);
        let r = cube(&c, 1.0);
        let mut g = rng(1000 + i);
        let s = Shape::default();
        let p = g.gen_range(0..3);
        let q = g.gen_range(0..2);
        let a = random_form(&mut g, &c, p, &s);
        let b = random_form(&mut g, &c, q, &s);
        if !proved(form_zero_on(&ext_d(&ext_d(&a)), &r, &cfg())) {
            fails.push(format!("d(d a) #{i}"));
        }
        let lhs = ext_d(&wedge(&a, &b).unwrap());
        let rhs = &wedge(&ext_d(&a), &b).unwrap() + &wedge(&a, &ext_d(&b)).unwrap().scale(&sign(p));
        if !proved(forms_equal(&lhs, &rhs, &r, &cfg())) {
            fails.push(format!("leibniz #{i}"));
        }
        let ab = wedge(&a, &b).unwrap();
        let ba = wedge(&b, &a).unwrap().scale(&sign(p * q));
        if !proved(forms_equal(&ab, &ba, &r, &cfg())) {
            fails.push(format!("anticommutativity #{i}"));
        }
        let m = random_map(&mut g, &c, &Shape::polynomial());
        let e = random_form(&mut g, &c, p, &Shape::polynomial());
        let lhs = pullback(&m, &ext_d(&e)).unwrap();
        let rhs = ext_d(&pullback(&m, &e).unwrap());
        if !proved(forms_equal(&lhs, &rhs, &r, &cfg())) {
            fails.push(format!("naturality #{i}"));
        }
    }
    if fails.is_empty() {
        Ok(format!("{N} instances of each of 4 laws proved zero"))
    } else {
        Err(format!("{} not proved: {}", fails.len(), fails.join(", ")))
    }
}

fn frobenius_fixtures() -> Outcome {
    let c = chart(3);
    let r = cube(&c, 2.0);
    let plain = verify_frobenius(&omega(&c), &-&d(&c, "x"), &r, &cfg()).map_err(|e| e.to_string())?;
    let shifted = verify_frobenius(&omega(&c), &gauge_mu(&c), &r, &cfg()).map_err(|e| e.to_string())?;
    let contact = Foliation::new("contact", r, 2, &d(&c, "z") + &d(&c, "y").scale(&v("x")), None, None)
        .map_err(|e| e.to_string())?;
    let found = validate_foliation(&contact, &cfg());
    let integrability = found.iter().find(|f| f.label.contains("integrability")).ok_or("no integrability finding")?;
    let witness = match &integrability.outcome {
        Ok(Verdict::NonZero(w)) => w.residual.clone(),
        other => return Err(format!("contact form not rejected: {other:?}")),
    };
    if !plain.is_proved() || !shifted.is_proved() {
        return Err(format!("witnesses: {plain} / {shifted}"));
    }
    if witness != "dx^dy^dz" {
        return Err(format!("contact witness {witness}"));
    }
    Ok("both witnesses proved; contact form rejected with dx^dy^dz".into())
}

/// Central differences of the witness coefficients, independent of the
/// symbolic wedge and differential.
fn numeric_gv_coefficient(mu: &Form, p: &Point) -> f64 {
    let h = 1e-5;
    let names = ["x", "y", "z"];
    let at = |q: &Point| mu.covector_at(q).unwrap();
    let mut jac = [[0.0; 3]; 3];
    for (i, n) in names.iter().enumerate() {
        let plus = at(&p.with(n, p.get(n).unwrap() + h));
        let minus = at(&p.with(n, p.get(n).unwrap() - h));
        for j in 0..3 {
            jac[i][j] = (plus[j] - minus[j]) / (2.0 * h);
        }
    }
    let dmu = |i: usize, j: usize| jac[i][j] - jac[j][i];
    let m = at(p);
    m[0] * dmu(1, 2) - m[1] * dmu(0, 2) + m[2] * dmu(0, 1)
}

fn gv_computation() -> Outcome {
    let c = chart(3);
    let r = cube(&c, 2.0);
    let gv = gv_form(&gauge_mu(&c), 1);
    let vol = Form::monomial(&c, &[0, 1, 2], Expr::one());
    if gv != vol {
        return Err(format!("gv_form = {gv}"));
    }
    if !proved(form_zero_on(&ext_d(&gv), &r, &cfg())) {
        return Err("d(gv) not proved zero".into());
    }
    let mut g = rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let p = c.point(&[g.gen_range(-1.5..1.5), g.gen_range(-1.5..1.5), g.gen_range(-1.5..1.5)]);
        worst = worst.max((numeric_gv_coefficient(&gauge_mu(&c), &p) - 1.0).abs());
    }
    if worst > 1e-6 {
        return Err(format!("finite-difference oracle deviates by {worst:e}"));
    }
    Ok(format!("gv = dx^dy^dz exactly, closed; finite-difference oracle within {worst:.1e}"))
}

fn nested(h1: Expr, h2: Expr) -> (Foliation, Foliation, Region) {
    let c = Chart::new(["t", "xt", "xb"]);
    let r = cube(&c, 1.0);
    let f1 = Foliation::new("F1", r.clone(), 1, Form::monomial(&c, &[1, 2], h1), None, Some(vec![1, 2])).unwrap();
    let f2 = Foliation::new("F2", r.clone(), 2, Form::monomial(&c, &[2], h2), None, Some(vec![2])).unwrap();
    (f1, f2, r)
}

fn overlap_factorization() -> Outcome {
    let fixtures = [
        (Expr::one(), Expr::one()),
        (Expr::exp(&v("xb")), Expr::one()),
        (Expr::exp(&v("xb")), Expr::exp(&v("t"))),
    ];
    for (k, (h1, h2)) in fixtures.into_iter().enumerate() {
        let (f1, f2, r) = nested(h1, h2);
        let th = solve_theta(&f1, &f2, &r, &cfg()).map_err(|e| e.to_string())?;
        let again = forms_equal(f1.nu(), &wedge(f2.nu(), &th.theta).unwrap(), &r, &cfg());
        if !th.verdict.is_proved() || !proved(again) {
            return Err(format!("fixture {k}: theta {} not verified", th.theta));
        }
        let mu1 = solve_mu(&f1).map_err(|e| e.to_string())?;
        let mu2 = solve_mu(&f2).map_err(|e| e.to_string())?;
        let found = check_overlap_identities(&f1, &f2, &mu1, &mu2, &th.theta, &r, &cfg());
        if found.len() != 4 || !found.iter().all(Finding::passed) {
            let msgs: Vec<String> = found.iter().map(|f| f.to_string()).collect();
            return Err(format!("fixture {k}: {}", msgs.join("; ")));
        }
    }
    Ok("theta verified and (a)-(d) pass on 3 adapted nested fixtures".into())
}

fn extension_by_zero() -> Outcome {
    let doc = parse_spec(&gallery_text("prex01.spec")).map_err(|d| format!("{d:?}"))?;
    let fam = &doc.families["fam"];
    let mu = doc.mu_choice(fam, "gauge").ok_or("no gauge")?;
    let mu0 = doc.forms["mu0"].clone();
    let u1 = doc.regions["U1"].clone();
    let ov = u1.intersect(&doc.regions["U2"]).map_err(|e| e.to_string())?;
    if !proved(form_zero_on(&ext_d(&mu0), &ov, &cfg())) {
        return Err("(d mu0)^1 not proved zero on the overlap".into());
    }
    let g = gv_min(fam, &mu, 0, &cfg()).map_err(|e| e.to_string())?;
    if !g.glued || g.degree != 3 {
        return Err(format!("glued {} degree {}", g.glued, g.degree));
    }
    if !proved(form_zero_on(&g.form, &ov, &cfg())) {
        return Err("form not zero on U2".into());
    }
    let classical = wedge(&mu0, &ext_d(&mu0)).unwrap();
    if !proved(forms_equal(&g.form, &classical, &u1, &cfg())) {
        return Err("form differs from mu0 ^ d(mu0) on U1".into());
    }
    let by_hand = Form::monomial(fam.chart(), &[0, 1, 2], Expr::flatexp(&(&v("x") - &Expr::one())));
    if !proved(forms_equal(&g.form, &by_hand, &u1, &cfg())) {
        return Err(format!("form {} differs from flatexp(x - 1) dx^dy^dz", g.form));
    }
    let bad = parse_spec(&gallery_text("prex01_corrupted.spec")).map_err(|d| format!("{d:?}"))?;
    let bfam = &bad.families["fam"];
    let bmu = bad.mu_choice(bfam, "corrupted").ok_or("no corrupted gauge")?;
    match gv_min(bfam, &bmu, 0, &cfg()) {
        Err(e) if e.witness().is_some() => {}
        Err(e) => return Err(format!("corrupted gauge failed without witness: {e}")),
        Ok(_) => return Err("corrupted gauge glued".into()),
    }
    Ok("glued 3-form flatexp(x - 1) dx^dy^dz, zero on U2; corrupted gauge refused with witness".into())
}

fn basic_weights() -> Outcome {
    let c = chart(3);
    let r = cube(&c, 2.0);
    let f = Foliation::new("F", r.clone(), 2, omega(&c), None, None).unwrap();
    let phi = &v("y") * &Expr::exp(&-&v("x"));
    let w = gv_weighted(&phi, &gauge_mu(&c), 1, &f, &cfg()).map_err(|e| e.to_string())?;
    if !w.findings.iter().all(Finding::passed) {
        return Err(format!("{:?}", w.findings.iter().map(|f| f.to_string()).collect::<Vec<_>>()));
    }
    let expected = wedge(&gauge_mu(&c), &ext_d(&gauge_mu(&c))).unwrap().scale(&phi.pow(2).unwrap());
    if !proved(forms_equal(&w.nu_bar, &expected, &r, &cfg())) || !proved(form_zero_on(&ext_d(&w.nu_bar), &r, &cfg())) {
        return Err("nu_bar identity or closedness not proved".into());
    }
    match check_basic(&v("z"), &f, &r, &cfg()) {
        Ok(Verdict::NonZero(_)) => Ok("nu_bar = phi^2 mu ^ d(mu) and d(nu_bar) = 0 proved; z rejected with witness".into()),
        other => Err(format!("z not rejected: {other:?}")),
    }
}

fn test_functions() -> Outcome {
    let c = chart(2);
    let bx = cube(&c, 1.0);
    let origin = ClosedSetSpec::ClosedBalls(vec![(vec![0.0, 0.0], 0.0)]);
    let norm2 = &(&v("x") * &v("x")) + &(&v("y") * &v("y"));
    let weak = flatness_check(&norm2, &origin, &bx, &cfg()).map_err(|e| e.to_string())?;
    let second = weak.estimates.last().ok_or("no estimates")?[1];
    let h = 1e-3;
    let f = |x: f64| x * x;
    let oracle = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
    if weak.passed || (second - 2.0).abs() > 0.2 || (oracle - 2.0).abs() > 1e-6 {
        return Err(format!("norm^2: passed {}, second derivative {second}, oracle {oracle}", weak.passed));
    }
    let strong = flatness_check(&strengthen(&norm2), &origin, &bx, &cfg()).map_err(|e| e.to_string())?;
    let largest = strong.estimates.iter().flat_map(|r| r.iter()).cloned().fold(0.0, f64::max);
    if !strong.passed || !(largest < 1e-6) {
        return Err(format!("strengthened: passed {}, largest estimate {largest:e}", strong.passed));
    }
    let bx = cube(&c, 1.5);
    let bumps: Vec<BumpSpec> = [(0.6, 0.6), (-0.6, 0.6), (-0.6, -0.6), (0.6, -0.6)]
        .iter()
        .map(|(a, b)| BumpSpec::new(vec![*a, *b], 0.3).unwrap())
        .collect();
    let m0 = ClosedSetSpec::BoxMinusBalls(bumps.iter().map(|b| (b.center.clone(), b.outer_radius())).collect());
    let wt = weak_test_from_cover(&bx, &bumps, &m0, 64, &cfg()).map_err(|e| e.to_string())?;
    if !wt.findings.iter().all(Finding::passed) {
        return Err(format!("cover findings: {:?}", wt.findings.iter().map(|f| f.to_string()).collect::<Vec<_>>()));
    }
    let mut g = rng(7);
    let (mut zeros, mut positives) = (0, 0);
    while zeros < 64 || positives < 64 {
        let xy = [g.gen_range(-1.5..1.5), g.gen_range(-1.5..1.5)];
        let inside = bumps.iter().any(|b| {
            let r2 = (xy[0] - b.center[0]).powi(2) + (xy[1] - b.center[1]).powi(2);
            r2 < (2.0 * b.radius).powi(2)
        });
        let val = wt.expr.eval(&c.point(&xy)).map_err(|e| e.to_string())?;
        if inside && positives < 64 {
            if !(val > 0.0) {
                return Err(format!("not positive at {xy:?}"));
            }
            positives += 1;
        } else if !inside && zeros < 64 {
            if val != 0.0 {
                return Err(format!("not zero at {xy:?}: {val:e}"));
            }
            zeros += 1;
        }
    }
    Ok(format!(
        "|x|^2 fails with second derivative {second:.4}; strengthened passes (max {largest:.1e}); 4-bump cover verified at 64+64 points"
    ))
}

fn twisted_complex() -> Outcome {
    const N: u64 = 100;
    let mut fails = Vec::new();
    for i in 0..N {
        let c = chart(3 + (i % 2) as usize);
        let r = cube(&c, 1.0);
        let mut g = rng(5000 + i);
        let f = random_poly(&mut g, &c, &Shape::polynomial());
        let p = g.gen_range(0..3);
        let w = random_form(&mut g, &c, p, &Shape::polynomial());
        let twice = d_f(&f, &d_f(&f, &w).unwrap()).unwrap();
        if !proved(form_zero_on(&twice, &r, &cfg())) {
            fails.push(format!("d_f^2 #{i}"));
        }
        let lhs = d_f(&f, &phi_map(&f, &w).unwrap()).unwrap();
        let rhs = ext_d(&w).scale(&f.pow(p as i64 + 1).unwrap());
        if !proved(forms_equal(&lhs, &rhs, &r, &cfg())) {
            fails.push(format!("chain map #{i}"));
        }
    }
    if fails.is_empty() {
        Ok(format!("{N} instances of d_f(d_f w) = 0 and d_f(f^p w) = f^(p+1) dw proved"))
    } else {
        Err(format!("not proved: {}", fails.join(", ")))
    }
}

fn exactness_pipeline() -> Outcome {
    let doc = parse_spec(&gallery_text("prex02.spec")).map_err(|d| format!("{d:?}"))?;
    let f = &doc.foliations["F"];
    let phi = &doc.scalars["phi"];
    let mu = &doc.forms["mu"];
    let td = &doc.tubulars["T"];
    let c = f.chart().clone();
    let tau = Form::monomial(
        &c,
        &[1, 2],
        &(&Expr::ratio(-1, 3) * &v("y").pow(3).unwrap()) * &Expr::exp(&(&Expr::int(-3) * &v("x"))),
    );
    let found = check_prex02_pipeline(f, phi, mu, td, &tau, &cfg()).map_err(|e| e.to_string())?;
    let verdicts: Vec<&Finding> = found.iter().filter(|f| f.label.starts_with('(')).collect();
    let failing: Vec<String> = verdicts.iter().filter(|f| !f.passed()).map(|f| f.to_string()).collect();
    let critical_phi = &v("y").pow(2).unwrap() * &Expr::exp(&-&v("x"));
    let ctd = TubularData::new(&c, critical_phi.clone(), "y", td.eps.clone(), td.eps_outer.clone()).map_err(|e| e.to_string())?;
    let control = check_prex02_pipeline(f, &critical_phi, mu, &ctd, &tau, &cfg()).map_err(|e| e.to_string())?;
    let regular = control.iter().find(|f| f.label.contains("regular value")).ok_or("no regular-value finding")?;
    let control_ok = matches!(&regular.outcome, Err(e) if e.witness().is_some());
    if verdicts.len() != 4 || !failing.is_empty() || !control_ok {
        return Err(format!(
            "{} of 4 verdicts pass; failing: {}; critical control rejected: {control_ok}",
            verdicts.len() - failing.len(),
            failing.join("; ")
        ));
    }
    Ok("all four verdicts pass; critical value rejected".into())
}

/// Pointwise oracle: `b` lies in the ideal at `p` iff it vanishes on every
/// `k`-tuple of vectors from the common kernel of the generators.
fn oracle_member_at(b: &Form, gens: &[Form], p: &Point) -> bool {
    let m = b.chart().dim();
    let rows: Vec<Vec<f64>> = gens.iter().map(|g| g.covector_at(p).unwrap()).collect();
    let gm = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
    let eig = SymmetricEigen::new(gm.transpose() * &gm);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(1.0);
    let kernel: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i].abs() < 1e-10 * top).collect();
    let k = b.degree();
    let coeffs = b.eval(p).unwrap();
    let scale = 1.0 + coeffs.values().map(|v| v.abs()).fold(0.0, f64::max);
    for cols in subsets(kernel.len(), k) {
        let mut total = 0.0;
        for (idx, val) in &coeffs {
            let minor = DMatrix::from_fn(k, k, |r, s| eig.eigenvectors[(idx[r], kernel[cols[s]])]);
            total += val * if k == 0 { 1.0 } else { minor.determinant() };
        }
        if total.abs() > 1e-8 * scale {
            return false;
        }
    }
    true
}

fn ideal_oracle() -> Outcome {
    const QUERIES: u64 = 50;
    let c = chart(4);
    let r = cube(&c, 1.0);
    let qcfg = ZeroTestConfig { sample_count: 16, ..cfg() };
    let mut disagreements = Vec::new();
    let mut members = 0;
    for i in 0..QUERIES {
        let mut g = rng(9000 + i);
        let mut order: Vec<usize> = (0..4).collect();
        order.shuffle(&mut g);
        let ngens = g.gen_range(1..=2);
        let s = Shape::polynomial();
        let gens: Vec<Form> = (0..ngens)
            .map(|j| {
                let lead = Form::monomial(&c, &[order[2 * j]], Expr::one());
                &lead + &Form::monomial(&c, &[order[2 * j + 1]], random_poly(&mut g, &c, &s))
            })
            .collect();
        let k = g.gen_range(1..=2);
        let mut b = Form::zero(&c, k);
        for gen in &gens {
            let cofactor = random_form(&mut g, &c, k - 1, &s);
            b = &b + &wedge(gen, &cofactor).unwrap();
        }
        if i % 2 == 1 {
            b = &b + &random_form(&mut g, &c, k, &s);
        }
        let points: Vec<Point> = (0..16).map(|_| c.point(&(0..4).map(|_| g.gen_range(-1.0..1.0)).collect::<Vec<_>>())).collect();
        let oracle = points.iter().all(|p| oracle_member_at(&b, &gens, p));
        members += oracle as usize;
        let engine = match ideal_member(&b, &gens, &r, &qcfg) {
            Ok(Verdict::ProvedZero) => Some(true),
            Ok(Verdict::NonZero(_)) => Some(false),
            _ => None,
        };
        if engine != Some(oracle) {
            disagreements.push(format!("#{i} engine {engine:?} oracle {oracle}"));
        }
    }
    if disagreements.is_empty() {
        Ok(format!("{QUERIES} queries ({members} members) at 16 points each, 0 disagreements"))
    } else {
        Err(format!("{} disagreements: {}", disagreements.len(), disagreements.join(", ")))
    }
}

fn mutate(text: &str, g: &mut rand_chacha::ChaCha8Rng) -> String {
    const PIECES: [&str; 22] = [
        "(", ")", "^", "[", "]", ";", "=", "->", "\\\n", "1e400", "x", "dx", "d(", "auto", "-", "99999999999999999999",
        "check c: kind = gv-min; family = fam", "\n", "#", "0.5", "mu", "^(-1)",
    ];
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..g.gen_range(1..=4) {
        let n = chars.len().max(1);
        match g.gen_range(0..6) {
            0 if !chars.is_empty() => {
                let a = g.gen_range(0..n.min(chars.len()));
                let b = (a + g.gen_range(1..8)).min(chars.len());
                chars.drain(a..b);
            }
            1 => {
                let at = g.gen_range(0..=chars.len());
                let piece = PIECES.choose(g).unwrap();
                chars.splice(at..at, piece.chars());
            }
            2 => {
                let at = g.gen_range(0..=chars.len());
                chars.truncate(at);
            }
            3 if !chars.is_empty() => {
                let at = g.gen_range(0..chars.len());
                chars[at] = char::from_u32(g.gen_range(32..0x2fff)).unwrap_or('?');
            }
            4 => {
                let lines: Vec<String> = chars.iter().collect::<String>().lines().map(String::from).collect();
                if lines.len() > 1 {
                    let mut lines = lines;
                    let (a, b) = (g.gen_range(0..lines.len()), g.gen_range(0..lines.len()));
                    lines.swap(a, b);
                    chars = lines.join("\n").chars().collect();
                }
            }
            _ => {
                let s: String = chars.iter().collect();
                let lines: Vec<&str> = s.lines().collect();
                if !lines.is_empty() {
                    let dup = lines[g.gen_range(0..lines.len())].to_string();
                    chars.extend(format!("\n{dup}\n").chars());
                }
            }
        }
    }
    chars.into_iter().collect()
}

fn run_cli(args: &[&str], env_seed: Option<&str>) -> (i32, Vec<u8>) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_foliage"));
    cmd.args(args).env_remove("FOLIAGE_SEED");
    if let Some(s) = env_seed {
        cmd.env("FOLIAGE_SEED", s);
    }
    let out = cmd.output().expect("binary runs");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn cli_contract() -> Outcome {
    let prex01 = gallery("prex01.spec");
    let p = prex01.to_str().unwrap();
    let a = run_cli(&["check", p, "--format", "json", "--seed", "42"], None);
    let b = run_cli(&["check", p, "--format", "json", "--seed", "42"], None);
    let e1 = run_cli(&["check", p, "--format", "json"], Some("99"));
    let e2 = run_cli(&["check", p, "--format", "json"], Some("99"));
    if a != b || e1 != e2 || a.1.is_empty() {
        return Err("json reports differ between identical seeded runs".into());
    }
    if !String::from_utf8_lossy(&e1.1).contains("environment FOLIAGE_SEED") {
        return Err("environment seed not echoed".into());
    }
    let doc = parse_spec(&gallery_text("plane.spec")).map_err(|d| format!("{d:?}"))?;
    let r1 = render_report(&run_checks(&doc, &RunOptions::default()).unwrap(), Format::Json);
    let r2 = render_report(&run_checks(&doc, &RunOptions::default()).unwrap(), Format::Json);
    if r1 != r2 {
        return Err("in-process json reports differ".into());
    }

    let sources: Vec<String> = ["prex01.spec", "prex02.spec", "plane.spec", "plane_two_charts.spec", "golden/one_fail.spec"]
        .iter()
        .map(|n| gallery_text(n))
        .collect();
    let mut g = rng(11);
    let (mut crashes, mut docs, mut rejected) = (0, 0, 0);
    for i in 0..1000 {
        let text = mutate(&sources[i % sources.len()], &mut g);
        match catch_unwind(AssertUnwindSafe(|| parse_spec(&text))) {
            Ok(Ok(_)) => docs += 1,
            Ok(Err(ds)) if !ds.is_empty() => rejected += 1,
            _ => crashes += 1,
        }
    }
    if crashes > 0 {
        return Err(format!("{crashes} of 1000 mutated documents crashed the parser"));
    }

    let mut codes = Vec::new();
    for (name, want) in [("all_pass", 0), ("one_fail", 1), ("one_undecided", 2)] {
        let path = gallery(&format!("golden/{name}.spec"));
        let (code, _) = run_cli(&["check", path.to_str().unwrap()], None);
        if code != want {
            return Err(format!("{name}: exit {code}, expected {want}"));
        }
        codes.push(code);
    }
    Ok(format!(
        "byte-identical json; fuzz 1000 inputs: {docs} parsed, {rejected} diagnosed, 0 crashes; exit codes {codes:?}"
    ))
}

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "exterior-calculus laws", exterior_laws),
        (2, "Frobenius fixtures", frobenius_fixtures),
        (3, "Godbillon-Vey computation", gv_computation),
        (4, "overlap factorization and identities", overlap_factorization),
        (5, "extension by zero of the minimal GV form", extension_by_zero),
        (6, "basic weights", basic_weights),
        (7, "test functions", test_functions),
        (8, "twisted complex", twisted_complex),
        (9, "weighted GV exactness pipeline", exactness_pipeline),
        (10, "ideal-membership oracle agreement", ideal_oracle),
        (11, "CLI determinism, totality and exit status", cli_contract),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (id, title, run) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {title} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {title} ({secs:.1}s): {detail}");
            }
        }
    }
    println!(
        "acceptance: {} of 11 criteria pass in {:.1}s",
        11 - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
