//! Batch verification reports and their text, json and latex renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::verdict::{Finding, Verdict};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Undecided,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Undecided => "UNDECIDED",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub seed: u64,
    pub seed_source: String,
    pub samples: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub engine_version: String,
}

/// Evidence for a FAIL: a sample point, the value observed there and the
/// normal form that failed to vanish, or the failed precondition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessData {
    pub claim: String,
    pub point: Option<Vec<(String, Option<f64>)>>,
    pub value: Option<f64>,
    pub normal_form: Option<String>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Produced {
    pub text: String,
    pub latex: String,
    pub degree: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub kind: String,
    pub verdict: Status,
    pub witness: Option<WitnessData>,
    pub messages: Vec<String>,
    pub produced: Option<Produced>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub pass: usize,
    pub fail: usize,
    pub undecided: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub environment: Environment,
    pub entries: Vec<Entry>,
    pub summary: Summary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
    Latex,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "json" => Ok(Format::Json),
            "latex" => Ok(Format::Latex),
            other => Err(format!("unknown format `{other}` (text, json, latex)")),
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn witness_of(f: &Finding) -> WitnessData {
    let coords = |p: &crate::symbolic::Point| p.coords.iter().map(|(n, v)| (n.clone(), finite(*v))).collect();
    match &f.outcome {
        Ok(Verdict::NonZero(w)) => WitnessData {
            claim: f.label.clone(),
            point: Some(coords(&w.point)),
            value: finite(w.value),
            normal_form: Some(w.residual.clone()),
            detail: f.to_string(),
        },
        Err(e) => WitnessData {
            claim: f.label.clone(),
            point: e.witness().map(coords),
            value: None,
            normal_form: None,
            detail: e.to_string(),
        },
        Ok(_) => WitnessData {
            claim: f.label.clone(),
            point: None,
            value: None,
            normal_form: None,
            detail: f.to_string(),
        },
    }
}

impl Entry {
    /// PASS only when every finding is PROVED-ZERO; one failure is a FAIL
    /// and carries that finding's witness; anything else stays UNDECIDED.
    pub fn from_findings(name: &str, kind: &str, findings: &[Finding], produced: Option<Produced>) -> Entry {
        let verdict = if findings.iter().any(Finding::failed) {
            Status::Fail
        } else if findings.iter().any(Finding::undecided) || findings.is_empty() {
            Status::Undecided
        } else {
            Status::Pass
        };
        let witness = findings.iter().find(|f| f.failed()).map(witness_of);
        Entry {
            name: name.to_string(),
            kind: kind.to_string(),
            verdict,
            witness,
            messages: findings.iter().map(|f| f.to_string()).collect(),
            produced,
            timing_ms: None,
        }
    }
}

impl Report {
    pub fn new(environment: Environment, entries: Vec<Entry>) -> Report {
        let count = |s: Status| entries.iter().filter(|e| e.verdict == s).count();
        let summary = Summary {
            total: entries.len(),
            pass: count(Status::Pass),
            fail: count(Status::Fail),
            undecided: count(Status::Undecided),
        };
        Report {
            schema_version: SCHEMA_VERSION,
            environment,
            entries,
            summary,
        }
    }

    /// 0 all PASS, 1 any FAIL, 2 UNDECIDED without FAIL.
    pub fn exit_code(&self) -> i32 {
        if self.summary.fail > 0 {
            1
        } else if self.summary.undecided > 0 {
            2
        } else {
            0
        }
    }
}

pub fn parse_report_json(text: &str) -> serde_json::Result<Report> {
    serde_json::from_str(text)
}

pub fn render_report(rep: &Report, format: Format) -> String {
    match format {
        Format::Text => render_text(rep),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(rep).expect("report fields are plain data");
            s.push('\n');
            s
        }
        Format::Latex => render_latex(rep),
    }
}

fn summary_line(s: &Summary) -> String {
    format!(
        "{} checks: {} pass, {} fail, {} undecided",
        s.total, s.pass, s.fail, s.undecided
    )
}

fn show_point(p: &[(String, Option<f64>)]) -> String {
    let parts: Vec<String> = p
        .iter()
        .map(|(n, v)| match v {
            Some(v) => format!("{n} = {v}"),
            None => format!("{n} = nan"),
        })
        .collect();
    format!("({})", parts.join(", "))
}

fn render_text(rep: &Report) -> String {
    let env = &rep.environment;
    let mut out = String::new();
    let _ = writeln!(out, "foliage verification report (schema {})", rep.schema_version);
    let _ = writeln!(
        out,
        "seed {} ({}), {} samples, abs_tol {:e}, rel_tol {:e}",
        env.seed, env.seed_source, env.samples, env.abs_tol, env.rel_tol
    );
    if !rep.entries.is_empty() {
        let wn = rep.entries.iter().map(|e| e.name.len()).max().unwrap_or(0).max(4);
        let wk = rep.entries.iter().map(|e| e.kind.len()).max().unwrap_or(0).max(4);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<wn$}  {:<wk$}  verdict", "name", "kind");
        let _ = writeln!(out, "{}", "-".repeat(wn + wk + 13));
        for e in &rep.entries {
            let _ = write!(out, "{:<wn$}  {:<wk$}  {}", e.name, e.kind, e.verdict.label());
            if let Some(t) = e.timing_ms {
                let _ = write!(out, "  ({t:.1} ms)");
            }
            let _ = writeln!(out);
            for m in &e.messages {
                let _ = writeln!(out, "    {m}");
            }
            if let Some(w) = &e.witness {
                let _ = write!(out, "    witness [{}]", w.claim);
                if let Some(p) = &w.point {
                    let _ = write!(out, " at {}", show_point(p));
                }
                if let Some(nf) = &w.normal_form {
                    let _ = write!(out, ": {nf}");
                } else {
                    let _ = write!(out, ": {}", w.detail);
                }
                let _ = writeln!(out);
            }
            if let Some(p) = &e.produced {
                let _ = writeln!(out, "    result ({}-form): {}", p.degree, p.text);
            }
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{}", summary_line(&rep.summary));
    out
}

fn latex_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '_' | '&' | '%' | '$' | '#' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            '\\' => out.push_str("\\textbackslash{}"),
            '^' => out.push_str("\\textasciicircum{}"),
            '~' => out.push_str("\\textasciitilde{}"),
            _ => out.push(c),
        }
    }
    out
}

fn latex_number(v: f64) -> String {
    let s = format!("{v:e}");
    match s.split_once('e') {
        Some((m, "0")) => m.to_string(),
        Some(("1", e)) => format!("10^{{{e}}}"),
        Some((m, e)) => format!("{m} \\cdot 10^{{{e}}}"),
        None => s,
    }
}

fn render_latex(rep: &Report) -> String {
    let env = &rep.environment;
    let mut out = String::new();
    let _ = writeln!(out, "% foliage verification report (schema {})", rep.schema_version);
    let _ = writeln!(out, "\\section*{{Verification report}}");
    let _ = writeln!(
        out,
        "Seed {} ({}), {} samples, tolerances ${}$ absolute and ${}$ relative.",
        env.seed,
        latex_escape(&env.seed_source),
        env.samples,
        latex_number(env.abs_tol),
        latex_number(env.rel_tol)
    );
    if !rep.entries.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "\\begin{{tabular}}{{lll}}");
        let _ = writeln!(out, "check & kind & verdict \\\\ \\hline");
        for e in &rep.entries {
            let _ = writeln!(
                out,
                "\\texttt{{{}}} & \\texttt{{{}}} & {} \\\\",
                latex_escape(&e.name),
                latex_escape(&e.kind),
                e.verdict.label()
            );
        }
        let _ = writeln!(out, "\\end{{tabular}}");
        for e in rep.entries.iter().filter(|e| e.verdict == Status::Pass) {
            if let Some(p) = &e.produced {
                let _ = writeln!(out);
                let _ = writeln!(out, "\\paragraph{{\\texttt{{{}}}}}", latex_escape(&e.name));
                let _ = writeln!(out, "\\[ {} \\]", p.latex);
            }
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{}.", summary_line(&rep.summary));
    out
}
