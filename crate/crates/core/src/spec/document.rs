use std::collections::BTreeMap;

use crate::chart::Chart;
use crate::config::ZeroTestConfig;
use crate::foliation::{Foliation, FoliationFamily};
use crate::forms::{CoordinateMap, Form};
use crate::gv::MuChoice;
use crate::region::Region;
use crate::singular::TubularData;
use crate::symbolic::Expr;
use crate::testfn::{BumpSpec, ClosedSetSpec};

use super::diagnostics::Pos;

/// Every registered check kind, in the spelling used by documents.
pub const CHECK_KINDS: [&str; 20] = [
    "frobenius",
    "gv-closed",
    "overlap-vanishing",
    "gv-min",
    "basic",
    "gv-weighted",
    "overlap-identities",
    "theta",
    "foliation",
    "family",
    "invariance",
    "ideal",
    "equal",
    "exactness",
    "flatness",
    "weak-cover",
    "prex02",
    "df-closed",
    "decomposition",
    "rank",
];

#[derive(Clone, Debug)]
pub struct WeakCoverDecl {
    pub bumps: Vec<BumpSpec>,
    pub set: ClosedSetSpec,
    pub samples: usize,
}

#[derive(Clone, Debug)]
pub enum CheckSpec {
    Frobenius { nu: Form, mu: Form, region: Region },
    GvClosed { mu: Form, q: usize, region: Region },
    OverlapVanishing { family: FoliationFamily, mu: MuChoice },
    GvMin { family: FoliationFamily, mu: MuChoice, stratum: usize },
    Basic { phi: Expr, foliation: Foliation, region: Region },
    GvWeighted { phi: Expr, mu: Form, foliation: Foliation },
    OverlapIdentities { sub: Foliation, sup: Foliation, mu1: Option<Form>, mu2: Option<Form>, region: Region },
    Theta { sub: Foliation, sup: Foliation, region: Region },
    Foliation { foliation: Foliation },
    Family { family: FoliationFamily },
    Invariance { map: CoordinateMap, foliation: Foliation },
    Ideal { form: Form, gens: Vec<Form>, region: Region },
    Equal { lhs: Form, rhs: Form, region: Region },
    Exactness { nu: Form, tau: Form, region: Region },
    Flatness { f: Expr, set: ClosedSetSpec },
    WeakCover { cover: WeakCoverDecl },
    Prex02 { foliation: Foliation, phi: Expr, mu: Form, tubular: TubularData, tau: Form },
    DfClosed { f: Expr, form: Form, region: Region },
    Decomposition { nu: Form, q: usize, alpha: Form, beta: Form, tubular: TubularData, region: Region },
    Rank { family: FoliationFamily, point: Vec<f64>, expect: Option<usize> },
}

#[derive(Clone, Debug)]
pub struct CheckDirective {
    pub name: String,
    pub kind: &'static str,
    pub pos: Pos,
    pub spec: CheckSpec,
}

/// Resolved document: every reference already bound to its value.
#[derive(Clone, Debug)]
pub struct SpecDocument {
    pub chart: Chart,
    /// The chart box as a region without constraints.
    pub working_box: Region,
    pub config: ZeroTestConfig,
    /// Whether the document itself set the seed.
    pub seed_declared: bool,
    pub scalars: BTreeMap<String, Expr>,
    pub forms: BTreeMap<String, Form>,
    pub regions: BTreeMap<String, Region>,
    pub foliations: BTreeMap<String, Foliation>,
    pub families: BTreeMap<String, FoliationFamily>,
    pub mus: BTreeMap<String, BTreeMap<String, Option<Form>>>,
    pub maps: BTreeMap<String, CoordinateMap>,
    pub bumps: BTreeMap<String, BumpSpec>,
    pub closed_sets: BTreeMap<String, ClosedSetSpec>,
    pub covers: BTreeMap<String, WeakCoverDecl>,
    pub tubulars: BTreeMap<String, TubularData>,
    pub checks: Vec<CheckDirective>,
}

impl SpecDocument {
    /// MuChoice for a family from a named `mu` declaration.
    pub fn mu_choice(&self, family: &FoliationFamily, mu: &str) -> Option<MuChoice> {
        let decl = self.mus.get(mu)?;
        let mut choice = MuChoice::new();
        for (fname, form) in decl {
            let idx = family.members().iter().position(|f| f.name() == fname)?;
            if let Some(form) = form {
                choice = choice.with(idx, form.clone());
            }
        }
        Some(choice)
    }
}
