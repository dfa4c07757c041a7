//! Suite runner behind the `lab` binary: config loading, per-suite checks,
//! JSON reports, DOT and CSV exports.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use fh_workbench::flowspace::{self, QuadratureSpec};
use fh_workbench::ideals::{factor_x, is_p_maximal};
use fh_workbench::numberfield::{define_field, FieldDescriptor, FieldError};
use fh_workbench::par::{self, Exec};
use fh_workbench::tree::DTree;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod suites;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("field rejected ({criterion}): {detail}")]
    FieldRejected { criterion: Rejection, detail: String },
    #[error("radius {radius} exceeds the export budget {budget}")]
    BudgetExceeded { radius: u32, budget: u32 },
    #[error("periodic count failed: {0}")]
    Periodic(#[from] flowspace::FlowError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Rejection {
    NotIrreducible,
    DeterminantTooSmall,
    NotPMaximal,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rejection::NotIrreducible => "NotIrreducible",
            Rejection::DeterminantTooSmall => "DeterminantTooSmall",
            Rejection::NotPMaximal => "NotPMaximal",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Diagonal,
    Flow,
    Folding,
    Metric,
    Periodic,
    Quotient,
    Tree,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Diagonal,
        Suite::Flow,
        Suite::Folding,
        Suite::Metric,
        Suite::Periodic,
        Suite::Quotient,
        Suite::Tree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Diagonal => "diagonal",
            Suite::Flow => "flow",
            Suite::Folding => "folding",
            Suite::Metric => "metric",
            Suite::Periodic => "periodic",
            Suite::Quotient => "quotient",
            Suite::Tree => "tree",
        }
    }
}

impl FromStr for Suite {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        let key = if key == "metric-lemmas" { "metric".to_string() } else { key };
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == key)
            .ok_or_else(|| HarnessError::ConfigInvalid(format!("unknown suite {s:?}")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Samples {
    pub tree: usize,
    pub folding: usize,
    pub diagonal: usize,
    pub metric: usize,
    pub flow: usize,
    pub quotient: usize,
    pub contraction: usize,
}

impl Default for Samples {
    fn default() -> Self {
        Self { tree: 500, folding: 50, diagonal: 50, metric: 200, flow: 200, quotient: 200, contraction: 20 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// same-fiber bounds against the tree distance
    pub same_fiber: f64,
    /// slack when comparing two certified intervals
    pub interval: f64,
    pub vanishing_eps: f64,
    /// largest acceptable threshold for the vanishing probe
    pub vanishing_threshold: u32,
    pub contraction_eps: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { same_fiber: 1e-6, interval: 1e-9, vanishing_eps: 0.1, vanishing_threshold: 20, contraction_eps: 0.2 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub ball_radius: u32,
    pub fold_radius: u32,
    pub diagonal_radius: u32,
    pub export_radius: u32,
    pub n_max: u32,
    pub subgroup_bound: usize,
    pub s_max: i64,
    pub trichotomy_n: i64,
    pub case_a_max_m: usize,
    pub quadrature: QuadratureSpec,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            ball_radius: 6,
            fold_radius: 4,
            diagonal_radius: 3,
            export_radius: 10,
            n_max: 64,
            subgroup_bound: fh_workbench::finitequotient::DEFAULT_GROUP_BOUND,
            s_max: 200,
            trichotomy_n: 3,
            case_a_max_m: 8,
            quadrature: QuadratureSpec::default(),
        }
    }
}

/// A field plus everything a run needs. Only `m` is required in the file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    /// a₀..a_{n−1} of the monic minimal polynomial
    pub m: Vec<i128>,
    #[serde(default)]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub samples: Samples,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub budgets: Budgets,
}

impl SuiteConfig {
    pub fn for_field(m: Vec<i128>) -> Self {
        Self {
            m,
            suites: Vec::new(),
            seed: 0,
            samples: Samples::default(),
            tolerances: Tolerances::default(),
            budgets: Budgets::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        if cfg.m.is_empty() {
            return Err(HarnessError::ConfigInvalid("m must have at least one coefficient".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Selected suites, deduplicated and sorted by name; empty means all.
    pub fn selected(&self) -> Vec<Suite> {
        let mut s = if self.suites.is_empty() { Suite::ALL.to_vec() } else { self.suites.clone() };
        s.sort_by_key(|x| x.name());
        s.dedup();
        s
    }
}

/// One verified claim with its worst observed value.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub lemma: String,
    pub samples: usize,
    pub worst_case: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: serde_json::Value,
}

impl Check {
    fn new(lemma: &str, samples: usize, worst_case: f64, tolerance: f64, pass: bool) -> Self {
        Self { lemma: lemma.to_string(), samples, worst_case, tolerance, pass, detail: serde_json::Value::Null }
    }

    fn with_detail<T: Serialize>(mut self, detail: &T) -> Self {
        self.detail = serde_json::to_value(detail).unwrap_or(serde_json::Value::Null);
        self
    }

    fn failed(lemma: &str, error: impl fmt::Display) -> Self {
        Self::new(lemma, 0, f64::NAN, 0.0, false).with_detail(&error.to_string())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub pass: bool,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub m: Vec<i128>,
    pub degree: usize,
    pub d: i128,
    pub seed: u64,
    /// (p, e, f, k) for each prime over x
    pub primes: Vec<(i64, u32, u32, u32)>,
    pub pass: bool,
    pub suites: Vec<SuiteReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Build the field and refuse it unless ℤ[α] is maximal at every prime over x.
pub fn accept_field(m: &[i128]) -> Result<FieldDescriptor, HarnessError> {
    let field = define_field(m).map_err(|e| {
        let criterion = match e {
            FieldError::NotIrreducible(_) => Rejection::NotIrreducible,
            FieldError::DeterminantTooSmall(_) => Rejection::DeterminantTooSmall,
            ref other => return HarnessError::ConfigInvalid(other.to_string()),
        };
        HarnessError::FieldRejected { criterion, detail: e.to_string() }
    })?;
    let d = field.d().unsigned_abs();
    for (p, _) in prime_divisors(d) {
        if !is_p_maximal(&field, p as i64) {
            return Err(HarnessError::FieldRejected {
                criterion: Rejection::NotPMaximal,
                detail: format!("Z[alpha] is not {p}-maximal"),
            });
        }
    }
    factor_x(&field).map_err(|e| HarnessError::FieldRejected {
        criterion: Rejection::NotPMaximal,
        detail: e.to_string(),
    })?;
    Ok(field)
}

fn prime_divisors(mut n: u128) -> Vec<(u128, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        let mut e = 0;
        while n % p == 0 {
            n /= p;
            e += 1;
        }
        if e > 0 {
            out.push((p, e));
        }
        p += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Per-suite stream: FNV-1a of the name mixed into the seed, so a suite sees
/// the same numbers whichever other suites run beside it.
pub fn suite_rng(seed: u64, suite: Suite) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in suite.name().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

pub fn run_suite(config: &SuiteConfig, exec: Exec) -> Result<Report, HarnessError> {
    let field = Arc::new(accept_field(&config.m)?);
    let primes = factor_x(&field)
        .map_err(|e| HarnessError::FieldRejected { criterion: Rejection::NotPMaximal, detail: e.to_string() })?
        .iter()
        .map(|p| (p.p, p.e, p.f, p.k))
        .collect();
    let selected = config.selected();
    // suites already spread across workers; keep their insides sequential
    let inner = if selected.len() > 1 { Exec::Sequential } else { exec };
    let suites = par::map(exec, &selected, |&s| {
        let mut rng = suite_rng(config.seed, s);
        let checks = suites::run(s, &field, config, &mut rng, inner);
        SuiteReport { suite: s, pass: checks.iter().all(|c| c.pass), checks }
    });
    Ok(Report {
        m: config.m.clone(),
        degree: field.degree(),
        d: field.d(),
        seed: config.seed,
        primes,
        pass: suites.iter().all(|s| s.pass),
        suites,
    })
}

pub fn export_tree(config: &SuiteConfig, radius: u32) -> Result<String, HarnessError> {
    if radius > config.budgets.export_radius {
        return Err(HarnessError::BudgetExceeded { radius, budget: config.budgets.export_radius });
    }
    let field = Arc::new(accept_field(&config.m)?);
    Ok(DTree::new(field).export_dot(radius))
}

pub fn periodic_table(config: &SuiteConfig, max_m: u32) -> Result<Vec<flowspace::PeriodicCount>, HarnessError> {
    let field = accept_field(&config.m)?;
    (1..=max_m).map(|m| Ok(flowspace::periodic_count(&field, m)?)).collect()
}

pub fn periodic_csv(rows: &[flowspace::PeriodicCount]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["m", "lattice_solutions", "total"])?;
    for r in rows {
        w.write_record([r.m.to_string(), r.lattice_solutions.to_string(), r.total.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert_eq!("metric-lemmas".parse::<Suite>().unwrap(), Suite::Metric);
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn minimal_config_parses() {
        let c = SuiteConfig::from_json(r#"{"m":[-2]}"#).unwrap();
        assert_eq!(c.m, vec![-2]);
        assert_eq!(c.selected().len(), 7);
        assert!(SuiteConfig::from_json(r#"{"m":[]}"#).is_err());
        assert!(SuiteConfig::from_json(r#"{"m":[-2],"typo":1}"#).is_err());
    }

    #[test]
    fn rejections_name_the_criterion() {
        let crit = |m: &[i128]| match accept_field(m) {
            Err(HarnessError::FieldRejected { criterion, .. }) => Some(criterion),
            _ => None,
        };
        assert_eq!(crit(&[-4, 0]), Some(Rejection::NotIrreducible));
        assert_eq!(crit(&[1, 3]), Some(Rejection::DeterminantTooSmall));
        assert_eq!(crit(&[-2]), None);
    }

    #[test]
    fn periodic_csv_has_header_and_rows() {
        let rows = periodic_table(&SuiteConfig::for_field(vec![-2]), 3).unwrap();
        let csv = periodic_csv(&rows).unwrap();
        assert_eq!(csv, "m,lattice_solutions,total\n1,1,2\n2,3,12\n3,7,56\n");
    }
}
