//! Flat `key = value` experiment configs with optional `[section]` headers.
//!
//! The grammar is documented in `docs/config.md`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::algorithms::{RoundAverage, RoundPlan, ScaffoldPlan};
use crate::error::{Error, Result};
use crate::problems::{make_nonconvex, make_ridge_with, FeatureScaling, GradOracle};
use crate::problems::{NonconvexProblem, RidgeProblem};
use crate::topology::{build_static_matrix, contraction_factor, Family, TopologySpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algo {
    Stgt,
    FlexGt,
    ScaffoldPlus,
    Dsgt,
    Centralized,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Stgt => "stgt",
            Algo::FlexGt => "flexgt",
            Algo::ScaffoldPlus => "scaffold_plus",
            Algo::Dsgt => "dsgt",
            Algo::Centralized => "centralized",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "stgt" | "st-gt" => Algo::Stgt,
            "flexgt" => Algo::FlexGt,
            "scaffold_plus" | "scaffold+" | "scaffold" => Algo::ScaffoldPlus,
            "dsgt" => Algo::Dsgt,
            "centralized" => Algo::Centralized,
            _ => {
                return Err(format!(
                    "unknown algo `{s}` (expected stgt, flexgt, scaffold_plus, dsgt, centralized)"
                ))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemConfig {
    Ridge {
        n: usize,
        p: usize,
        mu: f64,
        sigma2: f64,
        scaling: FeatureScaling,
        instance: u64,
    },
    Nonconvex {
        n: usize,
        p: usize,
        samples: usize,
        lambda: f64,
        sigma2: f64,
        instance: u64,
    },
}

/// A problem instance built from a [`ProblemConfig`].
#[derive(Clone, Debug)]
pub enum Problem {
    Ridge(RidgeProblem),
    Nonconvex(NonconvexProblem),
}

impl Problem {
    pub fn oracle(&self) -> &dyn GradOracle {
        match self {
            Problem::Ridge(p) => p,
            Problem::Nonconvex(p) => p,
        }
    }
}

impl ProblemConfig {
    pub fn n(&self) -> usize {
        match *self {
            ProblemConfig::Ridge { n, .. } | ProblemConfig::Nonconvex { n, .. } => n,
        }
    }

    pub fn sigma2(&self) -> f64 {
        match *self {
            ProblemConfig::Ridge { sigma2, .. } | ProblemConfig::Nonconvex { sigma2, .. } => sigma2,
        }
    }

    pub fn build(&self) -> Result<Problem> {
        Ok(match *self {
            ProblemConfig::Ridge {
                n,
                p,
                mu,
                sigma2,
                scaling,
                instance,
            } => Problem::Ridge(make_ridge_with(n, p, mu, sigma2, scaling, instance)?),
            ProblemConfig::Nonconvex {
                n,
                p,
                samples,
                lambda,
                sigma2,
                instance,
            } => Problem::Nonconvex(make_nonconvex(n, p, samples, lambda, sigma2, instance)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub topology: TopologySpec,
    pub problem: ProblemConfig,
    /// `gamma` is the local stepsize `γ_l` for Scaffold⁺.
    pub plan: RoundPlan,
    pub gamma_g: f64,
    pub gamma_c: f64,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
}

pub const DEFAULT_ROUNDS: usize = 300;
pub const DEFAULT_MU: f64 = 0.1;

const KEYS: &[(&str, &str)] = &[
    ("algo", "experiment"),
    ("rounds", "experiment"),
    ("seeds", "experiment"),
    ("output", "experiment"),
    ("topology", "topology"),
    ("problem", "problem"),
    ("n", "problem"),
    ("p", "problem"),
    ("mu", "problem"),
    ("sigma2", "problem"),
    ("feature_norm", "problem"),
    ("lambda", "problem"),
    ("samples", "problem"),
    ("instance", "problem"),
    ("tau", "plan"),
    ("gamma", "plan"),
    ("gamma_g", "plan"),
    ("gamma_c", "plan"),
    ("round_average", "plan"),
];

/// Raw key/value pairs with the line each came from.
#[derive(Clone, Debug, Default)]
pub struct Document {
    entries: BTreeMap<String, (String, usize)>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        let mut errors = Vec::new();
        let mut doc = Document::default();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                match rest.strip_suffix(']').map(str::trim) {
                    Some(name) if ["experiment", "topology", "problem", "plan"].contains(&name) => {
                        section = Some(name.to_string())
                    }
                    Some(name) => errors.push(format!("line {line_no}: unknown section [{name}]")),
                    None => errors.push(format!("line {line_no}: unterminated section header")),
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!(
                    "line {line_no}: expected `key = value`, got `{line}`"
                ));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            match KEYS.iter().find(|(k, _)| *k == key) {
                None => errors.push(format!("line {line_no}: unknown key `{key}`")),
                Some((_, home)) if section.as_deref().is_some_and(|s| s != *home) => {
                    errors.push(format!(
                        "line {line_no}: key `{key}` belongs in [{home}], not [{}]",
                        section.as_deref().unwrap_or("")
                    ))
                }
                Some(_) => {
                    if let Some((_, first)) = doc.entries.get(key) {
                        errors.push(format!(
                            "line {line_no}: duplicate key `{key}` (first set on line {first})"
                        ));
                    } else {
                        doc.entries
                            .insert(key.to_string(), (value.to_string(), line_no));
                    }
                }
            }
        }
        if errors.is_empty() {
            Ok(doc)
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Sets or replaces a key, as a command-line override would.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(vec![format!("unknown key `{key}`")]));
        }
        self.entries.insert(key.to_string(), (value.to_string(), 0));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }
}

struct Reader<'a> {
    doc: &'a Document,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn context(&self, key: &str) -> String {
        match self.doc.entries.get(key) {
            Some((_, 0)) | None => format!("`{key}`"),
            Some((_, line)) => format!("line {line}: `{key}`"),
        }
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Option<T> {
        let raw = self.doc.get(key)?;
        match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                let msg = format!("{}: cannot parse `{raw}`", self.context(key));
                self.errors.push(msg);
                None
            }
        }
    }

    fn req<T: FromStr>(&mut self, key: &str) -> Option<T> {
        if self.doc.get(key).is_none() {
            self.errors.push(format!("missing required key `{key}`"));
            return None;
        }
        self.opt(key)
    }

    fn check(&mut self, key: &str, ok: bool, what: &str) {
        if !ok {
            let msg = format!("{}: {what}", self.context(key));
            self.errors.push(msg);
        }
    }
}

/// `1..10` (inclusive), `[1..10]`, or a comma-separated list.
pub fn parse_seeds(text: &str) -> std::result::Result<Vec<u64>, String> {
    let t = text
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .trim();
    let seeds: Vec<u64> = if let Some((a, b)) = t.split_once("..") {
        let a: u64 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad seed range `{text}`"))?;
        let b: u64 = b
            .trim()
            .parse()
            .map_err(|_| format!("bad seed range `{text}`"))?;
        if b < a {
            return Err(format!("empty seed range `{text}`"));
        }
        (a..=b).collect()
    } else {
        t.split(',')
            .map(|s| s.trim().parse().map_err(|_| format!("bad seed `{s}`")))
            .collect::<std::result::Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(format!("duplicate seeds in `{text}`"));
    }
    Ok(seeds)
}

fn parse_topology(text: &str, n: Option<usize>) -> std::result::Result<TopologySpec, String> {
    let has_n = text
        .split_once(':')
        .is_some_and(|(_, params)| params.split(',').any(|kv| kv.trim().starts_with("n=")));
    let full = match (has_n, n) {
        (false, Some(n)) if text.contains(':') => format!("{text},n={n}"),
        (false, Some(n)) => format!("{text}:n={n}"),
        _ => text.to_string(),
    };
    let spec: TopologySpec = full.parse().map_err(|e: Error| e.to_string())?;
    if let Some(n) = n {
        if spec.n != n {
            return Err(format!(
                "topology has n={} but the problem has n={n}",
                spec.n
            ));
        }
    }
    Ok(spec)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_document(&Document::parse(text)?)
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        let mut r = Reader {
            doc,
            errors: Vec::new(),
        };
        let algo: Option<Algo> = match doc.get("algo") {
            None => {
                r.errors.push("missing required key `algo`".into());
                None
            }
            Some(raw) => match raw.parse() {
                Ok(a) => Some(a),
                Err(e) => {
                    let msg = format!("{}: {e}", r.context("algo"));
                    r.errors.push(msg);
                    None
                }
            },
        };
        let kind = doc.get("problem").unwrap_or("ridge").to_string();
        let n: Option<usize> = r.req("n");
        let p: Option<usize> = r.req("p");
        let sigma2: Option<f64> = r.req("sigma2");
        let tau: Option<usize> = r.req("tau");
        let gamma: Option<f64> = r.req("gamma");
        let topo_raw = doc.get("topology").map(str::to_string);
        if topo_raw.is_none() {
            r.errors.push("missing required key `topology`".into());
        }
        let rounds: usize = r.opt("rounds").unwrap_or(DEFAULT_ROUNDS);
        let instance: u64 = r.opt("instance").unwrap_or(1);
        let seeds = match doc.get("seeds") {
            None => (1..=10).collect(),
            Some(raw) => parse_seeds(raw).unwrap_or_else(|e| {
                let msg = format!("{}: {e}", r.context("seeds"));
                r.errors.push(msg);
                Vec::new()
            }),
        };
        let round_average = match doc.get("round_average") {
            None | Some("include") => RoundAverage::IncludeRoundStart,
            Some("exclude") => RoundAverage::ExcludeRoundStart,
            Some(other) => {
                let msg = format!(
                    "{}: expected include or exclude, got `{other}`",
                    r.context("round_average")
                );
                r.errors.push(msg);
                RoundAverage::IncludeRoundStart
            }
        };

        if let Some(n) = n {
            r.check("n", n >= 1, "must be >= 1");
        }
        if let Some(p) = p {
            r.check("p", p >= 1, "must be >= 1");
        }
        if let Some(s2) = sigma2 {
            r.check("sigma2", s2 >= 0.0 && s2.is_finite(), "must be >= 0");
        }
        if let Some(t) = tau {
            r.check("tau", t >= 1, "must be >= 1");
        }
        if let Some(g) = gamma {
            r.check("gamma", g > 0.0 && g.is_finite(), "must be > 0");
        }
        r.check("rounds", rounds >= 1, "must be >= 1");

        let problem = match kind.as_str() {
            "ridge" => {
                let mu: f64 = r.opt("mu").unwrap_or(DEFAULT_MU);
                r.check("mu", mu > 0.0 && mu.is_finite(), "must be > 0");
                let scaling = match r.opt::<f64>("feature_norm") {
                    None => FeatureScaling::Raw,
                    Some(norm) => {
                        r.check(
                            "feature_norm",
                            norm > 0.0 && norm <= 1.0,
                            "must lie in (0, 1]",
                        );
                        FeatureScaling::Normalized { norm }
                    }
                };
                for key in ["lambda", "samples"] {
                    if doc.get(key).is_some() {
                        let msg = format!("{}: only valid for problem = nonconvex", r.context(key));
                        r.errors.push(msg);
                    }
                }
                match (n, p, sigma2) {
                    (Some(n), Some(p), Some(sigma2)) => Some(ProblemConfig::Ridge {
                        n,
                        p,
                        mu,
                        sigma2,
                        scaling,
                        instance,
                    }),
                    _ => None,
                }
            }
            "nonconvex" => {
                let lambda: f64 = r.opt("lambda").unwrap_or(0.1);
                let samples: usize = r.opt("samples").unwrap_or(50);
                r.check(
                    "lambda",
                    lambda >= 0.0 && lambda.is_finite(),
                    "must be >= 0",
                );
                r.check("samples", samples >= 1, "must be >= 1");
                for key in ["mu", "feature_norm"] {
                    if doc.get(key).is_some() {
                        let msg = format!("{}: only valid for problem = ridge", r.context(key));
                        r.errors.push(msg);
                    }
                }
                match (n, p, sigma2) {
                    (Some(n), Some(p), Some(sigma2)) => Some(ProblemConfig::Nonconvex {
                        n,
                        p,
                        samples,
                        lambda,
                        sigma2,
                        instance,
                    }),
                    _ => None,
                }
            }
            other => {
                let msg = format!(
                    "{}: unknown problem `{other}` (expected ridge or nonconvex)",
                    r.context("problem")
                );
                r.errors.push(msg);
                None
            }
        };

        let topology = topo_raw.and_then(|raw| match parse_topology(&raw, n) {
            Ok(spec) => Some(spec),
            Err(e) => {
                let msg = format!("{}: {e}", r.context("topology"));
                r.errors.push(msg);
                None
            }
        });

        let gamma_g: f64 = r.opt("gamma_g").unwrap_or(1.0);
        let gamma_c_raw = doc.get("gamma_c").map(str::to_string);
        let mut gamma_c = 1.0;
        if let (Some(algo), Some(topo)) = (algo, &topology) {
            match algo {
                Algo::Dsgt => r.check("tau", tau.is_none_or(|t| t == 1), "dsgt requires tau = 1"),
                Algo::ScaffoldPlus => {
                    r.check(
                        "topology",
                        matches!(topo.family, Family::ServerWorker | Family::Complete),
                        "scaffold_plus needs a server-worker or complete topology",
                    );
                    let s = sampled_count(topo);
                    gamma_c = match gamma_c_raw.as_deref() {
                        None | Some("scaffold") => s as f64 / topo.n as f64,
                        Some(_) => r.opt("gamma_c").unwrap_or(1.0),
                    };
                    r.check(
                        "gamma_c",
                        gamma_c >= 0.0 && gamma_c.is_finite(),
                        "must be >= 0",
                    );
                    r.check(
                        "gamma_g",
                        gamma_g > 0.0 && gamma_g.is_finite(),
                        "must be > 0",
                    );
                }
                _ => {
                    r.check(
                        "topology",
                        algo == Algo::Centralized || topo.family != Family::ServerWorker,
                        "server-worker topologies are only used by scaffold_plus",
                    );
                }
            }
            if algo != Algo::ScaffoldPlus {
                for key in ["gamma_g", "gamma_c"] {
                    if doc.get(key).is_some() {
                        let msg =
                            format!("{}: only valid for algo = scaffold_plus", r.context(key));
                        r.errors.push(msg);
                    }
                }
            }
        }
        let output = doc.get("output").map(PathBuf::from);

        if !r.errors.is_empty() {
            return Err(Error::Config(r.errors));
        }
        let (Some(algo), Some(topology), Some(problem), Some(tau), Some(gamma)) =
            (algo, topology, problem, tau, gamma)
        else {
            unreachable!("missing values always produce an error")
        };
        Ok(Self {
            algo,
            topology,
            problem,
            plan: RoundPlan {
                tau,
                gamma,
                rounds,
                round_average,
            },
            gamma_g,
            gamma_c,
            seeds,
            output,
        })
    }

    pub fn scaffold_plan(&self) -> ScaffoldPlan {
        ScaffoldPlan {
            tau: self.plan.tau,
            gamma_g: self.gamma_g,
            gamma_l: self.plan.gamma,
            gamma_c: self.gamma_c,
            rounds: self.plan.rounds,
        }
    }

    /// Contraction factor fed to the Lyapunov weights: the spectral value of
    /// a static `W`, `‖E[W] − J‖²` for server-worker sampling and 0 for
    /// centralized SGD.
    pub fn rho(&self) -> Result<f64> {
        let n = self.topology.n as f64;
        match (self.algo, self.topology.family) {
            (Algo::Centralized, _) | (_, Family::Complete) => Ok(0.0),
            (_, Family::ServerWorker) => {
                let s = self.topology.s as f64;
                Ok(((n - s) / n).powi(2))
            }
            _ => contraction_factor(&build_static_matrix(&self.topology)?),
        }
    }

    /// Soft warnings that do not block a run.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (Ok(problem), Ok(rho)) = (self.problem.build(), self.rho()) else {
            return out;
        };
        let l = problem.oracle().constants().l;
        let ratio = self.plan.gamma * self.plan.tau as f64 * l / (1.0 - rho);
        if ratio > 1.0 {
            out.push(format!(
                "gamma*tau*L/(1-rho) = {ratio:.3} exceeds 1; the run may diverge"
            ));
        }
        out
    }
}

/// Number of workers sampled per round (`s`, or `n` for a complete graph).
pub fn sampled_count(spec: &TopologySpec) -> usize {
    match spec.family {
        Family::ServerWorker => spec.s,
        _ => spec.n,
    }
}
