use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bdsa::heron::default_m;
use bdsa::solver::{LinesearchParams, StopKind};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{read_file, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Phiq,
    Cluster,
    HeronConvex,
    HeronNonconvex,
    Selftest,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Self::Phiq,
        Self::Cluster,
        Self::HeronConvex,
        Self::HeronNonconvex,
        Self::Selftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Phiq => "phiq",
            Self::Cluster => "cluster",
            Self::HeronConvex => "heron-convex",
            Self::HeronNonconvex => "heron-nonconvex",
            Self::Selftest => "selftest",
        }
    }

    /// Whether the suite reads `key`; any other key set for it is rejected.
    pub fn accepts(self, key: &str) -> bool {
        const SOLVER: &[&str] = &[
            "runs", "seed", "alg", "out", "R", "rho", "alpha", "lambda0", "delta", "stop", "tol", "max-iters",
            "trace-dir", "timing",
        ];
        let own: &[&str] = match self {
            Self::Phiq => &["n", "q", "mu"],
            Self::Cluster => &["q", "l", "eta", "region", "points"],
            Self::HeronConvex => &["n", "m", "p", "eta", "mu", "replay"],
            Self::HeronNonconvex => &["n", "m", "eta", "mu", "replay"],
            Self::Selftest => return false,
        };
        SOLVER.contains(&key) || own.contains(&key)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| CliError::range("suite", s, "phiq, cluster, heron-convex, heron-nonconvex or selftest"))
    }
}

/// One layer of settings: command-line flags or a TOML file. Unset keys
/// fall through to the layer below.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// Only meaningful in a file; must agree with the subcommand.
    #[arg(skip)]
    pub suite: Option<String>,
    /// Problem dimension.
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid size for phiq; number of points for cluster.
    #[arg(long)]
    pub q: Option<usize>,
    /// Number of quadratic components for heron suites.
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of target boxes for heron-convex.
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of clusters.
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Base seed; run `i` uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Algorithm selection, suite dependent.
    #[arg(long)]
    pub alg: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Maximum number of linesearch trials for the boosted variant.
    #[arg(long = "R")]
    #[serde(rename = "R")]
    pub r: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// step-norm, abs-phi-gap or rel-varphi-gap.
    #[arg(long)]
    pub stop: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Region JSON replacing the bundled one.
    #[arg(long, value_name = "FILE")]
    pub region: Option<PathBuf>,
    /// Points CSV (x,y rows) replacing synthetic data.
    #[arg(long, value_name = "FILE")]
    pub points: Option<PathBuf>,
    /// Instance replay JSON to run instead of generated instances.
    #[arg(long, value_name = "FILE")]
    pub replay: Option<PathBuf>,
    /// Results CSV; the summary goes next to it. Stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Directory for per-run trace CSVs.
    #[arg(long, value_name = "DIR")]
    pub trace_dir: Option<PathBuf>,
    /// Record wall time; off keeps every output byte-reproducible.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub timing: Option<bool>,
}

macro_rules! for_each_key {
    ($mac:ident) => {
        $mac!(
            suite "suite", n "n", q "q", m "m", p "p", l "l", runs "runs", seed "seed", alg "alg",
            eta "eta", mu "mu", r "R", rho "rho", alpha "alpha", lambda0 "lambda0", delta "delta",
            stop "stop", tol "tol", max_iters "max-iters", region "region", points "points",
            replay "replay", out "out", trace_dir "trace-dir", timing "timing"
        )
    };
}

impl Settings {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {}", e.message())))
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        Self::from_toml(&read_file(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Keys of `top` win over keys of `self`.
    pub fn overlay(self, top: Settings) -> Settings {
        macro_rules! merge {
            ($($field:ident $key:literal),*) => {
                Settings { $($field: top.$field.or(self.$field)),* }
            };
        }
        for_each_key!(merge)
    }

    pub fn keys_set(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        macro_rules! collect {
            ($($field:ident $key:literal),*) => {
                $(if self.$field.is_some() { keys.push($key); })*
            };
        }
        for_each_key!(collect);
        keys
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopName {
    StepNorm,
    AbsPhiGap,
    RelVarphiGap,
}

impl StopName {
    pub fn kind(self) -> StopKind {
        match self {
            Self::StepNorm => StopKind::StepNorm,
            Self::AbsPhiGap => StopKind::AbsPhiGap,
            Self::RelVarphiGap => StopKind::RelVarphiGap,
        }
    }
}

impl FromStr for StopName {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "step-norm" => Ok(Self::StepNorm),
            "abs-phi-gap" => Ok(Self::AbsPhiGap),
            "rel-varphi-gap" => Ok(Self::RelVarphiGap),
            other => Err(CliError::range("stop", other, "step-norm, abs-phi-gap or rel-varphi-gap")),
        }
    }
}

/// Fully resolved and validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub suite: Suite,
    pub n: usize,
    pub q: usize,
    pub m: usize,
    pub p: usize,
    pub l: usize,
    pub runs: usize,
    pub seed: u64,
    pub alg: String,
    /// `None` where the suite fixes the stepsize.
    pub eta: Option<f64>,
    pub mu: Option<f64>,
    #[serde(rename = "R")]
    pub r: usize,
    pub rho: f64,
    pub alpha: f64,
    pub lambda0: f64,
    pub delta: f64,
    pub stop: StopName,
    pub tol: f64,
    pub max_iters: usize,
    pub region: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub trace_dir: Option<PathBuf>,
    pub timing: bool,
}

pub const MAX_RUNS: usize = 10_000_000;
pub const MAX_PHIQ_Q: usize = 1000;

fn check(ok: bool, key: &str, value: impl fmt::Display, expected: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::range(key, value, expected))
    }
}

fn allowed_algs(suite: Suite) -> &'static [&'static str] {
    match suite {
        Suite::Phiq => &["all", "dga", "bdga", "pdca", "bpdca"],
        Suite::Cluster => &["both", "bdsa", "gppa"],
        Suite::HeronConvex | Suite::HeronNonconvex => &["both", "bdsa", "dsa"],
        Suite::Selftest => &[],
    }
}

impl ExperimentConfig {
    /// Fills unset keys with the suite's tuned defaults and validates every
    /// value against the suite's legal range.
    pub fn resolve(suite: Suite, s: Settings) -> CliResult<Self> {
        if let Some(name) = &s.suite {
            if name.parse::<Suite>()? != suite {
                return Err(CliError::Config(format!(
                    "config key `suite` is `{name}` but the command is `{suite}`"
                )));
            }
        }
        if let Some(key) = s.keys_set().into_iter().find(|k| *k != "suite" && !suite.accepts(k)) {
            return Err(CliError::Config(format!("key `{key}` is not used by suite {suite}")));
        }

        if s.replay.is_some() {
            for (key, set) in [("n", s.n.is_some()), ("m", s.m.is_some()), ("p", s.p.is_some())] {
                if set {
                    return Err(CliError::Config(format!("key `{key}` conflicts with `replay`")));
                }
            }
            if let Some(runs) = s.runs.filter(|r| *r != 1) {
                return Err(CliError::range("runs", runs, "runs = 1 with `replay`"));
            }
        }
        let ls = LinesearchParams::default();
        let n = s.n.unwrap_or(match suite {
            Suite::HeronNonconvex => 50,
            Suite::HeronConvex => 5,
            _ => 2,
        });
        let (default_q, default_runs, default_eta, default_mu) = match suite {
            Suite::Phiq => (3, 1000, None, Some(1.0)),
            Suite::Cluster => (2000, 20, Some(0.9), None),
            Suite::HeronConvex | Suite::HeronNonconvex => (0, 10, Some(0.99), Some(0.5)),
            Suite::Selftest => (0, 1, None, None),
        };
        let (default_stop, default_tol) = match suite {
            Suite::Phiq => (StopName::StepNorm, n as f64 * 1e-6),
            Suite::Cluster => (StopName::RelVarphiGap, 1e-3),
            _ => (StopName::AbsPhiGap, 1e-6),
        };
        let cfg = Self {
            suite,
            n,
            q: s.q.unwrap_or(default_q),
            m: s.m.unwrap_or(default_m(n)),
            p: s.p.unwrap_or(match suite {
                Suite::HeronConvex => 3,
                _ => 1,
            }),
            l: s.l.unwrap_or(5),
            runs: s.runs.unwrap_or(if s.replay.is_some() { 1 } else { default_runs }),
            seed: s.seed.unwrap_or(1),
            alg: s.alg.unwrap_or_else(|| allowed_algs(suite).first().copied().unwrap_or_default().to_string()),
            eta: s.eta.or(default_eta),
            mu: s.mu.or(default_mu),
            r: s.r.unwrap_or(ls.max_backtracks),
            rho: s.rho.unwrap_or(ls.rho),
            alpha: s.alpha.unwrap_or(ls.alpha),
            lambda0: s.lambda0.unwrap_or(ls.lambda0),
            delta: s.delta.unwrap_or(ls.delta),
            stop: s.stop.as_deref().map(str::parse).transpose()?.unwrap_or(default_stop),
            tol: s.tol.unwrap_or(default_tol),
            max_iters: s.max_iters.unwrap_or(match suite {
                Suite::HeronConvex | Suite::HeronNonconvex => 500_000,
                _ => 100_000,
            }),
            region: s.region,
            points: s.points,
            replay: s.replay,
            out: s.out,
            trace_dir: s.trace_dir,
            timing: s.timing.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.suite == Suite::Selftest {
            return Ok(());
        }
        let algs = allowed_algs(self.suite);
        check(algs.contains(&self.alg.as_str()), "alg", &self.alg, &algs.join(", "))?;
        check(self.n >= 1, "n", self.n, "n ≥ 1")?;
        check(self.runs >= 1 && self.runs <= MAX_RUNS, "runs", self.runs, "1 ≤ runs ≤ 10⁷")?;
        match self.suite {
            Suite::Phiq => check(self.q <= MAX_PHIQ_Q, "q", self.q, "q ≤ 1000")?,
            Suite::Cluster => {
                check(self.q >= 1, "q", self.q, "q ≥ 1")?;
                check(self.l >= 1, "l", self.l, "l ≥ 1")?;
            }
            Suite::HeronConvex | Suite::HeronNonconvex => {
                check(self.m >= 1, "m", self.m, "m ≥ 1")?;
                check(self.p >= 1, "p", self.p, "p ≥ 1")?;
            }
            Suite::Selftest => {}
        }
        if let Some(eta) = self.eta {
            check(eta > 0.0 && eta < 1.0, "eta", eta, "η∈]0,1[")?;
        }
        if let Some(mu) = self.mu {
            check(mu > 0.0 && mu.is_finite(), "mu", mu, "μ > 0")?;
        }
        check(self.rho > 0.0 && self.rho < 1.0, "rho", self.rho, "ρ∈]0,1[")?;
        check(self.alpha >= 0.0 && self.alpha.is_finite(), "alpha", self.alpha, "α ≥ 0")?;
        check(self.lambda0 > 0.0 && self.lambda0.is_finite(), "lambda0", self.lambda0, "λ₀ > 0")?;
        check(self.delta > 1.0 && self.delta.is_finite(), "delta", self.delta, "δ > 1")?;
        check(self.tol > 0.0 && self.tol.is_finite(), "tol", self.tol, "tol > 0")?;
        check(self.max_iters >= 1, "max-iters", self.max_iters, "max-iters ≥ 1")?;
        Ok(())
    }

    pub fn linesearch(&self, boosted: bool) -> LinesearchParams {
        LinesearchParams {
            max_backtracks: if boosted { self.r } else { 0 },
            rho: self.rho,
            alpha: self.alpha,
            lambda0: self.lambda0,
            delta: self.delta,
        }
    }
}

/// Defaults, then the optional file, then flags.
pub fn parse_config(suite: Suite, file: Option<&Path>, flags: Settings) -> CliResult<ExperimentConfig> {
    let base = match file {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    ExperimentConfig::resolve(suite, base.overlay(flags))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(e: CliError) -> String {
        e.to_string()
    }

    #[test]
    fn empty_input_gives_tuned_linesearch() {
        let cfg = ExperimentConfig::resolve(Suite::Cluster, Settings::default()).unwrap();
        assert_eq!((cfg.r, cfg.rho, cfg.alpha, cfg.lambda0, cfg.delta), (2, 0.5, 0.1, 2.0, 2.0));
        assert_eq!(cfg.eta, Some(0.9));
        assert_eq!(cfg.stop, StopName::RelVarphiGap);
    }

    #[test]
    fn phiq_defaults_are_the_escape_study_setup() {
        let cfg = ExperimentConfig::resolve(Suite::Phiq, Settings::default()).unwrap();
        assert_eq!((cfg.n, cfg.q, cfg.runs), (2, 3, 1000));
        assert_eq!(cfg.tol, 2e-6);
        assert_eq!(cfg.alg, "all");
        let wide = Settings {
            n: Some(10),
            ..Settings::default()
        };
        assert_eq!(ExperimentConfig::resolve(Suite::Phiq, wide).unwrap().tol, 10.0 * 1e-6);
    }

    #[test]
    fn heron_m_follows_n() {
        let s = Settings {
            n: Some(20),
            ..Settings::default()
        };
        let cfg = ExperimentConfig::resolve(Suite::HeronConvex, s).unwrap();
        assert_eq!((cfg.n, cfg.m, cfg.p), (20, 24, 3));
    }

    #[test]
    fn rho_out_of_range_names_the_key() {
        let s = Settings::from_toml("rho = 1.5").unwrap();
        let e = msg(ExperimentConfig::resolve(Suite::Phiq, s).unwrap_err());
        assert!(e.contains("`rho`") && e.contains("ρ∈]0,1["), "{e}");
    }

    #[test]
    fn unknown_key_names_the_key() {
        let e = msg(Settings::from_toml("rho = 0.5\nbogus = 3").unwrap_err());
        assert!(e.contains("bogus"), "{e}");
    }

    #[test]
    fn inapplicable_key_is_rejected() {
        let s = Settings {
            l: Some(3),
            ..Settings::default()
        };
        let e = msg(ExperimentConfig::resolve(Suite::Phiq, s).unwrap_err());
        assert!(e.contains("`l`"), "{e}");
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let file = Settings::from_toml("rho = 0.25\nalpha = 0.3\nmax-iters = 7\nR = 4").unwrap();
        let flags = Settings {
            rho: Some(0.75),
            ..Settings::default()
        };
        let cfg = ExperimentConfig::resolve(Suite::HeronConvex, file.overlay(flags)).unwrap();
        assert_eq!((cfg.rho, cfg.alpha, cfg.max_iters, cfg.r), (0.75, 0.3, 7, 4));
        assert_eq!(cfg.delta, 2.0);
    }

    #[test]
    fn file_suite_must_match() {
        let s = Settings::from_toml("suite = \"cluster\"").unwrap();
        assert!(ExperimentConfig::resolve(Suite::Cluster, s.clone()).is_ok());
        assert!(msg(ExperimentConfig::resolve(Suite::Phiq, s).unwrap_err()).contains("suite"));
    }

    #[test]
    fn ranges() {
        let bad = [
            ("eta = 1.0", Suite::Cluster, "eta"),
            ("mu = 0.0", Suite::HeronConvex, "mu"),
            ("delta = 1.0", Suite::Phiq, "delta"),
            ("alpha = -0.1", Suite::Phiq, "alpha"),
            ("lambda0 = 0.0", Suite::Phiq, "lambda0"),
            ("tol = 0.0", Suite::Phiq, "tol"),
            ("max-iters = 0", Suite::Phiq, "max-iters"),
            ("runs = 0", Suite::Phiq, "runs"),
            ("q = 1001", Suite::Phiq, "q"),
            ("alg = \"gppa\"", Suite::HeronConvex, "alg"),
            ("stop = \"sometimes\"", Suite::Phiq, "stop"),
        ];
        for (text, suite, key) in bad {
            let e = msg(ExperimentConfig::resolve(suite, Settings::from_toml(text).unwrap()).unwrap_err());
            assert!(e.contains(&format!("`{key}`")), "{text}: {e}");
        }
    }

    #[test]
    fn timing_defaults_off() {
        assert!(!ExperimentConfig::resolve(Suite::Phiq, Settings::default()).unwrap().timing);
    }
}
