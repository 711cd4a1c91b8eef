use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use dpdo_core::comparison::{default_lambda, DEFAULT_M0};
use dpdo_core::operators::{BoundaryOperatorSpec, TraceSide};
use dpdo_core::symbols::{builtin_factor_family, FactorFamily, PeriodicSymbol};
use dpdo_core::system::{split_index, ContinuousProblem, ProblemSpec};
use dpdo_core::lattice::zeta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Solve,
    Roundtrip,
    Lemma1,
    Lemma2,
    Theorem3,
    Theorem4,
}

impl Mode {
    pub const ALL: [Mode; 6] =
        [Mode::Solve, Mode::Roundtrip, Mode::Lemma1, Mode::Lemma2, Mode::Theorem3, Mode::Theorem4];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Roundtrip => "roundtrip",
            Mode::Lemma1 => "lemma1",
            Mode::Lemma2 => "lemma2",
            Mode::Theorem3 => "theorem3",
            Mode::Theorem4 => "theorem4",
        }
    }

    pub fn parse(name: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Geometric,
    ShiftedZeta,
    Identity,
    Bessel,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub problem: Option<RawProblem>,
    #[serde(default)]
    pub grid: RawGrid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProblem {
    pub family: Family,
    pub s: f64,
    pub n: usize,
    pub delta: Option<f64>,
    pub a: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub c: Option<f64>,
    pub kappa: Option<f64>,
    pub mu: Option<f64>,
    pub alpha: Option<f64>,
    pub index: Option<f64>,
    pub b: Option<Vec<String>>,
    pub g: Option<Vec<String>>,
    pub beta: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub h: Option<f64>,
    pub nodes: Option<usize>,
    pub h_sweep: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub m0: Option<usize>,
    pub k_max: Option<u32>,
    pub samples: Option<usize>,
    pub window: Option<usize>,
}

/// A configuration problem pinned to a line of the source file when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{line}: {}", self.path.display(), self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Validated experiment description.
#[derive(Debug, Clone)]
pub enum Experiment {
    Solve { spec: ProblemSpec, nodes: usize, window: usize },
    Roundtrip { spec: ProblemSpec, nodes: usize },
    Lemma1 { h_sweep: Vec<f64>, k_max: u32, samples: usize },
    Lemma2 { problem: ContinuousProblem, h_sweep: Vec<f64>, lambda: f64, m0: usize },
    Theorem3 { problem: ContinuousProblem, h_sweep: Vec<f64>, lambda: f64, m0: usize },
    Theorem4 { problem: ContinuousProblem, h_sweep: Vec<f64>, lambda: f64, m0: usize },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub source: PathBuf,
    pub output: PathBuf,
    pub experiment: Experiment,
}

/// Line of `key` inside `[section]` (top level for `None`), 1-based.
fn line_of(src: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    let mut header = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            if Some(name.trim()) == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current.as_deref() == section {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

struct Checker<'a> {
    path: &'a Path,
    src: &'a str,
}

impl Checker<'_> {
    fn err(&self, section: Option<&str>, key: &str, message: impl fmt::Display) -> ConfigError {
        let qualified = match section {
            Some(s) => format!("{s}.{key}"),
            None => key.to_string(),
        };
        ConfigError {
            path: self.path.to_path_buf(),
            line: line_of(self.src, section, key),
            message: format!("field `{qualified}`: {message}"),
        }
    }

    fn require<T: Clone>(&self, v: &Option<T>, section: &str, key: &str, mode: Mode) -> Result<T, ConfigError> {
        v.clone()
            .ok_or_else(|| self.err(Some(section), key, format!("missing, required for mode {}", mode.name())))
    }
}

fn boundary_symbol(name: &str, h: f64) -> Option<PeriodicSymbol> {
    Some(match name {
        "one" => PeriodicSymbol::one(h),
        "zeta1" => PeriodicSymbol::zeta_power(h, 0, 1),
        "zeta2" => PeriodicSymbol::zeta_power(h, 1, 1),
        "fwd1" => PeriodicSymbol::new(h, 1.0, "fwd1", move |xi| zeta(-xi[0], h)),
        "fwd2" => PeriodicSymbol::new(h, 1.0, "fwd2", move |xi| zeta(-xi[1], h)),
        _ => return None,
    })
}

pub const BOUNDARY_SYMBOLS: &str = "one, zeta1, zeta2, fwd1, fwd2";

fn parse_error(path: &Path, src: &str, e: toml::de::Error) -> ConfigError {
    let line = e.span().map(|span| src[..span.start.min(src.len())].matches('\n').count() + 1);
    ConfigError { path: path.to_path_buf(), line, message: e.message().trim().to_string() }
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: None,
        message: format!("cannot read config: {e}"),
    })?;
    parse(path, &src)
}

pub fn parse(path: &Path, src: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| parse_error(path, src, e))?;
    let ck = Checker { path, src };
    let mode = raw.mode;
    let g = &raw.grid;

    let positive = |v: f64, key: &str| -> Result<f64, ConfigError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(ck.err(Some("grid"), key, format!("must be positive, got {v}")))
        }
    };
    let sweep = |min_len: usize| -> Result<Vec<f64>, ConfigError> {
        let hs = ck.require(&g.h_sweep, "grid", "h_sweep", mode)?;
        if hs.len() < min_len {
            return Err(ck.err(Some("grid"), "h_sweep", format!("needs at least {min_len} values")));
        }
        for &h in &hs {
            positive(h, "h_sweep")?;
        }
        if hs.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(ck.err(Some("grid"), "h_sweep", "values must be strictly decreasing"));
        }
        Ok(hs)
    };

    let experiment = match mode {
        Mode::Lemma1 => {
            if raw.problem.is_some() {
                return Err(ck.err(None, "problem", "not used by mode lemma1"));
            }
            Experiment::Lemma1 {
                h_sweep: sweep(1)?,
                k_max: g.k_max.unwrap_or(3),
                samples: g.samples.unwrap_or(10_000),
            }
        }
        Mode::Solve | Mode::Roundtrip => {
            let pr = raw
                .problem
                .as_ref()
                .ok_or_else(|| ck.err(None, "problem", "missing [problem] table"))?;
            let h = positive(ck.require(&g.h, "grid", "h", mode)?, "h")?;
            let nodes = ck.require(&g.nodes, "grid", "nodes", mode)?;
            if nodes < 2 || nodes % 2 != 0 {
                return Err(ck.err(Some("grid"), "nodes", "must be an even number >= 2"));
            }
            let spec = discrete_spec(&ck, pr, h, mode)?;
            match mode {
                Mode::Solve => Experiment::Solve { spec, nodes, window: g.window.unwrap_or(8) },
                _ => Experiment::Roundtrip { spec, nodes },
            }
        }
        Mode::Lemma2 | Mode::Theorem3 | Mode::Theorem4 => {
            let pr = raw
                .problem
                .as_ref()
                .ok_or_else(|| ck.err(None, "problem", "missing [problem] table"))?;
            let problem = continuous_problem(&ck, pr, mode)?;
            let h_sweep = sweep(3)?;
            let h_min = *h_sweep.last().expect("nonempty sweep");
            let lambda = match g.lambda {
                Some(l) => positive(l, "lambda")?,
                None if mode == Mode::Lemma2 => 16.0 * default_lambda(&h_sweep),
                None => default_lambda(&h_sweep),
            };
            if lambda < std::f64::consts::PI / h_min {
                return Err(ck.err(Some("grid"), "lambda", format!("must be at least π/h_min = {}", std::f64::consts::PI / h_min)));
            }
            let m0 = g.m0.unwrap_or(DEFAULT_M0);
            if m0 == 0 {
                return Err(ck.err(Some("grid"), "m0", "must be at least 1"));
            }
            match mode {
                Mode::Lemma2 => Experiment::Lemma2 { problem, h_sweep, lambda, m0 },
                Mode::Theorem3 => Experiment::Theorem3 { problem, h_sweep, lambda, m0 },
                _ => Experiment::Theorem4 { problem, h_sweep, lambda, m0 },
            }
        }
    };

    let file = raw.output.clone().unwrap_or_else(|| {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
        PathBuf::from(format!("{stem}.csv"))
    });
    let output = match std::env::var_os("DPDO_OUT_DIR") {
        Some(dir) => PathBuf::from(dir).join(file.file_name().unwrap_or(file.as_os_str())),
        None if file.is_relative() => path.parent().unwrap_or(Path::new(".")).join(file),
        None => file,
    };
    Ok(ExperimentConfig { mode, seed: raw.seed, source: path.to_path_buf(), output, experiment })
}

fn check_split(ck: &Checker<'_>, pr: &RawProblem, index: f64) -> Result<(), ConfigError> {
    let (n, delta) = split_index(index, pr.s).map_err(|e| ck.err(Some("problem"), "s", e))?;
    if n != pr.n {
        return Err(ck.err(Some("problem"), "n", format!("index - s = {} gives n = {n}, not {}", index - pr.s, pr.n)));
    }
    if let Some(d) = pr.delta {
        if (d - delta).abs() > 1e-12 {
            return Err(ck.err(Some("problem"), "delta", format!("index - s - n = {delta}, not {d}")));
        }
    }
    Ok(())
}

fn discrete_spec(ck: &Checker<'_>, pr: &RawProblem, h: f64, mode: Mode) -> Result<ProblemSpec, ConfigError> {
    let family = match pr.family {
        Family::Geometric => FactorFamily::Geometric {
            a: ck.require(&pr.a, "problem", "a", mode)?,
            p: pr.p.unwrap_or(1.0),
            q: pr.q.unwrap_or(1.0),
        },
        Family::ShiftedZeta => FactorFamily::ShiftedZeta {
            c: ck.require(&pr.c, "problem", "c", mode)?,
            kappa: ck.require(&pr.kappa, "problem", "kappa", mode)?,
            mu: pr.mu.unwrap_or(1.0),
        },
        Family::Identity => FactorFamily::Identity,
        Family::Bessel => {
            return Err(ck.err(Some("problem"), "family", format!("bessel is continuous; mode {} needs a lattice family", mode.name())))
        }
    };
    let factorization = builtin_factor_family(family, h).map_err(|e| ck.err(Some("problem"), "family", e))?;
    check_split(ck, pr, factorization.index)?;
    let ops = |key: &str, side: TraceSide, names: &Option<Vec<String>>| -> Result<Vec<BoundaryOperatorSpec>, ConfigError> {
        let names = names.clone().unwrap_or_else(|| vec!["one".to_string(); pr.n]);
        if names.len() != pr.n {
            return Err(ck.err(Some("problem"), key, format!("needs {} entries, got {}", pr.n, names.len())));
        }
        names
            .iter()
            .map(|name| {
                boundary_symbol(name, h)
                    .map(|sym| BoundaryOperatorSpec::new(side, sym))
                    .ok_or_else(|| ck.err(Some("problem"), key, format!("unknown symbol `{name}` (expected one of {BOUNDARY_SYMBOLS})")))
            })
            .collect()
    };
    let b = ops("b", TraceSide::Horizontal, &pr.b)?;
    let g = ops("g", TraceSide::Vertical, &pr.g)?;
    ProblemSpec::new(pr.s, factorization, b, g).map_err(|e| ck.err(Some("problem"), "family", e))
}

fn continuous_problem(ck: &Checker<'_>, pr: &RawProblem, mode: Mode) -> Result<ContinuousProblem, ConfigError> {
    if pr.family != Family::Bessel {
        return Err(ck.err(Some("problem"), "family", format!("mode {} needs the continuous family `bessel`", mode.name())));
    }
    let index = ck.require(&pr.index, "problem", "index", mode)?;
    let alpha = pr.alpha.unwrap_or(index);
    check_split(ck, pr, index)?;
    let beta = pr.beta.clone().unwrap_or_else(|| vec![0.0; pr.n]);
    let gamma = pr.gamma.clone().unwrap_or_else(|| vec![0.0; pr.n]);
    for (key, list) in [("beta", &beta), ("gamma", &gamma)] {
        if list.len() != pr.n {
            return Err(ck.err(Some("problem"), key, format!("needs {} entries, got {}", pr.n, list.len())));
        }
    }
    // hypotheses of the estimate each mode checks
    let (bmin, gmin, what) = match mode {
        Mode::Lemma2 => (f64::NEG_INFINITY, f64::NEG_INFINITY, ""),
        Mode::Theorem3 => (1.0, 2.0, "the commutator estimate needs s - beta_j > 1 and s - gamma_j > 2"),
        _ => (3.0, 3.0, "the operator gap estimate needs s - beta_j > 3 and s - gamma_j > 3"),
    };
    if let Some(b) = beta.iter().find(|&&b| pr.s - b <= bmin) {
        return Err(ck.err(Some("problem"), "beta", format!("{what} (s - beta = {})", pr.s - b)));
    }
    if let Some(g) = gamma.iter().find(|&&g| pr.s - g <= gmin) {
        return Err(ck.err(Some("problem"), "gamma", format!("{what} (s - gamma = {})", pr.s - g)));
    }
    if mode == Mode::Lemma2 {
        for (key, list) in [("beta", &beta), ("gamma", &gamma)] {
            if list.iter().any(|&o| o - index + pr.n as f64 >= 0.0) {
                return Err(ck.err(Some("problem"), key, "multiplier integrals diverge (order - index + n >= 0)"));
            }
        }
    }
    ContinuousProblem::bessel_model(alpha, index, pr.s, &beta, &gamma).map_err(|e| ck.err(Some("problem"), "index", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(src: &str) -> Result<ExperimentConfig, ConfigError> {
        parse(Path::new("test.toml"), src)
    }

    #[test]
    fn lemma1_defaults() {
        let cfg = parse_str("mode = \"lemma1\"\n[grid]\nh_sweep = [1.0, 0.5]\n").unwrap();
        match cfg.experiment {
            Experiment::Lemma1 { k_max, samples, .. } => assert_eq!((k_max, samples), (3, 10_000)),
            _ => panic!("wrong experiment"),
        }
        assert_eq!(cfg.output, Path::new("").join("test.csv"));
    }

    #[test]
    fn missing_n_names_the_field() {
        let src = "mode = \"roundtrip\"\n[problem]\nfamily = \"identity\"\ns = -1.0\n[grid]\nh = 1.0\nnodes = 16\n";
        let e = parse_str(src).unwrap_err();
        assert!(e.message.contains("`n`"), "{e}");
        assert!(e.line.is_some());
    }

    #[test]
    fn inconsistent_n_points_at_its_line() {
        let src = "mode = \"roundtrip\"\n[problem]\nfamily = \"identity\"\ns = -1.0\nn = 2\n[grid]\nh = 1.0\nnodes = 16\n";
        let e = parse_str(src).unwrap_err();
        assert_eq!(e.line, Some(5));
        assert!(e.to_string().starts_with("test.toml:5: field `problem.n`"), "{e}");
    }

    #[test]
    fn theorem_hypotheses_checked_before_running() {
        let src = "mode = \"theorem4\"\n[problem]\nfamily = \"bessel\"\nindex = 3.0\ns = 2.25\nn = 1\nbeta = [0.0]\ngamma = [0.0]\n[grid]\nh_sweep = [1.0, 0.5, 0.25]\n";
        let e = parse_str(src).unwrap_err();
        assert!(e.message.contains("problem.beta"));
        assert_eq!(e.line, Some(7));
        let ok = src.replace("theorem4", "theorem3");
        assert!(parse_str(&ok).is_ok());
    }

    #[test]
    fn unknown_keys_and_symbols_rejected() {
        assert!(parse_str("mode = \"lemma1\"\ncolour = 1\n").is_err());
        let src = "mode = \"solve\"\n[problem]\nfamily = \"identity\"\ns = -1.0\nn = 1\nb = [\"wat\"]\n[grid]\nh = 1.0\nnodes = 16\n";
        let e = parse_str(src).unwrap_err();
        assert_eq!(e.line, Some(6));
    }

    #[test]
    fn line_lookup() {
        let src = "a = 1\n[x]\nb = 2\n[y]\nb = 3\n";
        assert_eq!(line_of(src, None, "a"), Some(1));
        assert_eq!(line_of(src, Some("y"), "b"), Some(5));
        assert_eq!(line_of(src, Some("x"), "c"), Some(2));
    }
}
