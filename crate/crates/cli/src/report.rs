use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use crate::config::Mode;

/// One pass/fail verdict tied to an acceptance criterion.
#[derive(Debug, Clone)]
pub struct Gate {
    pub criterion: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Real(f64),
    Count(usize),
    Int(i64),
}

impl Cell {
    fn render(self) -> String {
        match self {
            Cell::Real(v) => format!("{v:.17e}"),
            Cell::Count(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub mode: Mode,
    pub rows: Vec<Vec<Cell>>,
    /// Extra `key=value` lines describing the run (slope, condition, ...).
    pub facts: Vec<(String, String)>,
    pub gates: Vec<Gate>,
    pub timings: Vec<(String, f64)>,
}

impl ExperimentReport {
    pub fn new(mode: Mode) -> Self {
        Self { mode, rows: Vec::new(), facts: Vec::new(), gates: Vec::new(), timings: Vec::new() }
    }

    pub fn fact(&mut self, key: &str, value: impl ToString) {
        self.facts.push((key.to_string(), value.to_string()));
    }

    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }

    pub fn csv(&self) -> String {
        let mut out = format!("# schema={}-v1\n{}\n", self.mode.name(), columns(self.mode).join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.render()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn summary(&self, config_echo: &str, csv_path: &Path) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode={}", self.mode.name());
        let _ = writeln!(out, "csv={}", csv_path.display());
        let _ = writeln!(out, "rows={}", self.rows.len());
        for (k, v) in &self.facts {
            let _ = writeln!(out, "{k}={v}");
        }
        for g in &self.gates {
            let _ = writeln!(
                out,
                "gate.criterion{}={} ({}: {})",
                g.criterion,
                if g.pass { "pass" } else { "fail" },
                g.name,
                g.detail
            );
        }
        let _ = writeln!(out, "verdict={}", if self.passed() { "pass" } else { "fail" });
        for (k, secs) in &self.timings {
            let _ = writeln!(out, "time.{k}_s={secs:.3}");
        }
        for line in config_echo.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let _ = writeln!(out, "config: {line}");
        }
        out
    }

    /// Writes the CSV and a `.summary` file next to it, returning the summary path.
    pub fn write(&self, csv_path: &Path, config_echo: &str) -> io::Result<PathBuf> {
        if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(csv_path, self.csv())?;
        let summary = csv_path.with_extension("summary");
        std::fs::write(&summary, self.summary(config_echo, csv_path))?;
        Ok(summary)
    }
}

pub fn columns(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::Solve => &["h", "N", "x1", "x2", "re", "im"],
        Mode::Roundtrip => &["h", "N", "seed", "rel_error", "condition", "residual"],
        Mode::Lemma1 => &["h", "k", "max_gap", "max_bound", "ratio"],
        Mode::Lemma2 => &["h", "N", "l", "m", "r", "p"],
        Mode::Theorem3 | Mode::Theorem4 => &["h", "N", "norm"],
    }
}

/// Human-readable column documentation for `schema <mode>`.
pub fn schema(mode: Mode) -> String {
    let docs: &[&str] = match mode {
        Mode::Solve => &[
            "mesh size",
            "frequency nodes per axis",
            "first lattice index of the solution sample",
            "second lattice index",
            "real part of u at (x1 h, x2 h)",
            "imaginary part",
        ],
        Mode::Roundtrip => &[
            "mesh size",
            "frequency nodes per axis",
            "seed of the planted random traces",
            "worst trace error in the s_k norms relative to the planted trace norm",
            "1-norm condition estimate of the gauge-augmented system",
            "relative residual of the least-squares solve",
        ],
        Mode::Lemma1 => &[
            "mesh size",
            "power k",
            "largest |zeta^k - (i xi)^k| over the samples",
            "largest bound k e^{k pi} h |xi|^{k+1}",
            "largest gap/bound",
        ],
        Mode::Lemma2 => &[
            "mesh size",
            "frequency nodes per axis",
            "worst gap/bound for the L kernels",
            "worst gap/bound for the M kernels",
            "worst gap/bound for the R integrals",
            "worst gap/bound for the P integrals",
        ],
        Mode::Theorem3 => &[
            "mesh size",
            "line quadrature nodes",
            "weighted norm of the truncation commutator",
        ],
        Mode::Theorem4 => &[
            "mesh size",
            "frequency nodes per axis",
            "weighted norm of the discrete minus restricted continuous operator",
        ],
    };
    let mut out = format!("# schema={}-v1\n", mode.name());
    for (c, d) in columns(mode).iter().zip(docs) {
        let _ = writeln!(out, "{c}: {d}");
    }
    out
}
