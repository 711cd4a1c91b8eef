//! Discrete versus continuous: kernel gaps, weighted operator norms of the
//! commutator `Ξ_h Q - Q Ξ_h` and of the gap `Ξ_h Q Ξ_h - q`, and rate fitting.
//!
//! Continuous operators live on a truncated line grid `[-Λ, Λ]` with spacing
//! `Δ = π / m0`; `ħT` grids are cut from it so that nodes coincide.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_mesh, Error, Result};
use crate::lattice::{zeta, zeta_weight_1d, FrequencyGrid, QuadratureRule};
use crate::system::{
    continuous_evals, periodic_evals, BlockSystem, ContinuousProblem, KernelSource, Monomial,
};

pub const POWER_TOLERANCE: f64 = 1e-8;
pub const POWER_MAX_ITERATIONS: usize = 10_000;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Nodes per unit `π` on line grids.
pub const DEFAULT_M0: usize = 8;
pub const LEMMA2_SWEEP: [f64; 3] = [1.0, 0.5, 0.25];
pub const THEOREM3_SWEEP: [f64; 4] = [1.0, 0.5, 0.25, 0.125];
pub const THEOREM4_SWEEP: [f64; 4] = [0.5, 0.25, 0.125, 0.0625];

/// Truncation `Λ = 4π/h_min`.
pub fn default_lambda(h_values: &[f64]) -> f64 {
    4.0 * PI / h_values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `A_plus = 1 + |ξ|²`, unit boundary symbols, `s = 1`, `n = 1`.
pub fn arctan_test_problem() -> ContinuousProblem {
    ContinuousProblem::bessel_model(2.0, 2.0, 1.0, &[0.0], &[0.0]).expect("valid built-in problem")
}

/// `A_plus = (1 + |ξ|²)^{3/2}`, unit boundary symbols, `s = 2.25`, `n = 1`.
pub fn theorem3_test_problem() -> ContinuousProblem {
    ContinuousProblem::bessel_model(3.0, 3.0, 2.25, &[0.0], &[0.0]).expect("valid built-in problem")
}

/// `A_plus = (1 + |ξ|²)³`, boundary orders `[0, 1/2]`, `s = 3.75`, `n = 2`.
pub fn theorem4_test_problem() -> ContinuousProblem {
    ContinuousProblem::bessel_model(6.0, 6.0, 3.75, &[0.0, 0.5], &[0.0, 0.5]).expect("valid built-in problem")
}

/// `|(iξ)^k - ζ^k|` and the bound `k e^{kπ} h |ξ|^{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapBound {
    pub gap: f64,
    pub bound: f64,
}

pub fn lemma1_gap(xi: f64, k: u32, h: f64) -> GapBound {
    let gap = (Complex64::new(0.0, xi).powu(k) - zeta(xi, h).powu(k)).norm();
    let bound = k as f64 * (k as f64 * PI).exp() * h * xi.abs().powi(k as i32 + 1);
    GapBound { gap, bound }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Row {
    pub h: f64,
    pub k: u32,
    pub samples: usize,
    pub max_gap: f64,
    pub max_bound: f64,
    /// Largest `gap / bound` over samples with a nonzero bound.
    pub ratio: f64,
    pub violations: usize,
}

/// Samples `samples` midpoints of `ħT` plus both endpoints for each `(h, k)`.
pub fn lemma1_sweep(h_values: &[f64], k_max: u32, samples: usize) -> Result<Vec<Lemma1Row>> {
    if samples == 0 || k_max == 0 {
        return Err(Error::InvalidInput("lemma 1 sweep needs samples and k >= 1".into()));
    }
    let mut rows = Vec::new();
    for &h in h_values {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("mesh size must be positive, got {h}")));
        }
        let rule = QuadratureRule::midpoint(PI / h, samples)?;
        let xs: Vec<f64> = rule.nodes.iter().copied().chain([-PI / h, PI / h]).collect();
        for k in 1..=k_max {
            let mut row = Lemma1Row {
                h,
                k,
                samples: xs.len(),
                max_gap: 0.0,
                max_bound: 0.0,
                ratio: 0.0,
                violations: 0,
            };
            for &x in &xs {
                let GapBound { gap, bound } = lemma1_gap(x, k, h);
                row.max_gap = row.max_gap.max(gap);
                row.max_bound = row.max_bound.max(bound);
                if gap > bound {
                    row.violations += 1;
                }
                if bound > 0.0 {
                    row.ratio = row.ratio.max(gap / bound);
                }
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Midpoint rule on `[-Λ, Λ]` with spacing `π / m0`; `Λ` must be a multiple of `π / m0`.
pub fn line_rule(lambda: f64, m0: usize) -> Result<QuadratureRule> {
    if m0 == 0 || !(lambda > 0.0) {
        return Err(Error::InvalidConfiguration("line grid needs m0 >= 1 and Λ > 0".into()));
    }
    let cells = 2.0 * lambda * m0 as f64 / PI;
    if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
        return Err(Error::InvalidConfiguration(format!(
            "Λ = {lambda} is not a multiple of the spacing π/{m0}"
        )));
    }
    QuadratureRule::midpoint(lambda, cells.round() as usize)
}

/// The `ħT` grid whose nodes are the line nodes inside `(-πħ, πħ)`, with their indices.
pub fn torus_subgrid(line: &QuadratureRule, h: f64) -> Result<(FrequencyGrid, Vec<usize>)> {
    let half = PI / h;
    let idx: Vec<usize> = (0..line.len()).filter(|&i| line.nodes[i].abs() < half).collect();
    let grid = FrequencyGrid::two_d(h, idx.len())?;
    let nodes = grid.axis_nodes();
    let aligned = idx.len() == nodes.len()
        && idx.iter().zip(&nodes).all(|(&i, &x)| (line.nodes[i] - x).abs() <= 1e-9 * half);
    if !aligned {
        return Err(Error::InvalidConfiguration(format!(
            "line grid nodes do not align with the ħT grid for h = {h}"
        )));
    }
    Ok((grid, idx))
}

fn check_sweep(h_values: &[f64], lambda: f64) -> Result<()> {
    if h_values.len() < 3 {
        return Err(Error::InvalidConfiguration("a rate sweep needs at least 3 mesh sizes".into()));
    }
    if h_values.windows(2).any(|w| !(w[1] < w[0])) || h_values.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::InvalidConfiguration("h values must be positive and strictly decreasing".into()));
    }
    for &h in h_values {
        if lambda < PI / h {
            return Err(Error::InvalidConfiguration(format!(
                "truncation Λ = {lambda} is smaller than the projection window π/h = {}",
                PI / h
            )));
        }
    }
    Ok(())
}

/// Maximum kernel-gap ratios for the four kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelGapRatios {
    pub l: f64,
    pub m: f64,
    pub r: f64,
    pub p: f64,
}

impl KernelGapRatios {
    fn max_with(self, o: KernelGapRatios) -> Self {
        Self { l: self.l.max(o.l), m: self.m.max(o.m), r: self.r.max(o.r), p: self.p.max(o.p) }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.l, self.m, self.r, self.p]
    }
}

/// Kernel gaps between the continuous problem and its periodization on the grid
/// `grid` (nodes of `ħT`), for one `(j, k)`. Improper integrals in `R`, `P` use
/// `tail`, a line rule much wider than `ħT`.
pub fn lemma2_gaps(
    problem: &ContinuousProblem,
    grid: &FrequencyGrid,
    tail: &QuadratureRule,
    j: usize,
    k: usize,
) -> Result<KernelGapRatios> {
    let n = problem.n;
    if j >= n || k >= n {
        return Err(Error::InvalidInput(format!("indices j = {j}, k = {k} must be below n = {n}")));
    }
    let h = grid.h();
    let beta = problem.b[j].order();
    let gamma = problem.g[j].order();
    let ae = problem.index;
    for order in [beta, gamma] {
        if order - ae + k as f64 + 1.0 >= 0.0 {
            return Err(Error::InvalidInput(format!(
                "multiplier integrals diverge: order {order} - index {ae} + k + 1 >= 0"
            )));
        }
    }
    let discrete = problem.discretize(h)?;
    let rule = grid.rule();

    let cb = continuous_evals(&problem.b);
    let cg = continuous_evals(&problem.g);
    let cplus = |xi: [f64; 2]| problem.plus.eval(xi);
    let cont = KernelSource {
        n,
        plus: &cplus,
        b: cb.iter().map(|f| f.as_ref()).collect(),
        g: cg.iter().map(|f| f.as_ref()).collect(),
        monomial: Monomial::ImagXi,
    };
    let db = periodic_evals(&discrete.b_ops);
    let dg = periodic_evals(&discrete.g_ops);
    let dplus = |xi: [f64; 2]| discrete.factorization.plus.eval(xi);
    let disc = KernelSource {
        n,
        plus: &dplus,
        b: db.iter().map(|f| f.as_ref()).collect(),
        g: dg.iter().map(|f| f.as_ref()).collect(),
        monomial: discrete.monomial(),
    };

    let idx = j * n + k;
    let (rc, pc) = cont.multipliers(&rule.nodes, tail)?;
    let (rd, pd) = disc.multipliers(&rule.nodes, &rule)?;
    let (lc, mc) = cont.integral_blocks(&rule)?;
    let (ld, md) = disc.integral_blocks(&rule)?;

    let ratio = |gap: f64, x: f64, e: f64| {
        if gap == 0.0 {
            0.0
        } else {
            gap / (h * (1.0 + x).powf(e))
        }
    };
    let mut out = KernelGapRatios::default();
    let (el, em) = (beta - ae + k as f64 + 1.0, gamma - ae + k as f64 + 1.0);
    let w = rule.weights[0];
    for i1 in 0..rule.len() {
        for i2 in 0..rule.len() {
            let norm = rule.nodes[i1].hypot(rule.nodes[i2]);
            let gl = (lc[idx][(i1, i2)] - ld[idx][(i1, i2)]).norm() / w;
            let gm = (mc[idx][(i2, i1)] - md[idx][(i2, i1)]).norm() / w;
            out.l = out.l.max(ratio(gl, norm, el));
            out.m = out.m.max(ratio(gm, norm, em));
        }
    }
    let (er, ep) = (el + 1.0, em + 1.0);
    for (i, &x) in rule.nodes.iter().enumerate() {
        out.r = out.r.max(ratio((rc[idx][i] - rd[idx][i]).norm(), x.abs(), er));
        out.p = out.p.max(ratio((pc[idx][i] - pd[idx][i]).norm(), x.abs(), ep));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma2Row {
    pub h: f64,
    pub nodes: usize,
    pub ratios: KernelGapRatios,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma2Report {
    pub rows: Vec<Lemma2Row>,
    /// Whether `s - β_j > 2` and `s - γ_j > 2` hold for every `j`.
    pub hypotheses_hold: bool,
}

impl Lemma2Report {
    /// Each family's ratio grows by at most 10% per refinement step.
    pub fn growth_ok(&self) -> bool {
        self.rows.windows(2).all(|w| {
            w[0].ratios
                .as_array()
                .iter()
                .zip(w[1].ratios.as_array())
                .all(|(&prev, next)| next <= 1.1 * prev + 1e-14)
        })
    }
}

/// Ratios maximized over `(j, k)` for each `h`; `ħT` grids have spacing `π / m0`
/// and the tail rule spans `[-Λ, Λ]`.
pub fn lemma2_sweep(problem: &ContinuousProblem, h_values: &[f64], m0: usize, lambda: f64) -> Result<Lemma2Report> {
    let tail = line_rule(lambda, m0)?;
    let mut rows = Vec::new();
    for &h in h_values {
        if lambda < PI / h {
            return Err(Error::InvalidConfiguration(format!(
                "tail Λ = {lambda} must cover ħT = [-{0}, {0}]",
                PI / h
            )));
        }
        let (grid, _) = torus_subgrid(&tail, h)?;
        let mut ratios = KernelGapRatios::default();
        for j in 0..problem.n {
            for k in 0..problem.n {
                ratios = ratios.max_with(lemma2_gaps(problem, &grid, &tail, j, k)?);
            }
        }
        rows.push(Lemma2Row { h, nodes: grid.nodes_per_axis(), ratios });
    }
    let hypotheses_hold = problem
        .b
        .iter()
        .chain(&problem.g)
        .all(|sym| problem.s - sym.order() > 2.0);
    Ok(Lemma2Report { rows, hypotheses_hold })
}

/// A block of an operator between node-value vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameBlock {
    Dense(DMatrix<Complex64>),
    Diagonal(Vec<Complex64>),
}

/// Block operator on `⊕_k H^{s_k}` in nodal coordinates. The weighted matrix of
/// block `(i, j)` is `D_i^{1/2} K_ij D_j^{-1/2}` with `D = diag(w · base^s)`,
/// which makes each block norm Euclidean.
#[derive(Debug, Clone)]
pub struct WeightedOperatorFrame {
    pub rule: QuadratureRule,
    pub base: Vec<f64>,
    pub in_exponents: Vec<f64>,
    pub out_exponents: Vec<f64>,
    pub blocks: Vec<(usize, usize, FrameBlock)>,
}

impl WeightedOperatorFrame {
    pub fn new(
        rule: QuadratureRule,
        base: Vec<f64>,
        in_exponents: Vec<f64>,
        out_exponents: Vec<f64>,
    ) -> Result<Self> {
        if base.len() != rule.len() {
            return Err(Error::ShapeMismatch("weight base must have one entry per node".into()));
        }
        if base.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidInput("weight base must be positive".into()));
        }
        Ok(Self { rule, base, in_exponents, out_exponents, blocks: Vec::new() })
    }

    /// Unit weights and a single block: the plain Euclidean norm.
    pub fn euclidean(m: DMatrix<Complex64>) -> Self {
        let len = m.nrows().max(m.ncols());
        let rule = QuadratureRule { nodes: vec![0.0; len], weights: vec![1.0; len] };
        let mut f = Self {
            rule,
            base: vec![1.0; len],
            in_exponents: vec![0.0],
            out_exponents: vec![0.0],
            blocks: Vec::new(),
        };
        f.blocks.push((0, 0, FrameBlock::Dense(m)));
        f
    }

    pub fn push(&mut self, out: usize, input: usize, block: FrameBlock) -> Result<()> {
        if out >= self.out_exponents.len() || input >= self.in_exponents.len() {
            return Err(Error::ShapeMismatch(format!("block ({out}, {input}) outside the frame")));
        }
        let len = self.rule.len();
        let ok = match &block {
            FrameBlock::Dense(m) => m.nrows() <= len && m.ncols() <= len,
            FrameBlock::Diagonal(d) => d.len() == len,
        };
        if !ok {
            return Err(Error::ShapeMismatch("block size exceeds the node count".into()));
        }
        self.blocks.push((out, input, block));
        Ok(())
    }

    fn sqrt_weights(&self, s: f64) -> Vec<f64> {
        self.rule
            .weights
            .iter()
            .zip(&self.base)
            .map(|(w, b)| (w * b.powf(s)).sqrt())
            .collect()
    }

    /// Blocks in weighted coordinates, in push order.
    pub fn weighted_blocks(&self) -> Vec<FrameBlock> {
        self.blocks
            .iter()
            .map(|(o, i, block)| {
                let wo = self.sqrt_weights(self.out_exponents[*o]);
                let wi = self.sqrt_weights(self.in_exponents[*i]);
                match block {
                    FrameBlock::Diagonal(d) => {
                        FrameBlock::Diagonal(d.iter().enumerate().map(|(q, v)| v * (wo[q] / wi[q])).collect())
                    }
                    FrameBlock::Dense(m) => {
                        FrameBlock::Dense(DMatrix::from_fn(m.nrows(), m.ncols(), |a, b| m[(a, b)] * (wo[a] / wi[b])))
                    }
                }
            })
            .collect()
    }

    /// Euclidean norm of each weighted block, in push order.
    pub fn block_norms(&self) -> Result<Vec<f64>> {
        self.weighted_blocks()
            .iter()
            .map(|block| match block {
                FrameBlock::Diagonal(d) => Ok(d.iter().map(|v| v.norm()).fold(0.0, f64::max)),
                FrameBlock::Dense(m) => power_iteration_norm(m, POWER_TOLERANCE, POWER_MAX_ITERATIONS),
            })
            .collect()
    }
}

/// Norm on the sum space `‖F‖ = Σ_k ‖f_k‖`: the largest, over input blocks, of
/// the summed norms of the blocks fed by it.
pub fn estimate_operator_norm(frame: &WeightedOperatorFrame) -> Result<f64> {
    let norms = frame.block_norms()?;
    let mut col = vec![0.0; frame.in_exponents.len()];
    for ((_, input, _), nrm) in frame.blocks.iter().zip(norms) {
        col[*input] += nrm;
    }
    Ok(col.into_iter().fold(0.0, f64::max))
}

/// Largest singular value by power iteration on `M^H M` from a fixed pseudo-random start.
pub fn power_iteration_norm(m: &DMatrix<Complex64>, tol: f64, max_iter: usize) -> Result<f64> {
    if m.iter().all(|v| *v == ZERO) || m.ncols() == 0 {
        return Ok(0.0);
    }
    if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::InvalidInput("operator matrix has non-finite entries".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = DVector::from_fn(m.ncols(), |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    v /= Complex64::from(v.norm());
    let mut prev = 0.0;
    let mut change = f64::INFINITY;
    for it in 0..max_iter {
        let w = m * &v;
        let lam = w.norm_squared();
        let z = m.adjoint() * w;
        let nz = z.norm();
        if nz == 0.0 {
            return Ok(0.0);
        }
        v = z / Complex64::from(nz);
        if it > 0 {
            change = (lam - prev).abs() / lam;
            if change <= tol {
                return Ok(lam.sqrt());
            }
        }
        prev = lam;
    }
    Err(Error::NotConverged { iterations: max_iter, estimate: prev.sqrt(), change })
}

/// Largest singular value from a full SVD.
pub fn svd_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// The `r, p, l, m` blocks of a Nyström operator, detached from any right-hand side.
#[derive(Debug, Clone)]
pub struct KernelBlocks {
    pub n: usize,
    pub r: Vec<Vec<Complex64>>,
    pub p: Vec<Vec<Complex64>>,
    pub l: Vec<DMatrix<Complex64>>,
    pub m: Vec<DMatrix<Complex64>>,
}

impl KernelBlocks {
    pub fn from_system(sys: &BlockSystem) -> Self {
        Self { n: sys.n, r: sys.r.clone(), p: sys.p.clone(), l: sys.l.clone(), m: sys.m.clone() }
    }

    pub fn sub(&self, o: &KernelBlocks) -> Result<KernelBlocks> {
        if self.n != o.n || self.r[0].len() != o.r[0].len() {
            return Err(Error::ShapeMismatch("kernel blocks differ in size".into()));
        }
        let vsub = |a: &Vec<Vec<Complex64>>, b: &Vec<Vec<Complex64>>| -> Vec<Vec<Complex64>> {
            a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect()).collect()
        };
        let msub = |a: &Vec<DMatrix<Complex64>>, b: &Vec<DMatrix<Complex64>>| -> Vec<DMatrix<Complex64>> {
            a.iter().zip(b).map(|(x, y)| x - y).collect()
        };
        Ok(KernelBlocks {
            n: self.n,
            r: vsub(&self.r, &o.r),
            p: vsub(&self.p, &o.p),
            l: msub(&self.l, &o.l),
            m: msub(&self.m, &o.m),
        })
    }

    /// `Ξ K - K Ξ` for the 0/1 diagonal `chi`; multiplier blocks drop out.
    pub fn commutator(&self, chi: &[bool]) -> KernelBlocks {
        let len = chi.len();
        let f = |a: usize, b: usize| chi[a] as i32 as f64 - chi[b] as i32 as f64;
        let apply = |k: &DMatrix<Complex64>| DMatrix::from_fn(len, len, |a, b| k[(a, b)] * f(a, b));
        KernelBlocks {
            n: self.n,
            r: vec![vec![ZERO; len]; self.n * self.n],
            p: vec![vec![ZERO; len]; self.n * self.n],
            l: self.l.iter().map(apply).collect(),
            m: self.m.iter().map(apply).collect(),
        }
    }

    /// Frame with unknown blocks `c_0.., d_0..` and equation blocks `b_0.., g_0..`,
    /// block `k` carrying exponent `exponents[k]` on both sides.
    pub fn frame(&self, rule: QuadratureRule, base: Vec<f64>, exponents: &[f64]) -> Result<WeightedOperatorFrame> {
        let n = self.n;
        let exps: Vec<f64> = exponents.iter().chain(exponents).copied().collect();
        let mut frame = WeightedOperatorFrame::new(rule, base, exps.clone(), exps)?;
        for j in 0..n {
            for k in 0..n {
                let idx = j * n + k;
                if self.r[idx].iter().any(|v| *v != ZERO) {
                    frame.push(j, k, FrameBlock::Diagonal(self.r[idx].clone()))?;
                }
                if self.p[idx].iter().any(|v| *v != ZERO) {
                    frame.push(n + j, n + k, FrameBlock::Diagonal(self.p[idx].clone()))?;
                }
                if self.l[idx].iter().any(|v| *v != ZERO) {
                    frame.push(j, n + k, FrameBlock::Dense(self.l[idx].clone()))?;
                }
                if self.m[idx].iter().any(|v| *v != ZERO) {
                    frame.push(n + j, k, FrameBlock::Dense(self.m[idx].clone()))?;
                }
            }
        }
        Ok(frame)
    }
}

/// Least-squares slope of `log(norm)` against `log(h)`.
pub fn fit_rate(h_values: &[f64], norms: &[f64]) -> Result<f64> {
    if h_values.len() != norms.len() || norms.len() < 3 {
        return Err(Error::DegenerateFit("need at least 3 (h, norm) pairs".into()));
    }
    if norms.iter().chain(h_values).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::DegenerateFit("all mesh sizes and norms must be positive".into()));
    }
    let xs: Vec<f64> = h_values.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let len = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / len;
    let my = ys.iter().sum::<f64>() / len;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("mesh sizes must differ".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Measured norms along an `h` sweep with the fitted slope.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub h_values: Vec<f64>,
    pub norms: Vec<f64>,
    /// Node count of the grid each norm was computed on.
    pub nodes: Vec<usize>,
    /// `None` when the fit is degenerate.
    pub slope: Option<f64>,
    pub epsilon: f64,
    pub degenerate: bool,
    /// Positions `i` with `norms[i + 1] > norms[i]`.
    pub inversions: Vec<usize>,
}

impl RateReport {
    fn build(h_values: Vec<f64>, norms: Vec<f64>, nodes: Vec<usize>, epsilon: f64) -> Self {
        let slope = fit_rate(&h_values, &norms).ok();
        let inversions = norms
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0])
            .map(|(i, _)| i)
            .collect();
        Self { degenerate: slope.is_none(), h_values, norms, nodes, slope, epsilon, inversions }
    }

    pub fn monotone(&self) -> bool {
        self.inversions.is_empty()
    }

    /// Nonincreasing except possibly for one inversion at the coarsest step.
    pub fn monotone_tolerant(&self) -> bool {
        self.inversions.is_empty() || self.inversions == [0]
    }
}

/// `ε = min_j {s - β_j - 1, s - γ_j - 1}`.
pub fn rate_exponent(problem: &ContinuousProblem) -> f64 {
    problem
        .b
        .iter()
        .chain(&problem.g)
        .map(|sym| problem.s - sym.order() - 1.0)
        .fold(f64::INFINITY, f64::min)
}

fn trace_exponents(problem: &ContinuousProblem) -> Vec<f64> {
    (0..problem.n).map(|k| problem.trace_exponent(k)).collect()
}

/// `‖Ξ_h Q - Q Ξ_h‖` for a continuous system assembled on `line`.
pub fn commutator_norm(problem: &ContinuousProblem, q: &KernelBlocks, line: &QuadratureRule, h: f64) -> Result<f64> {
    let chi: Vec<bool> = line.nodes.iter().map(|x| x.abs() < PI / h).collect();
    let base = line.nodes.iter().map(|x| 1.0 + x * x).collect();
    let frame = q.commutator(&chi).frame(line.clone(), base, &trace_exponents(problem))?;
    estimate_operator_norm(&frame)
}

/// Commutator norms along the sweep; requires `s - β_j > 1`, `s - γ_j > 2`.
pub fn theorem3_commutator(problem: &ContinuousProblem, h_values: &[f64], lambda: f64, m0: usize) -> Result<RateReport> {
    if problem.b.iter().any(|b| problem.s - b.order() <= 1.0)
        || problem.g.iter().any(|g| problem.s - g.order() <= 2.0)
    {
        return Err(Error::InvalidInput(
            "commutator estimate requires s - beta_j > 1 and s - gamma_j > 2".into(),
        ));
    }
    check_sweep(h_values, lambda)?;
    let line = line_rule(lambda, m0)?;
    let q = KernelBlocks::from_system(&crate::system::assemble_continuous_system(problem, &line, None)?);
    let norms = h_values
        .iter()
        .map(|&h| commutator_norm(problem, &q, &line, h))
        .collect::<Result<Vec<_>>>()?;
    Ok(RateReport::build(h_values.to_vec(), norms, vec![line.len(); h_values.len()], rate_exponent(problem)))
}

/// Continuous kernels restricted to `ħT` (multipliers integrate over all of `line`)
/// and the discrete kernels of the periodized problem, on the same nodes.
pub fn restricted_pair(
    problem: &ContinuousProblem,
    line: &QuadratureRule,
    h: f64,
) -> Result<(FrequencyGrid, KernelBlocks, KernelBlocks)> {
    let (grid, _) = torus_subgrid(line, h)?;
    let rule = grid.rule();
    let n = problem.n;

    let cb = continuous_evals(&problem.b);
    let cg = continuous_evals(&problem.g);
    let cplus = |xi: [f64; 2]| problem.plus.eval(xi);
    let cont = KernelSource {
        n,
        plus: &cplus,
        b: cb.iter().map(|f| f.as_ref()).collect(),
        g: cg.iter().map(|f| f.as_ref()).collect(),
        monomial: Monomial::ImagXi,
    };
    let (r, p) = cont.multipliers(&rule.nodes, line)?;
    let (l, m) = cont.integral_blocks(&rule)?;
    let q_big = KernelBlocks { n, r, p, l, m };

    let discrete = problem.discretize(h)?;
    check_mesh(grid.h(), discrete.h())?;
    let q_small = KernelBlocks::from_system(&crate::system::assemble_discrete_operator(&discrete, &grid)?);
    Ok((grid, q_big, q_small))
}

/// `‖Ξ_h Q Ξ_h - q‖` on the `ħT` nodes, weighted with `1 + |ζ|²`.
pub fn operator_gap(problem: &ContinuousProblem, line: &QuadratureRule, h: f64) -> Result<(f64, usize)> {
    let (grid, big, small) = restricted_pair(problem, line, h)?;
    let diff = big.sub(&small)?;
    let rule = grid.rule();
    let base = rule.nodes.iter().map(|&x| zeta_weight_1d(x, h)).collect();
    let frame = diff.frame(rule, base, &trace_exponents(problem))?;
    Ok((estimate_operator_norm(&frame)?, grid.nodes_per_axis()))
}

/// Gap norms along the sweep; requires `s - β_j > 3`, `s - γ_j > 3`.
pub fn theorem4_gap(problem: &ContinuousProblem, h_values: &[f64], lambda: f64, m0: usize) -> Result<RateReport> {
    if problem.b.iter().chain(&problem.g).any(|sym| problem.s - sym.order() <= 3.0) {
        return Err(Error::InvalidInput(
            "operator gap estimate requires s - beta_j > 3 and s - gamma_j > 3".into(),
        ));
    }
    check_sweep(h_values, lambda)?;
    let line = line_rule(lambda, m0)?;
    let (norms, nodes): (Vec<f64>, Vec<usize>) = h_values
        .iter()
        .map(|&h| operator_gap(problem, &line, h))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(RateReport::build(h_values.to_vec(), norms, nodes, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::ContinuousSymbol;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn arctan_problem() -> ContinuousProblem {
        arctan_test_problem()
    }

    #[test]
    fn lemma1_examples() {
        assert_eq!(lemma1_gap(0.0, 3, 0.5), GapBound { gap: 0.0, bound: 0.0 });

        let g = lemma1_gap(1.0, 1, 0.1);
        // |i - 10(e^{0.1i} - 1)| with 10(e^{0.1i} - 1) = -0.04995834721974234 + 0.9983341664682815i
        let expect = c(0.04995834721974234, 1.0 - 0.9983341664682815).norm();
        assert!((g.gap - expect).abs() < 1e-14);
        assert!((g.gap - 0.049986).abs() < 1e-6);
        assert!((g.bound - 0.1 * PI.exp()).abs() < 1e-14);
        assert!((g.bound - 2.3141).abs() < 1e-4);

        let h = 0.25;
        let g = lemma1_gap(PI / h, 2, h);
        // ζ = -2/h so (iξ)² - ζ² = -(π² + 4)/h²
        assert!((g.gap - (PI * PI + 4.0) / (h * h)).abs() < 1e-9);
        assert!((g.bound - 2.0 * (2.0 * PI).exp() * PI.powi(3) / (h * h)).abs() < 1e-6 * g.bound);
        assert!(g.gap <= g.bound);
    }

    #[test]
    fn lemma1_sweep_has_no_violations() {
        let rows = lemma1_sweep(&[1.0, 0.5, 0.25, 0.125], 4, 10_000).unwrap();
        assert_eq!(rows.len(), 16);
        assert!(rows.iter().all(|r| r.violations == 0 && r.ratio <= 1.0 && r.samples == 10_002));
    }

    #[test]
    fn line_rule_alignment() {
        assert!(line_rule(4.0 * PI, 8).is_ok());
        assert!(line_rule(3.0, 8).is_err());
        let line = line_rule(4.0 * PI, 4).unwrap();
        let (grid, idx) = torus_subgrid(&line, 0.5).unwrap();
        assert_eq!(grid.nodes_per_axis(), 16);
        assert_eq!(idx.len(), 16);
        assert!(torus_subgrid(&line_rule(4.0 * PI, 4).unwrap(), 0.3).is_err());
    }

    #[test]
    fn lemma2_trivial_kernels() {
        // B ≡ 1 and the order-2 plus factor, k = 0: L and l coincide on ħT²
        let problem = arctan_problem();
        let tail = line_rule(64.0 * PI, 8).unwrap();
        let (grid, _) = torus_subgrid(&tail, 1.0).unwrap();
        let r = lemma2_gaps(&problem, &grid, &tail, 0, 0).unwrap();
        assert_eq!(r.l, 0.0);
        assert_eq!(r.m, 0.0);
        assert!(r.r > 0.0 && r.r.is_finite());
    }

    #[test]
    fn lemma2_first_power_ratio_bounded_by_lemma1_constant() {
        // n = 2 model with unit boundary symbols: |L_01 - l_01| = |A^{-1}| |iξ1 - ζ1|
        let problem = ContinuousProblem::bessel_model(5.0, 5.0, 3.0, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        let tail = line_rule(32.0 * PI, 4).unwrap();
        let (grid, _) = torus_subgrid(&tail, 0.5).unwrap();
        let r = lemma2_gaps(&problem, &grid, &tail, 0, 1).unwrap();
        assert!(r.l > 0.0 && r.l <= PI.exp());
        assert!(r.m > 0.0 && r.m <= PI.exp());
    }

    #[test]
    fn lemma2_r_ratio_matches_dense_oracle() {
        // A = (1+|ξ|²)^{3/2}, B ≡ 1, k = 0: tail ratio stable under refinement and
        // against an oracle with 4x the nodes
        let problem = ContinuousProblem::bessel_model(3.0, 3.0, 2.25, &[0.0], &[0.0]).unwrap();
        let coarse = {
            let tail = line_rule(64.0 * PI, 8).unwrap();
            let (grid, _) = torus_subgrid(&tail, 0.5).unwrap();
            lemma2_gaps(&problem, &grid, &tail, 0, 0).unwrap().r
        };
        let dense = {
            let tail = line_rule(64.0 * PI, 32).unwrap();
            let (grid, _) = torus_subgrid(&tail, 0.5).unwrap();
            lemma2_gaps(&problem, &grid, &tail, 0, 0).unwrap().r
        };
        assert!(((coarse - dense) / dense).abs() < 0.02, "{coarse} vs {dense}");
        let rep = lemma2_sweep(&problem, &[1.0, 0.5, 0.25], 8, 64.0 * PI).unwrap();
        assert!(rep.growth_ok(), "{rep:?}");
    }

    #[test]
    fn lemma2_arctan_sweep() {
        let rep = lemma2_sweep(&arctan_problem(), &[1.0, 0.5, 0.25], 8, 256.0 * PI).unwrap();
        assert!(!rep.hypotheses_hold);
        assert!(rep.growth_ok(), "{rep:?}");
        for row in &rep.rows {
            assert!((row.ratios.r - 0.6).abs() < 0.1, "{row:?}");
        }
    }

    #[test]
    fn lemma2_rejects_divergent_tails() {
        let problem = ContinuousProblem::new(
            -1.0,
            0.0 + 1.0,
            ContinuousSymbol::bessel(1.0),
            ContinuousSymbol::one(),
            vec![ContinuousSymbol::bessel(1.0), ContinuousSymbol::one()],
            vec![ContinuousSymbol::one(), ContinuousSymbol::one()],
        )
        .unwrap();
        let tail = line_rule(8.0 * PI, 4).unwrap();
        let (grid, _) = torus_subgrid(&tail, 1.0).unwrap();
        assert!(lemma2_gaps(&problem, &grid, &tail, 0, 0).is_err());
    }

    #[test]
    fn operator_norm_examples() {
        assert_eq!(estimate_operator_norm(&WeightedOperatorFrame::euclidean(DMatrix::zeros(4, 4))).unwrap(), 0.0);
        let id = DMatrix::<Complex64>::identity(6, 6);
        let n = estimate_operator_norm(&WeightedOperatorFrame::euclidean(id)).unwrap();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for size in [5usize, 50, 120, 200] {
            let m = DMatrix::from_fn(size, size, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let p = power_iteration_norm(&m, POWER_TOLERANCE, POWER_MAX_ITERATIONS).unwrap();
            let s = svd_norm(&m);
            assert!(((p - s) / s).abs() < 1e-6, "size {size}: {p} vs {s}");
        }
    }

    #[test]
    fn power_iteration_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DMatrix::from_fn(30, 30, |_, _| Complex64::new(rng.random_range(-1.0..1.0), 0.0));
        assert!(matches!(power_iteration_norm(&m, 1e-30, 3), Err(Error::NotConverged { iterations: 3, .. })));
    }

    #[test]
    fn weighted_diagonal_block() {
        // D_out = D_in: the weighted norm of a diagonal block is its max modulus
        let rule = QuadratureRule::midpoint(1.0, 4).unwrap();
        let mut f = WeightedOperatorFrame::new(rule, vec![2.0; 4], vec![0.5], vec![0.5]).unwrap();
        f.push(0, 0, FrameBlock::Diagonal(vec![c(1.0, 0.0), c(0.0, -3.0), c(2.0, 0.0), ZERO])).unwrap();
        assert!((estimate_operator_norm(&f).unwrap() - 3.0).abs() < 1e-14);
        // output exponent one higher scales by sqrt(base)
        let rule = QuadratureRule::midpoint(1.0, 2).unwrap();
        let mut f = WeightedOperatorFrame::new(rule, vec![4.0, 4.0], vec![0.0], vec![1.0]).unwrap();
        f.push(0, 0, FrameBlock::Diagonal(vec![c(1.0, 0.0), c(1.0, 0.0)])).unwrap();
        assert!((estimate_operator_norm(&f).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn sum_norm_combines_blocks_per_input() {
        let rule = QuadratureRule { nodes: vec![0.0; 2], weights: vec![1.0; 2] };
        let mut f = WeightedOperatorFrame::new(rule, vec![1.0; 2], vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let id = DMatrix::<Complex64>::identity(2, 2);
        f.push(0, 0, FrameBlock::Dense(id.clone() * c(2.0, 0.0))).unwrap();
        f.push(1, 0, FrameBlock::Dense(id.clone())).unwrap();
        f.push(1, 1, FrameBlock::Dense(id * c(2.5, 0.0))).unwrap();
        assert!((estimate_operator_norm(&f).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_examples() {
        let h = [1.0, 0.5, 0.25, 0.125];
        let lin: Vec<f64> = h.iter().map(|x| 3.0 * x).collect();
        assert!((fit_rate(&h, &lin).unwrap() - 1.0).abs() < 1e-12);
        let quad: Vec<f64> = h.iter().map(|x| 0.7 * x * x).collect();
        assert!((fit_rate(&h, &quad).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_rate(&h, &[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(fit_rate(&h[..2], &lin[..2]).is_err());
    }

    #[test]
    fn fit_rate_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = [1.0f64, 0.5, 0.25, 0.125, 0.0625];
        for _ in 0..50 {
            let norms: Vec<f64> = h
                .iter()
                .map(|x| 2.0 * x.powf(1.25) * (1.0 + rng.random_range(-0.05..0.05)))
                .collect();
            assert!((fit_rate(&h, &norms).unwrap() - 1.25).abs() <= 0.1);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let line = line_rule(4.0 * PI, 4).unwrap();
        let chi: Vec<bool> = line.nodes.iter().map(|x| x.abs() < PI / 0.5).collect();
        let sq: Vec<bool> = chi.iter().map(|&a| a && a).collect();
        assert_eq!(chi, sq);
    }

    #[test]
    fn commutator_of_zero_kernels_is_degenerate() {
        let zero = || ContinuousSymbol::new(0.0, "zero", |_| Complex64::new(0.0, 0.0));
        let problem = ContinuousProblem::new(
            2.25,
            3.0,
            ContinuousSymbol::bessel(3.0),
            ContinuousSymbol::one(),
            vec![zero()],
            vec![zero()],
        )
        .unwrap();
        let rep = theorem3_commutator(&problem, &[1.0, 0.5, 0.25], 4.0 * 4.0 * PI, 4).unwrap();
        assert!(rep.norms.iter().all(|&v| v == 0.0));
        assert!(rep.degenerate && rep.slope.is_none());
    }

    #[test]
    fn theorem3_rejects_bad_inputs() {
        let problem = ContinuousProblem::bessel_model(3.0, 3.0, 2.25, &[0.0], &[0.0]).unwrap();
        // Λ smaller than π/h for the finest mesh
        assert!(matches!(
            theorem3_commutator(&problem, &[1.0, 0.5, 0.25], 2.0 * PI, 4),
            Err(Error::InvalidConfiguration(_))
        ));
        assert!(theorem3_commutator(&problem, &[0.5, 1.0, 0.25], 16.0 * PI, 4).is_err());
        let weak = ContinuousProblem::bessel_model(2.0, 2.0, 1.0, &[0.0], &[0.0]).unwrap();
        assert!(theorem3_commutator(&weak, &[1.0, 0.5, 0.25], 16.0 * PI, 4).is_err());
    }

    #[test]
    fn arctan_gap_is_the_truncated_tail() {
        // A = 1 + |ξ|², unit boundary symbols, k = 0: L = l on ħT², so only the
        // multiplier tails ∫_{πħ < |η| < Λ} (1 + ξ² + η²)^{-1} dη remain
        let problem = arctan_problem();
        let lambda = 64.0 * PI;
        let m0 = 16;
        let line = line_rule(lambda, m0).unwrap();
        let h = 0.5;
        let (grid, big, small) = restricted_pair(&problem, &line, h).unwrap();
        let diff = big.sub(&small).unwrap();
        assert!(diff.l[0].iter().all(|v| v.norm() < 1e-15));
        for (i, &x) in grid.axis_nodes().iter().enumerate() {
            let rho = (1.0 + x * x).sqrt();
            let tail = 2.0 * ((lambda / rho).atan() - (PI / h / rho).atan()) / rho;
            assert!((diff.r[0][i].re - tail).abs() < 1e-4 * tail, "{} vs {tail}", diff.r[0][i].re);
        }
        // closed form at ξ1 = 0 for the untruncated line: 2(π/2 - arctan(πħ))
        let closed = 2.0 * (PI / 2.0 - (PI / h).atan());
        let finite = 2.0 * (lambda.atan() - (PI / h).atan());
        assert!((closed - finite).abs() < 2.0 / lambda);
    }

    #[test]
    fn periodic_kernels_give_zero_gap() {
        // identical kernels on both sides: comparing a discrete system to itself
        let problem = ContinuousProblem::bessel_model(3.0, 3.0, 2.25, &[0.0], &[0.0]).unwrap();
        let line = line_rule(8.0 * PI, 4).unwrap();
        let (_, _, small) = restricted_pair(&problem, &line, 1.0).unwrap();
        let d = small.sub(&small).unwrap();
        assert!(d.r.iter().chain(&d.p).flatten().all(|v| *v == ZERO));
    }

    #[test]
    fn theorem4_requires_hypotheses() {
        let problem = ContinuousProblem::bessel_model(3.0, 3.0, 2.25, &[0.0], &[0.0]).unwrap();
        assert!(theorem4_gap(&problem, &[1.0, 0.5, 0.25], 16.0 * PI, 4).is_err());
    }

    #[test]
    fn rate_report_flags() {
        let r = RateReport::build(vec![1.0, 0.5, 0.25], vec![1.0, 1.2, 0.3], vec![1; 3], 1.0);
        assert!(!r.monotone() && r.monotone_tolerant());
        let r = RateReport::build(vec![1.0, 0.5, 0.25], vec![1.0, 0.5, 0.6], vec![1; 3], 1.0);
        assert!(!r.monotone_tolerant());
    }
}
