//! Reduction of the quadrant boundary value problem to a `2n × 2n` system of
//! integral equations, its Nyström discretization and solution, and solution
//! reconstruction from boundary traces.
//!
//! Unknowns are the traces `c_k(ξ₁)`, `d_k(ξ₂)`, `k < n`. The map from traces to
//! the solution spectrum
//!
//! ```text
//! ũ(ξ) = A_plus(ξ)^{-1} Σ_k ( c_k(ξ₁) φ(ξ₂)^k + d_k(ξ₂) φ(ξ₁)^k )
//! ```
//!
//! (`φ = ζ` on the lattice, `φ = iξ` in the continuous case) annihilates the
//! `n²`-dimensional family `c_k = Σ_l a_kl φ^l`, `d_l = -Σ_k a_kl φ^k`, so the
//! system always has that kernel. The solver removes it with the gauge
//! `⟨d_l, φ^m⟩ = 0` for `l, m < n`, appended as extra rows of a least-squares
//! problem. [`canonical_traces`] maps any trace vector to its gauge representative
//! without changing `ũ`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_mesh, Error, Result};
use crate::lattice::{
    discrete_fourier_1d, sobolev_norm_2d, weighted_norm_1d, zeta, zeta_weight_1d, FrequencyGrid,
    IndexBox, QuadratureRule, SpectralFunction,
};
use crate::operators::{apply_multiplier, boundary_trace_spectrum, BoundaryOperatorSpec, TraceSide};
use crate::symbols::{periodize, ContinuousSymbol, WaveFactorization};

/// Condition estimate above which a system is reported as not uniquely solvable.
pub const NEAR_SINGULAR_THRESHOLD: f64 = 1e12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// The powers multiplying the traces: `ζ(ξ)^k` on the lattice, `(iξ)^k` in the
/// continuous problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Monomial {
    Zeta { h: f64 },
    ImagXi,
}

impl Monomial {
    pub fn base(&self, xi: f64) -> Complex64 {
        match *self {
            Monomial::Zeta { h } => zeta(xi, h),
            Monomial::ImagXi => Complex64::new(0.0, xi),
        }
    }

    pub fn eval(&self, xi: f64, k: usize) -> Complex64 {
        self.base(xi).powu(k as u32)
    }
}

/// Splits `æ - s` into `n + δ` with `n ≥ 1` and `|δ| < 1/2`.
pub fn split_index(index: f64, s: f64) -> Result<(usize, f64)> {
    let diff = index - s;
    let n = diff.round();
    let delta = diff - n;
    if !(n >= 1.0 && delta.abs() < 0.5) {
        return Err(Error::InvalidInput(format!(
            "index - s = {diff} must equal n + delta with n >= 1 and |delta| < 1/2"
        )));
    }
    Ok((n as usize, delta))
}

/// Trace exponent `s_k = s - æ + k - 1/2`.
pub fn trace_exponent(s: f64, index: f64, k: usize) -> f64 {
    s - index + k as f64 - 0.5
}

/// The discrete boundary value problem without boundary data.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub s: f64,
    pub factorization: WaveFactorization,
    pub n: usize,
    pub delta: f64,
    pub b_ops: Vec<BoundaryOperatorSpec>,
    pub g_ops: Vec<BoundaryOperatorSpec>,
}

impl ProblemSpec {
    pub fn new(
        s: f64,
        factorization: WaveFactorization,
        b_ops: Vec<BoundaryOperatorSpec>,
        g_ops: Vec<BoundaryOperatorSpec>,
    ) -> Result<Self> {
        let (n, delta) = split_index(factorization.index, s)?;
        if b_ops.len() != n || g_ops.len() != n {
            return Err(Error::InvalidInput(format!(
                "need {n} horizontal and {n} vertical boundary operators, got {} and {}",
                b_ops.len(),
                g_ops.len()
            )));
        }
        let h = factorization.h();
        for op in b_ops.iter().chain(&g_ops) {
            op.validate()?;
            check_mesh(h, op.symbol.h())?;
        }
        if b_ops.iter().any(|op| op.side != TraceSide::Horizontal)
            || g_ops.iter().any(|op| op.side != TraceSide::Vertical)
        {
            return Err(Error::InvalidInput(
                "B-type operators must be horizontal traces and G-type operators vertical".into(),
            ));
        }
        check_mesh(h, factorization.minus.h())?;
        Ok(Self { s, factorization, n, delta, b_ops, g_ops })
    }

    pub fn h(&self) -> f64 {
        self.factorization.h()
    }

    pub fn index(&self) -> f64 {
        self.factorization.index
    }

    pub fn trace_exponent(&self, k: usize) -> f64 {
        trace_exponent(self.s, self.index(), k)
    }

    pub fn monomial(&self) -> Monomial {
        Monomial::Zeta { h: self.h() }
    }
}

/// Fourier images `b̃_j(ξ₁)`, `g̃_j(ξ₂)` of the boundary data on `ħT`.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub b: Vec<SpectralFunction>,
    pub g: Vec<SpectralFunction>,
}

impl BoundaryData {
    /// Builds the data from lattice values on the half-lines `x = 0, h, 2h, …`,
    /// scaled by `2π` to match the unnormalized trace integrals.
    pub fn from_lattice(
        b: &[Vec<Complex64>],
        g: &[Vec<Complex64>],
        grid: &FrequencyGrid,
    ) -> Result<Self> {
        let h = grid.h();
        let lift = |vals: &Vec<Complex64>| -> Result<SpectralFunction> {
            let mut f = discrete_fourier_1d(vals, 0, h, grid)?;
            f.values_mut().iter_mut().for_each(|v| *v *= 2.0 * PI);
            Ok(f)
        };
        Ok(Self {
            b: b.iter().map(lift).collect::<Result<_>>()?,
            g: g.iter().map(lift).collect::<Result<_>>()?,
        })
    }

    /// Checks counts, grids and that each datum has a finite trace-space norm
    /// with exponent `s - β_j - 1/2` (resp. `s - γ_j - 1/2`).
    pub fn validate(&self, spec: &ProblemSpec, grid: &FrequencyGrid) -> Result<()> {
        if self.b.len() != spec.n || self.g.len() != spec.n {
            return Err(Error::InvalidInput(format!(
                "need {} horizontal and {} vertical data, got {} and {}",
                spec.n,
                spec.n,
                self.b.len(),
                self.g.len()
            )));
        }
        let axis = grid.axis();
        for (f, op) in self.b.iter().zip(&spec.b_ops).chain(self.g.iter().zip(&spec.g_ops)) {
            if f.grid() != &axis {
                return Err(Error::ShapeMismatch("boundary data must live on the grid axis".into()));
            }
            let norm = crate::lattice::sobolev_norm_1d(f, spec.s - op.order - 0.5)?;
            if !norm.is_finite() {
                return Err(Error::InvalidInput("boundary data has infinite trace norm".into()));
            }
        }
        Ok(())
    }
}

/// The continuous counterpart: symbols on `R²` with a wave factorization.
#[derive(Debug, Clone)]
pub struct ContinuousProblem {
    pub s: f64,
    pub index: f64,
    pub n: usize,
    pub delta: f64,
    pub plus: ContinuousSymbol,
    pub minus: ContinuousSymbol,
    pub b: Vec<ContinuousSymbol>,
    pub g: Vec<ContinuousSymbol>,
}

impl ContinuousProblem {
    pub fn new(
        s: f64,
        index: f64,
        plus: ContinuousSymbol,
        minus: ContinuousSymbol,
        b: Vec<ContinuousSymbol>,
        g: Vec<ContinuousSymbol>,
    ) -> Result<Self> {
        let (n, delta) = split_index(index, s)?;
        if b.len() != n || g.len() != n {
            return Err(Error::InvalidInput(format!(
                "need {n} symbols of each boundary type, got {} and {}",
                b.len(),
                g.len()
            )));
        }
        if (plus.order() - index).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "plus factor order {} differs from the index {index}",
                plus.order()
            )));
        }
        Ok(Self { s, index, n, delta, plus, minus, b, g })
    }

    /// Bessel-potential model problem: `A_plus = (1+|ξ|²)^{æ/2}`,
    /// `A_minus = (1+|ξ|²)^{(α-æ)/2}`, boundary symbols `(1+|ξ|²)^{β_j/2}`, `(1+|ξ|²)^{γ_j/2}`.
    pub fn bessel_model(alpha: f64, index: f64, s: f64, beta: &[f64], gamma: &[f64]) -> Result<Self> {
        Self::new(
            s,
            index,
            ContinuousSymbol::bessel(index),
            ContinuousSymbol::bessel(alpha - index),
            beta.iter().map(|&b| ContinuousSymbol::bessel(b)).collect(),
            gamma.iter().map(|&g| ContinuousSymbol::bessel(g)).collect(),
        )
    }

    pub fn beta(&self) -> Vec<f64> {
        self.b.iter().map(|b| b.order()).collect()
    }

    pub fn gamma(&self) -> Vec<f64> {
        self.g.iter().map(|g| g.order()).collect()
    }

    pub fn trace_exponent(&self, k: usize) -> f64 {
        trace_exponent(self.s, self.index, k)
    }

    /// The matching discrete problem: every symbol restricted to `ħT²` and
    /// continued periodically.
    pub fn discretize(&self, h: f64) -> Result<ProblemSpec> {
        let factorization = WaveFactorization {
            plus: periodize(&self.plus, h),
            minus: periodize(&self.minus, h),
            index: self.index,
        };
        let b_ops = self
            .b
            .iter()
            .map(|b| BoundaryOperatorSpec::new(TraceSide::Horizontal, periodize(b, h)))
            .collect();
        let g_ops = self
            .g
            .iter()
            .map(|g| BoundaryOperatorSpec::new(TraceSide::Vertical, periodize(g, h)))
            .collect();
        ProblemSpec::new(self.s, factorization, b_ops, g_ops)
    }
}

/// Nyström discretization of the block system
///
/// ```text
/// Σ_k r_jk(ξ₁) c_k(ξ₁) + ∫ l_jk(ξ₁, ξ₂) d_k(ξ₂) dξ₂ = b_j(ξ₁)
/// Σ_k ∫ m_jk(ξ₁, ξ₂) c_k(ξ₁) dξ₁ + p_jk(ξ₂) d_k(ξ₂) = g_j(ξ₂)
/// ```
///
/// Blocks are stored per `(j, k)` at flat index `j * n + k`. `l` and `m` carry the
/// quadrature weight of the integration variable; `m` is stored with the output
/// node `ξ₂` as its row.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub n: usize,
    pub rule: QuadratureRule,
    pub monomial: Monomial,
    pub r: Vec<Vec<Complex64>>,
    pub p: Vec<Vec<Complex64>>,
    pub l: Vec<DMatrix<Complex64>>,
    pub m: Vec<DMatrix<Complex64>>,
    pub rhs: Vec<Complex64>,
}

/// Evaluators feeding the kernel assembly.
pub(crate) struct KernelSource<'a> {
    pub n: usize,
    pub plus: &'a (dyn Fn([f64; 2]) -> Complex64 + Sync),
    pub b: Vec<&'a (dyn Fn([f64; 2]) -> Complex64 + Sync)>,
    pub g: Vec<&'a (dyn Fn([f64; 2]) -> Complex64 + Sync)>,
    pub monomial: Monomial,
}

fn inverse_factor(plus: &dyn Fn([f64; 2]) -> Complex64, xi: [f64; 2]) -> Result<Complex64> {
    let v = plus(xi);
    let inv = v.inv();
    if v.norm() == 0.0 || !inv.re.is_finite() || !inv.im.is_finite() {
        return Err(Error::VanishingFactor { xi1: xi[0], xi2: xi[1] });
    }
    Ok(inv)
}

impl KernelSource<'_> {
    /// Multiplier blocks `r_jk` (integrating over `ξ₂`) and `p_jk` (over `ξ₁`)
    /// at each node of `outer`, with integrals taken by `integral`.
    pub fn multipliers(
        &self,
        outer: &[f64],
        integral: &QuadratureRule,
    ) -> Result<(Vec<Vec<Complex64>>, Vec<Vec<Complex64>>)> {
        let n = self.n;
        let pow: Vec<Vec<Complex64>> = (0..n)
            .map(|k| integral.nodes.iter().map(|&x| self.monomial.eval(x, k)).collect())
            .collect();
        let mut r = vec![vec![ZERO; outer.len()]; n * n];
        let mut p = vec![vec![ZERO; outer.len()]; n * n];
        for (i, &x) in outer.iter().enumerate() {
            for (q, (&y, &w)) in integral.nodes.iter().zip(&integral.weights).enumerate() {
                let hor = [x, y];
                let ver = [y, x];
                let inv_h = inverse_factor(self.plus, hor)? * w;
                let inv_v = inverse_factor(self.plus, ver)? * w;
                for j in 0..n {
                    let bv = (self.b[j])(hor) * inv_h;
                    let gv = (self.g[j])(ver) * inv_v;
                    for k in 0..n {
                        r[j * n + k][i] += bv * pow[k][q];
                        p[j * n + k][i] += gv * pow[k][q];
                    }
                }
            }
        }
        Ok((r, p))
    }

    /// Integral-operator blocks on `rule × rule` with weights folded in.
    pub fn integral_blocks(
        &self,
        rule: &QuadratureRule,
    ) -> Result<(Vec<DMatrix<Complex64>>, Vec<DMatrix<Complex64>>)> {
        let n = self.n;
        let len = rule.len();
        let pow: Vec<Vec<Complex64>> = (0..n)
            .map(|k| rule.nodes.iter().map(|&x| self.monomial.eval(x, k)).collect())
            .collect();
        let mut l = vec![DMatrix::from_element(len, len, ZERO); n * n];
        let mut m = vec![DMatrix::from_element(len, len, ZERO); n * n];
        for i1 in 0..len {
            for i2 in 0..len {
                let xi = [rule.nodes[i1], rule.nodes[i2]];
                let inv = inverse_factor(self.plus, xi)?;
                for j in 0..n {
                    let bv = (self.b[j])(xi) * inv * rule.weights[i2];
                    let gv = (self.g[j])(xi) * inv * rule.weights[i1];
                    for k in 0..n {
                        l[j * n + k][(i1, i2)] = bv * pow[k][i1];
                        m[j * n + k][(i2, i1)] = gv * pow[k][i2];
                    }
                }
            }
        }
        Ok((l, m))
    }
}

impl BlockSystem {
    pub fn unknowns(&self) -> usize {
        2 * self.n * self.rule.len()
    }

    /// The dense `2nN × 2nN` Nyström matrix.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let n = self.n;
        let len = self.rule.len();
        let mut a = DMatrix::from_element(2 * n * len, 2 * n * len, ZERO);
        for j in 0..n {
            for k in 0..n {
                let idx = j * n + k;
                let (brow, grow) = (j * len, (n + j) * len);
                let (ccol, dcol) = (k * len, (n + k) * len);
                for i in 0..len {
                    a[(brow + i, ccol + i)] = self.r[idx][i];
                    a[(grow + i, dcol + i)] = self.p[idx][i];
                }
                a.view_mut((brow, dcol), (len, len)).copy_from(&self.l[idx]);
                a.view_mut((grow, ccol), (len, len)).copy_from(&self.m[idx]);
            }
        }
        a
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let a = self.matrix();
        (a * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    /// Rows `⟨d_l, φ^m⟩ = Σ_i w_i d_l(ξ_i) conj(φ(ξ_i))^m` fixing the trace kernel.
    pub fn gauge_rows(&self) -> Vec<(usize, Vec<Complex64>)> {
        let mut rows = Vec::with_capacity(self.n * self.n);
        for l in 0..self.n {
            for m in 0..self.n {
                let row = self
                    .rule
                    .nodes
                    .iter()
                    .zip(&self.rule.weights)
                    .map(|(&x, &w)| self.monomial.eval(x, m).conj() * w)
                    .collect();
                rows.push((l, row));
            }
        }
        rows
    }
}

fn discrete_source<'a>(
    spec: &'a ProblemSpec,
    b: &'a [Box<dyn Fn([f64; 2]) -> Complex64 + Sync + 'a>],
    g: &'a [Box<dyn Fn([f64; 2]) -> Complex64 + Sync + 'a>],
    plus: &'a (dyn Fn([f64; 2]) -> Complex64 + Sync),
) -> KernelSource<'a> {
    KernelSource {
        n: spec.n,
        plus,
        b: b.iter().map(|f| f.as_ref()).collect(),
        g: g.iter().map(|f| f.as_ref()).collect(),
        monomial: spec.monomial(),
    }
}

pub(crate) type BoxedEval<'a> = Box<dyn Fn([f64; 2]) -> Complex64 + Sync + 'a>;

pub(crate) fn periodic_evals(ops: &[BoundaryOperatorSpec]) -> Vec<BoxedEval<'_>> {
    ops.iter()
        .map(|op| Box::new(move |xi: [f64; 2]| op.symbol.eval(xi)) as BoxedEval<'_>)
        .collect()
}

pub(crate) fn continuous_evals(symbols: &[ContinuousSymbol]) -> Vec<BoxedEval<'_>> {
    symbols
        .iter()
        .map(|s| Box::new(move |xi: [f64; 2]| s.eval(xi)) as BoxedEval<'_>)
        .collect()
}

/// Nyström operator of the discrete system on `ħT` with a zero right-hand side.
pub fn assemble_discrete_operator(spec: &ProblemSpec, grid: &FrequencyGrid) -> Result<BlockSystem> {
    check_mesh(spec.h(), grid.h())?;
    let rule = grid.rule();
    let b = periodic_evals(&spec.b_ops);
    let g = periodic_evals(&spec.g_ops);
    let plus = |xi: [f64; 2]| spec.factorization.plus.eval(xi);
    let src = discrete_source(spec, &b, &g, &plus);
    let (r, p) = src.multipliers(&rule.nodes, &rule)?;
    let (l, m) = src.integral_blocks(&rule)?;
    let rhs = vec![ZERO; 2 * spec.n * rule.len()];
    Ok(BlockSystem { n: spec.n, rule, monomial: spec.monomial(), r, p, l, m, rhs })
}

/// Discrete system with the boundary data as right-hand side.
pub fn assemble_discrete_system(
    spec: &ProblemSpec,
    data: &BoundaryData,
    grid: &FrequencyGrid,
) -> Result<BlockSystem> {
    data.validate(spec, grid)?;
    let mut sys = assemble_discrete_operator(spec, grid)?;
    sys.rhs = data
        .b
        .iter()
        .chain(&data.g)
        .flat_map(|f| f.values().iter().copied())
        .collect();
    Ok(sys)
}

/// Continuous system on the truncated line `rule ⊂ [-Λ, Λ]`; improper integrals
/// are replaced by the rule.
pub fn assemble_continuous_system(
    problem: &ContinuousProblem,
    rule: &QuadratureRule,
    rhs: Option<Vec<Complex64>>,
) -> Result<BlockSystem> {
    let b = continuous_evals(&problem.b);
    let g = continuous_evals(&problem.g);
    let plus = |xi: [f64; 2]| problem.plus.eval(xi);
    let src = KernelSource {
        n: problem.n,
        plus: &plus,
        b: b.iter().map(|f| f.as_ref()).collect(),
        g: g.iter().map(|f| f.as_ref()).collect(),
        monomial: Monomial::ImagXi,
    };
    let (r, p) = src.multipliers(&rule.nodes, rule)?;
    let (l, m) = src.integral_blocks(rule)?;
    let size = 2 * problem.n * rule.len();
    let rhs = match rhs {
        Some(v) if v.len() != size => {
            return Err(Error::ShapeMismatch(format!(
                "right-hand side has {} entries, system has {size} equations",
                v.len()
            )))
        }
        Some(v) => v,
        None => vec![ZERO; size],
    };
    Ok(BlockSystem { n: problem.n, rule: rule.clone(), monomial: Monomial::ImagXi, r, p, l, m, rhs })
}

/// Traces `c_k`, `d_k` sampled at the nodes of a quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceVector {
    pub c: Vec<Vec<Complex64>>,
    pub d: Vec<Vec<Complex64>>,
}

impl TraceVector {
    pub fn zeros(n: usize, len: usize) -> Self {
        Self { c: vec![vec![ZERO; len]; n], d: vec![vec![ZERO; len]; n] }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn flatten(&self) -> Vec<Complex64> {
        self.c.iter().chain(&self.d).flat_map(|v| v.iter().copied()).collect()
    }

    pub fn from_flat(n: usize, len: usize, flat: &[Complex64]) -> Self {
        let chunk = |b: usize| flat[b * len..(b + 1) * len].to_vec();
        Self { c: (0..n).map(chunk).collect(), d: (n..2 * n).map(chunk).collect() }
    }

    pub fn sub(&self, other: &TraceVector) -> TraceVector {
        let diff = |a: &Vec<Vec<Complex64>>, b: &Vec<Vec<Complex64>>| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
                .collect()
        };
        TraceVector { c: diff(&self.c, &other.c), d: diff(&self.d, &other.d) }
    }

    /// Component norms `[c_k]_{s_k}` then `[d_k]_{s_k}` on a lattice grid.
    pub fn component_norms(&self, grid: &FrequencyGrid, exponents: &[f64]) -> Vec<f64> {
        let rule = grid.rule();
        let h = grid.h();
        self.c
            .iter()
            .zip(exponents)
            .chain(self.d.iter().zip(exponents))
            .map(|(v, &s)| weighted_norm_1d(v, &rule, |x| zeta_weight_1d(x, h), s))
            .collect()
    }

    /// `Σ_k ([c_k]_{s_k} + [d_k]_{s_k})`.
    pub fn trace_norm(&self, grid: &FrequencyGrid, exponents: &[f64]) -> f64 {
        self.component_norms(grid, exponents).iter().sum()
    }

    pub fn to_spectral(&self, grid: &FrequencyGrid) -> Result<(Vec<SpectralFunction>, Vec<SpectralFunction>)> {
        let axis = grid.axis();
        let lift = |v: &Vec<Complex64>| SpectralFunction::new(axis.clone(), v.clone());
        Ok((
            self.c.iter().map(lift).collect::<Result<_>>()?,
            self.d.iter().map(lift).collect::<Result<_>>()?,
        ))
    }
}

/// Dense solve result.
#[derive(Debug, Clone)]
pub struct Solution {
    pub traces: TraceVector,
    /// 1-norm condition estimate of the gauge-augmented system.
    pub condition: f64,
    /// `‖A x - rhs‖ / ‖rhs‖` (absolute when the right-hand side vanishes).
    pub residual: f64,
}

/// Hager–Higham estimate of `‖R^{-1}‖₁` for an upper-triangular `R`.
fn inverse_norm1_estimate(r: &DMatrix<Complex64>) -> Option<f64> {
    let n = r.nrows();
    if n == 0 {
        return Some(0.0);
    }
    let one = Complex64::new(1.0, 0.0);
    let norm1 = |v: &DVector<Complex64>| v.iter().map(|z| z.norm()).sum::<f64>();
    let mut x = DVector::from_element(n, one / n as f64);
    let mut est = 0.0;
    for iter in 0..5 {
        let y = r.solve_upper_triangular(&x)?;
        let ny = norm1(&y);
        if iter > 0 && ny <= est {
            break;
        }
        est = ny;
        let sign = y.map(|z| if z.norm() == 0.0 { one } else { z / z.norm() });
        let z = r.ad_solve_upper_triangular(&sign)?;
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .fold((0, -1.0), |acc, it| if it.1 > acc.1 { it } else { acc });
        let zx = z.dotc(&x).re;
        if iter > 0 && zmax <= zx {
            break;
        }
        x = DVector::from_element(n, ZERO);
        x[jmax] = one;
    }
    // alternating test vector guards against the estimate stalling
    let alt = DVector::from_fn(n, |i, _| {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        Complex64::new(sign * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
    });
    let y = r.solve_upper_triangular(&alt)?;
    let alt_est = 2.0 * norm1(&y) / (3.0 * n as f64);
    Some(est.max(alt_est))
}

fn matrix_norm1(a: &DMatrix<Complex64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves the gauge-augmented Nyström system by Householder least squares and
/// reports a condition estimate.
pub fn solve_block_system(sys: &BlockSystem) -> Result<Solution> {
    let a = sys.matrix();
    let size = a.ncols();
    let len = sys.rule.len();
    let gauge = sys.gauge_rows();
    let row_scale = a.norm() / (size as f64).sqrt();
    let mut stacked = DMatrix::from_element(size + gauge.len(), size, ZERO);
    stacked.view_mut((0, 0), (size, size)).copy_from(&a);
    for (row, (block, entries)) in gauge.iter().enumerate() {
        let norm = entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { row_scale / norm } else { 0.0 };
        let col0 = (sys.n + block) * len;
        for (i, v) in entries.iter().enumerate() {
            stacked[(size + row, col0 + i)] = v * scale;
        }
    }
    let mut rhs = DVector::from_element(size + gauge.len(), ZERO);
    rhs.rows_mut(0, size).copy_from_slice(&sys.rhs);

    let qr = stacked.qr();
    let r = qr.r();
    let singular = Error::NearSingular { condition: f64::INFINITY, threshold: NEAR_SINGULAR_THRESHOLD };
    if r.diagonal().iter().any(|d| d.norm() == 0.0) {
        return Err(singular);
    }
    let condition = match inverse_norm1_estimate(&r) {
        Some(inv) => matrix_norm1(&r) * inv,
        None => return Err(singular),
    };
    if !condition.is_finite() || condition > NEAR_SINGULAR_THRESHOLD {
        return Err(Error::NearSingular { condition, threshold: NEAR_SINGULAR_THRESHOLD });
    }
    let qtb = qr.q().adjoint() * rhs;
    let x = r.solve_upper_triangular(&qtb).ok_or(singular)?;

    let b = DVector::from_column_slice(&sys.rhs);
    let res = (&a * &x - &b).norm();
    let bn = b.norm();
    let residual = if bn > 0.0 { res / bn } else { res };
    Ok(Solution {
        traces: TraceVector::from_flat(sys.n, len, x.as_slice()),
        condition,
        residual,
    })
}

/// `A_plus(ξ)^{-1} Σ_k (c_k(ξ₁) φ(ξ₂)^k + d_k(ξ₂) φ(ξ₁)^k)` on `rule × rule`
/// (flat index `i1 * len + i2`).
pub fn reconstruct_on_rule(
    t: &TraceVector,
    plus: &dyn Fn([f64; 2]) -> Complex64,
    monomial: Monomial,
    rule: &QuadratureRule,
) -> Result<Vec<Complex64>> {
    let len = rule.len();
    let n = t.n();
    if t.c.iter().chain(&t.d).any(|v| v.len() != len) {
        return Err(Error::ShapeMismatch("trace length differs from the node count".into()));
    }
    let pow: Vec<Vec<Complex64>> = (0..n)
        .map(|k| rule.nodes.iter().map(|&x| monomial.eval(x, k)).collect())
        .collect();
    let mut out = Vec::with_capacity(len * len);
    for i1 in 0..len {
        for i2 in 0..len {
            let xi = [rule.nodes[i1], rule.nodes[i2]];
            let inv = inverse_factor(plus, xi)?;
            let sum: Complex64 = (0..n)
                .map(|k| t.c[k][i1] * pow[k][i2] + t.d[k][i2] * pow[k][i1])
                .sum();
            out.push(inv * sum);
        }
    }
    Ok(out)
}

/// Solution spectrum of the homogeneous discrete equation built from traces.
pub fn reconstruct_solution(
    t: &TraceVector,
    factorization: &WaveFactorization,
    grid: &FrequencyGrid,
) -> Result<SpectralFunction> {
    check_mesh(factorization.h(), grid.h())?;
    let plus = |xi: [f64; 2]| factorization.plus.eval(xi);
    let values = reconstruct_on_rule(t, &plus, Monomial::Zeta { h: grid.h() }, &grid.rule())?;
    SpectralFunction::new(grid.square(), values)
}

fn small_solve(gram: &DMatrix<Complex64>, rhs: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    gram.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::InvalidInput("monomial Gram matrix is singular".into()))
}

/// The gauge representative of `t`: moves the components of each `d_l` along
/// `φ^m`, `m < n`, into the `c` traces. The reconstructed spectrum is unchanged.
pub fn canonical_traces(t: &TraceVector, rule: &QuadratureRule, monomial: Monomial) -> Result<TraceVector> {
    let n = t.n();
    let pow: Vec<Vec<Complex64>> = (0..n)
        .map(|k| rule.nodes.iter().map(|&x| monomial.eval(x, k)).collect())
        .collect();
    let inner = |f: &[Complex64], g: &[Complex64]| -> Complex64 {
        f.iter()
            .zip(g)
            .zip(&rule.weights)
            .map(|((a, b), w)| a * b.conj() * *w)
            .sum()
    };
    // gram[(m, k)] = ⟨φ^k, φ^m⟩
    let gram = DMatrix::from_fn(n, n, |m, k| inner(&pow[k], &pow[m]));
    let mut out = t.clone();
    for l in 0..n {
        let rhs = DVector::from_fn(n, |m, _| inner(&t.d[l], &pow[m]));
        let alpha = small_solve(&gram, &rhs)?; // alpha[k] = a_{k l}
        for k in 0..n {
            for i in 0..rule.len() {
                out.d[l][i] -= alpha[k] * pow[k][i];
                out.c[k][i] += alpha[k] * pow[l][i];
            }
        }
    }
    Ok(out)
}

/// Outcome of a manufactured-solution round trip.
#[derive(Debug, Clone)]
pub struct RoundTripReport {
    pub planted: TraceVector,
    pub recovered: TraceVector,
    /// `max_component ‖recovered - planted‖_{s_k} / Σ_components ‖planted‖_{s_k}`
    /// against the gauge representative of the planted traces.
    pub rel_error: f64,
    pub condition: f64,
    pub residual: f64,
    pub solution: SpectralFunction,
}

/// Boundary data produced by a solution spectrum.
pub fn boundary_data_of(spec: &ProblemSpec, u_hat: &SpectralFunction) -> Result<BoundaryData> {
    Ok(BoundaryData {
        b: spec
            .b_ops
            .iter()
            .map(|op| boundary_trace_spectrum(op, u_hat))
            .collect::<Result<_>>()?,
        g: spec
            .g_ops
            .iter()
            .map(|op| boundary_trace_spectrum(op, u_hat))
            .collect::<Result<_>>()?,
    })
}

/// Plants traces, generates consistent boundary data, solves and compares.
pub fn manufactured_roundtrip(
    spec: &ProblemSpec,
    grid: &FrequencyGrid,
    planted: &TraceVector,
) -> Result<RoundTripReport> {
    let grid = grid.square();
    let u_hat = reconstruct_solution(planted, &spec.factorization, &grid)?;
    let data = boundary_data_of(spec, &u_hat)?;
    let sys = assemble_discrete_system(spec, &data, &grid)?;
    let sol = solve_block_system(&sys)?;
    let canonical = canonical_traces(planted, &grid.rule(), spec.monomial())?;
    let exps: Vec<f64> = (0..spec.n).map(|k| spec.trace_exponent(k)).collect();
    let scale = canonical.trace_norm(&grid, &exps);
    let errors = sol.traces.sub(&canonical).component_norms(&grid, &exps);
    let worst = errors.iter().copied().fold(0.0, f64::max);
    let rel_error = if scale > 0.0 { worst / scale } else { worst };
    Ok(RoundTripReport {
        planted: canonical,
        recovered: sol.traces,
        rel_error,
        condition: sol.condition,
        residual: sol.residual,
        solution: u_hat,
    })
}

/// Lattice window `[n, n+width)²` of interior quadrant points for an `n`-trace problem.
pub fn interior_window(n: usize, width: usize) -> IndexBox {
    let start = n as i64;
    IndexBox::new(start..start + width as i64, start..start + width as i64)
}

/// `max |A_d u|` over `window` for the full symbol of the factorization.
pub fn homogeneous_residual(
    factorization: &WaveFactorization,
    u_hat: &SpectralFunction,
    window: IndexBox,
) -> Result<f64> {
    let full = factorization.full_symbol();
    let au = apply_multiplier(&full, u_hat, window)?;
    Ok(au.values().iter().map(|v| v.norm()).fold(0.0, f64::max))
}

/// Ratio `‖u‖_s / Σ_k ([c_k]_{s_k} + [d_k]_{s_k})`, with the traces taken in
/// their gauge representative (the ones a solve returns for `u`).
pub fn a_priori_ratio(spec: &ProblemSpec, grid: &FrequencyGrid, t: &TraceVector) -> Result<f64> {
    let u_hat = reconstruct_solution(t, &spec.factorization, grid)?;
    let exps: Vec<f64> = (0..spec.n).map(|k| spec.trace_exponent(k)).collect();
    let denom = canonical_traces(t, &grid.rule(), spec.monomial())?.trace_norm(grid, &exps);
    if denom == 0.0 {
        return Err(Error::InvalidInput("a priori ratio needs nonzero traces".into()));
    }
    Ok(sobolev_norm_2d(&u_hat, spec.s)? / denom)
}

/// A sum of complex Gaussian bumps `Σ a_i exp(-(ξ - c_i)² / (2 w_i²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpProfile {
    pub bumps: Vec<(Complex64, f64, f64)>,
}

impl BumpProfile {
    pub fn eval(&self, xi: f64) -> Complex64 {
        self.bumps
            .iter()
            .map(|&(a, c, w)| a * (-(xi - c).powi(2) / (2.0 * w * w)).exp())
            .sum()
    }

    pub fn sample(&self, nodes: &[f64]) -> Vec<Complex64> {
        nodes.iter().map(|&x| self.eval(x)).collect()
    }
}

/// Seeded smooth traces: `n` profiles for `c` and `n` for `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceProfiles {
    pub c: Vec<BumpProfile>,
    pub d: Vec<BumpProfile>,
}

impl TraceProfiles {
    /// Three bumps per component with centers in `(-0.8 r, 0.8 r)`, widths in
    /// `[0.15 r, 0.4 r]` and complex amplitudes of modulus at most one, where
    /// `r = half_width` (pass the smallest half-period of a sweep).
    pub fn random(seed: u64, n: usize, half_width: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut profile = || BumpProfile {
            bumps: (0..3)
                .map(|_| {
                    let amp = Complex64::from_polar(
                        rng.random_range(0.2..1.0),
                        rng.random_range(-PI..PI),
                    );
                    let center = rng.random_range(-0.8..0.8) * half_width;
                    let width = rng.random_range(0.15..0.4) * half_width;
                    (amp, center, width)
                })
                .collect(),
        };
        let c = (0..n).map(|_| profile()).collect();
        let d = (0..n).map(|_| profile()).collect();
        Self { c, d }
    }

    pub fn sample(&self, nodes: &[f64]) -> TraceVector {
        TraceVector {
            c: self.c.iter().map(|p| p.sample(nodes)).collect(),
            d: self.d.iter().map(|p| p.sample(nodes)).collect(),
        }
    }
}
