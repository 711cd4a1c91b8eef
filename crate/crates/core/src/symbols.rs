//! Periodic and continuous symbols, periodization, the `E_α` class check and
//! periodic wave factorizations (with two built-in analytic families).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{zeta_complex, zeta_weight, zeta_weight_complex, FrequencyGrid};

type RealEval = Arc<dyn Fn([f64; 2]) -> Complex64 + Send + Sync>;
type ComplexEval = Arc<dyn Fn([Complex64; 2]) -> Complex64 + Send + Sync>;

/// A `2πħ`-periodic symbol on `R²` with a declared order.
///
/// Symbols built with [`PeriodicSymbol::analytic`] can also be evaluated at complex
/// frequencies `ξ + iτ`, which is what the tube-domain checks need.
#[derive(Clone)]
pub struct PeriodicSymbol {
    h: f64,
    order: f64,
    label: String,
    real: RealEval,
    complex: Option<ComplexEval>,
}

impl fmt::Debug for PeriodicSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicSymbol")
            .field("label", &self.label)
            .field("h", &self.h)
            .field("order", &self.order)
            .field("analytic", &self.complex.is_some())
            .finish()
    }
}

impl PeriodicSymbol {
    /// Wraps a real-frequency evaluator. The caller guarantees periodicity.
    pub fn new<F>(h: f64, order: f64, label: impl Into<String>, f: F) -> Self
    where
        F: Fn([f64; 2]) -> Complex64 + Send + Sync + 'static,
    {
        Self { h, order, label: label.into(), real: Arc::new(f), complex: None }
    }

    /// Wraps an evaluator that is analytic in both variables; real evaluation
    /// restricts it to real arguments.
    pub fn analytic<F>(h: f64, order: f64, label: impl Into<String>, f: F) -> Self
    where
        F: Fn([Complex64; 2]) -> Complex64 + Send + Sync + 'static,
    {
        let complex: ComplexEval = Arc::new(f);
        let c2 = Arc::clone(&complex);
        let real: RealEval =
            Arc::new(move |xi: [f64; 2]| c2([Complex64::new(xi[0], 0.0), Complex64::new(xi[1], 0.0)]));
        Self { h, order, label: label.into(), real, complex: Some(complex) }
    }

    pub fn constant(h: f64, value: Complex64) -> Self {
        Self::analytic(h, 0.0, format!("const({value})"), move |_| value)
    }

    pub fn one(h: f64) -> Self {
        Self::constant(h, Complex64::new(1.0, 0.0))
    }

    /// `ζ_m(ξ)^power`, `axis` 0 for `ξ₁` and 1 for `ξ₂`.
    pub fn zeta_power(h: f64, axis: usize, power: u32) -> Self {
        assert!(axis < 2, "axis must be 0 or 1");
        Self::analytic(h, power as f64, format!("zeta{}^{power}", axis + 1), move |z| {
            zeta_complex(z[axis], h).powu(power)
        })
    }

    /// Shift multiplier `e^{ih(m₁ξ₁ + m₂ξ₂)}`.
    pub fn shift(h: f64, m1: i64, m2: i64) -> Self {
        Self::analytic(h, 0.0, format!("shift({m1},{m2})"), move |z| {
            (Complex64::i() * h * (z[0] * m1 as f64 + z[1] * m2 as f64)).exp()
        })
    }

    /// Discrete Bessel-potential symbol `(1 + |ζ₁|² + |ζ₂|²)^{α/2}` (not analytic).
    pub fn bessel(h: f64, alpha: f64) -> Self {
        Self::new(h, alpha, format!("bessel({alpha})"), move |xi| {
            Complex64::new(zeta_weight(xi, h).powf(0.5 * alpha), 0.0)
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_analytic(&self) -> bool {
        self.complex.is_some()
    }

    pub fn eval(&self, xi: [f64; 2]) -> Complex64 {
        (self.real)(xi)
    }

    pub fn eval_complex(&self, z: [Complex64; 2]) -> Result<Complex64> {
        match &self.complex {
            Some(f) => Ok(f(z)),
            None => Err(Error::Unsupported(format!(
                "symbol `{}` has no evaluator for complex arguments",
                self.label
            ))),
        }
    }

    /// Pointwise product; orders add.
    pub fn product(&self, other: &PeriodicSymbol) -> PeriodicSymbol {
        let label = format!("{}*{}", self.label, other.label);
        let order = self.order + other.order;
        match (&self.complex, &other.complex) {
            (Some(a), Some(b)) => {
                let (a, b) = (Arc::clone(a), Arc::clone(b));
                Self::analytic(self.h, order, label, move |z| a(z) * b(z))
            }
            _ => {
                let (a, b) = (Arc::clone(&self.real), Arc::clone(&other.real));
                Self::new(self.h, order, label, move |xi| a(xi) * b(xi))
            }
        }
    }
}

/// A symbol on `R²` (continuous setting) with a declared order.
#[derive(Clone)]
pub struct ContinuousSymbol {
    order: f64,
    label: String,
    eval: RealEval,
}

impl fmt::Debug for ContinuousSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContinuousSymbol")
            .field("label", &self.label)
            .field("order", &self.order)
            .finish()
    }
}

impl ContinuousSymbol {
    pub fn new<F>(order: f64, label: impl Into<String>, f: F) -> Self
    where
        F: Fn([f64; 2]) -> Complex64 + Send + Sync + 'static,
    {
        Self { order, label: label.into(), eval: Arc::new(f) }
    }

    pub fn one() -> Self {
        Self::new(0.0, "one", |_| Complex64::new(1.0, 0.0))
    }

    /// `(1 + ξ₁² + ξ₂²)^{α/2}`.
    pub fn bessel(alpha: f64) -> Self {
        Self::new(alpha, format!("bessel({alpha})"), move |xi| {
            Complex64::new((1.0 + xi[0] * xi[0] + xi[1] * xi[1]).powf(0.5 * alpha), 0.0)
        })
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, xi: [f64; 2]) -> Complex64 {
        (self.eval)(xi)
    }

    pub fn product(&self, other: &ContinuousSymbol) -> ContinuousSymbol {
        let (a, b) = (Arc::clone(&self.eval), Arc::clone(&other.eval));
        Self::new(
            self.order + other.order,
            format!("{}*{}", self.label, other.label),
            move |xi| a(xi) * b(xi),
        )
    }

    /// Min and max of `|c(ξ)| / (1+|ξ|)^α` over `rays` rays sampled at radii
    /// `0, Δr, …, r_max`.
    pub fn growth_constants(&self, rays: usize, r_max: f64, samples: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for a in 0..rays {
            let theta = 2.0 * PI * a as f64 / rays as f64;
            for k in 0..=samples {
                let r = r_max * k as f64 / samples as f64;
                let xi = [r * theta.cos(), r * theta.sin()];
                let ratio = self.eval(xi).norm() / (1.0 + r).powf(self.order);
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
        }
        (lo, hi)
    }
}

/// Reduces `x` modulo `2·half` into `[-half, half)`.
pub fn wrap_period(x: f64, half: f64) -> f64 {
    let period = 2.0 * half;
    x - period * ((x + half) / period).floor()
}

/// Restriction of a continuous symbol to `ħT²`, continued periodically.
pub fn periodize(c: &ContinuousSymbol, h: f64) -> PeriodicSymbol {
    let eval = Arc::clone(&c.eval);
    let half = PI / h;
    PeriodicSymbol::new(h, c.order, format!("per({})", c.label), move |xi| {
        eval([wrap_period(xi[0], half), wrap_period(xi[1], half)])
    })
}

/// Sampled estimate of the two-sided `E_α` growth constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassReport {
    pub c1_est: f64,
    pub c2_est: f64,
    pub pass: bool,
}

/// `min`/`max` over the nodes of `|p(ξ)| / (1+|ζ|²)^{α/2}`.
pub fn check_symbol_class(p: &PeriodicSymbol, alpha: f64, sample: &FrequencyGrid) -> Result<ClassReport> {
    crate::error::check_mesh(p.h(), sample.h())?;
    let grid = sample.square();
    let h = grid.h();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for idx in 0..grid.node_count() {
        let xi = grid.point(idx);
        let ratio = p.eval(xi).norm() / zeta_weight(xi, h).powf(0.5 * alpha);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    Ok(ClassReport { c1_est: lo, c2_est: hi, pass: lo > 0.0 })
}

/// A periodic wave factorization `A = A_plus · A_minus` with index `æ`.
///
/// `plus` continues holomorphically into the tube over the first quadrant,
/// `minus` into the tube over the opposite quadrant.
#[derive(Debug, Clone)]
pub struct WaveFactorization {
    pub plus: PeriodicSymbol,
    pub minus: PeriodicSymbol,
    pub index: f64,
}

impl WaveFactorization {
    pub fn h(&self) -> f64 {
        self.plus.h()
    }

    pub fn full_symbol(&self) -> PeriodicSymbol {
        self.plus.product(&self.minus)
    }

    /// Largest relative deviation `|plus·minus - full| / |full|` over the grid.
    pub fn product_defect(&self, full: &PeriodicSymbol, grid: &FrequencyGrid) -> f64 {
        let g = grid.square();
        (0..g.node_count())
            .map(|idx| {
                let xi = g.point(idx);
                let f = full.eval(xi);
                (self.plus.eval(xi) * self.minus.eval(xi) - f).norm() / f.norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Built-in analytic factorization families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorFamily {
    /// `(1 - a e^{ihξ₁})^p (1 - a e^{ihξ₂})^q`, index 0; minus factor with `e^{-ihξ}`.
    Geometric { a: f64, p: f64, q: f64 },
    /// `(c + ζ₁ + ζ₂)^κ` with `c > 4ħ`, index `κ`; minus factor
    /// `(c + ζ̄₁ + ζ̄₂)^μ` built from `ħ(e^{-ihξ} - 1)`.
    ShiftedZeta { c: f64, kappa: f64, mu: f64 },
    /// Trivial factorization, both factors `≡ 1`.
    Identity,
}

/// Builds the factorization of a built-in family at mesh `h`.
pub fn builtin_factor_family(family: FactorFamily, h: f64) -> Result<WaveFactorization> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidInput(format!("mesh size must be positive, got {h}")));
    }
    match family {
        FactorFamily::Identity => Ok(WaveFactorization {
            plus: PeriodicSymbol::one(h),
            minus: PeriodicSymbol::one(h),
            index: 0.0,
        }),
        FactorFamily::Geometric { a, p, q } => {
            if !(a.is_finite() && a.abs() < 1.0) {
                return Err(Error::InvalidInput(format!("family (a) needs |a| < 1, got {a}")));
            }
            let factor = move |z: [Complex64; 2], sign: f64| {
                let one = Complex64::new(1.0, 0.0);
                let e1 = (Complex64::i() * sign * h * z[0]).exp();
                let e2 = (Complex64::i() * sign * h * z[1]).exp();
                (one - a * e1).powf(p) * (one - a * e2).powf(q)
            };
            let label = format!("geometric(a={a},p={p},q={q})");
            Ok(WaveFactorization {
                plus: PeriodicSymbol::analytic(h, 0.0, format!("{label}+"), move |z| factor(z, 1.0)),
                minus: PeriodicSymbol::analytic(h, 0.0, format!("{label}-"), move |z| factor(z, -1.0)),
                index: 0.0,
            })
        }
        FactorFamily::ShiftedZeta { c, kappa, mu } => {
            let hbar = 1.0 / h;
            if !(c.is_finite() && c > 4.0 * hbar) {
                return Err(Error::InvalidInput(format!(
                    "family (b) needs c > 4/h = {}, got {c}",
                    4.0 * hbar
                )));
            }
            let label = format!("shifted_zeta(c={c},kappa={kappa},mu={mu})");
            let plus = move |z: [Complex64; 2]| {
                (zeta_complex(z[0], h) + zeta_complex(z[1], h) + c).powf(kappa)
            };
            let minus = move |z: [Complex64; 2]| {
                (zeta_complex(-z[0], h) + zeta_complex(-z[1], h) + c).powf(mu)
            };
            Ok(WaveFactorization {
                plus: PeriodicSymbol::analytic(h, kappa, format!("{label}+"), plus),
                minus: PeriodicSymbol::analytic(h, mu, format!("{label}-"), minus),
                index: kappa,
            })
        }
    }
}

/// Sampled two-sided bound of the plus factor in the tube domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub pass: bool,
}

/// The default `τ` sample set in the open quadrant.
pub const DEFAULT_TAU_SAMPLES: [[f64; 2]; 3] = [[0.1, 0.1], [1.0, 1.0], [5.0, 5.0]];

/// Evaluates `|A_plus(ξ + iτ)| / (1 + |ζ̂|²)^{æ/2}` over `grid × tau_samples`.
pub fn sample_tube_holomorphy(
    w: &WaveFactorization,
    tau_samples: &[[f64; 2]],
    grid: &FrequencyGrid,
) -> Result<TubeReport> {
    crate::error::check_mesh(w.h(), grid.h())?;
    if tau_samples.iter().any(|t| !(t[0] > 0.0 && t[1] > 0.0)) {
        return Err(Error::InvalidInput("tau samples must lie in the open first quadrant".into()));
    }
    let g = grid.square();
    let h = g.h();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for tau in tau_samples {
        for idx in 0..g.node_count() {
            let xi = g.point(idx);
            let z = [Complex64::new(xi[0], tau[0]), Complex64::new(xi[1], tau[1])];
            let v = w.plus.eval_complex(z)?;
            let ratio = v.norm() / zeta_weight_complex(z, h).powf(0.5 * w.index);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    Ok(TubeReport { min_ratio: lo, max_ratio: hi, pass: lo > 0.0 && lo.is_finite() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn periodize_constant_and_seam() {
        let one = periodize(&ContinuousSymbol::one(), 0.7);
        assert_eq!(one.eval([123.0, -55.0]), c(1.0, 0.0));

        let id = ContinuousSymbol::new(1.0, "xi1", |xi| c(xi[0], 0.0));
        let p = periodize(&id, 1.0);
        assert!((p.eval([PI, 0.0]) - p.eval([-PI, 0.0])).norm() < 1e-12);
        assert!((p.eval([PI, 0.0]).re + PI).abs() < 1e-12);
        assert!(p.eval([2.0 * PI, 0.0]).norm() < 1e-12);
    }

    #[test]
    fn periodize_bessel_probe() {
        // wrap(5π) with half-period 2π (h = 0.5) is π
        let bessel = ContinuousSymbol::bessel(1.0);
        let p = periodize(&bessel, 0.5);
        let expected = (1.0 + PI * PI).sqrt();
        assert!((p.eval([5.0 * PI, 0.0]).re - expected).abs() < 1e-12);
        assert!((wrap_period(5.0 * PI, 2.0 * PI) - PI).abs() < 1e-12);
    }

    #[test]
    fn class_check_examples() {
        let g = FrequencyGrid::two_d(1.0, 16).unwrap();
        let r = check_symbol_class(&PeriodicSymbol::one(1.0), 0.0, &g).unwrap();
        assert_eq!((r.c1_est, r.c2_est, r.pass), (1.0, 1.0, true));

        let w = PeriodicSymbol::new(1.0, 2.0, "weight", |xi| c(zeta_weight(xi, 1.0), 0.0));
        let r = check_symbol_class(&w, 2.0, &g).unwrap();
        assert!((r.c1_est - 1.0).abs() < 1e-14 && (r.c2_est - 1.0).abs() < 1e-14 && r.pass);
    }

    #[test]
    fn class_check_zeta1_brute_force() {
        // independent brute force: min over the 64x64 grid of 2|sin(ξ1/2)| / sqrt(1 + 4 sin²(ξ1/2) + 4 sin²(ξ2/2))
        let n = 64;
        let mut brute = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                let x1 = -PI + (i as f64 + 0.5) * 2.0 * PI / n as f64;
                let x2 = -PI + (j as f64 + 0.5) * 2.0 * PI / n as f64;
                let s1 = (x1 / 2.0).sin();
                let s2 = (x2 / 2.0).sin();
                let r = 2.0 * s1.abs() / (1.0 + 4.0 * s1 * s1 + 4.0 * s2 * s2).sqrt();
                brute = brute.min(r);
            }
        }
        let g = FrequencyGrid::two_d(1.0, n).unwrap();
        let r = check_symbol_class(&PeriodicSymbol::zeta_power(1.0, 0, 1), 1.0, &g).unwrap();
        assert!((r.c1_est - brute).abs() < 1e-14);
        assert!(r.c1_est > 0.0 && r.c1_est < 0.025);
        // refining the grid drives the lower constant towards zero
        let g = FrequencyGrid::two_d(1.0, 256).unwrap();
        let finer = check_symbol_class(&PeriodicSymbol::zeta_power(1.0, 0, 1), 1.0, &g).unwrap();
        assert!(finer.c1_est < r.c1_est / 3.0);
    }

    #[test]
    fn class_check_mesh_mismatch() {
        let g = FrequencyGrid::two_d(0.5, 8).unwrap();
        assert!(check_symbol_class(&PeriodicSymbol::one(1.0), 0.0, &g).is_err());
    }

    #[test]
    fn family_a_examples() {
        let w = builtin_factor_family(FactorFamily::Geometric { a: 0.0, p: 1.0, q: 1.0 }, 1.0).unwrap();
        assert_eq!(w.index, 0.0);
        assert_eq!(w.full_symbol().eval([0.3, 1.1]), c(1.0, 0.0));

        let w = builtin_factor_family(FactorFamily::Geometric { a: 0.5, p: 1.0, q: 1.0 }, 1.0).unwrap();
        assert!((w.plus.eval([0.0, 0.0]) - c(0.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn family_b_examples() {
        let w = builtin_factor_family(FactorFamily::ShiftedZeta { c: 5.0, kappa: 1.0, mu: 1.0 }, 1.0)
            .unwrap();
        assert_eq!(w.index, 1.0);
        assert!((w.plus.eval([0.0, 0.0]) - c(5.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn invalid_family_parameters() {
        assert!(builtin_factor_family(FactorFamily::Geometric { a: 1.0, p: 1.0, q: 1.0 }, 1.0).is_err());
        assert!(builtin_factor_family(FactorFamily::Geometric { a: -1.2, p: 1.0, q: 1.0 }, 1.0).is_err());
        assert!(
            builtin_factor_family(FactorFamily::ShiftedZeta { c: 4.0, kappa: 1.0, mu: 1.0 }, 1.0).is_err()
        );
        assert!(
            builtin_factor_family(FactorFamily::ShiftedZeta { c: 7.9, kappa: 1.0, mu: 1.0 }, 0.5).is_err()
        );
    }

    #[test]
    fn product_identity_for_builtin_families() {
        let g = FrequencyGrid::two_d(0.5, 32).unwrap();
        for fam in [
            FactorFamily::Geometric { a: 0.5, p: 1.0, q: 2.0 },
            FactorFamily::Geometric { a: -0.3, p: 0.5, q: 1.5 },
            FactorFamily::ShiftedZeta { c: 10.0, kappa: 1.5, mu: 0.5 },
            FactorFamily::Identity,
        ] {
            let w = builtin_factor_family(fam, 0.5).unwrap();
            let full = w.full_symbol();
            assert!(w.product_defect(&full, &g) <= 1e-10, "{fam:?}");
        }
    }

    #[test]
    fn tube_samples_family_a() {
        let g = FrequencyGrid::two_d(1.0, 16).unwrap();
        let w = builtin_factor_family(FactorFamily::Geometric { a: 0.0, p: 1.0, q: 1.0 }, 1.0).unwrap();
        let r = sample_tube_holomorphy(&w, &[[0.3, 2.0], [1.0, 1.0]], &g).unwrap();
        assert_eq!((r.min_ratio, r.max_ratio, r.pass), (1.0, 1.0, true));

        let w = builtin_factor_family(FactorFamily::Geometric { a: 0.5, p: 1.0, q: 1.0 }, 1.0).unwrap();
        let v = w.plus.eval_complex([c(0.0, 1.0), c(0.0, 1.0)]).unwrap();
        // (1 - 0.5 e^{-1})^2
        assert!((v - c(0.665_954_379_637_710_9, 0.0)).norm() < 1e-15);
        let r = sample_tube_holomorphy(&w, &DEFAULT_TAU_SAMPLES, &g).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn tube_samples_family_b() {
        let w = builtin_factor_family(FactorFamily::ShiftedZeta { c: 5.0, kappa: 1.0, mu: 1.0 }, 1.0)
            .unwrap();
        let z = [c(PI / 2.0, 0.5), c(-PI / 2.0, 0.5)];
        let v = w.plus.eval_complex(z).unwrap();
        // 5 + (e^{i(π/2 + 0.5i)} - 1) + (e^{i(-π/2 + 0.5i)} - 1) = 3 + e^{-0.5}(i - i) = 3
        assert!((v - c(3.0, 0.0)).norm() < 1e-14);
        let g = FrequencyGrid::two_d(1.0, 16).unwrap();
        assert!(sample_tube_holomorphy(&w, &DEFAULT_TAU_SAMPLES, &g).unwrap().pass);
    }

    #[test]
    fn tube_check_needs_analytic_factor() {
        let g = FrequencyGrid::two_d(1.0, 8).unwrap();
        let w = WaveFactorization {
            plus: PeriodicSymbol::bessel(1.0, 1.0),
            minus: PeriodicSymbol::one(1.0),
            index: 1.0,
        };
        assert!(matches!(
            sample_tube_holomorphy(&w, &DEFAULT_TAU_SAMPLES, &g),
            Err(Error::Unsupported(_))
        ));
        let ok = builtin_factor_family(FactorFamily::Identity, 1.0).unwrap();
        assert!(sample_tube_holomorphy(&ok, &[[0.0, 1.0]], &g).is_err());
    }

    #[test]
    fn continuous_growth_constants() {
        let (lo, hi) = ContinuousSymbol::bessel(3.0).growth_constants(8, 100.0, 200);
        assert!(lo > 0.3 && hi <= 1.0 + 1e-12);
    }
}
