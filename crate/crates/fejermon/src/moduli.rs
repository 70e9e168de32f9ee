//! Number-theoretic and real-valued moduli.
//!
//! Every quantitative hypothesis in this crate is carried by a modulus: a
//! total function on naturals (or positive rationals) witnessing a uniform
//! implication such as "G preserves smallness" or "the error series has a
//! Cauchy rate". Moduli are opaque functions; monotonicity and the defining
//! implications are checked on sampled grids, not proved.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::num_util::{dotminus, inv_succ};

pub type Nat = BigUint;

#[derive(Debug, Error)]
pub enum ModuliError {
    #[error("modulus arity mismatch: expected {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("empty prefix: k = {k} exceeds available length {len}")]
    EmptyPrefix { k: usize, len: usize },
    #[error("partial-sum precondition violated: min {min} > bound {bound}")]
    PartialSumBound { min: BigRational, bound: BigRational },
    #[error("majorization scan argument too large: {0} (non-monotone modulus)")]
    ScanTooLarge(BigUint),
}

/// A total function from naturals to naturals of arity 1, 2 or 3.
///
/// `monotone` declares (it does not prove) that the function is
/// nondecreasing in each argument; evaluators use the declaration to take
/// the fast path when majorizing.
#[derive(Clone)]
pub struct NatModulus {
    arity: usize,
    monotone: bool,
    f: Arc<dyn Fn(&[Nat]) -> Nat + Send + Sync>,
}

impl fmt::Debug for NatModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NatModulus")
            .field("arity", &self.arity)
            .field("monotone", &self.monotone)
            .finish()
    }
}

impl NatModulus {
    pub fn unary(f: impl Fn(&Nat) -> Nat + Send + Sync + 'static) -> Self {
        Self { arity: 1, monotone: false, f: Arc::new(move |a| f(&a[0])) }
    }

    pub fn binary(f: impl Fn(&Nat, &Nat) -> Nat + Send + Sync + 'static) -> Self {
        Self { arity: 2, monotone: false, f: Arc::new(move |a| f(&a[0], &a[1])) }
    }

    pub fn ternary(f: impl Fn(&Nat, &Nat, &Nat) -> Nat + Send + Sync + 'static) -> Self {
        Self { arity: 3, monotone: false, f: Arc::new(move |a| f(&a[0], &a[1], &a[2])) }
    }

    /// Marks the modulus as nondecreasing in every argument.
    pub fn declared_monotone(mut self) -> Self {
        self.monotone = true;
        self
    }

    pub fn identity() -> Self {
        Self::unary(|k| k.clone()).declared_monotone()
    }

    pub fn constant(c: u64) -> Self {
        Self::unary(move |_| Nat::from(c)).declared_monotone()
    }

    /// Unary lookup table, clamped to its last entry beyond the table.
    pub fn from_table(values: Vec<u64>) -> Self {
        assert!(!values.is_empty());
        Self::unary(move |k| {
            let idx = k.to_usize().map(|i| i.min(values.len() - 1)).unwrap_or(values.len() - 1);
            Nat::from(values[idx])
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn eval(&self, args: &[Nat]) -> Nat {
        assert_eq!(args.len(), self.arity, "modulus arity mismatch");
        (self.f)(args)
    }

    pub fn eval1(&self, k: &Nat) -> Nat {
        self.eval(std::slice::from_ref(k))
    }

    pub fn eval1_u64(&self, k: u64) -> Nat {
        self.eval1(&Nat::from(k))
    }

    pub fn eval2(&self, a: &Nat, b: &Nat) -> Nat {
        self.eval(&[a.clone(), b.clone()])
    }

    pub fn eval3(&self, a: &Nat, b: &Nat, c: &Nat) -> Nat {
        self.eval(&[a.clone(), b.clone(), c.clone()])
    }

    /// Pointwise maximum of two moduli of equal arity.
    pub fn max_with(&self, other: &NatModulus) -> NatModulus {
        assert_eq!(self.arity, other.arity);
        let a = self.clone();
        let b = other.clone();
        NatModulus {
            arity: self.arity,
            monotone: self.monotone && other.monotone,
            f: Arc::new(move |args| a.eval(args).max(b.eval(args))),
        }
    }

    /// `self ∘ g` for unary moduli.
    pub fn compose(&self, inner: &NatModulus) -> NatModulus {
        assert_eq!(self.arity, 1);
        assert_eq!(inner.arity, 1);
        let outer = self.clone();
        let inner = inner.clone();
        NatModulus {
            arity: 1,
            monotone: outer.monotone && inner.monotone,
            f: Arc::new(move |args| outer.eval1(&inner.eval(args))),
        }
    }

    /// Checks nondecreasingness on a sampled grid; returns the first
    /// offending pair of consecutive grid points, if any.
    pub fn monotone_violation_on_grid(&self, grid: &[u64]) -> Option<(u64, u64)> {
        assert_eq!(self.arity, 1);
        let mut sorted = grid.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if self.eval1_u64(w[0]) > self.eval1_u64(w[1]) {
                return Some((w[0], w[1]));
            }
        }
        None
    }
}

/// `fᴹ(k) = max{f(j) | j <= k}`: the nondecreasing majorant of a unary
/// modulus. Declared-monotone inputs evaluate directly; otherwise the scan
/// refuses absurdly large arguments instead of looping forever.
pub fn majorize(f: &NatModulus) -> NatModulus {
    assert_eq!(f.arity(), 1, "majorize expects a unary modulus");
    let inner = f.clone();
    NatModulus {
        arity: 1,
        monotone: true,
        f: Arc::new(move |args| {
            let k = &args[0];
            if inner.is_monotone() {
                return inner.eval1(k);
            }
            let limit = k
                .to_u64()
                .unwrap_or_else(|| panic!("majorization scan argument too large: {k}"));
            assert!(limit <= 1 << 32, "majorization scan argument too large: {limit}");
            let mut best = Nat::zero();
            for j in 0..=limit {
                best = best.max(inner.eval1_u64(j));
            }
            best
        }),
    }
}

/// Moduli for `G = max{G1, G2}` and `H = min{H1, H2}` from moduli of the
/// constituents: the pointwise maxima.
pub fn combine_gh(
    a_g1: &NatModulus,
    a_g2: &NatModulus,
    b_h1: &NatModulus,
    b_h2: &NatModulus,
) -> (NatModulus, NatModulus) {
    (a_g1.max_with(a_g2), b_h1.max_with(b_h2))
}

/// One violation of a G- or H-modulus implication.
#[derive(Debug, Clone)]
pub struct GhViolation {
    pub k: u64,
    pub a: BigRational,
    pub value: BigRational,
    pub threshold: BigRational,
}

/// Checks `a <= 1/(alpha_G(k)+1)  ->  G(a) <= 1/(k+1)` over a grid of `k`
/// and the sampled arguments. Reports all violations, never aborts.
pub fn check_g_modulus(
    g: impl Fn(&BigRational) -> BigRational,
    alpha_g: &NatModulus,
    samples: &[BigRational],
    k_grid: &[u64],
) -> Vec<GhViolation> {
    let mut out = Vec::new();
    for &k in k_grid {
        let gate = inv_succ(&alpha_g.eval1_u64(k));
        let target = inv_succ(&Nat::from(k));
        for a in samples {
            if a <= &gate {
                let v = g(a);
                if v > target {
                    out.push(GhViolation { k, a: a.clone(), value: v, threshold: target.clone() });
                }
            }
        }
    }
    out
}

/// Checks `H(a) <= 1/(beta_H(k)+1)  ->  a <= 1/(k+1)` over a grid of `k`
/// and the sampled arguments.
pub fn check_h_modulus(
    h: impl Fn(&BigRational) -> BigRational,
    beta_h: &NatModulus,
    samples: &[BigRational],
    k_grid: &[u64],
) -> Vec<GhViolation> {
    let mut out = Vec::new();
    for &k in k_grid {
        let gate = inv_succ(&beta_h.eval1_u64(k));
        let target = inv_succ(&Nat::from(k));
        for a in samples {
            if h(a) <= gate && a > &target {
                out.push(GhViolation { k, a: a.clone(), value: a.clone(), threshold: target.clone() });
            }
        }
    }
    out
}

/// `min_{0<=i<k} a_i`, verified against the pigeonhole bound `A/k`.
pub fn min_partial_sum_bound(
    a: &[BigRational],
    total: &BigRational,
    k: usize,
) -> Result<BigRational, ModuliError> {
    if k == 0 || k > a.len() {
        return Err(ModuliError::EmptyPrefix { k, len: a.len() });
    }
    let min = a[..k].iter().min().expect("nonempty prefix").clone();
    let bound = total / BigRational::from_integer(k.into());
    if min > bound {
        return Err(ModuliError::PartialSumBound { min, bound });
    }
    Ok(min)
}

/// A real-valued modulus: a total function on positive rationals.
#[derive(Clone)]
pub struct RealModulus {
    f: Arc<dyn Fn(&BigRational) -> BigRational + Send + Sync>,
}

impl fmt::Debug for RealModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RealModulus")
    }
}

impl RealModulus {
    pub fn new(f: impl Fn(&BigRational) -> BigRational + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f) }
    }

    pub fn identity() -> Self {
        Self::new(|e| e.clone())
    }

    /// `eps -> c * eps` for a fixed rational coefficient.
    pub fn linear(c: BigRational) -> Self {
        Self::new(move |e| &c * e)
    }

    pub fn eval(&self, eps: &BigRational) -> BigRational {
        (self.f)(eps)
    }

    pub fn compose(&self, inner: &RealModulus) -> RealModulus {
        let outer = self.clone();
        let inner = inner.clone();
        RealModulus::new(move |e| outer.eval(&inner.eval(e)))
    }

    /// Positivity spot check on a sampled grid of epsilons.
    pub fn positive_on(&self, grid: &[BigRational]) -> bool {
        grid.iter().all(|e| self.eval(e) > BigRational::zero())
    }
}

/// A counter function `g: N -> N` as consumed by metastability rates.
#[derive(Clone)]
pub struct CounterFunction {
    f: Arc<dyn Fn(&Nat) -> Nat + Send + Sync>,
    nondecreasing: bool,
}

impl fmt::Debug for CounterFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CounterFunction").field("nondecreasing", &self.nondecreasing).finish()
    }
}

impl CounterFunction {
    pub fn new(f: impl Fn(&Nat) -> Nat + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), nondecreasing: false }
    }

    pub fn declared_nondecreasing(mut self) -> Self {
        self.nondecreasing = true;
        self
    }

    pub fn constant(c: u64) -> Self {
        Self::new(move |_| Nat::from(c)).declared_nondecreasing()
    }

    /// `g(n) = a*n + b`.
    pub fn linear(a: u64, b: u64) -> Self {
        Self::new(move |n| n * a + b).declared_nondecreasing()
    }

    pub fn eval(&self, n: &Nat) -> Nat {
        (self.f)(n)
    }

    pub fn eval_u64(&self, n: u64) -> Nat {
        self.eval(&Nat::from(n))
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.nondecreasing
    }
}

/// A step function `f: N -> N` (nondecreasing, `f(n) <= n`) with an
/// optional rate of divergence `kappa`.
#[derive(Clone)]
pub struct StepFunction {
    f: Arc<dyn Fn(&Nat) -> Nat + Send + Sync>,
    pub kappa: Option<NatModulus>,
}

impl fmt::Debug for StepFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StepFunction").field("has_kappa", &self.kappa.is_some()).finish()
    }
}

impl StepFunction {
    pub fn new(f: impl Fn(&Nat) -> Nat + Send + Sync + 'static, kappa: Option<NatModulus>) -> Self {
        Self { f: Arc::new(f), kappa }
    }

    pub fn identity() -> Self {
        Self::new(|n| n.clone(), Some(NatModulus::identity()))
    }

    /// `f(n) = n ∸ s'` with rate of divergence `kappa(L) = L + s'`.
    pub fn truncated_shift(s_prime: u64) -> Self {
        let sp = Nat::from(s_prime);
        Self::new(
            move |n| dotminus(n, &sp),
            Some(NatModulus::unary(move |l| l + s_prime).declared_monotone()),
        )
    }

    pub fn eval(&self, n: &Nat) -> Nat {
        (self.f)(n)
    }

    pub fn eval_u64(&self, n: u64) -> u64 {
        self.eval(&Nat::from(n)).to_u64().expect("step value fits u64 for u64 input")
    }

    /// Standing hypotheses (`f` nondecreasing, `f(n) <= n`, and the kappa
    /// property when present) checked on a sampled grid.
    pub fn hypothesis_violation_on_grid(&self, grid: &[u64]) -> Option<String> {
        let mut sorted = grid.to_vec();
        sorted.sort_unstable();
        for &n in &sorted {
            if self.eval(&Nat::from(n)) > Nat::from(n) {
                return Some(format!("f({n}) > {n}"));
            }
        }
        for w in sorted.windows(2) {
            if self.eval(&Nat::from(w[0])) > self.eval(&Nat::from(w[1])) {
                return Some(format!("f not nondecreasing between {} and {}", w[0], w[1]));
            }
        }
        if let Some(kappa) = &self.kappa {
            for l in 0..8u64 {
                let at = kappa.eval1_u64(l);
                if let Some(at) = at.to_u64() {
                    for &n in sorted.iter().filter(|&&n| n >= at) {
                        if self.eval(&Nat::from(n)) < Nat::from(l) {
                            return Some(format!("f({n}) < {l} despite n >= kappa({l})"));
                        }
                    }
                }
            }
        }
        None
    }
}

/// An error schedule `(eps_n)` with a Cauchy rate `xi` for its series.
#[derive(Clone)]
pub struct ErrorSchedule {
    eps: Arc<dyn Fn(u64) -> BigRational + Send + Sync>,
    pub xi: NatModulus,
}

impl fmt::Debug for ErrorSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ErrorSchedule")
    }
}

impl ErrorSchedule {
    pub fn new(eps: impl Fn(u64) -> BigRational + Send + Sync + 'static, xi: NatModulus) -> Self {
        Self { eps: Arc::new(eps), xi }
    }

    /// The zero schedule; `xi = 0` is a valid Cauchy rate.
    pub fn zero() -> Self {
        Self::new(|_| BigRational::zero(), NatModulus::constant(0))
    }

    /// `eps_n = 1/(n+1)^2` with Cauchy rate `xi(k) = k+1`.
    pub fn inverse_square() -> Self {
        Self::new(
            |n| {
                let d = BigRational::from_integer((n + 1).into());
                BigRational::one() / (&d * &d)
            },
            NatModulus::unary(|k| k + 1u32).declared_monotone(),
        )
    }

    pub fn eval(&self, n: u64) -> BigRational {
        (self.eps)(n)
    }

    /// Exact sum over the inclusive index range; empty when `lo > hi`.
    pub fn sum_range(&self, lo: u64, hi_inclusive: u64) -> BigRational {
        let mut acc = BigRational::zero();
        if lo > hi_inclusive {
            return acc;
        }
        for i in lo..=hi_inclusive {
            acc += self.eval(i);
        }
        acc
    }

    /// Same range sum in `f64`, for long tails where exact rationals are
    /// unreasonable.
    pub fn sum_range_f64(&self, lo: u64, hi_inclusive: u64) -> f64 {
        let mut acc = 0.0f64;
        let mut comp = 0.0f64;
        if lo > hi_inclusive {
            return acc;
        }
        for i in lo..=hi_inclusive {
            let v = self.eval(i).to_f64().unwrap_or(0.0);
            let y = v - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
        }
        acc
    }
}
