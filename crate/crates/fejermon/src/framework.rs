//! Partial, variable-distance quasi-Fejér monotonicity: approximation
//! families, instance data, empirical checkers for the defining
//! inequalities, and the conversion constructions between moduli.
//!
//! Checkers report every violation instead of failing fast, and test the
//! strict inequalities of the uniform-modulus definitions as non-strict
//! ones with a caller-supplied slack.

use std::fmt;
use std::sync::{Arc, Mutex};

use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::distances::{GeneralizedDistance, Point};
use crate::moduli::{ErrorSchedule, Nat, NatModulus, StepFunction};
use crate::num_util::dotminus;

#[derive(Debug, Error)]
pub enum FrameworkError {
    #[error("affine shift length must be odd, got {0}")]
    EvenShift(u64),
    #[error("cover-count modulus hits zero at k = {0}; cannot convert back")]
    ZeroCoverCount(u64),
    #[error("sequence too short: need index {needed}, have {have}")]
    SequenceTooShort { needed: usize, have: usize },
}

/// `F = intersection of AF_k`; membership is residual-based whenever the
/// application defines it that way (`x in AF_k  iff  residual(x) <= 1/(k+1)`),
/// with an opaque boolean form for synthetic tests.
#[derive(Clone)]
pub struct ApproximationFamily {
    member: Arc<dyn Fn(&Nat, &Point) -> bool + Send + Sync>,
    residual: Option<Arc<dyn Fn(&Point) -> f64 + Send + Sync>>,
}

impl fmt::Debug for ApproximationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ApproximationFamily")
            .field("residual_based", &self.residual.is_some())
            .finish()
    }
}

impl ApproximationFamily {
    pub fn from_residual(res: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        let res = Arc::new(res);
        let r2 = res.clone();
        ApproximationFamily {
            member: Arc::new(move |k, x| {
                let gate = k.to_f64().map(|v| 1.0 / (v + 1.0)).unwrap_or(0.0);
                r2(x) <= gate
            }),
            residual: Some(res),
        }
    }

    pub fn from_member(member: impl Fn(&Nat, &Point) -> bool + Send + Sync + 'static) -> Self {
        ApproximationFamily { member: Arc::new(member), residual: None }
    }

    pub fn member(&self, k: &Nat, x: &Point) -> bool {
        (self.member)(k, x)
    }

    pub fn member_u64(&self, k: u64, x: &Point) -> bool {
        self.member(&Nat::from(k), x)
    }

    pub fn residual(&self, x: &Point) -> Option<f64> {
        self.residual.as_ref().map(|r| r(x))
    }

    /// Spot check that the family is monotone decreasing in `k`.
    pub fn monotonicity_violation(&self, samples: &[Point], k_max: u64) -> Option<(u64, usize)> {
        for (i, x) in samples.iter().enumerate() {
            for k in 0..k_max {
                if self.member_u64(k + 1, x) && !self.member_u64(k, x) {
                    return Some((k, i));
                }
            }
        }
        None
    }
}

/// A lazily evaluated point sequence with an internally synchronized cache;
/// concurrent reads return identical values.
#[derive(Clone)]
pub struct PointSeq {
    inner: Arc<PointSeqInner>,
}

enum PointSeqInner {
    Recorded(Vec<Point>),
    Generated {
        gen: Box<dyn Fn(usize) -> Point + Send + Sync>,
        cache: Mutex<Vec<Option<Point>>>,
    },
}

impl fmt::Debug for PointSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.inner {
            PointSeqInner::Recorded(v) => write!(f, "PointSeq::Recorded(len={})", v.len()),
            PointSeqInner::Generated { .. } => f.write_str("PointSeq::Generated"),
        }
    }
}

impl PointSeq {
    pub fn recorded(points: Vec<Point>) -> Self {
        PointSeq { inner: Arc::new(PointSeqInner::Recorded(points)) }
    }

    pub fn generated(gen: impl Fn(usize) -> Point + Send + Sync + 'static) -> Self {
        PointSeq {
            inner: Arc::new(PointSeqInner::Generated {
                gen: Box::new(gen),
                cache: Mutex::new(Vec::new()),
            }),
        }
    }

    pub fn len(&self) -> Option<usize> {
        match &*self.inner {
            PointSeqInner::Recorded(v) => Some(v.len()),
            PointSeqInner::Generated { .. } => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    pub fn point(&self, n: usize) -> Point {
        match &*self.inner {
            PointSeqInner::Recorded(v) => v[n].clone(),
            PointSeqInner::Generated { gen, cache } => {
                let mut c = cache.lock().expect("sequence cache poisoned");
                if n >= c.len() {
                    c.resize(n + 1, None);
                }
                if let Some(p) = &c[n] {
                    return p.clone();
                }
                let p = gen(n);
                c[n] = Some(p.clone());
                p
            }
        }
    }
}

/// The distances `phi_n`; a constant sequence is the common case.
#[derive(Clone, Debug)]
pub enum DistanceSeq {
    Constant(GeneralizedDistance),
    Varying(ArcDistFn),
}

#[derive(Clone)]
pub struct ArcDistFn(pub Arc<dyn Fn(usize) -> GeneralizedDistance + Send + Sync>);

impl fmt::Debug for ArcDistFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ArcDistFn")
    }
}

impl DistanceSeq {
    pub fn at(&self, n: usize) -> GeneralizedDistance {
        match self {
            DistanceSeq::Constant(d) => d.clone(),
            DistanceSeq::Varying(f) => (f.0)(n),
        }
    }
}

/// An iteration together with all data of the partial quasi-Fejér
/// monotonicity property it is claimed to satisfy. Optional fields carry
/// the moduli a particular theorem consumes; checkers only touch what they
/// need.
#[derive(Clone, Debug)]
pub struct FejerInstance {
    pub seq: PointSeq,
    pub dists: DistanceSeq,
    pub limit_dist: Option<GeneralizedDistance>,
    pub psi: Option<GeneralizedDistance>,
    /// `A` with `psi <=^A phi_n`.
    pub a_compare: Option<NatModulus>,
    /// Rate for `phi_n -> phi` from below; absent when the sequence is constant.
    pub pi: Option<NatModulus>,
    pub g_fn: RealFn,
    pub h_fn: RealFn,
    pub alpha_g: Option<NatModulus>,
    pub beta_h: Option<NatModulus>,
    pub family: ApproximationFamily,
    pub f: StepFunction,
    pub errors: ErrorSchedule,
    pub chi: Option<NatModulus>,
    pub zeta: Option<NatModulus>,
    pub phi_bound: Option<NatModulus>,
    pub omega: Option<NatModulus>,
    pub delta: Option<NatModulus>,
    pub gamma: Option<NatModulus>,
}

#[derive(Clone)]
pub struct RealFn(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for RealFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RealFn")
    }
}

impl RealFn {
    pub fn identity() -> Self {
        RealFn(Arc::new(|t| t))
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

impl FejerInstance {
    /// Instance with `G = H = id`, `f = id`, zero errors and no optional moduli.
    pub fn new(seq: PointSeq, dists: DistanceSeq, family: ApproximationFamily) -> Self {
        FejerInstance {
            seq,
            dists,
            limit_dist: None,
            psi: None,
            a_compare: None,
            pi: None,
            g_fn: RealFn::identity(),
            h_fn: RealFn::identity(),
            alpha_g: None,
            beta_h: None,
            family,
            f: StepFunction::identity(),
            errors: ErrorSchedule::zero(),
            chi: None,
            zeta: None,
            phi_bound: None,
            omega: None,
            delta: None,
            gamma: None,
        }
    }

    fn phi_at(&self, n: usize, p: &Point, x: &Point) -> f64 {
        self.dists.at(n).eval(p, x)
    }
}

/// One violation of a Fejér-type inequality at solution index `sol`,
/// start `n` and offset `m`; `slack = lhs - rhs` is positive.
#[derive(Debug, Clone)]
pub struct FejerViolation {
    pub sol: usize,
    pub n: u64,
    pub m: u64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Prefix sums of the error schedule in `f64` so range sums are O(1).
fn error_prefix(errors: &ErrorSchedule, upto: u64) -> Vec<f64> {
    let mut pref = Vec::with_capacity(upto as usize + 2);
    pref.push(0.0);
    let mut acc = 0.0;
    for i in 0..=upto {
        acc += errors.eval(i).to_f64().unwrap_or(0.0);
        pref.push(acc);
    }
    pref
}

fn range_sum(pref: &[f64], lo: u64, hi_inclusive: u64) -> f64 {
    if lo > hi_inclusive {
        return 0.0;
    }
    pref[(hi_inclusive + 1) as usize] - pref[lo as usize]
}

/// Checks the even-subsequence quasi-Fejér inequality
/// `H(phi_{2(n+m)}(p, x_{2(n+m)})) <= G(phi_{2n}(p, x_{2n})) + sum_{i=n}^{n+m-1} eps_i`
/// (plus `tol`) for all `n + m <= n_max` and every given solution.
pub fn check_quasi_fejer(
    inst: &FejerInstance,
    solutions: &[Point],
    n_max: u64,
    tol: f64,
) -> Vec<FejerViolation> {
    let pref = error_prefix(&inst.errors, n_max + 1);
    let mut out = Vec::new();
    for (si, p) in solutions.iter().enumerate() {
        // phi_{2n}(p, x_{2n}) for all n up front.
        let vals: Vec<f64> = (0..=n_max)
            .map(|n| inst.phi_at(2 * n as usize, p, &inst.seq.point(2 * n as usize)))
            .collect();
        for n in 0..=n_max {
            let rhs_base = inst.g_fn.eval(vals[n as usize]);
            for m in 0..=(n_max - n) {
                let lhs = inst.h_fn.eval(vals[(n + m) as usize]);
                let sum = if m == 0 { 0.0 } else { range_sum(&pref, n, n + m - 1) };
                let rhs = rhs_base + sum;
                if lhs > rhs + tol {
                    out.push(FejerViolation { sol: si, n, m, lhs, rhs });
                }
            }
        }
    }
    out
}

/// Checks the odd-vs-even `f`-monotonicity inequality
/// `H(phi_{2(n+m)+1}(p, x_{2(n+m)+1})) <= G(phi_{2f(n)}(p, x_{2f(n)})) + sum_{i=f(n)}^{n+m} eps_i`
/// (plus `tol`) for all `n + m <= n_max`.
pub fn check_f_monotone(
    inst: &FejerInstance,
    solutions: &[Point],
    n_max: u64,
    tol: f64,
) -> Vec<FejerViolation> {
    let pref = error_prefix(&inst.errors, n_max + 1);
    let mut out = Vec::new();
    for (si, p) in solutions.iter().enumerate() {
        let odd: Vec<f64> = (0..=n_max)
            .map(|j| inst.phi_at(2 * j as usize + 1, p, &inst.seq.point(2 * j as usize + 1)))
            .collect();
        for n in 0..=n_max {
            let f_n = inst.f.eval_u64(n);
            let base = inst.phi_at(2 * f_n as usize, p, &inst.seq.point(2 * f_n as usize));
            let rhs_base = inst.g_fn.eval(base);
            for m in 0..=(n_max - n) {
                let lhs = inst.h_fn.eval(odd[(n + m) as usize]);
                let rhs = rhs_base + range_sum(&pref, f_n, n + m);
                if lhs > rhs + tol {
                    out.push(FejerViolation { sol: si, n, m, lhs, rhs });
                }
            }
        }
    }
    out
}

/// Which uniform modulus a [`check_uniform_modulus`] call exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniformKind {
    /// Modulus of uniform quasi-Fejér monotonicity of the even subsequence.
    Chi,
    /// Modulus of uniform quasi-`f`-monotonicity of the full sequence.
    Zeta,
}

#[derive(Debug, Clone)]
pub struct UniformViolation {
    pub sample: usize,
    pub n: u64,
    pub m: u64,
    pub r: u64,
    pub l: u64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Checks the defining clause of the uniform modulus `chi` or `zeta` over a
/// grid of `(n, m, r)` and sampled candidate points: every sample inside
/// `AF_{modulus(n,m,r)}` must satisfy the clause with slack `1/(r+1)` (plus
/// `tol`; the strict inequality is tested as non-strict).
pub fn check_uniform_modulus(
    inst: &FejerInstance,
    which: UniformKind,
    grid: &[(u64, u64, u64)],
    samples: &[Point],
    tol: f64,
) -> Vec<UniformViolation> {
    let modulus = match which {
        UniformKind::Chi => inst.chi.as_ref().expect("instance carries chi"),
        UniformKind::Zeta => inst.zeta.as_ref().expect("instance carries zeta"),
    };
    let max_index = grid.iter().map(|&(n, m, _)| n + m).max().unwrap_or(0);
    let pref = error_prefix(&inst.errors, max_index + 2);
    let mut out = Vec::new();
    for &(n, m, r) in grid {
        let level = modulus.eval3(&Nat::from(n), &Nat::from(m), &Nat::from(r));
        let slack = 1.0 / (r as f64 + 1.0);
        for (pi, p) in samples.iter().enumerate() {
            if !inst.family.member(&level, p) {
                continue;
            }
            for l in 0..=m {
                let (lhs, rhs) = match which {
                    UniformKind::Chi => {
                        let idx = 2 * (n + l) as usize;
                        let lhs = inst.h_fn.eval(inst.phi_at(idx, p, &inst.seq.point(idx)));
                        let base = inst.phi_at(2 * n as usize, p, &inst.seq.point(2 * n as usize));
                        let sum = if l == 0 { 0.0 } else { range_sum(&pref, n, n + l - 1) };
                        (lhs, inst.g_fn.eval(base) + sum + slack)
                    }
                    UniformKind::Zeta => {
                        let idx = 2 * (n + l) as usize + 1;
                        let lhs = inst.h_fn.eval(inst.phi_at(idx, p, &inst.seq.point(idx)));
                        let f_n = inst.f.eval_u64(n);
                        let base = inst.phi_at(2 * f_n as usize, p, &inst.seq.point(2 * f_n as usize));
                        let rhs = inst.g_fn.eval(base) + range_sum(&pref, f_n, n + l) + slack;
                        (lhs, rhs)
                    }
                };
                if lhs > rhs + tol {
                    out.push(UniformViolation { sample: pi, n, m, r, l, lhs, rhs });
                }
            }
        }
    }
    out
}

/// From a modulus of uniform quasi-Fejér monotonicity of the full sequence,
/// the derived moduli of the partial structure:
/// `chi'(n,m,r) = chi(2n,2m,r)` for the even subsequence,
/// `eta'(n,m,r) = chi(2n,2m+1,r)` for the id-monotonicity of the odds, and
/// the folded error schedule `eps~_n = eps_{2n} + eps_{2n+1}` with Cauchy
/// rate `xi~(k) = ceil(xi(k)/2)`.
pub fn derive_partial_from_full(
    chi: &NatModulus,
    eps: &ErrorSchedule,
) -> (NatModulus, NatModulus, ErrorSchedule) {
    assert_eq!(chi.arity(), 3);
    let c = chi.clone();
    let chi_even = NatModulus::ternary(move |n, m, r| c.eval3(&(n * 2u32), &(m * 2u32), r));
    let c = chi.clone();
    let eta_odd =
        NatModulus::ternary(move |n, m, r| c.eval3(&(n * 2u32), &(m * 2u32 + 1u32), r));
    let e = eps.clone();
    let xi = eps.xi.clone();
    let folded = ErrorSchedule::new(
        move |n| e.eval(2 * n) + e.eval(2 * n + 1),
        NatModulus::unary(move |k| {
            let v = xi.eval1(k);
            (&v + 1u32) / 2u32
        }),
    );
    let chi_even = if chi.is_monotone() { chi_even.declared_monotone() } else { chi_even };
    let eta_odd = if chi.is_monotone() { eta_odd.declared_monotone() } else { eta_odd };
    (chi_even, eta_odd, folded)
}

/// Mixed-(G,H) combination: given `chi` for `(G1,H1)`-quasi-Fejér
/// monotonicity of the evens and a two-argument `zeta` for the single-step
/// `(G2,H2)` property of the odds (with `G2 <= H1` pointwise, declared by
/// the caller), the modulus
/// `zeta^(n,m,r) = max{chi(f(n), f(n+m)-f(n), 2r+1), zeta(n+m, 2r+1)}`
/// of `(G1,H2)`-quasi-`f`-monotonicity.
pub fn mixed_gh_f_modulus(
    chi: &NatModulus,
    zeta2: &NatModulus,
    f: &StepFunction,
) -> NatModulus {
    assert_eq!(chi.arity(), 3);
    assert_eq!(zeta2.arity(), 2);
    let c = chi.clone();
    let z = zeta2.clone();
    let f = f.clone();
    NatModulus::ternary(move |n, m, r| {
        let r2 = r * 2u32 + 1u32;
        let fn_ = f.eval(n);
        let fnm = f.eval(&(n + m));
        let a = c.eval3(&fn_, &dotminus(&fnm, &fn_), &r2);
        let b = z.eval2(&(n + m), &r2);
        a.max(b)
    })
}

/// The odd step-length `s = 2s' + 1` reindexing: hat-sequence, lagged step
/// function `f(n) = n - s'` (truncated) with divergence rate `L + s'`, the
/// combined `zeta^`, and the shifted approximate-F-point bound.
#[derive(Debug, Clone)]
pub struct AffineShift {
    pub s: u64,
    pub s_prime: u64,
    pub f: StepFunction,
}

pub fn affine_shift(s: u64) -> Result<AffineShift, FrameworkError> {
    if s % 2 == 0 {
        return Err(FrameworkError::EvenShift(s));
    }
    let s_prime = (s - 1) / 2;
    Ok(AffineShift { s, s_prime, f: StepFunction::truncated_shift(s_prime) })
}

impl AffineShift {
    /// Index into the original sequence realizing the hat-sequence:
    /// `a^_n = a_n` for `n >= s` or even `n < s`, else `a_{n-1}`.
    pub fn hat_index(&self, n: u64) -> u64 {
        if n >= self.s || n % 2 == 0 {
            n
        } else {
            n - 1
        }
    }

    /// `zeta^(n,m,r) = max{zeta(n,m,r), chi(0,s',r)}`.
    pub fn zeta_hat(&self, chi: &NatModulus, zeta: &NatModulus) -> NatModulus {
        assert_eq!(chi.arity(), 3);
        assert_eq!(zeta.arity(), 3);
        let c = chi.clone();
        let z = zeta.clone();
        let sp = Nat::from(self.s_prime);
        let m = NatModulus::ternary(move |n, mm, r| {
            z.eval3(n, mm, r).max(c.eval3(&Nat::zero(), &sp, r))
        });
        if chi.is_monotone() && zeta.is_monotone() {
            m.declared_monotone()
        } else {
            m
        }
    }

    /// `Phi'(k) = Phi(k) + s'`.
    pub fn shift_phi_bound(&self, phi: &NatModulus) -> NatModulus {
        assert_eq!(phi.arity(), 1);
        let p = phi.clone();
        let sp = self.s_prime;
        let m = NatModulus::unary(move |k| p.eval1(k) + sp);
        if phi.is_monotone() {
            m.declared_monotone()
        } else {
            m
        }
    }

    /// Applies [`AffineShift::hat_index`] to a recorded trajectory.
    pub fn hat_sequence(&self, points: &[Point]) -> Vec<Point> {
        (0..points.len() as u64).map(|n| points[self.hat_index(n) as usize].clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbDirection {
    /// From a cover-count modulus `alpha` to a sequence modulus
    /// `gamma(k) = alpha(theta(k)) + 1`.
    CoverToSequence,
    /// Back from `gamma` to `alpha(k) = gamma(theta(k)) - 1`; requires
    /// `gamma(theta(k)) >= 1`.
    SequenceToCover,
}

/// Converts between the two forms of total-boundedness moduli through a
/// modulus of (weak) triangularity `theta`. The reverse direction is spot
/// checked for a zero count on `k <= 16` at construction.
pub fn convert_tb_modulus(
    m: &NatModulus,
    theta: &NatModulus,
    direction: TbDirection,
) -> Result<NatModulus, FrameworkError> {
    assert_eq!(m.arity(), 1);
    assert_eq!(theta.arity(), 1);
    match direction {
        TbDirection::CoverToSequence => {
            let a = m.clone();
            let t = theta.clone();
            Ok(NatModulus::unary(move |k| a.eval1(&t.eval1(k)) + 1u32))
        }
        TbDirection::SequenceToCover => {
            for k in 0..=16u64 {
                if m.eval1(&theta.eval1_u64(k)).is_zero() {
                    return Err(FrameworkError::ZeroCoverCount(k));
                }
            }
            let g = m.clone();
            let t = theta.clone();
            Ok(NatModulus::unary(move |k| dotminus(&g.eval1(&t.eval1(k)), &Nat::one())))
        }
    }
}

/// Metric-to-`phi` conversion of compactness and closedness moduli through
/// uniform consistency moduli `lambda`, `Lambda`:
/// `gamma'(k) = gamma(Lambda(k))`, `omega'(k) = lambda(omega(k))`,
/// `delta'(k) = delta(k)`.
pub fn convert_closedness_and_tb(
    gamma: &NatModulus,
    omega: &NatModulus,
    delta: &NatModulus,
    lambda: &NatModulus,
    cap_lambda: &NatModulus,
) -> (NatModulus, NatModulus, NatModulus) {
    (gamma.compose(cap_lambda), lambda.compose(omega), delta.clone())
}

/// Pigeonhole check of a modulus of total `phi`-boundedness: among the
/// first `gamma(k)+1` elements of each sequence, two indices `i < j` must
/// satisfy `phi(x_j, x_i) <= 1/(k+1)`.
pub fn total_boundedness_pigeonhole_check(
    sequences: &[Vec<Point>],
    dist: &GeneralizedDistance,
    gamma: &NatModulus,
    k_grid: &[u64],
) -> Result<Vec<(usize, u64)>, FrameworkError> {
    let mut failures = Vec::new();
    for &k in k_grid {
        let count = gamma
            .eval1_u64(k)
            .to_usize()
            .expect("gamma value fits usize for checked grids");
        let gate = 1.0 / (k as f64 + 1.0) + 1e-12;
        for (si, seq) in sequences.iter().enumerate() {
            if seq.len() < count + 1 {
                return Err(FrameworkError::SequenceTooShort {
                    needed: count + 1,
                    have: seq.len(),
                });
            }
            let mut found = false;
            'outer: for j in 1..=count {
                for i in 0..j {
                    if dist.eval(&seq[j], &seq[i]) <= gate {
                        found = true;
                        break 'outer;
                    }
                }
            }
            if !found {
                failures.push((si, k));
            }
        }
    }
    Ok(failures)
}

/// Checks the uniform closedness implication
/// `q in AF_{delta(k)}  and  phi(q,p) <= 1/(omega(k)+1)  ->  p in AF_k`
/// on sampled pairs.
pub fn closedness_check(
    family: &ApproximationFamily,
    omega: &NatModulus,
    delta: &NatModulus,
    dist: &GeneralizedDistance,
    pairs: &[(Point, Point)],
    k_grid: &[u64],
) -> Vec<(usize, u64)> {
    let mut out = Vec::new();
    for &k in k_grid {
        let omega_gate = omega
            .eval1_u64(k)
            .to_f64()
            .map(|v| 1.0 / (v + 1.0))
            .unwrap_or(0.0);
        let delta_level = delta.eval1_u64(k);
        for (i, (q, p)) in pairs.iter().enumerate() {
            if family.member(&delta_level, q)
                && dist.eval(q, p) <= omega_gate
                && !family.member_u64(k, p)
            {
                out.push((i, k));
            }
        }
    }
    out
}
