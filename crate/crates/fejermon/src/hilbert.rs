//! The alternating-inertia iteration for averaged maps on `R^d`:
//! `x^{k+1} = T xbar^k` where `xbar^k = x^k` for even `k` and
//! `x^k + alpha_k (x^k - x^{k-1})` for odd `k`, with
//! `0 <= alpha_k <= (1-alpha)/alpha`. Only the even subsequence is Fejér
//! monotone; the odd elements connect through the lag-one step function.
//!
//! Trajectories run in double precision; every bound formula is evaluated
//! in exact arithmetic over the certified integer bound `M`.

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

use crate::distances::{metric, GeneralizedDistance, Point};
use crate::framework::{
    affine_shift, ApproximationFamily, DistanceSeq, FejerInstance, PointSeq,
};
use crate::moduli::{CounterFunction, Nat, NatModulus, StepFunction};
use crate::num_util::{ceil_rational, ceil_root_scaled, dotminus, int_to_rational};
use crate::rates::{psi_single, EvalBudget, MetastabilityInputs, PhiBound, RateError, RateResult};

#[derive(Debug, Error)]
pub enum HilbertError {
    #[error("averagedness parameter must lie in (0,1), got {0}")]
    AlphaOutOfRange(BigRational),
    #[error("inertia out of range at step {k}: {value} > (1-alpha)/alpha = {limit}")]
    InertiaOutOfRange { k: u64, value: BigRational, limit: BigRational },
    #[error("rotation maps require dimension 2")]
    RotationDimension,
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// Where an averaged map comes from; the provenance fixes its solution set.
#[derive(Clone, Debug)]
pub enum MapProvenance {
    /// `T = (1-alpha) Id + alpha R_angle` on `R^2`; `Fix T = {0}`.
    RotationAverage { angle: f64 },
    /// `T = (1-alpha) Id + alpha P_C` for the closed ball `C = B(0, radius)`;
    /// `Fix T = C`.
    ProjectionAverage { radius: f64 },
    /// `T = (Id + lambda Id)^{-1} = x / (1 + lambda)`; `Fix T = {0}`.
    ResolventIdentity { lambda: f64 },
    User,
}

/// An `alpha`-averaged map: `(1-a)||(Id-T)x - (Id-T)y||^2 <= a (||x-y||^2 - ||Tx-Ty||^2)`.
#[derive(Clone)]
pub struct AveragedMap {
    pub alpha: BigRational,
    pub dim: usize,
    pub provenance: MapProvenance,
    eval: Arc<dyn Fn(&Point) -> Point + Send + Sync>,
}

impl fmt::Debug for AveragedMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AveragedMap")
            .field("alpha", &self.alpha)
            .field("dim", &self.dim)
            .field("provenance", &self.provenance)
            .finish()
    }
}

fn check_alpha(alpha: &BigRational) -> Result<(), HilbertError> {
    if alpha <= &BigRational::zero() || alpha >= &BigRational::one() {
        return Err(HilbertError::AlphaOutOfRange(alpha.clone()));
    }
    Ok(())
}

impl AveragedMap {
    pub fn rotation_average(alpha: BigRational, angle: f64) -> Result<Self, HilbertError> {
        check_alpha(&alpha)?;
        let a = alpha.to_f64().unwrap();
        let (s, c) = angle.sin_cos();
        Ok(AveragedMap {
            alpha,
            dim: 2,
            provenance: MapProvenance::RotationAverage { angle },
            eval: Arc::new(move |x| {
                let rx = c * x.0[0] - s * x.0[1];
                let ry = s * x.0[0] + c * x.0[1];
                Point(vec![(1.0 - a) * x.0[0] + a * rx, (1.0 - a) * x.0[1] + a * ry])
            }),
        })
    }

    pub fn projection_average(
        alpha: BigRational,
        radius: f64,
        dim: usize,
    ) -> Result<Self, HilbertError> {
        check_alpha(&alpha)?;
        let a = alpha.to_f64().unwrap();
        Ok(AveragedMap {
            alpha,
            dim,
            provenance: MapProvenance::ProjectionAverage { radius },
            eval: Arc::new(move |x| {
                let n = x.norm2();
                let proj = if n <= radius { x.clone() } else { x.scale(radius / n) };
                x.scale(1.0 - a).add(&proj.scale(a))
            }),
        })
    }

    /// Resolvent of the identity operator: firmly nonexpansive, so 1/2-averaged.
    pub fn resolvent_identity(lambda: f64, dim: usize) -> Result<Self, HilbertError> {
        assert!(lambda > 0.0);
        let factor = 1.0 / (1.0 + lambda);
        Ok(AveragedMap {
            alpha: BigRational::new(1.into(), 2.into()),
            dim,
            provenance: MapProvenance::ResolventIdentity { lambda },
            eval: Arc::new(move |x| x.scale(factor)),
        })
    }

    pub fn user(
        alpha: BigRational,
        dim: usize,
        eval: impl Fn(&Point) -> Point + Send + Sync + 'static,
    ) -> Result<Self, HilbertError> {
        check_alpha(&alpha)?;
        Ok(AveragedMap { alpha, dim, provenance: MapProvenance::User, eval: Arc::new(eval) })
    }

    pub fn apply(&self, x: &Point) -> Point {
        (self.eval)(x)
    }

    /// A known fixed point.
    pub fn fixed_point(&self) -> Point {
        Point::zero(self.dim)
    }

    /// Samples a point of the solution set (the whole ball for the
    /// projection map, the origin otherwise).
    pub fn sample_solution(&self, rng: &mut ChaCha8Rng) -> Point {
        match &self.provenance {
            MapProvenance::ProjectionAverage { radius } => loop {
                let p = Point((0..self.dim).map(|_| rng.gen_range(-radius..=*radius)).collect());
                if p.norm2() <= *radius {
                    return p;
                }
            },
            _ => Point::zero(self.dim),
        }
    }

    /// `(1-alpha)/alpha`, the admissible inertia ceiling.
    pub fn inertia_limit(&self) -> BigRational {
        (BigRational::one() - &self.alpha) / &self.alpha
    }
}

/// Monte-Carlo check of the averagedness inequality on random pairs.
pub fn averagedness_check(map: &AveragedMap, trials: usize, seed: u64, tol: f64) -> Vec<String> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = map.alpha.to_f64().unwrap();
    let mut out = Vec::new();
    for _ in 0..trials {
        let x = Point((0..map.dim).map(|_| rng.gen_range(-2.0f64..=2.0)).collect());
        let y = Point((0..map.dim).map(|_| rng.gen_range(-2.0f64..=2.0)).collect());
        let tx = map.apply(&x);
        let ty = map.apply(&y);
        let lhs = (1.0 - a) * x.sub(&tx).sub(&y.sub(&ty)).norm2().powi(2);
        let rhs = a * (metric(&x, &y).powi(2) - metric(&tx, &ty).powi(2));
        if lhs > rhs + tol {
            out.push(format!("averagedness violated: {lhs} > {rhs}"));
        }
    }
    out
}

/// The inertia parameters `alpha_k`.
#[derive(Clone)]
pub struct InertiaSchedule {
    f: Arc<dyn Fn(u64) -> BigRational + Send + Sync>,
}

impl fmt::Debug for InertiaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("InertiaSchedule")
    }
}

impl InertiaSchedule {
    pub fn constant(c: BigRational) -> Self {
        InertiaSchedule { f: Arc::new(move |_| c.clone()) }
    }

    pub fn zero() -> Self {
        Self::constant(BigRational::zero())
    }

    pub fn new(f: impl Fn(u64) -> BigRational + Send + Sync + 'static) -> Self {
        InertiaSchedule { f: Arc::new(f) }
    }

    pub fn at(&self, k: u64) -> BigRational {
        (self.f)(k)
    }
}

/// A recorded trajectory: the iterates, the extrapolated points, and the
/// a-posteriori certified integer radius `M` of the ball around the fixed
/// point containing both.
#[derive(Clone, Debug)]
pub struct HilbertRun {
    pub x0: Point,
    pub points: Vec<Point>,
    pub bars: Vec<Point>,
    pub xhat: Point,
    pub m_bound: Nat,
}

/// Runs the iteration for `n` steps (recording `x^0..x^n` and
/// `xbar^0..xbar^{n-1}`), validating the inertia range at every odd index.
pub fn iterate_alternating(
    map: &AveragedMap,
    sched: &InertiaSchedule,
    x0: &Point,
    n: u64,
) -> Result<HilbertRun, HilbertError> {
    let limit = map.inertia_limit();
    let xhat = map.fixed_point();
    let mut points = Vec::with_capacity(n as usize + 1);
    let mut bars = Vec::with_capacity(n as usize);
    points.push(x0.clone());
    for k in 0..n {
        let xk = &points[k as usize];
        let bar = if k % 2 == 0 {
            xk.clone()
        } else {
            let ak = sched.at(k);
            if ak < BigRational::zero() || ak > limit {
                return Err(HilbertError::InertiaOutOfRange { k, value: ak, limit });
            }
            let prev = &points[k as usize - 1];
            let af = ak.to_f64().unwrap();
            xk.add(&xk.sub(prev).scale(af))
        };
        points.push(map.apply(&bar));
        bars.push(bar);
    }
    let mut m = 0f64;
    for p in points.iter().chain(bars.iter()) {
        m = m.max(metric(p, &xhat));
    }
    let m_bound = ceil_rational(&BigRational::from_float(m).unwrap_or_else(BigRational::zero));
    Ok(HilbertRun { x0: x0.clone(), points, bars, xhat, m_bound })
}

/// `||x - Tx||`, the approximation-family residual.
pub fn af_residual(map: &AveragedMap, x: &Point) -> f64 {
    metric(x, &map.apply(x))
}

pub fn family_for(map: &AveragedMap) -> ApproximationFamily {
    let t = map.clone();
    ApproximationFamily::from_residual(move |x| af_residual(&t, x))
}

/// Approximate fixed-point index bound for the even subsequence:
/// `Phi(k) = 2 max{1, ceil(alpha/(1-alpha) b^2 (k+1)^2)}`.
pub fn phi_bound_hilbert(alpha: &BigRational, b: &BigRational, k: u64) -> Nat {
    let ratio = alpha / (BigRational::one() - alpha);
    let kk = BigRational::from_integer((k + 1).into());
    let val = ratio * b * b * &kk * &kk;
    ceil_rational(&val).max(Nat::one()) * 2u32
}

/// `ceil((3-alpha)/alpha^2 + 2)` and the `+4` variant, the slack
/// coefficients of the approximate-fixed-point inequalities.
pub fn slack_coefficients(alpha: &BigRational) -> (Nat, Nat) {
    let three = BigRational::from_integer(3.into());
    let base = (three - alpha) / (alpha * alpha);
    let c2 = ceil_rational(&(&base + BigRational::from_integer(2.into())));
    let c4 = ceil_rational(&(&base + BigRational::from_integer(4.into())));
    (c2, c4)
}

/// Uniform Fejér moduli of the even/odd clauses:
/// `chi(n,m,r) = 2 m^2 ceil((3-alpha)/alpha^2 + 2) M (r+1)^2 - 1` and the
/// same with `+4` for `zeta` (truncated at zero).
pub fn chi_zeta_hilbert(alpha: &BigRational, m_bound: &Nat, m: &Nat, r: &Nat) -> (Nat, Nat) {
    let (c2, c4) = slack_coefficients(alpha);
    let r1 = r + 1u32;
    let common = m * m * 2u32 * m_bound * &r1 * &r1;
    (dotminus(&(&common * &c2), &Nat::one()), dotminus(&(common * &c4), &Nat::one()))
}

/// Modulus of total boundedness of a box-circumscribed ball:
/// `gamma(k) = ceil(2 (k+1) sqrt(d) M)^d`, the square root enclosed exactly.
pub fn gamma_box(d: u32, m_bound: &BigRational, k: &Nat) -> Nat {
    let s = BigRational::from_integer(2.into()) * int_to_rational(&(k + 1u32)) * m_bound;
    ceil_root_scaled(&s, d as u64, 2).pow(d)
}

/// Uniform closedness moduli for the fixed-point set of a nonexpansive
/// map: `(omega, delta) = (4k+3, 2k+1)`.
pub fn closedness_nonexpansive(k: u64) -> (Nat, Nat) {
    (Nat::from(4 * k + 3), Nat::from(2 * k + 1))
}

fn phi_bound_shifted(alpha: &BigRational, m_bound: &Nat) -> NatModulus {
    let a = alpha.clone();
    let m = int_to_rational(m_bound);
    NatModulus::unary(move |j| {
        let ratio = &a / (BigRational::one() - &a);
        let kk = int_to_rational(&(j + 1u32));
        let val = ratio * &m * &m * &kk * &kk;
        ceil_rational(&val).max(Nat::one()) * 2u32 + 1u32
    })
    .declared_monotone()
}

/// The composite metastability rate of the alternating-inertia iteration:
/// `Psi(k,g) = 2 Psi_0(P, 2k+1, g') + 3` with `P = ceil((64k+64) sqrt(d) M)^d`,
/// `g'(n) = g(n+3) + 3`, and the recursion driven by the shifted
/// approximate-fixed-point bound and the odd-clause modulus.
pub fn metastability_hilbert(
    run: &HilbertRun,
    map: &AveragedMap,
    k: u64,
    g: &CounterFunction,
    budget: EvalBudget,
) -> Result<RateResult, HilbertError> {
    let kappa = Nat::from(2 * k + 1);
    let g_inner = g.clone();
    let g_prime = CounterFunction::new(move |n| g_inner.eval(&(n + 3u32)) + 3u32);
    let g_prime =
        if g.is_nondecreasing() { g_prime.declared_nondecreasing() } else { g_prime };
    let m_nat = run.m_bound.clone();
    let (_, c4) = slack_coefficients(&map.alpha);

    // chi == 2*kappa + 1 constant; zeta(n, m, r) = 2 m^2 c4 M (2r+4)^2 - 1,
    // so that with theta = A = alpha_G = beta_H = id and the engine's
    // r = 4*kappa + 3, eta(n, r) is exactly the displayed composite and
    // P = gamma_box(d, M, 16*kappa + 15) = ceil((64k+64) sqrt(d) M)^d.
    let chi_val = &kappa * 2u32 + 1u32;
    let chi = NatModulus::ternary(move |_, _, _| chi_val.clone()).declared_monotone();
    let m_for_zeta = m_nat.clone();
    let zeta = NatModulus::ternary(move |_, m, r| {
        let f = r * 2u32 + 4u32;
        dotminus(&(m * m * 2u32 * &c4 * &m_for_zeta * &f * &f), &Nat::one())
    })
    .declared_monotone();

    let d = map.dim as u32;
    let m_rat = int_to_rational(&run.m_bound);
    let gamma = NatModulus::unary(move |j| gamma_box(d, &m_rat, j)).declared_monotone();

    let inputs = MetastabilityInputs {
        gamma,
        alpha_g: NatModulus::identity(),
        beta_h: NatModulus::identity(),
        a_compare: NatModulus::identity(),
        theta: NatModulus::identity(),
        chi,
        zeta,
        phi: PhiBound::ApproxFPoint(phi_bound_shifted(&map.alpha, &run.m_bound)),
        xi: None,
        kappa: None,
        pi: None,
        omega: None,
        delta: None,
        f: StepFunction::identity(),
        g: g_prime,
        eta_monotone_in_n: g.is_nondecreasing(),
    };
    let mut res = psi_single(&inputs, &kappa, true, budget)?;
    res.value = match res.value {
        crate::rates::RateValue::Exact(v) => crate::rates::RateValue::Exact(v + 3u32),
        crate::rates::RateValue::Truncated { lower_bound, steps } => {
            crate::rates::RateValue::Truncated { lower_bound: lower_bound + 3u32, steps }
        }
    };
    Ok(res)
}

/// Exact regularity modulus of the form `rho(eps) = c * eps` where `c` is
/// rational or a rational multiple of `sqrt(2)`; only `ceil(1/rho(eps))`
/// is ever consumed, and it is computed exactly.
#[derive(Clone, Debug)]
pub enum LinearRegularity {
    Rational(BigRational),
    RationalTimesSqrt2(BigRational),
}

impl LinearRegularity {
    /// For `T = (1-a) Id + a R_angle`: `||x - Tx|| = 2 a sin(angle/2) ||x||`
    /// and `dist(x, Fix T) = ||x||`, so `rho(eps) = 2 a sin(angle/2) eps`
    /// is exact. Only the right angle keeps the coefficient in `Q sqrt(2)`.
    pub fn rotation_right_angle(alpha: &BigRational) -> Self {
        // 2 a sin(pi/4) = 2a * sqrt(2)/2 = a sqrt(2).
        LinearRegularity::RationalTimesSqrt2(alpha.clone())
    }

    pub fn coefficient_f64(&self) -> f64 {
        match self {
            LinearRegularity::Rational(c) => c.to_f64().unwrap(),
            LinearRegularity::RationalTimesSqrt2(q) => q.to_f64().unwrap() * 2f64.sqrt(),
        }
    }

    /// `ceil(1 / rho(eps))`, exact.
    pub fn ceil_inverse(&self, eps: &BigRational) -> Nat {
        match self {
            LinearRegularity::Rational(c) => ceil_rational(&(BigRational::one() / (c * eps))),
            LinearRegularity::RationalTimesSqrt2(q) => {
                // 1/(q sqrt(2) eps) = s * sqrt(2) for s = 1/(2 q eps).
                let s = BigRational::one() / (BigRational::from_integer(2.into()) * q * eps);
                ceil_root_scaled(&s, 2, 2)
            }
        }
    }
}

/// The convergence-rate index bound
/// `max{3, 2 ceil(alpha/(1-alpha) b^2 (ceil(1/rho(delta/4)) + 1)^2)}`.
pub fn convergence_rate_hilbert(
    rho: &LinearRegularity,
    alpha: &BigRational,
    b: &BigRational,
    delta: &BigRational,
) -> Nat {
    let quarter = delta / BigRational::from_integer(4.into());
    let inv = rho.ceil_inverse(&quarter);
    let inv1 = int_to_rational(&(inv + 1u32));
    let ratio = alpha / (BigRational::one() - alpha);
    let val = ratio * b * b * &inv1 * &inv1;
    (ceil_rational(&val) * 2u32).max(Nat::from(3u32))
}

/// The partial quasi-Fejér instance of a recorded run: the hat-shifted
/// sequence with `f(n) = n - 1` (truncated), the metric distance, the
/// residual family, and the closed-form uniform moduli.
pub fn fejer_instance(run: &HilbertRun, map: &AveragedMap) -> FejerInstance {
    let shift = affine_shift(3).expect("3 is odd");
    let hat = shift.hat_sequence(&run.points);
    let seq = PointSeq::recorded(hat);
    let family = family_for(map);
    let mut inst =
        FejerInstance::new(seq, DistanceSeq::Constant(GeneralizedDistance::euclidean()), family);
    inst.f = shift.f.clone();
    let alpha = map.alpha.clone();
    let m_nat = run.m_bound.clone();
    let chi = {
        let alpha = alpha.clone();
        let m_nat = m_nat.clone();
        NatModulus::ternary(move |_, m, r| chi_zeta_hilbert(&alpha, &m_nat, m, r).0)
            .declared_monotone()
    };
    let zeta_plain = {
        let alpha = alpha.clone();
        let m_nat = m_nat.clone();
        NatModulus::ternary(move |_, m, r| chi_zeta_hilbert(&alpha, &m_nat, m, r).1)
            .declared_monotone()
    };
    inst.zeta = Some(shift.zeta_hat(&chi, &zeta_plain));
    inst.chi = Some(chi);
    inst.phi_bound = Some(phi_bound_shifted(&map.alpha, &run.m_bound));
    inst.omega = Some(NatModulus::unary(|k| k * 4u32 + 3u32).declared_monotone());
    inst.delta = Some(NatModulus::unary(|k| k * 2u32 + 1u32).declared_monotone());
    let d = map.dim as u32;
    let m_rat = int_to_rational(&run.m_bound);
    inst.gamma = Some(NatModulus::unary(move |j| gamma_box(d, &m_rat, j)).declared_monotone());
    inst
}

/// Violations of the run-level lemma inequalities (summed residual bound,
/// odd-step bound, exact-fixed-point monotonicity).
pub fn lemma_suite_check(run: &HilbertRun, map: &AveragedMap, pairs: u64) -> Vec<String> {
    let mut out = Vec::new();
    let a = map.alpha.to_f64().unwrap();
    let ratio = (1.0 - a) / a;
    let xhat = &run.xhat;
    let max_i = pairs.min(((run.points.len() as u64).saturating_sub(3)) / 2);
    let mut sum = 0.0;
    for i in 0..max_i {
        let gap = metric(&run.points[2 * i as usize + 2], &run.bars[2 * i as usize + 1]);
        sum += gap * gap;
    }
    let start = metric(&run.points[0], xhat);
    if ratio * sum > start * start + 1e-9 {
        out.push(format!("summed residual bound violated: {} > {}", ratio * sum, start * start));
    }
    for kk in 0..max_i {
        let i = kk as usize;
        if run.points.len() <= 2 * i + 3 {
            break;
        }
        let lhs = metric(&run.points[2 * i + 3], &run.points[2 * i + 2]);
        let rhs = metric(&run.points[2 * i + 2], &run.bars[2 * i + 1]);
        if lhs > rhs + 1e-12 {
            out.push(format!("odd-step bound violated at {i}: {lhs} > {rhs}"));
        }
        let even_next = metric(&run.points[2 * i + 2], xhat);
        let even_prev = metric(&run.points[2 * i], xhat);
        if even_next > even_prev + 1e-12 {
            out.push(format!("even Fejér violated at {i}: {even_next} > {even_prev}"));
        }
        let odd_next = metric(&run.points[2 * i + 3], xhat);
        if odd_next > even_prev + 1e-12 {
            out.push(format!("odd Fejér violated at {i}: {odd_next} > {even_prev}"));
        }
    }
    out
}

/// The approximate-fixed-point slack inequalities against a point `x_star`
/// with residual `eps`: squared even/odd distances may grow by at most
/// `((3-alpha)/alpha^2 + 2) b eps` resp. the `+4` variant.
pub fn approx_fixed_point_check(
    run: &HilbertRun,
    map: &AveragedMap,
    x_star: &Point,
    tol: f64,
) -> Vec<String> {
    let a = map.alpha.to_f64().unwrap();
    let eps = af_residual(map, x_star);
    let c2 = (3.0 - a) / (a * a) + 2.0;
    let c4 = (3.0 - a) / (a * a) + 4.0;
    let mut b = 0f64;
    for x in &run.points {
        let tx = map.apply(x);
        b = b
            .max(metric(x, x_star))
            .max(metric(x, &map.apply(x_star)))
            .max(metric(&tx, x_star))
            .max(metric(x, &tx));
    }
    let mut out = Vec::new();
    let max_i = (run.points.len().saturating_sub(4)) / 2;
    for i in 0..max_i {
        let prev = metric(&run.points[2 * i], x_star).powi(2);
        let even = metric(&run.points[2 * i + 2], x_star).powi(2);
        let odd = metric(&run.points[2 * i + 3], x_star).powi(2);
        if even > prev + c2 * b * eps + tol {
            out.push(format!("even slack violated at {i}"));
        }
        if odd > prev + c4 * b * eps + tol {
            out.push(format!("odd slack violated at {i}"));
        }
    }
    out
}
