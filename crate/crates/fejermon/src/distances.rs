//! Generalized distances over finite-dimensional real vector spaces.
//!
//! Besides the plain metric, the central object is the distance
//! `phi(x,y) = ||x||^2 - 2<x,Jy> + ||y||^2` built from the duality map `J`
//! of `l_p^d`, together with its consistency moduli (two-sided quantitative
//! equivalence with the norm distance) and the triangularity moduli derived
//! from them. A small catalog of further weakly triangular distances is
//! provided with their closed-form moduli attached.
//!
//! Distance evaluation runs in `f64`; every modulus is computed in exact
//! rational arithmetic.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::moduli::{Nat, NatModulus, RealModulus};
use crate::num_util::{ceil_rational, dotminus};

#[derive(Debug, Error)]
pub enum DistanceError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("constant distance requires c > 0")]
    NonPositiveConstant,
    #[error("l_p space requires p >= 2, got {0}")]
    ExponentOutOfRange(u32),
}

/// A point of `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn zero(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_p(&self, p: f64) -> f64 {
        if p == 2.0 {
            return self.dot(self).sqrt();
        }
        self.0.iter().map(|a| a.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }

    pub fn norm2(&self) -> f64 {
        self.norm_p(2.0)
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, t: f64) -> Point {
        Point(self.0.iter().map(|a| a * t).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }
}

/// Euclidean distance.
pub fn metric(x: &Point, y: &Point) -> f64 {
    x.sub(y).norm2()
}

/// Modulus of uniform convexity: the classical power-type bound
/// `eta(eps) = eps^p / (p * 2^p)` for integer `p >= 2`, or a user-supplied
/// modulus.
#[derive(Clone)]
pub enum EtaSpec {
    ClassicalPower { p: u32 },
    Custom(RealModulus),
}

impl fmt::Debug for EtaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtaSpec::ClassicalPower { p } => write!(f, "EtaSpec::ClassicalPower(p={p})"),
            EtaSpec::Custom(_) => f.write_str("EtaSpec::Custom"),
        }
    }
}

impl EtaSpec {
    pub fn eval_rat(&self, eps: &BigRational) -> BigRational {
        match self {
            EtaSpec::ClassicalPower { p } => {
                let mut pow = BigRational::one();
                for _ in 0..*p {
                    pow *= eps;
                }
                let denom = BigRational::from_integer((*p as u64).into())
                    * BigRational::from_integer(BigUint::from(2u32).pow(*p).into());
                pow / denom
            }
            EtaSpec::Custom(m) => m.eval(eps),
        }
    }

    pub fn eval_f64(&self, eps: f64) -> f64 {
        match self {
            EtaSpec::ClassicalPower { p } => {
                eps.powi(*p as i32) / (*p as f64 * 2f64.powi(*p as i32))
            }
            EtaSpec::Custom(m) => {
                let e = BigRational::from_f64(eps).unwrap_or_else(BigRational::zero);
                m.eval(&e).to_f64().unwrap_or(0.0)
            }
        }
    }
}

/// A finite-dimensional `l_p` space, `p >= 2` integer, with the data the
/// bound stack needs: the ambient ball radius, a nondecreasing modulus of
/// uniform convexity and the two-sided split of the Figiel constant
/// (`1 < L < 3.18`). `l_low = 1` is used wherever a smaller constant is
/// conservative and `l_high = 3.18` wherever a larger one is.
#[derive(Clone, Debug)]
pub struct LpSpace {
    pub dim: usize,
    pub p: u32,
    pub bound: BigRational,
    pub eta: EtaSpec,
    pub l_low: BigRational,
    pub l_high: BigRational,
}

impl LpSpace {
    pub fn new(dim: usize, p: u32, bound: BigRational) -> Result<Self, DistanceError> {
        if p < 2 {
            return Err(DistanceError::ExponentOutOfRange(p));
        }
        Ok(LpSpace {
            dim,
            p,
            bound,
            eta: EtaSpec::ClassicalPower { p },
            l_low: BigRational::one(),
            l_high: BigRational::new(159.into(), 50.into()),
        })
    }

    pub fn with_eta(mut self, eta: RealModulus) -> Self {
        self.eta = EtaSpec::Custom(eta);
        self
    }

    /// Conjugate exponent `q = p/(p-1)`, exact.
    pub fn q(&self) -> BigRational {
        BigRational::new((self.p as u64).into(), (self.p as u64 - 1).into())
    }

    pub fn p_f64(&self) -> f64 {
        self.p as f64
    }

    pub fn q_f64(&self) -> f64 {
        self.p as f64 / (self.p as f64 - 1.0)
    }
}

/// The normalized duality map of `l_p`:
/// `Jx = ||x||^{2-p} (|x_i|^{p-1} sgn x_i)_i`, with `J0 = 0`.
pub fn duality_map(space: &LpSpace, x: &Point) -> Point {
    let p = space.p_f64();
    let n = x.norm_p(p);
    if n == 0.0 {
        return Point::zero(x.dim());
    }
    let factor = n.powf(2.0 - p);
    Point(x.0.iter().map(|&xi| factor * xi.abs().powf(p - 1.0) * xi.signum()).collect())
}

/// Inverse of the duality map: the duality map of the conjugate exponent
/// applied in the dual coordinates.
pub fn duality_map_inverse(space: &LpSpace, u: &Point) -> Point {
    let q = space.q_f64();
    let n = u.norm_p(q);
    if n == 0.0 {
        return Point::zero(u.dim());
    }
    let factor = n.powf(2.0 - q);
    Point(u.0.iter().map(|&ui| factor * ui.abs().powf(q - 1.0) * ui.signum()).collect())
}

/// `phi(x,y) = ||x||^2 - 2<x,Jy> + ||y||^2`.
///
/// Always `>= (||x|| - ||y||)^2` and reduces to `||x-y||^2` for `p = 2`.
pub fn phi_eval(space: &LpSpace, x: &Point, y: &Point) -> f64 {
    let p = space.p_f64();
    let nx = x.norm_p(p);
    let ny = y.norm_p(p);
    let jy = duality_map(space, y);
    nx * nx - 2.0 * x.dot(&jy) + ny * ny
}

/// Real-valued consistency moduli for `phi` on the ball of radius `b`:
///
/// - `lambda(eps) = (b^2 / l_high) * eta(eps / 4b)` with
///   `phi(x,y) <= lambda(eps) -> ||x-y|| <= eps`,
/// - `Lambda(eps) = eps * l_low / (16 b)` with
///   `||x-y|| <= Lambda(eps) -> phi(x,y) <= eps`.
pub fn phi_consistency_moduli(space: &LpSpace, b: &BigRational) -> (RealModulus, RealModulus) {
    assert!(b > &BigRational::zero());
    let eta = space.eta.clone();
    let b1 = b.clone();
    let front = (b * b) / space.l_high.clone();
    let lambda = RealModulus::new(move |eps| {
        let inner = eps / (BigRational::from_integer(4.into()) * &b1);
        &front * eta.eval_rat(&inner)
    });
    let scale = space.l_low.clone() / (BigRational::from_integer(16.into()) * b);
    let cap_lambda = RealModulus::new(move |eps| eps * &scale);
    (lambda, cap_lambda)
}

/// Integer-valued consistency moduli for `phi` on the ball of radius `b`:
///
/// - `lambda(k) = ceil((l_high/b^2) / eta(1/(4b(k+1)))) - 1`,
/// - `Lambda(k) = ceil(16 b (k+1) / l_low) - 1`.
///
/// For the classical power modulus the lambda direction collapses to
/// `ceil(c (k+1)^p) - 1` with `c = l_high p 8^p b^(p-2)`, evaluated in pure
/// integer arithmetic; rate recursions feed this modulus inputs of millions
/// of bits, where rational normalization would be quadratic.
pub fn phi_consistency_moduli_int(space: &LpSpace, b: &BigRational) -> (NatModulus, NatModulus) {
    assert!(b > &BigRational::zero());
    let lambda = match &space.eta {
        EtaSpec::ClassicalPower { p } => {
            let p = *p;
            let mut c = space.l_high.clone()
                * BigRational::from_integer((p as u64).into())
                * BigRational::from_integer(BigUint::from(8u32).pow(p).into());
            for _ in 0..p.saturating_sub(2) {
                c *= b;
            }
            let (num, den) = crate::num_util::split_pos_rational(&c);
            NatModulus::unary(move |k| {
                let kp = (k + 1u32).pow(p);
                dotminus(&crate::num_util::div_ceil_nat(&(&num * kp), &den), &Nat::one())
            })
            .declared_monotone()
        }
        EtaSpec::Custom(_) => {
            let eta = space.eta.clone();
            let b1 = b.clone();
            let front = space.l_high.clone() / (b * b);
            NatModulus::unary(move |k| {
                let kq = crate::num_util::int_to_rational(&(k + 1u32));
                let inner = BigRational::one() / (BigRational::from_integer(4.into()) * &b1 * kq);
                let value = &front / eta.eval_rat(&inner);
                dotminus(&ceil_rational(&value), &Nat::one())
            })
            .declared_monotone()
        }
    };
    let scale = BigRational::from_integer(16.into()) * b / space.l_low.clone();
    let (s_num, s_den) = crate::num_util::split_pos_rational(&scale);
    let cap_lambda = NatModulus::unary(move |k| {
        dotminus(&crate::num_util::div_ceil_nat(&(&s_num * (k + 1u32)), &s_den), &Nat::one())
    })
    .declared_monotone();
    (lambda, cap_lambda)
}

/// Triangularity moduli from integer consistency moduli:
/// `theta(k) = lambda(2k+1)` (triangular) and
/// `theta_weak(k) = lambda(2*Lambda(k)+1)` (weakly triangular).
pub fn consistency_to_triangularity_int(
    lambda: &NatModulus,
    cap_lambda: &NatModulus,
) -> (NatModulus, NatModulus) {
    let l = lambda.clone();
    let theta = NatModulus::unary(move |k| l.eval1(&(k * 2u32 + 1u32)));
    let l = lambda.clone();
    let cl = cap_lambda.clone();
    let theta_weak = NatModulus::unary(move |k| l.eval1(&(cl.eval1(k) * 2u32 + 1u32)));
    (
        if lambda.is_monotone() { theta.declared_monotone() } else { theta },
        if lambda.is_monotone() && cap_lambda.is_monotone() {
            theta_weak.declared_monotone()
        } else {
            theta_weak
        },
    )
}

/// Real form of the same conversion: `theta(eps) = lambda(eps/2)` and
/// `theta_weak(eps) = lambda(Lambda(eps)/2)`.
pub fn consistency_to_triangularity_real(
    lambda: &RealModulus,
    cap_lambda: &RealModulus,
) -> (RealModulus, RealModulus) {
    let l = lambda.clone();
    let theta = RealModulus::new(move |eps| l.eval(&(eps / BigRational::from_integer(2.into()))));
    let l = lambda.clone();
    let cl = cap_lambda.clone();
    let theta_weak = RealModulus::new(move |eps| {
        l.eval(&(cl.eval(eps) / BigRational::from_integer(2.into())))
    });
    (theta, theta_weak)
}

/// A distance function bundled with whichever moduli it certifies.
#[derive(Clone)]
pub struct GeneralizedDistance {
    pub name: String,
    eval: Arc<dyn Fn(&Point, &Point) -> f64 + Send + Sync>,
    pub theta: Option<NatModulus>,
    pub theta_weak: Option<NatModulus>,
    pub lambda: Option<NatModulus>,
    pub cap_lambda: Option<NatModulus>,
    pub symmetric: bool,
    pub reflexive: bool,
}

impl fmt::Debug for GeneralizedDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralizedDistance").field("name", &self.name).finish()
    }
}

impl GeneralizedDistance {
    pub fn new(name: &str, eval: impl Fn(&Point, &Point) -> f64 + Send + Sync + 'static) -> Self {
        GeneralizedDistance {
            name: name.to_string(),
            eval: Arc::new(eval),
            theta: None,
            theta_weak: None,
            lambda: None,
            cap_lambda: None,
            symmetric: false,
            reflexive: false,
        }
    }

    pub fn eval(&self, x: &Point, y: &Point) -> f64 {
        (self.eval)(x, y)
    }

    /// The Euclidean metric with its common modulus `theta(k) = 2k+1`.
    pub fn euclidean() -> Self {
        let two_k_plus_one = || NatModulus::unary(|k| k * 2u32 + 1u32).declared_monotone();
        GeneralizedDistance {
            name: "metric".into(),
            eval: Arc::new(metric),
            theta: Some(two_k_plus_one()),
            theta_weak: Some(two_k_plus_one()),
            lambda: Some(NatModulus::identity()),
            cap_lambda: Some(NatModulus::identity()),
            symmetric: true,
            reflexive: true,
        }
    }

    /// The duality-map distance `phi` of an `l_p` space, with integer
    /// consistency and triangularity moduli certified on the ball of
    /// radius `b`.
    pub fn bregman_phi(space: &LpSpace, b: &BigRational) -> Self {
        let (lambda, cap_lambda) = phi_consistency_moduli_int(space, b);
        let (theta, theta_weak) = consistency_to_triangularity_int(&lambda, &cap_lambda);
        let sp = space.clone();
        GeneralizedDistance {
            name: format!("phi_l{}", space.p),
            eval: Arc::new(move |x, y| phi_eval(&sp, x, y)),
            theta: Some(theta),
            theta_weak: Some(theta_weak),
            lambda: Some(lambda),
            cap_lambda: Some(cap_lambda),
            symmetric: false,
            reflexive: true,
        }
    }
}

/// The catalog of weakly triangular (indeed triangular) distances with
/// their closed-form moduli.
#[derive(Clone)]
pub enum CatalogKind {
    /// The metric itself.
    Metric,
    /// `phi(x,y) = ||x|| + ||y||`.
    NormSum,
    /// `phi(x,y) = ||y||`.
    NormRight,
    /// The constant distance `phi = c`, `c > 0`.
    Constant { c: BigRational },
    /// `phi(x,y) = max{d(Tx,y), d(Tx,Ty)}` for a map `T`.
    MapPullback { map: Arc<dyn Fn(&Point) -> Point + Send + Sync> },
    /// Case split on a closed ball `B(center, radius)`: the metric inside,
    /// the constant `c` as soon as one argument is outside.
    SetRestricted { center: Point, radius: f64, c: BigRational },
}

pub fn catalog_distance(kind: CatalogKind) -> Result<GeneralizedDistance, DistanceError> {
    let two_k_plus_one = || NatModulus::unary(|k| k * 2u32 + 1u32).declared_monotone();
    Ok(match kind {
        CatalogKind::Metric => GeneralizedDistance::euclidean(),
        CatalogKind::NormSum => {
            let mut d = GeneralizedDistance::new("norm_sum", |x, y| x.norm2() + y.norm2());
            d.theta = Some(two_k_plus_one());
            d.theta_weak = Some(two_k_plus_one());
            d.symmetric = true;
            d
        }
        CatalogKind::NormRight => {
            let mut d = GeneralizedDistance::new("norm_right", |_, y| y.norm2());
            d.theta = Some(two_k_plus_one());
            d.theta_weak = Some(two_k_plus_one());
            d
        }
        CatalogKind::Constant { c } => {
            if c <= BigRational::zero() {
                return Err(DistanceError::NonPositiveConstant);
            }
            // Smallest natural c_bar with c >= 1/(c_bar+1).
            let c_bar = dotminus(&ceil_rational(&(BigRational::one() / &c)), &Nat::one());
            let cf = c.to_f64().unwrap_or(f64::INFINITY);
            let theta = NatModulus::unary(move |_| &c_bar + 1u32);
            let mut d = GeneralizedDistance::new("constant", move |_, _| cf);
            d.theta = Some(theta.clone().declared_monotone());
            d.theta_weak = Some(theta.declared_monotone());
            d.symmetric = true;
            d
        }
        CatalogKind::MapPullback { map } => {
            let m = map.clone();
            let mut d = GeneralizedDistance::new("map_pullback", move |x, y| {
                let tx = m(x);
                metric(&tx, y).max(metric(&tx, &m(y)))
            });
            d.theta = Some(two_k_plus_one());
            d.theta_weak = Some(two_k_plus_one());
            d
        }
        CatalogKind::SetRestricted { center, radius, c } => {
            if c <= BigRational::zero() {
                return Err(DistanceError::NonPositiveConstant);
            }
            let cf = c.to_f64().unwrap_or(f64::INFINITY);
            let cq = c.clone();
            // theta(k) = 2 n0 (k+1) - 1 with n0 = ceil(1/(c(k+1))) + 1.
            let theta = NatModulus::unary(move |k| {
                let kq = crate::num_util::int_to_rational(&(k + 1u32));
                let n0 = ceil_rational(&(BigRational::one() / (&cq * &kq))) + 1u32;
                dotminus(&(n0 * (k + 1u32) * 2u32), &Nat::one())
            });
            let inside = move |pt: &Point| metric(pt, &center) <= radius;
            let mut d = GeneralizedDistance::new("set_restricted", move |x, y| {
                if inside(x) && inside(y) {
                    metric(x, y)
                } else {
                    cf
                }
            });
            d.theta = Some(theta.clone().declared_monotone());
            d.theta_weak = Some(theta.declared_monotone());
            d.symmetric = true;
            d
        }
    })
}

/// One violation of a triangularity implication.
#[derive(Debug, Clone)]
pub struct TriangularityViolation {
    pub k: u64,
    pub premise: f64,
    pub conclusion: f64,
    pub threshold: f64,
}

/// Which conclusion the triangularity implication asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangularityMode {
    /// `phi(y,x), phi(y,z) small -> d(x,z) small`.
    Strong,
    /// `phi(y,x), phi(y,z) small -> phi(x,z) small`.
    Weak,
}

/// Monte-Carlo check of the (weak) triangularity implication of a distance
/// within the ball of radius `bound`, over `trials` sampled triples and a
/// small grid of `k`. Sampling mixes global triples with tight clusters so
/// the premise is exercised non-vacuously.
pub fn triangularity_check(
    dist: &GeneralizedDistance,
    dim: usize,
    bound: f64,
    k_grid: &[u64],
    trials: usize,
    seed: u64,
    mode: TriangularityMode,
) -> Vec<TriangularityViolation> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modulus = match mode {
        TriangularityMode::Strong => dist.theta.as_ref(),
        TriangularityMode::Weak => dist.theta_weak.as_ref(),
    }
    .expect("distance carries the requested triangularity modulus");
    let mut out = Vec::new();
    let tol = 1e-12;
    for t in 0..trials {
        let y = sample_ball(&mut rng, dim, bound);
        let (x, z) = if t % 2 == 0 {
            (sample_ball(&mut rng, dim, bound), sample_ball(&mut rng, dim, bound))
        } else {
            // Clustered triple: x, z near y (and near the origin half the
            // time, which is where norm-based catalog distances get small).
            let anchor = if t % 4 == 1 { y.clone() } else { y.scale(1e-3) };
            let r: f64 = rng.gen_range(1e-9f64..0.5);
            (perturb(&mut rng, &anchor, r), perturb(&mut rng, &anchor, r))
        };
        for &k in k_grid {
            let th = modulus.eval1_u64(k);
            let gate = th.to_f64().map(|v| 1.0 / (v + 1.0)).unwrap_or(0.0);
            if dist.eval(&y, &x) <= gate && dist.eval(&y, &z) <= gate {
                let conclusion = match mode {
                    TriangularityMode::Strong => metric(&x, &z),
                    TriangularityMode::Weak => dist.eval(&x, &z),
                };
                let threshold = 1.0 / (k as f64 + 1.0);
                if conclusion > threshold + tol {
                    out.push(TriangularityViolation { k, premise: gate, conclusion, threshold });
                }
            }
        }
    }
    out
}

/// One violation of a consistency implication or of the two-sided bound
/// sandwich for `phi`.
#[derive(Debug, Clone)]
pub struct PhiViolation {
    pub detail: String,
    pub x: Point,
    pub y: Point,
}

/// Monte-Carlo check of both consistency implications of
/// [`phi_consistency_moduli`] for pairs in the ball of radius `b`.
pub fn phi_consistency_check(
    space: &LpSpace,
    b: &BigRational,
    eps_list: &[BigRational],
    trials: usize,
    seed: u64,
) -> Vec<PhiViolation> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lambda, cap_lambda) = phi_consistency_moduli(space, b);
    let bf = b.to_f64().unwrap();
    let tol = 1e-12;
    let mut out = Vec::new();
    for t in 0..trials {
        let x = sample_lp_ball(&mut rng, space, bf);
        let y = if t % 2 == 0 {
            sample_lp_ball(&mut rng, space, bf)
        } else {
            let r: f64 = 10f64.powf(rng.gen_range(-7.0f64..-0.3));
            clamp_lp(&perturb(&mut rng, &x, r), space, bf)
        };
        let dxy = x.sub(&y).norm_p(space.p_f64());
        let phi = phi_eval(space, &x, &y);
        for eps in eps_list {
            let ef = eps.to_f64().unwrap();
            let lam = lambda.eval(eps).to_f64().unwrap();
            let cap = cap_lambda.eval(eps).to_f64().unwrap();
            if dxy <= cap && phi > ef + tol {
                out.push(PhiViolation {
                    detail: format!("||x-y||={dxy} <= Lambda({ef})={cap} but phi={phi} > {ef}"),
                    x: x.clone(),
                    y: y.clone(),
                });
            }
            if phi <= lam && dxy > ef + tol {
                out.push(PhiViolation {
                    detail: format!("phi={phi} <= lambda({ef})={lam} but ||x-y||={dxy} > {ef}"),
                    x: x.clone(),
                    y: y.clone(),
                });
            }
        }
    }
    out
}

/// Monte-Carlo check of the two-sided bound sandwich
/// `(2/l_high) b^2 eta(||x-y||/4b) <= phi(x,y) <= 16 b ||x-y||`
/// for pairs in the ball of radius `b`.
pub fn alber_bounds_check(
    space: &LpSpace,
    b: &BigRational,
    trials: usize,
    seed: u64,
) -> Vec<PhiViolation> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bf = b.to_f64().unwrap();
    let l_high = space.l_high.to_f64().unwrap();
    let tol = 1e-12;
    let mut out = Vec::new();
    for _ in 0..trials {
        let x = sample_lp_ball(&mut rng, space, bf);
        let y = sample_lp_ball(&mut rng, space, bf);
        let dxy = x.sub(&y).norm_p(space.p_f64());
        let phi = phi_eval(space, &x, &y);
        let lower = (2.0 / l_high) * bf * bf * space.eta.eval_f64(dxy / (4.0 * bf));
        let upper = 16.0 * bf * dxy;
        if lower > phi + tol {
            out.push(PhiViolation {
                detail: format!("lower bound {lower} > phi {phi}"),
                x: x.clone(),
                y,
            });
        } else if phi > upper + tol {
            out.push(PhiViolation { detail: format!("phi {phi} > upper bound {upper}"), x, y });
        }
    }
    out
}

fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Point {
    loop {
        let p = Point((0..dim).map(|_| rng.gen_range(-radius..=radius)).collect());
        if p.norm2() <= radius {
            return p;
        }
    }
}

/// Uniform rejection sampling from the `l_p` ball of the given radius.
pub fn sample_lp_ball(rng: &mut ChaCha8Rng, space: &LpSpace, radius: f64) -> Point {
    loop {
        let p = Point((0..space.dim).map(|_| rng.gen_range(-radius..=radius)).collect());
        if p.norm_p(space.p_f64()) <= radius {
            return p;
        }
    }
}

fn clamp_lp(x: &Point, space: &LpSpace, radius: f64) -> Point {
    let n = x.norm_p(space.p_f64());
    if n <= radius {
        x.clone()
    } else {
        x.scale(radius / n * (1.0 - 1e-15))
    }
}

fn perturb(rng: &mut ChaCha8Rng, x: &Point, radius: f64) -> Point {
    let d = x.dim();
    let dir = Point((0..d).map(|_| rng.gen_range(-1.0f64..=1.0)).collect());
    let n = dir.norm2();
    if n == 0.0 {
        return x.clone();
    }
    let r: f64 = rng.gen_range(0.0f64..=radius);
    x.add(&dir.scale(r / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn space(dim: usize, p: u32) -> LpSpace {
        LpSpace::new(dim, p, q(1, 1)).unwrap()
    }

    #[test]
    fn duality_map_hilbert_is_identity() {
        let s = space(3, 2);
        let x = Point(vec![0.3, -1.7, 2.4]);
        let jx = duality_map(&s, &x);
        for (a, b) in x.0.iter().zip(&jx.0) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(duality_map(&s, &Point::zero(3)), Point::zero(3));
    }

    #[test]
    fn duality_map_p4_hand_value() {
        let s = space(2, 4);
        let x = Point(vec![1.0, 1.0]);
        let jx = duality_map(&s, &x);
        // ||x||_4 = 2^(1/4), factor ||x||^(-2) = 2^(-1/2).
        let expect = 0.7071067811865476;
        assert!((jx.0[0] - expect).abs() < 1e-12);
        assert!((jx.0[1] - expect).abs() < 1e-12);
        // <x, Jx> = ||x||^2 = sqrt(2).
        assert!((x.dot(&jx) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn duality_identities_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in [2u32, 3, 4] {
            let s = space(3, p);
            for _ in 0..200 {
                let x = sample_lp_ball(&mut rng, &s, 2.0);
                let jx = duality_map(&s, &x);
                let n = x.norm_p(s.p_f64());
                assert!((x.dot(&jx) - n * n).abs() <= 1e-10 * (1.0 + n * n));
                assert!((jx.norm_p(s.q_f64()) - n).abs() <= 1e-9);
                let back = duality_map_inverse(&s, &jx);
                assert!(back.sub(&x).norm2() <= 1e-12);
            }
        }
    }

    #[test]
    fn phi_basics() {
        let s = space(2, 4);
        let x = Point(vec![1.0, 0.0]);
        let y = Point(vec![0.0, 1.0]);
        assert!((phi_eval(&s, &x, &y) - 2.0).abs() < 1e-14);
        assert!(phi_eval(&s, &x, &x).abs() < 1e-14);
        // p = 2 reduces to the squared distance.
        let s2 = space(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = sample_ball(&mut rng, 2, 2.0);
            let b = sample_ball(&mut rng, 2, 2.0);
            let d = metric(&a, &b);
            assert!((phi_eval(&s2, &a, &b) - d * d).abs() < 1e-12);
            // The norm-difference lower bound.
            let gap = (a.norm2() - b.norm2()).powi(2);
            assert!(phi_eval(&s2, &a, &b) >= gap - 1e-12);
        }
    }

    #[test]
    fn consistency_moduli_hand_values() {
        let s = space(2, 2);
        let (lambda, cap_lambda) = phi_consistency_moduli(&s, &q(1, 1));
        assert_eq!(cap_lambda.eval(&q(16, 100)), q(1, 100));
        // lambda(2/5) = eta(1/10)/3.18 = (1/800)*(50/159) = 1/2544.
        assert_eq!(lambda.eval(&q(2, 5)), q(1, 2544));
    }

    #[test]
    fn consistency_to_triangularity_examples() {
        let (theta, _) =
            consistency_to_triangularity_int(&NatModulus::identity(), &NatModulus::identity());
        for k in 0..10u64 {
            assert_eq!(theta.eval1_u64(k), Nat::from(2 * k + 1));
        }
        let (theta_r, _) =
            consistency_to_triangularity_real(&RealModulus::identity(), &RealModulus::identity());
        assert_eq!(theta_r.eval(&q(1, 1)), q(1, 2));
    }

    #[test]
    fn catalog_constant_modulus() {
        let d = catalog_distance(CatalogKind::Constant { c: q(1, 2) }).unwrap();
        assert_eq!(d.theta.as_ref().unwrap().eval1_u64(5), Nat::from(2u32));
        assert!(catalog_distance(CatalogKind::Constant { c: q(0, 1) }).is_err());
    }

    #[test]
    fn catalog_triangularity_monte_carlo() {
        let grid: Vec<u64> = vec![0, 1, 2, 5, 9];
        for (kind, name) in [
            (CatalogKind::Metric, "metric"),
            (CatalogKind::NormSum, "norm_sum"),
            (CatalogKind::NormRight, "norm_right"),
            (CatalogKind::Constant { c: q(1, 2) }, "constant"),
            (
                CatalogKind::MapPullback {
                    map: Arc::new(|x: &Point| Point(vec![x.0[1], -x.0[0]])),
                },
                "map_pullback",
            ),
            (
                CatalogKind::SetRestricted {
                    center: Point::zero(2),
                    radius: 1.0,
                    c: q(1, 2),
                },
                "set_restricted",
            ),
        ] {
            let d = catalog_distance(kind).unwrap();
            let v = triangularity_check(&d, 2, 2.0, &grid, 2000, 11, TriangularityMode::Strong);
            assert!(v.is_empty(), "{name}: {:?}", v.first());
            let v = triangularity_check(&d, 2, 2.0, &grid, 2000, 13, TriangularityMode::Weak);
            assert!(v.is_empty(), "{name} (weak): {:?}", v.first());
        }
    }

    #[test]
    fn phi_consistency_monte_carlo_small() {
        let s = space(2, 4);
        let eps = vec![q(1, 20), q(1, 100)];
        let v = phi_consistency_check(&s, &q(1, 1), &eps, 2000, 5);
        assert!(v.is_empty(), "{:?}", v.first().map(|x| &x.detail));
    }

    #[test]
    fn alber_bounds_monte_carlo_small() {
        for p in [2u32, 4] {
            let s = space(2, p);
            let v = alber_bounds_check(&s, &q(1, 1), 2000, 17);
            assert!(v.is_empty(), "p={p}: {:?}", v.first().map(|x| &x.detail));
        }
    }

    #[test]
    fn bregman_phi_distance_reflexive() {
        let s = space(2, 4);
        let d = GeneralizedDistance::bregman_phi(&s, &q(2, 1));
        let x = Point(vec![0.4, -0.2]);
        assert!(d.eval(&x, &x).abs() < 1e-14);
        assert!(d.theta.is_some() && d.lambda.is_some());
    }
}
