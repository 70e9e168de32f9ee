//! The Mann-type proximal point algorithm in `l_p^d`:
//! `x_{n+1} = J^{-1}(alpha_n J x_n + (1 - alpha_n) J J_{r_n} x_n)` for a
//! monotone operator `T` with resolvent `J_r x = (J + rT)^{-1} J x`.
//!
//! The iteration is Fejér monotone w.r.t. the duality-map distance `phi`,
//! not the norm, which is where the generalized framework earns its keep.
//! Resolvents are closed-form for scaled-duality operators and solved by a
//! damped Newton iteration otherwise; every bound formula is exact over
//! the certified integer bound `M`.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use thiserror::Error;

use crate::distances::{
    duality_map, duality_map_inverse, phi_consistency_moduli_int, phi_eval, GeneralizedDistance,
    LpSpace, Point,
};
use crate::framework::{ApproximationFamily, DistanceSeq, FejerInstance, PointSeq};
use crate::moduli::{CounterFunction, Nat, NatModulus, RealModulus};
use crate::num_util::{ceil_rational, ceil_root_scaled, dotminus, int_to_rational};
use crate::rates::{run_recursion, EvalBudget, RateError, RateResult, RateValue};

#[derive(Debug, Error)]
pub enum BanachError {
    #[error("resolvent solver did not converge: residual {residual} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("Mann schedule invalid: {0}")]
    ScheduleInvalid(String),
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// Nondecreasing scalar functions for coordinatewise operators.
#[derive(Clone, Copy, Debug)]
pub enum ScalarMonotone {
    /// `h(t) = t^3`.
    Cubic,
    /// `h(t) = slope * t`, `slope >= 0`.
    Linear { slope: f64 },
}

impl ScalarMonotone {
    fn eval(&self, t: f64) -> f64 {
        match self {
            ScalarMonotone::Cubic => t * t * t,
            ScalarMonotone::Linear { slope } => slope * t,
        }
    }

    fn deriv(&self, t: f64) -> f64 {
        match self {
            ScalarMonotone::Cubic => 3.0 * t * t,
            ScalarMonotone::Linear { slope } => *slope,
        }
    }
}

/// A single-valued realization of a monotone operator `T: X -> X*`,
/// with a witness pair `(c, d)`, `d in Tc`, and bounds `C >= ||c||`,
/// `D >= ||d||` feeding the resolvent majorant.
#[derive(Clone)]
pub struct MonotoneOperator {
    pub kind: OperatorKind,
    pub witness_c: Point,
    pub witness_d: Point,
    pub c_bound: BigRational,
    pub d_bound: BigRational,
}

#[derive(Clone)]
pub enum OperatorKind {
    /// `Tx = c Jx`, `c >= 0`.
    ScaledDuality { c: BigRational },
    /// `(Tx)_i = h(x_i)` for a nondecreasing scalar `h` with `h(0) = 0`.
    Coordinatewise { h: ScalarMonotone },
}

impl fmt::Debug for MonotoneOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            OperatorKind::ScaledDuality { c } => format!("scaled duality (c = {c})"),
            OperatorKind::Coordinatewise { h } => format!("coordinatewise {h:?}"),
        };
        write!(f, "MonotoneOperator({kind})")
    }
}

impl MonotoneOperator {
    pub fn scaled_duality(c: BigRational, dim: usize) -> Self {
        assert!(c >= BigRational::zero());
        MonotoneOperator {
            kind: OperatorKind::ScaledDuality { c },
            witness_c: Point::zero(dim),
            witness_d: Point::zero(dim),
            c_bound: BigRational::zero(),
            d_bound: BigRational::zero(),
        }
    }

    pub fn coordinatewise(h: ScalarMonotone, dim: usize) -> Self {
        MonotoneOperator {
            kind: OperatorKind::Coordinatewise { h },
            witness_c: Point::zero(dim),
            witness_d: Point::zero(dim),
            c_bound: BigRational::zero(),
            d_bound: BigRational::zero(),
        }
    }

    /// `Tx` in dual coordinates.
    pub fn apply(&self, space: &LpSpace, x: &Point) -> Point {
        match &self.kind {
            OperatorKind::ScaledDuality { c } => {
                duality_map(space, x).scale(c.to_f64().unwrap())
            }
            OperatorKind::Coordinatewise { h } => Point(x.0.iter().map(|&t| h.eval(t)).collect()),
        }
    }

    /// Zero of the operator (all shipped kinds vanish at the origin).
    pub fn zero_point(&self, dim: usize) -> Point {
        Point::zero(dim)
    }
}

/// Monte-Carlo check of `<x - y, Tx - Ty> >= 0` on random pairs.
pub fn monotonicity_check(
    space: &LpSpace,
    op: &MonotoneOperator,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Vec<String> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..trials {
        let x = Point((0..space.dim).map(|_| rng.gen_range(-2.0f64..=2.0)).collect());
        let y = Point((0..space.dim).map(|_| rng.gen_range(-2.0f64..=2.0)).collect());
        let val = x.sub(&y).dot(&op.apply(space, &x).sub(&op.apply(space, &y)));
        if val < -tol {
            out.push(format!("monotonicity violated: {val}"));
        }
    }
    out
}

/// Modulus of uniform continuity of the duality map on bounded sets,
/// backed by the analytic global Lipschitz bound
/// `||Jz - Jw||_q <= (2p-3) d^((p-2)/p) ||z - w||_p` (for `p >= 2`; equal
/// to 1 for `p = 2`), rounded up to a rational.
#[derive(Clone, Debug)]
pub struct OmegaJ {
    pub lipschitz: BigRational,
}

impl OmegaJ {
    pub fn for_space(space: &LpSpace) -> Self {
        let p = space.p;
        let d = space.dim as u64;
        // Rational upper bound u/den >= d^((p-2)/p) with den = 1000:
        // smallest u with u^p >= d^(p-2) * den^p.
        let den: u64 = 1000;
        let target = BigRational::from_integer(
            (BigUint::from(d).pow(p - 2) * BigUint::from(den).pow(p)).into(),
        );
        let u = smallest_pow_at_least(&target, p);
        let root = BigRational::new(u.into(), BigUint::from(den).into());
        let lip = BigRational::from_integer((2 * p as u64 - 3).into()) * root;
        OmegaJ { lipschitz: lip.max(BigRational::one()) }
    }

    /// Real form: `omega(eps, b) = eps / lipschitz <= eps`.
    pub fn eval_real(&self, eps: &BigRational) -> BigRational {
        eps / &self.lipschitz
    }

    pub fn eval_real_f64(&self, eps: f64) -> f64 {
        eps / self.lipschitz.to_f64().unwrap()
    }

    /// Integer form: `||z-w|| <= 1/(omega(k)+1) -> ||Jz-Jw|| <= 1/(k+1)`,
    /// via `omega(k) = ceil(lipschitz * (k+1)) - 1`, in integer arithmetic.
    pub fn eval_int(&self, k: &Nat) -> Nat {
        let (num, den) = crate::num_util::split_pos_rational(&self.lipschitz);
        dotminus(&crate::num_util::div_ceil_nat(&(num * (k + 1u32)), &den), &Nat::one())
    }

    /// Monte-Carlo check that the claimed Lipschitz constant is honest.
    pub fn lipschitz_check(&self, space: &LpSpace, bound: f64, trials: usize, seed: u64) -> Vec<String> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lip = self.lipschitz.to_f64().unwrap();
        let mut out = Vec::new();
        for _ in 0..trials {
            let z = crate::distances::sample_lp_ball(&mut rng, space, bound);
            let w = crate::distances::sample_lp_ball(&mut rng, space, bound);
            let lhs = duality_map(space, &z).sub(&duality_map(space, &w)).norm_p(space.q_f64());
            let rhs = lip * z.sub(&w).norm_p(space.p_f64());
            if lhs > rhs + 1e-10 {
                out.push(format!("Lipschitz bound violated: {lhs} > {rhs}"));
            }
        }
        out
    }
}

fn smallest_pow_at_least(target: &BigRational, p: u32) -> BigUint {
    let num = target.numer().to_biguint().expect("nonnegative");
    let den = target.denom().to_biguint().expect("positive");
    crate::num_util::nat_root_ceil(&num, &den, p)
}

/// `||Jz + r Tz - Jx||_q`, the defect of a resolvent candidate.
pub fn resolvent_residual(
    space: &LpSpace,
    op: &MonotoneOperator,
    r: f64,
    z: &Point,
    x: &Point,
) -> f64 {
    let jz = duality_map(space, z);
    let tz = op.apply(space, z);
    let jx = duality_map(space, x);
    jz.add(&tz.scale(r)).sub(&jx).norm_p(space.q_f64())
}

/// `J_r x = (J + rT)^{-1} J x`: closed form for scaled-duality operators,
/// damped Newton otherwise.
pub fn resolvent(
    space: &LpSpace,
    op: &MonotoneOperator,
    r: f64,
    x: &Point,
    tol: f64,
) -> Result<Point, BanachError> {
    assert!(r > 0.0 && tol > 0.0);
    if let OperatorKind::ScaledDuality { c } = &op.kind {
        // Jz + rc Jz = Jx and positive homogeneity of J give z = x/(1+rc).
        let cf = c.to_f64().unwrap();
        return Ok(x.scale(1.0 / (1.0 + r * cf)));
    }
    resolvent_generic(space, op, r, x, tol)
}

/// The Newton path, exposed separately so closed forms can be cross-checked.
pub fn resolvent_generic(
    space: &LpSpace,
    op: &MonotoneOperator,
    r: f64,
    x: &Point,
    tol: f64,
) -> Result<Point, BanachError> {
    let jx = duality_map(space, x);
    if jx.norm_p(space.q_f64()) <= tol {
        // 0 in T0 for all shipped kinds, so J_r 0 = 0.
        return Ok(Point::zero(x.dim()));
    }
    let theta = |z: &Point| {
        duality_map(space, z).add(&op.apply(space, z).scale(r)).sub(&jx)
    };
    let norm = |v: &Point| v.norm_p(space.q_f64());
    let starts = [x.clone(), x.scale(0.5), Point::zero(x.dim())];
    let mut best_res = f64::INFINITY;
    let mut iterations = 0usize;
    for start in starts {
        let mut z = start;
        let mut res = norm(&theta(&z));
        for _ in 0..200 {
            iterations += 1;
            if res <= tol {
                return Ok(z);
            }
            let jac = system_jacobian(space, op, r, &z);
            let rhs: Vec<f64> = theta(&z).0.iter().map(|v| -v).collect();
            let Some(dz) = solve_linear(jac, rhs) else { break };
            let mut t = 1.0f64;
            let mut accepted = false;
            for _ in 0..40 {
                let cand = z.add(&Point(dz.clone()).scale(t));
                let cres = norm(&theta(&cand));
                if cres < res * (1.0 - 1e-4 * t) || cres <= tol {
                    z = cand;
                    res = cres;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if res <= tol {
            return Ok(z);
        }
        best_res = best_res.min(res);
    }
    Err(BanachError::NonConvergence { residual: best_res, iterations })
}

/// Jacobian of `z -> Jz + r Tz` at `z`.
fn system_jacobian(space: &LpSpace, op: &MonotoneOperator, r: f64, z: &Point) -> Vec<Vec<f64>> {
    let d = z.dim();
    let mut jac = dj_matrix(space, z);
    match &op.kind {
        OperatorKind::ScaledDuality { c } => {
            let cf = c.to_f64().unwrap() * r;
            let base = dj_matrix(space, z);
            for i in 0..d {
                for j in 0..d {
                    jac[i][j] += cf * base[i][j];
                }
            }
        }
        OperatorKind::Coordinatewise { h } => {
            for (i, &zi) in z.0.iter().enumerate() {
                jac[i][i] += r * h.deriv(zi);
            }
        }
    }
    jac
}

/// Derivative of the duality map:
/// `DJ(z) = (p-1)||z||^{2-p} diag(|z_i|^{p-2}) + (2-p)||z||^{2-2p} w w^T`
/// with `w_i = |z_i|^{p-1} sgn z_i`; the identity at `z = 0` (where the
/// map is continuous and the Newton step only needs a nonsingular seed).
fn dj_matrix(space: &LpSpace, z: &Point) -> Vec<Vec<f64>> {
    let d = z.dim();
    let p = space.p_f64();
    let n = z.norm_p(p);
    let mut jac = vec![vec![0.0; d]; d];
    if p == 2.0 || n == 0.0 {
        for (i, row) in jac.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        return jac;
    }
    let w: Vec<f64> = z.0.iter().map(|&t| t.abs().powf(p - 1.0) * t.signum()).collect();
    let diag_factor = (p - 1.0) * n.powf(2.0 - p);
    let rank1_factor = (2.0 - p) * n.powf(2.0 - 2.0 * p);
    for i in 0..d {
        jac[i][i] += diag_factor * z.0[i].abs().powf(p - 2.0);
        for j in 0..d {
            jac[i][j] += rank1_factor * w[i] * w[j];
        }
    }
    jac
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

/// `mu(R, b) = max{(1+C)(b + RD) + C, 1}`, the resolvent norm majorant.
pub fn mu_resolvent_bound(
    c: &BigRational,
    d: &BigRational,
    r: &BigRational,
    b: &BigRational,
) -> BigRational {
    let one = BigRational::one();
    let v = (&one + c) * (b + r * d) + c;
    v.max(one)
}

fn mu_f64(c: f64, d: f64, r: f64, b: f64) -> f64 {
    ((1.0 + c) * (b + r * d) + c).max(1.0)
}

/// The Mann schedule: constant `alpha_n` and `r_n` with their strict
/// bounds `alpha_bar` and `r_bar`. Constant sequences keep every prefix
/// maximum exact at arbitrary index size.
#[derive(Clone, Debug)]
pub struct MannSchedule {
    pub alpha: BigRational,
    pub r: BigRational,
    pub alpha_bar: BigRational,
    pub r_bar: BigRational,
}

impl MannSchedule {
    pub fn constant(
        alpha: BigRational,
        r: BigRational,
        alpha_bar: BigRational,
        r_bar: BigRational,
    ) -> Result<Self, BanachError> {
        if alpha < BigRational::zero() || alpha >= alpha_bar || alpha_bar >= BigRational::one() {
            return Err(BanachError::ScheduleInvalid(format!(
                "need 0 <= alpha_n < alpha_bar < 1, got alpha = {alpha}, alpha_bar = {alpha_bar}"
            )));
        }
        if r_bar <= BigRational::zero() || r < r_bar {
            return Err(BanachError::ScheduleInvalid(format!(
                "need r_n >= r_bar > 0, got r = {r}, r_bar = {r_bar}"
            )));
        }
        Ok(MannSchedule { alpha, r, alpha_bar, r_bar })
    }

    pub fn alpha_at(&self, _n: u64) -> BigRational {
        self.alpha.clone()
    }

    pub fn r_at(&self, _n: u64) -> BigRational {
        self.r.clone()
    }

    /// `max{r_i | i <= upto}`; constant schedules are index-independent.
    pub fn r_max_prefix(&self, _upto: &Nat) -> BigRational {
        self.r.clone()
    }
}

/// A recorded Mann run: iterates, per-step resolvent points
/// `J_{r_n} x_n`, the residuals `||x_n - J_{r_n} x_n||`, the solver
/// defects, and the certified integer bound `M >= ||x_n||`.
#[derive(Clone, Debug)]
pub struct BanachRun {
    pub points: Vec<Point>,
    pub resolvents: Vec<Point>,
    pub residuals: Vec<f64>,
    pub solver_residuals: Vec<f64>,
    pub m_bound: Nat,
}

/// One Mann step `J^{-1}(alpha_n J x_n + (1 - alpha_n) J J_{r_n} x_n)`.
pub fn mann_step(
    space: &LpSpace,
    op: &MonotoneOperator,
    sched: &MannSchedule,
    x: &Point,
    n: u64,
    tol: f64,
) -> Result<Point, BanachError> {
    let a = sched.alpha_at(n).to_f64().unwrap();
    let r = sched.r_at(n).to_f64().unwrap();
    let z = resolvent(space, op, r, x, tol)?;
    let u = duality_map(space, x).scale(a).add(&duality_map(space, &z).scale(1.0 - a));
    Ok(duality_map_inverse(space, &u))
}

/// Runs the iteration for `steps` steps, recording resolvent data for
/// every index including the last.
pub fn run_mann(
    space: &LpSpace,
    op: &MonotoneOperator,
    sched: &MannSchedule,
    x0: &Point,
    steps: u64,
    tol: f64,
) -> Result<BanachRun, BanachError> {
    let mut points = Vec::with_capacity(steps as usize + 1);
    let mut resolvents = Vec::with_capacity(steps as usize + 1);
    let mut residuals = Vec::with_capacity(steps as usize + 1);
    let mut solver_residuals = Vec::with_capacity(steps as usize + 1);
    points.push(x0.clone());
    for n in 0..=steps {
        let x = points[n as usize].clone();
        let r = sched.r_at(n).to_f64().unwrap();
        let z = resolvent(space, op, r, &x, tol)?;
        residuals.push(x.sub(&z).norm_p(space.p_f64()));
        solver_residuals.push(resolvent_residual(space, op, r, &z, &x));
        let a = sched.alpha_at(n).to_f64().unwrap();
        if n < steps {
            let u = duality_map(space, &x).scale(a).add(&duality_map(space, &z).scale(1.0 - a));
            points.push(duality_map_inverse(space, &u));
        }
        resolvents.push(z);
    }
    let mut m = 0f64;
    for pnt in &points {
        m = m.max(pnt.norm_p(space.p_f64()));
    }
    let m_bound = ceil_rational(&BigRational::from_float(m).unwrap_or_else(BigRational::zero));
    Ok(BanachRun { points, resolvents, residuals, solver_residuals, m_bound })
}

/// The approximation family of a constant-`r` run:
/// `AF_k = {x : ||x - J_r x|| <= 1/(k+1)}`.
pub fn family_for(space: &LpSpace, op: &MonotoneOperator, sched: &MannSchedule) -> ApproximationFamily {
    let space = space.clone();
    let op = op.clone();
    let r = sched.r.to_f64().unwrap();
    ApproximationFamily::from_residual(move |x| {
        match resolvent(&space, &op, r, x, 1e-12) {
            Ok(z) => x.sub(&z).norm_p(space.p_f64()),
            Err(_) => f64::INFINITY,
        }
    })
}

/// Checks `phi(x, J_r y) + phi(J_r y, y) <= phi(x, y) + tol` for a zero
/// `x` of the operator against sampled `y`.
pub fn kt_inequality_check(
    space: &LpSpace,
    op: &MonotoneOperator,
    zero: &Point,
    samples: &[Point],
    r: f64,
    tol: f64,
) -> Vec<String> {
    let mut out = Vec::new();
    for y in samples {
        let zr = match resolvent(space, op, r, y, 1e-13) {
            Ok(z) => z,
            Err(e) => {
                out.push(format!("resolvent failed: {e}"));
                continue;
            }
        };
        let lhs = phi_eval(space, zero, &zr) + phi_eval(space, &zr, y);
        let rhs = phi_eval(space, zero, y);
        if lhs > rhs + tol {
            out.push(format!("KT inequality violated: {lhs} > {rhs}"));
        }
    }
    out
}

/// The quantitative KT perturbation: whenever
/// `||x - J_s x|| <= omega(eps/2E, max{b, mu(s,b)})` holds numerically,
/// asserts `phi(x, J_r y) + phi(J_r y, y) <= phi(x, y) + eps + tol`.
/// Returns `None` when the premise fails (vacuous) or the conclusion holds.
#[allow(clippy::too_many_arguments)]
pub fn quant_kt_check(
    space: &LpSpace,
    op: &MonotoneOperator,
    omega: &OmegaJ,
    x: &Point,
    y: &Point,
    r: f64,
    s: f64,
    eps: f64,
    e_bound: f64,
    tol: f64,
) -> Result<Option<String>, BanachError> {
    let b = x.norm_p(space.p_f64()).max(y.norm_p(space.p_f64()));
    let c = op.c_bound.to_f64().unwrap();
    let d = op.d_bound.to_f64().unwrap();
    let needed_e = (2.0 * (mu_f64(c, d, r, b) + b))
        .max(2.0 * r / s * (mu_f64(c, d, r, b) + mu_f64(c, d, s, b)));
    assert!(e_bound >= needed_e, "E = {e_bound} below the required {needed_e}");
    let zs = resolvent(space, op, s, x, 1e-13)?;
    let premise = x.sub(&zs).norm_p(space.p_f64()) <= omega.eval_real_f64(eps / (2.0 * e_bound));
    if !premise {
        return Ok(None);
    }
    let zr = resolvent(space, op, r, y, 1e-13)?;
    let lhs = phi_eval(space, x, &zr) + phi_eval(space, &zr, y);
    let rhs = phi_eval(space, x, y) + eps;
    if lhs > rhs + tol {
        return Ok(Some(format!("quantitative KT violated: {lhs} > {rhs}")));
    }
    Ok(None)
}

/// `E^0_{n,m} = ceil(max{2(mu(r^,M) + M), 2 r^ r_n^{-1} (mu(r^,M) + mu(r_n,M))})`
/// with `r^ = max{r_i | i <= n+m-1}` (truncated).
pub fn e0_bound(
    op: &MonotoneOperator,
    sched: &MannSchedule,
    m_bound: &BigRational,
    n: &Nat,
    m: &Nat,
) -> Nat {
    let r_hat = sched.r_max_prefix(&dotminus(&(n + m), &Nat::one()));
    let r_n = sched.r.clone();
    let two = BigRational::from_integer(2.into());
    let mu_hat = mu_resolvent_bound(&op.c_bound, &op.d_bound, &r_hat, m_bound);
    let mu_n = mu_resolvent_bound(&op.c_bound, &op.d_bound, &r_n, m_bound);
    let a = &two * (&mu_hat + m_bound);
    let b = &two * &r_hat / &r_n * (&mu_hat + &mu_n);
    ceil_rational(&a.max(b))
}

/// `E^1_k` from the approximate-point lemma, with
/// `r~ = max{r_i | i <= k}`.
pub fn e1_bound(op: &MonotoneOperator, sched: &MannSchedule, m_bound: &BigRational, k: &Nat) -> Nat {
    let r_tilde = sched.r_max_prefix(k);
    let two = BigRational::from_integer(2.into());
    let one = BigRational::one();
    let mu_tilde = mu_resolvent_bound(&op.c_bound, &op.d_bound, &r_tilde, m_bound);
    let rbar_inv = &one / &sched.r_bar;
    let inner =
        (&one + &op.c_bound) * (&rbar_inv * m_bound + &op.d_bound) + &op.c_bound;
    let a = &two * (&mu_tilde + m_bound);
    let b = &two * &r_tilde * (&rbar_inv * &mu_tilde + inner.max(rbar_inv.clone()));
    ceil_rational(&a.max(b))
}

/// Modulus of uniform `phi`-Fejér monotonicity of the run:
/// `chi(n,m,r) = max{n, omega(2 E^0_{n,m} max{1, (r+1)(m-1)} + 1)}`
/// (subtraction truncated, `omega` at ball `M+1`).
pub fn chi_banach(n: &Nat, m: &Nat, r: &Nat, e0: &Nat, omega: &OmegaJ) -> Nat {
    let inner = dotminus(&((r + 1u32) * dotminus(m, &Nat::one())), &Nat::one()) + 1u32;
    let arg = e0 * 2u32 * inner + 1u32;
    n.clone().max(omega.eval_int(&arg))
}

/// Approximate-point index bound
/// `Phi(k) = 2 ceil((lambda(omega(2 E^1_k lambda(k) + 1)) + 1) b / (1 - alpha_bar))`.
pub fn phi_bound_banach(
    k: &Nat,
    b: &BigRational,
    alpha_bar: &BigRational,
    lambda: &NatModulus,
    omega: &OmegaJ,
    e1: &Nat,
) -> Nat {
    let lk = lambda.eval1(k);
    let inner = omega.eval_int(&(e1 * 2u32 * lk + 1u32));
    let scale = b / (BigRational::one() - alpha_bar);
    let (num, den) = crate::num_util::split_pos_rational(&scale);
    crate::num_util::div_ceil_nat(&((lambda.eval1(&inner) + 1u32) * num), &den) * 2u32
}

/// Modulus of total boundedness of the `l_p` ball of radius `M`: boxes of
/// the circumscribed cube, `gamma(k) = ceil(2(k+1) sqrt(d) M)^d` (same-box
/// points are `1/(k+1)`-close in `l_2` and hence in `l_p`, `p >= 2`).
pub fn gamma_lp_ball(space: &LpSpace, m_bound: &BigRational, k: &Nat) -> Nat {
    let s = BigRational::from_integer(2.into()) * int_to_rational(&(k + 1u32)) * m_bound;
    ceil_root_scaled(&s, space.dim as u64, 2).pow(space.dim as u32)
}

/// Everything [`metastability_banach`] pins down besides the rate itself.
#[derive(Debug, Clone)]
pub struct BanachMeta {
    /// `lambda(k)`: the metric target level translated through consistency.
    pub kappa: Nat,
    /// `k0 = max{kappa, lambda(omega_F(kappa))}` with `omega_F(j) = 4j+3`.
    pub k0: Nat,
    pub rate: RateResult,
}

/// The composite metastability rate of the Mann run: the recursion
/// `Psi_0(n+1) = Phi^M(eta_k^M(Psi_0(n), 2 theta(k0) + 1))` iterated
/// `P = gamma(Lambda(16 theta(k0) + 15))` times, with
/// `eta_k(n,r) = max{chi'_{k,g}(n,r), zeta_g(n,r), chi(n, 0, 4r+3)}`
/// built from the uniform-Fejér modulus and the even/odd split, and the
/// final value `2 Psi_0(P)` evaluated at `k0`.
pub fn metastability_banach(
    run: &BanachRun,
    space: &LpSpace,
    op: &MonotoneOperator,
    sched: &MannSchedule,
    b: &BigRational,
    k: u64,
    g: &CounterFunction,
    budget: EvalBudget,
) -> Result<BanachMeta, BanachError> {
    let m_plus = int_to_rational(&run.m_bound) + BigRational::one();
    let (lambda, cap_lambda) = phi_consistency_moduli_int(space, &m_plus);
    let theta = {
        let l = lambda.clone();
        NatModulus::unary(move |j| l.eval1(&(j * 2u32 + 1u32))).declared_monotone()
    };
    let kappa = lambda.eval1_u64(k);
    let omega_f = &kappa * 4u32 + 3u32;
    let k0 = kappa.clone().max(lambda.eval1(&omega_f));

    let theta_k0 = theta.eval1(&k0);
    let r_rec = &theta_k0 * 2u32 + 1u32;
    let p_total = gamma_lp_ball(space, &int_to_rational(&run.m_bound), &cap_lambda.eval1(&(&theta_k0 * 16u32 + 15u32)));

    let omega_j = OmegaJ::for_space(space);
    let m_rat = int_to_rational(&run.m_bound);
    let delta_f = &kappa * 2u32 + 1u32;

    let chi = {
        let op = op.clone();
        let sched = sched.clone();
        let m_rat = m_rat.clone();
        let omega_j = omega_j.clone();
        move |n: &Nat, m: &Nat, r: &Nat| {
            let e0 = e0_bound(&op, &sched, &m_rat, n, m);
            chi_banach(n, m, r, &e0, &omega_j)
        }
    };
    let g_fn = g.clone();
    let two = Nat::from(2u32);
    let eta = {
        let chi = chi.clone();
        let delta_f = delta_f.clone();
        let r_rec = r_rec.clone();
        move |n: &Nat| {
            let half_g = crate::num_util::div_floor_nat(&g_fn.eval(&(n * 2u32)), &two);
            let even = delta_f
                .clone()
                .max(chi(&(n * 2u32), &(&half_g * 2u32), &r_rec));
            let odd = chi(&(n * 2u32), &(&half_g * 2u32 + 1u32), &r_rec);
            let tail = chi(n, &Nat::zero(), &(&r_rec * 4u32 + 3u32));
            even.max(odd).max(tail)
        }
    };
    let phi = {
        let op = op.clone();
        let sched = sched.clone();
        let m_rat = m_rat.clone();
        let lambda = lambda.clone();
        let omega_j = omega_j.clone();
        let b = b.clone();
        let alpha_bar = sched.alpha_bar.clone();
        move |level: &Nat| {
            let e1 = e1_bound(&op, &sched, &m_rat, level);
            phi_bound_banach(level, &b, &alpha_bar, &lambda, &omega_j, &e1)
        }
    };
    let (value, trace) = run_recursion(&p_total, budget, g.is_nondecreasing(), eta, phi)?;
    let value = match value {
        RateValue::Exact(v) => RateValue::Exact(v * 2u32),
        RateValue::Truncated { lower_bound, steps } => {
            RateValue::Truncated { lower_bound: lower_bound * 2u32, steps }
        }
    };
    Ok(BanachMeta { kappa, k0, rate: RateResult { value, trace: Some(trace) } })
}

/// Regularity modulus of the scaled-duality operator:
/// `J_1 x = x/(1+c)` gives `||x - J_1 x|| = ||x|| c/(1+c)` and
/// `dist(x, Fix J_1) = ||x||`, so `rho(eps) = eps c/(1+c)` is exact.
pub fn scaled_duality_regularity(c: &BigRational) -> RealModulus {
    let coeff = c / (BigRational::one() + c);
    RealModulus::linear(coeff)
}

/// The composite convergence-rate bound `mu(delta) = 2 tau(rho'(theta(lambda~(delta))/2))`
/// with `tau(eps) = 2 ceil(b / (lambda~(omega(lambda~(eps)/2E, M)) (1-alpha_bar)))`,
/// `rho'(eps) = rho(Lambda~(eps/2))`, all evaluated in exact rationals.
#[allow(clippy::too_many_arguments)]
pub fn convergence_rate_banach(
    space: &LpSpace,
    op: &MonotoneOperator,
    sched: &MannSchedule,
    rho: &RealModulus,
    m_bound: &Nat,
    b: &BigRational,
    delta: &BigRational,
) -> Nat {
    let one = BigRational::one();
    let two = BigRational::from_integer(2.into());
    let m_plus = int_to_rational(m_bound) + &one;
    let lam_tilde = |eps: &BigRational| {
        let inner = eps / (BigRational::from_integer(4.into()) * b * &m_plus);
        (&m_plus * &m_plus / &space.l_high) * space.eta.eval_rat(&inner)
    };
    let cap_tilde = |eps: &BigRational| {
        eps * &space.l_low / (BigRational::from_integer(16.into()) * &m_plus)
    };
    let theta = |eps: &BigRational| lam_tilde(&(eps / &two));
    let rho_prime = |eps: &BigRational| rho.eval(&cap_tilde(&(eps / &two)));

    let m_rat = int_to_rational(m_bound);
    let mu1 = mu_resolvent_bound(&op.c_bound, &op.d_bound, &one, &m_rat);
    let rbar_inv = &one / &sched.r_bar;
    let inner = (&one + &op.c_bound) * (&rbar_inv * &m_rat + &op.d_bound) + &op.c_bound;
    let e_low =
        (&two * (&mu1 + &m_rat)).max(&two * (&rbar_inv * &mu1 + inner.max(rbar_inv.clone())));
    let e_bound = int_to_rational(&ceil_rational(&e_low));

    let omega_j = OmegaJ::for_space(space);
    let tau = |eps: &BigRational| {
        let w = omega_j.eval_real(&(lam_tilde(eps) / (&two * &e_bound)));
        let denom = lam_tilde(&w) * (&one - &sched.alpha_bar);
        ceil_rational(&(b / denom)) * 2u32
    };
    tau(&rho_prime(&(theta(&lam_tilde(delta)) / &two))) * 2u32
}

/// The liminf-style approximate-point bound: for each `eps`, some
/// `n <= 2 ceil(b/(eps (1-alpha_bar)))` has `phi(J_{r_{2n}} x_{2n}, x_{2n}) <= eps`.
/// Returns `(witness, bound)` or an error naming the required run length.
pub fn liminf_bound_check(
    run: &BanachRun,
    space: &LpSpace,
    sched: &MannSchedule,
    b: &BigRational,
    eps: &BigRational,
) -> Result<(u64, Nat), RateError> {
    let bound = ceil_rational(&(b / (eps * (BigRational::one() - &sched.alpha_bar)))) * 2u32;
    let eps_f = eps.to_f64().unwrap();
    let limit = bound.to_u64().unwrap_or(u64::MAX);
    for n in 0..=limit {
        let idx = 2 * n as usize;
        if idx >= run.points.len() {
            return Err(RateError::NotFound { required_len: 2 * n + 1 });
        }
        if phi_eval(space, &run.resolvents[idx], &run.points[idx]) <= eps_f {
            return Ok((n, bound));
        }
    }
    Err(RateError::NotFound { required_len: 2 * limit + 2 })
}

/// The quasi-Fejér instance of a recorded run: constant distance `phi`
/// certified on the ball `M+1`, `f = id`, zero errors, and the even/odd
/// split moduli derived from the uniform-Fejér modulus of the full run.
pub fn fejer_instance(
    run: &BanachRun,
    space: &LpSpace,
    op: &MonotoneOperator,
    sched: &MannSchedule,
) -> FejerInstance {
    let m_plus = int_to_rational(&run.m_bound) + BigRational::one();
    let dist = GeneralizedDistance::bregman_phi(space, &m_plus);
    let seq = PointSeq::recorded(run.points.clone());
    let family = family_for(space, op, sched);
    let mut inst = FejerInstance::new(seq, DistanceSeq::Constant(dist), family);
    let omega_j = OmegaJ::for_space(space);
    let m_rat = int_to_rational(&run.m_bound);
    let chi_full = {
        let op = op.clone();
        let sched = sched.clone();
        NatModulus::ternary(move |n, m, r| {
            let e0 = e0_bound(&op, &sched, &m_rat, n, m);
            chi_banach(n, m, r, &e0, &omega_j)
        })
        .declared_monotone()
    };
    let (chi_even, zeta_odd, errors) =
        crate::framework::derive_partial_from_full(&chi_full, &inst.errors);
    inst.chi = Some(chi_even);
    inst.zeta = Some(zeta_odd);
    inst.errors = errors;
    inst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn lp(dim: usize, p: u32) -> LpSpace {
        LpSpace::new(dim, p, q(1, 1)).unwrap()
    }

    fn sched_unit() -> MannSchedule {
        MannSchedule::constant(q(1, 4), q(1, 1), q(1, 2), q(1, 1)).unwrap()
    }

    #[test]
    fn resolvent_closed_forms() {
        let s = lp(2, 4);
        // T = 0: z = x.
        let zero_op = MonotoneOperator::scaled_duality(q(0, 1), 2);
        let x = Point(vec![0.7, -0.4]);
        let z = resolvent(&s, &zero_op, 1.0, &x, 1e-12).unwrap();
        assert!(z.sub(&x).norm2() < 1e-15);
        // T = J, r = 1: z = x/2.
        let op = MonotoneOperator::scaled_duality(q(1, 1), 2);
        let z = resolvent(&s, &op, 1.0, &x, 1e-12).unwrap();
        assert!(z.sub(&x.scale(0.5)).norm2() < 1e-15);
        // p = 2, T = J = Id: z = x/(1+r), the Hilbert resolvent.
        let s2 = lp(2, 2);
        let z = resolvent(&s2, &op, 3.0, &x, 1e-12).unwrap();
        assert!(z.sub(&x.scale(0.25)).norm2() < 1e-15);
    }

    #[test]
    fn generic_solver_matches_closed_form() {
        let s = lp(2, 4);
        let op = MonotoneOperator::scaled_duality(q(1, 1), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = crate::distances::sample_lp_ball(&mut rng, &s, 1.5);
            let closed = resolvent(&s, &op, 0.8, &x, 1e-13).unwrap();
            let generic = resolvent_generic(&s, &op, 0.8, &x, 1e-13).unwrap();
            assert!(
                closed.sub(&generic).norm2() < 1e-9,
                "closed {closed:?} vs newton {generic:?}"
            );
        }
    }

    #[test]
    fn cubic_resolvent_residuals_and_majorant() {
        let s = lp(2, 4);
        let op = MonotoneOperator::coordinatewise(ScalarMonotone::Cubic, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let x = crate::distances::sample_lp_ball(&mut rng, &s, 2.0);
            let r = rng.gen_range(0.1f64..3.0);
            let z = resolvent(&s, &op, r, &x, 1e-12).unwrap();
            assert!(resolvent_residual(&s, &op, r, &z, &x) <= 1e-10);
            // C = D = 0 gives mu(R,b) = max{b,1}.
            let b = x.norm_p(4.0);
            assert!(z.norm_p(4.0) <= b.max(1.0) + 1e-10);
        }
    }

    #[test]
    fn mu_bound_hand_values() {
        assert_eq!(mu_resolvent_bound(&q(0, 1), &q(0, 1), &q(1, 1), &q(2, 1)), q(2, 1));
        assert_eq!(mu_resolvent_bound(&q(0, 1), &q(0, 1), &q(1, 1), &q(1, 2)), q(1, 1));
        assert_eq!(mu_resolvent_bound(&q(1, 1), &q(1, 1), &q(1, 1), &q(2, 1)), q(7, 1));
    }

    #[test]
    fn monotonicity_of_shipped_operators() {
        for p in [2u32, 4] {
            let s = lp(2, p);
            for op in [
                MonotoneOperator::scaled_duality(q(1, 1), 2),
                MonotoneOperator::coordinatewise(ScalarMonotone::Cubic, 2),
                MonotoneOperator::coordinatewise(ScalarMonotone::Linear { slope: 2.0 }, 2),
            ] {
                assert!(monotonicity_check(&s, &op, 300, 3, 1e-12).is_empty());
            }
        }
    }

    #[test]
    fn omega_j_analytic_bound_is_honest() {
        for p in [2u32, 3, 4] {
            let s = lp(2, p);
            let w = OmegaJ::for_space(&s);
            assert!(w.lipschitz_check(&s, 2.0, 500, 7).is_empty(), "p = {p}");
        }
        // p = 2 has Lipschitz constant exactly 1.
        let w = OmegaJ::for_space(&lp(3, 2));
        assert_eq!(w.lipschitz, BigRational::one());
        assert_eq!(w.eval_int(&Nat::from(9u32)), Nat::from(9u32));
    }

    #[test]
    fn kt_inequality_on_scaled_duality() {
        let s = lp(2, 4);
        let op = MonotoneOperator::scaled_duality(q(1, 1), 2);
        let zero = Point::zero(2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<Point> =
            (0..300).map(|_| crate::distances::sample_lp_ball(&mut rng, &s, 1.5)).collect();
        assert!(kt_inequality_check(&s, &op, &zero, &samples, 1.0, 1e-10).is_empty());
        // y = z: both sides zero.
        assert!(kt_inequality_check(&s, &op, &zero, &[zero.clone()], 1.0, 1e-12).is_empty());
    }

    #[test]
    fn quant_kt_zero_residual_case() {
        let s = lp(2, 4);
        let op = MonotoneOperator::scaled_duality(q(1, 1), 2);
        let omega = OmegaJ::for_space(&s);
        // x = 0 has zero resolvent residual; premise holds for any eps.
        let x = Point::zero(2);
        let y = Point(vec![0.5, -0.25]);
        let v = quant_kt_check(&s, &op, &omega, &x, &y, 1.0, 1.0, 1e-6, 16.0, 1e-10).unwrap();
        assert!(v.is_none());
    }

    #[test]
    fn mann_step_degenerate_alphas() {
        let s = lp(2, 2);
        let op = MonotoneOperator::scaled_duality(q(1, 1), 2);
        let x = Point(vec![1.0, 0.0]);
        // alpha = 0 within schedule bounds: x' = J_r x = x/2 at r = 1.
        let sched = MannSchedule::constant(q(0, 1), q(1, 1), q(1, 2), q(1, 1)).unwrap();
        let nxt = mann_step(&s, &op, &sched, &x, 0, 1e-12).unwrap();
        assert!(nxt.sub(&x.scale(0.5)).norm2() < 1e-14);
        // p=2, T=Id, alpha=1/2, r=1: (x + x/2)/2 = 0.75 x.
        let sched = MannSchedule::constant(q(1, 2), q(1, 1), q(3, 4), q(1, 1)).unwrap();
        let nxt = mann_step(&s, &op, &sched, &x, 0, 1e-12).unwrap();
        assert!(nxt.sub(&x.scale(0.75)).norm2() < 1e-14);
    }

    #[test]
    fn schedule_validation() {
        assert!(MannSchedule::constant(q(3, 4), q(1, 1), q(1, 2), q(1, 1)).is_err());
        assert!(MannSchedule::constant(q(1, 4), q(1, 2), q(1, 2), q(1, 1)).is_err());
        assert!(MannSchedule::constant(q(1, 4), q(1, 1), q(1, 1), q(1, 1)).is_err());
    }

    #[test]
    fn run_is_phi_monotone_and_p2_cross_validates() {
        let s = lp(2, 2);
        let op = MonotoneOperator::scaled_duality(q(1, 1), 2);
        let sched = sched_unit();
        let run = run_mann(&s, &op, &sched, &Point(vec![1.0, 0.5]), 100, 1e-12).unwrap();
        let zero = Point::zero(2);
        for w in run.points.windows(2) {
            assert!(phi_eval(&s, &zero, &w[1]) <= phi_eval(&s, &zero, &w[0]) + 1e-10);
        }
        // Closed form: x_{n+1} = (alpha + (1-alpha)/(1+r)) x_n = 5/8 x_n.
        let mut x = Point(vec![1.0, 0.5]);
        for n in 0..=100usize {
            assert!(run.points[n].sub(&x).norm2() < 1e-12, "step {n}");
            x = x.scale(0.625);
        }
    }

    #[test]
    fn chi_banach_shape() {
        let omega = OmegaJ::for_space(&lp(2, 4));
        let e0 = Nat::from(8u32);
        // m <= 1 collapses the slack index to 1.
        let a = chi_banach(&Nat::zero(), &Nat::zero(), &Nat::from(9u32), &e0, &omega);
        let b = chi_banach(&Nat::zero(), &Nat::one(), &Nat::from(9u32), &e0, &omega);
        assert_eq!(a, b);
        assert_eq!(a, omega.eval_int(&Nat::from(17u32)));
        // Huge n dominates.
        let big = Nat::from(10u64.pow(12));
        let c = chi_banach(&big, &Nat::from(3u32), &Nat::zero(), &e0, &omega);
        assert_eq!(c, big);
    }

    #[test]
    fn liminf_bound_holds_on_run() {
        let s = lp(2, 4);
        let op = MonotoneOperator::scaled_duality(q(1, 1), 2);
        let sched = sched_unit();
        let x0 = Point(vec![1.0, 0.0]);
        let run = run_mann(&s, &op, &sched, &x0, 400, 1e-12).unwrap();
        let b = q(2, 1); // phi(0, x_0) = ||x_0||^2 = 1 <= 2
        for eps in [q(1, 10), q(1, 100)] {
            let (n, bound) = liminf_bound_check(&run, &s, &sched, &b, &eps).unwrap();
            assert!(Nat::from(n) <= bound);
        }
    }

    #[test]
    fn metastability_banach_shape() {
        let s = lp(2, 2);
        let op = MonotoneOperator::scaled_duality(q(1, 1), 2);
        let sched = sched_unit();
        let run = run_mann(&s, &op, &sched, &Point(vec![1.0, 0.0]), 64, 1e-12).unwrap();
        assert_eq!(run.m_bound, Nat::one());
        let g = CounterFunction::constant(0);
        let meta = metastability_banach(
            &run,
            &s,
            &op,
            &sched,
            &q(1, 1),
            0,
            &g,
            EvalBudget { max_steps: 10_000, max_bits: 1 << 16 },
        )
        .unwrap();
        // lambda at b = M+1 = 2, p = 2: lambda(k) = ceil(407.04 (k+1)^2) - 1.
        assert_eq!(meta.kappa, Nat::from(407u32));
        let omega_f = Nat::from(4u32 * 407 + 3);
        let expected_k0 = {
            let v = q(159, 200) * q(512, 1) * int_to_rational(&(&omega_f + 1u32))
                * int_to_rational(&(&omega_f + 1u32));
            dotminus(&ceil_rational(&v), &Nat::one())
        };
        assert_eq!(meta.k0, expected_k0);
        // Base case of the recursion.
        assert_eq!(meta.rate.trace.as_ref().unwrap()[0], Nat::zero());
        // The recursion explodes; the budget certifies a lower bound.
        match &meta.rate.value {
            RateValue::Truncated { lower_bound, .. } => assert!(lower_bound > &Nat::zero()),
            RateValue::Exact(v) => assert!(v > &Nat::zero()),
        }
    }

    #[test]
    fn convergence_rate_banach_is_exact_and_positive() {
        let s = lp(2, 2);
        let op = MonotoneOperator::scaled_duality(q(1, 1), 2);
        let sched = sched_unit();
        let rho = scaled_duality_regularity(&q(1, 1));
        let mu = convergence_rate_banach(&s, &op, &sched, &rho, &Nat::one(), &q(1, 1), &q(1, 2));
        assert!(mu >= Nat::from(2u32));
        let mu2 = convergence_rate_banach(&s, &op, &sched, &rho, &Nat::one(), &q(1, 1), &q(1, 4));
        assert!(mu2 >= mu, "shrinking delta cannot shrink the bound");
    }

    #[test]
    fn scaled_duality_regularity_is_exact() {
        // J_1 x = x/(1+c): residual ||x - J_1 x|| = ||x|| c/(1+c) and
        // dist(x, {0}) = ||x||; the modulus rho(eps) = eps c/(1+c) is the
        // exact threshold.
        let s = lp(2, 4);
        let op = MonotoneOperator::scaled_duality(q(1, 1), 2);
        let rho = scaled_duality_regularity(&q(1, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let x = crate::distances::sample_lp_ball(&mut rng, &s, 1.0);
            let z = resolvent(&s, &op, 1.0, &x, 1e-13).unwrap();
            let res = x.sub(&z).norm_p(4.0);
            let eps = q(1, 8);
            let gate = rho.eval(&eps).to_f64().unwrap();
            if res < gate {
                assert!(x.norm_p(4.0) < eps.to_f64().unwrap() + 1e-12);
            }
        }
    }
}
