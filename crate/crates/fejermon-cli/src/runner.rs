//! Experiment execution: runs the configured iteration, evaluates every
//! requested bound, brute-force checks it, and collects result rows.

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use fejermon::banach::{self, MannSchedule, MonotoneOperator, OmegaJ, ScalarMonotone};
use fejermon::distances::{metric, phi_eval, GeneralizedDistance, LpSpace, Point};
use fejermon::framework::{
    check_f_monotone, check_quasi_fejer, check_uniform_modulus, ApproximationFamily,
    DistanceSeq, FejerInstance, PointSeq, UniformKind,
};
use fejermon::hilbert::{
    self, AveragedMap, HilbertRun, InertiaSchedule, LinearRegularity, MapProvenance,
};
use fejermon::moduli::{CounterFunction, Nat};
use fejermon::rates::{brute_force_metastability, EvalBudget, RateError, RateValue};

use crate::config::{
    AppKind, ConfigError, ExperimentConfig, GConfig, InertiaConfig, MapConfig, OperatorConfig,
    SyntheticConfig,
};
use crate::output::{format_nat, ResultRow, Status, TrajectoryRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Hilbert(#[from] fejermon::hilbert::HilbertError),
    #[error(transparent)]
    Banach(#[from] fejermon::banach::BanachError),
    #[error(transparent)]
    Rate(#[from] RateError),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub budget: EvalBudget,
    pub only: Option<String>,
    pub extra_deltas: Vec<String>,
    pub seed_override: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            budget: EvalBudget::default(),
            only: None,
            extra_deltas: Vec::new(),
            seed_override: None,
        }
    }
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub name: String,
    pub rows: Vec<ResultRow>,
    pub trajectory: Vec<TrajectoryRow>,
}

impl ExperimentOutput {
    pub fn has_failures(&self) -> bool {
        self.rows.iter().any(|r| r.status == Status::Fail)
    }
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<ExperimentOutput, HarnessError> {
    let seed = opts.seed_override.unwrap_or(cfg.seed);
    match cfg.app {
        AppKind::Hilbert => run_hilbert(cfg, opts, seed),
        AppKind::Banach => run_banach(cfg, opts, seed),
        AppKind::Synthetic => run_synthetic(cfg, opts, seed),
    }
}

fn wanted(opts: &RunOptions, cfg: &ExperimentConfig, check: &str) -> bool {
    match &opts.only {
        Some(only) => only == check,
        None => cfg.checks.iter().any(|c| c == check),
    }
}

fn counter_from(cfg: &ExperimentConfig) -> CounterFunction {
    match cfg.g.as_ref() {
        Some(GConfig::Const { c }) => CounterFunction::constant(*c),
        Some(GConfig::Linear { a, b }) => CounterFunction::linear(*a, *b),
        None => CounterFunction::constant(0),
    }
}

pub fn counter_from_desc(desc: &str) -> Result<CounterFunction, ConfigError> {
    let desc = desc.trim();
    if let Some(rest) = desc.strip_prefix("const:") {
        let c: u64 = rest
            .parse()
            .map_err(|_| ConfigError::Invalid(format!("bad counter constant {rest:?}")))?;
        return Ok(CounterFunction::constant(c));
    }
    if let Some(rest) = desc.strip_prefix("linear:") {
        let (a, b) = rest
            .split_once(',')
            .ok_or_else(|| ConfigError::Invalid("linear counter needs \"a,b\"".into()))?;
        let a: u64 =
            a.parse().map_err(|_| ConfigError::Invalid(format!("bad slope {a:?}")))?;
        let b: u64 =
            b.parse().map_err(|_| ConfigError::Invalid(format!("bad offset {b:?}")))?;
        return Ok(CounterFunction::linear(a, b));
    }
    let c: u64 = desc
        .parse()
        .map_err(|_| ConfigError::Invalid(format!("bad counter descriptor {desc:?}")))?;
    Ok(CounterFunction::constant(c))
}

fn deltas_for(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<BigRational>, ConfigError> {
    let mut out = Vec::new();
    for d in cfg.delta_list.iter().chain(opts.extra_deltas.iter()) {
        out.push(ExperimentConfig::rational(d, "delta_list")?);
    }
    Ok(out)
}

fn pass_fail(check: &str, violations: Vec<String>) -> ResultRow {
    match violations.first() {
        None => ResultRow::pass(check),
        Some(first) => ResultRow::fail(check, first.clone()),
    }
}

// ---------------------------------------------------------------------------
// Hilbert

pub fn build_map(cfg: &ExperimentConfig) -> Result<AveragedMap, HarnessError> {
    let map = cfg
        .map
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("missing map".into()))?;
    Ok(match map {
        MapConfig::RotationAverage { alpha, angle_deg } => {
            let alpha = ExperimentConfig::rational(alpha, "map.alpha")?;
            AveragedMap::rotation_average(alpha, angle_deg.to_radians())?
        }
        MapConfig::ProjectionAverage { alpha, radius, dim } => {
            let alpha = ExperimentConfig::rational(alpha, "map.alpha")?;
            AveragedMap::projection_average(alpha, *radius, *dim)?
        }
        MapConfig::ResolventIdentity { lambda, dim } => {
            AveragedMap::resolvent_identity(*lambda, *dim)?
        }
    })
}

fn inertia_from(cfg: &ExperimentConfig) -> Result<InertiaSchedule, HarnessError> {
    match cfg.schedule.as_ref().and_then(|s| s.inertia.as_ref()) {
        Some(InertiaConfig::Const { value }) => {
            let v = ExperimentConfig::rational(value, "schedule.inertia.value")?;
            Ok(InertiaSchedule::constant(v))
        }
        None => Ok(InertiaSchedule::zero()),
    }
}

/// The exact regularity modulus of a shipped map, when one is known.
pub fn regularity_for(map: &AveragedMap) -> Option<LinearRegularity> {
    match &map.provenance {
        MapProvenance::RotationAverage { angle } => {
            if (*angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12 {
                Some(LinearRegularity::rotation_right_angle(&map.alpha))
            } else {
                None
            }
        }
        MapProvenance::ProjectionAverage { .. } => {
            Some(LinearRegularity::Rational(map.alpha.clone()))
        }
        MapProvenance::ResolventIdentity { lambda } => {
            let l = BigRational::from_float(*lambda)?;
            Some(LinearRegularity::Rational(&l / (BigRational::one() + &l)))
        }
        MapProvenance::User => None,
    }
}

/// Scales a direction until the residual hits `target` (residuals of the
/// shipped maps are nondecreasing along rays).
fn point_with_residual(map: &AveragedMap, rng: &mut ChaCha8Rng, target: f64) -> Point {
    let dir = Point((0..map.dim).map(|_| rng.gen_range(-1.0f64..=1.0)).collect());
    let dir = dir.scale(1.0 / dir.norm2().max(1e-9));
    let mut hi = 1.0f64;
    for _ in 0..60 {
        if hilbert::af_residual(map, &dir.scale(hi)) >= target {
            break;
        }
        hi *= 2.0;
    }
    let mut lo = 0.0f64;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if hilbert::af_residual(map, &dir.scale(mid)) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    dir.scale(hi)
}

fn run_hilbert(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    seed: u64,
) -> Result<ExperimentOutput, HarnessError> {
    let map = build_map(cfg)?;
    let sched = inertia_from(cfg)?;
    let x0 = Point(cfg.x0.clone());
    let run = hilbert::iterate_alternating(&map, &sched, &x0, cfg.n_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = hilbert::family_for(&map);
    let mut rows = Vec::new();

    if wanted(opts, cfg, "averagedness") {
        rows.push(pass_fail(
            "averagedness",
            hilbert::averagedness_check(&map, 1000, seed, 1e-10),
        ));
    }

    let inst = hilbert::fejer_instance(&run, &map);
    let solutions: Vec<Point> = (0..5).map(|_| map.sample_solution(&mut rng)).collect();
    let n_check = ((run.points.len() as u64).saturating_sub(2) / 2).min(500);

    if wanted(opts, cfg, "fejer") {
        let v = check_quasi_fejer(&inst, &solutions, n_check, cfg.tolerances.fejer);
        rows.push(match v.first() {
            None => ResultRow::pass("fejer"),
            Some(w) => ResultRow::fail(
                "fejer",
                format!("violated at solution {} (n={}, m={}): {} > {}", w.sol, w.n, w.m, w.lhs, w.rhs),
            ),
        });
    }

    if wanted(opts, cfg, "f_monotone") {
        let v = check_f_monotone(&inst, &solutions, n_check, cfg.tolerances.fejer);
        rows.push(match v.first() {
            None => ResultRow::pass("f_monotone"),
            Some(w) => ResultRow::fail(
                "f_monotone",
                format!("violated at solution {} (n={}, m={}): {} > {}", w.sol, w.n, w.m, w.lhs, w.rhs),
            ),
        });
    }

    if wanted(opts, cfg, "lemma_suite") {
        let mut v = hilbert::lemma_suite_check(&run, &map, 500);
        for target in [1e-2, 1e-3] {
            let x_star = point_with_residual(&map, &mut rng, target);
            v.extend(hilbert::approx_fixed_point_check(&run, &map, &x_star, 1e-10));
        }
        rows.push(pass_fail("lemma_suite", v));
    }

    if wanted(opts, cfg, "phi_bound") {
        let b = BigRational::from_float(metric(&x0, &run.xhat)).unwrap_or_else(BigRational::zero);
        let mut violations = Vec::new();
        let mut witness = String::new();
        for &k in &cfg.k_list {
            let phi_k = hilbert::phi_bound_hilbert(&map.alpha, &b, k);
            let gate = 1.0 / (k as f64 + 1.0);
            let found = (0..run.points.len() / 2)
                .find(|&n| hilbert::af_residual(&map, &run.points[2 * n]) <= gate);
            match found {
                Some(n) if Nat::from(n as u64) <= phi_k => {
                    witness = format!("k={k}: n={n} <= {phi_k}");
                }
                Some(n) => violations.push(format!("k={k}: first index {n} > bound {phi_k}")),
                None => violations.push(format!("k={k}: no even iterate reached AF_k")),
            }
        }
        rows.push(match violations.first() {
            None => ResultRow::pass_with("phi_bound", witness, String::new()),
            Some(first) => ResultRow::fail("phi_bound", first.clone()),
        });
    }

    if wanted(opts, cfg, "uniform_moduli") {
        let mut samples: Vec<Point> = Vec::new();
        for j in 1..=12 {
            samples.push(point_with_residual(&map, &mut rng, 1e-4 * j as f64));
        }
        let stride = (run.points.len() / 8).max(1);
        samples.extend(run.points.iter().step_by(stride).cloned());
        let mut grid = Vec::new();
        for n in 0..4u64 {
            for m in 0..4u64 {
                for r in [0u64, 1, 4] {
                    grid.push((n, m, r));
                }
            }
        }
        let mut v: Vec<String> =
            check_uniform_modulus(&inst, UniformKind::Chi, &grid, &samples, cfg.tolerances.uniform)
                .into_iter()
                .map(|w| format!("chi violated at (n={}, m={}, r={}) l={}", w.n, w.m, w.r, w.l))
                .collect();
        v.extend(
            check_uniform_modulus(&inst, UniformKind::Zeta, &grid, &samples, cfg.tolerances.uniform)
                .into_iter()
                .map(|w| format!("zeta violated at (n={}, m={}, r={}) l={}", w.n, w.m, w.r, w.l)),
        );
        rows.push(pass_fail("uniform_moduli", v));
    }

    if wanted(opts, cfg, "closedness") {
        let mut v = Vec::new();
        for k in cfg.k_list.iter().copied().chain(0..4) {
            let (omega, delta) = hilbert::closedness_nonexpansive(k);
            let mut pairs = Vec::new();
            for _ in 0..100 {
                let q = point_with_residual(&map, &mut rng, 0.9 / (delta.to_f64().unwrap() + 1.0));
                let gate = 1.0 / (omega.to_f64().unwrap() + 1.0);
                let dir = Point((0..map.dim).map(|_| rng.gen_range(-1.0f64..=1.0)).collect());
                let p = q.add(&dir.scale(rng.gen_range(0.0..gate) / dir.norm2().max(1e-9)));
                pairs.push((q, p));
            }
            let dist = GeneralizedDistance::euclidean();
            let bad = fejermon::framework::closedness_check(
                &family,
                &fejermon::moduli::NatModulus::constant(omega.to_u64().unwrap()),
                &fejermon::moduli::NatModulus::constant(delta.to_u64().unwrap()),
                &dist,
                &pairs,
                &[k],
            );
            if let Some((i, kk)) = bad.first() {
                v.push(format!("closedness transfer failed at pair {i}, k={kk}"));
            }
        }
        rows.push(pass_fail("closedness", v));
    }

    if wanted(opts, cfg, "metastability") {
        let g = counter_from(cfg);
        for &k in &cfg.k_list {
            rows.push(metastability_row_hilbert(cfg, &run, &map, &family, k, &g, opts));
        }
    }

    if wanted(opts, cfg, "rate") {
        match regularity_for(&map) {
            None => rows.push(ResultRow::fail(
                "rate",
                "no exact regularity modulus shipped for this map".into(),
            )),
            Some(rho) => {
                let xhat = &run.xhat;
                let b_val = metric(&x0, xhat).max(metric(&run.points[1], xhat));
                let b = BigRational::from_float(b_val).unwrap_or_else(BigRational::one);
                for delta in deltas_for(cfg, opts)? {
                    rows.push(rate_row_hilbert(cfg, &run, &rho, &map, &b, &delta));
                }
            }
        }
    }

    let trajectory = run
        .points
        .iter()
        .enumerate()
        .map(|(n, x)| TrajectoryRow {
            n: n as u64,
            coords: x.0.clone(),
            residual: hilbert::af_residual(&map, x),
            dist_to_sol: metric(x, &run.xhat),
            phi_to_sol: metric(x, &run.xhat),
        })
        .collect();
    Ok(ExperimentOutput { name: cfg.display_name().to_string(), rows, trajectory })
}

fn metastability_row_hilbert(
    cfg: &ExperimentConfig,
    run: &HilbertRun,
    map: &AveragedMap,
    family: &ApproximationFamily,
    k: u64,
    g: &CounterFunction,
    opts: &RunOptions,
) -> ResultRow {
    let check = format!("metastability[k={k}]");
    let psi = GeneralizedDistance::euclidean();
    let n = match brute_force_metastability(
        &run.points,
        &psi,
        family,
        k,
        g,
        true,
        cfg.tolerances.brute_force,
    ) {
        Ok(n) => n,
        Err(RateError::NotFound { required_len }) => {
            return ResultRow::fail(&check, format!("run too short: need length {required_len}"));
        }
        Err(e) => return ResultRow::fail(&check, e.to_string()),
    };
    let budget = EvalBudget {
        max_steps: opts.budget.max_steps,
        max_bits: opts.budget.max_bits.min(1 << 16),
    };
    match hilbert::metastability_hilbert(run, map, k, g, budget) {
        Ok(res) => rate_compare_row(&check, n, &res.value),
        Err(e) => ResultRow::fail(&check, e.to_string()),
    }
}

fn rate_compare_row(check: &str, n: u64, value: &RateValue) -> ResultRow {
    let ok = value.dominates(&Nat::from(n));
    match value {
        RateValue::Exact(v) => {
            if ok {
                ResultRow {
                    check: check.to_string(),
                    status: Status::Pass,
                    witness: n.to_string(),
                    bound: format_nat(v),
                    slack: String::new(),
                }
            } else {
                ResultRow::fail(check, format!("minimal N = {n} exceeds bound {}", format_nat(v)))
            }
        }
        RateValue::Truncated { lower_bound, steps } => {
            if ok {
                ResultRow {
                    check: check.to_string(),
                    status: Status::Resource,
                    witness: n.to_string(),
                    bound: format!("bound >= {} after {steps} steps", format_nat(lower_bound)),
                    slack: "pass (bound >= budget > N)".into(),
                }
            } else {
                ResultRow::fail(
                    check,
                    format!("minimal N = {n} exceeds even the certified lower bound"),
                )
            }
        }
    }
}

fn rate_row_hilbert(
    cfg: &ExperimentConfig,
    run: &HilbertRun,
    rho: &LinearRegularity,
    map: &AveragedMap,
    b: &BigRational,
    delta: &BigRational,
) -> ResultRow {
    let check = format!("rate[delta={delta}]");
    let mu = hilbert::convergence_rate_hilbert(rho, &map.alpha, b, delta);
    let window = cfg.tolerances.rate_window;
    let Some(mu_u) = mu.to_u64() else {
        return ResultRow {
            check,
            status: Status::Resource,
            witness: "window beyond any recordable range".into(),
            bound: format_nat(&mu),
            slack: String::new(),
        };
    };
    let end = mu_u.saturating_add(window);
    if end as usize >= run.points.len() {
        return ResultRow::fail(&check, format!("run too short: need length {}", end + 1));
    }
    let anchor = &run.points[end as usize];
    let mut worst = 0f64;
    for n in mu_u..=end {
        worst = worst.max(metric(&run.points[n as usize], anchor));
    }
    let df = delta.to_f64().unwrap();
    if worst < df {
        ResultRow {
            check,
            status: Status::Pass,
            witness: format!("max window distance {worst}"),
            bound: format_nat(&mu),
            slack: format!("{}", df - worst),
        }
    } else {
        ResultRow::fail(&check, format!("window distance {worst} >= delta {df}"))
    }
}

// ---------------------------------------------------------------------------
// Banach

pub fn build_operator(cfg: &ExperimentConfig, dim: usize) -> Result<MonotoneOperator, HarnessError> {
    let op = cfg
        .operator
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("missing operator".into()))?;
    Ok(match op {
        OperatorConfig::ScaledDuality { c } => {
            MonotoneOperator::scaled_duality(ExperimentConfig::rational(c, "operator.c")?, dim)
        }
        OperatorConfig::CoordinatewiseCubic => {
            MonotoneOperator::coordinatewise(ScalarMonotone::Cubic, dim)
        }
        OperatorConfig::CoordinatewiseLinear { slope } => {
            MonotoneOperator::coordinatewise(ScalarMonotone::Linear { slope: *slope }, dim)
        }
    })
}

pub fn build_schedule(cfg: &ExperimentConfig) -> Result<MannSchedule, HarnessError> {
    let s = cfg
        .schedule
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("missing schedule".into()))?;
    let get = |field: &Option<String>, name: &str| -> Result<BigRational, ConfigError> {
        let text = field
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid(format!("schedule.{name} required")))?;
        ExperimentConfig::rational(text, name)
    };
    Ok(MannSchedule::constant(
        get(&s.alpha, "alpha")?,
        get(&s.r, "r")?,
        get(&s.alpha_bar, "alpha_bar")?,
        get(&s.r_bar, "r_bar")?,
    )?)
}

fn run_banach(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    seed: u64,
) -> Result<ExperimentOutput, HarnessError> {
    let space_cfg = cfg.space.as_ref().expect("validated");
    let space = LpSpace::new(space_cfg.dim, space_cfg.p, BigRational::one())
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let op = build_operator(cfg, space.dim)?;
    let sched = build_schedule(cfg)?;
    let x0 = Point(cfg.x0.clone());
    let run = banach::run_mann(&space, &op, &sched, &x0, cfg.n_max, 1e-12)?;
    let zero = op.zero_point(space.dim);
    let b = BigRational::from_float(phi_eval(&space, &zero, &x0))
        .unwrap_or_else(BigRational::one)
        .max(BigRational::one());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();

    if wanted(opts, cfg, "resolvent_residual") {
        let worst = run.solver_residuals.iter().cloned().fold(0.0f64, f64::max);
        rows.push(if worst <= 1e-10 {
            ResultRow::pass_with("resolvent_residual", format!("max residual {worst}"), String::new())
        } else {
            ResultRow::fail("resolvent_residual", format!("max residual {worst} > 1e-10"))
        });
    }

    if wanted(opts, cfg, "mu_bound") {
        let mut v = Vec::new();
        for (n, z) in run.resolvents.iter().enumerate() {
            let bx = BigRational::from_float(run.points[n].norm_p(space.p_f64()))
                .unwrap_or_else(BigRational::zero);
            let mu = banach::mu_resolvent_bound(&op.c_bound, &op.d_bound, &sched.r_at(n as u64), &bx);
            if z.norm_p(space.p_f64()) > mu.to_f64().unwrap() + 1e-10 {
                v.push(format!("||J_r x_{n}|| exceeds mu"));
            }
        }
        rows.push(pass_fail("mu_bound", v));
    }

    let inst = banach::fejer_instance(&run, &space, &op, &sched);
    if wanted(opts, cfg, "fejer") {
        let n_check = ((run.points.len() as u64).saturating_sub(1) / 2).min(250);
        let v = check_quasi_fejer(&inst, &[zero.clone()], n_check, cfg.tolerances.fejer);
        rows.push(match v.first() {
            None => ResultRow::pass("fejer"),
            Some(w) => ResultRow::fail(
                "fejer",
                format!("violated at (n={}, m={}): {} > {}", w.n, w.m, w.lhs, w.rhs),
            ),
        });
    }

    if wanted(opts, cfg, "phi_monotone") {
        let mut v = Vec::new();
        for (n, w) in run.points.windows(2).enumerate() {
            let a = phi_eval(&space, &zero, &w[0]);
            let bb = phi_eval(&space, &zero, &w[1]);
            if bb > a + 1e-10 {
                v.push(format!("phi increased at step {n}: {bb} > {a}"));
            }
        }
        rows.push(pass_fail("phi_monotone", v));
    }

    if wanted(opts, cfg, "kt") {
        let m_f = run.m_bound.to_f64().unwrap_or(1.0).max(1.0);
        let samples: Vec<Point> = (0..1000)
            .map(|_| fejermon::distances::sample_lp_ball(&mut rng, &space, m_f))
            .collect();
        let r = sched.r.to_f64().unwrap();
        rows.push(pass_fail(
            "kt",
            banach::kt_inequality_check(&space, &op, &zero, &samples, r, cfg.tolerances.kt),
        ));
    }

    if wanted(opts, cfg, "quant_kt") {
        let mut v = Vec::new();
        let r = sched.r.to_f64().unwrap();
        let c = op.c_bound.to_f64().unwrap();
        let d = op.d_bound.to_f64().unwrap();
        let omega = OmegaJ::for_space(&space);
        let m_f = run.m_bound.to_f64().unwrap_or(1.0).max(1.0);
        let e_bound = (2.0 * (((1.0 + c) * (m_f + r * d) + c).max(1.0) + m_f)).max(4.0) * 2.0;
        for x in run.points.iter().rev().take(40) {
            let y = fejermon::distances::sample_lp_ball(&mut rng, &space, m_f);
            match banach::quant_kt_check(
                &space, &op, &omega, x, &y, r, r, 1e-3, e_bound, cfg.tolerances.kt,
            ) {
                Ok(None) => {}
                Ok(Some(msg)) => v.push(msg),
                Err(e) => v.push(e.to_string()),
            }
        }
        rows.push(pass_fail("quant_kt", v));
    }

    if wanted(opts, cfg, "liminf") {
        let mut v = Vec::new();
        let mut witness = String::new();
        for eps in [BigRational::new(1.into(), 10.into()), BigRational::new(1.into(), 100.into())] {
            match banach::liminf_bound_check(&run, &space, &sched, &b, &eps) {
                Ok((n, bound)) => {
                    witness = format!("eps={eps}: n={n} <= {bound}");
                }
                Err(e) => v.push(format!("eps={eps}: {e}")),
            }
        }
        rows.push(match v.first() {
            None => ResultRow::pass_with("liminf", witness, String::new()),
            Some(first) => ResultRow::fail("liminf", first.clone()),
        });
    }

    if wanted(opts, cfg, "p2_crossval") {
        if space.p == 2 {
            if let fejermon::banach::OperatorKind::ScaledDuality { c } = &op.kind {
                let cf = c.to_f64().unwrap();
                let a = sched.alpha.to_f64().unwrap();
                let r = sched.r.to_f64().unwrap();
                let factor = a + (1.0 - a) / (1.0 + r * cf);
                let mut x = x0.clone();
                let mut v = Vec::new();
                for (n, p) in run.points.iter().enumerate() {
                    if p.sub(&x).norm2() > 1e-12 {
                        v.push(format!("closed-form mismatch at step {n}"));
                        break;
                    }
                    x = x.scale(factor);
                }
                rows.push(pass_fail("p2_crossval", v));
            } else {
                rows.push(ResultRow::vacuous("p2_crossval", "no closed form for this operator"));
            }
        } else {
            rows.push(ResultRow::vacuous("p2_crossval", "p != 2"));
        }
    }

    if wanted(opts, cfg, "metastability") {
        let g = counter_from(cfg);
        let family = banach::family_for(&space, &op, &sched);
        let psi = GeneralizedDistance::euclidean();
        for &k in &cfg.k_list {
            let check = format!("metastability[k={k}]");
            let n = match brute_force_metastability(
                &run.points,
                &psi,
                &family,
                k,
                &g,
                true,
                cfg.tolerances.brute_force,
            ) {
                Ok(n) => n,
                Err(RateError::NotFound { required_len }) => {
                    rows.push(ResultRow::fail(
                        &check,
                        format!("run too short: need length {required_len}"),
                    ));
                    continue;
                }
                Err(e) => {
                    rows.push(ResultRow::fail(&check, e.to_string()));
                    continue;
                }
            };
            let budget = EvalBudget {
                max_steps: opts.budget.max_steps,
                max_bits: opts.budget.max_bits.min(1 << 16),
            };
            match banach::metastability_banach(&run, &space, &op, &sched, &b, k, &g, budget) {
                Ok(meta) => rows.push(rate_compare_row(&check, n, &meta.rate.value)),
                Err(e) => rows.push(ResultRow::fail(&check, e.to_string())),
            }
        }
    }

    if wanted(opts, cfg, "rate") {
        match &op.kind {
            fejermon::banach::OperatorKind::ScaledDuality { c } if c > &BigRational::zero() => {
                let rho = banach::scaled_duality_regularity(c);
                for delta in deltas_for(cfg, opts)? {
                    let check = format!("rate[delta={delta}]");
                    let mu = banach::convergence_rate_banach(
                        &space, &op, &sched, &rho, &run.m_bound, &b, &delta,
                    );
                    let window = cfg.tolerances.rate_window;
                    match mu.to_u64() {
                        Some(mu_u) if (mu_u.saturating_add(window) as usize) < run.points.len() => {
                            let end = mu_u + window;
                            let anchor = &run.points[end as usize];
                            let mut worst = 0f64;
                            for n in mu_u..=end {
                                worst = worst.max(metric(&run.points[n as usize], anchor));
                            }
                            let df = delta.to_f64().unwrap();
                            rows.push(if worst < df {
                                ResultRow {
                                    check,
                                    status: Status::Pass,
                                    witness: format!("max window distance {worst}"),
                                    bound: format_nat(&mu),
                                    slack: format!("{}", df - worst),
                                }
                            } else {
                                ResultRow::fail(&check, format!("window distance {worst} >= {df}"))
                            });
                        }
                        _ => rows.push(ResultRow {
                            check,
                            status: Status::Resource,
                            witness: "window beyond recorded range".into(),
                            bound: format_nat(&mu),
                            slack: String::new(),
                        }),
                    }
                }
            }
            _ => rows.push(ResultRow::fail(
                "rate",
                "no regularity modulus shipped for this operator".into(),
            )),
        }
    }

    let trajectory = run
        .points
        .iter()
        .enumerate()
        .map(|(n, x)| TrajectoryRow {
            n: n as u64,
            coords: x.0.clone(),
            residual: run.residuals[n],
            dist_to_sol: x.sub(&zero).norm_p(space.p_f64()),
            phi_to_sol: phi_eval(&space, &zero, x),
        })
        .collect();
    Ok(ExperimentOutput { name: cfg.display_name().to_string(), rows, trajectory })
}

// ---------------------------------------------------------------------------
// Synthetic

fn synthetic_points(cfg: &ExperimentConfig) -> Vec<Point> {
    let x0 = Point(cfg.x0.clone());
    let dim = x0.dim();
    let n = cfg.n_max as usize + 1;
    match cfg.synthetic.as_ref().expect("validated") {
        SyntheticConfig::Constant => vec![x0; n],
        SyntheticConfig::Oscillate { amplitude } => (0..n)
            .map(|i| {
                let mut c = vec![0.0; dim];
                c[0] = if i % 2 == 0 { *amplitude } else { -*amplitude };
                Point(c)
            })
            .collect(),
        SyntheticConfig::Jump { at, size } => (0..n)
            .map(|i| {
                let mut c = vec![0.0; dim];
                c[0] = if i as u64 == 2 * at { *size } else { 0.5f64.powi((i / 2) as i32) };
                Point(c)
            })
            .collect(),
    }
}

fn run_synthetic(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    _seed: u64,
) -> Result<ExperimentOutput, HarnessError> {
    let points = synthetic_points(cfg);
    let sol = match cfg.synthetic.as_ref().expect("validated") {
        SyntheticConfig::Constant => Point(cfg.x0.clone()),
        _ => Point::zero(cfg.x0.len()),
    };
    let sol_for_family = sol.clone();
    let family =
        ApproximationFamily::from_residual(move |x: &Point| metric(x, &sol_for_family));
    let inst = FejerInstance::new(
        PointSeq::recorded(points.clone()),
        DistanceSeq::Constant(GeneralizedDistance::euclidean()),
        family.clone(),
    );
    let mut rows = Vec::new();
    if wanted(opts, cfg, "fejer") {
        let n_check = ((points.len() as u64).saturating_sub(1) / 2).min(300);
        let v = check_quasi_fejer(&inst, &[sol.clone()], n_check, cfg.tolerances.fejer);
        rows.push(match v.first() {
            None => ResultRow::pass("fejer"),
            Some(w) => ResultRow::fail(
                "fejer",
                format!("violated at (n={}, m={}): {} > {}", w.n, w.m, w.lhs, w.rhs),
            ),
        });
    }
    if wanted(opts, cfg, "metastability") {
        let g = counter_from(cfg);
        let psi = GeneralizedDistance::euclidean();
        for &k in &cfg.k_list {
            let check = format!("metastability[k={k}]");
            match brute_force_metastability(
                &points,
                &psi,
                &family,
                k,
                &g,
                false,
                cfg.tolerances.brute_force,
            ) {
                Ok(n) => rows.push(ResultRow::pass_with(&check, n.to_string(), String::new())),
                Err(e) => rows.push(ResultRow::fail(&check, e.to_string())),
            }
        }
    }
    let trajectory = points
        .iter()
        .enumerate()
        .map(|(n, x)| TrajectoryRow {
            n: n as u64,
            coords: x.0.clone(),
            residual: metric(x, &sol),
            dist_to_sol: metric(x, &sol),
            phi_to_sol: metric(x, &sol),
        })
        .collect();
    Ok(ExperimentOutput { name: cfg.display_name().to_string(), rows, trajectory })
}

/// The `oracle` subcommand: minimal brute-force `N` against the exact rate.
pub fn oracle_report(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    k: u64,
    g: &CounterFunction,
) -> Result<ResultRow, HarnessError> {
    match cfg.app {
        AppKind::Hilbert => {
            let map = build_map(cfg)?;
            let sched = inertia_from(cfg)?;
            let run =
                hilbert::iterate_alternating(&map, &sched, &Point(cfg.x0.clone()), cfg.n_max)?;
            let family = hilbert::family_for(&map);
            Ok(metastability_row_hilbert(cfg, &run, &map, &family, k, g, opts))
        }
        AppKind::Banach => {
            let space_cfg = cfg.space.as_ref().expect("validated");
            let space = LpSpace::new(space_cfg.dim, space_cfg.p, BigRational::one())
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let op = build_operator(cfg, space.dim)?;
            let sched = build_schedule(cfg)?;
            let x0 = Point(cfg.x0.clone());
            let run = banach::run_mann(&space, &op, &sched, &x0, cfg.n_max, 1e-12)?;
            let zero = op.zero_point(space.dim);
            let b = BigRational::from_float(phi_eval(&space, &zero, &x0))
                .unwrap_or_else(BigRational::one)
                .max(BigRational::one());
            let family = banach::family_for(&space, &op, &sched);
            let psi = GeneralizedDistance::euclidean();
            let n = brute_force_metastability(
                &run.points,
                &psi,
                &family,
                k,
                g,
                true,
                cfg.tolerances.brute_force,
            )?;
            let budget = EvalBudget {
                max_steps: opts.budget.max_steps,
                max_bits: opts.budget.max_bits.min(1 << 16),
            };
            let meta = banach::metastability_banach(&run, &space, &op, &sched, &b, k, g, budget)?;
            Ok(rate_compare_row(&format!("oracle[k={k}]"), n, &meta.rate.value))
        }
        AppKind::Synthetic => {
            let points = synthetic_points(cfg);
            let sol = Point::zero(cfg.x0.len());
            let family = ApproximationFamily::from_residual(move |x: &Point| metric(x, &sol));
            let psi = GeneralizedDistance::euclidean();
            let n = brute_force_metastability(
                &points,
                &psi,
                &family,
                k,
                g,
                false,
                cfg.tolerances.brute_force,
            )?;
            Ok(ResultRow::pass_with(&format!("oracle[k={k}]"), n.to_string(), String::new()))
        }
    }
}
