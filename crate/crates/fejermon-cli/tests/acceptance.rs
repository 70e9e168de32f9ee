//! Acceptance suite: every criterion runs at its stated tolerance and
//! prints one pass/fail line (run with `--nocapture` to see them).

use std::panic::{catch_unwind, AssertUnwindSafe};

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fejermon::banach::{
    self, MannSchedule, MonotoneOperator,
};
use fejermon::distances::{
    alber_bounds_check, duality_map, duality_map_inverse, metric, phi_consistency_check, phi_eval,
    sample_lp_ball, GeneralizedDistance, LpSpace, Point,
};
use fejermon::framework::{
    affine_shift, check_quasi_fejer, check_uniform_modulus, closedness_check,
    convert_closedness_and_tb, convert_tb_modulus, derive_partial_from_full, mixed_gh_f_modulus,
    total_boundedness_pigeonhole_check, ApproximationFamily, DistanceSeq, FejerInstance, PointSeq,
    TbDirection, UniformKind,
};
use fejermon::hilbert::{
    self, AveragedMap, InertiaSchedule, LinearRegularity,
};
use fejermon::moduli::{CounterFunction, ErrorSchedule, Nat, NatModulus, StepFunction};
use fejermon::rates::{
    brute_force_metastability, psi_general, psi_single, psi_with_closedness, EvalBudget,
    MetastabilityInputs, PhiBound, RateValue,
};

fn criterion(name: &str, f: impl FnOnce()) {
    let result = catch_unwind(AssertUnwindSafe(f));
    match &result {
        Ok(()) => println!("ACCEPTANCE {name}: PASS"),
        Err(_) => println!("ACCEPTANCE {name}: FAIL"),
    }
    if let Err(e) = result {
        std::panic::resume_unwind(e);
    }
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn half() -> BigRational {
    q(1, 2)
}

fn rotation_map() -> AveragedMap {
    AveragedMap::rotation_average(half(), std::f64::consts::FRAC_PI_2).unwrap()
}

fn rotation_run(steps: u64) -> fejermon::hilbert::HilbertRun {
    let sched = InertiaSchedule::constant(BigRational::one());
    hilbert::iterate_alternating(&rotation_map(), &sched, &Point(vec![1.0, 0.0]), steps).unwrap()
}

#[test]
fn c01_duality_map_identities() {
    criterion("C1 duality-map identities", || {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for p in [2u32, 3, 4] {
            for dim in [2usize, 5] {
                let space = LpSpace::new(dim, p, BigRational::one()).unwrap();
                for _ in 0..1000 {
                    let x = sample_lp_ball(&mut rng, &space, 2.0);
                    let jx = duality_map(&space, &x);
                    let n = x.norm_p(space.p_f64());
                    assert!(
                        (x.dot(&jx) - n * n).abs() <= 1e-10 * (1.0 + n * n),
                        "pairing identity failed (p={p}, d={dim})"
                    );
                    assert!(
                        (jx.norm_p(space.q_f64()) - n).abs() <= 1e-9,
                        "dual norm identity failed (p={p}, d={dim})"
                    );
                    let back = duality_map_inverse(&space, &jx);
                    assert!(
                        back.sub(&x).norm2() <= 1e-12,
                        "round trip failed (p={p}, d={dim})"
                    );
                }
            }
        }
    });
}

#[test]
fn c02_consistency_moduli() {
    criterion("C2 consistency moduli", || {
        let space = LpSpace::new(2, 4, BigRational::one()).unwrap();
        let eps = vec![q(1, 10), q(1, 100), q(1, 1000)];
        let v = phi_consistency_check(&space, &BigRational::one(), &eps, 10_000, 202);
        assert!(v.is_empty(), "violation: {:?}", v.first().map(|x| &x.detail));
        // The two-sided sandwich backing the moduli.
        let a = alber_bounds_check(&space, &BigRational::one(), 10_000, 203);
        assert!(a.is_empty(), "sandwich violation: {:?}", a.first().map(|x| &x.detail));
    });
}

#[test]
fn c03_lemma_suite_rotation() {
    criterion("C3 rotation lemma suite", || {
        let start = std::time::Instant::now();
        let map = rotation_map();
        let run = rotation_run(1101);
        assert_eq!(run.m_bound, Nat::one());
        // Summed residual bound over 500 pairs, odd-step bound, and the
        // exact-fixed-point Fejér inequalities.
        let violations = hilbert::lemma_suite_check(&run, &map, 500);
        assert!(violations.is_empty(), "{violations:?}");
        assert!(start.elapsed().as_secs_f64() < 1.0, "criterion 3 runtime");
    });
}

#[test]
fn c04_approximate_fixed_point_bound() {
    criterion("C4 approximate fixed-point bound", || {
        let map = rotation_map();
        let run = rotation_run(4000);
        let b = BigRational::one();
        for k in 0..=30u64 {
            let bound = hilbert::phi_bound_hilbert(&map.alpha, &b, k);
            // alpha/(1-alpha) = 1 and b = 1: the bound is 2 max{1, (k+1)^2}.
            let expect = Nat::from(2 * ((k + 1) * (k + 1)).max(1));
            assert_eq!(bound, expect, "closed form at k={k}");
            let gate = 1.0 / (k as f64 + 1.0);
            let n = (0..run.points.len() / 2)
                .find(|&n| hilbert::af_residual(&map, &run.points[2 * n]) <= gate)
                .unwrap_or_else(|| panic!("no even iterate in AF_{k}"));
            assert!(Nat::from(n as u64) <= bound, "k={k}: witness {n} exceeds bound {bound}");
        }
    });
}

#[test]
fn c05_metastability_bounds() {
    criterion("C5 metastability bounds", || {
        let start = std::time::Instant::now();
        let map = rotation_map();
        let run = rotation_run(4000);
        let family = hilbert::family_for(&map);
        let psi = GeneralizedDistance::euclidean();
        let budget = EvalBudget { max_steps: 1_000_000, max_bits: 1 << 16 };
        let counters: Vec<(&str, CounterFunction)> = vec![
            ("g=0", CounterFunction::constant(0)),
            ("g=n", CounterFunction::linear(1, 0)),
            ("g=2n+10", CounterFunction::linear(2, 10)),
        ];
        for k in [0u64, 1, 2] {
            for (label, g) in &counters {
                let n = brute_force_metastability(&run.points, &psi, &family, k, g, true, 1e-12)
                    .unwrap_or_else(|e| panic!("brute force failed at k={k} {label}: {e}"));
                let rate = hilbert::metastability_hilbert(&run, &map, k, g, budget).unwrap();
                assert!(
                    rate.value.dominates(&Nat::from(n)),
                    "k={k} {label}: N={n} not dominated by {}",
                    rate.value
                );
            }
        }
        assert!(start.elapsed().as_secs_f64() < 30.0, "criterion 5 runtime");
    });
}

#[test]
fn c06_rate_of_convergence_rotation() {
    criterion("C6 rotation rate of convergence", || {
        let start = std::time::Instant::now();
        let map = rotation_map();
        let rho = LinearRegularity::rotation_right_angle(&map.alpha);
        let b = BigRational::one();
        // delta = 1/10: ceil(1/rho(1/40)) = 57, bound 2*58^2 = 6728.
        let mu1 = hilbert::convergence_rate_hilbert(&rho, &map.alpha, &b, &q(1, 10));
        assert_eq!(mu1, Nat::from(6728u32));
        // delta = 1/100 by the same formula: ceil(1/rho(1/400)) = 566,
        // bound 2*567^2 = 642978.
        let mu2 = hilbert::convergence_rate_hilbert(&rho, &map.alpha, &b, &q(1, 100));
        assert_eq!(mu2, Nat::from(642_978u64));
        // Window checks.
        for (mu, delta) in [(6728u64, 0.1f64), (642_978u64, 0.01)] {
            let run = rotation_run(mu + 1001);
            let anchor = &run.points[(mu + 1000) as usize];
            let worst = (mu..=mu + 1000)
                .map(|n| metric(&run.points[n as usize], anchor))
                .fold(0.0f64, f64::max);
            assert!(worst < delta, "window check at delta={delta}: {worst}");
        }
        assert!(start.elapsed().as_secs_f64() < 5.0, "criterion 6 runtime");
    });
}

#[test]
fn c07_banach_pipeline() {
    criterion("C7 Banach pipeline", || {
        let start = std::time::Instant::now();
        let space = LpSpace::new(2, 4, BigRational::one()).unwrap();
        let op = MonotoneOperator::scaled_duality(BigRational::one(), 2);
        let sched = MannSchedule::constant(q(1, 4), q(1, 1), half(), q(1, 1)).unwrap();
        let x0 = Point(vec![1.0, 0.0]);
        let run = banach::run_mann(&space, &op, &sched, &x0, 500, 1e-12).unwrap();
        let zero = Point::zero(2);

        // Resolvent residual every step.
        for (n, r) in run.solver_residuals.iter().enumerate() {
            assert!(*r <= 1e-10, "solver residual at {n}: {r}");
        }
        // phi(0, x_n) nonincreasing.
        for w in run.points.windows(2) {
            assert!(
                phi_eval(&space, &zero, &w[1]) <= phi_eval(&space, &zero, &w[0]) + 1e-10,
                "phi monotonicity failed"
            );
        }
        // KT inequality over 10^3 samples.
        let mut rng = ChaCha8Rng::seed_from_u64(707);
        let samples: Vec<Point> = (0..1000).map(|_| sample_lp_ball(&mut rng, &space, 1.0)).collect();
        let v = banach::kt_inequality_check(&space, &op, &zero, &samples, 1.0, 1e-10);
        assert!(v.is_empty(), "{:?}", v.first());
        // liminf bound at eps in {1/10, 1/100}.
        let b = BigRational::one().max(
            BigRational::from_float(phi_eval(&space, &zero, &x0)).unwrap(),
        );
        for eps in [q(1, 10), q(1, 100)] {
            let (n, bound) = banach::liminf_bound_check(&run, &space, &sched, &b, &eps).unwrap();
            assert!(Nat::from(n) <= bound, "liminf witness beyond bound at eps={eps}");
        }
        // p = 2 cross-validation against the closed-form Hilbert iteration.
        let space2 = LpSpace::new(2, 2, BigRational::one()).unwrap();
        let run2 = banach::run_mann(&space2, &op, &sched, &x0, 500, 1e-12).unwrap();
        let factor = 0.25 + 0.75 / 2.0;
        let mut x = x0.clone();
        for (n, p) in run2.points.iter().enumerate() {
            assert!(p.sub(&x).norm2() <= 1e-12, "p=2 cross-validation failed at {n}");
            x = x.scale(factor);
        }
        assert!(start.elapsed().as_secs_f64() < 20.0, "criterion 7 runtime");
    });
}

// ---------------------------------------------------------------------------
// Criterion 8: the rate evaluators against an independent straight-line
// replay of the theorem displays, on random small table-based moduli.

mod replay {
    /// Clamped unary table lookup (same convention as the library moduli).
    pub fn tab(t: &[u64], k: u64) -> u64 {
        t[(k as usize).min(t.len() - 1)]
    }

    /// Deterministic ternary table for chi/zeta-shaped moduli.
    pub fn tab3(t: &[u64], n: u64, m: u64, r: u64) -> u64 {
        let idx = (n.min(7) + 8 * m.min(7) + 64 * r.min(7)) as usize % t.len();
        t[idx]
    }

    /// Deterministic binary table for liminf bounds.
    pub fn tab2(t: &[u64], level: u64, start: u64) -> u64 {
        let idx = (level.min(9) + 10 * start.min(9)) as usize % t.len();
        t[idx]
    }

    #[derive(Clone)]
    pub struct SmallInstance {
        pub alpha_g: Vec<u64>,
        pub beta_h: Vec<u64>,
        pub a: Vec<u64>,
        pub theta: Vec<u64>,
        pub gamma: Vec<u64>,
        pub xi: Vec<u64>,
        pub kappa: Vec<u64>,
        pub pi: Vec<u64>,
        pub omega: Vec<u64>,
        pub delta: Vec<u64>,
        pub chi3: Vec<u64>,
        pub zeta3: Vec<u64>,
        pub phi2: Vec<u64>,
        pub phi1: Vec<u64>,
        pub g_tab: Vec<u64>,
        pub f_shift: u64,
        pub k: u64,
    }

    #[derive(Clone, Copy, PartialEq, Eq)]
    pub enum Variant {
        General,
        GeneralClosed,
        SingleWithErrors,
        SingleErrorFree,
    }

    /// Literal transcription of the rate displays: `Psi(k,g) = 2 Psi_0(P,k,g)`
    /// with the recursion `Psi_0(n+1) = Phi(eta^M(Psi_0(n), 4 b_H(A(th(k)))+3), k^)`
    /// and the variant-specific `k^`, coded independently of the library
    /// (scan-based majorization, full P iterations, no shortcuts).
    pub fn psi(inst: &SmallInstance, variant: Variant) -> u64 {
        let closed = variant == Variant::GeneralClosed;
        let th = if closed {
            tab(&inst.theta, inst.k).max(tab(&inst.omega, inst.k))
        } else {
            tab(&inst.theta, inst.k)
        };
        let bh_a = tab(&inst.beta_h, tab(&inst.a, th));
        let r_main = 4 * bh_a + 3;
        let ag_r = tab(&inst.alpha_g, r_main);
        let p_arg = (2 * ag_r + 1).max(2 * tab(&inst.alpha_g, 2 * tab(&inst.beta_h, ag_r) + 1) + 1);
        let p = tab(&inst.gamma, p_arg);
        let r_third = 4 * tab(&inst.beta_h, tab(&inst.alpha_g, r_main)) + 3;

        let k_hat = match variant {
            Variant::SingleErrorFree => None,
            Variant::SingleWithErrors => Some(
                tab(&inst.kappa, tab(&inst.xi, 4 * tab(&inst.beta_h, ag_r) + 3))
                    .max(tab(&inst.xi, 2 * bh_a + 1))
                    .max(tab(&inst.kappa, tab(&inst.xi, 2 * bh_a + 1))),
            ),
            Variant::General | Variant::GeneralClosed => Some(
                tab(&inst.kappa, tab(&inst.xi, 4 * tab(&inst.beta_h, ag_r) + 3))
                    .max(tab(&inst.xi, 2 * bh_a + 1))
                    .max(tab(&inst.kappa, tab(&inst.xi, 2 * bh_a + 1)))
                    .max(tab(&inst.kappa, tab(&inst.pi, p_arg))),
            ),
        };

        let f = |n: u64| n.saturating_sub(inst.f_shift);
        let eta = |n: u64| {
            let hg = tab(&inst.g_tab, 2 * n) / 2;
            let mut v = tab3(&inst.chi3, n, hg, r_main).max(tab3(&inst.zeta3, n, hg, r_main));
            v = v.max(tab3(&inst.chi3, f(n), n - f(n), r_third));
            if closed {
                v = v.max(tab(&inst.delta, inst.k));
            }
            v
        };
        let phi = |level: u64| match k_hat {
            None => tab(&inst.phi1, level),
            Some(kh) => tab2(&inst.phi2, level, kh),
        };
        let mut v = 0u64;
        for _ in 0..p {
            let e = (0..=v).map(eta).max().unwrap();
            v = phi(e);
        }
        2 * v
    }
}

fn small_instance(rng: &mut ChaCha8Rng) -> replay::SmallInstance {
    let mut t = |len: usize, hi: u64| -> Vec<u64> { (0..len).map(|_| rng.gen_range(0..=hi)).collect() };
    replay::SmallInstance {
        alpha_g: t(12, 20),
        beta_h: t(12, 20),
        a: t(12, 20),
        theta: t(12, 20),
        gamma: t(12, 6),
        xi: t(12, 20),
        kappa: t(12, 20),
        pi: t(12, 20),
        omega: t(12, 20),
        delta: t(12, 20),
        chi3: t(40, 20),
        zeta3: t(40, 20),
        phi2: t(30, 20),
        phi1: t(12, 20),
        g_tab: t(12, 20),
        f_shift: 0,
        k: 0,
    }
}

fn library_inputs(inst: &replay::SmallInstance, unary_phi: bool) -> MetastabilityInputs {
    let u64_of = |n: &Nat| n.to_u64().expect("small instance value fits u64");
    let un = |t: Vec<u64>| {
        NatModulus::unary(move |k| Nat::from(replay::tab(&t, k.to_u64().expect("small"))))
    };
    let tern = |t: Vec<u64>| {
        NatModulus::ternary(move |n, m, r| {
            Nat::from(replay::tab3(&t, n.to_u64().expect("small"), m.to_u64().expect("small"), r.to_u64().expect("small")))
        })
    };
    let phi = if unary_phi {
        PhiBound::ApproxFPoint(un(inst.phi1.clone()))
    } else {
        let t = inst.phi2.clone();
        PhiBound::Liminf(NatModulus::binary(move |level, start| {
            Nat::from(replay::tab2(&t, level.to_u64().expect("small"), start.to_u64().expect("small")))
        }))
    };
    let g_tab = inst.g_tab.clone();
    let shift = inst.f_shift;
    let _ = u64_of;
    MetastabilityInputs {
        gamma: un(inst.gamma.clone()),
        alpha_g: un(inst.alpha_g.clone()),
        beta_h: un(inst.beta_h.clone()),
        a_compare: un(inst.a.clone()),
        theta: un(inst.theta.clone()),
        chi: tern(inst.chi3.clone()),
        zeta: tern(inst.zeta3.clone()),
        phi,
        xi: Some(un(inst.xi.clone())),
        kappa: Some(un(inst.kappa.clone())),
        pi: Some(un(inst.pi.clone())),
        omega: Some(un(inst.omega.clone())),
        delta: Some(un(inst.delta.clone())),
        f: StepFunction::truncated_shift(shift),
        g: CounterFunction::new(move |n| {
            Nat::from(replay::tab(&g_tab, n.to_u64().expect("small")))
        }),
        eta_monotone_in_n: false,
    }
}

#[test]
fn c08_rate_formula_oracle_equivalence() {
    criterion("C8 rate-formula oracle equivalence", || {
        let start = std::time::Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        let budget = EvalBudget::default();
        for trial in 0..50 {
            let mut inst = small_instance(&mut rng);
            inst.f_shift = rng.gen_range(0..3);
            inst.k = rng.gen_range(0..5);
            let k = Nat::from(inst.k);

            let lib = library_inputs(&inst, false);
            let got = psi_general(&lib, &k, budget).unwrap();
            let want = replay::psi(&inst, replay::Variant::General);
            assert_eq!(got.value, RateValue::Exact(Nat::from(want)), "general, trial {trial}");

            let got = psi_with_closedness(&lib, &k, budget).unwrap();
            let want = replay::psi(&inst, replay::Variant::GeneralClosed);
            assert_eq!(got.value, RateValue::Exact(Nat::from(want)), "closed, trial {trial}");

            let got = psi_single(&lib, &k, false, budget).unwrap();
            let want = replay::psi(&inst, replay::Variant::SingleWithErrors);
            assert_eq!(got.value, RateValue::Exact(Nat::from(want)), "single, trial {trial}");

            let lib_free = library_inputs(&inst, true);
            let got = psi_single(&lib_free, &k, true, budget).unwrap();
            let want = replay::psi(&inst, replay::Variant::SingleErrorFree);
            assert_eq!(got.value, RateValue::Exact(Nat::from(want)), "error-free, trial {trial}");
        }
        assert!(start.elapsed().as_secs_f64() < 10.0, "criterion 8 runtime");
    });
}

// ---------------------------------------------------------------------------
// Criterion 9: moduli-conversion propositions on randomized instances.

/// A controlled trajectory: distances to a designated solution follow a
/// prescribed scalar sequence along the first axis.
fn scalar_instance(a: &[f64], errors: ErrorSchedule) -> (FejerInstance, Point) {
    let sol = Point(vec![0.0, 0.0]);
    let points: Vec<Point> = a.iter().map(|&v| Point(vec![v, 0.0])).collect();
    let family = ApproximationFamily::from_residual(|x: &Point| x.norm2());
    let mut inst = FejerInstance::new(
        PointSeq::recorded(points),
        DistanceSeq::Constant(GeneralizedDistance::euclidean()),
        family,
    );
    inst.errors = errors;
    (inst, sol)
}

#[test]
fn c09_moduli_conversion_propositions() {
    criterion("C9 moduli conversions", || {
        let start = std::time::Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(909);

        // (a) Even/odd split of a fully quasi-Fejér sequence: a_{n+1} <=
        // a_n + eps_n by construction, so chi == 0 is a modulus; the
        // derived moduli must pass the partial checkers with the folded
        // error schedule.
        for _ in 0..100 {
            let eps = ErrorSchedule::inverse_square();
            let mut a = vec![rng.gen_range(0.2f64..1.0)];
            for n in 0..120u64 {
                let step = eps.eval(n).to_f64().unwrap() * rng.gen_range(-1.0f64..1.0);
                a.push((a[n as usize] + step).max(0.0));
            }
            let chi_full = NatModulus::ternary(|_, _, _| Nat::zero());
            let (chi_even, eta_odd, folded) = derive_partial_from_full(&chi_full, &eps);
            let (mut inst, sol) = scalar_instance(&a, folded);
            inst.chi = Some(chi_even);
            inst.zeta = Some(eta_odd);
            let v = check_quasi_fejer(&inst, &[sol.clone()], 55, 1e-9);
            assert!(v.is_empty(), "derived even modulus violated: {:?}", v.first());
            let grid: Vec<(u64, u64, u64)> =
                (0..4).flat_map(|n| (0..4).map(move |m| (n, m, 3))).collect();
            let samples = vec![sol.clone(), Point(vec![0.4, 0.0])];
            let v = check_uniform_modulus(&inst, UniformKind::Chi, &grid, &samples, 1e-9);
            assert!(v.is_empty(), "chi' violated: {:?}", v.first());
            let v = check_uniform_modulus(&inst, UniformKind::Zeta, &grid, &samples, 1e-9);
            assert!(v.is_empty(), "eta' violated: {:?}", v.first());
        }
        // Substitution values.
        {
            let chi = NatModulus::ternary(|n, m, r| n + m + r);
            let (ce, eo, _) = derive_partial_from_full(&chi, &ErrorSchedule::zero());
            let (n, m, r) = (Nat::from(1u32), Nat::from(2u32), Nat::from(3u32));
            assert_eq!(ce.eval3(&n, &m, &r), Nat::from(9u32));
            assert_eq!(eo.eval3(&n, &m, &r), Nat::from(10u32));
        }

        // (b) Mixed (G1,H1)/(G2,H2) combination with identity G/H: even
        // distances nonincreasing, odd elements copied from the lagged
        // even ones, so 0-moduli satisfy both hypotheses; the combined
        // modulus must pass the f-monotonicity checker.
        for _ in 0..100 {
            let shift = rng.gen_range(0..3u64);
            let f = StepFunction::truncated_shift(shift);
            let mut a = vec![rng.gen_range(0.5f64..1.0)];
            for n in 0..160usize {
                a.push(a[n] * rng.gen_range(0.85f64..1.0));
            }
            let mut points: Vec<Point> = a.iter().map(|&v| Point(vec![v, 0.0])).collect();
            for n in 0..(points.len() - 1) / 2 {
                let lag = f.eval_u64(n as u64) as usize;
                points[2 * n + 1] = points[2 * lag].clone();
            }
            let family = ApproximationFamily::from_residual(|x: &Point| x.norm2());
            let mut inst = FejerInstance::new(
                PointSeq::recorded(points),
                DistanceSeq::Constant(GeneralizedDistance::euclidean()),
                family,
            );
            inst.f = f.clone();
            let chi = NatModulus::ternary(|_, _, _| Nat::zero());
            let zeta2 = NatModulus::binary(|_, _| Nat::zero());
            inst.zeta = Some(mixed_gh_f_modulus(&chi, &zeta2, &f));
            let grid: Vec<(u64, u64, u64)> =
                (0..5).flat_map(|n| (0..5).map(move |m| (n, m, 2))).collect();
            let samples = vec![Point(vec![0.0, 0.0])];
            let v = check_uniform_modulus(&inst, UniformKind::Zeta, &grid, &samples, 1e-9);
            assert!(v.is_empty(), "mixed modulus violated: {:?}", v.first());
        }

        // (c) Affine shift: hat sequence case table, even subsequence
        // preservation, and the shifted approximate-point bound, against
        // geometric decays with the true minimal bound as input.
        for _ in 0..100 {
            let s = [1u64, 3, 5][rng.gen_range(0..3)];
            let shift = affine_shift(s).unwrap();
            let rate = rng.gen_range(0.6f64..0.95);
            let a: Vec<f64> = (0..200).map(|n| rate.powi(n)).collect();
            let points: Vec<Point> = a.iter().map(|&v| Point(vec![v, 0.0])).collect();
            let hat = shift.hat_sequence(&points);
            for n in 0..points.len() as u64 {
                let expect = if n >= s || n % 2 == 0 { n } else { n - 1 };
                assert_eq!(shift.hat_index(n), expect);
                if n % 2 == 0 {
                    assert_eq!(hat[n as usize], points[n as usize]);
                }
            }
            // True minimal approximate-point bound for the evens.
            let res = |x: &Point| x.norm2();
            let minimal: Vec<u64> = (0..=8u64)
                .map(|k| {
                    let gate = 1.0 / (k as f64 + 1.0);
                    (0..).find(|&n| res(&points[2 * n as usize]) <= gate).unwrap()
                })
                .collect();
            let phi = NatModulus::unary(move |k| {
                Nat::from(minimal[(k.to_u64().unwrap_or(0) as usize).min(8)])
            });
            let shifted = shift.shift_phi_bound(&phi);
            for k in 0..=8u64 {
                let bound = shifted.eval1_u64(k).to_u64().unwrap();
                let gate = 1.0 / (k as f64 + 1.0);
                let ok = (0..=bound.min(90)).any(|n| {
                    let idx = shift.hat_index(2 * shift.f.eval_u64(n)) as usize;
                    res(&hat[idx]) <= gate && res(&points[idx]) <= gate
                });
                assert!(ok, "shifted bound failed at k={k}, s={s}");
            }
        }

        // (d) Total-boundedness conversion: cover modulus for the grid
        // [-1,1]^2 at spacing 2^-6, converted through theta(k) = 2k+1,
        // checked by pigeonhole against greedy-spreading sequences.
        {
            let gridpts: Vec<Point> = {
                let mut v = Vec::new();
                let m = 64i32;
                for i in -m..=m {
                    for j in -m..=m {
                        v.push(Point(vec![i as f64 / m as f64, j as f64 / m as f64]));
                    }
                }
                v
            };
            let alpha = NatModulus::unary(|k: &Nat| {
                // Lattice cover of [-1,1]^2 by balls of radius 1/(k+1):
                // (m+1)^2 points at spacing 2/m with m = ceil(sqrt(2)(k+1)).
                let k = k.to_u64().expect("small k");
                let m = ((2.0f64).sqrt() * (k as f64 + 1.0)).ceil() as u64;
                Nat::from((m + 1) * (m + 1) - 1)
            });
            let theta = NatModulus::unary(|k| k * 2u32 + 1u32);
            let gamma = convert_tb_modulus(&alpha, &theta, TbDirection::CoverToSequence).unwrap();
            let dist = GeneralizedDistance::euclidean();
            let ks: Vec<u64> = (0..=4).collect();
            let max_needed: usize = ks
                .iter()
                .map(|&k| gamma.eval1_u64(k).to_usize().unwrap() + 1)
                .max()
                .unwrap();
            let mut sequences = Vec::new();
            for _ in 0..100 {
                sequences.push(greedy_spread(&gridpts, max_needed, &mut rng));
            }
            let failures =
                total_boundedness_pigeonhole_check(&sequences, &dist, &gamma, &ks).unwrap();
            assert!(failures.is_empty(), "pigeonhole failed: {failures:?}");
            // Round trip with theta = id.
            let id = NatModulus::identity();
            let g2 = convert_tb_modulus(&alpha, &id, TbDirection::CoverToSequence).unwrap();
            let back = convert_tb_modulus(&g2, &id, TbDirection::SequenceToCover).unwrap();
            for k in 0..8 {
                assert_eq!(back.eval1_u64(k), alpha.eval1_u64(k));
            }
        }

        // (e) Closedness/compactness translation through consistency
        // moduli: phi = d^2 with lambda(k) = (k+1)^2 - 1 and
        // Lambda(k) = ceil(sqrt(k+1)) - 1; converted closedness moduli
        // must pass the phi-closedness implication for residual families
        // built from random finite sets, and gamma' = gamma(Lambda(.))
        // the phi-pigeonhole.
        {
            let phi_sq = GeneralizedDistance::new("metric_squared", |x, y| {
                let d = metric(x, y);
                d * d
            });
            let lambda = NatModulus::unary(|k| (k + 1u32) * (k + 1u32) - 1u32);
            let cap_lambda = NatModulus::unary(|k: &Nat| {
                let v = k + 1u32;
                fejermon::dotminus(&fejermon::ceil_root_scaled(
                    &BigRational::from_integer(1.into()),
                    v.to_u64().unwrap(),
                    2,
                ), &Nat::one())
            });
            let omega = NatModulus::unary(|k| k * 2u32 + 1u32);
            let delta = NatModulus::unary(|k| k * 2u32 + 1u32);
            let alpha_box = NatModulus::unary(|k: &Nat| {
                let k = k.to_u64().expect("small k");
                let m = ((2.0f64).sqrt() * (k as f64 + 1.0)).ceil() as u64;
                Nat::from((m + 1) * (m + 1) - 1)
            });
            let theta = NatModulus::unary(|k| k * 2u32 + 1u32);
            let gamma =
                convert_tb_modulus(&alpha_box, &theta, TbDirection::CoverToSequence).unwrap();
            let (gamma_p, omega_p, delta_p) =
                convert_closedness_and_tb(&gamma, &omega, &delta, &lambda, &cap_lambda);
            assert_eq!(delta_p.eval1_u64(3), delta.eval1_u64(3));

            for _ in 0..100 {
                let anchors: Vec<Point> = (0..rng.gen_range(1..4))
                    .map(|_| Point(vec![rng.gen_range(-0.8f64..0.8), rng.gen_range(-0.8..0.8)]))
                    .collect();
                let anchors2 = anchors.clone();
                let family = ApproximationFamily::from_residual(move |x: &Point| {
                    anchors2.iter().map(|a| metric(x, a)).fold(f64::INFINITY, f64::min)
                });
                let mut pairs = Vec::new();
                for _ in 0..40 {
                    let a = &anchors[rng.gen_range(0..anchors.len())];
                    let q_pt = a.add(&Point(vec![
                        rng.gen_range(-0.05f64..0.05),
                        rng.gen_range(-0.05..0.05),
                    ]));
                    let p_pt = q_pt.add(&Point(vec![
                        rng.gen_range(-0.05f64..0.05),
                        rng.gen_range(-0.05..0.05),
                    ]));
                    pairs.push((q_pt, p_pt));
                }
                let bad = closedness_check(&family, &omega_p, &delta_p, &phi_sq, &pairs, &[0, 1, 2, 3]);
                assert!(bad.is_empty(), "phi-closedness violated: {bad:?}");
            }
            // gamma' passes the phi-pigeonhole on greedy sequences.
            let gridpts: Vec<Point> = {
                let mut v = Vec::new();
                let m = 64i32;
                for i in -m..=m {
                    for j in -m..=m {
                        v.push(Point(vec![i as f64 / m as f64, j as f64 / m as f64]));
                    }
                }
                v
            };
            let ks: Vec<u64> = (0..=3).collect();
            let needed: usize = ks
                .iter()
                .map(|&k| gamma_p.eval1_u64(k).to_usize().unwrap() + 1)
                .max()
                .unwrap();
            let seqs: Vec<Vec<Point>> =
                (0..20).map(|_| greedy_spread(&gridpts, needed, &mut rng)).collect();
            let failures = total_boundedness_pigeonhole_check(&seqs, &phi_sq, &gamma_p, &ks).unwrap();
            assert!(failures.is_empty(), "phi-pigeonhole failed: {failures:?}");
        }
        assert!(start.elapsed().as_secs_f64() < 10.0, "criterion 9 runtime");
    });
}

/// Greedy farthest-point sequence over a finite ground set: each element
/// maximizes the minimal distance to everything chosen before it
/// (squared distances; the argmax is the same).
fn greedy_spread(ground: &[Point], len: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let sq = |a: &Point, b: &Point| {
        let dx = a.0[0] - b.0[0];
        let dy = a.0[1] - b.0[1];
        dx * dx + dy * dy
    };
    let mut chosen = Vec::with_capacity(len);
    let first = rng.gen_range(0..ground.len());
    chosen.push(ground[first].clone());
    let mut min_dist: Vec<f64> = ground.iter().map(|p| sq(p, &ground[first])).collect();
    while chosen.len() < len {
        let (best, _) = min_dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        chosen.push(ground[best].clone());
        for (i, p) in ground.iter().enumerate() {
            let d = sq(p, &ground[best]);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }
    chosen
}

// ---------------------------------------------------------------------------
// Criterion 10: determinism of the CLI over every shipped config.

#[test]
fn c10_determinism_of_shipped_configs() {
    criterion("C10 shipped-config determinism", || {
        let start = std::time::Instant::now();
        let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let bin = env!("CARGO_BIN_EXE_fejermon");
        let mut configs: Vec<_> = std::fs::read_dir(&root)
            .expect("configs directory")
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        configs.sort();
        assert!(!configs.is_empty(), "no shipped configs found");
        let tmp = std::env::temp_dir().join(format!("fejermon-acceptance-{}", std::process::id()));
        for run_dir in ["a", "b"] {
            let out = tmp.join(run_dir);
            let status = std::process::Command::new(bin)
                .arg("run")
                .args(&configs)
                .arg("--out")
                .arg(&out)
                .status()
                .expect("spawn harness binary");
            assert!(status.success(), "harness exited with {status:?}");
        }
        let mut compared = 0usize;
        for entry in std::fs::read_dir(tmp.join("a")).unwrap() {
            let path = entry.unwrap().path();
            let name = path.file_name().unwrap().to_owned();
            let a = std::fs::read(&path).unwrap();
            let b = std::fs::read(tmp.join("b").join(&name)).unwrap();
            assert_eq!(a, b, "outputs differ for {name:?}");
            compared += 1;
        }
        assert!(compared >= 2 * configs.len(), "missing output files");
        std::fs::remove_dir_all(&tmp).ok();
        assert!(start.elapsed().as_secs_f64() < 120.0, "criterion 10 runtime");
    });
}
