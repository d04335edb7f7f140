use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use vcosolve::metrics::power_for_integrators;
use vcosolve::phase::{dominant_tone, simulate_phase_lowpass};
use vcosolve::{
    direct_solve_oracle, efficiency, inf_norm, integrator_count, inv_inf_norm, plan,
    power_estimate, quantize_entry, realized_matrix, scale_problem, solve, unscale_solution,
    IntegratorScheme, LinearProblem, Mode, PhaseConfig, PlanOptions, QuantizerSpec, ScalePolicy,
    SolverConfig,
};

fn matrix(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(lo..hi, n * n).prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
}

fn system(max_n: usize, entry: f64) -> impl Strategy<Value = LinearProblem> {
    (1usize..=max_n).prop_flat_map(move |n| {
        (
            matrix(n, -entry, entry),
            proptest::collection::vec(-0.5f64..=0.5, n),
        )
            .prop_filter_map("singular", |(a, b)| {
                inv_inf_norm(&a).ok()?;
                LinearProblem::new(a, DVector::from_vec(b)).ok()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn condition_number_is_at_least_one(p in system(8, 1.0)) {
        let kappa = inf_norm(p.a()) * inv_inf_norm(p.a()).unwrap();
        prop_assert!(kappa >= 1.0 - 1e-12);
    }

    #[test]
    fn scaling_round_trip_matches_oracle(p in system(8, 1.0)) {
        let sp = scale_problem(&p, ScalePolicy::Exact).unwrap();
        let y = direct_solve_oracle(&sp.scaled_problem()).unwrap();
        prop_assert!(y.amax() <= 0.5 + 1e-12);
        prop_assert!(sp.factor_scale >= sp.a_inv_inf_norm);
        prop_assert!((sp.kappa_inf - sp.a_inf_norm * sp.a_inv_inf_norm).abs() <= 1e-12 * sp.kappa_inf);
        let x = unscale_solution(&sp, &y).unwrap();
        let oracle = direct_solve_oracle(&p).unwrap();
        prop_assert!((&x - &oracle).amax() <= 1e-8 * oracle.amax().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn inf_norm_ignores_row_order_and_signs(
        a in matrix(5, -3.0, 3.0),
        perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
        flips in proptest::collection::vec(any::<bool>(), 25),
    ) {
        let permuted = DMatrix::from_fn(5, 5, |i, j| a[(perm[i], j)]);
        let flipped = DMatrix::from_fn(5, 5, |i, j| if flips[i * 5 + j] { -a[(i, j)] } else { a[(i, j)] });
        prop_assert_eq!(inf_norm(&permuted), inf_norm(&a));
        prop_assert_eq!(inf_norm(&flipped), inf_norm(&a));
    }

    #[test]
    fn ideal_plan_round_trips_exactly(p in system(6, 8.0)) {
        let pl = plan(&p, 2000.0, &PlanOptions::default()).unwrap();
        let (a, b) = realized_matrix(&pl);
        prop_assert_eq!(&a, p.a());
        prop_assert_eq!(&b, p.b());
    }

    #[test]
    fn inverters_never_exceed_half_the_entries(p in system(8, 8.0)) {
        let pl = plan(&p, 2000.0, &PlanOptions::default()).unwrap();
        let n = p.n();
        let positive = p.a().iter().filter(|&&v| v > 0.0).count();
        let negative = p.a().iter().filter(|&&v| v < 0.0).count();
        prop_assert_eq!(pl.inverter_count, positive.min(negative));
        prop_assert!(pl.inverter_count <= n * n / 2);
        prop_assert_eq!(pl.total_integrators, n + pl.inverter_count);
    }

    #[test]
    fn negated_problem_realizes_the_same_system(p in system(6, 8.0)) {
        let opts = PlanOptions::default();
        let pos = plan(&p, 2000.0, &opts).unwrap();
        let neg = plan(&p.negated(), 2000.0, &opts).unwrap();
        let (a1, b1) = realized_matrix(&pos);
        let (a2, b2) = realized_matrix(&neg);
        prop_assert_eq!(a1, -a2);
        prop_assert_eq!(b1, -b2);
        let positive = p.a().iter().filter(|&&v| v > 0.0).count();
        let negative = p.a().iter().filter(|&&v| v < 0.0).count();
        if positive == negative {
            // Ties keep the given orientation, so the two builds mirror each other.
            prop_assert!(!pos.negated && !neg.negated);
            prop_assert_eq!(pos.compiled_matrix(), -neg.compiled_matrix());
        } else {
            prop_assert_ne!(pos.negated, neg.negated);
            prop_assert_eq!(pos.compiled_matrix(), neg.compiled_matrix());
            prop_assert_eq!(&pos.compiled_b, &neg.compiled_b);
        }
        prop_assert_eq!(pos.inverter_count, neg.inverter_count);
    }

    #[test]
    fn switch_resistance_strictly_degrades(bits in 1u32..=10, code_frac in 0.0f64..1.0, r_on in 0.1f64..50.0) {
        let ideal = QuantizerSpec::new(bits, 2000.0, 1000.0, 0.0).unwrap();
        let code = (code_frac * f64::from(ideal.max_code())).round() as u32;
        let lossy = QuantizerSpec::new(bits, 2000.0, 1000.0, r_on).unwrap();
        let worse = QuantizerSpec::new(bits, 2000.0, 1000.0, 2.0 * r_on).unwrap();
        prop_assert!(lossy.magnitude(code) < ideal.magnitude(code));
        prop_assert!(worse.magnitude(code) < lossy.magnitude(code));
    }

    #[test]
    fn ideal_ladder_is_exact_for_every_code(bits in 1u32..=10) {
        let q = QuantizerSpec::new(bits, 2000.0, 1000.0, 0.0).unwrap();
        let mut last = 0.0;
        for code in 0..=q.max_code() {
            let m = q.magnitude(code);
            prop_assert_eq!(m, f64::from(code + 1) * 2.0);
            prop_assert!(m > last);
            last = m;
            let back = quantize_entry(-m, &q).unwrap();
            prop_assert_eq!(back.code, Some(code));
            prop_assert_eq!(back.realized, -m);
        }
    }

    #[test]
    fn efficiency_is_dimensionally_consistent(n in 1usize..64, p_mw in 0.01f64..100.0, t in 1e-9f64..1e-3) {
        let r = efficiency(vcosolve::ops_count(n), p_mw, t).unwrap();
        let lhs = r.gops_per_w * p_mw * 1e-3 * t;
        prop_assert!((lhs / (r.n_ops as f64 * 1e-9) - 1.0).abs() < 1e-12);
        prop_assert_eq!(r.energy_uj, p_mw * (t * 1e6) * 1e-3);
        let more_power = efficiency(r.n_ops, p_mw * 1.5, t).unwrap();
        let more_time = efficiency(r.n_ops, p_mw, t * 1.5).unwrap();
        prop_assert!(more_power.gops_per_w < r.gops_per_w);
        prop_assert!(more_time.gops_per_w < r.gops_per_w);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Solutions of (A, b) and (-A, -b) agree once each goes through the full pipeline.
    #[test]
    fn negation_leaves_solutions_unchanged(
        mags in proptest::collection::vec(0.1f64..1.0, 4),
        b in proptest::collection::vec(-0.1f64..0.1, 2),
    ) {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0 - mags[0], -mags[1], -mags[2], -2.0 - mags[3]]);
        let p = LinearProblem::new(a, DVector::from_vec(b)).unwrap();
        let cfg = SolverConfig { t_max: 1e-6, ..SolverConfig::default() };
        let x1 = solve(&p, &cfg, &PlanOptions::default()).unwrap().x;
        let x2 = solve(&p.negated(), &cfg, &PlanOptions::default()).unwrap().x;
        prop_assert_eq!(x1, x2);
    }
}

#[test]
fn saturated_sign_pattern_hits_the_census_bound() {
    // A checkerboard splits the n^2 entries evenly between signs.
    for n in [2usize, 4, 8] {
        let a = DMatrix::from_fn(n, n, |i, j| {
            let m = 1.0 + (i * n + j) as f64 / 100.0;
            if (i + j) % 2 == 0 {
                -m
            } else {
                m
            }
        });
        let p = LinearProblem::new(a, DVector::from_element(n, 0.1)).unwrap();
        let pl = plan(&p, 2000.0, &PlanOptions::default()).unwrap();
        let bound = integrator_count(n, IntegratorScheme::AfterReuse);
        assert_eq!(pl.total_integrators, bound);
        assert_eq!(
            power_estimate(&pl, 0.15).unwrap(),
            power_for_integrators(bound, 0.15).unwrap()
        );
    }
}

#[test]
fn ideal_and_structural_modes_agree_on_negative_systems() {
    let p = LinearProblem::from_rows(
        &[
            vec![-3.0, -0.5, -0.2],
            vec![-0.4, -2.5, -0.3],
            vec![-0.1, -0.6, -2.0],
        ],
        &[0.3, -0.2, 0.1],
    )
    .unwrap();
    let base = SolverConfig {
        t_max: 2e-6,
        ..SolverConfig::default()
    };
    let ideal = solve(
        &p,
        &SolverConfig {
            mode: Mode::Ideal,
            ..base
        },
        &PlanOptions::default(),
    )
    .unwrap();
    let structural = solve(&p, &base, &PlanOptions::default()).unwrap();
    assert!((&ideal.x - &structural.x).amax() <= 1e-6);
}

#[test]
fn spur_follows_even_phase_counts() {
    // Odd counts are exercised by the acceptance target.
    let n = 1 << 15;
    for m in [4usize, 8, 32] {
        let cfg = PhaseConfig {
            m_phases: m,
            ..PhaseConfig::default()
        };
        let out = simulate_phase_lowpass(&vec![0.2; n + 20_000], 1.0, &cfg).unwrap();
        let (f, _) = dominant_tone(&out[20_000..], cfg.dt, 0.5 * cfg.f_ref, 0.5 / cfg.dt).unwrap();
        let df = 1.0 / (n as f64 * cfg.dt);
        assert!(
            (f - m as f64 * cfg.f_ref).abs() <= 2.0 * df,
            "M = {m}: {f:e}"
        );
    }
}
