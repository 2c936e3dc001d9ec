//! Randomized invariant suites over the public API: counting identities,
//! joint-spectrum diagnostics, and solver bounds.

use proptest::prelude::*;

use sfwm_core::counting::{
    analytic_rates, backout_source_rate, power_sweep, simulate_stream, DetectionChain,
    PairStatistics, SourceModel,
};
use sfwm_core::dispersion::{FiberSpec, SellmeierModel};
use sfwm_core::fibermodes::v_number;
use sfwm_core::fibermodes::solve_modes;
use sfwm_core::jsi::{marginal_spectrum, schmidt_diagnostics, JsiGrid, MarginalAxis};
use sfwm_core::phasematch::{check_energy_conservation, solve_phase_matching, ProcessSpec};

const REP_RATE_HZ: f64 = 80e6;

fn fiber(core_radius_um: f64, numerical_aperture: f64, delta_n: f64) -> FiberSpec {
    FiberSpec {
        core_radius_um,
        numerical_aperture,
        length_m: 1.0,
        delta_n,
        cladding_model: SellmeierModel::fused_silica(),
    }
}

/// Product grid f(ωs)·g(ωi) over the given axes.
fn separable_grid(n_s: usize, n_i: usize, w_s: f64, w_i: f64) -> JsiGrid {
    let axis = |n: usize| -> Vec<f64> {
        (0..n).map(|k| 1.0 + k as f64 / (n - 1) as f64).collect()
    };
    let omega_s = axis(n_s);
    let omega_i = axis(n_i);
    let f = |w: f64, width: f64| (-((w - 1.4) / width).powi(2)).exp();
    let mut amplitude = Vec::with_capacity(n_s * n_i);
    for ws in &omega_s {
        for wi in &omega_i {
            amplitude.push(nalgebra::Complex::new(f(*ws, w_s) * f(*wi, w_i), 0.0));
        }
    }
    JsiGrid {
        omega_s,
        omega_i,
        intensity: amplitude.iter().map(|a| a.norm_sqr()).collect(),
        amplitude,
        max_normalized: false,
        brackets_solution: true,
    }
}

proptest! {
    /// Dividing measured coincidences by both chain efficiencies is exactly
    /// inverted by multiplying them back.
    #[test]
    fn backout_inverts_chain_losses(
        coincidences in 1.0..1e6f64,
        t_s in 0.05..1.0f64,
        t_i in 0.05..1.0f64,
        d_s in 0.05..1.0f64,
        d_i in 0.05..1.0f64,
    ) {
        let chain_s = DetectionChain::new("s", d_s).with_stage("filter", t_s);
        let chain_i = DetectionChain::new("i", d_i).with_stage("filter", t_i);
        let source = backout_source_rate(coincidences, &chain_s, &chain_i).unwrap();
        let forward = source * chain_s.total_efficiency() * chain_i.total_efficiency();
        prop_assert!((forward / coincidences - 1.0).abs() < 1e-12);
    }

    /// Heralding efficiencies never exceed the opposite arm's transmission.
    #[test]
    fn heralding_bounded_by_chain_efficiency(
        kappa in 1e-8..1e-4f64,
        power in 0.1..50.0f64,
        eta_s in 0.05..1.0f64,
        eta_i in 0.05..1.0f64,
        bg_s in 0.0..1e5f64,
        dark_i in 0.0..1e4f64,
    ) {
        let src = SourceModel::new(kappa, REP_RATE_HZ);
        let chain_s = DetectionChain::new("s", eta_s).with_background(bg_s);
        let chain_i = DetectionChain::new("i", eta_i).with_dark_counts(dark_i);
        let r = analytic_rates(&src, &chain_s, &chain_i, power, 2.0).unwrap();
        prop_assert!(r.heralding_s_given_i <= eta_s * (1.0 + 1e-12));
        prop_assert!(r.heralding_i_given_s <= eta_i * (1.0 + 1e-12));
    }

    /// Without backgrounds, g² = 1/µ: strictly decreasing in pump power
    /// while coincidences rise.
    #[test]
    fn analytic_g2_decreases_with_power(
        kappa in 1e-7..1e-4f64,
        eta_s in 0.05..1.0f64,
        eta_i in 0.05..1.0f64,
        start in 0.5..5.0f64,
        step in 0.5..10.0f64,
        n_points in 2..7usize,
    ) {
        let powers: Vec<f64> = (0..n_points).map(|k| start + step * k as f64).collect();
        let src = SourceModel::new(kappa, REP_RATE_HZ);
        let chain_s = DetectionChain::new("s", eta_s);
        let chain_i = DetectionChain::new("i", eta_i);
        let sweep = power_sweep(&src, &chain_s, &chain_i, &powers, 2.0, None).unwrap();
        prop_assert!(sweep.coincidences_increasing);
        prop_assert!(sweep.g2_decreasing);
    }

    /// The exact energy-conservation partner always passes the bandwidth
    /// check with vanishing mismatch.
    #[test]
    fn energy_partner_conserves_exactly(
        lambda_p in 900.0..1200.0f64,
        offset in 1.0..300.0f64,
    ) {
        let lambda_s = lambda_p - offset;
        let lambda_i = 1.0 / (2.0 / lambda_p - 1.0 / lambda_s);
        let (mismatch, ok) = check_energy_conservation(lambda_p, lambda_s, lambda_i, 1e-3);
        prop_assert!(ok);
        prop_assert!(mismatch < 1e-12);
    }

    /// Any product-form joint amplitude is exactly separable: K = 1.
    #[test]
    fn separable_grids_have_unit_schmidt_number(
        n_s in 8..48usize,
        n_i in 8..48usize,
        w_s in 0.05..0.5f64,
        w_i in 0.05..0.5f64,
    ) {
        let grid = separable_grid(n_s, n_i, w_s, w_i);
        let report = schmidt_diagnostics(&grid).unwrap();
        prop_assert!((report.schmidt_number - 1.0).abs() < 1e-6);
        prop_assert!((report.purity - 1.0).abs() < 1e-6);
    }

    /// Marginal spectra carry the same integral as the full grid.
    #[test]
    fn marginals_integrate_to_grid_total(
        n_s in 8..40usize,
        n_i in 8..40usize,
        values in prop::collection::vec(0.0..1.0f64, 40 * 40),
    ) {
        let axis = |n: usize| -> Vec<f64> {
            (0..n).map(|k| 2.0 + 0.01 * k as f64).collect()
        };
        let intensity: Vec<f64> =
            (0..n_s * n_i).map(|k| values[k % values.len()] + 0.1).collect();
        let grid = JsiGrid {
            omega_s: axis(n_s),
            omega_i: axis(n_i),
            amplitude: intensity
                .iter()
                .map(|v| nalgebra::Complex::new(v.sqrt(), 0.0))
                .collect(),
            intensity,
            max_normalized: false,
            brackets_solution: true,
        };
        let total = grid.total_integral();
        for which in [MarginalAxis::Signal, MarginalAxis::Idler] {
            let m = marginal_spectrum(&grid, which);
            prop_assert!((m.integral() / total - 1.0).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// A seed pins the simulation exactly; changing it decorrelates the draw.
    #[test]
    fn seeded_simulation_is_deterministic(
        kappa in 1e-6..1e-3f64,
        eta_s in 0.2..1.0f64,
        eta_i in 0.2..1.0f64,
        thermal in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let stats = if thermal { PairStatistics::Thermal } else { PairStatistics::Poisson };
        let src = SourceModel::new(kappa, REP_RATE_HZ).with_statistics(stats);
        let chain_s = DetectionChain::new("s", eta_s).with_background(5e4);
        let chain_i = DetectionChain::new("i", eta_i).with_jitter(40.0);
        let run = || simulate_stream(&src, &chain_s, &chain_i, 20.0, 0.01, seed).unwrap();
        let (s1, i1) = run();
        let (s2, i2) = run();
        prop_assert!(s1 == s2 && i1 == i2);
        prop_assert!(s1.is_time_ordered() && i1.is_time_ordered());
        let (s3, i3) =
            simulate_stream(&src, &chain_s, &chain_i, 20.0, 0.01, seed.wrapping_add(1)).unwrap();
        prop_assert!(s1 != s3 || i1 != i3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Every solved mode sits strictly between the cladding and core indices,
    /// satisfies the transverse-parameter identity, and the list comes back
    /// ordered by confinement.
    #[test]
    fn mode_solver_stays_in_bounds(
        core_radius_um in 2.5..6.0f64,
        numerical_aperture in 0.08..0.2f64,
        lambda_um in 0.7..1.55f64,
    ) {
        let f = fiber(core_radius_um, numerical_aperture, 0.0);
        let v = v_number(&f, lambda_um);
        prop_assume!(v >= 1.0);
        let n_cl = f.n_cladding(lambda_um).unwrap();
        let n_co = f.n_core(lambda_um).unwrap();
        let sols = solve_modes(&f, lambda_um).unwrap();
        prop_assert!(!sols.is_empty());
        for s in &sols {
            prop_assert!(s.n_eff > n_cl && s.n_eff < n_co);
            let identity = (s.u * s.u + s.w * s.w).sqrt();
            prop_assert!((identity / v - 1.0).abs() < 1e-9);
        }
        for pair in sols.windows(2) {
            prop_assert!(pair[0].n_eff >= pair[1].n_eff);
        }
    }

    /// Phase-matched roots leave a vanishing mismatch residual and respect
    /// energy conservation exactly.
    #[test]
    fn phase_match_solutions_are_self_consistent(delta_n in 2e-4..6e-4f64) {
        let f = fiber(4.1, 0.125, delta_n);
        for proc in [ProcessSpec::fundamental("p1"), ProcessSpec::intermodal("p2")] {
            for sol in solve_phase_matching(&f, &proc, 1064.0).unwrap() {
                prop_assert!(sol.delta_beta_residual < 1e-6);
                let (mismatch, _) = check_energy_conservation(
                    1064.0,
                    sol.lambda_signal_nm,
                    sol.lambda_idler_nm,
                    6.0,
                );
                prop_assert!(mismatch < 1e-9);
                prop_assert_eq!(sol.signal_is_nir, sol.lambda_signal_nm < 1064.0);
            }
        }
    }
}
