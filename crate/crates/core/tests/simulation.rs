use hazbias::aalen::{self, Coefficient};
use hazbias::model::{Arm, BaselineSpec, EffectSpec, FrailtyDistribution, ModifierDistribution, ScmSpec};
use hazbias::simulator::{
    conditional_expectation_curve, integrated_ohd_curve, sample_population, sample_population_partitioned,
    simulate_rct, survival_curves, Censoring, Statistic,
};
use hazbias::stochastics::{CopulaSpec, RngStream};

fn gamma_scm(ell: f64, copula: CopulaSpec) -> ScmSpec {
    ScmSpec::new(
        BaselineSpec::quadratic(ell),
        EffectSpec::constant(),
        ModifierDistribution::ShiftedGamma {
            k: 1.0,
            theta: 1.0,
            ell_shift: 0.0,
        },
        FrailtyDistribution::Gamma { k: 1.0, theta: 1.0 },
        copula,
    )
    .unwrap()
}

fn grid(end: f64, step: f64) -> Vec<f64> {
    hazbias::curve::uniform_grid(0.0, end, step)
}

#[test]
fn exponential_survival() {
    let scm = ScmSpec::new(
        BaselineSpec::new(0.0, 0.0, 1.0).unwrap(),
        EffectSpec::constant(),
        ModifierDistribution::Degenerate { c: 0.0 },
        FrailtyDistribution::Degenerate { c: 1.0 },
        CopulaSpec::Independence,
    )
    .unwrap();
    let n = 20_000;
    let samples = sample_population(&scm, n, &mut RngStream::new(1, 0)).unwrap();
    let g = grid(3.0, 0.5);
    let (s1, s0) = survival_curves(&samples, &g).unwrap();
    for (i, &t) in g.iter().enumerate() {
        let p = (-t).exp();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((s0.values()[i] - p).abs() <= 3.0 * se + 1e-12, "t = {t}");
        assert_eq!(s0.values()[i], s1.values()[i]);
    }
}

// With Exp(1) factors the marginal survival is a product of Laplace transforms:
// S1(t) = 1/(1 + t^3/3) * 1/(1 + t), S0(t) = 1/(1 + t^3/3).
#[test]
fn marginal_survival_matches_laplace_oracle() {
    let n = 20_000;
    let samples = sample_population(&gamma_scm(0.0, CopulaSpec::Independence), n, &mut RngStream::new(2, 0)).unwrap();
    let g = grid(3.0, 0.25);
    let (s1, s0) = survival_curves(&samples, &g).unwrap();
    for (i, &t) in g.iter().enumerate() {
        let base = 1.0 / (1.0 + t.powi(3) / 3.0);
        for (got, p) in [(s1.values()[i], base / (1.0 + t)), (s0.values()[i], base)] {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((got - p).abs() <= 3.0 * se + 1e-12, "t = {t}: {got} vs {p}");
        }
        assert!(s1.values()[i] <= s0.values()[i]);
    }
}

#[test]
fn survivor_mean_modifier_matches_closed_form() {
    let samples = sample_population(
        &gamma_scm(0.0, CopulaSpec::Independence),
        10_000,
        &mut RngStream::new(3, 0),
    )
    .unwrap();
    let g = grid(5.0, 0.5);
    let c = conditional_expectation_curve(&samples, Statistic::Modifier, Arm::Treated, &g, 30).unwrap();
    for (i, (s, m)) in c.curve.points().enumerate() {
        let expected = 1.0 / (s + 1.0);
        assert!(
            (m - expected).abs() <= 3.0 * c.standard_errors[i],
            "s = {s}: {m} vs {expected}"
        );
    }
}

#[test]
fn integrated_curve_matches_log_under_independence() {
    let scm = gamma_scm(0.0, CopulaSpec::Independence);
    let samples = sample_population_partitioned(&scm, 10_000, 4, 0, 4096).unwrap();
    let g = grid(5.0, 0.1);
    let b = integrated_ohd_curve(&samples, &scm, &g, 30).unwrap();
    assert_eq!(b.curve.values()[0], 0.0);
    // left-endpoint sum of 1/(1+s): the discretization the estimator uses
    let mut riemann = 0.0;
    for (j, (t, v)) in b.curve.points().enumerate() {
        if j > 0 {
            riemann += 0.1 / (1.0 + g[j - 1]);
        }
        assert!(
            (v - riemann).abs() <= 3.0 * b.standard_errors[j] + 1e-12,
            "t = {t}: {v} vs {riemann}"
        );
        assert!((riemann - (1.0 + t).ln()).abs() < 0.05 * t + 1e-12);
    }
}

// At step 0.01 the discretization error (about h/2 * t/(1+t)) is well below
// the sampling error, so the exact integral is the oracle.
#[test]
fn integrated_curve_converges_to_log_with_fine_step() {
    let scm = gamma_scm(0.0, CopulaSpec::Independence);
    let samples = sample_population_partitioned(&scm, 10_000, 4, 0, 4096).unwrap();
    let b = integrated_ohd_curve(&samples, &scm, &grid(5.0, 0.01), 30).unwrap();
    for (j, (t, v)) in b.curve.points().enumerate().step_by(10) {
        let exact = (1.0 + t).ln();
        assert!(
            (v - exact).abs() <= 3.0 * b.standard_errors[j] + 1e-12,
            "t = {t}: {v} vs {exact}"
        );
    }
}

// Comonotone Exp(1) factors make U0 = U1 = U, so both survivor means are
// Laplace ratios of one exponential: the integrand is
// (1 + s^2/d) / (1 + s + s^3/(3d)) - (s^2/d) / (1 + s^3/(3d)).
#[test]
fn comonotone_curve_matches_exact_integrand() {
    for (i, d) in [1.0, 20.0].into_iter().enumerate() {
        let scm = ScmSpec::new(
            BaselineSpec::new(0.0, 2.0, d).unwrap(),
            EffectSpec::constant(),
            ModifierDistribution::ShiftedGamma {
                k: 1.0,
                theta: 1.0,
                ell_shift: 0.0,
            },
            FrailtyDistribution::Gamma { k: 1.0, theta: 1.0 },
            CopulaSpec::Gaussian { rho: 1.0 },
        )
        .unwrap();
        let samples = sample_population_partitioned(&scm, 10_000, 12, (i as u64) << 32, 4096).unwrap();
        let g = grid(5.0, 0.1);
        let b = integrated_ohd_curve(&samples, &scm, &g, 30).unwrap();
        assert_eq!(b.curve.len(), g.len());
        let mut exact = 0.0;
        for (j, v) in b.curve.values().iter().enumerate() {
            if j > 0 {
                let s = g[j - 1];
                let h = s * s / d;
                exact += 0.1 * ((1.0 + h) / (1.0 + s + s * h / 3.0) - h / (1.0 + s * h / 3.0));
            }
            assert!(
                (v - exact).abs() <= 3.0 * b.standard_errors[j] + 1e-12,
                "d = {d}, t = {}: {v} vs {exact}",
                g[j]
            );
        }
    }
}

#[test]
fn null_modifier_gives_zero_curve() {
    let scm = ScmSpec::new(
        BaselineSpec::quadratic(0.1),
        EffectSpec::constant(),
        ModifierDistribution::Degenerate { c: 0.0 },
        FrailtyDistribution::Gamma { k: 1.0, theta: 1.0 },
        CopulaSpec::Independence,
    )
    .unwrap();
    let samples = sample_population(&scm, 5000, &mut RngStream::new(5, 0)).unwrap();
    assert!(samples.iter().all(|s| s.t0 == s.t1));
    let b = integrated_ohd_curve(&samples, &scm, &grid(3.0, 0.1), 30).unwrap();
    assert!(b.curve.values().iter().all(|&v| v == 0.0));
}

#[test]
fn frailty_means_agree_across_worlds_under_independence() {
    for (i, modifier) in [
        ModifierDistribution::ShiftedGamma {
            k: 1.0,
            theta: 1.0,
            ell_shift: 0.0,
        },
        ModifierDistribution::Bhn {
            p1: 0.5,
            mu1: -0.1,
            p2: 0.5,
            mu2: 0.4,
        },
    ]
    .into_iter()
    .enumerate()
    {
        let baseline = BaselineSpec::quadratic(0.2);
        let scm = ScmSpec::new(
            baseline,
            EffectSpec::constant(),
            modifier,
            FrailtyDistribution::Gamma { k: 1.0, theta: 1.0 },
            CopulaSpec::Independence,
        )
        .unwrap();
        let samples = sample_population(&scm, 10_000, &mut RngStream::new(6, i as u64)).unwrap();
        let g = grid(3.0, 0.5);
        let stat = Statistic::BaselineHazard(baseline);
        let c1 = conditional_expectation_curve(&samples, stat, Arm::Treated, &g, 30).unwrap();
        let c0 = conditional_expectation_curve(&samples, stat, Arm::Control, &g, 30).unwrap();
        let len = c1.curve.len().min(c0.curve.len());
        for (j, t) in g.iter().enumerate().take(len) {
            let pooled = c1.standard_errors[j].hypot(c0.standard_errors[j]);
            let diff = c1.curve.values()[j] - c0.curve.values()[j];
            assert!(diff.abs() <= 3.0 * pooled + 1e-12, "modifier {i}, t = {t}: {diff}");
        }
    }
}

#[test]
fn frailty_selection_decreases_survivor_mean() {
    let baseline = BaselineSpec::quadratic(0.0);
    let samples = sample_population(
        &gamma_scm(0.0, CopulaSpec::Independence),
        10_000,
        &mut RngStream::new(7, 0),
    )
    .unwrap();
    let g = grid(3.0, 0.25);
    for world in [Arm::Control, Arm::Treated] {
        let c =
            conditional_expectation_curve(&samples, Statistic::BaselineHazardAt(baseline, 1.0), world, &g, 30).unwrap();
        let v = c.curve.values();
        assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{world:?}");
        assert!(v[v.len() - 1] < v[0]);
    }
}

#[test]
fn partitioned_sampling_ignores_thread_count() {
    let scm = gamma_scm(0.0, CopulaSpec::Gaussian { rho: 0.5 });
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_population_partitioned(&scm, 3000, 42, 10, 257).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn homogeneous_trial_recovers_constant_effect() {
    let scm = ScmSpec::new(
        BaselineSpec::new(0.5, 0.0, 1.0).unwrap(),
        EffectSpec::constant(),
        ModifierDistribution::Degenerate { c: 0.15 },
        FrailtyDistribution::Degenerate { c: 0.0 },
        CopulaSpec::Independence,
    )
    .unwrap();
    let data = simulate_rct(
        &scm,
        4000,
        0.5,
        Some(Censoring::Administrative { time: 3.0 }),
        &mut RngStream::new(8, 0),
    )
    .unwrap();
    let fit = aalen::fit(&data).unwrap();
    let (b, lo, hi) = fit.interval_at(Coefficient::Treatment, 2.0).unwrap();
    assert!(lo <= 0.3 && 0.3 <= hi, "B(2) = {b} [{lo}, {hi}]");
}
