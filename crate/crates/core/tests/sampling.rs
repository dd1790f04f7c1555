mod common;

use common::{kendall_tau, ks_statistic};
use hazbias::model::{FrailtyDistribution, ModifierDistribution};
use hazbias::stochastics::{kendall_to_pearson, sample_joint, CopulaSpec, RngStream};

const N: usize = 100_000;

fn gamma11() -> FrailtyDistribution {
    FrailtyDistribution::Gamma { k: 1.0, theta: 1.0 }
}

fn shifted(ell: f64) -> ModifierDistribution {
    ModifierDistribution::ShiftedGamma {
        k: 1.0,
        theta: 1.0,
        ell_shift: ell,
    }
}

#[test]
fn independence_has_zero_tau() {
    let mut rng = RngStream::new(101, 0);
    let pairs = sample_joint(CopulaSpec::Independence, &gamma11(), &shifted(0.5), N, &mut rng).unwrap();
    let tau = kendall_tau(&pairs);
    assert!(tau.abs() < 0.01, "tau = {tau}");
}

#[test]
fn kendall_tau_is_recovered_on_grid() {
    for (i, &target) in [-0.5, 0.5].iter().enumerate() {
        let copula = CopulaSpec::from_kendall(target).unwrap();
        let mut rng = RngStream::new(202, i as u64);
        let pairs = sample_joint(copula, &gamma11(), &shifted(0.0), N, &mut rng).unwrap();
        let tau = kendall_tau(&pairs);
        assert!((tau - target).abs() < 0.01, "target {target}, tau = {tau}");
    }
}

#[test]
fn marginals_pass_ks() {
    let crit = 1.63 / (N as f64).sqrt();
    for (i, rho) in [0.0, 0.7, -1.0].into_iter().enumerate() {
        let mut rng = RngStream::new(303, i as u64);
        let frailty = FrailtyDistribution::Gamma { k: 2.0, theta: 0.5 };
        let pairs = sample_joint(CopulaSpec::Gaussian { rho }, &frailty, &shifted(0.5), N, &mut rng).unwrap();
        let u0: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let u1: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        // Erlang(2, rate 2)
        let d0 = ks_statistic(&u0, |x| {
            if x <= 0.0 {
                0.0
            } else {
                1.0 - (-2.0 * x).exp() * (1.0 + 2.0 * x)
            }
        });
        let d1 = ks_statistic(&u1, |x| if x <= -0.5 { 0.0 } else { 1.0 - (-(x + 0.5)).exp() });
        assert!(d0 < crit, "rho {rho}: frailty KS {d0}");
        assert!(d1 < crit, "rho {rho}: modifier KS {d1}");
    }
}

#[test]
fn tau_depends_on_rho_only() {
    let copula = CopulaSpec::Gaussian { rho: 0.7 };
    let mut rng = RngStream::new(404, 0);
    let a = sample_joint(copula, &gamma11(), &shifted(0.0), N, &mut rng).unwrap();
    let mut rng = RngStream::new(404, 1);
    let frailty = FrailtyDistribution::Gamma { k: 0.5, theta: 3.0 };
    let b = sample_joint(
        copula,
        &frailty,
        &ModifierDistribution::ShiftedGamma {
            k: 4.0,
            theta: 0.2,
            ell_shift: 1.0,
        },
        N,
        &mut rng,
    )
    .unwrap();
    let (ta, tb) = (kendall_tau(&a), kendall_tau(&b));
    assert!((ta - tb).abs() < 0.02, "{ta} vs {tb}");
    let expected = 2.0 / std::f64::consts::PI * 0.7f64.asin();
    assert!((ta - expected).abs() < 0.01);
}

#[test]
fn bhn_masses_through_copula() {
    let (p1, p2) = (0.3, 0.2);
    let modifier = ModifierDistribution::Bhn {
        p1,
        mu1: -0.25,
        p2,
        mu2: 1.0,
    };
    for (i, rho) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        let mut rng = RngStream::new(505, i as u64);
        let pairs = sample_joint(CopulaSpec::Gaussian { rho }, &gamma11(), &modifier, N, &mut rng).unwrap();
        let count = |v: f64| pairs.iter().filter(|p| p.1 == v).count() as f64 / N as f64;
        for (value, p) in [(-0.25, p1), (1.0, p2), (0.0, 1.0 - p1 - p2)] {
            let se = (p * (1.0 - p) / N as f64).sqrt();
            let got = count(value);
            assert!((got - p).abs() < 3.0 * se, "rho {rho}, atom {value}: {got} vs {p}");
        }
    }
}

#[test]
fn kendall_conversion_on_paper_grid() {
    let expected = [
        -1.0,
        -(0.25 * std::f64::consts::PI).sin(),
        0.0,
        (0.25 * std::f64::consts::PI).sin(),
        1.0,
    ];
    for (tau, rho) in [-1.0, -0.5, 0.0, 0.5, 1.0].into_iter().zip(expected) {
        assert!((kendall_to_pearson(tau).unwrap() - rho).abs() < 1e-15);
    }
}

#[test]
fn seeded_streams_are_reproducible() {
    let run = || {
        let mut rng = RngStream::new(9, 4);
        sample_joint(
            CopulaSpec::Gaussian { rho: 0.3 },
            &gamma11(),
            &shifted(0.0),
            1000,
            &mut rng,
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert!(a
        .iter()
        .zip(&b)
        .all(|(x, y)| x.0.to_bits() == y.0.to_bits() && x.1.to_bits() == y.1.to_bits()));
}
