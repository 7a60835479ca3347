use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsfilter_core::lmi::{DelayRateMode, SlackStructure};
use tsfilter_core::sdp::{self, SolveStatus, SolverOptions};
use tsfilter_core::simulation::make_delay_sine;
use tsfilter_core::synthesis::{synthesize, BoundsDomain, SynthesisSettings, Theorem};
use tsfilter_core::verification::{gauss_legendre, PolyTrajectory};
use tsfilter_core::{augment, example1, FuzzyFilter};

fn matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-2.0..2.0))
}

fn random_filter(rng: &mut ChaCha8Rng) -> FuzzyFilter {
    let m = example1();
    let mut f = FuzzyFilter::zeros(&m);
    for j in 0..m.p() {
        f.a_hat[j] = matrix(rng, m.n, m.n);
        f.b_hat[j] = matrix(rng, m.n, m.n_y);
        f.c_hat[j] = matrix(rng, m.n_z, m.n);
    }
    f
}

fn plain_settings(theorem: Theorem, slack: SlackStructure) -> SynthesisSettings {
    let m = example1();
    let mut s = SynthesisSettings::new(&m, 0.5, 0.2, 2.0, theorem).unwrap();
    s.delay_rate_mode = DelayRateMode::Plain;
    s.slack_structure = slack;
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn memberships_are_normalized(x1 in -200.0f64..200.0, x2 in -200.0f64..200.0) {
        let m = example1();
        let v = m.normalized_memberships(&DVector::from_vec(vec![x1, x2])).unwrap();
        prop_assert!((v.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(v.min() >= 0.0);
    }

    #[test]
    fn product_bounds_contain_the_products(x1 in -50.0f64..50.0) {
        let m = example1();
        let b = BoundsDomain::default().bounds(&m).unwrap();
        let v = m.memberships_at_premise(x1).unwrap();
        for i in 0..m.p() {
            for j in 0..m.p() {
                let prod = v[i] * v[j];
                prop_assert!(b.lower[(i, j)] - 1e-9 <= prod && prod <= b.upper[(i, j)] + 1e-9);
            }
        }
    }

    #[test]
    fn sine_delays_are_admissible(h in 1e-3f64..10.0, rho in 0.0f64..3.0, frac in 1e-3f64..0.999) {
        let d = make_delay_sine(h, rho, frac * h).unwrap();
        prop_assert!(d.admissible(h, rho));
        let (lo, hi, rate) = d.analytic_bounds();
        prop_assert!(lo >= 0.0 && hi <= h && rate <= rho + 1e-15);
        for k in 0..50 {
            let t = k as f64 * 0.37 * (h + 1.0);
            let tau = d.eval(t);
            prop_assert!((0.0..=h).contains(&tau));
            prop_assert!(d.rate(t).abs() <= rho * (1.0 + 1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn augmentation_is_affine_in_the_filter(seed in any::<u64>()) {
        let m = example1();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f1, f2) = (random_filter(&mut rng), random_filter(&mut rng));
        let mut sum = f1.clone();
        for j in 0..m.p() {
            sum.a_hat[j] += &f2.a_hat[j];
            sum.b_hat[j] += &f2.b_hat[j];
            sum.c_hat[j] += &f2.c_hat[j];
        }
        let (a1, a2, a0, s) = (
            augment(&m, &f1).unwrap(),
            augment(&m, &f2).unwrap(),
            augment(&m, &FuzzyFilter::zeros(&m)).unwrap(),
            augment(&m, &sum).unwrap(),
        );
        for k in 0..s.pairs.len() {
            let fields = |a: &tsfilter_core::AugmentedSystem| {
                let p = &a.pairs[k];
                [p.a_bar.clone(), p.a_bar_tau.clone(), p.b_bar.clone(), p.e_bar.clone(), p.e_bar_tau.clone()]
            };
            for (((x, y), z), w) in fields(&s).iter().zip(fields(&a1)).zip(fields(&a2)).zip(fields(&a0)) {
                prop_assert!((x - (y + z - w)).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn theorem_blocks_are_symmetric_and_affine(seed in any::<u64>(), membership in any::<bool>()) {
        let m = example1();
        let theorem = if membership { Theorem::MembershipDependent } else { Theorem::Basic };
        let s = plain_settings(theorem, SlackStructure::BlockDiagonal);
        let problem = sdp::canonicalize(&s.build(&m, 0.4).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..problem.num_vars).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..problem.num_vars).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        for b in &problem.blocks {
            let (fx, fy, fm) = (b.eval(&x), b.eval(&y), b.eval(&mid));
            prop_assert!((&fm - (&fx + &fy) * 0.5).amax() < 1e-12);
            prop_assert!((&fx - fx.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn sdpa_round_trip_preserves_evaluation(seed in any::<u64>(), membership in any::<bool>()) {
        let m = example1();
        let theorem = if membership { Theorem::MembershipDependent } else { Theorem::Basic };
        let s = plain_settings(theorem, SlackStructure::BlockDiagonal);
        let problem = sdp::canonicalize(&s.build(&m, 0.3).unwrap()).unwrap();
        let back = sdp::import_sdpa(&sdp::export_sdpa(&problem)).unwrap();
        prop_assert_eq!(back.num_vars, problem.num_vars);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..problem.num_vars).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for (a, b) in problem.blocks.iter().zip(&back.blocks) {
            prop_assert!((a.eval(&x) - b.eval(&x)).amax() < 1e-12);
        }
    }

    #[test]
    fn polynomial_moments_match_quadrature(seed in any::<u64>(), degree in 0usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = rng.gen_range(-3.0..3.0);
        let beta = alpha + rng.gen_range(0.01..3.0);
        let traj = PolyTrajectory::random(&mut rng, 2, degree, alpha, beta);
        let (mid, half, tau) = (0.5 * (alpha + beta), 0.5 * (beta - alpha), beta - alpha);
        let mut avg = DVector::zeros(2);
        let mut double = DVector::zeros(2);
        for (x, w) in gauss_legendre(12) {
            let s = mid + half * x;
            avg += traj.eval(s) * (w * half / tau);
            double += traj.eval(s) * (w * half * (beta - s) * 2.0 / (tau * tau));
        }
        let xi = traj.xi();
        let scale = 1.0 + xi.amax();
        prop_assert!((xi.rows(4, 2) - avg).amax() <= 1e-12 * scale);
        prop_assert!((xi.rows(6, 2) - double).amax() <= 1e-12 * scale);
    }
}

#[test]
fn feasibility_is_monotone_in_gamma() {
    let m = example1();
    let s = plain_settings(Theorem::Basic, SlackStructure::Full);
    let opts = SolverOptions::default();
    let answers: Vec<bool> = [0.1, 0.2, 0.25, 0.5, 2.0]
        .iter()
        .map(|&g| synthesize(&m, &s, g, &opts).unwrap().report().status == SolveStatus::Feasible)
        .collect();
    assert!(answers.windows(2).all(|w| !w[0] || w[1]), "{answers:?}");
    assert!(answers[4] && !answers[0]);
}

#[test]
fn solver_answers_are_sound_deterministic_and_relax_with_eps() {
    let m = example1();
    let s = plain_settings(Theorem::Basic, SlackStructure::Full);
    let problem = sdp::canonicalize(&s.build(&m, 0.3).unwrap()).unwrap();
    let strict = SolverOptions::default();
    let a = sdp::solve_feasibility(&problem, &strict);
    let b = sdp::solve_feasibility(&problem, &strict);
    assert_eq!(a.status, SolveStatus::Feasible);
    let (xa, xb) = (a.x.as_ref().unwrap(), b.x.as_ref().unwrap());
    assert!(xa.iter().zip(xb).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert_eq!(a.iterations, b.iterations);

    // recomputed from a fresh assembly, not taken from the report
    let fresh = sdp::canonicalize(&s.build(&m, 0.3).unwrap()).unwrap();
    assert!(sdp::eigen_margin(&fresh, xa) < -strict.eps / 2.0);

    let loose = SolverOptions {
        eps: 1e-9,
        ..SolverOptions::default()
    };
    assert_eq!(sdp::solve_feasibility(&problem, &loose).status, SolveStatus::Feasible);
}

#[test]
fn recovered_filters_satisfy_the_change_of_variables() {
    let m = example1();
    for (theorem, gamma) in [(Theorem::Basic, 0.3), (Theorem::MembershipDependent, 0.3)] {
        let s = plain_settings(theorem, SlackStructure::BlockDiagonal);
        let r = synthesize(&m, &s, gamma, &SolverOptions::default())
            .unwrap()
            .feasible()
            .expect("feasible");
        assert!(r.recovery_residual() < 1e-8, "{}", r.recovery_residual());
    }
}
