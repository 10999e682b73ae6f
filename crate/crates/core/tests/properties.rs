use proptest::prelude::*;
use wfduality_core::bcre::{self, BcreOptions};
use wfduality_core::duality::{eval_h, eval_h_mu};
use wfduality_core::fvwrs::simulate_path;
use wfduality_core::model::{TablePmf, TableRow};
use wfduality_core::thresholds::{alpha_star, beta_star, shape_factor};
use wfduality_core::wf_graph::{simulate_ancestry, simulate_frequency, EnvSequence, FiniteModelParams, FiniteModelSpec};
use wfduality_core::{FiniteMeasure, LimitParams, SelectionKernel, Streams};

fn table() -> SelectionKernel {
    SelectionKernel::Table(
        TablePmf::new(vec![
            TableRow { y: 0.5, pmf: vec![0.0, 0.5, 0.3, 0.2], infinite: 0.0 },
            TableRow { y: 1.0, pmf: vec![0.0, 0.2, 0.2, 0.1], infinite: 0.5 },
        ])
        .unwrap(),
    )
}

fn kernel() -> impl Strategy<Value = SelectionKernel> {
    prop_oneof![Just(SelectionKernel::Geometric), Just(SelectionKernel::Binary), Just(table())]
}

fn limit(lambda_s_mass: f64, y: f64, w: f64, c: f64, z: f64, sigma: f64) -> LimitParams {
    LimitParams::new(
        SelectionKernel::Geometric,
        FiniteMeasure::dirac(y, lambda_s_mass).unwrap(),
        w,
        FiniteMeasure::dirac(z, 1.0).unwrap(),
        c,
        sigma,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pgf_is_increasing_and_convex(k in kernel(), y in 0.0..0.99f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(k.pgf(y, lo) <= k.pgf(y, hi) + 1e-12);
        let mid = 0.5 * (lo + hi);
        prop_assert!(k.pgf(y, mid) <= 0.5 * (k.pgf(y, lo) + k.pgf(y, hi)) + 1e-12);
        prop_assert_eq!(k.pgf(y, 0.0), 0.0);
        prop_assert!((k.pgf(y, 1.0) - 1.0).abs() < 1e-12);
        prop_assert!(k.pgf(y, hi) <= hi + 1e-12);
    }

    #[test]
    fn pgf_at_zero_environment_is_identity(k in kernel(), x in 0.0..1.0f64) {
        prop_assert!((k.pgf(0.0, x) - x).abs() < 1e-12);
    }

    #[test]
    fn h_decreases_in_n(k in kernel(), y in 0.0..0.99f64, x in 0.0..1.0f64, n in 0u64..20) {
        prop_assert!(eval_h(&k, x, n + 1, y) <= eval_h(&k, x, n, y) + 1e-15);
    }

    #[test]
    fn h_mu_of_dirac_is_h(k in kernel(), y in 0.0..0.99f64, x in 0.0..1.0f64, n in 0u64..20) {
        let dirac = FiniteMeasure::dirac(y, 1.0).unwrap();
        prop_assert_eq!(eval_h_mu(&k, &dirac, x, n).unwrap(), eval_h(&k, x, n, y));
    }

    #[test]
    fn shape_factor_in_unit_interval(m in 0.0..1e6f64) {
        let g = shape_factor(m);
        prop_assert!(g > 0.0 && g <= 1.0);
    }

    #[test]
    fn geometric_alpha_star_below_binary(y in 0.01..0.99f64, w in 0.1..5.0f64) {
        let m = FiniteMeasure::dirac(y, w).unwrap();
        let g = alpha_star(&SelectionKernel::Geometric, &m).unwrap();
        let b = alpha_star(&SelectionKernel::Binary, &m).unwrap();
        prop_assert!(g <= b + 1e-12);
        prop_assert!(b <= 1.0);
    }

    #[test]
    fn beta_star_exceeds_first_negative_moment(y in 0.01..0.99f64, w in 0.1..5.0f64) {
        let b = beta_star(&FiniteMeasure::dirac(y, w).unwrap()).unwrap();
        prop_assert!(b >= w / y);
    }

    #[test]
    fn finite_chains_stay_in_bounds(
        seed in any::<u64>(),
        n in 2usize..40,
        y in 0.0..0.9f64,
        c in 0.0..1.0f64,
        v in 0.05..1.0f64,
        frac in 0.0..1.0f64,
    ) {
        let params = FiniteModelParams::new(FiniteModelSpec {
            population_size: n,
            kernel: SelectionKernel::Geometric,
            env_law: FiniteMeasure::atomic([(0.0, 0.5), (y, 0.5)]).unwrap(),
            merger_probability: c,
            merger_law: FiniteMeasure::dirac(v, 1.0).unwrap(),
            weak_selection: 0.1,
        })
        .unwrap();
        let mut rng = Streams::new(seed).rng(0);
        let env = params.draw_environment(10, &mut rng);
        let zeros = (frac * n as f64) as usize;
        let path = simulate_frequency(&params, zeros, &env, &mut rng).unwrap();
        prop_assert!(path.counts.iter().all(|&k| k <= n));
        for w in path.counts.windows(2) {
            if w[0] == 0 { prop_assert_eq!(w[1], 0); }
            if w[0] == n { prop_assert_eq!(w[1], n); }
        }
        let blocks = 1 + (frac * (n - 1) as f64) as usize;
        let back = simulate_ancestry(&params, blocks, &env, &mut rng).unwrap();
        prop_assert!(back.counts.iter().all(|&k| (1..=n).contains(&k)));
    }

    #[test]
    fn neutral_ancestry_never_grows(seed in any::<u64>(), n in 2usize..40, blocks in 1usize..40) {
        let params = FiniteModelParams::new(FiniteModelSpec {
            population_size: n,
            kernel: SelectionKernel::Geometric,
            env_law: FiniteMeasure::dirac(0.0, 1.0).unwrap(),
            merger_probability: 0.0,
            merger_law: FiniteMeasure::zero(),
            weak_selection: 0.0,
        })
        .unwrap();
        let path = simulate_ancestry(&params, blocks.min(n), &EnvSequence::constant(0.0, 8).unwrap(), &mut Streams::new(seed).rng(1)).unwrap();
        prop_assert!(path.counts.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn limit_paths_stay_in_unit_interval(
        seed in any::<u64>(),
        x in 0.0..1.0f64,
        mass in 0.0..3.0f64,
        w in 0.0..1.0f64,
        sigma in 0.0..1.0f64,
    ) {
        let p = limit(mass, 0.5, w, 1.0, 0.5, sigma);
        let path = simulate_path(&p, x, 2.0, 1e-2, true, &mut Streams::new(seed).rng(0)).unwrap();
        prop_assert!(path.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let mut absorbed = None;
        for &v in &path.values {
            if let Some(a) = absorbed { prop_assert_eq!(v, a); }
            if v == 0.0 || v == 1.0 { absorbed = Some(v); }
        }
    }

    #[test]
    fn boundaries_are_absorbing(seed in any::<u64>(), sigma in 0.0..1.0f64) {
        let p = limit(1.0, 0.5, 0.1, 1.0, 0.5, sigma);
        for x0 in [0.0, 1.0] {
            let path = simulate_path(&p, x0, 1.0, 1e-2, false, &mut Streams::new(seed).rng(0)).unwrap();
            prop_assert!(path.values.iter().all(|&v| v == x0));
        }
    }

    #[test]
    fn dual_chain_stays_positive(seed in any::<u64>(), n0 in 1u64..50, mass in 0.1..3.0f64, sigma in 0.0..1.0f64) {
        let p = limit(mass, 0.5, 0.1, 1.0, 0.5, sigma);
        let path = bcre::simulate(&p, n0, 2.0, BcreOptions::default(), &mut Streams::new(seed).rng(0)).unwrap();
        prop_assert!(path.events.iter().all(|e| e.to >= 1 && e.to != e.from));
        prop_assert!(path.events.windows(2).all(|w| w[0].time <= w[1].time && w[0].to == w[1].from));
        if let Some(first) = path.events.first() {
            prop_assert_eq!(first.from, n0);
        }
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), tag in any::<u64>()) {
        use rand::Rng;
        let a: Vec<u64> = (0..4).map(|i| Streams::new(seed).fork(tag).rng(i).random()).collect();
        let b: Vec<u64> = (0..4).map(|i| Streams::new(seed).fork(tag).rng(i).random()).collect();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.windows(2).all(|w| w[0] != w[1]));
    }
}
