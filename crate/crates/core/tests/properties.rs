mod common;

use evtfair::discrimination::{compute_cd, cvar, group_metrics, quantile_higher};
use evtfair::evt::{
    cv_test, gev_cdf, return_level_of, select_threshold, ExceedanceModel, GevParams,
};
use evtfair::scoring::{train_logreg, ScoreModel, TrainConfig};
use evtfair::statcompare::cliffs_delta;
use evtfair::synthgen::{frechet_distance, kl_similarity};
use evtfair::tabular::{cmp_records, flip_protected, read_csv, split, write_csv, Dataset, Value};
use proptest::prelude::*;

fn dataset(x: Vec<(f64, f64, bool, bool)>) -> Dataset {
    let rows = x
        .into_iter()
        .map(|(a, b, white, y)| {
            vec![
                Value::Num(a),
                Value::Num(b),
                Value::Cat(if white { "White" } else { "Black" }.into()),
                Value::Num(y as u8 as f64),
            ]
        })
        .collect();
    Dataset::new(common::task_schema(), rows).unwrap()
}

fn rows_strategy(min: usize, max: usize) -> impl Strategy<Value = Vec<(f64, f64, bool, bool)>> {
    prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, any::<bool>(), any::<bool>()), min..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_partitions_rows(rows in rows_strategy(3, 60), seed in any::<u64>()) {
        let ds = dataset(rows);
        let (a, b, c) = split(&ds, (0.6, 0.2, 0.2), seed).unwrap();
        prop_assert_eq!(a.len() + b.len() + c.len(), ds.len());
        let mut all: Vec<_> = a.rows().iter().chain(b.rows()).chain(c.rows()).cloned().collect();
        let mut orig = ds.rows().to_vec();
        all.sort_by(cmp_records);
        orig.sort_by(cmp_records);
        prop_assert_eq!(all, orig);
    }

    #[test]
    fn flip_is_an_involution(rows in rows_strategy(1, 20)) {
        let ds = dataset(rows);
        let g = common::task_group();
        for r in ds.rows() {
            let f = flip_protected(r, &g).unwrap();
            prop_assert_ne!(&f[2], &r[2]);
            prop_assert_eq!(&f[..2], &r[..2]);
            prop_assert_eq!(&flip_protected(&f, &g).unwrap(), r);
        }
    }

    #[test]
    fn csv_round_trip(rows in rows_strategy(1, 30)) {
        let ds = dataset(rows);
        let mut buf = Vec::new();
        write_csv(&mut buf, &ds).unwrap();
        let back = read_csv(buf.as_slice(), ds.schema()).unwrap();
        prop_assert_eq!(back.rows(), ds.rows());
    }

    #[test]
    fn logreg_scores_are_probabilities(rows in rows_strategy(10, 50), probe in rows_strategy(1, 20)) {
        let model = train_logreg(&dataset(rows), &TrainConfig { epochs: 20, ..Default::default() }).unwrap();
        for p in model.score(dataset(probe).rows()).unwrap() {
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn cd_flips_sign_under_flip(rows in rows_strategy(10, 40)) {
        let ds = dataset(rows);
        let g = common::task_group();
        let model = common::InjectedTail::for_dataset(&ds);
        let cds = compute_cd(&model, ds.rows(), &g).unwrap();
        let flipped: Vec<_> = ds.rows().iter().map(|r| flip_protected(r, &g).unwrap()).collect();
        let back = compute_cd(&model, &flipped, &g).unwrap();
        for (a, b) in cds.iter().zip(&back) {
            prop_assert!((a.cd + b.cd).abs() < 1e-15);
        }
    }

    #[test]
    fn cvar_dominates_quantile(v in prop::collection::vec(-1.0..1.0f64, 1..200), alpha in 0.5..0.99f64) {
        let q = quantile_higher(&v, alpha).unwrap();
        let c = cvar(&v, alpha).unwrap();
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(c >= q - 1e-12 && c <= max + 1e-12);
    }

    #[test]
    fn group_metrics_ignore_row_order(rows in rows_strategy(20, 60), seed in any::<u64>()) {
        let ds = dataset(rows);
        let g = common::task_group();
        let model = common::Blind;
        let (a, b, c) = split(&ds, (0.4, 0.3, 0.3), seed).unwrap();
        let shuffled = a.concat(&b).concat(&c);
        match (group_metrics(&model, &ds, &g), group_metrics(&model, &shuffled, &g)) {
            (Ok(x), Ok(y)) => {
                prop_assert!((x.aod - y.aod).abs() < 1e-12);
                prop_assert!((x.eod - y.eod).abs() < 1e-12);
                prop_assert!((x.spd - y.spd).abs() < 1e-12);
            }
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }

    #[test]
    fn return_level_grows_with_period(
        u in -1.0..1.0f64,
        zeta in 0.001..1.0f64,
        sigma in 0.01..2.0f64,
        xi in -0.9..0.9f64,
        m in 1.0..1e5f64,
        factor in 1.01..10.0f64,
    ) {
        let model = ExceedanceModel { u, zeta_u: zeta, sigma_hat: sigma, xi };
        let m = m / zeta;
        let a = return_level_of(&model, m).unwrap();
        let b = return_level_of(&model, m * factor).unwrap();
        prop_assert!(b > a);
        if xi < -1e-6 {
            prop_assert!(b <= u + sigma / -xi + 1e-9);
        }
    }

    #[test]
    fn gev_cdf_is_monotone(
        mu in -1.0..1.0f64,
        sigma in 0.01..3.0f64,
        xi in -0.9..0.9f64,
        z in -10.0..10.0f64,
        dz in 0.0..5.0f64,
    ) {
        let p = GevParams { mu, sigma, xi };
        let (a, b) = (gev_cdf(p, z), gev_cdf(p, z + dz));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a);
    }

    #[test]
    fn cv_test_is_scale_invariant(v in prop::collection::vec(0.01..10.0f64, 50..120), c in 0.01..100.0f64) {
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        let (a, b) = (cv_test(&v, 10, 50).unwrap(), cv_test(&scaled, 10, 50).unwrap());
        // a CV sitting on the bound could flip by rounding
        let near = a.per_k.iter().any(|s| (s.cv - s.bound).abs() < 1e-9);
        if !near {
            prop_assert_eq!(a.outcome, b.outcome);
        }
    }

    #[test]
    fn threshold_has_k_max_exceedances(v in prop::collection::vec(-10.0..10.0f64, 20..200), k in 2usize..19) {
        let t = select_threshold(&v, k).unwrap();
        prop_assert!(t.k() >= k);
        prop_assert!(t.exceedances.iter().all(|&x| x > t.u));
        prop_assert_eq!(v.iter().filter(|&&x| x > t.u).count(), t.k());
        prop_assert!(t.exceedances.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn cliffs_delta_is_antisymmetric(
        a in prop::collection::vec(-3i32..3, 1..30),
        b in prop::collection::vec(-3i32..3, 1..30),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let d = cliffs_delta(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&d));
        prop_assert!((d + cliffs_delta(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn kl_ignores_row_order(rows in rows_strategy(10, 40), other in rows_strategy(10, 40), seed in any::<u64>()) {
        let (ds, synth) = (dataset(rows), dataset(other));
        let (a, b, c) = split(&ds, (0.4, 0.3, 0.3), seed).unwrap();
        let shuffled = c.concat(&a).concat(&b);
        let x = kl_similarity(&ds, &synth).unwrap();
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((x - kl_similarity(&shuffled, &synth).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn frechet_distance_is_symmetric(rows in rows_strategy(5, 40), other in rows_strategy(5, 40)) {
        let (a, b) = (dataset(rows), dataset(other));
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab));
        prop_assert!(frechet_distance(&a, &a).unwrap() < 1e-6);
    }
}
