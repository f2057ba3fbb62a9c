use proptest::prelude::*;

use ifmr::baselines::{iflr_vectors, lll_reduce, mmse_rate, zf_rate};
use ifmr::channel::{ChannelSet, ReceiverContext, Topology};
use ifmr::coeff_opt::{build_u, gauss_reduce, step1_factors, step3_dcm, GramU, SearchConfig};
use ifmr::ifmr::run_receiver;
use ifmr::linalg::{eig_sym, integer_rank, Cholesky, Mat};
use ifmr::oracle::{brute_factor_pair, brute_stage, OracleBound};
use ifmr::rates::{dcm_rate, f_l, rate_from_form, stacked_form, Factors};
use ifmr::sim::{self, crossing_snr, outage, throughput, Antennas, Scheme, SimConfig};

fn ctx(seed: u64, k: usize, n: usize, snr_db: f64) -> ReceiverContext {
    let cs = ChannelSet::generate(&Topology::symmetric(k, n, n), seed).unwrap();
    ReceiverContext::new(&cs, (seed % k as u64) as usize, 10f64.powf(snr_db / 10.0)).unwrap()
}

fn nonzero(len: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-3i64..=3, len).prop_filter("nonzero", |v| v.iter().any(|&x| x != 0))
}

fn snr_db() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.0, 10.0, 20.0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_is_psd(x in prop::collection::vec(-10.0f64..10.0, 1..7)) {
        let xx: f64 = x.iter().map(|v| v * v).sum();
        prop_assume!(xx > 1e-6);
        let n = x.len();
        let p = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - x[i] * x[j] / xx);
        prop_assert!(eig_sym(&p).unwrap().min() >= -1e-10);
    }

    #[test]
    fn gram_is_positive_definite(seed in any::<u64>(), n in 1usize..=2, snr in snr_db(),
                                 a in nonzero(2), c in nonzero(4)) {
        let ctx = ctx(seed, 3, n, snr);
        prop_assume!(c[..2 * n].iter().any(|&x| x != 0) && a[..n].iter().any(|&x| x != 0));
        let u = build_u(&ctx, &a[..n], &c[..2 * n]).unwrap();
        prop_assert!(u.min_eigenvalue() > 0.0);
    }

    #[test]
    fn gram_reproduces_forms(seed in any::<u64>(), snr in snr_db(), d in -4i64..=4, e in -4i64..=4,
                                      a in nonzero(2), c in nonzero(4)) {
        let ctx = ctx(seed, 3, 2, snr);
        let u = build_u(&ctx, &a, &c).unwrap();
        let want = stacked_form(&ctx, d, e, &a, &c);
        prop_assert!((u.form(d, e) - want).abs() <= 1e-9 * want.max(1.0));
        prop_assert!((f_l(&ctx, d, e, &a, &c) - want).abs() <= 1e-9 * want.max(1.0));
    }

    #[test]
    fn gauss_reduction_is_exact(g in prop::array::uniform4(-2.0f64..2.0)) {
        let m = Mat::from_rows(&[[g[0], g[1]], [g[2], g[3]]]);
        let u = GramU::new(m.tr_matmul(&m).add_diag(0.2)).unwrap();
        let (f, obj) = step1_factors(&u);
        prop_assume!((obj / u.min_eigenvalue()).sqrt() <= 8.0);
        let basis = gauss_reduce(&u);
        prop_assert_eq!((basis[0].0 * basis[1].1 - basis[0].1 * basis[1].0).abs(), 1);
        prop_assert_eq!(f.det().abs(), 1);
        let (_, brute) = brute_factor_pair(&u, 8);
        prop_assert!((obj - brute).abs() <= 1e-12 * brute.max(1.0));
    }

    #[test]
    fn rates_are_sign_symmetric(seed in any::<u64>(), snr in snr_db(), a in nonzero(2), c in nonzero(4)) {
        let ctx = ctx(seed, 3, 2, snr);
        let f = Factors::new(1, 1, 2, -1);
        let r = dcm_rate(&ctx, f, &a, &c).unwrap();
        let neg = |v: &[i64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        prop_assert!(r >= 0.0);
        prop_assert!((dcm_rate(&ctx, f, &neg(&a), &neg(&c)).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn integer_rank_is_unimodular_invariant(rows in prop::collection::vec(prop::collection::vec(-5i64..=5, 4), 1..5),
                                            i in 0usize..4, j in 0usize..4, q in -3i64..=3) {
        let r = integer_rank(&rows);
        prop_assert!(r <= rows.len().min(4));
        let (i, j) = (i % rows.len(), j % rows.len());
        prop_assume!(i != j);
        let mut t = rows.clone();
        for col in 0..4 {
            t[i][col] += q * rows[j][col];
        }
        prop_assert_eq!(integer_rank(&t), r);
    }

    #[test]
    fn outage_and_throughput_ranges(rates in prop::collection::vec(0.0f64..10.0, 1..50), rt in 0.0f64..12.0) {
        let p = outage(&rates, rt);
        prop_assert!((0.0..=1.0).contains(&p));
        let eta = throughput(&rates, rt);
        prop_assert!(eta >= 0.0 && eta <= rt);
        prop_assert_eq!(outage(&rates, 0.0), 0.0);
    }

    #[test]
    fn crossing_stays_in_grid(v in prop::collection::vec(0.0f64..3.0, 2..10), level in 0.0f64..3.0) {
        let mut v = v;
        v.sort_by(f64::total_cmp);
        let grid: Vec<f64> = (0..v.len()).map(|i| i as f64).collect();
        match crossing_snr(&grid, &v, level) {
            Some(s) => prop_assert!(s >= 0.0 && s <= grid[grid.len() - 1]),
            None => prop_assert!(v.iter().all(|&x| x < level)),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn algorithm_traces_are_monotone(seed in any::<u64>(), snr in 0.0f64..30.0, n in 1usize..=3) {
        let ctx = ctx(seed, 3, n, snr);
        let res = run_receiver(&ctx, &SearchConfig::default()).unwrap();
        prop_assert_eq!(integer_rank(&res.dcm_vectors()), n);
        for st in &res.stages {
            for w in st.epsilon_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
            prop_assert_eq!(st.rate, dcm_rate(&ctx, st.factors, &st.g, &st.c).unwrap());
        }
    }

    #[test]
    fn step3_respects_earlier_stages(seed in any::<u64>(), snr in snr_db(), g in nonzero(2), c in nonzero(4)) {
        let ctx = ctx(seed, 3, 2, snr);
        let prev = vec![g];
        if let Ok((a, obj)) = step3_dcm(&ctx, Factors::new(1, 1, 1, -1), &c, &prev, &SearchConfig::default()) {
            let mut rows = prev.clone();
            rows.push(a.clone());
            prop_assert_eq!(integer_rank(&rows), 2);
            prop_assert!((obj - ifmr::rates::max_form(&ctx, Factors::new(1, 1, 1, -1), &a, &c)).abs() < 1e-12);
        }
    }

    /// With one stream the oracle over a box holding the algorithm's
    /// solution can only do better.
    #[test]
    fn oracle_dominates_single_stage(seed in any::<u64>(), snr in 0.0f64..25.0) {
        let ctx = ctx(seed, 3, 1, snr);
        let res = run_receiver(&ctx, &SearchConfig::default()).unwrap();
        let st = &res.stages[0];
        let big = |v: &[i64]| v.iter().map(|x| x.abs()).max().unwrap_or(0);
        let f = st.factors;
        let fb = big(&[f.d1, f.e1, f.d2, f.e2]).max(1);
        let b = OracleBound::new(fb, big(&st.g).max(1), big(&st.c).max(1)).unwrap();
        let orc = brute_stage(&ctx, &[], b).unwrap();
        prop_assert!(orc.rate >= st.rate - 1e-12, "oracle {} < algorithm {}", orc.rate, st.rate);
    }

    #[test]
    fn lll_transform_reproduces_columns(seed in any::<u64>(), snr in snr_db()) {
        let ctx = ctx(seed, 3, 1, snr);
        let l = Cholesky::new(ctx.rate_matrix()).unwrap().factor().transpose();
        let (cols, t) = lll_reduce(&l, 0.75);
        prop_assert_eq!(integer_rank(&t), 3);
        for (col, tj) in cols.iter().zip(&t) {
            for (x, y) in col.iter().zip(l.matvec_int(tj)) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
        prop_assert_eq!(integer_rank(&iflr_vectors(&ctx)), 3);
        prop_assert!(zf_rate(&ctx) <= mmse_rate(&ctx) + 1e-12);
    }
}

#[test]
fn ifmr_not_below_iflr_at_low_snr() {
    let cfg = SimConfig {
        k: 3,
        nt: Antennas::Same(1),
        nr: Antennas::Same(1),
        snr_grid_db: vec![-5.0, 0.0],
        trials: 500,
        seed: 21,
        schemes: vec![Scheme::Ifmr, Scheme::Iflr],
        ..SimConfig::default()
    };
    let out = sim::run(&cfg).unwrap();
    for p in 0..2 {
        let a = out.trial_samples(p, Scheme::Ifmr).unwrap();
        let b = out.trial_samples(p, Scheme::Iflr).unwrap();
        let (diff, se) = sim::paired_difference(&a, &b);
        assert!(diff >= -se, "{} dB: ifmr - iflr = {diff} (se {se})", cfg.snr_grid_db[p]);
    }
}

#[test]
fn iterations_stay_small() {
    let cfg = SimConfig {
        snr_grid_db: vec![0.0, 15.0, 30.0],
        trials: 40,
        seed: 22,
        schemes: vec![Scheme::Ifmr],
        ..SimConfig::default()
    };
    let out = sim::run(&cfg).unwrap();
    for p in 0..3 {
        assert!(out.mean_iterations(p).unwrap() < 5.0);
    }
}

#[test]
fn rate_from_form_is_log_of_inverse() {
    assert_eq!(rate_from_form(1.0), 0.0);
    assert_eq!(rate_from_form(2.0), 0.0);
    assert!((rate_from_form(0.25) - 2.0).abs() < 1e-15);
}
