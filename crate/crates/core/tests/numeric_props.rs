mod common;

use chrono::{Days, NaiveDate};
use marketstates::clustering::{adjusted_rand_index, canonical_labels, eigengap_from_eigenvalues, kmeans, laplacian_spectrum};
use marketstates::correlation::{pearson_from_rows, power_map, CorrelationMatrix};
use marketstates::ingest::{PricePanel, PriceRecord};
use marketstates::network::{build_graph, critical_correlation};
use marketstates::timeseries::{local_normalize, log_returns, select_top_k, slice_epochs, timeline, Epoch, ReturnSeries};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn d0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
}

fn epoch(length: usize) -> Epoch {
    Epoch {
        index: 0,
        start_date: d0(),
        end_date: d0(),
        length,
    }
}

fn corr(values: DMatrix<f64>) -> CorrelationMatrix {
    CorrelationMatrix {
        epoch: epoch(20),
        coin_ids: (0..values.nrows()).map(|i| format!("c{i:02}")).collect(),
        values,
        q_applied: 1.0,
    }
}

fn series(values: Vec<f64>) -> ReturnSeries {
    ReturnSeries {
        coin_id: "x".into(),
        dates: (0..values.len() as u64).map(|i| d0() + Days::new(i)).collect(),
        values,
    }
}

/// Random correlation matrices with a tunable common factor.
fn correlation_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..16, 4usize..30, 0.0..2.0f64, any::<u64>()).prop_filter_map("constant row", |(k, t, w, seed)| {
        use rand::Rng;
        let mut rng = common::rng(seed);
        let common_row = common::gaussian_rows(&mut rng, 1, t).remove(0);
        let mut rows = common::gaussian_rows(&mut rng, k, t);
        for row in &mut rows {
            let s = if rng.random_bool(0.5) { w } else { -w };
            for (x, c) in row.iter_mut().zip(&common_row) {
                *x += s * c;
            }
        }
        pearson_from_rows(&rows).ok()
    })
}

fn returns_vec() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-0.2..0.2f64, 6..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn power_map_composes(m in correlation_matrix(), a in 0.1..4.0f64, b in 0.1..4.0f64) {
        let c = corr(m);
        let twice = power_map(&power_map(&c, a).unwrap(), b).unwrap();
        let once = power_map(&c, a * b).unwrap();
        prop_assert!((&twice.values - &once.values).amax() <= 1e-12);
        prop_assert_eq!(twice.q_applied, once.q_applied);
    }

    #[test]
    fn power_map_is_monotone_and_keeps_structure(m in correlation_matrix(), q in 0.1..4.0f64) {
        let c = corr(m);
        let p = power_map(&c, q).unwrap();
        let k = c.size();
        for i in 0..k {
            prop_assert_eq!(p.values[(i, i)], 1.0);
            for j in 0..k {
                prop_assert_eq!(p.values[(i, j)], p.values[(j, i)]);
                prop_assert_eq!(p.values[(i, j)].signum(), c.values[(i, j)].signum());
                for l in 0..k {
                    if i != j && i != l && c.values[(i, j)].abs() < c.values[(i, l)].abs() {
                        prop_assert!(p.values[(i, j)].abs() <= p.values[(i, l)].abs());
                    }
                }
            }
        }
    }

    #[test]
    fn thresholding_commutes_with_power_map(m in correlation_matrix(), q in 0.2..3.0f64, t in 4usize..60, alpha in 0.001..0.5f64) {
        let c = corr(m);
        let raw = build_graph(&c, alpha, t).unwrap();
        let mapped = build_graph(&power_map(&c, q).unwrap(), alpha, t).unwrap();
        prop_assert_eq!(raw.edges, mapped.edges);
    }

    #[test]
    fn lowering_alpha_never_adds_edges(m in correlation_matrix(), t in 4usize..60, a in 0.001..0.5f64, shrink in 0.01..1.0f64) {
        let c = corr(m);
        let loose = build_graph(&c, a, t).unwrap();
        let strict = build_graph(&c, a * shrink, t).unwrap();
        prop_assert!(strict.edges.iter().all(|e| loose.edges.contains(e)));
    }

    #[test]
    fn critical_value_matches_integrated_tail(alpha in 0.001..0.2f64, t in 4usize..200, k in 2usize..80) {
        let got = critical_correlation(alpha, t, k).unwrap().unwrap();
        let expected = common::critical_oracle(alpha, t, k);
        prop_assert!((got - expected).abs() <= 1e-8, "{got} vs {expected}");
    }

    #[test]
    fn pearson_affine_invariance(m_rows in proptest::collection::vec(proptest::collection::vec(-1.0..1.0f64, 12), 2..6),
                                 scale in 0.01..100.0f64, shift in -10.0..10.0f64, pow in -6i32..6) {
        let Ok(base) = pearson_from_rows(&m_rows) else { return Ok(()) };
        let mut affine = m_rows.clone();
        for x in &mut affine[0] {
            *x = scale * *x + shift;
        }
        let moved = pearson_from_rows(&affine).unwrap();
        prop_assert!((&base - &moved).amax() <= 1e-9);
        let mut binary = m_rows.clone();
        for x in &mut binary[1] {
            *x *= 2f64.powi(pow);
        }
        prop_assert_eq!(pearson_from_rows(&binary).unwrap(), base);
    }

    #[test]
    fn local_normalize_affine_invariance(v in returns_vec(), scale in 0.01..100.0f64, shift in -1.0..1.0f64, pow in -8i32..8, n in 5usize..20) {
        let Ok(base) = local_normalize(&series(v.clone()), n) else { return Ok(()) };
        let affine = local_normalize(&series(v.iter().map(|x| scale * x + shift).collect()), n).unwrap();
        prop_assert_eq!(&affine.dates, &base.dates);
        for (a, b) in affine.values.iter().zip(&base.values) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
        let binary = local_normalize(&series(v.iter().map(|x| x * 2f64.powi(pow)).collect()), n).unwrap();
        prop_assert_eq!(binary.values, base.values);
    }

    #[test]
    fn log_returns_ignore_price_scale(closes in proptest::collection::vec(0.01..1e4f64, 2..30), c in 1e-3..1e3f64, pow in -10i32..10) {
        let panel = |mult: f64| {
            PricePanel::from_records(closes.iter().enumerate().map(|(i, &p)| {
                (i as u64 + 2, PriceRecord { coin_id: "x".into(), date: d0() + Days::new(i as u64), close: p * mult, market_cap: None })
            }))
            .unwrap()
        };
        let base = log_returns(&panel(1.0)).remove(0);
        let scaled = log_returns(&panel(c)).remove(0);
        for (a, b) in scaled.values.iter().zip(&base.values) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        prop_assert_eq!(log_returns(&panel(2f64.powi(pow))).remove(0), base);
    }

    #[test]
    fn portfolio_ignores_cap_scale(caps in proptest::collection::btree_set(1u32..1_000_000, 6..12), k in 1usize..6, c in 1e-3..1e3f64) {
        let caps: Vec<f64> = caps.into_iter().map(|x| x as f64 * 1e3).collect();
        let days = 10u64;
        let build = |mult: f64| {
            let mut records = Vec::new();
            let mut line = 2;
            for (i, cap) in caps.iter().enumerate() {
                for d in 0..days {
                    let close = 1.0 + ((i as u64 * 7 + d * 3) % 11) as f64 / 10.0;
                    records.push((line, PriceRecord { coin_id: format!("c{i:02}"), date: d0() + Days::new(d), close, market_cap: Some(cap * mult) }));
                    line += 1;
                }
            }
            PricePanel::from_records(records).unwrap()
        };
        let select = |panel: &PricePanel| {
            let norm: Vec<ReturnSeries> = log_returns(panel).iter().map(|s| local_normalize(s, 5).unwrap()).collect();
            let dates = timeline(&norm);
            let e = slice_epochs(&dates, 4).unwrap();
            select_top_k(panel, &e[0], &dates, &norm, k).unwrap().coin_ids
        };
        prop_assert_eq!(select(&build(1.0)), select(&build(c)));
    }

    #[test]
    fn kmeans_partition_survives_rotation(centers in proptest::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 2..5),
                                          theta in 0.0..std::f64::consts::TAU, seed in any::<u64>()) {
        // keep the blobs well separated
        for (i, a) in centers.iter().enumerate() {
            for b in &centers[i + 1..] {
                prop_assume!((a.0 - b.0).hypot(a.1 - b.1) > 3.0);
            }
        }
        let mut rng = common::rng(seed);
        let mut points = Vec::new();
        for &(cx, cy) in &centers {
            let noise = common::gaussian_rows(&mut rng, 2, 6);
            for (nx, ny) in noise[0].iter().zip(&noise[1]) {
                points.push(vec![cx + 0.1 * nx, cy + 0.1 * ny]);
            }
        }
        let (s, c) = theta.sin_cos();
        let rotated: Vec<Vec<f64>> = points.iter().map(|p| vec![c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect();
        let k = centers.len();
        let a = kmeans(&points, k, seed, 10).unwrap();
        let b = kmeans(&rotated, k, seed, 10).unwrap();
        prop_assert_eq!(canonical_labels(&a.labels), canonical_labels(&b.labels));
        prop_assert!((a.inertia - b.inertia).abs() <= 1e-9 * (1.0 + a.inertia));
    }

    #[test]
    fn kmeans_is_reproducible(points in proptest::collection::vec(proptest::collection::vec(-5.0..5.0f64, 3), 4..30), k in 1usize..4, seed in any::<u64>()) {
        let a = kmeans(&points, k, seed, 8).unwrap();
        let b = kmeans(&points, k, seed, 8).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn eigengap_counts_permuted_blocks(sizes in proptest::collection::vec(2usize..6, 1..6), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let m: usize = sizes.iter().sum();
        let mut block = Vec::new();
        for (b, &s) in sizes.iter().enumerate() {
            block.extend(std::iter::repeat_n(b, s));
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut common::rng(perm_seed));
        let a = DMatrix::from_fn(m, m, |i, j| {
            if i != j && block[order[i]] == block[order[j]] { 0.9 } else { 0.0 }
        });
        let spectrum = laplacian_spectrum(&a).unwrap();
        let k_max = (m - 1).min(10);
        prop_assume!(sizes.len() <= k_max);
        prop_assert_eq!(eigengap_from_eigenvalues(&spectrum.eigenvalues, k_max).unwrap(), sizes.len());
    }

    #[test]
    fn ari_properties(a in proptest::collection::vec(0usize..4, 2..40), relabel in Just([3usize, 0, 2, 1]), other_seed in any::<u64>()) {
        use rand::Rng;
        let renamed: Vec<usize> = a.iter().map(|&x| relabel[x]).collect();
        prop_assert!((adjusted_rand_index(&a, &renamed) - 1.0).abs() < 1e-12);
        let mut rng = common::rng(other_seed);
        let b: Vec<usize> = a.iter().map(|_| rng.random_range(0..3)).collect();
        let ab = adjusted_rand_index(&a, &b);
        prop_assert!((ab - adjusted_rand_index(&b, &a)).abs() < 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&ab));
    }
}
