use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use transdist::data::{generate, make_pairs, split_tfds1_style, split_tfds2_style, Split, SyntheticSpec};
use transdist::distance::{
    batch_distances, batch_distances_sequential, cost, cost_grad, optimize_code, transforming_distance, CodeInit,
    DistanceConfig, DistanceMode, TransformCode,
};
use transdist::features::{pca_fit, CaeModel, FeatureSpace};
use transdist::knn::{augment_database, reduced_rows, vote, NeighborDatabase};
use transdist::model::{init_params, FgrbmParams};

fn normal(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || rng.sample::<f64, _>(StandardNormal))
}

fn model(i: usize, m: usize, seed: u64) -> FgrbmParams {
    let mut p = init_params(i, i, m, 2 * m, 0.5, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(!seed);
    p.b = 0.5 * normal(i, &mut rng);
    p.c = 0.5 * normal(m, &mut rng);
    p
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

fn neg_energies(p: &FgrbmParams, x: &Array1<f64>, y: &Array1<f64>) -> Vec<(u32, f64)> {
    let m = p.hidden_dim();
    (0..1u32 << m)
        .map(|bits| {
            let h = Array1::from_shape_fn(m, |k| f64::from((bits >> k) & 1));
            (bits, -p.energy(x.view(), y.view(), h.view()).unwrap())
        })
        .collect()
}

fn feature(kind: u8, dim: usize, seed: u64) -> FeatureSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        0 => FeatureSpace::Identity,
        1 => {
            let data = Array2::from_shape_simple_fn((3 * dim, dim), || rng.sample::<f64, _>(StandardNormal));
            FeatureSpace::Pca(pca_fit(data.view(), dim - 1).unwrap())
        }
        _ => {
            let mut cae = CaeModel::zeros(dim, dim + 1, 0.1);
            cae.weights = Array2::from_shape_simple_fn((dim + 1, dim), || 0.5 * rng.sample::<f64, _>(StandardNormal));
            cae.encoder_bias = 0.3 * normal(dim + 1, &mut rng);
            FeatureSpace::Cae(cae)
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn free_energy_marginalizes_the_hidden_units(seed in any::<u64>(), i in 2usize..5, m in 1usize..8) {
        let p = model(i, m, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = (normal(i, &mut rng), normal(i, &mut rng));
        let e: Vec<f64> = neg_energies(&p, &x, &y).into_iter().map(|(_, v)| v).collect();
        let f = p.free_energy(x.view(), y.view()).unwrap();
        prop_assert!(((-f - log_sum_exp(&e)).exp() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn inferred_hidden_matches_enumeration(seed in any::<u64>(), i in 2usize..5, m in 1usize..8) {
        let p = model(i, m, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = (normal(i, &mut rng), normal(i, &mut rng));
        let all = neg_energies(&p, &x, &y);
        let z = log_sum_exp(&all.iter().map(|e| e.1).collect::<Vec<_>>());
        let probs = p.infer_hidden(x.view(), y.view()).unwrap();
        for k in 0..m {
            let on: Vec<f64> = all.iter().filter(|(b, _)| (b >> k) & 1 == 1).map(|e| e.1).collect();
            let exact = (log_sum_exp(&on) - z).exp();
            prop_assert!((probs[k] - exact).abs() / exact < 1e-8);
        }
    }

    #[test]
    fn cost_gradient_matches_finite_differences(seed in any::<u64>(), kind in 0u8..3, dual in any::<bool>()) {
        let (dim, m) = (5, 3);
        let p = model(dim, m, seed);
        let f = feature(kind, dim, seed ^ 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let (xa, xb) = (normal(dim, &mut rng), normal(dim, &mut rng));
        let mode = if dual { DistanceMode::Dual } else { DistanceMode::Single };
        let cfg = DistanceConfig { mode, lambda: 0.7, ..Default::default() };
        let codes: Vec<TransformCode> = (0..mode.code_count()).map(|_| TransformCode::new(normal(m, &mut rng))).collect();
        let grads = cost_grad(&p, &f, xa.view(), xb.view(), &codes, &cfg).unwrap();
        let eps = 1e-4;
        for (s, g) in grads.iter().enumerate() {
            for k in 0..m {
                let mut plus = codes.clone();
                let mut minus = codes.clone();
                plus[s].z[k] += eps;
                minus[s].z[k] -= eps;
                let l = |c: &[TransformCode]| cost(&p, &f, xa.view(), xb.view(), c, &cfg).unwrap().total;
                let fd = (l(&plus) - l(&minus)) / (2.0 * eps);
                prop_assert!((g[k] - fd).abs() <= 1e-4 * g[k].abs().max(fd.abs()).max(1e-3), "{} vs {}", g[k], fd);
            }
        }
    }

    #[test]
    fn optimization_records_are_consistent(seed in any::<u64>(), lambda in 0.0f64..3.0, zeros in any::<bool>(), dual in any::<bool>()) {
        let p = model(4, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (xa, xb) = (normal(4, &mut rng), normal(4, &mut rng));
        let cfg = DistanceConfig {
            mode: if dual { DistanceMode::Dual } else { DistanceMode::Single },
            lambda,
            init: if zeros { CodeInit::Zeros } else { CodeInit::Inferred },
            iterations: 12,
            ..Default::default()
        };
        let r = optimize_code(&p, &FeatureSpace::Identity, xa.view(), xb.view(), &cfg).unwrap();
        prop_assert_eq!(r.cost_trajectory.len(), 13);
        for c in &r.cost_trajectory {
            prop_assert!((c.total - c.distance - lambda * c.regularizer).abs() <= 1e-12 * c.total.abs().max(1.0));
        }
        prop_assert!(r.best_cost().total <= r.initial_cost().total);
        prop_assert!(r.d_star >= 0.0);
        let again = cost(&p, &FeatureSpace::Identity, xa.view(), xb.view(), &r.codes, &cfg).unwrap();
        prop_assert_eq!(again.distance, r.d_star);
    }

    #[test]
    fn dual_distance_is_swap_invariant(seed in any::<u64>()) {
        let p = model(4, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (xa, xb) = (normal(4, &mut rng), normal(4, &mut rng));
        let cfg = DistanceConfig { mode: DistanceMode::Dual, ..Default::default() };
        let ab = transforming_distance(&p, &FeatureSpace::Identity, xa.view(), xb.view(), &cfg).unwrap();
        let ba = transforming_distance(&p, &FeatureSpace::Identity, xb.view(), xa.view(), &cfg).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9);
    }

    #[test]
    fn batch_equals_sequential(seed in any::<u64>(), rows in 1usize..6) {
        let p = model(4, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sources = Array2::from_shape_simple_fn((rows, 4), || rng.sample::<f64, _>(StandardNormal));
        let first = sources.row(0).to_owned();
        sources.row_mut(rows - 1).assign(&first);
        let target = normal(4, &mut rng);
        let cfg = DistanceConfig::default();
        let par = batch_distances(&p, &FeatureSpace::Identity, sources.view(), target.view(), &cfg).unwrap();
        let seq = batch_distances_sequential(&p, &FeatureSpace::Identity, sources.view(), target.view(), &cfg).unwrap();
        prop_assert_eq!(&par, &seq);
        prop_assert_eq!(par[0], par[rows - 1]);
    }

    #[test]
    fn monotone_rescaling_keeps_every_prediction(
        dists in proptest::collection::vec(0.0f64..100.0, 1..30),
        labels_seed in any::<u64>(),
        k in 1usize..30,
    ) {
        let k = k.min(dists.len());
        let mut rng = ChaCha8Rng::seed_from_u64(labels_seed);
        let labels: Vec<usize> = dists.iter().map(|_| rng.random_range(0..4)).collect();
        let (plain, _) = vote(&dists, &labels, k).unwrap();
        for f in [|d: f64| d * d, |d: f64| (1.0 + d).ln(), |d: f64| 3.0 * d + 7.0, |d: f64| d.sqrt()] {
            let rescaled: Vec<f64> = dists.iter().map(|&d| f(d)).collect();
            prop_assert_eq!(vote(&rescaled, &labels, k).unwrap().0, plain);
        }
    }

    #[test]
    fn self_retrieval_is_exact(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let examples = Array2::from_shape_simple_fn((n, 3), || rng.sample::<f64, _>(StandardNormal));
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let db = NeighborDatabase::new(examples.clone(), &labels).unwrap();
        for (q, row) in examples.rows().into_iter().enumerate() {
            let d: Vec<f64> = db.examples.rows().into_iter().map(|r| transdist::math::l2(r, row)).collect();
            prop_assert_eq!(vote(&d, &labels, 1).unwrap().0, labels[q]);
        }
    }

    #[test]
    fn reduction_keeps_the_ceiling_count(n in 1usize..300, rate in 0.0f64..0.99, seed in any::<u64>()) {
        let expected = ((1.0 - rate) * n as f64 - 1e-9).ceil().max(0.0) as usize;
        match reduced_rows(n, rate, seed) {
            Ok(rows) => {
                prop_assert_eq!(rows.len(), expected);
                prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
            }
            Err(_) => prop_assert_eq!(expected, 0),
        }
    }

    #[test]
    fn pairs_are_closed_under_reversal(seed in any::<u64>(), delta in proptest::option::of(0.0f64..90.0), include_self in any::<bool>()) {
        let spec = SyntheticSpec { n_identities: 6, n_classes: 3, image_size: 8, seed, ..Default::default() };
        let ds = generate(&spec).unwrap();
        let pairs = make_pairs(&ds, delta, include_self).unwrap();
        for &(a, b) in &pairs.pairs {
            prop_assert!(pairs.pairs.contains(&(b, a)));
            prop_assert_eq!(ds.meta[a].identity, ds.meta[b].identity);
            prop_assert_eq!(a == b, include_self && a == b);
        }
    }

    #[test]
    fn splits_partition_and_keep_database_images(seed in any::<u64>(), ids in 4usize..12) {
        let spec = SyntheticSpec { n_identities: ids, n_classes: 4, image_size: 8, seed, ..Default::default() };
        let ds = generate(&spec).unwrap();
        let two = split_tfds2_style(&ds, seed).unwrap();
        prop_assert_eq!(two.count(Split::Test), ids);
        prop_assert_eq!(two.count(Split::Validation), ids);
        for (_, members) in two.by_identity() {
            let db = members.iter().filter(|&&k| two.splits[k] == Split::KnnTrain).count();
            prop_assert!(db >= 2);
        }
        let one = split_tfds1_style(&ds, seed).unwrap();
        prop_assert_eq!(one.count(Split::Test), ids);
        prop_assert_eq!(one.splits.len(), ds.len());
    }

    #[test]
    fn augmentation_has_the_exact_size(seed in any::<u64>(), n in 1usize..5, factor in 2usize..4) {
        let p = model(3, 2, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let examples = Array2::from_shape_simple_fn((n, 3), || rng.sample::<f64, _>(StandardNormal));
        let labels: Vec<usize> = (0..n).collect();
        let db = NeighborDatabase::new(examples.clone(), &labels).unwrap();
        let big = augment_database(&db, &p, factor, 3, seed).unwrap();
        prop_assert_eq!(big.len(), factor * n);
        prop_assert_eq!(big.examples.slice(ndarray::s![..n, ..]), examples.view());
        for (r, meta) in big.meta.iter().enumerate().skip(n) {
            prop_assert_eq!(meta.label, labels[meta.id]);
            prop_assert_eq!(meta.sample, (r - n) % (factor - 1) + 1);
        }
    }

    #[test]
    fn checkpoints_round_trip_at_single_precision(seed in any::<u64>()) {
        let p = model(3, 2, seed);
        let back = FgrbmParams::from_checkpoint_bytes(&p.to_checkpoint_bytes()).unwrap();
        let close = |a: &Array2<f64>, b: &Array2<f64>| a.iter().zip(b).all(|(x, y)| (*x as f32) as f64 == *y);
        prop_assert!(close(&p.v, &back.v) && close(&p.w, &back.w) && close(&p.u, &back.u));
        let again = FgrbmParams::from_checkpoint_bytes(&back.to_checkpoint_bytes()).unwrap();
        prop_assert_eq!(again, back);
    }
}
