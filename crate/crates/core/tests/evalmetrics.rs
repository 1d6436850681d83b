use pdescore::conditioning::{offline_indices, ObservationSet};
use pdescore::evalmetrics::*;
use pdescore::Trajectory;
use proptest::prelude::*;

fn from_vec(len: usize, width: usize, data: Vec<f64>) -> Trajectory {
    Trajectory::new(data, len, 1, width, 0.2).unwrap()
}

fn field(len: usize, width: usize) -> impl Strategy<Value = Trajectory> {
    prop::collection::vec(-3.0f64..3.0, len * width).prop_map(move |d| from_vec(len, width, d))
}

fn pairs(n: usize, len: usize, width: usize) -> impl Strategy<Value = (Vec<Trajectory>, Vec<Trajectory>)> {
    (
        prop::collection::vec(field(len, width), n),
        prop::collection::vec(field(len, width), n),
    )
}

#[test]
fn identical_and_offset_predictions() {
    let t = from_vec(3, 4, (0..12).map(|i| (i as f64).sin()).collect());
    let plus_one = t.map(|v| v + 1.0);
    assert_eq!(mse_per_step(&[t.clone()], &[t.clone()]).unwrap(), vec![0.0; 3]);
    assert!(mse_per_step(&[plus_one.clone()], &[t.clone()]).unwrap().iter().all(|&m| (m - 1.0).abs() < 1e-14));
    assert_eq!(rmsd(&[t.clone()], &[t.clone()]).unwrap().0, 0.0);
    let off = t.map(|v| v - 0.7);
    assert!((rmsd(&[off], &[t.clone()]).unwrap().0 - 0.7).abs() < 1e-14);
    let s = pearson_per_step(&[t.clone()], &[t.clone()]).unwrap();
    assert!(s.rho.iter().all(|r| (r - 1.0).abs() < 1e-14));
    let neg = pearson_per_step(&[t.map(|v| -v)], &[t.clone()]).unwrap();
    assert!(neg.rho.iter().all(|r| (r + 1.0).abs() < 1e-14));
    let m = MetricSeries::compute(&[t.clone()], &[t]).unwrap();
    assert_eq!(m.t_max, 3.0 * 0.2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rho_is_affine_invariant_and_symmetric(t in field(4, 8), a in 0.1f64..5.0, b in -3.0f64..3.0, q in field(4, 8)) {
        let scaled = t.map(|v| a * v + b);
        let s = pearson_per_step(&[scaled], &[t.clone()]).unwrap();
        for r in &s.rho {
            prop_assert!((r - 1.0).abs() < 1e-12);
        }
        let pq = pearson_per_step(&[q.clone()], &[t.clone()]).unwrap();
        let qp = pearson_per_step(&[t], &[q]).unwrap();
        for (x, y) in pq.rho.iter().zip(&qp.rho) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(x));
        }
    }

    #[test]
    fn rmsd_matches_mean_mse((p, t) in pairs(5, 6, 8)) {
        let mse = mse_per_step(&p, &t).unwrap();
        let (r, _) = rmsd(&p, &t).unwrap();
        let mean = mse.iter().sum::<f64>() / mse.len() as f64;
        prop_assert!((r * r - mean).abs() < 1e-12);
        let m = MetricSeries::compute(&p, &t).unwrap();
        prop_assert!((m.rmsd - r).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_permutation_invariant((p, t) in pairs(6, 5, 8), shift in 1usize..6) {
        let mut pr = p.clone();
        let mut tr = t.clone();
        pr.rotate_left(shift);
        tr.rotate_left(shift);
        let a = MetricSeries::compute(&p, &t).unwrap();
        let b = MetricSeries::compute(&pr, &tr).unwrap();
        prop_assert!((a.rmsd - b.rmsd).abs() < 1e-12);
        prop_assert!((a.rmsd_se - b.rmsd_se).abs() < 1e-12);
        for l in 0..a.mse.len() {
            prop_assert!((a.mse[l] - b.mse[l]).abs() < 1e-12);
            prop_assert!((a.rho[l] - b.rho[l]).abs() < 1e-12);
            prop_assert!((a.rho_se[l] - b.rho_se[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_satisfies_parseval(t in field(2, 16)) {
        let amp = spectrum(&t, 1).unwrap();
        let d = 16;
        prop_assert_eq!(amp.len(), d / 2 + 1);
        // Bins strictly between 0 and D/2 stand for a conjugate pair.
        let power: f64 = amp
            .iter()
            .enumerate()
            .map(|(k, a)| if k == 0 || k == d / 2 { a * a } else { 2.0 * a * a })
            .sum::<f64>()
            / d as f64;
        let energy: f64 = t.state(1).iter().map(|u| u * u).sum();
        prop_assert!((power - energy).abs() < 1e-8 * energy.max(1.0));
    }
}

#[test]
fn spectrum_of_pure_mode() {
    let d = 32;
    let m = 5;
    let u: Vec<f64> = (0..d).map(|j| (2.0 * std::f64::consts::PI * (m * j) as f64 / d as f64).sin()).collect();
    let t = from_vec(1, d, u);
    let amp = spectrum(&t, 0).unwrap();
    for (k, a) in amp.iter().enumerate() {
        if k == m {
            assert!((a - d as f64 / 2.0).abs() < 1e-10);
        } else {
            assert!(a.abs() < 1e-10, "bin {k}: {a}");
        }
    }
    assert!(spectrum(&from_vec(1, d, vec![0.0; d]), 0).unwrap().iter().all(|&a| a == 0.0));
    assert!(spectrum(&t, 1).is_err());
}

#[test]
fn persistence_of_static_truth_is_exact() {
    let state: Vec<f64> = (0..8).map(|i| i as f64 * 0.3).collect();
    let truth = repeat_state(&state, 10, 0.2);
    let pred = baseline_persistence(&truth.truncated(1), 10).unwrap();
    assert_eq!(mse_per_step(&[pred], &[truth]).unwrap(), vec![0.0; 10]);
}

#[test]
fn climatology_mse_is_spread_around_train_mean() {
    let train: Vec<Trajectory> = (0..3)
        .map(|k| from_vec(4, 6, (0..24).map(|i| ((i * 7 + k * 5) as f64).cos()).collect()))
        .collect();
    let clim = baseline_climatology(&train).unwrap();
    let truth = from_vec(5, 6, (0..30).map(|i| (i as f64 * 0.37).sin()).collect());
    let pred = repeat_state(&clim, 5, 0.2);
    let mse = mse_per_step(&[pred], &[truth.clone()]).unwrap();
    for l in 0..5 {
        let spread: f64 = truth.state(l).iter().zip(&clim).map(|(u, c)| (u - c).powi(2)).sum::<f64>() / 6.0;
        assert!((mse[l] - spread).abs() < 1e-14);
    }
    assert!(baseline_climatology(&[]).is_err());
}

#[test]
fn interpolation_reconstructs_fully_observed_grid() {
    let (len, d) = (7, 9);
    let truth = from_vec(len, d, (0..len * d).map(|i| ((i as f64) * 0.41).sin() + 0.1 * i as f64).collect());
    let idx = offline_indices(len, d, 1.0, 0, 1).unwrap();
    let obs = ObservationSet::observe(&truth, idx, 0.0, 1).unwrap();
    for method in [InterpMethod::Linear, InterpMethod::Nearest, InterpMethod::Cubic] {
        let rec = baseline_interpolate(&obs, method, 0.2).unwrap();
        for (a, b) in rec.data.iter().zip(&truth.data) {
            assert!((a - b).abs() < 1e-10, "{method:?}");
        }
    }
}

#[test]
fn interpolation_is_linear_inside_hull_and_nearest_outside() {
    // Corners of a square plus one outside point at the far end.
    let (len, d) = (6, 4);
    let f = |l: usize, z: usize| 1.0 + 2.0 * l as f64 - 0.5 * z as f64;
    let idx = vec![(0, 0), (0, 3), (3, 0), (3, 3)];
    let vals: Vec<f64> = idx.iter().map(|&(l, z)| f(l, z)).collect();
    let obs = ObservationSet::new(len, d, idx, vals, 0.0, 0).unwrap();
    let rec = baseline_interpolate(&obs, InterpMethod::Linear, 0.2).unwrap();
    for l in 0..=3 {
        for z in 0..d {
            assert!((rec.data[l * d + z] - f(l, z)).abs() < 1e-12);
        }
    }
    // Beyond the hull each node copies its nearest observed corner.
    assert_eq!(rec.data[5 * d], f(3, 0));
    assert_eq!(rec.data[5 * d + 3], f(3, 3));
    assert!(baseline_interpolate(&ObservationSet::empty(len, d, 0.1), InterpMethod::Linear, 0.2).is_err());
}
