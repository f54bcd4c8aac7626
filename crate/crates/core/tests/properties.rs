use approx::assert_abs_diff_eq;
use mixw2::autodiff::Tape;
use mixw2::data::{build_neighborhoods, generate_example1, load_csv_str, CsvSchema, LabelMap};
use mixw2::dynamics::{simulate, SimConfig, ToggleParams, TrajectoryBundle};
use mixw2::metric::{clamp_round, hard_delta, MixedMetricConfig, MixedSample};
use mixw2::rng::substream;
use mixw2::snn::{Activation, SnnArchitecture, SnnParams, StochasticModel};
use mixw2::transport::{
    generalized_w2_sq, sinkhorn_cost, CostKind, CostMatrix, EmpiricalMeasure,
    SinkhornConfig, SizePolicy,
};
use proptest::prelude::*;

fn mixed(v: &[(f64, i64)]) -> EmpiricalMeasure<f64> {
    EmpiricalMeasure::new(v.iter().map(|&(c, k)| MixedSample::new(vec![c], vec![k])).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w2_is_symmetric_and_nonnegative(
        a in prop::collection::vec((-3.0f64..3.0, 0i64..4), 1..7),
        b in prop::collection::vec((-3.0f64..3.0, 0i64..4), 1..7),
    ) {
        let n = a.len().min(b.len());
        let cfg = MixedMetricConfig::new(1, 2, 0.8, 0, 3).unwrap();
        let (ma, mb) = (mixed(&a[..n]), mixed(&b[..n]));
        let ab = generalized_w2_sq(&ma, &mb, &cfg, SizePolicy::Strict).unwrap().value;
        let ba = generalized_w2_sq(&mb, &ma, &cfg, SizePolicy::Strict).unwrap().value;
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-12);
        // hard cost with integer categories is bounded by lambda * diameter^2 + categorical slots
        prop_assert!(ab <= 0.8 * 36.0 + 1.0 + 1e-12);
        let aa = generalized_w2_sq(&ma, &ma, &cfg, SizePolicy::Strict).unwrap().value;
        prop_assert_eq!(aa, 0.0);
    }

    #[test]
    fn neighborhoods_match_brute_force(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..40),
        delta in 0.0f64..0.8,
    ) {
        let x: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a, b]).collect();
        let idx = build_neighborhoods(&x, delta).unwrap();
        for i in 0..x.len() {
            let want: Vec<usize> = (0..x.len())
                .filter(|&j| ((x[i][0] - x[j][0]).powi(2) + (x[i][1] - x[j][1]).powi(2)).sqrt() <= delta)
                .collect();
            prop_assert_eq!(idx.get(i), &want[..]);
            for &j in idx.get(i) {
                prop_assert!(idx.get(j).contains(&i));
            }
        }
    }

    #[test]
    fn hard_delta_is_bounded(u in -3.0f64..3.0, c in 0.5f64..8.0) {
        let v = hard_delta(u, c);
        prop_assert!((0.0..=1.0f64.max(c / 4.0)).contains(&v));
        if u.abs() > 0.5 {
            prop_assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn clamp_round_stays_in_bounds(v in -20.0f64..20.0, l in -3i64..3, w in 0i64..5) {
        let r = clamp_round(v, l, l + w);
        prop_assert!(r >= l && r <= l + w);
    }
}

#[test]
fn sinkhorn_approaches_exact_value() {
    let a = mixed(&[(0.0, 0), (1.0, 1), (2.5, 0), (-1.0, 2)]);
    let b = mixed(&[(0.3, 0), (1.2, 2), (2.0, 0), (-0.5, 1)]);
    let cfg = MixedMetricConfig::new(1, 2, 1.0, 0, 2).unwrap();
    let exact = generalized_w2_sq(&a, &b, &cfg, SizePolicy::Strict).unwrap().value;
    let cost = CostMatrix::from_fn(4, CostKind::Hard, |i, j| {
        mixw2::metric::sample_cost(&a.samples()[i], &b.samples()[j], &cfg).unwrap()
    })
    .unwrap();
    let mut prev = f64::INFINITY;
    for eps in [1.0, 0.3, 0.1] {
        let s = sinkhorn_cost(&cost, &SinkhornConfig::new(eps)).unwrap();
        assert!((s - exact).abs() <= (prev - exact).abs() + 1e-9);
        prev = s;
    }
    assert_abs_diff_eq!(prev, exact, epsilon = 0.1 * 4f64.ln());
}

#[test]
fn unequal_sizes_subsample_or_fail() {
    let a = mixed(&[(0.0, 0), (1.0, 1), (2.0, 0)]);
    let b = mixed(&[(0.0, 0), (1.0, 1)]);
    let cfg = MixedMetricConfig::new(1, 2, 1.0, 0, 1).unwrap();
    assert!(generalized_w2_sq(&a, &b, &cfg, SizePolicy::Strict).is_err());
    let v1 = generalized_w2_sq(&a, &b, &cfg, SizePolicy::Subsample(3)).unwrap().value;
    let v2 = generalized_w2_sq(&a, &b, &cfg, SizePolicy::Subsample(3)).unwrap().value;
    assert_eq!(v1, v2);
}

#[test]
fn example1_without_noise_is_a_step_function() {
    let ds = generate_example1::<f64, _>(2000, 0.0, &mut substream(1, "g")).unwrap();
    for (x, y) in ds.x.iter().zip(&ds.y) {
        let k = (4.0 * x[0]).floor();
        let want = if (0.0..5.0).contains(&k) { [3, 4, 1, 2, 0][k as usize] } else { 5 };
        assert_eq!(y.cat[0], want, "x = {}", x[0]);
    }
}

#[test]
fn csv_round_trip_keeps_labels() {
    let text = "a,rings,sex\n0.5,3,M\n0.25,9,F\n1.5,7,I\n";
    let schema = CsvSchema::new(&["a"], &["rings"], &["sex"]);
    let ds = load_csv_str::<f64>(text, &schema, None).unwrap();
    assert_eq!(ds.labels[0], LabelMap::Named(vec!["F".into(), "I".into(), "M".into()]));
    assert_eq!(ds.y[0].cat, vec![2]);
    let again = load_csv_str::<f64>(&ds.to_csv_string().unwrap(), &schema, Some(&ds.labels)).unwrap();
    assert_eq!(again, ds);
    let bad = load_csv_str::<f64>("a,rings,sex\n0.5,3,X\n", &schema, Some(&ds.labels));
    assert!(matches!(bad, Err(mixw2::Error::UnknownCategory { .. })));
}

#[test]
fn trajectory_csv_round_trip_and_seeded_repeat() {
    let b1 = simulate(&ToggleParams::default(), &SimConfig::new(12), 4).unwrap();
    let b2 = simulate(&ToggleParams::default(), &SimConfig::new(12), 4).unwrap();
    assert_eq!(b1, b2);
    let back = TrajectoryBundle::from_csv_str(&b1.to_csv_string()).unwrap();
    assert_eq!(back.len(), 12);
    for (t, u) in back.trajectories.iter().zip(&b1.trajectories) {
        for (s, r) in t.iter().zip(u) {
            assert_eq!(s.genes, r.genes);
            for k in 0..6 {
                assert_abs_diff_eq!(s.levels[k], r.levels[k], epsilon = 1e-9 * r.levels[k].abs().max(1.0));
            }
        }
    }
}

#[test]
fn single_precision_network_tracks_double() {
    let arch = SnnArchitecture {
        input_dim: 2,
        output_dim: 1,
        hidden_layers: 3,
        width: 8,
        activation: Activation::Gelu,
        residual: true,
    };
    let p64 = SnnParams::<f64>::init(arch, &mut substream(2, "i"), 0.3).unwrap();
    let p32: SnnParams<f32> = serde_json::from_str(&serde_json::to_string(&p64).unwrap()).unwrap();
    let a = p64.sample(&[0.2, -0.4], &mut substream(3, "s"))[0];
    let b = p32.sample(&[0.2, -0.4], &mut substream(3, "s"))[0];
    assert!((a - b as f64).abs() < 1e-4, "{a} vs {b}");
    let t = Tape::<f32>::new();
    let bound = p32.bind(&t);
    let out = p32.forward(&bound, &[0.2, -0.4], &mut substream(3, "s")).unwrap();
    assert_eq!(out.item(), b);
}
