use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::constraints::{AxisBox, ConstraintSpec, InputRegion};
use crate::netcore::{backward, forward};

fn region(bounds: &[[f64; 2]]) -> InputRegion {
    InputRegion::single(AxisBox::new(bounds.to_vec()).unwrap())
}

fn spec(name: &str, bounds: &[[f64; 2]], output: ConvexOutputSet) -> ConstraintSpec {
    ConstraintSpec {
        name: name.into(),
        region: region(bounds),
        output,
    }
}

fn one_d(constraints: Vec<ConstraintSpec>) -> ConstraintSet {
    ConstraintSet::new(region(&[[-2.0, 2.0]]), vec![1.0], 1, constraints).unwrap()
}

fn two_d() -> ConstraintSet {
    ConstraintSet::new(
        region(&[[0.0, 1.0], [0.0, 1.0]]),
        vec![1.0, 1.0],
        1,
        vec![
            spec("a1", &[[0.1, 0.45], [0.3, 0.7]], ConvexOutputSet::Interval { lo: 0.7, hi: 1.0 }),
            spec("a2", &[[0.35, 0.7], [0.3, 0.7]], ConvexOutputSet::Interval { lo: 0.5, hi: 0.8 }),
        ],
    )
    .unwrap()
}

fn arch(input: usize, output: usize) -> Architecture {
    Architecture::new(vec![input, 8], vec![8, 6, output]).unwrap()
}

fn key(s: &str) -> OverlapKey {
    s.parse().unwrap()
}

#[test]
fn weight_examples() {
    assert_eq!(weight_eval(&[0.0, 0.5], &key("10")), 0.5);
    assert_eq!(weight_eval(&[0.0, 0.5], &key("01")), 0.0);
    assert_eq!(weight_eval(&[0.0, 0.0, 0.0], &key("111")), 1.0);
}

#[test]
fn two_overlapping_constraints_give_four_heads() {
    let m = build_safe_predictor(&two_d(), &arch(2, 1), 0).unwrap();
    let keys: Vec<String> = m.partition().keys().iter().map(ToString::to_string).collect();
    assert_eq!(keys, ["00", "01", "10", "11"]);
    let both = m.partition().position(&key("11")).unwrap();
    assert_eq!(m.heads()[both].codomain, ConvexOutputSet::Interval { lo: 0.7, hi: 0.8 });
    let d = m.describe();
    assert_eq!(d["k"], 4);
    assert_eq!(d["nodes"], 8 + 4 * 6);
}

#[test]
fn infeasible_overlap_is_reported_by_key() {
    let set = one_d(vec![
        spec("lo", &[[0.0, 1.0]], ConvexOutputSet::Interval { lo: 0.0, hi: 0.3 }),
        spec("hi", &[[0.5, 1.5]], ConvexOutputSet::Interval { lo: 0.5, hi: 1.0 }),
    ]);
    match build_safe_predictor(&set, &arch(1, 1), 0) {
        Err(Error::InfeasibleOverlap { keys }) => assert_eq!(keys, ["11"]),
        other => panic!("expected infeasible overlap, got {other:?}"),
    }
}

#[test]
fn architecture_dimensions_are_checked() {
    let set = two_d();
    assert!(build_safe_predictor(&set, &arch(3, 1), 0).is_err());
    assert!(build_safe_predictor(&set, &arch(2, 2), 0).is_err());
    let bad = Architecture::new(vec![2, 8], vec![7, 1]).unwrap();
    assert!(build_safe_predictor(&set, &bad, 0).is_err());
}

#[test]
fn inside_a_region_only_complying_heads_count() {
    let set = one_d(vec![spec("pos", &[[0.0, 2.0]], ConvexOutputSet::HalfLineAbove { lo: 0.0 })]);
    let m = build_safe_predictor(&set, &arch(1, 1), 4).unwrap();
    for x in [0.0, 0.3, 1.0, 2.0] {
        assert_eq!(m.safe_forward(&[x]).unwrap(), m.constrained_forward(&key("1"), &[x]).unwrap());
        assert!(m.safe_forward(&[x]).unwrap()[0] > 0.0);
    }
}

#[test]
fn half_proximity_blends_evenly() {
    let set = one_d(vec![spec("pos", &[[0.0, 2.0]], ConvexOutputSet::HalfLineAbove { lo: 0.0 })]);
    let mut m = build_safe_predictor(&set, &arch(1, 1), 1).unwrap();
    // s(d) = 0.5 at d = 1 when sigma1 = 1 / sqrt(ln 2), sigma2 = 2.
    m.set_proximity(0, ProximityParams::from_sigmas(1.0 / 2f64.ln().sqrt(), 2.0).unwrap());
    let x = [-1.0];
    let s = m.proximities_at(&x).unwrap()[0];
    assert!((s - 0.5).abs() < 1e-12);
    let g0 = m.constrained_forward(&key("0"), &x).unwrap()[0];
    let g1 = m.constrained_forward(&key("1"), &x).unwrap()[0];
    let f = m.safe_forward(&x).unwrap()[0];
    let expected = (s * g0 + (1.0 - s) * g1) / (s + (1.0 - s));
    assert!((f - expected).abs() < 1e-12, "{f} vs {expected}");
}

#[test]
fn vanishing_weights_fall_back_to_own_head() {
    let set = one_d(vec![
        spec("left", &[[-1.5, -1.0]], ConvexOutputSet::Interval { lo: 0.0, hi: 1.0 }),
        spec("right", &[[1.0, 1.5]], ConvexOutputSet::Interval { lo: 2.0, hi: 3.0 }),
    ]);
    let mut m = build_safe_predictor(&set, &arch(1, 1), 2).unwrap();
    assert_eq!(m.partition().k(), 3);
    let steep = ProximityParams { a: 10.0, b: 5.0 };
    m.set_proximity(0, steep);
    m.set_proximity(1, steep);
    let x = [0.0];
    assert_eq!(m.proximities_at(&x).unwrap(), vec![0.0, 0.0]);
    assert_eq!(m.safe_forward(&x).unwrap(), m.constrained_forward(&key("00"), &x).unwrap());
}

#[test]
fn keys_outside_the_partition_are_integrity_errors() {
    let set = ConstraintSet::new(
        region(&[[0.0, 1.0]]),
        vec![1.0],
        1,
        vec![spec("all", &[[0.0, 1.0]], ConvexOutputSet::Interval { lo: 0.0, hi: 1.0 })],
    )
    .unwrap();
    let m = build_safe_predictor(&set, &arch(1, 1), 0).unwrap();
    assert_eq!(m.partition().k(), 1);
    assert!(matches!(m.safe_forward(&[2.0]), Err(Error::PartitionIntegrity(_))));
    assert!(matches!(
        m.constrained_forward(&key("0"), &[0.5]),
        Err(Error::PartitionIntegrity(_))
    ));
}

#[test]
fn projected_heads_stay_in_codomain_for_any_parameters() {
    let set = two_d();
    let mut m = build_safe_predictor(&set, &arch(2, 1), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pos = m.partition().position(&key("10")).unwrap();
    for _ in 0..20 {
        for v in m.params_mut().values_mut() {
            *v = rng.random_range(-20.0..20.0);
        }
        let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let y = m.constrained_forward(&key("10"), &x).unwrap()[0];
        assert!(m.heads()[pos].codomain.contains(&[y], 1e-9), "{y}");
    }
}

#[test]
fn unconstrained_head_is_the_raw_network() {
    let set = two_d();
    let m = build_safe_predictor(&set, &arch(2, 1), 5).unwrap();
    let x = [0.9, 0.1];
    let norm: Vec<f64> = x.iter().map(|v| (v - 0.5) / 0.5).collect();
    let p = m.params().values();
    let latent = forward(m.trunk(), &p[..m.trunk().param_count()], &norm, None).unwrap();
    let seg = m.params().segment("head:00").unwrap();
    let raw = forward(&m.heads()[0].spec, m.params().slice(seg), &latent, None).unwrap();
    assert_eq!(m.constrained_forward(&key("00"), &x).unwrap(), raw);
}

#[test]
fn score_heads_put_unsafe_entries_below_the_safe_minimum() {
    let domain = region(&[[0.0, 1.0]]);
    let set = ConstraintSet::new(
        domain,
        vec![1.0],
        4,
        vec![spec("no2", &[[0.2, 0.6]], ConvexOutputSet::score_not_highest(vec![2], 1e-4))],
    )
    .unwrap();
    let m = build_safe_predictor(&set, &arch(1, 4), 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let x = [rng.random_range(0.0..1.0)];
        let y = m.constrained_forward(&key("1"), &x).unwrap();
        let safe_min = [y[0], y[1], y[3]].into_iter().fold(f64::INFINITY, f64::min);
        assert_eq!(y[2], safe_min - 1e-4);
    }
}

#[test]
fn no_constraints_reduce_to_a_plain_network() {
    let set = two_d().without_constraints();
    let m = build_safe_predictor(&set, &arch(2, 1), 9).unwrap();
    assert_eq!(m.partition().k(), 1);
    let x = [0.25, 0.75];
    let norm = [-0.5, 0.5];
    let p = m.params().values();
    let t = m.trunk().param_count();
    let latent = forward(m.trunk(), &p[..t], &norm, None).unwrap();
    let y = forward(&m.heads()[0].spec, &p[t..], &latent, None).unwrap();
    assert_eq!(m.safe_forward(&x).unwrap(), y);

    let standard = build_standard_predictor(&two_d(), &arch(2, 1), 9).unwrap();
    assert_eq!(standard.params().values(), m.params().values());
    assert_eq!(standard.safe_forward(&x).unwrap(), y);
    assert_eq!(standard.kind(), ModelKind::Standard);
}

#[test]
fn batched_prediction_matches_single_points() {
    let m = build_safe_predictor(&two_d(), &arch(2, 1), 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let xs = Array2::from_shape_fn((700, 2), |_| rng.random_range(0.0..1.0));
    let batch = m.predict(xs.view()).unwrap();
    for r in (0..700).step_by(37) {
        let single = m.safe_forward(xs.row(r).as_slice().unwrap()).unwrap();
        assert_eq!(single[0].to_bits(), batch[[r, 0]].to_bits());
    }
    let detail = m.evaluate_detailed(xs.view()).unwrap();
    assert_eq!(detail.output, batch);
    assert_eq!(detail.weights.dim(), (700, 4));
    assert_eq!(detail.proximities.dim(), (700, 2));
}

#[test]
fn serialization_round_trips_bit_for_bit() {
    let set = two_d();
    let mut m = build_safe_predictor(&set, &arch(2, 1), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for v in m.params_mut().values_mut() {
        *v = rng.random_range(-3.0..3.0) * 10f64.powi(rng.random_range(-12..4));
    }
    let back = SafePredictor::from_json(&m.to_json().unwrap(), &set).unwrap();
    let bits = |p: &SafePredictor| p.params().values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&m));
    let xs = array![[0.4, 0.5], [0.05, 0.95], [0.7, 0.3]];
    assert_eq!(back.predict(xs.view()).unwrap(), m.predict(xs.view()).unwrap());
}

#[test]
fn standard_models_round_trip_against_the_full_constraints() {
    let set = two_d();
    let m = build_standard_predictor(&set, &arch(2, 1), 12).unwrap();
    let back = SafePredictor::from_json(&m.to_json().unwrap(), &set).unwrap();
    assert_eq!(back.kind(), ModelKind::Standard);
    assert_eq!(back.params().values(), m.params().values());
}

#[test]
fn malformed_models_are_rejected_with_paths() {
    let set = two_d();
    let m = build_safe_predictor(&set, &arch(2, 1), 13).unwrap();
    let text = m.to_json().unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();

    let mut corrupt = value.clone();
    corrupt["head_specs"][2]["spec"]["layer_dims"][1] = serde_json::json!("wide");
    match SafePredictor::from_json(&corrupt.to_string(), &set) {
        Err(Error::Parse { path, .. }) => assert!(path.starts_with("head_specs[2].spec.layer_dims"), "{path}"),
        other => panic!("unexpected {other:?}"),
    }

    let mut version = value.clone();
    version["format_version"] = serde_json::json!(7);
    assert!(matches!(
        SafePredictor::from_json(&version.to_string(), &set),
        Err(Error::FormatVersion { found: 7, .. })
    ));

    let mut other = set.clone();
    other.constraints[0].output = ConvexOutputSet::Interval { lo: 0.6, hi: 1.0 };
    assert!(matches!(SafePredictor::from_json(&text, &other), Err(Error::HashMismatch { .. })));

    // A head claiming a looser codomain would void the guarantee.
    value["head_specs"][3]["codomain"] = serde_json::json!({"variant": "Unconstrained"});
    assert!(matches!(SafePredictor::from_json(&value.to_string(), &set), Err(Error::Spec(_))));
}

#[test]
fn full_loss_gradients_match_finite_differences() {
    let set = two_d();
    let mut m = build_safe_predictor(&set, &arch(2, 1), 14).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for v in m.params_mut().values_mut() {
        *v += rng.random_range(-0.3..0.3);
    }
    let xs = Array2::from_shape_fn((12, 2), |_| rng.random_range(0.0..1.0));
    let feats = m.features(xs.view()).unwrap();
    let target = Array2::from_shape_fn((12, 1), |_| rng.random_range(0.0..1.0));
    let loss = |params: &[f64]| {
        let mut probe = m.clone();
        probe.params_mut().assign(params.to_vec()).unwrap();
        let mut tape = Tape::new(probe.params().values());
        let rec = probe.record(&mut tape, &feats).unwrap();
        (tape.value(rec.output) - &target).mapv(|e| e * e).sum()
    };
    let mut tape = Tape::new(m.params().values());
    let rec = m.record(&mut tape, &feats).unwrap();
    let seed = (tape.value(rec.output) - &target).mapv(|e| 2.0 * e);
    let grads = backward(&tape, rec.output, &seed).unwrap();
    let base = m.params().values().to_vec();
    let h = 1e-5;
    let mut probe = base.clone();
    for i in 0..base.len() {
        probe[i] = base[i] + h;
        let up = loss(&probe);
        probe[i] = base[i] - h;
        let down = loss(&probe);
        probe[i] = base[i];
        let fd = (up - down) / (2.0 * h);
        let err = (grads[i] - fd).abs() / fd.abs().max(grads[i].abs()).max(1e-4);
        assert!(err <= 1e-4, "param {i}: {} vs {fd}", grads[i]);
    }
}
