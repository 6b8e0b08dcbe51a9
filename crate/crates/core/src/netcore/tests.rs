use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::constraints::ConvexOutputSet;

fn random_params(spec: &DenseNetSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![0.0; spec.param_count()];
    spec.init(&mut rng, &mut p).unwrap();
    // Non-zero biases so gradient checks exercise them.
    for slot in spec.slots(0) {
        for b in &mut p[slot.bias_range()] {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    p
}

/// Scalar objective `sum(seed * output)` for a graph built by `build`.
fn objective<F>(params: &[f64], seed: &Array2<f64>, build: &F) -> f64
where
    F: Fn(&mut Tape<'_>) -> NodeId,
{
    let mut tape = Tape::new(params);
    let out = build(&mut tape);
    (tape.value(out) * seed).sum()
}

/// Compares `backward` with central differences on every parameter.
fn check_gradients<F>(params: &[f64], seed: &Array2<f64>, build: F, skip: &[usize])
where
    F: Fn(&mut Tape<'_>) -> NodeId,
{
    let mut tape = Tape::new(params);
    let out = build(&mut tape);
    let grads = backward(&tape, out, seed).unwrap();
    let h = 1e-5;
    let mut probe = params.to_vec();
    for i in 0..params.len() {
        if skip.contains(&i) {
            continue;
        }
        probe[i] = params[i] + h;
        let up = objective(&probe, seed, &build);
        probe[i] = params[i] - h;
        let down = objective(&probe, seed, &build);
        probe[i] = params[i];
        let fd = (up - down) / (2.0 * h);
        let err = (grads[i] - fd).abs() / fd.abs().max(grads[i].abs()).max(1e-4);
        assert!(err <= 1e-4, "param {i}: analytic {} vs fd {fd}", grads[i]);
    }
}

fn random_inputs(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0))
}

#[test]
fn zero_params_give_zero_output() {
    let spec = DenseNetSpec::new(vec![3, 5, 2], false).unwrap();
    let params = vec![0.0; spec.param_count()];
    assert_eq!(forward(&spec, &params, &[1.0, -7.0, 2.5], None).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn single_affine_layer() {
    let spec = DenseNetSpec::new(vec![1, 1], false).unwrap();
    assert_eq!(forward(&spec, &[2.0, -1.0], &[3.0], None).unwrap(), vec![5.0]);
}

#[test]
fn relu_kills_negative_preactivation() {
    let spec = DenseNetSpec::new(vec![1, 1, 1], false).unwrap();
    assert_eq!(forward(&spec, &[1.0, 0.0, 1.0, 0.0], &[-4.0], None).unwrap(), vec![0.0]);
    assert_eq!(forward(&spec, &[1.0, 0.0, 1.0, 0.0], &[4.0], None).unwrap(), vec![4.0]);
}

#[test]
fn dimension_errors() {
    let spec = DenseNetSpec::new(vec![2, 1], false).unwrap();
    assert!(matches!(
        forward(&spec, &[0.0; 3], &[1.0], None),
        Err(Error::DimensionMismatch { expected: 2, got: 1 })
    ));
    assert!(forward(&spec, &[0.0; 2], &[1.0, 2.0], None).is_err());
    assert!(DenseNetSpec::new(vec![2], false).is_err());
    assert!(DenseNetSpec::new(vec![2, 0, 1], false).is_err());
}

#[test]
fn seed_shape_is_checked() {
    let spec = DenseNetSpec::new(vec![1, 2], false).unwrap();
    let params = vec![0.5; spec.param_count()];
    let mut tape = Tape::new(&params);
    let x = tape.leaf_rows(&[&[1.0]]).unwrap();
    let y = tape.dense(&spec, 0, x).unwrap();
    assert!(backward(&tape, y, &Array2::ones((1, 3))).is_err());
}

#[test]
fn linear_gradient_is_the_input() {
    let spec = DenseNetSpec::new(vec![3, 1], false).unwrap();
    let params = vec![0.3, -0.2, 0.9, 0.1];
    let mut tape = Tape::new(&params);
    let x = tape.leaf_rows(&[&[1.5, -2.0, 4.0]]).unwrap();
    let y = tape.dense(&spec, 0, x).unwrap();
    let g = backward(&tape, y, &Array2::ones((1, 1))).unwrap();
    assert_eq!(g, vec![1.5, -2.0, 4.0, 1.0]);
}

#[test]
fn layout_and_counts() {
    let spec = DenseNetSpec::new(vec![3, 45, 45, 45, 45, 45, 45, 9], false).unwrap();
    assert_eq!(spec.hidden_units(), 270);
    assert_eq!(spec.param_count(), 4 * 45 + 5 * 46 * 45 + 46 * 9);
    let trunk = DenseNetSpec::new(vec![3, 45, 45], true).unwrap();
    assert_eq!(trunk.hidden_units(), 90);
    let slots = spec.slots(10);
    assert_eq!(slots[0].offset, 10);
    assert_eq!(slots[1].offset, 10 + 4 * 45);
    let total: usize = slots.iter().map(LayerSlot::len).sum();
    assert_eq!(total, spec.param_count());
}

#[test]
fn glorot_init_is_bounded_and_seeded() {
    let spec = DenseNetSpec::new(vec![4, 6, 2], false).unwrap();
    let a = random_params(&spec, 3);
    let b = random_params(&spec, 3);
    assert_eq!(a, b);
    let mut p = vec![1.0; spec.param_count()];
    spec.init(&mut ChaCha8Rng::seed_from_u64(1), &mut p).unwrap();
    for slot in spec.slots(0) {
        let limit = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
        assert!(p[slot.weight_range()].iter().all(|w| w.abs() <= limit));
        assert!(p[slot.bias_range()].iter().all(|&b| b == 0.0));
    }
}

#[test]
fn param_store_segments() {
    let mut store = ParamStore::new();
    assert_eq!(store.push_segment("trunk", 4), 0);
    assert_eq!(store.push_segment("head", 3), 4);
    assert_eq!(store.len(), 7);
    let head = store.segment("head").unwrap().clone();
    store.slice_mut(&head).fill(2.0);
    assert_eq!(store.values(), &[0.0, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0]);
    assert!(store.assign(vec![0.0; 6]).is_err());
}

#[test]
fn two_layer_gradients_match_finite_differences() {
    let spec = DenseNetSpec::new(vec![3, 8, 2], false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..100 {
        let params = random_params(&spec, trial);
        let x = random_inputs(&mut rng, 1, 3);
        let seed = random_inputs(&mut rng, 1, 2);
        check_gradients(
            &params,
            &seed,
            |t| {
                let leaf = t.leaf(x.clone());
                t.dense(&spec, 0, leaf).unwrap()
            },
            &[],
        );
    }
}

#[test]
fn projection_heads_match_finite_differences() {
    let spec = DenseNetSpec::new(vec![2, 6, 4], false).unwrap();
    let sets = [
        ConvexOutputSet::Interval { lo: 0.7, hi: 1.0 },
        ConvexOutputSet::HalfLineAbove { lo: -1.0 },
        ConvexOutputSet::HalfLineBelow { hi: 2.0 },
        ConvexOutputSet::score_not_highest(vec![1, 3], 1e-4),
        ConvexOutputSet::Unconstrained,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..20 {
        let params = random_params(&spec, 100 + trial);
        let x = random_inputs(&mut rng, 5, 2);
        let seed = random_inputs(&mut rng, 5, 4);
        for set in &sets {
            check_gradients(
                &params,
                &seed,
                |t| {
                    let leaf = t.leaf(x.clone());
                    let raw = t.dense(&spec, 0, leaf).unwrap();
                    t.project(raw, set).unwrap()
                },
                &[],
            );
        }
    }
}

#[test]
fn tape_projection_matches_direct_projection() {
    let spec = DenseNetSpec::new(vec![2, 6, 4], false).unwrap();
    let params = random_params(&spec, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sets = [
        ConvexOutputSet::Interval { lo: -0.5, hi: 0.25 },
        ConvexOutputSet::HalfLineAbove { lo: 3.0 },
        ConvexOutputSet::HalfLineBelow { hi: -3.0 },
        ConvexOutputSet::score_not_highest(vec![0, 2], 1e-4),
    ];
    for _ in 0..50 {
        let x = random_inputs(&mut rng, 1, 2);
        let raw = forward(&spec, &params, x.row(0).as_slice().unwrap(), None).unwrap();
        for set in &sets {
            let mut tape = Tape::new(&params);
            let leaf = tape.leaf(x.clone());
            let r = tape.dense(&spec, 0, leaf).unwrap();
            let y = tape.project(r, set).unwrap();
            assert_eq!(tape.value(y).row(0).to_vec(), set.project(&raw).unwrap());
        }
    }
}

#[test]
fn min_ties_route_gradient_to_lowest_index() {
    let params = [0.0; 0];
    let mut tape = Tape::new(&params);
    let x = tape.leaf_rows(&[&[2.0, 1.0, 1.0, 5.0]]).unwrap();
    let m = tape.min_excluding(x, &[3]).unwrap();
    assert_eq!(tape.value(m)[[0, 0]], 1.0);
    let y = tape.replace_cols(x, m, &[3], -0.5).unwrap();
    assert_eq!(tape.value(y).row(0).to_vec(), vec![2.0, 1.0, 1.0, 0.5]);
}

#[test]
fn weighted_combination_gradients_match_finite_differences() {
    // Two constraints, three heads sharing a trunk, proximity params at the end.
    let trunk = DenseNetSpec::new(vec![2, 5], true).unwrap();
    let head = DenseNetSpec::new(vec![5, 4, 2], false).unwrap();
    let mut store = ParamStore::new();
    let t_off = store.push_segment("trunk", trunk.param_count());
    let h_offs: Vec<usize> = (0..3)
        .map(|k| store.push_segment(format!("head{k}"), head.param_count()))
        .collect();
    let p_off = store.push_segment("proximity", 4);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for v in store.values_mut() {
        *v = rng.random_range(-0.8..0.8);
    }
    let codomains = [
        ConvexOutputSet::Unconstrained,
        ConvexOutputSet::Interval { lo: 0.0, hi: 1.0 },
        ConvexOutputSet::HalfLineAbove { lo: 0.5 },
    ];
    let keys = [[false, false], [true, false], [false, true]];
    let rows = 6;
    let x = random_inputs(&mut rng, rows, 2);
    // Zero distances on some rows exercise the exact-zero proximity branch.
    let dists: Vec<Vec<f64>> = (0..2)
        .map(|_| {
            (0..rows)
                .map(|r| if r % 3 == 0 { 0.0 } else { rng.random_range(0.05..2.0) })
                .collect()
        })
        .collect();
    let seed = random_inputs(&mut rng, rows, 2);
    let params = store.values().to_vec();
    let build = |t: &mut Tape<'_>| {
        let leaf = t.leaf(x.clone());
        let latent = t.dense(&trunk, t_off, leaf).unwrap();
        let s: Vec<NodeId> = (0..2)
            .map(|i| t.proximity(p_off + 2 * i, dists[i].clone()).unwrap())
            .collect();
        let mut weights = Vec::new();
        let mut preds = Vec::new();
        for (k, key) in keys.iter().enumerate() {
            let raw = t.dense(&head, h_offs[k], latent).unwrap();
            preds.push(t.project(raw, &codomains[k]).unwrap());
            let factors = key.iter().enumerate().map(|(i, &b)| (s[i], b)).collect();
            weights.push(t.overlap_weight(factors, rows).unwrap());
        }
        t.combine(weights, preds, vec![0; rows]).unwrap()
    };
    check_gradients(&params, &seed, build, &[]);
}

#[test]
fn combine_falls_back_when_weights_vanish() {
    let params = [0.0; 0];
    let mut tape = Tape::new(&params);
    let w0 = tape.leaf_rows(&[&[0.0], &[0.5]]).unwrap();
    let w1 = tape.leaf_rows(&[&[0.0], &[0.5]]).unwrap();
    let p0 = tape.leaf_rows(&[&[0.2], &[0.2]]).unwrap();
    let p1 = tape.leaf_rows(&[&[0.4], &[0.4]]).unwrap();
    let y = tape.combine(vec![w0, w1], vec![p0, p1], vec![1, 1]).unwrap();
    assert_eq!(tape.value(y)[[0, 0]], 0.4);
    assert!((tape.value(y)[[1, 0]] - 0.3).abs() < 1e-15);
}

#[test]
fn recording_does_not_change_values_and_is_deterministic() {
    let spec = DenseNetSpec::new(vec![3, 7, 7, 2], false).unwrap();
    let params = random_params(&spec, 8);
    let x = [0.3, -1.2, 0.8];
    let plain = forward(&spec, &params, &x, None).unwrap();
    let mut tape = Tape::new(&params);
    let recorded = forward(&spec, &params, &x, Some(&mut tape)).unwrap();
    assert_eq!(plain, recorded);
    assert!(tape.len() > 0);
    let again = forward(&spec, &params, &x, None).unwrap();
    assert_eq!(plain.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), again.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    let other = params.clone();
    let mut wrong = Tape::new(&other);
    assert!(forward(&spec, &params, &x, Some(&mut wrong)).is_err());
}

#[test]
fn batched_rows_match_single_rows() {
    let spec = DenseNetSpec::new(vec![2, 9, 3], false).unwrap();
    let params = random_params(&spec, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random_inputs(&mut rng, 10, 2);
    let mut tape = Tape::new(&params);
    let leaf = tape.leaf(x.clone());
    let y = tape.dense(&spec, 0, leaf).unwrap();
    for r in 0..10 {
        let single = forward(&spec, &params, x.row(r).as_slice().unwrap(), None).unwrap();
        for (a, b) in single.iter().zip(tape.value(y).row(r)) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }
}
