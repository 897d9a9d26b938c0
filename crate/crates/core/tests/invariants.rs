use std::path::Path;

use emcomm::analysis::{enumerate_messages, message_stats};
use emcomm::channel::{
    canonicalize, gs_sample, ChannelMode, ChannelSpec, Decoding, Message, RunningMeanBaseline, VocabSpec,
};
use emcomm::data::{AttributeValueDataset, GameDataset};
use emcomm::game::{Checkpoint, EarlyStopState, Game, GameBatch, Labels, NamedArray};
use emcomm::nn::{Activation, CellKind, Linear, Module, OptimizerConfig, RnnCell};
use emcomm::rng::{self, RngState};
use emcomm::tensor::{self, Tensor};
use emcomm::zoo::{build_reconstruction_game, DiscriminationDataset, ReconstructionSpec};
use proptest::prelude::*;

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0f64..3.0, n)
}

fn cell_kind() -> impl Strategy<Value = CellKind> {
    prop_oneof![Just(CellKind::Elman), Just(CellKind::Gru), Just(CellKind::Lstm)]
}

fn sequence_game(kind: CellKind, mode: ChannelMode, v: usize, l: usize, seed: u64) -> Game {
    let spec = ReconstructionSpec {
        dim: 4,
        sender_layers: vec![],
        receiver_layers: vec![],
        activation: Activation::Tanh,
        channel: ChannelSpec::sequence(mode, VocabSpec::new(v, l).unwrap(), kind, 3, 5),
        blocks: 1,
    };
    build_reconstruction_game(&spec, &mut rng::stream(seed, rng::PARAMS, 0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stored_values_match_shape(rows in 0usize..5, cols in 0usize..5, extra in 1usize..3) {
        let n = rows * cols;
        prop_assert!(Tensor::new(vec![0.5; n], &[rows, cols]).is_ok());
        prop_assert!(Tensor::new(vec![0.5; n + extra], &[rows, cols]).is_err());
    }

    #[test]
    fn gradients_match_shapes_and_skip_constants(a in values(6), b in values(6)) {
        let p = Tensor::new(a, &[2, 3]).unwrap().requires_grad();
        let c = Tensor::new(b, &[2, 3]).unwrap();
        p.mul(&c).unwrap().tanh().unwrap().sum_all().unwrap().backward().unwrap();
        prop_assert_eq!(p.grad().unwrap().len(), p.numel());
        prop_assert!(c.grad().is_none());
        prop_assert!(!c.is_tracked());
        // the tape is single use
        prop_assert!(p.mul(&c).unwrap().sum_all().unwrap().backward().is_ok());
    }

    #[test]
    fn cell_parameters_fit_sizes(kind in cell_kind(), input in 1usize..5, hidden in 1usize..5, batch in 1usize..4) {
        let cell = RnnCell::new(kind, input, hidden, &mut rng::stream(0, rng::PARAMS, 0)).unwrap();
        for (name, p) in cell.parameters() {
            let s = p.shape();
            let ok = (name.ends_with("w_input") && s == [hidden, input])
                || (name.ends_with("w_hidden") && s == [hidden, hidden])
                || (name.ends_with("bias") && s == [hidden]);
            prop_assert!(ok, "{} has shape {:?}", name, s);
        }
        let state = cell.step(&Tensor::zeros(&[batch, input]), &cell.zero_state(batch)).unwrap();
        prop_assert_eq!(state.h.shape(), &[batch, hidden]);
        prop_assert_eq!(state.c.is_some(), kind == CellKind::Lstm);
    }

    #[test]
    fn adam_moments_mirror_parameters(sizes in proptest::collection::vec(1usize..6, 1..4), steps in 0usize..4) {
        let params: Vec<(String, Tensor)> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| (format!("p{i}"), Tensor::full(&[n], 0.3).requires_grad()))
            .collect();
        let mut opt = OptimizerConfig::adam(0.01).build(&params);
        for _ in 0..steps {
            params.iter().for_each(|(_, p)| p.set_grad(&vec![1.0; p.numel()]).unwrap());
            opt.step(&params).unwrap();
        }
        let state = opt.state(&params);
        prop_assert_eq!(state.step, steps as u64);
        for ((_, p), (_, m)) in params.iter().zip(&state.first_moments) {
            prop_assert_eq!(p.numel(), m.len());
        }
        for ((_, p), (_, v)) in params.iter().zip(&state.second_moments) {
            prop_assert_eq!(p.numel(), v.len());
        }
    }

    #[test]
    fn vocab_bounds(size in 0usize..6, max_len in 0usize..4) {
        let v = VocabSpec::new(size, max_len);
        prop_assert_eq!(v.is_ok(), size >= 2 && max_len >= 1);
        if let Ok(v) = v {
            prop_assert_eq!(v.eos(), 0);
        }
    }

    #[test]
    fn sampled_messages_respect_bounds(kind in cell_kind(), v in 2usize..6, l in 1usize..5, seed: u64) {
        let game = sequence_game(kind, ChannelMode::Reinforce, v, l, seed);
        let input = Tensor::new((0..12).map(|i| (i % 5) as f64 / 5.0).collect(), &[3, 4]).unwrap();
        let mut r = rng::stream(seed, rng::SAMPLING, 0);
        let sent = game.sender().send(&input, Decoding::Sample(&mut r)).unwrap();
        let Message::Discrete(m) = sent else {
            panic!("REINFORCE senders emit discrete messages");
        };
        prop_assert!(m.lengths().iter().all(|&n| (1..=l).contains(&n)));
        prop_assert!(m.log_prob.to_vec().iter().all(|&lp| lp <= 0.0));
        let canonical = canonicalize(m.symbols(), l);
        prop_assert_eq!(m.symbols(), canonical.as_slice());
        tensor::reset();
    }

    #[test]
    fn relaxed_rows_sum_to_one(logits in values(12), t in 0.01f64..5.0, seed: u64) {
        let x = Tensor::new(logits, &[3, 4]).unwrap();
        let y = gs_sample(&x, t, &mut rng::stream(seed, rng::SAMPLING, 0)).unwrap();
        for row in y.to_vec().chunks(4) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn baseline_is_the_running_mean(xs in proptest::collection::vec(-10.0f64..10.0, 0..40)) {
        let mut b = RunningMeanBaseline::default();
        prop_assert_eq!(b.value(), 0.0);
        for &x in &xs {
            b.update(x);
        }
        prop_assert_eq!(b.count, xs.len() as u64);
        if !xs.is_empty() {
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            prop_assert!((b.value() - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
        }
    }

    #[test]
    fn batch_dimensions_must_agree(b in 1usize..5, r in 1usize..5, l in 1usize..5) {
        let s = Tensor::zeros(&[b, 2]);
        let ok = GameBatch::new(s, Some(Tensor::zeros(&[r, 3])), Labels::Classes(vec![0; l])).is_ok();
        prop_assert_eq!(ok, b == r && b == l);
    }

    #[test]
    fn interactions_align_on_the_batch(kind in cell_kind(), b in 1usize..6, seed: u64) {
        let mut game = sequence_game(kind, ChannelMode::gs(1.0), 4, 3, seed);
        let x = Tensor::new((0..b * 4).map(|i| ((i * 7) % 3) as f64 / 2.0).collect(), &[b, 4]).unwrap();
        let batch = GameBatch::new(x.clone(), None, Labels::Targets(x)).unwrap();
        let (_, it) = game.forward(&batch, &mut rng::stream(seed, rng::SAMPLING, 0)).unwrap();
        tensor::reset();
        prop_assert_eq!(it.loss.len(), b);
        prop_assert_eq!(it.lengths.len(), b);
        prop_assert_eq!(it.symbols.len(), b * it.max_len);
        prop_assert_eq!(it.receiver_output.shape[0], b);
        prop_assert!(it.aux.values().all(|v| v.len() == b && v.iter().all(|x| x.is_finite())));
        prop_assert!(it.receiver_output.values.iter().all(|&o| (0.0..=1.0).contains(&o)));
        prop_assert_eq!(it.receiver_output.shape[1], 4);
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(xs in proptest::collection::vec(any::<f64>(), 1..20), epoch: u64, n: u64, seed: u64) {
        let array = |name: &str| NamedArray { name: name.into(), shape: vec![xs.len()], values: xs.clone() };
        let ck = Checkpoint {
            epoch,
            params: vec![array("a"), array("b.c")],
            optimizer_step: n,
            first_moments: vec![array("a")],
            second_moments: vec![array("a")],
            baseline: RunningMeanBaseline { count: n, mean: xs[0] },
            rng: RngState::capture(&rng::stream(seed, rng::SAMPLING, 0)),
            early_stop: EarlyStopState { best: xs.last().copied(), bad_epochs: 3 },
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes(), Path::new("mem")).unwrap();
        prop_assert_eq!(back.to_bytes(), ck.to_bytes());
        let bits = |c: &Checkpoint| c.params[0].values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&ck));
    }

    #[test]
    fn discrimination_instances_have_one_target(n_items in 5usize..15, k in 2usize..5, seed: u64, epoch in 0u64..3) {
        let items: Vec<f64> = (0..n_items * 2).map(|i| i as f64).collect();
        let data = DiscriminationDataset::new(2, items, k, seed).unwrap();
        let mut positions = std::collections::BTreeSet::new();
        for target in 0..n_items {
            let (candidates, pos) = data.instance(target, epoch);
            prop_assert_eq!(candidates.len(), k);
            prop_assert_eq!(candidates.iter().filter(|&&c| c == target).count(), 1);
            prop_assert_eq!(candidates[pos], target);
            let mut dedup = candidates.clone();
            dedup.sort_unstable();
            dedup.dedup();
            prop_assert_eq!(dedup.len(), k);
            positions.insert(pos);
        }
        // with this many instances the target cannot always sit in one slot
        if n_items >= 10 {
            prop_assert!(positions.len() > 1);
        }
    }

    #[test]
    fn attribute_item_counts(n_attr in 1usize..4, n_val in 2usize..5, seed: u64) {
        let d = AttributeValueDataset::generate(n_attr, n_val, None, &mut rng::stream(seed, rng::DATA, 0)).unwrap();
        prop_assert_eq!(d.dim(), n_attr * n_val);
        prop_assert_eq!(d.len(), n_val.pow(n_attr as u32));
        prop_assert_eq!(d.reconstruction().len(), d.len());
    }

    #[test]
    fn enumerated_messages_cover_each_canonical_once(v in 2usize..5, l in 1usize..4) {
        let all = enumerate_messages(v, l).unwrap();
        prop_assert_eq!(all.len(), v.pow(l as u32) * l);
        let canonical = canonicalize(&all, l);
        let mut distinct: Vec<&[usize]> = canonical.chunks(l).collect();
        distinct.sort_unstable();
        distinct.dedup();
        // messages of length k < l: (v-1)^(k-1) prefixes ending in eos; full-length: (v-1)^(l-1) * v
        let expected: usize = (1..l).map(|k| (v - 1).pow(k as u32 - 1)).sum::<usize>() + (v - 1).pow(l as u32 - 1) * v;
        prop_assert_eq!(distinct.len(), expected);
    }

    #[test]
    fn mean_length_stays_in_range(kind in cell_kind(), l in 1usize..4, seed: u64) {
        let game = sequence_game(kind, ChannelMode::Reinforce, 3, l, seed);
        let x = Tensor::new((0..20).map(|i| (i % 3) as f64 / 2.0).collect(), &[5, 4]).unwrap();
        let batch = GameBatch::new(x.clone(), None, Labels::Targets(x)).unwrap();
        let it = game.evaluate_batch(&batch).unwrap();
        let stats = message_stats(&[it]).unwrap();
        prop_assert!(stats.mean_length >= 1.0 && stats.mean_length <= l as f64);
        prop_assert!(stats.entropy >= 0.0 && stats.entropy <= (stats.unique as f64).log2() + 1e-12);
    }
}

#[test]
fn linear_layers_track_gradients() {
    let layer = Linear::new(3, 2, &mut rng::stream(0, rng::PARAMS, 0)).unwrap();
    assert!(layer.weight.is_param() && layer.bias.is_param());
    assert_eq!(layer.forward(&Tensor::zeros(&[4, 3])).unwrap().shape(), &[4, 2]);
}
