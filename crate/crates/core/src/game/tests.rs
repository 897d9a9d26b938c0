use super::*;
use crate::channel::{SequenceReceiver, SequenceSender, SymbolReceiver, SymbolSender, VocabSpec};
use crate::data::{GameDataset, TableDataset, TableLabels};
use crate::nn::{Activation, CellKind, Linear, Mlp, OptimizerConfig};
use crate::rng;

fn ce_loss(batch: &GameBatch, output: &Tensor, _: &Message) -> Result<LossOutput> {
    let Labels::Classes(c) = &batch.labels else {
        return Err(Error::invalid("classes expected"));
    };
    let per_sample = output.log_softmax(1)?.pick(c)?.neg()?;
    let values = output.values();
    let n = output.shape()[1];
    let acc = values
        .chunks(n)
        .zip(c)
        .map(|(row, &k)| (tensor::argmax(row) == k) as u8 as f64)
        .collect();
    Ok(LossOutput {
        per_sample,
        aux: BTreeMap::from([("accuracy".to_string(), acc)]),
    })
}

fn symbol_game(mode: ChannelMode, seed: u64) -> Game {
    let mut r = rng::stream(seed, rng::PARAMS, 0);
    let s = Mlp::new(&[4, 8, 4], Activation::Tanh, &mut r).unwrap();
    let sender = SymbolSender::new(Box::new(s), 4, mode).unwrap();
    let core = Linear::new(6, 4, &mut r).unwrap();
    let receiver = SymbolReceiver::new(Box::new(core), 4, 6, &mut r).unwrap();
    Game::new(Box::new(sender), Box::new(receiver), Box::new(ce_loss)).unwrap()
}

fn sequence_game(mode: ChannelMode, seed: u64) -> Game {
    let mut r = rng::stream(seed, rng::PARAMS, 0);
    let vocab = VocabSpec::new(4, 3).unwrap();
    let s = Linear::new(4, 5, &mut r).unwrap();
    let sender = SequenceSender::new(Box::new(s), CellKind::Gru, 3, 5, vocab, mode, &mut r).unwrap();
    let core = Linear::new(5, 4, &mut r).unwrap();
    let receiver = SequenceReceiver::new(Box::new(core), CellKind::Gru, 3, 5, vocab, &mut r).unwrap();
    Game::new(Box::new(sender), Box::new(receiver), Box::new(ce_loss)).unwrap()
}

fn identity_data() -> TableDataset {
    let mut x = vec![0.0; 16];
    for i in 0..4 {
        x[i * 5] = 1.0;
    }
    TableDataset::new(4, x, TableLabels::Classes(vec![0, 1, 2, 3])).unwrap()
}

fn all_games(seed: u64) -> Vec<Game> {
    let modes = [ChannelMode::gs(1.0), ChannelMode::Reinforce];
    modes
        .iter()
        .flat_map(|&m| [symbol_game(m, seed), sequence_game(m, seed)])
        .collect()
}

#[test]
fn per_sample_loss_has_batch_entries() {
    let data = identity_data();
    let batch = data.batch(&[0, 1, 2], 0).unwrap();
    for mut game in all_games(1) {
        let (obj, it) = game.forward(&batch, &mut rng::stream(1, rng::SAMPLING, 0)).unwrap();
        assert_eq!(obj.shape(), &[] as &[usize]);
        assert_eq!(it.loss.len(), 3);
        assert_eq!(it.aux["accuracy"].len(), 3);
        assert_eq!(it.lengths.len(), 3);
        tensor::reset();
    }
}

#[test]
fn zero_loss_gives_zero_gradients_under_gs() {
    let zero = |_: &GameBatch, o: &Tensor, _: &Message| -> Result<LossOutput> {
        Ok(LossOutput {
            per_sample: o.sum_axis(1)?.scale(0.0)?,
            aux: BTreeMap::new(),
        })
    };
    let mut r = rng::stream(2, rng::PARAMS, 0);
    let sender = SymbolSender::gs(Box::new(Linear::new(4, 4, &mut r).unwrap()), 4, 1.0).unwrap();
    let receiver = SymbolReceiver::new(Box::new(Linear::new(3, 2, &mut r).unwrap()), 4, 3, &mut r).unwrap();
    let mut game = Game::new(Box::new(sender), Box::new(receiver), Box::new(zero)).unwrap();
    let batch = identity_data().batch(&[0, 1, 2, 3], 0).unwrap();
    let (obj, _) = game.forward(&batch, &mut rng::stream(0, rng::SAMPLING, 0)).unwrap();
    obj.backward().unwrap();
    for (name, p) in game.parameters() {
        assert!(p.grad().unwrap().iter().all(|&g| g == 0.0), "{name}");
    }
}

#[test]
fn mismatched_agents_are_rejected() {
    let mut r = rng::stream(0, rng::PARAMS, 0);
    let sender = SymbolSender::reinforce(Box::new(Linear::new(4, 4, &mut r).unwrap()), 4).unwrap();
    let vocab = VocabSpec::new(4, 2).unwrap();
    let receiver = SequenceReceiver::new(Box::new(Linear::new(3, 2, &mut r).unwrap()), CellKind::Elman, 3, 3, vocab, &mut r);
    let err = Game::new(Box::new(sender), Box::new(receiver.unwrap()), Box::new(ce_loss));
    assert!(matches!(err, Err(Error::ChannelMismatch(_))));
    let sender = SymbolSender::reinforce(Box::new(Linear::new(4, 5, &mut r).unwrap()), 5).unwrap();
    let receiver = SymbolReceiver::new(Box::new(Linear::new(3, 2, &mut r).unwrap()), 4, 3, &mut r).unwrap();
    assert!(Game::new(Box::new(sender), Box::new(receiver), Box::new(ce_loss)).is_err());
}

#[test]
fn forward_is_deterministic() {
    let batch = identity_data().batch(&[3, 1, 0], 0).unwrap();
    for (mut a, mut b) in all_games(5).into_iter().zip(all_games(5)) {
        let (_, ia) = a.forward(&batch, &mut rng::stream(9, rng::SAMPLING, 0)).unwrap();
        let (_, ib) = b.forward(&batch, &mut rng::stream(9, rng::SAMPLING, 0)).unwrap();
        assert_eq!(ia, ib);
        tensor::reset();
    }
}

#[test]
fn evaluation_is_pure() {
    let data = identity_data();
    for game in all_games(6) {
        let before: Vec<Vec<u64>> = game
            .parameters()
            .iter()
            .map(|(_, p)| p.to_vec().iter().map(|v| v.to_bits()).collect())
            .collect();
        let baseline = game.baseline();
        let a = evaluate(&game, &data, 3, 0).unwrap();
        let b = evaluate(&game, &data, 3, 0).unwrap();
        assert_eq!(a, b);
        let after: Vec<Vec<u64>> = game
            .parameters()
            .iter()
            .map(|(_, p)| p.to_vec().iter().map(|v| v.to_bits()).collect())
            .collect();
        assert_eq!(before, after);
        assert_eq!(baseline, game.baseline());
        assert!(!tensor::is_recording() || game.parameters().iter().all(|(_, p)| p.grad().unwrap().iter().all(|&g| g == 0.0)));
    }
}

#[test]
fn single_batch_metrics_equal_batch_values() {
    let data = identity_data();
    let game = symbol_game(ChannelMode::Reinforce, 2);
    let m = evaluate(&game, &data, 10, 0).unwrap();
    let it = game.evaluate_batch(&data.batch(&[0, 1, 2, 3], 0).unwrap()).unwrap();
    assert_eq!(m.loss, it.loss.iter().sum::<f64>() / 4.0);
    assert_eq!(m.aux["accuracy"], it.aux["accuracy"].iter().sum::<f64>() / 4.0);
    assert_eq!(m.count, 4);
}

/// Yields the same batch but a loss that grows each epoch.
struct Worsening(TableDataset);

impl GameDataset for Worsening {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn batch(&self, indices: &[usize], epoch: u64) -> Result<GameBatch> {
        let mut b = self.0.batch(indices, epoch)?;
        b.receiver_input = Some(Tensor::full(&[indices.len(), 1], epoch as f64));
        Ok(b)
    }
}

#[test]
fn patience_stops_after_non_improving_epochs() {
    let grow = |b: &GameBatch, o: &Tensor, _: &Message| -> Result<LossOutput> {
        let r = b.receiver_input.as_ref().unwrap().sum_axis(1)?;
        Ok(LossOutput {
            per_sample: o.sum_axis(1)?.scale(0.0)?.add(&r)?,
            aux: BTreeMap::new(),
        })
    };
    struct Passthrough(Linear);
    impl Module for Passthrough {
        fn parameters(&self) -> NamedParams {
            self.0.parameters()
        }
    }
    impl crate::channel::ReceiverCore for Passthrough {
        fn forward(&self, m: &Tensor, _: Option<&Tensor>) -> Result<Tensor> {
            self.0.forward(m)
        }
    }
    let mut r = rng::stream(0, rng::PARAMS, 0);
    let sender = SymbolSender::gs(Box::new(Linear::new(4, 4, &mut r).unwrap()), 4, 1.0).unwrap();
    let core = Passthrough(Linear::new(3, 2, &mut r).unwrap());
    let receiver = SymbolReceiver::new(Box::new(core), 4, 3, &mut r).unwrap();
    let game = Game::new(Box::new(sender), Box::new(receiver), Box::new(grow)).unwrap();
    let mut config = TrainConfig::new(20, 4, OptimizerConfig::adam(0.01), 0);
    config.early_stopping = Some(EarlyStopping::on_loss(2));
    let data = Worsening(identity_data());
    let mut t = Trainer::new(game, config).unwrap();
    let h = t.fit(&data, Some(&data)).unwrap();
    assert!(h.stopped_early);
    assert_eq!(h.epochs(), 3);
}

#[test]
fn empty_training_data_is_an_error() {
    let game = symbol_game(ChannelMode::gs(1.0), 0);
    let empty = TableDataset::new(4, vec![], TableLabels::Classes(vec![])).unwrap();
    let mut t = Trainer::new(game, TrainConfig::new(3, 2, OptimizerConfig::adam(0.01), 0)).unwrap();
    assert!(t.fit(&empty, None).is_err());
}

#[test]
fn non_finite_loss_aborts_with_a_diagnostic() {
    let nan = |_: &GameBatch, o: &Tensor, _: &Message| -> Result<LossOutput> {
        Ok(LossOutput {
            per_sample: o.sum_axis(1)?.scale(f64::NAN)?,
            aux: BTreeMap::new(),
        })
    };
    let mut r = rng::stream(0, rng::PARAMS, 0);
    let sender = SymbolSender::reinforce(Box::new(Linear::new(4, 4, &mut r).unwrap()), 4).unwrap();
    let receiver = SymbolReceiver::new(Box::new(Linear::new(3, 2, &mut r).unwrap()), 4, 3, &mut r).unwrap();
    let game = Game::new(Box::new(sender), Box::new(receiver), Box::new(nan)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut config = TrainConfig::new(3, 2, OptimizerConfig::adam(0.01), 0);
    config.out_dir = Some(dir.path().to_path_buf());
    let mut t = Trainer::new(game, config).unwrap();
    let err = t.fit(&identity_data(), None).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, batch: 1 }));
    let log = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    assert!(log.contains("non_finite_loss"));
}

fn trained(epochs: usize, seed: u64, mode: ChannelMode) -> Trainer {
    let mut config = TrainConfig::new(epochs, 3, OptimizerConfig::adam(0.05), seed);
    config.shuffle = true;
    let game = sequence_game(mode, seed);
    let mut t = Trainer::new(game, config).unwrap();
    t.fit(&identity_data(), Some(&identity_data())).unwrap();
    t
}

#[test]
fn same_seed_same_history() {
    for mode in [ChannelMode::gs(1.0), ChannelMode::Reinforce] {
        let a = trained(4, 3, mode);
        let b = trained(4, 3, mode);
        assert_eq!(a.history(), b.history());
    }
}

#[test]
fn resume_matches_uninterrupted_training() {
    for mode in [ChannelMode::gs(1.0), ChannelMode::Reinforce] {
        let full = trained(5, 8, mode);
        let first = trained(3, 8, mode);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mid.ckpt");
        first.checkpoint().save(&path).unwrap();
        let ckpt = Checkpoint::load(&path).unwrap();
        let mut config = TrainConfig::new(5, 3, OptimizerConfig::adam(0.05), 8);
        config.shuffle = true;
        let mut resumed = Trainer::resume(sequence_game(mode, 99), config, &ckpt).unwrap();
        resumed.fit(&identity_data(), Some(&identity_data())).unwrap();
        let bits = |t: &Trainer| -> Vec<u64> {
            t.game()
                .parameters()
                .iter()
                .flat_map(|(_, p)| p.to_vec())
                .map(f64::to_bits)
                .collect()
        };
        assert_eq!(bits(&full), bits(&resumed));
        assert_eq!(full.game().baseline(), resumed.game().baseline());
        assert_eq!(&full.history().records[6..], resumed.history().records.as_slice());
    }
}

#[test]
fn trainer_writes_logs_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = TrainConfig::new(4, 2, OptimizerConfig::adam(0.01), 1);
    config.checkpoint_every = 2;
    config.out_dir = Some(dir.path().to_path_buf());
    let mut t = Trainer::new(symbol_game(ChannelMode::gs(1.0), 1), config).unwrap();
    t.fit(&identity_data(), Some(&identity_data())).unwrap();
    let log = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 8);
    let first: EpochRecord = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!((first.epoch, first.split.as_str()), (1, "train"));
    for name in ["epoch_0002.ckpt", "epoch_0004.ckpt", "final.ckpt"] {
        assert!(dir.path().join("checkpoints").join(name).exists(), "{name}");
    }
    let timing = std::fs::read_to_string(dir.path().join("timing.jsonl")).unwrap();
    assert_eq!(timing.lines().count(), 4);
}

#[test]
fn checkpoint_from_another_architecture_is_rejected() {
    let t = trained(1, 0, ChannelMode::gs(1.0));
    let ckpt = t.checkpoint();
    let game = symbol_game(ChannelMode::gs(1.0), 0);
    let res = Trainer::resume(game, TrainConfig::new(2, 2, OptimizerConfig::adam(0.1), 0), &ckpt);
    assert!(matches!(res, Err(Error::ArchitectureMismatch(_))));
}
