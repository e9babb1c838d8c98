mod common;

use trxos::data::Split;
use trxos::model::{Checkpoint, Confidence, Decision, Model, ModelConfig, PeKind};
use trxos::tensor::Tape;
use trxos::training::{sample_episode, train_step, Adam, TrainConfig};

use common::{random_index, random_sequence, rng, tiny_config};

fn model(cfg: ModelConfig, seed: u64) -> Model {
    Model::init(cfg, seed).unwrap()
}

#[test]
fn support_order_permutes_distances() {
    let cfg = tiny_config(5, 4, 6);
    let m = model(cfg.clone(), 1);
    let mut r = rng(2);
    let query = random_sequence(&cfg, &mut r, "q", "q").to_matrix();
    let support: Vec<_> = (0..4).map(|i| random_sequence(&cfg, &mut r, "s", &format!("s{i}")).to_matrix()).collect();
    let (choice, d) = m.fs_classify(&query, &support).unwrap();
    let perm = [2, 0, 3, 1];
    let shuffled: Vec<_> = perm.iter().map(|&i| support[i].clone()).collect();
    let (choice2, d2) = m.fs_classify(&query, &shuffled).unwrap();
    for (slot, &i) in perm.iter().enumerate() {
        assert_eq!(d2[slot], d[i]);
    }
    assert_eq!(perm[choice2], choice);
}

#[test]
fn two_frame_query_equal_to_support_has_zero_distance() {
    let cfg = tiny_config(2, 3, 5);
    let m = model(cfg.clone(), 3);
    let s = random_sequence(&cfg, &mut rng(4), "a", "a").to_matrix();
    assert!(m.query_class_distance(&s, &s).unwrap().abs() < 1e-12);
    let other = random_sequence(&cfg, &mut rng(5), "b", "b").to_matrix();
    let p = m.fsos_classify(&s, &[other, s.clone()], Confidence::Exp, 0.5).unwrap();
    assert_eq!(p.class, 1);
    assert_eq!(p.outcome, Decision::Accept(1));
}

#[test]
fn prediction_fields_are_consistent() {
    let cfg = tiny_config(4, 3, 6);
    let m = model(cfg.clone(), 6);
    let mut r = rng(7);
    let query = random_sequence(&cfg, &mut r, "q", "q").to_matrix();
    let support: Vec<_> = (0..3).map(|i| random_sequence(&cfg, &mut r, "s", &format!("s{i}")).to_matrix()).collect();
    let p = m.fsos_classify(&query, &support, Confidence::Discriminator, 0.5).unwrap();
    assert!((p.fs_scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let best = p.fs_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(p.fs_scores[p.class], best);
    assert!(p.os_score > 0.0 && p.os_score < 1.0);
    let direct = m.discriminator_score(&query, &support[p.class]).unwrap();
    assert!((direct - p.os_score).abs() < 1e-12);
    let e = m.fsos_classify(&query, &support, Confidence::Exp, 0.5).unwrap();
    assert_eq!(e.class, p.class);
    assert_eq!(e.os_score, (-p.distances[p.class]).exp());
}

#[test]
fn unit_threshold_always_rejects() {
    let cfg = tiny_config(3, 3, 4);
    let m = model(cfg.clone(), 8);
    let mut r = rng(9);
    for _ in 0..20 {
        let q = random_sequence(&cfg, &mut r, "q", "q").to_matrix();
        let s = vec![q.clone(), random_sequence(&cfg, &mut r, "s", "s").to_matrix()];
        for conf in [Confidence::Discriminator, Confidence::Exp] {
            assert_eq!(m.fsos_classify(&q, &s, conf, 1.0).unwrap().outcome, Decision::Reject);
        }
    }
    let q = random_sequence(&cfg, &mut r, "q", "q").to_matrix();
    assert!(m.fsos_classify(&q, &[q.clone()], Confidence::Exp, 1.5).is_err());
    assert!(m.fsos_classify(&q, &[], Confidence::Exp, 0.5).is_err());
}

#[test]
fn checkpoint_file_reproduces_inference() {
    let cfg = tiny_config(4, 3, 6);
    let m = model(cfg.clone(), 10);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    Checkpoint::from_model(&m, 42).save(&path).unwrap();
    let ck = Checkpoint::load(&path).unwrap();
    assert_eq!(ck.step, 42);
    let back = ck.to_model().unwrap();
    let mut r = rng(11);
    let q = random_sequence(&cfg, &mut r, "q", "q").to_matrix();
    let s: Vec<_> = (0..3).map(|i| random_sequence(&cfg, &mut r, "s", &format!("s{i}")).to_matrix()).collect();
    let a = m.fsos_classify(&q, &s, Confidence::Discriminator, 0.5).unwrap();
    let b = back.fsos_classify(&q, &s, Confidence::Discriminator, 0.5).unwrap();
    assert_eq!(a, b);
    assert!(Checkpoint::load(&dir.path().join("missing")).is_err());
}

#[test]
fn wrong_sequence_shape_is_rejected() {
    let cfg = tiny_config(4, 3, 6);
    let m = model(cfg, 12);
    let other = tiny_config(5, 3, 6);
    let s = random_sequence(&other, &mut rng(1), "a", "a").to_matrix();
    assert!(m.query_class_distance(&s, &s).is_err());
}

#[test]
fn positional_table_trains_only_when_learned() {
    for pe in [PeKind::Sinusoidal, PeKind::Learned] {
        let cfg = ModelConfig { pe, ..tiny_config(4, 3, 6) };
        let m = model(cfg.clone(), 13);
        let tape = Tape::new();
        assert_eq!(m.tracked(&tape).vars()[7].is_tracked(), pe == PeKind::Learned);

        let config = TrainConfig { way: 2, queries: 3, model: cfg.clone(), ..Default::default() };
        let data = random_index(&cfg, 4, 3, Split::Train, 14);
        let mut trained = m.clone();
        let mut opt = Adam::new(config.optimizer, trained.params());
        let mut r = rng(15);
        let batch = vec![sample_episode(&data, 2, 3, &mut r).unwrap()];
        train_step(&mut trained, &batch, &mut opt, &config, 0, &mut r).unwrap();
        let before = m.params().tensors()[7].clone();
        let after = trained.params().tensors()[7].clone();
        assert_eq!(before == after, pe == PeKind::Sinusoidal, "{pe:?}");
        assert_ne!(m.params().tensors()[0], trained.params().tensors()[0]);
    }
}
