//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use trxos::data::{
    center_pelvis, preprocess::preprocess, subsample_indices, validate_sequence, Expectations, SkeletonSequence,
    Split,
};
use trxos::eval::{
    classify_task, comparison_csv, compare_baseline, fs_accuracy, random_baseline, rep_rng, run_protocol_on,
    EvalTask, Method, ProtocolConfig, ScoreTable,
};
use trxos::model::{decide, predict, Checkpoint, Confidence, Decision, Model, Network, PairSet};
use trxos::tensor::gradient_check;
use trxos::training::{
    batch_loss, reports_csv, train_loop, Episode, OsMean, OsTerm, TrainConfig, Trainer,
};

use common::oracle::Weights;
use common::{random_matrix, random_sequence, rng, tiny_config};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let cfg = tiny_config(3, 4, 8);
    let model = Model::init(cfg.clone(), 11).map_err(|e| e.to_string())?;
    let mut r = rng(12);
    // two support classes; known queries are perturbed copies of the supports
    let support = vec![random_sequence(&cfg, &mut r, "a", "a0"), random_sequence(&cfg, &mut r, "b", "b0")];
    let known = (0..2)
        .map(|i| {
            let mut data = support[i].data().to_vec();
            for v in data.iter_mut().skip(3) {
                *v += r.random_range(-0.05..0.05);
            }
            let s = SkeletonSequence::new(3, 4, data, support[i].class_label.clone(), format!("q{i}")).unwrap();
            (std::sync::Arc::new(s), i)
        })
        .collect();
    let pool = (0..3).map(|i| random_sequence(&cfg, &mut r, "c", &format!("c{i}"))).collect();
    let episode = Episode::new(support, vec!["a".into(), "b".into()], known, pool).map_err(|e| e.to_string())?;
    let batch = [episode];

    let tape = trxos::tensor::Tape::new();
    let z = batch_loss(&model.frozen(&tape), &batch, 1.0, OsMean::Terms, &mut rng(99))
        .map_err(|e| e.to_string())?
        .z;
    if z == 0 {
        return Err("constructed episode has z = 0".into());
    }
    let params: Vec<_> = model.params().tensors().into_iter().cloned().collect();
    let pairs = PairSet::new(cfg.frames);
    let report = gradient_check(
        |_tape, vars| {
            let net = Network::from_vars(&cfg, &pairs, vars);
            Ok(batch_loss(&net, &batch, 1.0, OsMean::Terms, &mut rng(99))?.total)
        },
        &params,
        1e-6,
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        report.max_rel_error <= 1e-4 && elapsed < Duration::from_secs(30),
        format!(
            "F=3 J=4 D=8 K=2 z={z}: max rel error {:.2e} over {} coordinates (tol 1e-4), {:.1?} (limit 30 s)",
            report.max_rel_error, report.coordinates, elapsed
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut r = rng(2024);
    let mut worst = [0.0f64; 4];
    for instance in 0..100 {
        let d = r.random_range(2..6);
        let mut cfg = tiny_config(r.random_range(2..6), r.random_range(1..4), d);
        cfg.query_dim = r.random_range(2..6);
        cfg.key_dim = cfg.query_dim;
        cfg.value_dim = r.random_range(1..6);
        cfg.disc_reduced_dim = r.random_range(1..4);
        cfg.disc_hidden = None;
        let model = Model::init(cfg.clone(), instance).map_err(|e| e.to_string())?;
        let oracle = Weights::new(&cfg, model.params());
        let width = cfg.joints * 3;

        let frame = random_matrix(1, width, &mut r);
        let got = model.embed_frame(frame.data()).map_err(|e| e.to_string())?;
        let want = oracle.embed_frame(frame.data());
        worst[0] = worst[0].max(max_diff(&got, &want));

        let m = r.random_range(1..6);
        let qp = random_matrix(2, d, &mut r);
        let sp = random_matrix(m * 2, d, &mut r);
        let sp3 = sp.clone().reshape(vec![m, 2, d]).unwrap();
        let got = model.attention_prototype(&qp, &sp3).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<f64>> = sp.data().chunks(2 * d).map(<[f64]>::to_vec).collect();
        let want = oracle.attention_prototype(qp.data(), &rows);
        worst[1] = worst[1].max(max_diff(&got, &want));

        let q = random_matrix(cfg.frames, width, &mut r);
        let s = random_matrix(cfg.frames, width, &mut r);
        let got = model.query_class_distance(&q, &s).map_err(|e| e.to_string())?;
        worst[2] = worst[2].max((got - oracle.distance(q.data(), s.data())).abs());

        let got = model.discriminator_score(&q, &s).map_err(|e| e.to_string())?;
        worst[3] = worst[3].max((got - oracle.discriminator_score(q.data(), s.data())).abs());
    }
    check(
        worst.iter().all(|w| *w <= 1e-10),
        format!(
            "100 instances, max |diff| embed_frame {:.1e}, attention_prototype {:.1e}, query_class_distance {:.1e}, discriminator_score {:.1e} (tol 1e-10)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn combinatorics() -> Outcome {
    for f in 2..=20usize {
        let set = PairSet::new(f);
        let mut expected = Vec::new();
        for i in 1..=f {
            for j in i + 1..=f {
                expected.push((i, j));
            }
        }
        if set.len() != f * (f - 1) / 2 || set.pairs() != expected.as_slice() {
            return Err(format!("F={f}: {} pairs", set.len()));
        }
    }
    let n16 = PairSet::new(16).len();
    check(n16 == 120, format!("|Π| = F(F−1)/2 for F in 2..=20, F=16 gives {n16}"))
}

fn loss_gating() -> Outcome {
    let cfg = tiny_config(4, 3, 6);
    let model = Model::init(cfg.clone(), 5).map_err(|e| e.to_string())?;
    let mut r = rng(6);
    let support: Vec<_> = (0..3).map(|i| random_sequence(&cfg, &mut r, &format!("k{i}"), &format!("s{i}"))).collect();
    let mats: Vec<_> = support.iter().map(|s| s.to_matrix()).collect();
    let queries: Vec<_> = (0..8).map(|i| random_sequence(&cfg, &mut r, "q", &format!("q{i}"))).collect();
    let choice = |s: &SkeletonSequence| model.fs_classify(&s.to_matrix(), &mats).unwrap().0;
    // half of the queries labelled with their few-shot choice, half with another class
    let known: Vec<_> = queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let c = choice(q);
            (q.clone(), if i % 2 == 0 { c } else { (c + 1) % 3 })
        })
        .collect();
    let labels: Vec<String> = (0..3).map(|i| format!("k{i}")).collect();
    let pool: Vec<_> = (0..10).map(|i| random_sequence(&cfg, &mut r, "u", &format!("u{i}"))).collect();
    let episode = Episode::new(support.clone(), labels.clone(), known.clone(), pool.clone()).map_err(|e| e.to_string())?;

    let tape = trxos::tensor::Tape::new();
    let out = batch_loss(&model.frozen(&tape), &[episode], 1.0, OsMean::Terms, &mut rng(7)).map_err(|e| e.to_string())?;
    let mut expected_terms = Vec::new();
    for (i, (q, y)) in known.iter().enumerate() {
        match out.os_terms[i] {
            OsTerm::Positive { score } => {
                if i % 2 != 0 {
                    return Err(format!("query {i} misclassified but contributed BCE(·,1)"));
                }
                let want = model.discriminator_score(&q.to_matrix(), &mats[*y]).unwrap();
                if (score - want).abs() > 1e-12 {
                    return Err(format!("query {i}: score {score} vs {want}"));
                }
                expected_terms.push(-score.ln());
            }
            OsTerm::Skipped => {
                if i % 2 == 0 {
                    return Err(format!("query {i} FS-correct but skipped"));
                }
            }
            OsTerm::Negative { .. } => return Err(format!("known query {i} scored as negative")),
        }
    }
    let negatives: Vec<f64> = out.os_terms[known.len()..]
        .iter()
        .map(|t| match t {
            OsTerm::Negative { score } => Ok(*score),
            other => Err(format!("unexpected term {other:?} after known queries")),
        })
        .collect::<Result<_, _>>()?;
    expected_terms.extend(negatives.iter().map(|s| -(1.0 - s).ln()));
    let want_os = expected_terms.iter().sum::<f64>() / expected_terms.len() as f64;
    let got_os = out.loss_os.item().unwrap();
    let balanced = negatives.len() == out.z && out.z == 4;

    // every known query misclassified: ℓ_OS = 0
    let wrong: Vec<_> = known.iter().map(|(q, _)| (q.clone(), (choice(q) + 1) % 3)).collect();
    let episode = Episode::new(support.clone(), labels.clone(), wrong, pool).map_err(|e| e.to_string())?;
    let zero = batch_loss(&model.frozen(&tape), &[episode], 1.0, OsMean::Terms, &mut rng(7)).map_err(|e| e.to_string())?;

    // pool smaller than z: all of it is used
    let small: Vec<_> = pool_of(&cfg, 2);
    let episode = Episode::new(support, labels, known, small).map_err(|e| e.to_string())?;
    let short = batch_loss(&model.frozen(&tape), &[episode], 1.0, OsMean::Terms, &mut rng(7)).map_err(|e| e.to_string())?;
    let short_neg = short.os_terms.iter().filter(|t| matches!(t, OsTerm::Negative { .. })).count();

    check(
        balanced
            && (got_os - want_os).abs() < 1e-12
            && zero.z == 0
            && zero.loss_os.item().unwrap() == 0.0
            && short_neg == 2,
        format!(
            "z={} positives / {} negatives, ℓ_OS {:.6} vs BCE closed form {:.6}; all-misclassified ℓ_OS={}; pool of 2 gives {} negatives",
            out.z,
            negatives.len(),
            got_os,
            want_os,
            zero.loss_os.item().unwrap(),
            short_neg
        ),
    )
}

fn pool_of(cfg: &trxos::model::ModelConfig, n: usize) -> Vec<std::sync::Arc<SkeletonSequence>> {
    let mut r = rng(77);
    (0..n).map(|i| random_sequence(cfg, &mut r, "u", &format!("p{i}"))).collect()
}

struct Trained {
    table: ScoreTable,
    episodes: u64,
    elapsed: Duration,
}

const DESK_EPISODES: u64 = 600;

fn desk_scale_model() -> Result<Trained, String> {
    let start = Instant::now();
    let data = common::builtin_index(7);
    let cfg = TrainConfig { episodes: DESK_EPISODES, seed: 3, ..Default::default() };
    let (model, _) = train_loop(&data, &cfg, None).map_err(|e| e.to_string())?;
    let table = ScoreTable::build(&model, &data.split(Split::Test)).map_err(|e| e.to_string())?;
    Ok(Trained { table, episodes: cfg.episodes, elapsed: start.elapsed() })
}

fn desk_scale(t: &Trained) -> Outcome {
    let proto = ProtocolConfig { k: 3, reps: 100, seed: 1, tau: 0.5 };
    let fs: Vec<f64> = (0..proto.reps)
        .map(|rep| {
            let task = EvalTask::sample(&t.table, 3, &mut rep_rng(proto.seed, rep)).unwrap();
            fs_accuracy(&t.table, &task)
        })
        .collect();
    let fs_mean = fs.iter().sum::<f64>() / fs.len() as f64;
    let res = run_protocol_on(&t.table, Method::TrxOs, &proto).map_err(|e| e.to_string())?;
    let random = 1.0 / 4.0;
    check(
        fs_mean >= 0.75 && res.mean >= 2.0 * random && t.elapsed < Duration::from_secs(15 * 60),
        format!(
            "{} episodes: FS acc {:.3} (>= 0.75), FSOS-ACC {:.3} ± {:.3} vs 2 x random {:.3}, {:.0?} (limit 15 min)",
            t.episodes,
            fs_mean,
            res.mean,
            res.std,
            2.0 * random,
            t.elapsed
        ),
    )
}

fn baseline_ordering(t: &Trained) -> Outcome {
    let proto = ProtocolConfig { k: 3, reps: 100, seed: 1, tau: 0.5 };
    let trx = run_protocol_on(&t.table, Method::TrxOs, &proto).map_err(|e| e.to_string())?;
    let exp = run_protocol_on(&t.table, Method::Exp, &proto).map_err(|e| e.to_string())?;
    check(
        trx.mean >= exp.mean,
        format!("k=3: TRX-OS {:.3} ± {:.3}, EXP {:.3} ± {:.3}", trx.mean, trx.std, exp.mean, exp.std),
    )
}

fn decision_rule(t: &Trained) -> Outcome {
    let table = &t.table;
    let mut same_choice = true;
    let mut threshold_ok = true;
    let mut all_rejected = true;
    for rep in 0..50 {
        let mut r = rep_rng(5, rep);
        let task = EvalTask::sample(table, 1 + rep % 3, &mut r).unwrap();
        for q in 0..table.query_count() {
            let (a, s_disc) = table.choose(q, &task.support, false);
            let (b, s_exp) = table.choose(q, &task.support, true);
            same_choice &= a == b;
            for (slot, s) in [(a, s_disc), (b, s_exp)] {
                threshold_ok &= (decide(slot, s, 0.5) == Decision::Accept(slot)) == (s > 0.5);
            }
        }
        for m in [Method::TrxOs, Method::Exp] {
            all_rejected &= classify_task(table, &task, m, 1.0, &mut r).iter().all(|d| *d == Decision::Reject);
        }
    }
    let boundary = decide(0, 0.5, 0.5) == Decision::Reject
        && decide(0, f64::from_bits(0.5f64.to_bits() + 1), 0.5) == Decision::Accept(0)
        && predict(
            &trxos::model::QueryScores { distances: vec![0.0, 1.0], class: 0, disc_score: 1.0 },
            Confidence::Exp,
            1.0,
        )
        .outcome
            == Decision::Reject;
    check(
        same_choice && threshold_ok && all_rejected && boundary,
        format!(
            "same c_FS for TRX-OS and EXP: {same_choice}; accept iff score > τ: {}; τ = 1 rejects all: {all_rejected}",
            threshold_ok && boundary
        ),
    )
}

fn reproducibility() -> Outcome {
    let data = common::builtin_index(9);
    let cfg = TrainConfig { episodes: 20, checkpoint_interval: 10, seed: 4, ..Default::default() };
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        train_loop(&data, &cfg, Some(d.path())).map_err(|e| e.to_string())?;
    }
    let read = |d: &tempfile::TempDir, f: &str| fs::read(d.path().join(f)).unwrap();
    let logs_equal = read(&dirs[0], "train_log.csv") == read(&dirs[1], "train_log.csv");
    let ck_equal = read(&dirs[0], "checkpoint.bin") == read(&dirs[1], "checkpoint.bin");

    let ck = Checkpoint::load(&dirs[0].path().join("checkpoint.bin")).map_err(|e| e.to_string())?;
    let model = ck.to_model().map_err(|e| e.to_string())?;
    let reloaded = Checkpoint::from_bytes(&ck.to_bytes(), "mem".as_ref())
        .and_then(|c| c.to_model())
        .map_err(|e| e.to_string())?;
    let test = data.split(Split::Test);
    let t1 = ScoreTable::build(&model, &test).map_err(|e| e.to_string())?;
    let t2 = ScoreTable::build(&reloaded, &test).map_err(|e| e.to_string())?;
    let csv = |t: &ScoreTable| comparison_csv(&compare_baseline(t, &[2, 3], 20, 8, 0.5).unwrap());
    let eval_equal = csv(&t1) == csv(&t2) && csv(&t1) == csv(&t1.clone());
    let inference_equal = t1 == t2;

    // 10 steps, checkpoint, resume for 10 more: same weights as 20 straight
    let mut half = Trainer::new(TrainConfig { episodes: 10, ..cfg.clone() }).map_err(|e| e.to_string())?;
    half.run(&data.split(Split::Train), |_, _| Ok(())).map_err(|e| e.to_string())?;
    let mid = Checkpoint::from_bytes(&half.checkpoint().to_bytes(), "mem".as_ref()).map_err(|e| e.to_string())?;
    let mut resumed = Trainer::resume(cfg.clone(), &mid).map_err(|e| e.to_string())?;
    resumed.run(&data.split(Split::Train), |_, _| Ok(())).map_err(|e| e.to_string())?;
    let resume_equal = resumed.checkpoint() == ck
        && reports_csv(resumed.reports()).lines().skip(1).collect::<Vec<_>>()
            == String::from_utf8(read(&dirs[0], "train_log.csv")).unwrap().lines().skip(11).collect::<Vec<_>>();

    check(
        logs_equal && ck_equal && eval_equal && inference_equal && resume_equal,
        format!(
            "train CSV identical: {logs_equal}, checkpoint identical: {ck_equal}, eval CSV identical: {eval_equal}, reloaded inference identical: {inference_equal}, resume matches: {resume_equal}"
        ),
    )
}

fn data_pipeline() -> Outcome {
    let mut r = rng(31);
    for case in 0..1000 {
        let total = r.random_range(1..80);
        let frames = r.random_range(2..20);
        let joints = r.random_range(1..30);
        let idx = subsample_indices(total, frames).map_err(|e| e.to_string())?;
        for (i, &x) in idx.iter().enumerate() {
            let want = if total >= frames {
                (i as f64 * (total - 1) as f64 / (frames - 1) as f64).round() as usize
            } else {
                i.min(total - 1)
            };
            if x != want {
                return Err(format!("case {case}: index {i} of {total}->{frames} is {x}, expected {want}"));
            }
        }
        let scale = r.random_range(0.1..3.0);
        let data = (0..total * joints * 3).map(|_| r.random_range(-scale..scale)).collect();
        let seq = SkeletonSequence::new(total, joints, data, Some("c".into()), format!("r{case}")).unwrap();
        let pelvis = r.random_range(0..joints);
        let centered = center_pelvis(&seq, pelvis).map_err(|e| e.to_string())?;
        let again = center_pelvis(&centered, pelvis).map_err(|e| e.to_string())?;
        if (0..total).any(|t| centered.joint(t, pelvis) != [0.0; 3]) || again.data() != centered.data() {
            return Err(format!("case {case}: centering"));
        }
        let expect = Expectations { frames: Some(frames), joints: Some(joints), pelvis };
        let out = preprocess(&seq, &expect).map_err(|e| format!("case {case}: {e}"))?;
        let twice = preprocess(&out, &expect).map_err(|e| format!("case {case}: {e}"))?;
        if out.data().iter().any(|v| v.abs() > 1.0) || twice.data() != out.data() || validate_sequence(&out, &expect).is_err() {
            return Err(format!("case {case}: preprocess range/idempotence/validation"));
        }
    }
    Ok("1000 random inputs: equidistant indices, pelvis at origin, idempotent centering and preprocessing, values in [-1, 1]".into())
}

fn random_baseline_counting() -> Outcome {
    // counting oracle: enumerate every outcome of the uniform predictor per query
    let data = common::random_index(&tiny_config(2, 1, 2), 6, 3, Split::Test, 1);
    let table = ScoreTable::labels_only(&data);
    for k in 1..6 {
        let task = EvalTask::sample(&table, k, &mut rng(k as u64)).unwrap();
        let mut hits = 0usize;
        for t in &task.targets {
            let outcomes = (0..k).map(Decision::Accept).chain([Decision::Reject]);
            hits += outcomes.filter(|o| o == t).count();
        }
        let counted = hits as f64 / (task.targets.len() * (k + 1)) as f64;
        if (counted - random_baseline(&task)).abs() > 1e-15 {
            return Err(format!("k={k}: {counted} vs {}", random_baseline(&task)));
        }
    }
    Ok("analytic random baseline equals enumeration for k = 1..5".into())
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
        }
    };
    report("gradient fidelity", gradient_fidelity());
    report("oracle equivalence", oracle_equivalence());
    report("combinatorics", combinatorics());
    report("loss gating", loss_gating());
    match desk_scale_model() {
        Ok(t) => {
            report("desk-scale learning", desk_scale(&t));
            report("baseline ordering", baseline_ordering(&t));
            report("decision rule", decision_rule(&t));
        }
        Err(e) => {
            for name in ["desk-scale learning", "baseline ordering", "decision rule"] {
                report(name, Err(format!("training failed: {e}")));
            }
        }
    }
    report("reproducibility", reproducibility());
    report("data pipeline", data_pipeline());
    report("random baseline", random_baseline_counting());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
