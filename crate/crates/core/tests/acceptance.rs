//! End-to-end acceptance checks. Each test prints one `criterion N [PASS]`
//! or `[FAIL]` line straight to stdout so the verdicts show up even when
//! test output is captured. Tests hold a shared lock so that the runtime
//! limits measure one criterion at a time.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use cmust_core::cli::{run_config, RunConfig};
use cmust_core::config::{ModelConfig, Profile};
use cmust_core::data::{
    compute_norm_stats, generate_synthetic, make_windows, split_7_1_2, DatasetManifest, StDataset, SyntheticSpec,
};
use cmust_core::embedding::Segment;
use cmust_core::harness::{
    evaluate, load_checkpoint, run_experiment, save_checkpoint, Ablation, ExperimentConfig, Mode, TaskData,
    TrainConfig,
};
use cmust_core::model::{init_params, msti_forward, Batch, Model, PROMPT_PARAM};
use cmust_core::msti::{cross_attention_block, positional_encoding, AttentionConfig, Stage};
use cmust_core::numerics::{finite_difference_gradient, huber_loss, relative_error, Graph, Parameter, Tensor};
use cmust_core::roada::{
    apply_freeze, daily_average_sample, frozen_fraction, variance_partition, AutoencoderConfig, PhaseKind,
    RoAdaConfig, SnapshotHistory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: usize, pass: bool, detail: &str) {
    let line = format!("criterion {n:>2} [{}] {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.sample::<f64, _>(StandardNormal))
}

fn random_batch(rng: &mut ChaCha8Rng, c: &ModelConfig, b: usize, n: usize) -> Batch {
    let t = c.input_len;
    Batch {
        x: normal(rng, &[b, t, n, c.in_channels]),
        y: normal(rng, &[b, c.horizon, n, c.out_channels]),
        tod: (0..b * t).map(|_| rng.gen_range(0..c.slots_per_day)).collect(),
        dow: (0..b * t).map(|_| rng.gen_range(0..7)).collect(),
        ts: Tensor::from_fn(&[b, t, 6], |_| rng.gen::<f64>()),
        coords: Tensor::from_fn(&[n, 2], |_| rng.gen::<f64>()),
    }
}

#[test]
fn criterion_01_gradients_match_finite_differences() {
    let _g = serial();
    let started = Instant::now();
    let c = ModelConfig::for_profile(Profile::Tiny, 1, 96);
    assert_eq!((c.d_h(), c.heads, c.input_len, c.horizon), (32, 2, 12, 12));
    let (b, n) = (2, 4);
    let mut store = init_params(&c, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    store
        .insert(Parameter::new(PROMPT_PARAM, normal(&mut rng, &[n, c.d_p]).map(|v| 0.5 * v)))
        .unwrap();
    let mut batch = random_batch(&mut rng, &c, b, n);

    let forward = |store: &cmust_core::numerics::ParamStore, batch: &Batch| {
        let mut g = Graph::new();
        let bind = store.bind(&mut g);
        let p = bind.var(PROMPT_PARAM)?;
        let y = msti_forward(&mut g, &c, &bind, p, batch, None)?;
        Ok::<_, cmust_core::Error>((g, y, bind.into_vars()))
    };
    // Targets near the current forecast keep every residual inside the
    // quadratic part of the loss, where the loss value is small and the
    // finite-difference quotient is not swamped by rounding.
    {
        let (g, y, _) = forward(&store, &batch).unwrap();
        let mut noise = ChaCha8Rng::seed_from_u64(9);
        let pred = g.value(y).clone();
        batch.y = Tensor::from_fn(pred.shape(), |i| pred.data()[i] + 0.1 * noise.sample::<f64, _>(StandardNormal));
    }
    let loss = |store: &cmust_core::numerics::ParamStore| {
        let (mut g, y, vars) = forward(store, &batch)?;
        let t = g.constant(batch.y.clone());
        let l = g.huber(y, t, 1.0)?;
        Ok::<_, cmust_core::Error>((g, l, vars))
    };

    let (g, l, vars) = loss(&store).unwrap();
    let mut grads = g.backward(l).unwrap();
    store.store_grads(&vars, &mut grads);
    let fd = finite_difference_gradient(
        |s| {
            let (g, l, _) = loss(s)?;
            Ok(g.value(l).data()[0])
        },
        &mut store,
        1e-5,
    )
    .unwrap();

    let mut worst = (0.0f64, String::new());
    let mut failures = 0usize;
    let mut checked = 0usize;
    for (p, f) in store.iter().zip(&fd) {
        let a = p.grad.as_ref().expect("every parameter has a gradient");
        for (x, y) in a.data().iter().zip(f.data()) {
            let r = relative_error(*x, *y);
            checked += 1;
            if r > 1e-4 {
                failures += 1;
            }
            if r > worst.0 {
                worst = (r, p.name().to_string());
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = failures == 0 && secs <= 60.0;
    verdict(
        1,
        pass,
        &format!(
            "{checked} gradient elements in {} tensors, {failures} above 1e-4, worst {:.2e} ({}), {secs:.1} s",
            store.len(),
            worst.0,
            worst.1
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_attention_rows_are_distributions() {
    let _g = serial();
    let mut worst = 0.0f64;
    let mut maps_seen = 0usize;
    let mut stages = std::collections::BTreeSet::new();
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let mut c = ModelConfig::for_profile(Profile::Tiny, rng.gen_range(1..3), 24);
        c.heads = [1, 2, 4][rng.gen_range(0..3)];
        let n = rng.gen_range(1..6);
        let model = Model::new(c.clone(), trial).unwrap();
        let b = rng.gen_range(1..3);
        let batch = random_batch(&mut rng, &c, b, n);
        let prompt = normal(&mut rng, &[n, c.d_p]);
        let (_, maps) = model.predict_with_attention(&prompt, &batch).unwrap();
        assert_eq!(maps.len(), 6 * c.heads);
        for m in &maps {
            stages.insert(m.stage.name());
            let l = m.scores.last_dim();
            for row in m.scores.data().chunks_exact(l) {
                assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
                worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            }
            maps_seen += 1;
        }
    }
    let pass = worst <= 1e-9 && stages.len() == 6;
    verdict(
        2,
        pass,
        &format!("100 trials, {maps_seen} maps over {} stages, max |row sum - 1| = {worst:.2e}", stages.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_03_cross_stages_touch_only_their_slice() {
    let _g = serial();
    let c = ModelConfig::for_profile(Profile::Tiny, 1, 24);
    let layout = c.layout();
    let store = init_params(&c, 7).unwrap();
    let cfg = AttentionConfig::from_model(&c);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = normal(&mut rng, &[2, 5, 4, c.d_h()]);
    let mut lines = Vec::new();
    let mut pass = true;
    for stage in [Stage::ScciSo, Stage::ScciOs, Stage::TcciTo, Stage::TcciOt] {
        let (q, kv) = stage.cross_segments().unwrap();
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let hv = g.constant(h.clone());
        let prefix = format!("msti/block0/{}", stage.name());
        let out = cross_attention_block(&mut g, &b, &prefix, hv, &layout, q, kv, &cfg, None).unwrap();
        let out = g.value(out).clone();
        let mut kept = Vec::new();
        let mut changed = false;
        for seg in Segment::ALL {
            let before = h.slice_last(layout.offset(seg), layout.width(seg)).unwrap();
            let after = out.slice_last(layout.offset(seg), layout.width(seg)).unwrap();
            let same = before.data().iter().zip(after.data()).all(|(x, y)| x.to_bits() == y.to_bits());
            if seg == kv {
                changed = !same;
            } else {
                pass &= same;
                kept.push(seg.short());
            }
        }
        pass &= changed;
        lines.push(format!("{} keeps {}", stage.name(), kept.join("/")));
    }
    verdict(3, pass, &format!("bit-identical untouched slices: {}", lines.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_04_exact_values() {
    let _g = serial();
    let huber_at = |r: f64, delta: f64| huber_loss(&Tensor::scalar(r), &Tensor::scalar(0.0), delta).unwrap();
    let table = [(0.0, 0.0), (0.5, 0.125), (2.0, 1.5)];
    let exact = table.iter().all(|&(r, want)| huber_at(r, 1.0) == want && huber_at(-r, 1.0) == want);

    let pe = positional_encoding(4, 9).unwrap();
    let alternating = (0..9).all(|j| pe.get(&[0, j]) == if j % 2 == 0 { 0.0 } else { 1.0 });

    let mut seam = 0.0f64;
    for delta in [0.25, 0.5, 1.0, 1.7, 3.0] {
        let quadratic = 0.5 * delta * delta;
        let linear = delta * (delta - 0.5 * delta);
        let inside = huber_at(f64::from_bits((delta as f64).to_bits() - 1), delta);
        let at = huber_at(delta, delta);
        seam = seam
            .max((quadratic - linear).abs())
            .max((at - quadratic).abs())
            .max((at - inside).abs());
    }
    let pass = exact && alternating && seam <= 1e-15;
    verdict(
        4,
        pass,
        &format!("huber table exact: {exact}, PE(0, .) alternates 0/1: {alternating}, branch gap {seam:.1e}"),
    );
    assert!(pass);
}

/// Population variance by the textbook two-pass formula.
fn two_pass_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

#[test]
fn criterion_05_variance_partition_and_freeze_masks() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f64;
    let mut partition_ok = true;
    let mut or_ok = true;
    for _ in 0..1000 {
        let snapshots = rng.gen_range(2..8);
        let shapes: Vec<Vec<usize>> = (0..rng.gen_range(1..4))
            .map(|_| (0..rng.gen_range(1..3)).map(|_| rng.gen_range(1..5)).collect())
            .collect();
        let scale = 10f64.powi(rng.gen_range(-4..1));
        let mut history = SnapshotHistory::new();
        let mut series: Vec<Vec<Tensor>> = Vec::new();
        for (k, shape) in shapes.iter().enumerate() {
            let base = normal(&mut rng, shape);
            let snaps: Vec<Tensor> = (0..snapshots)
                .map(|_| {
                    let noise = normal(&mut rng, shape);
                    Tensor::from_fn(shape, |i| base.data()[i] + scale * noise.data()[i])
                })
                .collect();
            for s in &snaps {
                history.push(&format!("p{k}"), s.clone());
            }
            series.push(snaps);
        }
        let delta = 10f64.powi(rng.gen_range(-9..-3));
        let report = variance_partition(&history, delta).unwrap();
        assert_eq!(report.entries.len(), shapes.len());
        let mut store = cmust_core::numerics::ParamStore::new();
        for (k, (entry, snaps)) in report.entries.iter().zip(&series).enumerate() {
            assert_eq!(entry.name, format!("p{k}"));
            let len = snaps[0].len();
            for i in 0..len {
                let xs: Vec<f64> = snaps.iter().map(|s| s.data()[i]).collect();
                let v = two_pass_variance(&xs);
                worst = worst.max((v - entry.variance[i]).abs());
                // stable and dynamic split every element exactly once
                let dynamic = entry.dynamic();
                partition_ok &= entry.stable[i] != dynamic[i];
                partition_ok &= entry.stable[i] == (entry.variance[i] < delta);
            }
            let mut p = Parameter::new(entry.name.clone(), snaps[snaps.len() - 1].clone());
            let prior: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.3)).collect();
            p.set_freeze_mask(prior).unwrap();
            store.insert(p).unwrap();
        }
        let before: Vec<Vec<bool>> = store.iter().map(|p| p.freeze_mask().to_vec()).collect();
        apply_freeze(&mut store, &report).unwrap();
        for ((p, prior), entry) in store.iter().zip(&before).zip(&report.entries) {
            for i in 0..prior.len() {
                or_ok &= p.freeze_mask()[i] == (prior[i] || entry.stable[i]);
            }
        }
    }
    let pass = worst <= 1e-12 && partition_ok && or_ok;
    verdict(
        5,
        pass,
        &format!("1000 histories, max |var - two-pass| = {worst:.2e}, partition exact: {partition_ok}, OR accumulation: {or_ok}"),
    );
    assert!(pass);
}

fn synthetic_tasks(seed: u64, tasks: usize, train_stride: usize) -> Vec<TaskData> {
    generate_synthetic(&SyntheticSpec {
        seed,
        tasks,
        nodes: 16,
        steps: 1344,
        interval_minutes: 15,
        coupling: 1.0,
        noise_sd: 0.1,
    })
    .unwrap()
    .into_iter()
    .map(|d| TaskData::new(d, 12, 12, train_stride, 1).unwrap())
    .collect()
}

fn frozen_kept(model: &Model, frozen: &BTreeMap<String, Vec<(usize, u64)>>) -> bool {
    model.params.iter().all(|p| {
        frozen[p.name()]
            .iter()
            .all(|&(i, bits)| p.freeze_mask()[i] && p.value.data()[i].to_bits() == bits)
    })
}

#[test]
fn criterion_06_frozen_weights_survive_warmup_and_refinement() {
    let _g = serial();
    let started = Instant::now();
    let tasks = synthetic_tasks(0, 2, 4);
    let model = ModelConfig::for_profile(Profile::Tiny, 1, tasks[0].slots_per_day());
    let train = TrainConfig {
        max_epochs: 3,
        patience: 3,
        train_stride: 4,
        ..TrainConfig::for_profile(Profile::Tiny)
    };
    let roada = RoAdaConfig {
        max_epochs_warmup: 3,
        max_epochs_refine: 3,
        ..RoAdaConfig::default()
    };
    let cfg = ExperimentConfig {
        mode: Mode::Roada,
        ablation: None,
        seed: 0,
        model,
        train,
        roada,
    };
    // Early stopping restores the last improving epoch, so the weights a
    // phase ends with are the last snapshot taken at an improving epoch.
    let mut restored: Option<Vec<Tensor>> = None;
    let mut frozen: Option<BTreeMap<String, Vec<(usize, u64)>>> = None;
    let mut current_phase = (usize::MAX, usize::MAX);
    let mut epochs_per_phase: Vec<usize> = Vec::new();
    let mut checked_epochs = 0usize;
    let mut violations = 0usize;
    let rerun = run_experiment(&tasks, &cfg, &mut |ctx, rec, m, _| {
        if (ctx.index, ctx.task) != current_phase {
            current_phase = (ctx.index, ctx.task);
            epochs_per_phase.push(0);
        }
        *epochs_per_phase.last_mut().unwrap() += 1;
        if frozen.is_none() && ctx.kind == PhaseKind::Revisit {
            let start = restored.as_ref().expect("an earlier epoch improved");
            frozen = Some(
                m.params
                    .iter()
                    .zip(start)
                    .map(|(p, v)| {
                        let kept = p
                            .freeze_mask()
                            .iter()
                            .enumerate()
                            .filter(|(_, f)| **f)
                            .map(|(i, _)| (i, v.data()[i].to_bits()))
                            .collect();
                        (p.name().to_string(), kept)
                    })
                    .collect(),
            );
        }
        if let Some(f) = &frozen {
            checked_epochs += 1;
            if !frozen_kept(m, f) {
                violations += 1;
            }
        }
        if rec.improved {
            restored = Some(m.params.values());
        }
        Ok(())
    })
    .unwrap();
    let frozen = frozen.expect("phases after task 2 ran");
    let frozen_count: usize = frozen.values().map(Vec::len).sum();

    let dir = tempfile::tempdir().unwrap();
    let mut checkpoints_ok = true;
    for t in &rerun.tasks {
        let ck = dir.path().join(&t.task);
        save_checkpoint(&ck, &t.task, 16, &t.model, &t.prompt).unwrap();
        let (_, loaded, _) = load_checkpoint(&ck).unwrap();
        checkpoints_ok &= frozen_kept(&loaded, &frozen);
    }
    let enough_epochs = epochs_per_phase.iter().all(|&e| e >= 3) && epochs_per_phase.len() == 5;
    let secs = started.elapsed().as_secs_f64();
    let pass = violations == 0 && checkpoints_ok && enough_epochs && secs <= 180.0;
    verdict(
        6,
        pass,
        &format!(
            "{frozen_count} frozen elements ({:.1}% of weights) after task 2, {checked_epochs} later epochs checked, \
             {violations} violations, refined checkpoints intact: {checkpoints_ok}, epochs per phase {epochs_per_phase:?}, {secs:.0} s",
            100.0 * frozen_fraction(&rerun.tasks[0].model)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_data_pipeline_oracles() {
    let _g = serial();
    // normalization round trip
    let ds = generate_synthetic(&SyntheticSpec {
        seed: 4,
        tasks: 1,
        nodes: 5,
        steps: 500,
        interval_minutes: 30,
        coupling: 0.5,
        noise_sd: 0.3,
    })
    .unwrap()
    .remove(0);
    let stats = compute_norm_stats(&ds, 0..350).unwrap();
    let back = stats.denormalize(&stats.normalize(&ds.observations).unwrap()).unwrap();
    let round_trip = back.max_abs_diff(&ds.observations);

    // daily average against a group-by-slot oracle, start at 05:00 with a
    // partial final day, two channels
    let (interval, steps, nodes, channels) = (60u32, 24 * 3 + 10, 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let manifest = DatasetManifest {
        name: "oracle".into(),
        t_all: steps,
        nodes,
        channels,
        interval_minutes: interval,
        start_timestamp: "2024-03-04T05:00:00Z".into(),
        coords: (0..nodes).map(|i| [i as f64, 0.0]).collect(),
        channel_names: vec!["a".into(), "b".into()],
    };
    let obs = normal(&mut rng, &[steps, nodes, channels]);
    let d = StDataset::new(manifest, obs.clone()).unwrap();
    let sample = daily_average_sample(&d).unwrap();
    let slots = 24;
    let mut sums = vec![0.0; slots * nodes * channels];
    let mut counts = vec![0usize; slots];
    for t in 0..steps {
        let slot = (5 + t) % slots;
        counts[slot] += 1;
        for n in 0..nodes {
            for c in 0..channels {
                sums[(slot * nodes + n) * channels + c] += obs.get(&[t, n, c]);
            }
        }
    }
    let mut daily = 0.0f64;
    for s in 0..slots {
        for n in 0..nodes {
            for c in 0..channels {
                let want = sums[(s * nodes + n) * channels + c] / counts[s] as f64;
                daily = daily.max((sample.get(&[s, n, c]) - want).abs());
            }
        }
    }

    // boundaries do not depend on the window lengths; 12 + 12 steps would not
    // fit in a 10-step validation part, so shorter windows are used here
    let split = split_7_1_2(100, 5, 5).unwrap();
    let split_ok = split.train.len() == 70 && split.val.len() == 10 && split.test.len() == 20;
    let windows = make_windows(30, 12, 12, 1).unwrap().len();
    let pass = round_trip <= 1e-9 && daily <= 1e-12 && split_ok && windows == 7;
    verdict(
        7,
        pass,
        &format!(
            "round trip {round_trip:.1e}, daily average vs group-by {daily:.1e}, split {}/{}/{}, windows {windows}",
            split.train.len(),
            split.val.len(),
            split.test.len()
        ),
    );
    assert!(pass);
}

fn files_under(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_08_roada_runs_are_reproducible() {
    let _g = serial();
    let text = r#"{
        "mode": "roada",
        "seed": 21,
        "data": {"synthetic": {"seed": 21, "tasks": 3, "nodes": 16, "steps": 1344,
                               "interval_minutes": 15, "coupling": 1.0, "noise_sd": 0.1}},
        "train": {"max_epochs": 3, "patience": 3, "train_stride": 8},
        "roada": {"max_epochs_warmup": 3, "max_epochs_refine": 3},
        "output": {"dir": "unused"}
    }"#;
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_config(RunConfig::from_json(text).unwrap(), &a).unwrap();
    run_config(RunConfig::from_json(text).unwrap(), &b).unwrap();
    let metrics_same = fs::read(a.join("metrics.json")).unwrap() == fs::read(b.join("metrics.json")).unwrap();
    let (ca, cb) = (files_under(&a.join("checkpoints")), files_under(&b.join("checkpoints")));
    let checkpoints_same = ca == cb;
    let pass = metrics_same && checkpoints_same && ca.len() > 3;
    verdict(
        8,
        pass,
        &format!("metrics.json identical: {metrics_same}, {} checkpoint files identical: {checkpoints_same}", ca.len()),
    );
    assert!(pass);
}

/// Settings shared by the comparative runs of criteria 9 and 10.
fn comparison_config(mode: Mode, ablation: Option<Ablation>, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        mode,
        ablation,
        seed,
        model: ModelConfig::for_profile(Profile::Tiny, 1, 96),
        train: TrainConfig {
            max_epochs: 30,
            patience: 5,
            train_stride: 4,
            ..TrainConfig::for_profile(Profile::Tiny)
        },
        roada: RoAdaConfig {
            max_epochs_warmup: 30,
            max_epochs_rolling: Some(5),
            max_epochs_refine: 30,
            autoencoder: AutoencoderConfig::default(),
            ..RoAdaConfig::default()
        },
    }
}

const SEEDS: [u64; 3] = [0, 1, 2];

/// Mean test MAE of full rolling adaptation per seed, with the seconds it
/// took; computed once and shared by criteria 9 and 10.
fn roada_means() -> &'static Vec<(f64, f64)> {
    static CACHE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    CACHE.get_or_init(|| {
        SEEDS
            .iter()
            .map(|&s| {
                let t0 = Instant::now();
                let tasks = synthetic_tasks(s, 3, 4);
                let out = run_experiment(&tasks, &comparison_config(Mode::Roada, None, s), &mut |_, _, _, _| Ok(()))
                    .unwrap();
                (out.mean_test_mae(), t0.elapsed().as_secs_f64())
            })
            .collect()
    })
}

#[test]
fn criterion_09_rolling_adaptation_beats_single_task() {
    let _g = serial();
    let mut secs = 0.0;
    let mut rows = Vec::new();
    let mut wins = 0;
    let roada = roada_means();
    for (&s, &(full, t_full)) in SEEDS.iter().zip(roada) {
        let t0 = Instant::now();
        let tasks = synthetic_tasks(s, 3, 4);
        let single = run_experiment(&tasks, &comparison_config(Mode::Single, None, s), &mut |_, _, _, _| Ok(()))
            .unwrap()
            .mean_test_mae();
        secs += t0.elapsed().as_secs_f64() + t_full;
        if full <= single {
            wins += 1;
        }
        rows.push(format!("seed {s}: roada {full:.4} vs single {single:.4}"));
    }
    let pass = wins >= 2 && secs <= 1200.0;
    verdict(9, pass, &format!("{} ({wins}/3 seeds, {secs:.0} s)", rows.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_10_removing_interaction_hurts() {
    let _g = serial();
    let mut secs = 0.0;
    let mut rows = Vec::new();
    let mut wins = 0;
    let roada = roada_means();
    for (&s, &(full, t_full)) in SEEDS.iter().zip(roada) {
        let t0 = Instant::now();
        let tasks = synthetic_tasks(s, 3, 4);
        let cfg = comparison_config(Mode::Ablation, Some(Ablation::NoInteraction), s);
        let ablated = run_experiment(&tasks, &cfg, &mut |_, _, _, _| Ok(())).unwrap().mean_test_mae();
        secs += t0.elapsed().as_secs_f64() + t_full;
        if ablated >= full {
            wins += 1;
        }
        rows.push(format!("seed {s}: no-interaction {ablated:.4} vs full {full:.4}"));
    }
    let pass = wins >= 2 && secs <= 1200.0;
    verdict(10, pass, &format!("{} ({wins}/3 seeds, {secs:.0} s)", rows.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_11_checkpoint_round_trip() {
    let _g = serial();
    let tasks = synthetic_tasks(5, 2, 8);
    let mut cfg = comparison_config(Mode::Roada, None, 5);
    cfg.train.max_epochs = 2;
    cfg.train.patience = 2;
    cfg.roada.max_epochs_warmup = 2;
    cfg.roada.max_epochs_rolling = Some(2);
    cfg.roada.max_epochs_refine = 2;
    let outcome = run_experiment(&tasks, &cfg, &mut |_, _, _, _| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut worst = 0.0f64;
    for (t, task) in outcome.tasks.iter().zip(&tasks) {
        let ck = dir.path().join(&t.task);
        save_checkpoint(&ck, &t.task, task.nodes(), &t.model, &t.prompt).unwrap();
        let (meta, model, prompt) = load_checkpoint(&ck).unwrap();
        assert_eq!(meta.task, t.task);
        let again = evaluate(&model, &prompt.value, task, &task.split.test, 7).unwrap();
        worst = worst.max((again.mae - t.test.mae).abs());
    }
    let pass = worst <= 1e-9;
    verdict(11, pass, &format!("{} checkpoints, max |MAE after reload - recorded| = {worst:.1e}", outcome.tasks.len()));
    assert!(pass);
}
