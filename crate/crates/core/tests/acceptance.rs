//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scampsim::gesture::{export, generate, DatasetSplit, GenerateConfig, GestureSample};
use scampsim::model::default_class_names;
use scampsim::program::Opcode;
use scampsim::servo::{
    self, Classified, FrameFate, ServoBank, ServoModel, TimedFrame, PWM_PERIOD_US,
};
use scampsim::train::{evaluate, train, TrainConfig};
use scampsim::{
    estimate, lower_model, reference_infer, BitImage, BnnModel, CostModel, LoweredRunner,
    NoiseModel, PlaneGeometry,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_input(rng: &mut ChaCha8Rng, size: usize) -> BitImage {
    let density: f64 = rng.random();
    BitImage::from_fn(size, size, |_, _| rng.random::<f64>() < density)
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0001);
    let pairs = 1000;
    let mut exact = 0;
    let mut first_bad = None;
    for i in 0..pairs {
        let k = rng.random_range(1..=8);
        let model =
            BnnModel::random(PlaneGeometry::default(), k, default_class_names(), rng.random())
                .unwrap();
        let input = random_input(&mut rng, 64);
        let reference = reference_infer(&model, &input).unwrap();
        let lowered = LoweredRunner::ideal(&model)
            .unwrap()
            .infer(&input, NoiseModel::none())
            .unwrap();
        let scaled: Vec<i64> = reference.scores.iter().map(|s| 4 * s).collect();
        if lowered.sums == scaled && lowered.predicted == reference.predicted {
            exact += 1;
        } else if first_bad.is_none() {
            first_bad = Some(format!(" first mismatch at pair {i} (k={k})"));
        }
    }
    outcome(
        exact == pairs,
        format!("{exact}/{pairs} pairs exact{}", first_bad.unwrap_or_default()),
    )
}

fn accuracy_surrogate(data: &DatasetSplit, model: &BnnModel, best_epoch: usize) -> Outcome {
    let ev = evaluate(model, &data.test).unwrap();
    let runner = LoweredRunner::ideal(model).unwrap();
    let mut state = runner.new_state(NoiseModel::none()).unwrap();
    let (mut lowered_correct, mut agree) = (0, 0);
    for s in &data.test {
        let low = runner.run_on(&mut state, &s.image).unwrap();
        let reference = reference_infer(model, &s.image).unwrap();
        lowered_correct += (low.predicted == s.label) as usize;
        agree += (low.sums.iter().zip(&reference.scores).all(|(a, b)| *a == 4 * b)
            && low.predicted == reference.predicted) as usize;
    }
    let lowered_acc = lowered_correct as f64 / data.test.len() as f64;
    outcome(
        ev.accuracy >= 0.95 && lowered_acc >= 0.95 && agree == data.test.len(),
        format!(
            "reference test accuracy {:.4}, lowered {:.4}, agreement {agree}/{} (best epoch {best_epoch}, {}/{} per class)",
            ev.accuracy,
            lowered_acc,
            data.test.len(),
            data.train.len() / 3,
            data.test.len() / 3
        ),
    )
}

fn timing() -> Outcome {
    let (program, _) = lower_model(&BnnModel::default_model()).unwrap();
    let report = estimate(&program, &CostModel::default()).unwrap();
    let line = report.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0003);
    let mut worst = 0f64;
    for _ in 0..500 {
        let costs = Opcode::ALL
            .iter()
            .map(|&op| (op, rng.random_range(0.0..5.0)))
            .collect();
        let cost = CostModel::new(costs, rng.random_range(0.0..200.0)).unwrap();
        let r = estimate(&program, &cost).unwrap();
        worst = worst.max((r.throughput_fps * r.latency_us / 1e6 - 1.0).abs());
    }
    outcome(
        (report.latency_us - 121.0).abs() <= 0.5
            && report.fps_floor() == Some(8264)
            && line == "latency_us=121.0 fps=8264"
            && worst < 1e-12,
        format!("`{line}`, max |fps*latency/1e6 - 1| over 500 random tables = {worst:.1e}"),
    )
}

fn control_path(samples: &[GestureSample]) -> Outcome {
    let model = BnnModel::default_model();
    let runner = LoweredRunner::ideal(&model).unwrap();
    let cost = CostModel::default();
    let report = estimate(runner.program(), &cost).unwrap();
    let latency = report.latency_us.ceil() as u64;
    let bank = ServoBank::single();
    let names = default_class_names();

    let (mut lo, mut hi, mut outside) = (u64::MAX, 0, 0);
    for phase in 0..PWM_PERIOD_US {
        let tl = servo::simulate(
            &[Classified {
                frame_us: phase,
                class: (phase % 3) as usize,
            }],
            latency,
            &bank,
            &names,
            4 * PWM_PERIOD_US,
        )
        .unwrap();
        match servo::reaction_latency(&tl)[0].fate {
            FrameFate::Latched { reaction_us, .. } => {
                lo = lo.min(reaction_us);
                hi = hi.max(reaction_us);
                if !(latency..=latency + PWM_PERIOD_US).contains(&reaction_us) {
                    outside += 1;
                }
            }
            _ => outside += 1,
        }
    }

    let fps = report.fps_floor().unwrap() as f64;
    let duration = 1_000_000;
    let frames: Vec<TimedFrame> = servo::steady_frame_times(fps, duration)
        .into_iter()
        .enumerate()
        .map(|(i, t_us)| TimedFrame {
            t_us,
            image: samples[i % samples.len()].image.clone(),
        })
        .collect();
    let tl = servo::run_loop(&frames, &runner, &cost, &bank, duration).unwrap();
    let summary = servo::summarize(&servo::reaction_latency(&tl));
    let expected = frames.len() as f64 * 333.0 / 8264.0;
    let never = 1.0 - summary.latched as f64 / summary.frames as f64;
    outcome(
        outside == 0 && (summary.latched as f64 - expected).abs() <= 1.0,
        format!(
            "phase sweep reaction {lo}..={hi} us over 3003 phases; at {fps} fps for 1 s: {} of {} frames latched (expected {expected:.2} ± 1), never-latched fraction {never:.4}",
            summary.latched, summary.frames
        ),
    )
}

fn servo_limit() -> Outcome {
    let five = ServoBank::new(vec![ServoModel::default(); 5]);
    let six = ServoBank::new(vec![ServoModel::default(); 6]);
    outcome(
        five.is_ok() && six.is_err(),
        format!(
            "5 servos {}, 6 servos {}",
            if five.is_ok() { "accepted" } else { "rejected" },
            match &six {
                Ok(_) => "accepted".to_string(),
                Err(e) => format!("rejected ({e})"),
            }
        ),
    )
}

fn noise_robustness(data: &DatasetSplit, model: &BnnModel) -> Outcome {
    let sigmas = [0.0, 2.0, 8.0, 32.0, 128.0];
    let seeds = 10u64;
    let runner = LoweredRunner::ideal(model).unwrap();
    let mut means = Vec::new();
    for &sigma in &sigmas {
        let mut total = 0.0;
        for seed in 0..seeds {
            let noise = if sigma == 0.0 {
                NoiseModel::none()
            } else {
                NoiseModel::gaussian(sigma, seed)
            };
            let mut state = runner.new_state(noise).unwrap();
            let correct = data
                .test
                .iter()
                .filter(|s| runner.run_on(&mut state, &s.image).unwrap().predicted == s.label)
                .count();
            total += correct as f64 / data.test.len() as f64;
        }
        means.push(total / seeds as f64);
    }
    let inversions = means.windows(2).filter(|w| w[1] > w[0]).count();
    outcome(
        inversions <= 1,
        format!(
            "mean accuracy {} ({inversions} adjacent inversion(s))",
            sigmas
                .iter()
                .zip(&means)
                .map(|(s, m)| format!("σ={s}:{m:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

fn exported_bytes(data: &DatasetSplit) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let mut files: Vec<(String, Vec<u8>)> = export(data, dir.path())
        .unwrap()
        .into_iter()
        .map(|p| {
            let rel = p.strip_prefix(dir.path()).unwrap().display().to_string();
            (rel, std::fs::read(&p).unwrap())
        })
        .collect();
    files.push((
        "manifest.json".into(),
        std::fs::read(dir.path().join("manifest.json")).unwrap(),
    ));
    files.sort();
    files
}

fn determinism() -> Outcome {
    let cfg = GenerateConfig {
        seed: 77,
        train_per_class: 30,
        test_per_class: 10,
        ..GenerateConfig::default()
    };
    let (d1, d2) = (generate(&cfg).unwrap(), generate(&cfg).unwrap());
    let gen_ok = exported_bytes(&d1) == exported_bytes(&d2);

    let tcfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let (t1, t2) = (train(&d1, &tcfg).unwrap(), train(&d2, &tcfg).unwrap());
    let train_ok =
        t1.model.save_weights() == t2.model.save_weights() && t1.log_csv() == t2.log_csv();

    let (p1, plan1) = lower_model(&t1.model).unwrap();
    let (p2, plan2) = lower_model(&t2.model).unwrap();
    let lower_ok = p1.disassemble() == p2.disassemble()
        && serde_json::to_string(&plan1).unwrap() == serde_json::to_string(&plan2).unwrap();

    let (r1, r2) = (
        LoweredRunner::ideal(&t1.model).unwrap(),
        LoweredRunner::ideal(&t2.model).unwrap(),
    );
    let exec_ok = d1.test.iter().all(|s| {
        r1.infer(&s.image, NoiseModel::none()).unwrap()
            == r2.infer(&s.image, NoiseModel::none()).unwrap()
    });

    let frames: Vec<TimedFrame> = d1
        .test
        .iter()
        .enumerate()
        .map(|(i, s)| TimedFrame {
            t_us: i as u64 * 997,
            image: s.image.clone(),
        })
        .collect();
    let bank = ServoBank::new(vec![ServoModel::default(); 3]).unwrap();
    let cost = CostModel::default();
    let l1 = servo::run_loop(&frames, &r1, &cost, &bank, 60_000).unwrap().to_csv();
    let l2 = servo::run_loop(&frames, &r2, &cost, &bank, 60_000).unwrap().to_csv();
    let loop_ok = l1 == l2;

    let flag = |b: bool| if b { "identical" } else { "DIFFERENT" };
    outcome(
        gen_ok && train_ok && lower_ok && exec_ok && loop_ok,
        format!(
            "generation {}, training {}, lowering {}, execution {}, loop {}",
            flag(gen_ok),
            flag(train_ok),
            flag(lower_ok),
            flag(exec_ok),
            flag(loop_ok)
        ),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, start: Instant, o: Outcome| {
        if !o.pass {
            failures += 1;
        }
        println!(
            "[{}] {n}. {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    };

    let t = Instant::now();
    report(1, "oracle equivalence", t, oracle_equivalence());

    let t = Instant::now();
    let data = generate(&GenerateConfig::default()).unwrap();
    let trained = train(&data, &TrainConfig::default()).unwrap();
    report(2, "accuracy surrogate", t, accuracy_surrogate(&data, &trained.model, trained.best_epoch));

    let t = Instant::now();
    report(3, "timing reproduction", t, timing());

    let t = Instant::now();
    report(4, "control-path timing", t, control_path(&data.test));

    let t = Instant::now();
    report(5, "servo bank limit", t, servo_limit());

    let t = Instant::now();
    report(6, "noise robustness", t, noise_robustness(&data, &trained.model));

    let t = Instant::now();
    report(7, "determinism", t, determinism());

    if failures > 0 {
        println!("{failures} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("all 7 criteria passed");
}
