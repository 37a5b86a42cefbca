use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use scampsim::gesture::{self, DatasetSplit, GenerateConfig, Split, MANIFEST};
use scampsim::io::read_to_string;
use scampsim::model::default_class_names;
use scampsim::pnm::{analog_to_gray, encode_pbm, encode_pgm, read_input};
use scampsim::program::Instruction;
use scampsim::servo::{self, ServoBank, ServoModel, TimedFrame};
use scampsim::train::{self, evaluate, TrainConfig};
use scampsim::{
    estimate, reference_infer, ArrayConfig, BitImage, BnnModel, CostModel, Error, LoweredRunner,
    NoiseModel, Result, Saturation, REPLICATION_FACTOR,
};

use crate::output::Outputs;
use crate::{GlobalArgs, Mode};

/// Resolved global options, with every referenced path checked up front.
pub struct Context {
    g: GlobalArgs,
}

fn require_file(path: &Option<PathBuf>, what: &str) -> Result<()> {
    match path {
        Some(p) if !p.is_file() => Err(Error::Input(format!("{what} {} not found", p.display()))),
        _ => Ok(()),
    }
}

impl Context {
    pub fn new(g: GlobalArgs) -> Result<Self> {
        require_file(&g.weights, "weights file")?;
        require_file(&g.cost_table, "cost table")?;
        if let Some(d) = &g.dataset {
            if !d.is_dir() {
                return Err(Error::Input(format!("dataset directory {} not found", d.display())));
            }
        }
        if !(g.noise_sigma.is_finite() && g.noise_sigma >= 0.0) {
            return Err(Error::Input(format!("noise sigma {} must be >= 0", g.noise_sigma)));
        }
        Ok(Self { g })
    }

    fn model(&self) -> Result<BnnModel> {
        match &self.g.weights {
            Some(p) => BnnModel::load_weights(&read_to_string(p)?),
            None => Ok(BnnModel::default_model()),
        }
    }

    fn cost(&self) -> Result<CostModel> {
        match &self.g.cost_table {
            Some(p) => CostModel::from_json(&read_to_string(p)?),
            None => Ok(CostModel::default()),
        }
    }

    fn noise(&self) -> NoiseModel {
        if self.g.noise_sigma > 0.0 {
            NoiseModel::gaussian(self.g.noise_sigma, self.g.seed.unwrap_or(0))
        } else {
            NoiseModel::none()
        }
    }

    fn array_config(&self, model: &BnnModel) -> ArrayConfig {
        let saturation = match self.g.mode {
            Mode::Ideal => Saturation::Ideal,
            Mode::Saturating => Saturation::saturating(),
        };
        ArrayConfig::new(*model.geometry())
            .with_saturation(saturation)
            .with_noise(self.noise())
    }

    fn runner(&self, model: &BnnModel) -> Result<LoweredRunner> {
        LoweredRunner::new(model, self.array_config(model))
    }

    fn out_dir(&self, command: &str) -> Result<&Path> {
        self.g
            .out
            .as_deref()
            .ok_or_else(|| Error::Input(format!("`{command}` needs --out <DIR>")))
    }

    fn dataset(&self, class_names: &[String]) -> Result<Option<DatasetSplit>> {
        let Some(dir) = &self.g.dataset else {
            return Ok(None);
        };
        if dir.join(MANIFEST).is_file() {
            gesture::load_manifest(dir).map(Some)
        } else {
            gesture::ingest(dir, class_names).map(Some)
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_to_string(path)?)?)
}

fn display_name(path: &Path) -> String {
    path.display().to_string()
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Generator config (JSON: seed, train_per_class, test_per_class, jitter).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    test_per_class: Option<usize>,
}

pub fn gen(ctx: &Context, args: GenArgs) -> Result<()> {
    let mut config: GenerateConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => GenerateConfig::default(),
    };
    if let Some(s) = ctx.g.seed {
        config.seed = s;
    }
    if let Some(n) = args.train_per_class {
        config.train_per_class = n;
    }
    if let Some(n) = args.test_per_class {
        config.test_per_class = n;
    }
    let dir = ctx.out_dir("gen")?;
    if dir.exists() {
        let empty = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_none();
        if !empty {
            return Err(Error::Input(format!("{} exists and is not empty", dir.display())));
        }
        fs::remove_dir(dir).map_err(|e| Error::io(dir, e))?;
    }
    let data = gesture::generate(&config)?;
    let out = Outputs::new(dir)?;
    let files = gesture::export(&data, dir)?;
    out.commit();
    println!(
        "wrote {} train + {} test samples ({} files) to {}",
        data.train.len(),
        data.test.len(),
        files.len() + 1,
        dir.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Trainer config (JSON: seed, lr, epochs, batch_size, ...).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Serialize)]
struct TrainReport {
    best_epoch: usize,
    train: train::Evaluation,
    test: train::Evaluation,
    /// Test accuracy of the lowered program under the chosen array mode.
    lowered_test_accuracy: f64,
    /// Test samples whose lowered sums equal four times the reference scores.
    lowered_agreement: usize,
}

pub fn train(ctx: &Context, args: TrainArgs) -> Result<()> {
    let mut config: TrainConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = ctx.g.seed {
        config.seed = s;
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(lr) = args.lr {
        config.lr = lr;
    }
    if let Some(b) = args.batch_size {
        config.batch_size = b;
    }
    let data = ctx
        .dataset(&default_class_names())?
        .ok_or_else(|| Error::Input("`train` needs --dataset <DIR>".into()))?;
    let dir = ctx.out_dir("train")?;
    let outcome = train::train(&data, &config)?;
    let model = &outcome.model;
    let runner = ctx.runner(model)?;
    let mut state = runner.new_state(runner.config().noise)?;
    let (mut lowered_correct, mut agree) = (0, 0);
    for s in &data.test {
        let low = runner.run_on(&mut state, &s.image)?;
        let reference = reference_infer(model, &s.image)?;
        lowered_correct += (low.predicted == s.label) as usize;
        agree += scaled_equal(&low.sums, &reference.scores) as usize;
    }
    let report = TrainReport {
        best_epoch: outcome.best_epoch,
        train: evaluate(model, &data.train)?,
        test: evaluate(model, &data.test)?,
        lowered_test_accuracy: ratio(lowered_correct, data.test.len()),
        lowered_agreement: agree,
    };
    let mut out = Outputs::new(dir)?;
    out.write("weights.json", model.save_weights().as_bytes())?;
    out.write("train_log.csv", outcome.log_csv().as_bytes())?;
    out.write_json("evaluation.json", &report)?;
    out.commit();
    println!(
        "best_epoch={} train_acc={:.4} test_acc={:.4} lowered_test_acc={:.4} agree={}/{}",
        report.best_epoch,
        report.train.accuracy,
        report.test.accuracy,
        report.lowered_test_accuracy,
        agree,
        data.test.len()
    );
    Ok(())
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn scaled_equal(sums: &[i64], scores: &[i64]) -> bool {
    sums.len() == scores.len()
        && sums
            .iter()
            .zip(scores)
            .all(|(&s, &r)| s == REPLICATION_FACTOR * r)
}

pub fn lower(ctx: &Context) -> Result<()> {
    let model = ctx.model()?;
    let runner = ctx.runner(&model)?;
    let dir = ctx.out_dir("lower")?;
    let mut out = Outputs::new(dir)?;
    out.write("program.lst", runner.program().disassemble().as_bytes())?;
    out.write_json("plan.json", runner.plan())?;
    out.commit();
    println!(
        "instructions={} stages={}",
        runner.plan().instruction_count,
        runner
            .plan()
            .stages
            .iter()
            .map(|s| format!("{}:{}", s.name, s.end - s.start))
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Input images (PBM at network size, or PGM to binarize and downsample).
    images: Vec<PathBuf>,
    /// Also run N seeded random inputs and report oracle agreement.
    #[arg(long, value_name = "N")]
    check: Option<usize>,
}

pub fn infer(ctx: &Context, args: InferArgs) -> Result<()> {
    let model = ctx.model()?;
    let size = model.geometry().block_size();
    let inputs: Vec<(String, BitImage)> = args
        .images
        .iter()
        .map(|p| read_input(p, size).map(|img| (display_name(p), img)))
        .collect::<Result<_>>()?;
    let data = ctx.dataset(model.class_names())?;
    if inputs.is_empty() && args.check.is_none() && data.is_none() {
        return Err(Error::Input("`infer` needs image paths, --check N or --dataset".into()));
    }
    let runner = ctx.runner(&model)?;
    let mut state = runner.new_state(runner.config().noise)?;
    let names = model.class_names();
    for (name, img) in &inputs {
        let low = runner.run_on(&mut state, img)?;
        let reference = reference_infer(&model, img)?;
        let agree = scaled_equal(&low.sums, &reference.scores) && low.predicted == reference.predicted;
        println!(
            "{name} sums={} predicted={} reference={} agree={}",
            low.sums.iter().map(i64::to_string).collect::<Vec<_>>().join(","),
            names[low.predicted],
            names[reference.predicted],
            if agree { "yes" } else { "no" }
        );
    }
    if let Some(n) = args.check {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.g.seed.unwrap_or(0));
        let mut agree = 0;
        for _ in 0..n {
            let density: f64 = rng.random();
            let img = BitImage::from_fn(size, size, |_, _| rng.random::<f64>() < density);
            let low = runner.run_on(&mut state, &img)?;
            let reference = reference_infer(&model, &img)?;
            agree += (scaled_equal(&low.sums, &reference.scores)
                && low.predicted == reference.predicted) as usize;
        }
        println!("check: {agree}/{n} agree");
    }
    if let Some(data) = data {
        for split in [Split::Train, Split::Test] {
            let samples = data.samples(split);
            if samples.is_empty() {
                continue;
            }
            let (mut correct, mut agree) = (0, 0);
            for s in samples {
                let low = runner.run_on(&mut state, &s.image)?;
                let reference = reference_infer(&model, &s.image)?;
                correct += (low.predicted == s.label) as usize;
                agree += (scaled_equal(&low.sums, &reference.scores)
                    && low.predicted == reference.predicted) as usize;
            }
            println!(
                "{}: accuracy={:.4} agree={agree}/{}",
                split.name(),
                ratio(correct, samples.len()),
                samples.len()
            );
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Also print per-opcode instruction counts.
    #[arg(long)]
    detail: bool,
}

pub fn bench(ctx: &Context, args: BenchArgs) -> Result<()> {
    let model = ctx.model()?;
    let runner = ctx.runner(&model)?;
    let report = estimate(runner.program(), &ctx.cost()?)?;
    println!("{report}");
    if args.detail {
        println!("instructions={}", report.instruction_count());
        for (op, n) in &report.counts {
            println!("{op}={n}");
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct LoopArgs {
    /// Frame list (JSON: {"frames": [{"t_us": 0, "file": "a.pgm"}, ...]}),
    /// paths relative to the list. Without it the dataset test split (or a
    /// small generated set) is streamed at --fps.
    #[arg(long, value_name = "FILE")]
    frames: Option<PathBuf>,
    /// Frame rate of the generated stream; defaults to the cost-model throughput.
    #[arg(long)]
    fps: Option<f64>,
    /// Simulated run length.
    #[arg(long, default_value_t = 1_000_000)]
    duration_us: u64,
    /// Number of servos with the default angle table (1 to 5).
    #[arg(long, default_value_t = 1)]
    servos: usize,
    /// Servo bank (JSON list of servo models); overrides --servos.
    #[arg(long, value_name = "FILE")]
    bank: Option<PathBuf>,
}

#[derive(Deserialize)]
struct FrameList {
    frames: Vec<FrameEntry>,
}

#[derive(Deserialize)]
struct FrameEntry {
    t_us: u64,
    file: PathBuf,
}

#[derive(Serialize)]
struct LoopReport<'a> {
    inference_latency_us: u64,
    pwm_period_us: u64,
    summary: &'a servo::ReactionSummary,
    frames: &'a [servo::FrameReaction],
}

pub fn run_loop(ctx: &Context, args: LoopArgs) -> Result<()> {
    require_file(&args.frames, "frame list")?;
    require_file(&args.bank, "servo bank")?;
    let model = ctx.model()?;
    let cost = ctx.cost()?;
    let runner = ctx.runner(&model)?;
    let size = model.geometry().block_size();
    let bank = match &args.bank {
        Some(p) => ServoBank::new(read_json::<Vec<ServoModel>>(p)?)?,
        None => ServoBank::new(vec![ServoModel::default(); args.servos])?,
    };
    let frames: Vec<TimedFrame> = match &args.frames {
        Some(list) => {
            let base = list.parent().unwrap_or(Path::new("."));
            read_json::<FrameList>(list)?
                .frames
                .into_iter()
                .map(|f| {
                    Ok(TimedFrame {
                        t_us: f.t_us,
                        image: read_input(&base.join(&f.file), size)?,
                    })
                })
                .collect::<Result<_>>()?
        }
        None => {
            let data = match ctx.dataset(model.class_names())? {
                Some(d) => d,
                None => gesture::generate(&GenerateConfig {
                    seed: ctx.g.seed.unwrap_or(GenerateConfig::default().seed),
                    train_per_class: 0,
                    test_per_class: 10,
                    ..GenerateConfig::default()
                })?,
            };
            let pool = if data.test.is_empty() { &data.train } else { &data.test };
            if pool.is_empty() {
                return Err(Error::Dataset("dataset has no samples".into()));
            }
            let fps = match args.fps {
                Some(f) => f,
                None => estimate(runner.program(), &cost)?.throughput_fps,
            };
            if !(fps.is_finite() && fps > 0.0) {
                return Err(Error::Input(format!("frame rate {fps} must be positive and finite")));
            }
            servo::steady_frame_times(fps, args.duration_us)
                .into_iter()
                .enumerate()
                .map(|(i, t_us)| TimedFrame {
                    t_us,
                    image: pool[i % pool.len()].image.clone(),
                })
                .collect()
        }
    };
    let timeline = servo::run_loop(&frames, &runner, &cost, &bank, args.duration_us)?;
    let reactions = servo::reaction_latency(&timeline);
    let summary = servo::summarize(&reactions);
    let dir = ctx.out_dir("loop")?;
    let mut out = Outputs::new(dir)?;
    out.write("timeline.csv", timeline.to_csv().as_bytes())?;
    out.write_json(
        "reactions.json",
        &LoopReport {
            inference_latency_us: timeline.inference_latency_us,
            pwm_period_us: timeline.pwm_period_us,
            summary: &summary,
            frames: &reactions,
        },
    )?;
    out.commit();
    println!(
        "latency_us={} period_us={} {summary}",
        timeline.inference_latency_us, timeline.pwm_period_us
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    /// Input image (PBM at network size, or PGM).
    image: PathBuf,
}

pub fn dump(ctx: &Context, args: DumpArgs) -> Result<()> {
    let model = ctx.model()?;
    let input = read_input(&args.image, model.geometry().block_size())?;
    let runner = ctx.runner(&model)?;
    let plan = runner.plan().clone();
    let regs = &plan.registers;
    let stage_end = |name: &str| plan.stage(name).map(|s| s.end.saturating_sub(1));
    let snapshots: Vec<(usize, String, String)> = [
        ("replicate", "post_replicate", &regs.replica),
        ("conv", "post_conv", &regs.acc),
        ("relu", "post_relu", &regs.acc),
        ("maxpool", "post_pool", &regs.pool),
    ]
    .into_iter()
    .filter_map(|(stage, file, reg)| stage_end(stage).map(|i| (i, file.to_string(), reg.clone())))
    .collect();
    let sums_at: Vec<(usize, String)> = runner
        .program()
        .instructions()
        .iter()
        .enumerate()
        .filter_map(|(i, ins)| match ins {
            Instruction::GlobalSum { label, .. } => Some((i, label.clone())),
            _ => None,
        })
        .collect();
    let relu_flag_at = stage_end("relu").map(|e| e.saturating_sub(1));

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut failure = None;
    let mut state = runner.new_state(runner.config().noise)?;
    let scores = runner.run_observed(&mut state, &input, |i, st| {
        let mut grab = |name: String, reg: &str, digital: bool| {
            let bytes = if digital {
                st.digital(reg).map(|p| encode_pbm(&p.to_image()))
            } else {
                st.analog(reg).map(|p| encode_pgm(&analog_to_gray(p)))
            };
            match bytes {
                Ok(b) => files.push((name, b)),
                Err(e) => failure = Some(e),
            }
        };
        if i == 0 {
            grab("pix.pgm".into(), &regs.input, false);
        }
        for (at, file, reg) in &snapshots {
            if *at == i {
                grab(format!("{file}.pgm"), reg, false);
            }
        }
        if relu_flag_at == Some(i) {
            grab("relu_keep.pbm".into(), &regs.flag, true);
        }
        if let Some(k) = sums_at.iter().position(|(at, _)| *at == i) {
            grab(format!("class_{k}_{}.pgm", sums_at[k].1), &regs.fc, false);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let dir = ctx.out_dir("dump")?;
    let mut out = Outputs::new(dir)?;
    out.write("input.pbm", &encode_pbm(&input))?;
    for (name, bytes) in &files {
        out.write(name, bytes)?;
    }
    let mut summary = String::new();
    for (k, (_, label)) in sums_at.iter().enumerate() {
        let _ = writeln!(summary, "{label}={}", scores.sums[k]);
    }
    let _ = writeln!(summary, "predicted={}", model.class_names()[scores.predicted]);
    out.write("sums.txt", summary.as_bytes())?;
    out.commit();
    print!("{summary}");
    Ok(())
}
