use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use burstrank::capture::{benchmark_interleaved, benchmark_scoring, run_session, BenchInput, RingBufferConfig, StreamFrame, Timing};
use burstrank::dataset::{
    load_dataset, load_manifest, synth_generate, synth_votes, write_manifest, write_pairs_csv, write_votes_csv, FeatureBank,
    LabeledDataset, Split, SynthConfig,
};
use burstrank::evaluation::{attribute_gap_report, metric_report, score_bursts};
use burstrank::featstore::{extract_features, read_pgm, write_feature_map, FILTER_BANK_SIZE};
use burstrank::ranknet::{load_ranker, save_generator, save_ranker, HeadCOrder, HeadKind, RankerModel};
use burstrank::training::{train, TrainConfig, TrainError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "burstrank", version, about = "Burst frame ranking: data, training, evaluation and capture simulation")]
pub struct Cli {
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset with planted attributes.
    Synth(SynthArgs),
    /// Compute feature maps from PGM images.
    Extract(ExtractArgs),
    /// Train a ranker (and optionally the generator).
    Train(TrainArgs),
    /// Evaluate a ranker: Top-1/2/3 and pairwise accuracy.
    Eval(EvalArgs),
    /// Write per-frame scores and the selected frame of each burst.
    Score(ScoreArgs),
    /// Replay bursts through the capture ring buffer.
    Simulate(SimulateArgs),
    /// Measure per-frame scoring latency.
    Bench(BenchArgs),
    /// Latent attribute gap table and histogram for a Head-C ranker.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum HeadArg {
    A,
    B,
    C,
}

impl From<HeadArg> for HeadKind {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::A => HeadKind::A,
            HeadArg::B => HeadKind::B,
            HeadArg::C => HeadKind::C,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Val => Some(Split::Val),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory (manifest.json, pairs.csv, features/, oracle.csv).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub bursts: usize,
    #[arg(long, default_value_t = 11)]
    pub frames: usize,
    /// Latent attribute count.
    #[arg(long, default_value_t = 5)]
    pub attrs: usize,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 4)]
    pub height: usize,
    #[arg(long, default_value_t = 4)]
    pub width: usize,
    /// Per-element feature noise amplitude.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Also write raw annotator votes (votes.csv) from this many voters.
    #[arg(long)]
    pub voters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// A PGM image or a directory of them.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory; one `<stem>.brf` per image.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 28)]
    pub height: usize,
    #[arg(long, default_value_t = 28)]
    pub width: usize,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for checkpoints and the training log.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// key=value config file; flags given here override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub head: Option<HeadArg>,
    /// Latent attribute count C′ (Head-C).
    #[arg(long)]
    pub attrs: Option<usize>,
    /// Head-C pooling order.
    #[arg(long, value_enum)]
    pub head_c_order: Option<OrderArg>,
    /// Adversarial generator.
    #[arg(long, value_enum)]
    pub gan: Option<Toggle>,
    /// L1 weight on the generator residual.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Weight of the real-vs-synthetic ranking term.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tie_margin: Option<f64>,
    /// Total iterations.
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub alternate_every: Option<u64>,
    #[arg(long)]
    pub finetune_iters: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Threads for loading features (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OrderArg {
    ProjectThenPool,
    PoolThenProject,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Ranker checkpoint (with its .json sidecar).
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Only this burst; otherwise every burst in --split.
    #[arg(long)]
    pub burst: Option<String>,
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
    /// Index of the first post-shutter frame (default: middle of the burst).
    #[arg(long)]
    pub shutter_at: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub n_pre: usize,
    #[arg(long, default_value_t = 6)]
    pub n_post: usize,
    /// Record wall-clock latency instead of the reproducible MAC-based model.
    #[arg(long)]
    pub wall_clock: bool,
    #[arg(long, default_value_t = 1.0)]
    pub ns_per_mac: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Benchmark this checkpoint; otherwise a freshly initialised head.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "c")]
    pub head: HeadArg,
    #[arg(long, default_value_t = 5)]
    pub attrs: usize,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 28)]
    pub height: usize,
    #[arg(long, default_value_t = 28)]
    pub width: usize,
    /// Time feature extraction from SIZE×SIZE images as well as the head.
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Interleave heads A, B and C on the same frames instead.
    #[arg(long)]
    pub compare_heads: bool,
    #[arg(long, default_value_t = 300)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Output directory (attribute_gaps.csv, attribute_histogram.csv).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Extract(a) => extract(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Score(a) => score(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        attrs: a.attrs,
        channels: a.channels,
        height: a.height,
        width: a.width,
        noise_amplitude: a.noise,
        val_fraction: a.val_fraction,
        test_fraction: a.test_fraction,
        ..SynthConfig::default()
    };
    let out = synth_generate(&cfg, a.bursts, a.frames, a.seed)?;
    create_dir(&a.out)?;
    write_manifest(&out.dataset, a.out.join("manifest.json"))?;
    write_pairs_csv(out.dataset.pairs(), a.out.join("pairs.csv"))?;
    out.features.save(&out.dataset, &a.out)?;
    if let Some(n) = a.voters {
        write_votes_csv(&synth_votes(&out, n, 0.1, a.seed), a.out.join("votes.csv"))?;
    }
    let mut w = csv::Writer::from_path(a.out.join("oracle.csv"))?;
    let mut header = vec!["burst_id".to_string(), "frame_id".into(), "planted_score".into()];
    header.extend((0..a.attrs).map(|k| format!("attr_{k}")));
    w.write_record(&header)?;
    for ((b, f), attrs) in &out.oracle.attribute_field {
        let mut row = vec![b.clone(), f.clone(), out.oracle.planted_score_of(attrs).to_string()];
        row.extend(attrs.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    log::info!("wrote {} bursts, {} pairs to {}", out.dataset.num_bursts(), out.dataset.pairs().len(), a.out.display());
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let inputs: Vec<PathBuf> = if a.input.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(&a.input)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        v.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")));
        v.sort();
        v
    } else {
        vec![a.input.clone()]
    };
    if inputs.is_empty() {
        bail!("no .pgm images found in {}", a.input.display());
    }
    create_dir(&a.out)?;
    let target = (FILTER_BANK_SIZE, a.height, a.width);
    burstrank::with_threads(a.threads, || {
        inputs.par_iter().try_for_each(|p| -> Result<()> {
            let img = read_pgm(p)?;
            let map = extract_features(&img, target).with_context(|| p.display().to_string())?;
            let stem = p.file_stem().context("image without a file name")?;
            write_feature_map(&map, a.out.join(stem).with_extension("brf"))?;
            Ok(())
        })
    })?;
    log::info!("extracted {} feature maps", inputs.len());
    Ok(())
}

fn load_data(d: &DataArgs, threads: usize) -> Result<(LabeledDataset, FeatureBank)> {
    let ds = load_dataset(&d.manifest, &d.pairs)?;
    let bank = FeatureBank::load(&ds, threads)?;
    Ok((ds, bank))
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            TrainConfig::from_kv(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(h) = a.head {
        cfg.head = h.into();
    }
    if let Some(v) = a.head_c_order {
        cfg.head_c_order = match v {
            OrderArg::ProjectThenPool => HeadCOrder::ProjectThenPool,
            OrderArg::PoolThenProject => HeadCOrder::PoolThenProject,
        };
    }
    if let Some(g) = a.gan {
        cfg.gan = matches!(g, Toggle::On);
    }
    macro_rules! over {
        ($($flag:ident => $field:ident),*) => { $(if let Some(v) = a.$flag { cfg.$field = v; })* };
    }
    over!(attrs => attrs, lambda => lambda_l1, gamma => gamma, tie_margin => tie_margin, iters => total_iters,
          batch => batch_size, lr => lr0, alternate_every => alternate_every, finetune_iters => finetune_iters,
          seed => seed);
    cfg.validate()?;
    Ok(cfg)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = train_config(&a)?;
    let (ds, bank) = load_data(&a.data, a.threads)?;
    create_dir(&a.out)?;
    let noise_dim = cfg.effective_noise_dim();
    let res = match train(&ds, &bank, &cfg) {
        Ok(r) => r,
        Err(TrainError::Diverged { iter, phase, reason, last }) => {
            let (ranker, g) = *last;
            save_ranker(&ranker, &a.out.join("ranker.last_good.brk"), noise_dim)?;
            if let Some(g) = &g {
                save_generator(g, &a.out.join("generator.last_good.brk"))?;
            }
            log::warn!("last finite weights saved under {}", a.out.display());
            return Err(TrainError::Diverged {
                iter,
                phase,
                reason,
                last: Box::new((ranker, g)),
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    save_ranker(&res.ranker, &a.out.join("ranker.brk"), noise_dim)?;
    if let Some(g) = &res.generator {
        save_generator(g, &a.out.join("generator.brk"))?;
    }
    let ck_dir = a.out.join("checkpoints");
    create_dir(&ck_dir)?;
    for ck in &res.checkpoints {
        save_ranker(&ck.ranker, &ck_dir.join(format!("{}.ranker.brk", ck.phase)), noise_dim)?;
        if let Some(g) = &ck.generator {
            save_generator(g, &ck_dir.join(format!("{}.generator.brk", ck.phase)))?;
        }
    }
    let log_path = a.out.join("train_log.jsonl");
    res.log
        .write_jsonl(BufWriter::new(fs::File::create(&log_path)?))
        .with_context(|| format!("writing {}", log_path.display()))?;
    log::info!("trained {} iterations, final phase {}", res.state.iteration, res.state.phase);
    Ok(())
}

fn load_model(path: &Path) -> Result<RankerModel> {
    let (model, _) = load_ranker(path)?;
    Ok(model)
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (ds, bank) = load_data(&a.data, a.threads)?;
    let scores = score_bursts(&model, &ds, &bank, a.split.split(), a.threads)?;
    let report = metric_report(&ds, &scores)?;
    write_json(&report, a.out.as_deref())
}

fn score(a: ScoreArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let ds = load_manifest(&a.manifest)?;
    let bank = FeatureBank::load(&ds, a.threads)?;
    let scores = score_bursts(&model, &ds, &bank, a.split.split(), a.threads)?;
    let out: Vec<_> = scores
        .values()
        .map(|b| json!({ "burst_id": b.burst_id, "selected": b.best(), "scores": b.scores }))
        .collect();
    write_json(&out, a.out.as_deref())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let ds = load_manifest(&a.manifest)?;
    let bank = FeatureBank::load(&ds, 1)?;
    let cfg = RingBufferConfig {
        n_pre: a.n_pre,
        n_post: a.n_post,
        ..RingBufferConfig::default()
    };
    let timing = if a.wall_clock {
        Timing::Wall
    } else {
        Timing::Modelled {
            ns_per_mac: a.ns_per_mac,
        }
    };
    let bursts: Vec<_> = match &a.burst {
        Some(id) => vec![ds.burst(id).with_context(|| format!("unknown burst '{id}'"))?],
        None => ds.bursts().filter(|b| a.split.split().is_none_or(|s| b.split == s)).collect(),
    };
    let mut sessions = Vec::with_capacity(bursts.len());
    for b in bursts {
        let stream: Vec<StreamFrame> = b
            .frames
            .iter()
            .map(|f| StreamFrame {
                frame_id: f.frame_id.clone(),
                features: bank.get(&b.burst_id, &f.frame_id).expect("loaded with the manifest").clone(),
            })
            .collect();
        let shutter = a.shutter_at.unwrap_or(stream.len() / 2);
        let s = run_session(stream, shutter, &cfg, &model, timing).with_context(|| format!("burst {}", b.burst_id))?;
        sessions.push(json!({ "burst_id": b.burst_id, "session": s.report() }));
    }
    write_json(&sessions, a.out.as_deref())
}

fn bench(a: BenchArgs) -> Result<()> {
    let input = match a.image_size {
        Some(size) => {
            if a.channels != FILTER_BANK_SIZE {
                bail!("image input produces {FILTER_BANK_SIZE} channels; pass --channels {FILTER_BANK_SIZE}");
            }
            BenchInput::Images {
                size,
                height: a.height,
                width: a.width,
            }
        }
        None => BenchInput::Features {
            channels: a.channels,
            height: a.height,
            width: a.width,
        },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    if a.compare_heads {
        let heads = [HeadKind::A, HeadKind::B, HeadKind::C];
        let models = heads
            .iter()
            .map(|h| {
                let attrs = if *h == HeadKind::C { a.attrs } else { 0 };
                RankerModel::new(*h, a.channels, attrs, HeadCOrder::default(), &mut rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&RankerModel> = models.iter().collect();
        let stats = burstrank::with_threads(1, || benchmark_interleaved(&refs, input, a.frames, a.seed))?;
        let out: Vec<_> = heads.iter().zip(stats).map(|(h, s)| json!({ "head": h.to_string(), "stats": s })).collect();
        return write_json(&json!({ "input": input.to_string(), "n_frames": a.frames, "heads": out }), None);
    }
    let model = match &a.model {
        Some(p) => load_model(p)?,
        None => {
            let attrs = if matches!(a.head, HeadArg::C) { a.attrs } else { 0 };
            RankerModel::new(a.head.into(), a.channels, attrs, HeadCOrder::default(), &mut rng)?
        }
    };
    let report = benchmark_scoring(&model, input, a.frames, a.threads, a.seed)?;
    write_json(&report, None)
}

fn report(a: ReportArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (ds, bank) = load_data(&a.data, a.threads)?;
    let split = a.split.split();
    let pairs: Vec<_> = ds
        .pairs()
        .iter()
        .filter(|p| split.is_none_or(|s| ds.split_of(&p.burst_id) == Some(s)))
        .cloned()
        .collect();
    let gaps = attribute_gap_report(&model, &pairs, &bank)?;
    create_dir(&a.out)?;
    gaps.write_csv(BufWriter::new(fs::File::create(a.out.join("attribute_gaps.csv"))?))?;
    gaps.histogram(a.bins, None)?
        .write_csv(BufWriter::new(fs::File::create(a.out.join("attribute_histogram.csv"))?))?;
    log::info!("{} pair gaps over {} attributes", gaps.rows.len(), gaps.attrs);
    Ok(())
}
