//! `motif`: data generation, flow and heatmap tooling, training, sampling,
//! evaluation, the annotation service and offline tallies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use motif_core::annoservice::{self, PairInput, Service, SessionSpec};
use motif_core::diffusion::{prompt_library, train, Generator, TrainConfig};
use motif_core::evalkit::{
    compare, flag_rows, loss_ratio, render_table, Candidate, EvalOptions,
};
use motif_core::motionmap::{estimate_video_flow, heatmap_from_flow, motion_stats_from_flow, FlowParams, HeatmapParams};
use motif_core::synthvid::container::{export_png_frames, read_png_frame};
use motif_core::synthvid::{
    build_bench, gen_dataset, read_container, write_container, BenchConfig, BenchManifest, DatasetConfig, Verb,
};
use motif_core::{Dims4, Tensor4};

#[derive(Parser, Debug, Serialize)]
#[command(name = "motif", version, about = "Motion focal loss laboratory")]
struct Cli {
    /// Base directory for relative output paths.
    #[arg(long, global = true, env = "MOTIF_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for the annotation service.
    #[arg(long, global = true, env = "MOTIF_THREADS")]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Render synthetic clips with oracle flow.
    Data(DataArgs),
    /// Build the synthetic image-prompt benchmark.
    Bench(BenchArgs),
    /// Estimate optical flow for a clip.
    Flow(FlowArgs),
    /// Motion heatmap of a clip plus a stats line.
    Heatmap(HeatmapArgs),
    /// Train a toy denoiser.
    Train(TrainArgs),
    /// Sample a video from a checkpoint.
    Gen(GenArgs),
    /// Score checkpoints on the benchmark.
    Eval(EvalArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
    /// Recompute aggregates from a vote log.
    Tally(TallyArgs),
}

#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// Dataset config (TOML); defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    count: usize,
    #[arg(long, default_value = "data")]
    out: PathBuf,
    /// Also export PNG frames.
    #[arg(long)]
    png: bool,
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    /// Bench config (TOML); defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 11)]
    seed: u64,
    #[arg(long, default_value = "bench")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct FlowArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = FlowParams::default().alpha)]
    alpha: f32,
    #[arg(long, default_value_t = FlowParams::default().iters)]
    iters: usize,
}

#[derive(Args, Debug, Serialize)]
struct HeatmapArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = HeatmapParams::default().gain)]
    gain: f64,
    #[arg(long, default_value_t = HeatmapParams::default().threshold)]
    threshold: f64,
    /// Binarization threshold for the stats line.
    #[arg(long, default_value_t = 0.5)]
    mask_threshold: f32,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config step count.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Start frame: PNG or clip container (frame 0 is used).
    #[arg(long)]
    image: PathBuf,
    /// Prompt index or exact prompt text.
    #[arg(long)]
    prompt: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    guidance: Option<f64>,
    #[arg(long, default_value = "gen.bin")]
    out: PathBuf,
    /// Also export PNG frames next to the output.
    #[arg(long)]
    png: bool,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Checkpoint to score; repeatable.
    #[arg(long)]
    ckpt: Vec<PathBuf>,
    /// Add the static baseline row.
    #[arg(long = "static")]
    include_static: bool,
    /// Bench manifest (manifest.jsonl).
    #[arg(long)]
    bench: PathBuf,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Keep only records the direction classifier can score.
    #[arg(long)]
    directional: bool,
    /// Keep every k-th record.
    #[arg(long, default_value_t = 1)]
    every: usize,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 7.5)]
    guidance: f64,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Held-out clips for the loss-ratio curve; 0 skips it.
    #[arg(long, default_value_t = 0)]
    valset: usize,
}

#[derive(Args, Debug, Serialize)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// JSON file with `spec` and `pairs`; created at startup if given.
    #[arg(long)]
    session_config: Option<PathBuf>,
    /// Asset root; defaults to the session config's directory.
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long, default_value = "votes")]
    log_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TallyArgs {
    #[arg(long)]
    log: PathBuf,
    /// Print JSON instead of the summary.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn under(cli: &Cli, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        cli.out_dir.join(p)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes `<dir>/<name>.config.json` with the parsed invocation.
fn echo_config(cli: &Cli, dir: &Path, name: &str) -> Result<()> {
    ensure_dir(dir)?;
    let path = dir.join(format!("{name}.config.json"));
    std::fs::write(&path, serde_json::to_string_pretty(cli)?).with_context(|| format!("writing {}", path.display()))
}

fn parent_of(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).filter(|d| !d.as_os_str().is_empty()).unwrap_or_else(|| ".".into())
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Data(a) => cmd_data(cli, a),
        Command::Bench(a) => cmd_bench(cli, a),
        Command::Flow(a) => cmd_flow(cli, a),
        Command::Heatmap(a) => cmd_heatmap(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Gen(a) => cmd_gen(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Serve(a) => cmd_serve(cli, a),
        Command::Tally(a) => cmd_tally(a),
    }
}

#[derive(Serialize)]
struct ClipIndex<'a> {
    file: String,
    flow: String,
    scenario: &'a str,
    prompt_index: usize,
    prompt_text: &'a str,
    verb: Verb,
    seed: u64,
}

fn cmd_data(cli: &Cli, a: &DataArgs) -> Result<()> {
    let out = under(cli, &a.out);
    echo_config(cli, &out, "data")?;
    let mut cfg: DatasetConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => DatasetConfig::default(),
    };
    cfg.size = Some(a.count);
    let (lib, vocab) = prompt_library();
    let mut index = String::new();
    for (i, clip) in gen_dataset(&lib, &vocab, &cfg, a.seed)?.enumerate() {
        let clip = clip?;
        let file = format!("clip_{i:04}.bin");
        let flow = format!("clip_{i:04}.flow.bin");
        write_container(&out.join(&file), &clip.video, clip.seed)?;
        write_container(&out.join(&flow), &clip.flow.flow, clip.seed)?;
        if a.png {
            export_png_frames(&out.join("png"), &format!("clip_{i:04}"), &clip.video)?;
        }
        index.push_str(&serde_json::to_string(&ClipIndex {
            file,
            flow,
            scenario: &clip.scenario,
            prompt_index: clip.prompt.index,
            prompt_text: &clip.prompt.text,
            verb: clip.prompt.verb,
            seed: clip.seed,
        })?);
        index.push('\n');
    }
    std::fs::write(out.join("clips.jsonl"), index)?;
    println!("wrote {} clips to {}", a.count, out.display());
    Ok(())
}

fn cmd_bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let out = under(cli, &a.out);
    echo_config(cli, &out, "bench")?;
    let cfg: BenchConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => BenchConfig::default(),
    };
    let (lib, vocab) = prompt_library();
    let (manifest, images) = build_bench(&lib, &vocab, &cfg, a.seed, Some(&out))?;
    let c = manifest.counts();
    println!(
        "bench: {} scenarios, {} images, {} prompts, {} pairs -> {}",
        c.scenarios,
        images.len(),
        c.prompts,
        c.pairs,
        out.join("manifest.jsonl").display()
    );
    Ok(())
}

fn cmd_flow(cli: &Cli, a: &FlowArgs) -> Result<()> {
    let out = under(cli, &a.out);
    echo_config(cli, &parent_of(&out), "flow")?;
    let (video, seed) = read_container(&a.input)?;
    let params = FlowParams { alpha: a.alpha, iters: a.iters, ..FlowParams::default() };
    let t = Instant::now();
    let flow = estimate_video_flow(&video, &params)?;
    write_container(&out, &flow.flow, seed)?;
    let stats = motion_stats_from_flow(&flow, HeatmapParams::default(), 0.5)?;
    println!(
        "flow {} pairs in {:.2}s: mean_intensity={:.4} moving_fraction={:.4} static_fraction={:.4}",
        flow.pairs(),
        t.elapsed().as_secs_f64(),
        stats.mean_intensity,
        stats.moving_fraction,
        stats.static_fraction
    );
    Ok(())
}

fn cmd_heatmap(cli: &Cli, a: &HeatmapArgs) -> Result<()> {
    let out = under(cli, &a.out);
    echo_config(cli, &parent_of(&out), "heatmap")?;
    let (video, seed) = read_container(&a.input)?;
    let params = HeatmapParams { gain: a.gain, threshold: a.threshold };
    let flow = estimate_video_flow(&video, &FlowParams::default())?;
    let heat = heatmap_from_flow(&flow, params)?;
    write_container(&out, &heat, seed)?;
    let stats = motion_stats_from_flow(&flow, params, a.mask_threshold)?;
    println!(
        "heatmap {}x{}x{}: mean_intensity={:.4} moving_fraction={:.4} static_fraction={:.4}",
        heat.dims().frames,
        heat.dims().height,
        heat.dims().width,
        stats.mean_intensity,
        stats.moving_fraction,
        stats.static_fraction
    );
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let out = under(cli, &a.out);
    let mut cfg = TrainConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    cfg.validate()?;
    echo_config(cli, &out, "train")?;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string())?;
    let start = Instant::now();
    let every = cfg.log_every.max(1);
    let run = train(&cfg, |s| {
        if s.step % every == 0 || s.step == cfg.steps {
            println!(
                "step {:>6} diffusion {:.5} motif {:.5} total {:.5} elapsed {:.1}s",
                s.step,
                s.diffusion,
                s.motif,
                s.total,
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    run.checkpoint.save(out.join("checkpoint.bin"))?;
    let mut log = String::new();
    for s in &run.log {
        log.push_str(&serde_json::to_string(s)?);
        log.push('\n');
    }
    std::fs::write(out.join("train_log.jsonl"), log)?;
    println!("checkpoint -> {}", out.join("checkpoint.bin").display());
    Ok(())
}

fn load_start_frame(path: &Path) -> Result<Tensor4<f32>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        return Ok(read_png_frame(path)?);
    }
    let (video, _) = read_container(path)?;
    let d = video.dims();
    if d.channels != 3 {
        bail!("{} has {} channels, expected 3", path.display(), d.channels);
    }
    Ok(Tensor4::from_vec(Dims4::new(1, d.height, d.width, 3), video.frame(0).to_vec())?)
}

fn resolve_prompt(text_or_index: &str) -> Result<usize> {
    let (lib, vocab) = prompt_library();
    if let Ok(i) = text_or_index.parse::<usize>() {
        if i < vocab.len() {
            return Ok(i);
        }
        bail!("prompt index {i} out of range (vocabulary has {})", vocab.len());
    }
    for s in &lib {
        for p in s.prompt_specs(&vocab)? {
            if p.text == text_or_index {
                return Ok(p.index);
            }
        }
    }
    bail!("unknown prompt {text_or_index:?}")
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    let out = under(cli, &a.out);
    echo_config(cli, &parent_of(&out), "gen")?;
    let gen = Generator::load(&a.ckpt)?;
    let image = load_start_frame(&a.image)?;
    let prompt = resolve_prompt(&a.prompt)?;
    let steps = a.steps.unwrap_or(gen.config.sampling.steps);
    let guidance = a.guidance.unwrap_or(gen.config.sampling.guidance);
    let t = Instant::now();
    let video = gen.generate(&image, prompt, steps, guidance, a.seed)?;
    write_container(&out, &video, a.seed)?;
    if a.png {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("gen").to_string();
        export_png_frames(&parent_of(&out), &stem, &video)?;
    }
    println!(
        "generated {} frames (prompt {prompt}, {steps} steps, g={guidance}) in {:.2}s -> {}",
        video.dims().frames,
        t.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    if a.ckpt.is_empty() && !a.include_static {
        bail!("nothing to evaluate: pass --ckpt and/or --static");
    }
    if a.every == 0 {
        bail!("--every must be >= 1");
    }
    let out = under(cli, &a.out);
    echo_config(cli, &parent_of(&out), "eval")?;
    let (lib, vocab) = prompt_library();
    let manifest = BenchManifest::load(&a.bench)?;
    let mut records = manifest.records;
    if a.directional {
        records = motif_core::evalkit::classifiable(&records);
    }
    let records: Vec<_> = records.into_iter().step_by(a.every).collect();
    let models = a
        .ckpt
        .iter()
        .map(|p| Generator::load(p).map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    let render = match models.first() {
        Some(g) => g.config.data.render.clone(),
        None => Default::default(),
    };
    let mut candidates: Vec<(String, Candidate)> = a
        .ckpt
        .iter()
        .zip(&models)
        .map(|(p, g)| (label(p), Candidate::Model(g)))
        .collect();
    if a.include_static {
        candidates.push(("static".to_string(), Candidate::Static));
    }
    let opts = EvalOptions { steps: a.steps, guidance: a.guidance, seeds: a.seeds.clone(), ..EvalOptions::default() };
    let t = Instant::now();
    let mut cmp = compare(&candidates, &records, &lib, &vocab, &render, &opts)?;
    if a.valset > 0 {
        let cfg = DatasetConfig { size: Some(a.valset), render: render.clone(), ..DatasetConfig::default() };
        let val = gen_dataset(&lib, &vocab, &cfg, 0x0DA7A)?.collect::<motif_core::Result<Vec<_>>>()?;
        for (report, (_, c)) in cmp.reports.iter_mut().zip(&candidates) {
            if let Candidate::Model(g) = c {
                report.loss_ratio = Some(loss_ratio(g, &val, 0.5, 5, 2, 0x0A710)?);
            }
        }
        flag_rows(&mut cmp.reports, opts.still_tolerance);
        cmp.table = render_table(&cmp.reports);
    }
    std::fs::write(&out, serde_json::to_string_pretty(&cmp.reports)?)?;
    print!("{}", cmp.table);
    println!("{} pairs in {:.1}s; report -> {}", records.len(), t.elapsed().as_secs_f64(), out.display());
    Ok(())
}

fn label(p: &Path) -> String {
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    if stem == "checkpoint" {
        if let Some(dir) = p.parent().and_then(|d| d.file_name()).and_then(|d| d.to_str()) {
            return dir.to_string();
        }
    }
    stem.to_string()
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionFile {
    spec: SessionSpec,
    pairs: Vec<PairInput>,
}

fn cmd_serve(cli: &Cli, a: &ServeArgs) -> Result<()> {
    let log_dir = under(cli, &a.log_dir);
    echo_config(cli, &log_dir, "serve")?;
    let assets = match (&a.assets, &a.session_config) {
        (Some(p), _) => p.clone(),
        (None, Some(c)) => parent_of(c),
        (None, None) => PathBuf::from("."),
    };
    let svc = Arc::new(Service::new(&log_dir, &assets, annoservice::system_clock()));
    if let Some(path) = &a.session_config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: SessionFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let id = file.spec.session_id.clone();
        let (tasks, excluded) = svc.create(file.spec, &file.pairs)?;
        println!("session {id}: {tasks} tasks, {} excluded; log {}", excluded.len(), svc.log_path(&id).display());
    }
    let addr: std::net::SocketAddr = format!("{}:{}", a.host, a.port).parse().context("bad --host/--port")?;
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = cli.threads {
        rt.worker_threads(n.max(1));
    }
    let rt = rt.enable_all().build()?;
    rt.block_on(annoservice::serve(addr, svc))?;
    Ok(())
}

fn cmd_tally(a: &TallyArgs) -> Result<()> {
    let r = annoservice::tally(&a.log)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else {
        println!("{}", r.summary());
    }
    Ok(())
}
