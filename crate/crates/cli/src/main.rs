//! `ovt`: transcription, streaming, evaluation and diagnostics.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 invalid data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ov_core::decoder::DecoderParams;
use ov_core::dsp::{self, synth, FeatureDump, Waveform};
use ov_core::eval::{evaluate_files, pair_directories};
use ov_core::model::{count_parameters, load_weights, receptive_field, Component, ModelConfig, ModelWeights};
use ov_core::stream::{benchmark_rtf, benchmark_stream_rtf, StreamConfig, StreamState};
use ov_core::train::{self, LossWeights, ScheduleParams, SyntheticBatch};
use ov_core::{write_midi, NoteEvent, OvError, Score, Transcriber};

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::Data(_) => 4,
        }
    }
}

impl From<OvError> for Failure {
    fn from(e: OvError) -> Self {
        match e {
            OvError::Io(_) => Failure::Io(e.to_string()),
            OvError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(io_err(path))
}

#[derive(Parser)]
#[command(name = "ovt", version, about = "Onset and velocity piano transcription")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct DecoderFlags {
    /// Smoothing sigma in frames.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Peak threshold.
    #[arg(long, default_value_t = 0.74)]
    rho: f64,
    /// Onset time shift in seconds.
    #[arg(long, default_value_t = -0.01, allow_hyphen_values = true)]
    mu: f64,
}

impl DecoderFlags {
    fn params(&self) -> CliResult<DecoderParams> {
        let p = DecoderParams {
            sigma_frames: self.sigma,
            threshold: self.rho,
            shift_s: self.mu,
            kernel_radius: (3.0 * self.sigma).ceil().max(1.0) as usize,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Paper,
    Micro,
}

impl Preset {
    fn config(self) -> ModelConfig {
        match self {
            Preset::Paper => ModelConfig::paper(),
            Preset::Micro => ModelConfig::micro(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Transcribe a WAV file to MIDI.
    Transcribe {
        input: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// Onset stages to evaluate (default: all).
        #[arg(long)]
        stages: Option<usize>,
        #[command(flatten)]
        decoder: DecoderFlags,
        /// Write onset and velocity rolls as a two-plane OVF1 file.
        #[arg(long)]
        dump_rolls: Option<PathBuf>,
    },
    /// Chunked transcription; prints one JSON object per event.
    Stream {
        /// WAV file, or `-` for raw little-endian f32 mono 16 kHz on stdin.
        input: String,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        stages: Option<usize>,
        #[command(flatten)]
        decoder: DecoderFlags,
        /// Samples per pushed chunk.
        #[arg(long, default_value_t = 1024)]
        chunk: usize,
        #[arg(long, default_value_t = 4.0)]
        context: f64,
        #[arg(long, default_value_t = 5)]
        lookahead: usize,
        #[arg(long, default_value_t = 21)]
        hop_frames: usize,
        /// Also write all events to this MIDI file on completion.
        #[arg(long)]
        midi: Option<PathBuf>,
    },
    /// Score estimated MIDI files against references, paired by file name.
    Evaluate {
        reference: PathBuf,
        estimate: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Dump log-mel features (and their derivative) as OVF1.
    Features {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Real-time factor per onset-stage count.
    Bench {
        #[arg(long)]
        weights: PathBuf,
        /// Audio to process; synthesized when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 120.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also time the streaming path.
        #[arg(long)]
        stream: bool,
    },
    /// Finite-difference gradient check of the training loss on a micro model.
    Gradcheck {
        #[arg(long, default_value_t = 64)]
        coords: usize,
        #[arg(long, default_value_t = train::DEFAULT_STEP)]
        h: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Loss trace of finite-difference gradient descent on a tiny model.
    Overfit {
        #[arg(long, default_value_t = 300)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Learning-rate schedule as `step,value` CSV.
    LrSchedule {
        #[arg(long, default_value_t = 2000)]
        steps: u64,
    },
    /// List tensors of an OVW1 file with shapes and checksums.
    InspectWeights { weights: PathBuf },
    /// Write He-initialized weights.
    InitWeights {
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "paper")]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(path: &Path) -> CliResult<ModelWeights> {
    Ok(load_weights(&read_file(path)?)?)
}

fn load_wav(path: &Path) -> CliResult<Waveform> {
    Ok(dsp::ingest_audio(&read_file(path)?)?)
}

fn check_stages(stages: Option<usize>, w: &ModelWeights) -> CliResult {
    let n = w.config().onset_stage_count;
    match stages {
        Some(s) if s == 0 || s > n => Err(Failure::Usage(format!("--stages {s}: weights have {n} onset stages"))),
        _ => Ok(()),
    }
}

fn event_json(e: &NoteEvent) -> String {
    serde_json::json!({ "key": e.key, "velocity": e.velocity, "onset_s": e.onset_s }).to_string()
}

fn cmd_transcribe(
    input: &Path,
    weights: &Path,
    output: &Path,
    stages: Option<usize>,
    decoder: DecoderFlags,
    dump_rolls: Option<&Path>,
) -> CliResult {
    let params = decoder.params()?;
    let w = load(weights)?;
    check_stages(stages, &w)?;
    let audio = load_wav(input)?;
    let clock = Instant::now();
    let t = Transcriber::new(&w, stages, params)?;
    let out = t.transcribe(&audio)?;
    let elapsed = clock.elapsed().as_secs_f64();
    write_file(output, &write_midi(&out.score))?;
    if let Some(p) = dump_rolls {
        let (k, n) = (out.onset_roll.keys(), out.onset_roll.frames());
        let mut data = out.onset_roll.values().to_vec();
        data.extend_from_slice(out.velocity_roll.values());
        write_file(p, &dsp::write_ovf(&FeatureDump::new(k, n, 2, data)?))?;
    }
    println!(
        "{} events, {:.2} s audio in {:.2} s (RTF {:.4})",
        out.score.len(),
        audio.duration_s(),
        elapsed,
        elapsed / audio.duration_s().max(f64::MIN_POSITIVE)
    );
    Ok(())
}

fn read_raw_stdin() -> CliResult<Vec<f32>> {
    let mut bytes = Vec::new();
    io::stdin()
        .read_to_end(&mut bytes)
        .map_err(|e| Failure::Io(format!("stdin: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Failure::Data(format!("stdin length {} is not a multiple of 4", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn cmd_stream(
    input: &str,
    weights: &Path,
    stages: Option<usize>,
    decoder: DecoderFlags,
    chunk: usize,
    config: StreamConfig,
    midi: Option<&Path>,
) -> CliResult {
    if chunk == 0 {
        return Err(Failure::Usage("--chunk must be positive".into()));
    }
    let params = decoder.params()?;
    let w = load(weights)?;
    check_stages(stages, &w)?;
    let t = Arc::new(Transcriber::new(&w, stages, params)?);
    let mut state = StreamState::new(t, config)?;
    let samples = if input == "-" {
        read_raw_stdin()?
    } else {
        load_wav(Path::new(input))?.samples
    };
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut all = Vec::new();
    let mut emit = |events: Vec<NoteEvent>, all: &mut Vec<NoteEvent>| -> CliResult {
        for e in &events {
            writeln!(out, "{}", event_json(e)).map_err(|e| Failure::Io(format!("stdout: {e}")))?;
        }
        out.flush().map_err(|e| Failure::Io(format!("stdout: {e}")))?;
        all.extend(events);
        Ok(())
    };
    for c in samples.chunks(chunk) {
        let ev = state.push_samples(c)?;
        emit(ev, &mut all)?;
    }
    let ev = state.flush()?;
    emit(ev, &mut all)?;
    if let Some(p) = midi {
        let duration = samples.len() as f64 / f64::from(dsp::SAMPLE_RATE_HZ);
        write_file(p, &write_midi(&Score::new(all, duration)))?;
    }
    Ok(())
}

fn cmd_evaluate(reference: &Path, estimate: &Path, csv: Option<&Path>) -> CliResult {
    let (pairs, unpaired) = pair_directories(reference, estimate).map_err(|e| Failure::Io(e.to_string()))?;
    if pairs.is_empty() {
        return Err(Failure::Io(format!(
            "no MIDI files with matching names in {} and {}",
            reference.display(),
            estimate.display()
        )));
    }
    let report = evaluate_files(&pairs);
    if let Some(p) = csv {
        write_file(p, report.to_csv().as_bytes())?;
    }
    print!("{}", report.summary());
    for stem in unpaired {
        println!("unpaired {stem}");
    }
    Ok(())
}

fn cmd_features(input: &Path, output: &Path) -> CliResult {
    let audio = load_wav(input)?;
    let spec = dsp::logmel(&audio)?;
    let mut data = spec.values().to_vec();
    data.extend_from_slice(spec.derivative());
    write_file(output, &dsp::write_ovf(&FeatureDump::new(spec.bins(), spec.frames(), 2, data)?))?;
    println!("{} bins x {} frames", spec.bins(), spec.frames());
    Ok(())
}

fn synthetic_audio(seconds: f64, seed: u64) -> CliResult<Waveform> {
    let notes = (seconds * 4.0).ceil() as usize;
    let score = synth::random_score(seed, seconds, notes, 88);
    Ok(Waveform::new(synth::render_score(&score, dsp::SAMPLE_RATE_HZ), dsp::SAMPLE_RATE_HZ)?)
}

fn cmd_bench(weights: &Path, input: Option<&Path>, seconds: f64, seed: u64, stream: bool) -> CliResult {
    let w = load(weights)?;
    let audio = match input {
        Some(p) => load_wav(p)?,
        None => {
            if !(seconds > 0.0) {
                return Err(Failure::Usage("--seconds must be positive".into()));
            }
            synthetic_audio(seconds, seed)?
        }
    };
    println!("stages,seconds,rtf,events");
    for row in benchmark_rtf(&w, &audio)? {
        println!("{},{:.4},{:.5},{}", row.active_stages, row.seconds, row.rtf, row.events);
    }
    if stream {
        let t = Arc::new(Transcriber::new(&w, None, DecoderParams::default())?);
        let rtf = benchmark_stream_rtf(t, StreamConfig::default(), &audio, 1024)?;
        println!("stream,{:.5}", rtf);
    }
    Ok(())
}

fn cmd_gradcheck(coords: usize, h: f64, seed: u64) -> CliResult {
    let cfg = ModelConfig::micro();
    let batch = SyntheticBatch::single_onset(&cfg, 16, seed)?;
    let params = train::he_init_params::<f64>(&cfg, seed);
    let w = LossWeights::default();
    let report = train::finite_diff_gradcheck(
        |p| train::batch_loss(&cfg, p, &batch, &w).map(|l| l.total),
        &cfg,
        &params,
        coords,
        h,
        seed,
    )?;
    println!("step,value");
    for (i, c) in report.checks.iter().enumerate() {
        println!("{i},{:e}", c.rel_error);
    }
    eprintln!(
        "max relative error {:.3e} over {} coordinates, {} non-smooth",
        report.max_rel_error,
        report.checks.len(),
        report.non_smooth().count()
    );
    Ok(())
}

fn cmd_overfit(steps: usize, lr: f64, seed: u64) -> CliResult {
    let cfg = train::overfit_config();
    let batch = SyntheticBatch::single_onset(&cfg, 12, seed)?;
    let r = train::toy_overfit(&cfg, &batch, steps, lr, seed)?;
    println!("step,value");
    for (i, l) in r.trace.iter().enumerate() {
        println!("{i},{l:e}");
    }
    eprintln!(
        "loss {:.4} -> {:.4} ({:.2}% of initial){}",
        r.initial(),
        r.final_loss(),
        100.0 * r.ratio(),
        if r.diverged { ", diverged" } else { "" }
    );
    Ok(())
}

fn cmd_lr_schedule(steps: u64) -> CliResult {
    let p = ScheduleParams::default();
    p.validate()?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let werr = |e: io::Error| Failure::Io(format!("stdout: {e}"));
    writeln!(out, "step,value").map_err(werr)?;
    for s in 0..=steps {
        writeln!(out, "{s},{}", train::lr_schedule(s, &p)).map_err(werr)?;
    }
    out.flush().map_err(werr)
}

fn cmd_inspect(path: &Path) -> CliResult {
    let w = load(path)?;
    println!("{:<40} {:<20} {:>10}", "name", "shape", "crc32");
    for (name, p) in w.params() {
        println!("{:<40} {:<20} {:>10}", name, format!("{:?}", p.dims), format!("{:08x}", p.crc32()));
    }
    let cfg = w.config();
    println!("tensors: {}", w.params().len());
    println!("onset stages: {}", cfg.onset_stage_count);
    println!(
        "receptive field (frames): stem {}, onset stage {}, velocity stage {}, full {}",
        receptive_field(cfg, Component::Stem),
        receptive_field(cfg, Component::StageOnset),
        receptive_field(cfg, Component::StageVelocity),
        receptive_field(cfg, Component::Full)
    );
    println!("total parameters: {}", count_parameters(cfg));
    Ok(())
}

fn cmd_init(output: &Path, preset: Preset, seed: u64) -> CliResult {
    let w = train::he_init(&preset.config(), seed)?;
    write_file(output, &w.to_bytes())?;
    println!("{} parameters written to {}", count_parameters(w.config()), output.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Transcribe {
            input,
            weights,
            output,
            stages,
            decoder,
            dump_rolls,
        } => cmd_transcribe(&input, &weights, &output, stages, decoder, dump_rolls.as_deref()),
        Command::Stream {
            input,
            weights,
            stages,
            decoder,
            chunk,
            context,
            lookahead,
            hop_frames,
            midi,
        } => cmd_stream(
            &input,
            &weights,
            stages,
            decoder,
            chunk,
            StreamConfig {
                context_s: context,
                emit_lookahead_frames: lookahead,
                chunk_hop_frames: hop_frames,
            },
            midi.as_deref(),
        ),
        Command::Evaluate { reference, estimate, csv } => cmd_evaluate(&reference, &estimate, csv.as_deref()),
        Command::Features { input, output } => cmd_features(&input, &output),
        Command::Bench {
            weights,
            input,
            seconds,
            seed,
            stream,
        } => cmd_bench(&weights, input.as_deref(), seconds, seed, stream),
        Command::Gradcheck { coords, h, seed } => cmd_gradcheck(coords, h, seed),
        Command::Overfit { steps, lr, seed } => cmd_overfit(steps, lr, seed),
        Command::LrSchedule { steps } => cmd_lr_schedule(steps),
        Command::InspectWeights { weights } => cmd_inspect(&weights),
        Command::InitWeights { output, preset, seed } => cmd_init(&output, preset, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) | Failure::Io(m) | Failure::Data(m) => m,
            };
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
