use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use tanner_baseline::{BpConfig, BpOsd, BpVariant, OsdMode, Schedule};
use tanner_bench::{
    code_key, estimate_ler, fit_points, fit_subthreshold, heatmap_svg, read_csv, resolve_code, timing_svg, write_csv,
    BenchError, BpOsdDecoder, FitOptions, MemoryExperiment, NeuralDecoder, ResultRow, ShotDecoder, SizeConvention,
    StoppingRule,
};
use tanner_core::circuit::{emit_circuit_text, parse_circuit_text};
use tanner_core::code::{build_color_code, build_surface_code, read_code, write_code, BbPreset};
use tanner_core::sample::sample_pauli_frame_with;
use tanner_core::{
    build_extended_tanner, build_memory_circuit, extract_dem, Basis, DetectorErrorModel, NoiseProfile,
    SampleOptions, StabilizerCode, SyndromeBatch,
};
use tanner_neural::config::training_preset;
use tanner_neural::{DecodeMode, GraphQec, ModelCheckpoint, ModelConfig, SizePreset, TrainConfig, Trainer};

#[derive(Parser)]
#[command(name = "tanner-lab", version, about = "Codes, noisy memory circuits, decoders and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a code and write it as text, or validate a code file.
    Code(CodeCmd),
    /// Write the noisy memory circuit of a code.
    Circuit(CircuitArgs),
    /// Sample syndromes into a b01 batch file.
    Sample(SampleArgs),
    /// Extract the detector error model of a circuit file.
    Dem(DemArgs),
    /// Train the neural decoder.
    Train(TrainArgs),
    /// Decode a batch with a trained checkpoint.
    Decode(DecodeArgs),
    /// Decode a batch with BP-OSD.
    DecodeBp(DecodeBpArgs),
    /// Estimate logical error rates and append them to a results table.
    Bench(BenchArgs),
    /// Decode time against the number of cycles.
    Time(TimeArgs),
    /// Fit the sub-threshold scaling law to a results table.
    Fit(FitArgs),
    /// Render a results table as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct CodeCmd {
    #[command(subcommand)]
    action: Option<CodeAction>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    distance: Option<usize>,
    /// Code length, for bivariate bicycle codes.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CodeAction {
    Validate { file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    X,
    Z,
}

impl From<BasisArg> for Basis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::X => Basis::X,
            BasisArg::Z => Basis::Z,
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    /// `color:d3`, `surface:d5`, `bb:n72` or a code file.
    #[arg(long)]
    code: String,
    #[arg(long, default_value_t = 3)]
    cycles: usize,
    #[arg(long, default_value_t = 0.005)]
    p: f64,
    #[arg(long, value_enum, default_value = "z")]
    basis: BasisArg,
}

#[derive(Args)]
struct CircuitArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long)]
    shots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Fork a noiseless readout after every cycle for per-cycle labels.
    #[arg(long)]
    incremental: bool,
    /// Store measurement outcomes instead of detection events.
    #[arg(long)]
    raw_syndromes: bool,
}

#[derive(Args)]
struct DemArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    code: String,
    #[arg(long, value_enum, default_value = "z")]
    basis: BasisArg,
    #[arg(long, default_value_t = 0.005)]
    p: f64,
    /// Model size: tiny, small, medium, medium-plus or large.
    #[arg(long, default_value = "small")]
    preset: String,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Cycles per training sequence.
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop after this many seconds.
    #[arg(long)]
    time_budget: Option<f64>,
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    #[arg(long)]
    loss_log: Option<PathBuf>,
    /// Continue from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Recurrent,
    Parallel,
}

impl From<ModeArg> for DecodeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Recurrent => DecodeMode::Recurrent,
            ModeArg::Parallel => DecodeMode::Parallel,
        }
    }
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Code the checkpoint was trained on.
    #[arg(long)]
    code: String,
    #[arg(long, value_enum, default_value = "z")]
    basis: BasisArg,
    #[arg(long)]
    batch: PathBuf,
    #[arg(long, value_enum, default_value = "recurrent")]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct BpArgs {
    /// Defaults to the number of mechanisms, capped at 1000.
    #[arg(long)]
    max_iters: Option<usize>,
    /// OSD order; only 0 is supported, negative disables OSD.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    osd: i32,
    /// Normalised min-sum with this scale instead of product-sum.
    #[arg(long)]
    min_sum: Option<f64>,
    #[arg(long)]
    parallel_schedule: bool,
}

impl BpArgs {
    fn config(&self, mechanisms: usize) -> Result<BpConfig, BenchError> {
        let mut c = BpConfig::for_mechanisms(mechanisms);
        if let Some(m) = self.max_iters {
            c.max_iterations = m;
        }
        c.osd = match self.osd {
            0 => OsdMode::Order0,
            o if o < 0 => OsdMode::Off,
            o => return Err(BenchError::Invalid(format!("OSD order {o} is not supported"))),
        };
        if let Some(scale) = self.min_sum {
            c.variant = BpVariant::MinSum { scale };
        }
        if self.parallel_schedule {
            c.schedule = Schedule::Parallel;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct DecodeBpArgs {
    #[arg(long)]
    dem: PathBuf,
    #[arg(long)]
    batch: PathBuf,
    #[command(flatten)]
    bp: BpArgs,
    #[arg(long)]
    out: PathBuf,
    /// Per-shot timing CSV.
    #[arg(long)]
    timing: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderArg {
    Nn,
    Bposd,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    decoder: DecoderArg,
    /// One or more codes.
    #[arg(long, value_delimiter = ',', required = true)]
    code: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.005")]
    p: Vec<f64>,
    /// Defaults to the code distance.
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long, value_enum, default_value = "z")]
    basis: BasisArg,
    #[arg(long, default_value_t = 100)]
    min_failures: usize,
    #[arg(long, default_value_t = 10_000_000)]
    max_shots: usize,
    #[arg(long, default_value_t = 1000)]
    batch_shots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint for `--decoder nn` (single code only).
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "parallel")]
    mode: ModeArg,
    #[command(flatten)]
    bp: BpArgs,
    /// Results table; rows are appended when it exists.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TimeArgs {
    #[arg(long, value_enum)]
    decoder: DecoderArg,
    #[arg(long)]
    code: String,
    #[arg(long, default_value_t = 0.005)]
    p: f64,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    cycles: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long, value_enum, default_value = "z")]
    basis: BasisArg,
    /// Checkpoint for `--decoder nn`; a freshly initialised model otherwise.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long, default_value = "small")]
    preset: String,
    #[arg(long, value_enum, default_value = "recurrent")]
    mode: ModeArg,
    #[command(flatten)]
    bp: BpArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Codes left out of the fit.
    #[arg(long, value_delimiter = ',', default_value = "color:d3")]
    exclude: Vec<String>,
    /// Only rows from this decoder.
    #[arg(long)]
    decoder: Option<String>,
    /// Count data qubits only, also for bivariate bicycle codes.
    #[arg(long)]
    data_qubits: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Heatmap,
    Timing,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "heatmap")]
    style: Style,
    #[arg(long)]
    decoder: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

type R<T> = Result<T, BenchError>;

fn create(path: &Path) -> R<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn code_from_args(family: &str, distance: Option<usize>, n: Option<usize>) -> R<StabilizerCode> {
    let need = |v: Option<usize>, what: &str| v.ok_or_else(|| BenchError::Invalid(format!("--{what} is required for {family} codes")));
    Ok(match family {
        "color" => build_color_code(need(distance, "distance")?)?,
        "surface" => build_surface_code(need(distance, "distance")?)?,
        "bb" => {
            let n = need(n, "n")?;
            BbPreset::from_n(n).ok_or_else(|| BenchError::Invalid(format!("no bivariate bicycle code with n = {n}")))?.build()?
        }
        other => return Err(BenchError::Invalid(format!("unknown family `{other}`"))),
    })
}

fn read_batch(path: &Path) -> R<SyndromeBatch> {
    Ok(SyndromeBatch::read_b01(BufReader::new(File::open(path)?))?)
}

/// One line of `k` bits per shot after a `pred shots k` header.
fn write_predictions(path: &Path, shots: usize, k: usize, bits: &[u8]) -> R<()> {
    let mut w = create(path)?;
    writeln!(w, "pred {shots} {k}")?;
    for shot in bits.chunks(k.max(1)) {
        let line: String = shot.iter().map(|&b| if b != 0 { '1' } else { '0' }).collect();
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn model_config(preset: &str) -> R<ModelConfig> {
    if preset == "tiny" {
        return Ok(ModelConfig::tiny());
    }
    let size = SizePreset::parse(preset).ok_or_else(|| BenchError::Invalid(format!("unknown model preset `{preset}`")))?;
    Ok(ModelConfig::preset(size))
}

fn load_model(path: &Path, code: &StabilizerCode, basis: Basis) -> R<GraphQec> {
    let graph = build_extended_tanner(code, basis)?;
    Ok(ModelCheckpoint::load(path)?.into_model(&graph)?)
}

fn failure_count(batch: &SyndromeBatch, predictions: &[u8]) -> usize {
    let k = batch.num_logicals.max(1);
    predictions
        .chunks(k)
        .zip(batch.labels.chunks(k))
        .filter(|(a, b)| a.iter().zip(b.iter()).any(|(x, y)| (x ^ y) & 1 == 1))
        .count()
}

fn run(cli: Cli) -> R<ExitCode> {
    match cli.command {
        Command::Code(cmd) => match cmd.action {
            Some(CodeAction::Validate { file }) => {
                let code = read_code(&std::fs::read_to_string(&file)?)?;
                let report = code.validate();
                print!("{report}");
                return Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE });
            }
            None => {
                let family = cmd.family.ok_or_else(|| BenchError::Invalid("--family is required".into()))?;
                let code = code_from_args(&family, cmd.distance, cmd.n)?;
                let text = write_code(&code);
                match cmd.out {
                    Some(path) => std::fs::write(path, text)?,
                    None => print!("{text}"),
                }
            }
        },
        Command::Circuit(a) => {
            let code = resolve_code(&a.exp.code)?;
            let c = build_memory_circuit(&code, a.exp.cycles, a.exp.basis.into(), NoiseProfile::uniform(a.exp.p))?;
            std::fs::write(a.out, emit_circuit_text(&c))?;
        }
        Command::Sample(a) => {
            let code = resolve_code(&a.exp.code)?;
            let c = build_memory_circuit(&code, a.exp.cycles, a.exp.basis.into(), NoiseProfile::uniform(a.exp.p))?;
            let opts = SampleOptions { raw_syndromes: a.raw_syndromes, incremental: a.incremental };
            let batch = sample_pauli_frame_with(&c, a.shots, a.seed, opts)?;
            batch.write_b01(create(&a.out)?)?;
        }
        Command::Dem(a) => {
            let c = parse_circuit_text(&std::fs::read_to_string(&a.circuit)?)?;
            std::fs::write(a.out, extract_dem(&c)?.to_text())?;
        }
        Command::Train(a) => {
            let code = resolve_code(&a.code)?;
            let basis: Basis = a.basis.into();
            let graph = build_extended_tanner(&code, basis)?;
            let mut config = match training_preset(code.family.as_str(), code.n) {
                Some(preset) => TrainConfig::from_preset(&preset, a.p, a.seed),
                None => {
                    let preset = training_preset("color", 7).expect("built-in preset");
                    TrainConfig::from_preset(&preset, a.p, a.seed)
                }
            };
            if let Some(s) = a.steps {
                config.pretrain_steps = s;
            }
            if let Some(b) = a.batch_size {
                config.batch_size = b;
            }
            if let Some(l) = a.length {
                config.pretrain_length = l;
            }
            if let Some(lr) = a.lr {
                config.learning_rate = lr;
            }
            config.time_budget_secs = a.time_budget;
            config.checkpoint_every = a.checkpoint_every;
            let model = match &a.resume {
                Some(path) => ModelCheckpoint::load(path)?.into_model(&graph)?,
                None => GraphQec::new(model_config(&a.preset)?, &graph, a.seed)?,
            };
            let mut trainer = Trainer::new(model, &code, basis, config)?;
            trainer.loss_log = a.loss_log;
            trainer.checkpoint_path = Some(a.out.clone());
            let report = trainer.run()?;
            info!("trained {} steps in {:.1} s ({:?})", report.steps, report.seconds, report.stop);
            trainer.checkpoint().save(&a.out)?;
        }
        Command::Decode(a) => {
            let code = resolve_code(&a.code)?;
            let model = load_model(&a.ckpt, &code, a.basis.into())?;
            let batch = read_batch(&a.batch)?;
            let pred = model.predict_chunked(&batch, a.mode.into(), 256)?;
            write_predictions(&a.out, pred.shots, pred.num_logicals, &pred.bits)?;
            eprintln!("{} of {} shots mispredicted", failure_count(&batch, &pred.bits), batch.shots);
        }
        Command::DecodeBp(a) => {
            let dem = DetectorErrorModel::parse_text(&std::fs::read_to_string(&a.dem)?)?;
            let decoder = BpOsd::new(&dem, a.bp.config(dem.mechanisms.len())?)?;
            let batch = read_batch(&a.batch)?;
            let out = decoder.decode_batch(&batch)?;
            write_predictions(&a.out, batch.shots, out.num_observables, &out.predictions)?;
            if let Some(path) = a.timing {
                let mut w = csv::Writer::from_writer(create(&path)?);
                w.write_record(["shot", "micros", "iterations", "converged"]).map_err(BenchError::from)?;
                for (s, ((us, it), conv)) in out.micros.iter().zip(&out.iterations).zip(&out.converged).enumerate() {
                    w.write_record([s.to_string(), format!("{us:.1}"), it.to_string(), conv.to_string()]).map_err(BenchError::from)?;
                }
                w.flush()?;
            }
            eprintln!("{} of {} shots mispredicted", failure_count(&batch, &out.predictions), batch.shots);
        }
        Command::Bench(a) => return bench(a),
        Command::Time(a) => time(a)?,
        Command::Fit(a) => {
            let rows = read_csv(File::open(&a.input)?)?;
            let convention = if a.data_qubits { SizeConvention::DataQubits } else { SizeConvention::PerFamily };
            let points = fit_points(&rows, a.decoder.as_deref(), convention);
            let options = FitOptions { exclude: a.exclude, ..FitOptions::default() };
            match fit_subthreshold(&points, &options) {
                Ok(fit) => {
                    println!("A = {:.6e}\np_th = {:.6e}\nalpha = {:.6}\nbeta = {:.6}\nresidual_norm = {:.3e}", fit.a, fit.p_th, fit.alpha, fit.beta, fit.residual_norm);
                    println!("codes = {}", fit.codes.join(","));
                }
                Err(BenchError::NoConvergence { iterations, residual, best }) => {
                    eprintln!("fit did not converge after {iterations} iterations (residual {residual:.3e}); best p_th = {:.6e}", best.p_th);
                    return Ok(ExitCode::from(3));
                }
                Err(e) => return Err(e),
            }
        }
        Command::Plot(a) => {
            let mut rows = read_csv(File::open(&a.input)?)?;
            if let Some(d) = &a.decoder {
                rows.retain(|r| &r.decoder == d);
            }
            let svg = match a.style {
                Style::Heatmap => heatmap_svg(&rows),
                Style::Timing => timing_svg(&rows),
            };
            std::fs::write(a.out, svg)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn append_rows(path: &Path, new: Vec<ResultRow>) -> R<()> {
    let mut rows = if path.exists() { read_csv(File::open(path)?)? } else { Vec::new() };
    rows.extend(new);
    write_csv(&rows, create(path)?)
}

fn bench(a: BenchArgs) -> R<ExitCode> {
    let rule = StoppingRule { min_failures: a.min_failures, max_shots: a.max_shots, batch_shots: a.batch_shots };
    let basis: Basis = a.basis.into();
    let mut rows = Vec::new();
    let mut low_confidence = false;
    for key in &a.code {
        let code = resolve_code(key)?;
        let cycles = a.cycles.or(code.d).unwrap_or(1);
        for &p in &a.p {
            let exp = MemoryExperiment::new(code.clone(), cycles, basis, p)?;
            let decoder: Box<dyn ShotDecoder> = match a.decoder {
                DecoderArg::Bposd => {
                    let dem = exp.dem()?;
                    Box::new(BpOsdDecoder::new(&dem, a.bp.config(dem.mechanisms.len())?)?)
                }
                DecoderArg::Nn => {
                    let path = a.ckpt.as_ref().ok_or_else(|| BenchError::Invalid("--ckpt is required for --decoder nn".into()))?;
                    Box::new(NeuralDecoder::new(load_model(path, &code, basis)?, a.mode.into()))
                }
            };
            let start = Instant::now();
            let e = estimate_ler(decoder.as_ref(), &exp, &rule, a.seed)?;
            let mut row = ResultRow::from_estimate(code.family.as_str(), &code_key(&code), (code.n, code.k, code.d), p, decoder.name(), &e);
            row.wall_ms_mean = Some(start.elapsed().as_secs_f64() * 1e3 / e.shots.max(1) as f64);
            if e.low_confidence {
                eprintln!("{} at p={p}: only {} failures in {} shots", row.code, e.failures, e.shots);
                low_confidence = true;
            }
            println!(
                "{} p={p} T={cycles} shots={} failures={} ler={:.4e}±{:.1e} pc={}",
                row.code,
                e.shots,
                e.failures,
                e.p_hat,
                e.sigma,
                e.per_cycle_pc.map_or("n/a".into(), |pc| format!("{pc:.4e}"))
            );
            rows.push(row);
        }
    }
    append_rows(&a.out, rows)?;
    Ok(if low_confidence { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn time(a: TimeArgs) -> R<()> {
    let code = resolve_code(&a.code)?;
    let basis: Basis = a.basis.into();
    let experiment_at = |t: usize| MemoryExperiment::new(code.clone(), t, basis, a.p);
    let (report, name) = match a.decoder {
        DecoderArg::Nn => {
            let model = match &a.ckpt {
                Some(path) => load_model(path, &code, basis)?,
                None => GraphQec::new(model_config(&a.preset)?, &build_extended_tanner(&code, basis)?, a.seed)?,
            };
            (tanner_bench::timing::time_neural(&model, a.mode.into(), experiment_at, &a.cycles, a.repetitions, a.seed)?, "nn")
        }
        DecoderArg::Bposd => {
            let bp = a.bp.clone();
            let config = move |m: usize| bp.config(m).unwrap_or_else(|_| BpConfig::for_mechanisms(m));
            (tanner_bench::timing::time_bposd(experiment_at, config, &a.cycles, a.repetitions, a.seed)?, "bposd")
        }
    };
    let rows: Vec<ResultRow> = report
        .rows
        .iter()
        .map(|r| ResultRow {
            family: code.family.as_str().into(),
            code: code_key(&code),
            n: code.n,
            k: code.k,
            d: code.d,
            p: a.p,
            cycles: r.cycles,
            shots: r.repetitions,
            failures: 0,
            ler: 0.0,
            ler_sigma: 0.0,
            pc: None,
            pc_sigma: None,
            decoder: name.into(),
            wall_ms_mean: Some(r.mean_ms),
            wall_ms_std: Some(r.std_ms),
        })
        .collect();
    for r in &report.rows {
        println!("T={} mean={:.3} ms std={:.3} ms per-cycle={:.1} us", r.cycles, r.mean_ms, r.std_ms, r.per_cycle_us);
    }
    println!("slope={:.4} ms/cycle R^2={:.4}", report.slope_ms, report.r_squared);
    append_rows(&a.out, rows)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
