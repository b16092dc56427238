//! `nvlife`: forecasts, single simulation phases and debugging tools.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use nvlife::cachesim::{HealthSnapshot, PerformanceModel};
use nvlife::codec::{compress, Block, CompressionClass};
use nvlife::config::ExperimentConfig;
use nvlife::endurance::{init_rw_map, CellMap, MapKind};
use nvlife::error::{ConfigError, Error, LayoutError, TraceError};
use nvlife::forecast::{
    compute_indices, load_checkpoint, save_checkpoint, ForecastSeries, Forecaster, Indices, SimulationPhase,
    SECONDS_PER_YEAR,
};
use nvlife::layout::{index_calc, scatter_write, FaultBitmap, GlobalCounter};
use nvlife::workload::write_trace;

#[derive(Parser)]
#[command(name = "nvlife", version, about = "Lifetime forecasts for wear-limited last-level caches")]
struct Cli {
    /// Print the default configuration as TOML and exit.
    #[arg(long)]
    show_defaults: bool,

    /// Worker threads for per-mix simulation.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full forecast; write the series CSV and the indices JSON.
    Forecast(ForecastArgs),
    /// Run one simulation phase; write the write-rate map and statistics.
    Simulate(SimulateArgs),
    /// Write the configured synthetic mixes as trace files.
    Traces(TracesArgs),
    /// Compress one 64-byte block given as hex.
    Compress {
        /// 128 hex digits.
        block: String,
    },
    /// Show where a compressed block lands in a faulty frame.
    Rearrange {
        /// Fault bitmap, one character per byte: 1 live, 0 dead.
        #[arg(long)]
        bitmap: String,
        /// Global counter (rotation origin).
        #[arg(long, default_value_t = 0)]
        gc: usize,
        /// Encoded bytes to place, as hex.
        #[arg(long)]
        ecb: String,
    },
    /// Scale the time axis of a series for bitcells k times as durable.
    Project {
        #[arg(long)]
        k: f64,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Recompute lifetime indices from a series CSV.
    Indices(IndicesArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration; defaults apply to anything left out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the cache variant (FD, FD+R, L2C2, L2C2+N, L2C2-NWL, L2C2-BF).
    #[arg(long)]
    variant: Option<String>,
    /// Override the endurance coefficient of variation.
    #[arg(long)]
    cv: Option<f64>,
    /// Override the endurance seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Series CSV; defaults to the configured path, else standard output.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Indices JSON; defaults to the configured path.
    #[arg(long)]
    indices: Option<PathBuf>,
    /// Save a checkpoint here after every epoch.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Continue from the checkpoint in the checkpoint directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Remaining-writes map to simulate; defaults to fresh bitcells.
    #[arg(long)]
    rw: Option<PathBuf>,
    /// Epoch index, which selects the rotation origin.
    #[arg(long, default_value_t = 0)]
    epoch: usize,
    /// Write-rate map output; `.csv` selects CSV, anything else binary.
    #[arg(long)]
    wr_out: Option<PathBuf>,
}

#[derive(Args)]
struct TracesArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory; one `<mix>.nvtrace` per mix.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct IndicesArgs {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to the configured performance model.
    #[arg(long)]
    clock_hz: Option<f64>,
    /// Defaults to the configured performance model.
    #[arg(long)]
    cores: Option<u32>,
    /// Horizon for the instruction count.
    #[arg(long, default_value_t = HORIZON_YEARS)]
    horizon_years: f64,
}

/// Horizon of the instructions-executed index.
const HORIZON_YEARS: f64 = 5.0;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 configuration, 3 trace, 4 capacity, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) => 2,
                Error::Trace(_) => 3,
                Error::Layout(LayoutError::Capacity { .. }) => 4,
                _ => 1,
            };
        }
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<TraceError>() {
            return 3;
        }
        if let Some(LayoutError::Capacity { .. }) = cause.downcast_ref::<LayoutError>() {
            return 4;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon_pool(n)?;
    }
    if cli.show_defaults {
        print!("{}", ExperimentConfig::default().to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        bail!("no subcommand given; see --help");
    };
    match command {
        Command::Forecast(args) => forecast(args),
        Command::Simulate(args) => simulate(args),
        Command::Traces(args) => traces(args),
        Command::Compress { block } => compress_cmd(&block),
        Command::Rearrange { bitmap, gc, ecb } => rearrange(&bitmap, gc, &ecb),
        Command::Project { k, input, output } => project(k, &input, output.as_deref()),
        Command::Indices(args) => indices(args),
    }
}

fn rayon_pool(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(ConfigError::Invalid { field: "jobs", reason: "must be positive".into() }.into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().context("starting worker pool")
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::Invalid { field: "config", reason: format!("{}: {e}", path.display()) })?;
            ExperimentConfig::from_toml(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &args.variant {
        config.cache.variant = v.clone();
    }
    if let Some(cv) = args.cv {
        config.endurance.cv = cv;
    }
    if let Some(seed) = args.seed {
        config.endurance.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        config.forecast.num_epochs = epochs;
    }
    config.validate()?;
    Ok(config)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn indices_json(indices: &Indices) -> serde_json::Value {
    let years = |t: Option<f64>| t.map(|s| s / SECONDS_PER_YEAR);
    json!({
        "seconds": indices,
        "years": {
            "t50c": years(indices.t50c),
            "t90c": years(indices.t90c),
            "t99c": years(indices.t99c),
            "t90p": years(indices.t90p),
            "t99p": years(indices.t99p),
        },
    })
}

fn forecast(args: ForecastArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let geometry = config.geometry()?;
    let simulation = config.simulation()?;
    let checkpoint = args.checkpoint_dir.or_else(|| config.output.checkpoint_dir.clone());

    let mut forecaster = if args.resume {
        let dir = checkpoint.as_deref().context("--resume needs a checkpoint directory")?;
        let state = load_checkpoint(dir, &geometry).map_err(Error::from)?;
        Forecaster::resume(&geometry, config.forecast, &simulation, state)
    } else {
        Forecaster::new(&geometry, &config.endurance, config.forecast, &simulation)
    };
    loop {
        let more = forecaster.step();
        if let Some(dir) = &checkpoint {
            save_checkpoint(dir, &geometry, forecaster.state()).map_err(Error::from)?;
        }
        if !more {
            break;
        }
    }
    let mut series = forecaster.into_state().series;
    series.comments = config.to_toml().lines().map(String::from).collect();

    match args.series.or_else(|| config.output.series.clone()) {
        Some(path) => series.write_csv(create(&path)?).map_err(Error::from)?,
        None => series.write_csv(io::stdout().lock()).map_err(Error::from)?,
    }
    let perf = config.performance;
    let indices = compute_indices(&series, |ipc| perf.throughput(ipc), HORIZON_YEARS * SECONDS_PER_YEAR);
    let report = json!({
        "config": config,
        "indices": indices_json(&indices),
        "samples": series.samples.len(),
    });
    match args.indices.or_else(|| config.output.indices.clone()) {
        Some(path) => {
            let mut w = create(&path)?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => eprintln!("{}", serde_json::to_string_pretty(&report["indices"])?),
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let geometry = config.geometry()?;
    let rw = match &args.rw {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let map = CellMap::read_binary(BufReader::new(file)).map_err(Error::from)?;
            if map.kind != MapKind::RemainingWrites || map.shape != geometry.map_shape() {
                bail!("{} does not hold a remaining-writes map for this cache", path.display());
            }
            map
        }
        None => init_rw_map(geometry.map_shape(), geometry.granularity(), &config.endurance),
    };
    let snapshot = HealthSnapshot::from_rw_map(&geometry, &rw);
    let phase = config.simulation()?.simulate(&snapshot, args.epoch);
    if let Some(path) = &args.wr_out {
        let w = create(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            phase.write_rates.write_csv(w).map_err(Error::from)?;
        } else {
            let mut w = w;
            phase.write_rates.write_binary(&mut w).map_err(Error::from)?;
            w.flush()?;
        }
    }
    let (classes, dead) = snapshot.class_histogram();
    let histogram: serde_json::Map<String, serde_json::Value> =
        CompressionClass::all().zip(classes).map(|(c, n)| (format!("cc_{}", c.bytes()), json!(n))).collect();
    let report = json!({
        "variant": config.cache.variant,
        "epoch": args.epoch,
        "effective_capacity": snapshot.effective_capacity(),
        "ipc": phase.ipc,
        "stats": phase.stats,
        "miss_rate": phase.stats.miss_rate(),
        "classes": histogram,
        "dead_frames": dead,
        "mean_write_rate": phase.write_rates.values.iter().sum::<f64>() / phase.write_rates.values.len() as f64,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn traces(args: TracesArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let simulation = config.simulation()?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    for (profile, events) in config.workload.mixes.iter().zip(&simulation.mixes) {
        let path = args.out_dir.join(format!("{}.nvtrace", profile.name));
        write_trace(&path, events).map_err(Error::from)?;
        println!("{} {} events", path.display(), events.len());
    }
    Ok(())
}

fn parse_hex(field: &'static str, text: &str) -> Result<Vec<u8>> {
    hex::decode(text.trim()).map_err(|e| ConfigError::Invalid { field, reason: e.to_string() }.into())
}

fn compress_cmd(text: &str) -> Result<()> {
    let bytes = parse_hex("block", text)?;
    let block = Block::from_slice(&bytes).map_err(Error::from)?;
    let cb = compress(&block);
    let report = json!({
        "encoding": cb.encoding().name(),
        "class": CompressionClass::of_block(cb.size()).bytes(),
        "tag": cb.encoding().tag(),
        "size": cb.size(),
        "payload": hex::encode(cb.payload()),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn rearrange(bitmap: &str, gc: usize, ecb: &str) -> Result<()> {
    let fm: FaultBitmap = bitmap.parse().map_err(Error::Layout)?;
    let ecb = parse_hex("ecb", ecb)?;
    let gc = GlobalCounter::new(gc, fm.len()).map_err(Error::from)?;
    let iv = index_calc(&fm, gc, ecb.len()).map_err(Error::from)?;
    let mut frame = vec![0u8; fm.len()];
    scatter_write(&ecb, &fm, gc, &mut frame).map_err(Error::from)?;
    let report = json!({
        "index": iv.index,
        "write_mask": iv.write_mask.iter().map(|&w| if w { '1' } else { '0' }).collect::<String>(),
        "frame": hex::encode(&frame),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn read_series(path: &Path) -> Result<ForecastSeries> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(ForecastSeries::read_csv(BufReader::new(file)).map_err(Error::from)?)
}

fn project(k: f64, input: &Path, output: Option<&Path>) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(ConfigError::Invalid { field: "k", reason: "must be finite and positive".into() }.into());
    }
    let mut series = read_series(input)?.project(k);
    series.comments.push(format!("projected: k = {k}"));
    match output {
        Some(path) => series.write_csv(create(path)?).map_err(Error::from)?,
        None => series.write_csv(io::stdout().lock()).map_err(Error::from)?,
    }
    Ok(())
}

fn indices(args: IndicesArgs) -> Result<()> {
    let mut perf = PerformanceModel::default();
    perf.clock_hz = args.clock_hz.unwrap_or(perf.clock_hz);
    perf.cores = args.cores.unwrap_or(perf.cores);
    perf.validate()?;
    if !(args.horizon_years.is_finite() && args.horizon_years >= 0.0) {
        return Err(ConfigError::Invalid { field: "horizon_years", reason: "must be finite and non-negative".into() }.into());
    }
    let series = read_series(&args.input)?;
    let indices = compute_indices(&series, |ipc| perf.throughput(ipc), args.horizon_years * SECONDS_PER_YEAR);
    println!("{}", serde_json::to_string_pretty(&indices_json(&indices))?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_chain() {
        let capacity = anyhow::Error::from(Error::Layout(LayoutError::Capacity { size: 3, live: 2 }));
        assert_eq!(exit_code(&capacity.context("writing frame")), 4);
        let config = anyhow::Error::from(ConfigError::UnknownVariant("x".into()));
        assert_eq!(exit_code(&config), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 1);
        assert_eq!(exit_code(&Error::Shape("x".into()).into()), 1);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
