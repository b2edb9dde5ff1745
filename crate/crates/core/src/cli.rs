//! Command-line front end. Every subcommand is a plain function writing to a
//! caller-supplied sink, so the binary is a thin wrapper and the commands are
//! testable in-process.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cache::{parse_cache_spec, HierarchySpec, PRESETS};
use crate::evolve::{run_with_evaluator, ContiguityConstraint, EvolveError, GAConfig};
use crate::fitness::{evaluate, Evaluator, FitnessError, FitnessValue};
use crate::layout::{count_layouts, enumerate_layouts, Layout, Shape};
use crate::patterns::{generate_trace, write_trace, NativeArrays, PatternSpec};

/// Environment variable naming the default cache hierarchy.
pub const CACHE_ENV: &str = "GENMORTON_CACHE";

/// Layouts are listed only when there are at most this many, unless
/// overridden with `--cap`.
pub const DEFAULT_CAP: u64 = 10_000;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: unparsable arguments, files, or inconsistent options.
    #[error("{0}")]
    Usage(String),
    /// Failure while executing a well-formed request.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn usage(e: impl ToString) -> Self {
        CliError::Usage(e.to_string())
    }

    fn runtime(e: impl ToString) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<FitnessError> for CliError {
    fn from(e: FitnessError) -> Self {
        match e {
            FitnessError::LineTooSmall { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EvolveError> for CliError {
    fn from(e: EvolveError) -> Self {
        match e {
            EvolveError::Config(_) | EvolveError::ShapeMismatch(..) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "genmorton",
    version,
    about = "Generalized Morton layouts: index, simulate, evolve"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count the layouts of a shape and list them when few enough.
    Enumerate {
        /// Bits per dimension, dimension 0 first, e.g. `3,3`.
        #[arg(long, value_delimiter = ',', required = true)]
        bits: Vec<u32>,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u64,
    },
    /// Map a coordinate to its linear index, or back.
    Index {
        #[arg(short, long)]
        layout: String,
        /// Coordinate, dimension 0 first, e.g. `3,5`.
        #[arg(
            long,
            value_delimiter = ',',
            conflicts_with = "linear",
            required_unless_present = "linear"
        )]
        coord: Vec<u64>,
        /// Linear index to decode.
        #[arg(long)]
        linear: Option<u64>,
    },
    /// Simulate one layout and report cache statistics, cycles and fitness.
    Simulate {
        #[arg(short, long)]
        layout: String,
        #[command(flatten)]
        target: Target,
    },
    /// Search for a good layout with the evolution strategy.
    Evolve {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 20)]
        mu: usize,
        #[arg(long, default_value_t = 20)]
        lambda: usize,
        #[arg(long, default_value_t = 0.25)]
        mutation_rate: f64,
        #[arg(long, default_value_t = 20)]
        generations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Require dimension `d` to stay contiguous in blocks of 2^k, `d:k`.
        #[arg(long)]
        contiguity: Option<ContiguityConstraint>,
        /// Directory for `history.csv` and `best_layout.txt`; history goes
        /// to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate uniformly random layouts and write them as CSV.
    Sample {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the access trace of a pattern under a layout.
    Trace {
        #[arg(short, long)]
        layout: String,
        #[arg(short, long)]
        pattern: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the kernel on real arrays stored under a layout (host dependent).
    Bench {
        #[arg(short, long)]
        layout: String,
        #[arg(short, long)]
        pattern: String,
        #[arg(long, default_value_t = 3)]
        repeats: u32,
    },
}

#[derive(Debug, Args)]
pub struct Target {
    /// Pattern such as `MMijk(9;4)` or `MMTijk(9,9;4)`.
    #[arg(short, long)]
    pub pattern: String,
    /// Preset name (`haswell`, `zen3`) or path to a cache description.
    #[arg(short, long, env = CACHE_ENV, default_value = "haswell")]
    pub cache: String,
}

/// Everything an evolution run needs.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub pattern: PatternSpec,
    pub hierarchy: HierarchySpec,
    pub ga: GAConfig,
    pub out: Option<PathBuf>,
}

pub fn parse_pattern(text: &str) -> Result<PatternSpec, CliError> {
    text.parse().map_err(CliError::usage)
}

/// Resolves a preset name (case-insensitive) or a path to a description file.
pub fn load_hierarchy(arg: &str) -> Result<HierarchySpec, CliError> {
    let lower = arg.to_ascii_lowercase();
    if PRESETS.contains(&lower.as_str()) {
        return HierarchySpec::preset(&lower).map_err(CliError::usage);
    }
    let path = Path::new(arg);
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Usage(format!(
            "`{arg}` is neither a preset ({}) nor a readable file: {e}",
            PRESETS.join(", ")
        ))
    })?;
    parse_cache_spec(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn layout_for(text: &str, pattern: &PatternSpec) -> Result<Layout, CliError> {
    Layout::parse_for(text, &pattern.shape()).map_err(|e| CliError::Usage(format!("layout {text} for {pattern}: {e}")))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Enumerate { bits, cap } => {
            let shape = Shape::new(bits).map_err(CliError::usage)?;
            cmd_enumerate(&shape, cap, out)
        }
        Command::Index { layout, coord, linear } => {
            let layout: Layout = layout.parse().map_err(CliError::usage)?;
            cmd_index(&layout, &coord, linear, out)
        }
        Command::Simulate { layout, target } => {
            let pattern = parse_pattern(&target.pattern)?;
            let hierarchy = load_hierarchy(&target.cache)?;
            let layout = layout_for(&layout, &pattern)?;
            cmd_simulate(&layout, &pattern, &hierarchy, out)
        }
        Command::Evolve {
            target,
            mu,
            lambda,
            mutation_rate,
            generations,
            seed,
            contiguity,
            out: dir,
        } => {
            let config = ExperimentConfig {
                pattern: parse_pattern(&target.pattern)?,
                hierarchy: load_hierarchy(&target.cache)?,
                ga: GAConfig {
                    mu,
                    lambda,
                    mutation_rate,
                    generations,
                    seed,
                    contiguity,
                },
                out: dir,
            };
            cmd_evolve(&config, out)
        }
        Command::Sample {
            target,
            count,
            seed,
            out: path,
        } => {
            let pattern = parse_pattern(&target.pattern)?;
            let hierarchy = load_hierarchy(&target.cache)?;
            match path {
                Some(path) => {
                    let file =
                        fs::File::create(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
                    cmd_sample(&pattern, &hierarchy, count, seed, io::BufWriter::new(file))?;
                    writeln!(out, "wrote {count} samples to {}", path.display())?;
                    Ok(())
                }
                None => cmd_sample(&pattern, &hierarchy, count, seed, out),
            }
        }
        Command::Trace {
            layout,
            pattern,
            out: path,
        } => {
            let pattern = parse_pattern(&pattern)?;
            let layout = layout_for(&layout, &pattern)?;
            match path {
                Some(path) => {
                    let file =
                        fs::File::create(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
                    cmd_trace(&layout, &pattern, &mut io::BufWriter::new(file))
                }
                None => cmd_trace(&layout, &pattern, out),
            }
        }
        Command::Bench {
            layout,
            pattern,
            repeats,
        } => {
            let pattern = parse_pattern(&pattern)?;
            let layout = layout_for(&layout, &pattern)?;
            cmd_bench(&layout, &pattern, repeats, out)
        }
    }
}

/// Prints the layout count, then every layout in lexicographic order if the
/// count does not exceed `cap`.
pub fn cmd_enumerate(shape: &Shape, cap: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let count = count_layouts(shape);
    writeln!(out, "{count}")?;
    if count <= cap.into() {
        for layout in enumerate_layouts(shape, cap).map_err(CliError::runtime)? {
            writeln!(out, "{layout}")?;
        }
    }
    Ok(())
}

pub fn cmd_index(layout: &Layout, coord: &[u64], linear: Option<u64>, out: &mut dyn Write) -> Result<(), CliError> {
    match linear {
        Some(index) => {
            let coord = layout.inverse_index(index).map_err(CliError::usage)?;
            let text: Vec<String> = coord.iter().map(u64::to_string).collect();
            writeln!(out, "{}", text.join(","))?;
        }
        None => writeln!(out, "{}", layout.linear_index(coord).map_err(CliError::usage)?)?,
    }
    Ok(())
}

/// Human-readable report of one evaluation.
pub fn write_report(
    layout: &Layout,
    pattern: &PatternSpec,
    hierarchy: &HierarchySpec,
    value: &FitnessValue,
    out: &mut dyn Write,
) -> io::Result<()> {
    let s = &value.stats;
    writeln!(out, "layout   {layout}")?;
    writeln!(out, "pattern  {pattern}")?;
    writeln!(
        out,
        "accesses {} ({} loads, {} stores)",
        s.accesses(),
        s.loads,
        s.stores
    )?;
    writeln!(
        out,
        "{:<8} {:>12} {:>12} {:>12} {:>12}",
        "level", "hits", "misses", "evictions", "latency"
    )?;
    for (stats, level) in s.levels.iter().zip(&hierarchy.levels) {
        writeln!(
            out,
            "{:<8} {:>12} {:>12} {:>12} {:>12}",
            stats.name, stats.hits, stats.misses, stats.evictions, level.latency
        )?;
    }
    writeln!(
        out,
        "{:<8} {:>12} {:>12} {:>12} {:>12}",
        "memory", s.memory_reads, "-", "-", hierarchy.memory_latency
    )?;
    writeln!(out, "memory writes {}", s.memory_writes)?;
    writeln!(out, "cycles   {}", value.cycles)?;
    writeln!(out, "fitness  {}", value.value)?;
    Ok(())
}

pub fn cmd_simulate(
    layout: &Layout,
    pattern: &PatternSpec,
    hierarchy: &HierarchySpec,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let value = evaluate(layout, pattern, hierarchy)?;
    write_report(layout, pattern, hierarchy, &value, out)?;
    Ok(())
}

/// Runs the evolution, writes the history CSV (to `out` directory or the
/// sink) and ends with the summary line.
pub fn cmd_evolve(config: &ExperimentConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let evaluator = Evaluator::new(config.pattern.clone(), config.hierarchy.clone())?;
    let history = run_with_evaluator(&evaluator, &config.ga)?;
    let csv = history.to_csv_string();
    match &config.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("history.csv"), &csv)?;
            fs::write(dir.join("best_layout.txt"), format!("{}\n", history.best.layout))?;
        }
        None => out.write_all(csv.as_bytes())?,
    }
    writeln!(out, "best layout {}", history.best.layout)?;
    writeln!(
        out,
        "best fitness {} at generation {}",
        history.best.value(),
        history.best_generation
    )?;
    Ok(())
}

/// Header of the sample CSV for `hierarchy`.
pub fn sample_header(hierarchy: &HierarchySpec) -> Vec<String> {
    let mut header = vec!["layout".to_string(), "fitness".into(), "cycles".into()];
    for level in &hierarchy.levels {
        let name = level.name.to_ascii_lowercase();
        header.push(format!("{name}_hit"));
        header.push(format!("{name}_miss"));
    }
    header.push("mem_read".into());
    header
}

/// Draws `count` uniformly random layouts from a seeded generator, evaluates
/// them in parallel and writes one CSV row each, in draw order.
pub fn cmd_sample<W: Write>(
    pattern: &PatternSpec,
    hierarchy: &HierarchySpec,
    count: u64,
    seed: u64,
    out: W,
) -> Result<(), CliError> {
    let shape = pattern.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layouts: Vec<Layout> = (0..count).map(|_| Layout::random(&shape, &mut rng)).collect();
    let evaluator = Evaluator::new(pattern.clone(), hierarchy.clone())?;
    let values = evaluator.evaluate_all(&layouts);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(sample_header(hierarchy)).map_err(CliError::runtime)?;
    for (layout, value) in layouts.iter().zip(values) {
        let value = value?;
        let mut row = vec![layout.to_string(), value.value.to_string(), value.cycles.to_string()];
        for level in &value.stats.levels {
            row.push(level.hits.to_string());
            row.push(level.misses.to_string());
        }
        row.push(value.stats.memory_reads.to_string());
        w.write_record(&row).map_err(CliError::runtime)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_trace(layout: &Layout, pattern: &PatternSpec, mut out: &mut dyn Write) -> Result<(), CliError> {
    let mut failure = None;
    generate_trace(pattern, layout, |event| {
        if failure.is_none() {
            if let Err(e) = write_trace(&mut out, [event]) {
                failure = Some(e);
            }
        }
    })
    .map_err(CliError::usage)?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(out.flush()?),
    }
}

/// Runs the kernel natively `repeats` times and reports the fastest run.
pub fn cmd_bench(layout: &Layout, pattern: &PatternSpec, repeats: u32, out: &mut dyn Write) -> Result<(), CliError> {
    let mut best = f64::INFINITY;
    let mut checksum = 0.0;
    for _ in 0..repeats.max(1) {
        let mut arrays = NativeArrays::new(pattern, layout).map_err(CliError::usage)?;
        let dims: Vec<usize> = arrays.bindings().iter().map(|b| b.shape().ndim()).collect();
        for (a, &ndim) in dims.iter().enumerate() {
            if ndim == 2 {
                arrays.fill_2d(a, |r, c| 1.0 + ((r * 7 + c * 3) % 11) as f64);
            }
        }
        let start = Instant::now();
        arrays.run(pattern);
        best = best.min(start.elapsed().as_secs_f64());
        // Reading a result keeps the kernel from being optimized away.
        let last = dims.len() - 1;
        checksum = arrays.get(last, &vec![0; dims[last]]);
    }
    writeln!(out, "layout   {layout}")?;
    writeln!(out, "pattern  {pattern}")?;
    writeln!(
        out,
        "best of {} runs: {:.6} s (checksum {checksum})",
        repeats.max(1),
        best
    )?;
    Ok(())
}
