//! `localrules`: explain and evaluate black-box decisions on tabular data.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use localrules::baselines::Method;
use localrules::distance::DistanceKind;
use localrules::genetic::GaParams;
use localrules::harness::{
    cmd_compare, cmd_evaluate, cmd_explain, cmd_neighborhood, prepare, render_records_tsv, render_summary_tsv,
    reports_json, write_output, BlackBoxSource, EmpiricalSource, HarnessError, InstanceSelector, OutputFormat,
    RunConfig, DEFAULT_SEED,
};
use localrules::tree::TreeParams;

#[derive(Parser, Debug)]
#[command(name = "localrules", version, about = "Local rule-based explanations for black-box classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Explain the black-box decision for selected test instances.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "lore")]
        method: Method,
        #[arg(long, default_value = "text", value_parser = parse_format)]
        format: OutputFormat,
        /// Include the surrogate tree in the output.
        #[arg(long)]
        dump_tree: bool,
    },
    /// Score explanations of selected test instances and aggregate them.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "lore")]
        method: Method,
        /// `text` prints a tab-separated table, `structured` prints JSON.
        #[arg(long, default_value = "text", value_parser = parse_format)]
        format: OutputFormat,
    },
    /// Evaluate several methods on the same instances and seed.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "lore,crn,rnd,ros,global")]
        methods: Vec<Method>,
        #[arg(long, default_value = "text", value_parser = parse_format)]
        format: OutputFormat,
    },
    /// Dump the neighborhood generated for one test instance as CSV.
    Neighborhood {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "lore")]
        method: Method,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Dataset CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// JSON schema describing the CSV columns.
    #[arg(long)]
    schema: PathBuf,
    /// builtin:ensemble, cmd:<command> or http:<url>.
    #[arg(long, default_value = "builtin:ensemble")]
    blackbox: BlackBoxSource,
    /// Test-set rows: `all`, an index, a list `1,5,9` or a range `0..50`.
    #[arg(long, default_value = "0")]
    instances: InstanceSelector,
    /// Write the main output here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "neuclid")]
    distance: DistanceKind,
    #[arg(long, default_value_t = 1000)]
    neighborhood_size: usize,
    #[arg(long, default_value_t = 10)]
    generations: usize,
    /// Crossover probability.
    #[arg(long, default_value_t = 0.5)]
    pc: f64,
    /// Per-feature mutation probability.
    #[arg(long, default_value_t = 0.2)]
    pm: f64,
    /// Trees in the built-in ensemble.
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// Nearest real instances used by crn, rnd and ros.
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Minimum instances per surrogate leaf.
    #[arg(long, default_value_t = 2)]
    min_leaf: usize,
    /// Split feeding the sampling distributions: test or train.
    #[arg(long, default_value = "test", value_parser = parse_empirical)]
    empirical: EmpiricalSource,
    /// Seconds to wait for an external black box.
    #[arg(long, default_value_t = 120)]
    timeout: u64,
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse()
}

fn parse_empirical(s: &str) -> Result<EmpiricalSource, String> {
    match s {
        "test" => Ok(EmpiricalSource::Test),
        "train" => Ok(EmpiricalSource::Train),
        other => Err(format!("unknown split `{other}` (expected test or train)")),
    }
}

impl Common {
    fn config(&self) -> RunConfig {
        RunConfig {
            blackbox: self.blackbox.clone(),
            ga: GaParams {
                population: self.neighborhood_size,
                generations: self.generations,
                crossover_prob: self.pc,
                mutation_prob: self.pm,
                seed: self.seed,
            },
            distance: self.distance,
            surrogate: TreeParams {
                min_leaf: self.min_leaf.max(1),
                ..TreeParams::default()
            },
            instances: self.instances.clone(),
            seed: self.seed,
            train_fraction: self.train_fraction,
            trees: self.trees,
            crn_k: self.k,
            empirical: self.empirical,
            timeout: Duration::from_secs(self.timeout),
            ..RunConfig::new(&self.data, &self.schema)
        }
    }

    fn emit(&self, text: &str) -> Result<(), HarnessError> {
        match &self.output {
            Some(path) => write_output(path, text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Explain {
            common,
            method,
            format,
            dump_tree,
        } => {
            let config = common.config();
            let ws = prepare(&config)?;
            common.emit(&cmd_explain(&ws, &config, method, format, dump_tree)?)
        }
        Command::Evaluate { common, method, format } => {
            let config = common.config();
            let ws = prepare(&config)?;
            let report = cmd_evaluate(&ws, &config, method)?;
            let reports = [report];
            let json = json_text(&reports_json(&config, &reports));
            match (format, &common.output) {
                (OutputFormat::Structured, _) => common.emit(&json),
                (OutputFormat::Text, Some(path)) => {
                    write_output(path, &json)?;
                    print!("{}", render_records_tsv(&reports[0]));
                    Ok(())
                }
                (OutputFormat::Text, None) => common.emit(&render_records_tsv(&reports[0])),
            }
        }
        Command::Compare { common, methods, format } => {
            if methods.is_empty() {
                return Err(HarnessError::Usage("no methods to compare".into()));
            }
            let config = common.config();
            let ws = prepare(&config)?;
            let reports = cmd_compare(&ws, &config, &methods)?;
            let json = json_text(&reports_json(&config, &reports));
            match (format, &common.output) {
                (OutputFormat::Structured, _) => common.emit(&json),
                (OutputFormat::Text, Some(path)) => {
                    write_output(path, &json)?;
                    print!("{}", render_summary_tsv(&reports));
                    Ok(())
                }
                (OutputFormat::Text, None) => common.emit(&render_summary_tsv(&reports)),
            }
        }
        Command::Neighborhood { common, method } => {
            let config = common.config();
            let index = match config.instances.resolve(usize::MAX)?.as_slice() {
                [i] => *i,
                _ => return Err(HarnessError::Usage("neighborhood takes exactly one instance index".into())),
            };
            let ws = prepare(&config)?;
            let (csv, z) = cmd_neighborhood(&ws, &config, method, index)?;
            let x = &ws.test.rows[index];
            let bx = ws.black_box.predict_one(x)?;
            let stats = z.stats(x, bx, &ws.schema, config.distance);
            eprintln!(
                "{} instances: {} {}, {} {}; same label as x: {}; mean distance to x: {:.6}",
                stats.size,
                ws.schema.label_name(0),
                stats.class_counts[0],
                ws.schema.label_name(1),
                stats.class_counts[1],
                stats.same_label,
                stats.mean_distance
            );
            common.emit(&csv)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
