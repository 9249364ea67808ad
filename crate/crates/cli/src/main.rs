use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use trimodal_cli::pipeline::{cmd_eval, cmd_index, cmd_search};
use trimodal_cli::{PipelineConfig, PipelineError};
use trimodal_core::eval::{
    render_comparison, render_grid, render_ndcg_table, render_system_table, render_table, MetricReport,
    ReportCell,
};
use trimodal_core::rerank::RerankMode;

#[derive(Parser)]
#[command(name = "trimodal", version, about = "Tri-modal hybrid retrieval and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the hybrid index for the configured corpus.
    Index {
        #[arg(short, long)]
        config: PathBuf,
        /// Override `index_path`.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Override `output_dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Answer one query from the index.
    Search {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        query: String,
        /// Number of results (defaults to `top_k`).
        #[arg(short)]
        k: Option<usize>,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, value_enum)]
        rerank: Option<Mode>,
    },
    /// Run every judged query and score the run.
    Eval {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        rerank: Option<Mode>,
        #[arg(long)]
        run_tag: Option<String>,
    },
    /// Lay out saved metric reports side by side.
    Report {
        #[arg(long, value_enum, default_value = "table")]
        layout: Layout,
        /// `LABEL=metrics.json`; for `table` and `ndcg` the label is
        /// `DATASET/SYSTEM`, for `compare` give the pre-rerank report first.
        #[arg(short, long = "input", required = true)]
        inputs: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    None,
    Weights,
    Listwise,
}

impl From<Mode> for RerankMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::None => RerankMode::None,
            Mode::Weights => RerankMode::Weights,
            Mode::Listwise => RerankMode::Listwise,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    /// Metric by cutoff grid for each input.
    Grid,
    /// Datasets by systems, Recall/MRR/nDCG at the headline cutoff.
    Table,
    /// Datasets by systems, nDCG at every cutoff.
    Ndcg,
    /// One row per input.
    Systems,
    /// Two inputs, pre- and post-rerank, with deltas.
    Compare,
}

fn load_config(
    path: &PathBuf,
    index: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    rerank: Option<Mode>,
) -> Result<PipelineConfig, PipelineError> {
    let mut config = PipelineConfig::load(path)?;
    if let Some(p) = index {
        config.index_path = p;
    }
    if let Some(p) = output_dir {
        config.output_dir = p;
    }
    if let Some(m) = rerank {
        config.rerank.mode = m.into();
    }
    Ok(config)
}

fn report(layout: Layout, inputs: &[String], out: &mut dyn Write) -> Result<(), PipelineError> {
    let mut loaded = Vec::new();
    for input in inputs {
        let (label, path) = input
            .split_once('=')
            .ok_or_else(|| PipelineError::Usage(format!("expected LABEL=PATH, got {input:?}")))?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Data(format!("{path}: {e}")))?;
        let parsed = MetricReport::from_json(&text)
            .map_err(|e| PipelineError::Data(format!("{path}: {e}")))?;
        loaded.push((label.to_string(), parsed));
    }
    let text = match layout {
        Layout::Grid => loaded
            .iter()
            .map(|(label, r)| format!("== {label}\n{}", render_grid(r)))
            .collect::<Vec<_>>()
            .join("\n"),
        Layout::Table | Layout::Ndcg => {
            let cells = loaded
                .iter()
                .map(|(label, r)| {
                    let (dataset, system) = label.split_once('/').ok_or_else(|| {
                        PipelineError::Usage(format!("label {label:?} must be DATASET/SYSTEM"))
                    })?;
                    Ok(ReportCell {
                        dataset,
                        system,
                        report: r,
                    })
                })
                .collect::<Result<Vec<_>, PipelineError>>()?;
            if matches!(layout, Layout::Table) {
                render_table(&cells)
            } else {
                render_ndcg_table(&cells)
            }
        }
        Layout::Systems => {
            let rows: Vec<(&str, &MetricReport)> = loaded.iter().map(|(l, r)| (l.as_str(), r)).collect();
            render_system_table(&rows)
        }
        Layout::Compare => match loaded.as_slice() {
            [(_, pre), (_, post)] => render_comparison(pre, post),
            _ => return Err(PipelineError::Usage("compare takes exactly two inputs".into())),
        },
    };
    out.write_all(text.as_bytes())
        .map_err(|e| PipelineError::Data(format!("writing output: {e}")))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let stdout = io::stdout();
    let stderr = io::stderr();
    let (mut out, mut err) = (stdout.lock(), stderr.lock());
    match cli.command {
        Command::Index {
            config,
            index,
            output_dir,
        } => {
            let config = load_config(&config, index, output_dir, None)?;
            cmd_index(&config, &mut out).map(|_| ())
        }
        Command::Search {
            config,
            query,
            k,
            index,
            rerank,
        } => {
            let config = load_config(&config, index, None, rerank)?;
            let k = k.unwrap_or(config.top_k);
            cmd_search(&config, &query, k, &mut out, &mut err).map(|_| ())
        }
        Command::Eval {
            config,
            index,
            output_dir,
            rerank,
            run_tag,
        } => {
            let mut config = load_config(&config, index, output_dir, rerank)?;
            if let Some(tag) = run_tag {
                config.run_tag = tag;
            }
            cmd_eval(&config, &mut out, &mut err).map(|_| ())
        }
        Command::Report { layout, inputs } => report(layout, &inputs, &mut out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
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
