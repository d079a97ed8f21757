use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scs_cli::commands::{
    cmd_hitrate, cmd_index, cmd_retrieve, cmd_serve, make_ladder_config, HitrateOptions,
    IndexOptions, RetrieveOptions,
};
use scs_cli::pipeline::BudgetOptions;
use scs_core::dataset::FieldMap;
use scs_core::ladder::SearchMode;

/// Keyword-based code-context retrieval: index repository revisions
/// into searchable shards, serve them over HTTP, and mine token-budgeted
/// context bundles for completion points.
#[derive(Parser)]
#[command(name = "scs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one shard per (repo, revision) of a dataset.
    Index(IndexArgs),
    /// Serve a shard directory over HTTP.
    Serve(ServeArgs),
    /// Run retrieval over a dataset and write context bundles.
    Retrieve(RetrieveArgs),
    /// Compare single-shard and cross-shard hit rates over a dataset.
    Hitrate(HitrateArgs),
}

#[derive(Args)]
struct IndexArgs {
    /// JSONL dataset of completion points.
    #[arg(long)]
    dataset: PathBuf,
    /// Root of the checked-out trees: <repos>/<repo>/<revision>/...
    #[arg(long)]
    repos: PathBuf,
    /// Output directory for .shard files.
    #[arg(long)]
    out: PathBuf,
    /// Rename dataset JSON keys, e.g. id=uid,repo=repository.
    #[arg(long)]
    field_map: Option<String>,
}

#[derive(Args)]
struct ServeArgs {
    /// Directory of .shard files.
    #[arg(long)]
    shards: PathBuf,
    #[arg(long, default_value_t = 7878)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Cross,
}

impl From<ModeArg> for SearchMode {
    fn from(m: ModeArg) -> SearchMode {
        match m {
            ModeArg::Single => SearchMode::SingleShard,
            ModeArg::Cross => SearchMode::CrossShard,
        }
    }
}

#[derive(Args)]
struct SharedRetrievalArgs {
    /// JSONL dataset of completion points.
    #[arg(long)]
    dataset: PathBuf,
    /// Base URL of a running search service, e.g. http://127.0.0.1:7878.
    #[arg(long)]
    server: String,
    /// Shard directory (for original files and bundle contents).
    #[arg(long)]
    shards: PathBuf,
    /// Rename dataset JSON keys, e.g. id=uid,repo=repository.
    #[arg(long)]
    field_map: Option<String>,
    /// Model context size M, tokens.
    #[arg(long, default_value_t = 8192)]
    model_max: u64,
    /// Generation buffer B, tokens.
    #[arg(long, default_value_t = 256)]
    buffer: u64,
    /// Absolute per-file budget R (default: T/2).
    #[arg(long)]
    per_file_budget: Option<u64>,
    /// Max files/snippets per bundle.
    #[arg(long, default_value_t = 5)]
    top_k: u64,
    /// Records processed in parallel.
    #[arg(long, default_value_t = 4)]
    jobs: usize,
    /// Per-request timeout, milliseconds.
    #[arg(long, default_value_t = 200)]
    timeout_ms: u64,
    /// Retries per query on overload/timeouts.
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    /// Max results requested per query.
    #[arg(long, default_value_t = 50)]
    max_results: usize,
    /// External token-count command (text on stdin, integer on stdout).
    #[arg(long)]
    tokenizer_cmd: Option<String>,
}

impl SharedRetrievalArgs {
    fn field_map(&self) -> Result<FieldMap, String> {
        match &self.field_map {
            Some(spec) => FieldMap::parse(spec).map_err(|e| e.to_string()),
            None => Ok(FieldMap::default()),
        }
    }

    fn budget(&self) -> BudgetOptions {
        BudgetOptions {
            model_max: self.model_max,
            reserved_buffer: self.buffer,
            per_file_override: self.per_file_budget,
            top_k: self.top_k,
        }
    }

    fn tokenizer_cmd(&self) -> Option<Vec<String>> {
        self.tokenizer_cmd
            .as_ref()
            .map(|c| c.split_whitespace().map(str::to_string).collect())
    }
}

#[derive(Args)]
struct RetrieveArgs {
    #[command(flatten)]
    shared: SharedRetrievalArgs,
    /// single = pin the point's revision; cross = all revisions of the repo.
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
    /// Continue a previous run from its checkpoint.
    #[arg(long, default_value_t = false)]
    resume: bool,
    /// Revision-order JSONL ({repo, revision, order}) enabling the
    /// temporal-leakage guard in cross mode.
    #[arg(long)]
    revision_order: Option<PathBuf>,
}

#[derive(Args)]
struct HitrateArgs {
    #[command(flatten)]
    shared: SharedRetrievalArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();

    let run = || -> Result<u8, scs_cli::CommandError> {
        match cli.command {
            Command::Index(args) => {
                let field_map = match &args.field_map {
                    Some(spec) => FieldMap::parse(spec)
                        .map_err(|e| scs_cli::CommandError::Fatal(e.to_string()))?,
                    None => FieldMap::default(),
                };
                cmd_index(
                    &IndexOptions {
                        dataset: args.dataset,
                        repos: args.repos,
                        out: args.out,
                        field_map,
                    },
                    &mut stdout,
                )
            }
            Command::Serve(args) => {
                cmd_serve(&args.shards, &format!("{}:{}", args.bind, args.port))
            }
            Command::Retrieve(args) => {
                let field_map =
                    args.shared.field_map().map_err(scs_cli::CommandError::Fatal)?;
                cmd_retrieve(
                    &RetrieveOptions {
                        dataset: args.shared.dataset.clone(),
                        server: args.shared.server.clone(),
                        mode: args.mode.into(),
                        out: args.out,
                        shards: args.shared.shards.clone(),
                        field_map,
                        budget: args.shared.budget(),
                        ladder: make_ladder_config(
                            args.shared.timeout_ms,
                            args.shared.max_retries,
                            args.shared.max_results,
                        ),
                        jobs: args.shared.jobs,
                        resume: args.resume,
                        tokenizer_cmd: args.shared.tokenizer_cmd(),
                        revision_order: args.revision_order,
                    },
                    &mut stdout,
                )
            }
            Command::Hitrate(args) => {
                let field_map =
                    args.shared.field_map().map_err(scs_cli::CommandError::Fatal)?;
                cmd_hitrate(
                    &HitrateOptions {
                        dataset: args.shared.dataset.clone(),
                        server: args.shared.server.clone(),
                        shards: args.shared.shards.clone(),
                        field_map,
                        budget: args.shared.budget(),
                        ladder: make_ladder_config(
                            args.shared.timeout_ms,
                            args.shared.max_retries,
                            args.shared.max_results,
                        ),
                        jobs: args.shared.jobs,
                        tokenizer_cmd: args.shared.tokenizer_cmd(),
                    },
                    &mut stdout,
                )
            }
        }
    };

    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
