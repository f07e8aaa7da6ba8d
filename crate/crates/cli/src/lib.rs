//! Command-line front end.
//!
//! Every subcommand is deterministic given its flags; all randomness flows
//! from explicit `--seed` values. Tabular outputs are CSV with a header
//! row; single-object outputs are JSON.

use anyhow::{anyhow, Context};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;

use embedmark::attack::{trigger_prob, weight_tail_compare, AttackConfig, WeightModel};
use embedmark::codec::{inject_batch, recover_batch};
use embedmark::corpus::{read_jsonl, synthetic_unit_corpus, write_jsonl};
use embedmark::keygen::{
    generate_key, load_key, save_key, seeded_rng, KeyParams, DEFAULT_MAX_ATTEMPTS,
    DEFAULT_MAX_CONDITION,
};
use embedmark::linalg::Vector;
use embedmark::variants::{
    compare_variants, least_squares_importance, mixing_matrix_gen, obfuscate_hyperdims,
    pearson_flags, pearson_matrix, write_correlation_csv, write_importance_csv, write_variant_csv,
    ObfuscationLayout, VariantKind, DEFAULT_CORRELATION_THRESHOLD, DEFAULT_RIDGE,
};
use embedmark::verifier::verify;

/// Result of one CLI run: the process exit code and any files written.
#[derive(Debug)]
pub struct CommandOutcome {
    /// 0 success, 1 operational failure, 2 usage error.
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Parser)]
#[command(
    name = "embedmark",
    version,
    about = "Watermark embeddings with a secret linear transform and verify suspected copies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a watermark key and write it to a JSON key file.
    Keygen(KeygenArgs),
    /// Write a synthetic corpus of unit embeddings as JSONL.
    GenCorpus(GenCorpusArgs),
    /// Watermark every embedding in a JSONL corpus.
    Inject(InjectArgs),
    /// Apply the key pseudoinverse to every embedding in a JSONL corpus.
    Recover(RecoverArgs),
    /// Verify suspect embeddings against originals and a contrast set.
    Verify(VerifyArgs),
    /// Run the paraphrase-averaging and Gaussian-noise attacks, emitting CSV.
    Attack(AttackArgs),
    /// Analytical tools: weight model, matrix variants, obfuscation stats.
    Analyze(AnalyzeArgs),
    /// Start the watermarking proxy service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct KeygenArgs {
    /// Original embedding dimension.
    #[arg(long)]
    n: usize,
    /// Nonzero correlations per row.
    #[arg(long)]
    k: usize,
    /// Watermarked embedding dimension.
    #[arg(long)]
    w: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_CONDITION)]
    max_condition: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    max_attempts: u32,
    /// Key file destination. The file is the entire secret.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "e")]
    prefix: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InjectArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    suspect: PathBuf,
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    contrast_suspect: PathBuf,
    #[arg(long)]
    contrast_original: PathBuf,
    /// Decision threshold on the percent mean-cosine gap.
    #[arg(long, default_value_t = 10.0)]
    threshold: f64,
    /// Also write the report JSON to this path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write per-pair cosines as CSV to this path.
    #[arg(long)]
    pairs_csv: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    key: PathBuf,
    /// JSONL corpus of original embeddings.
    #[arg(long)]
    corpus: PathBuf,
    /// Experiment config JSON: {"p", "spread", "lambda_grid", "trials", "seed"}.
    #[arg(long)]
    config: PathBuf,
    /// Contrast key file; derived from the main key's parameters with
    /// seed+1 when omitted.
    #[arg(long)]
    contrast_key: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(subcommand)]
    command: AnalyzeCommand,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Evaluate the trigger-word weight model and its tail comparison.
    WeightModel(WeightModelArgs),
    /// Compare transformation-matrix constructions end to end.
    Variants(VariantsArgs),
    /// Hyperdimension obfuscation detectors on a synthetic corpus.
    Obfuscation(ObfuscationArgs),
}

#[derive(Args)]
struct WeightModelArgs {
    /// Per-token trigger probability.
    #[arg(long)]
    pt: f64,
    /// Sentence length in tokens.
    #[arg(long)]
    slen: u32,
    /// Paraphrase count for the averaged tail.
    #[arg(long, default_value_t = 10)]
    p: u32,
    /// Watermark weight (cancels from the comparison; kept for provenance).
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Comma-separated tail points in [0, 1).
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.31, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])]
    a_grid: Vec<f64>,
}

#[derive(Args)]
struct VariantsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    w: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    samples: usize,
    /// Perturbation modeling an imperfect surrogate copy.
    #[arg(long, default_value_t = 0.005)]
    noise: f64,
    /// Comma-separated kinds; all six when omitted.
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<VariantKind>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ObfuscationArgs {
    /// Original embedding dimension.
    #[arg(long)]
    n: usize,
    /// Number of inserted hyperdimensions.
    #[arg(long)]
    w_extra: usize,
    /// Original dimensions mixed into each hyperdimension.
    #[arg(long)]
    k: usize,
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_CORRELATION_THRESHOLD)]
    threshold: f64,
    /// Correlation-matrix CSV destination.
    #[arg(long)]
    corr_out: PathBuf,
    /// Importance-weights CSV destination.
    #[arg(long)]
    imp_out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Proxy config JSON.
    #[arg(long)]
    config: PathBuf,
}

/// Parse and run, writing payload output to stdout.
pub fn run<I, S>(argv: I) -> CommandOutcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_with_output(argv, &mut std::io::stdout())
}

/// Parse and run, writing payload output to `out` (tests capture it here).
pub fn run_with_output<I, S>(argv: I, out: &mut dyn Write) -> CommandOutcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let exit_code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return CommandOutcome {
                exit_code,
                artifacts: Vec::new(),
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(artifacts) => CommandOutcome {
            exit_code: 0,
            artifacts,
        },
        Err(e) => {
            eprintln!("error: {e:#}");
            CommandOutcome {
                exit_code: 1,
                artifacts: Vec::new(),
            }
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> anyhow::Result<Vec<PathBuf>> {
    match command {
        Command::Keygen(args) => cmd_keygen(args, out),
        Command::GenCorpus(args) => cmd_gen_corpus(args, out),
        Command::Inject(args) => cmd_inject(args, out),
        Command::Recover(args) => cmd_recover(args, out),
        Command::Verify(args) => cmd_verify(args, out),
        Command::Attack(args) => cmd_attack(args, out),
        Command::Analyze(args) => match args.command {
            AnalyzeCommand::WeightModel(args) => cmd_weight_model(args, out),
            AnalyzeCommand::Variants(args) => cmd_variants(args, out),
            AnalyzeCommand::Obfuscation(args) => cmd_obfuscation(args, out),
        },
        Command::Serve(args) => cmd_serve(args),
    }
}

fn emit_json(out: &mut dyn Write, value: &serde_json::Value) -> anyhow::Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn cmd_keygen(args: KeygenArgs, out: &mut dyn Write) -> anyhow::Result<Vec<PathBuf>> {
    let params = KeyParams::new(args.n, args.k, args.w, args.seed)?
        .with_max_condition(args.max_condition)
        .with_max_attempts(args.max_attempts);
    let key = generate_key(&params)?;
    save_key(&key, &args.out).context("writing key file")?;
    emit_json(
        out,
        &serde_json::json!({
            "n": key.n(),
            "k": key.k(),
            "w": key.w(),
            "seed": args.seed,
            "condition": key.condition(),
            "key_fingerprint": key.fingerprint(),
            "path": args.out,
        }),
    )?;
    Ok(vec![args.out])
}

fn cmd_gen_corpus(args: GenCorpusArgs, out: &mut dyn Write) -> anyhow::Result<Vec<PathBuf>> {
    let records = synthetic_unit_corpus(args.n, args.count, args.seed, &args.prefix)?;
    write_jsonl(&args.out, &records).context("writing corpus")?;
    emit_json(
        out,
        &serde_json::json!({
            "count": records.len(),
            "dim": args.n,
            "seed": args.seed,
            "path": args.out,
        }),
    )?;
    Ok(vec![args.out])
}

fn cmd_inject(args: InjectArgs, out: &mut dyn Write) -> anyhow::Result<Vec<PathBuf>> {
    let key = load_key(&args.key).context("loading key")?;
    let records = read_jsonl(&args.input).context("reading corpus")?;
    let marked = inject_batch(&key, &records)?;
    write_jsonl(&args.output, &marked).context("writing watermarked corpus")?;
    emit_json(
        out,
        &serde_json::json!({
            "count": marked.len(),
            "dim_in": key.n(),
            "dim_out": key.w(),
            "path": args.output,
        }),
    )?;
    Ok(vec![args.output])
}

fn cmd_recover(args: RecoverArgs, out: &mut dyn Write) -> anyhow::Result<Vec<PathBuf>> {
    let key = load_key(&args.key).context("loading key")?;
    let records = read_jsonl(&args.input).context("reading corpus")?;
    let recovered = recover_batch(&key, &records)?;
    write_jsonl(&args.output, &recovered).context("writing recovered corpus")?;
    emit_json(
        out,
        &serde_json::json!({
            "count": recovered.len(),
            "dim_in": key.w(),
            "dim_out": key.n(),
            "path": args.output,
        }),
    )?;
    Ok(vec![args.output])
}

fn cmd_verify(args: VerifyArgs, out: &mut dyn Write) -> anyhow::Result<Vec<PathBuf>> {
    let key = load_key(&args.key).context("loading key")?;
    let suspect = read_jsonl(&args.suspect).context("reading suspect corpus")?;
    let original = read_jsonl(&args.original).context("reading original corpus")?;
    let contrast_suspect =
        read_jsonl(&args.contrast_suspect).context("reading contrast suspect corpus")?;
    let contrast_original =
        read_jsonl(&args.contrast_original).context("reading contrast original corpus")?;
    let report = verify(
        &key,
        &suspect,
        &original,
        &contrast_suspect,
        &contrast_original,
        args.threshold,
    )?;
    writeln!(out, "{}", report.to_json()?)?;
    let mut artifacts = Vec::new();
    if let Some(path) = args.report {
        std::fs::write(&path, report.to_json()?).context("writing report")?;
        artifacts.push(path);
    }
    if let Some(path) = args.pairs_csv {
        let file = std::fs::File::create(&path).context("creating pairs CSV")?;
        report.write_pairs_csv(file)?;
        artifacts.push(path);
    }
    Ok(artifacts)
}

fn cmd_attack(args: AttackArgs, out: &mut dyn Write) -> anyhow::Result<Vec<PathBuf>> {
    let key = load_key(&args.key).context("loading key")?;
    let contrast = match args.contrast_key {
        Some(path) => load_key(&path).context("loading contrast key")?,
        None => {
            let params =
                KeyParams::new(key.n(), key.k(), key.w(), key.params().seed.wrapping_add(1))?;
            generate_key(&params).context("deriving contrast key")?
        }
    };
    if contrast.matrix().values() == key.matrix().values() {
        return Err(anyhow!(
            "contrast key equals the audited key; supply --contrast-key"
        ));
    }
    let originals = read_jsonl(&args.corpus).context("reading corpus")?;
    let config: AttackConfig = serde_json::from_reader(std::io::BufReader::new(
        std::fs::File::open(&args.config).context("opening attack config")?,
    ))
    .context("parsing attack config")?;
    let rows = embedmark::attack::run_attack_experiment(&key, &contrast, &originals, &config)?;
    let file = std::fs::File::create(&args.out).context("creating results CSV")?;
    embedmark::attack::write_attack_csv(&rows, file)?;
    emit_json(
        out,
        &serde_json::json!({
            "rows": rows.len(),
            "samples": originals.len(),
            "path": args.out,
        }),
    )?;
    Ok(vec![args.out])
}

fn cmd_weight_model(args: WeightModelArgs, out: &mut dyn Write) -> anyhow::Result<Vec<PathBuf>> {
    let model = WeightModel::new(args.pt, args.slen, args.p, args.lambda)?;
    let p_s = trigger_prob(&model);
    let tails = args
        .a_grid
        .iter()
        .map(|&a| {
            let (p_single, p_avg) = weight_tail_compare(&model, a)?;
            Ok(serde_json::json!({
                "a": a,
                "p_single": p_single,
                "p_avg": p_avg,
            }))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    emit_json(
        out,
        &serde_json::json!({
            "p_t": model.p_t,
            "s_len": model.s_len,
            "p": model.p,
            "lambda": model.lambda_w,
            "p_s": p_s,
            "tails": tails,
        }),
    )?;
    Ok(Vec::new())
}

fn cmd_variants(args: VariantsArgs, out: &mut dyn Write) -> anyhow::Result<Vec<PathBuf>> {
    let kinds = args.kinds.unwrap_or_else(|| VariantKind::ALL.to_vec());
    let rows = compare_variants(
        &kinds,
        args.n,
        args.k,
        args.w,
        args.samples,
        args.seed,
        args.noise,
    )?;
    let file = std::fs::File::create(&args.out).context("creating variants CSV")?;
    write_variant_csv(&rows, file)?;
    emit_json(
        out,
        &serde_json::json!({
            "kinds": kinds.iter().map(|k| k.name()).collect::<Vec<_>>(),
            "rows": rows.len(),
            "path": args.out,
        }),
    )?;
    Ok(vec![args.out])
}

fn cmd_obfuscation(args: ObfuscationArgs, out: &mut dyn Write) -> anyhow::Result<Vec<PathBuf>> {
    if args.w_extra == 0 {
        return Err(anyhow!(
            "obfuscation analysis needs at least one hyperdimension"
        ));
    }
    let mut rng = seeded_rng(args.seed);
    let layout = ObfuscationLayout::random(args.n, args.w_extra, args.k, &mut rng)?;
    let mixing = mixing_matrix_gen(&layout, &mut rng)?;
    let originals = synthetic_unit_corpus(args.n, args.samples, args.seed.wrapping_add(1), "o")?;
    let combined: Vec<Vector> = originals
        .iter()
        .map(|r| obfuscate_hyperdims(&layout, Some(&mixing), &r.vector))
        .collect::<embedmark::Result<_>>()?;

    let report = pearson_matrix(&combined, &layout)?;
    let corr_file = std::fs::File::create(&args.corr_out).context("creating correlation CSV")?;
    write_correlation_csv(&report, corr_file)?;
    let (flags, skipped) = pearson_flags(&combined, &layout, args.threshold)?;

    // Downstream stand-in: a fixed random linear functional of the original
    // coordinates, so importance mass has somewhere meaningful to land.
    let beta = embedmark::corpus::seeded_unit_vector(args.n, args.seed.wrapping_add(2))?;
    let labels: Vec<f64> = originals
        .iter()
        .map(|r| r.vector.dot(&beta))
        .collect::<embedmark::Result<_>>()?;
    let weights = least_squares_importance(&combined, &labels, DEFAULT_RIDGE)?;
    let imp_file = std::fs::File::create(&args.imp_out).context("creating importance CSV")?;
    write_importance_csv(&weights, &layout, imp_file)?;

    emit_json(
        out,
        &serde_json::json!({
            "hyper_columns": layout.positions,
            "flagged_pairs": flags.len(),
            "zero_variance_columns": skipped,
            "threshold": args.threshold,
            "correlation_csv": args.corr_out,
            "importance_csv": args.imp_out,
        }),
    )?;
    Ok(vec![args.corr_out, args.imp_out])
}

fn cmd_serve(args: ServeArgs) -> anyhow::Result<Vec<PathBuf>> {
    let config = embedmark_proxy::ProxyConfig::load(&args.config)?;
    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    runtime.block_on(embedmark_proxy::serve(config))?;
    Ok(Vec::new())
}
