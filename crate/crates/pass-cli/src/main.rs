//! Single binary orchestrating the pipeline: corpus ingestion, base and
//! look-ahead training, generation, the benchmark grid, and the
//! verification suites.
//!
//! Exit codes: 0 success, 1 verification failure (or runtime error),
//! 2 usage/configuration error.

mod config;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use config::ConfigFile;
use pass_core::bench::{
    run_grid, verify_losslessness, BenchBudget, BenchGrid, BenchModels, Strategy,
};
use pass_core::corpus::{self, Corpus};
use pass_core::decoding::{
    ar_generate, pass_generate, replay_consistency_check, sps_generate, DecodeConfig, Generation,
};
use pass_core::model::{load_checkpoint, save_checkpoint, ModelConfig, Vocab};
use pass_core::sampling::{derive_seed, SamplerConfig};
use pass_core::training::{init_lookahead, train_base, train_lookahead, TrainConfig};
use pass_core::verify::{cache_consistency_check, gradient_check};
use pass_core::TokenId;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pass", version, about = "Speculative decoding engine over a toy transformer")]
struct Cli {
    /// key=value configuration file; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master RNG seed (default 0)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Directory of raw text files
    #[arg(long)]
    data: Option<PathBuf>,
    /// Corpus manifest written by `ingest` (exact split reproduction)
    #[arg(long, conflicts_with = "data")]
    manifest: Option<PathBuf>,
    /// Train split fraction when ingesting from --data
    #[arg(long)]
    split: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Split a directory of documents and write the corpus manifest
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the base model on the corpus train split
    TrainBase {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        seq_len: Option<usize>,
        #[arg(long)]
        d_emb: Option<usize>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        heads: Option<usize>,
        #[arg(long)]
        d_ff: Option<usize>,
        #[arg(long)]
        max_seq: Option<usize>,
        /// Look-ahead embedding slots reserved in the vocabulary
        #[arg(long)]
        lookahead_slots: Option<usize>,
        /// Training log CSV path
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Finetune the look-ahead embedding table on a base checkpoint
    TrainLa {
        #[arg(long)]
        base: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        seq_len: Option<usize>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Generate one completion and print the text plus statistics
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Draft model checkpoint (required for --strategy sps)
        #[arg(long)]
        draft_ckpt: Option<PathBuf>,
        /// ar | sps | pass | pass-unk
        #[arg(long)]
        strategy: Option<String>,
        /// Literal prompt text (UTF-8 bytes)
        #[arg(long)]
        prompt: Option<String>,
        #[command(flatten)]
        data: DataArgs,
        /// Which extracted prompt to use with --data/--manifest
        #[arg(long)]
        prompt_index: Option<usize>,
        #[arg(long)]
        prompt_len: Option<usize>,
        #[arg(long)]
        max_new: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        lookahead: Option<usize>,
        /// Write the per-iteration trace as JSON lines
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the strategy x temperature x look-ahead benchmark grid
    Bench {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        draft_ckpt: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated subset of ar,sps,pass,pass-unk
        #[arg(long)]
        strategies: Option<String>,
        /// Comma-separated temperatures
        #[arg(long)]
        temperatures: Option<String>,
        /// Comma-separated look-ahead lengths
        #[arg(long)]
        lookaheads: Option<String>,
        #[arg(long)]
        prompts: Option<usize>,
        #[arg(long)]
        prompt_len: Option<usize>,
        #[arg(long)]
        max_new: Option<usize>,
        /// CI-scale run: 20 prompts, 128 new tokens
        #[arg(long)]
        quick: bool,
        /// Write per-cell trace files
        #[arg(long)]
        trace: bool,
        /// Run the prompts of each cell in parallel (wall-clock columns
        /// are then no longer clean single-stream latencies)
        #[arg(long)]
        parallel: bool,
        /// Output directory for report.csv / report.md
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the loss-lessness, gradient, and cache verification suites
    Verify {
        /// Checkpoint to verify (defaults to the shipped tiny checkpoint)
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Reduced sample counts
        #[arg(long)]
        quick: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<pass_core::Error>().is_some_and(|pe| {
                matches!(
                    pe,
                    pass_core::Error::Config(_) | pass_core::Error::InvalidParameter(_)
                )
            });
            if usage {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let seed = file.resolve(cli.seed, "seed", 0u64)?;
    match cli.command {
        Command::Ingest { data, split, out } => {
            let split = file.resolve(split, "split", 0.9)?;
            let corpus = corpus::ingest(&data, split, seed)?;
            corpus.write_manifest(&out)?;
            let m = corpus.manifest();
            println!(
                "ingested {} documents from {}: {} train / {} test ({} / {} bytes), manifest {}",
                m.files.len(),
                data.display(),
                corpus.train_docs().len(),
                corpus.test_docs().len(),
                m.train_bytes,
                m.test_bytes,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::TrainBase {
            data,
            out,
            steps,
            warmup,
            lr,
            batch,
            seq_len,
            d_emb,
            layers,
            heads,
            d_ff,
            max_seq,
            lookahead_slots,
            log,
        } => {
            let corpus = load_corpus(&data, &file, seed)?;
            let model_cfg = ModelConfig {
                d_emb: file.resolve(d_emb, "d-emb", 128)?,
                n_layers: file.resolve(layers, "layers", 4)?,
                n_heads: file.resolve(heads, "heads", 4)?,
                d_ff: file.resolve(d_ff, "d-ff", 512)?,
                max_seq_len: file.resolve(max_seq, "max-seq", 576)?,
                vocab: Vocab::byte_level(file.resolve(lookahead_slots, "lookahead-slots", 8)?),
            };
            let train_cfg = TrainConfig {
                lr: file.resolve(lr, "lr", 3e-4)?,
                total_steps: file.resolve(steps, "steps", 20_000)?,
                warmup_steps: file.resolve(warmup, "warmup", 2_000)?,
                batch_size: file.resolve(batch, "batch", 8)?,
                seq_len: file.resolve(seq_len, "seq-len", 128)?,
                seed,
                ..TrainConfig::base_default()
            };
            let mut log_file = open_log(&log)?;
            let result = train_base(
                &corpus,
                &model_cfg,
                &train_cfg,
                log_file.as_mut().map(|f| f as &mut dyn Write),
            )?;
            save_checkpoint(&result.model, &out)?;
            println!(
                "trained base model for {} steps: loss {:.4} -> {:.4}, checkpoint {}",
                train_cfg.total_steps,
                result.loss_history.first().unwrap_or(&f64::NAN),
                result.loss_history.last().unwrap_or(&f64::NAN),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::TrainLa {
            base,
            data,
            out,
            steps,
            warmup,
            lr,
            batch,
            seq_len,
            log,
        } => {
            let corpus = load_corpus(&data, &file, seed)?;
            let model = load_checkpoint(&base)?;
            let train_cfg = TrainConfig {
                lr: file.resolve(lr, "lr", 0.01)?,
                total_steps: file.resolve(steps, "steps", 10_000)?,
                warmup_steps: file.resolve(warmup, "warmup", 2_000)?,
                batch_size: file.resolve(batch, "batch", 8)?,
                seq_len: file.resolve(seq_len, "seq-len", 128)?,
                seed,
                ..TrainConfig::lookahead_default()
            };
            let mut log_file = open_log(&log)?;
            let result = train_lookahead(
                model,
                &corpus,
                &train_cfg,
                log_file.as_mut().map(|f| f as &mut dyn Write),
            )?;
            save_checkpoint(&result.model, &out)?;
            println!(
                "trained look-ahead table for {} steps: loss {:.4} -> {:.4}, checkpoint {}",
                train_cfg.total_steps,
                result.loss_history.first().unwrap_or(&f64::NAN),
                result.loss_history.last().unwrap_or(&f64::NAN),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate {
            ckpt,
            draft_ckpt,
            strategy,
            prompt,
            data,
            prompt_index,
            prompt_len,
            max_new,
            temperature,
            top_k,
            lookahead,
            trace,
        } => {
            let strategy: Strategy = file
                .resolve(strategy, "strategy", "pass".to_string())?
                .parse()?;
            let mut model = load_checkpoint(&ckpt)?;
            if strategy == Strategy::PassUnk {
                init_lookahead(&mut model)?;
            }
            let cfg = DecodeConfig {
                lookahead: file.resolve(lookahead, "lookahead", 4)?,
                max_new_tokens: file.resolve(max_new, "max-new", 512)?,
                min_target_len: None,
                collect_trace: trace.is_some(),
                sampler: SamplerConfig {
                    temperature: file.resolve(temperature, "temperature", 0.8)?,
                    top_k: Some(file.resolve(top_k, "top-k", 10)?),
                    rng_seed: seed,
                },
            };
            let prompt_tokens = resolve_prompt(
                &prompt,
                &data,
                &file,
                prompt_index.unwrap_or(0),
                file.resolve(prompt_len, "prompt-len", 32)?,
                seed,
                &model.cfg.vocab,
            )?;
            let generation = match strategy {
                Strategy::Ar => ar_generate(&model, &prompt_tokens, &cfg)?,
                Strategy::Pass | Strategy::PassUnk => pass_generate(&model, &prompt_tokens, &cfg)?,
                Strategy::Sps => {
                    let draft_path = draft_ckpt.ok_or_else(|| {
                        pass_core::Error::Config(
                            "--strategy sps requires --draft-ckpt".into(),
                        )
                    })?;
                    let draft = load_checkpoint(&draft_path)?;
                    sps_generate(&model, &draft, &prompt_tokens, &cfg)?
                }
            };
            if let Some(path) = trace {
                write_trace(&generation, &path)?;
            }
            let text = model.cfg.vocab.decode(generation.generated());
            println!("{}", String::from_utf8_lossy(&text));
            let s = &generation.stats;
            println!(
                "# strategy={strategy} seed={seed} tokens={} model_calls={} draft_calls={} \
                 tokens_per_call={:.4} accepted_per_iter={:.4} wall_s={:.3}",
                s.tokens_generated,
                s.model_calls,
                s.draft_model_calls,
                s.tokens_per_call(),
                s.accepted_per_iteration(),
                s.wall_clock.as_secs_f64()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            ckpt,
            draft_ckpt,
            data,
            strategies,
            temperatures,
            lookaheads,
            prompts,
            prompt_len,
            max_new,
            quick,
            trace,
            parallel,
            out,
        } => {
            let corpus = load_corpus(&data, &file, seed)?;
            let target = load_checkpoint(&ckpt)?;
            let draft = draft_ckpt.map(load_checkpoint).transpose()?;
            let default_strategies = if draft.is_some() {
                "ar,pass-unk,pass,sps".to_string()
            } else {
                "ar,pass-unk,pass".to_string()
            };
            let grid = BenchGrid {
                strategies: parse_list::<Strategy>(&file.resolve(
                    strategies,
                    "strategies",
                    default_strategies,
                )?)?,
                temperatures: parse_list::<f64>(&file.resolve(
                    temperatures,
                    "temperatures",
                    "0.8,0.5,0.2".to_string(),
                )?)?,
                lookaheads: parse_list::<usize>(&file.resolve(
                    lookaheads,
                    "lookaheads",
                    "2,4,6,8".to_string(),
                )?)?,
            };
            let (n_prompts, budget_tokens) = if quick { (20, 128) } else { (200, 512) };
            let n_prompts = file.resolve(prompts, "prompts", n_prompts)?;
            let budget = BenchBudget {
                max_new_tokens: file.resolve(max_new, "max-new", budget_tokens)?,
                top_k: Some(file.resolve(None, "top-k", 10)?),
                collect_trace: trace,
                parallel,
            };
            let prompt_set = corpus::extract_prompts(
                &corpus,
                &target.cfg.vocab,
                n_prompts,
                file.resolve(prompt_len, "prompt-len", 32)?,
                derive_seed(seed, &[0x9a0]),
            )?;
            let table = run_grid(
                &BenchModels {
                    target: &target,
                    draft: draft.as_ref(),
                },
                &prompt_set,
                &grid,
                &budget,
                seed,
            )?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from("bench-out"));
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("report.csv"), table.to_csv())?;
            std::fs::write(out_dir.join("report.md"), table.to_markdown())?;
            if trace {
                for cell in &table.cells {
                    if let Some(traces) = &cell.traces {
                        let name = format!(
                            "trace_{}_t{:.1}_l{}.jsonl",
                            cell.strategy, cell.temperature, cell.lookahead
                        );
                        let mut f = std::fs::File::create(out_dir.join(name))?;
                        for prompt_trace in traces {
                            for ev in prompt_trace {
                                writeln!(f, "{}", serde_json::to_string(ev)?)?;
                            }
                        }
                    }
                }
            }
            print!("{}", table.to_markdown());
            println!("reports written to {}", out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { ckpt, quick } => verify_suites(ckpt, quick, seed),
    }
}

fn verify_suites(ckpt: Option<PathBuf>, quick: bool, seed: u64) -> anyhow::Result<ExitCode> {
    let path = ckpt.unwrap_or_else(|| PathBuf::from("assets/tiny.ckpt"));
    let model = load_checkpoint(&path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?;
    let (contexts, samples, grad_batches, replay_seeds) = if quick {
        (30, 20_000, 3, 20)
    } else {
        (100, 50_000, 10, 100)
    };
    let mut all_pass = true;

    let sampler = SamplerConfig {
        temperature: 0.8,
        top_k: Some(10),
        rng_seed: seed,
    };
    let lossless = verify_losslessness(&model, 258, contexts, samples, &sampler, seed)?;
    report_line(
        "losslessness.analytic",
        lossless.analytic_max_deviation < pass_core::bench::ANALYTIC_EPS,
        &format!(
            "max deviation {:.3e} over {} contexts (limit {:.0e})",
            lossless.analytic_max_deviation,
            lossless.contexts,
            pass_core::bench::ANALYTIC_EPS
        ),
        &mut all_pass,
    );
    report_line(
        "losslessness.monte-carlo",
        lossless.tv_first_token < pass_core::bench::TV_LIMIT,
        &format!(
            "first-token TV {:.4} over {} runs (limit {})",
            lossless.tv_first_token, lossless.mc_samples, pass_core::bench::TV_LIMIT
        ),
        &mut all_pass,
    );

    let grad = gradient_check(grad_batches, derive_seed(seed, &[0x96ad]))?;
    report_line(
        "gradient.finite-differences",
        grad.pass,
        &format!(
            "{} coordinates over {} batches, worst tolerance ratio {:.3}, worst abs {:.2e}",
            grad.coords_checked, grad.batches, grad.worst_ratio, grad.worst_abs
        ),
        &mut all_pass,
    );

    let vocab = &model.cfg.vocab;
    let mut probe_rng = pass_core::sampling::TaskRng::from_seed(derive_seed(seed, &[0xcac]));
    let mut tokens: Vec<TokenId> = vec![vocab.bos()];
    let probe_len = 48.min(model.cfg.max_seq_len.saturating_sub(8)).max(2);
    for _ in 1..probe_len {
        tokens.push(probe_rng.below(vocab.base_size()) as TokenId);
    }
    let decode = DecodeConfig {
        lookahead: vocab.lookahead_count().min(4).max(1),
        max_new_tokens: 32.min(model.cfg.max_seq_len.saturating_sub(probe_len + 8)),
        sampler: sampler.clone(),
        ..DecodeConfig::default()
    };
    let cache = cache_consistency_check(&model, &tokens, replay_seeds, &decode)?;
    report_line(
        "cache.split-consistency",
        cache.split_max_abs_diff < pass_core::verify::SPLIT_EPS,
        &format!(
            "max logit diff {:.3e} over {} split points (limit {:.0e})",
            cache.split_max_abs_diff,
            cache.splits_checked,
            pass_core::verify::SPLIT_EPS
        ),
        &mut all_pass,
    );
    report_line(
        "cache.replay",
        cache.replay_identical == cache.replay_total,
        &format!(
            "{}/{} seeded cached-vs-recompute runs token-identical",
            cache.replay_identical, cache.replay_total
        ),
        &mut all_pass,
    );

    // one spot replay with divergence detail for the log
    let replay = replay_consistency_check(&model, &tokens[..8.min(tokens.len())], &decode)?;
    report_line(
        "cache.replay-detail",
        replay.identical,
        &format!(
            "cached len {}, recomputed len {}{}",
            replay.cached_len,
            replay.uncached_len,
            replay
                .divergence
                .as_ref()
                .map(|d| format!(", first divergence at {}", d.index))
                .unwrap_or_default()
        ),
        &mut all_pass,
    );

    if all_pass {
        println!("verify: all suites PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("verify: FAIL");
        Ok(ExitCode::from(1))
    }
}

fn report_line(name: &str, pass: bool, detail: &str, all_pass: &mut bool) {
    *all_pass &= pass;
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn load_corpus(data: &DataArgs, file: &ConfigFile, seed: u64) -> anyhow::Result<Corpus> {
    if let Some(manifest) = &data.manifest {
        return Ok(Corpus::from_manifest(manifest)?);
    }
    let dir = data
        .data
        .clone()
        .or_else(|| file.get_raw("data").map(PathBuf::from))
        .ok_or_else(|| {
            anyhow!(pass_core::Error::Config(
                "either --data or --manifest is required".into()
            ))
        })?;
    let split = file.resolve(data.split, "split", 0.9)?;
    Ok(corpus::ingest(dir, split, seed)?)
}

#[allow(clippy::too_many_arguments)]
fn resolve_prompt(
    prompt: &Option<String>,
    data: &DataArgs,
    file: &ConfigFile,
    prompt_index: usize,
    prompt_len: usize,
    seed: u64,
    vocab: &Vocab,
) -> anyhow::Result<Vec<TokenId>> {
    if let Some(text) = prompt {
        let mut tokens = vec![vocab.bos()];
        tokens.extend(vocab.encode(text.as_bytes())?);
        return Ok(tokens);
    }
    if data.data.is_none() && data.manifest.is_none() && file.get_raw("data").is_none() {
        return Err(anyhow!(pass_core::Error::Config(
            "provide --prompt TEXT, or --data/--manifest to draw held-out prompts".into()
        )));
    }
    let corpus = load_corpus(data, file, seed)?;
    let set = corpus::extract_prompts(
        &corpus,
        vocab,
        prompt_index + 1,
        prompt_len,
        derive_seed(seed, &[0x9a0]),
    )?;
    Ok(set.prompts[prompt_index].clone())
}

fn parse_list<T: std::str::FromStr>(s: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<T>()
                .map_err(|e| anyhow!(pass_core::Error::InvalidParameter(format!("'{p}': {e}"))))
        })
        .collect()
}

fn open_log(path: &Option<PathBuf>) -> anyhow::Result<Option<std::fs::File>> {
    Ok(match path {
        Some(p) => Some(std::fs::File::create(p)?),
        None => None,
    })
}

fn write_trace(generation: &Generation, path: &Path) -> anyhow::Result<()> {
    let mut f = std::fs::File::create(path)?;
    if let Some(events) = &generation.trace {
        for ev in events {
            writeln!(f, "{}", serde_json::to_string(ev)?)?;
        }
    }
    Ok(())
}
