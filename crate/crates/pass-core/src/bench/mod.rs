//! Benchmark grid: strategy x temperature x look-ahead sweeps over an
//! evaluation prompt set, reporting model-calls-per-token (the
//! hardware-independent speedup proxy) with wall-clock as a secondary
//! column.

mod losslessness;

pub use losslessness::{
    decomposition_deviation, mc_first_token_tv, production_deviation, verify_losslessness,
    LosslessnessReport, ANALYTIC_EPS, TV_LIMIT,
};

use crate::corpus::PromptSet;
use crate::decoding::{
    ar_generate, pass_generate, sps_generate, DecodeConfig, Generation,
};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::sampling::{derive_seed, SamplerConfig};
use crate::training::init_lookahead;
use rayon::prelude::*;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Autoregressive baseline.
    Ar,
    /// Parallel speculative sampling with trained look-ahead embeddings.
    Pass,
    /// Parallel speculative sampling with UNK-initialized embeddings.
    PassUnk,
    /// Two-model speculative sampling.
    Sps,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Ar, Strategy::PassUnk, Strategy::Pass, Strategy::Sps];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Strategy::Ar => "ar",
            Strategy::Pass => "pass",
            Strategy::PassUnk => "pass-unk",
            Strategy::Sps => "sps",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ar" => Ok(Strategy::Ar),
            "pass" => Ok(Strategy::Pass),
            "pass-unk" => Ok(Strategy::PassUnk),
            "sps" => Ok(Strategy::Sps),
            other => Err(Error::InvalidParameter(format!(
                "unknown strategy '{other}' (expected ar, sps, pass, pass-unk)"
            ))),
        }
    }
}

/// Sweep axes. Autoregressive cells ignore the look-ahead axis and run
/// once per temperature.
#[derive(Debug, Clone)]
pub struct BenchGrid {
    pub strategies: Vec<Strategy>,
    pub temperatures: Vec<f64>,
    pub lookaheads: Vec<usize>,
}

impl Default for BenchGrid {
    fn default() -> Self {
        Self {
            strategies: Strategy::ALL.to_vec(),
            temperatures: vec![0.8, 0.5, 0.2],
            lookaheads: vec![2, 4, 6, 8],
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchBudget {
    pub max_new_tokens: usize,
    pub top_k: Option<usize>,
    pub collect_trace: bool,
    /// Run prompts of one cell in parallel. Wall-clock columns are only
    /// clean single-stream latencies when this is off.
    pub parallel: bool,
}

impl Default for BenchBudget {
    fn default() -> Self {
        Self {
            max_new_tokens: 512,
            top_k: Some(10),
            collect_trace: false,
            parallel: false,
        }
    }
}

pub struct BenchModels<'a> {
    /// Target model with a trained look-ahead table.
    pub target: &'a Model,
    /// Smaller draft model for two-model speculation.
    pub draft: Option<&'a Model>,
}

#[derive(Debug, Clone)]
pub struct CellReport {
    pub strategy: Strategy,
    pub temperature: f64,
    /// 0 for the autoregressive baseline.
    pub lookahead: usize,
    pub prompts: usize,
    pub mean_wall_s: f64,
    pub std_wall_s: f64,
    pub mean_model_calls: f64,
    pub mean_draft_calls: f64,
    pub mean_tokens: f64,
    /// Total committed tokens over total target-model calls.
    pub tokens_per_call: f64,
    pub accepted_per_iteration: f64,
    /// accepted[t] / drafted[t] for t = 1..=L.
    pub acceptance_per_position: Vec<f64>,
    pub traces: Option<Vec<Vec<crate::decoding::TraceEvent>>>,
}

#[derive(Debug, Clone)]
pub struct ReportTable {
    pub cells: Vec<CellReport>,
    pub base_seed: u64,
    pub prompt_len: usize,
    pub max_new_tokens: usize,
}

/// Runs every grid cell over the full prompt set with per-(cell, prompt)
/// seeds. Reports are bit-identical across reruns except for the
/// wall-clock columns.
pub fn run_grid(
    models: &BenchModels<'_>,
    prompts: &PromptSet,
    grid: &BenchGrid,
    budget: &BenchBudget,
    base_seed: u64,
) -> Result<ReportTable> {
    if prompts.prompts.is_empty() {
        return Err(Error::Data("empty prompt set".into()));
    }
    if grid.strategies.contains(&Strategy::Sps) && models.draft.is_none() {
        return Err(Error::Config(
            "sps strategy requested but no draft model provided".into(),
        ));
    }
    let needs_unk = grid.strategies.contains(&Strategy::PassUnk);
    let unk_model = if needs_unk {
        let mut copy = Model::new(models.target.cfg.clone(), models.target.weights.clone())?;
        init_lookahead(&mut copy)?;
        Some(copy)
    } else {
        None
    };

    let mut specs: Vec<(Strategy, f64, usize)> = Vec::new();
    for &temp in &grid.temperatures {
        for &strategy in &grid.strategies {
            match strategy {
                Strategy::Ar => specs.push((strategy, temp, 0)),
                _ => {
                    for &l in &grid.lookaheads {
                        specs.push((strategy, temp, l));
                    }
                }
            }
        }
    }

    let mut cells = Vec::with_capacity(specs.len());
    for (cell_idx, &(strategy, temp, l)) in specs.iter().enumerate() {
        let run_one = |prompt_idx: usize| -> Result<Generation> {
            let cfg = DecodeConfig {
                lookahead: l.max(1),
                max_new_tokens: budget.max_new_tokens,
                min_target_len: None,
                collect_trace: budget.collect_trace,
                sampler: SamplerConfig {
                    temperature: temp,
                    top_k: budget.top_k,
                    rng_seed: derive_seed(base_seed, &[cell_idx as u64, prompt_idx as u64]),
                },
            };
            let prompt = &prompts.prompts[prompt_idx];
            match strategy {
                Strategy::Ar => ar_generate(models.target, prompt, &cfg),
                Strategy::Pass => pass_generate(models.target, prompt, &cfg),
                Strategy::PassUnk => {
                    pass_generate(unk_model.as_ref().expect("built above"), prompt, &cfg)
                }
                Strategy::Sps => sps_generate(
                    models.target,
                    models.draft.expect("checked above"),
                    prompt,
                    &cfg,
                ),
            }
        };
        let gens: Vec<Generation> = if budget.parallel {
            (0..prompts.prompts.len())
                .into_par_iter()
                .map(run_one)
                .collect::<Result<_>>()?
        } else {
            (0..prompts.prompts.len())
                .map(run_one)
                .collect::<Result<_>>()?
        };
        cells.push(aggregate(strategy, temp, l, &gens, budget.collect_trace));
    }
    Ok(ReportTable {
        cells,
        base_seed,
        prompt_len: prompts.prompt_len,
        max_new_tokens: budget.max_new_tokens,
    })
}

fn aggregate(
    strategy: Strategy,
    temperature: f64,
    lookahead: usize,
    gens: &[Generation],
    keep_traces: bool,
) -> CellReport {
    let n = gens.len() as f64;
    let walls: Vec<f64> = gens.iter().map(|g| g.stats.wall_clock.as_secs_f64()).collect();
    let mean_wall = walls.iter().sum::<f64>() / n;
    let var_wall = walls.iter().map(|w| (w - mean_wall).powi(2)).sum::<f64>() / n;
    let total_tokens: u64 = gens.iter().map(|g| g.stats.tokens_generated).sum();
    let total_calls: u64 = gens.iter().map(|g| g.stats.model_calls).sum();
    let total_iters: u64 = gens.iter().map(|g| g.stats.iterations).sum();
    let l = gens.iter().map(|g| g.stats.drafted.len()).max().unwrap_or(0);
    let mut drafted = vec![0u64; l];
    let mut accepted = vec![0u64; l];
    for g in gens {
        for (t, &v) in g.stats.drafted.iter().enumerate() {
            drafted[t] += v;
        }
        for (t, &v) in g.stats.accepted.iter().enumerate() {
            accepted[t] += v;
        }
    }
    CellReport {
        strategy,
        temperature,
        lookahead,
        prompts: gens.len(),
        mean_wall_s: mean_wall,
        std_wall_s: var_wall.sqrt(),
        mean_model_calls: total_calls as f64 / n,
        mean_draft_calls: gens.iter().map(|g| g.stats.draft_model_calls).sum::<u64>() as f64 / n,
        mean_tokens: total_tokens as f64 / n,
        tokens_per_call: if total_calls == 0 {
            0.0
        } else {
            total_tokens as f64 / total_calls as f64
        },
        accepted_per_iteration: if total_iters == 0 {
            0.0
        } else {
            accepted.iter().sum::<u64>() as f64 / total_iters as f64
        },
        acceptance_per_position: drafted
            .iter()
            .zip(&accepted)
            .map(|(&d, &a)| if d == 0 { 0.0 } else { a as f64 / d as f64 })
            .collect(),
        traces: keep_traces.then(|| gens.iter().filter_map(|g| g.trace.clone()).collect()),
    }
}

impl ReportTable {
    /// Deterministic columns first; wall-clock columns last so diffs of
    /// regenerated reports isolate timing noise.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "strategy,temperature,lookahead,prompts,mean_tokens,mean_model_calls,\
             mean_draft_calls,tokens_per_call,accepted_per_iteration,acceptance_per_position,\
             mean_wall_s,std_wall_s\n",
        );
        for c in &self.cells {
            let acc = c
                .acceptance_per_position
                .iter()
                .map(|a| format!("{a:.4}"))
                .collect::<Vec<_>>()
                .join("|");
            out.push_str(&format!(
                "{},{:.2},{},{},{:.3},{:.3},{:.3},{:.4},{:.4},{},{:.4},{:.4}\n",
                c.strategy,
                c.temperature,
                c.lookahead,
                c.prompts,
                c.mean_tokens,
                c.mean_model_calls,
                c.mean_draft_calls,
                c.tokens_per_call,
                c.accepted_per_iteration,
                acc,
                c.mean_wall_s,
                c.std_wall_s,
            ));
        }
        out
    }

    /// Two-panel table: strategy x temperature at a pivot look-ahead, and
    /// the look-ahead sweep for the parallel strategy at the first
    /// temperature.
    pub fn to_markdown(&self) -> String {
        let mut temps: Vec<f64> = self.cells.iter().map(|c| c.temperature).collect();
        temps.dedup();
        let pivot_l = self
            .cells
            .iter()
            .filter(|c| c.strategy == Strategy::Pass)
            .map(|c| c.lookahead)
            .find(|&l| l == 4)
            .or_else(|| self.cells.iter().map(|c| c.lookahead).find(|&l| l > 0))
            .unwrap_or(0);
        let mut out = String::new();
        out.push_str(&format!(
            "## Tokens per target-model call ({} prompts of {} tokens, {} new tokens, L = {pivot_l})\n\n",
            self.cells.first().map_or(0, |c| c.prompts),
            self.prompt_len,
            self.max_new_tokens,
        ));
        out.push_str("| strategy |");
        for t in &temps {
            out.push_str(&format!(" T={t:.1} |"));
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in &temps {
            out.push_str("---|");
        }
        out.push('\n');
        let mut strategies: Vec<Strategy> = Vec::new();
        for c in &self.cells {
            if !strategies.contains(&c.strategy) {
                strategies.push(c.strategy);
            }
        }
        for s in strategies {
            out.push_str(&format!("| {s} |"));
            for &t in &temps {
                let cell = self.cells.iter().find(|c| {
                    c.strategy == s
                        && c.temperature == t
                        && (c.lookahead == pivot_l || s == Strategy::Ar)
                });
                match cell {
                    Some(c) => out.push_str(&format!(
                        " {:.3} ({:.2}s) |",
                        c.tokens_per_call, c.mean_wall_s
                    )),
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        let sweep: Vec<&CellReport> = self
            .cells
            .iter()
            .filter(|c| c.strategy == Strategy::Pass && c.temperature == temps[0])
            .collect();
        if sweep.len() > 1 {
            out.push_str("\n## Look-ahead sweep (parallel strategy, first temperature)\n\n");
            out.push_str("| L | tokens/call | accepted/iter | mean wall (s) |\n|---|---|---|---|\n");
            for c in sweep {
                out.push_str(&format!(
                    "| {} | {:.3} | {:.3} | {:.2} |\n",
                    c.lookahead, c.tokens_per_call, c.accepted_per_iteration, c.mean_wall_s
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::model::{ModelConfig, Vocab};

    fn model(seed: u64, layers: usize, d: usize) -> Model {
        let cfg = ModelConfig {
            d_emb: d,
            n_layers: layers,
            n_heads: 2,
            d_ff: d * 2,
            max_seq_len: 128,
            vocab: Vocab::byte_level(4),
        };
        Model::random_init(cfg, seed).unwrap()
    }

    fn prompt_set() -> crate::corpus::PromptSet {
        let docs: Vec<Vec<u8>> = (0..12)
            .map(|i| format!("sample document {i} with enough bytes to prompt").into_bytes())
            .collect();
        let c = corpus::from_documents(docs, 0.5, 1).unwrap();
        corpus::extract_prompts(&c, &Vocab::byte_level(4), 4, 8, 3).unwrap()
    }

    #[test]
    fn grid_runs_and_ar_has_exactly_one_token_per_call() {
        let target = model(1, 2, 16);
        let draft = model(2, 1, 16);
        let grid = BenchGrid {
            strategies: Strategy::ALL.to_vec(),
            temperatures: vec![0.8],
            lookaheads: vec![2, 4],
        };
        let budget = BenchBudget {
            max_new_tokens: 16,
            ..BenchBudget::default()
        };
        let table = run_grid(
            &BenchModels {
                target: &target,
                draft: Some(&draft),
            },
            &prompt_set(),
            &grid,
            &budget,
            9,
        )
        .unwrap();
        // 1 AR cell + 2 pass + 2 pass-unk + 2 sps
        assert_eq!(table.cells.len(), 7);
        let ar = table
            .cells
            .iter()
            .find(|c| c.strategy == Strategy::Ar)
            .unwrap();
        assert!((ar.tokens_per_call - 1.0).abs() < 1e-12);
        for c in &table.cells {
            if matches!(c.strategy, Strategy::Pass | Strategy::PassUnk) {
                let upper = (c.lookahead as f64 + 2.0) / 2.0;
                assert!(c.tokens_per_call >= 1.0 && c.tokens_per_call <= upper);
            }
        }
        assert!(!table.to_csv().is_empty());
        assert!(!table.to_markdown().is_empty());
    }

    #[test]
    fn sps_without_draft_model_is_config_error() {
        let target = model(1, 1, 16);
        let grid = BenchGrid {
            strategies: vec![Strategy::Sps],
            temperatures: vec![0.8],
            lookaheads: vec![2],
        };
        assert!(matches!(
            run_grid(
                &BenchModels {
                    target: &target,
                    draft: None
                },
                &prompt_set(),
                &grid,
                &BenchBudget::default(),
                0,
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn reports_are_deterministic_modulo_wall_clock() {
        let target = model(3, 1, 16);
        let grid = BenchGrid {
            strategies: vec![Strategy::Ar, Strategy::Pass],
            temperatures: vec![0.8, 0.2],
            lookaheads: vec![3],
        };
        let budget = BenchBudget {
            max_new_tokens: 12,
            ..BenchBudget::default()
        };
        let models = BenchModels {
            target: &target,
            draft: None,
        };
        let ps = prompt_set();
        let a = run_grid(&models, &ps, &grid, &budget, 42).unwrap();
        let b = run_grid(&models, &ps, &grid, &budget, 42).unwrap();
        let strip = |csv: &str| -> String {
            csv.lines()
                .map(|l| l.rsplitn(3, ',').nth(2).unwrap_or(l).to_string())
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(&a.to_csv()), strip(&b.to_csv()));
    }
}
