//! The `qtmine` command line.
//!
//! Settings resolve in three layers: built-in defaults, then the JSON file
//! given by `--config`, then flags typed on the command line.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use log::info;
use qtmine_core::analogy::{compare_kshot, eval_analogies};
use qtmine_core::corpus::{candidates_at_year, AliasMap};
use qtmine_core::fcrank::{fc_analysis, FcConfig};
use qtmine_core::highlight::{highlight_passage, render_ansi, render_html};
use qtmine_core::model::{ModelConfig, Params};
use qtmine_core::qt::{target_breakdown, topk_tokens, Aggregation, Scorer};
use qtmine_core::tokenizer::{train_bpe, Vocab};
use qtmine_core::train::{kshot_finetune, perplexity, train, TrainConfig};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::logging::{self, quote};
use crate::par;

#[derive(Debug, Parser)]
#[command(name = "qtmine", version, about = "Query-target mining over a masked language model")]
pub struct Cli {
    /// Root JSON configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic component.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory holding vocab.json, config.json and params.bin.
    #[arg(long, global = true, default_value = "model")]
    pub model_dir: PathBuf,
    /// Directory for reports.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Log level: off, error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a byte-level BPE vocabulary from the corpus.
    TrainTokenizer(TrainTokenizerArgs),
    /// Train the masked language model.
    Train(TrainArgs),
    /// Perplexity on the held-out split.
    Perplexity(CorpusArg),
    /// Top-1/top-5 analogy accuracy per category.
    Analogies(AnalogiesArgs),
    /// Fine-tune on k analogies per category and report accuracy deltas.
    Kshot(KshotArgs),
    /// Score one query against one target phrase.
    Qt(QtArgs),
    /// Rank candidate drugs by query-target score.
    Rank(RankArgs),
    /// Forward-chaining evaluation over year cutoffs.
    Fc(FcArgs),
    /// Permuted-analogy relation mining.
    Mine(MineArgs),
    /// Score a drug combination.
    Combine(CombineArgs),
    /// Score drugs against a side-effect phrase.
    SideEffects(SideEffectArgs),
    /// Highlight passage sentences by relevance to a target term.
    Highlight(HighlightArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArg {
    /// JSON-lines corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainTokenizerArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long, default_value_t = qtmine_core::tokenizer::DEFAULT_VOCAB_SIZE)]
    pub vocab_size: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    /// JSON file holding a training configuration.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    #[arg(long, default_value_t = TrainConfig::default().steps)]
    pub steps: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().eval_every)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 2)]
    pub n_layers: usize,
    #[arg(long, default_value_t = 4)]
    pub n_heads: usize,
    #[arg(long, default_value_t = 128)]
    pub d_model: usize,
    #[arg(long, default_value_t = 512)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 128)]
    pub max_seq: usize,
}

#[derive(Debug, Args)]
pub struct AnalogiesArgs {
    /// Six-column analogy TSV.
    #[arg(long)]
    pub analogies: Option<PathBuf>,
    /// Accuracy reported on standard error (1 or 5); the CSV holds both.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// File of item ids (one per line) left out of the evaluation.
    #[arg(long)]
    pub exclude: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KshotArgs {
    #[arg(long)]
    pub analogies: Option<PathBuf>,
    /// Items sampled per category for fine-tuning.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregationArg {
    Arithmetic,
    Geometric,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Arithmetic => Aggregation::Arithmetic,
            AggregationArg::Geometric => Aggregation::Geometric,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoringArgs {
    /// Target phrase.
    #[arg(long, default_value = qtmine_core::qt::DEFAULT_EFFICACY_TARGET)]
    pub target: String,
    /// How per-mask scores combine.
    #[arg(long, value_enum, default_value_t = AggregationArg::Arithmetic)]
    pub aggregation: AggregationArg,
}

#[derive(Debug, Args)]
pub struct QtArgs {
    /// Query text containing one or more `<mask>` markers.
    #[arg(long)]
    pub query: String,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    /// Also print the distribution renormalized over the target tokens.
    #[arg(long)]
    pub renormalized: bool,
    /// Unconditioned top tokens printed per mask.
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
}

#[derive(Debug, Args)]
pub struct CandidateArgs {
    /// File with one candidate per line.
    #[arg(long, conflicts_with = "trials")]
    pub candidates: Option<PathBuf>,
    /// Trials CSV; candidates are the drugs trialed by `--year`.
    #[arg(long)]
    pub trials: Option<PathBuf>,
    /// Alias CSV used when reading trials.
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    #[arg(long, requires = "trials")]
    pub year: Option<i32>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub candidates: CandidateArgs,
    /// Query template with a `{drug}` slot.
    #[arg(long, default_value = qtmine_core::qt::DEFAULT_RANK_TEMPLATE)]
    pub template: String,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args)]
pub struct FcArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long)]
    pub trials: Option<PathBuf>,
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    #[arg(long)]
    pub approvals: Option<PathBuf>,
    /// Cutoff years: `2005:2016` (inclusive) or `2005,2010,2016`.
    #[arg(long, default_value = "2005:2016")]
    pub years: String,
    /// Score every cutoff with one model trained on the whole corpus.
    #[arg(long)]
    pub no_retrain: bool,
    #[arg(long, default_value = qtmine_core::qt::DEFAULT_RANK_TEMPLATE)]
    pub template: String,
    #[arg(long, default_value = qtmine_core::qt::DEFAULT_EFFICACY_TARGET)]
    pub target: String,
    #[arg(long, default_value_t = qtmine_core::tokenizer::DEFAULT_VOCAB_SIZE)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().steps)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub query_term: String,
    #[arg(long)]
    pub target_term: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct CombineArgs {
    /// Comma-separated drug names (at least two).
    #[arg(long, value_delimiter = ',', required = true)]
    pub drugs: Vec<String>,
    #[arg(long, default_value = qtmine_core::qt::DEFAULT_RANK_TEMPLATE)]
    pub template: String,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args)]
pub struct SideEffectArgs {
    /// Comma-separated drug names.
    #[arg(long, value_delimiter = ',')]
    pub drugs: Vec<String>,
    #[command(flatten)]
    pub candidates: CandidateArgs,
    #[arg(long, default_value = qtmine_core::qt::DEFAULT_SIDE_EFFECT_TEMPLATE)]
    pub template: String,
    /// Side-effect phrase.
    #[arg(long, default_value = "nausea")]
    pub target: String,
    #[arg(long, value_enum, default_value_t = AggregationArg::Arithmetic)]
    pub aggregation: AggregationArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HighlightFormat {
    Ansi,
    Html,
    Json,
}

#[derive(Debug, Args)]
pub struct HighlightArgs {
    /// Passage text.
    #[arg(long, conflicts_with = "passage_file")]
    pub passage: Option<String>,
    #[arg(long)]
    pub passage_file: Option<PathBuf>,
    #[arg(long)]
    pub target: String,
    /// Template with a `{sentence}` slot and mask markers.
    #[arg(long, default_value = qtmine_core::highlight::DEFAULT_SENTENCE_TEMPLATE)]
    pub template: String,
    #[arg(long, value_enum, default_value_t = HighlightFormat::Ansi)]
    pub format: HighlightFormat,
    /// Write here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Which flags were typed explicitly.
struct Explicit<'a>(&'a ArgMatches);

impl Explicit<'_> {
    fn has(&self, id: &str) -> bool {
        matches!(self.0.try_get_raw(id), Ok(Some(_))) && self.0.value_source(id) == Some(ValueSource::CommandLine)
    }
}

macro_rules! set_if {
    ($ex:expr, $id:literal, $dst:expr, $src:expr) => {
        if $ex.has($id) {
            $dst = $src;
        }
    };
}

fn parse_years(text: &str) -> Result<Vec<i32>> {
    let bad = || Error::Config(format!("bad --years {text:?}; expected A:B or A,B,..."));
    if let Some((a, b)) = text.split_once(':') {
        let (a, b): (i32, i32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|y| y.trim().parse().map_err(|_| bad())).collect()
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(crate::error::io_err(path))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

struct Ctx {
    cfg: RunConfig,
}

impl Ctx {
    fn corpus(&self) -> Result<qtmine_core::corpus::DocumentSet> {
        let path = self.cfg.require(&self.cfg.paths.corpus, "corpus")?;
        let load = io::load_corpus(&path)?;
        info!(
            "event=corpus_loaded path={} documents={} malformed={}",
            quote(&path.display().to_string()),
            load.docs.len(),
            load.malformed
        );
        Ok(load.docs)
    }

    fn aliases(&self) -> Result<AliasMap> {
        match &self.cfg.paths.aliases {
            Some(_) => io::load_aliases(&self.cfg.require(&self.cfg.paths.aliases, "aliases")?),
            None => Ok(AliasMap::new()),
        }
    }

    fn model(&self) -> Result<(Vocab, Params<f32>)> {
        io::load_model_dir(&self.cfg.paths.model_dir)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.paths.out_dir.join(name)
    }

    fn candidates(&self, args: &CandidateArgs) -> Result<Vec<String>> {
        if let Some(path) = &args.candidates {
            return read_lines(path);
        }
        let trials = self.cfg.require(&self.cfg.paths.trials, "trials")?;
        let year = args.year.ok_or_else(|| Error::Config("--year is required with --trials".into()))?;
        let records = io::load_trials(&trials, &self.aliases()?)?;
        Ok(candidates_at_year(&records, year))
    }
}

fn write_and_log(path: &Path, contents: &str) -> Result<()> {
    io::write_file(path, contents)?;
    info!("event=wrote path={}", quote(&path.display().to_string()));
    Ok(())
}

fn run_command(cli: &Cli, sub: &ArgMatches, mut cfg: RunConfig) -> Result<()> {
    let ex = Explicit(sub);
    match &cli.command {
        Command::TrainTokenizer(a) => {
            set_if!(ex, "corpus", cfg.paths.corpus, a.corpus.corpus.clone());
            set_if!(ex, "vocab_size", cfg.vocab_size, a.vocab_size);
            let ctx = Ctx { cfg };
            let docs = ctx.corpus()?;
            let vocab = train_bpe(&docs, ctx.cfg.vocab_size)?;
            fs::create_dir_all(&ctx.cfg.paths.model_dir).map_err(crate::error::io_err(&ctx.cfg.paths.model_dir))?;
            let path = ctx.cfg.paths.model_dir.join(io::VOCAB_FILE);
            io::save_vocab(&path, &vocab)?;
            info!("event=tokenizer_trained vocab_size={} merges={}", vocab.len(), vocab.merges().len());
            info!("event=wrote path={}", quote(&path.display().to_string()));
        }
        Command::Train(a) => {
            set_if!(ex, "corpus", cfg.paths.corpus, a.corpus.corpus.clone());
            if let Some(path) = &a.train_config {
                cfg.train = io::load_json(path)?;
                cfg.train.seed = cfg.seed;
            }
            set_if!(ex, "steps", cfg.train.steps, a.steps);
            set_if!(ex, "batch_size", cfg.train.batch_size, a.batch_size);
            set_if!(ex, "learning_rate", cfg.train.learning_rate, a.learning_rate);
            set_if!(ex, "eval_every", cfg.train.eval_every, a.eval_every);
            set_if!(ex, "n_layers", cfg.model.n_layers, a.n_layers);
            set_if!(ex, "n_heads", cfg.model.n_heads, a.n_heads);
            set_if!(ex, "d_model", cfg.model.d_model, a.d_model);
            set_if!(ex, "d_ff", cfg.model.d_ff, a.d_ff);
            set_if!(ex, "max_seq", cfg.model.max_seq, a.max_seq);
            let ctx = Ctx { cfg };
            let docs = ctx.corpus()?;
            let dir = &ctx.cfg.paths.model_dir;
            let vocab = io::load_vocab(&dir.join(io::VOCAB_FILE))?;
            let model = ModelConfig { vocab_size: vocab.len(), ..ctx.cfg.model };
            let mut params = Params::init(model, ctx.cfg.seed)?;
            let outcome = train(&mut params, &vocab, &docs, &ctx.cfg.train)?;
            io::save_checkpoint(&dir.join(io::PARAMS_FILE), &dir.join(io::CONFIG_FILE), &params)?;
            info!(
                "event=trained steps={} initial_eval_loss={} final_eval_loss={}",
                ctx.cfg.train.steps, outcome.initial_eval_loss, outcome.final_eval_loss
            );
            write_and_log(&ctx.out("loss.csv"), &io::loss_csv(&outcome.curve))?;
        }
        Command::Perplexity(a) => {
            set_if!(ex, "corpus", cfg.paths.corpus, a.corpus.clone());
            let ctx = Ctx { cfg };
            let docs = ctx.corpus()?;
            let (vocab, params) = ctx.model()?;
            let ppl = perplexity(&params, &vocab, &docs, &ctx.cfg.train)?;
            println!("perplexity={ppl}");
        }
        Command::Analogies(a) => {
            set_if!(ex, "analogies", cfg.paths.analogies, a.analogies.clone());
            if a.k != 1 && a.k != 5 {
                return Err(Error::Config(format!("--k must be 1 or 5, got {}", a.k)));
            }
            let ctx = Ctx { cfg };
            let items = io::load_analogies(&ctx.cfg.require(&ctx.cfg.paths.analogies, "analogies")?)?;
            let exclude: BTreeSet<usize> = match &a.exclude {
                Some(p) => read_lines(p)?
                    .iter()
                    .map(|l| l.parse().map_err(|_| Error::Config(format!("bad item id {l:?} in exclude file"))))
                    .collect::<Result<_>>()?,
                None => BTreeSet::new(),
            };
            let (vocab, params) = ctx.model()?;
            let report = eval_analogies(&params, &vocab, &items, &exclude)?;
            let csv = io::analogy_csv(&report);
            write_and_log(&ctx.out("analogies.csv"), &csv)?;
            io::save_json(&ctx.out("analogies.json"), &report)?;
            for s in &report.subcategories {
                let acc = if a.k == 1 { s.top1 } else { s.top5 };
                info!("event=analogy_accuracy subcategory={} n={} k={} accuracy={}", s.subcategory.as_str(), s.n, a.k, acc);
            }
            print!("{csv}");
        }
        Command::Kshot(a) => {
            set_if!(ex, "analogies", cfg.paths.analogies, a.analogies.clone());
            set_if!(ex, "k", cfg.kshot.k, a.k);
            set_if!(ex, "steps", cfg.kshot.train.steps, a.steps);
            set_if!(ex, "learning_rate", cfg.kshot.train.learning_rate, a.learning_rate);
            let ctx = Ctx { cfg };
            let items = io::load_analogies(&ctx.cfg.require(&ctx.cfg.paths.analogies, "analogies")?)?;
            let (vocab, params) = ctx.model()?;
            let tuned = kshot_finetune(&params, &vocab, &items, ctx.cfg.kshot.k, &ctx.cfg.kshot.train)?;
            let exclude: BTreeSet<usize> = tuned.sampled.iter().copied().collect();
            let cmp = compare_kshot(&params, &tuned.params, &vocab, &items, &exclude)?;
            io::save_model_dir(&ctx.out("kshot-model"), &vocab, &tuned.params)?;
            let csv = io::kshot_csv(&cmp);
            write_and_log(&ctx.out("kshot.csv"), &csv)?;
            io::save_json(&ctx.out("kshot.json"), &cmp)?;
            print!("{csv}");
        }
        Command::Qt(a) => {
            let (vocab, params) = Ctx { cfg }.model()?;
            let scorer = Scorer::new(&params, &vocab).with_aggregation(a.scoring.aggregation.into());
            let query = scorer.query(&a.query)?;
            let target = scorer.target(&a.scoring.target)?;
            let probs = scorer.mlm_predict(&query)?;
            let score = scorer.qt_score(&query, &target)?;
            println!("aggregate={}", score.aggregate);
            for (k, s) in score.per_position.iter().enumerate() {
                let top: Vec<String> = topk_tokens(&vocab, &probs[k], a.top_k)
                    .iter()
                    .map(|(id, p)| format!("{:?}:{p:.6}", vocab.token_text(*id)))
                    .collect();
                println!("position={k} score={s} top=[{}]", top.join(","));
            }
            if a.renormalized {
                for (k, row) in target_breakdown(&probs, &target).iter().enumerate() {
                    let parts: Vec<String> =
                        row.iter().map(|(id, p)| format!("{:?}:{p:.6}", vocab.token_text(*id))).collect();
                    println!("position={k} renormalized=[{}]", parts.join(","));
                }
            }
        }
        Command::Rank(a) => {
            set_if!(ex, "trials", cfg.paths.trials, a.candidates.trials.clone());
            set_if!(ex, "aliases", cfg.paths.aliases, a.candidates.aliases.clone());
            set_if!(ex, "template", cfg.templates.rank, a.template.clone());
            set_if!(ex, "target", cfg.targets.efficacy, a.scoring.target.clone());
            set_if!(ex, "aggregation", cfg.aggregation, a.scoring.aggregation.into());
            let ctx = Ctx { cfg };
            let candidates = ctx.candidates(&a.candidates)?;
            let (vocab, params) = ctx.model()?;
            let scorer = Scorer::new(&params, &vocab).with_aggregation(ctx.cfg.aggregation);
            let target = scorer.target(&ctx.cfg.targets.efficacy)?;
            let ranked = par::rank_by_qt(&scorer, &candidates, &ctx.cfg.templates.rank, &target)?;
            let csv = io::ranked_csv(&ranked);
            write_and_log(&ctx.out("ranked.csv"), &csv)?;
            write_and_log(&ctx.out("ranked.json"), &io::ranked_json(&ranked))?;
            print!("{csv}");
        }
        Command::Fc(a) => {
            set_if!(ex, "corpus", cfg.paths.corpus, a.corpus.corpus.clone());
            set_if!(ex, "trials", cfg.paths.trials, a.trials.clone());
            set_if!(ex, "aliases", cfg.paths.aliases, a.aliases.clone());
            set_if!(ex, "approvals", cfg.paths.approvals, a.approvals.clone());
            set_if!(ex, "template", cfg.templates.rank, a.template.clone());
            set_if!(ex, "target", cfg.targets.efficacy, a.target.clone());
            set_if!(ex, "vocab_size", cfg.vocab_size, a.vocab_size);
            set_if!(ex, "steps", cfg.train.steps, a.steps);
            if ex.has("years") {
                cfg.fc.years = parse_years(&a.years)?;
            }
            if a.no_retrain {
                cfg.fc.retrain = false;
            }
            let ctx = Ctx { cfg };
            let docs = ctx.corpus()?;
            let aliases = ctx.aliases()?;
            let trials = io::load_trials(&ctx.cfg.require(&ctx.cfg.paths.trials, "trials")?, &aliases)?;
            let approvals = io::load_approvals(&ctx.cfg.require(&ctx.cfg.paths.approvals, "approvals")?, &aliases)?;
            let fc = FcConfig {
                years: ctx.cfg.fc.years.clone(),
                template: ctx.cfg.templates.rank.clone(),
                target: ctx.cfg.targets.efficacy.clone(),
                vocab_size: ctx.cfg.vocab_size,
                model: ctx.cfg.model,
                train: ctx.cfg.train.clone(),
                retrain: ctx.cfg.fc.retrain,
            };
            let report = fc_analysis(&docs, &trials, &approvals, &fc)?;
            let dir = ctx.out("fc");
            io::write_fc_dir(&dir, &report)?;
            info!(
                "event=fc_done runs={} scored={} mean_mrr={} dir={}",
                report.runs.len(),
                report.metrics.runs_scored,
                report.metrics.mean_mrr,
                quote(&dir.display().to_string())
            );
            println!("{}", serde_json::to_string(&report.metrics)?);
        }
        Command::Mine(a) => {
            let (vocab, params) = Ctx { cfg }.model()?;
            let scorer = Scorer::new(&params, &vocab);
            println!("rank,token,probability");
            for (i, (id, p)) in scorer.permuted_analogy(&a.query_term, &a.target_term, a.k)?.iter().enumerate() {
                println!("{},{:?},{p}", i + 1, vocab.token_text(*id).trim());
            }
        }
        Command::Combine(a) => {
            set_if!(ex, "template", cfg.templates.rank, a.template.clone());
            set_if!(ex, "target", cfg.targets.efficacy, a.scoring.target.clone());
            set_if!(ex, "aggregation", cfg.aggregation, a.scoring.aggregation.into());
            let ctx = Ctx { cfg };
            let (vocab, params) = ctx.model()?;
            let scorer = Scorer::new(&params, &vocab).with_aggregation(ctx.cfg.aggregation);
            let target = scorer.target(&ctx.cfg.targets.efficacy)?;
            let score = scorer.combination_score(&a.drugs, &ctx.cfg.templates.rank, &target)?;
            println!("drugs={} aggregate={}", quote(&a.drugs.join(" and ")), score.aggregate);
            for (k, s) in score.per_position.iter().enumerate() {
                println!("position={k} score={s}");
            }
        }
        Command::SideEffects(a) => {
            set_if!(ex, "trials", cfg.paths.trials, a.candidates.trials.clone());
            set_if!(ex, "aliases", cfg.paths.aliases, a.candidates.aliases.clone());
            set_if!(ex, "template", cfg.templates.side_effect, a.template.clone());
            set_if!(ex, "target", cfg.targets.side_effect, a.target.clone());
            set_if!(ex, "aggregation", cfg.aggregation, a.aggregation.into());
            let ctx = Ctx { cfg };
            let drugs = if a.drugs.is_empty() { ctx.candidates(&a.candidates)? } else { a.drugs.clone() };
            let (vocab, params) = ctx.model()?;
            let scorer = Scorer::new(&params, &vocab).with_aggregation(ctx.cfg.aggregation);
            let negative = scorer.target(&ctx.cfg.targets.side_effect)?;
            let ranked = par::rank_by_qt(&scorer, &drugs, &ctx.cfg.templates.side_effect, &negative)?;
            let csv = io::ranked_csv(&ranked);
            write_and_log(&ctx.out("side_effects.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Highlight(a) => {
            set_if!(ex, "template", cfg.templates.sentence, a.template.clone());
            let ctx = Ctx { cfg };
            let passage = match (&a.passage, &a.passage_file) {
                (Some(p), _) => p.clone(),
                (None, Some(f)) => fs::read_to_string(f).map_err(crate::error::io_err(f))?,
                (None, None) => return Err(Error::Config("one of --passage or --passage-file is required".into())),
            };
            let (vocab, params) = ctx.model()?;
            let scorer = Scorer::new(&params, &vocab);
            let doc = highlight_passage(&scorer, &passage, &a.target, &ctx.cfg.templates.sentence)?;
            let rendered = match a.format {
                HighlightFormat::Ansi => render_ansi(&doc),
                HighlightFormat::Html => render_html(&doc),
                HighlightFormat::Json => serde_json::to_string_pretty(&doc)? + "\n",
            };
            match &a.output {
                Some(path) => write_and_log(path, &rendered)?,
                None => print!("{rendered}"),
            }
        }
    }
    Ok(())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io { .. } => "io",
        Error::MissingColumn { .. } | Error::ColumnCount { .. } | Error::Parse { .. } | Error::Format { .. } => {
            "format"
        }
        Error::Config(_) => "config",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
        Error::Core(_) => "core",
    }
}

/// Parses `args` and runs the chosen subcommand. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let Some(level) = logging::parse_level(&cli.log_level) else {
        eprintln!("error kind=config message={:?}", format!("unknown log level {}", cli.log_level));
        return 1;
    };
    logging::init(level);
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let result = (|| {
        let threads = par::init_pool().map_err(Error::Config)?;
        let mut cfg = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let top = Explicit(&matches);
        set_if!(top, "seed", cfg.seed, cli.seed);
        set_if!(top, "model_dir", cfg.paths.model_dir, cli.model_dir.clone());
        set_if!(top, "out_dir", cfg.paths.out_dir, cli.out_dir.clone());
        // Global flags may also be given after the subcommand.
        let ex = Explicit(sub);
        set_if!(ex, "seed", cfg.seed, cli.seed);
        set_if!(ex, "model_dir", cfg.paths.model_dir, cli.model_dir.clone());
        set_if!(ex, "out_dir", cfg.paths.out_dir, cli.out_dir.clone());
        cfg.propagate_seed();
        let unix = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
        info!("event=start command={name} seed={} threads={threads} unix_time={unix}", cfg.seed);
        run_command(&cli, sub, cfg)
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error kind={} message={:?}", error_kind(&e), e.to_string());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn years_parse() {
        assert_eq!(parse_years("2005:2007").unwrap(), vec![2005, 2006, 2007]);
        assert_eq!(parse_years("2005, 2010").unwrap(), vec![2005, 2010]);
        assert!(parse_years("2010:2005").is_err());
        assert!(parse_years("x").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
