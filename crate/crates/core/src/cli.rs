//! The `snipq` command line: ingest, rank, sample, vote, kappa, eval, encode.
//!
//! Exit codes: 0 success, 1 data or validation error, 2 I/O error, 3 empty
//! result (no entity matches the constraints, nothing to rank).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ffi::OsString;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::annotation::{
    aggregate_labels, annotator_vs_majority_kappa, assign_majorities, build_hits, load_labels, overall_kappa,
    write_hit_export, AnnotatedPair, HitConfig, PairSampler,
};
use crate::corpus::{load_corpus_with, load_queries, EntityDatabase, Query, DEFAULT_MIN_RATING};
use crate::embedding::{load_embeddings, EmbeddingStore, EncoderClient};
use crate::error::Error;
use crate::evaluation::{
    classification_table, cross_validate, evaluate_scores, gold_labels, judged_queries_for_method, kfold_splits,
    retrieval_metrics, retrieval_table, score_pairs, CrossValidationReport, MetricsReport, RetrievalReport,
};
use crate::jsonl;
use crate::ranking::{rank_and_select, rank_hybrid, RankedEntity, RankingParams};
use crate::scoring::{
    load_score_table, load_three_way_table, EmbeddingProvider, EncoderServiceProvider, ScoreProvider, TfIdfProvider,
};
use crate::tfidf::TfIdfIndex;

pub const ENCODER_URL_ENV: &str = "SNIPQ_ENCODER_URL";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => 2,
            Error::NoEntityMatches | Error::EmptyRanking | Error::EmptyDatabase => 3,
            _ => 1,
        };
        CliError::new(code, e.to_string())
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::new(2, e.to_string())
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "snipq", version, about = "Snippet-based entity retrieval and relevance evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate an entity file, extract snippets and build the TF-IDF index.
    Ingest(IngestArgs),
    /// Rank entities for one query, every query, or queries read from stdin.
    Rank(RankArgs),
    /// Sample query-snippet pairs for annotation from ranking files.
    Sample(SampleArgs),
    /// Aggregate crowd labels by majority vote.
    Vote(VoteArgs),
    /// Agreement of each annotator with the majority label.
    Kappa(KappaArgs),
    /// Classification and retrieval metrics over majority-labeled pairs.
    Eval(EvalArgs),
    /// Populate an embedding file from the encoder service.
    Encode(EncodeArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Entity file (JSON-Lines).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Minimum review rating kept as a snippet.
    #[arg(long, default_value_t = DEFAULT_MIN_RATING)]
    pub min_rating: u8,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Also write the TF-IDF index to this path.
    #[arg(long)]
    pub index_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderChoice {
    /// Cosine over TF-IDF vectors built from the corpus.
    Tfidf,
    /// Cosine over vectors from an embedding file (--embeddings).
    Embedding,
    /// Precomputed scores (--scores or --three-way-scores).
    Table,
    /// The encoder service's /score endpoint (--service-url).
    Service,
}

#[derive(Debug, Args)]
pub struct ProviderArgs {
    /// Relevance scorer.
    #[arg(long, value_enum, default_value_t = ProviderChoice::Tfidf)]
    pub provider: ProviderChoice,
    /// Persisted TF-IDF index; built from the corpus when absent.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Embedding file for --provider embedding.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Score table CSV (query_id,snippet_id,score) for --provider table.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Three-way NLI score CSV for --provider table; the entailment column is the score.
    #[arg(long, conflicts_with = "scores")]
    pub three_way_scores: Option<PathBuf>,
    /// Encoder service base URL for --provider service.
    #[arg(long, env = ENCODER_URL_ENV)]
    pub service_url: Option<String>,
    /// Encoder service request timeout in seconds.
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Query file (JSON-Lines). Required unless --interactive.
    #[arg(long, required_unless_present = "interactive")]
    pub queries: Option<PathBuf>,
    /// Rank only this query and print a JSON array.
    #[arg(long, conflicts_with = "interactive")]
    pub query_id: Option<String>,
    /// Read one query text per line from stdin and print readable results.
    #[arg(long)]
    pub interactive: bool,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Snippets averaged per entity.
    #[arg(short = 'J', long = "top-snippets", default_value_t = 5)]
    pub top_snippets: usize,
    /// Entities returned per query.
    #[arg(short = 'N', long = "top-entities", default_value_t = 5)]
    pub top_entities: usize,
    /// Always divide the snippet sum by J, even for entities with fewer snippets.
    #[arg(long)]
    pub alg1_strict: bool,
    /// Restrict candidates to entities matching the query's slot constraints.
    /// Without --query-id only queries with constraints are ranked.
    #[arg(long)]
    pub hybrid: bool,
    /// Method name recorded in batch output; defaults to the provider name
    /// (with a "-hybrid" suffix in hybrid mode).
    #[arg(long)]
    pub method_name: Option<String>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub queries: PathBuf,
    /// Ranking files written by `rank` in batch mode; repeat once per method.
    #[arg(long = "rankings", required = true, num_args = 1..)]
    pub rankings: Vec<PathBuf>,
    /// Seed for the entity draw and HIT shuffling.
    #[arg(long)]
    pub seed: u64,
    /// Directory receiving pairs.jsonl, hits.jsonl and hit_export.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Entities eligible for the random draw.
    #[arg(long, default_value_t = crate::annotation::DEFAULT_K_ENTITIES)]
    pub k_entities: usize,
    /// Snippets taken from the drawn entity.
    #[arg(long, default_value_t = crate::annotation::DEFAULT_K_SNIPPETS)]
    pub k_snippets: usize,
    /// Majority-labeled pairs (JSON-Lines) used as gold quality probes.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Pairs per HIT, gold included.
    #[arg(long, default_value_t = crate::annotation::DEFAULT_HIT_SIZE)]
    pub hit_size: usize,
    /// Gold pairs per HIT; ignored without --gold.
    #[arg(long, default_value_t = crate::annotation::DEFAULT_GOLD_PER_HIT)]
    pub gold_per_hit: usize,
}

#[derive(Debug, Args)]
pub struct VoteArgs {
    /// Label CSV: pair_id,query_id,snippet_id,annotator_id,label.
    #[arg(long)]
    pub labels: PathBuf,
    /// Sampled pairs; their source methods are copied to the output.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Output JSON-Lines of labeled pairs.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    /// Labeled pairs written by `vote`.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub queries: PathBuf,
    /// Labeled pairs written by `vote`.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Score the pairs with a provider and report classification metrics.
    #[arg(long)]
    pub classify: bool,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Scores at or above this value count as relevant.
    #[arg(long, default_value_t = crate::evaluation::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Also report k-fold cross-validated metrics (requires --seed).
    #[arg(long, requires = "seed")]
    pub kfold: Option<usize>,
    /// Seed for the fold assignment.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shuffle without stratifying folds on the majority label.
    #[arg(long)]
    pub no_stratify: bool,
    /// Snippets judged per query, for retrieval metrics.
    #[arg(long, default_value_t = crate::annotation::DEFAULT_K_SNIPPETS)]
    pub k_snippets: usize,
    /// Row label for the classification table.
    #[arg(long)]
    pub name: Option<String>,
    /// Print JSON instead of tables.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub queries: PathBuf,
    /// Encoder service base URL.
    #[arg(long, env = ENCODER_URL_ENV)]
    pub service_url: String,
    /// Output embedding file (JSON-Lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Texts per /encode request.
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, out: &mut dyn Write) -> CliResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    // Usage errors are validation errors (1), not clap's default of 2.
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::new(e.exit_code().min(1), e.to_string()))?;
    dispatch(cli.command, stdin, out)
}

pub fn dispatch(command: Command, stdin: &mut dyn BufRead, out: &mut dyn Write) -> CliResult {
    match command {
        Command::Ingest(a) => cmd_ingest(&a, out),
        Command::Rank(a) => cmd_rank(&a, stdin, out),
        Command::Sample(a) => cmd_sample(&a, out),
        Command::Vote(a) => cmd_vote(&a, out),
        Command::Kappa(a) => cmd_kappa(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Encode(a) => cmd_encode(&a, out),
    }
}

fn require_file(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::new(2, format!("{}: no such file", path.display())))
    }
}

fn load_db(args: &CorpusArgs) -> CliResult<EntityDatabase> {
    require_file(&args.corpus)?;
    Ok(load_corpus_with(&args.corpus, args.min_rating)?)
}

fn load_query_file(path: &Path) -> CliResult<Vec<Query>> {
    require_file(path)?;
    Ok(load_queries(path)?)
}

fn build_index(db: &EntityDatabase) -> CliResult<TfIdfIndex> {
    if db.is_empty() {
        return Err(CliError::new(1, "empty corpus"));
    }
    Ok(TfIdfIndex::build(db.snippets())?)
}

fn make_provider(args: &ProviderArgs, db: &EntityDatabase) -> CliResult<Box<dyn ScoreProvider>> {
    let missing =
        |flag: &str| CliError::new(1, format!("--provider {:?} requires {flag}", args.provider).to_lowercase());
    Ok(match args.provider {
        ProviderChoice::Tfidf => {
            let index = match &args.index {
                Some(p) => {
                    require_file(p)?;
                    TfIdfIndex::load(p)?
                }
                None => build_index(db)?,
            };
            Box::new(TfIdfProvider::new(Arc::new(index)))
        }
        ProviderChoice::Embedding => {
            let path = args.embeddings.as_ref().ok_or_else(|| missing("--embeddings"))?;
            require_file(path)?;
            Box::new(EmbeddingProvider::new(Arc::new(load_embeddings(path)?)))
        }
        ProviderChoice::Table => {
            let table = match (&args.scores, &args.three_way_scores) {
                (Some(p), _) => {
                    require_file(p)?;
                    load_score_table(p)?
                }
                (None, Some(p)) => {
                    require_file(p)?;
                    load_three_way_table(p)?
                }
                (None, None) => return Err(missing("--scores or --three-way-scores")),
            };
            Box::new(table)
        }
        ProviderChoice::Service => {
            let url = args.service_url.as_ref().ok_or_else(|| missing("--service-url"))?;
            let client = EncoderClient::new(url.clone(), Duration::from_secs(args.timeout_secs))?;
            Box::new(EncoderServiceProvider::new(client))
        }
    })
}

fn cmd_ingest(args: &IngestArgs, out: &mut dyn Write) -> CliResult {
    let db = load_db(&args.corpus)?;
    let index = build_index(&db)?;
    if let Some(path) = &args.index_out {
        index.save(path)?;
    }
    writeln!(out, "entities: {}", db.len()).map_err(io_err)?;
    writeln!(out, "snippets: {}", db.snippets().len()).map_err(io_err)?;
    writeln!(out, "vocabulary: {}", index.vocabulary_size()).map_err(io_err)?;
    Ok(())
}

/// One line of a batch ranking file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub query_id: String,
    pub method: String,
    pub ranking: Vec<RankedEntity>,
}

fn ranking_params(args: &RankArgs) -> CliResult<RankingParams> {
    let params = RankingParams::new(args.top_snippets, args.top_entities)?;
    Ok(if args.alg1_strict { params.strict() } else { params })
}

fn rank_one(
    provider: &dyn ScoreProvider,
    query: &Query,
    db: &EntityDatabase,
    params: &RankingParams,
    hybrid: bool,
) -> CliResult<Vec<RankedEntity>> {
    let ranked =
        if hybrid { rank_hybrid(provider, query, db, params) } else { rank_and_select(provider, query, db, params) };
    ranked.map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("query `{}`: {}", query.id, err.message);
        err
    })
}

fn cmd_rank(args: &RankArgs, stdin: &mut dyn BufRead, out: &mut dyn Write) -> CliResult {
    let params = ranking_params(args)?;
    let db = load_db(&args.corpus)?;
    if db.is_empty() {
        return Err(CliError::new(3, "empty corpus"));
    }
    let provider = make_provider(&args.provider, &db)?;

    if args.interactive {
        return rank_interactive(provider.as_ref(), &db, &params, stdin, out);
    }

    let queries = load_query_file(args.queries.as_ref().expect("clap enforces --queries"))?;
    if let Some(id) = &args.query_id {
        let query =
            queries.iter().find(|q| &q.id == id).ok_or_else(|| CliError::new(1, format!("unknown query id `{id}`")))?;
        let ranked = rank_one(provider.as_ref(), query, &db, &params, args.hybrid)?;
        let json = serde_json::to_string_pretty(&ranked).expect("ranking serializes");
        writeln!(out, "{json}").map_err(io_err)?;
        return Ok(());
    }

    let method = args.method_name.clone().unwrap_or_else(|| {
        let base = provider.kind().to_string();
        if args.hybrid {
            format!("{base}-hybrid")
        } else {
            base
        }
    });
    for query in &queries {
        if args.hybrid && query.slot_constraints.as_ref().is_none_or(|c| c.is_empty()) {
            continue;
        }
        let ranking = rank_one(provider.as_ref(), query, &db, &params, args.hybrid)?;
        let record = RankingRecord { query_id: query.id.clone(), method: method.clone(), ranking };
        writeln!(out, "{}", serde_json::to_string(&record).expect("ranking serializes")).map_err(io_err)?;
    }
    Ok(())
}

fn rank_interactive(
    provider: &dyn ScoreProvider,
    db: &EntityDatabase,
    params: &RankingParams,
    stdin: &mut dyn BufRead,
    out: &mut dyn Write,
) -> CliResult {
    let mut line = String::new();
    let mut n = 0;
    loop {
        line.clear();
        if stdin.read_line(&mut line).map_err(io_err)? == 0 {
            return Ok(());
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        n += 1;
        let query = Query::new(format!("interactive-{n}"), text);
        match rank_and_select(provider, &query, db, params) {
            Ok(ranked) => {
                for (rank, r) in ranked.iter().enumerate() {
                    let name = db.entity(&r.entity_id).map_or("", |e| e.name.as_str());
                    writeln!(out, "{}. {} [{}] {:.4}", rank + 1, name, r.entity_id, r.item_score).map_err(io_err)?;
                    for s in &r.top_snippets {
                        let text = db.snippet(&s.snippet_id).map_or("", |s| s.text.as_str());
                        writeln!(out, "     {:.4}  {}", s.score, text).map_err(io_err)?;
                    }
                }
                writeln!(out).map_err(io_err)?;
            }
            Err(e) => writeln!(out, "error: {e}").map_err(io_err)?,
        }
    }
}

fn cmd_sample(args: &SampleArgs, out: &mut dyn Write) -> CliResult {
    let db = load_db(&args.corpus)?;
    let queries = load_query_file(&args.queries)?;
    let by_id: HashMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();

    let mut sampler = PairSampler::new(args.seed, args.k_entities, args.k_snippets)?;
    for path in &args.rankings {
        require_file(path)?;
        for (line, record) in jsonl::read::<RankingRecord>(path)? {
            let query = by_id.get(record.query_id.as_str()).ok_or_else(|| {
                CliError::new(1, format!("{}:{line}: unknown query `{}`", path.display(), record.query_id))
            })?;
            sampler.add(query, &record.method, &record.ranking).map_err(|e| {
                let mut err = CliError::from(e);
                err.message = format!("{}:{line}: {}", path.display(), err.message);
                err
            })?;
        }
    }
    let (pairs, collisions) = sampler.finish();

    let (gold_pool, gold_pairs) = match &args.gold {
        Some(p) => {
            require_file(p)?;
            let gold: Vec<AnnotatedPair> = jsonl::read(p)?.into_iter().map(|(_, g)| g).collect();
            gold_labels(&gold)?;
            (gold.iter().map(|g| g.pair_id.clone()).collect::<Vec<_>>(), gold)
        }
        None => (Vec::new(), Vec::new()),
    };
    let config =
        HitConfig { size: args.hit_size, gold_per_hit: if args.gold.is_some() { args.gold_per_hit } else { 0 } };
    let pair_ids: Vec<String> = pairs.iter().map(|p| p.pair_id.clone()).collect();
    let hits = build_hits(&pair_ids, &gold_pool, args.seed, config)?;

    let mut texts = HashMap::new();
    for p in pairs.iter().chain(&gold_pairs) {
        let query_text = by_id
            .get(p.query_id.as_str())
            .map(|q| q.text.clone())
            .ok_or_else(|| CliError::new(1, format!("pair `{}`: unknown query `{}`", p.pair_id, p.query_id)))?;
        let snippet_text = db
            .snippet(&p.snippet_id)
            .map(|s| s.text.clone())
            .ok_or_else(|| CliError::new(1, format!("pair `{}`: unknown snippet `{}`", p.pair_id, p.snippet_id)))?;
        texts.insert(p.pair_id.clone(), (query_text, snippet_text));
    }

    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::from(Error::io(&args.out_dir, e)))?;
    jsonl::write(&args.out_dir.join("pairs.jsonl"), &pairs)?;
    jsonl::write(&args.out_dir.join("hits.jsonl"), &hits)?;
    write_hit_export(&args.out_dir.join("hit_export.csv"), &hits, &texts)?;

    writeln!(out, "pairs: {}", pairs.len()).map_err(io_err)?;
    writeln!(out, "collisions: {}", collisions.len()).map_err(io_err)?;
    for c in &collisions {
        writeln!(out, "  collision: {} (also {})", c.pair_id, c.method).map_err(io_err)?;
    }
    writeln!(out, "hits: {}", hits.len()).map_err(io_err)?;
    Ok(())
}

fn read_pairs(path: &Path) -> CliResult<Vec<AnnotatedPair>> {
    require_file(path)?;
    Ok(jsonl::read(path)?.into_iter().map(|(_, p)| p).collect())
}

fn cmd_vote(args: &VoteArgs, out: &mut dyn Write) -> CliResult {
    require_file(&args.labels)?;
    let rows = load_labels(&args.labels)?;
    let mut pairs = aggregate_labels(&rows)?;
    assign_majorities(&mut pairs)?;
    if let Some(path) = &args.pairs {
        let sampled: HashMap<String, Vec<String>> =
            read_pairs(path)?.into_iter().map(|p| (p.pair_id, p.source_methods)).collect();
        for p in &mut pairs {
            if let Some(methods) = sampled.get(&p.pair_id) {
                p.source_methods = methods.clone();
            }
        }
    }
    jsonl::write(&args.out, &pairs)?;
    let relevant = pairs.iter().filter(|p| p.majority == Some(true)).count();
    writeln!(out, "pairs: {}", pairs.len()).map_err(io_err)?;
    writeln!(out, "relevant: {relevant}").map_err(io_err)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct AnnotatorAgreement {
    annotator_id: String,
    pairs: usize,
    kappa: Option<f64>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct KappaReport {
    annotators: Vec<AnnotatorAgreement>,
    raters_per_pair: Option<usize>,
    overall_kappa: Option<f64>,
}

fn cmd_kappa(args: &KappaArgs, out: &mut dyn Write) -> CliResult {
    let pairs = read_pairs(&args.pairs)?;
    if pairs.is_empty() {
        return Err(CliError::new(1, "no pairs"));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &pairs {
        for a in p.labels.keys() {
            *counts.entry(a.as_str()).or_default() += 1;
        }
    }
    let annotators = counts
        .iter()
        .map(|(&a, &n)| {
            let k = annotator_vs_majority_kappa(&pairs, a);
            AnnotatorAgreement {
                annotator_id: a.to_owned(),
                pairs: n,
                kappa: k.as_ref().ok().copied(),
                error: k.err().map(|e| e.to_string()),
            }
        })
        .collect();

    let mut label_counts: HashMap<usize, usize> = HashMap::new();
    for p in &pairs {
        *label_counts.entry(p.labels.len()).or_default() += 1;
    }
    let raters = label_counts.into_iter().max_by_key(|&(n, c)| (c, n)).map(|(n, _)| n).filter(|&n| n >= 2);
    let report = KappaReport {
        annotators,
        raters_per_pair: raters,
        overall_kappa: raters.and_then(|n| overall_kappa(&pairs, n).ok()),
    };

    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes")).map_err(io_err)?;
        return Ok(());
    }
    writeln!(out, "annotator\tpairs\tkappa_vs_majority").map_err(io_err)?;
    for a in &report.annotators {
        let k = match (a.kappa, &a.error) {
            (Some(k), _) => format!("{k:.3}"),
            (None, Some(e)) => format!("n/a ({e})"),
            (None, None) => "n/a".into(),
        };
        writeln!(out, "{}\t{}\t{}", a.annotator_id, a.pairs, k).map_err(io_err)?;
    }
    if let (Some(n), Some(k)) = (report.raters_per_pair, report.overall_kappa) {
        writeln!(out, "overall fleiss kappa ({n} raters): {k:.3}").map_err(io_err)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    classification: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_validation: Option<CrossValidationReport>,
    retrieval: BTreeMap<String, RetrievalReport>,
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> CliResult {
    let db = load_db(&args.corpus)?;
    let queries = load_query_file(&args.queries)?;
    let pairs = read_pairs(&args.pairs)?;
    if pairs.is_empty() {
        return Err(CliError::new(1, "no pairs"));
    }
    let golds = gold_labels(&pairs)?;

    let mut report = EvalReport { classification: None, cross_validation: None, retrieval: BTreeMap::new() };
    if args.classify {
        let provider = make_provider(&args.provider, &db)?;
        let scores = score_pairs(provider.as_ref(), &pairs, &queries, &db)?;
        report.classification = Some(evaluate_scores(&scores, &golds, args.threshold)?);
        if let Some(k) = args.kfold {
            let seed = args.seed.expect("clap enforces --seed");
            let folds = kfold_splits(&golds, k, seed, !args.no_stratify)?;
            report.cross_validation = Some(cross_validate(&scores, &golds, &folds, args.threshold)?);
        }
    }

    let mut methods: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for p in &pairs {
        for m in &p.source_methods {
            if seen.insert(m.as_str()) {
                methods.push(m);
            }
        }
    }
    methods.sort_unstable();
    for m in methods {
        let judged = judged_queries_for_method(&pairs, m, &queries);
        if !judged.is_empty() {
            report.retrieval.insert(m.to_owned(), retrieval_metrics(&judged, args.k_snippets)?);
        }
    }

    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes")).map_err(io_err)?;
        return Ok(());
    }
    if let Some(r) = &report.classification {
        let name = args.name.clone().unwrap_or_else(|| {
            let p = args.provider.provider;
            format!("{p:?}").to_lowercase()
        });
        let mut rows = vec![(name.as_str(), "", r)];
        let cv_name = format!("{name} ({}-fold mean)", args.kfold.unwrap_or(0));
        let cv_row;
        if let Some(cv) = &report.cross_validation {
            cv_row = MetricsReport {
                avg_precision: cv.mean_avg_precision,
                avg_recall: cv.mean_avg_recall,
                weighted_f1: cv.mean_weighted_f1,
                ..*r
            };
            rows.push((cv_name.as_str(), "", &cv_row));
        }
        write!(out, "{}", classification_table(&rows)).map_err(io_err)?;
        writeln!(out).map_err(io_err)?;
    }
    if !report.retrieval.is_empty() {
        let rows: Vec<(&str, &RetrievalReport)> = report.retrieval.iter().map(|(m, r)| (m.as_str(), r)).collect();
        write!(out, "{}", retrieval_table(&rows)).map_err(io_err)?;
    }
    Ok(())
}

fn cmd_encode(args: &EncodeArgs, out: &mut dyn Write) -> CliResult {
    if args.batch_size == 0 {
        return Err(CliError::new(1, "--batch-size must be at least 1"));
    }
    let db = load_db(&args.corpus)?;
    let queries = load_query_file(&args.queries)?;
    let client = EncoderClient::new(args.service_url.clone(), Duration::from_secs(args.timeout_secs))?;

    let items: Vec<(&str, &str)> = queries
        .iter()
        .map(|q| (q.id.as_str(), q.text.as_str()))
        .chain(db.snippets().iter().map(|s| (s.id.as_str(), s.text.as_str())))
        .collect();
    if items.is_empty() {
        return Err(CliError::new(3, "nothing to encode"));
    }

    let mut store: Option<EmbeddingStore> = None;
    for chunk in items.chunks(args.batch_size) {
        let texts: Vec<String> = chunk.iter().map(|(_, t)| (*t).to_owned()).collect();
        let vectors = client.fetch_embeddings(&texts)?;
        for ((key, _), v) in chunk.iter().zip(vectors) {
            let s = match &mut store {
                Some(s) => s,
                None => store.insert(EmbeddingStore::new(v.len())?),
            };
            s.insert(*key, v)?;
        }
    }
    let store = store.expect("at least one batch was encoded");
    store.write_jsonl(&args.out)?;
    writeln!(out, "encoded: {}", store.len()).map_err(io_err)?;
    writeln!(out, "dimension: {}", store.dimension()).map_err(io_err)?;
    Ok(())
}
