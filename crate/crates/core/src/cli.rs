//! Command-line front end. Data goes to stdout or `--out`; diagnostics go
//! to stderr. Exit status is 0 on success, 1 for invalid input, 2 for I/O
//! failures.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::aggregate::{aggregate, contrast_markdown, contrast_report, render_table, TableFormat};
use crate::clustering::{cluster_components, modifier_matrix, silhouette_sweep, KMeansParams};
use crate::coding::{export_codebook, CodebookFormat, SessionStore};
use crate::coref::parse_chains;
use crate::corpus::{corpus_stats, Corpus};
use crate::embedding::{load_vectors, RemoteEmbedder, VectorStore};
use crate::extraction::{from_csv, from_jsonl, to_csv, to_jsonl, FramingComponent};
use crate::lexicon::{
    default_lexicons, find, load_lexicons, relation_inventory, suggest_keywords, EntityLexicon, DEFAULT_CONFIG,
};
use crate::pipeline::{extract, ingest, summarize, with_jobs};
use crate::server::{self, ServerConfig};
use crate::{read_to_string, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "sufa", version, about = "Entity-centric framing analysis over CoNLL-U corpora")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse CoNLL-U, attach outlet metadata, tag coreference, write a corpus snapshot.
    Ingest(IngestArgs),
    /// Token counts per outlet.
    Stats(StatsArgs),
    /// Dependency labels on edges touching an entity's mentions.
    Relations(RelationsArgs),
    /// Extract framing components.
    Extract(ExtractArgs),
    /// Frequency table of one entity by outlet and relation.
    Table(TableArgs),
    /// Left-versus-right modifier counts for one entity.
    Contrast(ContrastArgs),
    /// k-means over modifier embeddings.
    Cluster(ClusterArgs),
    /// Rank corpus nouns as candidate keywords.
    Suggest(SuggestArgs),
    /// Export a stored coding session as a codebook.
    Codebook(CodebookArgs),
    /// Print the shipped lexicon config.
    Defaults,
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct LexiconArg {
    /// Lexicon config (JSON). The shipped defaults are used when omitted.
    #[arg(long)]
    pub lexicons: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct JobsArg {
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub conllu: PathBuf,
    /// Metadata sidecar: [{"doc_id", "outlet", "leaning", "published"?}].
    #[arg(long)]
    pub meta: PathBuf,
    /// Corpus snapshot to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Externally produced mention chains to import after rule-based tagging.
    #[arg(long)]
    pub coref_chains: Option<PathBuf>,
    /// How many sentences back a pronoun may look for its antecedent.
    #[arg(long, default_value_t = crate::coref::DEFAULT_WINDOW)]
    pub coref_window: usize,
    #[command(flatten)]
    pub lexicons: LexiconArg,
    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Md,
    Json,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "md")]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct RelationsArgs {
    pub corpus: PathBuf,
    #[arg(long)]
    pub entity: String,
    #[command(flatten)]
    pub lexicons: LexiconArg,
    #[arg(long, value_enum, default_value = "md")]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ComponentFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    pub corpus: PathBuf,
    #[command(flatten)]
    pub lexicons: LexiconArg,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: ComponentFormat,
    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Components as JSON lines, or CSV when the name ends in `.csv`.
    pub components: PathBuf,
    #[arg(long)]
    pub entity: String,
    /// md, csv or json.
    #[arg(long, default_value = "md")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct ContrastArgs {
    pub components: PathBuf,
    #[arg(long)]
    pub entity: String,
    #[arg(long, value_enum, default_value = "md")]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    pub components: PathBuf,
    #[arg(long)]
    pub entity: String,
    /// Word-vector text file.
    #[arg(long, conflicts_with = "endpoint", required_unless_present = "endpoint")]
    pub vectors: Option<PathBuf>,
    /// Remote embedding service.
    #[arg(long, env = "SUFA_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(short)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// One clustering per dependency relation.
    #[arg(long)]
    pub per_relation: bool,
    /// Also report mean silhouette for k = 2..min(10, n-1).
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Debug, Args)]
pub struct SuggestArgs {
    pub corpus: PathBuf,
    #[arg(long)]
    pub entity: String,
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(short, default_value_t = 10)]
    pub n: usize,
    #[command(flatten)]
    pub lexicons: LexiconArg,
    #[arg(long, value_enum, default_value = "md")]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct CodebookArgs {
    pub session_id: String,
    /// Components the member counts are joined from.
    #[arg(long)]
    pub components: PathBuf,
    #[arg(long, env = "SUFA_SESSIONS", default_value = "sessions")]
    pub sessions: PathBuf,
    #[arg(long, value_enum, default_value = "md")]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Corpus snapshot written by `ingest`.
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub lexicons: LexiconArg,
    #[arg(long, env = "SUFA_SESSIONS", default_value = "sessions")]
    pub sessions: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// Static files served for any path the API does not claim.
    #[arg(long)]
    pub ui: Option<PathBuf>,
    /// Word vectors enabling POST /cluster.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
}

fn lexicons_from(arg: &LexiconArg) -> Result<Vec<EntityLexicon>> {
    match &arg.lexicons {
        None => Ok(default_lexicons()),
        Some(path) => {
            let loaded = load_lexicons(&read_to_string(path)?)?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            Ok(loaded.lexicons)
        }
    }
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::from_json(&read_to_string(path)?)
}

pub fn load_components(path: &Path) -> Result<Vec<FramingComponent>> {
    let text = read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        from_csv(&text)
    } else {
        from_jsonl(&text)
    }
}

fn load_store(path: &Path) -> Result<VectorStore> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let loaded = load_vectors(std::io::BufReader::new(file), &path.display().to_string())?;
    for w in &loaded.duplicates {
        eprintln!("warning: duplicate vector for {w:?}; keeping the first");
    }
    Ok(loaded.store)
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn json_line<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => {
            let lexicons = lexicons_from(&a.lexicons)?;
            let chains = match &a.coref_chains {
                Some(p) => parse_chains(&read_to_string(p)?)?,
                None => Vec::new(),
            };
            let conllu = read_to_string(&a.conllu)?;
            let meta = read_to_string(&a.meta)?;
            let (corpus, summary) = with_jobs(a.jobs.jobs.unwrap_or(0), || {
                ingest(&conllu, &meta, &lexicons, &chains, a.coref_window)
            })??;
            for c in &summary.conflicts {
                eprintln!(
                    "warning: {}/{}/{}: imported {} replaces {}",
                    c.mention.doc_id, c.mention.sent_id, c.mention.token, c.imported, c.previous
                );
            }
            for w in &summary.ambiguous_keywords {
                eprintln!("warning: keyword {w:?} is listed by several entities; the first one wins");
            }
            write_out(Some(&a.out), &corpus.to_json())?;
            eprintln!(
                "{} documents, {} tokens; tagged {} keywords and {} pronouns",
                corpus.documents.len(),
                corpus.token_count(),
                summary.keyword_tags,
                summary.pronoun_tags
            );
            Ok(())
        }
        Command::Stats(a) => {
            let stats = corpus_stats(&load_corpus(&a.corpus)?);
            write_out(
                None,
                &match a.format {
                    ReportFormat::Md => stats.to_markdown(),
                    ReportFormat::Json => json_line(&stats),
                },
            )
        }
        Command::Relations(a) => {
            let corpus = load_corpus(&a.corpus)?;
            let lexicons = lexicons_from(&a.lexicons)?;
            let lex = find(&lexicons, &a.entity)?;
            let counts = relation_inventory(&corpus, lex);
            let text = match a.format {
                ReportFormat::Json => json_line(&counts),
                ReportFormat::Md => {
                    let mut rows: Vec<_> = counts.iter().collect();
                    rows.sort_by(|x, y| y.1.cmp(x.1).then_with(|| x.0.cmp(y.0)));
                    let mut s = String::from("| Relation | Count | Whitelisted |\n|---|---|---|\n");
                    for (rel, n) in rows {
                        let mark = if lex.allows(rel) { "yes" } else { "no" };
                        s.push_str(&format!("| {rel} | {n} | {mark} |\n"));
                    }
                    s
                }
            };
            write_out(None, &text)
        }
        Command::Extract(a) => {
            let corpus = load_corpus(&a.corpus)?;
            let lexicons = lexicons_from(&a.lexicons)?;
            let comps = with_jobs(a.jobs.jobs.unwrap_or(0), || extract(&corpus, &lexicons))?;
            let text = match a.format {
                ComponentFormat::Jsonl => to_jsonl(&comps),
                ComponentFormat::Csv => to_csv(&comps),
            };
            write_out(a.out.as_deref(), &text)?;
            let summary = summarize(&comps);
            let per: Vec<String> = summary.per_entity.iter().map(|(e, n)| format!("{e} {n}")).collect();
            eprintln!("{} components ({})", summary.components, per.join(", "));
            Ok(())
        }
        Command::Table(a) => {
            let format: TableFormat = a.format.parse()?;
            let table = aggregate(&load_components(&a.components)?);
            write_out(None, &render_table(&table, &a.entity, format)?)
        }
        Command::Contrast(a) => {
            let rows = contrast_report(&aggregate(&load_components(&a.components)?), &a.entity)?;
            write_out(
                None,
                &match a.format {
                    ReportFormat::Md => contrast_markdown(&rows),
                    ReportFormat::Json => json_line(&rows),
                },
            )
        }
        Command::Cluster(a) => cluster(a),
        Command::Suggest(a) => {
            let corpus = load_corpus(&a.corpus)?;
            let lexicons = lexicons_from(&a.lexicons)?;
            let store = load_store(&a.vectors)?;
            let found = suggest_keywords(&corpus, find(&lexicons, &a.entity)?, &store, a.n)?;
            let text = match a.format {
                ReportFormat::Json => json_line(&found),
                ReportFormat::Md => {
                    let mut s = String::from("| Word | Similarity |\n|---|---|\n");
                    for f in &found {
                        s.push_str(&format!("| {} | {:.4} |\n", f.word, f.similarity));
                    }
                    s
                }
            };
            write_out(None, &text)
        }
        Command::Codebook(a) => {
            let store = SessionStore::new(&a.sessions).map_err(|e| match e {
                crate::coding::CodingError::Io(io) => Error::io(&a.sessions, io),
                other => other.into(),
            })?;
            let mut session = store.load(&a.session_id)?;
            let comps = load_components(&a.components)?;
            if let Some(m) = session.reopen(&comps) {
                eprintln!(
                    "warning: session was opened against components {} but these are {}",
                    m.expected, m.found
                );
            }
            let format = match a.format {
                ReportFormat::Md => CodebookFormat::Markdown,
                ReportFormat::Json => CodebookFormat::Json,
            };
            write_out(None, &export_codebook(&session, &aggregate(&comps), format))
        }
        Command::Defaults => write_out(None, DEFAULT_CONFIG),
        Command::Serve(a) => {
            let corpus = load_corpus(&a.corpus)?;
            let lexicons = lexicons_from(&a.lexicons)?;
            let vectors = a.vectors.as_deref().map(load_store).transpose()?;
            let sessions = SessionStore::new(&a.sessions).map_err(|e| match e {
                crate::coding::CodingError::Io(io) => Error::io(&a.sessions, io),
                other => other.into(),
            })?;
            server::run(
                ServerConfig {
                    corpus,
                    lexicons,
                    sessions,
                    vectors,
                    ui: a.ui,
                },
                &format!("{}:{}", a.bind, a.port),
            )
        }
    }
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let comps = load_components(&a.components)?;
    let store = match (&a.vectors, &a.endpoint) {
        (Some(path), _) => load_store(path)?,
        (None, Some(url)) => {
            let words: BTreeSet<String> = comps
                .iter()
                .filter(|c| c.entity == a.entity)
                .map(|c| c.modifier.to_lowercase())
                .collect();
            RemoteEmbedder::new(url).fetch(&words.into_iter().collect::<Vec<_>>())?
        }
        (None, None) => return Err(Error::Input("either --vectors or --endpoint is required".into())),
    };
    let params = KMeansParams::new(a.k, a.seed);
    let relations: Vec<Option<String>> = if a.per_relation {
        comps
            .iter()
            .filter(|c| c.entity == a.entity)
            .map(|c| Some(c.relation.clone()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    } else {
        vec![None]
    };
    let mut out = Vec::new();
    for rel in &relations {
        let report = match cluster_components(&comps, &store, &a.entity, rel.as_deref(), params) {
            Ok(r) => r,
            // A relation with fewer distinct modifiers than k is skipped, not fatal.
            Err(crate::clustering::ClusterError::KTooLarge { distinct, .. }) if a.per_relation => {
                eprintln!(
                    "skipping {}: {distinct} distinct modifiers for k = {}",
                    rel.as_deref().unwrap_or("-"),
                    a.k
                );
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mut value = serde_json::to_value(&report).expect("report serializes");
        if a.sweep {
            let m = modifier_matrix(&comps, &store, &a.entity, rel.as_deref())?;
            let sweep: Vec<_> = silhouette_sweep(&m.words, &m.rows, a.seed)?
                .into_iter()
                .map(|(k, s)| serde_json::json!({"k": k, "silhouette": s}))
                .collect();
            value["sweep"] = serde_json::Value::Array(sweep);
        }
        out.push(value);
    }
    let value = if a.per_relation {
        serde_json::Value::Array(out)
    } else {
        out.pop().expect("one report")
    };
    write_out(None, &json_line(&value))
}
