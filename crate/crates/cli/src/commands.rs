use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use ontosum::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ModelKind};
use ontosum::config::RunConfig;
use ontosum::corpus::{corpus_vocab, load_embeddings, read_corpus, split, write_corpus, EmbeddingTable, Report, Vocab};
use ontosum::eval::{
    compare_systems, emit_report, evaluate_generations, read_generations, write_generations, Generation, Metric,
    ReportFormat,
};
use ontosum::ontology::{align_tags, load_lexicon, read_tagged, write_tagged, Lexicon};
use ontosum::selector::{train_selector as fit_selector, write_tag_predictions, Selector};
use ontosum::summarizer::{generate, train_summarizer as fit_summarizer, Mode, Summarizer};
use ontosum::synth::{synth_corpus, SynthConfig, TERMS};
use ontosum::{Error, Result};

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Format {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_error(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_reports(cfg: &RunConfig, path: &Path) -> Result<Vec<Report>> {
    let mut reports = read_corpus(path)?;
    for r in &mut reports {
        r.truncate(cfg.max_findings, cfg.max_impression);
    }
    Ok(reports)
}

fn lexicon(cfg: &RunConfig) -> Result<Lexicon> {
    load_lexicon(cfg.require("lexicon", &cfg.lexicon)?)
}

/// Train/dev/test partition of the configured corpus and the vocabulary
/// built from its training part.
struct Splits {
    train: Vec<Report>,
    dev: Vec<Report>,
    test: Vec<Report>,
    vocab: Vocab,
}

fn corpus_splits(cfg: &RunConfig) -> Result<Splits> {
    let reports = load_reports(cfg, cfg.require("corpus", &cfg.corpus)?)?;
    let (train, dev, test) = split(reports, cfg.split_ratios(), cfg.seed)?;
    let vocab = corpus_vocab(&train, cfg.min_freq, cfg.max_vocab())?;
    Ok(Splits {
        train,
        dev,
        test,
        vocab,
    })
}

fn embeddings(cfg: &RunConfig, vocab: &Vocab) -> Result<Option<EmbeddingTable>> {
    let Some(path) = &cfg.embeddings else {
        return Ok(None);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let table = load_embeddings(path, vocab, Some(cfg.embedding_dim), cfg.trainable_embeddings, &mut rng)?;
    Ok(Some(table))
}

fn training_meta(
    cfg: &RunConfig,
    kind: ModelKind,
    vocab: &Vocab,
    epoch: usize,
    dev_metric: f64,
) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("epoch".to_string(), epoch.to_string()),
        ("dev_metric".to_string(), dev_metric.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("config_hash".to_string(), cfg.model_hash(kind)),
        ("vocab_hash".to_string(), vocab.hash()),
    ])
}

fn check_hash(what: &'static str, ckpt: &Checkpoint, key: &str, current: String) -> Result<()> {
    let stored = ckpt.meta(key)?;
    if stored != current {
        return Err(Error::HashMismatch {
            what,
            expected: stored.to_string(),
            found: current,
        });
    }
    Ok(())
}

fn load_selector(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<Option<Selector>> {
    match flag.or_else(|| cfg.selector_checkpoint.clone()) {
        Some(path) => {
            let ckpt = load_checkpoint(&path)?;
            check_hash(
                "selector config",
                &ckpt,
                "config_hash",
                cfg.model_hash(ModelKind::Selector),
            )?;
            Ok(Some(ckpt.to_selector()?))
        }
        None => Ok(None),
    }
}

fn selector_for_mode(cfg: &RunConfig, mode: Mode, flag: Option<PathBuf>) -> Result<Option<Selector>> {
    match mode {
        Mode::Filtered => match load_selector(cfg, flag)? {
            Some(s) => Ok(Some(s)),
            None => Err(Error::contract(
                "filtered mode requires a selector checkpoint (--selector or selector_checkpoint)",
            )),
        },
        _ => {
            if flag.is_some() {
                warn!("{mode} mode ignores the selector checkpoint");
            }
            Ok(None)
        }
    }
}

pub fn label(cfg: &RunConfig, output: Option<PathBuf>) -> Result<()> {
    let reports = load_reports(cfg, cfg.require("corpus", &cfg.corpus)?)?;
    let lex = lexicon(cfg)?;
    let tagged: Vec<_> = reports.iter().map(|r| align_tags(r, &lex)).collect();
    let out = output.unwrap_or_else(|| cfg.tagged_path());
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_tagged(&out, &tagged)?;
    let tokens: usize = tagged.iter().map(|t| t.tags.len()).sum();
    let positives: usize = tagged.iter().map(|t| t.positives()).sum();
    let rate = if tokens == 0 {
        0.0
    } else {
        positives as f64 / tokens as f64
    };
    println!(
        "tagged {} reports ({tokens} tokens); positive rate {:.2}% -> {}",
        tagged.len(),
        100.0 * rate,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SelectorRow {
    epoch: usize,
    train_loss: f64,
    dev_precision: f64,
    dev_recall: f64,
    dev_f1: f64,
}

pub fn train_selector(cfg: &RunConfig) -> Result<()> {
    let tagged = read_tagged(cfg.tagged_path())?;
    let (train, dev, _) = split(tagged, cfg.split_ratios(), cfg.seed)?;
    let train_reports: Vec<Report> = train.iter().map(|t| t.report.clone()).collect();
    let vocab = corpus_vocab(&train_reports, cfg.min_freq, cfg.max_vocab())?;
    let emb = embeddings(cfg, &vocab)?;
    let sel = Selector::new(cfg.selector_config(), vocab.clone(), emb, cfg.seed)?;
    let (sel, history) = fit_selector(sel, &train, &dev, &cfg.selector_train_config())?;

    ensure_dir(&cfg.output_dir)?;
    let best = history
        .iter()
        .fold(None::<&ontosum::selector::SelectorEpoch>, |b, h| match b {
            Some(b) if b.dev.f1 >= h.dev.f1 => Some(b),
            _ => Some(h),
        })
        .expect("at least one epoch");
    let ckpt_path = cfg.output_dir.join("selector.ckpt");
    let meta = training_meta(cfg, ModelKind::Selector, &vocab, best.epoch, best.dev.f1);
    save_checkpoint(&ckpt_path, &Checkpoint::from_selector(&sel, meta))?;
    let rows: Vec<SelectorRow> = history
        .iter()
        .map(|h| SelectorRow {
            epoch: h.epoch,
            train_loss: h.train_loss,
            dev_precision: h.dev.precision,
            dev_recall: h.dev.recall,
            dev_f1: h.dev.f1,
        })
        .collect();
    write_csv(&cfg.output_dir.join("selector_metrics.csv"), &rows)?;
    let eval_set = if dev.is_empty() { &train } else { &dev };
    write_tag_predictions(cfg.output_dir.join("selector_dev.tsv"), &sel, eval_set)?;
    println!(
        "selector: best dev F1 {:.4} at epoch {} -> {}",
        best.dev.f1,
        best.epoch,
        ckpt_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SummarizerRow {
    epoch: usize,
    train_loss: f64,
    dev_rouge1: f64,
}

pub fn train_summarizer(cfg: &RunConfig, selector: Option<PathBuf>) -> Result<()> {
    let selector = selector_for_mode(cfg, cfg.mode, selector)?;
    let Splits { train, dev, vocab, .. } = corpus_splits(cfg)?;
    let lex = lexicon(cfg)?;
    let emb = embeddings(cfg, &vocab)?;
    let model = Summarizer::new(cfg.summarizer_config(), vocab.clone(), emb, cfg.seed)?;
    let (model, history) = fit_summarizer(
        model,
        &train,
        &dev,
        selector.as_ref(),
        &lex,
        &cfg.summarizer_train_config(),
    )?;
    ensure_dir(&cfg.output_dir)?;
    let best = history
        .iter()
        .fold(None::<&ontosum::summarizer::SummarizerEpoch>, |b, h| match b {
            Some(b) if b.dev_rouge1 >= h.dev_rouge1 => Some(b),
            _ => Some(h),
        })
        .expect("at least one epoch");
    let mut meta = training_meta(cfg, ModelKind::Summarizer, &vocab, best.epoch, best.dev_rouge1);
    meta.insert("epsilon".into(), cfg.epsilon.to_string());
    let ckpt_path = cfg.output_dir.join(format!("summarizer-{}.ckpt", cfg.mode));
    save_checkpoint(&ckpt_path, &Checkpoint::from_summarizer(&model, meta))?;
    let rows: Vec<SummarizerRow> = history
        .iter()
        .map(|h| SummarizerRow {
            epoch: h.epoch,
            train_loss: h.train_loss,
            dev_rouge1: h.dev_rouge1,
        })
        .collect();
    write_csv(
        &cfg.output_dir.join(format!("summarizer-{}_metrics.csv", cfg.mode)),
        &rows,
    )?;
    println!(
        "summarizer ({}): best dev ROUGE-1 {:.4} at epoch {} -> {}",
        cfg.mode,
        best.dev_rouge1,
        best.epoch,
        ckpt_path.display()
    );
    Ok(())
}

/// Loads a summarizer and checks it against the current configuration and
/// corpus vocabulary.
fn load_summarizer(cfg: &RunConfig, path: &Path) -> Result<(Summarizer, Vec<Report>, Vec<Report>)> {
    let ckpt = load_checkpoint(path)?;
    check_hash(
        "summarizer config",
        &ckpt,
        "config_hash",
        cfg.model_hash(ModelKind::Summarizer),
    )?;
    let Splits { dev, test, vocab, .. } = corpus_splits(cfg)?;
    check_hash("vocabulary", &ckpt, "vocab_hash", vocab.hash())?;
    Ok((ckpt.to_summarizer()?, dev, test))
}

fn run_generation(
    cfg: &RunConfig,
    model: &Summarizer,
    reports: &[Report],
    selector: Option<&Selector>,
    lex: &Lexicon,
    epsilon: f64,
) -> Result<Vec<Generation>> {
    let examples = model.prepare(reports, selector, lex, epsilon)?;
    examples
        .iter()
        .map(|ex| {
            Ok(Generation {
                id: ex.id.clone(),
                generated: generate(model, &ex.source, cfg.beam_size, cfg.max_decode)?.join(" "),
                reference: ex.reference.join(" "),
            })
        })
        .collect()
}

pub fn summarize(
    cfg: &RunConfig,
    checkpoint: &Path,
    selector: Option<PathBuf>,
    input: Option<PathBuf>,
    output: Option<PathBuf>,
) -> Result<()> {
    let (model, _, test) = load_summarizer(cfg, checkpoint)?;
    let selector = selector_for_mode(cfg, model.mode(), selector)?;
    let reports = match &input {
        Some(path) => load_reports(cfg, path)?,
        None => test,
    };
    let lex = lexicon(cfg)?;
    let gens = run_generation(cfg, &model, &reports, selector.as_ref(), &lex, cfg.epsilon)?;
    let out = output.unwrap_or_else(|| cfg.output_dir.join(format!("generations-{}.jsonl", model.mode())));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_generations(&out, &gens)?;
    println!("wrote {} generations -> {}", gens.len(), out.display());
    Ok(())
}

pub fn evaluate(generations: &Path, compare: Option<&Path>, output: Option<PathBuf>) -> Result<()> {
    let a = evaluate_generations(&read_generations(generations)?)?;
    let comparisons = match compare {
        Some(path) => compare_systems(&a, &evaluate_generations(&read_generations(path)?)?)?,
        None => Vec::new(),
    };
    let out = output.unwrap_or_else(|| generations.with_extension("report.csv"));
    let format = if out.extension().is_some_and(|e| e == "json") {
        ReportFormat::Json
    } else {
        ReportFormat::Csv
    };
    emit_report(&a, &comparisons, &out, format)?;
    println!(
        "ROUGE-1 {:.4}  ROUGE-2 {:.4}  ROUGE-L {:.4}  ({} examples)",
        a.mean(Metric::Rouge1),
        a.mean(Metric::Rouge2),
        a.mean(Metric::RougeL),
        a.examples.len()
    );
    for (m, c) in &comparisons {
        println!(
            "{}: mean diff {:+.4}  t = {:.4}  p = {:.4}  df = {}{}",
            m.key(),
            c.mean_diff,
            c.t,
            c.p_value,
            c.df,
            if c.degenerate { "  (degenerate)" } else { "" }
        );
    }
    println!("report -> {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    epsilon: f64,
    rg1: f64,
    rg2: f64,
    rgl: f64,
}

pub fn sweep_epsilon(cfg: &RunConfig, checkpoint: &Path, selector: Option<PathBuf>) -> Result<()> {
    let (model, dev, _) = load_summarizer(cfg, checkpoint)?;
    if model.mode() != Mode::Filtered {
        return Err(Error::contract(format!(
            "the threshold sweep needs a filtered summarizer, got {}",
            model.mode()
        )));
    }
    let selector = selector_for_mode(cfg, Mode::Filtered, selector)?;
    if dev.is_empty() {
        return Err(Error::contract("the dev split is empty"));
    }
    let lex = lexicon(cfg)?;
    let mut rows = Vec::new();
    for &eps in &cfg.epsilon_grid {
        let gens = run_generation(cfg, &model, &dev, selector.as_ref(), &lex, eps)?;
        let s = evaluate_generations(&gens)?;
        info!("epsilon {eps}: dev ROUGE-1 {:.4}", s.mean(Metric::Rouge1));
        rows.push(SweepRow {
            epsilon: eps,
            rg1: s.mean(Metric::Rouge1),
            rg2: s.mean(Metric::Rouge2),
            rgl: s.mean(Metric::RougeL),
        });
    }
    ensure_dir(&cfg.output_dir)?;
    let out = cfg.output_dir.join("epsilon_sweep.csv");
    write_csv(&out, &rows)?;
    if let Some(best) = rows.iter().fold(None::<&SweepRow>, |b, r| match b {
        Some(b) if b.rg1 >= r.rg1 => Some(b),
        _ => Some(r),
    }) {
        println!(
            "best epsilon {} (dev ROUGE-1 {:.4}) -> {}",
            best.epsilon,
            best.rg1,
            out.display()
        );
    }
    Ok(())
}

pub fn synth(out_dir: &Path, reports: usize, seed: u64) -> Result<()> {
    ensure_dir(out_dir)?;
    let corpus = synth_corpus(&SynthConfig {
        reports,
        seed,
        ..Default::default()
    });
    write_corpus(out_dir.join("corpus.jsonl"), &corpus)?;
    let lex_path = out_dir.join("lexicon.txt");
    let mut text = String::from("# synthetic ontology terms\n");
    for t in TERMS {
        text.push_str(t);
        text.push('\n');
    }
    std::fs::write(&lex_path, text).map_err(|e| Error::io(&lex_path, e))?;
    println!(
        "wrote {} reports and {} terms -> {}",
        corpus.len(),
        TERMS.len(),
        out_dir.display()
    );
    Ok(())
}
