//! Command-line front end: argument definitions and the subcommands behind
//! the `wbalign` binary. Every command writes its outputs and a manifest
//! under `--out`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Axis;

use crate::align::{align, hierarchical_align, translate_via_tree, AlignmentState, LanguageTree, TreeSpec};
use crate::checkpoint::{self, Checkpoint};
use crate::config::{EvalSettings, RunConfig};
use crate::embed_io::{load_embeddings, load_gold_dictionary, EmbeddingSpace, GoldDictionary};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_pair, hits_at_k, infer_translations_for, lexicon_from_scores, mcnemar_one_sided, write_report, EvalReport,
    Lexicon,
};
use crate::synth::{generate, SynthConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CHECKPOINT_FILE: &str = "checkpoint.wba";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const REPORT_FILE: &str = "report.tsv";

#[derive(Debug, Parser)]
#[command(name = "wbalign", version, about = "Multilingual word-embedding alignment through a Wasserstein barycenter")]
pub struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align all configured languages and write a checkpoint.
    Align(AlignArgs),
    /// Write a ranked lexicon between two languages of a checkpoint.
    Translate(TranslateArgs),
    /// Score a checkpoint against gold dictionaries.
    Evaluate(EvaluateArgs),
    /// Rerun the alignment over a sweep of settings.
    Ablate(AblateArgs),
    /// Align along a language tree and compare with the flat alignment.
    Hierarchical(HierarchicalArgs),
    /// Write synthetic languages, gold dictionaries and a ready config.
    SynthGen(SynthArgs),
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `out` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Checkpoint written by `align` or `hierarchical`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Source language tag.
    #[arg(long)]
    pub src: String,
    /// Target language tag.
    #[arg(long)]
    pub tgt: String,
    /// Candidates kept per source word.
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    /// Only translate the words listed in this file (one per line).
    #[arg(long)]
    pub words: Option<PathBuf>,
    /// Rank words whose coupling row is empty by cosine similarity.
    #[arg(long)]
    pub nn_fallback: bool,
    /// Directory for `lexicon.<src>-<tgt>.tsv` and the manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint to score.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory holding `<src>-<tgt>.txt` (or MUSE `<src>-<tgt>.5000-6500.txt`) files.
    #[arg(long)]
    pub dictionaries: PathBuf,
    /// Second checkpoint to test against with McNemar's test at P@1.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Cutoffs for precision@k.
    #[arg(long, value_delimiter = ',', default_value = "1,10")]
    pub k: Vec<usize>,
    /// Rank words whose coupling row is empty by cosine similarity.
    #[arg(long)]
    pub nn_fallback: bool,
    /// Ranking depth for MAP; 0 ranks the whole target vocabulary.
    #[arg(long, default_value_t = 0)]
    pub map_depth: usize,
    /// Directory for `report.tsv` and the manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AblateMode {
    /// Barycenter support sizes from `ablate.support_sizes`.
    SupportSize,
    /// All languages, then each subset from `ablate.subsets`.
    LanguageSubset,
    /// Each language in turn as the initialization pivot.
    PivotRobustness,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Run configuration; needs `eval.dictionaries`.
    #[arg(long)]
    pub config: PathBuf,
    /// Which setting to sweep.
    #[arg(long, value_enum)]
    pub mode: AblateMode,
    /// Overrides `out` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HierarchicalArgs {
    /// Run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Tree preset or inline spec; overrides `tree` from the config.
    #[arg(long)]
    pub tree: Option<String>,
    /// Do not run the flat alignment for comparison.
    #[arg(long)]
    pub skip_flat: bool,
    /// Overrides `out` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory for the vectors, dictionaries and `run.conf`.
    #[arg(long)]
    pub out: PathBuf,
    /// Language tags to generate.
    #[arg(long, value_delimiter = ',', default_value = "l0,l1,l2")]
    pub languages: Vec<String>,
    /// Words per language.
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Embedding dimension.
    #[arg(long, default_value_t = 20)]
    pub d: usize,
    /// Standard deviation of the per-language Gaussian noise.
    #[arg(long, default_value_t = 1e-2)]
    pub noise: f64,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep the rows of every language in the same order.
    #[arg(long)]
    pub no_shuffle: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Align(a) => cmd_align(&a),
        Command::Translate(a) => cmd_translate(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Hierarchical(a) => cmd_hierarchical(&a),
        Command::SynthGen(a) => cmd_synth_gen(&a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Manifest: version and command as comments, then `key = value` lines.
fn write_manifest(dir: &Path, command: &str, body: &str) -> Result<()> {
    write_text(
        &dir.join(MANIFEST_FILE),
        &format!("# wbalign {VERSION}\n# command: {command}\n{body}"),
    )
}

fn load_config(path: &Path, out: Option<&PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

/// Loads every configured language, tagging failures with the language.
pub fn load_languages(cfg: &RunConfig) -> Result<Vec<EmbeddingSpace>> {
    cfg.languages
        .iter()
        .map(|l| {
            let (space, stats) = load_embeddings(&l.path, &l.tag, cfg.vocab_size).map_err(|e| e.in_phase("load", &l.tag))?;
            log::info!(
                "loaded {} words of `{}` ({} declared, {} duplicates skipped)",
                space.len(),
                l.tag,
                stats.declared_count,
                stats.duplicates_skipped
            );
            Ok(space)
        })
        .collect()
}

/// Runs the flat pipeline on `spaces` with the settings of `cfg`.
pub fn run_alignment(cfg: &RunConfig, spaces: &[EmbeddingSpace]) -> Result<AlignmentState> {
    let tags: Vec<&str> = spaces.iter().map(|s| s.language()).collect();
    let sizes: Vec<usize> = spaces.iter().map(|s| s.len()).collect();
    align(spaces, &cfg.pipeline_for(&tags, &sizes)?)
}

pub fn cmd_align(args: &AlignArgs) -> Result<()> {
    let cfg = load_config(&args.config, args.out.as_ref())?;
    create_dir(&cfg.out)?;
    write_manifest(&cfg.out, "align", &cfg.to_manifest())?;
    let spaces = load_languages(&cfg)?;
    let state = run_alignment(&cfg, &spaces)?;
    write_convergence(&cfg.out, &state, &cfg)?;
    let ckpt = Checkpoint::Flat(state);
    checkpoint::save(cfg.out.join(CHECKPOINT_FILE), &ckpt, cfg.checkpoint_prune)?;
    if let Some(dir) = &cfg.eval.dictionaries {
        let eval = evaluate_checkpoint(&ckpt, dir, &cfg.eval, None)?;
        write_evaluation(&cfg.out.join(REPORT_FILE), &eval)?;
    }
    Ok(())
}

/// `convergence.tsv` (one row per refinement round),
/// `barycenter_iterations.tsv` and `gw_init.tsv`.
fn write_convergence(dir: &Path, state: &AlignmentState, cfg: &RunConfig) -> Result<()> {
    let path = dir.join("convergence.tsv");
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "# objectives are sharp transport costs sum_i lambda_i <P_i, C_i>; the entropic term is not included").map_err(io)?;
    writeln!(
        w,
        "# refinement stops after {} rounds or once the relative objective change is at most {:e}; warm_start_support = {}",
        cfg.pipeline.outer_iters, cfg.pipeline.early_stop, cfg.pipeline.warm_start_support
    )
    .map_err(io)?;
    writeln!(w, "round\tobjective\tbarycenter_objective\tbarycenter_iterations\tunconverged_solves\tincreased").map_err(io)?;
    for r in &state.history {
        writeln!(
            w,
            "{}\t{:e}\t{:e}\t{}\t{}\t{}",
            r.round,
            r.objective,
            r.barycenter_objective,
            r.barycenter_iterations.len(),
            r.unconverged_solves,
            r.increased
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;

    let path = dir.join("barycenter_iterations.tsv");
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "round\titeration\tobjective\tdisplacement").map_err(io)?;
    for r in &state.history {
        for it in &r.barycenter_iterations {
            writeln!(w, "{}\t{}\t{:e}\t{:e}", r.round, it.iteration, it.objective, it.displacement).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;

    let path = dir.join("gw_init.tsv");
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "language\tconverged\titerations\tobjective").map_err(io)?;
    for g in &state.gw_reports {
        writeln!(w, "{}\t{}\t{}\t{:e}", g.language, g.converged, g.iterations, g.objective).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn checkpoint_spaces(ckpt: &Checkpoint) -> &[EmbeddingSpace] {
    match ckpt {
        Checkpoint::Flat(s) => &s.spaces,
        Checkpoint::Tree(t) => &t.spaces,
    }
}

fn space_of<'a>(ckpt: &'a Checkpoint, tag: &str) -> Result<&'a EmbeddingSpace> {
    checkpoint_spaces(ckpt)
        .iter()
        .find(|s| s.language() == tag)
        .ok_or_else(|| Error::UnknownLanguage(tag.to_string()))
}

/// A tree leaf's vectors expressed in the root frame.
fn tree_leaf_space(tree: &LanguageTree, tag: &str) -> Result<EmbeddingSpace> {
    let node = tree.leaf(tag)?;
    let language = tree.nodes[node].language.expect("leaf");
    let rotated = tree.map_to_root(node).apply(tree.nodes[node].distribution.support.view());
    tree.spaces[language].with_vectors(rotated)
}

/// Ranked translations of the source words `rows` (all when `None`).
pub fn translate_checkpoint(
    ckpt: &Checkpoint,
    src: &str,
    tgt: &str,
    rows: Option<&[usize]>,
    k: usize,
    nn_fallback: bool,
) -> Result<Lexicon> {
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..space_of(ckpt, src)?.len()).collect();
            &all
        }
    };
    match ckpt {
        Checkpoint::Flat(state) => {
            let (i, j) = (state.language_index(src)?, state.language_index(tgt)?);
            infer_translations_for(
                &state.couplings[i],
                &state.couplings[j],
                &state.spaces[i],
                &state.spaces[j],
                rows,
                k,
                nn_fallback,
            )
        }
        Checkpoint::Tree(tree) => {
            let joint = translate_via_tree(tree, src, tgt)?;
            let scores = joint.matrix.select(Axis(0), rows);
            let (s, t) = (tree_leaf_space(tree, src)?, tree_leaf_space(tree, tgt)?);
            lexicon_from_scores(&scores, &s, &t, rows, k, nn_fallback)
        }
    }
}

pub fn cmd_translate(args: &TranslateArgs) -> Result<()> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    let src = space_of(&ckpt, &args.src)?;
    space_of(&ckpt, &args.tgt)?;
    let (rows, skipped) = match &args.words {
        None => ((0..src.len()).collect(), 0),
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let (mut rows, mut skipped) = (Vec::new(), 0);
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                let word = line.trim();
                if word.is_empty() {
                    continue;
                }
                match src.word_index(word) {
                    Some(i) => rows.push(i),
                    None => skipped += 1,
                }
            }
            (rows, skipped)
        }
    };
    if skipped > 0 {
        log::warn!("{skipped} requested words are not in the `{}` vocabulary", args.src);
    }
    let lexicon = translate_checkpoint(&ckpt, &args.src, &args.tgt, Some(&rows), args.topk, args.nn_fallback)?;
    create_dir(&args.out)?;
    let path = args.out.join(format!("lexicon.{}-{}.tsv", args.src, args.tgt));
    let mut w = create(&path)?;
    lexicon.write_tsv(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
    write_manifest(
        &args.out,
        "translate",
        &format!(
            "checkpoint = {}\nsrc = {}\ntgt = {}\ntopk = {}\nwords = {}\nnn_fallback = {}\ntranslated = {}\nskipped = {skipped}\nempty_rows = {}\n",
            args.checkpoint.display(),
            args.src,
            args.tgt,
            args.topk,
            args.words.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            args.nn_fallback,
            lexicon.len(),
            lexicon.empty_rows()
        ),
    )?;
    println!("{} words translated, {skipped} skipped; lexicon in {}", lexicon.len(), path.display());
    Ok(())
}

/// Gold file for a pair: `<src>-<tgt>.txt`, else the MUSE test split.
pub fn find_dictionary(dir: &Path, src: &str, tgt: &str) -> Option<PathBuf> {
    [format!("{src}-{tgt}.txt"), format!("{src}-{tgt}.5000-6500.txt")]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
}

/// Reports for every ordered language pair with a dictionary.
#[derive(Clone, Debug, Default)]
pub struct Evaluation {
    pub reports: Vec<EvalReport>,
    /// Pairs without a usable dictionary, with the reason.
    pub skipped: Vec<(String, String)>,
}

fn score_pair(
    ckpt: &Checkpoint,
    gold: &GoldDictionary,
    settings: &EvalSettings,
    baseline: Option<&Checkpoint>,
) -> Result<EvalReport> {
    let (src, tgt) = (gold.source_language.as_str(), gold.target_language.as_str());
    let src_space = space_of(ckpt, src)?;
    let rows: Vec<usize> = gold.entries.iter().filter_map(|(q, _)| src_space.word_index(q)).collect();
    let nt = space_of(ckpt, tgt)?.len();
    let max_k = settings.ks.iter().copied().max().unwrap_or(1);
    let depth = match settings.map_depth {
        0 => nt,
        d => d.max(max_k).min(nt),
    };
    let ks: Vec<usize> = settings.ks.iter().map(|&k| k.min(depth)).collect();
    let lexicon = translate_checkpoint(ckpt, src, tgt, Some(&rows), depth, settings.nn_fallback)?;
    let mut report = evaluate_pair(&lexicon, gold, &ks)?;
    if let Some(base) = baseline {
        let base_lex = translate_checkpoint(base, src, tgt, Some(&rows), 1, settings.nn_fallback)?;
        let (ours, _) = hits_at_k(&lexicon, gold, 1)?;
        let (theirs, _) = hits_at_k(&base_lex, gold, 1)?;
        report.mcnemar_p = Some(mcnemar_one_sided(&ours, &theirs)?);
    }
    Ok(report)
}

pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    dictionaries: &Path,
    settings: &EvalSettings,
    baseline: Option<&Checkpoint>,
) -> Result<Evaluation> {
    let tags: Vec<String> = ckpt.languages().iter().map(|t| t.to_string()).collect();
    let mut eval = Evaluation::default();
    for src in &tags {
        for tgt in &tags {
            if src == tgt {
                continue;
            }
            let pair = format!("{src}-{tgt}");
            let Some(path) = find_dictionary(dictionaries, src, tgt) else {
                eval.skipped.push((pair, "no dictionary".into()));
                continue;
            };
            let gold = match load_gold_dictionary(&path, space_of(ckpt, src)?, space_of(ckpt, tgt)?) {
                Ok(g) => g,
                Err(Error::Empty(msg)) => {
                    eval.skipped.push((pair, msg));
                    continue;
                }
                Err(e) => return Err(e.in_phase("evaluate", pair)),
            };
            let report = score_pair(ckpt, &gold, settings, baseline).map_err(|e| e.in_phase("evaluate", pair.clone()))?;
            eval.reports.push(report);
        }
    }
    for (pair, why) in &eval.skipped {
        log::warn!("skipping {pair}: {why}");
    }
    Ok(eval)
}

fn write_evaluation(path: &Path, eval: &Evaluation) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for (pair, why) in &eval.skipped {
        writeln!(w, "# skipped {pair}: {why}").map_err(io)?;
    }
    write_report(&mut w, &eval.reports).and_then(|_| w.flush()).map_err(io)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    let baseline = args.baseline.as_ref().map(checkpoint::load).transpose()?;
    let settings = EvalSettings {
        dictionaries: Some(args.dictionaries.clone()),
        ks: args.k.clone(),
        nn_fallback: args.nn_fallback,
        map_depth: args.map_depth,
    };
    if settings.ks.is_empty() || settings.ks.contains(&0) {
        return Err(Error::Config("--k needs positive values".into()));
    }
    let eval = evaluate_checkpoint(&ckpt, &args.dictionaries, &settings, baseline.as_ref())?;
    create_dir(&args.out)?;
    write_evaluation(&args.out.join(REPORT_FILE), &eval)?;
    write_manifest(
        &args.out,
        "evaluate",
        &format!(
            "checkpoint = {}\ndictionaries = {}\nbaseline = {}\nk = {}\nnn_fallback = {}\nmap_depth = {}\n",
            args.checkpoint.display(),
            args.dictionaries.display(),
            args.baseline.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            args.k.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
            args.nn_fallback,
            args.map_depth
        ),
    )?;
    if eval.reports.is_empty() {
        return Err(Error::Empty(format!("no dictionary in {} matched a language pair", args.dictionaries.display())));
    }
    let p1 = eval.reports.iter().filter_map(|r| r.precision_at.values().next()).sum::<f64>() / eval.reports.len() as f64;
    println!("{} pairs evaluated, average P@{} = {p1:.4}", eval.reports.len(), args.k[0]);
    Ok(())
}

fn average_p1(reports: &[EvalReport]) -> f64 {
    let values: Vec<f64> = reports.iter().filter_map(|r| r.precision_at.get(&1).copied()).collect();
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

/// Plot-ready rows: `setting, pair, metric, k, value`.
fn write_setting_rows(w: &mut impl Write, setting: &str, reports: &[EvalReport]) -> std::io::Result<()> {
    for r in reports {
        let pair = format!("{}-{}", r.pair.0, r.pair.1);
        for (k, v) in &r.precision_at {
            writeln!(w, "{setting}\t{pair}\tP@k\t{k}\t{v:.6}")?;
        }
        writeln!(w, "{setting}\t{pair}\tMAP\t-\t{:.6}", r.mean_average_precision)?;
    }
    writeln!(w, "{setting}\taverage\tP@k\t1\t{:.6}", average_p1(reports))
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let cfg = load_config(&args.config, args.out.as_ref())?;
    let dicts = cfg
        .eval
        .dictionaries
        .clone()
        .ok_or_else(|| Error::Config("ablation needs `eval.dictionaries`".into()))?;
    create_dir(&cfg.out)?;
    let mode = match args.mode {
        AblateMode::SupportSize => "support-size",
        AblateMode::LanguageSubset => "language-subset",
        AblateMode::PivotRobustness => "pivot-robustness",
    };
    write_manifest(&cfg.out, &format!("ablate --mode {mode}"), &cfg.to_manifest())?;
    let spaces = load_languages(&cfg)?;
    let sizes: Vec<usize> = spaces.iter().map(|s| s.len()).collect();

    // (setting label, config, languages)
    let mut settings: Vec<(String, RunConfig, Vec<EmbeddingSpace>)> = Vec::new();
    match args.mode {
        AblateMode::SupportSize => {
            for &s in &cfg.ablate.support_sizes {
                let mut c = cfg.clone();
                c.support_size = s;
                settings.push((format!("support={s}({})", s.resolve(&sizes)), c, spaces.clone()));
            }
        }
        AblateMode::LanguageSubset => {
            let all: Vec<String> = cfg.tags().iter().map(|t| t.to_string()).collect();
            let mut subsets = vec![all.clone()];
            subsets.extend(cfg.ablate.subsets.iter().filter(|s| **s != all).cloned());
            for subset in subsets {
                if subset.len() < 2 {
                    return Err(Error::Config(format!("subset {subset:?} has fewer than 2 languages")));
                }
                let picked: Vec<EmbeddingSpace> = subset
                    .iter()
                    .map(|t| {
                        spaces
                            .iter()
                            .find(|s| s.language() == t)
                            .cloned()
                            .ok_or_else(|| Error::UnknownLanguage(t.clone()))
                    })
                    .collect::<Result<_>>()?;
                let mut c = cfg.clone();
                if c.pivot.as_ref().is_some_and(|p| !subset.contains(p)) {
                    c.pivot = None;
                }
                if let Some(lambda) = &cfg.pipeline.bary.lambda {
                    let all_tags = cfg.tags();
                    c.pipeline.bary.lambda = Some(
                        subset
                            .iter()
                            .map(|t| lambda[all_tags.iter().position(|a| a == t).expect("validated")])
                            .collect(),
                    );
                }
                c.languages.retain(|l| subset.contains(&l.tag));
                settings.push((format!("subset={}", subset.join("+")), c, picked));
            }
        }
        AblateMode::PivotRobustness => {
            for tag in cfg.tags() {
                let mut c = cfg.clone();
                c.pivot = Some(tag.to_string());
                settings.push((format!("pivot={tag}"), c, spaces.clone()));
            }
        }
    }

    let path = cfg.out.join("ablation.tsv");
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "setting\tpair\tmetric\tk\tvalue").map_err(io)?;
    let mut averages = Vec::new();
    for (label, c, langs) in &settings {
        log::info!("ablation setting {label}");
        let state = run_alignment(c, langs).map_err(|e| e.in_phase("ablate", label.clone()))?;
        let eval = evaluate_checkpoint(&Checkpoint::Flat(state), &dicts, &c.eval, None)?;
        write_setting_rows(&mut w, label, &eval.reports).map_err(io)?;
        averages.push(average_p1(&eval.reports));
    }
    match args.mode {
        AblateMode::SupportSize => {
            let monotone = averages.windows(2).all(|p| p[1] >= p[0]);
            let trend = if monotone { "non-decreasing" } else { "not monotone" };
            writeln!(w, "# trend of average P@1 over support sizes: {trend}").map_err(io)?;
        }
        AblateMode::PivotRobustness => {
            let hi = averages.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = averages.iter().cloned().fold(f64::INFINITY, f64::min);
            writeln!(w, "# spread of average P@1 over pivots: {:.2} points", 100.0 * (hi - lo)).map_err(io)?;
        }
        AblateMode::LanguageSubset => {}
    }
    w.flush().map_err(io)
}

pub fn cmd_hierarchical(args: &HierarchicalArgs) -> Result<()> {
    let mut cfg = load_config(&args.config, args.out.as_ref())?;
    if let Some(t) = &args.tree {
        cfg.tree = Some(TreeSpec::preset_or_inline(t)?);
    }
    let spec = cfg
        .tree
        .clone()
        .ok_or_else(|| Error::Config("hierarchical alignment needs `tree` or --tree".into()))?;
    create_dir(&cfg.out)?;
    write_manifest(&cfg.out, "hierarchical", &cfg.to_manifest())?;
    let spaces = load_languages(&cfg)?;
    let tags: Vec<&str> = spaces.iter().map(|s| s.language()).collect();
    let sizes: Vec<usize> = spaces.iter().map(|s| s.len()).collect();
    let pipeline = cfg.pipeline_for(&tags, &sizes)?;
    let tree = hierarchical_align(&spaces, &spec, &pipeline)?;
    let tree_ckpt = Checkpoint::Tree(tree);
    checkpoint::save(cfg.out.join(CHECKPOINT_FILE), &tree_ckpt, cfg.checkpoint_prune)?;
    let flat_ckpt = if args.skip_flat {
        None
    } else {
        let state = align(&spaces, &pipeline)?;
        let ckpt = Checkpoint::Flat(state);
        checkpoint::save(cfg.out.join("flat.wba"), &ckpt, cfg.checkpoint_prune)?;
        Some(ckpt)
    };
    let Some(dicts) = &cfg.eval.dictionaries else {
        return Ok(());
    };
    let tree_eval = evaluate_checkpoint(&tree_ckpt, dicts, &cfg.eval, None)?;
    write_evaluation(&cfg.out.join(REPORT_FILE), &tree_eval)?;
    if let Some(flat) = &flat_ckpt {
        let flat_eval = evaluate_checkpoint(flat, dicts, &cfg.eval, None)?;
        write_evaluation(&cfg.out.join("report.flat.tsv"), &flat_eval)?;
        let path = cfg.out.join("comparison.tsv");
        let mut w = create(&path)?;
        let io = |e| Error::io(&path, e);
        writeln!(w, "pair\tmetric\tk\thierarchical\tflat\tdelta").map_err(io)?;
        for (t, f) in tree_eval.reports.iter().zip(&flat_eval.reports) {
            let pair = format!("{}-{}", t.pair.0, t.pair.1);
            for (k, tv) in &t.precision_at {
                let fv = f.precision_at[k];
                writeln!(w, "{pair}\tP@k\t{k}\t{tv:.6}\t{fv:.6}\t{:+.6}", tv - fv).map_err(io)?;
            }
            let (tv, fv) = (t.mean_average_precision, f.mean_average_precision);
            writeln!(w, "{pair}\tMAP\t-\t{tv:.6}\t{fv:.6}\t{:+.6}", tv - fv).map_err(io)?;
        }
        w.flush().map_err(io)?;
    }
    Ok(())
}

pub fn cmd_synth_gen(args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        languages: args.languages.clone(),
        n: args.n,
        d: args.d,
        noise: args.noise,
        seed: args.seed,
        shuffle: !args.no_shuffle,
    };
    let data = generate(&cfg)?;
    create_dir(&args.out)?;
    data.write(&args.out)?;
    let mut conf = String::from("# synthetic languages written by `wbalign synth-gen`\n");
    for tag in &args.languages {
        conf.push_str(&format!("languages.{tag} = {tag}.vec\n"));
    }
    conf.push_str(&format!("vocab_size = {}\neval.dictionaries = dictionaries\nout = run\n", args.n));
    write_text(&args.out.join("run.conf"), &conf)?;
    write_manifest(
        &args.out,
        "synth-gen",
        &format!(
            "languages = {}\nn = {}\nd = {}\nnoise = {}\nseed = {}\nshuffle = {}\n",
            args.languages.join(","),
            args.n,
            args.d,
            args.noise,
            args.seed,
            !args.no_shuffle
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["wbalign", "evaluate", "--checkpoint", "c", "--dictionaries", "d", "--out", "o", "--k", "1,5"]).unwrap();
        let Command::Evaluate(a) = cli.command else { panic!() };
        assert_eq!(a.k, vec![1, 5]);
        let cli = Cli::try_parse_from(["wbalign", "ablate", "--config", "c", "--mode", "pivot-robustness"]).unwrap();
        assert!(matches!(cli.command, Command::Ablate(AblateArgs { mode: AblateMode::PivotRobustness, .. })));
        assert!(Cli::try_parse_from(["wbalign", "ablate", "--config", "c", "--mode", "bogus"]).is_err());
        assert!(Cli::try_parse_from(["wbalign", "translate", "--checkpoint", "c"]).is_err());
    }

    #[test]
    fn dictionary_lookup_prefers_plain_names() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("en-de.5000-6500.txt"), "a b\n").unwrap();
        assert_eq!(find_dictionary(dir.path(), "en", "de").unwrap().file_name().unwrap(), "en-de.5000-6500.txt");
        fs::write(dir.path().join("en-de.txt"), "a b\n").unwrap();
        assert_eq!(find_dictionary(dir.path(), "en", "de").unwrap().file_name().unwrap(), "en-de.txt");
        assert!(find_dictionary(dir.path(), "de", "en").is_none());
    }
}
