//! Translation inference from barycenter couplings and the accuracy metrics
//! used to score it: precision@k, mean average precision and a one-sided
//! McNemar test between two systems.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use ndarray::{Array2, ArrayView1, Axis};

use crate::embed_io::{EmbeddingSpace, GoldDictionary};
use crate::error::{Error, Result};
use crate::ot::Coupling;

/// Source rows scored per block of `S = P_i P_j^T`.
const ROW_BLOCK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    /// Target word indices, best first.
    pub targets: Vec<usize>,
    /// Scores matching `targets`, non-increasing.
    pub scores: Vec<f64>,
    /// Filled by nearest-neighbour cosine because the coupling row was empty.
    pub fallback: bool,
}

impl Ranking {
    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Ranked translation candidates for a set of source words.
#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    pub source_language: String,
    pub target_language: String,
    pub source_words: Vec<String>,
    pub target_words: Vec<String>,
    /// One ranking per entry of `source_words`.
    pub rankings: Vec<Ranking>,
    pub depth: usize,
    index: HashMap<String, usize>,
}

impl Lexicon {
    pub fn new(
        source_language: impl Into<String>,
        target_language: impl Into<String>,
        source_words: Vec<String>,
        target_words: Vec<String>,
        rankings: Vec<Ranking>,
        depth: usize,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidInput("lexicon depth must be at least 1".into()));
        }
        if source_words.len() != rankings.len() {
            return Err(Error::Dimension(format!(
                "{} source words but {} rankings",
                source_words.len(),
                rankings.len()
            )));
        }
        for r in &rankings {
            if r.targets.len() != r.scores.len() || r.targets.len() > depth {
                return Err(Error::InvalidInput("ranking longer than the lexicon depth".into()));
            }
            if r.targets.iter().any(|&t| t >= target_words.len()) {
                return Err(Error::InvalidInput("ranking refers to an unknown target word".into()));
            }
            if r.scores.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::InvalidInput("ranking scores must be non-increasing".into()));
            }
        }
        let index = source_words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(Self {
            source_language: source_language.into(),
            target_language: target_language.into(),
            source_words,
            target_words,
            rankings,
            depth,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    pub fn ranking(&self, word: &str) -> Option<&Ranking> {
        self.index.get(word).map(|&i| &self.rankings[i])
    }

    /// Target words of `word`'s ranking, best first.
    pub fn translations(&self, word: &str) -> Option<Vec<&str>> {
        self.ranking(word)
            .map(|r| r.targets.iter().map(|&t| self.target_words[t].as_str()).collect())
    }

    /// Source rows whose coupling scores were all zero (and were not filled by fallback).
    pub fn empty_rows(&self) -> usize {
        self.rankings.iter().filter(|r| r.is_empty()).count()
    }

    pub fn fallback_rows(&self) -> usize {
        self.rankings.iter().filter(|r| r.fallback).count()
    }

    /// Writes `source<TAB>target<TAB>rank<TAB>score` lines, ranks from 1.
    pub fn write_tsv(&self, mut out: impl Write) -> std::io::Result<()> {
        for (word, ranking) in self.source_words.iter().zip(&self.rankings) {
            for (r, (&t, &score)) in ranking.targets.iter().zip(&ranking.scores).enumerate() {
                writeln!(out, "{word}\t{}\t{}\t{score:e}", self.target_words[t], r + 1)?;
            }
        }
        Ok(())
    }
}

/// Indices of the `k` largest entries of `row`, best first, ties broken by
/// the lower index.
pub fn top_k(row: ArrayView1<f64>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    let order = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, order);
        idx.truncate(k);
    }
    idx.sort_by(order);
    idx
}

/// Ranks the target vocabulary for every source word (or for `rows` only)
/// by the coupling product `S = P_src P_tgt^T`.
///
/// With `nn_fallback`, rows of `S` that are entirely zero are ranked by
/// cosine similarity between the two spaces instead; the spaces must then
/// already be expressed in a shared frame.
pub fn infer_translations(
    src_coupling: &Coupling,
    tgt_coupling: &Coupling,
    src_space: &EmbeddingSpace,
    tgt_space: &EmbeddingSpace,
    k: usize,
    nn_fallback: bool,
) -> Result<Lexicon> {
    let rows: Vec<usize> = (0..src_space.len()).collect();
    infer_translations_for(src_coupling, tgt_coupling, src_space, tgt_space, &rows, k, nn_fallback)
}

pub fn infer_translations_for(
    src_coupling: &Coupling,
    tgt_coupling: &Coupling,
    src_space: &EmbeddingSpace,
    tgt_space: &EmbeddingSpace,
    rows: &[usize],
    k: usize,
    nn_fallback: bool,
) -> Result<Lexicon> {
    let (ns, s) = src_coupling.shape();
    let (nt, s2) = tgt_coupling.shape();
    if s != s2 {
        return Err(Error::Dimension(format!(
            "couplings have barycenter sizes {s} and {s2}"
        )));
    }
    if ns != src_space.len() || nt != tgt_space.len() {
        return Err(Error::Dimension(format!(
            "couplings cover {ns} and {nt} words, spaces have {} and {}",
            src_space.len(),
            tgt_space.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= ns) {
        return Err(Error::InvalidInput(format!("source row {bad} out of range")));
    }
    if nn_fallback && src_space.dim() != tgt_space.dim() {
        return Err(Error::Dimension("nearest-neighbour fallback needs equal dimensions".into()));
    }
    let depth = k.min(nt);
    let tgt_t = tgt_coupling.matrix.t();
    let fallback = nn_fallback.then(|| Fallback::new(src_space, tgt_space));
    let mut rankings = Vec::with_capacity(rows.len());
    for block in rows.chunks(ROW_BLOCK) {
        let scores = src_coupling.matrix.select(Axis(0), block).dot(&tgt_t);
        rank_block(&scores, block, depth, fallback.as_ref(), &mut rankings)?;
    }
    finish(src_space, tgt_space, rows, rankings, depth)
}

/// Lexicon from an explicit score matrix whose row `r` scores source word
/// `rows[r]` against the whole target vocabulary (e.g. a joint coupling).
pub fn lexicon_from_scores(
    scores: &Array2<f64>,
    src_space: &EmbeddingSpace,
    tgt_space: &EmbeddingSpace,
    rows: &[usize],
    k: usize,
    nn_fallback: bool,
) -> Result<Lexicon> {
    if scores.dim() != (rows.len(), tgt_space.len()) {
        return Err(Error::Dimension(format!(
            "{:?} scores for {} rows and {} targets",
            scores.dim(),
            rows.len(),
            tgt_space.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= src_space.len()) {
        return Err(Error::InvalidInput(format!("source row {bad} out of range")));
    }
    if nn_fallback && src_space.dim() != tgt_space.dim() {
        return Err(Error::Dimension("nearest-neighbour fallback needs equal dimensions".into()));
    }
    let depth = k.min(tgt_space.len());
    let fallback = nn_fallback.then(|| Fallback::new(src_space, tgt_space));
    let mut rankings = Vec::with_capacity(rows.len());
    rank_block(scores, rows, depth, fallback.as_ref(), &mut rankings)?;
    finish(src_space, tgt_space, rows, rankings, depth)
}

struct Fallback<'a> {
    src: &'a Array2<f64>,
    tgt_unit: Array2<f64>,
}

impl<'a> Fallback<'a> {
    fn new(src: &'a EmbeddingSpace, tgt: &EmbeddingSpace) -> Self {
        Self {
            src: src.vectors(),
            tgt_unit: unit_rows(tgt.vectors()),
        }
    }

    fn ranking(&self, j: usize, depth: usize) -> Ranking {
        let v = self.src.row(j);
        let norm = v.dot(&v).sqrt();
        let q = if norm > 0.0 { &v / norm } else { v.to_owned() };
        let cos = self.tgt_unit.dot(&q);
        let targets = top_k(cos.view(), depth);
        let scores = targets.iter().map(|&t| cos[t]).collect();
        Ranking {
            targets,
            scores,
            fallback: true,
        }
    }
}

fn rank_block(
    scores: &Array2<f64>,
    block: &[usize],
    depth: usize,
    fallback: Option<&Fallback>,
    out: &mut Vec<Ranking>,
) -> Result<()> {
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite translation scores".into()));
    }
    for (row, &j) in scores.rows().into_iter().zip(block) {
        if row.iter().any(|&v| v > 0.0) {
            let targets = top_k(row, depth);
            let scores = targets.iter().map(|&t| row[t]).collect();
            out.push(Ranking {
                targets,
                scores,
                fallback: false,
            });
        } else if let Some(fb) = fallback {
            out.push(fb.ranking(j, depth));
        } else {
            out.push(Ranking {
                targets: Vec::new(),
                scores: Vec::new(),
                fallback: false,
            });
        }
    }
    Ok(())
}

fn finish(
    src_space: &EmbeddingSpace,
    tgt_space: &EmbeddingSpace,
    rows: &[usize],
    rankings: Vec<Ranking>,
    depth: usize,
) -> Result<Lexicon> {
    let empty = rankings.iter().filter(|r| r.is_empty()).count();
    if empty > 0 {
        log::warn!(
            "{}-{}: {empty} source rows have no coupling mass",
            src_space.language(),
            tgt_space.language()
        );
    }
    Lexicon::new(
        src_space.language(),
        tgt_space.language(),
        rows.iter().map(|&j| src_space.words()[j].clone()).collect(),
        tgt_space.words().to_vec(),
        rankings,
        depth,
    )
}

fn unit_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

/// A metric value together with the queries it was computed over.
#[derive(Clone, Debug, PartialEq)]
pub struct Score {
    pub value: f64,
    pub query_count: usize,
    /// Gold queries missing from the lexicon's source vocabulary.
    pub dropped: usize,
}

/// Per-query gold ranks (1-based, only those inside the lexicon depth) and
/// gold counts, for the gold queries present in the lexicon.
struct Matched {
    ranks: Vec<Vec<usize>>,
    golds: Vec<usize>,
    dropped: usize,
}

fn match_gold(lexicon: &Lexicon, gold: &GoldDictionary) -> Result<Matched> {
    let targets: HashMap<&str, usize> = lexicon
        .target_words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let mut out = Matched {
        ranks: Vec::new(),
        golds: Vec::new(),
        dropped: 0,
    };
    for (query, golds) in &gold.entries {
        let Some(ranking) = lexicon.ranking(query) else {
            out.dropped += 1;
            continue;
        };
        let wanted: Vec<usize> = golds.iter().filter_map(|g| targets.get(g.as_str()).copied()).collect();
        let ranks = ranking
            .targets
            .iter()
            .enumerate()
            .filter(|(_, t)| wanted.contains(t))
            .map(|(r, _)| r + 1)
            .collect();
        out.ranks.push(ranks);
        out.golds.push(golds.len());
    }
    if out.ranks.is_empty() {
        return Err(Error::Empty(format!(
            "no gold query of {}-{} is in the lexicon",
            gold.source_language, gold.target_language
        )));
    }
    Ok(out)
}

/// Top-`k` hit indicator per gold query present in the lexicon, in
/// dictionary order, plus the number of dropped queries.
pub fn hits_at_k(lexicon: &Lexicon, gold: &GoldDictionary, k: usize) -> Result<(Vec<bool>, usize)> {
    if k == 0 || k > lexicon.depth {
        return Err(Error::InvalidInput(format!("k = {k} outside 1..={}", lexicon.depth)));
    }
    let m = match_gold(lexicon, gold)?;
    let hits = m.ranks.iter().map(|r| r.first().is_some_and(|&r| r <= k)).collect();
    Ok((hits, m.dropped))
}

/// Fraction of gold queries with at least one gold target in the top `k`.
pub fn precision_at_k(lexicon: &Lexicon, gold: &GoldDictionary, k: usize) -> Result<Score> {
    let (hits, dropped) = hits_at_k(lexicon, gold, k)?;
    Ok(Score {
        value: hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64,
        query_count: hits.len(),
        dropped,
    })
}

/// Mean over queries of `AP = (1/G) sum_hits hits_so_far / rank`; golds
/// ranked beyond the lexicon depth contribute nothing.
pub fn mean_average_precision(lexicon: &Lexicon, gold: &GoldDictionary) -> Result<Score> {
    let m = match_gold(lexicon, gold)?;
    let total: f64 = m
        .ranks
        .iter()
        .zip(&m.golds)
        .map(|(ranks, &g)| {
            ranks
                .iter()
                .enumerate()
                .map(|(h, &r)| (h + 1) as f64 / r as f64)
                .sum::<f64>()
                / g as f64
        })
        .sum();
    Ok(Score {
        value: total / m.ranks.len() as f64,
        query_count: m.ranks.len(),
        dropped: m.dropped,
    })
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`, summed in log space.
pub fn binomial_upper_tail(n: u64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    // log C(n, i) built up from i = k
    let mut log_c: f64 = (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum();
    let mut terms = Vec::with_capacity((n - k + 1) as usize);
    for i in k..=n {
        terms.push(log_c - n as f64 * std::f64::consts::LN_2);
        log_c += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - top).exp()).sum();
    (top + sum.ln()).exp().min(1.0)
}

/// Exact one-sided McNemar test that system `a` is better than `b`:
/// `P(X >= b_only)` for `X ~ Binomial(discordant, 1/2)`.
pub fn mcnemar_one_sided(hits_a: &[bool], hits_b: &[bool]) -> Result<f64> {
    if hits_a.len() != hits_b.len() {
        return Err(Error::Dimension(format!(
            "hit vectors of length {} and {}",
            hits_a.len(),
            hits_b.len()
        )));
    }
    let a_only = hits_a.iter().zip(hits_b).filter(|(a, b)| **a && !**b).count() as u64;
    let b_only = hits_a.iter().zip(hits_b).filter(|(a, b)| !**a && **b).count() as u64;
    Ok(binomial_upper_tail(a_only + b_only, a_only))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub pair: (String, String),
    pub precision_at: BTreeMap<usize, f64>,
    pub mean_average_precision: f64,
    pub query_count: usize,
    pub dropped_queries: usize,
    /// Queries scored through the nearest-neighbour fallback.
    pub fallback_queries: usize,
    /// One-sided McNemar p-value against a baseline at P@1.
    pub mcnemar_p: Option<f64>,
}

/// P@k for every `k` in `ks` and MAP of one lexicon against its gold.
/// `dropped_queries` adds dictionary lines lost to out-of-vocabulary words.
pub fn evaluate_pair(lexicon: &Lexicon, gold: &GoldDictionary, ks: &[usize]) -> Result<EvalReport> {
    let mut precision_at = BTreeMap::new();
    let mut first = None;
    for &k in ks {
        let p = precision_at_k(lexicon, gold, k)?;
        precision_at.insert(k, p.value);
        first.get_or_insert(p);
    }
    let map = mean_average_precision(lexicon, gold)?;
    let base = first.unwrap_or_else(|| map.clone());
    let fallback_queries = gold
        .entries
        .iter()
        .filter(|(q, _)| lexicon.ranking(q).is_some_and(|r| r.fallback))
        .count();
    Ok(EvalReport {
        pair: (gold.source_language.clone(), gold.target_language.clone()),
        precision_at,
        mean_average_precision: map.value,
        query_count: base.query_count,
        dropped_queries: base.dropped + gold.stats.source_oov + gold.stats.target_oov,
        fallback_queries,
        mcnemar_p: None,
    })
}

/// Column header of [`write_report`].
pub const REPORT_HEADER: &str = "pair\tmetric\tk\tvalue\tquery_count\tdropped";

/// Tab-separated report: `#` comment lines, the column header, one row per
/// pair and metric, then unweighted averages over pairs.
pub fn write_report(mut out: impl Write, reports: &[EvalReport]) -> std::io::Result<()> {
    writeln!(out, "# P@k: a query is a hit if any of its gold targets is ranked in the top k")?;
    writeln!(out, "# MAP: mean over queries of average precision over all gold targets")?;
    writeln!(out, "# queries outside the loaded vocabularies are excluded and counted in `dropped`")?;
    writeln!(out, "{REPORT_HEADER}")?;
    for r in reports {
        let pair = format!("{}-{}", r.pair.0, r.pair.1);
        let (q, d) = (r.query_count, r.dropped_queries);
        for (k, v) in &r.precision_at {
            writeln!(out, "{pair}\tP@k\t{k}\t{v:.6}\t{q}\t{d}")?;
        }
        writeln!(out, "{pair}\tMAP\t-\t{:.6}\t{q}\t{d}", r.mean_average_precision)?;
        if r.fallback_queries > 0 {
            writeln!(out, "{pair}\tfallback\t-\t{}\t{q}\t{d}", r.fallback_queries)?;
        }
        if let Some(p) = r.mcnemar_p {
            writeln!(out, "{pair}\tmcnemar_p\t1\t{p:.6e}\t{q}\t{d}")?;
        }
    }
    if !reports.is_empty() {
        let n = reports.len() as f64;
        let q: usize = reports.iter().map(|r| r.query_count).sum();
        let d: usize = reports.iter().map(|r| r.dropped_queries).sum();
        let ks: Vec<usize> = reports[0].precision_at.keys().copied().collect();
        for k in ks {
            let mean = reports.iter().filter_map(|r| r.precision_at.get(&k)).sum::<f64>() / n;
            writeln!(out, "average\tP@k\t{k}\t{mean:.6}\t{q}\t{d}")?;
        }
        let mean = reports.iter().map(|r| r.mean_average_precision).sum::<f64>() / n;
        writeln!(out, "average\tMAP\t-\t{mean:.6}\t{q}\t{d}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn space(tag: &str, n: usize) -> EmbeddingSpace {
        let words = (0..n).map(|i| format!("{tag}{i}")).collect();
        let vectors = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        EmbeddingSpace::new(tag, words, vectors).unwrap()
    }

    fn coupling(matrix: Array2<f64>) -> Coupling {
        Coupling {
            row_marginal: matrix.sum_axis(Axis(1)),
            col_marginal: matrix.sum_axis(Axis(0)),
            matrix,
        }
    }

    fn lexicon(rankings: &[&[usize]], n_tgt: usize, depth: usize) -> Lexicon {
        let rankings = rankings
            .iter()
            .map(|r| Ranking {
                targets: r.to_vec(),
                scores: (0..r.len()).map(|i| 1.0 - i as f64 * 0.1).collect(),
                fallback: false,
            })
            .collect::<Vec<_>>();
        Lexicon::new(
            "s",
            "t",
            (0..rankings.len()).map(|i| format!("s{i}")).collect(),
            (0..n_tgt).map(|i| format!("t{i}")).collect(),
            rankings,
            depth,
        )
        .unwrap()
    }

    fn gold(pairs: &[(&str, &str)]) -> GoldDictionary {
        GoldDictionary::from_pairs("s", "t", pairs.iter().copied())
    }

    #[test]
    fn identity_couplings_give_identity_lexicon() {
        let n = 5;
        let p = coupling(Array2::eye(n) / n as f64);
        let lex = infer_translations(&p, &p, &space("s", n), &space("t", n), 2, false).unwrap();
        for i in 0..n {
            let r = lex.ranking(&format!("s{i}")).unwrap();
            assert_eq!(r.targets[0], i);
            assert!((r.scores[0] - 1.0 / (n * n) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn permutation_coupling_is_recovered() {
        let perm = [2, 0, 3, 1];
        let mut pj = Array2::zeros((4, 4));
        for (j, &l) in perm.iter().enumerate() {
            pj[[j, l]] = 0.25;
        }
        let pi = coupling(Array2::eye(4) / 4.0);
        let lex = infer_translations(&pi, &coupling(pj), &space("s", 4), &space("t", 4), 1, false).unwrap();
        for (l, r) in lex.rankings.iter().enumerate() {
            assert_eq!(perm[r.targets[0]], l);
        }
    }

    #[test]
    fn ties_break_to_lower_index_and_scaling_is_harmless() {
        let row = array![0.5, 0.9, 0.5, 0.9, 0.1];
        assert_eq!(top_k(row.view(), 4), vec![1, 3, 0, 2]);
        assert_eq!(top_k(row.view(), 10), vec![1, 3, 0, 2, 4]);
        for c in [1e-12, 0.3, 7.0, 1e9] {
            assert_eq!(top_k((&row * c).view(), 3), top_k(row.view(), 3));
        }
    }

    #[test]
    fn empty_rows_and_fallback() {
        let pi = coupling(array![[0.5, 0.0], [0.0, 0.0], [0.0, 0.5]]);
        let pj = coupling(array![[0.5, 0.0], [0.0, 0.5]]);
        let src = EmbeddingSpace::new("s", vec!["a".into(), "b".into(), "c".into()], array![[1.0, 0.0], [0.1, 1.0], [0.0, 1.0]]).unwrap();
        let tgt = EmbeddingSpace::new("t", vec!["x".into(), "y".into()], array![[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let lex = infer_translations(&pi, &pj, &src, &tgt, 1, false).unwrap();
        assert_eq!(lex.empty_rows(), 1);
        assert!(lex.ranking("b").unwrap().is_empty());
        let lex = infer_translations(&pi, &pj, &src, &tgt, 1, true).unwrap();
        assert_eq!(lex.empty_rows(), 0);
        assert_eq!(lex.fallback_rows(), 1);
        assert_eq!(lex.translations("b").unwrap(), vec!["y"]);
    }

    #[test]
    fn explicit_scores_match_the_coupling_product() {
        let pi = coupling(array![[0.3, 0.1], [0.0, 0.2], [0.1, 0.3]]);
        let pj = coupling(array![[0.2, 0.2], [0.4, 0.0], [0.0, 0.2]]);
        let (src, tgt) = (space("s", 3), space("t", 3));
        let rows = [2, 0];
        let via_coupling = infer_translations_for(&pi, &pj, &src, &tgt, &rows, 2, false).unwrap();
        let scores = pi.matrix.select(Axis(0), &rows).dot(&pj.matrix.t());
        let direct = lexicon_from_scores(&scores, &src, &tgt, &rows, 2, false).unwrap();
        assert_eq!(direct, via_coupling);
        assert!(lexicon_from_scores(&scores, &src, &tgt, &[0], 2, false).is_err());
    }

    #[test]
    fn restricted_rows_and_shape_errors() {
        let p = coupling(Array2::eye(4) / 4.0);
        let lex = infer_translations_for(&p, &p, &space("s", 4), &space("t", 4), &[3, 1], 1, false).unwrap();
        assert_eq!(lex.source_words, vec!["s3", "s1"]);
        assert_eq!(lex.translations("s3").unwrap(), vec!["t3"]);
        let narrow = coupling(Array2::from_elem((4, 3), 1.0 / 12.0));
        assert!(infer_translations(&p, &narrow, &space("s", 4), &space("t", 4), 1, false).is_err());
        assert!(infer_translations(&p, &p, &space("s", 4), &space("t", 4), 0, false).is_err());
        assert!(infer_translations(&p, &p, &space("s", 3), &space("t", 4), 1, false).is_err());
    }

    #[test]
    fn precision_counts_hits() {
        let lex = lexicon(&[&[0, 1], &[0, 2], &[3, 1], &[2, 3]], 4, 2);
        let g = gold(&[("s0", "t0"), ("s1", "t1"), ("s2", "t1"), ("s3", "t0"), ("zz", "t0")]);
        let p1 = precision_at_k(&lex, &g, 1).unwrap();
        assert_eq!((p1.value, p1.query_count, p1.dropped), (0.25, 4, 1));
        let p2 = precision_at_k(&lex, &g, 2).unwrap();
        assert_eq!(p2.value, 0.5);
        assert!(precision_at_k(&lex, &g, 3).is_err());
        assert!(precision_at_k(&lex, &gold(&[("zz", "t0")]), 1).is_err());
    }

    #[test]
    fn any_gold_in_top_k_counts() {
        let lex = lexicon(&[&[2, 0]], 3, 2);
        let g = gold(&[("s0", "t1"), ("s0", "t2")]);
        assert_eq!(precision_at_k(&lex, &g, 1).unwrap().value, 1.0);
    }

    #[test]
    fn average_precision_closed_forms() {
        let g = gold(&[("s0", "t0"), ("s1", "t1")]);
        let first = lexicon(&[&[0, 1], &[1, 0]], 2, 2);
        assert_eq!(mean_average_precision(&first, &g).unwrap().value, 1.0);
        let second = lexicon(&[&[1, 0], &[0, 1]], 2, 2);
        assert_eq!(mean_average_precision(&second, &g).unwrap().value, 0.5);
        let two = lexicon(&[&[0, 2, 1]], 3, 3);
        let g = gold(&[("s0", "t0"), ("s0", "t1")]);
        assert!((mean_average_precision(&two, &g).unwrap().value - 5.0 / 6.0).abs() < 1e-15);
        // gold beyond the depth adds nothing but still counts in G
        let short = lexicon(&[&[0, 2]], 3, 2);
        assert_eq!(mean_average_precision(&short, &g).unwrap().value, 0.5);
    }

    fn binomial_oracle(n: u64, k: u64) -> f64 {
        // exact integer binomials
        let mut c = vec![1u128; 1];
        for _ in 0..n {
            let mut next = vec![1u128; c.len() + 1];
            for i in 1..c.len() {
                next[i] = c[i - 1] + c[i];
            }
            c = next;
        }
        c[k as usize..].iter().sum::<u128>() as f64 / 2f64.powi(n as i32)
    }

    #[test]
    fn mcnemar_matches_binomial_tail() {
        let mut a = vec![true; 8];
        a.extend([false; 2]);
        a.extend([true; 5]);
        let mut b = vec![false; 8];
        b.extend([true; 2]);
        b.extend([true; 5]);
        let p = mcnemar_one_sided(&a, &b).unwrap();
        assert!((p - (45.0 + 10.0 + 1.0) / 1024.0).abs() < 1e-12);
        assert_eq!(mcnemar_one_sided(&a, &a).unwrap(), 1.0);
        assert!(mcnemar_one_sided(&a, &b[1..]).is_err());
        for n in 0..60u64 {
            for k in 0..=n {
                let (ours, exact) = (binomial_upper_tail(n, k), binomial_oracle(n, k));
                assert!((ours - exact).abs() <= 1e-12 * exact.max(1e-300) + 1e-15, "{n} {k}");
            }
        }
        assert!(binomial_upper_tail(5000, 2600) > 0.0);
    }

    #[test]
    fn mcnemar_swap_identity() {
        for (b, c) in [(8u64, 2u64), (3, 3), (0, 5), (7, 0), (20, 11)] {
            let n = b + c;
            let point = binomial_upper_tail(n, b) - binomial_upper_tail(n, b + 1);
            let sum = binomial_upper_tail(n, b) + binomial_upper_tail(n, c);
            assert!((sum - (1.0 + point)).abs() < 1e-12, "{b} {c}");
        }
    }

    #[test]
    fn report_rows_and_averages() {
        let lex = lexicon(&[&[0, 1], &[0, 1]], 2, 2);
        let g = gold(&[("s0", "t0"), ("s1", "t1")]);
        let mut r = evaluate_pair(&lex, &g, &[1, 2]).unwrap();
        assert_eq!(r.precision_at[&1], 0.5);
        assert_eq!(r.precision_at[&2], 1.0);
        assert_eq!(r.mean_average_precision, 0.75);
        r.mcnemar_p = Some(0.25);
        let mut buf = Vec::new();
        write_report(&mut buf, &[r.clone(), r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], REPORT_HEADER);
        assert!(rows.contains(&"s-t\tP@k\t1\t0.500000\t2\t0"));
        assert!(rows.contains(&"s-t\tmcnemar_p\t1\t2.500000e-1\t2\t0"));
        assert!(rows.contains(&"average\tMAP\t-\t0.750000\t4\t0"));
        assert!(text.contains("any of its gold targets"));
    }

    #[test]
    fn lexicon_export_lines() {
        let lex = lexicon(&[&[1, 0]], 2, 2);
        let mut buf = Vec::new();
        lex.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "s0\tt1\t1\t1e0\ns0\tt0\t2\t9e-1\n");
    }

    #[test]
    fn lexicon_rejects_bad_rankings() {
        let words = vec!["a".to_string()];
        let bad = Ranking {
            targets: vec![0, 0],
            scores: vec![0.1, 0.2],
            fallback: false,
        };
        assert!(Lexicon::new("s", "t", words.clone(), words.clone(), vec![bad], 2).is_err());
        assert!(Lexicon::new("s", "t", words.clone(), words, vec![], 1).is_err());
    }
}
