//! Binary constituency trees: extraction from attention maps via span
//! scoring and recursive argmax splitting, plus EVALB-style unlabeled
//! bracketing metrics.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Span-annotated binary tree over token positions. Spans are inclusive;
/// leaves cover a single token.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTree {
    pub span: (usize, usize),
    pub tag: Option<String>,
    pub children: Option<Box<(BinaryTree, BinaryTree)>>,
}

impl BinaryTree {
    pub fn leaf(index: usize, tag: Option<String>) -> Self {
        BinaryTree {
            span: (index, index),
            tag,
            children: None,
        }
    }

    /// Join two adjacent subtrees.
    pub fn node(tag: Option<String>, left: BinaryTree, right: BinaryTree) -> Result<Self> {
        if left.span.1 + 1 != right.span.0 {
            return Err(Error::Contract(format!(
                "non-adjacent child spans {:?} and {:?}",
                left.span, right.span
            )));
        }
        Ok(BinaryTree {
            span: (left.span.0, right.span.1),
            tag,
            children: Some(Box::new((left, right))),
        })
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// Tokens covered.
    pub fn len(&self) -> usize {
        self.span.1 - self.span.0 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Longest root-to-word path in edges. Leaves stand for preterminals,
    /// so the word hanging below each leaf adds one level: a root with two
    /// leaf children has depth 2.
    pub fn depth(&self) -> usize {
        match &self.children {
            None => 1,
            Some(kids) => 1 + kids.0.depth().max(kids.1.depth()),
        }
    }

    /// Check span bookkeeping: children partition the parent exactly and
    /// leaves are single tokens.
    pub fn validate(&self) -> Result<()> {
        match &self.children {
            None => {
                if self.span.0 != self.span.1 {
                    return Err(Error::Contract(format!(
                        "leaf with multi-token span {:?}",
                        self.span
                    )));
                }
            }
            Some(kids) => {
                let (l, r) = (&kids.0, &kids.1);
                if l.span.0 != self.span.0 || r.span.1 != self.span.1 || l.span.1 + 1 != r.span.0 {
                    return Err(Error::Contract(format!(
                        "children {:?}/{:?} do not partition {:?}",
                        l.span, r.span, self.span
                    )));
                }
                l.validate()?;
                r.validate()?;
            }
        }
        Ok(())
    }

    /// Internal-node count; a valid binary tree over N tokens has N-1.
    pub fn internal_count(&self) -> usize {
        match &self.children {
            None => 0,
            Some(kids) => 1 + kids.0.internal_count() + kids.1.internal_count(),
        }
    }

    /// Multi-token spans excluding the whole-sentence span — the brackets
    /// that EVALB-style scoring compares.
    pub fn nontrivial_brackets(&self) -> Vec<(usize, usize)> {
        let whole = self.span;
        let mut out = Vec::new();
        self.collect_brackets(whole, &mut out);
        out.sort_unstable();
        out
    }

    fn collect_brackets(&self, whole: (usize, usize), out: &mut Vec<(usize, usize)>) {
        if let Some(kids) = &self.children {
            if self.span != whole && self.len() >= 2 {
                out.push(self.span);
            }
            kids.0.collect_brackets(whole, out);
            kids.1.collect_brackets(whole, out);
        }
    }

    /// Tags of the root's two children, e.g. "NP VP"; the root itself for a
    /// bare leaf. Untagged nodes print as "?".
    pub fn top_constituents(&self) -> String {
        match &self.children {
            None => self.tag.clone().unwrap_or_else(|| "?".into()),
            Some(kids) => {
                let name = |t: &BinaryTree| t.tag.clone().unwrap_or_else(|| "?".into());
                format!("{} {}", name(&kids.0), name(&kids.1))
            }
        }
    }

    /// Bracketed s-expression with token positions at the leaves:
    /// `(S (NP (DT 0) (NN 1)) ...)`, tags omitted where absent.
    pub fn to_sexpr(&self) -> String {
        let mut out = String::new();
        self.write_sexpr(&mut out);
        out
    }

    fn write_sexpr(&self, out: &mut String) {
        match &self.children {
            None => match &self.tag {
                Some(tag) => {
                    out.push('(');
                    out.push_str(tag);
                    out.push(' ');
                    out.push_str(&self.span.0.to_string());
                    out.push(')');
                }
                None => out.push_str(&self.span.0.to_string()),
            },
            Some(kids) => {
                out.push('(');
                if let Some(tag) = &self.tag {
                    out.push_str(tag);
                    out.push(' ');
                }
                kids.0.write_sexpr(out);
                out.push(' ');
                kids.1.write_sexpr(out);
                out.push(')');
            }
        }
    }

    pub fn parse_sexpr(text: &str) -> Result<Self> {
        let tokens = lex_sexpr(text);
        let mut pos = 0;
        let tree = parse_tokens(&tokens, &mut pos)
            .ok_or_else(|| Error::Format(format!("unparseable tree expression: {text:?}")))?;
        if pos != tokens.len() {
            return Err(Error::Format(format!(
                "trailing tokens after tree expression: {text:?}"
            )));
        }
        tree.validate()?;
        Ok(tree)
    }
}

fn lex_sexpr(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        match c {
            '(' | ')' => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            c => current.push(c),
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn parse_tokens(tokens: &[String], pos: &mut usize) -> Option<BinaryTree> {
    let tok = tokens.get(*pos)?;
    if tok != "(" {
        // Bare index leaf.
        let index: usize = tok.parse().ok()?;
        *pos += 1;
        return Some(BinaryTree::leaf(index, None));
    }
    *pos += 1;
    // Optional tag: an atom that is not an index and not a paren.
    let mut tag = None;
    if let Some(next) = tokens.get(*pos) {
        if next != "(" && next != ")" && next.parse::<usize>().is_err() {
            tag = Some(next.clone());
            *pos += 1;
        }
    }
    let mut children = Vec::new();
    while tokens.get(*pos).is_some_and(|t| t != ")") {
        children.push(parse_tokens(tokens, pos)?);
        if children.len() > 2 {
            return None;
        }
    }
    if tokens.get(*pos)? != ")" {
        return None;
    }
    *pos += 1;
    match children.len() {
        1 => {
            // Tagged leaf: (TAG index).
            let child = children.pop().unwrap();
            if child.is_leaf() && child.tag.is_none() {
                Some(BinaryTree::leaf(child.span.0, tag))
            } else {
                None
            }
        }
        2 => {
            let right = children.pop().unwrap();
            let left = children.pop().unwrap();
            BinaryTree::node(tag, left, right).ok()
        }
        _ => None,
    }
}

// ── Span scoring ─────────────────────────────────────────────────────

/// Which span-score formula to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreVariant {
    /// Length-normalized geometric mean of per-row inside mass (default).
    GeometricMean,
    /// Raw product of per-row inside mass.
    RawProduct,
}

/// score(i, j) for all 0 <= i <= j < N; single-token spans pin to the
/// neutral score 1.
#[derive(Debug, Clone)]
pub struct SpanScoreTable {
    n: usize,
    scores: Vec<f64>,
}

impl SpanScoreTable {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn score(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i <= j && j < self.n);
        self.scores[i * self.n + j]
    }
}

const INSIDE_MASS_FLOOR: f64 = 1e-12;

/// Score every span of a row-stochastic attention matrix by how much of
/// each member row's mass stays inside the span.
pub fn span_scores(weights: &Tensor, variant: ScoreVariant) -> Result<SpanScoreTable> {
    let n = weights.rows();
    if weights.cols() != n || n == 0 {
        return Err(Error::Dimension {
            op: "span_scores",
            lhs: weights.shape().to_vec(),
            rhs: vec![n, n],
        });
    }
    for i in 0..n {
        let sum: f64 = weights.row(i).iter().sum();
        if (sum - 1.0).abs() > 1e-6 || weights.row(i).iter().any(|&w| !(0.0..=1.0 + 1e-9).contains(&w)) {
            return Err(Error::Contract(format!(
                "span_scores: row {i} is not a probability distribution (sum {sum})"
            )));
        }
    }

    // Prefix sums per row make inside_mass(p; i, j) an O(1) lookup.
    let mut prefix = vec![0.0; n * (n + 1)];
    for p in 0..n {
        for q in 0..n {
            prefix[p * (n + 1) + q + 1] = prefix[p * (n + 1) + q] + weights.get2(p, q);
        }
    }
    let inside = |p: usize, i: usize, j: usize| -> f64 {
        (prefix[p * (n + 1) + j + 1] - prefix[p * (n + 1) + i]).max(INSIDE_MASS_FLOOR)
    };

    let mut scores = vec![1.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut log_sum = 0.0;
            for p in i..=j {
                log_sum += inside(p, i, j).ln();
            }
            let value = match variant {
                ScoreVariant::GeometricMean => (log_sum / (j - i + 1) as f64).exp(),
                ScoreVariant::RawProduct => log_sum.exp(),
            };
            scores[i * n + j] = value;
        }
    }
    Ok(SpanScoreTable { n, scores })
}

/// Top-down greedy binarization: at every span pick the split maximizing
/// score(i,k) * score(k+1,j), smallest k on ties.
pub fn split_tree(scores: &SpanScoreTable) -> BinaryTree {
    fn build(scores: &SpanScoreTable, i: usize, j: usize) -> BinaryTree {
        if i == j {
            return BinaryTree::leaf(i, None);
        }
        let mut best_k = i;
        let mut best = f64::NEG_INFINITY;
        for k in i..j {
            let value = scores.score(i, k) * scores.score(k + 1, j);
            if value > best {
                best = value;
                best_k = k;
            }
        }
        let left = build(scores, i, best_k);
        let right = build(scores, best_k + 1, j);
        BinaryTree::node(None, left, right).expect("adjacent by construction")
    }
    build(scores, 0, scores.n - 1)
}

// ── Bracketing metrics ───────────────────────────────────────────────

/// Unlabeled bracketing precision/recall/F1. `degenerate` flags a zero
/// denominator (every metric forced to 0), which happens for two-token
/// sentences where no non-trivial bracket exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

/// Raw match counts; micro-averaging sums these across a corpus.
#[derive(Debug, Clone, Copy, Default)]
pub struct BracketCounts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl BracketCounts {
    pub fn add(&mut self, other: &BracketCounts) {
        self.matched += other.matched;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }

    pub fn metrics(&self) -> BracketMetrics {
        if self.predicted == 0 || self.gold == 0 {
            return BracketMetrics {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
                degenerate: true,
            };
        }
        let precision = self.matched as f64 / self.predicted as f64;
        let recall = self.matched as f64 / self.gold as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        BracketMetrics {
            precision,
            recall,
            f1,
            degenerate: false,
        }
    }
}

/// Count matching non-trivial brackets between two trees over the same
/// sentence (multiset intersection of spans).
pub fn bracket_counts(predicted: &BinaryTree, gold: &BinaryTree) -> Result<BracketCounts> {
    if predicted.span != gold.span {
        return Err(Error::Input(format!(
            "bracket_eval: span mismatch {:?} vs {:?}",
            predicted.span, gold.span
        )));
    }
    let p = predicted.nontrivial_brackets();
    let g = gold.nontrivial_brackets();
    let mut matched = 0;
    let (mut i, mut j) = (0, 0);
    while i < p.len() && j < g.len() {
        match p[i].cmp(&g[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                matched += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Ok(BracketCounts {
        matched,
        predicted: p.len(),
        gold: g.len(),
    })
}

/// Unlabeled EVALB-style comparison of one tree pair.
pub fn bracket_eval(predicted: &BinaryTree, gold: &BinaryTree) -> Result<BracketMetrics> {
    Ok(bracket_counts(predicted, gold)?.metrics())
}

// ── Corpus extraction ────────────────────────────────────────────────

/// Result of extracting trees for a whole dataset from one model.
#[derive(Debug)]
pub struct ExtractionOutcome {
    /// One predicted tree per dataset example, in order.
    pub trees: Vec<BinaryTree>,
    /// Summed bracket counts; micro-averaged metrics derive from these.
    pub counts: BracketCounts,
    pub metrics: BracketMetrics,
    /// Sentences short enough (N <= 2) to carry no scorable bracket.
    pub degenerate_sentences: usize,
}

/// Run the encoder in inference mode over a gold-treed dataset, build a
/// tree per sentence from the attention at `layer` (1-based; heads
/// averaged unless one is picked), and score against gold with
/// micro-averaged bracketing metrics.
pub fn extract_corpus(
    model: &crate::model::Model,
    dataset: &crate::data::Dataset,
    layer: usize,
    variant: ScoreVariant,
    head: Option<usize>,
) -> Result<ExtractionOutcome> {
    if layer == 0 || layer > model.config.n_layers {
        return Err(Error::Config(format!(
            "layer {layer} outside [1, {}]",
            model.config.n_layers
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Input("empty dataset".into()));
    }
    let mut trees = Vec::with_capacity(dataset.len());
    let mut counts = BracketCounts::default();
    let mut degenerate_sentences = 0;
    for example in &dataset.examples {
        let gold = example
            .gold_tree
            .as_ref()
            .ok_or_else(|| Error::Input("dataset example carries no gold tree".into()))?;
        let mut tape = crate::tensor::Tape::new();
        let trace = model.forward(
            &mut tape,
            &example.tokens,
            &mut crate::model::ForwardCtx::Infer,
        )?;
        let weights = &trace.attention[layer - 1];
        let matrix = match head {
            None => weights.mean_heads(),
            Some(h) => weights
                .heads
                .get(h)
                .cloned()
                .ok_or_else(|| Error::Config(format!("head {h} out of range")))?,
        };
        let table = span_scores(&matrix, variant)?;
        let tree = split_tree(&table);
        let pair = bracket_counts(&tree, gold)?;
        if pair.predicted == 0 || pair.gold == 0 {
            degenerate_sentences += 1;
        }
        counts.add(&pair);
        trees.push(tree);
    }
    Ok(ExtractionOutcome {
        trees,
        metrics: counts.metrics(),
        counts,
        degenerate_sentences,
    })
}
