//! Weighted binary PCFG: grammar file parsing, lexicon layout over a given
//! vocabulary size, and tree/sentence sampling.
//!
//! The grammar is strictly binary (every production has exactly two RHS
//! symbols); preterminals expand to single words drawn from contiguous
//! token-id blocks. Gold trees are therefore exact by construction, which
//! is the whole point of generating the probing corpora from a PCFG.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tree::BinaryTree;

/// Lexical word class; content words are nouns/verbs/adjectives, the rest
/// are content-free (function) words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WordClass {
    Noun,
    Verb,
    Adj,
    Prep,
    Det,
    Punct,
    Other,
}

impl WordClass {
    pub const ALL: [WordClass; 7] = [
        WordClass::Noun,
        WordClass::Verb,
        WordClass::Adj,
        WordClass::Prep,
        WordClass::Det,
        WordClass::Punct,
        WordClass::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            WordClass::Noun => "noun",
            WordClass::Verb => "verb",
            WordClass::Adj => "adj",
            WordClass::Prep => "prep",
            WordClass::Det => "det",
            WordClass::Punct => "punct",
            WordClass::Other => "other",
        }
    }

    pub fn parse(text: &str) -> Option<WordClass> {
        WordClass::ALL.iter().copied().find(|c| c.as_str() == text)
    }

    pub fn is_content(&self) -> bool {
        matches!(self, WordClass::Noun | WordClass::Verb | WordClass::Adj)
    }

    pub fn index(&self) -> usize {
        WordClass::ALL.iter().position(|c| c == self).unwrap()
    }
}

#[derive(Debug, Clone)]
struct Rule {
    left: usize,
    right: usize,
    weight: f64,
}

#[derive(Debug, Clone)]
struct LexEntry {
    class: WordClass,
    weight: f64,
}

/// Parsed grammar: interned symbols, weighted binary rules grouped by LHS,
/// and a class-tagged lexicon.
#[derive(Debug, Clone)]
pub struct PcfgGrammar {
    pub version: u32,
    symbols: Vec<String>,
    start: usize,
    /// rules[sym] — productions of that nonterminal (empty for preterminals).
    rules: Vec<Vec<Rule>>,
    /// lexicon[sym] — Some for preterminals.
    lexicon: Vec<Option<LexEntry>>,
}

impl PcfgGrammar {
    /// The grammar shipped with the crate.
    pub fn builtin() -> PcfgGrammar {
        PcfgGrammar::parse(include_str!("../../resources/grammar.v1.txt"))
            .expect("builtin grammar must parse")
    }

    pub fn parse(text: &str) -> Result<PcfgGrammar> {
        let mut symbols: Vec<String> = Vec::new();
        let intern = |symbols: &mut Vec<String>, name: &str| -> usize {
            match symbols.iter().position(|s| s == name) {
                Some(i) => i,
                None => {
                    symbols.push(name.to_string());
                    symbols.len() - 1
                }
            }
        };

        let mut version = None;
        let mut start = None;
        let mut raw_rules: Vec<(usize, Rule)> = Vec::new();
        let mut raw_lex: Vec<(usize, LexEntry)> = Vec::new();

        for (line_no, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            let line_no = line_no + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            match fields[0] {
                "version" => {
                    let v = fields
                        .get(1)
                        .and_then(|f| f.parse().ok())
                        .ok_or_else(|| parse_err("expected `version <u32>`".into()))?;
                    version = Some(v);
                }
                "start" => {
                    let name = fields
                        .get(1)
                        .ok_or_else(|| parse_err("expected `start <symbol>`".into()))?;
                    start = Some(intern(&mut symbols, name));
                }
                "rule" => {
                    if fields.len() != 5 {
                        return Err(parse_err("expected `rule LHS LEFT RIGHT WEIGHT`".into()));
                    }
                    let lhs = intern(&mut symbols, fields[1]);
                    let left = intern(&mut symbols, fields[2]);
                    let right = intern(&mut symbols, fields[3]);
                    let weight: f64 = fields[4]
                        .parse()
                        .map_err(|_| parse_err(format!("bad weight {:?}", fields[4])))?;
                    if weight <= 0.0 {
                        return Err(parse_err("rule weight must be positive".into()));
                    }
                    raw_rules.push((
                        lhs,
                        Rule {
                            left,
                            right,
                            weight,
                        },
                    ));
                }
                "lex" => {
                    if fields.len() != 4 {
                        return Err(parse_err("expected `lex PRETERMINAL CLASS WEIGHT`".into()));
                    }
                    let sym = intern(&mut symbols, fields[1]);
                    let class = WordClass::parse(fields[2])
                        .ok_or_else(|| parse_err(format!("unknown word class {:?}", fields[2])))?;
                    let weight: f64 = fields[3]
                        .parse()
                        .map_err(|_| parse_err(format!("bad weight {:?}", fields[3])))?;
                    if weight <= 0.0 {
                        return Err(parse_err("lexicon weight must be positive".into()));
                    }
                    raw_lex.push((sym, LexEntry { class, weight }));
                }
                other => {
                    return Err(parse_err(format!("unknown directive {other:?}")));
                }
            }
        }

        let version = version.ok_or(Error::Format("grammar missing version line".into()))?;
        if version != 1 {
            return Err(Error::Format(format!(
                "unsupported grammar version {version}"
            )));
        }
        let start = start.ok_or(Error::Format("grammar missing start symbol".into()))?;

        let mut rules = vec![Vec::new(); symbols.len()];
        for (lhs, rule) in raw_rules {
            rules[lhs].push(rule);
        }
        let mut lexicon = vec![None; symbols.len()];
        for (sym, entry) in raw_lex {
            if lexicon[sym].is_some() {
                return Err(Error::Format(format!(
                    "duplicate lexicon entry for {}",
                    symbols[sym]
                )));
            }
            lexicon[sym] = Some(entry);
        }

        let grammar = PcfgGrammar {
            version,
            symbols,
            start,
            rules,
            lexicon,
        };
        grammar.validate()?;
        Ok(grammar)
    }

    fn validate(&self) -> Result<()> {
        for (sym, name) in self.symbols.iter().enumerate() {
            let has_rules = !self.rules[sym].is_empty();
            let has_lex = self.lexicon[sym].is_some();
            if has_rules && has_lex {
                return Err(Error::Format(format!(
                    "symbol {name} is both a nonterminal and a preterminal"
                )));
            }
            if !has_rules && !has_lex {
                return Err(Error::Format(format!(
                    "symbol {name} has neither rules nor a lexicon entry"
                )));
            }
        }
        // Every symbol must derive at least one terminal string (fixpoint).
        let mut productive: Vec<bool> = self.lexicon.iter().map(|l| l.is_some()).collect();
        loop {
            let mut changed = false;
            for sym in 0..self.symbols.len() {
                if productive[sym] {
                    continue;
                }
                if self.rules[sym]
                    .iter()
                    .any(|r| productive[r.left] && productive[r.right])
                {
                    productive[sym] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if let Some(sym) = (0..self.symbols.len()).find(|&s| !productive[s]) {
            return Err(Error::Format(format!(
                "symbol {} cannot derive a terminal string",
                self.symbols[sym]
            )));
        }
        Ok(())
    }

    pub fn symbol_name(&self, sym: usize) -> &str {
        &self.symbols[sym]
    }

    /// Apportion `vocab_size` token ids over the preterminals by weight
    /// (largest remainder, declaration order breaking ties). Every
    /// preterminal receives at least one word.
    pub fn lexicon_layout(&self, vocab_size: usize) -> Result<LexiconLayout> {
        let preterminals: Vec<(usize, &LexEntry)> = self
            .lexicon
            .iter()
            .enumerate()
            .filter_map(|(sym, entry)| entry.as_ref().map(|e| (sym, e)))
            .collect();
        if vocab_size < preterminals.len() {
            return Err(Error::Config(format!(
                "vocab size {vocab_size} below preterminal count {}",
                preterminals.len()
            )));
        }
        let total_weight: f64 = preterminals.iter().map(|(_, e)| e.weight).sum();
        let mut counts: Vec<usize> = Vec::with_capacity(preterminals.len());
        let mut remainders: Vec<(usize, f64)> = Vec::new();
        let mut assigned = 0;
        for (slot, (_, entry)) in preterminals.iter().enumerate() {
            let exact = vocab_size as f64 * entry.weight / total_weight;
            let floor = (exact.floor() as usize).max(1);
            counts.push(floor);
            assigned += floor;
            remainders.push((slot, exact - exact.floor()));
        }
        // Distribute leftovers by remainder; trim overshoot from the largest
        // blocks if the `max(1)` floors overshot.
        remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut leftover = vocab_size as isize - assigned as isize;
        let mut cursor = 0;
        while leftover > 0 {
            counts[remainders[cursor % remainders.len()].0] += 1;
            leftover -= 1;
            cursor += 1;
        }
        while leftover < 0 {
            let widest = (0..counts.len())
                .max_by_key(|&i| counts[i])
                .expect("non-empty");
            if counts[widest] <= 1 {
                return Err(Error::Config(format!(
                    "vocab size {vocab_size} too small for lexicon"
                )));
            }
            counts[widest] -= 1;
            leftover += 1;
        }

        let mut blocks = Vec::with_capacity(preterminals.len());
        let mut next_id = 0u32;
        for ((sym, entry), count) in preterminals.iter().zip(&counts) {
            blocks.push(LexBlock {
                symbol: *sym,
                class: entry.class,
                start: next_id,
                count: *count as u32,
            });
            next_id += *count as u32;
        }
        debug_assert_eq!(next_id as usize, vocab_size);

        let mut token_class = vec![WordClass::Other; vocab_size];
        let mut token_symbol = vec![0usize; vocab_size];
        for block in &blocks {
            for id in block.start..block.start + block.count {
                token_class[id as usize] = block.class;
                token_symbol[id as usize] = block.symbol;
            }
        }
        Ok(LexiconLayout {
            vocab_size,
            blocks,
            token_class,
            token_symbol,
        })
    }

    /// Sample one derivation. Returns the gold tree (leaf positions in
    /// sentence order) and the token sequence, or None when the depth or
    /// token budget was exceeded mid-derivation.
    pub fn sample_tree<R: Rng>(
        &self,
        layout: &LexiconLayout,
        rng: &mut R,
        max_tokens: usize,
        max_depth: usize,
    ) -> Option<(BinaryTree, Vec<u32>)> {
        let mut tokens = Vec::new();
        let tree = self.expand(self.start, layout, rng, &mut tokens, max_tokens, max_depth)?;
        Some((tree, tokens))
    }

    fn expand<R: Rng>(
        &self,
        sym: usize,
        layout: &LexiconLayout,
        rng: &mut R,
        tokens: &mut Vec<u32>,
        max_tokens: usize,
        depth_left: usize,
    ) -> Option<BinaryTree> {
        if tokens.len() >= max_tokens || depth_left == 0 {
            return None;
        }
        if let Some(block) = layout.block_for(sym) {
            let id = block.start + rng.random_range(0..block.count);
            let position = tokens.len();
            tokens.push(id);
            return Some(BinaryTree::leaf(
                position,
                Some(self.symbols[sym].clone()),
            ));
        }
        let rules = &self.rules[sym];
        let total: f64 = rules.iter().map(|r| r.weight).sum();
        let mut pick = rng.random_range(0.0..total);
        let mut chosen = &rules[rules.len() - 1];
        for rule in rules {
            if pick < rule.weight {
                chosen = rule;
                break;
            }
            pick -= rule.weight;
        }
        let left = self.expand(chosen.left, layout, rng, tokens, max_tokens, depth_left - 1)?;
        let right = self.expand(chosen.right, layout, rng, tokens, max_tokens, depth_left - 1)?;
        Some(
            BinaryTree::node(Some(self.symbols[sym].clone()), left, right)
                .expect("in-order leaves are adjacent"),
        )
    }
}

#[derive(Debug, Clone)]
pub struct LexBlock {
    pub symbol: usize,
    pub class: WordClass,
    pub start: u32,
    pub count: u32,
}

/// Concrete token-id assignment for one (grammar, vocab size) pair.
#[derive(Debug, Clone)]
pub struct LexiconLayout {
    pub vocab_size: usize,
    pub blocks: Vec<LexBlock>,
    token_class: Vec<WordClass>,
    token_symbol: Vec<usize>,
}

impl LexiconLayout {
    pub fn token_class(&self, id: u32) -> Option<WordClass> {
        self.token_class.get(id as usize).copied()
    }

    pub fn token_symbol(&self, id: u32) -> Option<usize> {
        self.token_symbol.get(id as usize).copied()
    }

    fn block_for(&self, sym: usize) -> Option<&LexBlock> {
        self.blocks.iter().find(|b| b.symbol == sym)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TOY: &str = "\
version 1
start S
rule S A B 1
lex A noun 1
lex B verb 1
";

    #[test]
    fn toy_grammar_generates_the_minimal_tree() {
        let grammar = PcfgGrammar::parse(TOY).unwrap();
        let layout = grammar.lexicon_layout(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (tree, tokens) = grammar.sample_tree(&layout, &mut rng, 10, 10).unwrap();
        assert_eq!(tokens.len(), 2);
        assert_eq!(tree.depth(), 2);
        assert_eq!(tree.top_constituents(), "A B");
        tree.validate().unwrap();
    }

    #[test]
    fn builtin_grammar_parses_and_samples() {
        let grammar = PcfgGrammar::builtin();
        let layout = grammar.lexicon_layout(200).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut produced = 0;
        for _ in 0..200 {
            if let Some((tree, tokens)) = grammar.sample_tree(&layout, &mut rng, 40, 30) {
                assert_eq!(tree.len(), tokens.len());
                tree.validate().unwrap();
                assert!(tokens.iter().all(|&t| (t as usize) < 200));
                produced += 1;
            }
        }
        assert!(produced > 100, "only {produced} derivations completed");
    }

    #[test]
    fn layout_partitions_the_vocabulary() {
        let grammar = PcfgGrammar::builtin();
        for vocab in [60, 123, 200, 1000] {
            let layout = grammar.lexicon_layout(vocab).unwrap();
            let total: u32 = layout.blocks.iter().map(|b| b.count).sum();
            assert_eq!(total as usize, vocab);
            assert!(layout.blocks.iter().all(|b| b.count >= 1));
            // Blocks are contiguous and ordered.
            let mut next = 0;
            for block in &layout.blocks {
                assert_eq!(block.start, next);
                next += block.count;
            }
        }
    }

    #[test]
    fn every_class_is_represented_in_builtin() {
        let grammar = PcfgGrammar::builtin();
        let layout = grammar.lexicon_layout(200).unwrap();
        for class in WordClass::ALL {
            assert!(
                layout.blocks.iter().any(|b| b.class == class),
                "missing {class:?}"
            );
        }
    }

    #[test]
    fn rejects_unproductive_symbols() {
        let bad = "\
version 1
start S
rule S A B 1
rule B B B 1
lex A noun 1
";
        assert!(PcfgGrammar::parse(bad).is_err());
    }

    #[test]
    fn rejects_future_version_and_bad_lines() {
        assert!(PcfgGrammar::parse("version 2\nstart S\nrule S A A 1\nlex A noun 1").is_err());
        let err = PcfgGrammar::parse("version 1\nstart S\nbogus line here").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let grammar = PcfgGrammar::builtin();
        let layout = grammar.lexicon_layout(200).unwrap();
        let sample = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .filter_map(|_| grammar.sample_tree(&layout, &mut rng, 40, 30))
                .map(|(_, tokens)| tokens)
                .collect::<Vec<_>>()
        };
        assert_eq!(sample(9), sample(9));
        assert_ne!(sample(9), sample(10));
    }
}
