//! Probing-task datasets: example types, deterministic generators and the
//! on-disk dataset format.
//!
//! A dataset file is UTF-8, one example per line:
//! `task<TAB>label<TAB>space-separated-token-ids[<TAB>bracketed-gold-tree]`
//! preceded by a single header line `# task=<name> vocab=<n> seed=<n>`.

mod gen;
mod pcfg;

pub use gen::{
    gen_bigram_shift, gen_pcfg_corpus, gen_word_reorder, label_histogram, wrd_mean_distance,
    CorpusSpec, SplitDatasets, DEFAULT_DEPTH_RATIOS, MAX_TREE_DEPTH, MIN_TREE_DEPTH,
};
pub use pcfg::{LexBlock, LexiconLayout, PcfgGrammar, WordClass};

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tree::BinaryTree;

/// The four probing tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    BigramShift,
    Wrd,
    TreeDepth,
    TopConst,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::BigramShift, Task::Wrd, Task::TreeDepth, Task::TopConst];

    pub fn name(&self) -> &'static str {
        match self {
            Task::BigramShift => "bigram-shift",
            Task::Wrd => "wrd",
            Task::TreeDepth => "tree-depth",
            Task::TopConst => "top-const",
        }
    }

    pub fn parse(text: &str) -> Option<Task> {
        Task::ALL.iter().copied().find(|t| t.name() == text)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Task label. WRD positions index into the edited sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Label {
    Binary(u8),
    Positions { insert: usize, origin: usize },
    Depth(u8),
    Class(String),
}

impl Label {
    fn encode(&self) -> String {
        match self {
            Label::Binary(b) => b.to_string(),
            Label::Positions { insert, origin } => format!("{insert},{origin}"),
            Label::Depth(d) => d.to_string(),
            Label::Class(name) => name.clone(),
        }
    }

    fn decode(task: Task, field: &str, line: usize) -> Result<Label> {
        let err = |message: String| Error::Parse { line, message };
        match task {
            Task::BigramShift => match field {
                "0" => Ok(Label::Binary(0)),
                "1" => Ok(Label::Binary(1)),
                other => Err(err(format!("bigram-shift label must be 0/1, got {other:?}"))),
            },
            Task::Wrd => {
                let (insert, origin) = field
                    .split_once(',')
                    .ok_or_else(|| err(format!("wrd label must be `insert,origin`, got {field:?}")))?;
                let insert = insert
                    .parse()
                    .map_err(|_| err(format!("bad insert position {insert:?}")))?;
                let origin = origin
                    .parse()
                    .map_err(|_| err(format!("bad origin position {origin:?}")))?;
                Ok(Label::Positions { insert, origin })
            }
            Task::TreeDepth => {
                let depth: u8 = field
                    .parse()
                    .map_err(|_| err(format!("bad depth label {field:?}")))?;
                Ok(Label::Depth(depth))
            }
            Task::TopConst => {
                if field.is_empty() {
                    Err(err("empty top-constituent label".into()))
                } else {
                    Ok(Label::Class(field.to_string()))
                }
            }
        }
    }
}

/// One probing example: a token sequence, its task label, and (for the
/// PCFG tasks) the gold constituency tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbingExample {
    pub tokens: Vec<u32>,
    pub label: Label,
    pub gold_tree: Option<BinaryTree>,
}

impl ProbingExample {
    fn validate(&self, task: Task, vocab_size: usize, line: usize) -> Result<()> {
        let err = |message: String| Error::Parse { line, message };
        if self.tokens.is_empty() {
            return Err(err("empty token sequence".into()));
        }
        if let Some(&bad) = self.tokens.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(err(format!("token id {bad} out of range for vocab {vocab_size}")));
        }
        match (&self.label, task) {
            (Label::Binary(_), Task::BigramShift) => {}
            (Label::Positions { insert, origin }, Task::Wrd) => {
                if insert == origin || *insert >= self.tokens.len() || *origin >= self.tokens.len()
                {
                    return Err(err(format!(
                        "wrd positions {insert},{origin} invalid for length {}",
                        self.tokens.len()
                    )));
                }
            }
            (Label::Depth(_), Task::TreeDepth) => {}
            (Label::Class(_), Task::TopConst) => {}
            (label, task) => {
                return Err(err(format!("label {label:?} does not fit task {task}")));
            }
        }
        if let Some(tree) = &self.gold_tree {
            tree.validate()
                .map_err(|e| err(format!("invalid gold tree: {e}")))?;
            if tree.span != (0, self.tokens.len() - 1) {
                return Err(err(format!(
                    "gold tree span {:?} does not cover {} tokens",
                    tree.span,
                    self.tokens.len()
                )));
            }
        }
        Ok(())
    }
}

/// A full split of one probing task.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub vocab_size: usize,
    pub seed: u64,
    pub examples: Vec<ProbingExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.examples.iter().map(|e| e.tokens.len()).max().unwrap_or(0)
    }

    /// Distinct string labels in first-seen order (top-constituent task).
    pub fn distinct_class_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for example in &self.examples {
            if let Label::Class(name) = &example.label {
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
        }
        out
    }
}

/// Serialize a dataset; output is byte-identical for identical inputs.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# task={} vocab={} seed={}\n",
        dataset.task.name(),
        dataset.vocab_size,
        dataset.seed
    ));
    for example in &dataset.examples {
        out.push_str(dataset.task.name());
        out.push('\t');
        out.push_str(&example.label.encode());
        out.push('\t');
        let mut first = true;
        for &t in &example.tokens {
            if !first {
                out.push(' ');
            }
            out.push_str(&t.to_string());
            first = false;
        }
        if let Some(tree) = &example.gold_tree {
            out.push('\t');
            out.push_str(&tree.to_sexpr());
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty dataset file".into(),
    })?;
    let header = header.strip_prefix('#').ok_or(Error::Parse {
        line: 1,
        message: "missing `# task=... vocab=... seed=...` header".into(),
    })?;
    let mut task = None;
    let mut vocab_size = None;
    let mut seed = None;
    for field in header.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or(Error::Parse {
            line: 1,
            message: format!("bad header field {field:?}"),
        })?;
        match key {
            "task" => {
                task = Some(Task::parse(value).ok_or(Error::Parse {
                    line: 1,
                    message: format!("unknown task {value:?}"),
                })?)
            }
            "vocab" => {
                vocab_size = Some(value.parse().map_err(|_| Error::Parse {
                    line: 1,
                    message: format!("bad vocab size {value:?}"),
                })?)
            }
            "seed" => {
                seed = Some(value.parse().map_err(|_| Error::Parse {
                    line: 1,
                    message: format!("bad seed {value:?}"),
                })?)
            }
            other => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unknown header key {other:?}"),
                })
            }
        }
    }
    let (task, vocab_size, seed) = match (task, vocab_size, seed) {
        (Some(t), Some(v), Some(s)) => (t, v, s),
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "header must carry task, vocab and seed".into(),
            })
        }
    };

    let mut examples = Vec::new();
    for (line_idx, line) in lines {
        let line_no = line_idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 or 4 tab-separated fields, got {}", fields.len()),
            });
        }
        if Task::parse(fields[0]) != Some(task) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("task column {:?} disagrees with header {task}", fields[0]),
            });
        }
        let label = Label::decode(task, fields[1], line_no)?;
        let tokens: Vec<u32> = fields[2]
            .split(' ')
            .map(|t| {
                t.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad token id {t:?}"),
                })
            })
            .collect::<Result<_>>()?;
        let gold_tree = match fields.get(3) {
            Some(text) => Some(BinaryTree::parse_sexpr(text).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?),
            None => None,
        };
        let example = ProbingExample {
            tokens,
            label,
            gold_tree,
        };
        example.validate(task, vocab_size, line_no)?;
        examples.push(example);
    }
    Ok(Dataset {
        task,
        vocab_size,
        seed,
        examples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_dataset() -> Dataset {
        Dataset {
            task: Task::BigramShift,
            vocab_size: 50,
            seed: 7,
            examples: vec![
                ProbingExample {
                    tokens: vec![3, 1, 4, 1, 5],
                    label: Label::Binary(0),
                    gold_tree: None,
                },
                ProbingExample {
                    tokens: vec![9, 2, 6],
                    label: Label::Binary(1),
                    gold_tree: None,
                },
            ],
        }
    }

    #[test]
    fn empty_dataset_roundtrips_as_header_only() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.tsv");
        let dataset = Dataset {
            task: Task::Wrd,
            vocab_size: 10,
            seed: 0,
            examples: vec![],
        };
        write_dataset(&path, &dataset).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, dataset);
    }

    #[test]
    fn roundtrip_preserves_examples_and_trees() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.tsv");
        let mut dataset = sample_dataset();
        dataset.task = Task::TreeDepth;
        dataset.examples = vec![ProbingExample {
            tokens: vec![3, 1],
            label: Label::Depth(2),
            gold_tree: Some(
                BinaryTree::node(
                    Some("S".into()),
                    BinaryTree::leaf(0, Some("A".into())),
                    BinaryTree::leaf(1, Some("B".into())),
                )
                .unwrap(),
            ),
        }];
        write_dataset(&path, &dataset).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), dataset);
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.tsv");

        // Wrong field count on line 3.
        std::fs::write(
            &path,
            "# task=bigram-shift vocab=50 seed=7\nbigram-shift\t0\t1 2 3\nbigram-shift\t1\n",
        )
        .unwrap();
        let err = read_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");

        // Label/task mismatch.
        std::fs::write(
            &path,
            "# task=bigram-shift vocab=50 seed=7\nbigram-shift\t5,1\t1 2 3\n",
        )
        .unwrap();
        let err = read_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");

        // Token id beyond vocab.
        std::fs::write(
            &path,
            "# task=bigram-shift vocab=50 seed=7\nbigram-shift\t0\t1 99\n",
        )
        .unwrap();
        let err = read_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("99"), "{err}");
    }

    #[test]
    fn writes_are_byte_identical() {
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.tsv");
        let b = dir.path().join("b.tsv");
        write_dataset(&a, &sample_dataset()).unwrap();
        write_dataset(&b, &sample_dataset()).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
