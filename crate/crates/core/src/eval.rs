//! Answer-quality metrics: SQuAD-style token F1 and exact match, the gestalt
//! sequence match ratio, and the max-over-steps progress score.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("goal set is empty")]
    EmptyGoals,
    #[error("step index {t} exceeds the {steps} recorded steps")]
    StepOutOfRange { t: usize, steps: usize },
}

/// Lowercase, drop ASCII punctuation and the articles a/an/the, collapse
/// whitespace.
pub fn normalize_answer(s: &str) -> String {
    static ARTICLES: OnceLock<Regex> = OnceLock::new();
    let articles = ARTICLES.get_or_init(|| Regex::new(r"\b(a|an|the)\b").unwrap());
    let lowered = s.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    let no_articles = articles.replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(gold);
    let pred: Vec<&str> = pred.split_whitespace().collect();
    let gold: Vec<&str> = gold.split_whitespace().collect();
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best F1 against any of the gold answers; 0 with no golds.
pub fn best_token_f1<S: AsRef<str>>(prediction: &str, golds: &[S]) -> f64 {
    golds
        .iter()
        .map(|g| token_f1(prediction, g.as_ref()))
        .fold(0.0, f64::max)
}

pub fn exact_match<S: AsRef<str>>(prediction: &str, golds: &[S]) -> u8 {
    let pred = normalize_answer(prediction);
    golds.iter().any(|g| normalize_answer(g.as_ref()) == pred) as u8
}

/// Gestalt similarity `2 * M / T`, where `M` counts characters in the
/// matching blocks found by recursive longest-block decomposition and `T` is
/// the combined length. Block search mirrors Python's `difflib`, including
/// its popular-element heuristic for second sequences of 200+ items.
pub fn seq_match_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    let matches: usize = Matcher::new(&a, &b)
        .matching_blocks()
        .iter()
        .map(|m| m.2)
        .sum();
    2.0 * matches as f64 / total as f64
}

pub fn best_seq_match_ratio<S: AsRef<str>>(prediction: &str, golds: &[S]) -> f64 {
    golds
        .iter()
        .map(|g| seq_match_ratio(prediction, g.as_ref()))
        .fold(0.0, f64::max)
}

struct Matcher<'a> {
    a: &'a [char],
    b: &'a [char],
    b2j: HashMap<char, Vec<usize>>,
}

impl<'a> Matcher<'a> {
    fn new(a: &'a [char], b: &'a [char]) -> Self {
        let mut b2j: HashMap<char, Vec<usize>> = HashMap::new();
        for (j, &c) in b.iter().enumerate() {
            b2j.entry(c).or_default().push(j);
        }
        let n = b.len();
        if n >= 200 {
            let ntest = n / 100 + 1;
            b2j.retain(|_, idxs| idxs.len() <= ntest);
        }
        Self { a, b, b2j }
    }

    /// Longest common block in `a[alo..ahi]` × `b[blo..bhi]`; ties go to the
    /// earliest start in `a`, then in `b`.
    fn longest(&self, alo: usize, ahi: usize, blo: usize, bhi: usize) -> (usize, usize, usize) {
        let (mut besti, mut bestj, mut best) = (alo, blo, 0);
        let mut j2len: HashMap<usize, usize> = HashMap::new();
        for i in alo..ahi {
            let mut next: HashMap<usize, usize> = HashMap::new();
            if let Some(js) = self.b2j.get(&self.a[i]) {
                for &j in js {
                    if j < blo {
                        continue;
                    }
                    if j >= bhi {
                        break;
                    }
                    let k = j
                        .checked_sub(1)
                        .and_then(|p| j2len.get(&p))
                        .copied()
                        .unwrap_or(0)
                        + 1;
                    next.insert(j, k);
                    if k > best {
                        besti = i + 1 - k;
                        bestj = j + 1 - k;
                        best = k;
                    }
                }
            }
            j2len = next;
        }
        // Popular elements were left out of the index; grow across them.
        while besti > alo && bestj > blo && self.a[besti - 1] == self.b[bestj - 1] {
            besti -= 1;
            bestj -= 1;
            best += 1;
        }
        while besti + best < ahi
            && bestj + best < bhi
            && self.a[besti + best] == self.b[bestj + best]
        {
            best += 1;
        }
        (besti, bestj, best)
    }

    fn matching_blocks(&self) -> Vec<(usize, usize, usize)> {
        let mut blocks = Vec::new();
        let mut queue = vec![(0, self.a.len(), 0, self.b.len())];
        while let Some((alo, ahi, blo, bhi)) = queue.pop() {
            let (i, j, k) = self.longest(alo, ahi, blo, bhi);
            if k > 0 {
                blocks.push((i, j, k));
                if alo < i && blo < j {
                    queue.push((alo, i, blo, j));
                }
                if i + k < ahi && j + k < bhi {
                    queue.push((i + k, ahi, j + k, bhi));
                }
            }
        }
        blocks.sort_unstable();
        blocks
    }
}

/// Atomic subgoals, normalized and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoalSet {
    goals: BTreeSet<String>,
}

impl GoalSet {
    pub fn new<I, S>(goals: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            goals: goals
                .into_iter()
                .map(|g| normalize_answer(g.as_ref()))
                .filter(|g| !g.is_empty())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }
}

/// `max_{i <= t} |G ∩ P_i| / |G|`, with `P_0` empty.
pub fn progress_score<S: AsRef<str>>(
    goals: &GoalSet,
    steps: &[Vec<S>],
    t: usize,
) -> Result<f64, MetricError> {
    if goals.is_empty() {
        return Err(MetricError::EmptyGoals);
    }
    if t > steps.len() {
        return Err(MetricError::StepOutOfRange {
            t,
            steps: steps.len(),
        });
    }
    let best = steps[..t]
        .iter()
        .map(|achieved| {
            let achieved: BTreeSet<String> = achieved
                .iter()
                .map(|p| normalize_answer(p.as_ref()))
                .collect();
            goals.goals.intersection(&achieved).count()
        })
        .max()
        .unwrap_or(0);
    Ok(best as f64 / goals.len() as f64)
}
