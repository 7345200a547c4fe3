//! Independent reference implementations used by the integration tests.
//! They follow the written definitions directly and share no code with the
//! library.

#![allow(dead_code)]

pub mod stub;

use std::collections::BTreeMap;

use xpanda::PartitionConfig;

/// (chunk_count, stride, size, delta) evaluated straight from the formulas.
pub fn partition_oracle(w: usize, c: &PartitionConfig) -> (usize, usize, usize, usize) {
    if w == 0 {
        return (0, 0, 0, 0);
    }
    if w <= c.n * (c.n - 1) && w <= c.max_size {
        return (1, w, w, 0);
    }
    let per_part = w.div_ceil(c.n);
    let saturated = per_part > c.max_size;
    let scaled = (c.alpha * w as f64 + 1e-9).floor() as usize;
    let mut delta = scaled.min(c.overlap_max).max(c.overlap_min);
    let cap = if saturated { c.max_size } else { per_part };
    if delta >= cap {
        delta = cap - 1;
    }
    let stride;
    if per_part + delta > c.max_size {
        stride = c.max_size - delta;
    } else {
        stride = per_part;
        if delta > per_part / 2 {
            delta = per_part / 2;
        }
    }
    let size = stride + delta;
    if size >= w {
        return (1, w, w, 0);
    }
    let mut count = 0;
    let mut start = 0;
    while start < w {
        count += 1;
        start += stride;
    }
    (count, stride, size, delta)
}

fn squad_normalize(s: &str) -> Vec<String> {
    let lowered: String = s
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    lowered
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

/// Token F1 with the overlap counted by sorting both token lists.
pub fn f1_oracle(pred: &str, gold: &str) -> f64 {
    let mut p = squad_normalize(pred);
    let mut g = squad_normalize(gold);
    if p.is_empty() || g.is_empty() {
        return if p.len() == g.len() { 1.0 } else { 0.0 };
    }
    p.sort();
    g.sort();
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < p.len() && j < g.len() {
        match p[i].cmp(&g[j]) {
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    if common == 0 {
        return 0.0;
    }
    let prec = common as f64 / p.len() as f64;
    let rec = common as f64 / g.len() as f64;
    2.0 * prec * rec / (prec + rec)
}

pub fn em_oracle(pred: &str, golds: &[String]) -> u8 {
    golds
        .iter()
        .any(|g| squad_normalize(g) == squad_normalize(pred)) as u8
}

/// Longest common block by exhaustive search; earliest in `a`, then in `b`.
fn longest_block(a: &[char], b: &[char]) -> (usize, usize, usize) {
    let mut best = (0, 0, 0);
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut k = 0;
            while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                k += 1;
            }
            if k > best.2 {
                best = (i, j, k);
            }
        }
    }
    best
}

fn matched(a: &[char], b: &[char]) -> usize {
    let (i, j, k) = longest_block(a, b);
    if k == 0 {
        return 0;
    }
    k + matched(&a[..i], &b[..j]) + matched(&a[i + k..], &b[j + k..])
}

/// Recursive gestalt ratio without any junk heuristics.
pub fn seq_oracle(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * matched(&a, &b) as f64 / (a.len() + b.len()) as f64
}

/// Max over the first `t` steps of the goal fraction reached.
pub fn progress_oracle(goals: &[String], steps: &[Vec<String>], t: usize) -> f64 {
    let mut goal_set: BTreeMap<String, ()> = BTreeMap::new();
    for g in goals {
        let n = squad_normalize(g).join(" ");
        if !n.is_empty() {
            goal_set.insert(n, ());
        }
    }
    let mut best = 0usize;
    for step in &steps[..t] {
        let mut hit: BTreeMap<String, ()> = BTreeMap::new();
        for p in step {
            let n = squad_normalize(p).join(" ");
            if goal_set.contains_key(&n) {
                hit.insert(n, ());
            }
        }
        best = best.max(hit.len());
    }
    best as f64 / goal_set.len() as f64
}

/// All permutations of `1..=y` in lexicographic order.
pub fn permutations(y: usize) -> Vec<Vec<usize>> {
    fn go(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                cur.push(v + 1);
                go(cur, used, out);
                cur.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; y], &mut out);
    out
}

/// Three-chunk scenario: a question raised while reading chunk 3 can only
/// be answered from chunk 1.
pub const FLASHBACK_SCENARIO: &str = r#"{
  "rules": [
    {"role": "explorer", "chunk": 3, "pass": 1,
     "reply": {"solved": {}, "new_questions": ["Who built the lighthouse?"]}},
    {"role": "explorer", "chunk": 1, "pass": 2,
     "reply": {"solved": {"Who built the lighthouse?": ["Maren Holt"]}, "new_questions": []}},
    {"role": "decider", "contains": "No further reading passes are possible.",
     "reply": {"action": "Conclude", "answer": "unknown"}},
    {"role": "decider", "contains": "Maren Holt",
     "reply": {"action": "Conclude", "answer": "Maren Holt"}},
    {"role": "decider", "reply": {"action": "Replay"}}
  ]
}"#;

pub const FLASHBACK_QUERY: &str = "Who built the lighthouse that the keeper restored?";
pub const FLASHBACK_GOLD: &str = "Maren Holt";

/// Thirty whitespace tokens; the default partition cuts them into three
/// chunks.
pub fn flashback_context() -> String {
    (0..30)
        .map(|i| format!("w{i}"))
        .collect::<Vec<_>>()
        .join(" ")
}
