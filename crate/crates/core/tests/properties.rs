mod common;

use common::*;
use proptest::prelude::*;
use xpanda::aov_sim::{resolve, DependencyMatrix};
use xpanda::eval::{normalize_answer, progress_score, seq_match_ratio, token_f1, GoalSet};
use xpanda::memory::{
    merge_info, merge_tracer, normalize_question, Answer, InfoStore, RefusalLexicon, SharedMemory,
    Tracer,
};
use xpanda::orchestrator::{restart_point, traversal, Direction, ReplayOffset};
use xpanda::partitioner::split;
use xpanda::protocol::{
    parse_decider_output, parse_explorer_output, serialize_explorer_output, serialize_verdict,
    Action, DeciderVerdict, ExplorerOutput,
};
use xpanda::tokenize::{ByteApproxTokenizer, TokenizedText, Tokenizer, WhitespaceTokenizer};
use xpanda::{plan_partition, PartitionConfig};

fn config() -> impl Strategy<Value = PartitionConfig> {
    (
        1usize..=8,
        0usize..=50,
        0usize..=500,
        0.0f64..=1.0,
        1usize..=20_000,
    )
        .prop_map(|(n, l, extra, alpha, m_extra)| {
            let k = l + extra;
            PartitionConfig {
                n,
                overlap_min: l,
                overlap_max: k,
                alpha,
                max_size: (k + m_extra).max(n * (n - 1)).max(k + 1),
            }
        })
}

fn info_store() -> impl Strategy<Value = InfoStore> {
    let q = prop::sample::select(vec![
        "Who?",
        "who",
        "Where is it?",
        "WHERE is it",
        "When",
        "why not",
    ]);
    let a = prop::sample::select(vec!["x", "y", "unknown", "", "n/a", "z z"]);
    prop::collection::vec((q, prop::collection::vec((a, 1usize..4), 0..3)), 0..5).prop_map(
        |entries| {
            let mut s = InfoStore::new();
            for (q, answers) in entries {
                s.add_question(q);
                for (text, chunk) in answers {
                    s.add_answer(
                        q,
                        Answer {
                            text: text.into(),
                            chunk,
                            pass: 1,
                        },
                    );
                }
            }
            s
        },
    )
}

fn tracer() -> impl Strategy<Value = Tracer> {
    let q = prop::sample::select(vec![
        "Who?",
        "who",
        "Where is it?",
        "When",
        "how many",
        "why not",
    ]);
    prop::collection::vec((q, 1usize..6), 0..5).prop_map(|entries| {
        let mut t = Tracer::new();
        for (q, o) in entries {
            t.insert(q, o);
        }
        t
    })
}

fn explorer_output() -> impl Strategy<Value = ExplorerOutput> {
    (
        prop::collection::btree_map(".{0,12}", prop::collection::vec(".{0,12}", 0..3), 0..4),
        prop::collection::vec(".{0,16}", 0..4),
    )
        .prop_map(|(solved, new_questions)| ExplorerOutput {
            solved: solved.into_iter().collect(),
            new_questions,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn partition_matches_oracle_and_covers(w in 0usize..300_000, cfg in config()) {
        let p = plan_partition(w, &cfg);
        prop_assert_eq!((p.chunk_count, p.stride, p.size, p.delta), partition_oracle(w, &cfg));
        let ranges = p.ranges();
        if w > 0 {
            prop_assert_eq!(ranges[0].start, 0);
            prop_assert_eq!(ranges.last().unwrap().end, w);
            for pair in ranges.windows(2) {
                prop_assert!(pair[1].start < pair[0].end || pair[1].start == pair[0].end && p.delta == 0);
                prop_assert!(pair[0].start < pair[1].start);
            }
        }
        for r in &ranges {
            prop_assert!(r.len() <= cfg.max_size);
        }
    }

    #[test]
    fn chunk_count_monotone(w in 0usize..500_000, dw in 1usize..5_000, cfg in config()) {
        prop_assert!(plan_partition(w, &cfg).chunk_count <= plan_partition(w + dw, &cfg).chunk_count);
    }

    #[test]
    fn split_slices_source_text(words in prop::collection::vec("[a-z]{1,6}", 0..300), n in 1usize..6) {
        let text = words.join(" ");
        let cfg = PartitionConfig { n, overlap_min: 1, overlap_max: 20, alpha: 0.1, max_size: 64 };
        let chunks = split(&TokenizedText::new(&text, &WhitespaceTokenizer), &cfg);
        for c in &chunks {
            prop_assert_eq!(c.text.split_whitespace().collect::<Vec<_>>(), words[c.start..c.end].to_vec());
        }
        if !words.is_empty() {
            prop_assert_eq!(chunks.last().unwrap().end, words.len());
        }
    }

    #[test]
    fn byte_tokenizer_spans_tile_the_text(text in "\\PC{0,200}", bpt in 1usize..8) {
        let t = ByteApproxTokenizer { bytes_per_token: bpt };
        let spans = t.spans(&text);
        let mut pos = 0;
        for s in &spans {
            prop_assert_eq!(s.start, pos);
            prop_assert!(s.end > s.start);
            prop_assert!(text.is_char_boundary(s.end));
            pos = s.end;
        }
        prop_assert_eq!(pos, text.len());
    }

    #[test]
    fn normalization_is_idempotent(s in "\\PC{0,40}") {
        let q = normalize_question(&s);
        prop_assert_eq!(normalize_question(&q), q.clone());
        let a = normalize_answer(&s);
        prop_assert_eq!(normalize_answer(&a), a);
    }

    #[test]
    fn merge_info_laws(a in info_store(), b in info_store(), c in info_store()) {
        prop_assert_eq!(merge_info(&merge_info(&a, &b), &c), merge_info(&a, &merge_info(&b, &c)));
        prop_assert_eq!(merge_info(&a, &InfoStore::new()), a.clone());
        prop_assert_eq!(merge_info(&InfoStore::new(), &a), a.clone());
        prop_assert_eq!(merge_info(&a, &a), a);
    }

    #[test]
    fn merge_tracer_laws(a in tracer(), b in tracer(), c in tracer()) {
        prop_assert_eq!(merge_tracer(&merge_tracer(&a, &b), &c), merge_tracer(&a, &merge_tracer(&b, &c)));
        prop_assert_eq!(merge_tracer(&a, &Tracer::new()), a.clone());
        prop_assert_eq!(merge_tracer(&a, &a), a.clone());
        for (k, e) in a.iter() {
            prop_assert_eq!(merge_tracer(&a, &b).origin(k), Some(e.origin));
        }
    }

    #[test]
    fn tracer_never_holds_answered_questions(steps in prop::collection::vec((info_store(), tracer()), 1..8)) {
        let refusals = RefusalLexicon::default();
        let mut mem = SharedMemory::new(refusals.clone());
        for (solved, raised) in &steps {
            mem.apply_step(solved, raised);
            for (k, e) in mem.tracer.iter() {
                prop_assert!(!mem.info.is_answered(k, &refusals));
                prop_assert!(e.origin >= 1);
            }
        }
    }

    #[test]
    fn explorer_round_trip(out in explorer_output(), prefix in "\\PC{0,30}") {
        let block = serialize_explorer_output(&out);
        prop_assert_eq!(parse_explorer_output(&block).unwrap(), out.clone());
        // Prose before the block, even with a stray fence, does not matter.
        let wrapped = format!("{prefix}\n{block}\n");
        prop_assert_eq!(parse_explorer_output(&wrapped).unwrap(), out);
    }

    #[test]
    fn verdict_round_trip(answer in "[^\\s]\\PC{0,20}[^\\s]", replay in any::<bool>()) {
        let v = if replay {
            DeciderVerdict { action: Action::Replay, answer: None }
        } else {
            DeciderVerdict { action: Action::Conclude, answer: Some(answer) }
        };
        prop_assert_eq!(parse_decider_output(&serialize_verdict(&v)).unwrap(), v);
    }

    #[test]
    fn parsers_never_panic(text in "\\PC{0,300}") {
        let _ = parse_explorer_output(&text);
        let _ = parse_decider_output(&text);
        let fenced = format!("```json\n{text}\n```");
        let _ = parse_explorer_output(&fenced);
        let _ = parse_decider_output(&fenced);
    }

    #[test]
    fn f1_matches_oracle(p in "[a-dA-D .,]{0,20}", g in "[a-dA-D .,]{0,20}") {
        prop_assert!((token_f1(&p, &g) - f1_oracle(&p, &g)).abs() < 1e-12);
        prop_assert!((token_f1(&p, &g) - token_f1(&g, &p)).abs() < 1e-12);
    }

    #[test]
    fn seq_ratio_matches_recursive_oracle(a in "[abcd]{0,12}", b in "[abcd]{0,12}") {
        let r = seq_match_ratio(&a, &b);
        prop_assert!((r - seq_oracle(&a, &b)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn progress_is_monotone(
        goals in prop::collection::btree_set("g[0-5]", 1..5),
        steps in prop::collection::vec(prop::collection::vec("g[0-7]", 0..4), 0..8),
    ) {
        let set = GoalSet::new(&goals);
        let goals: Vec<String> = goals.into_iter().collect();
        let mut prev = 0.0;
        for t in 0..=steps.len() {
            let r = progress_score(&set, &steps, t).unwrap();
            prop_assert!(r >= prev && r <= 1.0);
            prop_assert!((r - progress_oracle(&goals, &steps, t)).abs() < 1e-12);
            prev = r;
        }
    }

    #[test]
    fn aov_resolves_within_y_scans(x in 1usize..5, y in 1usize..8, seed in any::<u64>()) {
        let m = DependencyMatrix::random(x, y, seed);
        let r = resolve(&m, y.saturating_sub(1));
        prop_assert!(r.success, "counterexample {:?}", m.rows());
        prop_assert!(r.scans <= y.max(1));
    }

    #[test]
    fn restart_stays_in_range(origins in prop::collection::vec(1usize..10, 0..5), l in 1usize..10, fwd in any::<bool>()) {
        let origins: Vec<usize> = origins.into_iter().map(|o| o.min(l)).collect();
        let dir = if fwd { Direction::Forward } else { Direction::Backward };
        match restart_point(origins.clone(), dir, l, ReplayOffset::Exclusive) {
            None => prop_assert!(origins.is_empty()),
            Some(s) => {
                prop_assert!((1..=l).contains(&s));
                let order = traversal(s, dir.flip(), l);
                prop_assert_eq!(order[0], s);
            }
        }
    }
}
