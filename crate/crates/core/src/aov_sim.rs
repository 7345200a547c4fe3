//! Simulator for directional scans over chunk dependency orders.
//!
//! Each row of a [`DependencyMatrix`] is one entity's reasoning order over the
//! chunks: `rank[j] = k` means chunk `j` must be processed as the `k`-th step
//! for that entity. A scan visits chunks in one direction and accepts a chunk
//! for a row when it holds the rank that row needs next. Scans alternate
//! direction and restart by the same rule the engine uses for replays, with
//! a row's pending question considered raised at the chunk of its last
//! accepted step.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::orchestrator::{restart_point, traversal, Direction, ReplayOffset};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatrixError {
    #[error("matrix needs at least one row and one column")]
    Empty,
    #[error("row {row} is not a permutation of 1..={cols}")]
    NotPermutation { row: usize, cols: usize },
    #[error("row {row} has {len} entries, expected {cols}")]
    Ragged { row: usize, len: usize, cols: usize },
}

/// Rows of 1-based topological ranks, one permutation of `1..=y` per row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DependencyMatrix {
    rows: Vec<Vec<usize>>,
    cols: usize,
}

impl DependencyMatrix {
    pub fn new(rows: Vec<Vec<usize>>) -> Result<Self, MatrixError> {
        let cols = rows.first().map(Vec::len).ok_or(MatrixError::Empty)?;
        if cols == 0 {
            return Err(MatrixError::Empty);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(MatrixError::Ragged {
                    row: i,
                    len: row.len(),
                    cols,
                });
            }
            let mut seen = vec![false; cols];
            for &r in row {
                if r == 0 || r > cols || std::mem::replace(&mut seen[r - 1], true) {
                    return Err(MatrixError::NotPermutation { row: i, cols });
                }
            }
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn chunk_count(&self) -> usize {
        self.cols
    }

    /// Seeded matrix of `x` random row permutations over `y` chunks.
    pub fn random(x: usize, y: usize, seed: u64) -> Self {
        assert!(x >= 1 && y >= 1, "dimensions must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..x)
            .map(|_| {
                let mut row: Vec<usize> = (1..=y).collect();
                row.shuffle(&mut rng);
                row
            })
            .collect();
        Self { rows, cols: y }
    }
}

pub fn random_instance(x: usize, y: usize, seed: u64) -> DependencyMatrix {
    DependencyMatrix::random(x, y, seed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScanState {
    /// Next rank each row needs (1-based); `y + 1` once the row is done.
    pub next_needed: Vec<usize>,
    /// Chunk of each row's last accepted step.
    pub last_accepted: Vec<Option<usize>>,
    /// Accepted (row, chunk) pairs in acceptance order, 0-based row.
    pub accepted: Vec<(usize, usize)>,
    pub scans: usize,
    pub replays: usize,
}

impl ScanState {
    pub fn new(m: &DependencyMatrix) -> Self {
        Self {
            next_needed: vec![1; m.row_count()],
            last_accepted: vec![None; m.row_count()],
            accepted: Vec::new(),
            scans: 0,
            replays: 0,
        }
    }

    pub fn is_complete(&self, m: &DependencyMatrix) -> bool {
        self.next_needed.iter().all(|&k| k > m.chunk_count())
    }

    /// Chunks where the pending question of each unfinished row was raised.
    fn pending_origins<'a>(&'a self, m: &'a DependencyMatrix) -> impl Iterator<Item = usize> + 'a {
        self.next_needed
            .iter()
            .zip(&self.last_accepted)
            .filter(move |(k, _)| **k <= m.chunk_count())
            .filter_map(|(_, o)| *o)
    }
}

/// One scan over `order` (1-based chunk indices).
pub fn simulate_scan(m: &DependencyMatrix, state: &ScanState, order: &[usize]) -> ScanState {
    let mut next = state.clone();
    for &chunk in order {
        for (row, ranks) in m.rows.iter().enumerate() {
            // A row holds one rank per chunk, so at most one acceptance here.
            if ranks[chunk - 1] == next.next_needed[row] {
                next.next_needed[row] += 1;
                next.last_accepted[row] = Some(chunk);
                next.accepted.push((row, chunk));
            }
        }
    }
    next.scans += 1;
    next
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScanRecord {
    pub direction: Direction,
    pub start: usize,
    /// Accepted (row, chunk) pairs during this scan, 0-based row.
    pub accepted: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Resolution {
    pub success: bool,
    pub scans: usize,
    pub trace: Vec<ScanRecord>,
}

pub fn resolve(m: &DependencyMatrix, mrt: usize) -> Resolution {
    resolve_with(m, mrt, ReplayOffset::Exclusive)
}

pub fn resolve_with(m: &DependencyMatrix, mrt: usize, offset: ReplayOffset) -> Resolution {
    let y = m.chunk_count();
    let mut state = ScanState::new(m);
    let mut start = 1;
    let mut direction = Direction::Forward;
    let mut trace = Vec::new();
    loop {
        let before = state.accepted.len();
        state = simulate_scan(m, &state, &traversal(start, direction, y));
        trace.push(ScanRecord {
            direction,
            start,
            accepted: state.accepted[before..].to_vec(),
        });
        if state.is_complete(m) {
            return Resolution {
                success: true,
                scans: state.scans,
                trace,
            };
        }
        if state.replays >= mrt {
            break;
        }
        match restart_point(state.pending_origins(m), direction, y, offset) {
            Some(o) => start = o,
            // Pending rows without any accepted step: rescan everything.
            None => {
                start = match direction.flip() {
                    Direction::Forward => 1,
                    Direction::Backward => y,
                }
            }
        }
        direction = direction.flip();
        state.replays += 1;
    }
    Resolution {
        success: false,
        scans: state.scans,
        trace,
    }
}
