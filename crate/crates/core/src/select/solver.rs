//! Exact branch-and-bound over the face variables with unit propagation and a combinatorial
//! lower bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::SelectionProblem;
use crate::{Error, Result};

/// Objectives closer than this are ties, broken by the lexicographically smaller assignment.
pub const TIE_TOLERANCE: f64 = 1e-9;

const DIVE_NODE_LIMIT: u64 = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    /// Time limit reached; the assignment is the best incumbent.
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub assignment: Vec<bool>,
    pub objective: f64,
    pub status: SolveStatus,
    pub nodes: u64,
}

const FREE: i8 = -1;

struct Ctx<'a> {
    p: &'a SelectionProblem,
    /// Branching order: largest |coefficient| first, ties by id.
    order: Vec<usize>,
}

impl Ctx<'_> {
    /// Unit propagation over edge and single-roof rows. Returns false on a conflict.
    fn propagate(&self, s: &mut [i8]) -> bool {
        loop {
            let mut changed = false;
            for fs in &self.p.edges {
                let sel = fs.iter().filter(|&&f| s[f] == 1).count();
                let free: Vec<usize> = fs.iter().copied().filter(|&f| s[f] == FREE).collect();
                match (sel, free.len()) {
                    (n, _) if n > 2 => return false,
                    (2, 0) | (0, 0) => {}
                    (1, 0) => return false,
                    (2, _) => {
                        free.iter().for_each(|&f| s[f] = 0);
                        changed = true;
                    }
                    (1, 1) => {
                        s[free[0]] = 1;
                        changed = true;
                    }
                    (0, 1) => {
                        s[free[0]] = 0;
                        changed = true;
                    }
                    _ => {}
                }
            }
            for g in &self.p.groups {
                let sel = g.iter().filter(|&&f| s[f] == 1).count();
                let free: Vec<usize> = g.iter().copied().filter(|&f| s[f] == FREE).collect();
                match (sel, free.len()) {
                    (n, _) if n > 1 => return false,
                    (0, 0) => return false,
                    (1, 0) => {}
                    (1, _) => {
                        free.iter().for_each(|&f| s[f] = 0);
                        changed = true;
                    }
                    (0, 1) => {
                        s[free[0]] = 1;
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return true;
            }
        }
    }

    /// Lower bound on the objective of every completion of `s`.
    fn bound(&self, s: &[i8]) -> f64 {
        let p = self.p;
        let mut b = p.constant;
        for (i, &c) in p.linear.iter().enumerate() {
            match s[i] {
                1 => b += c,
                FREE => b += c.min(0.0),
                _ => {}
            }
        }
        // Creases already made, or unavoidable because every remaining partner differs.
        let mut creases = 0usize;
        for fs in &p.edges {
            let sel: Vec<usize> = fs.iter().copied().filter(|&f| s[f] == 1).collect();
            match sel.len() {
                2 if p.sources[sel[0]] != p.sources[sel[1]] => creases += 1,
                1 => {
                    let mut free = fs.iter().filter(|&&f| s[f] == FREE).peekable();
                    if free.peek().is_some() && free.all(|&f| p.sources[f] != p.sources[sel[0]]) {
                        creases += 1;
                    }
                }
                _ => {}
            }
        }
        b += p.crease_weight * creases as f64;
        // Rows still needing a selection, taken greedily with disjoint free variables: each
        // costs at least its cheapest non-negative member.
        let mut used = vec![false; s.len()];
        let needs_one = p.groups.iter().filter(|g| g.iter().all(|&f| s[f] != 1)).chain(p.edges.iter().filter(|fs| fs.iter().filter(|&&f| s[f] == 1).count() == 1));
        for row in needs_one {
            let free: Vec<usize> = row.iter().copied().filter(|&f| s[f] == FREE).collect();
            if free.is_empty() || free.iter().any(|&f| used[f]) {
                continue;
            }
            b += free.iter().map(|&f| p.linear[f].max(0.0)).fold(f64::INFINITY, f64::min);
            free.iter().for_each(|&f| used[f] = true);
        }
        b
    }

    fn next_var(&self, s: &[i8]) -> Option<usize> {
        self.order.iter().copied().find(|&i| s[i] == FREE)
    }
}

fn assignment(s: &[i8]) -> Vec<bool> {
    s.iter().map(|&v| v == 1).collect()
}

struct Incumbent {
    x: Vec<bool>,
    obj: f64,
}

fn better(obj: f64, x: &[bool], inc: &Option<Incumbent>) -> bool {
    match inc {
        None => true,
        Some(b) => obj < b.obj - TIE_TOLERANCE || (obj <= b.obj + TIE_TOLERANCE && x < b.x.as_slice()),
    }
}

#[derive(PartialEq)]
struct Node {
    bound: f64,
    seq: u64,
    state: Vec<i8>,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on bound, then FIFO.
        other.bound.total_cmp(&self.bound).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Depth-first dive preferring each variable's cheaper value; yields a first incumbent.
fn dive(ctx: &Ctx, s: Vec<i8>, nodes: &mut u64, deadline: Instant) -> Option<Vec<bool>> {
    *nodes += 1;
    if *nodes > DIVE_NODE_LIMIT || Instant::now() >= deadline {
        return None;
    }
    let Some(v) = ctx.next_var(&s) else {
        let x = assignment(&s);
        return ctx.p.is_feasible(&x).then_some(x);
    };
    let first = if ctx.p.linear[v] < 0.0 { 1 } else { 0 };
    for val in [first, 1 - first] {
        let mut c = s.clone();
        c[v] = val;
        if ctx.propagate(&mut c) {
            if let Some(x) = dive(ctx, c, nodes, deadline) {
                return Some(x);
            }
        }
        if *nodes > DIVE_NODE_LIMIT {
            return None;
        }
    }
    None
}

/// Solves the program exactly (best-first branch and bound). Ties within
/// [`TIE_TOLERANCE`] go to the lexicographically smallest assignment.
pub fn solve(p: &SelectionProblem, time_limit: Duration) -> Result<Solution> {
    let start = Instant::now();
    let deadline = start + time_limit;
    let n = p.num_faces();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p.linear[b].abs().total_cmp(&p.linear[a].abs()).then(a.cmp(&b)));
    let ctx = Ctx { p, order };

    let mut root: Vec<i8> = p.fixed.iter().map(|f| f.map_or(FREE, |v| v as i8)).collect();
    if !ctx.propagate(&mut root) {
        return Err(Error::Infeasible);
    }
    let mut nodes = 0u64;
    let mut best: Option<Incumbent> = dive(&ctx, root.clone(), &mut nodes, deadline).map(|x| Incumbent { obj: p.objective(&x), x });

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node { bound: ctx.bound(&root), seq, state: root });
    let mut timed_out = false;
    while let Some(node) = heap.pop() {
        if let Some(b) = &best {
            if node.bound > b.obj + TIE_TOLERANCE {
                break;
            }
        }
        if Instant::now() >= deadline {
            timed_out = true;
            break;
        }
        nodes += 1;
        let Some(v) = ctx.next_var(&node.state) else {
            let x = assignment(&node.state);
            if p.is_feasible(&x) {
                let obj = p.objective(&x);
                if better(obj, &x, &best) {
                    best = Some(Incumbent { x, obj });
                }
            }
            continue;
        };
        for val in [1i8, 0] {
            let mut c = node.state.clone();
            c[v] = val;
            if !ctx.propagate(&mut c) {
                continue;
            }
            if ctx.next_var(&c).is_none() {
                let x = assignment(&c);
                if p.is_feasible(&x) {
                    let obj = p.objective(&x);
                    if better(obj, &x, &best) {
                        best = Some(Incumbent { x, obj });
                    }
                }
                continue;
            }
            let bound = ctx.bound(&c);
            if best.as_ref().map_or(true, |b| bound <= b.obj + TIE_TOLERANCE) {
                seq += 1;
                heap.push(Node { bound, seq, state: c });
            }
        }
    }
    match best {
        Some(b) => Ok(Solution { assignment: b.x, objective: b.obj, status: if timed_out { SolveStatus::Timeout } else { SolveStatus::Optimal }, nodes }),
        None if timed_out => Err(Error::Timeout),
        None => Err(Error::Infeasible),
    }
}
