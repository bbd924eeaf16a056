//! Exhaustive exploration of a single agent's state machine.
//!
//! [`enumerate_step`] runs one step under every combination of coin outcomes,
//! and [`reachability`] builds the graph of `(state, action, phase position)`
//! over all feedback rows to check that every reachable node can reach every
//! other one.

use std::collections::{HashMap, VecDeque};

use super::Agent;
use crate::model::{Action, MaskRow};
use crate::rng::Coins;

/// Coins that replay a script of branch indices and record each branch point.
struct ScriptedCoins {
    script: Vec<usize>,
    arities: Vec<usize>,
    pos: usize,
    prob: f64,
}

impl ScriptedCoins {
    fn next(&mut self, arity: usize) -> usize {
        if self.pos == self.script.len() {
            self.script.push(0);
        }
        self.arities.push(arity);
        let c = self.script[self.pos];
        self.pos += 1;
        c
    }
}

impl Coins for ScriptedCoins {
    fn bernoulli(&mut self, _tag: u64, p: f64) -> bool {
        if p <= 0.0 {
            return false;
        }
        if p >= 1.0 {
            return true;
        }
        let hit = self.next(2) == 1;
        self.prob *= if hit { p } else { 1.0 - p };
        hit
    }

    fn choose(&mut self, _tag: u64, len: usize) -> usize {
        if len <= 1 {
            return 0;
        }
        self.prob /= len as f64;
        self.next(len)
    }
}

/// Every outcome of one step with its probability given the feedback row.
/// Outcomes reached along different coin paths are listed separately.
pub fn enumerate_step<A: Agent>(
    agent: &A,
    state: &A::State,
    row: &MaskRow,
    round: u64,
) -> Vec<(A::State, Action, f64)> {
    let mut out = Vec::new();
    let mut script = Vec::new();
    loop {
        let mut coins = ScriptedCoins { script, arities: Vec::new(), pos: 0, prob: 1.0 };
        let mut st = state.clone();
        let a = agent.step(&mut st, row, round, &mut coins);
        out.push((st, a, coins.prob));
        let ScriptedCoins { script: mut s, arities, pos, .. } = coins;
        s.truncate(pos);
        // Advance the odometer from the deepest branch point.
        loop {
            let depth = s.len();
            match s.last_mut() {
                None => return out,
                Some(last) if *last + 1 < arities[depth - 1] => {
                    *last += 1;
                    break;
                }
                Some(_) => {
                    s.pop();
                }
            }
        }
        script = s;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReachabilityReport {
    pub nodes: usize,
    pub edges: usize,
    /// Reachable nodes from which the first start node cannot be reached.
    pub cannot_return: usize,
    /// Reachable nodes the first start node cannot reach.
    pub not_reached_from_start: usize,
}

impl ReachabilityReport {
    pub fn strongly_connected(&self) -> bool {
        self.cannot_return == 0 && self.not_reached_from_start == 0
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("state graph exceeds {cap} nodes")]
pub struct GraphTooLarge {
    pub cap: usize,
}

/// Explores all nodes reachable from the phase-start nodes of every action,
/// letting each round's feedback row range over all `2^k` rows (each has
/// positive probability under sigmoid noise).
pub fn reachability<A: Agent>(agent: &A, k: usize, cap: usize) -> Result<ReachabilityReport, GraphTooLarge> {
    let len = agent.phase_length();
    let mut index: HashMap<(A::State, Action, u64), u32> = HashMap::new();
    let mut nodes: Vec<(A::State, Action, u64)> = Vec::new();
    let mut adj: Vec<Vec<u32>> = Vec::new();
    let mut queue = VecDeque::new();

    let mut intern = |key: (A::State, Action, u64),
                      nodes: &mut Vec<(A::State, Action, u64)>,
                      adj: &mut Vec<Vec<u32>>,
                      queue: &mut VecDeque<u32>|
     -> Result<u32, GraphTooLarge> {
        if let Some(&i) = index.get(&key) {
            return Ok(i);
        }
        if nodes.len() >= cap {
            return Err(GraphTooLarge { cap });
        }
        let i = nodes.len() as u32;
        index.insert(key.clone(), i);
        nodes.push(key);
        adj.push(Vec::new());
        queue.push_back(i);
        Ok(i)
    };

    let starts = std::iter::once(Action::Idle).chain((0..k).map(Action::Work));
    for a in starts {
        intern((agent.initial_state(a), a, 0), &mut nodes, &mut adj, &mut queue)?;
    }
    while let Some(i) = queue.pop_front() {
        let (state, _, pos) = nodes[i as usize].clone();
        let round = pos + 1;
        let mut succ = Vec::new();
        for lack in 0..(1u64 << k) {
            let row = MaskRow { lack, k };
            for (st, a, p) in enumerate_step(agent, &state, &row, round) {
                if p > 0.0 {
                    succ.push(intern((st, a, round % len), &mut nodes, &mut adj, &mut queue)?);
                }
            }
        }
        succ.sort_unstable();
        succ.dedup();
        adj[i as usize] = succ;
    }

    let n = nodes.len();
    let edges = adj.iter().map(Vec::len).sum();
    let forward = bfs(&adj, 0);
    let mut radj = vec![Vec::new(); n];
    for (u, vs) in adj.iter().enumerate() {
        for &v in vs {
            radj[v as usize].push(u as u32);
        }
    }
    let backward = bfs(&radj, 0);
    Ok(ReachabilityReport {
        nodes: n,
        edges,
        cannot_return: backward.iter().filter(|&&b| !b).count(),
        not_reached_from_start: forward.iter().filter(|&&b| !b).count(),
    })
}

fn bfs(adj: &[Vec<u32>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v as usize] {
                seen[v as usize] = true;
                queue.push_back(v as usize);
            }
        }
    }
    seen
}
