//! Agent-level simulation of the shuffle protocol.
//!
//! Every node keeps an explicit cache. Nodes are split into `gmax + 1`
//! delay groups; in each round the delay-0 nodes pick a uniformly random
//! peer among the other `N − 1` nodes. A shuffle happens only if the peer
//! is passive and no other active node picked it in the same round;
//! every other attempt is a collision and moves no data. Active nodes
//! reset their delay to `gmax` whether or not their attempt succeeded.
//!
//! The fresh item has id `n_items`, the largest id in the network, so it
//! is always the last element of a sorted cache.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::error::Result;
use crate::exec::{map_indexed, Execution};
use crate::gossip::GossipParams;
use crate::rng::{derive_seed, SimRng};
use crate::stats::SimStats;

pub type ItemId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    /// Sorted, duplicate-free.
    pub cache: Vec<ItemId>,
    pub seen_new: bool,
    pub delay: u32,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub round: u64,
    pub params: GossipParams,
    hits: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundReport {
    /// Nodes holding the fresh item.
    pub replication: u64,
    /// Nodes that have ever held it.
    pub coverage: u64,
    pub shuffles: u64,
    pub collisions: u64,
}

fn difference(x: &[ItemId], y: &[ItemId]) -> Vec<ItemId> {
    let mut out = Vec::with_capacity(x.len());
    let mut j = 0;
    for &a in x {
        while j < y.len() && y[j] < a {
            j += 1;
        }
        if j == y.len() || y[j] != a {
            out.push(a);
        }
    }
    out
}

fn union(x: &[ItemId], y: &[ItemId]) -> Vec<ItemId> {
    let mut out = Vec::with_capacity(x.len() + y.len());
    let (mut i, mut j) = (0, 0);
    while i < x.len() && j < y.len() {
        match x[i].cmp(&y[j]) {
            std::cmp::Ordering::Less => {
                out.push(x[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(y[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(x[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&x[i..]);
    out.extend_from_slice(&y[j..]);
    out
}

/// Exchange given both selections, listed in the order they were drawn.
///
/// Each side drops what it sent unless it also received it, and adds what
/// it received and did not yet have:
/// `base_A = (c_A ∖ (s_A ∖ s_B)) ∪ (s_B ∖ c_A)`. Slots left free below
/// `capacity` (received items it already held) are then refilled with the
/// items it sent, in selection order, so a sent item can survive on both
/// sides. Symmetrically for `B`. Caches are sorted; `sel_a ⊆ cache_a`,
/// `sel_b ⊆ cache_b`.
pub fn apply_shuffle(
    cache_a: &[ItemId],
    cache_b: &[ItemId],
    sel_a: &[ItemId],
    sel_b: &[ItemId],
    capacity: usize,
) -> (Vec<ItemId>, Vec<ItemId>) {
    let mut sorted_a = sel_a.to_vec();
    sorted_a.sort_unstable();
    let mut sorted_b = sel_b.to_vec();
    sorted_b.sort_unstable();
    (
        item_keep(cache_a, sel_a, &sorted_a, &sorted_b, capacity),
        item_keep(cache_b, sel_b, &sorted_b, &sorted_a, capacity),
    )
}

fn item_keep(
    cache: &[ItemId],
    sent: &[ItemId],
    sent_sorted: &[ItemId],
    received: &[ItemId],
    capacity: usize,
) -> Vec<ItemId> {
    let gone = difference(sent_sorted, received);
    let mut out = union(&difference(cache, &gone), &difference(received, cache));
    let free = capacity.saturating_sub(out.len());
    if free > 0 {
        let mut back: Vec<ItemId> = sent
            .iter()
            .copied()
            .filter(|x| gone.binary_search(x).is_ok())
            .take(free)
            .collect();
        back.sort_unstable();
        out = union(&out, &back);
    }
    out
}

/// Items picked uniformly without replacement, in draw order.
fn select<R: Rng + ?Sized>(cache: &[ItemId], s: usize, rng: &mut R) -> Vec<ItemId> {
    let s = s.min(cache.len());
    index::sample(rng, cache.len(), s)
        .into_iter()
        .map(|i| cache[i])
        .collect()
}

/// One shuffle: both sides pick `s` items uniformly without replacement
/// (all of their cache if it holds fewer), then [`apply_shuffle`].
pub fn shuffle_pair<R: Rng + ?Sized>(
    cache_a: &[ItemId],
    cache_b: &[ItemId],
    s: usize,
    capacity: usize,
    rng: &mut R,
) -> (Vec<ItemId>, Vec<ItemId>) {
    let sel_a = select(cache_a, s, rng);
    let sel_b = select(cache_b, s, rng);
    apply_shuffle(cache_a, cache_b, &sel_a, &sel_b, capacity)
}

impl Network {
    pub fn fresh_item(&self) -> ItemId {
        self.params.n_items
    }

    pub fn holds_fresh(&self, node: &Node) -> bool {
        node.cache.last() == Some(&self.fresh_item())
    }

    pub fn replication(&self) -> u64 {
        self.nodes.iter().filter(|n| self.holds_fresh(n)).count() as u64
    }

    pub fn coverage(&self) -> u64 {
        self.nodes.iter().filter(|n| n.seen_new).count() as u64
    }

    /// Number of nodes per delay value.
    pub fn delay_histogram(&self) -> Vec<u64> {
        let mut h = vec![0; self.params.gmax as usize + 1];
        for n in &self.nodes {
            h[n.delay as usize] += 1;
        }
        h
    }
}

/// Full caches of `c` uniform items, round-robin delays over a random
/// permutation, and the fresh item replacing one random item of one
/// random node.
pub fn init_network_with<R: Rng + ?Sized>(p: &GossipParams, rng: &mut R) -> Result<Network> {
    p.validate()?;
    let population = p.population as usize;
    let mut nodes: Vec<Node> = (0..population)
        .map(|_| {
            let mut cache: Vec<ItemId> =
                index::sample(rng, p.n_items as usize, p.cache_size as usize)
                    .into_iter()
                    .map(|i| i as ItemId)
                    .collect();
            cache.sort_unstable();
            Node {
                cache,
                seen_new: false,
                delay: 0,
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..population).collect();
    order.shuffle(rng);
    let groups = p.gmax + 1;
    for (pos, &i) in order.iter().enumerate() {
        nodes[i].delay = pos as u32 % groups;
    }

    let origin = rng.random_range(0..population);
    let node = &mut nodes[origin];
    let victim = rng.random_range(0..node.cache.len());
    node.cache.remove(victim);
    node.cache.push(p.n_items);
    node.seen_new = true;

    Ok(Network {
        nodes,
        round: 0,
        params: *p,
        hits: vec![0; population],
    })
}

pub fn init_network(p: &GossipParams, seed: u64) -> Result<Network> {
    init_network_with(p, &mut SimRng::seed_from_u64(seed))
}

/// One synchronous round.
pub fn run_round<R: Rng + ?Sized>(net: &mut Network, rng: &mut R) -> RoundReport {
    let population = net.nodes.len();
    let s = net.params.shuffle_size as usize;
    let capacity = net.params.cache_size as usize;
    let mut report = RoundReport::default();

    let actives: Vec<usize> = (0..population)
        .filter(|&i| net.nodes[i].delay == 0)
        .collect();
    let mut targets = Vec::with_capacity(actives.len());
    net.hits.iter_mut().for_each(|h| *h = 0);
    if population > 1 {
        for &a in &actives {
            let mut t = rng.random_range(0..population - 1);
            if t >= a {
                t += 1;
            }
            net.hits[t] += 1;
            targets.push(t);
        }
    } else {
        report.collisions = actives.len() as u64;
    }

    for (&a, &b) in actives.iter().zip(&targets) {
        if net.nodes[b].delay > 0 && net.hits[b] == 1 {
            let (ca, cb) = shuffle_pair(&net.nodes[a].cache, &net.nodes[b].cache, s, capacity, rng);
            net.nodes[a].cache = ca;
            net.nodes[b].cache = cb;
            report.shuffles += 1;
        } else {
            report.collisions += 1;
        }
    }

    let fresh = net.fresh_item();
    let gmax = net.params.gmax;
    for node in &mut net.nodes {
        if node.cache.last() == Some(&fresh) {
            node.seen_new = true;
            report.replication += 1;
        }
        if node.seen_new {
            report.coverage += 1;
        }
        node.delay = if node.delay == 0 {
            gmax
        } else {
            node.delay - 1
        };
    }
    net.round += 1;
    assert!(
        report.replication >= 1,
        "fresh item vanished in round {}",
        net.round
    );
    report
}

/// Per-round counts of one run, index 0 being the state after
/// initialisation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunTrace {
    pub replication: Vec<u64>,
    pub coverage: Vec<u64>,
    pub shuffles: u64,
    pub collisions: u64,
    pub attempts: u64,
}

pub fn run_trace(p: &GossipParams, t_max: usize, seed: u64) -> Result<RunTrace> {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut net = init_network_with(p, &mut rng)?;
    let mut trace = RunTrace {
        replication: vec![net.replication()],
        coverage: vec![net.coverage()],
        shuffles: 0,
        collisions: 0,
        attempts: 0,
    };
    for _ in 0..t_max {
        let r = run_round(&mut net, &mut rng);
        trace.replication.push(r.replication);
        trace.coverage.push(r.coverage);
        trace.shuffles += r.shuffles;
        trace.collisions += r.collisions;
        trace.attempts += r.shuffles + r.collisions;
    }
    Ok(trace)
}

/// All runs of an experiment, run `r` seeded with `derive_seed(base_seed, r)`.
pub fn run_traces(
    p: &GossipParams,
    t_max: usize,
    runs: usize,
    base_seed: u64,
    exec: Execution,
) -> Result<Vec<RunTrace>> {
    p.validate()?;
    map_indexed(exec, runs, |r| {
        run_trace(p, t_max, derive_seed(base_seed, r as u64))
    })
    .into_iter()
    .collect()
}

/// Replication and coverage fractions, averaged over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStats {
    pub replication: SimStats,
    pub coverage: SimStats,
}

pub fn run_experiment(
    p: &GossipParams,
    t_max: usize,
    runs: usize,
    base_seed: u64,
) -> Result<AgentStats> {
    run_experiment_with(p, t_max, runs, base_seed, Execution::default())
}

pub fn run_experiment_with(
    p: &GossipParams,
    t_max: usize,
    runs: usize,
    base_seed: u64,
    exec: Execution,
) -> Result<AgentStats> {
    assert!(runs >= 1, "at least one run is required");
    let traces = run_traces(p, t_max, runs, base_seed, exec)?;
    let n = p.population as f64;
    let frac = |series: &Vec<u64>| series.iter().map(|&x| x as f64 / n).collect::<Vec<f64>>();
    let rep: Vec<Vec<f64>> = traces.iter().map(|t| frac(&t.replication)).collect();
    let cov: Vec<Vec<f64>> = traces.iter().map(|t| frac(&t.coverage)).collect();
    Ok(AgentStats {
        replication: SimStats::from_runs(&rep, base_seed),
        coverage: SimStats::from_runs(&cov, base_seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(population: u64, gmax: u32) -> GossipParams {
        GossipParams::new(500, 100, 50, gmax, population).unwrap()
    }

    #[test]
    fn hand_traced_shuffle() {
        let (a, b) = apply_shuffle(&[1, 2], &[2, 3], &[1], &[3], 2);
        assert_eq!(a, vec![2, 3]);
        assert_eq!(b, vec![1, 2]);
    }

    #[test]
    fn identical_selections_change_nothing() {
        let (a, b) = apply_shuffle(&[1, 4, 6], &[4, 5, 6], &[6, 4], &[4, 6], 3);
        assert_eq!(a, vec![1, 4, 6]);
        assert_eq!(b, vec![4, 5, 6]);
    }

    #[test]
    fn freed_slots_keep_sent_items_in_draw_order() {
        // A receives 3, which it already holds, so one slot frees up and the
        // first item it sent (1) stays.
        let (a, b) = apply_shuffle(&[1, 2, 3], &[3, 4, 5], &[1, 2], &[3, 4], 3);
        assert_eq!(a, vec![1, 3, 4]);
        assert_eq!(b, vec![1, 2, 5]);
        let (a, _) = apply_shuffle(&[1, 2, 3], &[3, 4, 5], &[2, 1], &[3, 4], 3);
        assert_eq!(a, vec![2, 3, 4]);
    }

    #[test]
    fn holder_outcomes_match_pair_probabilities() {
        // A holds the item (id 500), B does not; n = 500, c = 100, s = 50.
        let mut rng = SimRng::seed_from_u64(17);
        let trials = 20_000;
        let (mut moved, mut both) = (0u32, 0u32);
        for _ in 0..trials {
            let mut a: Vec<ItemId> = index::sample(&mut rng, 500, 99)
                .into_iter()
                .map(|i| i as ItemId)
                .collect();
            a.push(500);
            a.sort_unstable();
            let mut b: Vec<ItemId> = index::sample(&mut rng, 500, 100)
                .into_iter()
                .map(|i| i as ItemId)
                .collect();
            b.sort_unstable();
            let (a2, b2) = shuffle_pair(&a, &b, 50, 100, &mut rng);
            match (a2.last() == Some(&500), b2.last() == Some(&500)) {
                (false, true) => moved += 1,
                (true, true) => both += 1,
                _ => {}
            }
        }
        let p_od = moved as f64 / trials as f64;
        let p_dd = both as f64 / trials as f64;
        assert!((p_od - 4.0 / 9.0).abs() < 0.015, "P(OD|DO) ≈ {p_od}");
        assert!((p_dd - 1.0 / 18.0).abs() < 0.01, "P(DD|DO) ≈ {p_dd}");
    }

    #[test]
    fn shuffle_with_short_cache_sends_everything() {
        let mut rng = SimRng::seed_from_u64(3);
        let (a, b) = shuffle_pair(&[7], &[1, 2, 3, 4], 3, 4, &mut rng);
        assert_eq!(union(&a, &b), vec![1, 2, 3, 4, 7]);
        assert!(a.len() <= 4 && b.len() <= 4);
        assert!(b.contains(&7));
    }

    #[test]
    fn initial_network() {
        let p = params(103, 4);
        let net = init_network(&p, 11).unwrap();
        assert!(net.nodes.iter().all(|n| n.cache.len() == 100));
        assert!(net
            .nodes
            .iter()
            .all(|n| n.cache.windows(2).all(|w| w[0] < w[1])));
        assert_eq!(net.replication(), 1);
        assert_eq!(net.coverage(), 1);
        let h = net.delay_histogram();
        assert!(h.iter().max().unwrap() - h.iter().min().unwrap() <= 1);
        assert_eq!(h.iter().sum::<u64>(), 103);
    }

    #[test]
    fn two_nodes_always_shuffle() {
        let p = GossipParams::new(20, 10, 5, 1, 2).unwrap();
        let mut rng = SimRng::seed_from_u64(5);
        let mut net = init_network_with(&p, &mut rng).unwrap();
        for _ in 0..50 {
            let r = run_round(&mut net, &mut rng);
            assert_eq!((r.shuffles, r.collisions), (1, 0));
        }
    }

    #[test]
    fn contested_passive_is_a_collision() {
        // Three nodes: two actives, one passive. Whenever both actives pick
        // the passive, nothing is exchanged.
        let p = GossipParams::new(20, 10, 5, 1, 3).unwrap();
        let mut rng = SimRng::seed_from_u64(8);
        let mut net = init_network_with(&p, &mut rng).unwrap();
        for (i, node) in net.nodes.iter_mut().enumerate() {
            node.delay = if i < 2 { 0 } else { 1 };
        }
        let mut seen_double = false;
        for _ in 0..200 {
            for (i, node) in net.nodes.iter_mut().enumerate() {
                node.delay = if i < 2 { 0 } else { 1 };
            }
            let before = net.nodes.clone();
            let r = run_round(&mut net, &mut rng);
            assert_eq!(r.shuffles + r.collisions, 2);
            if r.shuffles == 0 {
                seen_double = true;
                for (a, b) in before.iter().zip(&net.nodes) {
                    assert_eq!(a.cache, b.cache);
                }
            }
        }
        assert!(seen_double);
    }

    #[test]
    fn success_rate_matches_no_collision_probability() {
        let p = params(2500, 9);
        let trace = run_trace(&p, 200, 21).unwrap();
        let rate = trace.shuffles as f64 / trace.attempts as f64;
        assert!((rate - (-0.2f64).exp()).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn coverage_is_monotone_and_replication_positive() {
        let p = params(200, 3);
        for trace in run_traces(&p, 150, 4, 99, Execution::default()).unwrap() {
            assert!(trace.coverage.windows(2).all(|w| w[1] >= w[0]));
            assert!(trace.replication.iter().all(|&r| r >= 1));
            assert!(trace
                .replication
                .iter()
                .zip(&trace.coverage)
                .all(|(r, c)| r <= c));
        }
    }

    #[test]
    fn experiments_are_reproducible() {
        let p = params(150, 3);
        let a = run_experiment_with(&p, 40, 5, 1234, Execution::Sequential).unwrap();
        let b = run_experiment_with(&p, 40, 5, 1234, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!((a.replication.mean[0] - 1.0 / 150.0).abs() < 1e-15);
    }
}
