//! Population models of the gossip shuffle protocol.
//!
//! All kernels are built from the pairwise exchange probabilities of an
//! active/passive pair ([`PairProbs`]) and a no-collision factor. The
//! full models keep one state per gossip delay and evaluate the
//! no-collision factor from the current active fraction; the aggregated
//! models (two-, three- and six-state) use the constant
//! `e^{-2/(gmax+1)}`.
//!
//! State orderings:
//!
//! | kind             | states                                    |
//! |------------------|-------------------------------------------|
//! | two-state        | O, D                                      |
//! | three-state      | O, D, I                                   |
//! | six-state        | O, D, I, FD, PD, LD                       |
//! | full-replication | O0..O_gmax, D0..D_gmax                    |
//! | full-coverage    | O0..O_gmax, D0..D_gmax, I0..I_gmax        |

use std::fmt;
use std::str::FromStr;

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::model::{Measure, PopulationModel};

/// Protocol parameters shared by every kernel and simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GossipParams {
    /// Number of distinct data items already in the network.
    pub n_items: u32,
    /// Cache size.
    pub cache_size: u32,
    /// Items exchanged per shuffle.
    pub shuffle_size: u32,
    /// Maximal gossip delay; nodes are active every `gmax + 1` rounds.
    pub gmax: u32,
    /// Number of nodes.
    pub population: u64,
}

impl GossipParams {
    pub fn new(
        n_items: u32,
        cache_size: u32,
        shuffle_size: u32,
        gmax: u32,
        population: u64,
    ) -> Result<Self> {
        let p = GossipParams {
            n_items,
            cache_size,
            shuffle_size,
            gmax,
            population,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let GossipParams {
            n_items: n,
            cache_size: c,
            shuffle_size: s,
            gmax,
            population,
        } = *self;
        if s == 0 || s > c || c > n {
            return Err(Error::InvalidParams(format!(
                "need 0 < s <= c <= n_items, got s={s}, c={c}, n_items={n}"
            )));
        }
        if s == n {
            return Err(Error::InvalidParams(format!(
                "s = n_items = {n} makes the exchange probabilities singular"
            )));
        }
        if gmax == 0 {
            return Err(Error::InvalidParams("gmax must be at least 1".into()));
        }
        if population == 0 {
            return Err(Error::InvalidParams("population must be positive".into()));
        }
        Ok(())
    }
}

/// Conditional outcome probabilities `P(A'B'|AB)` of one shuffle between
/// an active node (first letter) and a passive node (second letter); `D`
/// means the node holds the fresh item, `O` that it does not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairProbs {
    pub p_od_do: f64,
    pub p_do_od: f64,
    pub p_od_od: f64,
    pub p_do_do: f64,
    pub p_dd_od: f64,
    pub p_dd_do: f64,
    pub p_od_dd: f64,
    pub p_do_dd: f64,
    pub p_dd_dd: f64,
    pub p_oo_oo: f64,
}

impl PairProbs {
    /// `true` when `s = c`: every shuffle hands over the whole cache, so an
    /// item never stays on both sides of an O/D pair.
    pub fn is_degenerate(&self) -> bool {
        self.p_od_od == 0.0
    }
}

pub fn pair_probs(p: &GossipParams) -> Result<PairProbs> {
    p.validate()?;
    let n = f64::from(p.n_items);
    let c = f64::from(p.cache_size);
    let s = f64::from(p.shuffle_size);
    let swap = (s / c) * (n - c) / (n - s);
    let stay = (c - s) / c;
    let copy = (s / c) * (c - s) / (n - s);
    let lose_one = (s / c) * ((c - s) / c) * (n - c) / (n - s);
    Ok(PairProbs {
        p_od_do: swap,
        p_do_od: swap,
        p_od_od: stay,
        p_do_do: stay,
        p_dd_od: copy,
        p_dd_do: copy,
        p_od_dd: lose_one,
        p_do_dd: lose_one,
        p_dd_dd: 1.0 - 2.0 * lose_one,
        p_oo_oo: 1.0,
    })
}

/// No-collision probability of the aggregated models, `e^{-2/(gmax+1)}`.
pub fn noc_aggregated(gmax: u32) -> f64 {
    (-2.0 / (f64::from(gmax) + 1.0)).exp()
}

/// No-collision probability `e^{-2(m_O0 + m_D0)}` from the active
/// fractions without and with the item.
pub fn noc_full<S: Scalar>(active_o: S, active_d: S) -> S {
    (S::constant(-2.0) * (active_o + active_d)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    TwoState,
    ThreeState,
    SixState,
    FullReplication,
    FullCoverage,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::TwoState,
        ModelKind::ThreeState,
        ModelKind::SixState,
        ModelKind::FullReplication,
        ModelKind::FullCoverage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TwoState => "two-state",
            ModelKind::ThreeState => "three-state",
            ModelKind::SixState => "six-state",
            ModelKind::FullReplication => "full-replication",
            ModelKind::FullCoverage => "full-coverage",
        }
    }

    pub fn n_states(self, gmax: u32) -> usize {
        let groups = gmax as usize + 1;
        match self {
            ModelKind::TwoState => 2,
            ModelKind::ThreeState => 3,
            ModelKind::SixState => 6,
            ModelKind::FullReplication => 2 * groups,
            ModelKind::FullCoverage => 3 * groups,
        }
    }

    pub fn state_names(self, gmax: u32) -> Vec<String> {
        let per_delay = |prefixes: &[&str]| {
            prefixes
                .iter()
                .flat_map(|p| (0..=gmax).map(move |d| format!("{p}{d}")))
                .collect()
        };
        let fixed = |names: &[&str]| names.iter().map(|s| s.to_string()).collect();
        match self {
            ModelKind::TwoState => fixed(&["O", "D"]),
            ModelKind::ThreeState => fixed(&["O", "D", "I"]),
            ModelKind::SixState => fixed(&["O", "D", "I", "FD", "PD", "LD"]),
            ModelKind::FullReplication => per_delay(&["O", "D"]),
            ModelKind::FullCoverage => per_delay(&["O", "D", "I"]),
        }
    }

    pub fn has_coverage(self) -> bool {
        !matches!(self, ModelKind::TwoState | ModelKind::FullReplication)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown model kind `{s}`")))
    }
}

/// A concrete gossip population model.
#[derive(Debug, Clone)]
pub struct GossipModel {
    kind: ModelKind,
    params: GossipParams,
    probs: PairProbs,
    noc: f64,
}

pub fn build_model(kind: ModelKind, params: &GossipParams) -> Result<GossipModel> {
    Ok(GossipModel {
        kind,
        params: *params,
        probs: pair_probs(params)?,
        noc: noc_aggregated(params.gmax),
    })
}

/// Named transition probabilities of the six-state model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SixStateRates<S> {
    pub get_exc: S,
    pub get_rep: S,
    pub loose_exc: S,
    pub loose_rep: S,
}

/// `get` and `loose` of the aggregated two-/three-state models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRates<S> {
    pub get: S,
    pub loose: S,
}

/// The four step/reset functions of the full models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayChainRates<S> {
    pub o_getd_reset: S,
    pub o_getd_step: S,
    pub d_loss_reset: S,
    pub d_loss_step: S,
}

impl GossipModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn params(&self) -> &GossipParams {
        &self.params
    }

    pub fn probs(&self) -> &PairProbs {
        &self.probs
    }

    fn groups(&self) -> usize {
        self.params.gmax as usize + 1
    }

    /// Index of a named state (`"PD"`, `"O2"`, ...).
    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names().iter().position(|s| s == name)
    }

    /// `get`/`loose` for the aggregated models; `m = (O, D[, I])`.
    pub fn aggregate_rates<S: Scalar>(&self, m: &[S]) -> AggregateRates<S> {
        let g = f64::from(self.params.gmax);
        let passive = S::constant(g / (g + 1.0));
        let active = S::constant(1.0 / (g + 1.0));
        let pr = &self.probs;
        let noc = S::constant(self.noc);
        let (m_o, m_d) = (m[0], m[1]);
        let m_uncovered = if m.len() > 2 { m_o + m[2] } else { m_o };

        let ogs = active * m_d * S::constant(pr.p_od_do + pr.p_dd_do) * noc;
        let dls =
            active * (m_uncovered * S::constant(pr.p_do_od) + m_d * S::constant(pr.p_do_dd)) * noc;
        let ogr = passive * m_d * S::constant(pr.p_do_od + pr.p_dd_od) * noc;
        // Written with P(DO|DD) as in the source formula; it equals P(OD|DD).
        let dlr =
            passive * (m_uncovered * S::constant(pr.p_od_do) + m_d * S::constant(pr.p_do_dd)) * noc;

        AggregateRates {
            get: passive * ogs + active * ogr,
            loose: passive * dls + active * dlr,
        }
    }

    /// Split transition functions of the six-state model.
    pub fn six_state_rates<S: Scalar>(&self, m: &[S]) -> SixStateRates<S> {
        let g = f64::from(self.params.gmax);
        let factor = S::constant(2.0 * g / ((g + 1.0) * (g + 1.0)) * self.noc);
        let pr = &self.probs;
        let holders = m[1] + m[4];
        let others = m[0] + m[2] + m[5] + m[3];
        SixStateRates {
            get_exc: factor * holders * S::constant(pr.p_od_do),
            get_rep: factor * holders * S::constant(pr.p_dd_do),
            loose_exc: factor * others * S::constant(pr.p_od_do),
            loose_rep: factor * holders * S::constant(pr.p_do_dd),
        }
    }

    /// Step/reset functions of the full models.
    pub fn delay_chain_rates<S: Scalar>(&self, m: &[S]) -> DelayChainRates<S> {
        let groups = self.groups();
        let o = |d: usize| m[d];
        let dd = |d: usize| m[groups + d];
        let covered = self.kind == ModelKind::FullCoverage;
        let i = |d: usize| {
            if covered {
                m[2 * groups + d]
            } else {
                S::zero()
            }
        };

        let mut passive_o = S::zero();
        let mut passive_d = S::zero();
        for d in 1..groups {
            passive_o += o(d) + i(d);
            passive_d += dd(d);
        }
        let active_o = o(0) + i(0);
        let active_d = dd(0);
        let noc = noc_full(active_o, active_d);
        let pr = &self.probs;

        DelayChainRates {
            o_getd_reset: passive_d * S::constant(pr.p_do_od + pr.p_dd_od) * noc,
            o_getd_step: active_d * S::constant(pr.p_od_do + pr.p_dd_do) * noc,
            d_loss_reset: passive_o * S::constant(pr.p_od_do) * noc
                + passive_d * S::constant(pr.p_od_dd) * noc,
            d_loss_step: active_o * S::constant(pr.p_do_od) * noc
                + active_d * S::constant(pr.p_do_dd) * noc,
        }
    }

    pub fn replication_measure(&self) -> Measure {
        let n = self.n_states();
        let mut w = vec![0.0; n];
        match self.kind {
            ModelKind::TwoState | ModelKind::ThreeState => w[1] = 1.0,
            ModelKind::SixState => {
                w[1] = 1.0;
                w[4] = 1.0;
            }
            ModelKind::FullReplication | ModelKind::FullCoverage => {
                let g = self.groups();
                w[g..2 * g].fill(1.0);
            }
        }
        Measure::Linear(w)
    }

    pub fn coverage_measure(&self) -> Result<Measure> {
        let n = self.n_states();
        let w = match self.kind {
            ModelKind::TwoState | ModelKind::FullReplication => {
                return Err(Error::MeasureUnavailable {
                    measure: "coverage",
                    kind: self.kind.name(),
                })
            }
            ModelKind::ThreeState => vec![1.0, 1.0, 0.0],
            ModelKind::SixState => vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0],
            ModelKind::FullCoverage => {
                let g = self.groups();
                let mut w = vec![1.0; n];
                w[2 * g..].fill(0.0);
                w
            }
        };
        Ok(Measure::Linear(w))
    }
}

impl PopulationModel for GossipModel {
    fn n_states(&self) -> usize {
        self.kind.n_states(self.params.gmax)
    }

    fn state_names(&self) -> Vec<String> {
        self.kind.state_names(self.params.gmax)
    }

    fn fill_kernel<S: Scalar>(&self, m: &[S], k: &mut [S]) {
        let n = self.n_states();
        let one = S::one();
        let mut set = |i: usize, j: usize, v: S| k[i * n + j] = v;
        match self.kind {
            ModelKind::TwoState | ModelKind::ThreeState => {
                let AggregateRates { get, loose } = self.aggregate_rates(m);
                set(0, 0, one - get);
                set(0, 1, get);
                set(1, 0, loose);
                set(1, 1, one - loose);
                if self.kind == ModelKind::ThreeState {
                    set(2, 1, get);
                    set(2, 2, one - get);
                }
            }
            ModelKind::SixState => {
                const O: usize = 0;
                const D: usize = 1;
                const I: usize = 2;
                const FD: usize = 3;
                const PD: usize = 4;
                const LD: usize = 5;
                let r = self.six_state_rates(m);
                set(O, D, r.get_rep);
                set(O, LD, r.get_exc);
                set(O, O, one - r.get_rep - r.get_exc);
                set(I, D, r.get_rep);
                set(I, FD, r.get_exc);
                set(I, I, one - r.get_rep - r.get_exc);
                set(D, O, r.loose_rep);
                set(D, D, one - r.loose_rep);
                for x in [FD, LD] {
                    set(x, D, r.get_rep);
                    set(x, O, r.loose_exc);
                    set(x, x, one - r.loose_exc - r.get_rep);
                }
                set(PD, PD, one);
            }
            ModelKind::FullReplication | ModelKind::FullCoverage => {
                let g = self.groups();
                let top = g - 1;
                let r = self.delay_chain_rates(m);
                let (o, d) = (0, g);
                // Uncovered classes: O always, I for the coverage model.
                let mut uncovered = vec![o];
                if self.kind == ModelKind::FullCoverage {
                    uncovered.push(2 * g);
                }
                for &base in &uncovered {
                    set(base, base + top, one - r.o_getd_reset);
                    set(base, d + top, r.o_getd_reset);
                    for delay in 1..g {
                        set(base + delay, base + delay - 1, one - r.o_getd_step);
                        set(base + delay, d + delay - 1, r.o_getd_step);
                    }
                }
                set(d, o + top, r.d_loss_reset);
                set(d, d + top, one - r.d_loss_reset);
                for delay in 1..g {
                    set(d + delay, o + delay - 1, r.d_loss_step);
                    set(d + delay, d + delay - 1, one - r.d_loss_step);
                }
            }
        }
    }
}
