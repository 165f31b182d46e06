//! Two richer action spaces layered on the core batch game.
//!
//! The labelled game lets arbitrageurs quote a separate target depth per
//! order label while a random bijection decides which execution slot each
//! label lands in; with no information about that ordering, the optimal
//! quote collapses to one price for every label, and
//! [`LabelledGame::diagonal_collapse`] verifies this numerically. The
//! labelled batch has no top-of-block arbitrage: label slots start after
//! nature's depth, so the collapsed game couples one fewer slot pair than
//! the core game.
//!
//! [`LimitSandwich`] prices the monopolist sandwich of a single
//! limit order. All-or-nothing fills make the payoff discontinuous at the
//! depth where the order stops executing, and undercutting the unwind price
//! can strictly beat passthrough pricing there.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::equilibrium::{solve_terms, EquilibriumSolution, InitialDepth, SlotTerm, SolverSettings};
use crate::error::{Error, Result};
use crate::market::{CostContext, MarketCurve};
use crate::orderflow::{normalized_atoms, SizeDistribution, SlotMarginal};
use crate::rng::replica_rng;

/// Order sizes indexed by label rather than execution position.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelFlow {
    /// Contents visible up front: one fixed size per label.
    Known(Vec<f64>),
    /// Same law for every label, drawn independently.
    Iid { dist: SizeDistribution, k: usize },
}

impl LabelFlow {
    pub fn k(&self) -> usize {
        match self {
            LabelFlow::Known(sizes) => sizes.len(),
            LabelFlow::Iid { k, .. } => *k,
        }
    }

    fn support(&self) -> (f64, f64) {
        match self {
            LabelFlow::Known(sizes) => sizes.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), &v| (lo.min(v), hi.max(v)),
            ),
            LabelFlow::Iid { dist, .. } => dist.support(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            LabelFlow::Known(sizes) => sizes.clone(),
            LabelFlow::Iid { dist, k } => (0..*k).map(|_| dist.sample(rng)).collect(),
        }
    }
}

/// Distribution of the map from labels to players.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelAllocation {
    /// One player backruns every label.
    Monopolist { player: usize, n: usize },
    /// Each label's winner drawn independently with these player weights.
    IidCategorical { weights: Vec<f64> },
    /// Fixed, known map from label to player.
    Known { map: Vec<usize>, n: usize },
}

impl LabelAllocation {
    pub fn n(&self) -> usize {
        match self {
            LabelAllocation::Monopolist { n, .. } => *n,
            LabelAllocation::IidCategorical { weights } => weights.len(),
            LabelAllocation::Known { n, .. } => *n,
        }
    }

    /// `P(alpha(h) = player)`, identical across labels except for `Known`.
    fn weight(&self, player: usize, label: usize) -> f64 {
        match self {
            LabelAllocation::Monopolist { player: p, .. } => {
                if *p == player {
                    1.0
                } else {
                    0.0
                }
            }
            LabelAllocation::IidCategorical { weights } => weights[player - 1],
            LabelAllocation::Known { map, .. } => {
                if map[label] == player {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> Vec<usize> {
        match self {
            LabelAllocation::Monopolist { player, .. } => vec![*player; k],
            LabelAllocation::IidCategorical { weights } => (0..k)
                .map(|_| {
                    let mut u: f64 = rng.gen();
                    for (i, w) in weights.iter().enumerate() {
                        u -= w;
                        if u <= 0.0 {
                            return i + 1;
                        }
                    }
                    weights.len()
                })
                .collect(),
            LabelAllocation::Known { map, .. } => map.clone(),
        }
    }
}

/// Law of the labelling bijection from labels to execution slots `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxLaw {
    UniformRandom,
    /// `slots[label]` is the fixed slot of each label.
    Known(Vec<usize>),
}

/// One realisation of everything outside the players' control.
#[derive(Debug, Clone, Serialize)]
pub struct LabelledDraw {
    pub x0: f64,
    /// Order size per label.
    pub orders: Vec<f64>,
    /// Winner per label.
    pub alloc: Vec<usize>,
    /// Slot per label, a bijection onto `1..=K`.
    pub idx: Vec<usize>,
}

/// Batch game where quotes are indexed by order label instead of slot.
///
/// The batch executes as `[order, backrun] * K` starting from nature's
/// depth: label `h` lands in slot `idx(h)`, its order hits whatever depth
/// the previous slot's backrun left (nature's `x0` for slot 1), and the
/// label's winner then moves the pool to their quote for `h`.
#[derive(Debug, Clone)]
pub struct LabelledGame {
    market: MarketCurve,
    flow: LabelFlow,
    alloc: LabelAllocation,
    idx: IdxLaw,
    x0: InitialDepth,
    x_oracle: f64,
    action_space: (f64, f64),
}

impl LabelledGame {
    pub fn new(
        market: MarketCurve,
        flow: LabelFlow,
        alloc: LabelAllocation,
        idx: IdxLaw,
        x0: InitialDepth,
        x_oracle: f64,
        action_space: (f64, f64),
    ) -> Result<Self> {
        let k = flow.k();
        if k == 0 {
            return Err(Error::invalid("at least one label required"));
        }
        if let LabelAllocation::Known { map, n } = &alloc {
            if map.len() != k {
                return Err(Error::invalid(format!(
                    "allocation maps {} labels, flow has {}",
                    map.len(),
                    k
                )));
            }
            if map.iter().any(|&p| p < 1 || p > *n) {
                return Err(Error::invalid("allocation map names an unknown player"));
            }
        }
        if let LabelAllocation::IidCategorical { weights } = &alloc {
            if weights.is_empty() || weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
                return Err(Error::invalid("allocation weights must lie in [0, 1]"));
            }
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "allocation weights sum to {total}, expected 1"
                )));
            }
        }
        if let IdxLaw::Known(slots) = &idx {
            if slots.len() != k {
                return Err(Error::invalid(format!(
                    "labelling fixes {} labels, flow has {}",
                    slots.len(),
                    k
                )));
            }
            let mut seen = vec![false; k];
            for &s in slots {
                if s < 1 || s > k || seen[s - 1] {
                    return Err(Error::invalid("labelling must be a bijection onto 1..=K"));
                }
                seen[s - 1] = true;
            }
        }
        let (a_lo, a_hi) = action_space;
        if !(a_lo.is_finite() && a_hi.is_finite() && a_lo < a_hi) {
            return Err(Error::invalid("action space must be a finite interval"));
        }
        if !(x_oracle > 0.0 && x_oracle >= a_lo && x_oracle <= a_hi) {
            return Err(Error::invalid(
                "unwind depth must be positive and inside the action space",
            ));
        }
        let (r_lo, r_hi) = flow.support();
        let (x0_lo, x0_hi) = x0.support();
        // Every depth the batch can touch must stay on the curve: quotes plus
        // one order, and nature's depth plus the first order.
        for probe in [
            a_lo + r_lo.min(0.0),
            a_hi + r_hi.max(0.0),
            x0_lo + r_lo.min(0.0),
            x0_hi + r_hi.max(0.0),
        ] {
            if !market.contains(probe) {
                let (lo, hi) = market.domain();
                return Err(Error::Domain {
                    depth: probe,
                    lo,
                    hi,
                });
            }
        }
        Ok(Self {
            market,
            flow,
            alloc,
            idx,
            x0,
            x_oracle,
            action_space,
        })
    }

    pub fn market(&self) -> &MarketCurve {
        &self.market
    }

    pub fn k(&self) -> usize {
        self.flow.k()
    }

    pub fn n_players(&self) -> usize {
        self.alloc.n()
    }

    pub fn x_oracle(&self) -> f64 {
        self.x_oracle
    }

    pub fn action_space(&self) -> (f64, f64) {
        self.action_space
    }

    /// Players who win at least one label with positive probability.
    pub fn participants(&self) -> Vec<usize> {
        match &self.alloc {
            LabelAllocation::Monopolist { player, .. } => vec![*player],
            LabelAllocation::IidCategorical { weights } => weights
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(i, _)| i + 1)
                .collect(),
            LabelAllocation::Known { map, .. } => {
                let mut players: Vec<usize> = map.clone();
                players.sort_unstable();
                players.dedup();
                players
            }
        }
    }

    /// Samples nature's depth, then order sizes, then the winner map, then
    /// the labelling. The draw order is part of the contract.
    pub fn sample_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> LabelledDraw {
        let k = self.k();
        let x0 = self.x0.sample(rng);
        let orders = self.flow.sample(rng);
        let alloc = self.alloc.sample(rng, k);
        let idx = match &self.idx {
            IdxLaw::UniformRandom => {
                let mut slots: Vec<usize> = (1..=k).collect();
                slots.shuffle(rng);
                slots
            }
            IdxLaw::Known(slots) => slots.clone(),
        };
        LabelledDraw {
            x0,
            orders,
            alloc,
            idx,
        }
    }

    /// One player's realised profit under a full quote matrix.
    ///
    /// `quotes[i - 1][h]` is player `i`'s target depth for label `h`. Each
    /// label the player wins takes out the depth left by the preceding
    /// slot's quote (nature's depth for slot 1) plus the label's own order,
    /// and pays for holding the player's quote.
    pub fn utility(&self, player: usize, quotes: &[Vec<f64>], draw: &LabelledDraw) -> Result<f64> {
        let n = self.n_players();
        let k = self.k();
        if player < 1 || player > n {
            return Err(Error::invalid(format!(
                "player {player} out of range 1..={n}"
            )));
        }
        if quotes.len() != n || quotes.iter().any(|q| q.len() != k) {
            return Err(Error::invalid(format!(
                "expected a {n} x {k} quote matrix"
            )));
        }
        let (a_lo, a_hi) = self.action_space;
        for q in quotes.iter().flatten() {
            if !q.is_finite() || *q < a_lo || *q > a_hi {
                return Err(Error::invalid(format!(
                    "quote {q} outside action space [{a_lo}, {a_hi}]"
                )));
            }
        }
        if draw.orders.len() != k || draw.alloc.len() != k || draw.idx.len() != k {
            return Err(Error::invalid("draw shape disagrees with the game"));
        }
        let mut label_at_slot = vec![usize::MAX; k];
        for (label, &slot) in draw.idx.iter().enumerate() {
            if slot < 1 || slot > k || label_at_slot[slot - 1] != usize::MAX {
                return Err(Error::invalid("draw labelling is not a bijection"));
            }
            label_at_slot[slot - 1] = label;
        }
        if draw.alloc.iter().any(|&p| p < 1 || p > n) {
            return Err(Error::invalid("draw winner out of range"));
        }

        let ctx = CostContext::new(self.market.clone(), self.x_oracle)?;
        let mut utility = 0.0;
        for (label, &winner) in draw.alloc.iter().enumerate() {
            if winner != player {
                continue;
            }
            let slot = draw.idx[label];
            let pred_depth = if slot == 1 {
                draw.x0
            } else {
                let pred_label = label_at_slot[slot - 2];
                quotes[draw.alloc[pred_label] - 1][pred_label]
            };
            utility += ctx.cost(pred_depth + draw.orders[label])?
                - ctx.cost(quotes[player - 1][label])?;
        }
        Ok(utility)
    }

    /// Per-slot FOC summaries of the diagonal restriction, where every label
    /// shares one quote. Slot 1's backrun follows nature, so its coupling
    /// weight is zero; there is no top-of-block term at all.
    pub fn diagonal_terms(&self, player: usize) -> Result<Vec<SlotTerm>> {
        let n = self.n_players();
        let k = self.k();
        if player < 1 || player > n {
            return Err(Error::invalid(format!(
                "player {player} out of range 1..={n}"
            )));
        }
        let mut terms = vec![SlotTerm {
            a: 0.0,
            b: 0.0,
            marginal: None,
        }];
        match &self.idx {
            IdxLaw::UniformRandom => {
                // Uniform labelling makes every slot exchangeable: the hold
                // probability is the label weight, and the chance that the
                // preceding slot is also ours is the pair probability of the
                // winner map under sampling without replacement of labels.
                let (a, b) = match &self.alloc {
                    LabelAllocation::Monopolist { player: p, .. } => {
                        if *p == player {
                            (1.0, 1.0)
                        } else {
                            (0.0, 0.0)
                        }
                    }
                    LabelAllocation::IidCategorical { weights } => {
                        let w = weights[player - 1];
                        (w, w)
                    }
                    LabelAllocation::Known { map, .. } => {
                        let c = map.iter().filter(|&&p| p == player).count() as f64;
                        let a = c / k as f64;
                        let b = if k > 1 {
                            ((c - 1.0) / (k as f64 - 1.0)).max(0.0)
                        } else {
                            0.0
                        };
                        (a, b)
                    }
                };
                let marginal = match &self.flow {
                    LabelFlow::Known(sizes) => {
                        let w = 1.0 / k as f64;
                        SlotMarginal::Atoms(normalized_atoms(
                            sizes.iter().map(|&r| (r, w)).collect(),
                        ))
                    }
                    LabelFlow::Iid { dist, .. } => SlotMarginal::Law(dist.clone()),
                };
                for slot in 1..=k {
                    terms.push(SlotTerm {
                        a,
                        b: if slot == 1 { 0.0 } else { b },
                        marginal: Some(marginal.clone()),
                    });
                }
            }
            IdxLaw::Known(slots) => {
                let mut label_at_slot = vec![0usize; k];
                for (label, &slot) in slots.iter().enumerate() {
                    label_at_slot[slot - 1] = label;
                }
                for slot in 1..=k {
                    let label = label_at_slot[slot - 1];
                    let a = self.alloc.weight(player, label);
                    if a <= 0.0 {
                        terms.push(SlotTerm {
                            a: 0.0,
                            b: 0.0,
                            marginal: None,
                        });
                        continue;
                    }
                    let b = if slot == 1 {
                        0.0
                    } else {
                        match &self.alloc {
                            LabelAllocation::Monopolist { .. } => 1.0,
                            LabelAllocation::IidCategorical { weights } => weights[player - 1],
                            LabelAllocation::Known { .. } => {
                                self.alloc.weight(player, label_at_slot[slot - 2])
                            }
                        }
                    };
                    let marginal = match &self.flow {
                        LabelFlow::Known(sizes) => {
                            SlotMarginal::Atoms(vec![(sizes[label], 1.0)])
                        }
                        LabelFlow::Iid { dist, .. } => SlotMarginal::Law(dist.clone()),
                    };
                    terms.push(SlotTerm {
                        a,
                        b,
                        marginal: Some(marginal),
                    });
                }
            }
        }
        Ok(terms)
    }

    /// Dominant quote of the diagonal restriction via the root-finder.
    pub fn collapsed_target(
        &self,
        player: usize,
        settings: &SolverSettings,
    ) -> Result<EquilibriumSolution> {
        let terms = self.diagonal_terms(player)?;
        solve_terms(
            &self.market,
            self.x_oracle,
            self.action_space,
            &terms,
            settings,
            player,
        )
    }

    /// Coordinate-wise Monte Carlo best response against the diagonal target.
    ///
    /// Every replica shares its draw across all labels and grid entries
    /// (common random numbers), and sweeps repeat until no coordinate moves
    /// or the cap of 50 is hit. `pass` reports whether every coordinate
    /// argmax landed within one grid cell of the collapsed single-quote
    /// target.
    pub fn diagonal_collapse(
        &self,
        player: usize,
        grid: &[f64],
        replicas: u64,
        master_seed: u64,
        settings: &SolverSettings,
    ) -> Result<DiagonalCollapse> {
        let k = self.k();
        if grid.len() < 2 {
            return Err(Error::invalid("grid needs at least two entries"));
        }
        let (a_lo, a_hi) = self.action_space;
        for w in grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid("grid must be strictly increasing"));
            }
        }
        if grid[0] < a_lo || grid[grid.len() - 1] > a_hi {
            return Err(Error::invalid("grid exceeds the action space"));
        }
        if replicas == 0 {
            return Err(Error::invalid("at least one replica required"));
        }
        let pitch = grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0f64, f64::max);

        let uniform_target = self.collapsed_target(player, settings)?.s_star;

        // A quote for label h enters the player's profit only through the
        // hold cost -C(g) and, when the player also wins the next slot's
        // label, the takeout C(g + r_next). Both pieces depend on the draw
        // alone, never on the other coordinates, so each coordinate's value
        // shape can be accumulated once per draw.
        struct Shape {
            held: u64,
            offsets: Vec<f64>,
        }
        let mut shapes: Vec<Shape> = (0..k)
            .map(|_| Shape {
                held: 0,
                offsets: Vec::new(),
            })
            .collect();
        for j in 0..replicas {
            let mut rng = replica_rng(master_seed, j);
            let draw = self.sample_draw(&mut rng);
            let mut label_at_slot = vec![0usize; k];
            for (label, &slot) in draw.idx.iter().enumerate() {
                label_at_slot[slot - 1] = label;
            }
            for (label, shape) in shapes.iter_mut().enumerate() {
                if draw.alloc[label] != player {
                    continue;
                }
                shape.held += 1;
                let slot = draw.idx[label];
                if slot < k {
                    let next_label = label_at_slot[slot];
                    if draw.alloc[next_label] == player {
                        shape.offsets.push(draw.orders[next_label]);
                    }
                }
            }
        }

        // Identical offsets (point masses, known contents) collapse to
        // run-length pairs so the grid scan touches each distinct size once.
        let ctx = CostContext::new(self.market.clone(), self.x_oracle)?;
        let mut curves: Vec<Vec<f64>> = Vec::with_capacity(k);
        for shape in &mut shapes {
            shape.offsets.sort_by(|a, b| a.total_cmp(b));
            let mut runs: Vec<(f64, f64)> = Vec::new();
            for &r in &shape.offsets {
                match runs.last_mut() {
                    Some(last) if last.0.to_bits() == r.to_bits() => last.1 += 1.0,
                    _ => runs.push((r, 1.0)),
                }
            }
            let mut curve = Vec::with_capacity(grid.len());
            for &g in grid {
                let mut v = -(shape.held as f64) * ctx.cost(g)?;
                for &(r, count) in &runs {
                    v += count * ctx.cost(g + r)?;
                }
                curve.push(v);
            }
            curves.push(curve);
        }

        let start = grid
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - self.x_oracle)
                    .abs()
                    .total_cmp(&(b.1 - self.x_oracle).abs())
            })
            .map(|(i, _)| i)
            .unwrap();
        let mut profile = vec![start; k];
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < 50 {
            sweeps += 1;
            let mut moved = false;
            for (label, curve) in curves.iter().enumerate() {
                let mut best = profile[label];
                for (i, &v) in curve.iter().enumerate() {
                    if v > curve[best] {
                        best = i;
                    }
                }
                if best != profile[label] {
                    profile[label] = best;
                    moved = true;
                }
            }
            if !moved {
                converged = true;
                break;
            }
        }

        let coordinate_argmax: Vec<f64> = profile.iter().map(|&i| grid[i]).collect();
        let pass = converged
            && coordinate_argmax
                .iter()
                .all(|&s| (s - uniform_target).abs() <= pitch + 1e-12);
        Ok(DiagonalCollapse {
            player,
            uniform_target,
            coordinate_argmax,
            grid_pitch: pitch,
            replicas,
            sweeps,
            converged,
            pass,
        })
    }
}

/// Verdict of the per-label best-response check.
#[derive(Debug, Clone, Serialize)]
pub struct DiagonalCollapse {
    pub player: usize,
    /// Root of the collapsed single-quote game.
    pub uniform_target: f64,
    /// Monte Carlo argmax per label after the sweeps.
    pub coordinate_argmax: Vec<f64>,
    pub grid_pitch: f64,
    pub replicas: u64,
    pub sweeps: usize,
    pub converged: bool,
    /// True when every coordinate sits within one cell of the target.
    pub pass: bool,
}

/// Whether a limit order may execute partially.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMode {
    PartialFill,
    AllOrNothing,
}

/// Monopolist sandwich of one resting limit order.
///
/// The victim sells `r` with a fill bound expressed as a depth: the order
/// executes (in all-or-nothing mode) only if the pool depth after it,
/// `s + r`, stays at or below `q_depth`, i.e. the worst fill price stays
/// at or above the limit price of that depth.
#[derive(Debug, Clone)]
pub struct LimitSandwich {
    market: MarketCurve,
    x_oracle: f64,
    x0: f64,
    r: f64,
    q_depth: f64,
    mode: FillMode,
    action_space: (f64, f64),
}

impl LimitSandwich {
    pub fn new(
        market: MarketCurve,
        x_oracle: f64,
        x0: f64,
        r: f64,
        q_depth: f64,
        mode: FillMode,
        action_space: (f64, f64),
    ) -> Result<Self> {
        let (a_lo, a_hi) = action_space;
        if !(a_lo.is_finite() && a_hi.is_finite() && a_lo < a_hi) {
            return Err(Error::invalid("action space must be a finite interval"));
        }
        if !(x_oracle > 0.0 && x_oracle >= a_lo && x_oracle <= a_hi) {
            return Err(Error::invalid(
                "unwind depth must be positive and inside the action space",
            ));
        }
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::invalid("order size must be nonnegative"));
        }
        for probe in [a_lo, a_hi, x0, q_depth] {
            if !market.contains(probe) {
                let (lo, hi) = market.domain();
                return Err(Error::Domain {
                    depth: probe,
                    lo,
                    hi,
                });
            }
        }
        Ok(Self {
            market,
            x_oracle,
            x0,
            r,
            q_depth,
            mode,
            action_space,
        })
    }

    pub fn mode(&self) -> FillMode {
        self.mode
    }

    /// Fill boundary in quote space: the largest target that still lets the
    /// order execute in full.
    pub fn boundary(&self) -> f64 {
        self.q_depth - self.r
    }

    fn payoff_at(&self, ctx: &CostContext, s: f64) -> Result<f64> {
        let lead = ctx.cost(self.x0)? - ctx.cost(s)?;
        let sandwich = match self.mode {
            FillMode::PartialFill => {
                let fill_to = (s + self.r).min(self.q_depth);
                ctx.cost(fill_to)? - ctx.cost(s)?
            }
            FillMode::AllOrNothing => {
                // The boundary itself fills: execution at exactly the limit
                // price counts as executed.
                if s + self.r <= self.q_depth {
                    ctx.cost(s + self.r)? - ctx.cost(s)?
                } else {
                    0.0
                }
            }
        };
        Ok(lead + sandwich)
    }

    /// Sandwich profit of quoting depth `s`: backrun nature's depth, hold
    /// `s` through the victim's order, and take out the filled depth.
    pub fn payoff(&self, s: f64) -> Result<f64> {
        let (a_lo, a_hi) = self.action_space;
        if !s.is_finite() || s < a_lo || s > a_hi {
            return Err(Error::invalid(format!(
                "quote {s} outside action space [{a_lo}, {a_hi}]"
            )));
        }
        let ctx = CostContext::new(self.market.clone(), self.x_oracle)?;
        self.payoff_at(&ctx, s)
    }

    /// Probes the payoff on both sides of the fill boundary and scans a grid
    /// for the global argmax.
    ///
    /// `jump` is the filled-side limit minus the unfilled-side limit, each
    /// evaluated `1e-9` from the boundary; it is positive exactly when the
    /// all-or-nothing discontinuity rewards undercutting.
    pub fn phase_transition(&self, grid: &[f64]) -> Result<PhaseTransition> {
        if grid.is_empty() {
            return Err(Error::invalid("empty scan grid"));
        }
        let ctx = CostContext::new(self.market.clone(), self.x_oracle)?;
        let boundary = self.boundary();
        let filled_limit = self.payoff_at(&ctx, boundary - 1e-9)?;
        let unfilled_limit = self.payoff_at(&ctx, boundary + 1e-9)?;

        let mut scan_argmax = grid[0];
        let mut scan_max = f64::NEG_INFINITY;
        for &s in grid {
            let u = self.payoff(s)?;
            if u > scan_max {
                scan_max = u;
                scan_argmax = s;
            }
        }
        let passthrough_value = self.payoff(self.x_oracle)?;
        Ok(PhaseTransition {
            boundary,
            filled_limit,
            unfilled_limit,
            jump: filled_limit - unfilled_limit,
            scan_argmax,
            scan_max,
            passthrough_value,
            better_than_passthrough: scan_max > passthrough_value,
        })
    }
}

/// Discontinuity report for the limit-order sandwich.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseTransition {
    /// Quote at which the victim's order stops filling, `q_depth - r`.
    pub boundary: f64,
    pub filled_limit: f64,
    pub unfilled_limit: f64,
    pub jump: f64,
    pub scan_argmax: f64,
    pub scan_max: f64,
    /// Payoff of quoting the unwind depth itself.
    pub passthrough_value: f64,
    pub better_than_passthrough: bool,
}
