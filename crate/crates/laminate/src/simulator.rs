//! Batch execution and Monte Carlo machinery.
//!
//! A batch interleaves arbitrage slots with passive orders:
//! `[arb 0, order 1, arb 1, ..., order K, arb K]`. The arbitrageur winning a
//! slot moves the pool from its current depth to that player's target and
//! books the move's profit against the unwind venue. Everything here takes
//! strategy profiles as given; it never looks at first-order conditions, so
//! its output is an independent check on the equilibrium solver.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::BatchGame;
use crate::error::{Error, Result};
use crate::rng::replica_rng;

/// Full record of one executed batch.
#[derive(Debug, Clone, Serialize)]
pub struct BatchTrace {
    /// Pool depth seeded by nature before the first arbitrage slot.
    pub x0: f64,
    /// Passive order sizes `r_1..r_K`.
    pub orders: Vec<f64>,
    /// Winner of each arbitrage slot `0..K` (players are 1-based).
    pub allocation: Vec<usize>,
    /// Target depth of each player (the strategy profile that was executed).
    pub targets: Vec<f64>,
    /// Pool depth after each of the `2K+1` executions.
    pub depths: Vec<f64>,
    /// Marginal price after each of the `2K+1` executions.
    pub prices: Vec<f64>,
    /// Profit per player, valued against the unwind venue.
    pub utilities: Vec<f64>,
    /// Signed pool proceeds of each passive order, `K` entries.
    pub order_revenue: Vec<f64>,
}

/// Executes one batch deterministically from explicit draws.
///
/// `targets` has one entry per player and every entry must lie in the
/// action space; `orders` has `K` entries; `allocation` has `K+1` entries
/// naming the winner of each arbitrage slot.
pub fn execute_batch(
    game: &BatchGame,
    targets: &[f64],
    x0: f64,
    orders: &[f64],
    allocation: &[usize],
) -> Result<BatchTrace> {
    let n = game.n_players();
    let k = game.k();
    if targets.len() != n {
        return Err(Error::invalid(format!(
            "expected {} targets, got {}",
            n,
            targets.len()
        )));
    }
    if orders.len() != k {
        return Err(Error::invalid(format!(
            "expected {} orders, got {}",
            k,
            orders.len()
        )));
    }
    if allocation.len() != k + 1 {
        return Err(Error::invalid(format!(
            "expected {} slot winners, got {}",
            k + 1,
            allocation.len()
        )));
    }
    let (a_lo, a_hi) = game.action_space();
    for (i, &s) in targets.iter().enumerate() {
        if !s.is_finite() || s < a_lo || s > a_hi {
            return Err(Error::invalid(format!(
                "target {} for player {} outside action space [{}, {}]",
                s,
                i + 1,
                a_lo,
                a_hi
            )));
        }
    }
    for &p in allocation {
        if p < 1 || p > n {
            return Err(Error::invalid(format!(
                "slot winner {} out of range 1..={}",
                p, n
            )));
        }
    }

    let market = game.market();
    let ctx = game.cost_context();
    let mut depths = Vec::with_capacity(2 * k + 1);
    let mut prices = Vec::with_capacity(2 * k + 1);
    let mut utilities = vec![0.0; n];
    let mut order_revenue = Vec::with_capacity(k);

    let mut depth = x0;
    for j in 0..=k {
        if j >= 1 {
            let before = depth;
            depth = before + orders[j - 1];
            order_revenue.push(market.action(before, depth)?);
            depths.push(depth);
            prices.push(market.phi(depth)?);
        }
        let winner = allocation[j];
        let s = targets[winner - 1];
        utilities[winner - 1] += ctx.cost(depth)? - ctx.cost(s)?;
        depth = s;
        depths.push(depth);
        prices.push(market.phi(depth)?);
    }

    Ok(BatchTrace {
        x0,
        orders: orders.to_vec(),
        allocation: allocation.to_vec(),
        targets: targets.to_vec(),
        depths,
        prices,
        utilities,
        order_revenue,
    })
}

/// Samples one batch: nature's depth, then order sizes, then slot winners.
///
/// The draw order is part of the contract; replica streams rely on it.
pub fn run_batch<R: Rng + ?Sized>(
    game: &BatchGame,
    targets: &[f64],
    rng: &mut R,
) -> Result<BatchTrace> {
    let x0 = game.initial_depth().sample(rng);
    let orders = game.flow().sample(rng);
    let allocation = game.alloc().sample(rng);
    execute_batch(game, targets, x0, &orders, &allocation)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replicas: u64,
}

/// Estimates one player's expected utility under a fixed strategy profile.
///
/// Replicas run in parallel but each draws from its own counter-mode stream
/// of `master_seed` and results are reduced in replica order, so the outcome
/// is byte-identical across runs and thread counts.
pub fn monte_carlo_utility(
    game: &BatchGame,
    player: usize,
    targets: &[f64],
    replicas: u64,
    master_seed: u64,
) -> Result<McEstimate> {
    if player < 1 || player > game.n_players() {
        return Err(Error::invalid(format!(
            "player {} out of range 1..={}",
            player,
            game.n_players()
        )));
    }
    if replicas == 0 {
        return Err(Error::invalid("at least one replica required"));
    }
    let samples: Vec<Result<f64>> = (0..replicas)
        .into_par_iter()
        .map(|j| {
            let mut rng = replica_rng(master_seed, j);
            run_batch(game, targets, &mut rng)
                .map(|trace| trace.utilities[player - 1])
                .map_err(|e| Error::Replica {
                    replica: j,
                    source: Box::new(e),
                })
        })
        .collect();
    let mut values = Vec::with_capacity(samples.len());
    for s in samples {
        values.push(s?);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std_error = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(McEstimate {
        mean,
        std_error,
        replicas,
    })
}

/// Result of a grid search over one player's target depth.
#[derive(Debug, Clone, Serialize)]
pub struct BestResponse {
    pub player: usize,
    /// Grid entry with the highest expected utility.
    pub argmax: f64,
    pub argmax_index: usize,
    /// Expected utility at each grid entry.
    pub values: Vec<f64>,
    /// True when the distribution was enumerated rather than sampled.
    pub exact: bool,
    /// Sampled replicas (zero on the enumeration path).
    pub replicas: u64,
}

/// Outcome-count ceiling below which the joint distribution is enumerated.
const ENUMERATION_LIMIT: usize = 1_000_000;

/// Brute-force best response for `player` holding everyone else at `targets`.
///
/// When nature's depth is a point mass and the joint law of orders and slot
/// winners has at most [`ENUMERATION_LIMIT`] outcomes, the expectation is
/// exact. Otherwise it is sampled with common random numbers: each replica
/// draws one batch and every grid entry is valued on that same draw, so
/// sampling noise shifts the whole value curve rather than reordering it.
pub fn brute_force_best_response(
    game: &BatchGame,
    player: usize,
    targets: &[f64],
    grid: &[f64],
    replicas: u64,
    master_seed: u64,
) -> Result<BestResponse> {
    let n = game.n_players();
    if player < 1 || player > n {
        return Err(Error::invalid(format!(
            "player {} out of range 1..={}",
            player, n
        )));
    }
    if targets.len() != n {
        return Err(Error::invalid(format!(
            "expected {} targets, got {}",
            n,
            targets.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::invalid("empty search grid"));
    }
    let (a_lo, a_hi) = game.action_space();
    for &g in grid {
        if !g.is_finite() || g < a_lo || g > a_hi {
            return Err(Error::invalid(format!(
                "grid entry {} outside action space [{}, {}]",
                g, a_lo, a_hi
            )));
        }
    }
    if game.slot_terms(player)?.iter().all(|t| t.a <= 0.0) {
        return Err(Error::NoParticipation { player });
    }

    let exact_setup = game.initial_depth().as_point().and_then(|x0| {
        let flow = game.flow().enumerate_joint(ENUMERATION_LIMIT)?;
        let alloc = game.alloc().enumerate(ENUMERATION_LIMIT)?;
        if flow.len().saturating_mul(alloc.len()) <= ENUMERATION_LIMIT {
            Some((x0, flow, alloc))
        } else {
            None
        }
    });

    let (values, exact, used_replicas) = match exact_setup {
        Some((x0, flow_outcomes, alloc_outcomes)) => {
            let mut values = vec![0.0; grid.len()];
            let mut profile = targets.to_vec();
            for (orders, pf) in &flow_outcomes {
                for (winners, pa) in &alloc_outcomes {
                    let w = pf * pa;
                    if w == 0.0 {
                        continue;
                    }
                    for (gi, &g) in grid.iter().enumerate() {
                        profile[player - 1] = g;
                        let trace = execute_batch(game, &profile, x0, orders, winners)?;
                        values[gi] += w * trace.utilities[player - 1];
                    }
                }
            }
            (values, true, 0)
        }
        None => {
            if replicas == 0 {
                return Err(Error::invalid(
                    "joint distribution too large to enumerate and no replicas requested",
                ));
            }
            (
                sampled_values(game, player, targets, grid, replicas, master_seed)?,
                false,
                replicas,
            )
        }
    };

    let mut argmax_index = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[argmax_index] {
            argmax_index = i;
        }
    }
    Ok(BestResponse {
        player,
        argmax: grid[argmax_index],
        argmax_index,
        values,
        exact,
        replicas: used_replicas,
    })
}

/// Common-random-number value curve for the sampled best-response path.
///
/// Changing the player's own target only moves the cost terms of slots they
/// win: the frontrun leg `-C(g)` once per held slot, the takeout of the
/// preceding depth when that depth is an opponent's (a constant per draw),
/// and the takeout `C(g + r)` when the preceding arbitrage slot is also
/// theirs. Splitting the per-draw utility along those lines lets one draw
/// price the whole grid without re-executing the batch per entry.
fn sampled_values(
    game: &BatchGame,
    player: usize,
    targets: &[f64],
    grid: &[f64],
    replicas: u64,
    master_seed: u64,
) -> Result<Vec<f64>> {
    struct DrawParts {
        fixed: f64,
        held_slots: u64,
        own_offsets: Vec<f64>,
    }

    let ctx = game.cost_context();
    let k = game.k();
    let parts: Vec<Result<DrawParts>> = (0..replicas)
        .into_par_iter()
        .map(|j| {
            let mut rng = replica_rng(master_seed, j);
            let x0 = game.initial_depth().sample(&mut rng);
            let orders = game.flow().sample(&mut rng);
            let winners = game.alloc().sample(&mut rng);
            let run = || -> Result<DrawParts> {
                let mut fixed = 0.0;
                let mut held_slots = 0;
                let mut own_offsets = Vec::new();
                for slot in 0..=k {
                    if winners[slot] != player {
                        continue;
                    }
                    held_slots += 1;
                    if slot == 0 {
                        fixed += ctx.cost(x0)?;
                    } else if winners[slot - 1] == player {
                        own_offsets.push(orders[slot - 1]);
                    } else {
                        let pred = targets[winners[slot - 1] - 1] + orders[slot - 1];
                        fixed += ctx.cost(pred)?;
                    }
                }
                Ok(DrawParts {
                    fixed,
                    held_slots,
                    own_offsets,
                })
            };
            run().map_err(|e| Error::Replica {
                replica: j,
                source: Box::new(e),
            })
        })
        .collect();

    let mut fixed_total = 0.0;
    let mut held_total = 0u64;
    let mut pooled_offsets = Vec::new();
    for p in parts {
        let p = p?;
        fixed_total += p.fixed;
        held_total += p.held_slots;
        pooled_offsets.extend(p.own_offsets);
    }

    let n = replicas as f64;
    let mut values = Vec::with_capacity(grid.len());
    for &g in grid {
        let mut total = fixed_total - held_total as f64 * ctx.cost(g)?;
        for &r in &pooled_offsets {
            total += ctx.cost(g + r)?;
        }
        values.push(total / n);
    }
    Ok(values)
}

/// One bucket of the experienced-price histogram.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

/// Distribution of the relative price passive traders face on arrival.
#[derive(Debug, Clone, Serialize)]
pub struct TraderExperience {
    pub replicas: u64,
    pub mean: f64,
    pub mean_log: f64,
    /// `(level, value)` pairs at the 5/25/50/75/95 percent levels.
    pub quantiles: Vec<(f64, f64)>,
    pub histogram: Vec<HistogramBin>,
}

const HISTOGRAM_BINS: usize = 32;

/// Samples the relative price `phi(target) / phi(x_oracle)` seen by a
/// uniformly chosen passive order, where `target` belongs to whichever
/// player won the arbitrage slot just before it.
///
/// The order in slot 1 faces the very first arbitrage, which clears any
/// gap nature left; set `include_first_slot: false` to restrict attention
/// to orders that arrive mid-batch.
pub fn trader_experience(
    game: &BatchGame,
    targets: &[f64],
    replicas: u64,
    master_seed: u64,
    include_first_slot: bool,
) -> Result<TraderExperience> {
    let n = game.n_players();
    let k = game.k();
    if targets.len() != n {
        return Err(Error::invalid(format!(
            "expected {} targets, got {}",
            n,
            targets.len()
        )));
    }
    if replicas == 0 {
        return Err(Error::invalid("at least one replica required"));
    }
    let first_slot = if include_first_slot { 1 } else { 2 };
    if first_slot > k {
        return Err(Error::invalid(
            "no eligible order slot: need K >= 2 when the first slot is excluded",
        ));
    }

    let market = game.market();
    let x_oracle = game.x_oracle();
    let mut samples = Vec::with_capacity(replicas as usize);
    let mut log_sum = 0.0;
    for j in 0..replicas {
        let mut rng = replica_rng(master_seed, j);
        let slot = rng.gen_range(first_slot..=k);
        let winners = game.alloc().sample(&mut rng);
        let price = market.normalized_phi(x_oracle, targets[winners[slot - 1] - 1])?;
        log_sum += price.ln();
        samples.push(price);
    }

    let count = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / count;
    let mean_log = log_sum / count;

    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantiles = [0.05, 0.25, 0.5, 0.75, 0.95]
        .iter()
        .map(|&q| {
            let pos = q * (samples.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            (q, samples[lo] * (1.0 - frac) + samples[hi] * frac)
        })
        .collect();

    let lo = samples[0];
    let hi = samples[samples.len() - 1];
    let histogram = if hi > lo {
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
            .map(|b| HistogramBin {
                lo: lo + b as f64 * width,
                hi: lo + (b + 1) as f64 * width,
                count: 0,
            })
            .collect();
        for &v in &samples {
            let idx = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
            bins[idx].count += 1;
        }
        bins
    } else {
        vec![HistogramBin {
            lo,
            hi,
            count: samples.len() as u64,
        }]
    };

    Ok(TraderExperience {
        replicas,
        mean,
        mean_log,
        quantiles,
        histogram,
    })
}
