//! Dominant-strategy target depths and the geometric approximation to the
//! induced price-manipulation coefficient.
//!
//! A player's expected utility depends on their own target `s` only through
//! per-slot summaries: the primary weight `a_k`, the adjacency coupling
//! `b_k`, and the slot's size marginal. The first-order condition
//!
//! ```text
//! sum_k a_k * ( phi(s) - b_k * E[phi(s + r_k)] + (b_k - 1) * p_oracle ) = 0
//! ```
//!
//! is solved by bracketed root-finding. Under a shared size marginal and
//! slot-independent weights the root obeys the closed form
//! `phi_bar(s*) ~= (1 - w_check) / (1 - w_check * M(lambda))`, exact on
//! exponential curves, with a certified bound everywhere else.

use crate::allocation::AllocationModel;
use crate::error::{Error, Result};
use crate::market::MarketCurve;
use crate::numerics;
use crate::orderflow::{OrderFlowModel, SlotMarginal};
use rand::Rng;

/// Law of the pre-batch depth played by nature.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDepth {
    PointMass { x0: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl InitialDepth {
    pub fn support(&self) -> (f64, f64) {
        match *self {
            InitialDepth::PointMass { x0 } => (x0, x0),
            InitialDepth::Uniform { lo, hi } => (lo, hi),
        }
    }

    pub fn as_point(&self) -> Option<f64> {
        match *self {
            InitialDepth::PointMass { x0 } => Some(x0),
            InitialDepth::Uniform { .. } => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialDepth::PointMass { x0 } => x0,
            InitialDepth::Uniform { lo, hi } => rng.gen_range(lo..hi),
        }
    }
}

/// One slot's contribution to a player's first-order condition.
#[derive(Debug, Clone)]
pub struct SlotTerm {
    /// `P[alpha(k) = i]`.
    pub a: f64,
    /// `P[alpha(k-1) = i | alpha(k) = i]`; zero for slot 0.
    pub b: f64,
    /// Size law of the order preceding the slot; `None` for slot 0.
    pub marginal: Option<SlotMarginal>,
}

/// A fully assembled batch game: market, flow, allocation, and conventions.
#[derive(Debug, Clone)]
pub struct BatchGame {
    market: MarketCurve,
    flow: OrderFlowModel,
    alloc: AllocationModel,
    x0: InitialDepth,
    x_oracle: f64,
    action_space: (f64, f64),
}

impl BatchGame {
    /// Validates all cross-references: slot counts agree, the action space is
    /// a closed subinterval of the market domain containing the oracle depth,
    /// and every reachable depth (initial, targets, targets plus one order)
    /// stays inside the domain.
    pub fn new(
        market: MarketCurve,
        flow: OrderFlowModel,
        alloc: AllocationModel,
        x0: InitialDepth,
        x_oracle: f64,
        action_space: (f64, f64),
    ) -> Result<Self> {
        // negated comparisons are deliberate: they fail closed on NaN inputs
        #![allow(clippy::neg_cmp_op_on_partial_ord)]
        if alloc.k() != flow.k() {
            return Err(Error::invalid(format!(
                "slot count mismatch: allocation has K={}, flow has K={}",
                alloc.k(),
                flow.k()
            )));
        }
        let (a_lo, a_hi) = action_space;
        if !(a_lo.is_finite() && a_hi.is_finite() && a_lo < a_hi) {
            return Err(Error::invalid("action space must be a finite interval lo < hi"));
        }
        if !market.contains(a_lo) || !market.contains(a_hi) {
            return Err(Error::invalid("action space must lie inside the market domain"));
        }
        if !(x_oracle > 0.0) || !(a_lo <= x_oracle && x_oracle <= a_hi) {
            return Err(Error::invalid(
                "oracle depth must be positive and inside the action space",
            ));
        }
        let (x0_lo, x0_hi) = x0.support();
        if !(x0_lo <= x0_hi) || !market.contains(x0_lo) || !market.contains(x0_hi) {
            return Err(Error::invalid("initial depth support must lie inside the market domain"));
        }
        let (r_lo, r_hi) = flow.support_hull();
        if !market.contains(a_lo + r_lo.min(0.0)) || !market.contains(a_hi + r_hi.max(0.0)) {
            return Err(Error::invalid(
                "targets plus one order can leave the market domain; shrink the action space",
            ));
        }
        Ok(BatchGame { market, flow, alloc, x0, x_oracle, action_space })
    }

    pub fn market(&self) -> &MarketCurve {
        &self.market
    }

    pub fn flow(&self) -> &OrderFlowModel {
        &self.flow
    }

    pub fn alloc(&self) -> &AllocationModel {
        &self.alloc
    }

    pub fn initial_depth(&self) -> &InitialDepth {
        &self.x0
    }

    pub fn x_oracle(&self) -> f64 {
        self.x_oracle
    }

    pub fn oracle_price(&self) -> f64 {
        self.market.phi(self.x_oracle).expect("validated at assembly")
    }

    pub fn action_space(&self) -> (f64, f64) {
        self.action_space
    }

    pub fn n_players(&self) -> usize {
        self.alloc.n()
    }

    pub fn k(&self) -> usize {
        self.flow.k()
    }

    /// Opportunity-cost context anchored at the oracle depth (the unwind venue).
    pub fn cost_context(&self) -> crate::market::CostContext {
        crate::market::CostContext::new(self.market.clone(), self.x_oracle)
            .expect("validated at assembly")
    }

    /// Per-slot FOC summaries for one player. Slots the player never holds
    /// contribute `a = 0` and are skipped by the solver.
    pub fn slot_terms(&self, player: usize) -> Result<Vec<SlotTerm>> {
        let mut terms = Vec::with_capacity(self.k() + 1);
        for k in 0..=self.k() {
            let a = self.alloc.primary_weight(player, k)?;
            if a <= 0.0 {
                terms.push(SlotTerm { a: 0.0, b: 0.0, marginal: None });
                continue;
            }
            let b = self.alloc.secondary_weight(player, k)?;
            let marginal = if k == 0 { None } else { Some(self.flow.slot_marginal(k)?) };
            terms.push(SlotTerm { a, b, marginal });
        }
        Ok(terms)
    }

    /// `d/ds E[U_i]` at target depth `s`, in price units.
    pub fn expected_utility_derivative(&self, player: usize, s: f64) -> Result<f64> {
        let terms = self.slot_terms(player)?;
        derivative_terms(&self.market, self.x_oracle, &terms, s)
    }

    /// Dominant-strategy target with default solver settings.
    pub fn solve(&self, player: usize) -> Result<EquilibriumSolution> {
        self.solve_with(player, &SolverSettings::default())
    }

    pub fn solve_with(
        &self,
        player: usize,
        settings: &SolverSettings,
    ) -> Result<EquilibriumSolution> {
        let terms = self.slot_terms(player)?;
        solve_terms(
            &self.market,
            self.x_oracle,
            self.action_space,
            &terms,
            settings,
            player,
        )
    }
}

/// Which route produced a solution. The root-finder is always authoritative;
/// the closed form is reported next to it, never substituted for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    ExactRoot,
    ZetaClosedForm,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EquilibriumSolution {
    pub player: usize,
    /// Root of the first-order condition inside the action space.
    pub s_star: f64,
    /// `phi(s*) / phi(x_oracle)`.
    pub phi_bar: f64,
    /// `ln phi_bar`, the log price-manipulation coefficient.
    pub log_coefficient: f64,
    /// `|FOC(s*)| / p_oracle`, the residual the root-finder left behind.
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
    /// False when the 256-point scan saw more than one sign change; the
    /// returned root is then the one with the smallest residual.
    pub unique: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Depth tolerance relative to the oracle depth.
    pub depth_tol_rel: f64,
    /// Residual tolerance, scaled by the player's total primary weight.
    pub residual_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { depth_tol_rel: 1e-12, residual_tol: 1e-10, max_iter: 200 }
    }
}

/// First-order condition assembled from raw slot terms, in price units:
/// `sum_k a_k (phi(s) - p + b_k (p - E[phi(s + r_k)]))`.
pub fn derivative_terms(
    market: &MarketCurve,
    x_oracle: f64,
    terms: &[SlotTerm],
    s: f64,
) -> Result<f64> {
    let p_oracle = market.phi(x_oracle)?;
    let phi_s = market.phi(s)?;
    let mut acc = 0.0;
    for t in terms {
        if t.a <= 0.0 {
            continue;
        }
        let mut v = phi_s - p_oracle;
        if t.b != 0.0 {
            let marginal = t
                .marginal
                .as_ref()
                .ok_or_else(|| Error::invalid("coupled slot term needs a size marginal"))?;
            v += t.b * (p_oracle - marginal.expected_phi(market, s)?);
        }
        acc += t.a * v;
    }
    Ok(acc)
}

/// Solve the first-order condition on `action_space` by Brent's method.
///
/// The bracket starts at `x_oracle * (1 ± 0.5)` clipped to the action space
/// and doubles geometrically (at most 20 times) until it straddles a sign
/// change. A 256-interval scan across the whole action space then counts
/// sign changes; with more than one, every bracketed root is polished and
/// the smallest-residual root is returned flagged non-unique.
pub fn solve_terms(
    market: &MarketCurve,
    x_oracle: f64,
    action_space: (f64, f64),
    terms: &[SlotTerm],
    settings: &SolverSettings,
    player: usize,
) -> Result<EquilibriumSolution> {
    let total_a: f64 = terms.iter().map(|t| t.a).sum();
    if total_a <= 0.0 {
        return Err(Error::NoParticipation { player });
    }
    let p_oracle = market.phi(x_oracle)?;
    let (a_lo, a_hi) = action_space;

    let err_cell = std::cell::RefCell::new(None::<Error>);
    let f = |s: f64| match derivative_terms(market, x_oracle, terms, s) {
        Ok(v) => v / p_oracle,
        Err(e) => {
            err_cell.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let check = |cell: &std::cell::RefCell<Option<Error>>| -> Result<()> {
        match cell.borrow_mut().take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    };

    let xtol = settings.depth_tol_rel * x_oracle;
    let rtol = settings.depth_tol_rel;

    // expanding bracket around the oracle depth
    let mut delta = 0.5;
    let mut primary = None;
    for _ in 0..=20 {
        let lo = (x_oracle * (1.0 - delta)).max(a_lo);
        let hi = (x_oracle * (1.0 + delta)).min(a_hi);
        let flo = f(lo);
        let fhi = f(hi);
        check(&err_cell)?;
        if flo * fhi <= 0.0 {
            primary = Some((lo, hi));
            break;
        }
        if lo <= a_lo && hi >= a_hi {
            break;
        }
        delta *= 2.0;
    }

    // uniqueness scan over the whole action space; a grid point landing
    // exactly on a root is one root, not two sign changes
    let scan_n = 256usize;
    let h = (a_hi - a_lo) / scan_n as f64;
    let mut scan_brackets: Vec<(f64, f64)> = Vec::new();
    let mut last_nonzero: Option<(f64, f64)> = None;
    for i in 0..=scan_n {
        let x = if i == scan_n { a_hi } else { a_lo + h * i as f64 };
        let fx = f(x);
        check(&err_cell)?;
        if fx == 0.0 {
            scan_brackets.push((x, x));
        } else {
            if let Some((px, pf)) = last_nonzero {
                if pf * fx < 0.0 {
                    scan_brackets.push((px, x));
                }
            }
            last_nonzero = Some((x, fx));
        }
    }

    let mut brackets = scan_brackets;
    if let Some(b) = primary {
        brackets.push(b);
    }
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    let mut iterations = 0usize;
    for (lo, hi) in brackets {
        if lo == hi {
            candidates.push((lo, 0.0));
            continue;
        }
        if let Some(r) = numerics::brent_root(&f, lo, hi, xtol, rtol, settings.max_iter) {
            check(&err_cell)?;
            let resid = f(r.root).abs();
            check(&err_cell)?;
            candidates.push((r.root, resid));
            iterations = iterations.max(r.iterations);
        } else {
            check(&err_cell)?;
        }
    }
    if candidates.is_empty() {
        return Err(Error::NoBracket { lo: a_lo, hi: a_hi });
    }
    // cluster roots closer than one scan cell; they are the same crossing
    // seen through different brackets
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut clusters = 1usize;
    for w in candidates.windows(2) {
        if w[1].0 - w[0].0 > h {
            clusters += 1;
        }
    }
    let unique = clusters <= 1;
    let (s_star, residual) = candidates
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");

    let allowed = settings.residual_tol * total_a;
    // negated so that a NaN residual fails closed
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(residual < allowed) {
        return Err(Error::Tolerance { requested: allowed, achieved: residual });
    }
    let phi_bar = market.normalized_phi(x_oracle, s_star)?;
    Ok(EquilibriumSolution {
        player,
        s_star,
        phi_bar,
        log_coefficient: phi_bar.ln(),
        residual,
        iterations,
        method: SolveMethod::ExactRoot,
        unique,
    })
}

/// Decentralization discount on a weight: `K * w / (K + 1)`.
///
/// Slot 0 never has a preceding order, so only K of the K+1 slots couple to
/// the flow; the closed form absorbs that as a shrunk weight.
pub fn effective_weight(w: f64, k: usize) -> f64 {
    debug_assert!((0.0..=1.0).contains(&w));
    debug_assert!(k >= 1);
    k as f64 * w / (k as f64 + 1.0)
}

/// Geometric-series value `(1 - w_check) / (1 - w_check * m)`.
///
/// `m` is the damping transform of the size marginal at the market's decay
/// rate. Fails with a pole when `w_check * m >= 1`: the series diverges and
/// no finite manipulation coefficient exists on this route.
pub fn zeta(w_check: f64, m: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&w_check) {
        return Err(Error::invalid("effective weight must lie in [0, 1]"));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::invalid("impact factor must be positive and finite"));
    }
    let product = w_check * m;
    if product >= 1.0 {
        return Err(Error::Pole { product });
    }
    Ok((1.0 - w_check) / (1.0 - product))
}

/// Truncated log-series for `ln zeta`: `sum_{n=1..N} w_check^n (m^n - 1) / n`,
/// plus a geometric tail bound `q^(N+1) / ((N+1)(1-q))`, `q = max(w_check, w_check*m)`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LogSeries {
    pub partial_sum: f64,
    pub tail_bound: f64,
    pub terms: usize,
}

pub fn newton_mercator(w_check: f64, m: f64, terms: usize) -> Result<LogSeries> {
    if terms == 0 {
        return Err(Error::invalid("series needs at least one term"));
    }
    if !(0.0..=1.0).contains(&w_check) {
        return Err(Error::invalid("effective weight must lie in [0, 1]"));
    }
    let q = w_check.max(w_check * m);
    if q >= 1.0 {
        return Err(Error::Pole { product: q });
    }
    let mut partial = 0.0;
    let mut wn = 1.0;
    let mut wmn = 1.0;
    for n in 1..=terms {
        wn *= w_check;
        wmn *= w_check * m;
        partial += (wmn - wn) / n as f64;
    }
    let tail_bound = q.powi(terms as i32 + 1) / ((terms as f64 + 1.0) * (1.0 - q));
    Ok(LogSeries { partial_sum: partial, tail_bound, terms })
}

/// Certificate for the closed-form approximation of one player's coefficient.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ZetaCertificate {
    /// Bernoulli weight of the player.
    pub weight: f64,
    /// `K * w / (K + 1)`.
    pub w_check: f64,
    /// Market log-price decay rate at the oracle depth.
    pub lambda: f64,
    /// Damping transform of the shared size marginal at `lambda`.
    pub impact: f64,
    pub zeta: f64,
    pub log_zeta: f64,
    /// Certified bound on `|ln phi_bar(s*) - ln zeta|`: the worst-case
    /// log-linearization gap over every depth the fixed point touches,
    /// amplified by the series' proximity to its pole.
    pub error_bound: f64,
}

/// Evaluate the closed form and certify it against the exact root.
///
/// Requires a shared per-slot size marginal and slot-independent weights
/// (bernoulli or monopoly allocation). The certified interval is the hull of
/// the size support, the solved root's offset from the oracle depth, and
/// their sum, so every price the fixed-point equation evaluates is covered.
///
/// A raw log-linearization gap of `g` over that hull lets the true damping
/// factor sit anywhere in `impact * e^{+-2g}`, and the coefficient responds
/// through `1/(1 - w_check * impact)`; the bound takes the worst case over
/// that interval and refuses (as a pole) when the inflated product reaches 1.
pub fn zeta_error_bound(game: &BatchGame, player: usize) -> Result<ZetaCertificate> {
    let marginal = game
        .flow()
        .common_marginal()
        .ok_or_else(|| Error::invalid("certificate needs one size marginal shared by all slots"))?;
    let weight = match game.alloc() {
        AllocationModel::IndependentBernoulli { weights, .. } => weights[player - 1],
        AllocationModel::Monopoly { player: p, .. } => {
            if player == *p {
                1.0
            } else {
                0.0
            }
        }
        _ => {
            return Err(Error::invalid(
                "certificate needs slot-independent weights (bernoulli or monopoly allocation)",
            ))
        }
    };
    if weight <= 0.0 {
        return Err(Error::NoParticipation { player });
    }
    let lambda = game.market().log_price_slope(game.x_oracle())?;
    let impact = marginal.mgf(lambda);
    let w_check = effective_weight(weight, game.k());
    let z = zeta(w_check, impact)?;

    let solution = game.solve(player)?;
    let offset = solution.s_star - game.x_oracle();
    let (r_lo, r_hi) = marginal.support();
    let lo = r_lo.min(offset.min(0.0)).min(offset.min(0.0) + r_lo.min(0.0));
    let hi = r_hi.max(offset.max(0.0)).max(offset.max(0.0) + r_hi.max(0.0));
    let gap = game.market().linearization_error(game.x_oracle(), lambda, lo, hi)?;
    let spread = impact * (2.0 * gap).exp_m1();
    let product = w_check * (impact + spread);
    if product >= 1.0 {
        return Err(Error::Pole { product });
    }
    // ln((1 - w_check * impact) / (1 - product)), written to survive the
    // cancellation when the gap is at rounding level
    let error_bound = -(-w_check * spread / (1.0 - w_check * impact)).ln_1p();
    Ok(ZetaCertificate {
        weight,
        w_check,
        lambda,
        impact,
        zeta: z,
        log_zeta: z.ln(),
        error_bound,
    })
}
