//! Liquidity order flow: per-slot size laws and whole-batch flow models.
//!
//! Sizes are signed depth increments (positive = sell pressure). The solver
//! only ever consumes per-slot marginals; the simulator consumes joint draws.
//! Both views live here so they cannot drift apart.

use crate::error::{Error, Result};
use crate::market::MarketCurve;
use crate::numerics;
use rand::Rng;

/// Law of a single order size.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SizeDistribution {
    PointMass { r: f64 },
    Uniform { lo: f64, hi: f64 },
    TruncatedNormal { mu: f64, sigma: f64, lo: f64, hi: f64 },
    TwoPoint { r_plus: f64, r_minus: f64, p_plus: f64 },
}

impl SizeDistribution {
    pub fn point_mass(r: f64) -> Result<Self> {
        if !r.is_finite() {
            return Err(Error::invalid("point mass size must be finite"));
        }
        Ok(SizeDistribution::PointMass { r })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("uniform size law needs finite lo < hi"));
        }
        Ok(SizeDistribution::Uniform { lo, hi })
    }

    pub fn truncated_normal(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("truncated normal needs sigma > 0"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("truncated normal needs finite lo < hi"));
        }
        let d = SizeDistribution::TruncatedNormal { mu, sigma, lo, hi };
        if d.truncation_mass() <= 1e-300 {
            return Err(Error::invalid("truncated normal carries no mass on [lo, hi]"));
        }
        Ok(d)
    }

    pub fn two_point(r_plus: f64, r_minus: f64, p_plus: f64) -> Result<Self> {
        if !(r_plus.is_finite() && r_minus.is_finite()) {
            return Err(Error::invalid("two-point sizes must be finite"));
        }
        if !(0.0..=1.0).contains(&p_plus) {
            return Err(Error::invalid("two-point probability must lie in [0, 1]"));
        }
        Ok(SizeDistribution::TwoPoint { r_plus, r_minus, p_plus })
    }

    /// Closed support `[lo, hi]`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            SizeDistribution::PointMass { r } => (r, r),
            SizeDistribution::Uniform { lo, hi } => (lo, hi),
            SizeDistribution::TruncatedNormal { lo, hi, .. } => (lo, hi),
            SizeDistribution::TwoPoint { r_plus, r_minus, .. } => {
                (r_plus.min(r_minus), r_plus.max(r_minus))
            }
        }
    }

    /// Probability mass the untruncated normal assigns to `[lo, hi]`.
    fn truncation_mass(&self) -> f64 {
        match *self {
            SizeDistribution::TruncatedNormal { mu, sigma, lo, hi } => {
                numerics::norm_cdf((hi - mu) / sigma) - numerics::norm_cdf((lo - mu) / sigma)
            }
            _ => 1.0,
        }
    }

    /// Damping transform `E[exp(-lambda r)]`, exact in closed form.
    ///
    /// For the truncated normal the Gaussian MGF is corrected by the shifted
    /// truncation mass; all supports are bounded so every `lambda` is fine.
    pub fn mgf(&self, lambda: f64) -> f64 {
        let t = -lambda;
        match *self {
            SizeDistribution::PointMass { r } => (t * r).exp(),
            SizeDistribution::Uniform { lo, hi } => {
                if t.abs() < 1e-300 {
                    1.0
                } else {
                    ((t * hi).exp() - (t * lo).exp()) / (t * (hi - lo))
                }
            }
            SizeDistribution::TruncatedNormal { mu, sigma, lo, hi } => {
                let a = (lo - mu) / sigma;
                let b = (hi - mu) / sigma;
                let mass = numerics::norm_cdf(b) - numerics::norm_cdf(a);
                let shifted =
                    numerics::norm_cdf(b - sigma * t) - numerics::norm_cdf(a - sigma * t);
                (mu * t + 0.5 * sigma * sigma * t * t).exp() * shifted / mass
            }
            SizeDistribution::TwoPoint { r_plus, r_minus, p_plus } => {
                p_plus * (t * r_plus).exp() + (1.0 - p_plus) * (t * r_minus).exp()
            }
        }
    }

    /// Atoms `(value, prob)` when the law is finitely supported.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            SizeDistribution::PointMass { r } => Some(vec![(r, 1.0)]),
            SizeDistribution::TwoPoint { r_plus, r_minus, p_plus } => {
                if r_plus == r_minus {
                    Some(vec![(r_plus, 1.0)])
                } else {
                    Some(vec![(r_plus, p_plus), (r_minus, 1.0 - p_plus)])
                }
            }
            _ => None,
        }
    }

    /// Draw one size.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SizeDistribution::PointMass { r } => r,
            SizeDistribution::Uniform { lo, hi } => rng.gen_range(lo..hi),
            SizeDistribution::TruncatedNormal { mu, sigma, lo, hi } => {
                // inverse CDF by bisection: deterministic, no rejection loop
                let c_lo = numerics::norm_cdf((lo - mu) / sigma);
                let c_hi = numerics::norm_cdf((hi - mu) / sigma);
                let target = c_lo + rng.gen::<f64>() * (c_hi - c_lo);
                let (mut a, mut b) = (lo, hi);
                for _ in 0..90 {
                    let m = 0.5 * (a + b);
                    if numerics::norm_cdf((m - mu) / sigma) < target {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                0.5 * (a + b)
            }
            SizeDistribution::TwoPoint { r_plus, r_minus, p_plus } => {
                if rng.gen::<f64>() < p_plus {
                    r_plus
                } else {
                    r_minus
                }
            }
        }
    }

    /// `E[phi(base + r)]` under this law.
    ///
    /// Atoms are summed exactly; the uniform law uses the action closed form
    /// `A(base+lo, base+hi) / (hi-lo)`; the truncated normal integrates
    /// `phi(base+u)` against its density by composite Gauss-Legendre to 1e-12.
    pub fn expected_phi(&self, market: &MarketCurve, base: f64) -> Result<f64> {
        match *self {
            SizeDistribution::PointMass { r } => market.phi(base + r),
            SizeDistribution::TwoPoint { r_plus, r_minus, p_plus } => Ok(
                p_plus * market.phi(base + r_plus)? + (1.0 - p_plus) * market.phi(base + r_minus)?,
            ),
            SizeDistribution::Uniform { lo, hi } => {
                Ok(market.action(base + lo, base + hi)? / (hi - lo))
            }
            SizeDistribution::TruncatedNormal { mu, sigma, lo, hi } => {
                // validate the endpoints up front so the integrand stays total
                market.phi(base + lo)?;
                market.phi(base + hi)?;
                let mass = self.truncation_mass();
                let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                let integrand = |u: f64| {
                    let z = (u - mu) / sigma;
                    market.phi(base + u).unwrap_or(0.0) * norm * (-0.5 * z * z).exp()
                };
                Ok(numerics::integrate_gl(integrand, lo, hi, 1e-12)? / mass)
            }
        }
    }
}

/// Marginal law of one liquidity slot, as consumed by the solver.
#[derive(Debug, Clone, PartialEq)]
pub enum SlotMarginal {
    Law(SizeDistribution),
    /// Finitely many sizes with probabilities summing to one.
    Atoms(Vec<(f64, f64)>),
}

impl SlotMarginal {
    pub fn support(&self) -> (f64, f64) {
        match self {
            SlotMarginal::Law(d) => d.support(),
            SlotMarginal::Atoms(atoms) => atoms.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), &(v, _)| (lo.min(v), hi.max(v)),
            ),
        }
    }

    pub fn mgf(&self, lambda: f64) -> f64 {
        match self {
            SlotMarginal::Law(d) => d.mgf(lambda),
            SlotMarginal::Atoms(atoms) => {
                atoms.iter().map(|&(v, p)| p * (-lambda * v).exp()).sum()
            }
        }
    }

    pub fn expected_phi(&self, market: &MarketCurve, base: f64) -> Result<f64> {
        match self {
            SlotMarginal::Law(d) => d.expected_phi(market, base),
            SlotMarginal::Atoms(atoms) => {
                let mut acc = 0.0;
                for &(v, p) in atoms {
                    acc += p * market.phi(base + v)?;
                }
                Ok(acc)
            }
        }
    }

    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            SlotMarginal::Law(d) => d.atoms(),
            SlotMarginal::Atoms(atoms) => Some(atoms.clone()),
        }
    }
}

/// Sort by value and merge equal atoms; probabilities must sum to ~1.
pub(crate) fn normalized_atoms(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (v, p) in atoms {
        match merged.last_mut() {
            Some(last) if last.0 == v => last.1 += p,
            _ => merged.push((v, p)),
        }
    }
    merged
}

/// Joint law of the K liquidity order sizes in slot order.
#[derive(Debug, Clone, PartialEq)]
pub enum OrderFlowModel {
    /// Known vector `r_1..r_K`.
    Deterministic { orders: Vec<f64> },
    /// Independent draws from one marginal in every slot.
    IidMarginal { dist: SizeDistribution, k: usize },
    /// A known multiset of sizes in uniformly random slot order.
    PermutedVector { orders: Vec<f64> },
    /// Bootstrap resampling of recorded batches (rows are full batches).
    Empirical { samples: Vec<Vec<f64>> },
}

impl OrderFlowModel {
    pub fn deterministic(orders: Vec<f64>) -> Result<Self> {
        validate_orders(&orders)?;
        Ok(OrderFlowModel::Deterministic { orders })
    }

    pub fn iid(dist: SizeDistribution, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("flow needs at least one slot"));
        }
        Ok(OrderFlowModel::IidMarginal { dist, k })
    }

    pub fn permuted(orders: Vec<f64>) -> Result<Self> {
        validate_orders(&orders)?;
        Ok(OrderFlowModel::PermutedVector { orders })
    }

    pub fn empirical(samples: Vec<Vec<f64>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("empirical flow needs at least one recorded batch"));
        }
        let k = samples[0].len();
        for row in &samples {
            if row.len() != k {
                return Err(Error::invalid("empirical batches must all have the same length"));
            }
            validate_orders(row)?;
        }
        Ok(OrderFlowModel::Empirical { samples })
    }

    /// Number of liquidity slots K.
    pub fn k(&self) -> usize {
        match self {
            OrderFlowModel::Deterministic { orders } => orders.len(),
            OrderFlowModel::IidMarginal { k, .. } => *k,
            OrderFlowModel::PermutedVector { orders } => orders.len(),
            OrderFlowModel::Empirical { samples } => samples[0].len(),
        }
    }

    /// Draw a full batch `r_1..r_K`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            OrderFlowModel::Deterministic { orders } => orders.clone(),
            OrderFlowModel::IidMarginal { dist, k } => {
                (0..*k).map(|_| dist.sample(rng)).collect()
            }
            OrderFlowModel::PermutedVector { orders } => {
                let mut v = orders.clone();
                // Fisher-Yates
                for i in (1..v.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    v.swap(i, j);
                }
                v
            }
            OrderFlowModel::Empirical { samples } => {
                samples[rng.gen_range(0..samples.len())].clone()
            }
        }
    }

    /// Marginal law of slot `k` (1-based).
    pub fn slot_marginal(&self, k: usize) -> Result<SlotMarginal> {
        if k == 0 || k > self.k() {
            return Err(Error::invalid(format!(
                "slot {k} out of range 1..={}",
                self.k()
            )));
        }
        Ok(match self {
            OrderFlowModel::Deterministic { orders } => {
                SlotMarginal::Atoms(vec![(orders[k - 1], 1.0)])
            }
            OrderFlowModel::IidMarginal { dist, .. } => SlotMarginal::Law(dist.clone()),
            OrderFlowModel::PermutedVector { orders } => {
                let p = 1.0 / orders.len() as f64;
                SlotMarginal::Atoms(normalized_atoms(
                    orders.iter().map(|&v| (v, p)).collect(),
                ))
            }
            OrderFlowModel::Empirical { samples } => {
                let p = 1.0 / samples.len() as f64;
                SlotMarginal::Atoms(normalized_atoms(
                    samples.iter().map(|row| (row[k - 1], p)).collect(),
                ))
            }
        })
    }

    /// One marginal shared by every slot, when that is structurally true.
    pub fn common_marginal(&self) -> Option<SlotMarginal> {
        match self {
            OrderFlowModel::IidMarginal { dist, .. } => Some(SlotMarginal::Law(dist.clone())),
            OrderFlowModel::PermutedVector { .. } => self.slot_marginal(1).ok(),
            OrderFlowModel::Deterministic { orders } => {
                if orders.windows(2).all(|w| w[0] == w[1]) {
                    Some(SlotMarginal::Atoms(vec![(orders[0], 1.0)]))
                } else {
                    None
                }
            }
            OrderFlowModel::Empirical { .. } => None,
        }
    }

    /// Interval hull of all slot supports.
    pub fn support_hull(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 1..=self.k() {
            let (l, h) = self.slot_marginal(k).expect("slot in range").support();
            lo = lo.min(l);
            hi = hi.max(h);
        }
        (lo, hi)
    }

    /// Full joint support with probabilities, when finite and not larger
    /// than `limit` outcomes. Used by the exact best-response oracle.
    pub fn enumerate_joint(&self, limit: usize) -> Option<Vec<(Vec<f64>, f64)>> {
        match self {
            OrderFlowModel::Deterministic { orders } => Some(vec![(orders.clone(), 1.0)]),
            OrderFlowModel::IidMarginal { dist, k } => {
                let atoms = dist.atoms()?;
                let total = atoms.len().checked_pow(*k as u32)?;
                if total > limit {
                    return None;
                }
                let mut out: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
                for _ in 0..*k {
                    let mut next = Vec::with_capacity(out.len() * atoms.len());
                    for (prefix, p) in &out {
                        for &(v, q) in &atoms {
                            let mut row = prefix.clone();
                            row.push(v);
                            next.push((row, p * q));
                        }
                    }
                    out = next;
                }
                Some(out)
            }
            OrderFlowModel::PermutedVector { orders } => {
                let n = orders.len();
                let total: usize = (1..=n).product();
                if total > limit {
                    return None;
                }
                let p = 1.0 / total as f64;
                let mut perms = Vec::with_capacity(total);
                let mut v = orders.clone();
                heap_permutations(&mut v, &mut perms);
                Some(perms.into_iter().map(|row| (row, p)).collect())
            }
            OrderFlowModel::Empirical { samples } => {
                if samples.len() > limit {
                    return None;
                }
                let p = 1.0 / samples.len() as f64;
                Some(samples.iter().map(|row| (row.clone(), p)).collect())
            }
        }
    }

    /// Same flow with every size multiplied by `factor > 0`.
    pub fn scale(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::invalid("flow scale factor must be positive and finite"));
        }
        Ok(match self {
            OrderFlowModel::Deterministic { orders } => OrderFlowModel::Deterministic {
                orders: orders.iter().map(|r| r * factor).collect(),
            },
            OrderFlowModel::IidMarginal { dist, k } => OrderFlowModel::IidMarginal {
                dist: scale_dist(dist, factor),
                k: *k,
            },
            OrderFlowModel::PermutedVector { orders } => OrderFlowModel::PermutedVector {
                orders: orders.iter().map(|r| r * factor).collect(),
            },
            OrderFlowModel::Empirical { samples } => OrderFlowModel::Empirical {
                samples: samples
                    .iter()
                    .map(|row| row.iter().map(|r| r * factor).collect())
                    .collect(),
            },
        })
    }
}

fn scale_dist(d: &SizeDistribution, c: f64) -> SizeDistribution {
    match *d {
        SizeDistribution::PointMass { r } => SizeDistribution::PointMass { r: r * c },
        SizeDistribution::Uniform { lo, hi } => {
            SizeDistribution::Uniform { lo: lo * c, hi: hi * c }
        }
        SizeDistribution::TruncatedNormal { mu, sigma, lo, hi } => {
            SizeDistribution::TruncatedNormal {
                mu: mu * c,
                sigma: sigma * c,
                lo: lo * c,
                hi: hi * c,
            }
        }
        SizeDistribution::TwoPoint { r_plus, r_minus, p_plus } => SizeDistribution::TwoPoint {
            r_plus: r_plus * c,
            r_minus: r_minus * c,
            p_plus,
        },
    }
}

fn validate_orders(orders: &[f64]) -> Result<()> {
    if orders.is_empty() {
        return Err(Error::invalid("flow needs at least one slot"));
    }
    if orders.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("order sizes must be finite"));
    }
    Ok(())
}

fn heap_permutations(v: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
    fn rec(k: usize, v: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if k <= 1 {
            out.push(v.clone());
            return;
        }
        for i in 0..k {
            rec(k - 1, v, out);
            if k.is_multiple_of(2) {
                v.swap(i, k - 1);
            } else {
                v.swap(0, k - 1);
            }
        }
    }
    let n = v.len();
    rec(n, v, out);
}
