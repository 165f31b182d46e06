//! Price densities and the depth calculus built on them.
//!
//! A market is a strictly decreasing price density `phi` on an open depth
//! domain. Moving the depth from `x` to `y` pays out the action integral
//! `A(x, y) = Phi(y) - Phi(x)`. Anchored at a pre-batch depth `x0`, the
//! opportunity cost of leaving the market at depth `x` is
//! `C(x) = phi(x0) * (x - x0) + Phi(x0) - Phi(x)`, a convex function with
//! minimum 0 at `x0` whose derivative is `phi(x0) - phi(x)`.

use crate::error::{Error, Result};
use crate::numerics;
use std::sync::Arc;

type PriceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum CurveKind {
    /// Weighted constant-product pool: `phi(x) = x^(-gamma)` with
    /// `gamma = 1 + alpha / beta`, clipped to `(eps, 1/eps)`.
    WeightedCpmm { gamma: f64, eps: f64 },
    /// `phi(x) = p_ref * exp(-lambda * (x - x_ref))`, exactly log-linear.
    Exponential { lambda: f64, x_ref: f64, p_ref: f64 },
    /// Infinitely deep venue quoting a constant price.
    Reference { price: f64 },
    /// Caller-supplied density, optionally with its antiderivative.
    Custom {
        phi: PriceFn,
        antideriv: Option<PriceFn>,
        lo: f64,
        hi: f64,
    },
}

/// A strictly decreasing price density on an open domain.
#[derive(Clone)]
pub struct MarketCurve {
    kind: CurveKind,
}

impl std::fmt::Debug for MarketCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            CurveKind::WeightedCpmm { gamma, eps } => {
                write!(f, "MarketCurve::WeightedCpmm {{ gamma: {gamma}, eps: {eps} }}")
            }
            CurveKind::Exponential { lambda, x_ref, p_ref } => write!(
                f,
                "MarketCurve::Exponential {{ lambda: {lambda}, x_ref: {x_ref}, p_ref: {p_ref} }}"
            ),
            CurveKind::Reference { price } => {
                write!(f, "MarketCurve::Reference {{ price: {price} }}")
            }
            CurveKind::Custom { lo, hi, .. } => {
                write!(f, "MarketCurve::Custom {{ domain: ({lo}, {hi}) }}")
            }
        }
    }
}

/// Exponent of the weighted constant-product density, `1 + alpha / beta`.
pub fn cpmm_gamma(alpha: f64, beta: f64) -> f64 {
    1.0 + alpha / beta
}

const CPMM_DEFAULT_EPS: f64 = 1e-6;

impl MarketCurve {
    /// Weighted constant-product market with pool weights `alpha`, `beta`.
    pub fn cpmm(alpha: f64, beta: f64) -> Result<Self> {
        Self::cpmm_with_eps(alpha, beta, CPMM_DEFAULT_EPS)
    }

    /// Constant-product market with an explicit domain clip `(eps, 1/eps)`.
    pub fn cpmm_with_eps(alpha: f64, beta: f64, eps: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid("cpmm weights must be positive and finite"));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid("cpmm domain clip must satisfy 0 < eps < 1"));
        }
        Ok(MarketCurve {
            kind: CurveKind::WeightedCpmm { gamma: cpmm_gamma(alpha, beta), eps },
        })
    }

    /// Exponential market `phi(x) = p_ref * exp(-lambda (x - x_ref))`.
    pub fn exponential(lambda: f64, x_ref: f64, p_ref: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("exponential decay rate must be positive"));
        }
        if !(p_ref > 0.0 && p_ref.is_finite()) || !x_ref.is_finite() {
            return Err(Error::invalid("exponential reference point must be finite, price positive"));
        }
        Ok(MarketCurve { kind: CurveKind::Exponential { lambda, x_ref, p_ref } })
    }

    /// Infinitely deep reference venue at a fixed price.
    pub fn reference(price: f64) -> Result<Self> {
        if !(price > 0.0 && price.is_finite()) {
            return Err(Error::invalid("reference price must be positive and finite"));
        }
        Ok(MarketCurve { kind: CurveKind::Reference { price } })
    }

    /// Caller-supplied density on a finite open domain `(lo, hi)`.
    ///
    /// Rejected unless `phi` is positive and strictly decreasing across a
    /// thousand-point probe of the domain. Without `antideriv` the action
    /// integral falls back to adaptive quadrature.
    pub fn custom(
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        antideriv: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("custom market needs a finite domain lo < hi"));
        }
        let n = 1000usize;
        // probe strictly inside the open interval
        let h = (hi - lo) / (n as f64 + 1.0);
        let mut prev = f64::INFINITY;
        for i in 1..=n {
            let x = lo + h * i as f64;
            let p = phi(x);
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::invalid(format!("custom density not positive at depth {x}")));
            }
            if p >= prev {
                return Err(Error::invalid(format!(
                    "custom density not strictly decreasing near depth {x}"
                )));
            }
            prev = p;
        }
        Ok(MarketCurve {
            kind: CurveKind::Custom {
                phi: Arc::new(phi),
                antideriv: antideriv.map(|f| Arc::from(f) as PriceFn),
                lo,
                hi,
            },
        })
    }

    /// Open domain endpoints of the density.
    pub fn domain(&self) -> (f64, f64) {
        match &self.kind {
            CurveKind::WeightedCpmm { eps, .. } => (*eps, 1.0 / eps),
            CurveKind::Exponential { .. } | CurveKind::Reference { .. } => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            CurveKind::Custom { lo, hi, .. } => (*lo, *hi),
        }
    }

    /// Whether `x` lies strictly inside the domain.
    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.domain();
        x > lo && x < hi && x.is_finite()
    }

    fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            let (lo, hi) = self.domain();
            Err(Error::Domain { depth: x, lo, hi })
        }
    }

    /// Marginal price at depth `x`.
    pub fn phi(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(match &self.kind {
            CurveKind::WeightedCpmm { gamma, .. } => x.powf(-gamma),
            CurveKind::Exponential { lambda, x_ref, p_ref } => {
                p_ref * (-lambda * (x - x_ref)).exp()
            }
            CurveKind::Reference { price } => *price,
            CurveKind::Custom { phi, .. } => phi(x),
        })
    }

    /// Payout of moving the depth from `x` to `y`: `Phi(y) - Phi(x)`.
    ///
    /// Positive when `y > x` (the mover sells into the market). Exact closed
    /// forms everywhere except antiderivative-free custom curves, which use
    /// adaptive quadrature to 1e-12.
    pub fn action(&self, x: f64, y: f64) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        match &self.kind {
            CurveKind::WeightedCpmm { gamma, .. } => {
                let g = 1.0 - gamma; // gamma > 1 so g < 0
                Ok((y.powf(g) - x.powf(g)) / g)
            }
            CurveKind::Exponential { lambda, x_ref, p_ref } => {
                let anti = |u: f64| -(p_ref / lambda) * (-lambda * (u - x_ref)).exp();
                Ok(anti(y) - anti(x))
            }
            CurveKind::Reference { price } => Ok(price * (y - x)),
            CurveKind::Custom { phi, antideriv, .. } => match antideriv {
                Some(anti) => Ok(anti(y) - anti(x)),
                None => {
                    let f = phi.clone();
                    numerics::adaptive_simpson(move |u| f(u), x, y, 1e-12)
                }
            },
        }
    }

    /// Price relative to the price at `x_oracle`: `phi(x) / phi(x_oracle)`.
    pub fn normalized_phi(&self, x_oracle: f64, x: f64) -> Result<f64> {
        Ok(self.phi(x)? / self.phi(x_oracle)?)
    }

    /// Local log-price decay rate `-(d/dx) ln phi (x)`.
    ///
    /// Analytic for the built-in curves; central difference (h = 1e-6) for
    /// custom densities.
    pub fn log_price_slope(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(match &self.kind {
            CurveKind::WeightedCpmm { gamma, .. } => gamma / x,
            CurveKind::Exponential { lambda, .. } => *lambda,
            CurveKind::Reference { .. } => 0.0,
            CurveKind::Custom { .. } => {
                let h = 1e-6;
                let up = self.phi(x + h)?;
                let dn = self.phi(x - h)?;
                -(up.ln() - dn.ln()) / (2.0 * h)
            }
        })
    }

    /// Worst-case gap between the log-price curve around `x_ref` and the
    /// exponential surrogate with decay `lambda`:
    /// `sup_{r in [r_lo, r_hi]} | ln(phi(x_ref + r)/phi(x_ref)) + lambda r |`.
    ///
    /// The supremum is taken over a 10^4-point grid including both endpoints,
    /// then sharpened by golden-section refinement (argument tolerance 1e-9)
    /// around the incumbent grid maximizer.
    pub fn linearization_error(
        &self,
        x_ref: f64,
        lambda: f64,
        r_lo: f64,
        r_hi: f64,
    ) -> Result<f64> {
        // negated so that NaN endpoints fail closed
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(r_lo <= r_hi) {
            return Err(Error::invalid("linearization interval must satisfy r_lo <= r_hi"));
        }
        self.check(x_ref)?;
        self.check(x_ref + r_lo)?;
        self.check(x_ref + r_hi)?;
        let ln_ref = self.phi(x_ref)?.ln();
        let gap = |r: f64| -> f64 {
            let p = match self.phi(x_ref + r) {
                Ok(p) => p,
                Err(_) => return f64::NEG_INFINITY,
            };
            (p.ln() - ln_ref + lambda * r).abs()
        };

        let n = 10_000usize;
        let h = (r_hi - r_lo) / n as f64;
        let mut best = f64::NEG_INFINITY;
        let mut best_i = 0usize;
        for i in 0..=n {
            let r = if i == n { r_hi } else { r_lo + h * i as f64 };
            let g = gap(r);
            if g > best {
                best = g;
                best_i = i;
            }
        }
        if h > 0.0 {
            let lo = r_lo + h * best_i.saturating_sub(1) as f64;
            let hi = (r_lo + h * (best_i + 1) as f64).min(r_hi);
            let refined = numerics::golden_section_max(gap, lo, hi, 1e-9);
            best = best.max(gap(refined));
        }
        Ok(best)
    }
}

/// Opportunity-cost calculus anchored at a pre-batch depth.
///
/// `cost(x)` is what the anchor-depth trader forgoes by ending at depth `x`
/// instead of unwinding at the anchor price; it is nonnegative, convex, and
/// vanishes exactly at the anchor.
#[derive(Debug, Clone)]
pub struct CostContext {
    market: MarketCurve,
    anchor: f64,
    anchor_price: f64,
}

impl CostContext {
    pub fn new(market: MarketCurve, anchor: f64) -> Result<Self> {
        let anchor_price = market.phi(anchor)?;
        Ok(CostContext { market, anchor, anchor_price })
    }

    pub fn market(&self) -> &MarketCurve {
        &self.market
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    /// Marginal price at the anchor depth.
    pub fn anchor_price(&self) -> f64 {
        self.anchor_price
    }

    /// `C(x) = phi(anchor) * (x - anchor) + A(x, anchor)`.
    pub fn cost(&self, x: f64) -> Result<f64> {
        Ok(self.anchor_price * (x - self.anchor) + self.market.action(x, self.anchor)?)
    }

    /// `C'(x) = phi(anchor) - phi(x)`; negative below the anchor, positive above.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        Ok(self.anchor_price - self.market.phi(x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::adaptive_simpson;
    use approx::assert_relative_eq;

    fn cpmm11() -> MarketCurve {
        MarketCurve::cpmm(1.0, 1.0).unwrap()
    }

    fn exp2() -> MarketCurve {
        MarketCurve::exponential(2.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn phi_closed_forms() {
        assert_relative_eq!(cpmm11().phi(1.0).unwrap(), 1.0);
        assert_relative_eq!(cpmm11().phi(2.0).unwrap(), 0.25);
        assert_relative_eq!(exp2().phi(1.1).unwrap(), (-0.2f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(
            MarketCurve::reference(3.0).unwrap().phi(17.0).unwrap(),
            3.0
        );
        // weighted pool: gamma = 1 + 1/3
        let m = MarketCurve::cpmm(1.0, 3.0).unwrap();
        assert_relative_eq!(m.phi(2.0).unwrap(), 2.0f64.powf(-4.0 / 3.0), epsilon = 1e-15);
    }

    #[test]
    fn phi_strictly_decreasing_on_grid() {
        for m in [cpmm11(), exp2(), MarketCurve::cpmm(3.0, 1.0).unwrap()] {
            let mut prev = f64::INFINITY;
            for i in 0..1000 {
                let x = 0.2 + 2.0 * i as f64 / 1000.0;
                let p = m.phi(x).unwrap();
                assert!(p < prev, "density must strictly decrease, failed at {x}");
                prev = p;
            }
        }
    }

    #[test]
    fn phi_outside_domain_errors() {
        let m = cpmm11();
        assert!(matches!(m.phi(0.0), Err(Error::Domain { .. })));
        assert!(matches!(m.phi(-1.0), Err(Error::Domain { .. })));
        assert!(matches!(m.phi(2e6), Err(Error::Domain { .. })));
    }

    #[test]
    fn action_unit_pool_from_one_to_two() {
        // independent quadrature oracle for the closed form
        let oracle = adaptive_simpson(|u| u.powi(-2), 1.0, 2.0, 1e-13).unwrap();
        let a = cpmm11().action(1.0, 2.0).unwrap();
        assert_relative_eq!(a, 0.5, epsilon = 1e-12);
        assert_relative_eq!(a, oracle, epsilon = 1e-10);
    }

    #[test]
    fn action_zero_width_and_antisymmetry() {
        for m in [cpmm11(), exp2()] {
            assert_eq!(m.action(1.3, 1.3).unwrap(), 0.0);
            let ab = m.action(0.9, 1.4).unwrap();
            let ba = m.action(1.4, 0.9).unwrap();
            assert_relative_eq!(ab, -ba, epsilon = 1e-14);
        }
    }

    #[test]
    fn action_is_additive_along_the_path() {
        for m in [cpmm11(), exp2(), MarketCurve::cpmm(2.0, 5.0).unwrap()] {
            for (x, y, z) in [(0.8, 1.0, 1.5), (1.2, 0.7, 2.0), (1.0, 1.0, 0.6)] {
                let direct = m.action(x, z).unwrap();
                let split = m.action(x, y).unwrap() + m.action(y, z).unwrap();
                assert_relative_eq!(direct, split, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn custom_quadrature_matches_closed_form() {
        // same density as the unit pool, but without an antiderivative
        let m = MarketCurve::custom(|x| x.powi(-2), None, 1e-3, 1e3).unwrap();
        let exact = cpmm11();
        for (x, y) in [(1.0, 2.0), (0.5, 1.0), (1.7, 0.4)] {
            assert_relative_eq!(
                m.action(x, y).unwrap(),
                exact.action(x, y).unwrap(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn custom_with_antiderivative_uses_it() {
        let m = MarketCurve::custom(
            |x| x.powi(-2),
            Some(Box::new(|x: f64| -1.0 / x)),
            1e-3,
            1e3,
        )
        .unwrap();
        assert_relative_eq!(m.action(1.0, 2.0).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn custom_rejects_non_monotone_density() {
        let r = MarketCurve::custom(|x| (x - 1.0).powi(2) + 0.1, None, 0.5, 1.5);
        assert!(matches!(r, Err(Error::Invalid(_))));
        let r = MarketCurve::custom(|x| x - 10.0, None, 0.5, 1.5);
        assert!(matches!(r, Err(Error::Invalid(_))), "negative density must be rejected");
    }

    #[test]
    fn cost_vanishes_at_anchor_and_is_positive_elsewhere() {
        for m in [cpmm11(), exp2()] {
            let c = CostContext::new(m, 1.0).unwrap();
            assert_relative_eq!(c.cost(1.0).unwrap(), 0.0, epsilon = 1e-15);
            for x in [0.3, 0.7, 0.99, 1.01, 1.6, 2.4] {
                assert!(c.cost(x).unwrap() > 0.0, "cost must be positive at {x}");
            }
        }
    }

    #[test]
    fn cost_unit_pool_closed_values() {
        let c = CostContext::new(cpmm11(), 1.0).unwrap();
        // C(x) = (x - 1) + (1/x - 1) for the unit pool anchored at 1
        assert_relative_eq!(c.cost(2.0).unwrap(), 0.5, epsilon = 1e-14);
        assert_relative_eq!(c.cost(0.5).unwrap(), 0.5, epsilon = 1e-14);
        assert_relative_eq!(c.cost(1.09).unwrap(), 0.09 + 1.0 / 1.09 - 1.0, epsilon = 1e-14);
    }

    #[test]
    fn cost_derivative_closed_values() {
        let c = CostContext::new(cpmm11(), 1.0).unwrap();
        assert_relative_eq!(c.derivative(2.0).unwrap(), 0.75, epsilon = 1e-15);
        let ce = CostContext::new(exp2(), 1.0).unwrap();
        assert_relative_eq!(
            ce.derivative(1.1).unwrap(),
            1.0 - (-0.2f64).exp(),
            epsilon = 1e-15
        );
        assert_relative_eq!(ce.derivative(1.0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cost_derivative_matches_central_differences() {
        for m in [cpmm11(), exp2(), MarketCurve::cpmm(2.0, 3.0).unwrap()] {
            let c = CostContext::new(m, 1.0).unwrap();
            for i in 0..1000 {
                let x = 0.4 + 1.6 * i as f64 / 999.0;
                let h = 1e-5 * x;
                let fd = (c.cost(x + h).unwrap() - c.cost(x - h).unwrap()) / (2.0 * h);
                let d = c.derivative(x).unwrap();
                // relative check with an absolute floor for the near-anchor zero crossing
                assert!(
                    (fd - d).abs() <= 1e-6 * d.abs().max(1e-4),
                    "derivative mismatch at {x}: fd={fd}, d={d}"
                );
            }
        }
    }

    #[test]
    fn cost_is_convex_on_grid() {
        for m in [cpmm11(), exp2()] {
            let c = CostContext::new(m, 1.0).unwrap();
            let n = 1000;
            let h = 1.6 / n as f64;
            for i in 1..n {
                let x = 0.4 + h * i as f64;
                let second =
                    c.cost(x - h).unwrap() - 2.0 * c.cost(x).unwrap() + c.cost(x + h).unwrap();
                assert!(second > -1e-12, "second difference negative at {x}: {second}");
            }
        }
    }

    #[test]
    fn anchor_shift_changes_cost_by_affine_term() {
        for m in [cpmm11(), exp2()] {
            let c0 = CostContext::new(m.clone(), 0.9).unwrap();
            let c1 = CostContext::new(m.clone(), 1.2).unwrap();
            let g = |x: f64| c0.cost(x).unwrap() - c1.cost(x).unwrap();
            let (x1, x2, x3) = (0.6, 1.0, 1.7);
            let slope12 = (g(x2) - g(x1)) / (x2 - x1);
            let slope13 = (g(x3) - g(x1)) / (x3 - x1);
            assert_relative_eq!(slope12, slope13, epsilon = 1e-9);
            // the affine slope is the anchor-price difference
            let expect = m.phi(0.9).unwrap() - m.phi(1.2).unwrap();
            assert_relative_eq!(slope12, expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn cyclic_arbitrage_identity() {
        // depth move x -> y on the curve plus unwinding at the anchor price
        // is worth C(x) - C(y)
        for m in [cpmm11(), exp2()] {
            let c = CostContext::new(m.clone(), 1.0).unwrap();
            let p = c.anchor_price();
            for (x, y) in [(0.8, 1.3), (1.5, 0.6), (1.0, 1.4)] {
                let direct = m.action(x, y).unwrap() + p * (x - y);
                let via_cost = c.cost(x).unwrap() - c.cost(y).unwrap();
                assert_relative_eq!(direct, via_cost, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn gamma_matches_numeric_log_slope() {
        for (a, b) in [(1.0, 1.0), (1.0, 3.0), (3.0, 1.0)] {
            let g = cpmm_gamma(a, b);
            let m = MarketCurve::cpmm(a, b).unwrap();
            let h = 1e-7;
            let numeric = -(m.phi(1.0 + h).unwrap().ln() - m.phi(1.0 - h).unwrap().ln()) / (2.0 * h);
            assert_relative_eq!(g, numeric, epsilon = 1e-6);
            assert_relative_eq!(m.log_price_slope(1.0).unwrap(), g, epsilon = 1e-15);
        }
        assert_relative_eq!(cpmm_gamma(1.0, 3.0), 4.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(cpmm_gamma(3.0, 1.0), 4.0, epsilon = 1e-15);
    }

    #[test]
    fn log_price_slope_other_kinds() {
        assert_relative_eq!(exp2().log_price_slope(0.77).unwrap(), 2.0);
        assert_relative_eq!(
            MarketCurve::reference(2.0).unwrap().log_price_slope(1.0).unwrap(),
            0.0
        );
        let m = MarketCurve::custom(|x| (-1.5 * x).exp(), None, 0.1, 10.0).unwrap();
        assert_relative_eq!(m.log_price_slope(1.0).unwrap(), 1.5, epsilon = 1e-4);
    }

    #[test]
    fn linearization_error_unit_pool_wide_interval() {
        // sup_r |ln((1+r)^-2) + 2r| on [-0.1, 0.1] is attained at r = -0.1:
        // |-2 ln 0.9 - 0.2| = 0.0107210313...
        let m = cpmm11();
        let c = m.linearization_error(1.0, 2.0, -0.1, 0.1).unwrap();
        let oracle = (-2.0 * (0.9f64).ln()) - 0.2;
        assert_relative_eq!(c, oracle, epsilon = 1e-9);
        assert!((c - 0.0107).abs() < 5e-4);
    }

    #[test]
    fn linearization_error_unit_pool_narrow_interval() {
        let m = cpmm11();
        let c = m.linearization_error(1.0, 2.0, -0.01, 0.01).unwrap();
        let oracle = (-2.0 * (0.99f64).ln()) - 0.02;
        assert_relative_eq!(c, oracle, epsilon = 1e-11);
        assert!((c - 1.01e-4).abs() < 1e-5);
    }

    #[test]
    fn linearization_error_exponential_is_zero() {
        let c = exp2().linearization_error(1.0, 2.0, -0.3, 0.3).unwrap();
        assert!(c < 1e-12, "exponential curve is exactly log-linear, got {c}");
    }

    #[test]
    fn linearization_error_interior_maximum_is_refined() {
        // with lambda a bit off the true slope the gap can peak inside the
        // interval; the refined value must beat every coarse-grid value
        let m = cpmm11();
        let c = m.linearization_error(1.0, 1.9, -0.1, 0.1).unwrap();
        let mut coarse: f64 = 0.0;
        for i in 0..=200 {
            let r = -0.1 + 0.2 * i as f64 / 200.0;
            let g = ((1.0 + r).powi(-2).ln() + 1.9 * r).abs();
            coarse = coarse.max(g);
        }
        assert!(c >= coarse - 1e-12);
    }

    #[test]
    fn linearization_error_escaping_domain_errors() {
        let m = MarketCurve::custom(|x| x.powi(-2), None, 0.5, 1.5).unwrap();
        assert!(matches!(
            m.linearization_error(1.0, 2.0, -0.8, 0.1),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn normalized_phi_values() {
        assert_relative_eq!(cpmm11().normalized_phi(1.0, 2.0).unwrap(), 0.25);
        assert_relative_eq!(cpmm11().normalized_phi(1.3, 1.3).unwrap(), 1.0);
        // reference-price scale cancels
        let m = MarketCurve::exponential(2.0, 1.0, 5.0).unwrap();
        assert_relative_eq!(
            m.normalized_phi(1.0, 1.1).unwrap(),
            (-0.2f64).exp(),
            epsilon = 1e-15
        );
    }
}
