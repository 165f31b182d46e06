//! JSON experiment configuration: declarative blocks for the market, order
//! flow, slot allocation, and optional extension games, validated up front
//! and assembled into solver-ready models.

use laminate::equilibrium::InitialDepth;
use laminate::extensions::{
    FillMode, IdxLaw, LabelAllocation, LabelFlow, LabelledGame, LimitSandwich,
};
use laminate::{
    AllocationModel, BatchGame, Error, MarketCurve, OrderFlowModel, Result, SizeDistribution,
    SolverSettings,
};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_replicas() -> u64 {
    10_000
}

/// Top-level experiment description, one JSON document per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub market: MarketBlock,
    pub flow: FlowBlock,
    pub allocation: AllocBlock,
    pub x0: InitialDepth,
    pub x_oracle: f64,
    /// Closed interval of admissible target depths, `[lo, hi]`.
    pub action_space: (f64, f64),
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default)]
    pub seed: u64,
    /// Multiplies every order size before assembly; sweeps use this to
    /// shrink flow toward the small-order regime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_scale: Option<f64>,
    /// Quote per label instead of one price per batch.
    #[serde(default)]
    pub labelled: bool,
    /// Law of the label-to-slot assignment; defaults to uniform when
    /// `labelled` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idx: Option<IdxBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_order: Option<LimitBlock>,
    /// Directory for trace and summary files; the `--out` flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarketBlock {
    /// Weighted constant-product curve; `eps` clips the depth domain.
    Cpmm {
        alpha: f64,
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps: Option<f64>,
    },
    /// Log-linear price density; the reference point defaults to price one
    /// at the unwind depth.
    Exponential {
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x_ref: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p_ref: Option<f64>,
    },
    /// Infinitely deep venue quoting one fixed price.
    Reference { price: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowBlock {
    Deterministic {
        orders: Vec<f64>,
    },
    Iid {
        dist: SizeDistribution,
        #[serde(rename = "K")]
        k: usize,
    },
    Permuted {
        orders: Vec<f64>,
    },
    Empirical {
        samples: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AllocBlock {
    Monopoly {
        player: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    Bernoulli {
        weights: Vec<f64>,
    },
    /// `n` players at weight `1/n` each; the decentralization sweeps move `n`.
    EqualWeights {
        n: usize,
    },
    Permuted {
        base: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    Explicit {
        maps: Vec<ExplicitMap>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitMap {
    /// Winner of each slot `0..=K`.
    pub map: Vec<usize>,
    pub p: f64,
}

/// `"uniform"` or `{"known": [slot per label]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IdxBlock {
    Named(String),
    Known { known: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitBlock {
    pub r: f64,
    /// Fill bound as a depth: the order executes only while the pool depth
    /// after it stays at or below this.
    pub q_depth: f64,
    pub mode: LimitMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitMode {
    Partial,
    Aon,
}

/// Everything a command needs, assembled and cross-validated.
pub struct BuiltExperiment {
    pub game: BatchGame,
    pub labelled: Option<LabelledGame>,
    pub sandwich: Option<LimitSandwich>,
    pub solver: SolverSettings,
    pub replicas: u64,
    pub seed: u64,
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        if config.schema != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported schema {}, expected {}",
                config.schema, SCHEMA_VERSION
            )));
        }
        Ok(config)
    }

    pub fn build(&self) -> Result<BuiltExperiment> {
        let market = self.build_market()?;
        let mut flow = self.build_flow()?;
        if let Some(scale) = self.flow_scale {
            flow = flow.scale(scale)?;
        }
        let k = flow.k();
        let alloc = self.build_alloc(k)?;
        let game = BatchGame::new(
            market.clone(),
            flow,
            alloc,
            self.x0,
            self.x_oracle,
            self.action_space,
        )?;
        let labelled = if self.labelled {
            Some(self.build_labelled(&market)?)
        } else {
            if self.idx.is_some() {
                return Err(Error::invalid(
                    "\"idx\" is only meaningful with \"labelled\": true",
                ));
            }
            None
        };
        let sandwich = match &self.limit_order {
            Some(block) => Some(self.build_sandwich(&market, block)?),
            None => None,
        };
        Ok(BuiltExperiment {
            game,
            labelled,
            sandwich,
            solver: self.solver,
            replicas: self.replicas,
            seed: self.seed,
            output_dir: self.output_dir.clone(),
        })
    }

    fn build_market(&self) -> Result<MarketCurve> {
        match &self.market {
            MarketBlock::Cpmm { alpha, beta, eps } => match eps {
                Some(eps) => MarketCurve::cpmm_with_eps(*alpha, *beta, *eps),
                None => MarketCurve::cpmm(*alpha, *beta),
            },
            MarketBlock::Exponential {
                lambda,
                x_ref,
                p_ref,
            } => MarketCurve::exponential(
                *lambda,
                x_ref.unwrap_or(self.x_oracle),
                p_ref.unwrap_or(1.0),
            ),
            MarketBlock::Reference { price } => MarketCurve::reference(*price),
        }
    }

    fn build_flow(&self) -> Result<OrderFlowModel> {
        match &self.flow {
            FlowBlock::Deterministic { orders } => OrderFlowModel::deterministic(orders.clone()),
            FlowBlock::Iid { dist, k } => OrderFlowModel::iid(dist.clone(), *k),
            FlowBlock::Permuted { orders } => OrderFlowModel::permuted(orders.clone()),
            FlowBlock::Empirical { samples } => OrderFlowModel::empirical(samples.clone()),
        }
    }

    fn build_alloc(&self, k: usize) -> Result<AllocationModel> {
        match &self.allocation {
            AllocBlock::Monopoly { player, n } => {
                AllocationModel::monopoly(*player, n.unwrap_or(*player), k)
            }
            AllocBlock::Bernoulli { weights } => AllocationModel::bernoulli(weights.clone(), k),
            AllocBlock::EqualWeights { n } => {
                if *n == 0 {
                    return Err(Error::invalid("equal_weights needs at least one player"));
                }
                AllocationModel::bernoulli(vec![1.0 / *n as f64; *n], k)
            }
            AllocBlock::Permuted { base, n } => {
                let max = base.iter().copied().max().unwrap_or(0);
                AllocationModel::permuted(base.clone(), n.unwrap_or(max))
            }
            AllocBlock::Explicit { maps, n } => {
                let rows: Vec<(Vec<usize>, f64)> =
                    maps.iter().map(|m| (m.map.clone(), m.p)).collect();
                let max = rows
                    .iter()
                    .flat_map(|(m, _)| m.iter().copied())
                    .max()
                    .unwrap_or(0);
                AllocationModel::explicit(rows, n.unwrap_or(max))
            }
        }
    }

    fn build_labelled(&self, market: &MarketCurve) -> Result<LabelledGame> {
        let flow = match &self.flow {
            FlowBlock::Deterministic { orders } => LabelFlow::Known(orders.clone()),
            FlowBlock::Iid { dist, k } => LabelFlow::Iid {
                dist: dist.clone(),
                k: *k,
            },
            _ => {
                return Err(Error::invalid(
                    "labelled play needs deterministic or iid flow",
                ))
            }
        };
        let flow = match self.flow_scale {
            Some(s) => match flow {
                LabelFlow::Known(orders) => {
                    LabelFlow::Known(orders.into_iter().map(|r| r * s).collect())
                }
                LabelFlow::Iid { dist, k } => LabelFlow::Iid {
                    dist: scale_dist(&dist, s)?,
                    k,
                },
            },
            None => flow,
        };
        let alloc = match &self.allocation {
            AllocBlock::Monopoly { player, n } => LabelAllocation::Monopolist {
                player: *player,
                n: n.unwrap_or(*player),
            },
            AllocBlock::Bernoulli { weights } => LabelAllocation::IidCategorical {
                weights: weights.clone(),
            },
            AllocBlock::EqualWeights { n } => LabelAllocation::IidCategorical {
                weights: vec![1.0 / *n as f64; *n],
            },
            _ => {
                return Err(Error::invalid(
                    "labelled play needs a monopoly, bernoulli, or equal_weights allocation",
                ))
            }
        };
        let idx = match &self.idx {
            None => IdxLaw::UniformRandom,
            Some(IdxBlock::Named(name)) if name == "uniform" => IdxLaw::UniformRandom,
            Some(IdxBlock::Named(name)) => {
                return Err(Error::invalid(format!(
                    "unknown labelling law {name:?}, expected \"uniform\""
                )))
            }
            Some(IdxBlock::Known { known }) => IdxLaw::Known(known.clone()),
        };
        LabelledGame::new(
            market.clone(),
            flow,
            alloc,
            idx,
            self.x0,
            self.x_oracle,
            self.action_space,
        )
    }

    fn build_sandwich(&self, market: &MarketCurve, block: &LimitBlock) -> Result<LimitSandwich> {
        let x0 = self
            .x0
            .as_point()
            .ok_or_else(|| Error::invalid("limit_order needs a point-mass x0"))?;
        let mode = match block.mode {
            LimitMode::Partial => FillMode::PartialFill,
            LimitMode::Aon => FillMode::AllOrNothing,
        };
        LimitSandwich::new(
            market.clone(),
            self.x_oracle,
            x0,
            block.r,
            block.q_depth,
            mode,
            self.action_space,
        )
    }
}

fn scale_dist(dist: &SizeDistribution, s: f64) -> Result<SizeDistribution> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::invalid("flow_scale must be positive"));
    }
    match dist {
        SizeDistribution::PointMass { r } => SizeDistribution::point_mass(r * s),
        SizeDistribution::Uniform { lo, hi } => SizeDistribution::uniform(lo * s, hi * s),
        SizeDistribution::TruncatedNormal { mu, sigma, lo, hi } => {
            SizeDistribution::truncated_normal(mu * s, sigma * s, lo * s, hi * s)
        }
        SizeDistribution::TwoPoint {
            r_plus,
            r_minus,
            p_plus,
        } => SizeDistribution::two_point(r_plus * s, r_minus * s, *p_plus),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monopoly_json() -> &'static str {
        r#"{
            "schema": 1,
            "market": {"kind": "exponential", "lambda": 2.0},
            "flow": {"kind": "iid", "dist": {"kind": "point_mass", "r": 0.1}, "K": 1},
            "allocation": {"kind": "monopoly", "player": 1},
            "x0": {"kind": "point_mass", "x0": 1.0},
            "x_oracle": 1.0,
            "action_space": [0.2, 3.0],
            "seed": 7
        }"#
    }

    #[test]
    fn parse_build_and_solve_the_monopoly_example() {
        let config = ExperimentConfig::from_json(monopoly_json()).unwrap();
        let built = config.build().unwrap();
        assert_eq!(built.game.k(), 1);
        assert_eq!(built.seed, 7);
        assert_eq!(built.replicas, 10_000);
        let sol = built.game.solve(1).unwrap();
        let phi_exact = 1.0 / (2.0 - (-0.2f64).exp());
        assert!((sol.phi_bar - phi_exact).abs() < 1e-10);
    }

    #[test]
    fn round_trip_is_identity() {
        let config = ExperimentConfig::from_json(monopoly_json()).unwrap();
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(config, back);

        let full = r#"{
            "schema": 1,
            "market": {"kind": "cpmm", "alpha": 1.0, "beta": 1.0},
            "flow": {"kind": "two", "orders": [0.1]},
            "allocation": {"kind": "bernoulli", "weights": [0.5, 0.5]},
            "x0": {"kind": "uniform", "lo": 0.9, "hi": 1.1},
            "x_oracle": 1.0,
            "action_space": [0.3, 3.0]
        }"#
        .replace("\"two\", \"orders\"", "\"deterministic\", \"orders\"");
        let config = ExperimentConfig::from_json(&full).unwrap();
        let text = serde_json::to_string(&config).unwrap();
        assert_eq!(config, ExperimentConfig::from_json(&text).unwrap());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_schema() {
        let junk = monopoly_json().replace("\"seed\": 7", "\"sneed\": 7");
        assert!(ExperimentConfig::from_json(&junk).is_err());
        let wrong = monopoly_json().replace("\"schema\": 1", "\"schema\": 9");
        assert!(ExperimentConfig::from_json(&wrong).is_err());
    }

    #[test]
    fn equal_weights_expand_to_a_uniform_bernoulli() {
        let json = monopoly_json().replace(
            r#"{"kind": "monopoly", "player": 1}"#,
            r#"{"kind": "equal_weights", "n": 4}"#,
        );
        let built = ExperimentConfig::from_json(&json).unwrap().build().unwrap();
        assert_eq!(built.game.n_players(), 4);
        for player in 1..=4 {
            let w = built.game.alloc().primary_weight(player, 1).unwrap();
            assert!((w - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn flow_scale_shrinks_orders_before_assembly() {
        let json = monopoly_json().replace("\"seed\": 7", "\"seed\": 7, \"flow_scale\": 0.1");
        let built = ExperimentConfig::from_json(&json).unwrap().build().unwrap();
        let (lo, hi) = built.game.flow().support_hull();
        assert!((lo - 0.01).abs() < 1e-15 && (hi - 0.01).abs() < 1e-15);
    }

    #[test]
    fn labelled_block_builds_the_per_label_game() {
        let json = monopoly_json().replace(
            "\"seed\": 7",
            "\"seed\": 7, \"labelled\": true, \"idx\": \"uniform\"",
        );
        let built = ExperimentConfig::from_json(&json).unwrap().build().unwrap();
        let lg = built.labelled.expect("labelled game");
        assert_eq!(lg.k(), 1);
        assert_eq!(lg.participants(), vec![1]);
        // idx without labelled is a config error
        let stray = monopoly_json().replace("\"seed\": 7", "\"seed\": 7, \"idx\": \"uniform\"");
        assert!(ExperimentConfig::from_json(&stray).unwrap().build().is_err());
    }

    #[test]
    fn limit_block_builds_the_sandwich() {
        let json = monopoly_json().replace(
            "\"seed\": 7",
            r#""seed": 7, "limit_order": {"r": 0.1, "q_depth": 1.09, "mode": "aon"}"#,
        );
        let built = ExperimentConfig::from_json(&json).unwrap().build().unwrap();
        let ls = built.sandwich.expect("sandwich");
        assert!((ls.boundary() - 0.99).abs() < 1e-12);
    }
}
