//! Slot allocation: who holds each arbitrage slot 0..K.
//!
//! The solver needs two summaries per player: the primary weight
//! `a_{i,k} = P[alpha(k) = i]` and the secondary weight
//! `b_{i,k} = P[alpha(k-1) = i | alpha(k) = i]`, with `b_{i,0} = 0` because
//! slot 0 has no predecessor. Every kind here draws the slot map
//! independently of the order sizes (blind allocation).

use crate::error::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum AllocationModel {
    /// One player holds every slot.
    Monopoly { player: usize, n: usize, k: usize },
    /// Each slot drawn independently from fixed weights summing to one.
    IndependentBernoulli { weights: Vec<f64>, k: usize },
    /// A fixed multiset of holders in uniformly random slot order.
    PermutedDeterministic { base: Vec<usize>, n: usize },
    /// Arbitrary joint law given as an explicit table of maps.
    ExplicitJoint { maps: Vec<(Vec<usize>, f64)>, n: usize },
}

impl AllocationModel {
    pub fn monopoly(player: usize, n: usize, k: usize) -> Result<Self> {
        if n == 0 || player == 0 || player > n {
            return Err(Error::invalid("monopoly player must lie in 1..=n"));
        }
        if k == 0 {
            return Err(Error::invalid("allocation needs at least one liquidity slot"));
        }
        Ok(AllocationModel::Monopoly { player, n, k })
    }

    pub fn bernoulli(weights: Vec<f64>, k: usize) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("bernoulli allocation needs at least one weight"));
        }
        if k == 0 {
            return Err(Error::invalid("allocation needs at least one liquidity slot"));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::invalid("bernoulli weights must lie in [0, 1]"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "bernoulli weights must sum to 1, got {total}"
            )));
        }
        Ok(AllocationModel::IndependentBernoulli { weights, k })
    }

    pub fn permuted(base: Vec<usize>, n: usize) -> Result<Self> {
        if base.len() < 2 {
            return Err(Error::invalid("permuted base map needs K+1 >= 2 slots"));
        }
        if base.iter().any(|&p| p == 0 || p > n) {
            return Err(Error::invalid("permuted base map entries must lie in 1..=n"));
        }
        Ok(AllocationModel::PermutedDeterministic { base, n })
    }

    /// Joint table of slot maps. Kept small so exhaustive structure checks
    /// stay cheap: `(K+1) * log2(n)` must not exceed 24 bits of state.
    pub fn explicit(maps: Vec<(Vec<usize>, f64)>, n: usize) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::invalid("explicit allocation table is empty"));
        }
        let len = maps[0].0.len();
        if len < 2 {
            return Err(Error::invalid("explicit maps need K+1 >= 2 slots"));
        }
        let bits = len as f64 * (n.max(2) as f64).log2();
        if bits > 24.0 {
            return Err(Error::invalid(
                "explicit allocation state space exceeds 24 bits; use a structured kind",
            ));
        }
        let mut total = 0.0;
        for (map, p) in &maps {
            if map.len() != len {
                return Err(Error::invalid("explicit maps must all cover the same slots"));
            }
            if map.iter().any(|&q| q == 0 || q > n) {
                return Err(Error::invalid("explicit map entries must lie in 1..=n"));
            }
            if !(*p >= 0.0 && p.is_finite()) {
                return Err(Error::invalid("explicit map probabilities must be nonnegative"));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "explicit map probabilities must sum to 1, got {total}"
            )));
        }
        Ok(AllocationModel::ExplicitJoint { maps, n })
    }

    /// Number of players N (public indices 1..=N).
    pub fn n(&self) -> usize {
        match self {
            AllocationModel::Monopoly { n, .. } => *n,
            AllocationModel::IndependentBernoulli { weights, .. } => weights.len(),
            AllocationModel::PermutedDeterministic { n, .. } => *n,
            AllocationModel::ExplicitJoint { n, .. } => *n,
        }
    }

    /// Number of liquidity slots K; the map covers K+1 arbitrage slots.
    pub fn k(&self) -> usize {
        match self {
            AllocationModel::Monopoly { k, .. } => *k,
            AllocationModel::IndependentBernoulli { k, .. } => *k,
            AllocationModel::PermutedDeterministic { base, .. } => base.len() - 1,
            AllocationModel::ExplicitJoint { maps, .. } => maps[0].0.len() - 1,
        }
    }

    /// Allocation is drawn independently of the order sizes for every kind
    /// constructible here.
    pub fn is_blind(&self) -> bool {
        true
    }

    fn check_player(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n() {
            return Err(Error::invalid(format!("player {i} out of range 1..={}", self.n())));
        }
        Ok(())
    }

    fn check_slot(&self, k: usize) -> Result<()> {
        if k > self.k() {
            return Err(Error::invalid(format!("slot {k} out of range 0..={}", self.k())));
        }
        Ok(())
    }

    fn multiset_count(base: &[usize], i: usize) -> usize {
        base.iter().filter(|&&p| p == i).count()
    }

    /// `a_{i,k} = P[alpha(k) = i]`.
    pub fn primary_weight(&self, i: usize, k: usize) -> Result<f64> {
        self.check_player(i)?;
        self.check_slot(k)?;
        Ok(match self {
            AllocationModel::Monopoly { player, .. } => {
                if i == *player {
                    1.0
                } else {
                    0.0
                }
            }
            AllocationModel::IndependentBernoulli { weights, .. } => weights[i - 1],
            AllocationModel::PermutedDeterministic { base, .. } => {
                Self::multiset_count(base, i) as f64 / base.len() as f64
            }
            AllocationModel::ExplicitJoint { maps, .. } => maps
                .iter()
                .filter(|(map, _)| map[k] == i)
                .map(|(_, p)| p)
                .sum(),
        })
    }

    /// `b_{i,k} = P[alpha(k-1) = i | alpha(k) = i]`, with `b_{i,0} = 0`.
    ///
    /// Undefined (0/0) when the player never holds slot `k`.
    pub fn secondary_weight(&self, i: usize, k: usize) -> Result<f64> {
        self.check_player(i)?;
        self.check_slot(k)?;
        if k == 0 {
            return Ok(0.0);
        }
        let marginal = self.primary_weight(i, k)?;
        if marginal <= 0.0 {
            return Err(Error::UndefinedCoupling { player: i, slot: k });
        }
        Ok(match self {
            AllocationModel::Monopoly { .. } => 1.0,
            AllocationModel::IndependentBernoulli { weights, .. } => weights[i - 1],
            AllocationModel::PermutedDeterministic { base, .. } => {
                let c = Self::multiset_count(base, i) as f64;
                (c - 1.0) / (base.len() as f64 - 1.0)
            }
            AllocationModel::ExplicitJoint { maps, .. } => {
                let joint: f64 = maps
                    .iter()
                    .filter(|(map, _)| map[k] == i && map[k - 1] == i)
                    .map(|(_, p)| p)
                    .sum();
                joint / marginal
            }
        })
    }

    /// Draw a full slot map `alpha(0)..alpha(K)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        match self {
            AllocationModel::Monopoly { player, k, .. } => vec![*player; k + 1],
            AllocationModel::IndependentBernoulli { weights, k } => (0..=*k)
                .map(|_| {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    for (j, w) in weights.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            return j + 1;
                        }
                    }
                    weights.len()
                })
                .collect(),
            AllocationModel::PermutedDeterministic { base, .. } => {
                let mut v = base.clone();
                for i in (1..v.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    v.swap(i, j);
                }
                v
            }
            AllocationModel::ExplicitJoint { maps, .. } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (map, p) in maps {
                    acc += p;
                    if u < acc {
                        return map.clone();
                    }
                }
                maps.last().expect("table is nonempty").0.clone()
            }
        }
    }

    /// No player ever holds two adjacent slots: `a_{i,k} > 0` implies
    /// `b_{i,k} = 0` for every liquidity slot.
    pub fn is_locally_free(&self) -> bool {
        match self {
            AllocationModel::Monopoly { .. } => false,
            // weights sum to one, so some player repeats with positive probability
            AllocationModel::IndependentBernoulli { .. } => false,
            AllocationModel::PermutedDeterministic { base, n } => {
                (1..=*n).all(|i| Self::multiset_count(base, i) <= 1)
            }
            AllocationModel::ExplicitJoint { maps, .. } => maps
                .iter()
                .filter(|(_, p)| *p > 0.0)
                .all(|(map, _)| map.windows(2).all(|w| w[0] != w[1])),
        }
    }

    /// No player ever holds two slots at all (every realized map injective).
    pub fn is_free(&self) -> bool {
        match self {
            AllocationModel::Monopoly { .. } => false,
            AllocationModel::IndependentBernoulli { .. } => false,
            AllocationModel::PermutedDeterministic { base, n } => {
                (1..=*n).all(|i| Self::multiset_count(base, i) <= 1)
            }
            AllocationModel::ExplicitJoint { maps, n } => {
                maps.iter().filter(|(_, p)| *p > 0.0).all(|(map, _)| {
                    (1..=*n).all(|i| Self::multiset_count(map, i) <= 1)
                })
            }
        }
    }

    /// Players with a positive chance of holding some slot.
    pub fn participants(&self) -> Vec<usize> {
        (1..=self.n())
            .filter(|&i| {
                (0..=self.k()).any(|k| self.primary_weight(i, k).unwrap_or(0.0) > 0.0)
            })
            .collect()
    }

    /// All realizable maps with probabilities, when at most `limit` of them.
    pub fn enumerate(&self, limit: usize) -> Option<Vec<(Vec<usize>, f64)>> {
        match self {
            AllocationModel::Monopoly { player, k, .. } => {
                Some(vec![(vec![*player; k + 1], 1.0)])
            }
            AllocationModel::IndependentBernoulli { weights, k } => {
                let n = weights.len();
                let total = n.checked_pow(*k as u32 + 1)?;
                if total > limit {
                    return None;
                }
                let mut out: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
                for _ in 0..=*k {
                    let mut next = Vec::with_capacity(out.len() * n);
                    for (prefix, p) in &out {
                        for (j, w) in weights.iter().enumerate() {
                            if *w == 0.0 {
                                continue;
                            }
                            let mut map = prefix.clone();
                            map.push(j + 1);
                            next.push((map, p * w));
                        }
                    }
                    out = next;
                }
                Some(out)
            }
            AllocationModel::PermutedDeterministic { base, .. } => {
                let m = base.len();
                let total: usize = (1..=m).product();
                if total > limit {
                    return None;
                }
                let mut perms = Vec::with_capacity(total);
                let mut v = base.clone();
                permute_all(&mut v, &mut perms);
                let p = 1.0 / total as f64;
                Some(perms.into_iter().map(|map| (map, p)).collect())
            }
            AllocationModel::ExplicitJoint { maps, .. } => {
                if maps.len() > limit {
                    return None;
                }
                Some(maps.clone())
            }
        }
    }
}

fn permute_all(v: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    fn rec(k: usize, v: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
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

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Recompute a and b for any model straight from its enumerated joint law.
    fn enumeration_weights(a: &AllocationModel, i: usize, k: usize) -> (f64, Option<f64>) {
        let maps = a.enumerate(1_000_000).expect("enumerable");
        let marginal: f64 = maps.iter().filter(|(m, _)| m[k] == i).map(|(_, p)| p).sum();
        if k == 0 {
            return (marginal, Some(0.0));
        }
        let joint: f64 = maps
            .iter()
            .filter(|(m, _)| m[k] == i && m[k - 1] == i)
            .map(|(_, p)| p)
            .sum();
        if marginal > 0.0 {
            (marginal, Some(joint / marginal))
        } else {
            (marginal, None)
        }
    }

    #[test]
    fn bernoulli_weights_are_flat_across_slots() {
        let a = AllocationModel::bernoulli(vec![0.3, 0.7], 3).unwrap();
        for k in 0..=3 {
            assert_relative_eq!(a.primary_weight(2, k).unwrap(), 0.7);
        }
        assert_relative_eq!(a.secondary_weight(2, 0).unwrap(), 0.0);
        assert_relative_eq!(a.secondary_weight(2, 3).unwrap(), 0.7);
        // enumeration oracle agrees on every slot
        for k in 0..=3 {
            let (m, b) = enumeration_weights(&a, 2, k);
            assert_relative_eq!(m, 0.7, epsilon = 1e-12);
            assert_relative_eq!(a.secondary_weight(2, k).unwrap(), b.unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn permuted_multiset_closed_forms_match_enumeration() {
        // base [1, 1, 2]: player 1 holds two of three slots
        let a = AllocationModel::permuted(vec![1, 1, 2], 2).unwrap();
        assert_relative_eq!(a.primary_weight(1, 1).unwrap(), 2.0 / 3.0);
        let (marginal, b) = enumeration_weights(&a, 1, 1);
        assert_relative_eq!(marginal, 2.0 / 3.0, epsilon = 1e-12);
        // conditional coupling is 1/2: of the two arrangements with player 1
        // in slot 1, exactly one also has them in slot 0
        assert_relative_eq!(b.unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(a.secondary_weight(1, 1).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(a.secondary_weight(1, 2).unwrap(), 0.5, epsilon = 1e-12);
        // the minority player never repeats
        assert_relative_eq!(a.secondary_weight(2, 1).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn monopoly_weights() {
        let a = AllocationModel::monopoly(1, 2, 2).unwrap();
        for k in 0..=2 {
            assert_relative_eq!(a.primary_weight(1, k).unwrap(), 1.0);
            assert_relative_eq!(a.primary_weight(2, k).unwrap(), 0.0);
        }
        assert_relative_eq!(a.secondary_weight(1, 0).unwrap(), 0.0);
        assert_relative_eq!(a.secondary_weight(1, 1).unwrap(), 1.0);
        assert!(matches!(
            a.secondary_weight(2, 1),
            Err(Error::UndefinedCoupling { player: 2, slot: 1 })
        ));
    }

    #[test]
    fn explicit_alternating_is_locally_free_but_not_free() {
        let a = AllocationModel::explicit(
            vec![(vec![1, 2, 1], 0.5), (vec![2, 1, 2], 0.5)],
            2,
        )
        .unwrap();
        assert!(a.is_locally_free());
        assert!(!a.is_free());
        for i in 1..=2 {
            for k in 1..=2 {
                assert_relative_eq!(a.secondary_weight(i, k).unwrap(), 0.0);
                let (_, b) = enumeration_weights(&a, i, k);
                assert_relative_eq!(b.unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn injective_point_mass_is_free_and_locally_free() {
        let a = AllocationModel::explicit(vec![(vec![1, 2, 3], 1.0)], 3).unwrap();
        assert!(a.is_free());
        assert!(a.is_locally_free());
        let p = AllocationModel::permuted(vec![3, 1, 2], 3).unwrap();
        assert!(p.is_free());
        assert!(p.is_locally_free());
    }

    #[test]
    fn free_implies_locally_free_over_random_tables() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.gen_range(2..=3usize);
            let len = rng.gen_range(2..=4usize);
            let m = rng.gen_range(1..=3usize);
            let mut maps: Vec<(Vec<usize>, f64)> = (0..m)
                .map(|_| {
                    let map: Vec<usize> = (0..len).map(|_| rng.gen_range(1..=n)).collect();
                    (map, rng.gen_range(0.1..1.0))
                })
                .collect();
            let total: f64 = maps.iter().map(|(_, p)| p).sum();
            for m in &mut maps {
                m.1 /= total;
            }
            let a = match AllocationModel::explicit(maps, n) {
                Ok(a) => a,
                Err(_) => continue,
            };
            if a.is_free() {
                assert!(a.is_locally_free());
            }
        }
    }

    #[test]
    fn primary_weights_sum_to_one_across_players() {
        let models = [
            AllocationModel::monopoly(2, 3, 2).unwrap(),
            AllocationModel::bernoulli(vec![0.2, 0.5, 0.3], 2).unwrap(),
            AllocationModel::permuted(vec![1, 2, 2, 3], 3).unwrap(),
            AllocationModel::explicit(vec![(vec![1, 2, 1], 0.4), (vec![2, 2, 1], 0.6)], 2)
                .unwrap(),
        ];
        for a in models {
            for k in 0..=a.k() {
                let total: f64 = (1..=a.n())
                    .map(|i| a.primary_weight(i, k).unwrap())
                    .sum();
                assert_relative_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sampling_frequencies_match_primary_weights() {
        let models = [
            AllocationModel::bernoulli(vec![0.3, 0.7], 2).unwrap(),
            AllocationModel::permuted(vec![1, 1, 2], 2).unwrap(),
            AllocationModel::explicit(vec![(vec![1, 2, 1], 0.25), (vec![2, 1, 2], 0.75)], 2)
                .unwrap(),
        ];
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let n = 100_000;
        for a in models {
            let mut counts = vec![vec![0usize; a.k() + 1]; a.n() + 1];
            for _ in 0..n {
                let map = a.sample(&mut rng);
                assert_eq!(map.len(), a.k() + 1);
                for (k, &i) in map.iter().enumerate() {
                    counts[i][k] += 1;
                }
            }
            for (i, row) in counts.iter().enumerate().skip(1) {
                for (k, &c) in row.iter().enumerate() {
                    let freq = c as f64 / n as f64;
                    let expect = a.primary_weight(i, k).unwrap();
                    let se = (expect * (1.0 - expect) / n as f64).sqrt();
                    assert!(
                        (freq - expect).abs() < 4.0 * se + 1e-9,
                        "player {i} slot {k}: freq {freq} vs weight {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn adjacency_frequencies_match_secondary_weights() {
        let a = AllocationModel::permuted(vec![1, 1, 2, 3], 3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let n = 200_000;
        let mut joint = 0usize;
        let mut marginal = 0usize;
        for _ in 0..n {
            let map = a.sample(&mut rng);
            if map[2] == 1 {
                marginal += 1;
                if map[1] == 1 {
                    joint += 1;
                }
            }
        }
        let b_hat = joint as f64 / marginal as f64;
        let b = a.secondary_weight(1, 2).unwrap();
        assert_relative_eq!(b, 1.0 / 3.0, epsilon = 1e-12);
        assert!((b_hat - b).abs() < 0.01, "empirical coupling {b_hat} vs {b}");
    }

    #[test]
    fn explicit_enumeration_is_the_table_itself() {
        let maps = vec![(vec![1, 2, 1], 0.4), (vec![2, 2, 1], 0.6)];
        let a = AllocationModel::explicit(maps.clone(), 2).unwrap();
        assert_eq!(a.enumerate(10).unwrap(), maps);
        let total: f64 = a
            .enumerate(10)
            .unwrap()
            .iter()
            .map(|(_, p)| p)
            .sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn participants_excludes_zero_weight_players() {
        let a = AllocationModel::bernoulli(vec![0.5, 0.0, 0.5], 1).unwrap();
        assert_eq!(a.participants(), vec![1, 3]);
        assert!(matches!(
            a.secondary_weight(2, 1),
            Err(Error::UndefinedCoupling { .. })
        ));
    }

    #[test]
    fn blindness_is_structural() {
        assert!(AllocationModel::monopoly(1, 1, 1).unwrap().is_blind());
        assert!(AllocationModel::bernoulli(vec![1.0], 1).unwrap().is_blind());
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(AllocationModel::monopoly(3, 2, 1).is_err());
        assert!(AllocationModel::bernoulli(vec![0.3, 0.3], 1).is_err());
        assert!(AllocationModel::permuted(vec![1, 4], 3).is_err());
        assert!(AllocationModel::explicit(vec![(vec![1, 2], 0.9)], 2).is_err());
        // 30 slots of 2 players = 30 bits of state, over the 24-bit cap
        let big = vec![(vec![1usize; 30], 1.0)];
        assert!(AllocationModel::explicit(big, 2).is_err());
    }
}
