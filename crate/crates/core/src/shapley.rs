//! Shapley values of boolean cooperative games.
//!
//! Three estimators share one [`Game`]: exact enumeration over all `2^n`
//! coalitions with rational weights, Monte-Carlo over random player
//! orderings, and random-subset sampling (uniform over the subsets of the
//! other players, which weights coalition sizes differently from the Shapley
//! kernel and is therefore biased for `n > 2`).
//!
//! Random streams come from `ChaCha8Rng` seeded with the run seed; samples are
//! drawn sequentially before evaluation and contributions are summed as
//! integers, so results do not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{Evaluator, OracleError};
use crate::process_tree::{Coalition, MAX_PLAYERS};

pub const DEFAULT_EXACT_LIMIT: usize = 20;

#[derive(Debug, Error)]
pub enum ShapleyError {
    #[error("exact Shapley over {players} players exceeds the limit of {limit}; use mc or rs")]
    TooManyPlayers { players: usize, limit: usize },
    #[error("games support at most {MAX_PLAYERS} players, got {0}")]
    PlayerUniverse(usize),
    #[error("snapshots cover different players")]
    MismatchedSnapshots,
    #[error("{0} must be at least 1")]
    ZeroCount(&'static str),
    #[error(transparent)]
    Value(#[from] OracleError),
}

type ValueFn<'a> = dyn Fn(Coalition) -> Result<bool, OracleError> + Send + Sync + 'a;

/// Players (node indices) and a boolean value function over coalitions of
/// those indices.
pub struct Game<'a> {
    players: Vec<usize>,
    value: Box<ValueFn<'a>>,
}

impl fmt::Debug for Game<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Game").field("players", &self.players).finish_non_exhaustive()
    }
}

impl<'a> Game<'a> {
    pub fn new(
        players: Vec<usize>,
        value: impl Fn(Coalition) -> Result<bool, OracleError> + Send + Sync + 'a,
    ) -> Result<Self, ShapleyError> {
        if let Some(&bad) = players.iter().find(|&&p| p >= MAX_PLAYERS) {
            return Err(ShapleyError::PlayerUniverse(bad + 1));
        }
        Ok(Game {
            players,
            value: Box::new(value),
        })
    }

    /// Every node of the evaluator's tree is a player.
    pub fn from_evaluator(evaluator: &'a Evaluator) -> Result<Self, ShapleyError> {
        let n = evaluator.tree.size();
        if n > MAX_PLAYERS {
            return Err(ShapleyError::PlayerUniverse(n));
        }
        Game::new((0..n).collect(), move |c| evaluator.value(c))
    }

    pub fn players(&self) -> &[usize] {
        &self.players
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    pub fn value(&self, coalition: Coalition) -> Result<bool, OracleError> {
        (self.value)(coalition)
    }

    /// Coalition of the players at the given positions.
    fn coalition_of(&self, positions: u128) -> Coalition {
        let mut c = Coalition::EMPTY;
        let mut bits = positions;
        while bits != 0 {
            let k = bits.trailing_zeros() as usize;
            c = c.with(self.players[k]);
            bits &= bits - 1;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Exact,
    Mc,
    Rs,
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodKind::Exact => "exact",
            MethodKind::Mc => "mc",
            MethodKind::Rs => "rs",
        })
    }
}

impl FromStr for MethodKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(MethodKind::Exact),
            "mc" => Ok(MethodKind::Mc),
            "rs" => Ok(MethodKind::Rs),
            other => Err(format!("unknown method {other:?} (expected exact|mc|rs)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub permutations: u64,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub epsilon: f64,
    pub min_permutations: u64,
    /// Stop at the first checkpoint past `min_permutations` whose Δ_max is
    /// below `epsilon`.
    pub early_stop: bool,
}

impl McConfig {
    pub fn new(permutations: u64, seed: u64) -> Self {
        McConfig {
            permutations,
            seed,
            checkpoint_every: 100,
            epsilon: 0.01,
            min_permutations: 1000,
            early_stop: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsConfig {
    pub samples_per_player: u64,
    pub seed: u64,
}

/// Estimator and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Exact { limit: usize },
    Mc(McConfig),
    Rs(RsConfig),
}

impl Method {
    pub fn kind(&self) -> MethodKind {
        match self {
            Method::Exact { .. } => MethodKind::Exact,
            Method::Mc(_) => MethodKind::Mc,
            Method::Rs(_) => MethodKind::Rs,
        }
    }

    /// The same method with another seed (exact is unchanged).
    #[must_use]
    pub fn with_seed(self, seed: u64) -> Method {
        match self {
            Method::Exact { .. } => self,
            Method::Mc(c) => Method::Mc(McConfig { seed, ..c }),
            Method::Rs(c) => Method::Rs(RsConfig { seed, ..c }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyEstimate {
    pub method: MethodKind,
    pub players: Vec<usize>,
    pub phi: Vec<f64>,
    /// Exact values as reduced fractions (exact method only).
    #[serde(skip)]
    pub exact: Option<Vec<Ratio<i128>>>,
    /// Marginal contributions averaged per player.
    pub samples: Vec<u64>,
    pub seed: Option<u64>,
}

impl ShapleyEstimate {
    pub fn by_player(&self) -> BTreeMap<usize, f64> {
        self.players.iter().copied().zip(self.phi.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub checkpoints: Vec<(u64, Vec<f64>)>,
    /// Largest per-player change between the last two checkpoints; `None`
    /// with fewer than two checkpoints.
    pub delta_max: Option<f64>,
}

impl ConvergenceReport {
    /// Permutation count of the first checkpoint whose Δ_max to its
    /// predecessor is below `epsilon`.
    pub fn first_below(&self, epsilon: f64) -> Option<u64> {
        self.checkpoints
            .windows(2)
            .find(|w| max_abs_diff(&w[0].1, &w[1].1) < epsilon)
            .map(|w| w[1].0)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Maximum absolute per-player change between two snapshots.
pub fn convergence_delta_max(prev: &BTreeMap<usize, f64>, curr: &BTreeMap<usize, f64>) -> Result<f64, ShapleyError> {
    if prev.len() != curr.len() || prev.keys().zip(curr.keys()).any(|(a, b)| a != b) {
        return Err(ShapleyError::MismatchedSnapshots);
    }
    Ok(prev
        .values()
        .zip(curr.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

fn factorials(n: usize) -> Vec<i128> {
    let mut f = vec![1i128; n + 1];
    for k in 1..=n {
        f[k] = f[k - 1] * k as i128;
    }
    f
}

/// Exact Shapley values: `φ_i = Σ_S |S|!(n−|S|−1)!/n! · (v(S∪{i}) − v(S))`.
pub fn exact_shapley(game: &Game<'_>, limit: usize) -> Result<ShapleyEstimate, ShapleyError> {
    let n = game.n();
    if n > limit || n > 30 {
        return Err(ShapleyError::TooManyPlayers { players: n, limit });
    }
    let values: Vec<bool> = (0..1u64 << n)
        .into_par_iter()
        .map(|mask| game.value(game.coalition_of(mask as u128)))
        .collect::<Result<_, _>>()?;
    let fact = factorials(n);
    let denom = fact[n];
    let exact: Vec<Ratio<i128>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let bit = 1usize << i;
            let mut num: i128 = 0;
            for mask in 0..values.len() {
                if mask & bit != 0 {
                    continue;
                }
                let delta = values[mask | bit] as i128 - values[mask] as i128;
                if delta != 0 {
                    let s = mask.count_ones() as usize;
                    num += delta * fact[s] * fact[n - s - 1];
                }
            }
            Ratio::new(num, denom)
        })
        .collect();
    Ok(ShapleyEstimate {
        method: MethodKind::Exact,
        players: game.players.clone(),
        phi: exact.iter().map(ratio_to_f64).collect(),
        exact: Some(exact),
        samples: vec![1u64 << n.saturating_sub(1); n],
        seed: None,
    })
}

pub fn ratio_to_f64(r: &Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Marginal contributions along one ordering of player positions.
fn permutation_marginals(game: &Game<'_>, order: &[usize]) -> Result<Vec<i64>, OracleError> {
    let mut marg = vec![0i64; order.len()];
    let mut positions: u128 = 0;
    let mut prev = game.value(Coalition::EMPTY)? as i64;
    for &k in order {
        positions |= 1u128 << k;
        let cur = game.value(game.coalition_of(positions))? as i64;
        marg[k] = cur - prev;
        prev = cur;
    }
    Ok(marg)
}

/// Monte-Carlo permutation sampling with Δ_max checkpoints.
pub fn mc_permutation_shapley(
    game: &Game<'_>,
    config: &McConfig,
) -> Result<(ShapleyEstimate, ConvergenceReport), ShapleyError> {
    if config.permutations == 0 {
        return Err(ShapleyError::ZeroCount("permutations"));
    }
    if config.checkpoint_every == 0 {
        return Err(ShapleyError::ZeroCount("checkpoint_every"));
    }
    let n = game.n();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sums = vec![0i64; n];
    let mut done = 0u64;
    let mut checkpoints: Vec<(u64, Vec<f64>)> = Vec::new();
    while done < config.permutations {
        let batch = config.checkpoint_every.min(config.permutations - done);
        let orders: Vec<Vec<usize>> = (0..batch)
            .map(|_| {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                order
            })
            .collect();
        let marginals: Vec<Vec<i64>> = orders
            .par_iter()
            .map(|order| permutation_marginals(game, order))
            .collect::<Result<_, _>>()?;
        for m in marginals {
            for (s, x) in sums.iter_mut().zip(m) {
                *s += x;
            }
        }
        done += batch;
        let snapshot: Vec<f64> = sums.iter().map(|&s| s as f64 / done as f64).collect();
        let delta = checkpoints.last().map(|(_, prev)| max_abs_diff(prev, &snapshot));
        checkpoints.push((done, snapshot));
        if config.early_stop && done >= config.min_permutations && delta.is_some_and(|d| d < config.epsilon) {
            break;
        }
    }
    let phi = checkpoints.last().map(|(_, s)| s.clone()).unwrap_or_default();
    let delta_max = match checkpoints.as_slice() {
        [.., a, b] => Some(max_abs_diff(&a.1, &b.1)),
        _ => None,
    };
    Ok((
        ShapleyEstimate {
            method: MethodKind::Mc,
            players: game.players.clone(),
            phi,
            exact: None,
            samples: vec![done; n],
            seed: Some(config.seed),
        },
        ConvergenceReport { checkpoints, delta_max },
    ))
}

/// Random-subset sampling: for each player, subsets of the others drawn
/// uniformly (each other player included with probability 1/2).
pub fn rs_subset_shapley(game: &Game<'_>, config: &RsConfig) -> Result<ShapleyEstimate, ShapleyError> {
    if config.samples_per_player == 0 {
        return Err(ShapleyError::ZeroCount("samples_per_player"));
    }
    let n = game.n();
    let all: u128 = if n == 128 { u128::MAX } else { (1u128 << n) - 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let draws: Vec<(usize, u128)> = (0..n)
        .flat_map(|i| {
            let others = all & !(1u128 << i);
            (0..config.samples_per_player)
                .map(|_| (i, rng.gen::<u128>() & others))
                .collect::<Vec<_>>()
        })
        .collect();
    let deltas: Vec<(usize, i64)> = draws
        .par_iter()
        .map(|&(i, subset)| {
            let without = game.value(game.coalition_of(subset))? as i64;
            let with = game.value(game.coalition_of(subset | (1u128 << i)))? as i64;
            Ok((i, with - without))
        })
        .collect::<Result<_, OracleError>>()?;
    let mut sums = vec![0i64; n];
    for (i, d) in deltas {
        sums[i] += d;
    }
    Ok(ShapleyEstimate {
        method: MethodKind::Rs,
        players: game.players.clone(),
        phi: sums
            .iter()
            .map(|&s| s as f64 / config.samples_per_player as f64)
            .collect(),
        exact: None,
        samples: vec![config.samples_per_player; n],
        seed: Some(config.seed),
    })
}

/// Runs `method`; the convergence report is present for Monte-Carlo only.
pub fn estimate(game: &Game<'_>, method: &Method) -> Result<(ShapleyEstimate, Option<ConvergenceReport>), ShapleyError> {
    match method {
        Method::Exact { limit } => Ok((exact_shapley(game, *limit)?, None)),
        Method::Mc(c) => mc_permutation_shapley(game, c).map(|(e, r)| (e, Some(r))),
        Method::Rs(c) => Ok((rs_subset_shapley(game, c)?, None)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game_from(n: usize, f: impl Fn(u128) -> bool + Send + Sync + 'static) -> Game<'static> {
        Game::new((0..n).collect(), move |c: Coalition| Ok(f(c.0))).unwrap()
    }

    fn r(n: i128, d: i128) -> Ratio<i128> {
        Ratio::new(n, d)
    }

    #[test]
    fn single_player() {
        let g = game_from(1, |c| c == 1);
        let e = exact_shapley(&g, 20).unwrap();
        assert_eq!(e.exact.unwrap(), vec![r(1, 1)]);
        let (mc, report) = mc_permutation_shapley(&g, &McConfig::new(1, 99)).unwrap();
        assert_eq!(mc.phi, vec![1.0]);
        assert_eq!(report.delta_max, None);
        let rs = rs_subset_shapley(&g, &RsConfig { samples_per_player: 3, seed: 5 }).unwrap();
        assert_eq!(rs.phi, vec![1.0]);
    }

    #[test]
    fn or_and_unanimity() {
        let or = game_from(2, |c| c != 0);
        assert_eq!(exact_shapley(&or, 20).unwrap().exact.unwrap(), vec![r(1, 2), r(1, 2)]);
        let unanimity = game_from(3, |c| c == 0b111);
        assert_eq!(exact_shapley(&unanimity, 20).unwrap().exact.unwrap(), vec![r(1, 3); 3]);
    }

    #[test]
    fn exact_limit_refuses() {
        let g = game_from(5, |_| true);
        assert!(matches!(exact_shapley(&g, 4), Err(ShapleyError::TooManyPlayers { players: 5, limit: 4 })));
    }

    #[test]
    fn players_need_not_be_contiguous() {
        // node 7 alone decides the game
        let g = Game::new(vec![2, 7], |c: Coalition| Ok(c.contains(7))).unwrap();
        let e = exact_shapley(&g, 20).unwrap();
        assert_eq!(e.by_player(), BTreeMap::from([(2, 0.0), (7, 1.0)]));
    }

    #[test]
    fn mc_or_game_close_to_half() {
        let g = game_from(2, |c| c != 0);
        let (e, report) = mc_permutation_shapley(&g, &McConfig::new(2000, 7)).unwrap();
        for phi in &e.phi {
            assert!((phi - 0.5).abs() <= 0.05, "{phi}");
        }
        assert_eq!(report.checkpoints.len(), 20);
        assert!(report.checkpoints.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(report.delta_max.unwrap() >= 0.0);
    }

    #[test]
    fn mc_early_stop() {
        let g = game_from(3, |c| c == 0b111);
        let mut cfg = McConfig::new(100_000, 3);
        cfg.early_stop = true;
        let (e, report) = mc_permutation_shapley(&g, &cfg).unwrap();
        assert!(e.samples[0] >= 1000 && e.samples[0] < 100_000);
        assert!(report.delta_max.unwrap() < 0.01);
    }

    #[test]
    fn rs_or_game_matches_at_two_players() {
        let g = game_from(2, |c| c != 0);
        let e = rs_subset_shapley(&g, &RsConfig { samples_per_player: 4000, seed: 11 }).unwrap();
        for phi in &e.phi {
            assert!((phi - 0.5).abs() <= 0.05, "{phi}");
        }
    }

    #[test]
    fn zero_counts_rejected() {
        let g = game_from(2, |c| c != 0);
        assert!(mc_permutation_shapley(&g, &McConfig::new(0, 1)).is_err());
        assert!(rs_subset_shapley(&g, &RsConfig { samples_per_player: 0, seed: 1 }).is_err());
    }

    #[test]
    fn delta_max_of_snapshots() {
        let a = BTreeMap::from([(0, 0.1), (1, 0.5)]);
        assert_eq!(convergence_delta_max(&a, &a).unwrap(), 0.0);
        let b = BTreeMap::from([(0, 0.1), (1, 0.52)]);
        assert!((convergence_delta_max(&a, &b).unwrap() - 0.02).abs() < 1e-12);
        let c = BTreeMap::from([(0, 0.1), (2, 0.5)]);
        assert!(convergence_delta_max(&a, &c).is_err());
    }

    #[test]
    fn seeded_runs_are_reproducible_across_pools() {
        let g = game_from(6, |c| c.count_ones() >= 3 && c & 1 == 1);
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let (mc, _) = mc_permutation_shapley(&g, &McConfig::new(500, 42)).unwrap();
                let rs = rs_subset_shapley(&g, &RsConfig { samples_per_player: 200, seed: 42 }).unwrap();
                (mc.phi, rs.phi)
            })
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.1.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.1.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    mod laws {
        use super::*;
        use proptest::prelude::*;

        fn table_game(n: usize, table: Vec<bool>) -> Game<'static> {
            game_from(n, move |c| table[c as usize])
        }

        fn arb_game() -> impl Strategy<Value = (usize, Vec<bool>)> {
            (1usize..=6).prop_flat_map(|n| (Just(n), proptest::collection::vec(any::<bool>(), 1 << n)))
        }

        proptest! {
            #[test]
            fn efficiency((n, table) in arb_game()) {
                let total = table[(1 << n) - 1] as i128 - table[0] as i128;
                let e = exact_shapley(&table_game(n, table), 20).unwrap();
                let sum: Ratio<i128> = e.exact.unwrap().into_iter().sum();
                prop_assert_eq!(sum, Ratio::from_integer(total));
            }

            #[test]
            fn symmetric_players_share((n, table) in arb_game()) {
                prop_assume!(n >= 2);
                // symmetrise players 0 and 1 by taking the table over swapped masks as well
                let swap = |m: usize| (m & !3) | ((m & 1) << 1) | ((m >> 1) & 1);
                let sym: Vec<bool> = (0..1usize << n).map(|m| table[m] || table[swap(m)]).collect();
                let e = exact_shapley(&table_game(n, sym), 20).unwrap().exact.unwrap();
                prop_assert_eq!(e[0], e[1]);
            }

            #[test]
            fn dummy_gets_zero((n, table) in arb_game()) {
                prop_assume!(n >= 2);
                // the top player never changes the value
                let top = 1usize << (n - 1);
                let dummy: Vec<bool> = (0..1usize << n).map(|m| table[m & !top]).collect();
                let e = exact_shapley(&table_game(n, dummy), 20).unwrap().exact.unwrap();
                prop_assert_eq!(e[n - 1], Ratio::from_integer(0));
            }

            #[test]
            fn same_seed_same_estimate((n, table) in arb_game(), seed in any::<u64>()) {
                let g = table_game(n, table);
                let a = mc_permutation_shapley(&g, &McConfig::new(150, seed)).unwrap();
                let b = mc_permutation_shapley(&g, &McConfig::new(150, seed)).unwrap();
                prop_assert_eq!(a, b);
                let cfg = RsConfig { samples_per_player: 40, seed };
                prop_assert_eq!(rs_subset_shapley(&g, &cfg).unwrap(), rs_subset_shapley(&g, &cfg).unwrap());
            }
        }
    }
}
