//! Combat-timing rules and a square-law skirmish benchmark.
//!
//! Each policy looks at one frame at a time and decides whether side A
//! should attack now. The benchmark walks a synthetic game frame by frame;
//! the first attack resolves a skirmish on that frame's full state, and a
//! policy that never attacks loses.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{generate_synthetic_replay, SyntheticConfig};
use crate::error::{Error, Result};
use crate::gamestate::{apply_fog, compute_visibility, encode_frame, FeatureMap, Side, UnitTypeTable, SIDE_A_TYPES};
use crate::learning::{Classifier, EncoderDecoder};
use crate::nn::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RatioPolicyConfig {
    pub correction: f64,
    pub threshold: f64,
    pub epsilon: f64,
}

impl Default for RatioPolicyConfig {
    fn default() -> Self {
        RatioPolicyConfig {
            correction: 1.5,
            threshold: 1.0,
            epsilon: 1e-9,
        }
    }
}

impl RatioPolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.correction > 0.0 && self.threshold > 0.0 && self.epsilon > 0.0) {
            return Err(Error::invalid("ratio policy correction, threshold and epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelPolicyConfig {
    pub probability_threshold: f64,
    pub require_upgrade: bool,
}

impl Default for ModelPolicyConfig {
    fn default() -> Self {
        ModelPolicyConfig {
            probability_threshold: 0.69,
            require_upgrade: true,
        }
    }
}

impl ModelPolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.probability_threshold > 0.0 && self.probability_threshold < 1.0) {
            return Err(Error::invalid("probability_threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyDecision {
    pub attack: bool,
    /// The ratio or probability behind the decision.
    pub score: f64,
    pub reason: &'static str,
}

/// `(side A value, side B value)`: unit counts weighted by combat value.
pub fn army_values(map: &FeatureMap, table: &UnitTypeTable) -> (f64, f64) {
    let mut v = [0.0f64; 2];
    for kind in table.types() {
        if kind.combat_value > 0.0 {
            let side = usize::from(kind.type_id >= SIDE_A_TYPES);
            v[side] += map.channel_sum(kind.type_id) * kind.combat_value;
        }
    }
    (v[0], v[1])
}

/// Attack iff `friendly / max(c * visible_enemy, eps) >= threshold`.
///
/// The guard only matters when no enemy value is visible, so equal armies
/// with `c = 1` give a ratio of exactly one.
pub fn ratio_policy(noisy: &FeatureMap, table: &UnitTypeTable, config: &RatioPolicyConfig) -> PolicyDecision {
    let (friendly, enemy) = army_values(noisy, table);
    let ratio = friendly / (config.correction * enemy).max(config.epsilon);
    PolicyDecision {
        attack: ratio >= config.threshold,
        score: ratio,
        reason: if enemy == 0.0 { "no-visible-enemy" } else { "ratio" },
    }
}

/// Attack iff `p > threshold` and the upgrade gate is open.
pub fn model_decision(p_win: f64, upgrade_done: bool, config: &ModelPolicyConfig) -> PolicyDecision {
    let gate = upgrade_done || !config.require_upgrade;
    let confident = p_win > config.probability_threshold;
    PolicyDecision {
        attack: confident && gate,
        score: p_win,
        reason: match (confident, gate) {
            (true, true) => "confident",
            (true, false) => "awaiting-upgrade",
            _ => "not-confident",
        },
    }
}

/// Win probability for side A from the classifier applied to the
/// encoder-decoder's reconstruction of the noisy map.
pub fn model_policy(
    noisy: &FeatureMap,
    ed: &EncoderDecoder<f32>,
    clf: &Classifier<f32>,
    upgrade_done: bool,
    config: &ModelPolicyConfig,
) -> Result<PolicyDecision> {
    let x = FeatureMap::batch(&[noisy]);
    let retrieved = FeatureMap::unbatch(&ed.forward(&x)?)?.pop().expect("one map");
    let (p_a, _) = clf.predict(&retrieved)?;
    Ok(model_decision(p_a, upgrade_done, config))
}

/// `V_A^2 / (V_A^2 + V_B^2)`, one half when both are zero.
pub fn square_law_probability(v_a: f64, v_b: f64) -> f64 {
    let (a, b) = (v_a * v_a, v_b * v_b);
    if a + b == 0.0 {
        0.5
    } else {
        a / (a + b)
    }
}

/// One uniform draw in `[0, 1)` per seed; side A wins iff it falls below
/// the square-law probability.
pub fn skirmish_outcome(clean: &FeatureMap, table: &UnitTypeTable, seed: u64) -> Side {
    let (a, b) = army_values(clean, table);
    skirmish_from_probability(square_law_probability(a, b), seed)
}

fn skirmish_from_probability(p_a: f64, seed: u64) -> Side {
    if ChaCha8Rng::seed_from_u64(seed).gen::<f64>() < p_a {
        Side::A
    } else {
        Side::B
    }
}

/// What a policy sees at one frame. `clean` is there for the oracle only.
pub struct FrameView<'a> {
    pub noisy: &'a FeatureMap,
    pub clean: &'a FeatureMap,
    pub upgrade_done: bool,
}

pub trait CombatPolicy: Sync {
    fn name(&self) -> &str;
    fn decide(&self, view: &FrameView<'_>) -> Result<PolicyDecision>;
}

pub struct RatioPolicy<'a> {
    pub table: &'a UnitTypeTable,
    pub config: RatioPolicyConfig,
}

impl CombatPolicy for RatioPolicy<'_> {
    fn name(&self) -> &str {
        "ratio"
    }
    fn decide(&self, view: &FrameView<'_>) -> Result<PolicyDecision> {
        Ok(ratio_policy(view.noisy, self.table, &self.config))
    }
}

pub struct ModelPolicy<'a> {
    pub ed: &'a EncoderDecoder<f32>,
    pub clf: &'a Classifier<f32>,
    pub config: ModelPolicyConfig,
}

impl CombatPolicy for ModelPolicy<'_> {
    fn name(&self) -> &str {
        "model"
    }
    fn decide(&self, view: &FrameView<'_>) -> Result<PolicyDecision> {
        model_policy(view.noisy, self.ed, self.clf, view.upgrade_done, &self.config)
    }
}

/// Attacks as soon as the full state favors side A.
pub struct OraclePolicy<'a> {
    pub table: &'a UnitTypeTable,
}

impl CombatPolicy for OraclePolicy<'_> {
    fn name(&self) -> &str {
        "oracle"
    }
    fn decide(&self, view: &FrameView<'_>) -> Result<PolicyDecision> {
        let (a, b) = army_values(view.clean, self.table);
        let p = square_law_probability(a, b);
        Ok(PolicyDecision {
            attack: p > 0.5,
            score: p,
            reason: "square-law",
        })
    }
}

/// Per-policy result of one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Frame index of the attack, `None` if the policy never attacked.
    pub attack_frame: Option<usize>,
    pub won: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub policy: String,
    pub outcomes: Vec<TrialOutcome>,
    pub wins: usize,
    pub win_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub trials: usize,
    pub results: Vec<PolicyResult>,
}

impl BenchmarkReport {
    /// `policy,trials,wins,win_rate,ci_low,ci_high` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("policy,trials,wins,win_rate,ci_low,ci_high\n");
        for r in &self.results {
            writeln!(
                s,
                "{},{},{},{:.6},{:.6},{:.6}",
                r.policy, self.trials, r.wins, r.win_rate, r.ci_low, r.ci_high
            )
            .expect("writing to a String");
        }
        s
    }

    pub fn get(&self, policy: &str) -> Option<&PolicyResult> {
        self.results.iter().find(|r| r.policy == policy)
    }
}

/// 95% Wilson score interval for `wins` out of `n`.
pub fn wilson_interval(wins: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = n as f64;
    let p = wins as f64 / n;
    let denom = 1.0 + Z * Z / n;
    let center = (p + Z * Z / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + Z * Z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Trial `i` plays replay `i` of `game`. All policies share the skirmish
/// draw of a trial, so differences come from attack timing alone.
pub fn run_policy_benchmark(
    policies: &[&dyn CombatPolicy],
    game: &SyntheticConfig,
    table: &UnitTypeTable,
    trials: usize,
    seed: u64,
) -> Result<BenchmarkReport> {
    if trials == 0 {
        return Err(Error::invalid("benchmark needs at least one trial"));
    }
    game.validate()?;
    let per_trial: Vec<Vec<TrialOutcome>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let frames = generate_synthetic_replay(game, table, trial)?;
            let views = frames
                .iter()
                .map(|f| {
                    let clean = encode_frame(f, table)?;
                    let noisy = apply_fog(&clean, &compute_visibility(f, table));
                    Ok((noisy, clean, game.upgrade_done(f.t_seconds)))
                })
                .collect::<Result<Vec<_>>>()?;
            let draw = derive_seed(seed, trial as u64);
            policies
                .iter()
                .map(|p| {
                    for (k, (noisy, clean, upgrade_done)) in views.iter().enumerate() {
                        let view = FrameView {
                            noisy,
                            clean,
                            upgrade_done: *upgrade_done,
                        };
                        if p.decide(&view)?.attack {
                            return Ok(TrialOutcome {
                                attack_frame: Some(k),
                                won: skirmish_outcome(clean, table, draw) == Side::A,
                            });
                        }
                    }
                    Ok(TrialOutcome {
                        attack_frame: None,
                        won: false,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let results = policies
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let outcomes: Vec<TrialOutcome> = per_trial.iter().map(|t| t[i]).collect();
            let wins = outcomes.iter().filter(|o| o.won).count();
            let (ci_low, ci_high) = wilson_interval(wins, trials);
            PolicyResult {
                policy: p.name().to_string(),
                outcomes,
                wins,
                win_rate: wins as f64 / trials as f64,
                ci_low,
                ci_high,
            }
        })
        .collect();
    Ok(BenchmarkReport { trials, results })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_with(table: &UnitTypeTable, a: &[(usize, f32)], b: &[(usize, f32)]) -> FeatureMap {
        let mut m = FeatureMap::zeros();
        for &(t, n) in a.iter().chain(b) {
            assert!(table.get(t).is_some());
            m.set(t, 3, 3, m.get(t, 3, 3) + n);
        }
        m
    }

    #[test]
    fn ratio_hand_evaluation() {
        let t = UnitTypeTable::builtin();
        // Marines are worth 1, zealots 2.
        let m = map_with(&t, &[(1, 100.0)], &[(35, 50.0)]);
        let d = ratio_policy(&m, &t, &RatioPolicyConfig::default());
        assert!((d.score - 100.0 / 150.0).abs() < 1e-9);
        assert!(!d.attack);
        let cfg = RatioPolicyConfig {
            correction: 1.0,
            ..Default::default()
        };
        let d = ratio_policy(&m, &t, &cfg);
        assert_eq!(d.score, 1.0);
        assert!(d.attack);
    }

    #[test]
    fn ratio_without_visible_enemies_attacks() {
        let t = UnitTypeTable::builtin();
        let d = ratio_policy(&map_with(&t, &[(1, 3.0)], &[]), &t, &RatioPolicyConfig::default());
        assert!(d.attack && d.score > 1e8);
        assert_eq!(d.reason, "no-visible-enemy");
    }

    #[test]
    fn model_threshold_and_gate() {
        let c = ModelPolicyConfig::default();
        assert!(model_decision(0.70, true, &c).attack);
        assert!(!model_decision(0.70, false, &c).attack);
        assert!(!model_decision(0.69, true, &c).attack);
        let open = ModelPolicyConfig {
            require_upgrade: false,
            ..c
        };
        assert!(model_decision(0.70, false, &open).attack);
    }

    #[test]
    fn square_law_values() {
        assert_eq!(square_law_probability(0.0, 0.0), 0.5);
        assert_eq!(square_law_probability(3.0, 0.0), 1.0);
        assert!((square_law_probability(2.0, 1.0) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn skirmish_frequency_matches_formula() {
        let n = 10_000;
        for (ratio, p) in [(1.0, 0.5), (2.0, 0.8), (3.0, 0.9)] {
            let wins = (0..n)
                .filter(|&s| skirmish_from_probability(square_law_probability(ratio, 1.0), s) == Side::A)
                .count();
            let rate = wins as f64 / n as f64;
            assert!((rate - p).abs() <= 0.02, "ratio {ratio}: {rate}");
        }
    }

    #[test]
    fn wilson_known_value() {
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
        assert_eq!(wilson_interval(0, 10).0, 0.0);
    }

    #[test]
    fn benchmark_counts_and_determinism() {
        let t = UnitTypeTable::builtin();
        let game = SyntheticConfig {
            seed: 2,
            ..Default::default()
        };
        let r1 = RatioPolicy {
            table: &t,
            config: RatioPolicyConfig::default(),
        };
        let r2 = RatioPolicy {
            table: &t,
            config: RatioPolicyConfig::default(),
        };
        let rep = run_policy_benchmark(&[&r1, &r2], &game, &t, 100, 9).unwrap();
        assert_eq!(rep.results[0].outcomes.len(), 100);
        assert_eq!(rep.results[0].outcomes, rep.results[1].outcomes);
        assert!(run_policy_benchmark(&[&r1], &game, &t, 0, 9).is_err());
        assert!(rep.to_csv().starts_with("policy,trials,wins,win_rate,ci_low,ci_high\nratio,100,"));
    }
}
