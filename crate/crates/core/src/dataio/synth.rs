//! Synthetic replays standing in for a professional replay corpus.
//!
//! Side A starts in the top-left corner and side B in the bottom-right.
//! Each side has a hidden strength that sets its final army size; A's is
//! drawn from a narrower range than B's, so the outcome hinges mostly on
//! what A cannot see. B's army grows steadily. A builds a small army early
//! and then spikes at a per-game timing, so its edge peaks right after the
//! spike and erodes as B keeps growing. Workers gather next to each base and
//! production buildings scale with strength. B holds most of its army as a
//! tight guard in front of its main base and sends the rest toward the map
//! center; A usually has a scout somewhere around that guard, so A sees a
//! varying share of it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamestate::{Frame, Side, UnitInstance, UnitTypeTable, FRAME_INTERVAL_S, MAP_PX};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_replays: usize,
    pub frames_per_replay: usize,
    /// Army size range (combat units) per side at the final frame.
    pub units_per_side: (usize, usize),
    /// Base locations a side may occupy (main plus expansions), 1..=3.
    pub bases_per_side: usize,
    /// Per-frame chance that side A has a scout near side B's guard.
    pub scout_probability: f64,
    /// Frames dropped from the start of each replay by [`generate_corpus`].
    pub skip_first_frames: usize,
    /// Frames dropped from the end of each replay by [`generate_corpus`].
    pub skip_last_frames: usize,
    /// Frame index from which side A's weapons upgrade is complete.
    pub upgrade_frame: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_replays: 1000,
            frames_per_replay: 6,
            units_per_side: (24, 96),
            bases_per_side: 3,
            scout_probability: 0.9,
            skip_first_frames: 2,
            skip_last_frames: 2,
            upgrade_frame: 3,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames_per_replay < 2 {
            return Err(Error::invalid("frames_per_replay must be at least 2"));
        }
        if self.units_per_side.0 > self.units_per_side.1 {
            return Err(Error::invalid("units_per_side range is reversed"));
        }
        if !(1..=3).contains(&self.bases_per_side) {
            return Err(Error::invalid("bases_per_side must be 1, 2 or 3"));
        }
        if !(0.0..=1.0).contains(&self.scout_probability) {
            return Err(Error::invalid("scout_probability must lie in [0, 1]"));
        }
        if self.skip_first_frames + self.skip_last_frames >= self.frames_per_replay {
            return Err(Error::invalid("frame skipping would drop every frame"));
        }
        Ok(())
    }

    pub fn replay_id(&self, index: usize) -> String {
        format!("synth-{}-{index:05}", self.seed)
    }

    /// Whether side A's upgrade is done at `t_seconds`.
    pub fn upgrade_done(&self, t_seconds: u32) -> bool {
        (t_seconds / FRAME_INTERVAL_S) as usize >= self.upgrade_frame
    }
}

// Channel ids in registry order.
mod ids {
    pub const SCV: usize = 0;
    pub const MARINE: usize = 1;
    pub const FIREBAT: usize = 2;
    pub const MEDIC: usize = 3;
    pub const VULTURE: usize = 5;
    pub const TANK: usize = 6;
    pub const GOLIATH: usize = 8;
    pub const WRAITH: usize = 9;
    pub const COMMAND_CENTER: usize = 16;
    pub const SUPPLY_DEPOT: usize = 19;
    pub const REFINERY: usize = 20;
    pub const BARRACKS: usize = 21;
    pub const ACADEMY: usize = 22;
    pub const FACTORY: usize = 23;
    pub const STARPORT: usize = 24;
    pub const MACHINE_SHOP: usize = 29;
    pub const ENGINEERING_BAY: usize = 30;
    pub const ARMORY: usize = 31;
    pub const MISSILE_TURRET: usize = 32;
    pub const BUNKER: usize = 33;

    pub const PROBE: usize = 34;
    pub const ZEALOT: usize = 35;
    pub const DRAGOON: usize = 36;
    pub const HIGH_TEMPLAR: usize = 37;
    pub const DARK_TEMPLAR: usize = 38;
    pub const REAVER: usize = 41;
    pub const CORSAIR: usize = 49;
    pub const NEXUS: usize = 50;
    pub const PYLON: usize = 51;
    pub const ASSIMILATOR: usize = 52;
    pub const GATEWAY: usize = 53;
    pub const FORGE: usize = 54;
    pub const PHOTON_CANNON: usize = 55;
    pub const CYBERNETICS_CORE: usize = 56;
    pub const ROBOTICS_FACILITY: usize = 58;
    pub const CITADEL: usize = 60;
    pub const TEMPLAR_ARCHIVES: usize = 63;
    pub const OBSERVATORY: usize = 64;
}

/// Share of the final army present at a given game progress.
#[derive(Clone, Copy)]
enum Growth {
    /// `progress^k` with `k` drawn per game from the range.
    Power(f64, f64),
    /// A linear base army plus a steep ramp around a timing drawn per game
    /// from the range.
    Spike(f64, f64),
}

impl Growth {
    /// Ramp width of [`Growth::Spike`] in units of progress.
    const SPIKE_WIDTH: f64 = 0.08;
    /// Share of the final army that [`Growth::Spike`] builds linearly.
    const SPIKE_BASE: f64 = 0.35;

    fn draw(self, rng: &mut ChaCha8Rng) -> Growth {
        match self {
            Growth::Power(lo, hi) => {
                let k = rng.gen_range(lo..hi);
                Growth::Power(k, k)
            }
            Growth::Spike(lo, hi) => {
                let t = rng.gen_range(lo..hi);
                Growth::Spike(t, t)
            }
        }
    }

    /// Uses the lower bound, which [`Growth::draw`] pins to the drawn value.
    fn share(self, progress: f64) -> f64 {
        match self {
            Growth::Power(k, _) => progress.powf(k),
            Growth::Spike(t, _) => {
                let ramp = 1.0 / (1.0 + (-(progress - t) / Self::SPIKE_WIDTH).exp());
                Self::SPIKE_BASE * progress + (1.0 - Self::SPIKE_BASE) * ramp
            }
        }
    }
}

struct Race {
    side: Side,
    worker: usize,
    town_hall: usize,
    supply: usize,
    gas: usize,
    production: usize,
    defense: usize,
    /// (type, base weight)
    army: &'static [(usize, f64)],
    /// (type, progress threshold)
    tech: &'static [(usize, f64)],
    growth: Growth,
    /// Share of the army held back next to the main base.
    home_guard: f64,
    /// Main, natural, third; mineral lines sit toward the own corner.
    bases: [(f64, f64); 3],
    corner: (f64, f64),
}

const RACE_A: Race = Race {
    side: Side::A,
    worker: ids::SCV,
    town_hall: ids::COMMAND_CENTER,
    supply: ids::SUPPLY_DEPOT,
    gas: ids::REFINERY,
    production: ids::BARRACKS,
    defense: ids::BUNKER,
    army: &[
        (ids::MARINE, 5.0),
        (ids::FIREBAT, 1.0),
        (ids::MEDIC, 1.0),
        (ids::VULTURE, 2.0),
        (ids::TANK, 2.0),
        (ids::GOLIATH, 1.5),
        (ids::WRAITH, 0.5),
    ],
    tech: &[
        (ids::ACADEMY, 0.2),
        (ids::FACTORY, 0.25),
        (ids::MACHINE_SHOP, 0.3),
        (ids::ARMORY, 0.4),
        (ids::ENGINEERING_BAY, 0.5),
        (ids::STARPORT, 0.6),
        (ids::MISSILE_TURRET, 0.65),
    ],
    growth: Growth::Spike(0.25, 0.85),
    home_guard: 0.0,
    bases: [(600.0, 600.0), (600.0, 1750.0), (1750.0, 600.0)],
    corner: (0.0, 0.0),
};

const RACE_B: Race = Race {
    side: Side::B,
    worker: ids::PROBE,
    town_hall: ids::NEXUS,
    supply: ids::PYLON,
    gas: ids::ASSIMILATOR,
    production: ids::GATEWAY,
    defense: ids::PHOTON_CANNON,
    army: &[
        (ids::ZEALOT, 4.0),
        (ids::DRAGOON, 4.0),
        (ids::HIGH_TEMPLAR, 0.7),
        (ids::DARK_TEMPLAR, 0.5),
        (ids::REAVER, 0.5),
        (ids::CORSAIR, 0.4),
    ],
    tech: &[
        (ids::CYBERNETICS_CORE, 0.15),
        (ids::CITADEL, 0.35),
        (ids::FORGE, 0.4),
        (ids::ROBOTICS_FACILITY, 0.5),
        (ids::TEMPLAR_ARCHIVES, 0.6),
        (ids::OBSERVATORY, 0.65),
    ],
    growth: Growth::Power(0.5, 1.0),
    home_guard: 0.8,
    bases: [(3496.0, 3496.0), (3496.0, 2346.0), (2346.0, 3496.0)],
    corner: (4096.0, 4096.0),
};

const CENTER: (f64, f64) = (2048.0, 2048.0);
/// Distance of the home guard from the main base, toward the center.
const GUARD_OFFSET: f64 = 320.0;

struct SidePlan {
    strength: f64,
    final_army: f64,
    army_weights: Vec<f64>,
    expansion_at: [f64; 3],
    /// How far toward the center the army pushes, per unit of progress.
    aggression: f64,
    growth: Growth,
}

/// Mean combat value of one unit drawn from the race's base army mix.
fn mean_unit_value(race: &Race, table: &UnitTypeTable) -> f64 {
    let (mut w, mut wv) = (0.0, 0.0);
    for &(t, weight) in race.army {
        w += weight;
        wv += weight * table.get(t).map_or(0.0, |u| u.combat_value);
    }
    if w > 0.0 && wv > 0.0 {
        wv / w
    } else {
        1.0
    }
}

/// `value_scale` converts the configured unit range so both races field
/// the same expected combat value for equal strength.
fn plan_side(race: &Race, cfg: &SyntheticConfig, value_scale: f64, rng: &mut ChaCha8Rng) -> SidePlan {
    let strength: f64 = match race.side {
        Side::A => rng.gen_range(0.3..0.7),
        Side::B => rng.gen(),
    };
    let (lo, hi) = cfg.units_per_side;
    let final_army = (lo as f64 + (hi - lo) as f64 * strength) * value_scale;
    let army_weights = race.army.iter().map(|&(_, w)| w * rng.gen_range(0.5..1.5)).collect();
    let mut expansion_at = [0.0, rng.gen_range(0.25..0.5), rng.gen_range(0.55..0.85)];
    for (k, at) in expansion_at.iter_mut().enumerate() {
        if k >= cfg.bases_per_side {
            *at = f64::INFINITY;
        }
    }
    let aggression = match race.side {
        Side::A => rng.gen_range(0.0..0.45),
        Side::B => rng.gen_range(0.15..0.75),
    };
    let growth = race.growth.draw(rng);
    SidePlan {
        strength,
        final_army,
        army_weights,
        expansion_at,
        aggression,
        growth,
    }
}

struct Placer<'a> {
    rng: &'a mut ChaCha8Rng,
    units: Vec<UnitInstance>,
}

impl Placer<'_> {
    fn clamp(v: f64) -> u32 {
        v.round().clamp(0.0, (MAP_PX - 1) as f64) as u32
    }

    fn put(&mut self, type_id: usize, owner: Side, at: (f64, f64), spread: f64) {
        let (x, y) = if spread > 0.0 {
            let n = Normal::new(0.0, spread).expect("positive spread");
            (at.0 + n.sample(self.rng), at.1 + n.sample(self.rng))
        } else {
            at
        };
        self.units.push(UnitInstance {
            type_id,
            owner,
            x: Self::clamp(x),
            y: Self::clamp(y),
        });
    }

    fn put_n(&mut self, n: usize, type_id: usize, owner: Side, at: (f64, f64), spread: f64) {
        for _ in 0..n {
            self.put(type_id, owner, at, spread);
        }
    }
}

fn lerp(a: (f64, f64), b: (f64, f64), t: f64) -> (f64, f64) {
    (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
}

fn toward(from: (f64, f64), to: (f64, f64), dist: f64) -> (f64, f64) {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let len = (dx * dx + dy * dy).sqrt().max(1e-9);
    (from.0 + dx / len * dist, from.1 + dy / len * dist)
}

fn pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn place_side(race: &Race, plan: &SidePlan, progress: f64, rng: &mut ChaCha8Rng, out: &mut Vec<UnitInstance>) {
    let side = race.side;
    let bases: Vec<(f64, f64)> = race
        .bases
        .iter()
        .zip(plan.expansion_at)
        .filter(|(_, at)| progress >= *at)
        .map(|(b, _)| *b)
        .collect();
    let economy = 0.8 + 0.4 * plan.strength;
    let workers = ((8.0 + 40.0 * progress) * economy).round() as usize;
    let production = 1 + (4.0 * plan.strength * progress.sqrt()).round() as usize;
    let army_now = plan.final_army * plan.growth.share(progress);
    let noise = Normal::new(0.0f64, 0.15).expect("valid sigma");
    let army = (army_now * noise.sample(rng).exp()).round() as usize;

    let mut p = Placer {
        rng,
        units: Vec::new(),
    };
    let main = bases[0];
    for (k, &base) in bases.iter().enumerate() {
        p.put(race.town_hall, side, base, 0.0);
        p.put(race.gas, side, toward(base, race.corner, 200.0), 20.0);
        let share = if bases.len() == 1 {
            workers
        } else if k == 0 {
            workers * 3 / 5
        } else {
            workers * 2 / (5 * (bases.len() - 1))
        };
        p.put_n(share, race.worker, side, toward(base, race.corner, 260.0), 60.0);
    }
    let supply = 1 + (workers + army) / 8;
    p.put_n(supply, race.supply, side, main, 260.0);
    p.put_n(production, race.production, side, toward(main, CENTER, 200.0), 160.0);
    for &(tech, at) in race.tech {
        if progress >= at {
            p.put(tech, side, main, 220.0);
        }
    }
    if let Some(&natural) = bases.get(1) {
        let defenses = 1 + (2.0 * progress * plan.strength).round() as usize;
        p.put_n(defenses, race.defense, side, toward(natural, CENTER, 220.0), 60.0);
    }

    let front = toward(race.bases[1], CENTER, 500.0);
    let push = (plan.aggression * progress * p.rng.gen_range(0.5..1.5)).min(0.95);
    let rally = lerp(front, CENTER, push);
    let guard_post = toward(main, CENTER, GUARD_OFFSET);
    for k in 0..army {
        let i = pick(&plan.army_weights, p.rng);
        if (k as f64) < race.home_guard * army as f64 {
            p.put(race.army[i].0, side, guard_post, 160.0);
        } else {
            p.put(race.army[i].0, side, rally, 150.0);
        }
    }

    out.append(&mut p.units);
}

fn combat_value(units: &[UnitInstance], table: &UnitTypeTable, side: Side) -> f64 {
    units
        .iter()
        .filter(|u| u.owner == side)
        .map(|u| table.get(u.type_id).map_or(0.0, |t| t.combat_value))
        .sum()
}

/// All `frames_per_replay` frames of one replay at t = 0, 3, 6, ...
/// The winner is the side with more combat value in the last frame (ties go
/// to A). Pure in `(config, replay_index)`.
pub fn generate_synthetic_replay(config: &SyntheticConfig, table: &UnitTypeTable, replay_index: usize) -> Result<Vec<Frame>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(replay_index as u64);

    let b_scale = mean_unit_value(&RACE_A, table) / mean_unit_value(&RACE_B, table);
    let plan_a = plan_side(&RACE_A, config, 1.0, &mut rng);
    let plan_b = plan_side(&RACE_B, config, b_scale, &mut rng);
    let last = config.frames_per_replay - 1;
    let mut frames: Vec<Frame> = Vec::with_capacity(config.frames_per_replay);
    for k in 0..config.frames_per_replay {
        let progress = k as f64 / last as f64;
        let mut units = Vec::new();
        place_side(&RACE_A, &plan_a, progress, &mut rng, &mut units);
        place_side(&RACE_B, &plan_b, progress, &mut rng, &mut units);

        if rng.gen::<f64>() < config.scout_probability {
            let scout = if progress < 0.4 { ids::SCV } else { ids::VULTURE };
            // Scattered around B's guard, so the visible share of it varies.
            let at = toward(RACE_B.bases[0], CENTER, GUARD_OFFSET);
            let mut p = Placer {
                rng: &mut rng,
                units: Vec::new(),
            };
            p.put(scout, Side::A, at, 300.0);
            units.append(&mut p.units);
        }

        frames.push(Frame {
            replay_id: config.replay_id(replay_index),
            t_seconds: k as u32 * FRAME_INTERVAL_S,
            units,
            winner: Side::A,
        });
    }
    let final_units = &frames[last].units;
    let winner = if combat_value(final_units, table, Side::A) >= combat_value(final_units, table, Side::B) {
        Side::A
    } else {
        Side::B
    };
    frames.iter_mut().for_each(|f| f.winner = winner);
    Ok(frames)
}

/// Drops uninformative opening and closing frames of one replay.
pub fn clean_frames(frames: Vec<Frame>, skip_first: usize, skip_last: usize) -> Vec<Frame> {
    let keep = frames.len().saturating_sub(skip_first + skip_last);
    frames.into_iter().skip(skip_first).take(keep).collect()
}

/// Every replay of the configured corpus, cleaned.
pub fn generate_corpus(config: &SyntheticConfig, table: &UnitTypeTable) -> Result<Vec<Frame>> {
    let mut frames = Vec::new();
    for i in 0..config.num_replays {
        let replay = generate_synthetic_replay(config, table, i)?;
        frames.extend(clean_frames(replay, config.skip_first_frames, config.skip_last_frames));
    }
    Ok(frames)
}
