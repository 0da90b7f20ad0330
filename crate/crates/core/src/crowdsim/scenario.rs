use std::f64::consts::{FRAC_PI_2, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vec2::Vec2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Five humans on a circle crossing to antipodal goals.
    SimpleCircle,
    /// Five humans on a circle plus randomly placed ones.
    ComplexCircle,
    /// Five humans crossing a square plus randomly placed ones.
    ComplexSquare,
}

impl ScenarioKind {
    pub fn is_complex(self) -> bool {
        !matches!(self, ScenarioKind::SimpleCircle)
    }

    pub fn default_humans(self) -> usize {
        if self.is_complex() {
            10
        } else {
            5
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" | "simple-circle" => Ok(Self::SimpleCircle),
            "complex" | "complex-circle" => Ok(Self::ComplexCircle),
            "complex-square" => Ok(Self::ComplexSquare),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Number of humans placed on the circle or square in complex scenarios.
pub const STRUCTURED_HUMANS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub n_humans: usize,
    /// m
    pub circle_radius: f64,
    /// m
    pub square_side: f64,
    /// s
    pub timestep: f64,
    /// s
    pub time_limit: f64,
    pub seed: u64,
    pub human_radius: f64,
    pub human_v_pref: f64,
    pub robot_radius: f64,
    pub robot_v_max: f64,
    /// Scale of the uniform `(-0.5, 0.5)·v_pref` spawn jitter on circle humans.
    pub spawn_noise: f64,
    /// Clearance kept between spawned agents and between spawns and goals.
    pub discomfort_dist: f64,
    /// Humans receive a fresh random goal when they reach theirs.
    /// Defaults to on for complex scenarios.
    pub regoal_humans: Option<bool>,
    pub orca_time_horizon: f64,
    pub orca_neighbor_dist: f64,
    pub orca_max_neighbors: usize,
    /// Radius inflation humans use inside ORCA.
    pub orca_radius_margin: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::new(ScenarioKind::SimpleCircle)
    }
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            n_humans: kind.default_humans(),
            circle_radius: 4.0,
            square_side: 8.0,
            timestep: 0.25,
            time_limit: 30.0,
            seed: 0,
            human_radius: 0.3,
            human_v_pref: 1.0,
            robot_radius: 0.3,
            robot_v_max: 1.0,
            spawn_noise: 1.0,
            discomfort_dist: 0.2,
            regoal_humans: None,
            orca_time_horizon: 5.0,
            orca_neighbor_dist: 10.0,
            orca_max_neighbors: 10,
            orca_radius_margin: 0.01,
        }
    }

    pub fn simple() -> Self {
        Self::new(ScenarioKind::SimpleCircle)
    }

    pub fn complex_circle() -> Self {
        Self::new(ScenarioKind::ComplexCircle)
    }

    pub fn complex_square() -> Self {
        Self::new(ScenarioKind::ComplexSquare)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_humans(mut self, n: usize) -> Self {
        self.n_humans = n;
        self
    }

    pub fn regoal(&self) -> bool {
        self.regoal_humans.unwrap_or(self.kind.is_complex())
    }

    pub fn max_steps(&self) -> usize {
        (self.time_limit / self.timestep).round() as usize
    }

    pub fn robot_start(&self) -> Vec2 {
        Vec2::new(0.0, -self.circle_radius)
    }

    pub fn robot_goal(&self) -> Vec2 {
        Vec2::new(0.0, self.circle_radius)
    }

    pub fn robot_start_heading(&self) -> f64 {
        FRAC_PI_2
    }

    /// Half-width of the square region random humans and goals are drawn from.
    pub fn arena_half_width(&self) -> f64 {
        self.square_side / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("circle_radius", self.circle_radius),
            ("square_side", self.square_side),
            ("timestep", self.timestep),
            ("time_limit", self.time_limit),
            ("human_radius", self.human_radius),
            ("human_v_pref", self.human_v_pref),
            ("robot_radius", self.robot_radius),
            ("robot_v_max", self.robot_v_max),
            ("orca_time_horizon", self.orca_time_horizon),
            ("orca_neighbor_dist", self.orca_neighbor_dist),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("scenario.{name} must be positive, got {v}")));
            }
        }
        if self.n_humans > 64 {
            return Err(Error::Config(format!("scenario.n_humans = {} is too many", self.n_humans)));
        }
        if self.kind.is_complex() && self.n_humans < STRUCTURED_HUMANS && self.n_humans != 0 {
            return Err(Error::Config(format!(
                "complex scenarios place {STRUCTURED_HUMANS} structured humans, n_humans = {}",
                self.n_humans
            )));
        }
        Ok(())
    }
}

/// Initial position and goal of one human.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spawn {
    pub position: Vec2,
    pub goal: Vec2,
}

const MAX_SPAWN_TRIES: usize = 10_000;

fn clear_of(cfg: &ScenarioConfig, p: Vec2, placed: &[Spawn]) -> bool {
    let robot_clear = cfg.human_radius + cfg.robot_radius + cfg.discomfort_dist;
    if (p - cfg.robot_start()).length() < robot_clear || (p - cfg.robot_goal()).length() < robot_clear {
        return false;
    }
    let human_clear = 2.0 * cfg.human_radius + cfg.discomfort_dist;
    placed
        .iter()
        .all(|s| (p - s.position).length() >= human_clear && (p - s.goal).length() >= human_clear)
}

fn sample_until<R: Rng>(rng: &mut R, mut draw: impl FnMut(&mut R) -> Spawn, ok: impl Fn(&Spawn) -> bool) -> Spawn {
    let mut last = draw(rng);
    for _ in 0..MAX_SPAWN_TRIES {
        if ok(&last) {
            return last;
        }
        last = draw(rng);
    }
    last
}

pub fn random_point<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> Vec2 {
    let h = cfg.arena_half_width();
    Vec2::new(rng.gen_range(-h..h), rng.gen_range(-h..h))
}

fn circle_spawn<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> Spawn {
    let angle = rng.gen::<f64>() * TAU;
    let nx = (rng.gen::<f64>() - 0.5) * cfg.human_v_pref * cfg.spawn_noise;
    let ny = (rng.gen::<f64>() - 0.5) * cfg.human_v_pref * cfg.spawn_noise;
    let position = Vec2::from_polar(cfg.circle_radius, angle) + Vec2::new(nx, ny);
    Spawn { position, goal: -position }
}

fn square_spawn<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> Spawn {
    let side = cfg.square_side;
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let position = Vec2::new(rng.gen::<f64>() * side * 0.5 * sign, (rng.gen::<f64>() - 0.5) * side);
    let goal = Vec2::new(rng.gen::<f64>() * side * 0.5 * -sign, (rng.gen::<f64>() - 0.5) * side);
    Spawn { position, goal }
}

/// Draws the initial human layout for `cfg`.
pub fn spawn_humans<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<Spawn> {
    let mut placed: Vec<Spawn> = Vec::with_capacity(cfg.n_humans);
    for i in 0..cfg.n_humans {
        let structured = !cfg.kind.is_complex() || i < STRUCTURED_HUMANS;
        let s = match (cfg.kind, structured) {
            (ScenarioKind::ComplexSquare, true) => {
                sample_until(rng, |r| square_spawn(cfg, r), |s| clear_of(cfg, s.position, &placed) && clear_of(cfg, s.goal, &placed))
            }
            (_, true) => sample_until(rng, |r| circle_spawn(cfg, r), |s| clear_of(cfg, s.position, &placed)),
            (_, false) => sample_until(
                rng,
                |r| Spawn { position: random_point(cfg, r), goal: random_point(cfg, r) },
                |s| clear_of(cfg, s.position, &placed),
            ),
        };
        placed.push(s);
    }
    placed
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn human_counts() {
        assert_eq!(ScenarioConfig::simple().n_humans, 5);
        assert_eq!(ScenarioConfig::complex_circle().n_humans, 10);
        assert_eq!(ScenarioConfig::complex_square().n_humans, 10);
        assert_eq!(ScenarioConfig::simple().max_steps(), 120);
    }

    #[test]
    fn spawns_keep_clearance() {
        for kind in [ScenarioKind::SimpleCircle, ScenarioKind::ComplexCircle, ScenarioKind::ComplexSquare] {
            let cfg = ScenarioConfig::new(kind);
            for seed in 0..20 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s = spawn_humans(&cfg, &mut rng);
                assert_eq!(s.len(), cfg.n_humans);
                for i in 0..s.len() {
                    for j in 0..i {
                        assert!((s[i].position - s[j].position).length() >= 0.8 - 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn parses_kinds() {
        assert_eq!("simple".parse::<ScenarioKind>().unwrap(), ScenarioKind::SimpleCircle);
        assert_eq!("complex-square".parse::<ScenarioKind>().unwrap(), ScenarioKind::ComplexSquare);
        assert!("hexagon".parse::<ScenarioKind>().is_err());
    }
}
