//! Simulated environment: the farm world, the tabletop scene, and the robot
//! backends that realize each action pool.
//!
//! Time is virtual. Actions advance a per-world clock by their simulated
//! duration, so missions replay instantly and deterministically. All
//! randomness flows from one seeded generator owned by the world.

pub mod arm;
pub mod farm;
pub mod geo;
pub mod geom;
pub mod rover;
pub mod scene;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use farm::FarmModel;
use geom::Vec3;
use scene::SceneObject;

#[derive(Debug, Clone)]
pub struct SimWorld {
    pub farm: FarmModel,
    pub scene: Vec<SceneObject>,
    pub seed: u64,
    rng: ChaCha8Rng,
    clock_s: f64,
    artifact_counter: u64,
}

impl SimWorld {
    pub fn new(farm: FarmModel, scene: Vec<SceneObject>, seed: u64) -> Self {
        SimWorld {
            farm,
            scene,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clock_s: 0.0,
            artifact_counter: 0,
        }
    }

    /// Reset clock, rng, and artifact numbering, keeping world content.
    /// A fresh mission on a cloned world starts from this state.
    pub fn reset(&mut self, seed: u64) {
        self.seed = seed;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.clock_s = 0.0;
        self.artifact_counter = 0;
    }

    pub fn now(&self) -> f64 {
        self.clock_s
    }

    pub fn advance_clock(&mut self, dt_s: f64) {
        self.clock_s += dt_s.max(0.0);
    }

    pub fn next_artifact(&mut self, kind: &str) -> String {
        self.artifact_counter += 1;
        format!("{}_{:04}", kind, self.artifact_counter)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo >= hi {
            return lo;
        }
        self.rng.gen_range(lo..hi)
    }

    /// Standard normal draw via Box-Muller on the world generator.
    pub fn gaussian(&mut self) -> f64 {
        let u1: f64 = self.rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = self.rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform direction on the unit sphere, by normalized gaussian triple.
    pub fn unit_direction(&mut self) -> Vec3 {
        loop {
            let v = Vec3::new(self.gaussian(), self.gaussian(), self.gaussian());
            let n = v.norm();
            if n > 1e-9 {
                return v.scale(1.0 / n);
            }
        }
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.scene.iter().find(|o| o.id == id)
    }
}
