use serde::{Deserialize, Serialize};

/// Social force parameters shared by every pedestrian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfmParams {
    /// Relaxation time τ of the goal force, seconds.
    pub tau: f64,
    /// Repulsion strength `A_h`, m/s².
    pub strength: f64,
    /// Repulsion range `B_h`, metres.
    pub range: f64,
    /// Body radius, metres.
    pub radius: f64,
}

impl Default for SfmParams {
    fn default() -> Self {
        Self {
            tau: 0.5,
            strength: 2.0,
            range: 0.3,
            radius: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanAgent {
    pub position: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    pub goal: [f64; 2],
    #[serde(default = "default_speed")]
    pub desired_speed: f64,
    #[serde(default)]
    pub sfm: SfmParams,
}

fn default_speed() -> f64 {
    1.0
}

impl HumanAgent {
    pub fn new(position: [f64; 2], goal: [f64; 2]) -> Self {
        Self {
            position,
            velocity: [0.0; 2],
            goal,
            desired_speed: default_speed(),
            sfm: SfmParams::default(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.desired_speed > 0.0 && self.sfm.tau > 0.0 && self.sfm.range > 0.0 && self.sfm.radius >= 0.0
    }

    fn goal_force(&self) -> [f64; 2] {
        let d = [self.goal[0] - self.position[0], self.goal[1] - self.position[1]];
        let n = d[0].hypot(d[1]);
        let desired = if n > 1e-9 {
            [self.desired_speed * d[0] / n, self.desired_speed * d[1] / n]
        } else {
            [0.0, 0.0]
        };
        [
            (desired[0] - self.velocity[0]) / self.sfm.tau,
            (desired[1] - self.velocity[1]) / self.sfm.tau,
        ]
    }

    /// Exponential push away from a body at `other` with radius `other_radius`.
    fn repulsion(&self, other: [f64; 2], other_radius: f64) -> [f64; 2] {
        let d = [self.position[0] - other[0], self.position[1] - other[1]];
        let dist = d[0].hypot(d[1]);
        if dist < 1e-12 {
            return [0.0, 0.0];
        }
        let mag = self.sfm.strength * ((self.sfm.radius + other_radius - dist) / self.sfm.range).exp();
        [mag * d[0] / dist, mag * d[1] / dist]
    }
}

/// One Euler step of the crowd. Forces are evaluated on the current
/// state of everyone before anyone moves; `robot`, when given, repels
/// the humans like another pedestrian but is not moved here.
pub fn social_force_step(humans: &[HumanAgent], robot: Option<(&[f64; 2], f64)>, dt: f64) -> Vec<HumanAgent> {
    humans
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let mut f = h.goal_force();
            for (j, other) in humans.iter().enumerate() {
                if i != j {
                    let r = h.repulsion(other.position, other.sfm.radius);
                    f[0] += r[0];
                    f[1] += r[1];
                }
            }
            if let Some((p, radius)) = robot {
                let r = h.repulsion(*p, radius);
                f[0] += r[0];
                f[1] += r[1];
            }
            let mut next = *h;
            next.position = [h.position[0] + dt * h.velocity[0], h.position[1] + dt * h.velocity[1]];
            next.velocity = [h.velocity[0] + dt * f[0], h.velocity[1] + dt * f[1]];
            next
        })
        .collect()
}
