//! Random waypoint motion.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn dist(self, o: Vec2) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeMotion {
    pub position: Vec2,
    pub waypoint: Vec2,
    pub speed: f64,
    pub pause_remaining_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointParams {
    pub width: f64,
    pub height: f64,
    pub max_speed: f64,
    pub pause_s: f64,
}

impl WaypointParams {
    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        Vec2 {
            x: rng.random::<f64>() * self.width,
            y: rng.random::<f64>() * self.height,
        }
    }

    /// Uniform on `(0, max_speed]`.
    fn random_speed<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.max_speed * (1.0 - rng.random::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityState {
    pub nodes: Vec<NodeMotion>,
}

/// A fresh leg started by a node during a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewLeg {
    pub index: usize,
    pub waypoint: Vec2,
    pub speed: f64,
}

impl MobilityState {
    /// Every node starts at `positions[i]` heading for a random waypoint.
    pub fn start<R: Rng + ?Sized>(positions: &[Vec2], p: &WaypointParams, rng: &mut R) -> Self {
        let nodes = positions
            .iter()
            .map(|&position| NodeMotion {
                position,
                waypoint: p.random_point(rng),
                speed: p.random_speed(rng),
                pause_remaining_s: 0.0,
            })
            .collect();
        MobilityState { nodes }
    }

    /// Nodes that never move.
    pub fn fixed(positions: &[Vec2]) -> Self {
        MobilityState {
            nodes: positions
                .iter()
                .map(|&position| NodeMotion {
                    position,
                    waypoint: position,
                    speed: 0.0,
                    pause_remaining_s: f64::INFINITY,
                })
                .collect(),
        }
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.nodes.iter().map(|n| n.position).collect()
    }
}

/// Advances every node by `dt` seconds. Returns the legs started.
pub fn step_mobility<R: Rng + ?Sized>(
    state: &mut MobilityState,
    p: &WaypointParams,
    dt: f64,
    rng: &mut R,
) -> Vec<NewLeg> {
    let mut legs = Vec::new();
    for (i, n) in state.nodes.iter_mut().enumerate() {
        let mut t = dt;
        while t > 0.0 {
            if n.pause_remaining_s > 0.0 {
                let used = n.pause_remaining_s.min(t);
                n.pause_remaining_s -= used;
                t -= used;
                if n.pause_remaining_s > 0.0 || n.pause_remaining_s.is_infinite() {
                    break;
                }
                n.waypoint = p.random_point(rng);
                n.speed = p.random_speed(rng);
                legs.push(NewLeg {
                    index: i,
                    waypoint: n.waypoint,
                    speed: n.speed,
                });
                continue;
            }
            let d = n.position.dist(n.waypoint);
            let reach = n.speed * t;
            if reach < d {
                let f = reach / d;
                n.position.x += (n.waypoint.x - n.position.x) * f;
                n.position.y += (n.waypoint.y - n.position.y) * f;
                break;
            }
            n.position = n.waypoint;
            t -= if n.speed > 0.0 { d / n.speed } else { t };
            n.pause_remaining_s = p.pause_s;
            if p.pause_s == 0.0 {
                // Zero pause: pick the next leg right away.
                n.pause_remaining_s = f64::MIN_POSITIVE;
            }
        }
    }
    legs
}
