use nalgebra::Vector3;

use super::environment::Waypoint;

/// Time-parameterized reference along a waypoint polyline.
///
/// A carrot moves from the spawn toward the active waypoint at that segment's
/// speed and parks on it. The active waypoint advances once the carrot is
/// parked and the vehicle is within the switching tolerance.
#[derive(Debug, Clone)]
pub struct ReferencePath {
    waypoints: Vec<Waypoint>,
    active: usize,
    carrot: Vector3<f64>,
    tolerance: f64,
}

impl ReferencePath {
    pub fn new(spawn: [f64; 3], waypoints: &[Waypoint], tolerance: f64) -> Self {
        Self {
            waypoints: waypoints.to_vec(),
            active: 0,
            carrot: Vector3::from(spawn),
            tolerance,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.carrot
    }

    pub fn active_waypoint(&self) -> Option<Vector3<f64>> {
        self.waypoints.get(self.active).map(|w| Vector3::from(w.position))
    }

    pub fn active_index(&self) -> usize {
        self.active
    }

    /// Every waypoint has been reached.
    pub fn finished(&self) -> bool {
        self.active >= self.waypoints.len()
    }

    /// Velocity of the carrot at its current position.
    pub fn velocity(&self) -> Vector3<f64> {
        match self.waypoints.get(self.active) {
            Some(w) => {
                let to = Vector3::from(w.position) - self.carrot;
                let d = to.norm();
                if d > 1e-9 {
                    to * (w.speed / d)
                } else {
                    Vector3::zeros()
                }
            }
            None => Vector3::zeros(),
        }
    }

    /// Moves `carrot` along the polyline from waypoint index `active` for `dt`
    /// seconds without waiting at waypoints. Returns the new position and index.
    fn travel(&self, mut carrot: Vector3<f64>, mut active: usize, mut dt: f64) -> (Vector3<f64>, usize) {
        while dt > 0.0 {
            let Some(w) = self.waypoints.get(active) else {
                break;
            };
            let target = Vector3::from(w.position);
            let remaining = (target - carrot).norm();
            let step = w.speed * dt;
            if step < remaining {
                carrot += (target - carrot) * (step / remaining);
                break;
            }
            carrot = target;
            dt -= remaining / w.speed;
            if active + 1 >= self.waypoints.len() {
                break;
            }
            active += 1;
        }
        (carrot, active)
    }

    /// Predicted carrot positions and velocities `dt, 2dt, ..., n·dt` ahead.
    pub fn preview(&self, n: usize, dt: f64) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        let mut out = Vec::with_capacity(n);
        let (mut carrot, mut active) = (self.carrot, self.active);
        for _ in 0..n {
            (carrot, active) = self.travel(carrot, active, dt);
            let v = match self.waypoints.get(active) {
                Some(w) => {
                    let to = Vector3::from(w.position) - carrot;
                    let d = to.norm();
                    if d > 1e-9 {
                        to * (w.speed / d)
                    } else {
                        Vector3::zeros()
                    }
                }
                None => Vector3::zeros(),
            };
            out.push((carrot, v));
        }
        out
    }

    /// Advances the carrot by `dt` within the active segment and switches
    /// waypoints when the vehicle at `p` is close enough.
    pub fn advance(&mut self, p: &Vector3<f64>, dt: f64) {
        let Some(w) = self.waypoints.get(self.active) else {
            return;
        };
        let target = Vector3::from(w.position);
        let remaining = (target - self.carrot).norm();
        let step = w.speed * dt;
        if step < remaining {
            self.carrot += (target - self.carrot) * (step / remaining);
        } else {
            self.carrot = target;
        }
        if self.carrot == target && (p - target).norm() <= self.tolerance {
            self.active += 1;
        }
    }
}
