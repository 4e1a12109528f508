use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Plane, Point3};

/// An axis-aligned rectangular wall: `min` and `max` agree on exactly one axis,
/// which is the wall normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Panel {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Panel {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let panel = Self { min, max };
        panel.normal_axis()?;
        Ok(panel)
    }

    /// Index of the flat axis.
    pub fn normal_axis(&self) -> Result<usize> {
        let finite = self.min.iter().chain(&self.max).all(|v| v.is_finite());
        let flat: Vec<usize> = (0..3).filter(|&k| self.min[k] == self.max[k]).collect();
        let ordered = (0..3).all(|k| self.min[k] <= self.max[k]);
        match flat.as_slice() {
            [k] if finite && ordered => Ok(*k),
            _ => Err(Error::InvalidConfig(format!(
                "panel {:?}..{:?} must be finite, ordered and flat along exactly one axis",
                self.min, self.max
            ))),
        }
    }

    pub fn plane(&self) -> Plane {
        let k = self.normal_axis().expect("validated panel");
        let mut n = [0.0; 3];
        n[k] = 1.0;
        Plane::new(n[0], n[1], n[2], -self.min[k]).expect("unit normal")
    }

    /// Euclidean distance from `p` to the closest point of the rectangle.
    pub fn distance(&self, p: &Point3) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let c = p[k].clamp(self.min[k], self.max[k]);
            d2 += (p[k] - c).powi(2);
        }
        d2.sqrt()
    }

    /// Ray parameter of the first hit, if the ray meets the rectangle.
    pub fn intersect(&self, origin: &Point3, dir: &[f64; 3]) -> Option<f64> {
        let k = self.normal_axis().ok()?;
        if dir[k].abs() < 1e-12 {
            return None;
        }
        let t = (self.min[k] - origin[k]) / dir[k];
        if t <= 0.0 {
            return None;
        }
        let inside = (0..3).filter(|&i| i != k).all(|i| {
            let x = origin[i] + t * dir[i];
            x >= self.min[i] && x <= self.max[i]
        });
        inside.then_some(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub position: [f64; 3],
    /// Reference speed on the segment that ends at this waypoint (m/s).
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub name: String,
    pub panels: Vec<Panel>,
    pub spawn: [f64; 3],
    pub waypoints: Vec<Waypoint>,
}

/// Cruise altitude shared by the built-in environments (m).
pub const CRUISE_ALTITUDE: f64 = 1.5;

impl Environment {
    /// Two parallel walls 2 m apart along +x, 20 m long, with waypoints that
    /// zigzag 0.25 m toward each wall in the middle section.
    pub fn corridor(speed: f64) -> Self {
        let z = CRUISE_ALTITUDE;
        let panels = vec![
            Panel::new([-2.0, -1.0, 0.0], [18.0, -1.0, 3.0]).expect("static panel"),
            Panel::new([-2.0, 1.0, 0.0], [18.0, 1.0, 3.0]).expect("static panel"),
        ];
        let path = [
            [3.0, 0.0],
            [5.0, 0.25],
            [7.0, -0.25],
            [9.0, 0.25],
            [11.0, -0.25],
            [13.0, 0.0],
            [15.0, 0.0],
        ];
        Self {
            name: "corridor".into(),
            panels,
            spawn: [0.0, 0.0, z],
            waypoints: path
                .iter()
                .map(|[x, y]| Waypoint {
                    position: [*x, *y, z],
                    speed,
                })
                .collect(),
        }
    }

    /// A closed 4 m × 4 m × 3 m box with a slow square patrol around the centre.
    pub fn confined_room(speed: f64) -> Self {
        let z = CRUISE_ALTITUDE;
        let (h, top) = (2.0, 3.0);
        let panels = vec![
            Panel::new([-h, -h, 0.0], [h, h, 0.0]).expect("static panel"),
            Panel::new([-h, -h, top], [h, h, top]).expect("static panel"),
            Panel::new([-h, -h, 0.0], [-h, h, top]).expect("static panel"),
            Panel::new([h, -h, 0.0], [h, h, top]).expect("static panel"),
            Panel::new([-h, -h, 0.0], [h, -h, top]).expect("static panel"),
            Panel::new([-h, h, 0.0], [h, h, top]).expect("static panel"),
        ];
        let path = [[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5], [0.0, 0.0]];
        Self {
            name: "confined_room".into(),
            panels,
            spawn: [0.0, 0.0, z],
            waypoints: path
                .iter()
                .map(|[x, y]| Waypoint {
                    position: [*x, *y, z],
                    speed,
                })
                .collect(),
        }
    }

    /// No walls, hover at the spawn point.
    pub fn open(spawn: [f64; 3]) -> Self {
        Self {
            name: "open".into(),
            panels: Vec::new(),
            spawn,
            waypoints: Vec::new(),
        }
    }

    pub fn distance_to_nearest(&self, p: &Point3) -> f64 {
        self.panels
            .iter()
            .map(|panel| panel.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Panels must be valid and the spawn at least `d_s` from every panel.
    pub fn validate(&self, d_s: f64) -> Result<()> {
        for panel in &self.panels {
            panel.normal_axis()?;
        }
        let spawn = Point3::from(self.spawn);
        let clearance = self.distance_to_nearest(&spawn);
        if clearance < d_s {
            return Err(Error::InvalidConfig(format!(
                "spawn {:?} is {clearance:.3} m from the nearest panel, below d_s = {d_s}",
                self.spawn
            )));
        }
        if self.waypoints.iter().any(|w| !(w.speed > 0.0) || w.position.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidConfig("waypoints need finite positions and positive speeds".into()));
        }
        Ok(())
    }
}
