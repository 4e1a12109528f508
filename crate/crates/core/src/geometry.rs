//! Point and plane primitives shared by segmentation, control and simulation.
//!
//! Planes are stored with a unit normal, so coefficient comparisons and
//! distance tolerances are scale free. Point clouds and plane lists have a
//! plain CSV representation (`x,y,z` and `alpha,beta,gamma,zeta`).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;

/// Cross-product norm below which three points are treated as collinear.
pub const COLLINEAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    #[default]
    Body,
    World,
}

/// An ordered list of points, tagged with the frame they are expressed in.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame: Frame) -> Self {
        Self { points, frame }
    }

    pub fn body(points: Vec<Point3>) -> Self {
        Self::new(points, Frame::Body)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.x.is_finite() && p.y.is_finite() && p.z.is_finite())
    }

    /// Parses `x,y,z` CSV (with header) into a body-frame cloud.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut points = Vec::new();
        for record in rdr.deserialize::<CsvPoint>() {
            let r = record?;
            if !(r.x.is_finite() && r.y.is_finite() && r.z.is_finite()) {
                return Err(Error::NonFinite("point cloud CSV"));
            }
            points.push(Point3::new(r.x, r.y, r.z));
        }
        Ok(Self::body(points))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for p in &self.points {
            wtr.serialize(CsvPoint {
                x: p.x,
                y: p.y,
                z: p.z,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct CsvPoint {
    x: f64,
    y: f64,
    z: f64,
}

/// Plane `alpha*x + beta*y + gamma*z + zeta = 0` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlaneCoefficients", into = "PlaneCoefficients")]
pub struct Plane {
    alpha: f64,
    beta: f64,
    gamma: f64,
    zeta: f64,
}

/// Raw, possibly unnormalized plane coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub zeta: f64,
}

impl TryFrom<PlaneCoefficients> for Plane {
    type Error = Error;

    fn try_from(c: PlaneCoefficients) -> Result<Self> {
        Plane::new(c.alpha, c.beta, c.gamma, c.zeta)
    }
}

impl From<Plane> for PlaneCoefficients {
    fn from(p: Plane) -> Self {
        Self {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            zeta: p.zeta,
        }
    }
}

impl Plane {
    /// Builds a plane from arbitrary-scale coefficients, normalizing the normal.
    pub fn new(alpha: f64, beta: f64, gamma: f64, zeta: f64) -> Result<Self> {
        if ![alpha, beta, gamma, zeta].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("plane coefficients"));
        }
        let norm = (alpha * alpha + beta * beta + gamma * gamma).sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidPlane(alpha, beta, gamma));
        }
        Ok(Self {
            alpha: alpha / norm,
            beta: beta / norm,
            gamma: gamma / norm,
            zeta: zeta / norm,
        })
    }

    pub fn from_normal_offset(normal: &Vector3<f64>, zeta: f64) -> Result<Self> {
        Self::new(normal.x, normal.y, normal.z, zeta)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(self.alpha, self.beta, self.gamma)
    }

    pub fn coefficients(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.zeta]
    }

    /// Signed distance; positive on the side the normal points to.
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.alpha * p.x + self.beta * p.y + self.gamma * p.z + self.zeta
    }

    pub fn distance(&self, p: &Point3) -> f64 {
        self.signed_distance(p).abs()
    }

    pub fn flipped(&self) -> Self {
        Self {
            alpha: -self.alpha,
            beta: -self.beta,
            gamma: -self.gamma,
            zeta: -self.zeta,
        }
    }

    /// Sign convention: `zeta <= 0`, i.e. the normal points from the origin
    /// towards the plane. Planes through the origin get a positive leading
    /// normal component instead.
    pub fn canonical(&self) -> Self {
        if self.zeta.abs() > 1e-12 {
            if self.zeta > 0.0 {
                return self.flipped();
            }
            return *self;
        }
        let lead = [self.alpha, self.beta, self.gamma]
            .into_iter()
            .find(|v| v.abs() > 1e-12)
            .unwrap_or(1.0);
        if lead < 0.0 {
            self.flipped()
        } else {
            *self
        }
    }

    /// Angle between the two normals in radians, ignoring orientation.
    pub fn normal_angle(&self, other: &Plane) -> f64 {
        self.normal().dot(&other.normal()).abs().min(1.0).acos()
    }

    /// Root-mean-square orthogonal residual of `points` against this plane.
    pub fn rms_residual(&self, points: &[Point3]) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        let ss: f64 = points.iter().map(|p| self.signed_distance(p).powi(2)).sum();
        (ss / points.len() as f64).sqrt()
    }
}

/// `|a x + b y + c z + d| / ||(a, b, c)||` for raw coefficients.
pub fn point_plane_distance(coefficients: [f64; 4], p: &Point3) -> Result<f64> {
    let [a, b, c, d] = coefficients;
    let norm = (a * a + b * b + c * c).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::InvalidPlane(a, b, c));
    }
    Ok((a * p.x + b * p.y + c * p.z + d).abs() / norm)
}

pub fn fit_plane_three_points(p1: &Point3, p2: &Point3, p3: &Point3) -> Result<Plane> {
    let n = (p2 - p1).cross(&(p3 - p1));
    let norm = n.norm();
    if !(norm > COLLINEAR_TOL) {
        return Err(Error::DegenerateGeometry(format!(
            "points are collinear (cross-product norm {norm:e})"
        )));
    }
    let n = n / norm;
    Plane::from_normal_offset(&n, -n.dot(&p1.coords))
}

/// Total-least-squares plane: normal is the eigenvector of the centered
/// scatter matrix with the smallest eigenvalue.
pub fn fit_plane_tls(points: &[Point3]) -> Result<Plane> {
    if points.len() < 3 {
        return Err(Error::InsufficientPoints {
            required: 3,
            actual: points.len(),
        });
    }
    let m = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / m;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p.coords - centroid;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    // Collinear (or coincident) points leave a rank <= 1 scatter.
    if !(largest > 0.0) || middle <= 1e-12 * largest {
        return Err(Error::DegenerateGeometry(
            "scatter matrix is rank deficient (collinear points)".into(),
        ));
    }
    let normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    Plane::from_normal_offset(&normal, -normal.dot(&centroid))
}

/// Writes planes as `alpha,beta,gamma,zeta` CSV.
pub fn write_planes_csv<W: Write>(planes: &[Plane], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for p in planes {
        wtr.serialize(PlaneCoefficients::from(*p))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_planes_csv<R: Read>(reader: R) -> Result<Vec<Plane>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<PlaneCoefficients>()
        .map(|r| Plane::try_from(r?))
        .collect()
}
