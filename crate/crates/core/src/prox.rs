//! Closed-form proximal maps, projections and Asplund-function utilities.
//!
//! Shapes are immutable once built. Projections onto a [`Region`] (a finite
//! union of convex members) return the nearest member projection, with ties
//! resolved in favour of the lowest member index.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when testing membership in a polygon. Projections onto an edge
/// are computed in floating point and may land a few ulps outside.
pub const POLYGON_MEMBERSHIP_TOL: f64 = 1e-9;

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl AxisBox {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::InvalidShape("zero-dimensional box".into()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !l.is_finite() || !h.is_finite() || l > h) {
            return Err(Error::InvalidShape("box requires finite lo <= hi".into()));
        }
        Ok(Self { lo, hi })
    }

    /// Box `center ± half_edge` in every coordinate.
    pub fn centered(center: &DVector<f64>, half_edge: f64) -> Result<Self> {
        Self::new(center.add_scalar(-half_edge), center.add_scalar(half_edge))
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(DVector::from_element(dim, lo), DVector::from_element(dim, hi))
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lo + &self.hi) * 0.5
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        z.len() == self.dim()
            && z
                .iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            z.len(),
            z.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .map(|(v, (l, h))| v.clamp(*l, *h)),
        )
    }
}

/// Closed Euclidean ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    center: DVector<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::InvalidShape(format!("ball radius {radius} must be positive")));
        }
        Ok(Self { center, radius })
    }

    pub fn origin(dim: usize, radius: f64) -> Result<Self> {
        Self::new(DVector::zeros(dim), radius)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        (z - &self.center).norm() <= self.radius
    }

    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        let offset = z - &self.center;
        let dist = offset.norm();
        if dist <= self.radius {
            z.clone()
        } else {
            &self.center + offset * (self.radius / dist)
        }
    }
}

/// A linear inequality `<normal, x> <= offset` in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub normal: [f64; 2],
    pub offset: f64,
}

/// Bounded convex polygon given by its counter-clockwise vertices; the
/// supporting half-planes are derived from consecutive vertex pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<[f64; 2]>,
    halfplanes: Vec<HalfPlane>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl ConvexPolygon {
    /// Builds a polygon from counter-clockwise vertices. Rejects fewer than
    /// three vertices, clockwise or degenerate input, repeated vertices and
    /// reflex corners.
    pub fn from_vertices(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let k = vertices.len();
        if k < 3 {
            return Err(Error::InvalidShape(format!("polygon needs >= 3 vertices, got {k}")));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidShape("non-finite polygon vertex".into()));
        }
        for i in 0..k {
            let (a, b, c) = (vertices[i], vertices[(i + 1) % k], vertices[(i + 2) % k]);
            if a == b {
                return Err(Error::InvalidShape(format!("repeated vertex at index {i}")));
            }
            if cross(a, b, c) <= 0.0 {
                return Err(Error::InvalidShape(format!(
                    "vertices are not strictly convex in counter-clockwise order at index {}",
                    (i + 1) % k
                )));
            }
        }
        let halfplanes = (0..k)
            .map(|i| {
                let (a, b) = (vertices[i], vertices[(i + 1) % k]);
                let normal = [b[1] - a[1], a[0] - b[0]];
                HalfPlane {
                    normal,
                    offset: normal[0] * a[0] + normal[1] * a[1],
                }
            })
            .collect::<Vec<_>>();
        let poly = Self { vertices, halfplanes };
        // Every vertex must satisfy every half-plane; a self-intersecting
        // "star" passes the local corner test but fails this one.
        for v in &poly.vertices {
            if !poly.contains_pt(*v) {
                return Err(Error::InvalidShape("vertices inconsistent with half-planes".into()));
            }
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn halfplanes(&self) -> &[HalfPlane] {
        &self.halfplanes
    }

    fn contains_pt(&self, z: [f64; 2]) -> bool {
        self.halfplanes.iter().all(|h| {
            let scale = h.normal[0].hypot(h.normal[1]) * (1.0 + z[0].abs().max(z[1].abs()));
            h.normal[0] * z[0] + h.normal[1] * z[1] <= h.offset + POLYGON_MEMBERSHIP_TOL * scale
        })
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        z.len() == 2 && self.contains_pt([z[0], z[1]])
    }

    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        let p = [z[0], z[1]];
        if self.contains_pt(p) {
            return z.clone();
        }
        let k = self.vertices.len();
        let mut best = self.vertices[0];
        let mut best_d2 = f64::INFINITY;
        for i in 0..k {
            let q = project_segment(p, self.vertices[i], self.vertices[(i + 1) % k]);
            let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
            if d2 < best_d2 {
                best_d2 = d2;
                best = q;
            }
        }
        DVector::from_row_slice(&best)
    }
}

fn project_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    if t == 0.0 {
        a
    } else if t == 1.0 {
        b
    } else {
        [a[0] + t * ab[0], a[1] + t * ab[1]]
    }
}

/// Convex building block of a [`Region`].
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Box(AxisBox),
    Polygon(ConvexPolygon),
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Box(b) => b.dim(),
            Shape::Polygon(_) => 2,
        }
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        match self {
            Shape::Box(b) => b.contains(z),
            Shape::Polygon(p) => p.contains(z),
        }
    }

    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            Shape::Box(b) => b.project(z),
            Shape::Polygon(p) => p.project(z),
        }
    }

    fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        match self {
            Shape::Box(b) => (b.lo().clone(), b.hi().clone()),
            Shape::Polygon(p) => {
                let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
                for v in p.vertices() {
                    for c in 0..2 {
                        lo[c] = lo[c].min(v[c]);
                        hi[c] = hi[c].max(v[c]);
                    }
                }
                (DVector::from_row_slice(&lo), DVector::from_row_slice(&hi))
            }
        }
    }
}

/// Finite union of convex members, all of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    members: Vec<Shape>,
}

impl Region {
    pub fn new(members: Vec<Shape>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyRegion)?;
        let dim = first.dim();
        if let Some(bad) = members.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        Ok(Self { members })
    }

    pub fn single(shape: Shape) -> Self {
        Self { members: vec![shape] }
    }

    pub fn members(&self) -> &[Shape] {
        &self.members
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        self.members.iter().any(|m| m.contains(z))
    }

    /// Nearest member projection together with the index of that member.
    pub fn project_indexed(&self, z: &DVector<f64>) -> (usize, DVector<f64>) {
        let mut best: Option<(usize, DVector<f64>, f64)> = None;
        for (i, m) in self.members.iter().enumerate() {
            let p = m.project(z);
            let d2 = (&p - z).norm_squared();
            if d2 == 0.0 {
                return (i, p);
            }
            match &best {
                Some((_, _, bd)) if *bd <= d2 => {}
                _ => best = Some((i, p, d2)),
            }
        }
        let (i, p, _) = best.expect("region has at least one member");
        (i, p)
    }

    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        self.project_indexed(z).1
    }

    pub fn dist_sq(&self, z: &DVector<f64>) -> f64 {
        (self.project(z) - z).norm_squared()
    }

    /// Axis-aligned bounding box of all members.
    pub fn bounding_box(&self) -> AxisBox {
        let (mut lo, mut hi) = self.members[0].bounds();
        for m in &self.members[1..] {
            let (l, h) = m.bounds();
            lo = lo.inf(&l);
            hi = hi.sup(&h);
        }
        AxisBox::new(lo, hi).expect("member bounds are ordered")
    }

    /// Parses the JSON member list:
    /// `[{"type":"box","lo":[..],"hi":[..]}, {"type":"polygon","vertices":[[x,y],..]}]`.
    pub fn from_json(text: &str) -> Result<Self> {
        let specs: Vec<ShapeSpec> =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("region json: {e}")))?;
        specs
            .into_iter()
            .map(Shape::try_from)
            .collect::<Result<Vec<_>>>()
            .and_then(Region::new)
    }

    pub fn to_json(&self) -> String {
        let specs: Vec<ShapeSpec> = self.members.iter().map(ShapeSpec::from).collect();
        serde_json::to_string_pretty(&specs).expect("region serializes")
    }
}

/// Serialized form of a region member.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl TryFrom<ShapeSpec> for Shape {
    type Error = Error;

    fn try_from(spec: ShapeSpec) -> Result<Self> {
        match spec {
            ShapeSpec::Box { lo, hi } => Ok(Shape::Box(AxisBox::new(
                DVector::from_vec(lo),
                DVector::from_vec(hi),
            )?)),
            ShapeSpec::Polygon { vertices } => {
                Ok(Shape::Polygon(ConvexPolygon::from_vertices(vertices)?))
            }
        }
    }
}

impl From<&Shape> for ShapeSpec {
    fn from(shape: &Shape) -> Self {
        match shape {
            Shape::Box(b) => ShapeSpec::Box {
                lo: b.lo().iter().copied().collect(),
                hi: b.hi().iter().copied().collect(),
            },
            Shape::Polygon(p) => ShapeSpec::Polygon {
                vertices: p.vertices().to_vec(),
            },
        }
    }
}

/// `prox_{γ‖·‖²}(z) = z / (1 + 2γ)`.
pub fn prox_sq_norm(z: &DVector<f64>, gamma: f64) -> DVector<f64> {
    z / (1.0 + 2.0 * gamma)
}

pub fn project_box(z: &DVector<f64>, b: &AxisBox) -> DVector<f64> {
    b.project(z)
}

pub fn project_ball(z: &DVector<f64>, ball: &Ball) -> DVector<f64> {
    ball.project(z)
}

pub fn project_polygon(z: &DVector<f64>, poly: &ConvexPolygon) -> DVector<f64> {
    poly.project(z)
}

pub fn project_region(z: &DVector<f64>, region: &Region) -> DVector<f64> {
    region.project(z)
}

/// Asplund function `sup_{c∈C} <c,w> - ½‖c‖²`, attained at the projection.
pub fn asplund_value(w: &DVector<f64>, region: &Region) -> f64 {
    let p = region.project(w);
    p.dot(w) - 0.5 * p.norm_squared()
}

/// Prox of `μ h*` for `h(y) = ‖y - a‖₁`, whose conjugate is
/// `ι_{[-1,1]^d}(z) + <a, z>`.
pub fn prox_l1_shifted_conjugate(v: &DVector<f64>, mu: f64, shift: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        v.len(),
        v.iter().zip(shift.iter()).map(|(vi, ai)| (vi - mu * ai).clamp(-1.0, 1.0)),
    )
}

/// Prox of `μ h*` for `h = w·Asp_C` with `C` a box.
///
/// `h*(u) = ι_{wC}(u) + ‖u‖²/(2w)`, so the prox objective is an isotropic
/// quadratic centred at `w z/(μ+w)` restricted to `wC`; its minimizer is
/// `w · P_C(z/(μ+w))`.
pub fn prox_scaled_asplund_conjugate(z: &DVector<f64>, mu: f64, weight: f64, b: &AxisBox) -> DVector<f64> {
    b.project(&(z / (mu + weight))) * weight
}

/// `Qᵀ(Qx − P_C(Qx))`, a subgradient of `x ↦ ½ d²(Qx, C)`.
pub fn sq_dist_subgradient(x: &DVector<f64>, q: &DMatrix<f64>, region: &Region) -> DVector<f64> {
    let qx = q * x;
    let p = region.project(&qx);
    q.tr_mul(&(qx - p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    fn unit_square() -> ConvexPolygon {
        ConvexPolygon::from_vertices(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    fn two_boxes() -> Region {
        Region::new(vec![
            Shape::Box(AxisBox::cube(2, 0.0, 1.0).unwrap()),
            Shape::Box(AxisBox::new(dvector![3.0, 0.0], dvector![4.0, 1.0]).unwrap()),
        ])
        .unwrap()
    }

    #[test]
    fn sq_norm_prox_examples() {
        assert_eq!(prox_sq_norm(&dvector![-2.0, 1.0], 1.0), dvector![-2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(prox_sq_norm(&dvector![0.0, 0.0], 7.5), dvector![0.0, 0.0]);
        assert_abs_diff_eq!(prox_sq_norm(&dvector![3.0, -6.0], 0.25), dvector![2.0, -4.0], epsilon = 1e-15);
    }

    #[test]
    fn box_and_ball_projection() {
        let b = AxisBox::cube(2, -1.0, 1.0).unwrap();
        assert_eq!(project_box(&dvector![2.0, -0.5], &b), dvector![1.0, -0.5]);
        assert_eq!(project_box(&dvector![0.2, -0.5], &b), dvector![0.2, -0.5]);
        let ball = Ball::origin(2, 5.0).unwrap();
        assert_abs_diff_eq!(project_ball(&dvector![6.0, 8.0], &ball), dvector![3.0, 4.0], epsilon = 1e-15);
        assert_eq!(project_ball(&dvector![1.0, 1.0], &ball), dvector![1.0, 1.0]);
    }

    #[test]
    fn polygon_projection_cases() {
        let sq = unit_square();
        assert_abs_diff_eq!(project_polygon(&dvector![2.0, 0.5], &sq), dvector![1.0, 0.5], epsilon = 1e-15);
        assert_eq!(project_polygon(&dvector![2.0, 2.0], &sq), dvector![1.0, 1.0]);
        assert_eq!(project_polygon(&dvector![0.5, 0.5], &sq), dvector![0.5, 0.5]);
    }

    #[test]
    fn polygon_validation() {
        // clockwise
        assert!(ConvexPolygon::from_vertices(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).is_err());
        // reflex corner
        assert!(ConvexPolygon::from_vertices(vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.5], [2.0, 2.0], [0.0, 2.0]]).is_err());
        // collinear
        assert!(ConvexPolygon::from_vertices(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).is_err());
        assert!(ConvexPolygon::from_vertices(vec![[0.0, 0.0], [1.0, 0.0]]).is_err());
        // pentagram traversal: locally convex turns, globally self-intersecting
        let star: Vec<[f64; 2]> = (0..5)
            .map(|i| {
                let t = std::f64::consts::PI / 2.0 + (i as f64) * 4.0 * std::f64::consts::PI / 5.0;
                [t.cos(), t.sin()]
            })
            .collect();
        assert!(ConvexPolygon::from_vertices(star).is_err());
    }

    #[test]
    fn region_projection_and_ties() {
        let r = two_boxes();
        assert_abs_diff_eq!(project_region(&dvector![2.1, 0.5], &r), dvector![3.0, 0.5], epsilon = 1e-15);
        // equidistant between the two members
        assert_eq!(r.project_indexed(&dvector![2.0, 0.5]), (0, dvector![1.0, 0.5]));
        assert_eq!(project_region(&dvector![3.5, 0.5], &r), dvector![3.5, 0.5]);
        assert!(Region::new(vec![]).is_err());
    }

    #[test]
    fn asplund_examples() {
        let c = Region::single(Shape::Box(AxisBox::cube(2, 0.0, 1.0).unwrap()));
        assert_eq!(asplund_value(&dvector![2.0, 2.0], &c), 3.0);
        assert_eq!(asplund_value(&dvector![0.5, 0.25], &c), 0.5 * (0.25 + 0.0625));
        let origin = Region::single(Shape::Box(AxisBox::cube(2, 0.0, 0.0).unwrap()));
        assert_eq!(asplund_value(&dvector![-3.0, 7.0], &origin), 0.0);
    }

    #[test]
    fn l1_conjugate_prox_examples() {
        let zero = dvector![0.0, 0.0];
        assert_eq!(prox_l1_shifted_conjugate(&dvector![2.0, -0.5], 3.0, &zero), dvector![1.0, -0.5]);
        assert_eq!(prox_l1_shifted_conjugate(&dvector![1.5, -3.0], 1.0, &dvector![1.0, 1.0]), dvector![0.5, -1.0]);
        assert_abs_diff_eq!(
            prox_l1_shifted_conjugate(&dvector![0.7, 0.2], 0.5, &dvector![1.0, -1.0]),
            dvector![0.2, 0.7],
            epsilon = 1e-15
        );
    }

    #[test]
    fn asplund_conjugate_prox_examples() {
        let c = AxisBox::cube(2, 0.0, 1.0).unwrap();
        assert_eq!(prox_scaled_asplund_conjugate(&dvector![4.0, -2.0], 1.0, 1.0, &c), dvector![1.0, 0.0]);
        assert_eq!(prox_scaled_asplund_conjugate(&dvector![9.0, 9.0], 1.0, 2.0, &c), dvector![2.0, 2.0]);
        let interior = dvector![0.25, 0.5];
        let (mu, w) = (0.5, 2.0);
        assert_abs_diff_eq!(
            prox_scaled_asplund_conjugate(&(&interior * (mu + w)), mu, w, &c),
            interior * w,
            epsilon = 1e-15
        );
    }

    #[test]
    fn sq_dist_subgradient_examples() {
        let c = Region::single(Shape::Box(AxisBox::cube(2, 0.0, 1.0).unwrap()));
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(sq_dist_subgradient(&dvector![2.0, 0.5], &id, &c), dvector![1.0, 0.0]);
        assert_eq!(sq_dist_subgradient(&dvector![0.3, 0.5], &id, &c), dvector![0.0, 0.0]);
    }

    #[test]
    fn region_json_roundtrip() {
        let text = r#"[{"type":"box","lo":[0,0],"hi":[1,1]},
                       {"type":"polygon","vertices":[[2,0],[3,0],[2.5,1]]}]"#;
        let r = Region::from_json(text).unwrap();
        assert_eq!(r.members().len(), 2);
        assert_eq!(Region::from_json(&r.to_json()).unwrap(), r);
        assert!(Region::from_json(r#"[{"type":"circle","r":1}]"#).is_err());
        assert!(Region::from_json("[]").is_err());
        assert!(Region::from_json(r#"[{"type":"polygon","vertices":[[0,0],[0,1],[1,1]]}]"#).is_err());
    }

    #[test]
    fn bounding_box_covers_members() {
        let r = Region::new(vec![
            Shape::Box(AxisBox::cube(2, 0.0, 1.0).unwrap()),
            Shape::Polygon(ConvexPolygon::from_vertices(vec![[2.0, -1.0], [3.0, 0.0], [2.5, 4.0]]).unwrap()),
        ])
        .unwrap();
        let bb = r.bounding_box();
        assert_eq!(bb.lo(), &dvector![0.0, -1.0]);
        assert_eq!(bb.hi(), &dvector![3.0, 4.0]);
    }
}
