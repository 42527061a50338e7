//! Object models in nondimensional units and their second moments.
//!
//! An [`ObjectModel`] is an incoherent intensity distribution normalized to
//! unit total weight, with its centroid at the origin and its support inside
//! the square `[-1/2, 1/2]²` (coordinates are in units of the largest extent
//! among the candidate objects). Objects are built from an [`ObjectSpec`]:
//! explicit point masses, unions of uniform squares, uniform polygons, or
//! explicit rasters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::gauss_legendre;

const WEIGHT_TOL: f64 = 1e-12;
const SUPPORT_TOL: f64 = 1e-12;
const HALF_EXTENT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("object spec `{0}` contains no mass")]
    Empty(String),
    #[error("object spec `{label}` has an invalid weight {weight}")]
    InvalidWeight { label: String, weight: f64 },
    #[error("object spec `{0}` has zero total weight")]
    ZeroWeight(String),
    #[error("object `{label}` extends to {half_extent} after centering; the support must lie within [-1/2, 1/2]^2")]
    SupportTooLarge { label: String, half_extent: f64 },
    #[error("object spec `{label}`: {reason}")]
    InvalidSpec { label: String, reason: String },
}

/// A point in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass {
    pub position: Vec2,
    pub weight: f64,
}

/// Regular grid of cells; each cell contributes its weight at its center
/// (midpoint rule).
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    /// Center of cell (0, 0).
    pub origin: Vec2,
    pub cell: Vec2,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, index `iy * nx + ix`.
    pub weights: Vec<f64>,
}

impl Raster {
    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + ix as f64 * self.cell.x,
            self.origin.y + iy as f64 * self.cell.y,
        )
    }

    pub fn cells(&self) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        (0..self.ny).flat_map(move |iy| {
            (0..self.nx).map(move |ix| (self.cell_center(ix, iy), self.weights[iy * self.nx + ix]))
        })
    }
}

/// Axis-aligned bounding box of the geometric support.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Bounds {
    min: Vec2,
    max: Vec2,
}

impl Bounds {
    fn empty() -> Self {
        Self {
            min: Vec2::new(f64::INFINITY, f64::INFINITY),
            max: Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn include_box(&mut self, lo: Vec2, hi: Vec2) {
        self.min.x = self.min.x.min(lo.x);
        self.min.y = self.min.y.min(lo.y);
        self.max.x = self.max.x.max(hi.x);
        self.max.y = self.max.y.max(hi.y);
    }

    fn include(&mut self, p: Vec2) {
        self.include_box(p, p);
    }

    fn shifted(self, by: Vec2) -> Self {
        Self {
            min: self.min + by,
            max: self.max + by,
        }
    }

    fn scaled(self, s: f64) -> Self {
        Self {
            min: self.min.scale(s),
            max: self.max.scale(s),
        }
    }

    /// Half side of the smallest origin-centered square containing the box.
    fn half_extent(self) -> f64 {
        if self.min.x > self.max.x {
            return 0.0;
        }
        [self.min.x, self.max.x, self.min.y, self.max.y]
            .into_iter()
            .map(f64::abs)
            .fold(0.0, f64::max)
    }
}

/// Normalized, centroid-registered incoherent object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    label: String,
    point_masses: Vec<PointMass>,
    raster: Option<Raster>,
    bounds: Bounds,
}

/// Second moments about the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mx2: f64,
    pub my2: f64,
}

impl ObjectModel {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn point_masses(&self) -> &[PointMass] {
        &self.point_masses
    }

    pub fn raster(&self) -> Option<&Raster> {
        self.raster.as_ref()
    }

    pub fn has_raster(&self) -> bool {
        self.raster.is_some()
    }

    /// Every mass as `(position, weight)`: point masses first, then raster
    /// cells in row-major order.
    pub fn masses(&self) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        self.point_masses
            .iter()
            .map(|p| (p.position, p.weight))
            .chain(self.raster.iter().flat_map(|r| r.cells()))
    }

    /// Masses with nonzero weight collected into a vector.
    pub fn nonzero_masses(&self) -> Vec<(Vec2, f64)> {
        self.masses().filter(|&(_, w)| w != 0.0).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.masses().map(|(_, w)| w).sum()
    }

    pub fn centroid(&self) -> Vec2 {
        let (sx, sy) = self
            .masses()
            .fold((0.0, 0.0), |(sx, sy), (p, w)| (sx + w * p.x, sy + w * p.y));
        Vec2::new(sx, sy)
    }

    /// Half side of the smallest origin-centered square containing the
    /// geometric support (cell edges for rasters, square edges for uniform
    /// squares, the points themselves for point masses).
    pub fn half_extent(&self) -> f64 {
        self.bounds.half_extent()
    }

    pub fn moments(&self) -> Moments {
        let (mx2, my2) = self.masses().fold((0.0, 0.0), |(a, b), (p, w)| {
            (a + w * p.x * p.x, b + w * p.y * p.y)
        });
        Moments { mx2, my2 }
    }

    /// Copy of the object translated by `offset`. The result keeps unit
    /// weight but is no longer centroid-registered; scenario assembly
    /// rejects it. Useful for modelling object shifts.
    pub fn shifted(&self, offset: Vec2) -> ObjectModel {
        let mut out = self.clone();
        out.translate(offset);
        out.label = format!("{} shifted", self.label);
        out
    }

    /// Mirror image about the y-axis (x → −x).
    pub fn mirrored_x(&self) -> ObjectModel {
        let point_masses = self
            .point_masses
            .iter()
            .map(|p| PointMass {
                position: Vec2::new(-p.position.x, p.position.y),
                weight: p.weight,
            })
            .collect();
        let raster = self.raster.as_ref().map(|r| {
            let mut weights = vec![0.0; r.weights.len()];
            for iy in 0..r.ny {
                for ix in 0..r.nx {
                    weights[iy * r.nx + (r.nx - 1 - ix)] = r.weights[iy * r.nx + ix];
                }
            }
            let last = r.origin.x + (r.nx as f64 - 1.0) * r.cell.x;
            Raster {
                origin: Vec2::new(-last, r.origin.y),
                weights,
                ..r.clone()
            }
        });
        let bounds = Bounds {
            min: Vec2::new(-self.bounds.max.x, self.bounds.min.y),
            max: Vec2::new(-self.bounds.min.x, self.bounds.max.y),
        };
        ObjectModel {
            label: format!("{} mirrored", self.label),
            point_masses,
            raster,
            bounds,
        }
    }

    fn translate(&mut self, by: Vec2) {
        for p in &mut self.point_masses {
            p.position = p.position + by;
        }
        if let Some(r) = &mut self.raster {
            r.origin = r.origin + by;
        }
        self.bounds = self.bounds.shifted(by);
    }

    fn scale_positions(&mut self, s: f64) {
        for p in &mut self.point_masses {
            p.position = p.position.scale(s);
        }
        if let Some(r) = &mut self.raster {
            r.origin = r.origin.scale(s);
            r.cell = r.cell.scale(s);
        }
        self.bounds = self.bounds.scaled(s);
    }

    fn scale_weights(&mut self, s: f64) {
        for p in &mut self.point_masses {
            p.weight *= s;
        }
        if let Some(r) = &mut self.raster {
            for w in &mut r.weights {
                *w *= s;
            }
        }
    }

    fn normalize_and_center(&mut self) -> Result<(), SceneError> {
        let total = self.total_weight();
        if total <= 0.0 {
            return Err(SceneError::ZeroWeight(self.label.clone()));
        }
        self.scale_weights(1.0 / total);
        // Two passes: the second removes the rounding left by the first.
        for _ in 0..2 {
            let c = self.centroid();
            self.translate(-c);
        }
        Ok(())
    }

    fn check_support(&self) -> Result<(), SceneError> {
        let half_extent = self.half_extent();
        if half_extent > HALF_EXTENT + SUPPORT_TOL {
            return Err(SceneError::SupportTooLarge {
                label: self.label.clone(),
                half_extent,
            });
        }
        Ok(())
    }
}

/// How a uniform square is turned into masses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SquareQuadrature {
    /// Tensor Gauss-Legendre nodes per square (`resolution` per axis).
    /// Second moments are exact for any resolution ≥ 2.
    #[default]
    Gauss,
    /// One midpoint raster of `resolution`² cells over the bounding square.
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquareSpec {
    pub center: Vec2,
    pub side: f64,
    /// Intensity per unit area.
    #[serde(default = "one")]
    pub density: f64,
}

fn one() -> f64 {
    1.0
}

/// Description of an object before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectSpec {
    /// Point sources as `[x, y, weight]`.
    Points { points: Vec<[f64; 3]> },
    /// Union of uniform axis-aligned squares.
    Squares {
        squares: Vec<SquareSpec>,
        #[serde(default)]
        quadrature: SquareQuadrature,
        #[serde(default = "default_square_resolution")]
        resolution: usize,
    },
    /// Uniform polygon, rasterized by midpoint inclusion over its bounding
    /// box (`resolution` cells per axis).
    Polygon {
        vertices: Vec<Vec2>,
        #[serde(default = "default_raster_resolution")]
        resolution: usize,
    },
    /// Explicit raster on an origin-centered square of side `extent`;
    /// `weights[row][col]`, rows ascending in y, columns ascending in x.
    Raster { extent: f64, weights: Vec<Vec<f64>> },
}

fn default_square_resolution() -> usize {
    4
}

fn default_raster_resolution() -> usize {
    256
}

impl ObjectSpec {
    /// Uniform square of side `side` centered at the origin.
    pub fn uniform_square(side: f64, quadrature: SquareQuadrature, resolution: usize) -> Self {
        ObjectSpec::Squares {
            squares: vec![SquareSpec {
                center: Vec2::ZERO,
                side,
                density: 1.0,
            }],
            quadrature,
            resolution,
        }
    }

    /// Four equal square fragments centered at `(±offset, ±offset)`.
    pub fn fragments(offset: f64, side: f64, quadrature: SquareQuadrature, resolution: usize) -> Self {
        let squares = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)]
            .into_iter()
            .map(|(sx, sy)| SquareSpec {
                center: Vec2::new(sx * offset, sy * offset),
                side,
                density: 1.0,
            })
            .collect();
        ObjectSpec::Squares {
            squares,
            quadrature,
            resolution,
        }
    }

    pub fn points(points: &[(f64, f64, f64)]) -> Self {
        ObjectSpec::Points {
            points: points.iter().map(|&(x, y, w)| [x, y, w]).collect(),
        }
    }
}

/// Geometry of the shattering-square reference scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceGeometry {
    /// Side of the intact pre-change square.
    pub pre_side: f64,
    /// Side of each of the four post-change fragments.
    pub fragment_side: f64,
    /// Fragment centers sit at `(±offset, ±offset)`.
    pub fragment_offset: f64,
    pub quadrature: SquareQuadrature,
    pub resolution: usize,
}

impl Default for ReferenceGeometry {
    fn default() -> Self {
        Self {
            pre_side: 0.4,
            fragment_side: 0.2,
            fragment_offset: 0.4,
            quadrature: SquareQuadrature::Gauss,
            resolution: 4,
        }
    }
}

impl ReferenceGeometry {
    pub fn pre_spec(&self) -> ObjectSpec {
        ObjectSpec::uniform_square(self.pre_side, self.quadrature, self.resolution)
    }

    pub fn post_spec(&self) -> ObjectSpec {
        ObjectSpec::fragments(
            self.fragment_offset,
            self.fragment_side,
            self.quadrature,
            self.resolution,
        )
    }

    pub fn build(&self) -> Result<(ObjectModel, ObjectModel), SceneError> {
        let pre = build_object(&self.pre_spec(), "intact square")?;
        let post = build_object(&self.post_spec(), "shattered square")?;
        Ok((pre, post))
    }
}

/// Builds a normalized, centroid-registered object.
///
/// Weights are rescaled to unit total and the object is translated so its
/// centroid sits at the origin. Fails when the spec is empty, has a negative
/// or non-finite weight, has zero total weight, or does not fit in
/// `[-1/2, 1/2]²` after centering.
pub fn build_object(spec: &ObjectSpec, label: &str) -> Result<ObjectModel, SceneError> {
    let mut obj = raw_object(spec, label)?;
    obj.normalize_and_center()?;
    obj.check_support()?;
    Ok(obj)
}

/// Builds both objects of a scenario with one shared extent θ.
///
/// Each object is normalized and centered, then both are scaled by the same
/// factor so that the smallest origin-centered square containing both
/// supports has side 1.
pub fn build_object_pair(
    pre: &ObjectSpec,
    post: &ObjectSpec,
) -> Result<(ObjectModel, ObjectModel), SceneError> {
    let mut a = raw_object(pre, "pre-change")?;
    let mut b = raw_object(post, "post-change")?;
    a.normalize_and_center()?;
    b.normalize_and_center()?;
    let theta = 2.0 * a.half_extent().max(b.half_extent());
    if theta > 0.0 {
        a.scale_positions(1.0 / theta);
        b.scale_positions(1.0 / theta);
    }
    a.check_support()?;
    b.check_support()?;
    Ok((a, b))
}

fn raw_object(spec: &ObjectSpec, label: &str) -> Result<ObjectModel, SceneError> {
    let invalid = |reason: &str| SceneError::InvalidSpec {
        label: label.to_string(),
        reason: reason.to_string(),
    };
    let check_weight = |w: f64| {
        if !w.is_finite() || w < 0.0 {
            Err(SceneError::InvalidWeight {
                label: label.to_string(),
                weight: w,
            })
        } else {
            Ok(())
        }
    };
    let mut bounds = Bounds::empty();
    let mut point_masses = Vec::new();
    let mut raster = None;
    match spec {
        ObjectSpec::Points { points } => {
            if points.is_empty() {
                return Err(SceneError::Empty(label.to_string()));
            }
            for &[x, y, w] in points {
                check_weight(w)?;
                let position = Vec2::new(x, y);
                if !position.is_finite() {
                    return Err(invalid("non-finite point position"));
                }
                if w > 0.0 {
                    bounds.include(position);
                }
                point_masses.push(PointMass {
                    position,
                    weight: w,
                });
            }
        }
        ObjectSpec::Squares {
            squares,
            quadrature,
            resolution,
        } => {
            if squares.is_empty() {
                return Err(SceneError::Empty(label.to_string()));
            }
            for sq in squares {
                check_weight(sq.density)?;
                if !(sq.side > 0.0 && sq.side.is_finite()) || !sq.center.is_finite() {
                    return Err(invalid("square side must be positive and finite"));
                }
                let h = Vec2::new(sq.side / 2.0, sq.side / 2.0);
                if sq.density > 0.0 {
                    bounds.include_box(sq.center - h, sq.center + h);
                }
            }
            match quadrature {
                SquareQuadrature::Gauss => {
                    if *resolution < 1 {
                        return Err(invalid("resolution must be at least 1"));
                    }
                    let (x, w) = gauss_legendre(*resolution);
                    for sq in squares {
                        let half = sq.side / 2.0;
                        let mass = sq.density * sq.side * sq.side;
                        for (xi, wi) in x.iter().zip(&w) {
                            for (yj, wj) in x.iter().zip(&w) {
                                point_masses.push(PointMass {
                                    position: Vec2::new(sq.center.x + half * xi, sq.center.y + half * yj),
                                    weight: mass * wi * wj / 4.0,
                                });
                            }
                        }
                    }
                }
                SquareQuadrature::Midpoint => {
                    if *resolution < 1 {
                        return Err(invalid("resolution must be at least 1"));
                    }
                    let side = 2.0 * bounds.half_extent();
                    let n = *resolution;
                    let cell = side / n as f64;
                    let origin = -side / 2.0 + cell / 2.0;
                    let mut weights = vec![0.0; n * n];
                    for iy in 0..n {
                        let y = origin + iy as f64 * cell;
                        for ix in 0..n {
                            let x = origin + ix as f64 * cell;
                            let density: f64 = squares
                                .iter()
                                .filter(|sq| {
                                    (x - sq.center.x).abs() < sq.side / 2.0
                                        && (y - sq.center.y).abs() < sq.side / 2.0
                                })
                                .map(|sq| sq.density)
                                .sum();
                            weights[iy * n + ix] = density * cell * cell;
                        }
                    }
                    raster = Some(Raster {
                        origin: Vec2::new(origin, origin),
                        cell: Vec2::new(cell, cell),
                        nx: n,
                        ny: n,
                        weights,
                    });
                }
            }
        }
        ObjectSpec::Polygon {
            vertices,
            resolution,
        } => {
            if vertices.len() < 3 {
                return Err(SceneError::Empty(label.to_string()));
            }
            if vertices.iter().any(|v| !v.is_finite()) {
                return Err(invalid("non-finite polygon vertex"));
            }
            if *resolution < 1 {
                return Err(invalid("resolution must be at least 1"));
            }
            for v in vertices {
                bounds.include(*v);
            }
            let n = *resolution;
            let cell = Vec2::new(
                (bounds.max.x - bounds.min.x) / n as f64,
                (bounds.max.y - bounds.min.y) / n as f64,
            );
            if !(cell.x > 0.0 && cell.y > 0.0) {
                return Err(invalid("polygon has zero area"));
            }
            let origin = bounds.min + cell.scale(0.5);
            let mut weights = vec![0.0; n * n];
            for iy in 0..n {
                for ix in 0..n {
                    let p = Vec2::new(origin.x + ix as f64 * cell.x, origin.y + iy as f64 * cell.y);
                    if point_in_polygon(p, vertices) {
                        weights[iy * n + ix] = cell.x * cell.y;
                    }
                }
            }
            raster = Some(Raster {
                origin,
                cell,
                nx: n,
                ny: n,
                weights,
            });
        }
        ObjectSpec::Raster { extent, weights } => {
            let ny = weights.len();
            let nx = weights.first().map_or(0, Vec::len);
            if ny == 0 || nx == 0 {
                return Err(SceneError::Empty(label.to_string()));
            }
            if weights.iter().any(|row| row.len() != nx) {
                return Err(invalid("raster rows must have equal length"));
            }
            if !(*extent > 0.0 && extent.is_finite()) {
                return Err(invalid("raster extent must be positive"));
            }
            let flat: Vec<f64> = weights.iter().flatten().copied().collect();
            for &w in &flat {
                check_weight(w)?;
            }
            let cell = Vec2::new(extent / nx as f64, extent / ny as f64);
            let origin = Vec2::new(-extent / 2.0 + cell.x / 2.0, -extent / 2.0 + cell.y / 2.0);
            bounds.include_box(Vec2::new(-extent / 2.0, -extent / 2.0), Vec2::new(extent / 2.0, extent / 2.0));
            raster = Some(Raster {
                origin,
                cell,
                nx,
                ny,
                weights: flat,
            });
        }
    }
    if let Some(r) = &raster {
        // The support of a raster is the union of its nonzero cells.
        bounds = Bounds::empty();
        let half = r.cell.scale(0.5);
        for (c, w) in r.cells() {
            if w > 0.0 {
                bounds.include_box(c - half, c + half);
            }
        }
    }
    let obj = ObjectModel {
        label: label.to_string(),
        point_masses,
        raster,
        bounds,
    };
    if obj.total_weight() <= 0.0 {
        return Err(SceneError::ZeroWeight(label.to_string()));
    }
    Ok(obj)
}

fn point_in_polygon(p: Vec2, vertices: &[Vec2]) -> bool {
    let mut inside = false;
    let n = vertices.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// True when both total weight and centroid satisfy the registration
/// tolerances.
pub fn is_registered(obj: &ObjectModel) -> bool {
    let c = obj.centroid();
    (obj.total_weight() - 1.0).abs() <= WEIGHT_TOL && c.x.abs() <= WEIGHT_TOL && c.y.abs() <= WEIGHT_TOL
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(spec: &ObjectSpec) -> ObjectModel {
        build_object(spec, "test").unwrap()
    }

    #[test]
    fn single_point_is_centered_and_normalized() {
        let obj = build(&ObjectSpec::points(&[(0.3, 0.3, 5.0)]));
        assert_eq!(obj.point_masses().len(), 1);
        let p = obj.point_masses()[0];
        assert!(p.position.norm() < 1e-15);
        assert!((p.weight - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_points_center_to_half_offsets() {
        let obj = build(&ObjectSpec::points(&[(0.0, 0.0, 1.0), (1.0, 0.0, 1.0)]));
        let pm = obj.point_masses();
        assert!((pm[0].position.x + 0.5).abs() < 1e-15);
        assert!((pm[1].position.x - 0.5).abs() < 1e-15);
        assert!((pm[0].weight - 0.5).abs() < 1e-15);
        let m = obj.moments();
        assert!((m.mx2 - 0.25).abs() < 1e-15);
        assert_eq!(m.my2, 0.0);
    }

    #[test]
    fn origin_point_has_zero_moments() {
        let m = build(&ObjectSpec::points(&[(0.0, 0.0, 1.0)])).moments();
        assert_eq!((m.mx2, m.my2), (0.0, 0.0));
    }

    #[test]
    fn uniform_square_raster_64_by_direct_summation() {
        let obj = build(&ObjectSpec::uniform_square(1.0, SquareQuadrature::Midpoint, 64));
        let r = obj.raster().unwrap();
        assert_eq!((r.nx, r.ny), (64, 64));
        // Oracle: every cell carries 1/4096.
        let mut total = 0.0;
        let mut cx = 0.0;
        for iy in 0..64 {
            for ix in 0..64 {
                let w = r.weights[iy * 64 + ix];
                assert!((w - 1.0 / 4096.0).abs() < 1e-18);
                total += w;
                cx += w * r.cell_center(ix, iy).x;
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
        assert!(cx.abs() < 1e-12);
        assert!(is_registered(&obj));
    }

    #[test]
    fn uniform_square_moments_at_256() {
        let m = build(&ObjectSpec::uniform_square(1.0, SquareQuadrature::Midpoint, 256)).moments();
        assert!((m.mx2 - 1.0 / 12.0).abs() <= 1e-4);
        assert!((m.my2 - 1.0 / 12.0).abs() <= 1e-4);
        // Midpoint rule: (1/12)(1 - h²) exactly.
        let h = 1.0 / 256.0;
        assert!((m.mx2 - (1.0 - h * h) / 12.0).abs() < 1e-13);
    }

    #[test]
    fn gauss_square_moments_are_exact() {
        for n in 2..6 {
            let m = build(&ObjectSpec::uniform_square(1.0, SquareQuadrature::Gauss, n)).moments();
            assert!((m.mx2 - 1.0 / 12.0).abs() < 1e-15, "n={n}");
        }
    }

    #[test]
    fn reference_geometry_moments() {
        let (pre, post) = ReferenceGeometry::default().build().unwrap();
        let (a, b) = (pre.moments(), post.moments());
        assert!((a.mx2 - 0.16 / 12.0).abs() < 1e-15);
        assert!((b.mx2 - (0.16 + 0.04 / 12.0)).abs() < 1e-15);
        assert!((post.half_extent() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            build_object(&ObjectSpec::Points { points: vec![] }, "e"),
            Err(SceneError::Empty(_))
        ));
        assert!(matches!(
            build_object(&ObjectSpec::points(&[(0.0, 0.0, 0.0)]), "z"),
            Err(SceneError::ZeroWeight(_))
        ));
        assert!(matches!(
            build_object(&ObjectSpec::points(&[(0.0, 0.0, -1.0), (1.0, 0.0, 2.0)]), "n"),
            Err(SceneError::InvalidWeight { .. })
        ));
        assert!(matches!(
            build_object(&ObjectSpec::points(&[(0.0, 0.0, 1.0), (1.5, 0.0, 1.0)]), "wide"),
            Err(SceneError::SupportTooLarge { .. })
        ));
    }

    #[test]
    fn pair_normalization_shares_one_extent() {
        let (a, b) = build_object_pair(
            &ObjectSpec::points(&[(-0.1, 0.0, 1.0), (0.1, 0.0, 1.0)]),
            &ObjectSpec::points(&[(0.0, -0.05, 1.0), (0.0, 0.05, 1.0)]),
        )
        .unwrap();
        assert!((a.half_extent() - 0.5).abs() < 1e-15);
        assert!((b.half_extent() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn polygon_triangle_is_registered() {
        let spec = ObjectSpec::Polygon {
            vertices: vec![Vec2::new(0.0, 0.0), Vec2::new(0.4, 0.0), Vec2::new(0.0, 0.4)],
            resolution: 64,
        };
        let obj = build(&spec);
        assert!(is_registered(&obj));
        assert!(obj.half_extent() <= 0.5);
    }

    #[test]
    fn explicit_raster() {
        let spec = ObjectSpec::Raster {
            extent: 0.5,
            weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let obj = build(&spec);
        let m = obj.moments();
        assert!((m.mx2 - 0.125 * 0.125).abs() < 1e-15);
        assert!(is_registered(&obj));
    }

    #[test]
    fn shifted_object_is_not_registered() {
        let obj = build(&ObjectSpec::points(&[(0.0, 0.0, 1.0)]));
        assert!(!is_registered(&obj.shifted(Vec2::new(0.1, 0.0))));
    }
}
