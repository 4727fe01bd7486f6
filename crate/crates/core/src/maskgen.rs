//! Random irregular anomaly masks.
//!
//! Four steps: draw points with a Perlin-noise density, take their convex
//! hull, bend a random subset of hull edges into quadratic Bézier arcs, and
//! scanline-fill the resulting closed curve.

use rand::Rng as _;

use crate::imaging::{check_dims, BinaryMask, GrayImage};
use crate::rng::{self, derive_seed};
use crate::{Error, Result};

/// Masks are regenerated at most this many times to satisfy the area bounds.
pub const MAX_ATTEMPTS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn lerp(self, other: Point2D, t: f64) -> Point2D {
        Point2D::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }

    fn dist(self, other: Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// `(b - a) × (c - a)`; positive when `a, b, c` turn counter-clockwise.
pub fn cross(a: Point2D, b: Point2D, c: Point2D) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Shoelace signed area; positive for counter-clockwise vertex order.
pub fn signed_area(poly: &[Point2D]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// Shape parameters of the mask generator, independent of placement.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskParams {
    pub num_points: usize,
    pub bezier_probability: f64,
    /// Maximum control-point displacement as a fraction of edge length.
    pub control_offset_fraction: f64,
    /// `(min, max)` mask area as a fraction of the placement region area.
    pub area_bounds: (f64, f64),
    /// Perlin lattice cells along each axis.
    pub grid_cells: usize,
    /// The sampling density is the Perlin field raised to this power; 1 uses
    /// the field as is, larger values cluster the points around its peaks.
    pub density_exponent: f64,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            num_points: 10,
            bezier_probability: 0.5,
            control_offset_fraction: 0.5,
            area_bounds: (0.02, 0.25),
            grid_cells: 4,
            density_exponent: 16.0,
        }
    }
}

impl MaskParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_points < 3 {
            return bad(format!("num_points = {} (need >= 3)", self.num_points));
        }
        if !(0.0..=1.0).contains(&self.bezier_probability) {
            return bad(format!("bezier_probability = {}", self.bezier_probability));
        }
        if !(self.control_offset_fraction.is_finite() && self.control_offset_fraction >= 0.0) {
            return bad(format!("control_offset_fraction = {}", self.control_offset_fraction));
        }
        let (lo, hi) = self.area_bounds;
        if !(0.0 < lo && lo < hi && hi <= 1.0) {
            return bad(format!("area_bounds = ({lo}, {hi}) (need 0 < min < max <= 1)"));
        }
        if self.grid_cells == 0 {
            return bad("grid_cells = 0".into());
        }
        if !(self.density_exponent.is_finite() && self.density_exponent > 0.0) {
            return bad(format!("density_exponent = {}", self.density_exponent));
        }
        Ok(())
    }
}

/// Everything needed to generate one mask deterministically.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSpec {
    pub params: MaskParams,
    /// Placement region; the mask never leaves it.
    pub region: BinaryMask,
    pub seed: u64,
}

impl MaskSpec {
    pub fn new(region: BinaryMask, seed: u64) -> Self {
        Self { params: MaskParams::default(), region, seed }
    }

    pub fn with_params(mut self, params: MaskParams) -> Self {
        self.params = params;
        self
    }
}

/// Classic 2-D gradient-lattice noise over a `cells_x × cells_y` lattice.
#[derive(Clone, Debug)]
pub struct PerlinNoise {
    cells_x: usize,
    cells_y: usize,
    gradients: Vec<(f64, f64)>,
}

impl PerlinNoise {
    /// One random unit gradient per lattice node.
    pub fn new(cells_x: usize, cells_y: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let gradients = (0..(cells_x + 1) * (cells_y + 1))
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                (angle.cos(), angle.sin())
            })
            .collect();
        Self { cells_x, cells_y, gradients }
    }

    fn gradient(&self, ix: usize, iy: usize) -> (f64, f64) {
        self.gradients[iy * (self.cells_x + 1) + ix]
    }

    /// Raw noise at lattice coordinates `(u, v)`, `0 <= u <= cells_x`,
    /// `0 <= v <= cells_y`. Zero at every lattice node.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let u = u.clamp(0.0, self.cells_x as f64);
        let v = v.clamp(0.0, self.cells_y as f64);
        let x0 = (u.floor() as usize).min(self.cells_x - 1);
        let y0 = (v.floor() as usize).min(self.cells_y - 1);
        let (fx, fy) = (u - x0 as f64, v - y0 as f64);
        let corner = |dx: usize, dy: usize| {
            let (gx, gy) = self.gradient(x0 + dx, y0 + dy);
            gx * (fx - dx as f64) + gy * (fy - dy as f64)
        };
        let (sx, sy) = (smoothstep(fx), smoothstep(fy));
        let top = corner(0, 0) + sx * (corner(1, 0) - corner(0, 0));
        let bottom = corner(0, 1) + sx * (corner(1, 1) - corner(0, 1));
        top + sy * (bottom - top)
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Perlin noise sampled at pixel centers and min-max rescaled into `[0, 1]`.
/// A perfectly flat field comes back as all 0.5.
pub fn perlin_field(width: usize, height: usize, seed: u64, grid_cells: usize) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension);
    }
    if grid_cells == 0 {
        return Err(Error::InvalidConfig("grid_cells must be >= 1".into()));
    }
    let noise = PerlinNoise::new(grid_cells, grid_cells, seed);
    let cells = grid_cells as f64;
    let mut raw = Vec::with_capacity(width * height);
    for y in 0..height {
        let v = (y as f64 + 0.5) / height as f64 * cells;
        for x in 0..width {
            let u = (x as f64 + 0.5) / width as f64 * cells;
            raw.push(noise.sample(u, v));
        }
    }
    let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    let span = hi - lo;
    let data = if span > 0.0 {
        raw.iter().map(|&r| ((r - lo) / span).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.5; raw.len()]
    };
    GrayImage::new(width, height, data)
}

/// Point-sampling density: `perlin_field(..)^density_exponent`.
pub fn density_field(width: usize, height: usize, seed: u64, params: &MaskParams) -> Result<GrayImage> {
    let field = perlin_field(width, height, seed, params.grid_cells)?;
    if params.density_exponent == 1.0 {
        return Ok(field);
    }
    let data = field.as_slice().iter().map(|v| v.powf(params.density_exponent)).collect();
    GrayImage::new(width, height, data)
}

/// Draws `n` distinct pixel centers from `region`, accepting a uniformly
/// proposed pixel with probability `field / max(field over region)`.
pub fn sample_points(field: &GrayImage, region: &BinaryMask, n: usize, seed: u64) -> Result<Vec<Point2D>> {
    check_dims(field.dims(), region.dims())?;
    let candidates = region.pixels();
    if candidates.len() < n {
        return Err(Error::RegionTooSmall { requested: n, available: candidates.len() });
    }
    let fmax = candidates.iter().map(|&(x, y)| field.get(x, y)).fold(0.0, f64::max);
    if fmax <= 0.0 {
        return Err(Error::DegenerateField);
    }
    let positive = candidates.iter().filter(|&&(x, y)| field.get(x, y) > 0.0).count();
    if positive < n {
        return Err(Error::RegionTooSmall { requested: n, available: positive });
    }

    let mut rng = rng::seeded(seed);
    let mut taken = vec![false; candidates.len()];
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let i = rng.random_range(0..candidates.len());
        if taken[i] {
            continue;
        }
        let (x, y) = candidates[i];
        if rng.random::<f64>() < field.get(x, y) / fmax {
            taken[i] = true;
            points.push(Point2D::new(x as f64 + 0.5, y as f64 + 0.5));
        }
    }
    Ok(points)
}

/// Andrew's monotone chain. Counter-clockwise (positive signed area),
/// collinear vertices removed, starting from the lowest-x point.
pub fn convex_hull(points: &[Point2D]) -> Result<Vec<Point2D>> {
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::DegenerateInput("non-finite coordinate"));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::DegenerateInput("fewer than 3 distinct points"));
    }

    let mut hull: Vec<Point2D> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let floor = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2D>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= floor + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(Error::DegenerateInput("all points are collinear"));
    }
    Ok(hull)
}

/// Point on the quadratic Bézier curve `p0 → control → p2` at `t ∈ [0, 1]`.
pub fn quadratic_bezier(p0: Point2D, control: Point2D, p2: Point2D, t: f64) -> Point2D {
    if t == 0.0 {
        return p0;
    }
    if t == 1.0 {
        return p2;
    }
    let s = 1.0 - t;
    Point2D::new(
        s * s * p0.x + 2.0 * s * t * control.x + t * t * p2.x,
        s * s * p0.y + 2.0 * s * t * control.y + t * t * p2.y,
    )
}

/// Appends the samples of one edge, omitting the end point (it starts the
/// next edge of the closed curve).
fn push_curve(out: &mut Vec<Point2D>, p0: Point2D, control: Point2D, p2: Point2D) {
    let samples = p0.dist(p2).ceil() as usize + 1;
    for i in 0..samples - 1 {
        out.push(quadratic_bezier(p0, control, p2, i as f64 / (samples - 1) as f64));
    }
}

/// Replaces each hull edge, independently with probability
/// `params.bezier_probability`, by a quadratic Bézier arc whose control point
/// is the edge midpoint pushed along the outward normal by
/// `u · control_offset_fraction · edge_length`, `u ~ U[-1, 1]`.
///
/// The result is a closed polyline (last vertex connects back to the first).
pub fn bezier_edges(hull: &[Point2D], params: &MaskParams, seed: u64) -> Vec<Point2D> {
    let mut rng = rng::seeded(seed);
    let n = hull.len();
    let orientation = if signed_area(hull) >= 0.0 { 1.0 } else { -1.0 };
    let mut curve = Vec::new();
    for i in 0..n {
        let (a, b) = (hull[i], hull[(i + 1) % n]);
        let len = a.dist(b);
        if len == 0.0 {
            continue;
        }
        // draw both variates for every edge so later edges do not depend on
        // earlier outcomes
        let replace = rng.random::<f64>() < params.bezier_probability;
        let u: f64 = rng.random_range(-1.0..=1.0);
        if !replace {
            curve.push(a);
            continue;
        }
        let nx = orientation * (b.y - a.y) / len;
        let ny = orientation * -(b.x - a.x) / len;
        let mid = a.lerp(b, 0.5);
        let offset = u * params.control_offset_fraction * len;
        let control = Point2D::new(mid.x + nx * offset, mid.y + ny * offset);
        push_curve(&mut curve, a, control, b);
    }
    curve
}

/// Even–odd scanline fill at pixel centers, reduced to its largest
/// 4-connected component. Curve points are first clamped into the image.
pub fn rasterize_fill(curve: &[Point2D], width: usize, height: usize) -> Result<BinaryMask> {
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension);
    }
    let pts: Vec<Point2D> = curve
        .iter()
        .map(|p| Point2D::new(p.x.clamp(0.0, width as f64), p.y.clamp(0.0, height as f64)))
        .collect();
    let mut mask = BinaryMask::empty(width, height);
    let n = pts.len();
    let mut xs = Vec::new();
    for row in 0..height {
        let py = row as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            if (a.y > py) != (b.y > py) {
                xs.push((b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x);
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            let (x0, x1) = (span[0], span[1]);
            let first = (x0.floor() as i64 - 1).max(0) as usize;
            let last = ((x1.ceil() as i64 + 1).max(0) as usize).min(width);
            for col in first..last {
                let px = col as f64 + 0.5;
                if px >= x0 && px < x1 {
                    mask.set(col, row, true);
                }
            }
        }
    }
    let mask = mask.largest_component();
    if mask.is_empty() {
        return Err(Error::EmptyInterior);
    }
    Ok(mask)
}

/// Intermediate products of one successful generation, for inspection.
#[derive(Clone, Debug)]
pub struct MaskTrace {
    pub field: GrayImage,
    pub points: Vec<Point2D>,
    pub hull: Vec<Point2D>,
    pub curve: Vec<Point2D>,
    pub mask: BinaryMask,
    /// 1-based attempt index that produced the mask.
    pub attempts: usize,
}

/// Runs the full pipeline, retrying (with a fresh derived seed) until the
/// mask area lies within `area_bounds` of the region area.
pub fn generate_mask(spec: &MaskSpec) -> Result<BinaryMask> {
    generate_mask_traced(spec).map(|t| t.mask)
}

pub fn generate_mask_traced(spec: &MaskSpec) -> Result<MaskTrace> {
    spec.params.validate()?;
    let region = &spec.region;
    let (width, height) = region.dims();
    let region_area = region.count();
    if region_area == 0 {
        return Err(Error::EmptyMask);
    }
    let (lo, hi) = spec.params.area_bounds;
    for attempt in 0..MAX_ATTEMPTS {
        let seed = derive_seed(spec.seed, attempt as u64);
        match attempt_mask(spec, seed, width, height) {
            Ok(mut trace) => {
                let fraction = trace.mask.count() as f64 / region_area as f64;
                if (lo..=hi).contains(&fraction) {
                    trace.attempts = attempt + 1;
                    return Ok(trace);
                }
            }
            Err(Error::EmptyInterior | Error::DegenerateInput(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationFailed(MAX_ATTEMPTS))
}

fn attempt_mask(spec: &MaskSpec, seed: u64, width: usize, height: usize) -> Result<MaskTrace> {
    let p = &spec.params;
    let field = density_field(width, height, derive_seed(seed, 1), p)?;
    let points = sample_points(&field, &spec.region, p.num_points, derive_seed(seed, 2))?;
    let hull = convex_hull(&points)?;
    let curve = bezier_edges(&hull, p, derive_seed(seed, 3));
    let filled = rasterize_fill(&curve, width, height)?;
    let mask = filled.and(&spec.region)?.largest_component();
    if mask.is_empty() {
        return Err(Error::EmptyInterior);
    }
    Ok(MaskTrace { field, points, hull, curve, mask, attempts: 0 })
}
