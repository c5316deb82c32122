//! Inter-foot distance field `F` over a two-leg shape subspace, its gradient,
//! the unit nonslip field tangent to its level sets, and flows along it.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContactState, ModelSpec, ShapePoint};

/// `‖∇F‖` at or below this is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-6;
/// Default flow step in arc length.
pub const DEFAULT_FLOW_STEP: f64 = 1e-3;
/// Level drift that triggers projection back onto the starting level set.
pub const LEVEL_DRIFT_TOL: f64 = 1e-10;
pub const MIN_SINGULARITY_GRID: usize = 64;

/// Shape variables of one leg pair together with the box they are sampled on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedShapeSubspace {
    /// Zero-based leg indices `(i, j)`.
    pub pair: (usize, usize),
    /// Per-axis `[lo, hi]` angle intervals.
    pub bounds: [[f64; 2]; 2],
}

impl ReducedShapeSubspace {
    /// Subspace of legs `i` and `j` bounded by their swing limits.
    pub fn new(model: &ModelSpec, i: usize, j: usize) -> Result<Self> {
        let (li, lj) = (model.leg(i)?, model.leg(j)?);
        if i == j {
            return Err(Error::InvalidParameter(format!("leg pair ({i}, {j}) must be distinct")));
        }
        Ok(Self {
            pair: (i, j),
            bounds: [li.swing, lj.swing],
        })
    }

    /// Narrows the sampling box; it must stay inside the swing limits.
    pub fn with_bounds(mut self, model: &ModelSpec, bounds: [[f64; 2]; 2]) -> Result<Self> {
        let limits = [model.leg(self.pair.0)?.swing, model.leg(self.pair.1)?.swing];
        for axis in 0..2 {
            let [lo, hi] = bounds[axis];
            if !(lo < hi) || lo < limits[axis][0] || hi > limits[axis][1] {
                return Err(Error::InvalidParameter(format!(
                    "bounds [{lo}, {hi}] not inside swing limits {:?}",
                    limits[axis]
                )));
            }
        }
        self.bounds = bounds;
        Ok(self)
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        (0..2).all(|k| p[k] >= self.bounds[k][0] && p[k] <= self.bounds[k][1])
    }

    /// Full shape vector with the pair's angles set and other legs at zero.
    pub fn embed(&self, leg_count: usize, p: &Vector2<f64>) -> ShapePoint {
        let mut alpha = ShapePoint::zeros(leg_count);
        alpha[self.pair.0] = p[0];
        alpha[self.pair.1] = p[1];
        alpha
    }

    pub fn stance(&self, leg_count: usize) -> ContactState {
        ContactState::from_legs(leg_count, &[self.pair.0, self.pair.1])
    }

    pub fn legs(&self) -> [usize; 2] {
        [self.pair.0, self.pair.1]
    }

    /// Uniform `n × n` grid over the bounds, first axis outermost.
    pub fn grid(&self, n: usize) -> Vec<Vector2<f64>> {
        let a = grid_axis(self.bounds[0], n);
        let b = grid_axis(self.bounds[1], n);
        a.iter()
            .flat_map(|&x| b.iter().map(move |&y| Vector2::new(x, y)))
            .collect()
    }
}

/// `n` samples from `lo` to `hi` inclusive. Built about the midpoint so
/// that a symmetric interval yields exactly negated samples.
pub fn grid_axis([lo, hi]: [f64; 2], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let m = (n - 1) as f64;
    (0..n)
        .map(|k| match k {
            0 => lo,
            k if k == n - 1 => hi,
            k => mid + half * ((2 * k) as f64 - m) / m,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub point: Vector2<f64>,
    pub f_value: f64,
    pub grad: Vector2<f64>,
    /// Unit nonslip direction; `None` inside the singular neighbourhood.
    pub basis: Option<Vector2<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SingularityKind {
    Max,
    Min,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Singularity {
    pub point: Vector2<f64>,
    pub f_value: f64,
    pub kind: SingularityKind,
}

/// Sampled flow `t ↦ Φᵗ(start)` along the nonslip field.
#[derive(Clone, Debug)]
pub struct FlowPath {
    pub points: Vec<Vector2<f64>>,
    /// Nonslip field at each point (the derivative with respect to `t`).
    pub tangents: Vec<Vector2<f64>>,
    /// Signed step between consecutive points.
    pub step: f64,
    /// Signed total flow time.
    pub length: f64,
    /// `F` at the start; every point is held on this level.
    pub level: f64,
    /// Set when any point leaves the subspace bounds.
    pub out_of_bounds: bool,
}

impl FlowPath {
    pub fn start(&self) -> Vector2<f64> {
        self.points[0]
    }

    pub fn end(&self) -> Vector2<f64> {
        *self.points.last().expect("flow path is never empty")
    }

    /// Point at signed flow time `t ∈ [0, length]`, by cubic Hermite
    /// interpolation between nodes.
    pub fn at(&self, t: f64) -> Vector2<f64> {
        let n = self.points.len() - 1;
        if n == 0 || self.step == 0.0 {
            return self.points[0];
        }
        let s = (t / self.step).clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let u = s - k as f64;
        let (p0, p1) = (self.points[k], self.points[k + 1]);
        let (m0, m1) = (self.tangents[k] * self.step, self.tangents[k + 1] * self.step);
        let u2 = u * u;
        let u3 = u2 * u;
        p0 * (2.0 * u3 - 3.0 * u2 + 1.0)
            + m0 * (u3 - 2.0 * u2 + u)
            + p1 * (-2.0 * u3 + 3.0 * u2)
            + m1 * (u3 - u2)
    }

    /// Same samples traversed backwards.
    pub fn reversed(&self) -> FlowPath {
        let mut points = self.points.clone();
        points.reverse();
        let mut tangents = self.tangents.clone();
        tangents.reverse();
        FlowPath {
            points,
            tangents,
            step: -self.step,
            length: -self.length,
            level: self.level,
            out_of_bounds: self.out_of_bounds,
        }
    }
}

/// The distance field of one leg pair of one model.
#[derive(Clone, Debug)]
pub struct ShapeField<'a> {
    model: &'a ModelSpec,
    subspace: ReducedShapeSubspace,
    singular_tol: f64,
}

impl<'a> ShapeField<'a> {
    pub fn new(model: &'a ModelSpec, subspace: ReducedShapeSubspace) -> Self {
        Self {
            model,
            subspace,
            singular_tol: SINGULAR_TOL,
        }
    }

    pub fn with_singular_tol(mut self, tol: f64) -> Self {
        self.singular_tol = tol;
        self
    }

    pub fn model(&self) -> &'a ModelSpec {
        self.model
    }

    pub fn subspace(&self) -> &ReducedShapeSubspace {
        &self.subspace
    }

    pub fn singular_tol(&self) -> f64 {
        self.singular_tol
    }

    fn legs(&self) -> (&crate::model::LegModule, &crate::model::LegModule) {
        (&self.model.legs[self.subspace.pair.0], &self.model.legs[self.subspace.pair.1])
    }

    /// Squared inter-foot distance, from the relative transform between the
    /// two foot frames.
    pub fn value(&self, p: &Vector2<f64>) -> f64 {
        let (li, lj) = self.legs();
        let rel = li.foot_pose(p[0]).inverse().compose(&lj.foot_pose(p[1]));
        rel.x * rel.x + rel.y * rel.y
    }

    pub fn gradient(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let (li, lj) = self.legs();
        let d = lj.foot_position(p[1]) - li.foot_position(p[0]);
        Vector2::new(
            -2.0 * d.dot(&li.foot_position_rate(p[0])),
            2.0 * d.dot(&lj.foot_position_rate(p[1])),
        )
    }

    pub fn hessian(&self, p: &Vector2<f64>) -> Matrix2<f64> {
        let (li, lj) = self.legs();
        let d = lj.foot_position(p[1]) - li.foot_position(p[0]);
        let (ri, rj) = (li.foot_position_rate(p[0]), lj.foot_position_rate(p[1]));
        let hii = 2.0 * (ri.norm_squared() - d.dot(&li.foot_position_curvature(p[0])));
        let hjj = 2.0 * (rj.norm_squared() + d.dot(&lj.foot_position_curvature(p[1])));
        let hij = -2.0 * ri.dot(&rj);
        Matrix2::new(hii, hij, hij, hjj)
    }

    /// Unit field tangent to the level sets: `∇F/‖∇F‖` rotated clockwise by
    /// a quarter turn.
    pub fn nonslip(&self, p: &Vector2<f64>) -> Result<Vector2<f64>> {
        let g = self.gradient(p);
        let norm = g.norm();
        if !(norm > self.singular_tol) {
            return Err(Error::SingularShape {
                point: [p[0], p[1]],
                grad_norm: norm,
            });
        }
        Ok(rotate_clockwise(&g) / norm)
    }

    pub fn sample(&self, p: &Vector2<f64>) -> FieldSample {
        let grad = self.gradient(p);
        FieldSample {
            point: *p,
            f_value: self.value(p),
            grad,
            basis: self.nonslip(p).ok(),
        }
    }

    /// Samples `F`, `∇F` and the nonslip basis on an `n × n` grid.
    pub fn sample_grid(&self, n: usize) -> Vec<FieldSample> {
        self.subspace
            .grid(n)
            .par_iter()
            .map(|p| self.sample(p))
            .collect()
    }

    fn rk4_step(&self, p: &Vector2<f64>, h: f64) -> Result<Vector2<f64>> {
        let k1 = self.nonslip(p)?;
        let k2 = self.nonslip(&(p + k1 * (0.5 * h)))?;
        let k3 = self.nonslip(&(p + k2 * (0.5 * h)))?;
        let k4 = self.nonslip(&(p + k3 * h))?;
        Ok(p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
    }

    /// Newton correction along `∇F` back onto the level `level`.
    fn project(&self, mut p: Vector2<f64>, level: f64) -> Vector2<f64> {
        let tol = 4.0 * f64::EPSILON * level.abs().max(1.0);
        for _ in 0..8 {
            let drift = self.value(&p) - level;
            if drift.abs() <= tol {
                break;
            }
            let g = self.gradient(&p);
            let g2 = g.norm_squared();
            if g2 == 0.0 {
                break;
            }
            p -= g * (drift / g2);
        }
        p
    }

    fn advance(&self, p: &Vector2<f64>, h: f64, level: f64) -> Result<Vector2<f64>> {
        let next = self.rk4_step(p, h)?;
        if (self.value(&next) - level).abs() > LEVEL_DRIFT_TOL {
            Ok(self.project(next, level))
        } else {
            Ok(next)
        }
    }

    /// Flows for signed arc length `length` from `start` with fixed-step RK4.
    pub fn flow(&self, start: &Vector2<f64>, length: f64, step: f64) -> Result<FlowPath> {
        if !(step > 0.0) || !length.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "flow needs a positive step and finite length (step {step}, length {length})"
            )));
        }
        let level = self.value(start);
        if length == 0.0 {
            return Ok(FlowPath {
                points: vec![*start],
                tangents: vec![self.nonslip(start).unwrap_or_else(|_| Vector2::zeros())],
                step: 0.0,
                length: 0.0,
                level,
                out_of_bounds: !self.subspace.contains(start),
            });
        }
        let n = (length.abs() / step).ceil().max(1.0) as usize;
        let h = length / n as f64;
        let mut points = Vec::with_capacity(n + 1);
        let mut tangents = Vec::with_capacity(n + 1);
        let mut out_of_bounds = !self.subspace.contains(start);
        let mut p = *start;
        points.push(p);
        tangents.push(self.nonslip(&p)?);
        for _ in 0..n {
            p = self.advance(&p, h, level)?;
            out_of_bounds |= !self.subspace.contains(&p);
            points.push(p);
            tangents.push(self.nonslip(&p)?);
        }
        Ok(FlowPath {
            points,
            tangents,
            step: h,
            length,
            level,
            out_of_bounds,
        })
    }

    /// End point of a flow, without keeping the samples.
    pub fn flow_to(&self, start: &Vector2<f64>, length: f64, step: f64) -> Result<Vector2<f64>> {
        Ok(self.flow(start, length, step)?.end())
    }

    /// Arc length of the closed level-set contour through `start`, found by
    /// flowing forward until the path crosses back through `start`.
    pub fn closed_contour_length(&self, start: &Vector2<f64>, step: f64, max_length: f64) -> Result<f64> {
        let level = self.value(start);
        let tangent = self.nonslip(start)?;
        let q = |p: &Vector2<f64>| (p - start).dot(&tangent);
        let mut p = *start;
        let mut s = 0.0;
        let mut departed = false;
        while s < max_length {
            let next = self.advance(&p, step, level)?;
            s += step;
            let gap = (next - start).norm();
            if gap > 4.0 * step {
                departed = true;
            }
            if departed && gap < 0.5 && q(&p) < 0.0 && q(&next) >= 0.0 {
                // bisection on the sub-step length
                let (mut lo, mut hi) = (0.0, step);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if q(&self.rk4_step(&p, mid)?) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(s - step + 0.5 * (lo + hi));
            }
            p = next;
        }
        Err(Error::OpenContour { max_length })
    }

    /// Extrema of `F` in the bounds: grid scan of `‖∇F‖`, Newton refinement
    /// on `∇F = 0`, classification by the Hessian. Saddle points are not
    /// reported.
    pub fn find_singularities(&self, grid_n: usize) -> Result<Vec<Singularity>> {
        if grid_n < MIN_SINGULARITY_GRID {
            return Err(Error::InvalidParameter(format!(
                "singularity grid must be at least {MIN_SINGULARITY_GRID}, got {grid_n}"
            )));
        }
        let a = grid_axis(self.subspace.bounds[0], grid_n);
        let b = grid_axis(self.subspace.bounds[1], grid_n);
        let norms: Vec<f64> = (0..grid_n * grid_n)
            .into_par_iter()
            .map(|idx| self.gradient(&Vector2::new(a[idx / grid_n], b[idx % grid_n])).norm())
            .collect();

        let mut found: Vec<Singularity> = Vec::new();
        for i in 0..grid_n {
            for j in 0..grid_n {
                let v = norms[i * grid_n + j];
                let is_local_min = neighbours(i, j, grid_n).all(|(k, l)| norms[k * grid_n + l] >= v);
                if !is_local_min {
                    continue;
                }
                let Some(p) = self.newton_critical_point(Vector2::new(a[i], b[j])) else {
                    continue;
                };
                let slack = 1e-9;
                let inside = (0..2).all(|k| {
                    p[k] >= self.subspace.bounds[k][0] - slack && p[k] <= self.subspace.bounds[k][1] + slack
                });
                if !inside || found.iter().any(|s| (s.point - p).norm() < 1e-6) {
                    continue;
                }
                let Some(kind) = self.classify(&p) else {
                    continue;
                };
                found.push(Singularity {
                    point: p,
                    f_value: self.value(&p),
                    kind,
                });
            }
        }
        found.sort_by(|x, y| y.f_value.total_cmp(&x.f_value));
        Ok(found)
    }

    fn newton_critical_point(&self, mut p: Vector2<f64>) -> Option<Vector2<f64>> {
        // Pseudo-inverse steps keep converging (linearly) at degenerate
        // extrema where the Hessian is singular.
        for _ in 0..400 {
            let g = self.gradient(&p);
            if g.norm() < 1e-15 {
                break;
            }
            let delta = self.hessian(&p).pseudo_inverse(1e-12).ok()? * g;
            p -= delta;
            if delta.norm() < 1e-17 {
                break;
            }
        }
        (self.gradient(&p).norm() < 1e-10).then_some(p)
    }

    /// Hessian sign when definite; otherwise compares `F` on a small ring.
    fn classify(&self, p: &Vector2<f64>) -> Option<SingularityKind> {
        let h = self.hessian(p);
        let det = h.determinant();
        let scale = h.norm().max(1.0);
        if det > 1e-10 * scale * scale {
            return Some(if h.trace() < 0.0 { SingularityKind::Max } else { SingularityKind::Min });
        }
        if det < -1e-10 * scale * scale {
            return None;
        }
        let centre = self.value(p);
        let ring: Vec<f64> = (0..32)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / 32.0;
                self.value(&(p + Vector2::new(a.cos(), a.sin()) * 1e-3)) - centre
            })
            .collect();
        if ring.iter().all(|&d| d < 0.0) {
            Some(SingularityKind::Max)
        } else if ring.iter().all(|&d| d > 0.0) {
            Some(SingularityKind::Min)
        } else {
            None
        }
    }
}

fn neighbours(i: usize, j: usize, n: usize) -> impl Iterator<Item = (usize, usize)> {
    let di = [-1i64, 0, 1];
    di.into_iter()
        .flat_map(move |a| di.into_iter().map(move |b| (a, b)))
        .filter(|&(a, b)| a != 0 || b != 0)
        .filter_map(move |(a, b)| {
            let (k, l) = (i as i64 + a, j as i64 + b);
            (k >= 0 && l >= 0 && k < n as i64 && l < n as i64).then_some((k as usize, l as usize))
        })
}

/// `[[0, 1], [-1, 0]]·v`
pub fn rotate_clockwise(v: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(v[1], -v[0])
}

pub fn inter_foot_f(model: &ModelSpec, subspace: &ReducedShapeSubspace, point: &Vector2<f64>) -> f64 {
    ShapeField::new(model, subspace.clone()).value(point)
}

pub fn grad_f(model: &ModelSpec, subspace: &ReducedShapeSubspace, point: &Vector2<f64>) -> Vector2<f64> {
    ShapeField::new(model, subspace.clone()).gradient(point)
}

pub fn nonslip_field(model: &ModelSpec, subspace: &ReducedShapeSubspace, point: &Vector2<f64>) -> Result<Vector2<f64>> {
    ShapeField::new(model, subspace.clone()).nonslip(point)
}

pub fn flow(
    model: &ModelSpec,
    subspace: &ReducedShapeSubspace,
    start: &Vector2<f64>,
    length: f64,
    step: f64,
) -> Result<FlowPath> {
    ShapeField::new(model, subspace.clone()).flow(start, length, step)
}

pub fn find_singularities(model: &ModelSpec, subspace: &ReducedShapeSubspace, grid_n: usize) -> Result<Vec<Singularity>> {
    ShapeField::new(model, subspace.clone()).find_singularities(grid_n)
}
