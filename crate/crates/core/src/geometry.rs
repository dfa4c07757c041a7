//! The model T_d × ℝⁿ with the mapping-torus metric. The fiber carries the form
//! Q_h(u) = ‖u·A^{−h}‖² at integer heights, interpolated linearly in between,
//! so (b, k) acting by w ↦ w·A^k + b is an isometry.
//!
//! Distances are returned as a sandwich. The upper bound is the exact length of
//! a realizable polyline; the lower bound combines the tree distance with a
//! dual-norm estimate of the fiber displacement over the heights reachable
//! within the upper bound.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_traits::ToPrimitive;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{q_to_f64, Q};
use crate::numberfield::{FieldDescriptor, GammaElement};
use crate::sampling;
use crate::tree::{DTree, TreeVertex};

/// Largest |height| for which fiber forms are tabulated.
pub const HEIGHT_RANGE: i64 = 160;

const SNAP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("points {0} and {1} of the polyline do not share a tree edge")]
    InvalidPolyline(usize, usize),
    #[error("height {0} is outside the tabulated range")]
    HeightOutOfRange(f64),
    #[error("no threshold reached up to n = {n_max} (last value {last})")]
    NotAchieved { n_max: u32, last: f64 },
    #[error("every sample was degenerate")]
    DegenerateSample,
}

/// A point on the edge from `vertex` toward its parent, at distance `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TreePoint {
    pub vertex: TreeVertex,
    pub t: f64,
}

impl TreePoint {
    pub fn at(vertex: TreeVertex) -> Self {
        Self { vertex, t: 0.0 }
    }

    pub fn height(&self) -> f64 {
        self.vertex.height as f64 - self.t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelPoint {
    pub tree: TreePoint,
    pub fiber: Vec<Q>,
}

impl ModelPoint {
    pub fn new(tree: TreePoint, fiber: Vec<Q>) -> Self {
        Self { tree, fiber }
    }

    pub fn fiber_f64(&self) -> Vec<f64> {
        self.fiber.iter().map(q_to_f64).collect()
    }
}

#[derive(Clone, Debug)]
pub struct FiberForm {
    pub height: f64,
    pub matrix: DMatrix<f64>,
}

impl FiberForm {
    pub fn eval(&self, u: &[f64]) -> f64 {
        quad(&self.matrix, u)
    }
}

/// Breakpoints of a path; consecutive points share a tree edge and the fiber
/// moves linearly between them.
#[derive(Clone, Debug)]
pub struct PathPolyline {
    pub tree: Vec<TreePoint>,
    pub fiber: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Budget {
    /// Largest integer overshoot above either endpoint or below the meet.
    pub max_overshoot: u32,
    /// Polyline pieces per unit of height travelled.
    pub pieces_per_unit: u32,
}

impl Default for Budget {
    fn default() -> Self {
        Self { max_overshoot: 8, pieces_per_unit: 4 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceBounds {
    pub lower: f64,
    pub upper: f64,
    pub tree_distance: f64,
    /// The best profile sits on the overshoot boundary.
    pub budget_hit: bool,
    /// (rise above p, rise above q, drop below the meet)
    pub profile: (u32, u32, u32),
}

impl DistanceBounds {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

fn quad(m: &DMatrix<f64>, u: &[f64]) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += u[i] * m[(i, j)] * u[j];
        }
    }
    s
}

fn snap(h: f64) -> f64 {
    let r = h.round();
    if (h - r).abs() < SNAP {
        r
    } else {
        h
    }
}

/// ∫₀¹ √(y² + (x² − y²)s) ds with x, y ≥ 0.
fn sqrt_linear_integral(c0: f64, c1: f64) -> f64 {
    let y = c0.max(0.0).sqrt();
    let x = c1.max(0.0).sqrt();
    if x + y == 0.0 {
        0.0
    } else {
        2.0 / 3.0 * (x * x + x * y + y * y) / (x + y)
    }
}

#[derive(Clone, Debug)]
struct Segment {
    ha: f64,
    hb: f64,
    /// 0, 1 run below the rise over p; 2, 3 below the rise over q
    leg: u8,
}

struct ProfileSolution {
    length: f64,
    lambda: Vec<f64>,
    segments: Vec<Segment>,
    steps: Vec<Vec<f64>>,
}

/// Fiber forms, contraction constants and tree geometry for one field.
#[derive(Clone, Debug)]
pub struct Metric {
    tree: DTree,
    n: usize,
    /// B_j = A^{−j}(A^{−j})ᵀ for |j| ≤ HEIGHT_RANGE
    forms: Vec<DMatrix<f64>>,
    /// B_j⁻¹ = (A^j)ᵀA^j, the dual forms
    dual_forms: Vec<DMatrix<f64>>,
    /// A^{−j} for |j| ≤ HEIGHT_RANGE
    inv_powers: Vec<DMatrix<f64>>,
    pub budget: Budget,
}

impl Metric {
    pub fn new(field: Arc<FieldDescriptor>) -> Self {
        let n = field.degree();
        let to_f64 = |m: &Vec<Vec<Q>>| DMatrix::from_fn(n, n, |i, j| q_to_f64(&m[i][j]));
        let a = to_f64(&field.power(1));
        let a_inv = to_f64(&field.power(-1));
        let len = (2 * HEIGHT_RANGE + 1) as usize;
        let mut inv_powers = vec![DMatrix::<f64>::identity(n, n); len];
        for j in 1..=HEIGHT_RANGE {
            let up = (HEIGHT_RANGE + j) as usize;
            let down = (HEIGHT_RANGE - j) as usize;
            inv_powers[up] = &inv_powers[up - 1] * &a_inv;
            inv_powers[down] = &inv_powers[down + 1] * &a;
        }
        let forms = inv_powers.iter().map(|p| p * p.transpose()).collect();
        let dual_forms = (0..len)
            .map(|i| {
                let p = &inv_powers[len - 1 - i];
                p.transpose() * p
            })
            .collect();
        Self { tree: DTree::new(field), n, forms, dual_forms, inv_powers, budget: Budget::default() }
    }

    pub fn with_budget(mut self, budget: Budget) -> Self {
        self.budget = budget;
        self
    }

    pub fn tree(&self) -> &DTree {
        &self.tree
    }

    pub fn field(&self) -> &Arc<FieldDescriptor> {
        &self.tree.field
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn index(&self, j: i64) -> usize {
        assert!(j.abs() <= HEIGHT_RANGE, "height {j} outside the tabulated range");
        (j + HEIGHT_RANGE) as usize
    }

    fn form_matrix(&self, h: f64) -> DMatrix<f64> {
        let h = snap(h);
        let j = h.floor() as i64;
        let t = h - j as f64;
        if t == 0.0 {
            self.forms[self.index(j)].clone()
        } else {
            &self.forms[self.index(j)] * (1.0 - t) + &self.forms[self.index(j + 1)] * t
        }
    }

    pub fn fiber_form(&self, h: f64) -> Result<FiberForm, GeometryError> {
        if h.abs() >= HEIGHT_RANGE as f64 {
            return Err(GeometryError::HeightOutOfRange(h));
        }
        Ok(FiberForm { height: h, matrix: self.form_matrix(h) })
    }

    /// Q_h(u).
    pub fn q(&self, h: f64, u: &[f64]) -> f64 {
        let h = snap(h);
        let j = h.floor() as i64;
        let t = h - j as f64;
        let lo = quad(&self.forms[self.index(j)], u);
        if t == 0.0 {
            lo
        } else {
            (1.0 - t) * lo + t * quad(&self.forms[self.index(j + 1)], u)
        }
    }

    // ---------- tree points ----------

    /// The point at height `h` on the ray from `top` toward the end.
    pub fn point_below(&self, top: &TreePoint, h: f64) -> TreePoint {
        let h = snap(h);
        debug_assert!(h <= top.height() + SNAP);
        let n = h.ceil() as i64;
        let vertex = if n >= top.vertex.height {
            top.vertex.clone()
        } else {
            self.tree.ancestor_at(&top.vertex, n)
        };
        let t = snap(vertex.height as f64 - h);
        TreePoint { vertex, t }
    }

    /// A point `u ≥ 0` above z along first children.
    pub fn point_above(&self, z: &TreePoint, u: f64) -> TreePoint {
        let h = snap(z.height() + u);
        let n = h.ceil() as i64;
        let mut v = z.vertex.clone();
        while v.height < n {
            v = self.tree.first_child(&v);
        }
        let t = snap(v.height as f64 - h);
        TreePoint { vertex: v, t }
    }

    /// (distance, height of the lowest point of the geodesic).
    pub fn tree_geodesic(&self, p: &TreePoint, q: &TreePoint) -> (f64, f64) {
        let (hp, hq) = (p.height(), q.height());
        let low = if p.vertex == q.vertex {
            hp.min(hq)
        } else {
            let m = self.tree.meet(&p.vertex, &q.vertex);
            if m == p.vertex {
                hp
            } else if m == q.vertex {
                hq
            } else {
                m.height as f64
            }
        };
        (hp + hq - 2.0 * low, low)
    }

    pub fn act(&self, g: &GammaElement, p: &ModelPoint) -> ModelPoint {
        ModelPoint {
            tree: TreePoint { vertex: self.tree.act_vertex(g, &p.tree.vertex), t: p.tree.t },
            fiber: self
                .field()
                .affine_action(g, &p.fiber)
                .expect("fiber has the field dimension"),
        }
    }

    fn common_edge(&self, p: &TreePoint, q: &TreePoint) -> bool {
        p.vertex == q.vertex
            || (q.t == 0.0 && self.tree.parent(&p.vertex) == q.vertex)
            || (p.t == 0.0 && self.tree.parent(&q.vertex) == p.vertex)
    }

    // ---------- lengths ----------

    /// Midpoint-rule length with each straight piece split at integer heights
    /// and then into `subdivisions` parts. The integrand is concave along a
    /// piece, so this overestimates and decreases under refinement.
    pub fn path_length(&self, path: &PathPolyline, subdivisions: u32) -> Result<f64, GeometryError> {
        let subdivisions = subdivisions.max(1);
        let mut total = 0.0;
        for i in 1..path.tree.len() {
            let (p, q) = (&path.tree[i - 1], &path.tree[i]);
            if !self.common_edge(p, q) {
                return Err(GeometryError::InvalidPolyline(i - 1, i));
            }
            let (ha, hb) = (p.height(), q.height());
            let dw: Vec<f64> = path.fiber[i].iter().zip(&path.fiber[i - 1]).map(|(a, b)| a - b).collect();
            let mut cuts = vec![0.0];
            let (lo, hi) = (ha.min(hb), ha.max(hb));
            let mut k = snap(lo).floor() + 1.0;
            while k < snap(hi) {
                cuts.push((k - ha) / (hb - ha));
                k += 1.0;
            }
            cuts.push(1.0);
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in cuts.windows(2) {
                let frac = (w[1] - w[0]) / subdivisions as f64;
                for s in 0..subdivisions {
                    let mid = w[0] + (s as f64 + 0.5) * frac;
                    let h = ha + mid * (hb - ha);
                    let step: Vec<f64> = dw.iter().map(|x| x * frac).collect();
                    let dh = (hb - ha) * frac;
                    total += (dh * dh + self.q(h, &step)).sqrt();
                }
            }
        }
        Ok(total)
    }

    /// Exact length of a straight piece inside one integer height interval.
    fn segment_length(&self, s: &Segment, x: &[f64]) -> f64 {
        let dh2 = (s.hb - s.ha).powi(2);
        sqrt_linear_integral(dh2 + self.q(s.ha, x), dh2 + self.q(s.hb, x))
    }

    fn split_leg(&self, from: f64, to: f64, leg: u8, out: &mut Vec<Segment>) {
        let len = (to - from).abs();
        if len < SNAP {
            return;
        }
        let mut knots = vec![from];
        let dir = if to > from { 1.0 } else { -1.0 };
        let mut k = if dir > 0.0 { snap(from).floor() + 1.0 } else { snap(from).ceil() - 1.0 };
        while (to - k) * dir > SNAP {
            knots.push(k);
            k += dir;
        }
        knots.push(to);
        let pieces_total = ((len * self.budget.pieces_per_unit as f64).ceil() as usize).max(2);
        for w in knots.windows(2) {
            let part = ((w[1] - w[0]).abs() / len * pieces_total as f64).ceil().max(1.0) as usize;
            for i in 0..part {
                let a = w[0] + (w[1] - w[0]) * i as f64 / part as f64;
                let b = w[0] + (w[1] - w[0]) * (i + 1) as f64 / part as f64;
                out.push(Segment { ha: a, hb: b, leg });
            }
        }
    }

    fn profile_segments(&self, h1: f64, h2: f64, low: f64, prof: (u32, u32, u32)) -> Vec<Segment> {
        let p1 = h1 + prof.0 as f64;
        let p2 = h2 + prof.1 as f64;
        let l = low - prof.2 as f64;
        let mut segs = Vec::new();
        self.split_leg(h1, p1, 0, &mut segs);
        self.split_leg(p1, l, 1, &mut segs);
        self.split_leg(l, p2, 2, &mut segs);
        self.split_leg(p2, h2, 3, &mut segs);
        segs
    }

    /// Minimize Σ √(a_j² + x_j G_j x_jᵀ) subject to Σ x_j = Δw over a fixed
    /// height profile, G_j the midpoint form, by feasible Newton steps. The
    /// Hessian inverse has the closed form r_j(S_j + x_jᵀx_j/a_j²) with
    /// S_j = G_j⁻¹, so each step costs one n×n solve. The midpoint rule
    /// overestimates each piece; the returned length is exact for the
    /// recovered fiber steps, hence a valid upper bound whatever the solver
    /// accuracy. `lambda` is the common gradient, the dual multiplier.
    fn solve_profile(
        &self,
        segments: Vec<Segment>,
        dw: &[f64],
        inverses: &mut HashMap<i64, (Vec<f64>, Vec<f64>)>,
    ) -> ProfileSolution {
        let n = self.n;
        if dw.iter().all(|x| *x == 0.0) {
            let length = segments.iter().map(|s| (s.hb - s.ha).abs()).sum();
            let steps = vec![vec![0.0; n]; segments.len()];
            return ProfileSolution { length, lambda: vec![0.0; n], segments, steps };
        }
        if segments.is_empty() {
            return ProfileSolution { length: f64::INFINITY, lambda: vec![0.0; n], segments, steps: vec![] };
        }
        let a: Vec<f64> = segments.iter().map(|s| (s.hb - s.ha).abs()).collect();
        // (G_j, S_j) as flat column-major arrays, shared between profiles
        let keys: Vec<i64> = segments
            .iter()
            .map(|s| (0.5 * (s.ha + s.hb) * 1e9).round() as i64)
            .collect();
        for (s, key) in segments.iter().zip(&keys) {
            inverses.entry(*key).or_insert_with(|| {
                let h = 0.5 * (s.ha + s.hb);
                let g = self.form_matrix(h);
                let inv = match g.clone().cholesky() {
                    Some(c) => c.inverse(),
                    None => self.dual_matrix(h),
                };
                (g.iter().cloned().collect(), inv.iter().cloned().collect())
            });
        }
        let gs: Vec<&[f64]> = keys.iter().map(|k| &inverses[k].0[..]).collect();
        let ss: Vec<&[f64]> = keys.iter().map(|k| &inverses[k].1[..]).collect();
        let mat_vec = |m: &[f64], v: &[f64], out: &mut [f64]| {
            for i in 0..n {
                out[i] = (0..n).map(|j| m[i + j * n] * v[j]).sum();
            }
        };
        let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(x, y)| x * y).sum() };
        let solve = |m: DMatrix<f64>, rhs: &[f64]| -> Option<Vec<f64>> {
            let b = DVector::from_column_slice(rhs);
            let x = match m.clone().cholesky() {
                Some(c) => c.solve(&b),
                None => m.lu().solve(&b)?,
            };
            x.iter().all(|v| v.is_finite()).then(|| x.iter().cloned().collect())
        };
        let objective = |xs: &[Vec<f64>], buf: &mut Vec<f64>| -> f64 {
            let mut f = 0.0;
            for ((aj, g), x) in a.iter().zip(&gs).zip(xs) {
                mat_vec(g, x, buf);
                f += (aj * aj + dot(x, buf)).sqrt();
            }
            f
        };
        let mut buf = vec![0.0; n];

        // start from the minimizer of Σ x G x / a: x_j = a_j S_j M⁻¹ Δw
        let mut m0 = DMatrix::<f64>::zeros(n, n);
        for (aj, s) in a.iter().zip(&ss) {
            m0 += DMatrix::from_column_slice(n, n, s) * *aj;
        }
        let cheapest = (0..ss.len())
            .max_by(|i, j| {
                let tr = |s: &[f64]| (0..n).map(|k| s[k * n + k]).sum::<f64>();
                tr(ss[*i]).partial_cmp(&tr(ss[*j])).unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        let mut steps: Vec<Vec<f64>> = match solve(m0, dw) {
            Some(y) => a
                .iter()
                .zip(&ss)
                .map(|(aj, s)| {
                    let mut x = vec![0.0; n];
                    mat_vec(s, &y, &mut x);
                    x.iter_mut().for_each(|v| *v *= aj);
                    x
                })
                .collect(),
            None => vec![vec![0.0; n]; a.len()],
        };
        let fix_residual = |steps: &mut Vec<Vec<f64>>| {
            let mut residual = dw.to_vec();
            for x in steps.iter() {
                for i in 0..n {
                    residual[i] -= x[i];
                }
            }
            for i in 0..n {
                steps[cheapest][i] += residual[i];
            }
        };
        fix_residual(&mut steps);

        let mut f0 = objective(&steps, &mut buf);
        let mut lam = vec![0.0; n];
        let mut grads = vec![vec![0.0; n]; a.len()];
        let mut rs = vec![0.0; a.len()];
        let mut cand = steps.clone();
        for _ in 0..60 {
            // g_j = G_j x_j / r_j and H_j⁻¹ g_j = x_j r_j² / a_j²
            let mut m = DMatrix::<f64>::zeros(n, n);
            let mut rhs = vec![0.0; n];
            for j in 0..a.len() {
                mat_vec(gs[j], &steps[j], &mut buf);
                let r = (a[j] * a[j] + dot(&steps[j], &buf)).sqrt();
                rs[j] = r;
                for i in 0..n {
                    grads[j][i] = buf[i] / r;
                }
                let x = &steps[j];
                let s = ss[j];
                let c = r / (a[j] * a[j]);
                for p in 0..n {
                    for q in 0..n {
                        m[(p, q)] += r * s[p + q * n] + c * x[p] * x[q];
                    }
                    rhs[p] += x[p] * r * r / (a[j] * a[j]);
                }
            }
            let Some(nu) = solve(m, &rhs) else { break };
            lam.copy_from_slice(&nu);
            // Δx_j = H_j⁻¹(ν − g_j)
            let mut decrement = 0.0;
            let mut dirs = vec![vec![0.0; n]; a.len()];
            for j in 0..a.len() {
                let x = &steps[j];
                let (r, aj2) = (rs[j], a[j] * a[j]);
                mat_vec(ss[j], &nu, &mut buf);
                let xn = dot(x, &nu);
                for i in 0..n {
                    dirs[j][i] = r * (buf[i] + x[i] * xn / aj2) - x[i] * r * r / aj2;
                }
                decrement -= dot(&grads[j], &dirs[j]);
            }
            if !(decrement > 1e-13 * (1.0 + f0)) {
                break;
            }
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-10 {
                for j in 0..a.len() {
                    for i in 0..n {
                        cand[j][i] = steps[j][i] + t * dirs[j][i];
                    }
                }
                let f1 = objective(&cand, &mut buf);
                if f1.is_finite() && f1 <= f0 - 1e-4 * t * decrement {
                    std::mem::swap(&mut steps, &mut cand);
                    f0 = f1;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        fix_residual(&mut steps);
        let length: f64 = segments.iter().zip(&steps).map(|(s, x)| self.segment_length(s, x)).sum();
        let length = if length.is_finite() { length } else { f64::INFINITY };
        ProfileSolution { length, lambda: lam, segments, steps }
    }

    /// The stretch (0, k) is an isometry shifting heights by k and sending
    /// Δw to Δw·A^k. Solving near height 0 keeps the forms well conditioned.
    fn recentre(&self, h1: f64, h2: f64, low: f64, dw: &[f64]) -> i64 {
        let hmax = h1.max(h2);
        let limit = HEIGHT_RANGE - 2;
        let cheap = |j: i64| self.q(j as f64, dw) <= 1.0;
        // the nearest heights above and below the pair where Δw costs O(1)
        let up = (hmax.ceil() as i64..limit).find(|j| cheap(*j));
        let down = (-limit..=low.floor() as i64).rev().find(|j| cheap(*j));
        let (a, b) = match (up, down) {
            (Some(u), Some(d)) if (d as f64 - low).abs() < (u as f64 - hmax).abs() => (d as f64, hmax),
            (Some(u), _) => (low, u as f64),
            (None, Some(d)) => (d as f64, hmax),
            (None, None) => (low, hmax),
        };
        -(0.5 * (a + b)).round() as i64
    }

    fn shift_fiber(&self, dw: &[f64], k: i64) -> Vec<f64> {
        // Δw·A^k = Δw·(A^{−(−k)})
        let m = &self.inv_powers[self.index(-k)];
        (0..self.n).map(|j| (0..self.n).map(|i| dw[i] * m[(i, j)]).sum()).collect()
    }

    /// Best profile for heights (h1, h2) with meet height `low`, solved after
    /// recentring; returns the solution in recentred coordinates with the
    /// shift used.
    fn best_profile(&self, h1: f64, h2: f64, low: f64, dw: &[f64]) -> (ProfileSolution, (u32, u32, u32), bool, i64) {
        let mut inverses = HashMap::new();
        if dw.iter().all(|x| *x == 0.0) {
            let segs = self.profile_segments(h1, h2, low, (0, 0, 0));
            return (self.solve_profile(segs, dw, &mut inverses), (0, 0, 0), false, 0);
        }
        let k = self.recentre(h1, h2, low, dw);
        let (h1, h2, low) = (h1 + k as f64, h2 + k as f64, low + k as f64);
        let dw = &self.shift_fiber(dw, k)[..];
        let (sol, prof, hit) = self.search_profiles(h1, h2, low, dw, &mut inverses);
        if (h1 - low).abs() < SNAP && (h2 - low).abs() < SNAP {
            // same tree point: moving at constant height is also a candidate
            let flat = self.q(h1, dw).sqrt();
            if flat <= sol.length {
                let flat_sol = ProfileSolution {
                    length: flat,
                    lambda: vec![0.0; self.n],
                    segments: vec![Segment { ha: h1, hb: h1, leg: 0 }],
                    steps: vec![dw.to_vec()],
                };
                return (flat_sol, (0, 0, 0), false, k);
            }
        }
        (sol, prof, hit, k)
    }

    /// Scan symmetric rises, then drops below the meet, then polish by
    /// single-coordinate moves.
    fn search_profiles(
        &self,
        h1: f64,
        h2: f64,
        low: f64,
        dw: &[f64],
        inverses: &mut HashMap<i64, (Vec<f64>, Vec<f64>)>,
    ) -> (ProfileSolution, (u32, u32, u32), bool) {
        // deep points need room to climb back to the scale of the base
        // deep pairs need room to climb back to where Δw is cheap
        let m = self.budget.max_overshoot + (-h1.min(h2)).max(0.0).ceil() as u32;
        let mut seen: HashMap<(u32, u32, u32), f64> = HashMap::new();
        let mut best: Option<(ProfileSolution, (u32, u32, u32))> = None;
        let mut try_profile = |prof: (u32, u32, u32), best: &mut Option<(ProfileSolution, (u32, u32, u32))>| -> bool {
            if seen.contains_key(&prof) {
                return false;
            }
            let sol = self.solve_profile(self.profile_segments(h1, h2, low, prof), dw, inverses);
            seen.insert(prof, sol.length);
            let better = best.as_ref().map_or(true, |(b, _)| sol.length < b.length - 1e-12);
            if better {
                *best = Some((sol, prof));
            }
            better
        };
        try_profile((0, 0, 0), &mut best);
        let mut misses = 0;
        for u in 1..=m {
            if try_profile((u, u, 0), &mut best) {
                misses = 0;
            } else {
                misses += 1;
                if misses == 2 {
                    break;
                }
            }
        }
        let top = best.as_ref().unwrap().1;
        misses = 0;
        for dl in 1..=m {
            if try_profile((top.0, top.1, dl), &mut best) {
                misses = 0;
            } else {
                misses += 1;
                if misses == 2 {
                    break;
                }
            }
        }
        loop {
            let cur = best.as_ref().unwrap().1;
            let (a, b, c) = (cur.0 as i64, cur.1 as i64, cur.2 as i64);
            let mut improved = false;
            for (da, db, dc) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1), (1, 1, 0), (-1, -1, 0)] {
                let cand = (a + da, b + db, c + dc);
                if [cand.0, cand.1, cand.2].iter().any(|x| *x < 0 || *x > m as i64) {
                    continue;
                }
                improved |= try_profile((cand.0 as u32, cand.1 as u32, cand.2 as u32), &mut best);
            }
            if !improved {
                break;
            }
        }
        let (sol, prof) = best.unwrap();
        let hit = prof.0 == m || prof.1 == m || prof.2 == m;
        (sol, prof, hit)
    }

    /// Certified bounds on d((z₁,w₁),(z₂,w₂)).
    pub fn distance_bounds(&self, p: &ModelPoint, q: &ModelPoint) -> DistanceBounds {
        let dw: Vec<f64> = q.fiber.iter().zip(&p.fiber).map(|(a, b)| q_to_f64(&(*a - b))).collect();
        self.distance_bounds_f64(&p.tree, &q.tree, &dw)
    }

    pub fn distance_bounds_f64(&self, p: &TreePoint, q: &TreePoint, dw: &[f64]) -> DistanceBounds {
        let (dtree, low) = self.tree_geodesic(p, q);
        let (h1, h2) = (p.height(), q.height());
        let (sol, profile, budget_hit, k) = self.best_profile(h1, h2, low, dw);
        let upper = sol.length.max(dtree);
        let kf = k as f64;
        let dw_k = self.shift_fiber(dw, k);
        let lower = self
            .lower_bound(h1 + kf, h2 + kf, low + kf, dtree, &dw_k, upper, &sol.lambda)
            .min(upper);
        DistanceBounds { lower, upper, tree_distance: dtree, budget_hit, profile }
    }

    /// An upper bound for y B_h⁻¹ yᵀ: exact at integers, and between them
    /// B_h⁻¹ ⪯ (1 − t)B_j⁻¹ + t B_{j+1}⁻¹ by operator convexity of inversion.
    fn dual_at(&self, h: f64, ys: &[Vec<f64>]) -> Vec<f64> {
        let h = snap(h);
        let j = h.floor() as i64;
        let t = h - j as f64;
        let lo = &self.dual_forms[self.index(j)];
        if t == 0.0 {
            return ys.iter().map(|y| quad(lo, y)).collect();
        }
        let hi = &self.dual_forms[self.index(j + 1)];
        ys.iter().map(|y| (1.0 - t) * quad(lo, y) + t * quad(hi, y)).collect()
    }

    /// The same bound as a matrix, used when a form is too ill-conditioned
    /// to invert.
    fn dual_matrix(&self, h: f64) -> DMatrix<f64> {
        let h = snap(h);
        let j = h.floor() as i64;
        let t = h - j as f64;
        if t == 0.0 {
            self.dual_forms[self.index(j)].clone()
        } else {
            &self.dual_forms[self.index(j)] * (1.0 - t) + &self.dual_forms[self.index(j + 1)] * t
        }
    }

    /// Bin paths by their lowest height a and highest height b on a quarter
    /// grid. Every path of length ≤ U falls into a bin with a ≥ max(h₁,h₂) − U
    /// and b ≤ min(h₁,h₂) + U. In a bin the height travel is at least
    /// 2(b − a) − |h₁ − h₂|, and for any functional y,
    /// |y·Δw| ≤ ∫ ‖y‖*_h √Q_h(ẇ) ≤ K_y ∫ √Q_h(ẇ) with K_y² the largest value of
    /// y B_h⁻¹ yᵀ over the bin's heights. Matrix inversion is operator convex,
    /// so that maximum sits at a bin end or an integer height. Minkowski's
    /// inequality then bounds the length below by √(T² + (y·Δw / K_y)²).
    fn lower_bound(&self, h1: f64, h2: f64, low: f64, dtree: f64, dw: &[f64], upper: f64, hint: &[f64]) -> f64 {
        if dw.iter().all(|x| *x == 0.0) {
            return dtree;
        }
        let (hmin, hmax) = (h1.min(h2), h1.max(h2));
        let a_end = hmax - upper;
        let b_end = hmin + upper;
        if a_end < -(HEIGHT_RANGE as f64) + 1.0 || b_end > HEIGHT_RANGE as f64 - 1.0 {
            return dtree;
        }
        let n = self.n;
        let mut ys: Vec<Vec<f64>> = vec![dw.to_vec()];
        if n > 1 {
            ys.push(hint.to_vec());
            ys.extend((0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()));
            let (lo, hi) = (a_end.floor() as i64, b_end.ceil() as i64);
            let stride = ((hi - lo) / 12).max(1) as usize;
            for j in (lo..=hi).step_by(stride) {
                let b = &self.forms[self.index(j)];
                ys.push((0..n).map(|c| (0..n).map(|r| dw[r] * b[(r, c)]).sum()).collect());
            }
        }
        let pair: Vec<f64> = ys.iter().map(|y| y.iter().zip(dw).map(|(a, b)| a * b).sum::<f64>().abs()).collect();
        let max_into = |acc: &mut Vec<f64>, v: Vec<f64>| {
            for (a, b) in acc.iter_mut().zip(v) {
                *a = a.max(b);
            }
        };

        // heights between low and hmax are always visited
        let mut mid = self.dual_at(low, &ys);
        max_into(&mut mid, self.dual_at(hmax, &ys));
        let mut j = low.floor() as i64 + 1;
        while (j as f64) < hmax {
            max_into(&mut mid, self.dual_at(j as f64, &ys));
            j += 1;
        }

        let step = 0.25;
        // cumulative maxima going down from low and up from hmax
        let grid = |start: f64, end: f64, dir: f64| -> Vec<f64> {
            let mut g = vec![start];
            while (g.last().unwrap() - end) * dir < 0.0 {
                g.push(start + dir * step * g.len() as f64);
            }
            g.push(start + dir * step * g.len() as f64);
            g
        };
        let alphas = grid(low, a_end, -1.0);
        let betas = grid(hmax, b_end, 1.0);
        let cumulative = |pts: &[f64], base: Vec<f64>| -> Vec<Vec<f64>> {
            let mut out = Vec::with_capacity(pts.len());
            let mut acc = base;
            let mut prev = pts[0];
            for (k, &h) in pts.iter().enumerate() {
                if k > 0 {
                    let (lo, hi) = (prev.min(h), prev.max(h));
                    let mut j = lo.floor() as i64 + 1;
                    while (j as f64) < hi {
                        max_into(&mut acc, self.dual_at(j as f64, &ys));
                        j += 1;
                    }
                    max_into(&mut acc, self.dual_at(h, &ys));
                }
                prev = h;
                out.push(acc.clone());
            }
            out
        };
        let down = cumulative(&alphas, mid.clone());
        let up = cumulative(&betas, vec![0.0; ys.len()]);

        let spread = (h1 - h2).abs();
        let mut best = upper;
        for i in 0..alphas.len() - 1 {
            for j in 0..betas.len() - 1 {
                let travel = (2.0 * (betas[j] - alphas[i]) - spread).max(dtree);
                if travel >= best {
                    break;
                }
                let mut fiber: f64 = 0.0;
                for k in 0..ys.len() {
                    let k2 = down[i + 1][k].max(up[j + 1][k]);
                    if k2 > 0.0 && k2.is_finite() {
                        fiber = fiber.max(pair[k] / k2.sqrt());
                    }
                }
                best = best.min((travel * travel + fiber * fiber).sqrt());
            }
        }
        best.max(dtree)
    }

    /// The polyline realizing the upper bound.
    pub fn realize(&self, p: &ModelPoint, q: &ModelPoint) -> PathPolyline {
        let dw: Vec<f64> = q.fiber.iter().zip(&p.fiber).map(|(a, b)| q_to_f64(&(*a - b))).collect();
        let (_, low) = self.tree_geodesic(&p.tree, &q.tree);
        let (sol, prof, _, k) = self.best_profile(p.tree.height(), q.tree.height(), low, &dw);
        let kf = k as f64;
        let top1 = self.point_above(&p.tree, prof.0 as f64);
        let top2 = self.point_above(&q.tree, prof.1 as f64);
        let mut tree = vec![p.tree.clone()];
        let mut fiber = vec![p.fiber_f64()];
        for (s, x) in sol.segments.iter().zip(&sol.steps) {
            let top = if s.leg < 2 { &top1 } else { &top2 };
            tree.push(self.point_below(top, s.hb - kf));
            let x = self.shift_fiber(x, -k);
            let last = fiber.last().unwrap();
            fiber.push(last.iter().zip(&x).map(|(a, b)| a + b).collect());
        }
        if sol.segments.len() == 1 && sol.segments[0].ha == sol.segments[0].hb {
            tree[1] = q.tree.clone();
        }
        PathPolyline { tree, fiber }
    }

    pub fn act_path(&self, g: &GammaElement, path: &PathPolyline) -> PathPolyline {
        let f = self.field();
        let ak = f.power(g.k);
        let b: Vec<f64> = f.xf_coords(&g.b).iter().map(q_to_f64).collect();
        let n = self.n;
        PathPolyline {
            tree: path
                .tree
                .iter()
                .map(|p| TreePoint { vertex: self.tree.act_vertex(g, &p.vertex), t: p.t })
                .collect(),
            fiber: path
                .fiber
                .iter()
                .map(|w| {
                    (0..n)
                        .map(|j| b[j] + (0..n).map(|i| w[i] * q_to_f64(&ak[i][j])).sum::<f64>())
                        .collect()
                })
                .collect(),
        }
    }
}

// ---------- probes ----------

#[derive(Clone, Debug, Serialize)]
pub struct VanishingReport {
    /// Smallest N with D_n < ε for every sampled n in (N, n_max].
    pub threshold: u32,
    pub values: Vec<f64>,
    /// D_{2n} ≤ D_n + tolerance whenever both were sampled.
    pub halving_monotone: bool,
}

fn scale_fiber(w: &[Q], n: u32) -> Vec<Q> {
    w.iter().map(|x| *x / Q::from_integer(n as i128)).collect()
}

/// D_n = upper bound of d((z₀, w₁/n), (z₀, w₂/n)) for n = 1..=n_max.
pub fn probe_vl(
    metric: &Metric,
    z0: &TreePoint,
    w1: &[Q],
    w2: &[Q],
    eps: f64,
    n_max: u32,
) -> Result<VanishingReport, GeometryError> {
    let values: Vec<f64> = (1..=n_max)
        .map(|n| {
            let p = ModelPoint::new(z0.clone(), scale_fiber(w1, n));
            let q = ModelPoint::new(z0.clone(), scale_fiber(w2, n));
            metric.distance_bounds(&p, &q).upper
        })
        .collect();
    let last = *values.last().unwrap_or(&f64::INFINITY);
    if last >= eps {
        return Err(GeometryError::NotAchieved { n_max, last });
    }
    let threshold = values.iter().rposition(|v| *v >= eps).map_or(0, |i| i as u32 + 1);
    let halving_monotone = (1..=n_max / 2).all(|n| values[(2 * n - 1) as usize] <= values[(n - 1) as usize] + 1e-9);
    Ok(VanishingReport { threshold, values, halving_monotone })
}

#[derive(Clone, Debug, Serialize)]
pub struct ControlReport {
    pub beta: f64,
    pub beta_doubled: f64,
    pub stable: bool,
    pub samples_used: usize,
}

/// Compass search: try ±step along each coordinate, keep improvements,
/// halve the step when none helps. Returns the smallest value seen.
fn compass_min(mut x: Vec<f64>, mut step: f64, min_step: f64, max_evals: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut best = f(&x);
    let mut evals = 1;
    while step >= min_step && evals < max_evals {
        let mut moved = false;
        for i in 0..x.len() {
            for delta in [step, -step] {
                let mut y = x.clone();
                y[i] += delta;
                let v = f(&y);
                evals += 1;
                if v < best {
                    best = v;
                    x = y;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    best
}

/// (unit direction, t clamped to the base edge) from search coordinates
fn split_params(x: &[f64]) -> Option<(Vec<f64>, f64)> {
    let (dir, t) = x.split_at(x.len() - 1);
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm > 1e-9).then(|| (dir.iter().map(|v| v / norm).collect(), t[0].clamp(0.0, 1.0)))
}

fn random_params<R: Rng>(n: usize, rng: &mut R, t_steps: u32) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    x.push(rng.gen_range(0..t_steps) as f64 / t_steps as f64);
    x
}

/// Best value over a sample, then sharpened by compass search from the
/// best sampled point. Smaller is better.
fn sampled_then_refined(values: &[(f64, Vec<f64>)], f: impl FnMut(&[f64]) -> f64) -> Option<f64> {
    let (v, x) = values.iter().filter(|(v, _)| v.is_finite()).min_by(|a, b| a.0.total_cmp(&b.0))?;
    Some(compass_min(x.clone(), 0.125, 1.0 / 512.0, 150, f).min(*v))
}

/// Worst ratio over every quarter-step depth in [0, T] for fiber offset
/// `scale`·dir at z₁ = (base, t). None when the denominator leaves (0, 1].
fn control_ratio(metric: &Metric, depth: u32, scale: f64, x: &[f64]) -> Option<f64> {
    let (dir, t) = split_params(x)?;
    let z1 = TreePoint { vertex: metric.tree().base(), t };
    let w: Vec<f64> = dir.iter().map(|v| v * scale).collect();
    let r = metric.distance_bounds_f64(&z1, &z1, &w).upper;
    if r == 0.0 || r > 1.0 {
        return None;
    }
    (0..=4 * depth)
        .map(|q| {
            let z = metric.point_below(&z1, z1.height() - q as f64 / 4.0);
            metric.distance_bounds_f64(&z, &z, &w).upper / r
        })
        .reduce(f64::max)
}

/// Ratio d((z,w),(z,0)) / d((z₁,w),(z₁,0)) for z₁ on the base edge and z up to
/// `depth` below it, with the denominator at most 1. Both distances are upper
/// bounds. The ratio peaks as the fiber shrinks, so samples use |w| ∈ {1/64,
/// 1/8, 1}; the largest sampled ratio is then pushed further by compass search
/// over (direction, t). The doubled sample extends the first.
pub fn probe_control<R: Rng>(
    metric: &Metric,
    depth: u32,
    samples: usize,
    rng: &mut R,
) -> Result<ControlReport, GeometryError> {
    let n = metric.dim();
    const SCALES: [f64; 3] = [1.0 / 64.0, 1.0 / 8.0, 1.0];
    let sampled: Vec<(f64, Vec<f64>)> = (0..2 * samples)
        .map(|_| {
            let x = random_params(n, rng, 8);
            let best = SCALES
                .iter()
                .filter_map(|s| control_ratio(metric, depth, *s, &x))
                .fold(f64::NEG_INFINITY, f64::max);
            (-best, x)
        })
        .collect();
    let used = sampled.iter().filter(|(v, _)| v.is_finite()).count();
    let refine = |xs: &[(f64, Vec<f64>)]| {
        sampled_then_refined(xs, |x| -control_ratio(metric, depth, SCALES[0], x).unwrap_or(f64::NEG_INFINITY))
    };
    let (Some(beta), Some(beta_all)) = (refine(&sampled[..samples]), refine(&sampled)) else {
        return Err(GeometryError::DegenerateSample);
    };
    let beta = (-beta).max(1.0);
    let beta_doubled = beta.max(-beta_all);
    Ok(ControlReport { beta, beta_doubled, stable: beta_doubled / beta < 1.05, samples_used: used })
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparationReport {
    pub eps0: f64,
    pub min_lower: f64,
    pub min_lower_doubled: f64,
    pub stable: bool,
}

/// Smallest certified lower bound of d((z,w₀),(z,w₁)) over z on the base edge
/// and ‖w₀ − w₁‖ ∈ [ε₀, 2ε₀]. The smallest sampled value is pushed further by
/// compass search over (direction, t) at ‖w₀ − w₁‖ = ε₀, and compared with a
/// sample twice as large that extends the first.
pub fn probe_rads<R: Rng>(metric: &Metric, eps0: f64, samples: usize, rng: &mut R) -> SeparationReport {
    let n = metric.dim();
    let tree = metric.tree();
    let lower = |x: &[f64], len: f64| match split_params(x) {
        Some((dir, t)) => {
            let z = TreePoint { vertex: tree.base(), t };
            let dw: Vec<f64> = dir.iter().map(|v| v * len).collect();
            metric.distance_bounds_f64(&z, &z, &dw).lower
        }
        None => f64::INFINITY,
    };
    let sampled: Vec<(f64, Vec<f64>)> = (0..2 * samples)
        .map(|_| {
            let x = random_params(n, rng, 16);
            let len = eps0 * (1.0 + rng.gen_range(0.0..1.0));
            (lower(&x, len), x)
        })
        .collect();
    let refine = |xs: &[(f64, Vec<f64>)]| sampled_then_refined(xs, |x| lower(x, eps0)).unwrap_or(f64::INFINITY);
    let min_lower = refine(&sampled[..samples]);
    let min_lower_doubled = min_lower.min(refine(&sampled));
    SeparationReport {
        eps0,
        min_lower,
        min_lower_doubled,
        stable: min_lower_doubled > 0.0 && min_lower / min_lower_doubled < 1.05,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HalfFactorReport {
    pub samples: usize,
    /// min of upper(p, q) − ½·lower((z₁,w₁),(z₁,w₂)); never negative if the inequality holds
    pub worst_margin: f64,
    pub pass: bool,
}

/// d((z₁,w₁),(z₁,w₂)) ≤ d(p, q) + d_T(z₁,z₂) ≤ 2·d(p, q) for p = (z₁,w₁),
/// q = (z₂,w₂), checked with the certified bounds on the correct sides.
pub fn probe_half_factor<R: Rng>(metric: &Metric, samples: usize, radius: u32, rng: &mut R) -> HalfFactorReport {
    let tree = metric.tree();
    let ball = tree.ball(&tree.base(), radius);
    let n = metric.dim();
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let z1 = TreePoint::at(ball[rng.gen_range(0..ball.len())].clone());
        let z2 = TreePoint::at(ball[rng.gen_range(0..ball.len())].clone());
        let w1 = sampling::rational_vector(n, rng, 16, 4);
        let w2 = sampling::rational_vector(n, rng, 16, 4);
        let pq = metric.distance_bounds(&ModelPoint::new(z1.clone(), w1.clone()), &ModelPoint::new(z2, w2.clone()));
        let vertical = metric.distance_bounds(&ModelPoint::new(z1.clone(), w1), &ModelPoint::new(z1, w2));
        worst = worst.min(pq.upper - 0.5 * vertical.lower);
    }
    HalfFactorReport { samples, worst_margin: worst, pass: worst >= -1e-9 }
}

/// A rational in [0,1) as f64, for tree-point parameters given exactly.
pub fn fraction(num: i64, den: i64) -> f64 {
    Q::new(num as i128, den as i128).to_f64().unwrap_or(0.0)
}
