//! Horizontal generalized geodesics in T_d × ℝⁿ, the weighted integral metric
//! d(c, c′) = ∫ d_X(c(t), c′(t)) e^{−|t|}/2 dt, the time-shift flow, and the
//! periodic-point count of w ↦ w·A^m on the torus.

use gauss_quad::GaussLegendre;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{DistanceBounds, Metric, ModelPoint, TreePoint};
use crate::linalg::{self, snf_diagonal, Q};
use crate::numberfield::{FieldDescriptor, GammaElement, XFraction};
use crate::tree::DTree;
use crate::par::{self, Exec};
use crate::sampling;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("parameters violate c- <= c+, c- != +inf, c+ != -inf")]
    BadParameters,
    #[error("A^{0} - I is singular")]
    SingularMatrix(u32),
    #[error("count overflows i128 at m = {0}")]
    Overflow(u32),
    #[error("bounds are not finite, so the comparison is inconclusive")]
    Inconclusive,
    #[error("no threshold reached up to n = {n_max} (last upper bound {last})")]
    NotAchieved { n_max: u32, last: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum GeodesicKind {
    /// Stays at the anchor.
    Constant,
    /// Sits at the anchor until c₋, then runs toward the end e_x until c₊.
    Ray,
    /// The line of vertices (n, [b]) traversed with height −s at time s.
    Line { through: XFraction },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HorizontalGeodesic {
    pub kind: GeodesicKind,
    pub anchor: TreePoint,
    pub offset: f64,
    pub c_minus: f64,
    pub c_plus: f64,
    pub fiber: Vec<Q>,
}

impl HorizontalGeodesic {
    pub fn constant(anchor: TreePoint, fiber: Vec<Q>) -> Self {
        Self {
            kind: GeodesicKind::Constant,
            anchor,
            offset: 0.0,
            c_minus: f64::NEG_INFINITY,
            c_plus: f64::NEG_INFINITY,
            fiber,
        }
    }

    pub fn ray(anchor: TreePoint, c_minus: f64, c_plus: f64, fiber: Vec<Q>) -> Result<Self, FlowError> {
        if !(c_minus <= c_plus) || c_minus == f64::INFINITY || c_plus == f64::NEG_INFINITY {
            return Err(FlowError::BadParameters);
        }
        Ok(Self { kind: GeodesicKind::Ray, anchor, offset: 0.0, c_minus, c_plus, fiber })
    }

    pub fn line(tree: &DTree, through: XFraction, fiber: Vec<Q>) -> Self {
        let anchor = TreePoint::at(tree.vertex(0, &through));
        Self {
            kind: GeodesicKind::Line { through },
            anchor,
            offset: 0.0,
            c_minus: f64::NEG_INFINITY,
            c_plus: f64::INFINITY,
            fiber,
        }
    }

    /// Times where the motion starts or stops.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            GeodesicKind::Ray => [self.c_minus, self.c_plus]
                .into_iter()
                .filter(|c| c.is_finite())
                .map(|c| c - self.offset)
                .collect(),
            _ => vec![],
        }
    }

    /// Constant on [a, b].
    pub fn constant_on(&self, a: f64, b: f64) -> bool {
        match self.kind {
            GeodesicKind::Constant => true,
            GeodesicKind::Ray => {
                let (a, b) = (a + self.offset, b + self.offset);
                b <= self.c_minus || a >= self.c_plus
            }
            GeodesicKind::Line { .. } => false,
        }
    }
}

/// Ψ(z, w): constant at (z, w) for t ≤ 0, then toward e_x at unit speed.
pub fn psi(z: TreePoint, w: Vec<Q>) -> HorizontalGeodesic {
    HorizontalGeodesic::ray(z, 0.0, f64::INFINITY, w).expect("valid parameters")
}

/// Φ_τ(c)(t) = c(t + τ).
pub fn flow(c: &HorizontalGeodesic, tau: f64) -> HorizontalGeodesic {
    let mut out = c.clone();
    out.offset += tau;
    out
}

pub fn eval(metric: &Metric, c: &HorizontalGeodesic, t: f64) -> ModelPoint {
    let s = t + c.offset;
    let tree = match &c.kind {
        GeodesicKind::Constant => c.anchor.clone(),
        GeodesicKind::Ray => {
            if s <= c.c_minus {
                c.anchor.clone()
            } else {
                let run = s.min(c.c_plus) - c.c_minus;
                metric.point_below(&c.anchor, c.anchor.height() - run)
            }
        }
        GeodesicKind::Line { through } => {
            let h = -s;
            let n = h.ceil() as i64;
            let vertex = metric.tree().vertex(n, through);
            TreePoint { vertex, t: n as f64 - h }
        }
    };
    ModelPoint::new(tree, c.fiber.clone())
}

pub fn act(metric: &Metric, g: &GammaElement, c: &HorizontalGeodesic) -> HorizontalGeodesic {
    let f = metric.field();
    let fiber = f.affine_action(g, &c.fiber).expect("fiber has the field dimension");
    let anchor = TreePoint { vertex: metric.tree().act_vertex(g, &c.anchor.vertex), t: c.anchor.t };
    let mut out = HorizontalGeodesic { anchor, fiber, ..c.clone() };
    if let GeodesicKind::Line { through } = &c.kind {
        out.kind = GeodesicKind::Line { through: f.xf_add(&f.xf_mul_x_pow(through, g.k), &g.b) };
        out.offset -= g.k as f64;
    }
    out
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub coarse_nodes: usize,
    pub fine_nodes: usize,
    pub t_max: f64,
    /// Panel width for |t| ≤ 4; it doubles beyond.
    pub panel: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { coarse_nodes: 3, fine_nodes: 6, t_max: 12.0, panel: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FsDistance {
    pub value: f64,
    pub error: f64,
    pub lower: f64,
    pub upper: f64,
    /// coarse/fine disagreement; an estimate, not a rigorous bound
    pub quadrature: f64,
    pub tail: f64,
}

/// ∫_a^b e^{−|t|}/2 dt.
pub fn weight_integral(a: f64, b: f64) -> f64 {
    let prim = |t: f64| if t <= 0.0 { 0.5 * t.exp() } else { 1.0 - 0.5 * (-t).exp() };
    prim(b) - prim(a)
}

fn weight(t: f64) -> f64 {
    0.5 * (-t.abs()).exp()
}

fn bounds_at(metric: &Metric, c1: &HorizontalGeodesic, c2: &HorizontalGeodesic, t: f64) -> DistanceBounds {
    metric.distance_bounds(&eval(metric, c1, t), &eval(metric, c2, t))
}

/// Interval estimate of the flow-space distance. The integrand is bracketed
/// by the distance sandwich; pieces on which both geodesics stand still use
/// the exact weight integral; the rest use composite Gauss–Legendre with a
/// coarse/fine comparison. The tail beyond ±T uses d_X(t) ≤ d_X(T) + 2(|t| − T).
pub fn fs_distance(
    metric: &Metric,
    c1: &HorizontalGeodesic,
    c2: &HorizontalGeodesic,
    spec: &QuadratureSpec,
) -> FsDistance {
    let t_max = spec.t_max;
    let fine = GaussLegendre::new(spec.fine_nodes.max(2)).expect("at least two nodes");
    let coarse = GaussLegendre::new(spec.coarse_nodes.max(2)).expect("at least two nodes");
    let mut cuts = vec![-t_max, 0.0, t_max];
    cuts.extend(c1.breakpoints().into_iter().chain(c2.breakpoints()).filter(|t| t.abs() < t_max));
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let (mut lo, mut hi, mut quad_err) = (0.0, 0.0, 0.0);
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if c1.constant_on(a, b) && c2.constant_on(a, b) {
            let d = bounds_at(metric, c1, c2, 0.5 * (a + b));
            let wt = weight_integral(a, b);
            lo += d.lower * wt;
            hi += d.upper * wt;
            continue;
        }
        for (pa, pb) in panels(a, b, spec.panel) {
            let mut lows = Vec::with_capacity(spec.fine_nodes);
            let fine_hi = fine.integrate(pa, pb, |t| {
                let d = bounds_at(metric, c1, c2, t);
                lows.push(d.lower);
                d.upper * weight(t)
            });
            let mut replay = lows.into_iter();
            let fine_lo = fine.integrate(pa, pb, |t| replay.next().unwrap() * weight(t));
            let coarse_hi = coarse.integrate(pa, pb, |t| bounds_at(metric, c1, c2, t).upper * weight(t));
            lo += fine_lo;
            hi += fine_hi;
            quad_err += (fine_hi - coarse_hi).abs();
        }
    }
    let tail: f64 = [-t_max, t_max]
        .iter()
        .map(|&t| (bounds_at(metric, c1, c2, t).upper + 2.0) * (-t_max).exp() * 0.5)
        .sum();
    let lower = (lo - quad_err).max(0.0);
    let upper = hi + quad_err + tail;
    FsDistance {
        value: 0.5 * (lower + upper),
        error: 0.5 * (upper - lower),
        lower,
        upper,
        quadrature: quad_err,
        tail,
    }
}

fn panels(a: f64, b: f64, width: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut x = a;
    while x < b - 1e-12 {
        let w = if x.abs() < 4.0 && x + width <= 4.0 + 1e-12 && x + width >= -4.0 - 1e-12 {
            width
        } else {
            2.0 * width
        };
        let y = (x + w).min(b);
        out.push((x, y));
        x = y;
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzReport {
    pub tau: f64,
    pub base: FsDistance,
    pub flowed: FsDistance,
    /// e^{−|τ|}·d ≤ d_τ with the error bars in its favour
    pub lower_ok: bool,
    /// d_τ ≤ e^{|τ|}·d with the error bars in its favour
    pub upper_ok: bool,
}

impl LipschitzReport {
    pub fn pass(&self) -> bool {
        self.lower_ok && self.upper_ok
    }
}

pub fn lipschitz_check(
    metric: &Metric,
    c1: &HorizontalGeodesic,
    c2: &HorizontalGeodesic,
    tau: f64,
    spec: &QuadratureSpec,
) -> Result<LipschitzReport, FlowError> {
    let base = fs_distance(metric, c1, c2, spec);
    let flowed = fs_distance(metric, &flow(c1, tau), &flow(c2, tau), spec);
    if !base.upper.is_finite() || !flowed.upper.is_finite() {
        return Err(FlowError::Inconclusive);
    }
    let k = tau.abs().exp();
    let slack = 1e-12;
    Ok(LipschitzReport {
        tau,
        lower_ok: base.lower / k <= flowed.upper + slack,
        upper_ok: flowed.lower <= k * base.upper + slack,
        base,
        flowed,
    })
}

/// A random geodesic of one of the three kinds, anchored in a small ball.
pub fn random_geodesic<R: Rng>(metric: &Metric, rng: &mut R) -> HorizontalGeodesic {
    let f = metric.field();
    let n = f.degree();
    let g = sampling::gamma_element(f, rng, 3, 1, 2);
    let anchor = TreePoint {
        vertex: metric.tree().act_vertex(&g, &metric.tree().base()),
        t: rng.gen_range(0..4) as f64 / 4.0,
    };
    let fiber = sampling::rational_vector(n, rng, 8, 4);
    let mut c = match rng.gen_range(0..3) {
        0 => HorizontalGeodesic::constant(anchor, fiber),
        1 => {
            let cm = rng.gen_range(-8..=8) as f64 / 4.0;
            let cp = if rng.gen_bool(0.5) { f64::INFINITY } else { cm + rng.gen_range(0..=16) as f64 / 4.0 };
            HorizontalGeodesic::ray(anchor, cm, cp, fiber).expect("valid parameters")
        }
        _ => HorizontalGeodesic::line(metric.tree(), g.b.clone(), fiber),
    };
    c.offset = rng.gen_range(-4..=4) as f64 / 4.0;
    c
}

// ---------- periodic points ----------

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PeriodicCount {
    pub m: u32,
    pub lattice_solutions: i128,
    pub total: i128,
}

/// Fixed points of w ↦ w·A^m on ℝⁿ/ℤⁿ number |det(A^m − I)|, read off the
/// Smith normal form; the total multiplies by d^m.
pub fn periodic_count(field: &FieldDescriptor, m: u32) -> Result<PeriodicCount, FlowError> {
    let mut a = field.int_power(m);
    for (i, row) in a.iter_mut().enumerate() {
        row[i] -= 1;
    }
    let diag = snf_diagonal(&a);
    if diag.len() < field.degree() || diag.iter().any(|x| *x == 0) {
        return Err(FlowError::SingularMatrix(m));
    }
    let lattice_solutions = diag
        .iter()
        .try_fold(1i128, |acc, x| acc.checked_mul(x.abs()))
        .ok_or(FlowError::Overflow(m))?;
    let total = field
        .d()
        .checked_pow(m)
        .and_then(|dm| dm.checked_mul(lattice_solutions))
        .ok_or(FlowError::Overflow(m))?;
    Ok(PeriodicCount { m, lattice_solutions, total })
}

/// Count v ∈ {0..q−1}ⁿ with v·(A^m − I) ≡ 0 mod q, i.e. fixed points on the
/// 1/q grid.
pub fn grid_fixed_points(field: &FieldDescriptor, m: u32, q: i128) -> u64 {
    let n = field.degree();
    let mut a = field.int_power(m);
    for (i, row) in a.iter_mut().enumerate() {
        row[i] -= 1;
    }
    let a: Vec<Vec<i128>> = a.iter().map(|r| r.iter().map(|x| x.rem_euclid(q)).collect()).collect();
    let mut count = 0u64;
    let mut v = vec![0i128; n];
    loop {
        if linalg::vec_mat(&v, &a).iter().all(|x| x % q == 0) {
            count += 1;
        }
        let mut i = 0;
        loop {
            if i == n {
                return count;
            }
            v[i] += 1;
            if v[i] < q {
                break;
            }
            v[i] = 0;
            i += 1;
        }
    }
}

// ---------- contraction of Ψ-images ----------

#[derive(Clone, Debug, Serialize)]
pub struct LparReport {
    pub eps: f64,
    /// First integer above ln(4/ε).
    pub flow_time: u32,
    pub sampled: Vec<u32>,
    /// Smallest sampled N̄ with the flow-space upper bound ≤ ε for all sampled n > N̄.
    pub threshold: u32,
    /// Smallest sampled N with d_X(P_n, Q_n) < ε/4 for all sampled n > N.
    pub model_threshold: u32,
    pub values: Vec<f64>,
    pub model_values: Vec<f64>,
    /// value at 2n ≤ value at n whenever both were sampled
    pub halving_monotone: bool,
}

/// 1, 2, 3, 4, 6, 8, 12, … up to n_max, always ending at n_max.
pub fn sample_scales(n_max: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut p = 1u32;
    while p <= n_max {
        out.push(p);
        if p >= 2 && p + p / 2 <= n_max {
            out.push(p + p / 2);
        }
        p = p.saturating_mul(2);
    }
    if out.last() != Some(&n_max) && n_max > 0 {
        out.push(n_max);
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Ψ(P_n) and Ψ(Q_n) for P_n = (z₀, w₁/n), Q_n = (z₀, w₂/n), over sampled n.
pub fn lpar_probe(
    metric: &Metric,
    z0: &TreePoint,
    w1: &[Q],
    w2: &[Q],
    eps: f64,
    n_max: u32,
    spec: &QuadratureSpec,
    exec: Exec,
) -> Result<LparReport, FlowError> {
    let scaled = |w: &[Q], n: u32| -> Vec<Q> { w.iter().map(|x| *x / Q::from_integer(n as i128)).collect() };
    let sampled = sample_scales(n_max);
    let pairs: Vec<(f64, f64)> = par::map(exec, &sampled, |&n| {
        let (a, b) = (scaled(w1, n), scaled(w2, n));
        let p = ModelPoint::new(z0.clone(), a.clone());
        let q = ModelPoint::new(z0.clone(), b.clone());
        let model = metric.distance_bounds(&p, &q).upper;
        let fs = fs_distance(metric, &psi(z0.clone(), a), &psi(z0.clone(), b), spec).upper;
        (fs, model)
    });
    let (values, model_values): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let last = *values.last().unwrap_or(&f64::INFINITY);
    if last > eps || *model_values.last().unwrap_or(&f64::INFINITY) >= eps / 4.0 {
        return Err(FlowError::NotAchieved { n_max, last });
    }
    let threshold = values.iter().rposition(|v| *v > eps).map_or(0, |i| sampled[i]);
    let model_threshold = model_values.iter().rposition(|v| *v >= eps / 4.0).map_or(0, |i| sampled[i]);
    let at = |n: u32| sampled.iter().position(|m| *m == n);
    let halving_monotone = sampled
        .iter()
        .filter_map(|&n| Some((at(n)?, at(2 * n)?)))
        .all(|(i, j)| values[j] <= values[i] + 1e-9);
    Ok(LparReport {
        eps,
        flow_time: ((4.0 / eps).ln().floor() as u32) + 1,
        sampled,
        threshold,
        model_threshold,
        values,
        model_values,
        halving_monotone,
    })
}
