//! Parametric loss families and the constants the certificates need.
//!
//! Point conventions per kind:
//! - `least_squares`: all coordinates continuous, the last one is the target
//!   `y`; `theta` has length `continuous_dim − 1`; labels are ignored.
//! - `logistic` / `hinge`: continuous coordinates are the features `x`; the
//!   space must carry exactly one label axis with alphabet size 1 or 2,
//!   mapped to `y = −1` (label 0) or `y = +1` (label 1).
//! - `kmeans`: `theta` concatenates `K` cluster centers of length
//!   `continuous_dim`; the space must carry no label axes.
//! - `tabulated`: one value table per member over the grid of the owning
//!   space; off-grid points are evaluated by multilinear interpolation on
//!   the continuous axes (labels matched exactly), so every member is
//!   continuous on the whole space.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::space::{SamplePoint, SampleSpace};
use crate::space::TransportCost;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    LeastSquares,
    Logistic,
    Hinge,
    KMeans,
    Tabulated,
}

/// How a reported constant was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSource {
    ClosedForm,
    GridEstimated,
}

/// `‖F‖∞`, Lipschitz constants and the Dudley entropy of a family.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyConstants<R> {
    pub sup_norm: R,
    pub lip_xi: R,
    pub lip_theta: R,
    pub dudley: R,
    pub source: ConstantSource,
}

/// Parametric family `F = { f(θ,·) : θ ∈ Θ }` over a fixed sample space.
#[derive(Debug, Clone)]
pub struct LossFamily<R> {
    kind: LossKind,
    theta_box: Vec<(R, R)>,
    theta_grid_resolution: usize,
    kmeans_clusters: usize,
    tables: Vec<Vec<R>>,
    space: SampleSpace<R>,
}

impl<R: Real> LossFamily<R> {
    pub fn least_squares(
        theta_box: Vec<(R, R)>,
        theta_grid_resolution: usize,
        space: &SampleSpace<R>,
    ) -> Result<Self> {
        if space.continuous_dim() < 2 {
            return Err(Error::InvalidParameter(
                "least_squares needs at least two continuous coordinates (features plus target)"
                    .into(),
            ));
        }
        if theta_box.len() != space.continuous_dim() - 1 {
            return Err(Error::InvalidParameter(format!(
                "least_squares theta dimension {} must equal continuous_dim - 1 = {}",
                theta_box.len(),
                space.continuous_dim() - 1
            )));
        }
        Self::build(
            LossKind::LeastSquares,
            theta_box,
            theta_grid_resolution,
            0,
            Vec::new(),
            space,
        )
    }

    pub fn logistic(
        theta_box: Vec<(R, R)>,
        theta_grid_resolution: usize,
        space: &SampleSpace<R>,
    ) -> Result<Self> {
        Self::binary_label_family(LossKind::Logistic, theta_box, theta_grid_resolution, space)
    }

    pub fn hinge(
        theta_box: Vec<(R, R)>,
        theta_grid_resolution: usize,
        space: &SampleSpace<R>,
    ) -> Result<Self> {
        Self::binary_label_family(LossKind::Hinge, theta_box, theta_grid_resolution, space)
    }

    fn binary_label_family(
        kind: LossKind,
        theta_box: Vec<(R, R)>,
        theta_grid_resolution: usize,
        space: &SampleSpace<R>,
    ) -> Result<Self> {
        if space.label_dim() != 1 || space.alphabets()[0] > 2 {
            return Err(Error::InvalidParameter(format!(
                "{kind:?} needs exactly one label axis with alphabet size 1 or 2"
            )));
        }
        if theta_box.len() != space.continuous_dim() {
            return Err(Error::InvalidParameter(format!(
                "{kind:?} theta dimension {} must equal continuous_dim = {}",
                theta_box.len(),
                space.continuous_dim()
            )));
        }
        Self::build(kind, theta_box, theta_grid_resolution, 0, Vec::new(), space)
    }

    pub fn kmeans(
        theta_box: Vec<(R, R)>,
        theta_grid_resolution: usize,
        clusters: usize,
        space: &SampleSpace<R>,
    ) -> Result<Self> {
        if space.label_dim() != 0 {
            return Err(Error::InvalidParameter(
                "kmeans runs on purely continuous spaces".into(),
            ));
        }
        if clusters == 0 || theta_box.len() != clusters * space.continuous_dim() {
            return Err(Error::InvalidParameter(format!(
                "kmeans theta dimension {} must equal clusters * continuous_dim = {}",
                theta_box.len(),
                clusters * space.continuous_dim()
            )));
        }
        Self::build(
            LossKind::KMeans,
            theta_box,
            theta_grid_resolution,
            clusters,
            Vec::new(),
            space,
        )
    }

    /// One grid table per member, indexed like [`SampleSpace::grid`].
    pub fn tabulated(tables: Vec<Vec<R>>, space: &SampleSpace<R>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::Empty("tabulated family"));
        }
        let expected = space.grid_len();
        for (i, t) in tables.iter().enumerate() {
            if t.len() != expected {
                return Err(Error::TabulatedMismatch(format!(
                    "table {i} has {} entries, grid has {expected}",
                    t.len()
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::TabulatedMismatch(format!(
                    "table {i} contains a non-finite value"
                )));
            }
        }
        let n = tables.len();
        Self::build(
            LossKind::Tabulated,
            vec![(R::zero(), R::from_usize(n - 1).unwrap())],
            n,
            0,
            tables,
            space,
        )
    }

    /// Loads a tabulated family from CSV rows `(theta_index, grid_index, value)`.
    /// Every (member, grid node) pair must appear exactly once.
    pub fn tabulated_from_csv(path: &std::path::Path, space: &SampleSpace<R>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)?;
        let grid_len = space.grid_len();
        let mut rows: Vec<(usize, usize, R)> = Vec::new();
        let mut max_theta = 0usize;
        for record in reader.records() {
            let record = record?;
            if record.len() != 3 {
                return Err(Error::TabulatedMismatch(format!(
                    "expected 3 columns (theta_index, grid_index, value), got {}",
                    record.len()
                )));
            }
            let ti: usize = record[0].trim().parse().map_err(|_| {
                Error::TabulatedMismatch(format!("bad theta_index {:?}", &record[0]))
            })?;
            let gi: usize = record[1].trim().parse().map_err(|_| {
                Error::TabulatedMismatch(format!("bad grid_index {:?}", &record[1]))
            })?;
            let v: f64 = record[2].trim().parse().map_err(|_| {
                Error::TabulatedMismatch(format!("bad value {:?}", &record[2]))
            })?;
            if gi >= grid_len {
                return Err(Error::TabulatedMismatch(format!(
                    "grid_index {gi} out of range for grid of {grid_len} nodes"
                )));
            }
            max_theta = max_theta.max(ti);
            rows.push((ti, gi, R::of(v)));
        }
        if rows.is_empty() {
            return Err(Error::Empty("tabulated csv"));
        }
        let n_fns = max_theta + 1;
        let mut tables = vec![vec![R::nan(); grid_len]; n_fns];
        for (ti, gi, v) in rows {
            if !tables[ti][gi].is_nan() {
                return Err(Error::TabulatedMismatch(format!(
                    "duplicate entry for (theta {ti}, grid {gi})"
                )));
            }
            tables[ti][gi] = v;
        }
        for (ti, t) in tables.iter().enumerate() {
            if let Some(gi) = t.iter().position(|v| v.is_nan()) {
                return Err(Error::TabulatedMismatch(format!(
                    "missing entry for (theta {ti}, grid {gi})"
                )));
            }
        }
        Self::tabulated(tables, space)
    }

    fn build(
        kind: LossKind,
        theta_box: Vec<(R, R)>,
        theta_grid_resolution: usize,
        kmeans_clusters: usize,
        tables: Vec<Vec<R>>,
        space: &SampleSpace<R>,
    ) -> Result<Self> {
        if theta_grid_resolution < 1 {
            return Err(Error::InvalidParameter(
                "theta_grid_resolution must be >= 1".into(),
            ));
        }
        for (i, (lo, hi)) in theta_box.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || *lo > *hi {
                return Err(Error::InvalidParameter(format!(
                    "theta_box axis {i} = [{}, {}] is not a valid closed interval",
                    lo.lossy(),
                    hi.lossy()
                )));
            }
        }
        Ok(Self {
            kind,
            theta_box,
            theta_grid_resolution,
            kmeans_clusters,
            tables,
            space: space.clone(),
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn space(&self) -> &SampleSpace<R> {
        &self.space
    }

    pub fn theta_box(&self) -> &[(R, R)] {
        &self.theta_box
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_box.len()
    }

    /// Whether per-member inner maximizations may be polished by
    /// golden-section refinement (only the kinds smooth in ζ).
    pub fn refine_inner(&self) -> bool {
        matches!(self.kind, LossKind::LeastSquares | LossKind::Logistic)
    }

    /// Lexicographically ordered θ-grid (resolution 1 picks the box center).
    pub fn theta_grid(&self) -> Vec<Vec<R>> {
        if self.kind == LossKind::Tabulated {
            return (0..self.tables.len())
                .map(|i| vec![R::from_usize(i).unwrap()])
                .collect();
        }
        let res = self.theta_grid_resolution;
        let axis_values: Vec<Vec<R>> = self
            .theta_box
            .iter()
            .map(|&(lo, hi)| {
                if lo == hi {
                    vec![lo]
                } else if res == 1 {
                    vec![(lo + hi).half()]
                } else {
                    (0..res)
                        .map(|i| {
                            if i == res - 1 {
                                hi
                            } else {
                                lo + (hi - lo) * R::from_usize(i).unwrap()
                                    / R::from_usize(res - 1).unwrap()
                            }
                        })
                        .collect()
                }
            })
            .collect();
        let mut out: Vec<Vec<R>> = vec![Vec::new()];
        for values in &axis_values {
            let mut next = Vec::with_capacity(out.len() * values.len());
            for prefix in &out {
                for &v in values {
                    let mut t = prefix.clone();
                    t.push(v);
                    next.push(t);
                }
            }
            out = next;
        }
        out
    }

    fn theta_in_box(&self, theta: &[R]) -> Result<()> {
        if theta.len() != self.theta_box.len() {
            return Err(Error::DimensionMismatch {
                context: "loss evaluation",
                what: "theta",
                expected: self.theta_box.len(),
                got: theta.len(),
            });
        }
        let tol = R::of(1e-12);
        for (i, (&t, &(lo, hi))) in theta.iter().zip(self.theta_box.iter()).enumerate() {
            if t < lo - tol || t > hi + tol {
                return Err(Error::ThetaOutOfDomain(format!(
                    "theta[{i}] = {} outside [{}, {}]",
                    t.lossy(),
                    lo.lossy(),
                    hi.lossy()
                )));
            }
        }
        Ok(())
    }

    /// Evaluation without domain checks; callers must pass a θ-grid point
    /// and a point of the owning space.
    pub fn eval_unchecked(&self, theta: &[R], xi: &SamplePoint<R>) -> R {
        match self.kind {
            LossKind::LeastSquares => {
                let m = xi.continuous.len() - 1;
                let z = dot(theta, &xi.continuous[..m]) - xi.continuous[m];
                z * z
            }
            LossKind::Logistic => {
                let y = label_sign::<R>(xi.labels[0]);
                softplus(-y * dot(theta, &xi.continuous))
            }
            LossKind::Hinge => {
                let y = label_sign::<R>(xi.labels[0]);
                (R::one() - y * dot(theta, &xi.continuous)).max(R::zero())
            }
            LossKind::KMeans => {
                let m = xi.continuous.len();
                let mut best = R::infinity();
                for c in 0..self.kmeans_clusters {
                    let center = &theta[c * m..(c + 1) * m];
                    let d2 = center
                        .iter()
                        .zip(xi.continuous.iter())
                        .map(|(&t, &x)| (t - x) * (t - x))
                        .sum::<R>();
                    best = best.min(d2);
                }
                best
            }
            LossKind::Tabulated => {
                let index = theta[0].round().to_usize().unwrap_or(0);
                self.interp(&self.tables[index], xi)
            }
        }
    }

    /// Multilinear interpolation of a grid table at `xi`.
    fn interp(&self, table: &[R], xi: &SamplePoint<R>) -> R {
        let m = self.space.continuous_dim();
        let mut base = vec![0usize; m];
        let mut frac = vec![R::zero(); m];
        for axis in 0..m {
            let n = self.space.axis_nodes(axis);
            if n == 1 {
                continue;
            }
            let (lo, hi) = self.space.boxes()[axis];
            let t = (xi.continuous[axis] - lo) / (hi - lo) * R::from_usize(n - 1).unwrap();
            let mut cell = t.floor().to_usize().unwrap_or(0);
            if cell >= n - 1 {
                cell = n - 2;
            }
            base[axis] = cell;
            frac[axis] = (t - R::from_usize(cell).unwrap())
                .max(R::zero())
                .min(R::one());
        }
        let mut value = R::zero();
        let corners = 1usize << m;
        let mut cont_idx = vec![0usize; m];
        for mask in 0..corners {
            let mut weight = R::one();
            for axis in 0..m {
                let upper = (mask >> axis) & 1 == 1;
                if upper {
                    if self.space.axis_nodes(axis) == 1 {
                        weight = R::zero();
                        break;
                    }
                    weight = weight * frac[axis];
                    cont_idx[axis] = base[axis] + 1;
                } else {
                    weight = weight * (R::one() - frac[axis]);
                    cont_idx[axis] = base[axis];
                }
            }
            if weight > R::zero() {
                value = value + weight * table[self.space.grid_index(&cont_idx, &xi.labels)];
            }
        }
        value
    }
}

fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

fn label_sign<R: Real>(label: usize) -> R {
    if label == 0 {
        -R::one()
    } else {
        R::one()
    }
}

fn softplus<R: Real>(s: R) -> R {
    let cap = R::of(30.0);
    if s > cap {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Exact closed-form loss value with full domain validation.
pub fn loss_eval<R: Real>(family: &LossFamily<R>, theta: &[R], xi: &SamplePoint<R>) -> Result<R> {
    family.theta_in_box(theta)?;
    family.space.contains(xi)?;
    Ok(family.eval_unchecked(theta, xi))
}

/// Grid oscillation test: true iff some member varies by at most `tolerance`
/// over the space grid.
pub fn is_constant_family<R: Real>(family: &LossFamily<R>, tolerance: R) -> bool {
    let grid = family.space.grid();
    family.theta_grid().iter().any(|theta| {
        let mut lo = R::infinity();
        let mut hi = R::neg_infinity();
        for g in &grid {
            let v = family.eval_unchecked(theta, g);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo <= tolerance
    })
}

/// Abstraction over "a finite list of member functions" used by the
/// certificate and experiment layers. Implemented by [`LossFamily`] (θ-grid
/// members) and by [`FnFamily`] (explicit closures, e.g. a single analytic
/// loss).
pub trait Family<R: Real>: Sync {
    fn member_count(&self) -> usize;
    fn theta(&self, index: usize) -> Vec<R>;
    fn eval_member(&self, index: usize, point: &SamplePoint<R>) -> R;
    /// Whether inner maximizations over ζ may be golden-refined.
    fn refine_inner(&self) -> bool;
}

/// [`LossFamily`] with its θ-grid materialized, viewable as a [`Family`].
pub struct GridFamily<'a, R: Real> {
    family: &'a LossFamily<R>,
    thetas: Vec<Vec<R>>,
}

impl<R: Real> LossFamily<R> {
    pub fn grid_family(&self) -> GridFamily<'_, R> {
        GridFamily {
            family: self,
            thetas: self.theta_grid(),
        }
    }
}

impl<R: Real> Family<R> for GridFamily<'_, R> {
    fn member_count(&self) -> usize {
        self.thetas.len()
    }

    fn theta(&self, index: usize) -> Vec<R> {
        self.thetas[index].clone()
    }

    fn eval_member(&self, index: usize, point: &SamplePoint<R>) -> R {
        self.family.eval_unchecked(&self.thetas[index], point)
    }

    fn refine_inner(&self) -> bool {
        self.family.refine_inner()
    }
}

type BoxedLoss<R> = Box<dyn Fn(&SamplePoint<R>) -> R + Send + Sync>;

/// Family given by explicit closures.
pub struct FnFamily<R> {
    members: Vec<BoxedLoss<R>>,
    refine: bool,
}

impl<R: Real> FnFamily<R> {
    pub fn new(members: Vec<BoxedLoss<R>>, refine: bool) -> Self {
        Self { members, refine }
    }

    /// Single-member family; `refine` asserts smoothness in ζ.
    pub fn single(f: impl Fn(&SamplePoint<R>) -> R + Send + Sync + 'static, refine: bool) -> Self {
        Self {
            members: vec![Box::new(f)],
            refine,
        }
    }
}

impl<R: Real> Family<R> for FnFamily<R> {
    fn member_count(&self) -> usize {
        self.members.len()
    }

    fn theta(&self, index: usize) -> Vec<R> {
        vec![R::from_usize(index).unwrap()]
    }

    fn eval_member(&self, index: usize, point: &SamplePoint<R>) -> R {
        (self.members[index])(point)
    }

    fn refine_inner(&self) -> bool {
        self.refine
    }
}

// ---------------------------------------------------------------------------
// Family constants
// ---------------------------------------------------------------------------

/// Interval hull of `Σ θ_i x_i` over boxes for θ and x.
fn dot_hull<R: Real>(theta_box: &[(R, R)], x_box: &[(R, R)]) -> (R, R) {
    let mut lo = R::zero();
    let mut hi = R::zero();
    for (&(tl, th), &(xl, xh)) in theta_box.iter().zip(x_box.iter()) {
        let candidates = [tl * xl, tl * xh, th * xl, th * xh];
        let mut cl = candidates[0];
        let mut ch = candidates[0];
        for &c in &candidates[1..] {
            cl = cl.min(c);
            ch = ch.max(c);
        }
        lo = lo + cl;
        hi = hi + ch;
    }
    (lo, hi)
}

fn abs_corner<R: Real>(b: &[(R, R)]) -> Vec<R> {
    b.iter().map(|&(lo, hi)| lo.abs().max(hi.abs())).collect()
}

/// `‖w‖_{p*}` for the exponent dual to `p` (Hölder pairing with `‖·‖_p`).
fn dual_norm<R: Real>(w: &[R], p: R) -> R {
    if p == R::one() {
        w.iter().fold(R::zero(), |m, &v| m.max(v))
    } else if p.is_infinite() {
        w.iter().copied().sum()
    } else {
        let q = p / (p - R::one());
        w.iter()
            .map(|&v| v.powf(q))
            .sum::<R>()
            .powf(q.recip())
    }
}

fn euclidean_norm<R: Real>(w: &[R]) -> R {
    w.iter().map(|&v| v * v).sum::<R>().sqrt()
}

/// Computes `‖F‖∞`, the Lipschitz constants in ξ (w.r.t. the metric
/// `‖·‖_p + label indicator` of `cost`) and in θ (Euclidean), and the Dudley
/// entropy of the family. Closed-form interval bounds are used for
/// least-squares, logistic and hinge; k-means and tabulated families are
/// grid-estimated (k-means with a curvature margin so the estimates remain
/// valid upper bounds for the quadratic pieces).
pub fn family_constants<R: Real>(
    family: &LossFamily<R>,
    cost: &TransportCost<R>,
) -> Result<FamilyConstants<R>> {
    let space = family.space();
    let p = cost.p_norm;
    let (sup_norm, lip_xi, lip_theta, source) = match family.kind() {
        LossKind::LeastSquares => {
            let m = space.continuous_dim() - 1;
            let x_box = &space.boxes()[..m];
            let (ylo, yhi) = space.boxes()[m];
            let (dlo, dhi) = dot_hull(&family.theta_box, x_box);
            let zlo = dlo - yhi;
            let zhi = dhi - ylo;
            let zmax = zlo.abs().max(zhi.abs());
            let sup = zmax * zmax;
            // gradient in (x, y) is 2z (θ, −1)
            let mut grad = abs_corner(&family.theta_box);
            grad.push(R::one());
            let lip_xi = R::of(2.0) * zmax * dual_norm(&grad, p);
            let lip_theta = R::of(2.0) * zmax * euclidean_norm(&abs_corner(x_box));
            (sup, lip_xi, lip_theta, ConstantSource::ClosedForm)
        }
        LossKind::Logistic => {
            let (dlo, dhi) = dot_hull(&family.theta_box, space.boxes());
            let s = dlo.abs().max(dhi.abs());
            let sup = softplus(s);
            let lip_cont = dual_norm(&abs_corner(&family.theta_box), p);
            // flipping y changes the loss by at most |⟨θ,x⟩| ≤ s
            let lip_xi = if space.alphabets()[0] == 2 {
                lip_cont.max(s)
            } else {
                lip_cont
            };
            let lip_theta = euclidean_norm(&abs_corner(space.boxes()));
            (sup, lip_xi, lip_theta, ConstantSource::ClosedForm)
        }
        LossKind::Hinge => {
            let (dlo, dhi) = dot_hull(&family.theta_box, space.boxes());
            let s = dlo.abs().max(dhi.abs());
            let sup = R::one() + s;
            let lip_cont = dual_norm(&abs_corner(&family.theta_box), p);
            let lip_xi = if space.alphabets()[0] == 2 {
                lip_cont.max(sup)
            } else {
                lip_cont
            };
            let lip_theta = euclidean_norm(&abs_corner(space.boxes()));
            (sup, lip_xi, lip_theta, ConstantSource::ClosedForm)
        }
        LossKind::KMeans | LossKind::Tabulated => grid_estimated_constants(family, p)?,
    };
    let dudley = dudley_entropy(lip_theta, &family.theta_box)?;
    Ok(FamilyConstants {
        sup_norm,
        lip_xi,
        lip_theta,
        dudley,
        source,
    })
}

fn grid_estimated_constants<R: Real>(
    family: &LossFamily<R>,
    p: R,
) -> Result<(R, R, R, ConstantSource)> {
    let space = family.space();
    let grid = space.grid();
    let thetas = family.theta_grid();
    if thetas.is_empty() || grid.is_empty() {
        return Err(Error::Empty("family grid"));
    }
    let m = space.continuous_dim();
    let quadratic = family.kind() == LossKind::KMeans;

    let mut sup = R::zero();
    let mut axis_slope = vec![R::zero(); m];
    let mut label_osc = R::zero();
    let mut theta_slope = R::zero();

    let values: Vec<Vec<R>> = thetas
        .iter()
        .map(|t| grid.iter().map(|g| family.eval_unchecked(t, g)).collect())
        .collect();

    for vals in &values {
        for &v in vals {
            sup = sup.max(v.abs());
        }
    }

    // difference quotients along each continuous axis and across labels
    let cont_limits: Vec<usize> = (0..m).map(|a| space.axis_nodes(a)).collect();
    let label_limits = space.alphabets().to_vec();
    let mut cont_idx = vec![0usize; m];
    loop {
        let mut label_idx = vec![0usize; label_limits.len()];
        loop {
            let here = space.grid_index(&cont_idx, &label_idx);
            for axis in 0..m {
                if cont_idx[axis] + 1 < cont_limits[axis] {
                    let mut up = cont_idx.clone();
                    up[axis] += 1;
                    let there = space.grid_index(&up, &label_idx);
                    let h = space.spacing(axis);
                    for vals in &values {
                        let q = (vals[there] - vals[here]).abs() / h;
                        axis_slope[axis] = axis_slope[axis].max(q);
                    }
                }
            }
            // oscillation across label combinations at a fixed continuous node
            if !label_limits.is_empty() {
                for vals in &values {
                    let mut other = label_idx.clone();
                    if increment_idx(&mut other, &label_limits) {
                        loop {
                            let there = space.grid_index(&cont_idx, &other);
                            label_osc = label_osc.max((vals[there] - vals[here]).abs());
                            if !increment_idx(&mut other, &label_limits) {
                                break;
                            }
                        }
                    }
                }
            }
            if !increment_idx(&mut label_idx, &label_limits) {
                break;
            }
        }
        if !increment_idx(&mut cont_idx, &cont_limits) {
            break;
        }
    }

    for i in 0..values.len().saturating_sub(1) {
        let dt = euclidean_dist(&thetas[i], &thetas[i + 1]);
        for (a, b) in values[i].iter().zip(values[i + 1].iter()) {
            theta_slope = theta_slope.max((*b - *a).abs() / dt);
        }
    }

    if quadratic {
        // curvature margin: adjacent-node quotients of a piecewise quadratic
        // with |f''| <= 2 under-estimate endpoint slopes by one grid step
        for axis in 0..m {
            axis_slope[axis] = axis_slope[axis] + space.spacing(axis);
        }
        let half_diag =
            euclidean_norm(&(0..m).map(|a| space.spacing(a).half()).collect::<Vec<_>>());
        let lip_tmp = dual_norm(&axis_slope, p);
        sup = sup + lip_tmp * half_diag;
        let theta_step = family
            .theta_box
            .iter()
            .map(|&(lo, hi)| {
                if family.theta_grid_resolution > 1 {
                    (hi - lo) / R::from_usize(family.theta_grid_resolution - 1).unwrap()
                } else {
                    hi - lo
                }
            })
            .fold(R::zero(), |acc, s| acc.max(s));
        theta_slope = theta_slope + theta_step;
    }

    let lip_xi = dual_norm(&axis_slope, p).max(label_osc);
    Ok((sup, lip_xi, theta_slope, ConstantSource::GridEstimated))
}

fn euclidean_dist<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<R>()
        .sqrt()
        .max(R::of(1e-300))
}

fn increment_idx(indices: &mut [usize], limits: &[usize]) -> bool {
    for axis in (0..indices.len()).rev() {
        indices[axis] += 1;
        if indices[axis] < limits[axis] {
            return true;
        }
        indices[axis] = 0;
    }
    false
}

/// Numerical Dudley entropy integral for a box-shaped parameter space.
///
/// Uses the covering bound `N(t) <= Π_i (⌊lip·len_i/t⌋ + 1)` on the packing
/// numbers of `{f(θ,·)}` in sup norm and integrates `sqrt(log N(t))` over
/// `(0, t_max]` with `t_max` the smallest `t` at which `N(t) = 1`. The
/// result upper-bounds the true entropy up to quadrature error (log-spaced
/// trapezoid plus a bounded tail term).
pub fn dudley_entropy<R: Real>(lip_theta: R, theta_box: &[(R, R)]) -> Result<R> {
    if lip_theta < R::zero() || !lip_theta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lip_theta must be a finite nonnegative real, got {lip_theta}"
        )));
    }
    let edges: Vec<R> = theta_box
        .iter()
        .map(|&(lo, hi)| lip_theta * (hi - lo))
        .filter(|e| *e > R::zero())
        .collect();
    if edges.is_empty() {
        return Ok(R::zero());
    }
    let t_max = edges.iter().fold(R::zero(), |m, &e| m.max(e));

    let log_n = |t: R| -> R {
        edges
            .iter()
            .map(|&e| ((e / t).floor() + R::one()).ln())
            .sum::<R>()
    };

    // substitute t = t_max * exp(-s) on s in [0, S]
    let steps = 200_000usize;
    let s_end = R::of(12.0 * std::f64::consts::LN_10);
    let ds = s_end / R::from_usize(steps).unwrap();
    let mut integral = R::zero();
    let mut prev = {
        let t = t_max;
        log_n(t).sqrt() * t
    };
    for k in 1..=steps {
        let s = ds * R::from_usize(k).unwrap();
        let t = t_max * (-s).exp();
        let g = log_n(t).sqrt() * t;
        integral = integral + (prev + g).half() * ds;
        prev = g;
    }
    // tail below t_max * 1e-12: integrand still grows only like sqrt(log)
    let t_tail = t_max * (-s_end).exp();
    integral = integral + t_tail * log_n(t_tail).sqrt() * R::of(1.5);
    Ok(integral)
}
