//! Attacks on 2D projectors.
//!
//! Every row handled here is in the projector's normalized attribute space;
//! perturbation magnitudes are therefore in normalized units.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Adam, AdamConfig, Tensor};
use crate::error::{Error, Result};
use crate::paradr::{distance, BBox, Point, ProjectionOracle, Projector};

pub const PROBE_DELTA: f64 = 0.05;
pub const DEFAULT_MAGNITUDE: f64 = 10.0;
/// Fraction of the target bbox diagonal within which a placement counts as a hit.
pub const SUCCESS_TOLERANCE: f64 = 0.10;

/// Magnitudes `0, 1, ..., 15`.
pub fn default_sweep() -> Vec<f64> {
    (0..=15).map(f64::from).collect()
}

/// Counts queries forwarded to an inner oracle.
pub struct CountingOracle<'a> {
    inner: &'a dyn ProjectionOracle,
    count: Cell<usize>,
}

impl<'a> CountingOracle<'a> {
    pub fn new(inner: &'a dyn ProjectionOracle) -> Self {
        Self {
            inner,
            count: Cell::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.count.get()
    }
}

impl ProjectionOracle for CountingOracle<'_> {
    fn input_width(&self) -> usize {
        self.inner.input_width()
    }

    fn query(&self, row: &[f64]) -> Result<Point> {
        self.count.set(self.count.get() + 1);
        self.inner.query(row)
    }
}

fn ask(oracle: &dyn ProjectionOracle, row: &[f64]) -> Result<Point> {
    if row.len() != oracle.input_width() {
        return Err(Error::WidthMismatch {
            expected: oracle.input_width(),
            found: row.len(),
        });
    }
    match oracle.query(row) {
        Ok(p) if p[0].is_finite() && p[1].is_finite() => Ok(p),
        Ok(_) => Err(Error::OracleFailure("non-finite placement".into())),
        Err(e) => Err(Error::OracleFailure(e.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceProfile {
    pub displacements: Vec<f64>,
    pub delta: f64,
    pub queries: usize,
    pub baseline: Point,
    /// Largest displacement, lowest index on ties; `None` when every displacement is zero.
    pub dominant: Option<usize>,
}

/// One baseline query plus one query per attribute nudged by `delta`.
pub fn probe_influence(oracle: &dyn ProjectionOracle, x: &[f64], delta: f64) -> Result<InfluenceProfile> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::BadParameters(format!("probe delta {delta}")));
    }
    let counter = CountingOracle::new(oracle);
    let baseline = ask(&counter, x)?;
    let mut displacements = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        probe[j] = x[j] + delta;
        displacements.push(distance(ask(&counter, &probe)?, baseline));
        probe[j] = x[j];
    }
    let mut dominant = None;
    let mut best = 0.0;
    for (j, &d) in displacements.iter().enumerate() {
        if d > best {
            best = d;
            dominant = Some(j);
        }
    }
    Ok(InfluenceProfile {
        displacements,
        delta,
        queries: counter.count(),
        baseline,
        dominant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialInput {
    pub base: Vec<f64>,
    pub crafted: Vec<f64>,
    pub manipulated: Vec<usize>,
    pub aim: Option<Point>,
    /// Placement under the target oracle.
    pub achieved: Point,
    /// Placement under the substitute used for crafting, if any.
    pub substitute_position: Option<Point>,
    /// Aim-to-achieved distance under the target.
    pub target_distance: Option<f64>,
    pub substitute_distance: Option<f64>,
    pub success: Option<bool>,
    /// Whether the substitute-side early-stop threshold was reached.
    pub converged: Option<bool>,
    pub steps: usize,
}

impl AdversarialInput {
    /// Attribute indices whose value differs from the base row.
    pub fn changed(&self) -> Vec<usize> {
        (0..self.base.len())
            .filter(|&j| self.base[j] != self.crafted[j])
            .collect()
    }
}

/// Add `magnitude` to the most influential attribute of `x`.
pub fn craft_one_attribute(
    oracle: &dyn ProjectionOracle,
    profile: &InfluenceProfile,
    x: &[f64],
    magnitude: f64,
) -> Result<AdversarialInput> {
    let j = profile.dominant.ok_or(Error::NoInfluentialAttribute)?;
    let mut crafted = x.to_vec();
    crafted[j] += magnitude;
    Ok(AdversarialInput {
        base: x.to_vec(),
        achieved: ask(oracle, &crafted)?,
        crafted,
        manipulated: vec![j],
        aim: None,
        substitute_position: None,
        target_distance: None,
        substitute_distance: None,
        success: None,
        converged: None,
        steps: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub attribute: usize,
    pub points: Vec<(f64, Point)>,
    /// Share of variance along the principal axis; `None` when all points coincide.
    pub r_squared: Option<f64>,
    pub queries: usize,
}

impl Trajectory {
    pub fn positions(&self) -> Vec<Point> {
        self.points.iter().map(|p| p.1).collect()
    }

    /// Euclidean displacement of each point from the first.
    pub fn displacements(&self) -> Vec<f64> {
        let first = self.points.first().map(|p| p.1).unwrap_or([0.0, 0.0]);
        self.points.iter().map(|p| distance(p.1, first)).collect()
    }

    /// Closest approach of the polyline to `p`.
    pub fn min_distance_to(&self, p: Point) -> f64 {
        polyline_distance(&self.positions(), p)
    }
}

/// Distance from `p` to the polyline through `path`.
pub fn polyline_distance(path: &[Point], p: Point) -> f64 {
    match path.len() {
        0 => f64::INFINITY,
        1 => distance(path[0], p),
        _ => path
            .windows(2)
            .map(|w| segment_distance(w[0], w[1], p))
            .fold(f64::INFINITY, f64::min),
    }
}

fn segment_distance(a: Point, b: Point, p: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return distance(a, p);
    }
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    distance([a[0] + t * ab[0], a[1] + t * ab[1]], p)
}

/// Goodness of a straight-line fit through 2D points, orientation free.
///
/// Largest covariance eigenvalue over the trace; `None` for zero variance.
pub fn line_fit_r2(points: &[Point]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let c = crate::paradr::centroid(points);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);
    let trace = sxx + syy;
    if trace <= 0.0 {
        return None;
    }
    let half_gap = (((sxx - syy) / 2.0).powi(2) + sxy * sxy).sqrt();
    Some(((trace / 2.0 + half_gap) / trace).clamp(0.0, 1.0))
}

/// Place `x` with `attribute` incremented by each magnitude in turn.
pub fn trajectory_sweep(
    oracle: &dyn ProjectionOracle,
    x: &[f64],
    attribute: usize,
    magnitudes: &[f64],
) -> Result<Trajectory> {
    if attribute >= x.len() {
        return Err(Error::BadParameters(format!("attribute {attribute} of {}", x.len())));
    }
    if magnitudes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::BadParameters("magnitudes must be strictly increasing".into()));
    }
    let counter = CountingOracle::new(oracle);
    let mut row = x.to_vec();
    let mut points = Vec::with_capacity(magnitudes.len());
    for &m in magnitudes {
        row[attribute] = x[attribute] + m;
        points.push((m, ask(&counter, &row)?));
    }
    let r_squared = line_fit_r2(&points.iter().map(|p| p.1).collect::<Vec<_>>());
    Ok(Trajectory {
        attribute,
        points,
        r_squared,
        queries: counter.count(),
    })
}

/// Independent judge of crafted inputs: the target and its embedding box.
#[derive(Clone, Copy)]
pub struct Verifier<'a> {
    pub target: &'a dyn ProjectionOracle,
    pub bbox: BBox,
}

impl Verifier<'_> {
    pub fn tolerance(&self) -> f64 {
        SUCCESS_TOLERANCE * self.bbox.diagonal()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionConfig {
    pub steps: usize,
    /// Adam step size in normalized units.
    pub rate: f64,
    /// Stop once the substitute-side distance is below this share of the diagonal.
    pub early_stop: f64,
    /// Optional per-attribute `[lo, hi]` box on crafted values.
    pub clamp: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            rate: 0.05,
            early_stop: 0.01,
            clamp: None,
        }
    }
}

/// Every attribute index of a width-`d` row.
pub fn full_mask(d: usize) -> Vec<usize> {
    (0..d).collect()
}

/// Move the masked attributes of `x0` so that `sub` places it at `aim`.
///
/// Minimizes `‖sub(x) − aim‖²` and returns the best iterate seen. The
/// crafted row is then placed by the verifier's target oracle, and success
/// is decided on that placement alone.
pub fn invert_to_target(
    sub: &Projector,
    verifier: &Verifier<'_>,
    aim: Point,
    x0: &[f64],
    mask: &[usize],
    config: &InversionConfig,
) -> Result<AdversarialInput> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if !(aim[0].is_finite() && aim[1].is_finite()) {
        return Err(Error::NonFiniteValue("aim".into()));
    }
    if x0.len() != sub.width() {
        return Err(Error::WidthMismatch {
            expected: sub.width(),
            found: x0.len(),
        });
    }
    if let Some(&j) = mask.iter().find(|&&j| j >= x0.len()) {
        return Err(Error::BadParameters(format!("mask index {j}")));
    }
    let mut mask = mask.to_vec();
    mask.sort_unstable();
    mask.dedup();
    let stop = config.early_stop * verifier.bbox.diagonal();
    let clamp = |x: &mut [f64]| {
        if let Some((lo, hi)) = &config.clamp {
            for &j in &mask {
                x[j] = x[j].clamp(lo[j], hi[j]);
            }
        }
    };

    let mut x = x0.to_vec();
    clamp(&mut x);
    let mut free = Tensor::row(mask.iter().map(|&j| x[j]).collect())?;
    let mut opt = Adam::new(
        AdamConfig {
            learning_rate: config.rate,
            ..AdamConfig::default()
        },
        [&free],
    );
    let mut best = (f64::INFINITY, x.clone(), [0.0, 0.0]);
    let mut steps = 0;
    for step in 0..=config.steps {
        let y = sub.project_normalized_row(&x)?;
        let d = distance(y, aim);
        if d < best.0 {
            best = (d, x.clone(), y);
        }
        if d < stop || step == config.steps {
            break;
        }
        let (_, g) = sub.gradient(&x, [2.0 * (y[0] - aim[0]), 2.0 * (y[1] - aim[1])])?;
        let grad = Tensor::row(mask.iter().map(|&j| g[j]).collect())?;
        opt.step([&mut free], &[&grad]);
        for (k, &j) in mask.iter().enumerate() {
            x[j] = free.values()[k];
        }
        clamp(&mut x);
        steps = step + 1;
    }
    let (sub_distance, crafted, sub_position) = best;
    let achieved = ask(verifier.target, &crafted)?;
    let target_distance = distance(achieved, aim);
    Ok(AdversarialInput {
        base: x0.to_vec(),
        crafted,
        manipulated: mask,
        aim: Some(aim),
        achieved,
        substitute_position: Some(sub_position),
        target_distance: Some(target_distance),
        substitute_distance: Some(sub_distance),
        success: Some(target_distance <= verifier.tolerance()),
        converged: Some(sub_distance < stop),
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverwriteResult {
    pub inputs: Vec<AdversarialInput>,
    /// Share of targets hit within tolerance under the target oracle.
    pub coverage: f64,
}

/// One inversion per target point; bases are taken from `pool` in turn.
pub fn overwrite_cluster(
    sub: &Projector,
    verifier: &Verifier<'_>,
    targets: &[Point],
    pool: &[Vec<f64>],
    mask: &[usize],
    config: &InversionConfig,
) -> Result<OverwriteResult> {
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    if pool.is_empty() {
        return Err(Error::BadParameters("empty base pool".into()));
    }
    let inputs = targets
        .iter()
        .enumerate()
        .map(|(i, &aim)| invert_to_target(sub, verifier, aim, &pool[i % pool.len()], mask, config))
        .collect::<Result<Vec<_>>>()?;
    let hits = inputs.iter().filter(|a| a.success == Some(true)).count();
    Ok(OverwriteResult {
        coverage: hits as f64 / inputs.len() as f64,
        inputs,
    })
}

/// `1 − area(before) / area(after)`; 0 when the box did not grow.
pub fn axis_impact(before: &BBox, after: &BBox) -> f64 {
    let (a0, a1) = (before.area(), after.area());
    if a1 <= 0.0 || a1 <= a0 {
        0.0
    } else {
        1.0 - a0 / a1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierResult {
    pub input: AdversarialInput,
    pub scale: f64,
    pub aim: Point,
    pub bbox_before: BBox,
    pub bbox_after: BBox,
    pub axis_impact: f64,
    pub success: bool,
}

pub const AXIS_IMPACT_GOAL: f64 = 0.9;

/// Craft one outlier aimed at `min + scale·(max − min)` of the embedding box.
///
/// With `scale = 1` the aim is the box corner; each unit above adds one
/// box extent beyond it. Impact is measured on the target placement.
pub fn outlier_scaling_attack(
    sub: &Projector,
    verifier: &Verifier<'_>,
    scale: f64,
    x0: &[f64],
    mask: &[usize],
    config: &InversionConfig,
) -> Result<OutlierResult> {
    if !(scale >= 1.0 && scale.is_finite()) {
        return Err(Error::BadParameters(format!("scale factor {scale}")));
    }
    let b = verifier.bbox;
    let aim = [
        b.min[0] + scale * (b.max[0] - b.min[0]),
        b.min[1] + scale * (b.max[1] - b.min[1]),
    ];
    let input = invert_to_target(sub, verifier, aim, x0, mask, config)?;
    let mut after = b;
    after.include(input.achieved);
    let impact = axis_impact(&b, &after);
    Ok(OutlierResult {
        input,
        scale,
        aim,
        bbox_before: b,
        bbox_after: after,
        axis_impact: impact,
        success: impact >= AXIS_IMPACT_GOAL,
    })
}
