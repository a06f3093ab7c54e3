//! Absorption coefficient model, control distributions and the projections
//! onto the admissible sets.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_on_edges, MasterPartition, Mesh};

/// Frequency-dependent Robin coefficient `alpha(f)`.
///
/// Absorption requires `Re(alpha) > 0` and `Im(alpha) < 0` at every
/// frequency that is queried; tables are checked when they are built.
#[derive(Debug, Clone, PartialEq)]
pub enum AbsorptionModel {
    Constant(Complex64),
    /// Sorted `(f_hz, alpha)` samples, linearly interpolated in the real and
    /// imaginary parts separately.
    Table(Vec<(f64, Complex64)>),
}

impl Default for AbsorptionModel {
    fn default() -> Self {
        AbsorptionModel::Constant(Complex64::new(1.0, -1.0))
    }
}

fn check_sign(f: Option<f64>, a: Complex64) -> Result<()> {
    if !(a.re > 0.0 && a.im < 0.0) || !a.re.is_finite() || !a.im.is_finite() {
        let at = f.map(|f| format!(" at {f} Hz")).unwrap_or_default();
        return Err(Error::Validation(format!(
            "absorption coefficient{at} must have Re > 0 and Im < 0, got {a}"
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct AlphaRow {
    f_hz: f64,
    re_alpha: f64,
    im_alpha: f64,
}

impl AbsorptionModel {
    pub fn constant(alpha: Complex64) -> Result<Self> {
        check_sign(None, alpha)?;
        Ok(AbsorptionModel::Constant(alpha))
    }

    pub fn table(points: Vec<(f64, Complex64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("absorption table is empty".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Validation(format!(
                    "absorption table frequencies must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(f, a) in &points {
            check_sign(Some(f), a)?;
        }
        Ok(AbsorptionModel::Table(points))
    }

    /// Reads a `f_hz,re_alpha,im_alpha` table.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut points = Vec::new();
        for row in rdr.deserialize() {
            let row: AlphaRow = row?;
            points.push((row.f_hz, Complex64::new(row.re_alpha, row.im_alpha)));
        }
        Self::table(points)
    }

    pub fn coverage(&self) -> (f64, f64) {
        match self {
            AbsorptionModel::Constant(_) => (f64::NEG_INFINITY, f64::INFINITY),
            AbsorptionModel::Table(pts) => (pts[0].0, pts[pts.len() - 1].0),
        }
    }

    pub fn alpha_at(&self, f: f64) -> Result<Complex64> {
        match self {
            AbsorptionModel::Constant(a) => Ok(*a),
            AbsorptionModel::Table(pts) => {
                let (lo, hi) = self.coverage();
                if !(f >= lo && f <= hi) {
                    return Err(Error::Coverage { f, lo, hi });
                }
                let k = pts.partition_point(|p| p.0 < f);
                if k < pts.len() && pts[k].0 == f {
                    return Ok(pts[k].1);
                }
                let (f0, a0) = pts[k - 1];
                let (f1, a1) = pts[k];
                let t = (f - f0) / (f1 - f0);
                Ok(Complex64::new(a0.re + t * (a1.re - a0.re), a0.im + t * (a1.im - a0.im)))
            }
        }
    }
}

/// Piecewise-constant control on the master partition together with the
/// volume fraction it is meant to satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialDistribution {
    values: Vec<f64>,
    partition: MasterPartition,
    beta: f64,
}

impl MaterialDistribution {
    pub fn new(values: Vec<f64>, partition: MasterPartition, beta: f64) -> Result<Self> {
        if values.len() != partition.len() {
            return Err(Error::invalid(format!(
                "{} values for a partition of {} segments",
                values.len(),
                partition.len()
            )));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid(format!("volume fraction must lie in ]0,1[, got {beta}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("distribution values must be finite"));
        }
        Ok(MaterialDistribution {
            values,
            partition,
            beta,
        })
    }

    pub fn constant(value: f64, partition: MasterPartition, beta: f64) -> Result<Self> {
        Self::new(vec![value; partition.len()], partition, beta)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn partition(&self) -> &MasterPartition {
        &self.partition
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Measure-weighted mean of the values.
    pub fn volume_fraction(&self) -> f64 {
        weighted_mean(&self.values, &self.partition)
    }

    pub fn is_relaxed_feasible(&self, tol: f64) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v)) && (self.volume_fraction() - self.beta).abs() <= tol
    }

    pub fn is_hard(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn sample_on_edges(&self, mesh: &Mesh) -> Vec<f64> {
        sample_on_edges(&self.values, &self.partition, mesh)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["segment_start", "segment_end", "value"])?;
        let b = self.partition.bounds();
        for (k, v) in self.values.iter().enumerate() {
            w.write_record([b[k].to_string(), b[k + 1].to_string(), v.to_string()])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }

    /// Reads a `segment_start,segment_end,value` file; the segments must be
    /// contiguous starting at zero.
    pub fn read_csv(path: &Path, beta: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut bounds = vec![];
        let mut values = vec![];
        for row in rdr.records() {
            let row = row?;
            let parse = |i: usize| -> Result<f64> {
                row.get(i)
                    .ok_or_else(|| Error::invalid(format!("missing column {i} in {}", path.display())))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("bad number in {}: {e}", path.display())))
            };
            let (s, e, v) = (parse(0)?, parse(1)?, parse(2)?);
            if bounds.is_empty() {
                bounds.push(s);
            } else if (bounds[bounds.len() - 1] - s).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "segments in {} are not contiguous at {s}",
                    path.display()
                )));
            }
            bounds.push(e);
            values.push(v);
        }
        let partition = MasterPartition::from_bounds(bounds)?;
        Self::new(values, partition, beta)
    }
}

fn weighted_mean(values: &[f64], part: &MasterPartition) -> f64 {
    let b = part.bounds();
    let mut acc = 0.0;
    for (k, v) in values.iter().enumerate() {
        acc += v * (b[k + 1] - b[k]);
    }
    acc / part.total_length()
}

/// The sigmoid `1 / (1 + exp(-8 (x - 1/2)))`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-8.0 * (x - 0.5)).exp())
}

/// Maps arbitrary per-segment values into `]0,1[` with mean `beta` by
/// `sigmoid(raw + shift)`, returning the distribution and the shift.
pub fn project_sigmoid_with_shift(
    raw: &[f64],
    partition: &MasterPartition,
    beta: f64,
) -> Result<(MaterialDistribution, f64)> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!("volume fraction must lie in ]0,1[, got {beta}")));
    }
    if raw.len() != partition.len() {
        return Err(Error::invalid(format!(
            "{} values for a partition of {} segments",
            raw.len(),
            partition.len()
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cannot project non-finite values"));
    }
    let lens = partition.lengths();
    let total = partition.total_length();
    let mean_at =
        |shift: f64| -> f64 { raw.iter().zip(&lens).map(|(r, l)| sigmoid(r + shift) * l).sum::<f64>() / total };

    let (mut lo, mut hi) = (-20.0f64, 20.0f64);
    let mut widen = 0;
    while mean_at(lo) > beta || mean_at(hi) < beta {
        widen += 1;
        if widen > 64 {
            return Err(Error::Internal(format!("sigmoid shift bracket failed for beta {beta}")));
        }
        let w = hi - lo;
        if mean_at(lo) > beta {
            lo -= w;
        }
        if mean_at(hi) < beta {
            hi += w;
        }
    }

    let mut shift = 0.5 * (lo + hi);
    for _ in 0..400 {
        shift = 0.5 * (lo + hi);
        let m = mean_at(shift);
        if m == beta || hi - lo <= 1e-12 || shift <= lo || shift >= hi {
            break;
        }
        if m < beta {
            lo = shift;
        } else {
            hi = shift;
        }
    }

    let values: Vec<f64> = raw.iter().map(|r| sigmoid(r + shift)).collect();
    let dist = MaterialDistribution::new(values, partition.clone(), beta)?;
    let err = (dist.volume_fraction() - beta).abs();
    if err > 1e-10 {
        return Err(Error::Internal(format!(
            "sigmoid projection missed the volume fraction by {err:e}"
        )));
    }
    Ok((dist, shift))
}

pub fn project_sigmoid(raw: &[f64], partition: &MasterPartition, beta: f64) -> Result<MaterialDistribution> {
    project_sigmoid_with_shift(raw, partition, beta).map(|(d, _)| d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardProjection {
    pub distribution: MaterialDistribution,
    /// Volume fraction actually reached; below `beta` when the target is not
    /// a sum of whole segment lengths.
    pub achieved_fraction: f64,
}

/// Rounds a relaxed distribution to a characteristic function: segments are
/// switched on in order of decreasing value (lower index first on ties)
/// until the absorbing length reaches `beta` times the wall length.
pub fn project_hard(chi: &MaterialDistribution, beta: f64) -> Result<HardProjection> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!("volume fraction must lie in ]0,1[, got {beta}")));
    }
    let part = chi.partition();
    let total = part.total_length();
    let target = beta * total;
    let tol = 1e-9 * total;

    let mut order: Vec<usize> = (0..part.len()).collect();
    // stable sort keeps index order among equal values
    order.sort_by(|&a, &b| chi.values[b].total_cmp(&chi.values[a]));

    let mut values = vec![0.0; part.len()];
    let mut filled = 0.0;
    for k in order {
        if filled >= target - tol {
            break;
        }
        let len = part.segment_length(k);
        if filled + len > target + tol {
            break;
        }
        values[k] = 1.0;
        filled += len;
    }
    let distribution = MaterialDistribution::new(values, part.clone(), beta)?;
    let achieved_fraction = distribution.volume_fraction();
    Ok(HardProjection {
        distribution,
        achieved_fraction,
    })
}

/// Maximal runs `(start, end_exclusive)` of reflecting (zero) segments.
fn zero_runs(on: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = vec![];
    let mut k = 0;
    while k < on.len() {
        if on[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < on.len() && !on[k] {
            k += 1;
        }
        runs.push((start, k));
    }
    runs
}

fn run_length(part: &MasterPartition, (s, e): (usize, usize)) -> f64 {
    part.bounds()[e] - part.bounds()[s]
}

/// Shortest length of a connected reflecting part of the wall; the whole wall
/// length when there is none.
pub fn minlen(chi: &MaterialDistribution) -> f64 {
    let on: Vec<bool> = chi.values.iter().map(|&v| v >= 0.5).collect();
    zero_runs(&on)
        .into_iter()
        .map(|r| run_length(chi.partition(), r))
        .fold(chi.partition().total_length(), f64::min)
}

/// Repairs a hard distribution so that every reflecting run is at least
/// `lmin` long.
///
/// Among all hard distributions with the same number of absorbing segments
/// whose reflecting runs all reach `lmin`, returns the one maximizing the
/// total `ranking` of its absorbing segments (the constrained analogue of
/// [`project_hard`]); ties go to the pattern closest to the input. Inputs that
/// already satisfy the bound are returned unchanged.
pub fn enforce_minlen(chi: &MaterialDistribution, ranking: &[f64], lmin: f64) -> Result<MaterialDistribution> {
    let part = chi.partition();
    if !(lmin > 0.0) {
        return Err(Error::invalid(format!("minimum length must be positive, got {lmin}")));
    }
    if ranking.len() != part.len() {
        return Err(Error::invalid("ranking length does not match the partition"));
    }
    let total = part.total_length();
    let tol = 1e-9 * total;
    let beta = chi.beta;
    if lmin > (1.0 - beta) * total + tol {
        return Err(Error::Infeasible(format!(
            "reflecting length {} cannot host a run of {lmin}",
            (1.0 - beta) * total
        )));
    }
    let on: Vec<bool> = chi.values.iter().map(|&v| v >= 0.5).collect();
    if zero_runs(&on).into_iter().all(|r| run_length(part, r) >= lmin - tol) {
        return Ok(chi.clone());
    }

    let n = on.len();
    let ones = on.iter().filter(|&&x| x).count();
    let bounds = part.bounds();
    let long_enough = |s: usize, e: usize| bounds[e] - bounds[s] >= lmin - tol;

    // Tail codes: 0 = last segment absorbing (or empty prefix), d in 1..=kmax
    // = reflecting run of d segments that is still too short, kmax + 1 =
    // reflecting run already long enough.
    let kmax = (0..n)
        .map(|s| (s..n).take_while(|&e| !long_enough(s, e + 1)).count())
        .max()
        .unwrap_or(0);
    let long = kmax + 1;
    let width = kmax + 2;
    // Visiting order of the tails; together with strict improvement it fixes
    // which of two equally ranked repairs wins.
    let order: Vec<usize> = std::iter::once(0)
        .chain((1..=kmax).rev())
        .chain(std::iter::once(long))
        .collect();

    // Per layer: parent tail and chosen bit, packed as `tail << 1 | bit`.
    const NONE: u32 = u32::MAX;
    let mut parents: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut cur: Vec<Option<Rank>> = vec![None; (ones + 1) * width];
    cur[0] = Some(Rank {
        score: 0.0,
        agree: 0,
        runs: 0,
    });
    for i in 0..n {
        let mut next: Vec<Option<Rank>> = vec![None; (ones + 1) * width];
        let mut link = vec![NONE; (ones + 1) * width];
        for c in 0..=ones.min(i) {
            for &t in &order {
                let Some(rank) = cur[c * width + t] else { continue };
                let mut offer = |c2: usize, t2: usize, r: Rank, bit: bool| {
                    let at = c2 * width + t2;
                    if next[at].as_ref().is_none_or(|old| r.beats(old)) {
                        next[at] = Some(r);
                        link[at] = (t as u32) << 1 | u32::from(bit);
                    }
                };
                // absorbing closes the current reflecting run, which must
                // already be long enough
                if (t == 0 || t == long) && c < ones {
                    let r = Rank {
                        score: rank.score + ranking[i],
                        agree: rank.agree + usize::from(on[i]),
                        runs: rank.runs,
                    };
                    offer(c + 1, 0, r, true);
                }
                let t2 = match t {
                    t if t == long => long,
                    d if long_enough(i - d, i + 1) => long,
                    d => d + 1,
                };
                let r = Rank {
                    score: rank.score,
                    agree: rank.agree + usize::from(!on[i]),
                    runs: rank.runs + usize::from(t == 0),
                };
                offer(c, t2, r, false);
            }
        }
        parents.push(link);
        cur = next;
    }

    let mut best: Option<(usize, Rank)> = None;
    for t in [0, long] {
        if let Some(r) = cur[ones * width + t] {
            if best.is_none_or(|(_, b)| r.beats(&b)) {
                best = Some((t, r));
            }
        }
    }
    let (mut t, _) = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no arrangement of {ones} absorbing segments keeps reflecting runs above {lmin}"
        ))
    })?;
    let mut c = ones;
    let mut values = vec![0.0; n];
    for i in (0..n).rev() {
        let packed = parents[i][c * width + t];
        debug_assert_ne!(packed, NONE);
        if packed & 1 == 1 {
            values[i] = 1.0;
            c -= 1;
        }
        t = (packed >> 1) as usize;
    }
    MaterialDistribution::new(values, part.clone(), beta)
}

/// Preference order of partial repairs: total ranking, then agreement with
/// the input, then fewer reflecting runs.
#[derive(Debug, Clone, Copy)]
struct Rank {
    score: f64,
    agree: usize,
    runs: usize,
}

impl Rank {
    fn beats(&self, other: &Rank) -> bool {
        if self.score != other.score {
            return self.score > other.score;
        }
        if self.agree != other.agree {
            return self.agree > other.agree;
        }
        self.runs < other.runs
    }
}

/// Final rounding used by every optimizer: hard projection followed by the
/// optional minimum-length repair, ranked by the relaxed values.
pub fn finalize_hard(relaxed: &MaterialDistribution, beta: f64, lmin: Option<f64>) -> Result<MaterialDistribution> {
    let hard = project_hard(relaxed, beta)?.distribution;
    match lmin {
        Some(l) => enforce_minlen(&hard, relaxed.values(), l),
        None => Ok(hard),
    }
}
