//! Domain types and the sign-invariant distance between dictionaries.
//!
//! A dictionary is only identifiable up to the sign of each atom (and a
//! permutation, which we do not resolve: runs start near the truth and the
//! column correspondence is the identity). All distances here are therefore
//! invariant under flipping the sign of any column.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{invalid, Error, Result};

/// Columns with norm at or below this are treated as degenerate.
pub const ZERO_COLUMN_TOL: f64 = 1e-14;
/// Tolerance on `‖u‖ = 1` for inputs of the vector distances.
pub const UNIT_TOL: f64 = 1e-9;

/// A `d × r` matrix with unit-norm columns (atoms).
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    entries: DMatrix<f64>,
}

impl Dictionary {
    /// Normalizes every column of `m`.
    pub fn normalized(m: DMatrix<f64>) -> Result<Self> {
        normalize_columns(m)
    }

    /// Wraps `m` after checking each column already has unit norm within `tol`.
    pub fn from_unit_columns(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(invalid("dictionary", "empty matrix"));
        }
        for (j, c) in m.column_iter().enumerate() {
            let n = c.norm();
            if (n - 1.0).abs() > tol {
                if n <= ZERO_COLUMN_TOL {
                    return Err(Error::ZeroColumn { index: j, norm: n });
                }
                return Err(Error::NotUnit { norm: n });
            }
        }
        Ok(Self { entries: m })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.entries.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn atom(&self, p: usize) -> DVectorView<'_, f64> {
        self.entries.column(p)
    }
}

/// An `r × n` coefficient matrix together with the support of each column.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    entries: DMatrix<f64>,
    supports: Vec<Vec<usize>>,
}

impl CoefficientMatrix {
    /// Builds the matrix, taking each column's support to be its nonzero rows.
    pub fn from_dense(entries: DMatrix<f64>) -> Self {
        let supports = entries
            .column_iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        Self { entries, supports }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            entries: DMatrix::zeros(rows, cols),
            supports: vec![Vec::new(); cols],
        }
    }

    /// Assembles a matrix from sparse columns given as sorted `(row, value)` lists.
    pub fn from_columns(rows: usize, columns: Vec<Vec<(usize, f64)>>) -> Self {
        let mut entries = DMatrix::zeros(rows, columns.len());
        let mut supports = Vec::with_capacity(columns.len());
        for (j, col) in columns.into_iter().enumerate() {
            let mut supp = Vec::with_capacity(col.len());
            for (i, v) in col {
                if v != 0.0 {
                    entries[(i, j)] = v;
                    supp.push(i);
                }
            }
            supp.sort_unstable();
            supports.push(supp);
        }
        Self { entries, supports }
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn supports(&self) -> &[Vec<usize>] {
        &self.supports
    }

    pub fn support(&self, col: usize) -> &[usize] {
        &self.supports[col]
    }

    pub fn max_support_size(&self) -> usize {
        self.supports.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Number of columns whose support contains row `p`.
    pub fn row_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.rows()];
        for s in &self.supports {
            for &p in s {
                counts[p] += 1;
            }
        }
        counts
    }

    /// `true` when every column's support lies inside the matching column of `reference`.
    pub fn support_within(&self, reference: &CoefficientMatrix) -> bool {
        self.supports
            .iter()
            .zip(reference.supports.iter())
            .all(|(mine, theirs)| mine.iter().all(|p| theirs.binary_search(p).is_ok()))
    }

    /// First entry found outside the reference support, if any.
    pub fn support_violation(&self, reference: &CoefficientMatrix) -> Option<(usize, usize)> {
        for (j, (mine, theirs)) in self.supports.iter().zip(&reference.supports).enumerate() {
            if let Some(&p) = mine.iter().find(|p| theirs.binary_search(p).is_err()) {
                return Some((p, j));
            }
        }
        None
    }
}

/// Observations `Y` (`d × n`) and, when generated here, the model that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    y: DMatrix<f64>,
    meta: Option<ModelConfig>,
}

impl SampleSet {
    pub fn new(y: DMatrix<f64>, meta: Option<ModelConfig>) -> Result<Self> {
        for j in 0..y.ncols() {
            for i in 0..y.nrows() {
                if !y[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self { y, meta })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn meta(&self) -> Option<&ModelConfig> {
        self.meta.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn len(&self) -> usize {
        self.y.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.y.ncols() == 0
    }
}

/// Distribution of the nonzero coefficient values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonzeroLaw {
    /// ±1 with equal probability.
    Rademacher,
    /// Uniform on [-2, -1] ∪ [1, 2].
    UniformPm12,
    /// Random sign times a magnitude uniform on `[low, high]`.
    Custom { low: f64, high: f64 },
}

impl NonzeroLaw {
    /// Almost-sure bound on `|x|`.
    pub fn bound(&self) -> f64 {
        match *self {
            NonzeroLaw::Rademacher => 1.0,
            NonzeroLaw::UniformPm12 => 2.0,
            NonzeroLaw::Custom { high, .. } => high,
        }
    }

    /// `E[x²]`.
    pub fn second_moment(&self) -> f64 {
        let (lo, hi) = match *self {
            NonzeroLaw::Rademacher => return 1.0,
            NonzeroLaw::UniformPm12 => (1.0, 2.0),
            NonzeroLaw::Custom { low, high } => (low, high),
        };
        if hi == lo {
            lo * lo
        } else {
            (hi.powi(3) - lo.powi(3)) / (3.0 * (hi - lo))
        }
    }
}

impl fmt::Display for NonzeroLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NonzeroLaw::Rademacher => write!(f, "rademacher"),
            NonzeroLaw::UniformPm12 => write!(f, "uniform_pm_1_2"),
            NonzeroLaw::Custom { low, high } => write!(f, "custom:{low}:{high}"),
        }
    }
}

impl FromStr for NonzeroLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rademacher" => Ok(NonzeroLaw::Rademacher),
            "uniform_pm_1_2" | "uniform" => Ok(NonzeroLaw::UniformPm12),
            other => {
                let parts: Vec<&str> = other.split(':').collect();
                if parts.len() == 3 && parts[0] == "custom" {
                    let low = parts[1]
                        .parse()
                        .map_err(|_| invalid("law", format!("bad low bound in {other:?}")))?;
                    let high = parts[2]
                        .parse()
                        .map_err(|_| invalid("law", format!("bad high bound in {other:?}")))?;
                    Ok(NonzeroLaw::Custom { low, high })
                } else {
                    Err(invalid(
                        "law",
                        format!("unknown law {other:?} (rademacher | uniform_pm_1_2 | custom:LO:HI)"),
                    ))
                }
            }
        }
    }
}

/// Parameters of the generative model `Y = A* X*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d: usize,
    pub r: usize,
    pub n: usize,
    pub s: usize,
    pub law: NonzeroLaw,
    /// Spectral-norm constant; only read by the theory accuracy schedule and diagnostics.
    pub mu1: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(d: usize, r: usize, n: usize, s: usize, seed: u64) -> Self {
        Self {
            d,
            r,
            n,
            s,
            law: NonzeroLaw::UniformPm12,
            mu1: 3.0,
            seed,
        }
    }

    pub fn with_law(mut self, law: NonzeroLaw) -> Self {
        self.law = law;
        self
    }

    /// Almost-sure bound `M` on the nonzero magnitudes.
    pub fn bound(&self) -> f64 {
        self.law.bound()
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("d", self.d), ("r", self.r), ("n", self.n), ("s", self.s)] {
            if v == 0 {
                return Err(invalid(field, "must be a positive integer"));
            }
        }
        if 2 * self.s > self.r {
            return Err(invalid("s", format!("need 2s <= r, got s={} r={}", self.s, self.r)));
        }
        if self.s > self.d {
            return Err(invalid("s", format!("need s <= d, got s={} d={}", self.s, self.d)));
        }
        if let NonzeroLaw::Custom { low, high } = self.law {
            if !(low > 0.0 && low <= high && low.is_finite() && high.is_finite()) {
                return Err(invalid("law", "custom law needs 0 < low <= high"));
            }
        }
        if !(self.bound() >= 1.0) {
            return Err(invalid("law", "bound M must be at least 1"));
        }
        if !(self.mu1 > 0.0 && self.mu1.is_finite()) {
            return Err(invalid("mu1", "must be positive and finite"));
        }
        Ok(())
    }
}

/// How the accuracy level `ε_t` evolves over the outer iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleMode {
    /// `ε_0 = 1/(2592 s²)` and ratio `25050 μ1 s³ / √d`.
    Theory,
    Geometric,
    Fixed,
    /// No thresholding; `ε_t = 0`.
    Off,
    /// `ε_t` is the median residual of the previous round (starts at `eps0`).
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracySchedule {
    pub eps0: f64,
    pub ratio: f64,
    pub mode: ScheduleMode,
}

impl AccuracySchedule {
    pub fn theory(s: usize, mu1: f64, d: usize) -> Self {
        let s = s as f64;
        Self {
            eps0: 1.0 / (2592.0 * s * s),
            ratio: 25050.0 * mu1 * s.powi(3) / (d as f64).sqrt(),
            mode: ScheduleMode::Theory,
        }
    }

    pub fn geometric(eps0: f64, ratio: f64) -> Self {
        Self {
            eps0,
            ratio,
            mode: ScheduleMode::Geometric,
        }
    }

    pub fn fixed(value: f64) -> Self {
        Self {
            eps0: value,
            ratio: 1.0,
            mode: ScheduleMode::Fixed,
        }
    }

    pub fn off() -> Self {
        Self {
            eps0: 0.0,
            ratio: 1.0,
            mode: ScheduleMode::Off,
        }
    }

    pub fn adaptive(eps0: f64) -> Self {
        Self {
            eps0,
            ratio: 1.0,
            mode: ScheduleMode::Adaptive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            ScheduleMode::Off => Ok(()),
            _ if !(self.eps0 > 0.0 && self.eps0.is_finite()) => {
                Err(invalid("eps0", "must be positive and finite"))
            }
            ScheduleMode::Geometric | ScheduleMode::Theory if !(self.ratio > 0.0) => {
                Err(invalid("ratio", "must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Whether a `9 s ε_t` threshold is applied after sparse recovery.
    pub fn thresholds(&self) -> bool {
        self.mode != ScheduleMode::Off
    }
}

/// Divides every column by its Euclidean norm.
pub fn normalize_columns(mut m: DMatrix<f64>) -> Result<Dictionary> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(invalid("dictionary", "empty matrix"));
    }
    for (j, mut c) in m.column_iter_mut().enumerate() {
        let n = c.norm();
        if !(n > ZERO_COLUMN_TOL) {
            return Err(Error::ZeroColumn { index: j, norm: n });
        }
        c /= n;
    }
    Ok(Dictionary { entries: m })
}

fn check_unit(v: DVectorView<'_, f64>) -> Result<()> {
    let n = v.norm();
    if (n - 1.0).abs() > UNIT_TOL {
        Err(Error::NotUnit { norm: n })
    } else {
        Ok(())
    }
}

fn check_same_len(u: DVectorView<'_, f64>, v: DVectorView<'_, f64>) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch {
            expected: (u.len(), 1),
            found: (v.len(), 1),
        });
    }
    Ok(())
}

/// `sqrt(1 - ⟨u,v⟩²)` for unit `u`, `v`: the sine of the angle between the lines they span.
///
/// Evaluated as the norm of the component of `v` orthogonal to `u`.
pub fn dist_vec(u: DVectorView<'_, f64>, v: DVectorView<'_, f64>) -> Result<f64> {
    check_same_len(u, v)?;
    check_unit(u)?;
    check_unit(v)?;
    Ok(line_distance(u, v))
}

// For unit u, v: ‖v − ⟨u,v⟩u‖² = 1 − ⟨u,v⟩². The left side keeps full relative
// precision for nearly parallel vectors, where 1 − c² cancels to ~1e-8.
fn line_distance(u: DVectorView<'_, f64>, v: DVectorView<'_, f64>) -> f64 {
    let c = u.dot(&v);
    let perp = |a: &DVectorView<'_, f64>, b: &DVectorView<'_, f64>| {
        a.iter().zip(b.iter()).map(|(ai, bi)| (ai - c * bi).powi(2)).sum::<f64>().sqrt()
    };
    (0.5 * (perp(&v, &u) + perp(&u, &v))).min(1.0)
}

/// `min(‖u − v‖, ‖u + v‖)` for unit vectors.
pub fn min_sign_l2(u: DVectorView<'_, f64>, v: DVectorView<'_, f64>) -> Result<f64> {
    check_same_len(u, v)?;
    check_unit(u)?;
    check_unit(v)?;
    Ok((u - v).norm().min((u + v).norm()))
}

fn check_shapes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    Ok(())
}

/// Largest column-wise line distance, columns matched by index.
pub fn dist_dict(a: &Dictionary, b: &Dictionary) -> Result<f64> {
    check_shapes(a.matrix(), b.matrix())?;
    Ok((0..a.atoms())
        .map(|p| line_distance(a.atom(p), b.atom(p)))
        .fold(0.0, f64::max))
}

/// `max_i sqrt(1 − ⟨A_i, A*_i⟩² / (‖A_i‖² ‖A*_i‖²))` on arbitrary (nonzero) columns.
pub fn error_metric(a: &DMatrix<f64>, astar: &DMatrix<f64>) -> Result<f64> {
    check_shapes(a, astar)?;
    let a = normalize_columns(a.clone())?;
    let b = normalize_columns(astar.clone())?;
    dist_dict(&a, &b)
}

/// Greedy best-match column assignment of `a` onto `reference` by largest `|⟨a_i, ref_j⟩|`.
///
/// Returns `perm` with `perm[j]` the column of `a` assigned to reference column `j`.
/// Only useful for runs that start far from the truth; experiments use identity matching.
pub fn greedy_match(a: &Dictionary, reference: &Dictionary) -> Result<Vec<usize>> {
    check_shapes(a.matrix(), reference.matrix())?;
    let r = a.atoms();
    let overlaps = (a.matrix().transpose() * reference.matrix()).abs();
    let mut pairs: Vec<(usize, usize)> = (0..r).flat_map(|i| (0..r).map(move |j| (i, j))).collect();
    pairs.sort_by(|x, y| overlaps[*y].total_cmp(&overlaps[*x]).then(x.cmp(y)));
    let mut perm = vec![usize::MAX; r];
    let mut used = vec![false; r];
    for (i, j) in pairs {
        if !used[i] && perm[j] == usize::MAX {
            used[i] = true;
            perm[j] = i;
        }
    }
    Ok(perm)
}

/// Distance after reordering `a`'s columns by `perm` (see [`greedy_match`]).
pub fn dist_dict_matched(a: &Dictionary, reference: &Dictionary) -> Result<f64> {
    let perm = greedy_match(a, reference)?;
    Ok(perm
        .iter()
        .enumerate()
        .map(|(j, &i)| line_distance(a.atom(i), reference.atom(j)))
        .fold(0.0, f64::max))
}

/// Convenience: column `j` of `m` as an owned vector.
pub fn column(m: &DMatrix<f64>, j: usize) -> DVector<f64> {
    m.column(j).into_owned()
}
