//! Exact spectrum of `Q = diag(y) - y yᵀ` for a probability vector `y`
//! (zero coordinates allowed).
//!
//! With `P = {j : yⱼ > 0}` and the distinct positive coordinates
//! `a₁ < … < a_r` occurring `ν₁, …, ν_r` times:
//!
//! * `0` is an eigenvalue of multiplicity `1 + #{j : yⱼ = 0}`;
//! * each `a_s` with `ν_s ≥ 2` is an eigenvalue of multiplicity `ν_s - 1`;
//! * each gap `(a_s, a_{s+1})` holds exactly one simple eigenvalue, the root
//!   of the secular equation `f(λ) = Σ ν_s a_s² / (a_s - λ) = 1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Coordinates closer than this are treated as equal.
pub const DEFAULT_GROUPING_TOL: f64 = 1e-12;
/// Gaps narrower than this are not bisected.
pub const DEGENERATE_GAP: f64 = 1e-10;
/// Absolute bracket width at which bisection stops.
pub const BISECTION_TOL: f64 = 1e-14;
/// Size guard for [`dense_q_spectrum`].
pub const DENSE_LIMIT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenKind {
    Zero,
    RepeatedCoordinate,
    InterlacedRoot,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub value: f64,
    pub multiplicity: usize,
    pub kind: EigenKind,
    /// The open interval `(a_s, a_{s+1})` containing an interlaced root.
    pub bracket: Option<(f64, f64)>,
    /// Set when the bracket was too narrow to bisect and the root was
    /// reported as its left endpoint.
    pub degenerate: bool,
}

/// A distinct positive coordinate value and how many times it occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistinctValue {
    pub value: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    /// Sorted ascending by value.
    pub eigenvalues: Vec<Eigenvalue>,
    /// Indices of the nonzero coordinates.
    pub support: Vec<usize>,
    pub distinct: Vec<DistinctValue>,
}

impl SpectrumReport {
    /// Eigenvalues repeated according to multiplicity, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .flat_map(|e| std::iter::repeat(e.value).take(e.multiplicity))
            .collect()
    }

    pub fn total_multiplicity(&self) -> usize {
        self.eigenvalues.iter().map(|e| e.multiplicity).sum()
    }

    pub fn zero_multiplicity(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|e| e.kind == EigenKind::Zero)
            .map(|e| e.multiplicity)
            .sum()
    }
}

fn validate(y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::InvalidInput("empty probability vector".into()));
    }
    if let Some(j) = y.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput(format!(
            "coordinate {j} = {} is outside [0, 1]",
            y[j]
        )));
    }
    let sum: f64 = y.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "coordinates sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// `f(λ) = Σ ν_s a_s² / (a_s - λ)`.
pub fn secular_function(distinct: &[DistinctValue], lambda: f64) -> f64 {
    distinct
        .iter()
        .map(|d| d.count as f64 * d.value * d.value / (d.value - lambda))
        .sum()
}

/// Root of `f(λ) = 1` strictly inside `(lo, hi)` where `f → -∞` at `lo⁺`
/// and `f → +∞` at `hi⁻`. The endpoints (poles) are never evaluated.
fn bisect_secular(distinct: &[DistinctValue], lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    loop {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BISECTION_TOL || mid <= lo || mid >= hi {
            return mid;
        }
        if secular_function(distinct, mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

pub fn analyze_q(y: &[f64]) -> Result<SpectrumReport> {
    analyze_q_with_tolerance(y, DEFAULT_GROUPING_TOL)
}

/// As [`analyze_q`] with an explicit coordinate-grouping tolerance.
///
/// Coordinates not exceeding `grouping_tol` count as zero; positive
/// coordinates within `grouping_tol` of their sorted predecessor join its
/// group, whose value is the group mean.
pub fn analyze_q_with_tolerance(y: &[f64], grouping_tol: f64) -> Result<SpectrumReport> {
    validate(y)?;

    let support: Vec<usize> = (0..y.len()).filter(|&j| y[j] > grouping_tol).collect();
    let zeros = y.len() - support.len();

    let mut positive: Vec<f64> = support.iter().map(|&j| y[j]).collect();
    positive.sort_by(f64::total_cmp);

    let mut groups: Vec<Vec<f64>> = Vec::new();
    for v in positive {
        match groups.last_mut() {
            Some(g) if v - g[g.len() - 1] <= grouping_tol => g.push(v),
            _ => groups.push(vec![v]),
        }
    }
    let distinct: Vec<DistinctValue> = groups
        .iter()
        .map(|g| DistinctValue {
            value: g.iter().sum::<f64>() / g.len() as f64,
            count: g.len(),
        })
        .collect();

    let mut eigenvalues = vec![Eigenvalue {
        value: 0.0,
        multiplicity: 1 + zeros,
        kind: EigenKind::Zero,
        bracket: None,
        degenerate: false,
    }];
    for d in distinct.iter().filter(|d| d.count >= 2) {
        eigenvalues.push(Eigenvalue {
            value: d.value,
            multiplicity: d.count - 1,
            kind: EigenKind::RepeatedCoordinate,
            bracket: None,
            degenerate: false,
        });
    }
    for pair in distinct.windows(2) {
        let (lo, hi) = (pair[0].value, pair[1].value);
        let degenerate = hi - lo < DEGENERATE_GAP;
        let value = if degenerate {
            lo
        } else {
            bisect_secular(&distinct, lo, hi)
        };
        eigenvalues.push(Eigenvalue {
            value,
            multiplicity: 1,
            kind: EigenKind::InterlacedRoot,
            bracket: Some((lo, hi)),
            degenerate,
        });
    }
    eigenvalues.sort_by(|a, b| a.value.total_cmp(&b.value));

    Ok(SpectrumReport {
        eigenvalues,
        support,
        distinct,
    })
}

/// Eigenvalues of the explicitly formed `Q`, ascending.
pub fn dense_q_spectrum(y: &[f64]) -> Result<Vec<f64>> {
    validate(y)?;
    if y.len() > DENSE_LIMIT {
        return Err(Error::TooLarge {
            size: y.len(),
            limit: DENSE_LIMIT,
        });
    }
    let q = crate::hessian::q_matrix(&Vector::from_column_slice(y));
    let mut eig: Vec<f64> = q.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Orthonormal basis of the null space of `Q`: the normalized indicator of
/// the support followed by `e_j` for every zero coordinate `j`.
pub fn nullspace_basis(y: &[f64]) -> Result<Vec<Vector>> {
    validate(y)?;
    let c = y.len();
    let support: Vec<usize> = (0..c).filter(|&j| y[j] > DEFAULT_GROUPING_TOL).collect();
    let mut indicator = Vector::zeros(c);
    for &j in &support {
        indicator[j] = 1.0;
    }
    indicator /= (support.len() as f64).sqrt();
    let mut basis = vec![indicator];
    for j in (0..c).filter(|j| !support.contains(j)) {
        let mut e = Vector::zeros(c);
        e[j] = 1.0;
        basis.push(e);
    }
    Ok(basis)
}

/// Convenience: the matrix `Q` for a probability vector.
pub fn q_of(y: &[f64]) -> Matrix {
    crate::hessian::q_matrix(&Vector::from_column_slice(y))
}
