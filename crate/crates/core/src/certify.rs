//! Strict-convexity certificate for the loss on the zero-column-sum
//! subspace `Z`.
//!
//! The Hessian vanishes on `U` exactly when `U X = 𝟙 cᵀ`. If `rank X = D`
//! this forces `U = 𝟙 c̃ᵀ`, which meets `Z` only at zero, so the loss is
//! strictly convex on `Z`. Otherwise a left null vector `v` of `X` gives
//! a nonzero `U = e vᵀ ∈ Z` (any `e ⊥ 𝟙`) with `U X = 0`.

use nalgebra::SVD;
use serde::Serialize;

use crate::convergence::RANK_TOL;
use crate::model::Dataset;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    StrictlyConvexOnZ,
    Degenerate,
}

impl Verdict {
    pub fn describe(&self) -> &'static str {
        match self {
            Verdict::StrictlyConvexOnZ => "strictly convex on Z",
            Verdict::Degenerate => "not strictly convex; minimizers form affine family",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityCertificate {
    pub full_rank: bool,
    /// Numerical rank of `X` at the relative threshold.
    pub rank: usize,
    pub sv_min: f64,
    pub sv_max: f64,
    pub verdict: Verdict,
    /// A nonzero `U ∈ Z` with `U X = 0`, present when degenerate.
    pub degeneracy_witness: Option<Matrix>,
}

pub fn certify(data: &Dataset) -> ConvexityCertificate {
    let x = data.x();
    let (d, n) = (x.nrows(), x.ncols());
    // pad to at least D columns so the left singular vectors span ℝᴰ;
    // zero columns do not change the left null space
    let padded = if n < d {
        let mut p = Matrix::zeros(d, d);
        p.columns_mut(0, n).copy_from(x);
        p
    } else {
        x.clone()
    };
    let svd = SVD::new(padded, true, false);
    let sv = &svd.singular_values;
    let (imax, imin) = (sv.imax(), sv.imin());
    let (sv_max, sv_min) = (sv[imax], sv[imin]);
    let threshold = RANK_TOL * sv_max;
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    let full_rank = rank == d && sv_max > 0.0;

    let (verdict, degeneracy_witness) = if full_rank {
        (Verdict::StrictlyConvexOnZ, None)
    } else {
        let u = svd.u.as_ref().expect("left singular vectors requested");
        let v: Vector = u.column(imin).into_owned();
        let c = data.classes();
        let mut e = Vector::zeros(c);
        e[0] = std::f64::consts::FRAC_1_SQRT_2;
        e[1] = -std::f64::consts::FRAC_1_SQRT_2;
        (Verdict::Degenerate, Some(e * v.transpose()))
    };

    ConvexityCertificate {
        full_rank,
        rank,
        sv_min,
        sv_max,
        verdict,
        degeneracy_witness,
    }
}
