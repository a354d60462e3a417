//! Laplacian operators and a conjugate-gradient Poisson solver.
//!
//! Two discrete Laplacians live here. [`apply_laplacian`] is the classic
//! 5-point stencil with zero ghost values outside the grid. The *compatible*
//! Laplacian is the exact composition of the central-difference divergence
//! with the central-difference gradient on the interior cells, with the
//! potential pinned to zero on the outer ring. Solving with the compatible
//! operator makes `divergence(v - gradient(p))` vanish to solver tolerance,
//! which the 5-point operator cannot do on a collocated grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Bound on `||A x - b|| / ||b||`.
    pub tolerance: f64,
    /// Iteration cap; `None` means `10 * (width + height)`.
    pub max_iterations: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: None,
        }
    }
}

impl SolveOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidParameter(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn iteration_cap(&self, width: usize, height: usize) -> usize {
        self.max_iterations.unwrap_or(10 * (width + height))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative L2 residual of the returned solution, recomputed from scratch.
    pub final_residual: f64,
    pub converged: bool,
}

/// How the gradient treats the outer ring inside the compatible Laplacian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompatibleBoundary {
    /// Gradient uses one-sided differences on the ring, matching
    /// [`crate::field::gradient`] applied to a potential that is zero there.
    OneSided,
    /// Gradient is zero on the ring; corrections never touch boundary cells.
    Masked,
}

/// 5-point Laplacian with zero Dirichlet ghost values.
pub fn apply_laplacian(s: &ScalarField) -> ScalarField {
    let (w, h) = s.dims();
    let mut out = vec![0.0; w * h];
    laplacian_into(s.data(), &mut out, w, h);
    ScalarField::from_parts(w, h, out)
}

fn laplacian_into(s: &[f64], out: &mut [f64], w: usize, h: usize) {
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let i = row + x;
            let c = s[i];
            let l = if x > 0 { s[i - 1] } else { 0.0 };
            let r = if x + 1 < w { s[i + 1] } else { 0.0 };
            let u = if y > 0 { s[i - w] } else { 0.0 };
            let d = if y + 1 < h { s[i + w] } else { 0.0 };
            out[i] = l + r + u + d - 4.0 * c;
        }
    }
}

/// Gradient of one line of `n` samples whose end values are treated as zero.
fn line_gradient(p: impl Fn(usize) -> f64, g: &mut [f64], n: usize, boundary: CompatibleBoundary) {
    let at = |i: usize| if i == 0 || i == n - 1 { 0.0 } else { p(i) };
    match boundary {
        CompatibleBoundary::OneSided => {
            g[0] = at(1);
            g[n - 1] = -at(n - 2);
        }
        CompatibleBoundary::Masked => {
            g[0] = 0.0;
            g[n - 1] = 0.0;
        }
    }
    for k in 1..n - 1 {
        g[k] = 0.5 * (at(k + 1) - at(k - 1));
    }
}

fn compatible_into(s: &[f64], out: &mut [f64], w: usize, h: usize, boundary: CompatibleBoundary) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut g = vec![0.0; w.max(h)];
    for y in 1..h - 1 {
        let row = y * w;
        line_gradient(|i| s[row + i], &mut g[..w], w, boundary);
        for x in 1..w - 1 {
            out[row + x] += 0.5 * (g[x + 1] - g[x - 1]);
        }
    }
    for x in 1..w - 1 {
        line_gradient(|j| s[j * w + x], &mut g[..h], h, boundary);
        for y in 1..h - 1 {
            out[y * w + x] += 0.5 * (g[y + 1] - g[y - 1]);
        }
    }
}

/// Divergence of the gradient of `s` on interior cells, with `s` taken as zero
/// on the outer ring. The ring of the output is zero.
pub fn apply_compatible_laplacian(s: &ScalarField, boundary: CompatibleBoundary) -> ScalarField {
    let (w, h) = s.dims();
    let mut out = vec![0.0; w * h];
    compatible_into(s.data(), &mut out, w, h, boundary);
    ScalarField::from_parts(w, h, out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for a symmetric positive (semi-)definite operator.
///
/// Starts from zero. Consistent semi-definite systems converge to the
/// minimum-norm solution. Returns the iterate and its report whether or not
/// it converged.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> (Vec<f64>, SolveReport) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return (
            x,
            SolveReport {
                iterations: 0,
                final_residual: 0.0,
                converged: true,
            },
        );
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    let true_residual = |x: &[f64], r: &mut [f64], scratch: &mut [f64]| {
        apply(x, scratch);
        for i in 0..n {
            r[i] = b[i] - scratch[i];
        }
    };
    while iterations < max_iterations {
        iterations += 1;
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let mut rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tolerance * b_norm {
            // the recurrence drifts from the true residual; confirm before stopping
            true_residual(&x, &mut r, &mut ap);
            rr_new = dot(&r, &r);
            if rr_new.sqrt() <= tolerance * b_norm {
                rr = rr_new;
                break;
            }
            p.copy_from_slice(&r);
            rr = rr_new;
            continue;
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    true_residual(&x, &mut r, &mut ap);
    let final_residual = dot(&r, &r).sqrt() / b_norm;
    let _ = rr;
    (
        x,
        SolveReport {
            iterations,
            final_residual,
            converged: final_residual <= tolerance,
        },
    )
}

fn finish(field: ScalarField, report: SolveReport) -> Result<(ScalarField, SolveReport)> {
    if report.converged {
        Ok((field, report))
    } else {
        Err(Error::NotConverged(report))
    }
}

/// Solves `apply_laplacian(s) = rhs`, returning the iterate even when the
/// tolerance was not reached.
pub fn solve_poisson_unchecked(rhs: &ScalarField, opts: &SolveOptions) -> (ScalarField, SolveReport) {
    let (w, h) = rhs.dims();
    // CG on the SPD system -L s = -rhs
    let neg: Vec<f64> = rhs.data().iter().map(|v| -v).collect();
    let (x, report) = conjugate_gradient(
        |s, out| {
            laplacian_into(s, out, w, h);
            out.iter_mut().for_each(|v| *v = -*v);
        },
        &neg,
        opts.tolerance,
        opts.iteration_cap(w, h),
    );
    (ScalarField::from_parts(w, h, x), report)
}

/// Solves `apply_laplacian(s) = rhs` with zero Dirichlet boundary.
pub fn solve_poisson(rhs: &ScalarField, opts: &SolveOptions) -> Result<(ScalarField, SolveReport)> {
    opts.validate()?;
    let (s, report) = solve_poisson_unchecked(rhs, opts);
    finish(s, report)
}

/// Solves `apply_compatible_laplacian(s) = rhs` on interior cells. The ring of
/// `rhs` is ignored and the ring of the solution is zero.
pub fn solve_compatible_poisson(
    rhs: &ScalarField,
    boundary: CompatibleBoundary,
    opts: &SolveOptions,
) -> Result<(ScalarField, SolveReport)> {
    opts.validate()?;
    let (w, h) = rhs.dims();
    let mut neg = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            neg[y * w + x] = -rhs.get(x, y);
        }
    }
    let (x, report) = conjugate_gradient(
        |s, out| {
            compatible_into(s, out, w, h, boundary);
            out.iter_mut().for_each(|v| *v = -*v);
        },
        &neg,
        opts.tolerance,
        opts.iteration_cap(w, h),
    );
    finish(ScalarField::from_parts(w, h, x), report)
}
