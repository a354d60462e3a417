//! Minimal smoke simulator on the collocated grid: semi-Lagrangian advection
//! and pressure projection, no viscosity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{divergence, ensure_same_dims, ScalarField, VectorField};
use crate::poisson::{solve_compatible_poisson, CompatibleBoundary, SolveOptions, SolveReport};

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

/// Samples `q` at `p - dt * vel(p)` for every cell.
pub fn advect_scalar(q: &ScalarField, vel: &VectorField, dt: f64) -> Result<ScalarField> {
    check_dt(dt)?;
    ensure_same_dims(q.dims(), vel.dims())?;
    let (w, h) = q.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let v = vel.get(x, y);
            out.push(q.sample(x as f64 - dt * v[0], y as f64 - dt * v[1]));
        }
    }
    Ok(ScalarField::from_parts(w, h, out))
}

/// Vector counterpart of [`advect_scalar`]; both channels use the same backtrace.
pub fn advect_vector(q: &VectorField, vel: &VectorField, dt: f64) -> Result<VectorField> {
    check_dt(dt)?;
    ensure_same_dims(q.dims(), vel.dims())?;
    let (w, h) = q.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let v = vel.get(x, y);
            out.push(q.sample(x as f64 - dt * v[0], y as f64 - dt * v[1]));
        }
    }
    Ok(VectorField::from_parts(w, h, out))
}

/// Zeroes `u` on the left and right columns and `v` on the top and bottom rows.
pub fn zero_normal_velocity(vel: &VectorField) -> VectorField {
    let (w, h) = vel.dims();
    let mut data = vel.data().to_vec();
    for y in 0..h {
        for x in 0..w {
            let c = &mut data[y * w + x];
            if x == 0 || x == w - 1 {
                c[0] = 0.0;
            }
            if y == 0 || y == h - 1 {
                c[1] = 0.0;
            }
        }
    }
    VectorField::from_parts(w, h, data)
}

/// Removes the gradient part of `vel` so that its interior divergence vanishes.
///
/// Boundary normal velocity is zeroed first. The pressure solve uses the
/// masked compatible Laplacian, so the correction only touches interior cells
/// and `divergence(result)` is zero there up to the solver tolerance.
pub fn project_incompressible(vel: &VectorField) -> Result<VectorField> {
    project_incompressible_with(vel, &SolveOptions::default()).map(|(v, _)| v)
}

pub fn project_incompressible_with(
    vel: &VectorField,
    opts: &SolveOptions,
) -> Result<(VectorField, SolveReport)> {
    let clamped = zero_normal_velocity(vel);
    let div = divergence(&clamped);
    let (p, report) = solve_compatible_poisson(&div, CompatibleBoundary::Masked, opts)?;
    let (w, h) = vel.dims();
    let mut data = clamped.into_data();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            // p is zero on the ring, so these are the masked gradient's values
            let gx = 0.5 * (p.get(x + 1, y) - p.get(x - 1, y));
            let gy = 0.5 * (p.get(x, y + 1) - p.get(x, y - 1));
            let c = &mut data[y * w + x];
            c[0] -= gx;
            c[1] -= gy;
        }
    }
    Ok((VectorField::from_parts(w, h, data), report))
}

/// Circular region whose velocity and density are overwritten every step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inflow {
    pub center: [f64; 2],
    pub radius: f64,
    pub velocity: [f64; 2],
    #[serde(default = "default_inflow_density")]
    pub density: f64,
}

fn default_inflow_density() -> f64 {
    1.0
}

impl Inflow {
    pub fn validate(&self) -> Result<()> {
        let finite = self.center.iter().chain(&self.velocity).all(|v| v.is_finite());
        if !finite || !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "inflow needs a finite center, velocity and positive radius, got {self:?}"
            )));
        }
        if !(self.density >= 0.0 && self.density.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "inflow density must be non-negative, got {}",
                self.density
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        let dx = x as f64 - self.center[0];
        let dy = y as f64 - self.center[1];
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmokeState {
    pub velocity: VectorField,
    pub density: ScalarField,
    pub time: f64,
}

impl SmokeState {
    pub fn new(velocity: VectorField, density: ScalarField) -> Result<Self> {
        ensure_same_dims(velocity.dims(), density.dims())?;
        if let Some(index) = density.data().iter().position(|&d| d < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "density must be non-negative (cell {index})"
            )));
        }
        Ok(Self {
            velocity,
            density,
            time: 0.0,
        })
    }

    pub fn still(width: usize, height: usize) -> Result<Self> {
        Self::new(
            VectorField::zeros(width, height)?,
            ScalarField::zeros(width, height)?,
        )
    }
}

/// Advances the state by `dt`: force, inflows, velocity advection, projection,
/// density advection.
pub fn step_smoke(
    state: &SmokeState,
    force: &VectorField,
    dt: f64,
    inflows: &[Inflow],
) -> Result<SmokeState> {
    check_dt(dt)?;
    ensure_same_dims(state.velocity.dims(), force.dims())?;
    for inflow in inflows {
        inflow.validate()?;
    }
    let (w, h) = force.dims();
    let mut vel = state.velocity.data().to_vec();
    for (v, f) in vel.iter_mut().zip(force.data()) {
        v[0] += dt * f[0];
        v[1] += dt * f[1];
    }
    let mut density = state.density.data().to_vec();
    for inflow in inflows {
        for y in 0..h {
            for x in 0..w {
                if inflow.contains(x, y) {
                    vel[y * w + x] = inflow.velocity;
                    density[y * w + x] = inflow.density;
                }
            }
        }
    }
    let vel = VectorField::new(w, h, vel)?;
    let density = ScalarField::from_parts(w, h, density);
    let advected = advect_vector(&vel, &vel, dt)?;
    let velocity = project_incompressible(&advected)?;
    let density = advect_scalar(&density, &velocity, dt)?;
    Ok(SmokeState {
        velocity,
        density,
        time: state.time + dt,
    })
}

/// Maps density to 8-bit gray, with `scale` mapped to white.
pub fn density_frame(density: &ScalarField, scale: f64) -> crate::io::GrayImage {
    let pixels = density
        .data()
        .iter()
        .map(|&d| (d / scale * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    crate::io::GrayImage {
        width: density.width(),
        height: density.height(),
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gradient;
    use crate::metrics::cs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(w: usize, h: usize, seed: u64) -> VectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorField::from_fn(w, h, |_, _| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .unwrap()
    }

    fn rms(f: &VectorField) -> f64 {
        let n = f.data().len() as f64;
        (f.data().iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn zero_velocity_advection_is_identity() {
        let q = ScalarField::from_fn(9, 7, |x, y| (x * 7 + y * 3) as f64 * 0.13).unwrap();
        let v = VectorField::zeros(9, 7).unwrap();
        assert_eq!(advect_scalar(&q, &v, 0.7).unwrap(), q);
        let f = random_field(9, 7, 1);
        assert_eq!(advect_vector(&f, &v, 0.7).unwrap(), f);
    }

    #[test]
    fn unit_shift() {
        let q = ScalarField::from_fn(10, 6, |x, y| ((x * 31 + y * 17) % 11) as f64).unwrap();
        let v = VectorField::from_fn(10, 6, |_, _| [1.0, 0.0]).unwrap();
        let out = advect_scalar(&q, &v, 1.0).unwrap();
        for y in 0..6 {
            for x in 1..10 {
                assert_eq!(out.get(x, y), q.get(x - 1, y));
            }
            // backtrace leaves the grid and clamps to the first column
            assert_eq!(out.get(0, y), q.get(0, y));
        }
    }

    #[test]
    fn advection_max_principle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = ScalarField::from_fn(20, 20, |_, _| rng.random_range(0.0..3.0)).unwrap();
        let v = random_field(20, 20, 6).scale(4.0);
        let out = advect_scalar(&q, &v, 0.9).unwrap();
        assert!(out.min() >= q.min() && out.max() <= q.max());
    }

    #[test]
    fn advection_rejects_bad_dt() {
        let q = ScalarField::zeros(5, 5).unwrap();
        let v = VectorField::zeros(5, 5).unwrap();
        assert!(matches!(advect_scalar(&q, &v, 0.0), Err(Error::InvalidParameter(_))));
        let v6 = VectorField::zeros(6, 5).unwrap();
        assert!(matches!(advect_scalar(&q, &v6, 1.0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn projection_zeroes_interior_divergence() {
        for (w, h, seed) in [(16, 16, 1), (33, 20, 2), (64, 64, 3)] {
            let p = project_incompressible(&random_field(w, h, seed)).unwrap();
            assert!(cs(&p) <= 1e-8, "{w}x{h}: {}", cs(&p));
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let once = project_incompressible(&random_field(40, 30, 9)).unwrap();
        let twice = project_incompressible(&once).unwrap();
        assert!(rms(&twice.sub(&once).unwrap()) <= 1e-8);
    }

    #[test]
    fn projection_removes_gradients() {
        let (w, h) = (48, 40);
        let s = ScalarField::from_fn(w, h, |x, y| {
            (PI * x as f64 / (w - 1) as f64).sin() * (2.0 * PI * y as f64 / (h - 1) as f64).sin()
        })
        .unwrap();
        let g = gradient(&s);
        let out = project_incompressible(&g).unwrap();
        let max_in = g.max_magnitude();
        let max_out = out.magnitudes().interior().fold(0.0, f64::max);
        assert!(max_out <= 1e-6 * max_in, "{max_out} vs {max_in}");
    }

    #[test]
    fn projection_of_zero() {
        let z = VectorField::zeros(8, 8).unwrap();
        assert_eq!(project_incompressible(&z).unwrap(), z);
    }

    #[test]
    fn quiet_step_only_advances_time() {
        let density = ScalarField::from_fn(12, 12, |x, y| (x + y) as f64).unwrap();
        let state = SmokeState::new(VectorField::zeros(12, 12).unwrap(), density).unwrap();
        let next = step_smoke(&state, &VectorField::zeros(12, 12).unwrap(), 0.5, &[]).unwrap();
        assert_eq!(next.velocity, state.velocity);
        assert_eq!(next.density, state.density);
        assert_eq!(next.time, 0.5);
    }

    #[test]
    fn steps_are_divergence_free_and_deterministic() {
        let force = random_field(32, 32, 11);
        let inflows = [Inflow {
            center: [10.0, 16.0],
            radius: 3.0,
            velocity: [1.5, -0.5],
            density: 1.0,
        }];
        let mut a = SmokeState::still(32, 32).unwrap();
        let mut b = a.clone();
        for _ in 0..10 {
            a = step_smoke(&a, &force, 0.5, &inflows).unwrap();
            b = step_smoke(&b, &force, 0.5, &inflows).unwrap();
            assert!(cs(&a.velocity) <= 1e-8);
            assert!(a.density.min() >= 0.0);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_inflow() {
        let s = SmokeState::still(8, 8).unwrap();
        let bad = Inflow {
            center: [4.0, 4.0],
            radius: 0.0,
            velocity: [1.0, 0.0],
            density: 1.0,
        };
        let f = VectorField::zeros(8, 8).unwrap();
        assert!(matches!(step_smoke(&s, &f, 0.5, &[bad]), Err(Error::InvalidParameter(_))));
    }
}
