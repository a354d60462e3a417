//! Field synthesis: analytic patterns, rule-based river-like flows, inflow
//! simulations and the six property categories.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{gradient, normalize_field, perp_gradient, NormMode, ScalarField, VectorField};
use crate::filter::gaussian_blur;
use crate::sim::{step_smoke, Inflow, SmokeState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternKind {
    Convergent,
    Divergent,
    Vortex,
    Constant,
    RotatedConstant,
    Saddle,
    SineWave,
}

impl PatternKind {
    pub const ALL: [PatternKind; 7] = [
        PatternKind::Convergent,
        PatternKind::Divergent,
        PatternKind::Vortex,
        PatternKind::Constant,
        PatternKind::RotatedConstant,
        PatternKind::Saddle,
        PatternKind::SineWave,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub kind: PatternKind,
    /// Grid coordinates (column, row).
    pub center: [f64; 2],
    pub strength: f64,
    /// Radians; used by the constant kinds and the sine wave.
    #[serde(default)]
    pub angle: f64,
    /// Cells; used by the sine wave.
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
}

fn default_wavelength() -> f64 {
    16.0
}

/// Peak deflection of the sine-wave direction from its axis.
const SINE_SWING: f64 = PI / 4.0;

impl PatternSpec {
    pub fn new(kind: PatternKind, center: [f64; 2], strength: f64) -> Self {
        Self {
            kind,
            center,
            strength,
            angle: 0.0,
            wavelength: default_wavelength(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.center[0], self.center[1], self.strength, self.angle]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter(format!("non-finite pattern parameter in {self:?}")));
        }
        if !(self.wavelength >= 2.0 && self.wavelength.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "wavelength must be at least 2 cells, got {}",
                self.wavelength
            )));
        }
        Ok(())
    }

    /// Draws a pattern with parameters in the documented default ranges.
    pub fn random(rng: &mut impl Rng, width: usize, height: usize) -> Self {
        let kind = PatternKind::ALL[rng.random_range(0..PatternKind::ALL.len())];
        let center = [
            rng.random_range(0.2..0.8) * (width - 1) as f64,
            rng.random_range(0.2..0.8) * (height - 1) as f64,
        ];
        let angle = match kind {
            PatternKind::Constant => 0.0,
            _ => rng.random_range(0.0..TAU),
        };
        let side = width.min(height) as f64;
        Self {
            kind,
            center,
            strength: rng.random_range(0.5..2.0),
            angle,
            wavelength: rng.random_range(0.25..1.0) * side,
        }
    }
}

/// Evaluates one pattern on every cell.
///
/// The radial kinds are built from a sampled potential (`r = |p - c|`)
/// through the grid's gradient stencils, so the divergent and convergent
/// fields are discretely curl-free and the vortex is discretely
/// divergence-free on interior cells. Away from the center they agree with
/// the analytic unit fields; a center that falls on a cell gets the zero
/// vector.
pub fn basic_pattern(spec: &PatternSpec, width: usize, height: usize) -> Result<VectorField> {
    spec.validate()?;
    let [cx, cy] = spec.center;
    let radius = || ScalarField::from_fn(width, height, |x, y| spec.strength * (x as f64 - cx).hypot(y as f64 - cy));
    match spec.kind {
        PatternKind::Divergent => Ok(gradient(&radius()?)),
        PatternKind::Convergent => Ok(gradient(&radius()?.map(|v| -v))),
        PatternKind::Vortex => Ok(perp_gradient(&radius()?.map(|v| -v))),
        PatternKind::Constant | PatternKind::RotatedConstant => {
            let v = [spec.strength * spec.angle.cos(), spec.strength * spec.angle.sin()];
            VectorField::from_fn(width, height, |_, _| v)
        }
        PatternKind::Saddle => VectorField::from_fn(width, height, |x, y| {
            [spec.strength * (x as f64 - cx), -spec.strength * (y as f64 - cy)]
        }),
        PatternKind::SineWave => {
            let axis = [spec.angle.cos(), spec.angle.sin()];
            VectorField::from_fn(width, height, |x, y| {
                let s = (x as f64 - cx) * axis[0] + (y as f64 - cy) * axis[1];
                let theta = spec.angle + SINE_SWING * (TAU * s / spec.wavelength).sin();
                [spec.strength * theta.cos(), spec.strength * theta.sin()]
            })
        }
    }
}

/// Weighted sum of patterns, max-norm normalized.
pub fn combine_patterns(specs: &[(PatternSpec, f64)], width: usize, height: usize) -> Result<VectorField> {
    if specs.is_empty() {
        return Err(Error::InvalidParameter("at least one pattern is required".into()));
    }
    let mut sum = VectorField::zeros(width, height)?;
    for (spec, weight) in specs {
        if !weight.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite weight {weight}")));
        }
        sum = sum.add(&basic_pattern(spec, width, height)?.scale(*weight))?;
    }
    normalize_field(&sum, NormMode::MaxNorm)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowDirection {
    Up,
    Down,
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tributary {
    /// Where the tributary meets the main flow.
    pub attach: [f64; 2],
    /// Flow direction in radians.
    pub direction: f64,
    /// Gaussian half-width across the tributary, in cells.
    pub spread: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleVortex {
    pub center: [f64; 2],
    /// Signed; positive spins like [`PatternKind::Vortex`] with positive strength.
    pub intensity: f64,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    Source,
    Sink,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSink {
    pub center: [f64; 2],
    pub scale: f64,
    pub intensity: f64,
    pub polarity: Polarity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleFieldSpec {
    pub main_direction: FlowDirection,
    #[serde(default)]
    pub meander_amplitude: f64,
    #[serde(default = "default_meander_wavelength")]
    pub meander_wavelength: f64,
    pub main_width: f64,
    pub main_intensity: f64,
    #[serde(default)]
    pub tributaries: Vec<Tributary>,
    #[serde(default)]
    pub vortices: Vec<RuleVortex>,
    #[serde(default)]
    pub sources_sinks: Vec<SourceSink>,
    #[serde(default)]
    pub smoothing_sigma: f64,
}

fn default_meander_wavelength() -> f64 {
    32.0
}

impl RuleFieldSpec {
    pub fn straight(direction: FlowDirection, width: f64) -> Self {
        Self {
            main_direction: direction,
            meander_amplitude: 0.0,
            meander_wavelength: default_meander_wavelength(),
            main_width: width,
            main_intensity: 1.0,
            tributaries: Vec::new(),
            vortices: Vec::new(),
            sources_sinks: Vec::new(),
            smoothing_sigma: 0.0,
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.main_width >= 1.0 && self.main_width.is_finite()) {
            return bad(format!("main_width must be at least 1, got {}", self.main_width));
        }
        if !(self.smoothing_sigma >= 0.0 && self.smoothing_sigma.is_finite()) {
            return bad(format!("smoothing_sigma must be non-negative, got {}", self.smoothing_sigma));
        }
        if !self.meander_amplitude.is_finite() || !self.main_intensity.is_finite() {
            return bad("meander amplitude and intensity must be finite".into());
        }
        if self.meander_amplitude != 0.0 && !(self.meander_wavelength > 0.0 && self.meander_wavelength.is_finite()) {
            return bad(format!("meander_wavelength must be positive, got {}", self.meander_wavelength));
        }
        let inside = |c: [f64; 2]| {
            (0.0..=(width - 1) as f64).contains(&c[0]) && (0.0..=(height - 1) as f64).contains(&c[1])
        };
        let centers = self
            .tributaries
            .iter()
            .map(|t| t.attach)
            .chain(self.vortices.iter().map(|v| v.center))
            .chain(self.sources_sinks.iter().map(|s| s.center));
        for c in centers {
            if !inside(c) {
                return bad(format!("center ({}, {}) lies outside the {width}x{height} grid", c[0], c[1]));
            }
        }
        for t in &self.tributaries {
            if !(t.spread > 0.0) || !t.direction.is_finite() {
                return bad(format!("tributary needs a positive spread and finite direction: {t:?}"));
            }
        }
        for v in &self.vortices {
            if !(v.radius > 0.0) || !v.intensity.is_finite() {
                return bad(format!("vortex needs a positive radius and finite intensity: {v:?}"));
            }
        }
        for s in &self.sources_sinks {
            if !(s.scale > 0.0) || !s.intensity.is_finite() {
                return bad(format!("source/sink needs a positive scale and finite intensity: {s:?}"));
            }
        }
        Ok(())
    }

    /// Draws a spec from the documented default ranges.
    pub fn random(rng: &mut impl Rng, width: usize, height: usize) -> Self {
        let dirs = [FlowDirection::Up, FlowDirection::Down, FlowDirection::Left, FlowDirection::Right];
        let side = width.min(height) as f64;
        let point = |rng: &mut dyn rand::RngCore| {
            [
                rng.random_range(0.1..0.9) * (width - 1) as f64,
                rng.random_range(0.1..0.9) * (height - 1) as f64,
            ]
        };
        let tributaries = (0..rng.random_range(0..=2))
            .map(|_| Tributary {
                attach: point(rng),
                direction: rng.random_range(0.0..TAU),
                spread: rng.random_range(0.03..0.08) * side,
            })
            .collect();
        let vortices = (0..rng.random_range(0..=2))
            .map(|_| RuleVortex {
                center: point(rng),
                intensity: rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                radius: rng.random_range(0.05..0.15) * side,
            })
            .collect();
        let sources_sinks = (0..rng.random_range(0..=2))
            .map(|_| SourceSink {
                center: point(rng),
                scale: rng.random_range(0.05..0.15) * side,
                intensity: rng.random_range(0.5..1.5),
                polarity: if rng.random_bool(0.5) { Polarity::Source } else { Polarity::Sink },
            })
            .collect();
        Self {
            main_direction: dirs[rng.random_range(0..4)],
            meander_amplitude: rng.random_range(0.0..0.15) * side,
            meander_wavelength: rng.random_range(0.3..1.0) * side,
            main_width: rng.random_range(0.1..0.3) * side,
            main_intensity: rng.random_range(0.5..1.5),
            tributaries,
            vortices,
            sources_sinks,
            smoothing_sigma: rng.random_range(0.5..2.0),
        }
    }
}

fn gaussian(d2: f64, s: f64) -> f64 {
    (-d2 / (2.0 * s * s)).exp()
}

/// Main flow band, tributaries, vortices and sources/sinks summed, smoothed
/// with a Gaussian truncated at `4 sigma`, then scaled to unit length
/// wherever the result is nonzero.
pub fn rule_based_field(spec: &RuleFieldSpec, width: usize, height: usize) -> Result<VectorField> {
    spec.validate(width, height)?;
    let reach = width.max(height) as f64 / 3.0;
    let base = VectorField::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut v = main_flow(spec, xf, yf, width, height);
        for t in &spec.tributaries {
            let d = [t.direction.cos(), t.direction.sin()];
            let rel = [xf - t.attach[0], yf - t.attach[1]];
            let along = rel[0] * d[0] + rel[1] * d[1];
            let across = rel[0] * d[1] - rel[1] * d[0];
            // only upstream of the attachment point
            if (-reach..=0.0).contains(&along) {
                let g = spec.main_intensity * gaussian(across * across, t.spread);
                v[0] += g * d[0];
                v[1] += g * d[1];
            }
        }
        for vo in &spec.vortices {
            let (dx, dy) = (xf - vo.center[0], yf - vo.center[1]);
            let g = vo.intensity / vo.radius * gaussian(dx * dx + dy * dy, vo.radius);
            v[0] -= g * dy;
            v[1] += g * dx;
        }
        for s in &spec.sources_sinks {
            let (dx, dy) = (xf - s.center[0], yf - s.center[1]);
            let sign = match s.polarity {
                Polarity::Source => 1.0,
                Polarity::Sink => -1.0,
            };
            let g = sign * s.intensity / s.scale * gaussian(dx * dx + dy * dy, s.scale);
            v[0] += g * dx;
            v[1] += g * dy;
        }
        v
    })?;
    let smoothed = smooth(&base, spec.smoothing_sigma);
    Ok(smoothed.map(|v| {
        let n = v[0].hypot(v[1]);
        if n > 0.0 {
            [v[0] / n, v[1] / n]
        } else {
            [0.0, 0.0]
        }
    }))
}

fn main_flow(spec: &RuleFieldSpec, x: f64, y: f64, width: usize, height: usize) -> [f64; 2] {
    let horizontal = matches!(spec.main_direction, FlowDirection::Left | FlowDirection::Right);
    // (along, across) coordinates with the band centered across the grid
    let (s, t, mid) = if horizontal {
        (x, y, (height - 1) as f64 / 2.0)
    } else {
        (y, x, (width - 1) as f64 / 2.0)
    };
    let (offset, slope) = if spec.meander_amplitude != 0.0 {
        let k = TAU / spec.meander_wavelength;
        (spec.meander_amplitude * (k * s).sin(), spec.meander_amplitude * k * (k * s).cos())
    } else {
        (0.0, 0.0)
    };
    if (t - mid - offset).abs() > spec.main_width / 2.0 {
        return [0.0, 0.0];
    }
    let n = 1.0f64.hypot(slope);
    let (along, across) = (spec.main_intensity / n, spec.main_intensity * slope / n);
    match spec.main_direction {
        FlowDirection::Right => [along, across],
        FlowDirection::Left => [-along, -across],
        FlowDirection::Down => [across, along],
        FlowDirection::Up => [-across, -along],
    }
}

fn smooth(f: &VectorField, sigma: f64) -> VectorField {
    let radius = (4.0 * sigma).floor() as usize;
    if sigma == 0.0 || radius == 0 {
        return f.clone();
    }
    let (w, h) = f.dims();
    let u = gaussian_blur(&f.channel(0).into_data(), w, h, sigma, radius);
    let v = gaussian_blur(&f.channel(1).into_data(), w, h, sigma, radius);
    VectorField::from_parts(w, h, u.into_iter().zip(v).map(|(a, b)| [a, b]).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InflowRegion {
    pub center: [f64; 2],
    pub radius: f64,
    /// Outflow direction in radians.
    pub direction: f64,
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InflowScenario {
    pub regions: Vec<InflowRegion>,
    pub steps: usize,
    pub dt: f64,
}

pub const DEFAULT_DT: f64 = 0.5;

impl InflowScenario {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        for r in &self.regions {
            let inside = (0.0..=(width - 1) as f64).contains(&r.center[0])
                && (0.0..=(height - 1) as f64).contains(&r.center[1]);
            if !inside || !(r.radius > 0.0) || !r.direction.is_finite() || !r.speed.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "inflow region needs a center inside the grid and a positive radius: {r:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn inflows(&self) -> Vec<Inflow> {
        self.regions
            .iter()
            .map(|r| Inflow {
                center: r.center,
                radius: r.radius,
                velocity: [r.speed * r.direction.cos(), r.speed * r.direction.sin()],
                density: 1.0,
            })
            .collect()
    }

    pub fn random(rng: &mut impl Rng, width: usize, height: usize) -> Self {
        let side = width.min(height) as f64;
        let regions = (0..rng.random_range(1..=3))
            .map(|_| InflowRegion {
                center: [
                    rng.random_range(0.2..0.8) * (width - 1) as f64,
                    rng.random_range(0.2..0.8) * (height - 1) as f64,
                ],
                radius: rng.random_range(0.04..0.1) * side,
                direction: rng.random_range(0.0..TAU),
                speed: rng.random_range(0.5..2.0),
            })
            .collect();
        Self {
            regions,
            steps: rng.random_range(10..=30),
            dt: DEFAULT_DT,
        }
    }
}

/// Runs the smoke solver from rest with the scenario's inflows imposed every
/// step and returns the velocity after each step.
pub fn simulate_inflow(scenario: &InflowScenario, width: usize, height: usize) -> Result<Vec<VectorField>> {
    scenario.validate(width, height)?;
    let inflows = scenario.inflows();
    let force = VectorField::zeros(width, height)?;
    let mut state = SmokeState::still(width, height)?;
    let mut out = Vec::with_capacity(scenario.steps);
    for _ in 0..scenario.steps {
        state = step_smoke(&state, &force, scenario.dt, &inflows)?;
        out.push(state.velocity.clone());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FieldCategory {
    #[serde(rename = "irrotational")]
    Irrotational,
    #[serde(rename = "incompressible")]
    Incompressible,
    #[serde(rename = "harmonic")]
    Harmonic,
    #[serde(rename = "irrotational+harmonic")]
    IrrotationalHarmonic,
    #[serde(rename = "incompressible+harmonic")]
    IncompressibleHarmonic,
    #[serde(rename = "all")]
    All,
}

impl FieldCategory {
    pub const ALL: [FieldCategory; 6] = [
        FieldCategory::Irrotational,
        FieldCategory::Incompressible,
        FieldCategory::Harmonic,
        FieldCategory::IrrotationalHarmonic,
        FieldCategory::IncompressibleHarmonic,
        FieldCategory::All,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            FieldCategory::Irrotational => "irrotational",
            FieldCategory::Incompressible => "incompressible",
            FieldCategory::Harmonic => "harmonic",
            FieldCategory::IrrotationalHarmonic => "irrotational+harmonic",
            FieldCategory::IncompressibleHarmonic => "incompressible+harmonic",
            FieldCategory::All => "all",
        }
    }

    /// `(curl-free part, div-free part, harmonic part)` present in the category.
    pub fn parts(self) -> (bool, bool, bool) {
        match self {
            FieldCategory::Irrotational => (true, false, false),
            FieldCategory::Incompressible => (false, true, false),
            FieldCategory::Harmonic => (false, false, true),
            FieldCategory::IrrotationalHarmonic => (true, false, true),
            FieldCategory::IncompressibleHarmonic => (false, true, true),
            FieldCategory::All => (true, true, true),
        }
    }
}

impl fmt::Display for FieldCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FieldCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FieldCategory::ALL
            .into_iter()
            .find(|c| c.tag() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown field category {s:?}")))
    }
}

/// Most sinusoidal modes in a random smooth potential.
pub const MAX_MODES: usize = 8;
const MAX_WAVENUMBER: i32 = 3;

/// Band-limited random scalar: a sum of up to [`MAX_MODES`] plane sinusoids
/// with integer wavenumbers of at most 3 periods across the grid.
pub fn smooth_potential(rng: &mut impl Rng, width: usize, height: usize) -> Result<ScalarField> {
    let modes: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(3..=MAX_MODES))
        .map(|_| {
            let (kx, ky) = loop {
                let kx = rng.random_range(-MAX_WAVENUMBER..=MAX_WAVENUMBER);
                let ky = rng.random_range(0..=MAX_WAVENUMBER);
                if kx != 0 || ky != 0 {
                    break (kx, ky);
                }
            };
            let amp = rng.random_range(-1.0..1.0) / ((kx * kx + ky * ky) as f64).sqrt();
            (
                TAU * kx as f64 / width as f64,
                TAU * ky as f64 / height as f64,
                amp,
                rng.random_range(0.0..TAU),
            )
        })
        .collect();
    ScalarField::from_fn(width, height, |x, y| {
        modes
            .iter()
            .map(|&(wx, wy, a, ph)| a * (wx * x as f64 + wy * y as f64 + ph).sin())
            .sum()
    })
}

/// Random affine field `(a + b x + c y, d + c x - b y)`, both curl- and
/// divergence-free, with coordinates centered and scaled by the larger side.
pub fn affine_harmonic(rng: &mut impl Rng, width: usize, height: usize) -> Result<VectorField> {
    let [a, b, c, d] = [0; 4].map(|_| rng.random_range(-1.0..1.0));
    let l = width.max(height) as f64;
    let (cx, cy) = ((width - 1) as f64 / 2.0, (height - 1) as f64 / 2.0);
    VectorField::from_fn(width, height, |x, y| {
        let (xs, ys) = ((x as f64 - cx) / l, (y as f64 - cy) / l);
        [a + b * xs + c * ys, d + c * xs - b * ys]
    })
}

/// Field whose components are exactly those named by `tag`, max-norm
/// normalized. Each present part is scaled to unit peak before summing.
pub fn generate_category(tag: FieldCategory, seed: u64, width: usize, height: usize) -> Result<VectorField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (curl_free, div_free, harmonic) = tag.parts();
    let mut sum = VectorField::zeros(width, height)?;
    let mut add = |part: VectorField| -> Result<()> {
        sum = sum.add(&normalize_field(&part, NormMode::MaxNorm)?)?;
        Ok(())
    };
    if curl_free {
        add(gradient(&smooth_potential(&mut rng, width, height)?))?;
    }
    if div_free {
        add(perp_gradient(&smooth_potential(&mut rng, width, height)?))?;
    }
    if harmonic {
        add(affine_harmonic(&mut rng, width, height)?)?;
    }
    normalize_field(&sum, NormMode::MaxNorm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{curl2d, divergence};
    use crate::metrics::{cme, cs};

    fn max_interior(s: &ScalarField) -> f64 {
        s.interior().map(f64::abs).fold(0.0, f64::max)
    }

    #[test]
    fn vortex_is_divergence_free_with_curl_at_center() {
        for center in [[16.0, 16.0], [10.3, 21.7]] {
            let f = basic_pattern(&PatternSpec::new(PatternKind::Vortex, center, 1.5), 32, 32).unwrap();
            let scale = f.max_magnitude();
            assert!(max_interior(&divergence(&f)) <= 1e-10 * scale);
            let c = curl2d(&f);
            let (x, y) = (center[0].round() as usize, center[1].round() as usize);
            assert!(c.get(x + 1, y).abs() > 0.1, "curl {}", c.get(x + 1, y));
        }
    }

    #[test]
    fn vortex_matches_analytic_direction_away_from_center() {
        let f = basic_pattern(&PatternSpec::new(PatternKind::Vortex, [16.0, 16.0], 1.0), 32, 32).unwrap();
        // analytic: perpendicular of the outward unit vector
        let (x, y) = (24usize, 11usize);
        let (dx, dy) = (8.0f64, -5.0f64);
        let r = dx.hypot(dy);
        let v = f.get(x, y);
        let cos = (v[0] * -dy / r + v[1] * dx / r) / v[0].hypot(v[1]);
        assert!(cos > 0.99, "{cos}");
        assert_eq!(f.get(16, 16), [0.0, 0.0]);
    }

    #[test]
    fn divergent_is_curl_free_and_points_outward() {
        let spec = PatternSpec::new(PatternKind::Divergent, [12.0, 20.0], 2.0);
        let f = basic_pattern(&spec, 40, 30).unwrap();
        assert!(max_interior(&curl2d(&f)) <= 1e-10 * f.max_magnitude());
        assert!(f.get(30, 20)[0] > 0.0 && f.get(2, 20)[0] < 0.0);
        let g = basic_pattern(&PatternSpec { kind: PatternKind::Convergent, ..spec }, 40, 30).unwrap();
        assert_eq!(g, f.scale(-1.0));
    }

    #[test]
    fn constant_and_saddle() {
        let f = basic_pattern(&PatternSpec::new(PatternKind::Constant, [0.0, 0.0], 1.0), 5, 5).unwrap();
        assert!(f.data().iter().all(|&v| v == [1.0, 0.0]));
        let s = basic_pattern(&PatternSpec::new(PatternKind::Saddle, [2.0, 3.0], 0.5), 6, 6).unwrap();
        assert_eq!(s.get(4, 0), [1.0, 1.5]);
    }

    #[test]
    fn sine_wave_stays_within_swing() {
        let spec = PatternSpec {
            angle: 0.3,
            wavelength: 8.0,
            ..PatternSpec::new(PatternKind::SineWave, [5.0, 5.0], 2.0)
        };
        let f = basic_pattern(&spec, 20, 20).unwrap();
        for v in f.data() {
            assert!((v[0].hypot(v[1]) - 2.0).abs() < 1e-12);
            let dev = (v[1].atan2(v[0]) - 0.3).abs();
            assert!(dev <= SINE_SWING + 1e-12);
        }
        let bad = PatternSpec { wavelength: 1.5, ..spec };
        assert!(matches!(basic_pattern(&bad, 20, 20), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn combine_single_and_cancelling() {
        let v = PatternSpec::new(PatternKind::Vortex, [9.0, 7.0], 1.0);
        let one = combine_patterns(&[(v, 1.0)], 20, 16).unwrap();
        let direct = normalize_field(&basic_pattern(&v, 20, 16).unwrap(), NormMode::MaxNorm).unwrap();
        assert_eq!(one, direct);
        let neg = PatternSpec { strength: -1.0, ..v };
        assert!(matches!(
            combine_patterns(&[(v, 1.0), (neg, 1.0)], 20, 16),
            Err(Error::DegenerateField(_))
        ));
        assert!(matches!(combine_patterns(&[], 20, 16), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn combine_is_deterministic_in_seed() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let specs: Vec<_> = (0..3)
                .map(|_| (PatternSpec::random(&mut rng, 24, 24), rng.random_range(0.5..1.5)))
                .collect();
            combine_patterns(&specs, 24, 24).unwrap()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn straight_band_geometry() {
        let sigma = 1.0;
        let spec = RuleFieldSpec {
            smoothing_sigma: sigma,
            ..RuleFieldSpec::straight(FlowDirection::Right, 8.0)
        };
        let f = rule_based_field(&spec, 32, 32).unwrap();
        let mid = 15.5;
        for y in 1..31 {
            let d = (y as f64 - mid).abs();
            for x in 1..31 {
                let v = f.get(x, y);
                if d <= 4.0 {
                    assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12, "{x},{y}: {v:?}");
                } else if d > 4.0 + 4.0 * sigma {
                    assert_eq!(v, [0.0, 0.0], "{x},{y}");
                }
            }
        }
    }

    #[test]
    fn zero_sigma_means_no_blur() {
        let spec = RuleFieldSpec::straight(FlowDirection::Up, 6.0);
        let f = rule_based_field(&spec, 20, 20).unwrap();
        // x = 9.5 +- 3: columns 7..=12 carry (0, -1), everything else is zero
        for y in 0..20 {
            for x in 0..20 {
                let expect = if (7..=12).contains(&x) { [0.0, -1.0] } else { [0.0, 0.0] };
                assert_eq!(f.get(x, y), expect);
            }
        }
    }

    #[test]
    fn sink_has_negative_divergence() {
        let mut spec = RuleFieldSpec::straight(FlowDirection::Right, 6.0);
        spec.smoothing_sigma = 1.0;
        spec.sources_sinks.push(SourceSink {
            center: [10.0, 5.0],
            scale: 3.0,
            intensity: 1.0,
            polarity: Polarity::Sink,
        });
        let f = rule_based_field(&spec, 32, 32).unwrap();
        assert!(divergence(&f).get(10, 5) < 0.0);
        spec.sources_sinks[0].polarity = Polarity::Source;
        let f = rule_based_field(&spec, 32, 32).unwrap();
        assert!(divergence(&f).get(10, 5) > 0.0);
    }

    #[test]
    fn rule_validation() {
        let mut spec = RuleFieldSpec::straight(FlowDirection::Left, 0.5);
        assert!(rule_based_field(&spec, 16, 16).is_err());
        spec.main_width = 2.0;
        spec.vortices.push(RuleVortex {
            center: [20.0, 3.0],
            intensity: 1.0,
            radius: 2.0,
        });
        assert!(matches!(rule_based_field(&spec, 16, 16), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn random_rule_fields_are_unit_or_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let spec = RuleFieldSpec::random(&mut rng, 48, 40);
            let f = rule_based_field(&spec, 48, 40).unwrap();
            for v in f.data() {
                let n = v[0].hypot(v[1]);
                assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_inflow_step() {
        let scenario = InflowScenario {
            regions: vec![InflowRegion {
                center: [31.5, 31.5],
                radius: 5.0,
                direction: 0.5,
                speed: 1.0,
            }],
            steps: 1,
            dt: 0.5,
        };
        let seq = simulate_inflow(&scenario, 64, 64).unwrap();
        assert_eq!(seq.len(), 1);
        assert!(cs(&seq[0]) <= 1e-8);
        let d = [0.5f64.cos(), 0.5f64.sin()];
        // the projection bends the rim of the jet, so look one ring inside it
        let core = Inflow {
            radius: 3.0,
            ..scenario.inflows()[0]
        };
        let mut mean = [0.0; 2];
        for y in 0..64 {
            for x in 0..64 {
                if core.contains(x, y) {
                    let v = seq[0].get(x, y);
                    let cos = (v[0] * d[0] + v[1] * d[1]) / v[0].hypot(v[1]);
                    assert!(cos > 0.9, "{x},{y}: {cos}");
                    mean[0] += v[0];
                    mean[1] += v[1];
                }
            }
        }
        let cos = (mean[0] * d[0] + mean[1] * d[1]) / mean[0].hypot(mean[1]);
        assert!(cos > 0.99, "{cos}");
    }

    #[test]
    fn zero_speed_inflow_stays_still() {
        let scenario = InflowScenario {
            regions: vec![InflowRegion {
                center: [8.0, 8.0],
                radius: 3.0,
                direction: 1.0,
                speed: 0.0,
            }],
            steps: 4,
            dt: 0.5,
        };
        let zero = VectorField::zeros(16, 16).unwrap();
        for f in simulate_inflow(&scenario, 16, 16).unwrap() {
            assert_eq!(f, zero);
        }
    }

    #[test]
    fn categories_hold_their_properties() {
        for tag in FieldCategory::ALL {
            for seed in 0..4 {
                let f = generate_category(tag, seed, 48, 40).unwrap();
                let (curl_free, div_free, _) = tag.parts();
                if !div_free {
                    assert!(cme(&f) <= 1e-10, "{tag} cme {}", cme(&f));
                }
                if !curl_free {
                    assert!(cs(&f) <= 1e-10, "{tag} cs {}", cs(&f));
                }
                assert!((f.max_magnitude() - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(
            generate_category(FieldCategory::All, 5, 16, 16).unwrap(),
            generate_category(FieldCategory::All, 5, 16, 16).unwrap()
        );
    }

    #[test]
    fn category_tags_round_trip() {
        for c in FieldCategory::ALL {
            assert_eq!(c.tag().parse::<FieldCategory>().unwrap(), c);
        }
        assert!("rotational".parse::<FieldCategory>().is_err());
    }
}
