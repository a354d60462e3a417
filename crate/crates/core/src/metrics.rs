//! Reconstruction and physical-property metrics.
//!
//! `mse`, `rmse` and `ssim_cos` compare a candidate with a reference. `cme`
//! and `cs` score a single field (mean |curl| and mean squared divergence on
//! interior cells). `vpe` and `sfe` compare the stream functions recovered
//! from each field's vorticity, summed rather than averaged over cells.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::filter::gaussian_blur;
use crate::error::{Error, Result};
use crate::field::{curl2d, divergence, ensure_same_dims, ScalarField, VectorField};
use crate::hhd::{divergence_free_part_with, HhdOptions};

pub fn mse(a: &VectorField, b: &VectorField) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
        .sum();
    Ok(sum / (2 * a.data().len()) as f64)
}

pub fn rmse(a: &VectorField, b: &VectorField) -> Result<f64> {
    mse(a, b).map(f64::sqrt)
}

const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
/// Vectors shorter than this carry no direction for the cosine term.
const COSINE_MIN_MAGNITUDE: f64 = 1e-8;

fn gaussian_mean(img: &[f64], w: usize, h: usize) -> Vec<f64> {
    gaussian_blur(img, w, h, SSIM_SIGMA, SSIM_RADIUS)
}

/// Plain SSIM between two grayscale images with dynamic range `range`.
fn ssim_images(x: &[f64], y: &[f64], w: usize, h: usize, range: f64) -> f64 {
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_x = gaussian_mean(x, w, h);
    let mu_y = gaussian_mean(y, w, h);
    let e_xx = gaussian_mean(&prod(x, x), w, h);
    let e_yy = gaussian_mean(&prod(y, y), w, h);
    let e_xy = gaussian_mean(&prod(x, y), w, h);
    let mut total = 0.0;
    for i in 0..w * h {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
            / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
    }
    total / (w * h) as f64
}

/// Mean cosine similarity over cells where both vectors are non-negligible;
/// zero when there are no such cells.
pub fn mean_cosine(a: &VectorField, b: &VectorField) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, q) in a.data().iter().zip(b.data()) {
        let (mp, mq) = (p[0].hypot(p[1]), q[0].hypot(q[1]));
        if mp > COSINE_MIN_MAGNITUDE && mq > COSINE_MIN_MAGNITUDE {
            sum += ((p[0] * q[0] + p[1] * q[1]) / (mp * mq)).clamp(-1.0, 1.0);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// SSIM of the magnitude images scaled by the mean cosine similarity.
///
/// 11x11 Gaussian window with sigma 1.5, `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2`
/// where `L` is the largest magnitude over both fields.
pub fn ssim_cos(a: &VectorField, b: &VectorField) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    let ma = a.magnitudes();
    let mb = b.magnitudes();
    let range = ma.max().max(mb.max());
    if range == 0.0 {
        return Err(Error::DegenerateField("both fields are zero"));
    }
    let (w, h) = a.dims();
    let s = ssim_images(ma.data(), mb.data(), w, h, range);
    Ok((s * mean_cosine(a, b)?).clamp(-1.0, 1.0))
}

/// Mean |curl| over interior cells.
pub fn cme(f: &VectorField) -> f64 {
    let c = curl2d(f);
    let n = ((f.width() - 2) * (f.height() - 2)) as f64;
    c.interior().map(f64::abs).sum::<f64>() / n
}

/// Mean squared divergence over interior cells.
pub fn cs(f: &VectorField) -> f64 {
    let d = divergence(f);
    let n = ((f.width() - 2) * (f.height() - 2)) as f64;
    d.interior().map(|v| v * v).sum::<f64>() / n
}

/// Potential solves inside metrics run tighter than the editing default so
/// the reported values are not dominated by solver noise.
fn potential_options() -> HhdOptions {
    let mut opts = HhdOptions::default();
    opts.solve.tolerance = 1e-13;
    opts
}

fn stream_function(f: &VectorField) -> Result<ScalarField> {
    Ok(divergence_free_part_with(f, &potential_options())?.potential)
}

fn summed_square_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| (p - q).powi(2))
        .sum()
}

/// Vector potential error: sum over cells of `(psi_a - psi_b)^2`, where the
/// 2D vector potential is the stream function solving `L psi = -curl`.
pub fn vpe(a: &VectorField, b: &VectorField) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    Ok(summed_square_diff(&stream_function(a)?, &stream_function(b)?))
}

/// Stream function error: sum over cells of `(psi_a - psi_b)^2` with the
/// stream functions of each field's divergence-free part. In 2D the vector
/// potential and the stream function coincide, so this equals [`vpe`]; both
/// names are kept because they score different field families.
pub fn sfe(a: &VectorField, b: &VectorField) -> Result<f64> {
    vpe(a, b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    Rmse,
    SsimCos,
    Cme,
    Vpe,
    Cs,
    Sfe,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Mse,
        Metric::Rmse,
        Metric::SsimCos,
        Metric::Cme,
        Metric::Vpe,
        Metric::Cs,
        Metric::Sfe,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Rmse => "rmse",
            Metric::SsimCos => "ssim_cos",
            Metric::Cme => "cme",
            Metric::Vpe => "vpe",
            Metric::Cs => "cs",
            Metric::Sfe => "sfe",
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// Values for the requested metrics; absent entries were not requested.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim_cos: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cme: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vpe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sfe: Option<f64>,
}

impl MetricReport {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        [
            ("mse", self.mse),
            ("rmse", self.rmse),
            ("ssim_cos", self.ssim_cos),
            ("cme", self.cme),
            ("vpe", self.vpe),
            ("cs", self.cs),
            ("sfe", self.sfe),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    /// `key=value` lines, six significant digits, scientific notation.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k}={}", format_sig6(v));
        }
        out
    }
}

/// Six significant digits in a locale-independent scientific form.
pub fn format_sig6(v: f64) -> String {
    format!("{v:.5e}")
}

/// Computes `metrics` for candidate `b` against reference `a`. The
/// single-field metrics `cme` and `cs` score `b`.
pub fn evaluate(a: &VectorField, b: &VectorField, metrics: &[Metric]) -> Result<MetricReport> {
    ensure_same_dims(a.dims(), b.dims())?;
    let mut r = MetricReport::default();
    for m in metrics {
        match m {
            Metric::Mse => r.mse = Some(mse(a, b)?),
            Metric::Rmse => r.rmse = Some(rmse(a, b)?),
            Metric::SsimCos => r.ssim_cos = Some(ssim_cos(a, b)?),
            Metric::Cme => r.cme = Some(cme(b)),
            Metric::Vpe => r.vpe = Some(vpe(a, b)?),
            Metric::Cs => r.cs = Some(cs(b)),
            Metric::Sfe => r.sfe = Some(sfe(a, b)?),
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hhd::{curl_free_part, divergence_free_part};

    fn swirl(w: usize, h: usize, spin: f64) -> VectorField {
        let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
        VectorField::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let g = (-(dx * dx + dy * dy) / 30.0).exp() * spin;
            [-dy * g, dx * g]
        })
        .unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = swirl(12, 10, 1.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| [v[0] + 0.5, v[1]]);
        assert!((mse(&a, &b).unwrap() - 0.125).abs() < 1e-15);
        assert!((rmse(&a, &b).unwrap().powi(2) - 0.125).abs() < 1e-15);
        let small = VectorField::zeros(4, 4).unwrap();
        assert!(matches!(mse(&a, &small), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ssim_identity_and_reversal() {
        let a = swirl(24, 20, 1.0);
        assert!((ssim_cos(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let neg = a.scale(-1.0);
        assert!((ssim_cos(&a, &neg).unwrap() + 1.0).abs() < 1e-9);
        let z = VectorField::zeros(8, 8).unwrap();
        assert!(matches!(ssim_cos(&z, &z), Err(Error::DegenerateField(_))));
    }

    #[test]
    fn ssim_penalises_structure_change() {
        let a = swirl(32, 32, 1.0);
        let b = a.map(|v| [v[0] * 0.5, v[1]]);
        let s = ssim_cos(&a, &b).unwrap();
        assert!(s < 1.0 && s > 0.0);
    }

    #[test]
    fn physical_metric_examples() {
        let rot = VectorField::from_fn(10, 9, |x, y| [-(y as f64), x as f64]).unwrap();
        assert!((cme(&rot) - 2.0).abs() < 1e-10);
        let radial = VectorField::from_fn(10, 9, |x, y| [x as f64, y as f64]).unwrap();
        assert!((cs(&radial) - 4.0).abs() < 1e-10);
        let z = VectorField::zeros(6, 6).unwrap();
        assert_eq!(cme(&z), 0.0);
        assert_eq!(cs(&z), 0.0);
    }

    #[test]
    fn extracted_parts_have_vanishing_metrics() {
        let f = swirl(32, 28, 1.0).add(&VectorField::from_fn(32, 28, |x, y| {
            [(x as f64 * 0.2).sin(), (y as f64 * 0.3).cos()]
        }).unwrap()).unwrap();
        assert!(cme(&curl_free_part(&f).unwrap().field) <= 1e-10);
        assert!(cs(&divergence_free_part(&f).unwrap().field) <= 1e-10);
    }

    #[test]
    fn potential_errors() {
        let a = swirl(24, 24, 1.0);
        assert!(vpe(&a, &a).unwrap() <= 1e-20);
        let cf = VectorField::from_fn(24, 24, |x, y| [y as f64 * 0.1, x as f64 * 0.1]).unwrap();
        let cf2 = VectorField::from_fn(24, 24, |x, _| [1.0 + x as f64 * 0.05, 0.3]).unwrap();
        assert!(vpe(&cf, &cf2).unwrap() <= 1e-8);
        assert!(sfe(&cf, &cf2).unwrap() <= 1e-8);

        let b = swirl(24, 24, -1.0);
        let psi_b = stream_function(&b).unwrap();
        let expect = 4.0 * psi_b.data().iter().map(|v| v * v).sum::<f64>();
        for value in [vpe(&a, &b).unwrap(), sfe(&a, &b).unwrap()] {
            assert!(((value - expect) / expect).abs() <= 1e-6);
        }
    }

    #[test]
    fn report_formatting() {
        let a = swirl(16, 16, 1.0);
        let r = evaluate(&a, &a, &[Metric::Mse, Metric::SsimCos]).unwrap();
        assert_eq!(r.to_kv(), "mse=0.00000e0\nssim_cos=1.00000e0\n");
        assert_eq!("ssim_cos".parse::<Metric>().unwrap(), Metric::SsimCos);
        assert!("psnr".parse::<Metric>().is_err());
    }
}
