//! Separable Gaussian smoothing on row-major grids.

/// Taps `exp(-k^2 / 2 sigma^2)` for `k` in `-radius..=radius`, unnormalized.
fn taps(sigma: f64, radius: usize) -> Vec<f64> {
    (0..=2 * radius)
        .map(|i| {
            let k = i as f64 - radius as f64;
            (-k * k / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Gaussian average of `img`. Near the border the window is cropped and
/// renormalized over the samples that exist.
pub(crate) fn gaussian_blur(img: &[f64], w: usize, h: usize, sigma: f64, radius: usize) -> Vec<f64> {
    let taps = taps(sigma, radius);
    let r = radius as isize;
    let pass = |src: &[f64], along_x: bool| -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (pos, len) = if along_x { (x, w) } else { (y, h) };
                let (mut acc, mut norm) = (0.0, 0.0);
                for k in -r..=r {
                    let p = pos as isize + k;
                    if p < 0 || p >= len as isize {
                        continue;
                    }
                    let idx = if along_x {
                        y * w + p as usize
                    } else {
                        p as usize * w + x
                    };
                    let wt = taps[(k + r) as usize];
                    acc += wt * src[idx];
                    norm += wt;
                }
                out[y * w + x] = acc / norm;
            }
        }
        out
    };
    pass(&pass(img, true), false)
}
