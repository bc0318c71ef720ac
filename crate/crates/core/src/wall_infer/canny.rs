//! Canny edge detection on elevation rasters.

use std::collections::VecDeque;

use super::Heightmap;
use crate::Point2;

/// Heightmap pixels flagged as height discontinuities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContourPixels {
    /// Pixel centers in metric coordinates.
    pub points: Vec<Point2>,
    /// Grid coordinates `(i, j)` of each point.
    pub pixels: Vec<(usize, usize)>,
    pub resolution: f64,
}

impl ContourPixels {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

const SIGMA: f64 = 1.0;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable convolution with replicated borders.
fn smooth(img: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; img.len()];
    for j in 0..h {
        for i in 0..w {
            tmp[j * w + i] = kernel.iter().enumerate().map(|(k, wk)| wk * img[j * w + clamp(i as isize + k as isize - r, w)]).sum();
        }
    }
    let mut out = vec![0.0; img.len()];
    for j in 0..h {
        for i in 0..w {
            out[j * w + i] = kernel.iter().enumerate().map(|(k, wk)| wk * tmp[clamp(j as isize + k as isize - r, h) * w + i]).sum();
        }
    }
    out
}

/// Sobel gradients scaled to elevation change per pixel (raw response / 8).
pub fn sobel(img: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |i: isize, j: isize| img[j.clamp(0, h as isize - 1) as usize * w + i.clamp(0, w as isize - 1) as usize];
    let mut gx = vec![0.0; img.len()];
    let mut gy = vec![0.0; img.len()];
    for j in 0..h as isize {
        for i in 0..w as isize {
            let k = j as usize * w + i as usize;
            gx[k] = ((at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i - 1, j) + at(i - 1, j + 1)))
                / 8.0;
            gy[k] = ((at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i, j - 1) + at(i + 1, j - 1)))
                / 8.0;
        }
    }
    (gx, gy)
}

/// Gradient magnitude after Gaussian smoothing, in meters of elevation per pixel.
pub fn gradient_magnitude(hm: &Heightmap) -> Vec<f64> {
    let img = smooth(&hm.filled(), hm.width, hm.height, &gaussian_kernel(SIGMA));
    let (gx, gy) = sobel(&img, hm.width, hm.height);
    gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect()
}

/// Canny detector: Gaussian smoothing (σ = 1 px), Sobel gradients, non-maximum
/// suppression and double-threshold hysteresis with 8-connectivity. Invalid pixels take
/// the heightmap's fill elevation.
pub fn detect_contours(hm: &Heightmap, low: f64, high: f64) -> ContourPixels {
    assert!(high >= low && low > 0.0, "thresholds must satisfy high >= low > 0");
    let (w, h) = (hm.width, hm.height);
    let mut out = ContourPixels { resolution: hm.resolution, ..Default::default() };
    if w == 0 || h == 0 {
        return out;
    }
    let img = smooth(&hm.filled(), w, h, &gaussian_kernel(SIGMA));
    let (gx, gy) = sobel(&img, w, h);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    let m = |i: isize, j: isize| {
        if i < 0 || j < 0 || i >= w as isize || j >= h as isize {
            0.0
        } else {
            mag[j as usize * w + i as usize]
        }
    };

    // Non-maximum suppression along the gradient direction quantized to 4 sectors
    // (mod 180°). Ties keep the pixel on the positive side, giving one-pixel-wide edges.
    let mut nms = vec![0.0; w * h];
    for j in 0..h {
        for i in 0..w {
            let k = j * w + i;
            let g = mag[k];
            if g < low {
                continue;
            }
            let mut ang = gy[k].atan2(gx[k]).to_degrees();
            if ang < 0.0 {
                ang += 180.0;
            }
            let (di, dj) = if !(22.5..157.5).contains(&ang) {
                (1, 0)
            } else if ang < 67.5 {
                (1, 1)
            } else if ang < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (ii, jj) = (i as isize, j as isize);
            if g >= m(ii - di, jj - dj) && g > m(ii + di, jj + dj) {
                nms[k] = g;
            }
        }
    }

    let mut keep = vec![false; w * h];
    let mut queue = VecDeque::new();
    for k in 0..w * h {
        if nms[k] >= high {
            keep[k] = true;
            queue.push_back(k);
        }
    }
    while let Some(k) = queue.pop_front() {
        let (i, j) = ((k % w) as isize, (k / w) as isize);
        for dj in -1..=1 {
            for di in -1..=1 {
                let (a, b) = (i + di, j + dj);
                if a < 0 || b < 0 || a >= w as isize || b >= h as isize {
                    continue;
                }
                let q = b as usize * w + a as usize;
                if !keep[q] && nms[q] >= low {
                    keep[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }

    for j in 0..h {
        for i in 0..w {
            if keep[j * w + i] {
                out.points.push(hm.center(i, j));
                out.pixels.push((i, j));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Heightmap {
        let mut hm = Heightmap::new(Point2::new(0.0, 0.0), 0.2, w, h, 0.0);
        for j in 0..h {
            for i in 0..w {
                hm.set(i, j, f(i, j));
            }
        }
        hm
    }

    #[test]
    fn constant_is_empty() {
        assert!(detect_contours(&grid(30, 20, |_, _| 5.0), 0.3, 0.8).is_empty());
    }

    #[test]
    fn step_confined_to_three_columns() {
        let c = 15;
        let hm = grid(30, 20, |i, _| if i >= c { 3.0 } else { 0.0 });
        let s = detect_contours(&hm, 0.3, 0.8);
        assert!(!s.is_empty());
        assert!(s.pixels.iter().all(|&(i, _)| (c - 1..=c + 1).contains(&i)));
        // Oracle: the smoothed 1D step has its largest central difference at c-1 and c,
        // h·(w0 + w1)/2 with discrete Gaussian weights w.
        let k = gaussian_kernel(1.0);
        let peak = 3.0 * (k[3] + k[4]) / 2.0;
        let g = gradient_magnitude(&hm);
        assert!((g[10 * 30 + c] - peak).abs() < 1e-12);
        // One pixel per row.
        assert_eq!(s.len(), 20);
    }
}
