//! Shared structural-similarity kernels used by both the single-scale
//! metric and the multi-scale loss. Everything here works on `f64` planes.

use crate::tensor::gaussian_taps;

pub(crate) const K1: f64 = 0.01;
pub(crate) const K2: f64 = 0.03;
pub(crate) const GAUSSIAN_SIGMA: f64 = 1.5;

pub(crate) struct Plane {
    pub data: Vec<f64>,
    pub h: usize,
    pub w: usize,
}

impl Plane {
    pub fn from_f32(data: &[f32], h: usize, w: usize) -> Self {
        Plane {
            data: data.iter().map(|&v| v as f64).collect(),
            h,
            w,
        }
    }
}

/// Separable Gaussian filtering without padding ("valid" output).
fn filter_valid(p: &Plane, taps: &[f64]) -> Plane {
    let k = taps.len();
    let ow = p.w + 1 - k;
    let oh = p.h + 1 - k;
    let mut horiz = Vec::with_capacity(p.h * ow);
    for y in 0..p.h {
        let row = &p.data[y * p.w..(y + 1) * p.w];
        for x in 0..ow {
            horiz.push(taps.iter().zip(&row[x..x + k]).map(|(t, v)| t * v).sum::<f64>());
        }
    }
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                acc += t * horiz[(y + i) * ow + x];
            }
            out.push(acc);
        }
    }
    Plane {
        data: out,
        h: oh,
        w: ow,
    }
}

/// Mean SSIM and mean contrast-structure term over the valid window
/// positions of two planes of equal size (at least `taps.len()` per side).
pub(crate) fn ssim_and_cs(x: &Plane, y: &Plane, taps: &[f64], peak: f64) -> (f64, f64) {
    debug_assert_eq!((x.h, x.w), (y.h, y.w));
    let c1 = (K1 * peak).powi(2);
    let c2 = (K2 * peak).powi(2);
    let prod = |a: &Plane, b: &Plane| Plane {
        data: a.data.iter().zip(&b.data).map(|(u, v)| u * v).collect(),
        h: a.h,
        w: a.w,
    };
    let mu_x = filter_valid(x, taps);
    let mu_y = filter_valid(y, taps);
    let e_xx = filter_valid(&prod(x, x), taps);
    let e_yy = filter_valid(&prod(y, y), taps);
    let e_xy = filter_valid(&prod(x, y), taps);

    let count = mu_x.data.len();
    let mut ssim_sum = 0.0;
    let mut cs_sum = 0.0;
    for i in 0..count {
        let (mx, my) = (mu_x.data[i], mu_y.data[i]);
        let var_x = e_xx.data[i] - mx * mx;
        let var_y = e_yy.data[i] - my * my;
        let cov = e_xy.data[i] - mx * my;
        let cs = (2.0 * cov + c2) / (var_x + var_y + c2);
        let lum = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
        ssim_sum += lum * cs;
        cs_sum += cs;
    }
    (ssim_sum / count as f64, cs_sum / count as f64)
}

/// Factor-2 average pooling. Odd trailing rows/columns form partial cells
/// averaged over the pixels they actually contain, so the output side is
/// `ceil(side / 2)`.
pub(crate) fn avg_pool2(p: &Plane) -> Plane {
    let oh = p.h.div_ceil(2);
    let ow = p.w.div_ceil(2);
    let mut out = Vec::with_capacity(oh * ow);
    for by in 0..oh {
        for bx in 0..ow {
            let mut acc = 0.0;
            let mut cnt = 0usize;
            for y in 2 * by..(2 * by + 2).min(p.h) {
                for x in 2 * bx..(2 * bx + 2).min(p.w) {
                    acc += p.data[y * p.w + x];
                    cnt += 1;
                }
            }
            out.push(acc / cnt as f64);
        }
    }
    Plane {
        data: out,
        h: oh,
        w: ow,
    }
}

pub(crate) fn window(kernel: usize) -> Vec<f64> {
    gaussian_taps(kernel, GAUSSIAN_SIGMA)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_handles_odd_sizes() {
        let p = Plane {
            data: (0..15).map(|v| v as f64).collect(),
            h: 3,
            w: 5,
        };
        let q = avg_pool2(&p);
        assert_eq!((q.h, q.w), (2, 3));
        assert_eq!(q.data, vec![3.0, 5.0, 6.5, 10.5, 12.5, 14.0]);
    }

    #[test]
    fn identical_planes_score_one() {
        let p = Plane {
            data: (0..144).map(|v| ((v * 37) % 11) as f64 / 10.0).collect(),
            h: 12,
            w: 12,
        };
        let (s, cs) = ssim_and_cs(&p, &p, &window(7), 1.0);
        assert_eq!(s, 1.0);
        assert_eq!(cs, 1.0);
    }
}
