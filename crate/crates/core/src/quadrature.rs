//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.
//!
//! Nodes are strictly interior to every subinterval, so integrands with
//! integrable endpoint singularities are never evaluated at the endpoint.

use crate::error::{Error, Result};
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig<T> {
    pub abs_tol: T,
    /// Accepted error relative to the magnitude of the integral (0 disables).
    pub rel_tol: T,
    /// Maximum number of bisections applied to any one subinterval.
    pub max_depth: u32,
}

impl<T: Real> Default for QuadratureConfig<T> {
    fn default() -> Self {
        // 1e-10 is out of reach in single precision.
        let floor = T::lit(1e3) * T::epsilon();
        Self { abs_tol: T::lit(1e-10).max(floor), rel_tol: T::zero(), max_depth: 60 }
    }
}

struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
    depth: u32,
}

fn gauss_kronrod<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let centre = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(centre);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half_len * T::lit(XGK[j]);
        let sum = f(centre - dx) + f(centre + dx);
        kronrod += T::lit(WGK[j]) * sum;
        if j % 2 == 1 {
            gauss += T::lit(WG[j / 2]) * sum;
        }
    }
    let value = kronrod * half_len;
    let error = ((kronrod - gauss) * half_len).abs();
    (value, error)
}

/// Integrates `f` over `[a, b]` (either orientation) to absolute tolerance.
pub fn integrate<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    config: &QuadratureConfig<T>,
) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    if b < a {
        return integrate(f, b, a, config).map(|v| -v);
    }
    let (value, error) = gauss_kronrod(&mut f, a, b);
    let mut segments = vec![Segment { a, b, value, error, depth: 0 }];
    let mut total = value;
    let mut total_err = error;
    while total_err > config.abs_tol.max(config.rel_tol * total.abs()) {
        if !total.is_finite() {
            return Err(Error::Quadrature {
                tolerance: config.abs_tol.to_f64_lossy(),
                estimate: f64::INFINITY,
            });
        }
        // refine the segment carrying the largest error
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, s)| if s.error > acc.1 { (i, s.error) } else { acc });
        let seg = segments.swap_remove(worst);
        if seg.depth >= config.max_depth {
            return Err(Error::Quadrature {
                tolerance: config.abs_tol.to_f64_lossy(),
                estimate: total_err.to_f64_lossy(),
            });
        }
        let mid = T::lit(0.5) * (seg.a + seg.b);
        let (v1, e1) = gauss_kronrod(&mut f, seg.a, mid);
        let (v2, e2) = gauss_kronrod(&mut f, mid, seg.b);
        total = total - seg.value + v1 + v2;
        total_err = total_err - seg.error + e1 + e2;
        segments.push(Segment { a: seg.a, b: mid, value: v1, error: e1, depth: seg.depth + 1 });
        segments.push(Segment { a: mid, b: seg.b, value: v2, error: e2, depth: seg.depth + 1 });
        if segments.len() % 64 == 0 {
            // guard the running sums against drift
            total = segments.iter().map(|s| s.value).sum();
            total_err = segments.iter().map(|s| s.error).sum();
        }
    }
    Ok(segments.iter().map(|s| s.value).sum())
}

/// Gauss–Legendre nodes and weights on `[0, 1]` (`m` points, degree `2m - 1`).
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "at least one Gauss point is required");
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        // Newton iteration on P_m from the Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}
