//! Adaptive Gauss–Kronrod (7/15) quadrature with bisection of the worst panel.

use crate::error::{Error, Result};

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
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5 and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveQuad {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of panel bisections.
    pub max_subdivisions: usize,
}

impl Default for AdaptiveQuad {
    fn default() -> Self {
        AdaptiveQuad {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_subdivisions: 60,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = kronrod.abs();
    let mut fv = [0.0; 14];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        fv[2 * j] = f1;
        fv[2 * j + 1] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = kronrod * 0.5;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv[2 * j] - mean).abs() + (fv[2 * j + 1] - mean).abs());
    }
    let value = kronrod * half;
    let resabs = abs_sum * half.abs();
    let resasc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Panel {
        a,
        b,
        value,
        error,
    }
}

impl AdaptiveQuad {
    /// Integrates `f` over `[a, b]`, starting from panels split at the given
    /// interior breakpoints (points outside `(a, b)` are ignored).
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64, breakpoints: &[f64]) -> Result<QuadResult> {
        if a == b {
            return Ok(QuadResult {
                value: 0.0,
                error: 0.0,
                panels: 0,
            });
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut cuts: Vec<f64> = breakpoints
            .iter()
            .copied()
            .filter(|p| *p > lo && *p < hi)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(lo);
        edges.extend(cuts);
        edges.push(hi);
        let mut panels: Vec<Panel> = edges.windows(2).map(|w| gk15(&f, w[0], w[1])).collect();

        let mut subdivisions = 0;
        loop {
            let total: f64 = panels.iter().map(|p| p.value).sum();
            let err: f64 = panels.iter().map(|p| p.error).sum();
            if !total.is_finite() {
                return Err(Error::NonConvergence(format!(
                    "integrand is not finite on [{lo}, {hi}]"
                )));
            }
            let target = self.abs_tol.max(self.rel_tol * total.abs());
            if err <= target {
                return Ok(QuadResult {
                    value: sign * total,
                    error: err,
                    panels: panels.len(),
                });
            }
            if subdivisions >= self.max_subdivisions {
                return Err(Error::NonConvergence(format!(
                    "quadrature error estimate {err:.3e} above {target:.3e} after {subdivisions} subdivisions (estimate {total})"
                )));
            }
            let (worst, _) = panels
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
                .expect("at least one panel");
            let p = panels.swap_remove(worst);
            let mid = 0.5 * (p.a + p.b);
            if mid <= p.a || mid >= p.b {
                return Err(Error::NonConvergence(format!(
                    "panel [{}, {}] cannot be split further",
                    p.a, p.b
                )));
            }
            panels.push(gk15(&f, p.a, mid));
            panels.push(gk15(&f, mid, p.b));
            subdivisions += 1;
        }
    }
}
