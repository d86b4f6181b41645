//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use lvkinetic::ModelParams;

/// Adaptive Dormand-Prince 5(4) integration, returning the state at each of `times`
/// (ascending, starting at or after `t0`).
pub fn dopri5<const N: usize>(
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: [f64; N],
    times: &[f64],
    rtol: f64,
) -> Vec<[f64; N]> {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut out = Vec::with_capacity(times.len());
    let (mut t, mut y) = (t0, y0);
    let mut h: f64 = 1e-3;
    for &target in times {
        while target - t > 1e-14 * target.abs().max(1.0) {
            let step = h.min(target - t);
            let mut k = [[0.0; N]; 7];
            for s in 0..7 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    for i in 0..N {
                        ys[i] += step * A[s][j] * kj[i];
                    }
                }
                k[s] = f(t + C[s] * step, &ys);
            }
            let mut y5 = y;
            let mut err: f64 = 0.0;
            for i in 0..N {
                let (mut d5, mut d4) = (0.0, 0.0);
                for s in 0..7 {
                    d5 += B5[s] * k[s][i];
                    d4 += B4[s] * k[s][i];
                }
                y5[i] += step * d5;
                let scale = rtol * (1e-3 + y[i].abs().max(y5[i].abs()));
                err = err.max((step * (d5 - d4)).abs() / scale);
            }
            if err <= 1.0 {
                t += step;
                y = y5;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                0.9 * err.powf(-0.2)
            };
            h = step * factor.clamp(0.2, 5.0);
        }
        out.push(y);
    }
    out
}

/// Lotka-Volterra means at the requested times, by the adaptive oracle.
pub fn lv_oracle(
    params: &ModelParams,
    logistic: bool,
    m0: (f64, f64),
    times: &[f64],
) -> Vec<(f64, f64)> {
    let p = params.clone();
    let k = if logistic { p.competition_rate() } else { 0.0 };
    let f = move |_t: f64, y: &[f64; 2]| {
        [
            p.alpha * y[0] - p.beta * y[0] * y[1] - k * y[0] * y[0],
            -(p.gamma * p.mu - p.nu) * y[1] + p.gamma * y[0] * y[1],
        ]
    };
    dopri5(f, 0.0, [m0.0, m0.1], times, 1e-12)
        .into_iter()
        .map(|y| (y[0], y[1]))
        .collect()
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`, started on 256 panels so that
/// narrow peaks are not missed by the first estimate.
pub fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    const PANELS: usize = 256;
    let w = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * w, a + (k + 1) as f64 * w);
            let (fa, fb, fm) = (f(lo), f(hi), f(0.5 * (lo + hi)));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            rec(f, lo, hi, fa, fm, fb, whole, tol / PANELS as f64, 40)
        })
        .sum()
}

const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Five-point Gauss-Legendre integral over `[a, b]` split into `pieces` panels.
pub fn gauss_legendre(f: &impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
    let w = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let c = a + (k as f64 + 0.5) * w;
            GL_NODES
                .iter()
                .zip(GL_WEIGHTS)
                .map(|(x, wt)| wt * f(c + 0.5 * w * x))
                .sum::<f64>()
                * 0.5
                * w
        })
        .sum()
}

/// Cell averages of `f` on the uniform grid `[0, x_max]` with `n` cells.
pub fn cell_averages(f: &impl Fn(f64) -> f64, x_max: f64, n: usize) -> Vec<f64> {
    let dx = x_max / n as f64;
    (0..n)
        .map(|i| gauss_legendre(f, i as f64 * dx, (i + 1) as f64 * dx, 4) / dx)
        .collect()
}

/// Gamma density with shape `a` and rate `b`, from the statrs log-density.
pub fn gamma_pdf(a: f64, b: f64) -> impl Fn(f64) -> f64 {
    use statrs::distribution::{Continuous, Gamma};
    let g = Gamma::new(a, b).unwrap();
    move |x: f64| if x <= 0.0 { 0.0 } else { g.ln_pdf(x).exp() }
}
