//! Adaptive Gauss–Kronrod quadrature on a fixed set of panels.

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
    0.209_482_141_084_728_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod evaluation; returns (estimate, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: (f64, f64), tol: f64, depth: u32) -> f64 {
    let (est, err) = whole;
    if err <= tol || depth == 0 || (b - a).abs() <= f64::EPSILON * a.abs().max(b.abs()) * 8.0 {
        return est;
    }
    let m = 0.5 * (a + b);
    let left = gk15(f, a, m);
    let right = gk15(f, m, b);
    adapt(f, a, m, left, 0.5 * tol, depth - 1) + adapt(f, m, b, right, 0.5 * tol, depth - 1)
}

/// Integrates `f` over `[a, b]` with absolute tolerance `abs_tol` and relative
/// tolerance `rel_tol` applied to the panel estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let whole = gk15(f, a, b);
    let tol = abs_tol.max(rel_tol * whole.0.abs());
    adapt(f, a, b, whole, tol, 40)
}

/// Integrates over consecutive panels given by sorted breakpoints.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: &F, breaks: &[f64], rel_tol: f64) -> f64 {
    let mut total = 0.0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            total += integrate(f, w[0], w[1], 0.0, rel_tol);
        }
    }
    total
}

/// `n` logarithmically spaced points covering `[a, b]` inclusive.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(a > 0.0 && b > a && n >= 2);
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
