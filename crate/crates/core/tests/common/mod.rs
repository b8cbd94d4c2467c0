//! Independent oracles shared by the integration tests: adaptive quadrature,
//! brute-force metric definitions, moment checks and prior simulators.

#![allow(dead_code)]

pub mod frozen;
pub mod geweke;

use medsel::ptg::Lambda;
use medsel::randkit::{ChainRng, RngStream};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

pub fn rng(seed: u64, stream: u64) -> ChainRng {
    RngStream::new(seed, stream).rng()
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `IG(shape, scale)` as the reciprocal of a `Gamma(shape, 1 / scale)` draw.
pub fn inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    scale / Gamma::new(shape, 1.0).unwrap().sample(rng)
}

/// Calls `next` `rounds` times and transposes the returned rows into columns.
pub fn columns(rounds: usize, mut next: impl FnMut() -> Vec<f64>) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for r in 0..rounds {
        let row = next();
        if r == 0 {
            cols = row.iter().map(|_| Vec::with_capacity(rounds)).collect();
        }
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    cols
}

// ---------------------------------------------------------------- quadrature

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
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Gauss-Kronrod 7-15 on `[a, b]`: `(kronrod, |kronrod - gauss|, kronrod of |f|)`.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for i in 0..7 {
        let (l, r) = (f(c - h * XGK[i]), f(c + h * XGK[i]));
        k += WGK[i] * (l + r);
        abs += WGK[i] * (l.abs() + r.abs());
        if i % 2 == 1 {
            g += WG[i / 2] * (l + r);
        }
    }
    (k * h, ((k - g) * h).abs(), abs * h.abs())
}

/// Bisects until the error estimate is below `density * width` or at the
/// rounding level of the panel.
fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, density: f64, depth: u32) -> f64 {
    let (k, err, abs) = gk15(f, a, b);
    if err <= density * (b - a) || err <= 1e-14 * abs || depth >= 40 {
        return k;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, density, depth + 1) + adapt(f, m, b, density, depth + 1)
}

/// Adaptive integral of `f` over `[breaks[0], breaks[last]]`, split at every
/// break so that jumps sit on panel edges. `rel` is relative to the integral
/// of `|f|` estimated on a fixed 16-panel pass.
pub fn integrate(f: &dyn Fn(f64) -> f64, breaks: &[f64], rel: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.len() < 2 {
        return 0.0;
    }
    let mut scale = 0.0;
    for w in pts.windows(2) {
        let step = (w[1] - w[0]) / 16.0;
        for i in 0..16 {
            scale += gk15(f, w[0] + i as f64 * step, w[0] + (i + 1) as f64 * step).2;
        }
    }
    let density = rel * scale.max(f64::MIN_POSITIVE) / (pts[pts.len() - 1] - pts[0]);
    pts.windows(2).map(|w| adapt(f, w[0], w[1], density, 0)).sum()
}

/// Nested two-dimensional version over a rectangle with per-axis breaks.
pub fn integrate_2d(f: &dyn Fn(f64, f64) -> f64, xb: &[f64], yb: &[f64], rel: f64) -> f64 {
    let inner = |x: f64| integrate(&|y| f(x, y), yb, rel * 1e-2);
    integrate(&inner, xb, rel)
}

// ------------------------------------------------------------ threshold rule

/// Thresholded effects written straight from the rule: an effect survives
/// when its own latent clears its threshold or the latent product clears
/// the product threshold.
pub fn threshold(lambda: &Lambda, bt: f64, at: f64) -> (f64, f64) {
    let product = (bt * at).abs() > lambda.l0;
    let b = if bt.abs() > lambda.l1 || product { bt } else { 0.0 };
    let a = if at.abs() > lambda.l2 || product { at } else { 0.0 };
    (b, a)
}

// --------------------------------------------------------------- statistics

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// z-score of the sample mean against `target` using the sample SD.
pub fn z_mean(xs: &[f64], target: f64) -> f64 {
    (mean(xs) - target) / (var(xs) / xs.len() as f64).sqrt()
}

/// z-score of the sample variance against `target`, with the standard error
/// taken from the spread of squared deviations.
pub fn z_var(xs: &[f64], target_mean: f64, target_var: f64) -> f64 {
    let sq: Vec<f64> = xs.iter().map(|x| (x - target_mean).powi(2)).collect();
    z_mean(&sq, target_var)
}

/// Standard error of a mean from an autocorrelated series, by non-overlapping
/// batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let len = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&xs[b * len..(b + 1) * len])).collect();
    (var(&means) / batches as f64).sqrt()
}

pub fn inv_gamma_moments(shape: f64, scale: f64) -> (f64, f64) {
    let m = scale / (shape - 1.0);
    (m, m * m / (shape - 2.0))
}

// ------------------------------------------------------ brute-force metrics

/// Mann-Whitney AUC from every positive/negative pair: a win counts 2, a tie 1.
pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1;
                twice += if scores[i] > scores[j] {
                    2
                } else if scores[i] == scores[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    twice as f64 / 2.0 / pairs as f64
}

/// True when `i` is ranked ahead of `j`: higher score, then higher
/// secondary score, then lower index.
fn ahead(scores: &[f64], secondary: &[f64], i: usize, j: usize) -> bool {
    if scores[i] != scores[j] {
        return scores[i] > scores[j];
    }
    if secondary[i] != secondary[j] {
        return secondary[i] > secondary[j];
    }
    i < j
}

/// TPR at the largest prefix whose false discovery proportion is at most
/// `q`, with ranks found by counting how many items precede each one.
pub fn tpr_prefix(scores: &[f64], secondary: &[f64], labels: &[bool], q: f64) -> f64 {
    let n = scores.len();
    let mut order = vec![0; n];
    for i in 0..n {
        let rank = (0..n).filter(|&j| j != i && ahead(scores, secondary, j, i)).count();
        order[rank] = i;
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let mut best = 0;
    for k in 1..=n {
        let tp = order[..k].iter().filter(|&&i| labels[i]).count();
        let fp = k - tp;
        if fp as f64 / k as f64 <= q {
            best = tp;
        }
    }
    best as f64 / positives as f64
}

pub fn mse_pair(nie_hat: &[f64], nie_true: &[f64], active: &[bool]) -> (f64, f64) {
    let class = |want: bool| {
        let errs: Vec<f64> =
            (0..nie_hat.len()).filter(|&j| active[j] == want).map(|j| (nie_hat[j] - nie_true[j]).powi(2)).collect();
        if errs.is_empty() {
            f64::NAN
        } else {
            errs.iter().sum::<f64>() / errs.len() as f64
        }
    };
    (class(true), class(false))
}

/// Textbook potential scale reduction: B = n/(m-1) sum (mean_c - mean)^2,
/// W = average within-chain variance, V = (n-1)/n W + B/n.
pub fn psrf_textbook(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = chains.iter().map(|c| var(c)).sum::<f64>() / m;
    if means.iter().all(|&x| x == means[0]) {
        return 1.0;
    }
    if w == 0.0 {
        return f64::INFINITY;
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}
