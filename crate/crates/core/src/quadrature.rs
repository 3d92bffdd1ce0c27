//! Adaptive Gauss–Kronrod (7, 15) quadrature for vector-valued integrands.
//!
//! Intervals are split at caller-supplied breakpoints first, so integrands
//! with jumps (kernel edges, support boundaries) are integrated piecewise.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not reach tolerance {tol:e} (error estimate {estimate:e}) after {intervals} intervals")]
    QuadratureFailure {
        tol: f64,
        estimate: f64,
        intervals: usize,
    },
    #[error("integrand returned a non-finite value at {0}")]
    NonFinite(f64),
    #[error("invalid integration limits [{0}, {1}]")]
    BadLimits(f64, f64),
}

const MAX_INTERVALS: usize = 4000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_3,
    0.949_107_912_342_758_524_526_189_684_047_9,
    0.864_864_423_359_769_072_789_712_788_640_9,
    0.741_531_185_599_394_439_863_864_773_280_8,
    0.586_087_235_467_691_130_294_144_845_693_0,
    0.405_845_151_377_397_166_906_606_412_076_9,
    0.207_784_955_007_898_467_600_689_403_773_2,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_20,
    0.104_790_010_322_250_183_839_876_322_541_5,
    0.140_653_259_715_525_918_745_189_590_510_2,
    0.169_004_726_639_267_902_826_583_426_598_6,
    0.190_350_578_064_785_409_913_256_402_421_0,
    0.204_432_940_075_298_892_414_161_999_234_6,
    0.209_482_141_084_727_828_012_999_174_891_7,
];

// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5, 7.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_1,
    0.279_705_391_489_276_667_901_467_771_423_8,
    0.381_830_050_505_118_944_950_369_775_489_0,
    0.417_959_183_673_469_387_755_102_040_816_3,
];

struct Piece {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

fn gk15<F>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Result<Piece, QuadratureError>
where
    F: FnMut(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    for j in 0..8 {
        let nodes: &[f64] = if j == 7 { &[0.0] } else { &[-1.0, 1.0] };
        for &s in nodes {
            let t = c + s * r * XGK[j];
            buf.iter_mut().for_each(|v| *v = 0.0);
            f(t, buf);
            if buf.iter().any(|v| !v.is_finite()) {
                return Err(QuadratureError::NonFinite(t));
            }
            for k in 0..dim {
                kron[k] += WGK[j] * buf[k];
                if j % 2 == 1 {
                    gauss[k] += WG[j / 2] * buf[k];
                }
            }
        }
    }
    let mut error = 0.0f64;
    for k in 0..dim {
        kron[k] *= r;
        gauss[k] *= r;
        error = error.max((kron[k] - gauss[k]).abs());
    }
    Ok(Piece {
        a,
        b,
        value: kron,
        error,
    })
}

/// Integrates `f` over `[a, b]`; `f(t, out)` writes `dim` values into a zeroed `out`.
/// Breakpoints strictly inside `(a, b)` become initial subinterval edges.
/// The error estimate is the max-norm over components, summed over intervals.
pub fn integrate<F>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    dim: usize,
    tol: f64,
) -> Result<Vec<f64>, QuadratureError>
where
    F: FnMut(f64, &mut [f64]),
{
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(QuadratureError::BadLimits(a, b));
    }
    if a == b {
        return Ok(vec![0.0; dim]);
    }
    let mut edges = vec![a];
    let mut inner: Vec<f64> = breakpoints.iter().copied().filter(|&t| t > a && t < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    edges.extend(inner);
    edges.push(b);

    let mut buf = vec![0.0; dim];
    let mut pieces = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        pieces.push(gk15(&mut f, w[0], w[1], dim, &mut buf)?);
    }
    loop {
        let total: f64 = pieces.iter().map(|p| p.error).sum();
        if total <= tol {
            break;
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(QuadratureError::QuadratureFailure {
                tol,
                estimate: total,
                intervals: pieces.len(),
            });
        }
        let worst = (0..pieces.len())
            .max_by(|&i, &j| pieces[i].error.total_cmp(&pieces[j].error))
            .expect("at least one piece");
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // interval cannot be split further in floating point
            return Err(QuadratureError::QuadratureFailure {
                tol,
                estimate: total,
                intervals: pieces.len() + 1,
            });
        }
        pieces.push(gk15(&mut f, p.a, mid, dim, &mut buf)?);
        pieces.push(gk15(&mut f, mid, p.b, dim, &mut buf)?);
    }
    let mut out = vec![0.0; dim];
    // sum in position order so the result does not depend on refinement order
    pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
    for p in &pieces {
        for (o, v) in out.iter_mut().zip(&p.value) {
            *o += v;
        }
    }
    Ok(out)
}

/// Iterated integral over the box `[lo, hi]` with per-coordinate breakpoints.
pub fn integrate_box<F>(
    f: F,
    lo: &[f64],
    hi: &[f64],
    breakpoints: &[Vec<f64>],
    dim: usize,
    tol: f64,
) -> Result<Vec<f64>, QuadratureError>
where
    F: Fn(&[f64], &mut [f64]),
{
    assert_eq!(lo.len(), hi.len());
    assert_eq!(lo.len(), breakpoints.len());
    let mut point = vec![0.0; lo.len()];
    nested(&f, lo, hi, breakpoints, dim, tol, 0, &mut point)
}

#[allow(clippy::too_many_arguments)]
fn nested<F>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    breaks: &[Vec<f64>],
    dim: usize,
    tol: f64,
    axis: usize,
    point: &mut Vec<f64>,
) -> Result<Vec<f64>, QuadratureError>
where
    F: Fn(&[f64], &mut [f64]),
{
    let last = axis + 1 == lo.len();
    // inner integrals get a share of the tolerance scaled by the outer width
    let inner_tol = tol / (2.0 * (hi[axis] - lo[axis]).max(1.0));
    let mut failure = None;
    let result = integrate(
        |t, out| {
            point[axis] = t;
            if last {
                f(point, out);
            } else {
                let mut p = point.clone();
                match nested(f, lo, hi, breaks, dim, inner_tol, axis + 1, &mut p) {
                    Ok(v) => out.copy_from_slice(&v),
                    Err(e) => {
                        failure.get_or_insert(e);
                    }
                }
            }
        },
        lo[axis],
        hi[axis],
        &breaks[axis],
        dim,
        if last { tol } else { tol / 2.0 },
    );
    if let Some(e) = failure {
        return Err(e);
    }
    result
}
