//! Numerical building blocks: adaptive quadrature on the real line, bracketing
//! root finders, small dense linear algebra and deterministic reductions.

#![allow(clippy::excessive_precision)]

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

// Gauss-Kronrod 7/15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances for [`integrate_line`].
#[derive(Clone, Copy, Debug)]
pub struct QuadTolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for QuadTolerance {
    fn default() -> Self {
        Self {
            abs: 1e-12,
            rel: 1e-12,
            max_intervals: 4000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Piece {
    Finite,
    // x = anchor - (1 - t) / t, t in (0, 1]
    LeftTail(f64),
    // x = anchor + (1 - t) / t, t in (0, 1]
    RightTail(f64),
}

#[derive(Clone, Copy, Debug)]
struct Interval {
    piece: Piece,
    a: f64,
    b: f64,
    estimate: f64,
    error: f64,
}

fn eval_piece<G: FnMut(f64) -> f64>(f: &mut G, piece: Piece, t: f64) -> f64 {
    match piece {
        Piece::Finite => f(t),
        Piece::LeftTail(anchor) => {
            let x = anchor - (1.0 - t) / t;
            let v = f(x);
            if v == 0.0 {
                0.0
            } else {
                v / (t * t)
            }
        }
        Piece::RightTail(anchor) => {
            let x = anchor + (1.0 - t) / t;
            let v = f(x);
            if v == 0.0 {
                0.0
            } else {
                v / (t * t)
            }
        }
    }
}

fn gk15<G: FnMut(f64) -> f64>(f: &mut G, piece: Piece, a: f64, b: f64) -> Interval {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = eval_piece(f, piece, c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = eval_piece(f, piece, c - dx) + eval_piece(f, piece, c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Interval {
        piece,
        a,
        b,
        estimate: kronrod * h,
        error: ((kronrod - gauss) * h).abs(),
    }
}

/// Integrates `f` over the whole real line.
///
/// The line is split at `breakpoints` (kinks or mass centres of the integrand);
/// the two unbounded tails are mapped onto `(0, 1]`. Subintervals are refined
/// globally, largest error first, until the summed error meets the tolerance.
pub fn integrate_line<G: FnMut(f64) -> f64>(
    mut f: G,
    breakpoints: &[f64],
    tol: QuadTolerance,
    integrand: &str,
) -> Result<f64> {
    let mut points: Vec<f64> = breakpoints.iter().copied().filter(|p| p.is_finite()).collect();
    if points.is_empty() {
        points.push(0.0);
    }
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut pool: Vec<Interval> = Vec::new();
    pool.push(gk15(&mut f, Piece::LeftTail(points[0]), 0.0, 1.0));
    for w in points.windows(2) {
        pool.push(gk15(&mut f, Piece::Finite, w[0], w[1]));
    }
    pool.push(gk15(&mut f, Piece::RightTail(points[points.len() - 1]), 0.0, 1.0));

    loop {
        let total: f64 = pool.iter().map(|i| i.estimate).sum();
        let err: f64 = pool.iter().map(|i| i.error).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature {
                integrand: integrand.to_owned(),
                estimate: total,
                error: err,
            });
        }
        if err <= tol.abs.max(tol.rel * total.abs()) {
            // an integrable tail has x f(x) -> 0; compare two far probes
            let (lo, hi) = (points[0], points[points.len() - 1]);
            let mut xf = |r: f64| (r * f(lo - r)).abs().max((r * f(hi + r)).abs());
            let (near, far) = (xf(1e6), xf(1e9));
            let tail = far;
            let scale = if near.is_finite() { 0.1 * near } else { 0.0 };
            if !(tail <= scale || tail < 1e-300) {
                return Err(Error::Quadrature {
                    integrand: integrand.to_owned(),
                    estimate: total,
                    error: f64::INFINITY,
                });
            }
            return Ok(total);
        }
        if pool.len() >= tol.max_intervals {
            return Err(Error::Quadrature {
                integrand: integrand.to_owned(),
                estimate: total,
                error: err,
            });
        }
        let (worst, _) = pool
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("pool non-empty");
        let iv = pool.swap_remove(worst);
        let mid = 0.5 * (iv.a + iv.b);
        pool.push(gk15(&mut f, iv.piece, iv.a, mid));
        pool.push(gk15(&mut f, iv.piece, mid, iv.b));
    }
}

/// Brent's bracketing root finder. `lo` and `hi` must bracket a sign change
/// (a zero at either end is accepted).
pub fn brent<F: Real, G: FnMut(F) -> Result<F>>(
    mut f: G,
    lo: F,
    hi: F,
    x_tol: F,
    f_tol: F,
    max_iter: usize,
) -> Result<F> {
    let two = F::lit(2.0);
    let half = F::lit(0.5);
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == F::zero() {
        return Ok(a);
    }
    if fb == F::zero() {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::InvalidParameter {
            name: "bracket",
            value: lo.as_f64(),
            reason: "endpoints do not bracket a root",
        });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = two * F::epsilon() * b.abs() + half * x_tol;
        let m = half * (c - b);
        if m.abs() <= tol || fb.abs() <= f_tol {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * m * s;
                q = F::one() - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (two * m * qa * (qa - r) - (b - a) * (r - F::one()));
                q = (qa - F::one()) * (r - F::one()) * (s - F::one());
            }
            if p > F::zero() {
                q = -q;
            } else {
                p = -p;
            }
            if two * p < (F::lit(3.0) * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol {
            b + d
        } else {
            b + tol * m.signum()
        };
        fb = f(b)?;
    }
    Ok(b)
}

/// Plain bisection on a sign change of `f` over `[lo, hi]`.
pub fn bisect<F: Real, G: FnMut(F) -> F>(mut f: G, mut lo: F, mut hi: F, x_tol: F) -> F {
    let mut f_lo = f(lo);
    let half = F::lit(0.5);
    while hi - lo > x_tol {
        let mid = half * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == F::zero() {
            return mid;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    half * (lo + hi)
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum<F: Real>(xs: &[F]) -> F {
    if xs.len() <= 16 {
        xs.iter().fold(F::zero(), |acc, &x| acc + x)
    } else {
        let (l, r) = xs.split_at(xs.len() / 2);
        pairwise_sum(l) + pairwise_sum(r)
    }
}

/// Folds `items` as a balanced binary tree, preserving order.
pub fn pairwise_reduce<T, M: Fn(T, T) -> T + Copy>(mut items: Vec<T>, merge: M) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Sample mean and unbiased sample variance.
pub fn mean_variance<F: Real>(xs: &[F]) -> (F, F) {
    let n = xs.len();
    if n == 0 {
        return (F::nan(), F::nan());
    }
    let mean = pairwise_sum(xs) / F::from_count(n as u64);
    if n == 1 {
        return (mean, F::zero());
    }
    let sq: Vec<F> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_sum(&sq) / F::from_count(n as u64 - 1))
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Dimension {
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<F>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<F> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> F {
        self.diagonal().into_iter().fold(F::zero(), |a, b| a + b)
    }

    pub fn mul_vec(&self, v: &[F]) -> Vec<F> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(F::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// `self += scale * u v^T`
    pub fn add_outer(&mut self, scale: F, u: &[F], v: &[F]) {
        for (i, &ui) in u.iter().enumerate() {
            if ui == F::zero() {
                continue;
            }
            let s = scale * ui;
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (x, &vj) in row.iter_mut().zip(v) {
                *x += s * vj;
            }
        }
    }

    pub fn scale(&mut self, s: F) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> F {
        self.data
            .iter()
            .zip(&other.data)
            .fold(F::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Solves `(self + shift * I) x = rhs` by Gaussian elimination with
    /// partial pivoting.
    pub fn solve_shifted(&self, shift: F, rhs: &[F]) -> Result<Vec<F>> {
        let n = self.rows;
        if self.cols != n || rhs.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut a = self.data.clone();
        for i in 0..n {
            a[i * n + i] += shift;
        }
        let mut x = rhs.to_vec();
        let scale = a.iter().fold(F::zero(), |m, v| m.max(v.abs()));
        let tiny = scale * F::epsilon() * F::from_count(n as u64);
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap_or(std::cmp::Ordering::Equal))
                .expect("non-empty");
            let p = a[pivot * n + col];
            if !(p.abs() > tiny) {
                return Err(Error::Singular);
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(pivot * n + k, col * n + k);
                }
                x.swap(pivot, col);
            }
            for r in col + 1..n {
                let factor = a[r * n + col] / p;
                if factor == F::zero() {
                    continue;
                }
                for k in col..n {
                    let v = a[col * n + k];
                    a[r * n + k] -= factor * v;
                }
                let xc = x[col];
                x[r] -= factor * xc;
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for k in col + 1..n {
                s -= a[col * n + k] * x[k];
            }
            x[col] = s / a[col * n + col];
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::Singular)
        }
    }

    /// Eigenvalues as `(re, im)` pairs, computed in `f64`.
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        let m = nalgebra::DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].as_f64());
        m.complex_eigenvalues()
            .iter()
            .map(|z| (z.re, z.im))
            .collect()
    }
}

impl<F> std::ops::Index<(usize, usize)> for Matrix<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F> std::ops::IndexMut<(usize, usize)> for Matrix<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn max_abs<F: Real>(v: &[F]) -> F {
    v.iter().fold(F::zero(), |m, x| m.max(x.abs()))
}
