//! Dense spectral ground truth: symmetric eigendecomposition, the graph
//! Fourier transform, exact heat diffusion with per-node scales, and
//! quadrature of expansion coefficients.
//!
//! Everything here is `O(N^3)` or worse and exists to check the polynomial
//! path and to serve as the exact training backend on small graphs.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Zip};

use crate::error::{dims, input, Error, Result};
use crate::graph::SparseMatrix;
use crate::kernel::{Family, PolynomialBasis, ScaleVector};

/// Default size limit for dense decompositions.
pub const DEFAULT_MAX_NODES: usize = 2000;

const SYMMETRY_TOL: f64 = 1e-12;

/// `A = U diag(λ) Uᵀ` with ascending eigenvalues and orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Array1<f64>,
    /// Column `i` is the eigenvector of `eigenvalues[i]`.
    pub eigenvectors: Array2<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Decomposes a sparse symmetric matrix, refusing more than `max_n` rows.
    pub fn of_sparse(m: &SparseMatrix, max_n: usize) -> Result<Self> {
        if m.dim() > max_n {
            return Err(Error::Capacity {
                what: "dense eigendecomposition",
                size: m.dim(),
                limit: max_n,
            });
        }
        eigh(m.to_dense().view(), max_n)
    }

    /// `U diag(λ) Uᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.eigenvectors * &self.eigenvalues;
        scaled.dot(&self.eigenvectors.t())
    }
}

/// Symmetric eigendecomposition by Householder tridiagonalization followed by
/// implicit QL iterations.
///
/// Eigenvalues come back ascending. Each eigenvector is signed so that its
/// largest-magnitude component (first one on ties) is positive.
pub fn eigh(a: ArrayView2<'_, f64>, max_n: usize) -> Result<SpectralDecomposition> {
    let n = a.nrows();
    if a.ncols() != n {
        return dims("eigh", "square matrix", format!("{:?}", a.dim()));
    }
    if n > max_n {
        return Err(Error::Capacity {
            what: "dense eigendecomposition",
            size: n,
            limit: max_n,
        });
    }
    if n == 0 {
        return input("cannot decompose an empty matrix");
    }
    for p in 0..n {
        for q in 0..p {
            if (a[[p, q]] - a[[q, p]]).abs() > SYMMETRY_TOL {
                return input(format!(
                    "matrix is not symmetric: |a[{p},{q}] - a[{q},{p}]| = {:e}",
                    (a[[p, q]] - a[[q, p]]).abs()
                ));
            }
        }
    }
    if a.iter().any(|v| !v.is_finite()) {
        return input("matrix has non-finite entries");
    }

    // Symmetric input, so the transpose the routines work on starts as `a`.
    let mut vt = a.as_standard_layout().into_owned();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut vt, &mut d, &mut e);
    tridiagonal_ql(&mut d, &mut e, &mut vt)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]).then(i.cmp(&j)));
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| d[i]));
    let mut eigenvectors = Array2::zeros((n, n));
    for (col, &i) in order.iter().enumerate() {
        let row = vt.row(i);
        let mut pivot = 0;
        for k in 1..n {
            if row[k].abs() > row[pivot].abs() {
                pivot = k;
            }
        }
        let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
        Zip::from(eigenvectors.column_mut(col))
            .and(&row)
            .for_each(|o, &x| *o = sign * x);
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Householder reduction of the symmetric matrix in `w` to tridiagonal form.
///
/// `w` is worked on as the transpose of the accumulated transform, so every
/// inner loop walks a contiguous row. On return `d` holds the diagonal,
/// `e[1..]` the subdiagonal and row `i` of `w` the `i`-th basis vector.
fn tridiagonalize(w: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    let w = w.as_slice_mut().expect("standard layout");
    for j in 0..n {
        d[j] = w[j * n + n - 1];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = w[j * n + i - 1];
                w[j * n + i] = 0.0;
                w[i * n + j] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].fill(0.0);
            for j in 0..i {
                let f = d[j];
                w[i * n + j] = f;
                let row = &w[j * n..j * n + i];
                let mut g = e[j] + row[j] * f;
                for k in j + 1..i {
                    g += row[k] * d[k];
                    e[k] += row[k] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                let row = &mut w[j * n..j * n + i];
                for k in j..i {
                    row[k] -= f * e[k] + g * d[k];
                }
                d[j] = w[j * n + i - 1];
                w[j * n + i] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        w[i * n + n - 1] = w[i * n + i];
        w[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            let (head, tail) = w.split_at_mut((i + 1) * n);
            let pivot = &tail[..=i];
            for k in 0..=i {
                d[k] = pivot[k] / h;
            }
            for j in 0..=i {
                let row = &mut head[j * n..j * n + i + 1];
                let g: f64 = pivot.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
                for (r, dk) in row.iter_mut().zip(&d[..=i]) {
                    *r -= g * dk;
                }
            }
        }
        w[(i + 1) * n..(i + 1) * n + i + 1].fill(0.0);
    }
    for j in 0..n {
        d[j] = w[j * n + n - 1];
        w[j * n + n - 1] = 0.0;
    }
    w[n * n - 1] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iterations on the tridiagonal `(d, e)`; `vt` holds the
/// eigenvectors as rows and is rotated in place.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], vt: &mut Array2<f64>) -> Result<()> {
    const MAX_ITER: usize = 60;
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_ITER {
                    return Err(Error::Numerical(format!(
                        "QL iteration did not converge for eigenvalue {l}"
                    )));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in &mut d[l + 2..n] {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    rotate_rows(vt, i, c, s);
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// `(row_i, row_{i+1}) <- (c row_i - s row_{i+1}, s row_i + c row_{i+1})`.
fn rotate_rows(vt: &mut Array2<f64>, i: usize, c: f64, s: f64) {
    let n = vt.ncols();
    let data = vt.as_slice_mut().expect("standard layout");
    let (lo, hi) = data[i * n..(i + 2) * n].split_at_mut(n);
    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

/// Graph Fourier transform `Uᵀ x`.
pub fn graph_fourier(dec: &SpectralDecomposition, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.nrows() != dec.dim() {
        return dims("graph_fourier", dec.dim(), x.nrows());
    }
    Ok(dec.eigenvectors.t().dot(&x))
}

/// Inverse transform `U x̂`.
pub fn inverse_graph_fourier(
    dec: &SpectralDecomposition,
    xhat: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if xhat.nrows() != dec.dim() {
        return dims("inverse_graph_fourier", dec.dim(), xhat.nrows());
    }
    Ok(dec.eigenvectors.dot(&xhat))
}

/// Exact diffusion operator with per-node scales, built from a decomposition.
///
/// Row `p` of the operator is `Σ_i e^{-s_p λ_i} u_i(p) u_iᵀ`. The operator
/// keeps `K ⊙ U` and `(-Λ K) ⊙ U`, where `K[p, i] = e^{-s_p λ_i}`.
#[derive(Debug, Clone)]
pub struct ExactKernel<'a> {
    dec: &'a SpectralDecomposition,
    weighted: Array2<f64>,
    dweighted: Array2<f64>,
}

impl<'a> ExactKernel<'a> {
    pub fn new(dec: &'a SpectralDecomposition, scales: &ScaleVector) -> Result<Self> {
        let n = dec.dim();
        if scales.len() != n {
            return dims("ExactKernel", n, scales.len());
        }
        let s = scales.as_slice();
        let lam = &dec.eigenvalues;
        let u = &dec.eigenvectors;
        let mut weighted = Array2::zeros((n, n));
        let mut dweighted = Array2::zeros((n, n));
        for p in 0..n {
            for i in 0..n {
                let k = (-s[p] * lam[i]).exp();
                weighted[[p, i]] = k * u[[p, i]];
                dweighted[[p, i]] = -lam[i] * k * u[[p, i]];
            }
        }
        Ok(Self {
            dec,
            weighted,
            dweighted,
        })
    }

    /// `Uᵀ x`, the spectral projection reused by both directions.
    pub fn project(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        graph_fourier(self.dec, x)
    }

    /// Applies the operator given a projection from [`ExactKernel::project`].
    pub fn apply_projected(&self, projected: &Array2<f64>) -> Array2<f64> {
        self.weighted.dot(projected)
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.apply_projected(&self.project(x)?))
    }

    /// Transpose of the operator applied to `g`.
    pub fn adjoint(&self, g: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if g.nrows() != self.dec.dim() {
            return dims("ExactKernel::adjoint", self.dec.dim(), g.nrows());
        }
        Ok(self.dec.eigenvectors.dot(&self.weighted.t().dot(&g)))
    }

    /// `∂/∂s_p` of the operator output, contracted with `g`: entry `p` is
    /// `⟨g[p, :], (∂ output / ∂ s_p)[p, :]⟩`.
    pub fn scale_gradient(&self, projected: &Array2<f64>, g: ArrayView2<'_, f64>) -> Array1<f64> {
        let dout = self.dweighted.dot(projected);
        (&dout * &g).sum_axis(ndarray::Axis(1))
    }
}

/// Exact heat diffusion: row `p` of the output is `Σ_i e^{-s_p λ_i} u_i(p) (Uᵀ x)[i, :]`.
pub fn exact_heat_conv(
    dec: &SpectralDecomposition,
    x: ArrayView2<'_, f64>,
    scales: &ScaleVector,
) -> Result<Array2<f64>> {
    if x.nrows() != dec.dim() {
        return dims("exact_heat_conv", dec.dim(), x.nrows());
    }
    ExactKernel::new(dec, scales)?.apply(x)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let center = f(mid);
    let mut kronrod = GK_WEIGHTS[7] * center;
    let mut gauss = GAUSS_WEIGHTS[3] * center;
    for j in 0..7 {
        let dx = half * GK_NODES[j];
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += GK_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

/// Adaptive 15-point Gauss–Kronrod quadrature over `pieces` equal subintervals
/// of `[a, b]`, bisecting any piece whose error estimate exceeds its share of
/// `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    pieces: usize,
    abs_tol: f64,
) -> Result<f64> {
    const MAX_DEPTH: u32 = 40;

    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
        let (value, err) = gauss_kronrod(f, a, b);
        if err <= tol || err <= 1e-15 * value.abs() {
            return Ok(value);
        }
        if depth >= MAX_DEPTH {
            return Err(Error::Numerical(format!(
                "quadrature did not converge on [{a}, {b}]: error estimate {err:e} > {tol:e}"
            )));
        }
        let mid = 0.5 * (a + b);
        Ok(recurse(f, a, mid, 0.5 * tol, depth + 1)? + recurse(f, mid, b, 0.5 * tol, depth + 1)?)
    }

    let pieces = pieces.max(1);
    let width = (b - a) / pieces as f64;
    let tol = abs_tol / pieces as f64;
    let mut total = 0.0;
    for k in 0..pieces {
        let lo = a + width * k as f64;
        let hi = if k + 1 == pieces { b } else { lo + width };
        total += recurse(&f, lo, hi, tol, 0)?;
    }
    Ok(total)
}

/// Hermite truncation bound: the Gaussian weight beyond |λ| = 12 is negligible.
pub const HERMITE_CUTOFF: f64 = 12.0;
/// Laguerre truncation bound on `[0, ∞)`.
pub const LAGUERRE_CUTOFF: f64 = 80.0;

const QUAD_TOL: f64 = 1e-11;

fn physicists_hermite(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn laguerre_poly(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 1.0 - x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `∫ g(λ) e^{-sλ} P_n(λ) w(λ) dλ` over the family's domain, divided by the
/// squared norm of `P_n`, for a weight `g` multiplying the kernel.
fn project_onto(s: f64, n: usize, basis: &PolynomialBasis, g: impl Fn(f64) -> f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return input(format!("scale must be finite and > 0, got {s}"));
    }
    match basis.family() {
        Family::Chebyshev => {
            // λ = b (1 + cos θ) / 2 turns the Chebyshev weight into dθ.
            let b = basis.b();
            let norm = if n == 0 { 1.0 / PI } else { 2.0 / PI };
            let v = integrate(
                |theta: f64| {
                    let lambda = 0.5 * b * (1.0 + theta.cos());
                    g(lambda) * (-s * lambda).exp() * (n as f64 * theta).cos()
                },
                0.0,
                PI,
                8,
                QUAD_TOL,
            )?;
            Ok(norm * v)
        }
        Family::Hermite => {
            let mut norm = PI.sqrt();
            for k in 1..=n {
                norm *= 2.0 * k as f64;
            }
            let v = integrate(
                |lambda: f64| {
                    g(lambda)
                        * (-s * lambda - lambda * lambda).exp()
                        * physicists_hermite(n, lambda)
                },
                -HERMITE_CUTOFF,
                HERMITE_CUTOFF,
                24,
                QUAD_TOL,
            )?;
            Ok(v / norm)
        }
        Family::Laguerre => integrate(
            |lambda: f64| g(lambda) * (-(s + 1.0) * lambda).exp() * laguerre_poly(n, lambda),
            0.0,
            LAGUERRE_CUTOFF,
            40,
            QUAD_TOL,
        ),
    }
}

/// Expansion coefficient `c_{s,n}` by numerical quadrature of the orthogonal
/// projection of `e^{-sλ}` onto `P_n`.
pub fn coeff_quadrature(s: f64, n: usize, basis: &PolynomialBasis) -> Result<f64> {
    project_onto(s, n, basis, |_| 1.0)
}

/// `∂c_{s,n}/∂s = -∫ λ e^{-sλ} P_n(λ) w(λ) dλ / ‖P_n‖²` by quadrature.
pub fn dcoeff_quadrature(s: f64, n: usize, basis: &PolynomialBasis) -> Result<f64> {
    project_onto(s, n, basis, |lambda| -lambda)
}
