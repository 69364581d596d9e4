//! Polynomial approximation of the heat kernel `e^{-sλ}`.
//!
//! For a family of orthogonal polynomials `P_n` with closed-form expansion
//! coefficients `c_{s,n}`, the diffusion operator is approximated by
//!
//! ```text
//! e^{-sL} x  ≈  Σ_{n=0}^{m} c_{s,n} P_n(L) x
//! ```
//!
//! where each `P_n(L) x` costs one sparse product via the three-term
//! recurrence. Each node `p` carries its own scale `s_p`; node `p`'s output row
//! is combined with the coefficients of `s_p`.
//!
//! All three families are written in the common form
//!
//! ```text
//! P_{n+1} = (a_n L + c_n) P_n + g_n P_{n-1},   P_0 = I,  P_{-1} = 0
//! ```
//!
//! | family    | domain used   | a_n         | c_n              | g_n          |
//! |-----------|---------------|-------------|------------------|--------------|
//! | Chebyshev | λ ∈ [0, b]    | 2/b, then 4/b | -1, then -2    | -1           |
//! | Hermite   | λ ∈ ℝ         | 2           | 0                | -2n          |
//! | Laguerre  | λ ∈ [0, ∞)    | -1/(n+1)    | (2n+1)/(n+1)     | -n/(n+1)     |
//!
//! Chebyshev polynomials are evaluated at the shifted argument `(2/b) L - I`,
//! which maps `[0, b]` onto `[-1, 1]`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{dims, input, Error, Result};
use crate::graph::SparseMatrix;
use crate::specfun::{bessel_i_scaled_all, log_factorial};

/// Default truncation order for Chebyshev and Laguerre expansions.
pub const DEFAULT_ORDER: usize = 20;
/// Default truncation order for Hermite expansions.
pub const DEFAULT_HERMITE_ORDER: usize = 30;
/// Default Chebyshev domain length; covers the whole normalized-Laplacian spectrum.
pub const DEFAULT_CHEBYSHEV_B: f64 = 2.0;

/// Largest natural log representable in an `f64`.
const LN_MAX: f64 = 709.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Chebyshev,
    Hermite,
    Laguerre,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Chebyshev, Family::Hermite, Family::Laguerre];

    pub fn default_order(self) -> usize {
        match self {
            Family::Hermite => DEFAULT_HERMITE_ORDER,
            _ => DEFAULT_ORDER,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Chebyshev => "chebyshev",
            Family::Hermite => "hermite",
            Family::Laguerre => "laguerre",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chebyshev" => Ok(Family::Chebyshev),
            "hermite" => Ok(Family::Hermite),
            "laguerre" => Ok(Family::Laguerre),
            other => input(format!("unknown polynomial family '{other}'")),
        }
    }
}

/// A polynomial family truncated at order `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolynomialBasis {
    family: Family,
    order: usize,
    b: f64,
}

impl PolynomialBasis {
    /// `b` is only meaningful for Chebyshev and is ignored otherwise.
    pub fn new(family: Family, order: usize, b: f64) -> Result<Self> {
        if order < 1 {
            return input("polynomial order must be at least 1");
        }
        if family == Family::Chebyshev && !(b > 0.0 && b.is_finite()) {
            return input(format!("Chebyshev domain parameter b must be > 0, got {b}"));
        }
        let b = if family == Family::Chebyshev {
            b
        } else {
            DEFAULT_CHEBYSHEV_B
        };
        Ok(Self { family, order, b })
    }

    /// The family at its default order (and `b = 2` for Chebyshev).
    pub fn default_for(family: Family) -> Self {
        Self {
            family,
            order: family.default_order(),
            b: DEFAULT_CHEBYSHEV_B,
        }
    }

    pub fn chebyshev(order: usize, b: f64) -> Result<Self> {
        Self::new(Family::Chebyshev, order, b)
    }

    pub fn hermite(order: usize) -> Result<Self> {
        Self::new(Family::Hermite, order, DEFAULT_CHEBYSHEV_B)
    }

    pub fn laguerre(order: usize) -> Result<Self> {
        Self::new(Family::Laguerre, order, DEFAULT_CHEBYSHEV_B)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `(a_n, c_n, g_n)` in `P_{n+1} = (a_n L + c_n) P_n + g_n P_{n-1}`.
    pub(crate) fn recurrence(&self, n: usize) -> (f64, f64, f64) {
        let nf = n as f64;
        match self.family {
            Family::Chebyshev if n == 0 => (2.0 / self.b, -1.0, 0.0),
            Family::Chebyshev => (4.0 / self.b, -2.0, -1.0),
            Family::Hermite => (2.0, 0.0, -2.0 * nf),
            Family::Laguerre => (
                -1.0 / (nf + 1.0),
                (2.0 * nf + 1.0) / (nf + 1.0),
                -nf / (nf + 1.0),
            ),
        }
    }

    /// `P_0(λ) ..= P_m(λ)` at a scalar argument.
    pub fn evaluate(&self, lambda: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.order + 1);
        p.push(1.0);
        let mut prev = 0.0;
        for n in 0..self.order {
            let (a, c, g) = self.recurrence(n);
            let next = (a * lambda + c) * p[n] + g * prev;
            prev = p[n];
            p.push(next);
        }
        p
    }

    /// Coefficients `c_{s,n}` and `∂c_{s,n}/∂s` for `n = 0..=m`.
    pub fn coefficients(&self, s: f64) -> Result<CoefficientRow> {
        match self.family {
            Family::Chebyshev => chebyshev_coeffs(s, self),
            Family::Hermite => hermite_coeffs(s, self),
            Family::Laguerre => laguerre_coeffs(s, self),
        }
    }
}

/// Expansion coefficients at one scale and their derivatives in that scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub coeffs: Vec<f64>,
    pub dcoeffs: Vec<f64>,
}

fn check_scale(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        input(format!("scale must be finite and > 0, got {s}"))
    }
}

fn check_family(basis: &PolynomialBasis, want: Family) -> Result<()> {
    if basis.family == want {
        Ok(())
    } else {
        input(format!("expected a {want} basis, got {}", basis.family))
    }
}

/// `c_{s,n} = (2 - δ_{n0}) (-1)^n e^{-x} I_n(x)` with `x = s b / 2`.
///
/// The derivative is `(-1)^n b e^{-x} (I_n'(x) - I_n(x))` for `n ≥ 1` and
/// `(b/2) e^{-x} (I_1(x) - I_0(x))` for `n = 0`, with `I_n'` taken as
/// `(I_{n-1} + I_{n+1}) / 2`.
pub fn chebyshev_coeffs(s: f64, basis: &PolynomialBasis) -> Result<CoefficientRow> {
    check_family(basis, Family::Chebyshev)?;
    check_scale(s)?;
    let m = basis.order;
    let b = basis.b;
    let x = s * b / 2.0;
    // e^{-x} I_n(x) for n up to m + 1, the extra order feeding I_m'.
    let scaled = bessel_i_scaled_all(m + 1, x)?;
    let mut coeffs = Vec::with_capacity(m + 1);
    let mut dcoeffs = Vec::with_capacity(m + 1);
    coeffs.push(scaled[0]);
    dcoeffs.push(0.5 * b * (scaled[1] - scaled[0]));
    for n in 1..=m {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let deriv = 0.5 * (scaled[n - 1] + scaled[n + 1]);
        coeffs.push(2.0 * sign * scaled[n]);
        dcoeffs.push(sign * b * (deriv - scaled[n]));
    }
    Ok(CoefficientRow { coeffs, dcoeffs })
}

/// `c_{s,n} = (1/n!) (-s/2)^n e^{s²/4}`, evaluated as `±exp(s²/4 + n ln(s/2) - ln n!)`.
///
/// The derivative is `c_{s,n} (n/s + s/2)`.
pub fn hermite_coeffs(s: f64, basis: &PolynomialBasis) -> Result<CoefficientRow> {
    check_family(basis, Family::Hermite)?;
    check_scale(s)?;
    let m = basis.order;
    let ln_half_s = (0.5 * s).ln();
    let mut coeffs = Vec::with_capacity(m + 1);
    let mut dcoeffs = Vec::with_capacity(m + 1);
    for n in 0..=m {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let ln_mag = 0.25 * s * s + n as f64 * ln_half_s - log_factorial(n);
        let ln_dmag = ln_mag + (n as f64 / s + 0.5 * s).ln();
        if ln_mag > LN_MAX || ln_dmag > LN_MAX {
            return Err(Error::Numerical(format!(
                "Hermite coefficient overflow at s = {s}, n = {n} (ln|c| = {ln_mag:.1}); \
                 lower the scale upper bound or the order"
            )));
        }
        coeffs.push(sign * ln_mag.exp());
        dcoeffs.push(sign * ln_dmag.exp());
    }
    Ok(CoefficientRow { coeffs, dcoeffs })
}

/// `c_{s,n} = s^n / (s+1)^{n+1}`, with derivative `s^{n-1} (n - s) / (s+1)^{n+2}`.
///
/// Both are built by repeated multiplication with `s / (s+1)`.
pub fn laguerre_coeffs(s: f64, basis: &PolynomialBasis) -> Result<CoefficientRow> {
    check_family(basis, Family::Laguerre)?;
    check_scale(s)?;
    let m = basis.order;
    let inv = 1.0 / (s + 1.0);
    let ratio = s * inv;
    let mut coeffs = Vec::with_capacity(m + 1);
    let mut dcoeffs = Vec::with_capacity(m + 1);
    let mut c = inv;
    // s^{n-1} / (s+1)^{n+2}, starting at n = 1.
    let mut tail = inv * inv * inv;
    coeffs.push(c);
    dcoeffs.push(-inv * inv);
    for n in 1..=m {
        c *= ratio;
        coeffs.push(c);
        dcoeffs.push((n as f64 - s) * tail);
        tail *= ratio;
    }
    Ok(CoefficientRow { coeffs, dcoeffs })
}

/// Per-node diffusion scales, kept inside `[s_min, s_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleVector {
    values: Vec<f64>,
    s_min: f64,
    s_max: f64,
}

impl ScaleVector {
    pub const DEFAULT_MIN: f64 = 1e-3;
    pub const DEFAULT_MAX: f64 = 10.0;
    pub const DEFAULT_INITIAL: f64 = 2.0;

    pub fn new(values: Vec<f64>, s_min: f64, s_max: f64) -> Result<Self> {
        if !(s_min > 0.0 && s_min <= s_max && s_max.is_finite()) {
            return input(format!("invalid scale bounds [{s_min}, {s_max}]"));
        }
        if let Some((p, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= s_min && **v <= s_max))
        {
            return input(format!("scale {p} = {v} outside [{s_min}, {s_max}]"));
        }
        Ok(Self {
            values,
            s_min,
            s_max,
        })
    }

    /// Every node at scale `s` with the default bounds.
    pub fn uniform(n: usize, s: f64) -> Result<Self> {
        Self::new(
            vec![s; n],
            Self::DEFAULT_MIN.min(s),
            Self::DEFAULT_MAX.max(s),
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.s_min, self.s_max)
    }

    /// Overwrites every scale with the projection of `values` onto the bounds.
    pub fn assign_clamped(&mut self, values: impl IntoIterator<Item = f64>) {
        for (slot, v) in self.values.iter_mut().zip(values) {
            *slot = v.clamp(self.s_min, self.s_max);
        }
    }

    /// Reorders scales so that old node `p` becomes node `perm[p]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for (p, &t) in perm.iter().enumerate() {
            values[t] = self.values[p];
        }
        Self { values, ..*self }
    }
}

/// Per-node coefficient rows: entry `(p, n)` is `c_{s_p,n}`, and `dcoeffs`
/// holds `∂c_{s_p,n}/∂s_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub coeffs: Array2<f64>,
    pub dcoeffs: Array2<f64>,
}

impl CoefficientTable {
    pub fn num_nodes(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn order(&self) -> usize {
        self.coeffs.ncols() - 1
    }
}

pub fn build_coefficient_table(
    scales: &ScaleVector,
    basis: &PolynomialBasis,
) -> Result<CoefficientTable> {
    let n = scales.len();
    let m = basis.order;
    let mut coeffs = Array2::zeros((n, m + 1));
    let mut dcoeffs = Array2::zeros((n, m + 1));
    for (p, &s) in scales.as_slice().iter().enumerate() {
        let row = basis.coefficients(s)?;
        for k in 0..=m {
            coeffs[[p, k]] = row.coeffs[k];
            dcoeffs[[p, k]] = row.dcoeffs[k];
        }
    }
    Ok(CoefficientTable { coeffs, dcoeffs })
}

/// `[P_0(L) x, ..., P_m(L) x]`, one sparse product per order.
pub fn basis_sequence(
    lap: &SparseMatrix,
    x: ArrayView2<'_, f64>,
    basis: &PolynomialBasis,
) -> Result<Vec<Array2<f64>>> {
    if x.nrows() != lap.dim() {
        return dims(
            "basis_sequence",
            format!("{} rows", lap.dim()),
            format!("{} rows", x.nrows()),
        );
    }
    let mut seq: Vec<Array2<f64>> = Vec::with_capacity(basis.order + 1);
    seq.push(x.to_owned());
    for n in 0..basis.order {
        let (a, c, g) = basis.recurrence(n);
        let mut next = lap.spmm(seq[n].view())?;
        if n == 0 {
            Zip::from(&mut next)
                .and(&seq[0])
                .for_each(|o, &cur| *o = a * *o + c * cur);
        } else {
            Zip::from(&mut next)
                .and(&seq[n])
                .and(&seq[n - 1])
                .for_each(|o, &cur, &prev| *o = a * *o + c * cur + g * prev);
        }
        seq.push(next);
    }
    Ok(seq)
}

/// Row-weighted combination: output row `p` is `Σ_n table[p, n] · seq[n][p, :]`.
pub fn combine_rows(table: &Array2<f64>, seq: &[Array2<f64>]) -> Result<Array2<f64>> {
    let Some(first) = seq.first() else {
        return input("empty basis sequence");
    };
    if table.ncols() != seq.len() || table.nrows() != first.nrows() {
        return dims(
            "combine_rows",
            format!("{}x{} table", first.nrows(), seq.len()),
            format!("{:?}", table.dim()),
        );
    }
    let mut out = Array2::zeros(first.raw_dim());
    for (n, term) in seq.iter().enumerate() {
        Zip::from(out.rows_mut())
            .and(term.rows())
            .and(table.column(n))
            .for_each(|mut o, t, &c| o.scaled_add(c, &t));
    }
    Ok(out)
}

fn check_table(
    lap: &SparseMatrix,
    table: &CoefficientTable,
    basis: &PolynomialBasis,
) -> Result<()> {
    if table.num_nodes() != lap.dim() || table.order() != basis.order {
        return dims(
            "coefficient table",
            format!("{} nodes, order {}", lap.dim(), basis.order),
            format!("{} nodes, order {}", table.num_nodes(), table.order()),
        );
    }
    Ok(())
}

/// Approximate heat diffusion `[Σ_n diag(c_{·,n}) P_n(L)] x` with per-node scales.
pub fn heat_conv_apply(
    lap: &SparseMatrix,
    x: ArrayView2<'_, f64>,
    table: &CoefficientTable,
    basis: &PolynomialBasis,
) -> Result<Array2<f64>> {
    check_table(lap, table, basis)?;
    let seq = basis_sequence(lap, x, basis)?;
    combine_rows(&table.coeffs, &seq)
}

/// Transpose of [`heat_conv_apply`]: `Σ_n P_n(L) diag(c_{·,n}) g`.
///
/// Uses Clenshaw's backward recurrence, so the cost matches the forward
/// operator (`m` sparse products). `L` must be symmetric.
pub fn heat_conv_adjoint(
    lap: &SparseMatrix,
    g: ArrayView2<'_, f64>,
    table: &CoefficientTable,
    basis: &PolynomialBasis,
) -> Result<Array2<f64>> {
    check_table(lap, table, basis)?;
    if g.nrows() != lap.dim() {
        return dims("heat_conv_adjoint", lap.dim(), g.nrows());
    }
    let m = basis.order;
    let weighted = |n: usize| {
        let mut y = g.to_owned();
        Zip::from(y.rows_mut())
            .and(table.coeffs.column(n))
            .for_each(|mut r, &c| r *= c);
        y
    };
    // b_k = y_k + (a_k L + c_k) b_{k+1} + g_{k+1} b_{k+2}; the sum is b_0.
    let mut b1 = weighted(m);
    let mut b2 = Array2::<f64>::zeros(g.raw_dim());
    for k in (0..m).rev() {
        let (a, c, _) = basis.recurrence(k);
        let (_, _, gk1) = basis.recurrence(k + 1);
        let mut bk = lap.spmm(b1.view())?;
        Zip::from(&mut bk)
            .and(&weighted(k))
            .and(&b1)
            .and(&b2)
            .for_each(|o, &y, &x1, &x2| *o = y + a * *o + c * x1 + gk1 * x2);
        b2 = b1;
        b1 = bk;
    }
    Ok(b1)
}

/// Scalar approximation `Σ_n c_{s,n} P_n(λ)` of `e^{-sλ}`.
pub fn kernel_pointwise(s: f64, lambda: f64, basis: &PolynomialBasis) -> Result<f64> {
    let row = basis.coefficients(s)?;
    Ok(row
        .coeffs
        .iter()
        .zip(basis.evaluate(lambda))
        .map(|(c, p)| c * p)
        .sum())
}

/// Max over a uniform grid of `points` values on `[0, 2]` of
/// `|e^{-sλ} - Σ_{n≤truncation} c_{s,n} P_n(λ)|`.
///
/// `truncation` may be anything up to the basis order, including 0.
pub fn max_kernel_error(
    s: f64,
    basis: &PolynomialBasis,
    truncation: usize,
    points: usize,
) -> Result<f64> {
    if truncation > basis.order {
        return input(format!(
            "truncation {truncation} exceeds basis order {}",
            basis.order
        ));
    }
    let row = basis.coefficients(s)?;
    let mut worst = 0.0_f64;
    for i in 0..points {
        let lambda = 2.0 * i as f64 / (points - 1).max(1) as f64;
        let approx: f64 = row.coeffs[..=truncation]
            .iter()
            .zip(basis.evaluate(lambda))
            .map(|(c, p)| c * p)
            .sum();
        worst = worst.max((approx - (-s * lambda).exp()).abs());
    }
    Ok(worst)
}
