mod common;

use common::*;
use heatconv::kernel::{build_coefficient_table, heat_conv_apply, Family};
use heatconv::spectral::{
    coeff_quadrature, dcoeff_quadrature, eigh, exact_heat_conv, graph_fourier,
    inverse_graph_fourier, ExactKernel,
};
use heatconv::{Error, Graph, PolynomialBasis, ScaleVector, SpectralDecomposition};
use ndarray::{array, Array2};
use proptest::prelude::*;

fn decompose(g: &Graph) -> SpectralDecomposition {
    SpectralDecomposition::of_sparse(&g.normalized_laplacian(), 2000).unwrap()
}

/// `e^{-sA}` by scaling and squaring a 30-term Taylor series.
fn expm_neg(a: &Array2<f64>, s: f64) -> Array2<f64> {
    let n = a.nrows();
    let squarings = (s * 2.0).log2().ceil().max(0.0) as i32 + 4;
    let m = a * (-s / 2f64.powi(squarings));
    let mut term = Array2::<f64>::eye(n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = term.dot(&m) / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = sum.dot(&sum);
    }
    sum
}

fn random_scales(n: usize, lo: f64, hi: f64, seed: u64) -> ScaleVector {
    let values = random_matrix(n, 1, seed)
        .iter()
        .map(|v| lo + (hi - lo) * 0.5 * (v + 1.0))
        .collect();
    ScaleVector::new(values, 1e-3, 10.0).unwrap()
}

fn approx_vs_exact(
    g: &Graph,
    x: &Array2<f64>,
    scales: &ScaleVector,
    basis: &PolynomialBasis,
) -> (Array2<f64>, Array2<f64>) {
    let table = build_coefficient_table(scales, basis).unwrap();
    let approx = heat_conv_apply(&g.normalized_laplacian(), x.view(), &table, basis).unwrap();
    let exact = exact_heat_conv(&decompose(g), x.view(), scales).unwrap();
    (approx, exact)
}

/// Worst `|Σ_n c_{s,n} P_n(λ) - e^{-sλ}|` over the given eigenvalues.
fn spectral_error(s: f64, basis: &PolynomialBasis, eigenvalues: &[f64]) -> f64 {
    let c = basis.coefficients(s).unwrap().coeffs;
    eigenvalues
        .iter()
        .map(|&l| {
            let p = basis.evaluate(l);
            let v: f64 = c.iter().zip(&p).map(|(a, b)| a * b).sum();
            (v - (-s * l).exp()).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn k2_and_identity_examples() {
    let k2 = decompose(&Graph::from_edges(&[(0, 1, None)], 2).unwrap());
    assert!(k2.eigenvalues[0].abs() < 1e-14 && (k2.eigenvalues[1] - 2.0).abs() < 1e-14);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert!((k2.eigenvectors[[0, 0]] - r).abs() < 1e-14);
    assert!((k2.eigenvectors[[1, 0]] - r).abs() < 1e-14);
    assert!((k2.eigenvectors[[0, 1]].abs() - r).abs() < 1e-14);
    assert!((k2.eigenvectors[[0, 1]] + k2.eigenvectors[[1, 1]]).abs() < 1e-14);

    let id = eigh(Array2::<f64>::eye(5).view(), 10).unwrap();
    assert!(id.eigenvalues.iter().all(|&l| l == 1.0));
    assert_eq!(id.eigenvectors, Array2::<f64>::eye(5));
}

#[test]
fn rejects_asymmetric_and_oversized() {
    let a = array![[1.0, 2.0], [2.1, 1.0]];
    assert!(matches!(eigh(a.view(), 10), Err(Error::Input(_))));
    let g = connected_graph(12, 0, 4);
    assert!(matches!(
        SpectralDecomposition::of_sparse(&g.normalized_laplacian(), 11),
        Err(Error::Capacity { .. })
    ));
}

#[test]
fn random_symmetric_reconstruction() {
    let r = random_matrix(20, 20, 42);
    let a = &r + &r.t();
    let dec = eigh(a.view(), 100).unwrap();
    assert!((&dec.reconstruct() - &a).iter().all(|v| v.abs() < 1e-9));
    assert!(dec.eigenvalues.windows(2).into_iter().all(|w| w[0] <= w[1]));
}

#[test]
fn fourier_examples() {
    let g = connected_graph(15, 2, 10);
    let dec = decompose(&g);
    let u1 = dec
        .eigenvectors
        .column(0)
        .to_owned()
        .insert_axis(ndarray::Axis(1));
    let hat = graph_fourier(&dec, u1.view()).unwrap();
    assert!((hat[[0, 0]] - 1.0).abs() < 1e-12);
    assert!(hat.iter().skip(1).all(|v| v.abs() < 1e-12));
    assert!(graph_fourier(&dec, random_matrix(14, 1, 0).view()).is_err());
    assert!(inverse_graph_fourier(&dec, random_matrix(16, 1, 0).view()).is_err());
}

#[test]
fn exact_conv_examples() {
    let k2 = decompose(&Graph::from_edges(&[(0, 1, None)], 2).unwrap());
    let out = exact_heat_conv(
        &k2,
        array![[1.0], [0.0]].view(),
        &ScaleVector::uniform(2, 1.0).unwrap(),
    )
    .unwrap();
    let e2 = (-2.0f64).exp();
    assert!((out[[0, 0]] - 0.5 * (1.0 + e2)).abs() < 1e-14);
    assert!((out[[1, 0]] - 0.5 * (1.0 - e2)).abs() < 1e-14);

    let g = connected_graph(10, 5, 6);
    let x = random_matrix(10, 2, 1);
    let tiny = exact_heat_conv(
        &decompose(&g),
        x.view(),
        &ScaleVector::uniform(10, 1e-12).unwrap(),
    )
    .unwrap();
    assert!(rel_frob(&tiny, &x) < 1e-10);
}

#[test]
fn regular_graph_preserves_constants() {
    let n = 12;
    // Circulant graph, every node of degree 4.
    let edges: Vec<_> = (0..n)
        .flat_map(|p| [(p, (p + 1) % n, None), (p, (p + 3) % n, None)])
        .collect();
    let g = Graph::from_edges(&edges, n).unwrap();
    let dec = decompose(&g);
    for &s in &[0.1, 1.0, 5.0] {
        let out = exact_heat_conv(
            &dec,
            Array2::ones((n, 1)).view(),
            &ScaleVector::uniform(n, s).unwrap(),
        )
        .unwrap();
        assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-9), "s={s}");
    }
}

#[test]
fn quadrature_examples() {
    let lag = PolynomialBasis::laguerre(20).unwrap();
    assert!((coeff_quadrature(1.0, 0, &lag).unwrap() - 0.5).abs() < 1e-9);
    let cheb = PolynomialBasis::chebyshev(20, 2.0).unwrap();
    assert!((coeff_quadrature(1.0, 0, &cheb).unwrap() - 0.4657596076).abs() < 1e-9);
    let herm = PolynomialBasis::hermite(30).unwrap();
    assert!((coeff_quadrature(2.0, 1, &herm).unwrap() + std::f64::consts::E).abs() < 1e-9);
    assert!(coeff_quadrature(0.0, 0, &lag).is_err());
    // Derivative quadrature against the closed-form derivative.
    for basis in [&lag, &cheb, &herm] {
        let row = basis.coefficients(1.5).unwrap();
        for n in 0..=6 {
            assert!((dcoeff_quadrature(1.5, n, basis).unwrap() - row.dcoeffs[n]).abs() < 1e-8);
        }
    }
}

#[test]
fn chebyshev_matches_exact_across_range() {
    let basis = PolynomialBasis::default_for(Family::Chebyshev);
    for (k, &s) in [0.1, 0.5, 1.0, 2.0, 3.5, 5.0].iter().enumerate() {
        let g = connected_graph(40, k as u64, 60);
        let x = random_matrix(40, 4, k as u64);
        let (approx, exact) =
            approx_vs_exact(&g, &x, &ScaleVector::uniform(40, s).unwrap(), &basis);
        assert!(rel_frob(&approx, &exact) < 1e-4, "s={s}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decomposition_invariants((n, seed, extra) in graph_params(50)) {
        let g = connected_graph(n, seed, extra);
        let dec = decompose(&g);
        let u = &dec.eigenvectors;
        let gram = u.t().dot(u);
        prop_assert!((&gram - &Array2::<f64>::eye(n)).iter().all(|v| v.abs() < 1e-10));
        let lap = g.normalized_laplacian().to_dense();
        prop_assert!((&dec.reconstruct() - &lap).iter().all(|v| v.abs() < 1e-9));
        prop_assert!(dec.eigenvalues.iter().all(|&l| (-1e-12..=2.0 + 1e-9).contains(&l)));
        prop_assert!(dec.eigenvalues.windows(2).into_iter().all(|w| w[0] <= w[1]));
        for col in u.columns() {
            let big = col.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let first = col.iter().find(|v| v.abs() == big).unwrap();
            prop_assert!(*first > 0.0);
        }
        // Bit-identical on a repeat.
        prop_assert_eq!(decompose(&g), dec);
    }

    #[test]
    fn fourier_is_orthogonal((n, seed, extra) in graph_params(40)) {
        let g = connected_graph(n, seed, extra);
        let dec = decompose(&g);
        let x = random_matrix(n, 3, seed ^ 1);
        let hat = graph_fourier(&dec, x.view()).unwrap();
        prop_assert!((frob(&hat) - frob(&x)).abs() < 1e-10);
        let back = inverse_graph_fourier(&dec, hat.view()).unwrap();
        prop_assert!((&back - &x).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn exact_conv_matches_matrix_exponential((n, seed, extra) in graph_params(20)) {
        let g = connected_graph(n, seed, extra);
        let dec = decompose(&g);
        let scales = random_scales(n, 0.1, 5.0, seed ^ 2);
        let x = random_matrix(n, 2, seed ^ 3);
        let out = exact_heat_conv(&dec, x.view(), &scales).unwrap();
        let lap = g.normalized_laplacian().to_dense();
        for p in 0..n {
            let row = expm_neg(&lap, scales.as_slice()[p]).row(p).dot(&x);
            for j in 0..2 {
                prop_assert!((out[[p, j]] - row[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn uniform_exact_operator_is_symmetric((n, seed, extra) in graph_params(30), s in 0.01..10.0f64) {
        let g = connected_graph(n, seed, extra);
        let dec = decompose(&g);
        let op = exact_heat_conv(&dec, Array2::<f64>::eye(n).view(), &ScaleVector::uniform(n, s).unwrap()).unwrap();
        prop_assert!((&op - &op.t()).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn semigroup((n, seed, extra) in graph_params(30), s1 in 0.01..4.0f64, s2 in 0.01..4.0f64) {
        let g = connected_graph(n, seed, extra);
        let dec = decompose(&g);
        let x = random_matrix(n, 2, seed ^ 4);
        let conv = |x: &Array2<f64>, s: f64| exact_heat_conv(&dec, x.view(), &ScaleVector::uniform(n, s).unwrap()).unwrap();
        let twice = conv(&conv(&x, s1), s2);
        let once = conv(&x, s1 + s2);
        prop_assert!((&twice - &once).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn exact_kernel_adjoint_and_scale_gradient((n, seed, extra) in graph_params(20)) {
        let g = connected_graph(n, seed, extra);
        let dec = decompose(&g);
        let scales = random_scales(n, 0.2, 4.0, seed ^ 6);
        let x = random_matrix(n, 3, seed ^ 7);
        let y = random_matrix(n, 3, seed ^ 8);
        let k = ExactKernel::new(&dec, &scales).unwrap();
        let ax = k.apply(x.view()).unwrap();
        let aty = k.adjoint(y.view()).unwrap();
        prop_assert!(((&ax * &y).sum() - (&x * &aty).sum()).abs() < 1e-10 * frob(&x).max(1.0) * frob(&y).max(1.0));

        let grad = k.scale_gradient(&k.project(x.view()).unwrap(), y.view());
        let h = 1e-6;
        for p in 0..n {
            let shift = |d: f64| {
                let mut v = scales.as_slice().to_vec();
                v[p] += d;
                let s = ScaleVector::new(v, 1e-3, 10.0).unwrap();
                (&exact_heat_conv(&dec, x.view(), &s).unwrap() * &y).sum()
            };
            let fd = (shift(h) - shift(-h)) / (2.0 * h);
            prop_assert!((grad[p] - fd).abs() <= 1e-6 * fd.abs().max(1e-3));
        }
    }

    /// Chebyshev meets the 1e-4 agreement everywhere on [0.1, 5] with mixed
    /// per-node scales.
    #[test]
    fn chebyshev_agrees_with_exact((n, seed, extra) in graph_params(50)) {
        let g = connected_graph(n, seed, extra);
        let scales = random_scales(n, 0.1, 5.0, seed ^ 12);
        let x = random_matrix(n, 3, seed ^ 13);
        let (approx, exact) = approx_vs_exact(&g, &x, &scales, &PolynomialBasis::default_for(Family::Chebyshev));
        prop_assert!(rel_frob(&approx, &exact) < 1e-4);
    }

    /// Hermite (s ≤ 3) and Laguerre (s ≤ 1) meet the same 1e-4 agreement on the
    /// part of the scale range where their truncation tails are small.
    #[test]
    fn hermite_and_laguerre_agree_at_moderate_scales((n, seed, extra) in graph_params(50)) {
        let g = connected_graph(n, seed, extra);
        let x = random_matrix(n, 3, seed ^ 13);
        for (family, hi) in [(Family::Hermite, 3.0), (Family::Laguerre, 1.0)] {
            let scales = random_scales(n, 0.1, hi, seed ^ 12);
            let (approx, exact) = approx_vs_exact(&g, &x, &scales, &PolynomialBasis::default_for(family));
            prop_assert!(rel_frob(&approx, &exact) < 1e-4, "{} {:e}", family, rel_frob(&approx, &exact));
        }
    }

    /// For every family and scale, the operator gap is bounded by the truncation
    /// error at the graph's eigenvalues: row p of the gap has norm at most
    /// `max_i |err_{s_p}(λ_i)| · ‖x‖_F`.
    #[test]
    fn operator_gap_bounded_by_truncation_error((n, seed, extra) in graph_params(50), fam in 0..3usize) {
        let family = [Family::Chebyshev, Family::Hermite, Family::Laguerre][fam];
        let basis = PolynomialBasis::default_for(family);
        let g = connected_graph(n, seed, extra);
        let scales = random_scales(n, 0.1, 5.0, seed ^ 12);
        let x = random_matrix(n, 3, seed ^ 13);
        let (approx, exact) = approx_vs_exact(&g, &x, &scales, &basis);
        let eig = decompose(&g).eigenvalues.to_vec();
        let xf = frob(&x);
        for p in 0..n {
            let gap = (&approx.row(p) - &exact.row(p)).iter().map(|v| v * v).sum::<f64>().sqrt();
            let bound = spectral_error(scales.as_slice()[p], &basis, &eig) * xf;
            prop_assert!(gap <= bound * (1.0 + 1e-6) + 1e-11, "{family} p={p}: {gap:e} > {bound:e}");
        }
    }
}
