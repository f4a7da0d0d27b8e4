use colindep::correlation::{alpha_corrected, demeaned_cov_transform, row_corr_sample};
use colindep::exec;
use colindep::matrix::{demean, mean_var};
use colindep::nalgebra::DMatrix;
use colindep::normal::{
    bilinear_test, sample_matrix_normal_with, trace_stat_moments, two_sample_w, DeltaModel, SigmaModel,
    SimulationSpec, WishartSampler,
};
use colindep::permutation::BlockBasis;

/// Largest |z| between the Monte Carlo covariance of `vec(X)` and
/// `Sigma_ik Delta_jl`.
fn kronecker_z(spec: &SimulationSpec, reps: usize, seed: u64) -> f64 {
    let (m, n) = (spec.m, spec.n);
    let draws: Vec<Vec<f64>> = exec::map_indices(reps, |r| {
        let x = sample_matrix_normal_with(spec, &mut exec::substream(seed, r as u64)).unwrap();
        x.values().iter().copied().collect()
    });
    let sigma = spec.sigma_matrix();
    let delta = spec.delta_matrix();
    let p = m * n;
    let nf = reps as f64;
    let mut worst: f64 = 0.0;
    for a in 0..p {
        for b in a..p {
            // column-major: index = j * m + i
            let (i, j) = (a % m, a / m);
            let (k, l) = (b % m, b / m);
            let prods = draws.iter().map(|d| d[a] * d[b]);
            let (cov, var) = mean_var(prods);
            let expected = sigma[(i, k)] * delta[(j, l)];
            worst = worst.max((cov - expected).abs() / (var / nf).sqrt());
        }
    }
    worst
}

#[test]
fn matrix_normal_has_kronecker_covariance() {
    let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.3, 0.0, 0.3, 1.5]);
    let spec = SimulationSpec::new(3, 2)
        .with_sigma(SigmaModel::Dense { sigma })
        .with_delta(DeltaModel::Spiked { lambda: 1.5, beta: vec![0.8, 0.6] });
    assert!(kronecker_z(&spec, 20_000, 1) < 4.5);
}

#[test]
fn block_rows_share_gamma_squared() {
    let spec = SimulationSpec::new(4, 2).with_sigma(SigmaModel::Block { num_blocks: 2, gamma: 0.8 });
    let s = spec.sigma_matrix();
    assert!((s[(0, 1)] - 0.64).abs() < 1e-15 && s[(1, 2)] == 0.0 && (s[(3, 3)] - 1.64).abs() < 1e-15);
    assert!(kronecker_z(&spec, 20_000, 2) < 4.5);
}

#[test]
fn spike_of_zero_is_the_identity() {
    let spec = SimulationSpec::new(5, 3).with_delta(DeltaModel::Spiked { lambda: 0.0, beta: vec![1.0, 2.0, 3.0] });
    assert_eq!(spec.delta_matrix(), DMatrix::identity(3, 3));
}

#[test]
fn extended_wishart_keeps_mean_and_variance_below_full_rank() {
    let (df, n, reps) = (3.0, 6, 40_000);
    let sampler = WishartSampler::extended(df, &DMatrix::identity(n, n)).unwrap();
    let draws: Vec<(f64, f64)> = exec::map_indices(reps, |r| {
        let w = sampler.sample(&mut exec::substream(3, r as u64));
        (w[(0, 0)], w[(0, 1)])
    });
    let (d_mean, d_var) = mean_var(draws.iter().map(|d| d.0));
    let (o_mean, o_var) = mean_var(draws.iter().map(|d| d.1));
    assert!((d_mean - 1.0).abs() < 0.03, "{d_mean}");
    assert!(o_mean.abs() < 0.03, "{o_mean}");
    assert!((d_var / (2.0 / df) - 1.0).abs() < 0.08, "{d_var}");
    assert!((o_var / (1.0 / df) - 1.0).abs() < 0.08, "{o_var}");
}

#[test]
fn trace_statistic_moments_match_wishart_draws() {
    let (df, n) = (12.0, 6);
    let basis = BlockBasis::new(n, 2, 3).unwrap();
    let b = basis.matrix().clone();
    let sampler = WishartSampler::new(df, &DMatrix::identity(n, n)).unwrap();
    let draws = exec::map_indices(20_000, |r| {
        let w = sampler.sample(&mut exec::substream(4, r as u64));
        (&w * &b).trace()
    });
    let (mean, var) = mean_var(draws.iter().copied());
    let (mean0, var0) = trace_stat_moments(&b, df).unwrap();
    assert!((mean / mean0 - 1.0).abs() < 0.02, "{mean} vs {mean0}");
    assert!((var / var0 - 1.0).abs() < 0.05, "{var} vs {var0}");
}

#[test]
fn bilinear_statistic_has_chi_square_moments_under_independence() {
    let (m, n) = (200, 10);
    let spec = SimulationSpec::new(m, n);
    let w = two_sample_w(5, 5).unwrap();
    let results = exec::map_indices(500, |r| {
        let x = sample_matrix_normal_with(&spec, &mut exec::substream(5, r as u64)).unwrap();
        bilinear_test(&x, &w, m as f64).unwrap()
    });
    let (mean, var) = mean_var(results.iter().map(|b| b.tau_hat_sq));
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
    assert!((var / (2.0 / m as f64) - 1.0).abs() < 0.15, "{var}");
    let rejections = results.iter().filter(|b| b.p_value < 0.05).count();
    assert!((10..=45).contains(&rejections), "{rejections}");
}

#[test]
fn removing_row_means_transforms_the_column_covariance() {
    let delta = DMatrix::from_row_slice(4, 4, &[
        2.0, 0.5, 0.2, 0.0, 0.5, 1.0, 0.1, 0.3, 0.2, 0.1, 1.5, 0.4, 0.0, 0.3, 0.4, 1.2,
    ]);
    let m = 20_000;
    let spec = SimulationSpec::new(m, 4).with_delta(DeltaModel::Dense { delta: delta.clone() }).with_seed(6);
    let x = colindep::normal::sample_matrix_normal(&spec).unwrap();
    let mut v = x.into_values();
    for mut row in v.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    let empirical = v.transpose() * &v / m as f64;
    let expected = demeaned_cov_transform(&delta).unwrap();
    assert!((empirical - expected).amax() < 0.05);
}

#[test]
fn corrected_alpha_recovers_block_total_correlation() {
    let spec = SimulationSpec::new(300, 40).with_sigma(SigmaModel::Block { num_blocks: 5, gamma: 1.0 });
    // removing column means leaves the row covariance (I - J/m) Sigma (I - J/m)
    let m = spec.m;
    let centering = DMatrix::identity(m, m) - DMatrix::from_element(m, m, 1.0 / m as f64);
    let centered = &centering * spec.sigma_matrix() * &centering;
    let truth = SimulationSpec::new(m, spec.n).with_sigma(SigmaModel::Dense { sigma: centered }).total_correlation_sq();
    let estimates = exec::map_indices(200, |r| {
        let x = demean(&sample_matrix_normal_with(&spec, &mut exec::substream(7, r as u64)).unwrap());
        let rc = row_corr_sample(&x, 10_000, r as u64).unwrap();
        let (_, var) = mean_var(rc);
        alpha_corrected(var, spec.n).unwrap().corrected_sq
    });
    let (mean, _) = mean_var(estimates);
    assert!((mean / truth - 1.0).abs() < 0.10, "{mean} vs {truth}");
}
