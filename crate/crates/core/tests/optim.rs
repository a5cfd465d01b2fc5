use nalgebra::DMatrix;
use rowgossip_core::optim::{
    gt_step, init_gt, init_mg, mg_step, recommended_r, recommended_r_appendix, run, Algorithm, Network, RunSpec,
};
use rowgossip_core::problems::{make_quadratic, make_synthetic_logistic, noisy, LogisticConfig};
use rowgossip_core::rng::sample_stream;
use rowgossip_core::spectral::{compute_metrics, matrix_power};
use rowgossip_core::topology::{build_directed_ring, build_exponential, build_geometric, weights_from_indegree};
use rowgossip_core::{GradientOracle, MixingMatrix, Tolerances};

fn net(a: MixingMatrix) -> Network {
    Network::new(a).unwrap()
}

fn exp(n: usize) -> MixingMatrix {
    weights_from_indegree(&build_exponential(n).unwrap()).unwrap()
}

fn ring(n: usize) -> MixingMatrix {
    weights_from_indegree(&build_directed_ring(n).unwrap()).unwrap()
}

/// Pull-Diag-GT written with dense powers `A^k` and `D_k = Diag(A^k)`.
fn dense_reference<O: GradientOracle>(
    a: &DMatrix<f64>,
    oracle: &O,
    alpha: f64,
    rounds: usize,
    seed: u64,
    iters: usize,
) -> Vec<DMatrix<f64>> {
    let n = a.nrows();
    let d = oracle.dim();
    let ar = matrix_power(a, rounds);
    let sample = |x: &DMatrix<f64>, t: usize| {
        DMatrix::from_fn(n, d, |i, c| {
            let point: Vec<f64> = x.row(i).iter().copied().collect();
            let mut acc = 0.0;
            for s in 0..rounds {
                let mut g = vec![0.0; d];
                oracle.stochastic_gradient(i, &point, &mut sample_stream(seed, i, t, s), &mut g);
                acc += g[c];
            }
            acc / rounds as f64
        })
    };
    let mut x = DMatrix::zeros(n, d);
    let mut g = sample(&x, 0);
    let mut y = g.clone();
    let mut d_prev = DMatrix::identity(n, n);
    let mut xs = Vec::new();
    for t in 1..=iters {
        x = &ar * (&x - &y * alpha);
        let p = matrix_power(a, t * rounds);
        let d_new = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / p[(i, i)] } else { 0.0 });
        let g_new = sample(&x, t);
        let d_old_inv = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / d_prev[(i, i)] } else { 0.0 });
        y = &ar * (&y + &d_new * &g_new - d_old_inv * &g);
        g = g_new;
        d_prev = DMatrix::from_fn(n, n, |i, j| if i == j { p[(i, i)] } else { 0.0 });
        xs.push(x.clone());
    }
    xs
}

#[test]
fn matches_dense_reference() {
    let g = build_geometric(9, 0.5, 4).unwrap();
    let a = weights_from_indegree(&g).unwrap();
    let network = net(a.clone());
    let oracle = noisy(make_quadratic(9, 3, 1.0, 2).unwrap(), 0.7);
    for rounds in [1, 4] {
        let want = dense_reference(a.entries(), &oracle, 0.02, rounds, 5, 30);
        let mut s = init_mg(&network, &[0.0; 3], &oracle, 0.02, rounds, 5).unwrap();
        for w in &want {
            mg_step(&mut s, &network, &oracle, rounds).unwrap();
            assert!((&s.x - w).norm() <= 1e-11 * w.norm().max(1.0));
        }
    }
}

#[test]
fn invariants_hold_on_ring_with_noise() {
    let network = net(ring(16));
    let oracle = noisy(LogisticConfig::default().build(16, 3).unwrap(), 1.0);
    for (algorithm, alpha) in [(Algorithm::PullDiagGt, 0.002 / 16.0), (Algorithm::MgPullDiagGt { rounds: 5 }, 0.01)] {
        let rounds = algorithm.rounds();
        let mut spec = RunSpec::new(algorithm, alpha, 500 * rounds, 21);
        spec.probes = true;
        let rec = run(&spec, &network, &oracle).unwrap();
        assert_eq!(rec.len(), 500);
        let tol = Tolerances::default();
        for r in &rec {
            assert!(r.centroid_residual.unwrap() <= tol.centroid_probe);
            assert!(r.tracker_residual.unwrap() <= tol.tracker_probe);
        }
    }
}

#[test]
fn quadratic_converges_without_noise() {
    let network = net(exp(8));
    let q = make_quadratic(8, 5, 1.0, 13).unwrap();
    let spec = RunSpec::new(Algorithm::PullDiagGt, 0.01 / 8.0, 5000, 0);
    let rec = run(&spec, &network, &q).unwrap();
    assert!(rec.last().unwrap().grad_norm < 1e-8);
    // Monotone once the tracker has settled.
    for w in rec[500..].windows(2) {
        assert!(w[1].grad_norm <= w[0].grad_norm * (1.0 + 1e-12));
    }
    let f_star = q.minimum().unwrap();
    assert!((rec.last().unwrap().centroid_f.unwrap() - f_star).abs() < 1e-12);
}

#[test]
fn exact_averaging_has_no_descent_deviation() {
    let network = net(MixingMatrix::new(DMatrix::from_element(5, 5, 0.2)).unwrap());
    let q = make_quadratic(5, 3, 1.0, 1).unwrap();
    let mut s = init_gt(&network, &[0.0; 3], &q, 0.1, 0).unwrap();
    let rep = gt_step(&mut s, &network, &q).unwrap();
    assert!(rep.descent_deviation <= 1e-10);
}

#[test]
fn runs_are_deterministic() {
    let network = net(exp(8));
    let oracle = noisy(make_synthetic_logistic(8, 800, 4, 0.01, 10, 10.0, 2).unwrap(), 1.0);
    let spec = RunSpec::new(Algorithm::MgPullDiagGt { rounds: 3 }, 0.05, 300, 17);
    let a = run(&spec, &network, &oracle).unwrap();
    let b = run(&spec, &network, &oracle).unwrap();
    assert_eq!(a, b);
    let c = run(&RunSpec { seed: 18, ..spec }, &network, &oracle).unwrap();
    assert_ne!(a, c);
}

#[test]
fn minibatch_initialization_variance() {
    let network = net(exp(4));
    let sigma = 1.0;
    let oracle = noisy(make_quadratic(4, 6, 1.0, 0).unwrap(), sigma);
    let exact: Vec<f64> = {
        let mut g = vec![0.0; 6];
        oracle.local_gradient(2, &[0.0; 6], &mut g);
        g
    };
    let draws = 1000;
    let mut trace = 0.0;
    for seed in 0..draws {
        let s = init_mg(&network, &[0.0; 6], &oracle, 0.1, 4, seed).unwrap();
        trace += (0..6).map(|c| (s.g[(2, c)] - exact[c]).powi(2)).sum::<f64>();
    }
    trace /= draws as f64;
    assert!((trace - sigma * sigma / 4.0).abs() <= 0.1 * sigma * sigma / 4.0, "{trace}");

    let clean = make_quadratic(4, 6, 1.0, 0).unwrap();
    let one = init_mg(&network, &[0.0; 6], &clean, 0.1, 1, 3).unwrap();
    let many = init_mg(&network, &[0.0; 6], &clean, 0.1, 7, 3).unwrap();
    assert!((&one.g - &many.g).amax() <= 1e-14 * one.g.amax());
}

#[test]
fn recommended_rounds_keep_diagonals_above_floor() {
    let a = exp(8);
    let m = compute_metrics(&a, None, &Tolerances::default()).unwrap();
    let r = recommended_r(&m);
    assert_eq!(r, 19);
    assert!(recommended_r_appendix(&m) >= 1);
    let network = net(a);
    let oracle = noisy(make_quadratic(8, 2, 1.0, 0).unwrap(), 1.0);
    let mut s = init_mg(&network, &[0.0; 2], &oracle, 0.1, r, 0).unwrap();
    let floor = 1.0 / (2.0 * 8.0 * m.kappa);
    for _ in 0..20 {
        mg_step(&mut s, &network, &oracle, r).unwrap();
        assert!(s.d_prev.iter().all(|&d| d >= floor));
    }
}

#[test]
fn ring_recommended_rounds() {
    let m = compute_metrics(&ring(16), None, &Tolerances::default()).unwrap();
    let raw = 3.0 * (1.0 + 16f64.ln()) / (1.0 - (std::f64::consts::PI / 16.0).cos());
    assert_eq!(recommended_r(&m), raw.ceil() as usize);
}
