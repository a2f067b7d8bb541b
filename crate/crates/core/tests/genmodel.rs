use intele_core::genmodel::{
    check_condition_b, ArtifactSpec, Dataset, ExpFamilySpec, GenModelParams, GeneratorConfig, MixingFunction, Regime,
};
use intele_core::rng::{substream, tags};
use rand::Rng as _;
use rand_distr::StandardNormal;

fn world(classes: usize, kappa: f64, noise: f64, seed: u64) -> GenModelParams {
    let cfg = GeneratorConfig { classes, kappa, noise, seed, ..Default::default() };
    GenModelParams::from_config(&cfg).unwrap()
}

#[test]
fn latent_sampling_moments() {
    let g = world(3, 3.0, 0.0, 11);
    let n = 100_000;
    let mut rng = substream(1, 99, 0);
    for y in 0..3 {
        let draws: Vec<Vec<f64>> = (0..n).map(|_| g.sample_z_given_y(y, &mut rng)).collect();
        for i in 0..g.d_z() {
            let mu = g.latent.mean(y)[i];
            let var = g.latent.variance(y)[i];
            let mean = draws.iter().map(|z| z[i]).sum::<f64>() / n as f64;
            let emp_var = draws.iter().map(|z| (z[i] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((mean - mu).abs() < 4.0 * var.sqrt() / (n as f64).sqrt(), "class {y} dim {i} mean {mean} vs {mu}");
            assert!((emp_var / var - 1.0).abs() < 0.05, "class {y} dim {i} variance {emp_var} vs {var}");
        }
    }
}

#[test]
fn class_frequencies_follow_priors() {
    let base = world(3, 1.0, 0.0, 5);
    let priors = vec![0.5, 0.3, 0.2];
    let g = GenModelParams::new(priors.clone(), base.latent, base.mixing, base.artifact, 0.0, 5).unwrap();
    let n = 20_000;
    let ds = g.sample_dataset(n, Regime::PL, tags::TRAIN);
    for (y, &p) in priors.iter().enumerate() {
        let freq = ds.samples().iter().filter(|s| s.y == y).count() as f64 / n as f64;
        assert!((freq - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "class {y}: {freq} vs {p}");
    }
}

#[test]
fn mixing_is_injective_on_random_pairs() {
    let g = world(2, 3.0, 0.0, 2);
    let mut rng = substream(2, 98, 0);
    for _ in 0..10_000 {
        let z: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
        let w: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
        if z != w {
            assert_ne!(g.mix(&z), g.mix(&w));
        }
    }
    assert_eq!(g.mix(&[0.3, -0.1]).len(), 16);
}

#[test]
fn artifact_only_enters_pl_fakes() {
    let g = world(3, 2.5, 0.3, 4);
    let z = [0.4, -1.2];
    let mut rng = substream(4, 97, 0);
    let eps: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
    let pristine_pl = g.observe(&z, 0, &eps, Regime::PL);
    assert_eq!(pristine_pl, g.observe(&z, 0, &eps, Regime::PH));
    for y in 1..3 {
        assert_eq!(g.observe(&z, y, &eps, Regime::PH), pristine_pl);
    }

    let clean = world(2, 2.5, 0.0, 4);
    let x = clean.observe(&z, 1, &vec![0.0; 16], Regime::PL);
    let dist = x.iter().zip(clean.mix(&z)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!((dist - 2.5).abs() < 1e-12);
}

#[test]
fn ph_has_no_class_dependent_offset() {
    let g = world(2, 5.0, 0.1, 6);
    let residual_norms = |regime| {
        let ds = g.sample_dataset(4000, regime, tags::TEST);
        let mut sums = [0.0f64; 2];
        let mut counts = [0usize; 2];
        for s in ds.samples() {
            let r = s.x.iter().zip(g.mix(&s.z_true)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            sums[s.y] += r;
            counts[s.y] += 1;
        }
        [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64]
    };
    let ph = residual_norms(Regime::PH);
    // chi distribution with 16 degrees of freedom scaled by 0.1: sd ≈ 0.07 per sample
    assert!((ph[0] - ph[1]).abs() < 0.01, "{ph:?}");
    let pl = residual_norms(Regime::PL);
    assert!(pl[1] - pl[0] > 4.0, "{pl:?}");
}

#[test]
fn natural_parameterisation_is_consistent() {
    let g = world(5, 1.0, 0.0, 8);
    let mut rng = substream(8, 96, 0);
    for _ in 0..1000 {
        let z: Vec<f64> = (0..2).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        for y in 0..5 {
            let a = g.latent.log_density(&z, y);
            let b = g.latent.log_density_natural(&z, y);
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300), "{a} vs {b}");
        }
    }
}

#[test]
fn posterior_is_normalised_and_symmetric() {
    let latent = ExpFamilySpec::new(vec![vec![-0.6, -0.6], vec![0.6, 0.6]], vec![vec![1.0; 2]; 2]).unwrap();
    let post = intele_core::genmodel::bayes_posterior(&[0.5, 0.5], &latent, &[0.0, 0.0]);
    assert!((post[0] - 0.5).abs() < 1e-15 && (post[1] - 0.5).abs() < 1e-15);
    let g = world(5, 1.0, 0.0, 9);
    let mut rng = substream(9, 95, 0);
    for _ in 0..100 {
        let z: Vec<f64> = (0..2).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        assert!((g.bayes_posterior(&z).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

/// Bayes accuracy `∫ max_y π_y p(z|y) dz` by midpoint quadrature on a grid.
fn quadrature_bayes_accuracy(g: &GenModelParams) -> f64 {
    let (lo, hi, steps) = (-10.0, 10.0, 1000);
    let dz = (hi - lo) / steps as f64;
    let mut total = 0.0;
    for i in 0..steps {
        for j in 0..steps {
            let z = [lo + (i as f64 + 0.5) * dz, lo + (j as f64 + 0.5) * dz];
            let best = (0..g.classes())
                .map(|y| g.priors[y] * g.latent.log_density(&z, y).exp())
                .fold(0.0f64, f64::max);
            total += best * dz * dz;
        }
    }
    total
}

#[test]
fn posterior_argmax_attains_quadrature_bayes_rate() {
    for (classes, seed) in [(2, 1), (5, 3)] {
        let g = world(classes, 0.0, 0.0, seed);
        let oracle = quadrature_bayes_accuracy(&g);
        let ds = g.sample_dataset(100_000, Regime::PL, tags::TEST);
        let correct = ds
            .samples()
            .iter()
            .filter(|s| {
                let p = g.bayes_posterior(&s.z_true);
                let argmax = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
                argmax == s.y
            })
            .count();
        let mc = correct as f64 / 100_000.0;
        assert!((mc - oracle).abs() < 0.01, "m={classes}: Monte Carlo {mc} vs quadrature {oracle}");
    }
}

/// Determinant by Gaussian elimination with partial pivoting.
fn lu_determinant(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    det
}

fn difference_matrix(gammas: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = gammas[0].len();
    (0..dim).map(|r| (1..=dim).map(|k| gammas[k][r] - gammas[0][r]).collect()).collect()
}

#[test]
fn condition_b_agrees_with_lu_determinant() {
    for seed in 0..50 {
        let mut rng = substream(seed, 94, 0);
        let gammas: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let lin: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
                let quad: Vec<f64> = (0..2).map(|_| -0.5 - rng.random::<f64>()).collect();
                lin.into_iter().chain(quad).collect()
            })
            .collect();
        let m = difference_matrix(&gammas);
        // Hadamard bound: |det| ≤ ∏ column norms; a tiny ratio means near singular
        let hadamard: f64 = (0..4).map(|c| m.iter().map(|row| row[c] * row[c]).sum::<f64>().sqrt()).product();
        let ratio = lu_determinant(m).abs() / hadamard;
        let spec = ExpFamilySpec::from_natural(2, &gammas).unwrap();
        let report = check_condition_b(&spec);
        assert_eq!(report.m_required, 5);
        if ratio > 1e-6 {
            assert!(report.satisfied, "seed {seed}: det ratio {ratio}, cond {}", report.condition_number);
        }
    }

    // fourth difference column equals the sum of the first two
    let base = vec![0.1, -0.2, -0.5, -0.7];
    let mut gammas = vec![base.clone()];
    for d in [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, -0.3, 0.0], [1.0, 1.0, 0.0, 0.0]] {
        gammas.push(base.iter().zip(d).map(|(b, x)| b + x).collect());
    }
    assert_eq!(lu_determinant(difference_matrix(&gammas)), 0.0);
    assert!(!check_condition_b(&ExpFamilySpec::from_natural(2, &gammas).unwrap()).satisfied);
}

#[test]
fn sampling_is_deterministic_and_csv_round_trips() {
    let a = world(2, 3.0, 0.2, 21).sample_dataset(300, Regime::PL, tags::TRAIN).to_csv();
    let b = world(2, 3.0, 0.2, 21).sample_dataset(300, Regime::PL, tags::TRAIN).to_csv();
    assert_eq!(a, b);
    let back = Dataset::from_csv(&a).unwrap();
    assert_eq!(back.to_csv(), a);
    let orig = world(2, 3.0, 0.2, 21).sample_dataset(300, Regime::PL, tags::TRAIN);
    for (p, q) in orig.samples().iter().zip(back.samples()) {
        assert_eq!(p, q);
    }
}

#[test]
fn paired_test_sets_share_latents() {
    let g = world(2, 3.0, 0.0, 22);
    let pl = g.sample_dataset(200, Regime::PL, tags::TEST);
    let ph = g.sample_dataset(200, Regime::PH, tags::TEST);
    for (a, b) in pl.samples().iter().zip(ph.samples()) {
        assert_eq!((a.y, &a.z_true), (b.y, &b.z_true));
        if a.y == 0 {
            assert_eq!(a.x, b.x);
        }
    }
}

#[test]
fn artifact_and_mixing_validation() {
    let mut rng = substream(1, 93, 0);
    let art = ArtifactSpec::random(3, 16, 2.0, &mut rng).unwrap();
    assert!(art.pattern(0).iter().all(|&v| v == 0.0));
    for y in 1..3 {
        let norm = art.pattern(y).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
    assert!(ArtifactSpec::new(vec![vec![0.0; 4], vec![1.0, 1.0, 0.0, 0.0]], 1.0).is_err());
    assert!(ArtifactSpec::new(vec![vec![0.0; 4], vec![1.0, 0.0, 0.0, 0.0]], -1.0).is_err());
    assert!(MixingFunction::random(4, 3, 0.0, &mut rng).is_err());
}
