use intele_core::diffcore::Tensor;
use intele_core::genmodel::{GenModelParams, GeneratorConfig};
use intele_core::identcheck::{fit_affine, identifiability_experiment, suffstats, SourceKind};
use intele_core::intele::{HyperParams, ModelConfig};
use intele_core::rng::{substream, Rng};
use rand::Rng as _;
use rand_distr::StandardNormal;

fn randn(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// Rows `x ↦ M x + c` for `M` stored `[out × in]`.
fn affine(x: &Tensor, m: &Tensor, c: &[f64]) -> Tensor {
    x.matmul_t(m).unwrap().add_row(&Tensor::new(vec![c.len()], c.to_vec()).unwrap()).unwrap()
}

#[test]
fn recovers_planted_affine_map() {
    let mut rng = substream(1, 55, 0);
    let source = randn(&mut rng, 2000, 4);
    let m = randn(&mut rng, 4, 4);
    let target = affine(&source, &m, &[1.0, -2.0, 0.5, 3.0]);
    let fit = fit_affine(&source, &target).unwrap();
    assert!(fit.mean_r2 >= 0.999, "{}", fit.mean_r2);
    assert!(!fit.min_norm_fallback);
    for (got, want) in fit.a.iter().flatten().zip(m.data()) {
        assert!((got - want).abs() < 1e-9);
    }
}

#[test]
fn independent_noise_explains_nothing() {
    let mut rng = substream(2, 55, 0);
    let source = randn(&mut rng, 10_000, 4);
    let target = randn(&mut rng, 10_000, 4);
    let fit = fit_affine(&source, &target).unwrap();
    assert!(fit.mean_r2 < 0.01, "{}", fit.mean_r2);
}

#[test]
fn r2_invariant_to_affine_reparameterisation_of_source() {
    for seed in 0..20 {
        let mut rng = substream(seed, 56, 0);
        let source = randn(&mut rng, 500, 5);
        let target = randn(&mut rng, 500, 3);
        let mixed_target = affine(&source.map(|v| v.tanh()), &randn(&mut rng, 3, 5), &[0.0; 3]);
        let target = target.zip_map(&mixed_target, "add", |a, b| 0.3 * a + b).unwrap();
        let m = randn(&mut rng, 5, 5);
        let c: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
        let moved = affine(&source, &m, &c);
        let a = fit_affine(&source, &target).unwrap();
        let b = fit_affine(&moved, &target).unwrap();
        for (x, y) in a.r2.iter().zip(&b.r2) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-12), "seed {seed}: {x} vs {y}");
        }
    }
}

#[test]
fn suffstats_commute_with_latent_permutation() {
    let mut rng = substream(3, 55, 0);
    let z = randn(&mut rng, 50, 3);
    let perm = [2usize, 0, 1];
    let permuted = Tensor::from_rows(&(0..50).map(|i| perm.map(|p| z.row(i)[p])).collect::<Vec<_>>()).unwrap();
    let s = suffstats(&z).0;
    let sp = suffstats(&permuted).0;
    for i in 0..50 {
        for (j, &p) in perm.iter().enumerate() {
            assert_eq!(sp.row(i)[j], s.row(i)[p]);
            assert_eq!(sp.row(i)[3 + j], s.row(i)[3 + p]);
        }
    }
}

#[test]
fn oracle_source_is_recovered_exactly() {
    let cfg = GeneratorConfig { classes: 5, kappa: 1.0, mean_scale: 2.0, var_min: 0.3, var_max: 2.0, seed: 4, ..Default::default() };
    let g = GenModelParams::from_config(&cfg).unwrap();
    let r = identifiability_experiment(&g, &ModelConfig::default(), &HyperParams::default(), 10, 1000, SourceKind::Oracle)
        .unwrap();
    assert!(r.condition_b.satisfied);
    assert!(r.heldout.mean_r2 >= 0.999, "{}", r.heldout.mean_r2);
    assert_eq!((r.n_fit, r.n_heldout), (800, 200));
    let text = serde_json::to_string(&r).unwrap();
    let back: intele_core::identcheck::IdentReport = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}
