use ndarray::Array2;
use pinn_core::autodiff::{symmetric_eigenvalues, BlockKind};
use pinn_core::diagnostics::{histogram_range, layer_grad_histogram};
use pinn_core::models::{glorot_init, Architecture, Checkpoint, NetworkConfig};
use pinn_core::problems::{Benchmark, SamplerKind, PROBLEM_NAMES};
use pinn_core::rng::Stream;
use pinn_core::trainer::{
    adam_step, lr_schedule, relative_l2_error, AdamState, AnnealingState, GradientMode, LossFunction,
};
use proptest::prelude::*;

fn small_net() -> impl Strategy<Value = NetworkConfig> {
    (prop_oneof![Just(Architecture::Plain), Just(Architecture::Improved)], 1usize..=2, 1usize..=3, 1usize..=8).prop_map(
        |(architecture, input_dim, hidden_layers, width)| NetworkConfig {
            architecture,
            input_dim,
            output_dim: 1,
            hidden_layers,
            width,
            jet_order: 2,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histograms_conserve_mass(net in small_net(), seed in any::<u64>(), half_bins in 0usize..60, scale in 1e-6f64..1e3) {
        let mut rng = Stream::from_seed(seed);
        let g: Vec<f64> = (0..net.param_count()).map(|_| scale * rng.normal()).collect();
        let part = net.partition();
        let bins = 2 * half_bins + 1;
        let hs = layer_grad_histogram(0, "r", &g, &part, bins, histogram_range(&g)).unwrap();
        let weights: Vec<usize> = part.iter().filter(|b| b.kind == BlockKind::Weight).map(|b| b.len()).collect();
        prop_assert_eq!(hs.len(), weights.len());
        for (h, w) in hs.iter().zip(weights) {
            prop_assert_eq!(h.counts.iter().sum::<usize>(), w);
            prop_assert_eq!(h.edges.len(), bins + 1);
        }
    }

    #[test]
    fn spectrum_is_permutation_invariant(n in 1usize..9, seed in any::<u64>()) {
        let mut rng = Stream::from_seed(seed);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rng.normal();
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, (rng.next_u64() % (i as u64 + 1)) as usize);
        }
        let mut b = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                b[i * n + j] = a[perm[i] * n + perm[j]];
            }
        }
        let ea = symmetric_eigenvalues(a, n).unwrap();
        let eb = symmetric_eigenvalues(b, n).unwrap();
        let scale = ea.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in ea.iter().zip(&eb) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn annealing_estimate_ignores_common_scale(seed in any::<u64>(), n in 1usize..40, terms in 1usize..4, scale in 1e-4f64..1e4) {
        let mut rng = Stream::from_seed(seed);
        let r: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let d: Vec<Vec<f64>> = (0..terms).map(|_| (0..n).map(|_| rng.normal()).collect()).collect();
        let mut base = AnnealingState::new(terms, 1.0, 10);
        base.update(&r, &d).unwrap();
        let rs: Vec<f64> = r.iter().map(|v| v * scale).collect();
        let ds: Vec<Vec<f64>> = d.iter().map(|g| g.iter().map(|v| v * scale).collect()).collect();
        let mut scaled = AnnealingState::new(terms, 1.0, 10);
        scaled.update(&rs, &ds).unwrap();
        for (a, b) in base.lambdas.iter().zip(&scaled.lambdas) {
            prop_assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relative_error_is_scale_invariant(seed in any::<u64>(), n in 1usize..30, k in 1e-3f64..1e3) {
        let mut rng = Stream::from_seed(seed);
        let e = Array2::from_shape_fn((n, 2), |_| rng.normal() + 3.0);
        let p = Array2::from_shape_fn((n, 2), |_| rng.normal());
        let base = relative_l2_error(p.view(), e.view()).unwrap();
        let scaled = relative_l2_error((&p * k).view(), (&e * k).view()).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1e-300));
        prop_assert_eq!(relative_l2_error(e.view(), e.view()).unwrap(), 0.0);
    }

    #[test]
    fn learning_rate_staircase_never_increases(step in 0usize..200_000) {
        let a = lr_schedule(step, 1e-3, 0.9, 1000);
        let b = lr_schedule(step + 1, 1e-3, 0.9, 1000);
        prop_assert!(b <= a);
        prop_assert_eq!(a, lr_schedule(step - step % 1000, 1e-3, 0.9, 1000));
    }

    #[test]
    fn first_adam_step_is_bounded_by_the_learning_rate(g in prop::collection::vec(-1e6f64..1e6, 1..20), lr in 1e-6f64..1e-1) {
        let mut theta = vec![0.0; g.len()];
        let mut state = AdamState::new(g.len());
        adam_step(&mut theta, &g, &mut state, lr).unwrap();
        for t in &theta {
            prop_assert!(t.abs() <= lr * (1.0 + 1e-9));
        }
    }

    #[test]
    fn checkpoints_round_trip_bitwise(net in small_net(), seed in any::<u64>(), step in any::<u32>()) {
        let mut rng = Stream::from_seed(seed);
        let params: Vec<f64> = (0..net.param_count()).map(|_| rng.normal() * 10f64.powi((rng.next_u64() % 40) as i32 - 20)).collect();
        let ck = Checkpoint { config: net, seed, step: step as usize, problem: "helmholtz:a1=1,a2=4,k=1".into(), params };
        let back = Checkpoint::parse(&ck.to_text()).unwrap();
        prop_assert!(back.params.iter().zip(&ck.params).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(back, ck);
    }

    #[test]
    fn samplers_stay_in_the_closed_domain(which in 0usize..5, seed in any::<u64>()) {
        let b = Benchmark::by_name(PROBLEM_NAMES[which]).unwrap();
        let domain = b.domain();
        for g in b.groups() {
            let batch = b.sample(g.sampler, 64, &mut Stream::new(seed, g.sampler.stream_name())).unwrap();
            for (x, t) in batch.points.rows().into_iter().zip(batch.targets.rows()) {
                let x = x.to_vec();
                prop_assert!(domain.contains(&x), "{:?} outside", x);
                if g.sampler == SamplerKind::Boundary && b.exact(&[0.0, 0.0]).is_some() {
                    prop_assert_eq!(t[0], b.exact(&x).unwrap());
                }
            }
        }
    }

    #[test]
    fn weighted_gradient_is_linear_in_the_weights(seed in any::<u64>(), l1 in 0.0f64..1e3, l2 in 0.0f64..1e3) {
        let b = Benchmark::by_name("klein_gordon").unwrap();
        let net = NetworkConfig { architecture: Architecture::Improved, input_dim: 2, output_dim: 1, hidden_layers: 2, width: 5, jet_order: 2 };
        let loss = LossFunction::new(b, net).unwrap();
        let theta = glorot_init(seed, &net).unwrap().into_values();
        let batches: Vec<_> = loss.groups().iter()
            .map(|g| b.sample(g.sampler, 8, &mut Stream::new(seed, g.sampler.stream_name())).unwrap())
            .collect();
        let eval = loss.evaluate(&theta, &batches, GradientMode::PerTerm).unwrap();
        let terms = eval.term_grads.clone().unwrap();
        let lambdas = [l1, l2];
        let w = eval.weighted_gradient(&lambdas);
        let data = loss.data_terms();
        for j in 0..theta.len() {
            let mut expected = terms[0][j];
            for (k, &t) in data.iter().enumerate() {
                expected += lambdas[k] * terms[t][j];
            }
            let ulps = (w[j].to_bits() as i64 - expected.to_bits() as i64).unsigned_abs();
            prop_assert!(w[j] == expected || ulps <= 8, "entry {}: {} vs {}", j, w[j], expected);
        }
    }

    #[test]
    fn problem_specs_round_trip(a1 in 0.5f64..4.0, a2 in 0.5f64..8.0, k in 0.1f64..3.0) {
        let b = Benchmark::by_name("helmholtz").unwrap()
            .with_param("a1", a1).unwrap()
            .with_param("a2", a2).unwrap()
            .with_param("k", k).unwrap();
        prop_assert_eq!(Benchmark::parse_spec(&b.spec()).unwrap(), b);
    }
}

#[test]
fn boundary_segments_are_equally_likely() {
    // Four walls of the square: each carries 1/4 of the mass.
    let b = Benchmark::by_name("helmholtz").unwrap();
    let n = 10_000;
    let batch = b.sample(SamplerKind::Boundary, n, &mut Stream::new(0, "boundary")).unwrap();
    let mut counts = [0usize; 4];
    for p in batch.points.rows() {
        let (x, y) = (p[0], p[1]);
        let wall = if y == -1.0 {
            0
        } else if x == 1.0 {
            1
        } else if y == 1.0 {
            2
        } else {
            assert_eq!(x, -1.0);
            3
        };
        counts[wall] += 1;
    }
    let sigma = (n as f64 * 0.25 * 0.75).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 / 4.0).abs() <= 3.0 * sigma, "{counts:?}");
    }
}

#[test]
fn fabricated_solutions_have_vanishing_residuals() {
    use pinn_core::autodiff::{Jet, JetLayout};
    for name in ["poisson", "helmholtz", "klein_gordon"] {
        let b = Benchmark::by_name(name).unwrap();
        let layout = JetLayout::get(b.input_dim(), b.jet_order()).unwrap();
        let col = b.sample(SamplerKind::Collocation, 100, &mut Stream::new(1, "collocation")).unwrap();
        let mut dst = Vec::new();
        for p in col.points.rows() {
            let x: Vec<f64> = p.to_vec();
            let inputs: Vec<Jet<f64>> = (0..x.len()).map(|d| Jet::variable(layout, x[d], d).unwrap()).collect();
            let u = b.exact_jet(&inputs).unwrap();
            b.term_mismatch(0, &x, &[], &[u], &mut dst).unwrap();
            assert!(dst[0].abs() <= 1e-8, "{name} at {x:?}: {:e}", dst[0]);
        }
    }
}

#[test]
fn streamfunction_continuity_is_structurally_zero() {
    use pinn_core::autodiff::{Jet, JetLayout};
    use pinn_core::models::forward;
    use pinn_core::problems::psi_continuity;
    let layout = JetLayout::get(2, 3).unwrap();
    let mut rng = Stream::new(5, "continuity");
    for seed in 0..10 {
        let net = NetworkConfig { architecture: Architecture::Improved, input_dim: 2, output_dim: 2, hidden_layers: 3, width: 7, jet_order: 3 };
        let params: Vec<f64> = glorot_init(seed, &net).unwrap().into_values().iter().map(|v| v * 3.0 + 0.1).collect();
        let x = [rng.uniform(), rng.uniform()];
        let input = [Jet::variable(layout, x[0], 0).unwrap(), Jet::variable(layout, x[1], 1).unwrap()];
        let out = forward(&net, &params, &input).unwrap();
        assert_eq!(psi_continuity(&out[0]).unwrap(), 0.0);
    }
}
