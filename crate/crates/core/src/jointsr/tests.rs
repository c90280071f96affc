use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::epitome::EpitomeConfig;
use crate::sparse::{train_coupled_dictionary, training_pairs, L1Problem, Quadratic, TrainingOptions};
use crate::synth;

fn dictionary() -> &'static DictionaryPair {
    static DICT: OnceLock<DictionaryPair> = OnceLock::new();
    DICT.get_or_init(|| {
        let mut pairs = Vec::new();
        for seed in 100..103 {
            pairs.extend(training_pairs(&synth::shapes(48, 48, seed), 3, 5, 2, 0.01).unwrap());
            pairs.extend(training_pairs(&synth::bricks(48, 48, seed), 3, 5, 2, 0.01).unwrap());
        }
        let opts = TrainingOptions {
            atoms: 48,
            epochs: 4,
            ..TrainingOptions::default()
        };
        train_coupled_dictionary(&pairs, &opts).unwrap().0
    })
}

fn quick_config() -> JointConfig {
    JointConfig {
        p: 1.0,
        lambda: 0.01,
        max_iterations: 4,
        internal: InternalConfig {
            epitome: EpitomeConfig {
                iterations: 3,
                ..EpitomeConfig::default()
            },
            ..InternalConfig::default()
        },
        ..JointConfig::default()
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
}

fn random_instance(rng: &mut ChaCha8Rng) -> (PatchData, PatchState) {
    let dict = dictionary();
    let d = dict.low_dim();
    let mut coeffs = vec![0.0; dict.atoms()];
    for _ in 0..3 {
        coeffs[rng.gen_range(0..dict.atoms())] = rng.gen_range(-0.3..0.3);
    }
    let candidates: Vec<(Vec<f64>, f64)> = (0..5).map(|_| (random_vec(rng, d), rng.gen_range(0.0..0.5))).collect();
    let data = PatchData {
        y: random_vec(rng, d),
        mean: rng.gen_range(0.2..0.8),
        candidates: candidates.clone(),
    };
    let code = SparseCode::new(coeffs);
    let state = PatchState {
        ng: external_noise(&code, dict.low(), &data.y),
        code,
        internal: candidates[0].0.clone(),
        choice: 0,
        current: random_vec(rng, d),
        ni: candidates[0].1,
    };
    (data, state)
}

#[test]
fn weight_examples() {
    assert_eq!(adaptive_weight(0.3, 0.3, 1.0), 1.0);
    assert!((adaptive_weight(0.6, 0.5, 1.0) - 0.1f64.exp()).abs() < 1e-12);
    assert_eq!(adaptive_weight(1e6, 0.0, 1.0), 50f64.exp());
    assert_eq!(adaptive_weight(0.0, 1e6, 1.0), (-50f64).exp());
    assert!(adaptive_weight(0.5, 0.1, 2.0) > adaptive_weight(0.4, 0.1, 2.0));
    assert!(adaptive_weight(0.5, 0.2, 2.0) < adaptive_weight(0.5, 0.1, 2.0));
}

#[test]
fn objective_examples() {
    let dict = dictionary();
    let d = dict.low_dim();
    let cfg = quick_config();
    let zero_data = PatchData { y: vec![0.0; d], mean: 0.0, candidates: vec![] };
    let zero_state = PatchState {
        code: SparseCode::zeros(dict.atoms()),
        internal: vec![0.0; d],
        choice: 0,
        current: vec![0.0; d],
        ng: 0.0,
        ni: 0.0,
    };
    assert_eq!(joint_objective(dict, &[zero_data], &[zero_state], &cfg), 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (data, mut state) = random_instance(&mut rng);
    state.internal = state.current.clone();
    let ext = external_loss(dict, cfg.lambda, &data, &state.code, &state.current);
    assert_eq!(patch_objective(dict, cfg.lambda, &data, &state, 7.0), ext);

    // Term by term through nalgebra.
    let (data, state) = random_instance(&mut rng);
    let a = nalgebra::DVector::from_column_slice(state.code.coefficients());
    let y = nalgebra::DVector::from_column_slice(&data.y);
    let x = nalgebra::DVector::from_column_slice(&state.current);
    let xe = nalgebra::DVector::from_column_slice(&state.internal);
    let mu = nalgebra::DVector::from_element(d, data.mean);
    let ng = (dict.low() * &a - &y).norm_squared();
    let omega = (cfg.p * (ng - state.ni)).exp();
    let oracle = cfg.lambda * a.iter().map(|v| v.abs()).sum::<f64>()
        + ng
        + (dict.high() * &a + mu - &x).norm_squared()
        + omega * (&x - &xe).norm_squared();
    let got = joint_objective(dict, &[data], &[state], &cfg);
    assert!((got - oracle).abs() < 1e-10 * oracle.abs().max(1.0), "{got} vs {oracle}");
}

#[test]
fn linearized_problem_examples() {
    let dict = dictionary();
    let cfg = quick_config();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (_, mut state) = random_instance(&mut rng);
    state.internal = state.current.clone();
    assert_eq!(linearization_coefficient(&state, &cfg), 0.0);

    for _ in 0..10 {
        let (data2, state) = random_instance(&mut rng);
        let c = linearization_coefficient(&state, &cfg);
        assert!(c > 0.0 && 1.0 + c > 1.0);
        let a = solve_linearized(dict, &data2, &state, c, &cfg).unwrap();
        let target: Vec<f64> = state.current.iter().map(|v| v - data2.mean).collect();
        let p = L1Problem::from_quadratics(&[
            Quadratic { matrix: dict.low(), target: &data2.y, weight: 1.0 + c },
            Quadratic { matrix: dict.high(), target: &target, weight: 1.0 },
        ])
        .unwrap();
        assert!(p.kkt_residual(a.coefficients(), cfg.lambda) < 1e-6);
    }
    let fixed = JointConfig { weighting: Weighting::Fixed(3.0), ..cfg };
    let (_, state) = random_instance(&mut rng);
    assert_eq!(linearization_coefficient(&state, &fixed), 0.0);
}

#[test]
fn code_update_never_raises_patch_objective() {
    let dict = dictionary();
    let cfg = JointConfig { p: 4.0, ..quick_config() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (data, state) = random_instance(&mut rng);
        let before = patch_objective(dict, cfg.lambda, &data, &state, cfg.weight(state.ng, state.ni));
        let code = solve_a_subproblem(dict, &data, &state, &cfg).unwrap();
        let ng = external_noise(&code, dict.low(), &data.y);
        let after = PatchState { code, ng, ..state };
        let after = patch_objective(dict, cfg.lambda, &data, &after, cfg.weight(ng, after.ni));
        assert!(after <= before + 1e-12, "{after} > {before}");
    }
}

#[test]
fn internal_candidate_search() {
    let cfg = quick_config();
    let x = vec![0.1, 0.2, 0.3, 0.4];
    let cands = vec![(vec![0.0; 4], 0.0), (x.clone(), 0.3), (vec![1.0; 4], 0.0)];
    assert_eq!(solve_xe_subproblem(&x, 0.2, &cands, &cfg), 1);
    assert_eq!(solve_xe_subproblem(&x, 0.2, &cands[2..], &cfg), 0);

    // Hand-computed losses exp(-N_i) |X - X^E|^2 for five scalar candidates.
    let x = vec![0.0];
    let cands: Vec<(Vec<f64>, f64)> = [(1.0, 0.0), (0.9, 0.1), (1.1, 1.0), (0.5, 3.0), (0.2, 0.0)]
        .iter()
        .map(|&(v, e)| (vec![v], e))
        .collect();
    // Losses: 1.0, 0.81 e^-0.1 = 0.733, 1.21 e^-1 = 0.445, 0.25 e^-3 = 0.0124, 0.04.
    assert_eq!(solve_xe_subproblem(&x, 0.0, &cands, &cfg), 3);
    let fixed = JointConfig { weighting: Weighting::Fixed(1.0), ..cfg };
    assert_eq!(solve_xe_subproblem(&x, 0.0, &cands, &fixed), 4);
}

#[test]
fn closed_form_hr_update() {
    let e = [0.2, 0.4, 0.9];
    let i = [0.6, 0.0, 0.1];
    let mid = solve_x_subproblem(&e, &i, 1.0);
    for k in 0..3 {
        assert!((mid[k] - (e[k] + i[k]) / 2.0).abs() < 1e-15);
    }
    let ext = solve_x_subproblem(&e, &i, (-50f64).exp());
    assert!(ext.iter().zip(e).all(|(a, b)| (a - b).abs() < 1e-20));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let (ev, iv, w) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.01..20.0));
        let x = solve_x_subproblem(&[ev], &[iv], w)[0];
        // Minimizer of (x - e)^2 + w (x - i)^2: zero derivative.
        let deriv = 2.0 * (x - ev) + 2.0 * w * (x - iv);
        assert!(deriv.abs() < 1e-10);
        let f = |x: f64| (x - ev).powi(2) + w * (x - iv).powi(2);
        assert!(f(x) <= f(x + 1e-6) && f(x) <= f(x - 1e-6));
    }
}

#[test]
fn constant_input() {
    let dict = dictionary();
    let lr = LumaImage::filled(12, 13, 0.55);
    let res = joint_upscale(&lr, dict, &quick_config()).unwrap();
    assert_eq!(res.image.dims(), (36, 39));
    assert!(res.image.data().iter().all(|v| (v - 0.55).abs() < 1e-9));
    assert!(res.weights.omega().iter().all(|w| (w - 1.0).abs() < 1e-9));
    let fixed = fixed_weight_upscale(&lr, dict, 1.0, &quick_config()).unwrap();
    assert!(fixed.image.data().iter().all(|v| (v - 0.55).abs() < 1e-9));
}

#[test]
fn objective_trace_is_monotone_and_deterministic() {
    let dict = dictionary();
    let hr = synth::half_texture(48, 48, 7);
    let lr = crate::imagecore::downsample(&hr, 3).unwrap();
    let cfg = JointConfig { tolerance: 0.0, ..quick_config() };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| joint_upscale(&lr, dict, &cfg).unwrap())
    };
    let a = run(1);
    assert_eq!(a.trace.len(), cfg.max_iterations + 1);
    for w in a.trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{:?}", a.trace);
    }
    let b = run(3);
    assert_eq!(a.image, b.image);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn rejects_mismatched_configuration() {
    let dict = dictionary();
    let lr = LumaImage::filled(12, 12, 0.5);
    let bad = JointConfig { patch_size: 7, ..quick_config() };
    assert!(joint_upscale(&lr, dict, &bad).is_err());
    let bad = JointConfig { p: 0.0, ..quick_config() };
    assert!(joint_upscale(&lr, dict, &bad).is_err());
    assert!(fixed_weight_upscale(&lr, dict, -1.0, &quick_config()).is_err());
}

