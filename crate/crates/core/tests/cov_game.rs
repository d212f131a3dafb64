mod common;

use common::{quadratic_of, scalar, stationary, test_example, Instance, SCALAR};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use steergame::linalg::min_eigenvalue;
use steergame::{CovGame, Error, GainProfile, JacobiOptions, StepOptions};

fn blocks(v: &[f64]) -> GainProfile {
    GainProfile::from_blocks(v.iter().map(|&x| scalar(x)).collect()).unwrap()
}

fn random_gain(rng: &mut ChaCha8Rng, horizon: usize, rows: usize, n: usize, scale: f64) -> GainProfile {
    GainProfile::from_blocks((0..horizon).map(|_| DMatrix::from_fn(rows, n, |_, _| scale * rng.random_range(-1.0..1.0))).collect())
        .unwrap()
}

fn pair(z: &DVector<f64>) -> ([f64; 2], [f64; 2]) {
    ([z[0], z[1]], [z[2], z[3]])
}

/// `argmax_L J(K, L)` from the recursion oracle.
fn oracle_stopper(k: &[f64; 2]) -> [f64; 2] {
    let (h, g, _) = quadratic_of(|l| SCALAR.feedback(k, l.as_slice()).0, 2);
    let l = stationary(&h, &g);
    [l[0], l[1]]
}

fn oracle_controller(l: &[f64; 2]) -> [f64; 2] {
    let (h, g, _) = quadratic_of(|k| SCALAR.feedback(k.as_slice(), l).0, 2);
    let k = stationary(&h, &g);
    [k[0], k[1]]
}

#[test]
fn scalar_cost_and_terminal_variance_match_recursion() {
    let inst = SCALAR.instance(2, 0.0, 1.0);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let k = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let l = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let (j, var) = SCALAR.feedback(&k, &l);
        assert!((game.cost(&blocks(&k), &blocks(&l)) - j).abs() < 1e-12 * (1.0 + j.abs()));
        assert!((game.terminal_cov(&blocks(&k), &blocks(&l))[(0, 0)] - var).abs() < 1e-12 * var);
    }
}

#[test]
fn zero_gains_cost_is_weighted_prior_trace() {
    let inst = test_example(0.01);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let z = GainProfile::zeros(10, 2, 4);
    let expected = (inst.weights.q_bar() * inst.prior.matrix()).trace();
    assert!((game.cost(&z, &z) - expected).abs() < 1e-12 * expected);
    let en = inst.sys.terminal_selector();
    let open = &en * inst.prior.matrix() * en.transpose();
    assert!((game.terminal_cov(&z, &z) - open).amax() < 1e-15);
}

#[test]
fn second_difference_isolates_quadratic_part() {
    let inst = test_example(0.01);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let z = GainProfile::zeros(10, 2, 4);
    for _ in 0..10 {
        let k = random_gain(&mut rng, 10, 2, 4, 1.0);
        let k2 = GainProfile::from_blocks(k.blocks().iter().map(|b| b * 2.0).collect()).unwrap();
        let second = game.cost(&k2, &z) - 2.0 * game.cost(&k, &z) + game.cost(&z, &z);
        let kl = k.lifted();
        let b = inst.sys.controller_map();
        let quad = ((kl.transpose() * (b.transpose() * inst.weights.q_bar() * b + inst.weights.r_bar()) * &kl) * inst.prior.matrix()).trace();
        assert!((second - 2.0 * quad).abs() < 1e-10 * quad.abs().max(1.0));
    }
}

#[test]
fn gradients_match_central_differences() {
    let inst = test_example(0.01);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let h = 1e-5;
    for _ in 0..20 {
        let k = random_gain(&mut rng, 10, 2, 4, 1.0);
        let l = random_gain(&mut rng, 10, 2, 4, 0.2);
        let (gk, gl) = game.gradients(&k, &l);
        // free and structural-zero entries alike
        for &(r, c) in &[(0usize, 0usize), (3, 5), (7, 13), (19, 39), (4, 40), (10, 2)] {
            let bump = |g: &GainProfile, s: f64| {
                let mut m = g.lifted();
                m[(r, c)] += s;
                m
            };
            let cost_lifted = |km: &DMatrix<f64>, lm: &DMatrix<f64>| {
                let mut phi = inst.sys.controller_map() * km + inst.sys.stopper_map() * lm;
                for i in 0..44 {
                    phi[(i, i)] += 1.0;
                }
                let m = phi.transpose() * inst.weights.q_bar() * &phi + km.transpose() * inst.weights.r_bar() * km
                    - lm.transpose() * inst.weights.s_bar() * lm;
                (m * inst.prior.matrix()).trace()
            };
            let fk = (cost_lifted(&bump(&k, h), &l.lifted()) - cost_lifted(&bump(&k, -h), &l.lifted())) / (2.0 * h);
            let fl = (cost_lifted(&k.lifted(), &bump(&l, h)) - cost_lifted(&k.lifted(), &bump(&l, -h))) / (2.0 * h);
            assert!((fk - gk[(r, c)]).abs() <= 1e-6 * gk[(r, c)].abs().max(1.0), "{fk} vs {}", gk[(r, c)]);
            assert!((fl - gl[(r, c)]).abs() <= 1e-6 * gl[(r, c)].abs().max(1.0), "{fl} vs {}", gl[(r, c)]);
        }
    }
}

#[test]
fn terminal_covariance_matches_separate_noise_and_initial_terms() {
    let inst = test_example(0.01);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let k = random_gain(&mut rng, 10, 2, 4, 1.0);
    let l = random_gain(&mut rng, 10, 2, 4, 0.3);
    let en = inst.sys.terminal_selector();
    let rows = &en * game.closed_loop(&k, &l);
    let from_x0 = &rows * inst.sys.state_map();
    let from_w = &rows * inst.sys.noise_map();
    let expected = &from_x0 * inst.boundary.sigma0() * from_x0.transpose() + &from_w * from_w.transpose();
    assert!((game.terminal_cov(&k, &l) - &expected).amax() <= 1e-12 * expected.amax());
}

#[test]
fn norm_bound_agrees_with_covariance_ordering() {
    let inst = test_example(0.01);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut both = [0, 0];
    for _ in 0..500 {
        let scale = rng.random_range(0.0..3.0);
        let k = random_gain(&mut rng, 10, 2, 4, scale);
        let l = random_gain(&mut rng, 10, 2, 4, 0.3);
        let achieved = game.terminal_cov(&k, &l);
        let f = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let bound = &achieved * rng.random_range(0.5..2.0) + &f * f.transpose() * rng.random_range(0.0..0.01) + DMatrix::identity(4, 4) * 1e-6;
        let norm = game.constraint_norm(&k, &l, &bound).unwrap();
        if (norm - 1.0).abs() < 1e-9 {
            continue;
        }
        let psd = min_eigenvalue(&(&bound - &achieved)) >= -1e-10 * bound.amax();
        assert_eq!(norm <= 1.0, psd, "norm {norm}");
        both[usize::from(psd)] += 1;
    }
    assert!(both[0] > 50 && both[1] > 50, "{both:?}");
}

#[test]
fn generous_bound_gives_norm_below_one() {
    let inst = test_example(0.01);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let z = GainProfile::zeros(10, 2, 4);
    let bound = game.terminal_cov(&z, &z) + DMatrix::identity(4, 4);
    assert!(game.constraint_norm(&z, &z, &bound).unwrap() < 1.0);
}

#[test]
fn scalar_stationary_point_is_best_response_fixed_point() {
    let inst = SCALAR.instance(2, 0.0, 1.0);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let sol = game.solve_ucsg_stationary().unwrap();

    let (mut k, mut l) = ([0.0; 2], [0.0; 2]);
    for _ in 0..500 {
        let kn = oracle_controller(&l);
        let ln = oracle_stopper(&kn);
        let step = (kn[0] - k[0]).abs() + (kn[1] - k[1]).abs() + (ln[0] - l[0]).abs() + (ln[1] - l[1]).abs();
        k = kn;
        l = ln;
        if step < 1e-13 {
            break;
        }
    }
    for i in 0..2 {
        assert!((sol.controller.block(i)[(0, 0)] - k[i]).abs() < 1e-9);
        assert!((sol.stopper.block(i)[(0, 0)] - l[i]).abs() < 1e-9);
    }
    // zero gradient on free entries, multipliers only on the zero pattern
    let (gk, gl) = game.gradients(&sol.controller, &sol.stopper);
    for i in 0..2 {
        assert!(gk[(i, i)].abs() < 1e-10 && gl[(i, i)].abs() < 1e-10);
        assert_eq!(sol.multipliers.theta[(i, i)], 0.0);
        assert_eq!(sol.multipliers.xi[(i, i)], 0.0);
    }
    assert!((sol.multipliers.theta[(0, 1)] + 0.5 * gk[(0, 1)]).abs() < 1e-15);
}

#[test]
fn stationary_point_is_a_saddle() {
    let inst = test_example(0.01);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let sol = game.solve_ucsg_stationary().unwrap();
    let base = game.cost(&sol.controller, &sol.stopper);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let dk = random_gain(&mut rng, 10, 2, 4, 0.05);
        let dl = random_gain(&mut rng, 10, 2, 4, 0.05);
        let kp = GainProfile::from_free(10, 2, 4, &(sol.controller.to_free() + dk.to_free()));
        let lp = GainProfile::from_free(10, 2, 4, &(sol.stopper.to_free() + dl.to_free()));
        assert!(game.cost(&kp, &sol.stopper) >= base - 1e-12);
        assert!(game.cost(&sol.controller, &lp) <= base + 1e-12);
    }
}

#[test]
fn stopper_step_beats_random_probes() {
    let inst = test_example(0.01);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let k = random_gain(&mut rng, 10, 2, 4, 1.0);
    let l = game.stopper_step(&k).unwrap();
    let best = game.cost(&k, &l);
    for _ in 0..100 {
        let probe = random_gain(&mut rng, 10, 2, 4, 0.5);
        assert!(game.cost(&k, &probe) <= best + 1e-12);
    }
    let (_, gl) = game.gradients(&k, &l);
    for j in 0..10 {
        assert!(gl.view((2 * j, 4 * j), (2, 4)).amax() < 1e-10);
    }
    // pattern is exact
    assert!(GainProfile::from_lifted(&l.lifted(), 10, 2, 4).is_ok());
}

#[test]
fn scalar_stopper_step_matches_dense_solve() {
    let inst = SCALAR.instance(2, 0.0, 1.0);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let k = [0.7, -1.3];
    let l = game.stopper_step(&blocks(&k)).unwrap();
    let expected = oracle_stopper(&k);
    for i in 0..2 {
        assert!((l.block(i)[(0, 0)] - expected[i]).abs() < 1e-10);
    }
}

/// Damped Newton on `J(K) + rho max(0, norm - 1)^2` with increasing `rho`.
fn penalty_controller(l: &[f64; 2], sigma_n: f64) -> [f64; 2] {
    let norm_excess = |k: &DVector<f64>| (SCALAR.feedback(k.as_slice(), l).1 / sigma_n).sqrt() - 1.0;
    let (hj, gj, _) = quadratic_of(|k| SCALAR.feedback(k.as_slice(), l).0, 2);
    let objective = |k: &DVector<f64>, rho: f64| {
        let p = norm_excess(k).max(0.0);
        0.5 * k.dot(&(&hj * k)) + gj.dot(k) + rho * p * p
    };
    let mut k = stationary(&hj, &gj);
    let mut rho = 1e2;
    while rho <= 1e8 {
        for _ in 0..200 {
            let p = norm_excess(&k);
            let (h1, h2) = (1e-6, 1e-4);
            let e = |i: usize, s: f64| {
                let mut v = k.clone();
                v[i] += s;
                v
            };
            let dp = DVector::from_fn(2, |i, _| (norm_excess(&e(i, h1)) - norm_excess(&e(i, -h1))) / (2.0 * h1));
            let ddp = DMatrix::from_fn(2, 2, |i, j| {
                let mut pp = k.clone();
                pp[i] += h2;
                pp[j] += h2;
                let mut pm = k.clone();
                pm[i] += h2;
                pm[j] -= h2;
                let mut mp = k.clone();
                mp[i] -= h2;
                mp[j] += h2;
                let mut mm = k.clone();
                mm[i] -= h2;
                mm[j] -= h2;
                (norm_excess(&pp) - norm_excess(&pm) - norm_excess(&mp) + norm_excess(&mm)) / (4.0 * h2 * h2)
            });
            let mut g = &hj * &k + &gj;
            let mut h = hj.clone();
            if p > 0.0 {
                g += &dp * (2.0 * rho * p);
                h += (&dp * dp.transpose() + ddp * p) * (2.0 * rho);
            }
            let step = h.lu().solve(&(-&g)).unwrap();
            let f0 = objective(&k, rho);
            let mut t = 1.0;
            while objective(&(&k + &step * t), rho) > f0 && t > 1e-12 {
                t *= 0.5;
            }
            k += &step * t;
            if (&step * t).norm() < 1e-13 {
                break;
            }
        }
        rho *= 10.0;
    }
    [k[0], k[1]]
}

#[test]
fn scalar_controller_step_matches_penalty_method() {
    let sigma_n = 1.5;
    let inst = SCALAR.instance(2, 0.0, sigma_n);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let l = [0.2, -0.1];
    let step = game.controller_step(&blocks(&l), inst.boundary.sigma_n(), None, &StepOptions::default()).unwrap();
    assert!(step.active);
    assert!(step.constraint_norm <= 1.0 + 1e-6);
    let oracle = penalty_controller(&l, sigma_n);
    for i in 0..2 {
        assert!((step.gain.block(i)[(0, 0)] - oracle[i]).abs() < 1e-5, "{:?} vs {oracle:?}", step.gain.to_free());
    }
}

#[test]
fn controller_step_is_deterministic() {
    let inst = test_example(0.01);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let l = GainProfile::zeros(10, 2, 4);
    let opts = StepOptions::default();
    let a = game.controller_step(&l, inst.boundary.sigma_n(), None, &opts).unwrap();
    let b = game.controller_step(&l, inst.boundary.sigma_n(), None, &opts).unwrap();
    assert_eq!(a.gain, b.gain);
    assert!(a.duality_gap <= 1e-7 * (1.0 + game.cost(&a.gain, &l).abs()));
}

#[test]
fn scalar_fallback_matches_nested_minimization() {
    let inst = SCALAR.instance(2, 0.0, 1.0);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let fb = game.fallback_solve().unwrap();

    // outer BFGS over K with central-difference gradients; inner exact stopper solve
    let composite = |k: &DVector<f64>| {
        let kk = [k[0], k[1]];
        SCALAR.feedback(&kk, &oracle_stopper(&kk)).0
    };
    let grad = |k: &DVector<f64>| {
        let h = 1e-5;
        DVector::from_fn(2, |i, _| {
            let mut p = k.clone();
            let mut m = k.clone();
            p[i] += h;
            m[i] -= h;
            (composite(&p) - composite(&m)) / (2.0 * h)
        })
    };
    let mut k = DVector::zeros(2);
    let mut inv = DMatrix::<f64>::identity(2, 2);
    let mut g = grad(&k);
    for _ in 0..200 {
        if g.norm() < 1e-11 {
            break;
        }
        let dir = -(&inv * &g);
        let mut t = 1.0;
        while composite(&(&k + &dir * t)) > composite(&k) + 1e-4 * t * g.dot(&dir) && t > 1e-14 {
            t *= 0.5;
        }
        let s = &dir * t;
        k += &s;
        let gn = grad(&k);
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let id = DMatrix::<f64>::identity(2, 2);
            inv = (&id - &s * y.transpose() * rho) * &inv * (&id - &y * s.transpose() * rho) + &s * s.transpose() * rho;
        }
        g = gn;
    }
    let l = oracle_stopper(&[k[0], k[1]]);
    for i in 0..2 {
        assert!((fb.controller.block(i)[(0, 0)] - k[i]).abs() < 1e-7, "{:?} vs {k}", fb.controller.to_free());
        assert!((fb.stopper.block(i)[(0, 0)] - l[i]).abs() < 1e-7);
    }
}

#[test]
fn fallback_coincides_with_unconstrained_stationary_point() {
    let inst = test_example(0.1);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let fb = game.fallback_solve().unwrap();
    let st = game.solve_ucsg_stationary().unwrap();
    assert!(fb.controller.distance(&st.controller) < 1e-9 * (1.0 + st.controller.to_free().norm()));
    assert!(fb.stopper.distance(&st.stopper) < 1e-9 * (1.0 + st.stopper.to_free().norm()));
    assert!(fb.composite_min_eig > 0.0);
}

#[test]
fn double_integrator_jacobi_converges_to_feasible_equilibrium() {
    let inst = test_example(0.01);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let curv = game.check_curvature();
    assert!(curv.convex_in_k && curv.concave_in_l);
    let opts = JacobiOptions::default();
    let tr = game.jacobi_solve(inst.boundary.sigma_n(), &opts).unwrap();
    assert!(tr.converged && tr.feasible);
    assert!(*tr.eps_k.last().unwrap() <= 1e-5 && *tr.eps_l.last().unwrap() <= 1e-5);
    assert_eq!(tr.iterates.len(), tr.iterations + 1);
    assert!(tr.constraint_norm <= 1.0 + 1e-6);
    let slack = inst.boundary.sigma_n() - &tr.achieved_sigma_n;
    assert!(min_eigenvalue(&slack) >= -1e-6);
    assert!(tr.monotone(1e-9));
    // frozen from an independent conic-solver implementation
    let value = game.cost(&tr.controller, &tr.stopper);
    assert!((value - 1.17328941).abs() < 1e-6, "{value}");

    // fixed point of both steps
    let l = game.stopper_step(&tr.controller).unwrap();
    assert!(l.distance(&tr.stopper) <= opts.epsilon);
    let k = game.controller_step(&tr.stopper, inst.boundary.sigma_n(), None, &opts.step).unwrap();
    assert!(k.gain.distance(&tr.controller) <= opts.epsilon);

    // the unconstrained stationary point violates the bound
    let st = game.solve_ucsg_stationary().unwrap();
    assert!(game.constraint_norm(&st.controller, &st.stopper, inst.boundary.sigma_n()).unwrap() > 1.0);
}

#[test]
fn slack_bound_jacobi_reaches_stationary_point() {
    let inst = test_example(0.01);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let huge = DMatrix::identity(4, 4) * 1e6;
    let opts = JacobiOptions { epsilon: 1e-10, ..JacobiOptions::default() };
    let tr = game.jacobi_solve(&huge, &opts).unwrap();
    assert!(tr.converged && tr.feasible);
    let st = game.solve_ucsg_stationary().unwrap();
    assert!(tr.controller.distance(&st.controller) < 1e-8);
    assert!(tr.stopper.distance(&st.stopper) < 1e-8);
}

#[test]
fn noisy_double_integrator_is_infeasible_and_falls_back() {
    let inst = test_example(0.1);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let z = GainProfile::zeros(10, 2, 4);
    match game.controller_step(&z, inst.boundary.sigma_n(), None, &StepOptions::default()) {
        Err(Error::InfeasibleCovariance { min_norm }) => assert!((min_norm - 4.6377).abs() < 1e-3, "{min_norm}"),
        other => panic!("expected infeasibility, got {other:?}"),
    }
    let tr = game.jacobi_solve(inst.boundary.sigma_n(), &JacobiOptions::default()).unwrap();
    assert!(!tr.feasible && !tr.converged);
    let fb = tr.fallback.as_ref().unwrap();
    assert_eq!(&tr.controller, &fb.controller);
    assert!((game.cost(&fb.controller, &fb.stopper) - 2.6080).abs() < 1e-3);
    // covariance keeps growing along the horizon
    let traces: Vec<f64> = game.state_covariances(&fb.controller, &fb.stopper).iter().map(|c| c.trace()).collect();
    assert!(traces.windows(2).all(|w| w[1] > w[0]), "{traces:?}");
}

#[test]
fn singular_terminal_bound_refused() {
    let inst = test_example(0.01);
    let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
    let mut bound = inst.boundary.sigma_n().clone();
    bound[(3, 3)] = 0.0;
    assert!(matches!(game.jacobi_solve(&bound, &JacobiOptions::default()), Err(Error::NotDefinite { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn steps_keep_the_gain_pattern(seed in any::<u64>()) {
        let inst: Instance = test_example(0.01);
        let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_gain(&mut rng, 10, 2, 4, 1.0);
        let l = random_gain(&mut rng, 10, 2, 4, 0.3);
        let ls = game.stopper_step(&k).unwrap();
        prop_assert!(GainProfile::from_lifted(&ls.lifted(), 10, 2, 4).is_ok());
        let bound = inst.boundary.sigma_n() * 20.0;
        let ks = game.controller_step(&l, &bound, Some(&k), &StepOptions::default()).unwrap();
        prop_assert!(GainProfile::from_lifted(&ks.gain.lifted(), 10, 2, 4).is_ok());
        prop_assert!(ks.constraint_norm <= 1.0 + 1e-6);
        // exact argmin / argmax never lose ground
        prop_assert!(game.cost(&k, &ls) >= game.cost(&k, &l) - 1e-9);
        let z = GainProfile::zeros(10, 2, 4);
        if game.constraint_norm(&z, &l, &bound).unwrap() <= 1.0 {
            prop_assert!(game.cost(&ks.gain, &l) <= game.cost(&z, &l) + 1e-9);
        }
    }

    #[test]
    fn scalar_saddle_perturbation(seed in any::<u64>()) {
        let inst = SCALAR.instance(2, 0.0, 1.0);
        let game = CovGame::new(&inst.sys, &inst.weights, &inst.prior).unwrap();
        let sol = game.solve_ucsg_stationary().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let (dk, dl) = pair(&d);
        let k = sol.controller.to_free();
        let l = sol.stopper.to_free();
        let base = game.cost(&sol.controller, &sol.stopper);
        let kp = blocks(&[k[0] + dk[0], k[1] + dk[1]]);
        let lp = blocks(&[l[0] + dl[0], l[1] + dl[1]]);
        prop_assert!(game.cost(&kp, &sol.stopper) >= base - 1e-12);
        prop_assert!(game.cost(&sol.controller, &lp) <= base + 1e-12);
    }
}
