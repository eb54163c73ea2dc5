//! Solver update contracts checked against independent oracles: the
//! Jacobi-dilation prox oracle for the J step, entrywise grid search for
//! the L and E steps, finite differences for the X stationarity and the
//! dictionary gradient, a frozen golden trace pinning the update order,
//! and the exact fixed-dictionary equivalence.

#![allow(clippy::excessive_precision)] // frozen golden-trace constants keep full precision

mod common;

use common::{fd_gradient, grid_min_scalar, nuclear_prox_oracle, random_mat, seeded, synthetic_instance};
use lrrid::solver::{
    self, dict_gradient, dict_objective, solve_lrrid, solve_lrrs, update_e, update_j, update_l,
    update_x, Hyperparams, SolverState,
};
use lrrid::Mat;

fn random_state(seed: u64, d: usize, m: usize, n: usize, mu: f64) -> (SolverState, Mat) {
    let mut rng = seeded(seed);
    let state = SolverState {
        x: random_mat(&mut rng, m, n),
        j: random_mat(&mut rng, m, n),
        l: random_mat(&mut rng, m, n),
        e: random_mat(&mut rng, d, n),
        d: random_mat(&mut rng, d, m),
        t1: random_mat(&mut rng, d, n),
        t2: random_mat(&mut rng, m, n),
        t3: random_mat(&mut rng, m, n),
        mu,
        iter: 0,
    };
    let y = random_mat(&mut rng, d, n);
    (state, y)
}

#[test]
fn j_update_matches_subproblem_oracle() {
    // min_J ||J||_* + <T2, X - J> + (mu/2)||X - J||_F² at mu = 2.
    let (state, _y) = random_state(201, 6, 5, 8, 2.0);
    let got = update_j(&state).unwrap();
    let shifted = &state.x + &state.t2 / state.mu;
    let oracle = nuclear_prox_oracle(&shifted, 1.0 / state.mu);
    assert!((&got - &oracle).amax() <= 1e-5);

    let subproblem = |j: &Mat| {
        lrrid::linalg::nuclear_norm(j).unwrap()
            + state.t2.dot(&(&state.x - j))
            + 0.5 * state.mu * (&state.x - j).norm_squared()
    };
    assert!(subproblem(&got) <= subproblem(&oracle) + 1e-9);
}

#[test]
fn l_update_matches_entrywise_grid_oracle() {
    let (state, _y) = random_state(202, 6, 4, 5, 1.7);
    let beta = 0.6;
    let got = update_l(&state, beta).unwrap();
    for i in 0..4 {
        for j in 0..5 {
            let (x, t3, mu) = (state.x[(i, j)], state.t3[(i, j)], state.mu);
            let f = |l: f64| beta * l.abs() + t3 * (x - l) + 0.5 * mu * (x - l).powi(2);
            let radius = x.abs() + (t3.abs() + beta) / mu + 2.0;
            let oracle = grid_min_scalar(f, radius);
            assert!((got[(i, j)] - oracle).abs() <= 1e-5, "entry ({i},{j})");
        }
    }
}

#[test]
fn e_update_matches_entrywise_grid_oracle() {
    let (state, y) = random_state(203, 7, 4, 5, 2.3);
    let lambda = 0.4;
    let got = update_e(&state, &y, lambda).unwrap();
    let dx = &state.d * &state.x;
    for i in 0..7 {
        for j in 0..5 {
            let (r, t1, mu) = (y[(i, j)] - dx[(i, j)], state.t1[(i, j)], state.mu);
            // min_e lambda*|e| + t1*(r - e) + (mu/2)*(r - e)^2
            let f = |e: f64| lambda * e.abs() + t1 * (r - e) + 0.5 * mu * (r - e).powi(2);
            let radius = r.abs() + (t1.abs() + lambda) / mu + 2.0;
            let oracle = grid_min_scalar(f, radius);
            assert!((got[(i, j)] - oracle).abs() <= 1e-5, "entry ({i},{j})");
        }
    }
}

#[test]
fn x_update_is_stationary_for_its_quadratic() {
    let (mut state, y) = random_state(204, 12, 6, 9, 1.4);
    state.j = update_j(&state).unwrap();
    let x_new = update_x(&state, &y).unwrap();

    let f = |x: &Mat| {
        let feas = &y - &state.d * x - &state.e;
        state.t1.dot(&feas)
            + state.t2.dot(&(x - &state.j))
            + state.t3.dot(&(x - &state.l))
            + 0.5 * state.mu * (feas.norm_squared() + (x - &state.j).norm_squared() + (x - &state.l).norm_squared())
    };
    let grad = fd_gradient(f, &x_new, 1e-4);
    assert!(grad.amax() <= 1e-5, "finite-difference gradient {}", grad.amax());
}

#[test]
fn dict_gradient_matches_finite_differences() {
    let (state, y) = random_state(205, 10, 5, 6, 1.2);
    let gamma = 0.8;
    let d0 = state.d.clone();
    let analytic = dict_gradient(&d0, &state, &y, gamma);
    let numeric = fd_gradient(|d| dict_objective(d, &state, &y, gamma), &d0, 1e-5);
    assert!(
        (&analytic - &numeric).amax() <= 1e-4,
        "gradient mismatch {}",
        (&analytic - &numeric).amax()
    );
}

#[test]
fn subproblem_outputs_beat_random_perturbations() {
    let (mut state, y) = random_state(206, 8, 5, 7, 1.9);
    let (lambda, beta) = (0.5, 0.7);
    let mut rng = seeded(207);

    let j_new = update_j(&state).unwrap();
    let j_obj = |j: &Mat| {
        lrrid::linalg::nuclear_norm(j).unwrap()
            + state.t2.dot(&(&state.x - j))
            + 0.5 * state.mu * (&state.x - j).norm_squared()
    };
    for _ in 0..100 {
        let perturbed = &j_new + random_mat(&mut rng, 5, 7) * 1e-3;
        assert!(j_obj(&j_new) <= j_obj(&perturbed) + 1e-12);
    }

    state.j = j_new;
    state.x = update_x(&state, &y).unwrap();

    let l_new = update_l(&state, beta).unwrap();
    let l_obj = |l: &Mat| {
        beta * lrrid::linalg::l1_norm(l)
            + state.t3.dot(&(&state.x - l))
            + 0.5 * state.mu * (&state.x - l).norm_squared()
    };
    for _ in 0..100 {
        let perturbed = &l_new + random_mat(&mut rng, 5, 7) * 1e-3;
        assert!(l_obj(&l_new) <= l_obj(&perturbed) + 1e-12);
    }

    let e_new = update_e(&state, &y, lambda).unwrap();
    let e_obj = |e: &Mat| {
        let feas = &y - &state.d * &state.x - e;
        lambda * lrrid::linalg::l1_norm(e) + state.t1.dot(&feas) + 0.5 * state.mu * feas.norm_squared()
    };
    for _ in 0..100 {
        let perturbed = &e_new + random_mat(&mut rng, 8, 7) * 1e-3;
        assert!(e_obj(&e_new) <= e_obj(&perturbed) + 1e-12);
    }
}

// Frozen reference trace for the first five iterations on the seed-77
// instance. Any change to the update order, schedules, or initializations
// moves these values far beyond the tolerance.
#[test]
fn golden_trace_pins_update_order() {
    let (y, d_star, _, _) = synthetic_instance(77);
    let params = Hyperparams {
        lambda: 0.1,
        beta: 0.1,
        gamma: 1e-4,
        max_outer_iters: 5,
        ..Hyperparams::default()
    };
    let res = solve_lrrid(&y, 20, d_star, &params).unwrap();
    assert_eq!(res.residual_history.len(), 5);

    let expected: [(f64, f64, f64, f64, f64); 5] = [
        (1e-5, 7.72193360883896229e-1, 6.49942666806227032e-1, 6.49942666806227032e-1, 6.67418079990791835e0),
        (1.1000000000000001e-5, 7.39740048646198689e-1, 6.73705402338802939e-1, 6.73705402338802939e-1, 7.11534853617390262e0),
        (1.2100000000000003e-5, 7.23435236278293647e-1, 6.79181150316020110e-1, 6.79181150316020110e-1, 7.24133544237275473e0),
        (1.3310000000000005e-5, 6.93965570022318401e-1, 6.91451891950647934e-1, 6.91451891950647934e-1, 7.58238403437114794e0),
        (1.4641000000000006e-5, 6.48069682437371175e-1, 6.94802954995123456e-1, 6.94802954995123456e-1, 8.08155950306178461e0),
    ];
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
    for (rec, (mu, r1, r2, r3, obj)) in res.residual_history.iter().zip(expected) {
        assert!(close(rec.mu, mu), "iter {}: mu {} vs {}", rec.iter, rec.mu, mu);
        assert!(close(rec.res_feasibility, r1), "iter {}: r1 {} vs {}", rec.iter, rec.res_feasibility, r1);
        assert!(close(rec.res_code_lowrank, r2), "iter {}: r2 {} vs {}", rec.iter, rec.res_code_lowrank, r2);
        assert!(close(rec.res_code_sparse, r3), "iter {}: r3 {} vs {}", rec.iter, rec.res_code_sparse, r3);
        assert!(close(rec.objective, obj), "iter {}: obj {} vs {}", rec.iter, rec.objective, obj);
    }
}

#[test]
fn lrrs_equals_lrrid_without_dictionary_learning() {
    let (y, d_star, _, _) = synthetic_instance(3);
    let params = Hyperparams {
        lambda: 0.1,
        beta: 0.1,
        gamma: 0.0,
        dict_inner_steps: 0,
        max_outer_iters: 40,
        ..Hyperparams::default()
    };
    let a = solve_lrrid(&y, 20, d_star.clone(), &params).unwrap();
    let b = solve_lrrs(&y, 20, d_star.clone(), &params).unwrap();
    assert_eq!(a.x_train, b.x_train);
    assert_eq!(a.x_test, b.x_test);
    assert_eq!(a.e, b.e);
    assert_eq!(a.d, b.d);
    assert_eq!(a.d, d_star);
    assert_eq!(a.residual_history.len(), b.residual_history.len());
    for (ra, rb) in a.residual_history.iter().zip(&b.residual_history) {
        assert_eq!(ra, rb);
    }
}

// Measured regression on the reference instance with the penalty capped
// at 1e3: the feasibility residual oscillates step to step once mu stops
// growing, but its running envelope (max over 25-iteration windows)
// decays monotonically and the solve still converges.
#[test]
fn feasibility_envelope_decays_after_mu_cap() {
    let (y, d_star, _, _) = synthetic_instance(0);
    let params = Hyperparams {
        lambda: 0.1,
        beta: 0.1,
        gamma: 1e-4,
        mu_max: 1e3,
        ..Hyperparams::default()
    };
    let res = solve_lrrid(&y, 20, d_star, &params).unwrap();
    assert!(res.converged);
    let cap_at = res
        .residual_history
        .iter()
        .position(|r| r.mu >= 1e3)
        .expect("mu must reach its cap on this instance");
    let tail: Vec<f64> = res.residual_history[cap_at..]
        .iter()
        .map(|r| r.res_feasibility)
        .collect();
    assert!(tail.len() >= 50, "tail too short to check the envelope");
    let envelope: Vec<f64> = tail.chunks(25).map(|c| c.iter().cloned().fold(0.0, f64::max)).collect();
    for w in envelope.windows(2) {
        assert!(w[1] <= w[0], "envelope rose: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn lrrs_reaches_feasibility_on_synthetic_instance() {
    let (y, d_star, _, _) = synthetic_instance(5);
    let params = Hyperparams {
        lambda: 0.1,
        beta: 0.1,
        ..Hyperparams::default()
    };
    let res = solve_lrrs(&y, 20, d_star.clone(), &params).unwrap();
    assert!(res.converged);
    assert_eq!(res.d, d_star);
    let last = res.residual_history.last().unwrap();
    assert!(last.res_feasibility < 1e-6);
    assert!(last.res_code_lowrank < 1e-6);
    assert!(last.res_code_sparse < 1e-6);
}

#[test]
fn solver_rejects_and_names_nan_source() {
    // A dictionary with an infinite column blows up the X update first.
    let (y, mut d_star, _, _) = synthetic_instance(9);
    d_star[(0, 0)] = 1e308;
    let params = Hyperparams {
        max_outer_iters: 5,
        ..Hyperparams::default()
    };
    let err = solve_lrrid(&y, 20, d_star, &params).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("update_") || msg.contains("solve_spd") || msg.contains("svd"), "unexpected error: {msg}");
}

#[test]
fn solve_state_shape_mismatch_is_an_argument_error() {
    let y = Mat::zeros(4, 3);
    let bad_d = Mat::zeros(5, 2);
    assert!(matches!(
        SolverState::init(&y, bad_d, 1e-5),
        Err(lrrid::Error::Argument(_))
    ));
    let err = solver::solve_lrrid(&y, 7, Mat::zeros(4, 2), &Hyperparams::default());
    assert!(matches!(err, Err(lrrid::Error::Argument(_))));
}
