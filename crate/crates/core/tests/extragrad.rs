mod common;

use common::{normalized_instance, rng};
use egot::extragrad::{
    adjust_mu, adjust_phase, iterate, main_step, midpoint_step, solve, ExtragradState, ManualSettings, SolverParams,
};
use egot::oracle::exact_ot;
use egot::trace::{TraceOptions, TraceRecord};
use egot::{transport_cost, DualIterate, OtInstance};
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng;

/// Straightforward probability-domain implementation of one iteration:
/// powers, exponentials and explicit normalization.
/// Midpoint rows, midpoint duals and main duals of one step.
type StepOutput = (Vec<Vec<f64>>, Vec<[f64; 2]>, Vec<[f64; 2]>);

struct Reference {
    p: Vec<Vec<f64>>,
    mu_adj: Vec<[f64; 2]>,
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

impl Reference {
    fn new(n: usize) -> Self {
        Self { p: vec![vec![1.0 / n as f64; n]; n], mu_adj: vec![[0.5, 0.5]; n] }
    }

    fn step(&mut self, inst: &OtInstance, params: &SolverParams) -> StepOutput {
        let n = inst.n();
        let eta = params.eta;
        let mu_step = |base: &[f64; 2], rows: &Vec<Vec<f64>>, j: usize| {
            let s: f64 = (0..n).map(|i| inst.r()[i] * rows[i][j]).sum::<f64>() - inst.c()[j];
            let plus = base[0].powf(1.0 - eta) * (params.eta_mu[j] * s).exp();
            let minus = base[1].powf(1.0 - eta) * (-params.eta_mu[j] * s).exp();
            let y = normalize(&[plus, minus]);
            [y[0], y[1]]
        };
        let p_step = |grad_mu: &Vec<[f64; 2]>, i: usize| {
            let row: Vec<f64> = (0..n)
                .map(|j| {
                    let d = grad_mu[j][0] - grad_mu[j][1];
                    self.p[i][j].powf(1.0 - eta) * (-params.eta_p_times_r[i] * (0.5 * inst.cost()[[i, j]] + d)).exp()
                })
                .collect();
            normalize(&row)
        };
        let mu_bar: Vec<[f64; 2]> = (0..n).map(|j| mu_step(&self.mu_adj[j], &self.p, j)).collect();
        let p_bar: Vec<Vec<f64>> = (0..n).map(|i| p_step(&self.mu_adj, i)).collect();
        let mu: Vec<[f64; 2]> = (0..n).map(|j| mu_step(&self.mu_adj[j], &p_bar, j)).collect();
        let p_next: Vec<Vec<f64>> = (0..n).map(|i| p_step(&mu_bar, i)).collect();
        let adj: Vec<[f64; 2]> = mu
            .iter()
            .map(|m| {
                let hi = m[0].max(m[1]);
                let x = [m[0].max((-params.b).exp() * hi), m[1].max((-params.b).exp() * hi)];
                let y = normalize(&x);
                [y[0], y[1]]
            })
            .collect();
        self.p = p_next;
        self.mu_adj = adj;
        (p_bar, mu_bar, mu)
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
#[allow(clippy::needless_range_loop)]
fn log_domain_matches_reference_iteration() {
    let mut g = rng(21);
    for case in 0..12 {
        let n = g.random_range(1..=6);
        let inst = normalized_instance(n, &mut g);
        let params = if case % 2 == 0 {
            SolverParams::fine_tuned(&inst, 10).unwrap()
        } else {
            SolverParams::manual(
                &inst,
                ManualSettings { b: 2.0, eta: 0.3, step_scale: 0.7, c3: 1.0, t_max: 10, epsilon: 0.1 },
            )
            .unwrap()
        };
        let mut st = ExtragradState::new(&inst);
        let mut reference = Reference::new(n);
        for _ in 0..8 {
            midpoint_step(&mut st, &params, &inst).unwrap();
            main_step(&mut st, &params, &inst).unwrap();
            adjust_phase(&mut st, &params);
            let (p_bar, mu_bar, mu) = reference.step(&inst, &params);
            for i in 0..n {
                for j in 0..n {
                    assert!(close(st.midpoint_rows()[[i, j]], p_bar[i][j], 1e-10));
                    assert!(close(st.rows()[[i, j]], reference.p[i][j], 1e-10));
                }
            }
            for j in 0..n {
                for s in 0..2 {
                    assert!(close(st.mu_bar()[j][s], mu_bar[j][s], 1e-10));
                    assert!(close(st.mu()[j][s], mu[j][s], 1e-10));
                    assert!(close(st.mu_adjust()[j][s], reference.mu_adj[j][s], 1e-10));
                }
            }
        }
    }
}

#[test]
fn two_point_trace_has_closed_form() {
    // W = [[0,1],[1,0]], r = c = [1/2,1/2], eta = 0, B = 1, C = C3 = 1: the
    // duals stay at [1/2,1/2] by symmetry and p_00 after t steps is
    // 1 / (1 + exp(-t/2)); the first midpoint equals the first main row.
    let inst = OtInstance::new(array![[0.0, 1.0], [1.0, 0.0]], vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
    let params = SolverParams::manual(
        &inst,
        ManualSettings { b: 1.0, eta: 0.0, step_scale: 1.0, c3: 1.0, t_max: 5, epsilon: 0.0 },
    )
    .unwrap();
    let mut st = ExtragradState::new(&inst);
    midpoint_step(&mut st, &params, &inst).unwrap();
    assert!((st.midpoint_rows()[[0, 0]] - 0.6224593312018546).abs() < 1e-15);
    assert!((st.midpoint_rows()[[1, 1]] - 0.6224593312018546).abs() < 1e-15);
    assert!((st.mu_bar()[0][0] - 0.5).abs() < 1e-15);
    main_step(&mut st, &params, &inst).unwrap();
    adjust_phase(&mut st, &params);
    for t in 1..=5 {
        if t > 1 {
            iterate(&mut st, &params, &inst).unwrap();
        }
        let expect = 1.0 / (1.0 + (-0.5 * t as f64).exp());
        assert!((st.rows()[[0, 0]] - expect).abs() < 1e-14, "t = {t}");
        assert!((st.mu()[1][0] - 0.5).abs() < 1e-15);
    }
}

#[test]
fn coinciding_gradient_points_give_equal_steps() {
    let mut g = rng(22);
    let inst = normalized_instance(4, &mut g);
    let params = SolverParams::fine_tuned(&inst, 1).unwrap();
    let mut st = ExtragradState::new(&inst);
    for _ in 0..3 {
        iterate(&mut st, &params, &inst).unwrap();
    }
    // Put the midpoint at the base point, then a main step must reproduce
    // the midpoint step's output.
    let base = ExtragradState::from_parts(&inst, st.rows(), &DualIterate::new(st.mu_adjust()).unwrap()).unwrap();
    let mut via_mid = base.clone();
    midpoint_step(&mut via_mid, &params, &inst).unwrap();
    let mut via_main = base.clone();
    main_step(&mut via_main, &params, &inst).unwrap();
    for (a, b) in via_mid.midpoint_rows().iter().zip(via_main.rows().iter()) {
        assert!((a - b).abs() < 1e-15);
    }
    for (a, b) in via_mid.mu_bar().iter().zip(via_main.mu()) {
        assert!((a[0] - b[0]).abs() < 1e-15);
    }
}

#[test]
fn zero_residual_undamped_iteration_is_identity_on_duals() {
    // Diagonal-feasible rows: colsum = c, and with eta = 0 the dual pairs
    // do not move; with a zero cost matrix and symmetric duals the rows
    // do not move either.
    let n = 3;
    let r = vec![0.2, 0.3, 0.5];
    let inst = OtInstance::new(Array2::zeros((n, n)), r.clone(), r.clone()).unwrap();
    let params = SolverParams::fine_tuned(&inst, 1).unwrap();
    let rows = Array2::from_shape_fn((n, n), |(_, j)| r[j]);
    let duals = DualIterate::uniform(n);
    let mut st = ExtragradState::from_parts(&inst, &rows, &duals).unwrap();
    iterate(&mut st, &params, &inst).unwrap();
    for (a, b) in st.rows().iter().zip(rows.iter()) {
        assert!((a - b).abs() < 1e-15);
    }
    for m in st.mu_adjust() {
        assert!((m[0] - 0.5).abs() < 1e-15 && (m[1] - 0.5).abs() < 1e-15);
    }
}

#[test]
fn phase_invariants_hold_along_a_run() {
    let mut g = rng(23);
    for case in 0..6 {
        let n = g.random_range(2..=10);
        let inst = normalized_instance(n, &mut g);
        let params = if case % 2 == 0 {
            SolverParams::fine_tuned(&inst, 1).unwrap()
        } else {
            SolverParams::theoretical(&inst, 0.2).unwrap()
        };
        let mut st = ExtragradState::new(&inst);
        for _ in 0..300 {
            midpoint_step(&mut st, &params, &inst).unwrap();
            main_step(&mut st, &params, &inst).unwrap();
            for rows in [st.rows(), st.midpoint_rows()] {
                for row in rows.rows() {
                    assert!(row.iter().all(|&x| x >= 0.0));
                    assert!((row.sum() - 1.0).abs() < 1e-9);
                }
            }
            let before = st.mu();
            adjust_phase(&mut st, &params);
            let bound = (1.0 + 2.0 * (-params.b).exp()) * (1.0 + 1e-14);
            for (l, (m, pre)) in st.log_mu_adjust().iter().zip(st.mu_adjust().iter().zip(&before)) {
                assert!((l[0] - l[1]).abs() <= params.b);
                assert!((m[0] + m[1] - 1.0).abs() < 1e-12);
                for s in 0..2 {
                    assert!(pre[s] / m[s] <= bound, "{:?} {:?} {}", pre, m, params.b);
                }
            }
        }
    }
}

#[test]
fn tracing_does_not_change_the_result() {
    let mut g = rng(24);
    let inst = normalized_instance(8, &mut g);
    let params = SolverParams::fine_tuned(&inst, 300).unwrap();
    let quiet = solve(&inst, &params, &TraceOptions::disabled()).unwrap();
    let mut seen: Vec<TraceRecord> = Vec::new();
    let mut sink = |r: &TraceRecord| seen.push(r.clone());
    let opts = TraceOptions::every(1).with_reference(0.0);
    let loud = egot::extragrad::solve_with_sink(&inst, &params, &opts, Some(&mut sink)).unwrap();
    assert_eq!(quiet.raw.matrix(), loud.raw.matrix());
    assert_eq!(quiet.feasible.matrix(), loud.feasible.matrix());
    assert_eq!(loud.trace.len(), 301);
    assert_eq!(seen, loud.trace);
    for w in loud.trace.windows(2) {
        assert_eq!(w[1].matvec_equiv - w[0].matvec_equiv, 2.0);
    }
}

#[test]
fn fine_tuned_solves_the_two_point_problem() {
    let inst = OtInstance::new(array![[0.0, 1.0], [1.0, 0.0]], vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
    let params = SolverParams::fine_tuned(&inst, 200).unwrap();
    let out = solve(&inst, &params, &TraceOptions::disabled()).unwrap();
    let cost = transport_cost(&inst, &out.feasible).unwrap();
    assert!(cost <= 1e-6, "gap {cost}");
    assert!(out.feasible.is_feasible(1e-12));
}

#[test]
fn early_stop_on_reference_gap() {
    let mut g = rng(25);
    let inst = normalized_instance(6, &mut g);
    let opt = exact_ot(&inst, 64).unwrap().value;
    let params = SolverParams::fine_tuned(&inst, 100_000).unwrap();
    let opts = TraceOptions::every(10).with_reference(opt).stop_below(1e-3);
    let out = solve(&inst, &params, &opts).unwrap();
    assert!(out.iterations < 100_000);
    let last = out.trace.last().unwrap();
    assert!(last.gap.unwrap() <= 1e-3);
    assert!(TraceOptions::disabled().stop_below(1.0).stop_below_gap.is_some());
    assert!(solve(&inst, &params, &TraceOptions::every(1).stop_below(1e-3)).is_err());
}

#[test]
fn theoretical_parameters_meet_target_on_small_instance() {
    let mut g = rng(26);
    let inst = normalized_instance(4, &mut g);
    let params = SolverParams::theoretical(&inst, 0.3).unwrap();
    let out = solve(&inst, &params, &TraceOptions::disabled()).unwrap();
    let opt = exact_ot(&inst, 64).unwrap().value;
    let cost = transport_cost(&inst, &out.feasible).unwrap();
    assert!(cost - opt <= 0.3, "gap {}", cost - opt);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]
    #[test]
    fn adjust_bounds(a in 0.0f64..=1.0, b in prop::sample::select(vec![0.1, 1.0, 5.0])) {
        let mu = [a, 1.0 - a];
        let y = adjust_mu(mu, b).unwrap();
        prop_assert!(y[0].max(y[1]) / y[0].min(y[1]) <= b.exp());
        prop_assert!((y[0] + y[1] - 1.0).abs() < 1e-12);
        for s in 0..2 {
            prop_assert!(mu[s] / y[s] <= 1.0 + 2.0 * (-b).exp());
        }
    }
}
