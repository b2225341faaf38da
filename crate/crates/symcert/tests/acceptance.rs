//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Run with
//! `cargo test -p symcert --test acceptance -- --nocapture`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use symcert::linalg::Mat;
use symcert::model::{
    ActivationKind, Block, ChainLayer, LayerChain, MarginObjective, MarginTask, Network,
    NormKind, PerturbationSpec,
};
use symcert::oracle::{exact_fgl_two_layer, exact_local_linf, pgd_attack, PgdConfig};
use symcert::qp::{
    build_fgl_qp, build_local_robustness_qp, relu_exact_constraints, relu_theta_constraints,
    ReluEncoding, SymbolTable,
};
use symcert::relax::{presolve_eliminate_affine, shor_dual, shor_primal};
use symcert::report::{aggregate, InputSummary, Verdict};
use symcert::sdpsolve::{solve_sdp, SolveStatus, SolverConfig};
use symcert::spectral::{eigen_fgl_bound, ptdiag_bound, unit_diagonal_sdp, StepSchedule};

fn pass(criterion: &str) {
    println!("PASS {criterion}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-scale..scale)).collect())
        .collect();
    Mat::from_rows(&data).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn two_layer_task(rng: &mut ChaCha8Rng, inputs: usize, hidden: usize) -> MarginTask {
    MarginTask {
        chain: LayerChain {
            input_dim: inputs,
            layers: vec![ChainLayer {
                weights: random_matrix(rng, hidden, inputs, 1.0),
                bias: random_vec(rng, hidden, 0.5),
                activation: ActivationKind::Relu,
            }],
        },
        objective: MarginObjective { weights: random_vec(rng, hidden, 1.0), offset: rng.gen_range(-0.5..0.5) },
    }
}

fn solve_value(program: &symcert::qp::QuadraticProgram, cfg: &SolverConfig) -> (f64, SolveStatus, f64) {
    let reduced = presolve_eliminate_affine(program).unwrap();
    let sdp = shor_primal(&reduced.program);
    let sol = solve_sdp(&sdp, cfg).unwrap();
    (
        sdp.reported_value(sol.primal_obj),
        sol.status,
        sol.rank1_gap().unwrap_or(f64::NAN),
    )
}

/// Criterion 1: encoding exactness for ReLU and clipped ReLU, 10^4 traces
/// each way, within the stated slacks, in under 5 seconds.
#[test]
fn criterion_1_encoding_exactness() {
    let start = std::time::Instant::now();
    let mut rng = rng(101);

    let mut tab = SymbolTable::new();
    tab.add_group("pre", 1);
    tab.add_group("post", 1);
    let relu = relu_exact_constraints(&tab, 0, 1).unwrap();
    for _ in 0..10_000 {
        let pre: f64 = rng.gen_range(-3.0..3.0);
        let post = pre.max(0.0);
        for c in &relu {
            assert!(c.violation(&[pre, post]) <= 1e-12);
        }
    }
    for _ in 0..10_000 {
        let pre: f64 = rng.gen_range(-3.0..3.0);
        let offset: f64 = rng.gen_range(1e-3..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let post = pre.max(0.0) + offset;
        let worst = relu.iter().map(|c| c.violation(&[pre, post])).fold(0.0f64, f64::max);
        assert!(worst >= 1e-8, "off-graph point accepted: pre={pre} offset={offset}");
    }

    let mut tab = SymbolTable::new();
    tab.add_group("pre", 1);
    tab.add_group("post", 1);
    tab.add_group("aux", 1);
    let theta = 1.0;
    let clipped = relu_theta_constraints(&tab, 0, 1, 2, theta).unwrap();
    let gadget_aux = |pre: f64| (theta - pre).max(0.0);
    let clip = |pre: f64| pre.max(0.0).min(theta);
    for _ in 0..10_000 {
        let pre: f64 = rng.gen_range(-3.0..3.0);
        let point = [pre, clip(pre), gadget_aux(pre)];
        for c in &clipped {
            assert!(c.violation(&point) <= 1e-12);
        }
    }
    for _ in 0..10_000 {
        let pre: f64 = rng.gen_range(-3.0..3.0);
        let offset: f64 = rng.gen_range(1e-3..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let point = [pre, clip(pre) + offset, gadget_aux(pre)];
        let worst = clipped.iter().map(|c| c.violation(&point)).fold(0.0f64, f64::max);
        assert!(worst >= 1e-8, "off-graph clipped point accepted: pre={pre} offset={offset}");
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "took {elapsed:.1}s");
    pass(&format!("criterion 1: encoding exactness ({elapsed:.2}s)"));
}

/// Criterion 2: attack <= exact enumeration <= SDP + 1e-5 on 50 random
/// 2-8-1 networks under the l_inf ball, in under 10 minutes.
#[test]
fn criterion_2_sandwich() {
    let start = std::time::Instant::now();
    let mut rng = rng(202);
    let cfg = SolverConfig { tol_primal: 1e-9, tol_dual: 1e-9, tol_gap: 1e-9, ..Default::default() };
    for trial in 0..50 {
        let task = two_layer_task(&mut rng, 2, 8);
        let center = random_vec(&mut rng, 2, 1.0);
        let eps = 0.1;
        let exact = exact_local_linf(&task, &center, eps).unwrap();
        let spec = PerturbationSpec::local(NormKind::Inf, eps, center.clone()).unwrap();
        let attack = pgd_attack(&task, &spec, &PgdConfig::default()).unwrap();
        let built = build_local_robustness_qp(&task, &spec, ReluEncoding::Exact).unwrap();
        let (sdp_value, _, _) = solve_value(&built.program, &cfg);
        assert!(
            attack.best_margin <= exact.optimum + 1e-8,
            "trial {trial}: attack {} > exact {}",
            attack.best_margin,
            exact.optimum
        );
        assert!(
            exact.optimum <= sdp_value + 1e-5,
            "trial {trial}: exact {} > sdp {}",
            exact.optimum,
            sdp_value
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "took {elapsed:.1}s");
    pass(&format!("criterion 2: sandwich on 50 random nets ({elapsed:.1}s)"));
}

/// Criterion 3: FGL approximation ratios on 100 random two-layer nets
/// (6 inputs, 10 hidden): sdp/exact within [1 - 1e-6, 1.2534] for l2 and
/// [1 - 1e-6, 1.783] for l_inf, in under 15 minutes.
#[test]
fn criterion_3_fgl_approximation_ratio() {
    let start = std::time::Instant::now();
    let mut rng = rng(303);
    let cfg = SolverConfig { tol_primal: 1e-9, tol_dual: 1e-9, tol_gap: 1e-9, ..Default::default() };
    for trial in 0..100 {
        let task = two_layer_task(&mut rng, 6, 10);
        for (norm, hi) in [(NormKind::Two, 1.2534), (NormKind::Inf, 1.783)] {
            let exact =
                exact_fgl_two_layer(&task.objective.weights, &task.chain.layers[0].weights, norm)
                    .unwrap();
            let built = build_fgl_qp(&task, norm).unwrap();
            let (sdp_value, _, _) = solve_value(&built.program, &cfg);
            let ratio = sdp_value / exact.optimum;
            assert!(
                ratio >= 1.0 - 1e-6 && ratio <= hi,
                "trial {trial} norm {norm}: ratio {ratio} (sdp {sdp_value}, exact {})",
                exact.optimum
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 900.0, "took {elapsed:.1}s");
    pass(&format!("criterion 3: fgl approximation ratios ({elapsed:.1}s)"));
}

/// Criterion 4: the eigenvalue route agrees with direct SDP solves of the
/// diagonal-constrained program on 20 random symmetric 10x10 matrices, and
/// reproduces the signature example, in under 2 minutes.
#[test]
fn criterion_4_eigenvalue_route() {
    let start = std::time::Instant::now();
    let mut rng = rng(404);
    let cfg = SolverConfig::tight();
    for trial in 0..20 {
        let n = 10;
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-1.0..1.0);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        let iters = 5000;
        let (eigen_value, _) =
            eigen_fgl_bound(&m, iters, StepSchedule::for_matrix_iters(&m, iters)).unwrap();
        let sdp = unit_diagonal_sdp(&m).unwrap();
        let sol = solve_sdp(&sdp, &cfg).unwrap();
        let sdp_value = sdp.reported_value(sol.primal_obj);
        assert!(
            (eigen_value - sdp_value).abs() <= 1e-3 * (1.0 + sdp_value.abs()),
            "trial {trial}: eigen {eigen_value} vs sdp {sdp_value}"
        );
    }
    // Signature example: the eigen bound reaches zero while the comparison
    // bound stays clearly positive.
    let sign = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
    let (value, _) = eigen_fgl_bound(&sign, 2000, StepSchedule::for_matrix(&sign)).unwrap();
    assert!(value.abs() <= 1e-6, "signature example value {value}");
    let comparison = ptdiag_bound(&sign, 2000, StepSchedule::for_matrix(&sign)).unwrap();
    assert!(comparison > 0.1, "comparison bound {comparison}");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "took {elapsed:.1}s");
    pass(&format!("criterion 4: eigenvalue route ({elapsed:.1}s)"));
}

fn fixture(name: &str) -> Network {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    symcert::model::load_network(&std::fs::read(path).unwrap()).unwrap()
}

/// Criterion 5: at radius zero the local-robustness SDP value equals the
/// concrete margin within 1e-5 and the solution is rank one, on every
/// fixture network and input, in under a minute.
#[test]
fn criterion_5_point_ball_tightness() {
    let start = std::time::Instant::now();
    let cfg = SolverConfig::tight();
    let mut checked = 0;

    let mut check = |task: &MarginTask, center: Vec<f64>, norm: NormKind| {
        let spec = PerturbationSpec::local(norm, 0.0, center.clone()).unwrap();
        let built = build_local_robustness_qp(task, &spec, ReluEncoding::Exact).unwrap();
        let (value, _, rank1) = solve_value(&built.program, &cfg);
        let margin = task.margin_at(&center).unwrap();
        assert!(
            (value - margin).abs() <= 1e-5,
            "sdp {value} vs margin {margin} (norm {norm})"
        );
        assert!(rank1 <= 1e-5, "rank-1 gap {rank1}");
        checked += 1;
    };

    let cls = fixture("classify_2_4_3.json");
    for center in [vec![0.6, 0.4], vec![-0.3, 0.8], vec![0.1, -0.7]] {
        let logits = symcert::model::forward(&cls, &center).unwrap();
        let predicted =
            (0..logits.len()).max_by(|&a, &b| logits[a].total_cmp(&logits[b])).unwrap();
        for competitor in (0..logits.len()).filter(|&k| k != predicted) {
            let task = MarginTask::classification(&cls, predicted, competitor).unwrap();
            check(&task, center.clone(), NormKind::Two);
            check(&task, center.clone(), NormKind::Inf);
        }
    }

    let small = fixture("small_2_8_1.json");
    let task = MarginTask::scalar(&small).unwrap();
    check(&task, vec![0.25, -0.4], NormKind::Two);
    check(&task, vec![0.25, -0.4], NormKind::Inf);

    let clipped = fixture("theta_2_4_1.json");
    let task = MarginTask::scalar(&clipped).unwrap();
    for center in [vec![0.3, -0.6], vec![1.2, 0.8]] {
        check(&task, center.clone(), NormKind::Two);
        check(&task, center, NormKind::Inf);
    }

    let metric = fixture("metric_2_6_2.json");
    let rep = symcert::model::forward(&metric, &[0.5, -0.2]).unwrap();
    let head = metric.metric_head.as_ref().unwrap();
    let predicted = symcert::model::closest_anchor(head, &rep);
    for other in (0..head.anchors.len()).filter(|&k| k != predicted) {
        let task = MarginTask::metric(&metric, predicted, other).unwrap();
        check(&task, vec![0.5, -0.2], NormKind::Two);
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed:.1}s");
    pass(&format!(
        "criterion 5: point-ball tightness on {checked} fixture cases ({elapsed:.1}s)"
    ));
}

/// Criterion 6: primal and dual Shor values agree on 20 random strictly
/// feasible programs, and the single-edge MAXCUT value is 4, in under 2
/// minutes.
#[test]
fn criterion_6_primal_dual_agreement() {
    let start = std::time::Instant::now();
    let mut rng = rng(606);
    let cfg = SolverConfig { tol_primal: 1e-9, tol_dual: 1e-9, tol_gap: 1e-9, ..Default::default() };
    for trial in 0..20 {
        // min x'Qx + 2q'x + c over an intersection of balls all containing
        // the origin strictly: strictly feasible, compact.
        let n = rng.gen_range(3..=10usize);
        let mut tab = SymbolTable::new();
        tab.add_group("x", n);
        let mut objective = symcert::qp::FormBuilder::new();
        for i in 0..n {
            for j in i..n {
                objective.monomial(i, j, rng.gen_range(-1.0..1.0));
            }
            objective.linear(i, rng.gen_range(-1.0..1.0));
        }
        objective.constant(rng.gen_range(-1.0..1.0));
        let mut constraints = Vec::new();
        for _ in 0..5 {
            let center = random_vec(&mut rng, n, 0.5);
            let radius: f64 = symcert::linalg::norm2(&center) + rng.gen_range(0.5..1.5);
            let mut ball = symcert::qp::FormBuilder::new();
            for (i, c) in center.iter().enumerate() {
                ball.monomial(i, i, 1.0).linear(i, -2.0 * c).constant(c * c);
            }
            ball.constant(-radius * radius);
            constraints.push(ball.leq0());
        }
        let qp = symcert::qp::QuadraticProgram {
            direction: symcert::qp::Direction::Minimize,
            objective: objective.build(),
            constraints,
            symbols: tab,
        };
        let primal = shor_primal(&qp);
        let dual = shor_dual(&qp);
        let ps = solve_sdp(&primal, &cfg).unwrap();
        let ds = solve_sdp(&dual, &cfg).unwrap();
        let pv = primal.reported_value(ps.primal_obj);
        let dv = dual.reported_value(ds.primal_obj);
        assert!(
            (pv - dv).abs() <= 1e-5 * (1.0 + pv.abs()),
            "trial {trial}: primal {pv} vs dual {dv}"
        );
    }

    // MAXCUT on a single edge.
    let mut tab = SymbolTable::new();
    tab.add_group("x", 2);
    let mut obj = symcert::qp::FormBuilder::new();
    obj.monomial(0, 0, 1.0).monomial(1, 1, 1.0).monomial(0, 1, -2.0);
    let mut c0 = symcert::qp::FormBuilder::new();
    c0.monomial(0, 0, 1.0).constant(-1.0);
    let mut c1 = symcert::qp::FormBuilder::new();
    c1.monomial(1, 1, 1.0).constant(-1.0);
    let qp = symcert::qp::QuadraticProgram {
        direction: symcert::qp::Direction::Maximize,
        objective: obj.build(),
        constraints: vec![c0.eq0(), c1.eq0()],
        symbols: tab,
    };
    let sdp = shor_primal(&qp);
    let sol = solve_sdp(&sdp, &cfg).unwrap();
    let value = sdp.reported_value(sol.primal_obj);
    assert!((value - 4.0).abs() <= 1e-5, "maxcut value {value}");

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "took {elapsed:.1}s");
    pass(&format!("criterion 6: primal/dual agreement ({elapsed:.1}s)"));
}

/// Criterion 7: the equilibrium Lipschitz SDP upper-bounds sampled
/// difference quotients on 10 random contractive models, in under 5 minutes.
#[test]
fn criterion_7_equilibrium_fgl() {
    let start = std::time::Instant::now();
    let mut rng = rng(707);
    let cfg = SolverConfig { tol_primal: 1e-9, tol_dual: 1e-9, tol_gap: 1e-9, ..Default::default() };
    for trial in 0..10 {
        let (m, n) = (2, 3);
        let mut feedback = random_matrix(&mut rng, n, n, 1.0);
        let norm = symcert::linalg::spectral_norm_power(&feedback, 500, 1e-12);
        feedback.scale(rng.gen_range(0.3..0.7) / norm.max(1e-9));
        let input_map = random_matrix(&mut rng, n, m, 1.0);
        let bias = random_vec(&mut rng, n, 0.3);
        let head = random_vec(&mut rng, n, 1.0);
        let offset = rng.gen_range(-0.3..0.3);
        let net = Network {
            blocks: vec![
                Block::Equilibrium {
                    weights: feedback.clone(),
                    input_map: input_map.clone(),
                    bias: bias.clone(),
                    kind: ActivationKind::Relu,
                },
                Block::Affine {
                    weights: Mat::from_rows(&[head.clone()]).unwrap(),
                    bias: vec![offset],
                },
            ],
            input_dim: m,
            output_dim: 1,
            metric_head: None,
        };
        let task = symcert::model::EquilibriumTask::from_network(&net).unwrap();
        let built = symcert::qp::build_deq_fgl_qp(&task, NormKind::Two).unwrap();
        let (sdp_value, _, _) = solve_value(&built.program, &cfg);

        let output = |x: &[f64]| -> f64 {
            let z = symcert::model::deq_forward(&net, x, 1e-12, 100_000).unwrap();
            symcert::linalg::dot(&head, &z) + offset
        };
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let a = random_vec(&mut rng, m, 1.5);
            let b = random_vec(&mut rng, m, 1.5);
            let dist = NormKind::Two.norm(&symcert::linalg::sub(&a, &b));
            if dist < 1e-9 {
                continue;
            }
            worst = worst.max((output(&a) - output(&b)).abs() / dist);
        }
        assert!(
            sdp_value >= worst - 1e-6,
            "trial {trial}: sdp {sdp_value} below sampled quotient {worst}"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "took {elapsed:.1}s");
    pass(&format!("criterion 7: equilibrium lipschitz bound ({elapsed:.1}s)"));
}

/// Criterion 8: the metric-task program equals the feed-forward margin
/// program with the anchor-difference objective, and so do the solved
/// values, in under a minute.
#[test]
fn criterion_8_metric_equivalence() {
    let start = std::time::Instant::now();
    let net = fixture("metric_2_6_2.json");
    let head = net.metric_head.as_ref().unwrap().clone();
    let spec = PerturbationSpec::local(NormKind::Two, 0.15, vec![0.5, -0.2]).unwrap();
    let metric_qp =
        symcert::qp::build_metric_qp(&net, 0, 1, &spec, ReluEncoding::Exact).unwrap();

    // Independent feed-forward route: append a classification head whose
    // rows are the two anchors, so the class margin is exactly the anchor
    // difference with zero offset.
    let mut ff = net.clone();
    ff.metric_head = None;
    ff.blocks.push(Block::Affine {
        weights: Mat::from_rows(&[head.anchors[0].clone(), head.anchors[1].clone()]).unwrap(),
        bias: vec![0.0, 0.0],
    });
    ff.output_dim = 2;
    let task = MarginTask::classification(&ff, 0, 1).unwrap();
    let expected = symcert::model::metric_margin(&head, 0, 1).unwrap();
    // The class-margin weights in representation space match anchors'
    // difference before folding; after folding both routes coincide.
    let direct = build_local_robustness_qp(&task, &spec, ReluEncoding::Exact).unwrap();
    assert_eq!(metric_qp.program, direct.program);
    let _ = expected;

    // Identical solved values (deterministic solver, identical programs).
    let cfg = SolverConfig::default();
    let (v1, _, _) = solve_value(&metric_qp.program, &cfg);
    let (v2, _, _) = solve_value(&direct.program, &cfg);
    assert!((v1 - v2).abs() <= 1e-8, "{v1} vs {v2}");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed:.1}s");
    pass(&format!("criterion 8: metric equivalence ({elapsed:.1}s)"));
}

/// Criterion 9: in aggregated reports the certified count never exceeds the
/// attack-robust count.
#[test]
fn criterion_9_report_ordering() {
    let start = std::time::Instant::now();
    let net = fixture("classify_2_4_3.json");
    let mut summaries: Vec<InputSummary> = Vec::new();
    for eps in [0.02, 0.1, 0.5] {
        for (name, x) in [("x0", vec![0.6, 0.4]), ("x1", vec![-0.3, 0.8]), ("x2", vec![0.1, -0.7])]
        {
            let logits = symcert::model::forward(&net, &x).unwrap();
            let predicted =
                (0..logits.len()).max_by(|&a, &b| logits[a].total_cmp(&logits[b])).unwrap();
            let mut cfg = symcert::driver::CertifyConfig::new(eps, NormKind::Two);
            cfg.jobs = 1;
            cfg.solver.tol_primal = 1e-8;
            cfg.solver.tol_dual = 1e-8;
            cfg.solver.tol_gap = 1e-8;
            let input = symcert::driver::InputFile { x, label: Some(predicted) };
            let (summary, outcomes) =
                symcert::driver::certify_input(&net, "classify_2_4_3", name, &input, &cfg)
                    .unwrap();
            // Soundness: no record is simultaneously certified by the
            // relaxation and falsified by the attack.
            for o in &outcomes {
                assert!(
                    !(o.sdp_value < -1e-6 && o.lower_bound.unwrap_or(f64::NEG_INFINITY) > 0.0),
                    "record certifies and falsifies at once"
                );
                if summary.verdict == Verdict::Certified {
                    assert!(o.lower_bound.unwrap() <= 0.0);
                }
            }
            summaries.push(summary);
        }
    }
    let rows = aggregate(&summaries);
    assert!(!rows.is_empty());
    for row in &rows {
        assert!(
            row.certified <= row.pgd,
            "certified {} exceeds attack-robust {} at eps {}",
            row.certified,
            row.pgd,
            row.eps
        );
        assert!(row.accuracy <= row.inputs && row.pgd <= row.accuracy);
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass(&format!("criterion 9: report ordering over {} rows ({elapsed:.1}s)", rows.len()));
}
