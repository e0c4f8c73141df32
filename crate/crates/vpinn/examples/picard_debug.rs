// scratch diagnostic: tiny binary-test config probe
use vpinn::network::MlpState;
use vpinn::optimizer::LrSchedule;
use vpinn::problems::make_toy_problem;
use vpinn::train::{train, TrainOptions};
use vpinn::metrics::check_error_bounds;

fn main() {
    let mut p = make_toy_problem();
    p.n_time = 8;
    p.n_test = 4;
    p.n_int = 16;
    let mut net = MlpState::init(0, &[1, 8, 8]).unwrap();
    let opts = TrainOptions {
        iterations: 600,
        lr0: 1e-2,
        schedule: LrSchedule::Exponential { rate: 0.9, decay_steps: 1000.0 },
        quadrature_seed: 1,
        fixed_quadrature: false,
        lagged_coefficients: false,
        checkpoint_every: 300,
        metrics_every: 0,
        metric_points: 2048,
    };
    let outcome = train(&mut net, &p, &opts, |_| Ok(())).unwrap();
    let first = outcome.history[0].loss;
    let mut tail: Vec<f64> = outcome.history[540..].iter().map(|r| r.loss).collect();
    tail.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("first {first:.3e} tail-median {:.3e} ratio {:.1}", tail[tail.len()/2], first / tail[tail.len()/2]);
    for c in &outcome.checkpoints {
        let r = c.report.as_ref().unwrap();
        let chk = check_error_bounds(r, 1e-3).unwrap();
        println!("iter {}: rel_l2 {:.3} bound pass {} violations {}", c.iteration, r.rel_l2, chk.passed, chk.violations.len());
    }
}
