use feedback_miner_core::hyperopt::{
    synthetic_objective, tune, HyperoptError, SearchSpace, TpeConfig, Trial,
};
use feedback_miner_core::rng::rng_for;

const TRIALS: usize = 30;
const NOISE: f64 = 0.01;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn run(seed: u64, n_startup: usize) -> Trial {
    let cfg = TpeConfig {
        seed,
        n_startup,
        ..Default::default()
    };
    tune(
        Vec::new(),
        &SearchSpace::default(),
        TRIALS,
        &cfg,
        |lr, i| {
            let y = synthetic_objective(lr, NOISE, &mut rng_for(seed, &[0xAB, i as u64]));
            Ok::<_, HyperoptError>(Trial::new(lr, vec![y], seed))
        },
        |_| Ok(()),
    )
    .unwrap()
    .best
}

#[test]
fn tpe_finds_the_optimum_and_beats_random_search() {
    let tpe: Vec<Trial> = (0..20).map(|s| run(s, 10)).collect();
    // Random search is TPE stuck in its startup phase.
    let random: Vec<Trial> = (0..20).map(|s| run(s, TRIALS)).collect();
    let best_log_lr = median(tpe.iter().map(|t| t.lr.log10()).collect());
    let tpe_obj = median(tpe.iter().map(|t| t.objective).collect());
    let rnd_obj = median(random.iter().map(|t| t.objective).collect());
    println!(
        "median best log10 lr {best_log_lr:.3}, objective tpe {tpe_obj:.4} random {rnd_obj:.4}"
    );
    assert!((-5.5..=-4.5).contains(&best_log_lr));
    assert!(tpe_obj >= rnd_obj);
}
