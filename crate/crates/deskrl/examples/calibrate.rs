use deskrl::bigram::{ActionSpace, BigramPolicy};
use deskrl::curriculum::{baseline_fixed, PkEnvironment, RunOptions};
use deskrl::update::UpdateRule;

fn main() {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40_000);
    let mask: bool = std::env::args().nth(2).map(|s| s == "mask").unwrap_or(false);
    let nseeds: u64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let sp = ActionSpace::new(100, 0).unwrap();
    let env = PkEnvironment;
    let rule = UpdateRule { mask_negative: mask, ..UpdateRule::default() };
    let t0 = std::time::Instant::now();
    for seed in 0..nseeds {
        let policy = BigramPolicy::init(seed * 31 + 5, sp).unwrap();
        let opts = RunOptions { seed, probe_rollouts: 512, eval_rollouts: 256, checkpoint_interval: steps / 20 };
        let (_p, series) = baseline_fixed(&env, &policy, &sp, 100, steps, &rule, &opts).unwrap();
        println!("seed {seed} ({:.1}s):", t0.elapsed().as_secs_f64());
        for row in &series.rows {
            println!("  step {:>8} reward {:.3} len {:>6.1} p_stop {:.4} H {:.3} kl {:.3}",
                row.step, row.reward, row.length, row.p_stop.unwrap(), row.entropy.unwrap(), row.kl.unwrap());
        }
    }
}
