use deskrl::bigram::{ActionSpace, BigramPolicy, InitialDistribution};
use deskrl::curriculum::{Environment, PkEnvironment};
use deskrl::seeding;
use deskrl::update::UpdateRule;

fn probe(policy: &BigramPolicy, sp: ActionSpace) -> (f64, f64, f64, f64) {
    let k = sp.k_standard;
    let mut l_astar = 0.0; let mut l_stop = 0.0; let mut p_astar = 0.0; let mut p_stop = 0.0;
    for s in 0..k {
        let row = policy.row(s);
        l_astar += row[sp.a_star]; l_stop += row[sp.stop()];
        let pr = policy.action_probs(s).unwrap();
        p_astar += pr[sp.a_star]; p_stop += pr[sp.stop()];
    }
    (l_astar / k as f64, l_stop / k as f64, p_astar / k as f64, p_stop / k as f64)
}

fn main() {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000_000);
    let k: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(100);
    let budget: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(100);
    let sp = ActionSpace::new(k, 0).unwrap();
    let env = PkEnvironment;
    let rule = UpdateRule::default();
    let policy0 = BigramPolicy::init(5, sp).unwrap();
    let mut policy = policy0.clone();
    let mut rng = seeding::stream_rng(12345, 0);
    let t0 = std::time::Instant::now();
    let _pi0 = InitialDistribution::uniform_excluding_optimal(sp);
    let interval = steps / 40;
    for step in 0..=steps {
        if step % interval == 0 {
            let (la, ls, pa, ps) = probe(&policy, sp);
            let est = env.evaluate(&policy, &sp, budget, 512, step as u64).unwrap();
            println!("step {:>9} ({:>6.0}s) reward {:.3} logit_a* {:+.3} logit_stop {:+.3} pi_a* {:.6} pi_stop {:.5}",
                step, t0.elapsed().as_secs_f64(), est.mean, la, ls, pa, ps);
        }
        if step < steps {
            env.train_step(&mut policy, &sp, budget, &rule, &mut rng).unwrap();
        }
    }
}
