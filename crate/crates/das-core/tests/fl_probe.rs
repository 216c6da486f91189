use das_core::fedavg::FedEvent;
use das_core::harness::{run_case, Case, ExperimentSpec, RunConfig, Strategy};

#[test]
#[ignore]
fn probe() {
    let mut run = RunConfig::default();
    run.seeds = vec![1, 2];
    run.train.learning_rate = 1e-3;
    run.fed.rounds = 6;
    let spec = ExperimentSpec::reference(Case::DifferentAreas, Strategy::Federated, run).unwrap();
    let t = std::time::Instant::now();
    let rep = run_case(&spec).unwrap();
    for c in &rep.cells {
        println!("FL {} -> {} seed{}: {:.3}", c.training, c.test, c.seed, c.accuracy);
    }
    // Sawtooth: mean jump at aggregation vs node models' last pre-agg epoch,
    // on cross-node splits.
    let mut jumps = Vec::new();
    for seed in [1u64, 2] {
        let rows: Vec<_> = rep.fed_rows.iter().filter(|r| r.seed == seed).collect();
        for round in 0..6usize {
            let last_epoch = rows
                .iter()
                .filter(|r| r.row.round == round && r.row.event == FedEvent::LocalEpoch)
                .map(|r| r.row.epoch)
                .max()
                .unwrap();
            let pre: Vec<f64> = rows
                .iter()
                .filter(|r| {
                    r.row.round == round
                        && r.row.epoch == last_epoch
                        && r.row.event == FedEvent::LocalEpoch
                        && r.row.model != r.row.split
                })
                .map(|r| r.row.accuracy)
                .collect();
            let post: Vec<f64> = rows
                .iter()
                .filter(|r| r.row.round == round && r.row.event == FedEvent::Aggregation)
                .map(|r| r.row.accuracy)
                .collect();
            let pre_mean = pre.iter().sum::<f64>() / pre.len() as f64;
            let post_mean = post.iter().sum::<f64>() / post.len() as f64;
            println!("seed{seed} round{round}: pre {:.3} post {:.3} jump {:+.3}", pre_mean, post_mean, post_mean - pre_mean);
            jumps.push(post_mean - pre_mean);
        }
    }
    println!("mean jump: {:+.4}", jumps.iter().sum::<f64>() / jumps.len() as f64);
    println!("elapsed {:.1}s", t.elapsed().as_secs_f64());
}
