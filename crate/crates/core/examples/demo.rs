//! Small end-to-end run of the library API: generate data from the bundled
//! demonstration pair, fit the model online, and score the recovery.

use mgising::learner::{match_graph_columns, run_online, GraphInit, LearnerConfig};
use mgising::select::epoch_average_loglik;
use mgising::synth::{generate_dataset, plus_t_graphs, sinusoid_weights};
use mgising::{FilterSettings, Result};

fn main() -> Result<()> {
    let epoch_len = 500;
    let epochs = 10;
    let truth = plus_t_graphs();
    let schedule = sinusoid_weights(epoch_len, epochs, 0.5, 0.5, &[0.0, std::f64::consts::PI])?;
    let bundle = generate_dataset(&truth, &schedule, 7)?;
    println!(
        "generated {} bins over {} nodes",
        bundle.raster.len(),
        bundle.raster.node_count()
    );

    let settings = FilterSettings::new(1000.0);
    let learner = LearnerConfig {
        epsilon: 1e-3,
        mc_samples: 0,
        seed: 1,
        ..LearnerConfig::default()
    };
    let result = run_online(
        &bundle.raster,
        2,
        &settings.config_for(2)?,
        &learner,
        GraphInit::Seed(1),
    )?;

    let averages = epoch_average_loglik(&result.trace, epoch_len)?;
    println!(
        "epoch-average marginal loglik: first {:.4}, last {:.4}",
        averages[0],
        averages[averages.len() - 1]
    );
    for m in match_graph_columns(&result.final_graphs, &truth)? {
        println!(
            "learned column {} ~ true column {}: corr {:+.3}",
            m.learned + 1,
            m.reference + 1,
            m.correlation
        );
    }
    Ok(())
}
