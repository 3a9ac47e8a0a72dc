//! Compares single-pass and layered error rates over a sweep of the
//! per-layer error probability and prints the CSV.

use layercot::sim::{self, SimConfig, SweepParam};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = SimConfig {
        num_tasks: 100_000,
        num_layers: 5,
        detection_prob: 0.9,
        max_refinements: 2,
        ..SimConfig::default()
    };
    let rows = sim::sweep(&base, SweepParam::ErrorProb, &[0.05, 0.1, 0.2, 0.3, 0.4])?;
    sim::write_csv(&rows, std::io::stdout().lock())?;

    println!();
    for row in &rows {
        let a = &row.analytic;
        println!(
            "p={:<5} vanilla wrong {:.3}  layered wrong {:.3}  stopped {:.3}  calls/task {:.2}",
            row.value, a.vanilla_error_rate, a.layered_error_rate, a.exhausted_rate, a.mean_backend_calls
        );
    }
    Ok(())
}
