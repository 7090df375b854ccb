//! Runs the frozen six-session benchmark in both modes and prints the
//! session-0 dev Hits@10 after every session.
//!
//! cargo run --release --example benchmark

use std::time::Instant;

use kgcl::eval::Metric;
use kgcl::longrun::{benchmark_sessions, benchmark_train_config, final_session_overlap};
use kgcl::train::{run_curriculum, Mode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (vocab, sessions) = benchmark_sessions()?;
    let sizes: Vec<_> = sessions.iter().map(|s| (s.train.len(), s.dev.len(), s.test.len())).collect();
    println!("sessions (train, dev, test): {sizes:?}; final overlap {:.3}", final_session_overlap(&sessions));
    let config = benchmark_train_config();
    let mut columns = Vec::new();
    for mode in [Mode::Classical, Mode::Continual] {
        let start = Instant::now();
        let out = run_curriculum(&sessions, &vocab, mode, &config)?;
        let col = out.matrix.column(0, Metric::HitsAt10);
        let fmt: Vec<String> = col.iter().map(|v| format!("{v:.3}")).collect();
        println!("{:<9} {} ({:.1?})", mode.as_str(), fmt.join(" "), start.elapsed());
        columns.push(col);
    }
    let (cl, co) = (&columns[0], &columns[1]);
    let peak = co.iter().copied().fold(f64::MIN, f64::max);
    println!("classical drop {:.3}; continual gap to peak {:.3}; continual lead {:.3}", cl[0] - cl[4], peak - co[5], co[5] - cl[5]);
    Ok(())
}
