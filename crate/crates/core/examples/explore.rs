//! Runs a reduced grid and prints the partial dependence tables.
//!
//! `cargo run --release --example explore -- 200`

use std::time::Instant;

use nk_groups::analysis::{figure_tables, CellAccumulator, FigureKind};
use nk_groups::engine::run_scenario;
use nk_groups::experiment::{expand_grid, ExperimentSpec};

fn main() -> nk_groups::Result<()> {
    let reps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let spec = ExperimentSpec {
        replications: reps,
        ..ExperimentSpec::default()
    };
    let started = Instant::now();
    let mut acc = CellAccumulator::new();
    for config in expand_grid(&spec)? {
        acc.extend(&run_scenario(&config, 8)?);
    }
    let cells = acc.finish()?;
    eprintln!("{} cells in {:.1}s", cells.len(), started.elapsed().as_secs_f64());
    for kind in FigureKind::ALL.into_iter().take(3) {
        for (name, table) in figure_tables(&cells, kind)? {
            println!("== {name}");
            for row in &table.rows {
                let levels: Vec<String> = row.levels.iter().map(|l| l.to_string()).collect();
                println!("{:<28} {:.4}", levels.join(" "), row.value);
            }
        }
    }
    Ok(())
}
