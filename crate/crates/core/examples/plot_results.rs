//! Render accuracy-vs-rate charts from result CSVs.
//!
//! cargo run --release --example plot_results -- OUT_DIR CSV...
//!
//! Without arguments, charts a small synthetic result set.

use taskprune::harness::{render_plots, write_csv, ResultRow};

fn demo_rows() -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for (method, slope) in [("AP", 0.3), ("FPP", 0.6), ("RP", 0.9)] {
        for i in 0..=10 {
            let p = i as f64 / 10.0;
            rows.push(ResultRow {
                kind: "module-specific".into(),
                method: method.into(),
                task: "polarity".into(),
                enc_rate: 0.0,
                dec_rate: p,
                group: "decoder".into(),
                seed: None,
                accuracy: (1.0 - slope * p * p).max(0.0),
                kept_fraction: 1.0 - 0.4 * p,
            });
        }
    }
    rows
}

fn main() -> taskprune::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (out, csvs) = if args.len() >= 2 {
        (args[0].clone().into(), args[1..].iter().map(Into::into).collect())
    } else {
        let dir = std::env::temp_dir().join("taskprune-plot-demo");
        std::fs::create_dir_all(&dir).map_err(|source| taskprune::Error::Io { path: dir.clone(), source })?;
        let csv = dir.join("module-specific.csv");
        write_csv(&csv, &demo_rows())?;
        (dir.join("plots"), vec![csv])
    };
    let csvs: Vec<std::path::PathBuf> = csvs;
    for path in render_plots(&csvs, &out)? {
        println!("{}", path.display());
    }
    Ok(())
}
