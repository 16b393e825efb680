//! One hold-out split through every pipeline stage.
//!
//! `cargo run --release --example ablate_once -- data.csv [epochs] [seed]`

use hybridae::dataset::{load_table, stratified_holdout_split, LabelColumn};
use hybridae::hessae::HessaeConfig;
use hybridae::pipeline::{run_stages, PipelineConfig, Stage};

fn main() -> hybridae::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let data = load_table(&args[1], &LabelColumn::Last)?;
    let epochs: usize = args.get(2).map_or(1000, |s| s.parse().unwrap());
    let seed: u64 = args.get(3).map_or(0, |s| s.parse().unwrap());
    let hessae = match data.n_features() {
        16 => HessaeConfig::pen_digits(),
        36 => HessaeConfig::statlog(),
        _ => HessaeConfig::small_sample(),
    };
    let mut cfg = PipelineConfig::with_hessae(hessae.with_epochs(epochs));
    if let Ok(r) = std::env::var("OUTPUT_RATIO") {
        cfg.wlppd.output_ratio = r.parse().unwrap();
    }
    let (train, test) = stratified_holdout_split(&data, 1.0 / 3.0, seed)?;
    let t = std::time::Instant::now();
    let out = run_stages(&train, &test, &cfg, &Stage::ALL, seed)?;
    println!("hessae softmax {:.4} ({:.1}s)", out.hessae_accuracy.unwrap(), out.hessae_seconds);
    if let Some(sel) = &out.selection {
        println!("lasso keeps {:?} kappa {:.4} scores {:?}", sel.mask.indices, sel.kappa, out.kappa_scores);
    }
    for s in &out.stages {
        println!("{:<16} {:.4}  d={:<3} {:.1}s", s.stage.name(), s.accuracy, s.n_features, s.seconds);
    }
    println!("total {:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}
