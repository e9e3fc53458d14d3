use std::path::PathBuf;

use clap::Args;

use relage_core::data::{assign_folds, generate_dataset, save_dataset};
use relage_core::Result;

use crate::config::{output_dir, RunConfig};

#[derive(Args)]
pub struct GenerateArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for manifest.csv and images/.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the subject count.
    #[arg(long)]
    pub subjects: Option<usize>,
}

pub fn run(args: GenerateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.subjects {
        cfg.generator.n_subjects = n;
    }
    let cfg = cfg.resolve()?;
    let out = output_dir(args.output, &cfg, "dataset")?;
    std::fs::create_dir_all(&out)?;

    let mut subjects = generate_dataset(&cfg.generator)?;
    assign_folds(&mut subjects, cfg.cv.k, cfg.seed)?;
    let manifest = save_dataset(&out, &subjects)?;
    cfg.write_resolved(&out)?;
    println!(
        "generated {} subjects ({} folds) -> {}",
        subjects.len(),
        cfg.cv.k,
        manifest.display()
    );
    Ok(())
}
