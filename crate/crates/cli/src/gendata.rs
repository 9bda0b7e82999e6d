use log::info;
use utep_core::trainer::load_pair;

use crate::args::GenDataArgs;
use crate::{load_config, output_dir, write_file, CliError};

pub const DATASET_FILE: &str = "dataset.csv";

pub fn cmd_gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let pair = load_pair(&cfg).map_err(CliError::Train)?;
    let path = output_dir(args.out.as_deref(), &cfg).join(DATASET_FILE);
    write_file(&path, &pair.to_csv())?;
    info!(
        "wrote {} source and {} target samples to {}",
        pair.source.len(),
        pair.target.len(),
        path.display()
    );
    Ok(())
}
