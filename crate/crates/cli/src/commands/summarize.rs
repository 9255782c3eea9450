//! `summarize`: replicate table -> performance summary CSV.

use std::io::BufWriter;
use std::path::Path;

use popadjust::metrics::{summarize, write_summary_csv};
use popadjust::simengine::persist::read_replicates_csv;

use crate::{CliError, CliResult, SummarizeArgs};

pub fn execute(args: SummarizeArgs) -> CliResult<()> {
    let input = Path::new(&args.replicates);
    let rows = read_replicates_csv(input)?;
    let summary = summarize(&rows, args.truth)?;

    let out_path = match &args.out {
        Some(p) => Path::new(p).to_path_buf(),
        None => input.with_file_name("summary.csv"),
    };
    let mut writer = BufWriter::new(
        std::fs::File::create(&out_path)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", out_path.display())))?,
    );
    write_summary_csv(&mut writer, &summary)?;
    println!("summary: {}", out_path.display());
    Ok(())
}
