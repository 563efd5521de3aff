//! Persistence: MRC stacks, block-matrix container, JSON report and
//! dataset sidecar, CSV metrics and PNG previews. All integers are
//! little-endian; byte layouts are described in `docs/formats.md`.

pub mod blockfile;
pub mod dataset;
pub mod mrc;
pub mod report;
pub mod table;

pub use blockfile::{read_block_matrix, write_block_matrix};
pub use dataset::{read_ctf_file, read_dataset, write_ctf_file, write_dataset, CtfRecord};
pub use mrc::{read_mrc, write_mrc, MrcStack};
pub use report::{load_report, save_report};
pub use table::{write_metrics_csv, write_png_preview, MetricRow};
