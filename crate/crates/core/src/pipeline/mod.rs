//! Dataset manifests, seeded splits, batch scoring and comparison reports.

mod batch;
mod manifest;
mod report;
mod split;

pub use batch::{
    read_id_list, read_labeled_scores, read_scores_csv, score_batch, score_paths, write_scores_csv, BatchOptions,
    ImageRole, Metric, ScoreRow, SCORE_HEADER,
};
pub use manifest::{
    build_manifest, DatasetManifest, ManifestBuild, ManifestEntry, MANIFEST_FORMAT, MANIFEST_VERSION,
    MAX_RETAINED_GRADE,
};
pub use report::{compare_report, MetricScores, PairedRow, QualityTable, SetRow};
pub use split::{split_dataset, DatasetSplit, SplitSpec};
