//! Dataset files, scripted demonstrations and splitting.

mod expert;
mod format;
mod split;

pub use expert::{
    corpus_plan, disturbance_schedule, expert_delta_theta, generate_corpus, margin_angle, scripted_expert_episode,
    scripted_expert_episode_with, write_corpus, CorpusConfig, ExpertConfig, Scenario, EXPERT_GAIN, GP_MARGIN,
};
pub use format::{
    dataset_to_string, fmt_sig9, parse_dataset, read_dataset, round_sig9, validate_episode, validate_file,
    write_dataset, DatasetHeader, DatasetKind, Episode, Frame, Label, DATASET_VERSION, FIELDS_PER_FRAME,
};
pub use split::{split_dataset, split_indices, MIN_SPLIT};
