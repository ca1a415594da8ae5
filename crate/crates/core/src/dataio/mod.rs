//! Frame logs, the synthetic replay generator, replay-level splits and
//! binary dataset shards.

mod framelog;
mod shard;
mod split;
mod synth;

pub use framelog::{format_frame, parse_frame_line, parse_frame_log, write_frame_log};
pub use shard::{build_samples, SHARD_MAGIC, SHARD_VERSION, read_shard, read_shard_from, write_shard, write_shard_to, DatasetSample};
pub use split::{partition_samples, split_by_replay, split_replay_ids, SplitSpec};
pub use synth::{clean_frames, generate_corpus, generate_synthetic_replay, SyntheticConfig};
