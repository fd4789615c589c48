//! File formats, text embedding and the procedural corpus.

pub mod buckets;
pub mod bvh;
pub mod corpus;
pub mod embed;
pub mod mseq;
pub mod synth;

pub use buckets::{read_buckets, write_buckets, BucketIndex, BucketSidecar};
pub use bvh::{export_bvh, parse_bvh, Bvh};
pub use corpus::{corpus_digest, read_corpus, write_corpus, Clip, ClipKind, CorpusEntry, CorpusIndex};
pub use embed::{pseudo_embed, tokens};
pub use mseq::{read_mseq, write_mseq, MseqFile, SkeletonRecord, MSEQ_VERSION};
pub use synth::{synth_corpus, SynthConfig};
