//! Bags of patch embeddings: the `.bagemb` container, dataset manifests,
//! the synthetic bag generator and the reference pooling rules.

mod format;
mod manifest;
mod pooling;
mod synth;

pub use format::{
    decode, decode_header, encode, encoded_len, read_bagemb, read_header, write_bagemb, BagHeader,
    BagRecord, FormatError, FIXED_HEADER_LEN, MAGIC, VERSION,
};
pub use manifest::{Dataset, DatasetBag, Manifest, ManifestEntry, Split};
pub use pooling::{avgpool_predict, max_pool_predict};
pub use synth::{
    generate_bag, generate_bags, template_caption, GroundTruth, SyntheticBag, SyntheticSpec,
    CAPTION_WORDS,
};
