//! Seeded synthetic datasets, image preprocessing and dataset persistence.

mod images;
pub mod persist;
mod preprocess;
mod tabular;

pub use images::{
    damage_image, gen_images, DamageKind, DamagedImage, ImageCounts, ImageDataset, DAMAGE_FRACTION,
};
pub use persist::{
    encode_pgm, load_images, load_tabular, normalize_minmax, read_blob, save_images, save_tabular,
    write_blob, write_pgm, Manifest, MANIFEST_FILE,
};
pub use preprocess::{augment, augment_with, gaussian_kernel, preprocess_image, GAUSSIAN_SIGMA};
pub use tabular::{gen_tabular, SplitSizes, TabularDataset, LATENT_DIM, TABULAR_FEATURES};
