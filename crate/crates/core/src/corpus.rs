//! Synthetic chest X-ray corpus.
//!
//! Each case plants per-disease signal blobs at disease-specific patch
//! locations on a low noise background, with labels and a one-sentence-per-
//! finding template report that are consistent by construction. Everything is
//! derived from a single seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::metrics::{LabelVector, NUM_DISEASES};
use crate::roi::ImageTensor;

/// The 14 disease vocabulary used by labels, reports, and bank tags.
pub const DISEASES: [&str; NUM_DISEASES] = [
    "atelectasis",
    "cardiomegaly",
    "consolidation",
    "edema",
    "enlarged cardiomediastinum",
    "fracture",
    "lung lesion",
    "lung opacity",
    "pleural effusion",
    "pleural thickening",
    "pneumonia",
    "pneumothorax",
    "pulmonary fibrosis",
    "support devices",
];

const ZONE_ROWS: [&str; 4] = ["apical", "upper", "lower", "basal"];
const ZONE_COLS: [&str; 4] = ["left", "mid left", "mid right", "right"];

/// Anchor rows/cols on the 14x14 patch grid; each disease occupies the 2x2
/// patch block at `(ANCHORS[j / 4], ANCHORS[j % 4])`, which stays inside a
/// single named zone.
const ANCHORS: [usize; 4] = [1, 5, 9, 12];

pub const GRID: usize = 14;

/// Probability that any given disease is present in a case.
const DISEASE_PREVALENCE: f64 = 0.12;

const BACKGROUND_NOISE: f64 = 0.12;

/// Zone phrase for a patch index on the 14x14 grid, e.g. `lower mid right`.
pub fn zone_of_patch(patch_index: usize) -> String {
    let row = patch_index / GRID;
    let col = patch_index % GRID;
    let row_band = (row * 4 / GRID).min(3);
    let col_band = (col * 4 / GRID).min(3);
    format!("{} {}", ZONE_ROWS[row_band], ZONE_COLS[col_band])
}

/// The 2x2 block of patch indices carrying disease `j`'s signal.
pub fn disease_patches(disease_id: usize) -> [usize; 4] {
    let r = ANCHORS[disease_id / 4];
    let c = ANCHORS[disease_id % 4];
    [r * GRID + c, r * GRID + c + 1, (r + 1) * GRID + c, (r + 1) * GRID + c + 1]
}

/// Zone phrase the reports use for disease `j`.
pub fn disease_zone(disease_id: usize) -> String {
    zone_of_patch(disease_patches(disease_id)[0])
}

/// Canonical report sentence for disease `j`.
pub fn disease_sentence(disease_id: usize) -> String {
    format!(
        "{} is present in the {} region .",
        DISEASES[disease_id],
        disease_zone(disease_id)
    )
}

/// Report emitted when no disease is present.
pub const NO_FINDING_SENTENCE: &str = "no acute findings .";

/// One synthetic case: image, labels, and the template report naming exactly
/// the positive diseases.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub id: String,
    pub image: ImageTensor,
    pub labels: LabelVector,
    pub report: String,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-disease texture in [0, 1), fixed across cases.
fn blob_texture(disease_id: usize, y: usize, x: usize, c: usize) -> f64 {
    let h = splitmix64(
        (disease_id as u64) << 48 ^ (y as u64) << 32 ^ (x as u64) << 16 ^ c as u64 ^ 0xB10B,
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

pub fn report_for_labels(labels: &LabelVector) -> String {
    let positives = labels.positives();
    if positives.is_empty() {
        return NO_FINDING_SENTENCE.to_string();
    }
    positives
        .iter()
        .map(|&j| disease_sentence(j))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Generates a deterministic corpus. The image must be at least `GRID` by
/// `GRID` patches so every disease anchor fits.
pub fn generate_corpus(
    n_cases: usize,
    seed: u64,
    image_size: usize,
    patch_size: usize,
    channels: usize,
) -> Result<Vec<SyntheticCase>> {
    if n_cases == 0 {
        return Err(Error::InvalidInput("n_cases must be at least 1".into()));
    }
    if !image_size.is_multiple_of(patch_size) || image_size / patch_size != GRID {
        return Err(Error::InvalidInput(format!(
            "image size {image_size} with patch size {patch_size} is not a {GRID}x{GRID} grid"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(n_cases);
    for case_idx in 0..n_cases {
        let mut bits = [false; NUM_DISEASES];
        for slot in bits.iter_mut() {
            *slot = rng.random_range(0.0..1.0) < DISEASE_PREVALENCE;
        }
        let labels = LabelVector::new(bits);

        let mut pixels: Vec<f64> = (0..image_size * image_size * channels)
            .map(|_| rng.random_range(0.0..BACKGROUND_NOISE))
            .collect();

        for j in labels.positives() {
            let amplitude: f64 = rng.random_range(0.85..1.0);
            for patch in disease_patches(j) {
                let (pr, pc) = (patch / GRID, patch % GRID);
                for py in 0..patch_size {
                    for px in 0..patch_size {
                        let y = pr * patch_size + py;
                        let x = pc * patch_size + px;
                        for c in 0..channels {
                            let v = (0.55 + 0.4 * blob_texture(j, py, px, c)) * amplitude;
                            pixels[(y * image_size + x) * channels + c] = v.clamp(0.0, 1.0);
                        }
                    }
                }
            }
        }

        cases.push(SyntheticCase {
            id: format!("case{case_idx:04}"),
            image: ImageTensor::new(image_size, image_size, channels, pixels)?,
            labels,
            report: report_for_labels(&labels),
        });
    }
    Ok(cases)
}
