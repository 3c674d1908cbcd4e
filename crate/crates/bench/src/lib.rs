//! Shared inputs for the benchmarks.

use fundus_eval::grading::records_for_system;
use fundus_eval::preprocess::RasterImage;
use fundus_eval::synth::{gen_binary_scores, gen_fundus_image, gen_population, BinormalSpec, FundusSpec};
use fundus_eval::synth::{PopulationSpec, Preset};
use fundus_eval::{GradingSystem, LabeledRecord};

/// Binormal labels and scores, positives first.
pub fn scored(n_pos: usize, n_neg: usize, seed: u64) -> (Vec<bool>, Vec<f64>) {
    gen_binary_scores(&BinormalSpec {
        n_pos,
        n_neg,
        target_auc: 0.95,
        seed,
    })
    .expect("valid spec")
}

/// RDR-labeled records of a Table 1 shaped population.
pub fn rdr_population(patients: usize, seed: u64) -> Vec<LabeledRecord> {
    let spec = PopulationSpec::preset(Preset::Table1Rdr, patients, seed);
    records_for_system(&gen_population(&spec).expect("valid preset"), GradingSystem::Rdr)
}

pub fn fundus(width: u32, height: u32) -> RasterImage {
    gen_fundus_image(&FundusSpec {
        width,
        height,
        radius: 0.4 * width.min(height) as f64,
        annotation: true,
        seed: 1,
    })
    .expect("disk fits")
}
