use std::collections::BTreeMap;

use fundus_eval::grading::records_for_system;
use fundus_eval::split::{split, Set, SplitSpec};
use fundus_eval::synth::{gen_population, PopulationSpec, Preset, TABLE1_PATIENTS};
use fundus_eval::GradingSystem;

fn proportions(system: GradingSystem, preset: Preset, seed: u64) {
    let spec = PopulationSpec::preset(preset, TABLE1_PATIENTS, seed);
    let records = records_for_system(&gen_population(&spec).unwrap(), system);
    let out = split(&records, &SplitSpec::with_seed(seed)).unwrap();
    let t = &out.distribution;
    let total = t.total_images() as f64;
    assert_eq!(t.total_images(), records.len() as u64);
    for (set, want) in Set::ALL.iter().zip([0.7, 0.1, 0.2]) {
        let got = t.set(*set).images as f64 / total;
        assert!((got - want).abs() <= 0.01, "{system} {set}: {got}");
    }
    for c in 0..system.num_classes() {
        let props: Vec<f64> = Set::ALL
            .iter()
            .map(|&s| t.set(s).class_counts[c] as f64 / t.set(s).images as f64)
            .collect();
        let spread = props.iter().cloned().fold(f64::MIN, f64::max)
            - props.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= 0.015, "{system} class {c}: {props:?}");
    }
    let mut patient_set: BTreeMap<&str, Set> = BTreeMap::new();
    for r in &records {
        let s = out.sets[&r.record.image_id];
        assert_eq!(*patient_set.entry(&r.record.patient_id).or_insert(s), s);
    }
}

#[test]
fn rdr_population_split() {
    proportions(GradingSystem::Rdr, Preset::Table1Rdr, 42);
}

#[test]
fn pirc_population_split() {
    proportions(GradingSystem::Pirc, Preset::Table1Pirc, 7);
}

#[test]
fn pimec_population_split() {
    proportions(GradingSystem::Pimec, Preset::Table1Pimec, 11);
}

#[test]
fn qrdr_population_split() {
    proportions(GradingSystem::Qrdr, Preset::Table1Qrdr, 3);
}

#[test]
fn table_matches_generator_marginal() {
    let spec = PopulationSpec::preset(Preset::Table1Rdr, TABLE1_PATIENTS, 42);
    let records = records_for_system(&gen_population(&spec).unwrap(), GradingSystem::Rdr);
    let out = split(&records, &SplitSpec::with_seed(42)).unwrap();
    let positives = records.iter().filter(|r| r.label.index() == 1).count() as f64 / records.len() as f64;
    for s in Set::ALL {
        let sum = out.distribution.set(s);
        let p = sum.class_counts[1] as f64 / sum.images as f64;
        assert!((p - positives).abs() <= 0.015, "{s}: {p} vs {positives}");
    }
    let again = split(&records, &SplitSpec::with_seed(42)).unwrap();
    assert_eq!(again, out);
}
