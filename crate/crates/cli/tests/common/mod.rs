//! Helpers shared by the CLI integration tests and the acceptance suite.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use polylogit::simulate::{SimDesign, SimFactor};
use polylogit::{ModelSpec, ParameterLayout, SimulationSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn polylogit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polylogit"))
        .args(args)
        .env_remove("POLYLOGIT_OUT")
        .output()
        .expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn factor(name: &str, levels: &[&str]) -> SimFactor {
    SimFactor {
        name: name.into(),
        levels: levels.iter().map(|s| s.to_string()).collect(),
        reference: 0,
    }
}

/// Three blocks, two sexes, three enrichments and four behaviour categories,
/// observed over `weeks` weeks with `trials` events per (subject, week).
pub fn pig_design(subjects: usize, weeks: usize, trials: u64) -> SimDesign {
    SimDesign {
        factors: vec![
            factor("block", &["light", "medium", "heavy"]),
            factor("sex", &["male", "female"]),
            factor("enrichment", &["none", "chain", "rope"]),
        ],
        categories: ["aggressive", "calm", "feeding", "locomotion"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        reference_category: 0,
        subjects,
        weeks,
        trials,
    }
}

/// Fixed effects on `model`'s layout: coefficients of the `sex:enrichment`
/// block get magnitude in `interaction` with a random sign, all others are
/// uniform on `[-other, other]`.
pub fn truth(
    design: &SimDesign,
    model: &ModelSpec,
    other: f64,
    interaction: (f64, f64),
    seed: u64,
) -> Vec<f64> {
    let skeleton = design.skeleton().unwrap();
    let layout = ParameterLayout::build(model, &skeleton).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(99);
    let mut values: Vec<f64> = (0..layout.fixed_dim())
        .map(|_| rng.random_range(-other..=other))
        .collect();
    if let Some(block) = layout.block("sex:enrichment") {
        for p in 0..layout.free_categories().len() {
            for slot in 0..layout.n_slots() {
                for c in 0..block.width() {
                    let magnitude = rng.random_range(interaction.0..=interaction.1);
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    values[layout.group_start(p, slot) + block.offset + c] = sign * magnitude;
                }
            }
        }
    }
    values
}

pub fn spec(design: SimDesign, model: ModelSpec, fixed_effects: Vec<f64>, seed: u64) -> SimulationSpec {
    SimulationSpec {
        design,
        model,
        fixed_effects,
        raneff_variance: Some(0.25),
        seed,
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) {
    std::fs::write(path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
}

/// Every file in `dir` except wall-clock timings, by name.
pub fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}
