//! Transfer error on heat as a function of the number of wavelet experts,
//! averaged over a few seeds.
//!
//! ```text
//! cargo run --release --example expert_ablation [epochs] [experts...]
//! ```

use ncwno::continual::{
    combinatorial_transfer, evaluate_rollout, train_foundation, SemanticMemory, TrainConfig,
};
use ncwno::model::{ModelConfig, Ncwno};
use ncwno::pde::{build_dataset, recipe_on_grid, TaskDataset};

fn task(name: &str, label: usize, samples: usize) -> ncwno::Result<(TaskDataset, TaskDataset)> {
    let recipe = recipe_on_grid(name, Some(64))?;
    build_dataset(&recipe, samples, 300 + label as u64, label)?.split(10)
}

fn main() -> ncwno::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse::<usize>().ok());
    let epochs = args.next().unwrap_or(10);
    let mut counts: Vec<usize> = args.collect();
    if counts.is_empty() {
        counts = vec![2, 4, 6];
    }
    let foundation = [task("nagumo_1d", 0, 50)?.0, task("burgers_1d", 1, 50)?.0];
    let (heat, heat_test) = task("heat_1d", 2, 40)?;

    for experts in counts {
        let mut errors = Vec::new();
        for seed in 0..3u64 {
            let mut model = Ncwno::<f32>::new(ModelConfig::desk(64, experts), seed)?;
            let mut memory = SemanticMemory::new();
            let cfg = TrainConfig {
                epochs,
                seed,
                windows_per_sample: Some(3),
                ..TrainConfig::default()
            };
            train_foundation(&mut model, &foundation, &cfg, &mut memory, &mut |_| {})?;
            let cfg = TrainConfig {
                epochs,
                seed,
                windows_per_sample: Some(3),
                ..TrainConfig::transfer()
            };
            combinatorial_transfer(&mut model, &mut memory, &heat, &cfg, false, &mut |_| {})?;
            let report = evaluate_rollout(&model, &heat_test, heat_test.label)?;
            errors.push(1.0 - report.overall.mean);
        }
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        println!("{experts:>2} experts: rollout rel L2 {mean:.4}  per seed {errors:.4?}");
    }
    Ok(())
}
