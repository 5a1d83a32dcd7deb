//! Trains a small operator jointly on Nagumo and Burgers trajectories, then
//! reports one-step and rollout accuracy per task and saves a checkpoint.
//!
//! ```text
//! cargo run --release --example foundation_training [epochs]
//! ```

use ncwno::continual::{
    activate_task, evaluate_one_step, evaluate_rollout, save_checkpoint, train_foundation,
    Checkpoint, SemanticMemory, TrainConfig,
};
use ncwno::model::{ModelConfig, Ncwno};
use ncwno::pde::{build_dataset, recipe_on_grid, TaskDataset};

fn task(name: &str, label: usize) -> ncwno::Result<(TaskDataset, TaskDataset)> {
    let recipe = recipe_on_grid(name, Some(64))?;
    build_dataset(&recipe, 80, 100 + label as u64, label)?.split(10)
}

fn main() -> ncwno::Result<()> {
    let epochs = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(20);
    let (nagumo, nagumo_test) = task("nagumo_1d", 0)?;
    let (burgers, burgers_test) = task("burgers_1d", 1)?;

    let mut model = Ncwno::<f32>::new(ModelConfig::desk(64, 3), 0)?;
    println!("{} parameters", model.parameter_count());

    let cfg = TrainConfig {
        epochs,
        step_size: epochs.div_ceil(3).max(1),
        windows_per_sample: Some(5),
        ..TrainConfig::default()
    };
    let mut memory = SemanticMemory::new();
    train_foundation(
        &mut model,
        &[nagumo, burgers],
        &cfg,
        &mut memory,
        &mut |log| {
            println!(
                "epoch {:>3} task {} loss {:.4} lr {:.1e} ({} ms)",
                log.epoch + 1,
                log.task,
                log.loss,
                log.lr,
                log.wall_ms
            )
        },
    )?;

    for test in [&nagumo_test, &burgers_test] {
        activate_task(&mut model, &memory, test.label)?;
        let one = evaluate_one_step(&model, test, test.label)?;
        let roll = evaluate_rollout(&model, test, test.label)?;
        println!(
            "{}: one-step {:.4} [{:.4}, {:.4}], rollout over {} steps {:.4}",
            test.name,
            one.mean,
            one.low,
            one.high,
            roll.per_step.len(),
            roll.overall.mean
        );
    }

    let dir = std::env::temp_dir().join("ncwno-foundation-example");
    let tasks = [
        (0, nagumo_test.name.clone()),
        (1, burgers_test.name.clone()),
    ]
    .into();
    save_checkpoint(
        &dir,
        &Checkpoint {
            model,
            memory,
            tasks,
            seed: 0,
        },
    )?;
    println!("checkpoint -> {}", dir.display());
    Ok(())
}
