//! Foundation training on Nagumo and Burgers, then transfer to heat by
//! retraining only the gating networks. Old tasks are recalled from their
//! stored gates and reproduce their earlier predictions bit for bit.
//!
//! ```text
//! cargo run --release --example combinatorial_transfer [epochs]
//! ```

use ncwno::continual::{
    activate_task, combinatorial_transfer, evaluate_one_step, train_foundation, SemanticMemory,
    TrainConfig,
};
use ncwno::model::{ModelConfig, Ncwno};
use ncwno::pde::{build_dataset, recipe_on_grid, TaskDataset};
use ncwno::Tensor;

fn task(name: &str, label: usize, samples: usize) -> ncwno::Result<(TaskDataset, TaskDataset)> {
    let recipe = recipe_on_grid(name, Some(64))?;
    build_dataset(&recipe, samples, 200 + label as u64, label)?.split(10)
}

fn first_inputs(data: &TaskDataset, n: usize) -> ncwno::Result<Tensor<f32>> {
    let per_sample: usize = data.inputs.shape()[1..].iter().product();
    let mut shape = data.inputs.shape().to_vec();
    shape[0] = n;
    Tensor::new(shape, data.inputs.data()[..n * per_sample].to_vec())
}

fn main() -> ncwno::Result<()> {
    let epochs = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(15);
    let (nagumo, nagumo_test) = task("nagumo_1d", 0, 60)?;
    let (burgers, burgers_test) = task("burgers_1d", 1, 60)?;
    let (heat, heat_test) = task("heat_1d", 2, 40)?;

    let mut model = Ncwno::<f32>::new(ModelConfig::desk(64, 3), 1)?;
    let mut memory = SemanticMemory::new();
    let cfg = TrainConfig {
        epochs,
        windows_per_sample: Some(5),
        ..TrainConfig::default()
    };
    train_foundation(
        &mut model,
        &[nagumo, burgers],
        &cfg,
        &mut memory,
        &mut |_| {},
    )?;

    let old = [&nagumo_test, &burgers_test];
    let mut before = Vec::new();
    for t in old {
        activate_task(&mut model, &memory, t.label)?;
        before.push(model.predict(&first_inputs(t, 4)?, &[t.label; 4])?);
        let acc = evaluate_one_step(&model, t, t.label)?;
        println!("{} after foundation: one-step {:.4}", t.name, acc.mean);
    }

    let transfer_cfg = TrainConfig {
        epochs,
        windows_per_sample: Some(5),
        ..TrainConfig::transfer()
    };
    let total = model.parameter_count();
    let (snapshot, logs) = combinatorial_transfer(
        &mut model,
        &mut memory,
        &heat,
        &transfer_cfg,
        false,
        &mut |_| {},
    )?;
    let last = logs.last().expect("at least one epoch");
    println!(
        "heat transfer: {} of {total} parameters trained, final loss {:.4}, {} ms/epoch",
        snapshot.parameter_count(),
        last.loss,
        last.wall_ms
    );
    let acc = evaluate_one_step(&model, &heat_test, heat_test.label)?;
    println!("heat: one-step {:.4}", acc.mean);

    for (t, earlier) in old.iter().zip(&before) {
        activate_task(&mut model, &memory, t.label)?;
        let now = model.predict(&first_inputs(t, 4)?, &[t.label; 4])?;
        println!(
            "{} recalled from memory: predictions identical = {}",
            t.name,
            now.bytes_le() == earlier.bytes_le()
        );
    }
    println!("labels in memory: {:?}", memory.labels());
    Ok(())
}
