//! Builds a small trajectory dataset from a named recipe, saves it, loads it
//! back and checks that regeneration from the stored seeds is exact.
//!
//! ```text
//! cargo run --release --example generate_dataset [recipe] [samples] [grid]
//! ```

use ncwno::pde::{build_dataset, load_dataset, recipe_on_grid, save_dataset};

fn main() -> ncwno::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "burgers_1d".into());
    let samples: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(16);
    let grid: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(64);

    let recipe = recipe_on_grid(&name, Some(grid))?;
    println!("{name}: {:?}", recipe.pde.equation);
    println!(
        "  grid {:?}, dt {:e}, {} frames",
        recipe.pde.grid, recipe.pde.dt, recipe.pde.frames
    );

    let data = build_dataset(&recipe, samples, 42, 0)?;
    println!(
        "  inputs {:?} (window as channels), outputs {:?}, coordinates {:?}",
        data.inputs.shape(),
        data.outputs.shape(),
        data.grid.shape()
    );

    let dir = std::env::temp_dir().join(format!("ncwno-{name}-{}", std::process::id()));
    save_dataset(&data, &dir)?;
    let loaded = load_dataset(&dir)?;
    println!(
        "  saved to {} and reloaded: identical = {}",
        dir.display(),
        loaded == data
    );

    let again = build_dataset(&recipe, samples, 42, 0)?;
    println!("  regenerated from seed 42: identical = {}", again == data);

    let (train, test) = data.split(samples / 4)?;
    println!("  split: {} train, {} test", train.len(), test.len());
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
