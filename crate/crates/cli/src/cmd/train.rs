use std::io::Write;
use std::path::Path;

use holoquant_core::lutham::Model;
use holoquant_core::trainer::{init_network, mse, train_on};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::io::{save_model, write_with};
use crate::manifest::Manifest;

pub fn run(config_path: &Path, seed: Option<u64>, out_dir: &Path) -> CliResult<()> {
    let mut config = Config::load(config_path)?;
    if let Some(seed) = seed {
        config.override_seed(seed);
    }
    let task = config.task()?;
    let (train_set, test_set) = if config.task.test > 0 {
        let (a, b) = task.train_test(config.task.test).map_err(|e| CliError::data("task", e))?;
        (a, Some(b))
    } else {
        (task.dataset().map_err(|e| CliError::data("task", e))?, None)
    };
    let tc = config.train_config();
    let net = init_network(&config.network.widths, config.network.grid_size, tc.init_sigma, tc.seed)
        .map_err(|e| CliError::Config(format!("[network]: {e}")))?;
    let outcome = train_on(&net, &train_set, &tc).map_err(|e| CliError::data("training", e))?;

    let model_path = out_dir.join("model.skan");
    save_model(&Model::dense(&outcome.network), &model_path)?;
    let loss_path = write_with(&out_dir.join("loss.csv"), |w| {
        writeln!(w, "epoch,train_mse")?;
        for (epoch, loss) in outcome.loss_history.iter().enumerate() {
            writeln!(w, "{},{}", epoch + 1, loss)?;
        }
        Ok(())
    })?;

    let final_loss = outcome.loss_history.last().copied().unwrap_or(f64::NAN);
    println!("trained {:?} G = {} for {} epochs", config.network.widths, config.network.grid_size, tc.epochs);
    println!("train MSE: {final_loss}");
    if let Some(test) = &test_set {
        let test_mse = mse(&outcome.network, test).map_err(|e| CliError::data("evaluation", e))?;
        println!("test MSE: {test_mse}");
    }
    println!("wrote {}", model_path.display());

    let mut m = Manifest::new("train");
    m.input(config_path)
        .output(&model_path)
        .output(&loss_path)
        .seed("task", config.task.seed)
        .seed("train", config.train.seed)
        .seed("init", config.train.seed);
    m.config = Some(config);
    m.write(out_dir)?;
    Ok(())
}
