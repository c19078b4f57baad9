//! Objective, optimizer, training loop and person-specific fine-tuning.

mod adam;
mod config;
mod losses;
mod trainer;

pub use adam::{adam_step, adam_update, AdamState, BETA1, BETA2, EPSILON, STATE_MAGIC};
pub use config::TrainConfig;
pub use losses::{l_simple, l_total, l_vel, loss_graph, LossVars};
pub use trainer::{
    checkpoint_path, draw_batch, finetune_personal, load_training_clips, read_loss_csv, select_checkpoint, state_path,
    train_iterations, train_loop, train_step, write_loss_csv, LossRecord, StepStats, TrainItem, TrainRun,
};
