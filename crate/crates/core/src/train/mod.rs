//! Optimization, evaluation and the encoder ablation.

mod ablation;
mod adadelta;
mod eval;
mod trainer;

pub use ablation::{run_ablation, AblationConfig, AblationReport, AblationRow, Split};
pub use adadelta::{adadelta_update, Accumulators, Adadelta, DEFAULT_EPSILON, DEFAULT_RHO};
pub use eval::{default_max_steps, evaluate, predict, EvalReport, Prediction, Tally, REPORT_HEADER};
pub use trainer::{train, train_step, TrainConfig, TrainReport, TrainSet, BEST_CHECKPOINT, LAST_CHECKPOINT};
