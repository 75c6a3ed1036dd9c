//! Targets, advantages, the policy-gradient objective and critic training.

mod advantage;
mod episode;
mod targets;
mod train;

pub use advantage::{centralv_advantage, coma_advantage, counterfactual_baseline};
pub use episode::{Batch, Episode};
pub use targets::{n_step_return, td_lambda_targets};
pub use train::{
    actor_loss_graph, compute_advantages, critic_entries, critic_loss_graph, critic_update_minibatch,
    critic_update_wholebatch, policy_gradient_update, prepare_critic_targets, target_sync, CriticSchedule, CriticState,
    CriticTargets, LearnConfig, Learner, StepEntries, TargetNetState, TdConfig, TrainStats,
};
