//! Supervised action classifier with uncertainty-gated execution.

mod classifier;
mod gating;

pub use classifier::{labeled_episodes, train_bootstrap, train_classifier, Classifier, ClassifierConfig, HiddenTrace, LabeledEpisode};
pub use gating::{
    best_row, decision_traces, gated_act, mean_and_uncertainty, predict_with_uncertainty, replay_gated, threshold_sweep,
    DecisionTrace, GatedClassifierPolicy, SweepRow, UncertaintyMethod, TAU_GRID,
};

#[cfg(test)]
mod tests;
