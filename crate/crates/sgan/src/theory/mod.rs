//! Numerical checks of the two theoretical claims behind the
//! segment-regression objective: the closed form of the interpolation-hit
//! probability under discretization, and the direction field a trained
//! critic's input gradient converges to.

mod density;
mod lemma;
mod theorem;

pub use density::{emd_1d, optimal_discriminator_values, tail_difference_field, Density1D};
pub use lemma::{
    hit_probability_constancy_check, hit_probability_limit, hit_probability_simulate,
    DiscretizationParams,
};
pub use theorem::{fit_scale, pearson, theorem1_field_check, Theorem1Report, THEOREM_GRID_POINTS};
