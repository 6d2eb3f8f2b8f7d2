//! Slow, loop-by-loop reference transcriptions of the mars objectives and
//! decision rules. Nothing here calls into the computational code of
//! `mars-core`; only its plain data types are shared. Used from tests.

pub mod cars;
pub mod fd;
pub mod sensor;
pub mod tensor;

pub use cars::{
    cars_loss_naive, exhaustive_group_choice, naive_channel_influence, naive_satisfaction,
};
pub use fd::{finite_diff_gradient, sensor_fd_gradient};
pub use sensor::{naive_terms, naive_total_loss, NaiveTerms};
pub use tensor::{dense_of, frob_naive, mode_product_naive, tucker_naive};
