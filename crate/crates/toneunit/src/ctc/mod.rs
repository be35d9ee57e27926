//! Log-domain CTC loss with analytic gradient, greedy decoding, and
//! edit-distance scoring, plus an exponential brute-force oracle for small
//! instances.

mod alphabet;
mod loss;
mod metrics;

pub use alphabet::{PhoneAlphabet, BLANK, BLANK_LABEL};
pub use loss::{
    brute_force_ctc, collapse, ctc_greedy_decode, ctc_loss, merge_repeats, remove_blanks,
    CtcInstance,
};
pub use metrics::{edit_distance, per};
