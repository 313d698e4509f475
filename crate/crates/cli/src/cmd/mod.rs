pub mod evaluate;
pub mod loss;
pub mod pose_error;
pub mod rectify;
pub mod simulate;
