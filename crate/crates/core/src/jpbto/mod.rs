//! Joint power, bandwidth and trajectory planning by alternating optimization.
//!
//! Each block is a max-min subproblem solved by a trust-region sequence of
//! local cone programs; the trajectory block linearizes the rate through the
//! channel gradient.

mod allocation;
mod ao;
mod channel;
mod config;
mod init;
mod slp;
mod trajectory;

pub use allocation::{solve_bandwidth, solve_power};
pub use ao::{run_ao, slot_gains, AoIteration, AoOutcome};
pub use channel::{channel_by_name, ChannelModel, ChannelSources, CkmChannel, CHANNEL_NAMES};
pub use config::AoConfig;
pub use init::{corner_endpoints, detour_path, initial_trajectories, path_length, random_endpoints, resample_by_arc_length, Endpoints};
pub use slp::{InnerTrace, Linearization};
pub use trajectory::{obstacle_lower_bound, solve_trajectory};
