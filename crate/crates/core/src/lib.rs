//! Age-of-information models for slotted gossip networks.
//!
//! A network of nodes shares timestamped readings over a broadcast medium:
//! each slot, every node picks one item from its memory (its own fresh
//! reading, or a stored copy of someone else's) and broadcasts it to its
//! out-neighbours. The age of node `i`'s information about node `j` is the
//! number of slots since that information was sensed at `j`.
//!
//! The crate provides three complementary routes to the stationary age
//! distributions and keeps them strictly separate so they can be checked
//! against each other:
//!
//! * [`sim`]: Monte Carlo simulation of the slot dynamics on arbitrary
//!   topologies, with reproducible seeding and replication-based error bars.
//! * exact solvers: closed forms and recursions for line and tree paths
//!   ([`line_tree`]), two-receiver and many-receiver stars ([`star`]), the
//!   four-node ring ([`ring`]), and a brute-force truncated-chain solver
//!   ([`truncated`]) used as an independent oracle.
//! * large-ring asymptotics ([`ring`]): Gaussian approximations of the age
//!   seen across a big ring and the broadcast budget that minimises it.

pub mod error;
pub mod joint;
pub mod line_tree;
pub mod model;
mod normal;
pub mod ring;
pub mod sim;
pub mod star;
pub mod truncated;

pub use error::{Error, Result};
pub use joint::JointPmf;
pub use model::{
    apply_slot, sample_slot, shortest_path_floor, step, theta, theta_grid, theta_of_node,
    node_of_theta, AgeState, ChannelModel, NodeId, PolicyTable, RingPolicy, SlotOutcome, Theta,
    Topology, TopologyKind, PROB_SUM_TOL,
};
pub use sim::{run_simulation, AgeSamples, MomentEstimate, SimConfig, TrackedPairs, SEED_RULE};
pub use star::LambdaTable;
