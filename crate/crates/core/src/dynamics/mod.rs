//! Brute-force propagation and gate-level simulation.

mod gate;
mod integrate;
mod sparse;

pub use gate::{
    choose_n_max, compare_models, compare_models_with, correction_gate, default_phase_guard, excited_population_bound,
    ideal_gate, model_generator, run_gate_simulation, run_gate_simulation_with,
    standard_initial_state, wrap_phase, GateReport, LogicalGate, ModelDeviation, ModelLevel,
    SimulationOptions, DEFAULT_N_MAX, DISPLACEMENT_LIMIT, FOCK_TAIL_TARGET,
};
pub use integrate::{
    propagate_lindblad, propagate_lindblad_with, propagate_state, propagate_state_with,
    state_subspace, DensityTrajectory, Method, PropagationConfig, ReducedDensity,
    StateTrajectory,
};
pub use sparse::{CompiledGenerator, SparseMatrix, Subspace};
