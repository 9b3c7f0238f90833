//! The cave-crossing submersible case study.

mod scenario;

pub use scenario::{
    build_problem, cost_matrix, displayed_cost_matrix, displayed_energy_offset, physical_problem, SubmersibleParams,
    SubmersibleScenario, SubmersibleState, Variant, CEILING, FLOOR, THRUST,
};

mod reports;

pub use reports::{
    physical_controls, run_comparison, run_contacts, write_comparison, write_contacts, write_figure_data, BenchOptions,
    CandidateReport, ComparisonReport, ContactReport, ContactState, LqrReport,
};
