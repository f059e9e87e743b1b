#![allow(dead_code)]

use asyncpd::experiments::{build_flow_problem, FlowRoutingConfig};
use asyncpd::problem::{Constraint, Coupling, LocalCost, ProblemBuilder, ProblemSpec};
use asyncpd::reg::{RegParams, StepSizes};
use asyncpd::sync::SaddleProblem;
use nalgebra::DMatrix;

pub fn flow_spec() -> ProblemSpec {
    build_flow_problem(&FlowRoutingConfig::default()).unwrap()
}

/// Four scalar agents on a path, quadratic costs, two affine constraints.
pub fn chain_spec() -> ProblemSpec {
    let q = DMatrix::from_row_slice(
        4,
        4,
        &[
            2.0, -0.5, 0.0, 0.0, //
            -0.5, 2.0, -0.5, 0.0, //
            0.0, -0.5, 2.0, -0.5, //
            0.0, 0.0, -0.5, 2.0,
        ],
    );
    ProblemBuilder::scalar(4)
        .local_cost(0, LocalCost::Quadratic { p: vec![1.0], q: vec![-3.0] })
        .local_cost(1, LocalCost::Quadratic { p: vec![0.5], q: vec![-2.0] })
        .local_cost(2, LocalCost::Quadratic { p: vec![1.5], q: vec![-4.0] })
        .local_cost(3, LocalCost::Linear(vec![-1.0]))
        .coupling(Coupling::Quadratic(q))
        .constraint(Constraint::Affine { a: vec![1.0, 1.0, 0.0, 0.0], b: 1.0 })
        .constraint(Constraint::Affine { a: vec![0.0, 0.0, 1.0, 1.0], b: 1.5 })
        .uniform_bounds(-2.0, 3.0)
        .slater_point(vec![0.0; 4])
        .couple(0, 1)
        .couple(1, 2)
        .couple(2, 3)
        .build()
        .unwrap()
}

pub fn saddle(spec: &ProblemSpec, alpha: f64, beta: f64) -> SaddleProblem {
    SaddleProblem::new(spec.clone(), RegParams::new(alpha, beta).unwrap()).unwrap()
}

pub fn steps(p: &SaddleProblem) -> StepSizes {
    StepSizes::recommended(&p.reg, &p.bounds, 0.9).unwrap()
}
