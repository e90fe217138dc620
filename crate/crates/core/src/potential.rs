//! Binding potential `V(r)` for the particle.

use crate::error::Result;
use crate::model::{Bindings, Expr, Program};
use crate::vec3::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    expr: Expr,
    program: Program,
    step: f64,
}

impl Potential {
    /// `step` is the central-difference step used for the force.
    pub fn new(expr: Expr, step: f64) -> Self {
        let program = Program::compile(&expr);
        Self { expr, program, step }
    }

    pub fn zero() -> Self {
        Self::new(Expr::Num(0.0), 1e-5)
    }

    pub fn harmonic(k: f64) -> Self {
        let e = crate::model::parse_expr(&format!("{:?} * r^2", 0.5 * k)).expect("valid literal");
        Self::new(e, 1e-5)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn value(&self, r: Vec3) -> Result<f64> {
        Ok(self.program.eval(&Bindings::at(r)).map_err(crate::model::ModelError::from)?)
    }

    pub fn gradient(&self, r: Vec3) -> Result<Vec3> {
        let mut g = [0.0; 3];
        for (a, ga) in g.iter_mut().enumerate() {
            let mut hi = r;
            let mut lo = r;
            hi[a] += self.step;
            lo[a] -= self.step;
            *ga = (self.value(hi)? - self.value(lo)?) / (2.0 * self.step);
        }
        Ok(g)
    }
}
