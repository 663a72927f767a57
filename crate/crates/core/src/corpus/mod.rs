//! Bundled example programs, a synthetic program generator, and a concrete
//! taint interpreter that serves as a dynamic oracle.

pub mod bench;
pub mod gen;
pub mod interp;

pub use gen::{generate, GenError, GenSpec, Generated};
pub use interp::{dyn_taint_run, DynError, DynTrace};

/// An example program with its configuration and expected certificate.
#[derive(Debug, Clone, Copy)]
pub struct Fixture {
    pub name: &'static str,
    pub ir: &'static str,
    pub config: &'static str,
    pub cert: &'static str,
}

macro_rules! fixture {
    ($name:literal) => {
        Fixture {
            name: $name,
            ir: include_str!(concat!("../../fixtures/", $name, ".ir")),
            config: include_str!(concat!("../../fixtures/", $name, ".cfgtaint")),
            cert: include_str!(concat!("../../fixtures/", $name, ".dcert")),
        }
    };
}

pub const FIXTURES: &[Fixture] = &[
    fixture!("leak_chain"),
    fixture!("implicit_flow"),
    fixture!("field_hierarchy"),
    fixture!("arrays"),
    fixture!("library_models"),
    fixture!("recursion"),
    fixture!("dispatch"),
    fixture!("loops"),
];

pub fn fixture(name: &str) -> Option<&'static Fixture> {
    FIXTURES.iter().find(|f| f.name == name)
}
