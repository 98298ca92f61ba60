//! Named test systems.
//!
//! | name            | g(x, m)                  | ḡ(x)                       |
//! |-----------------|--------------------------|----------------------------|
//! | `cos`           | `cos(m)`                 | `e^{-1/2}`                 |
//! | `cos_plus_sq`   | `cos(m)+m^2`             | `1 + e^{-1/2}` ≠ `g(·, 0) = 1` |
//! | `general`       | `tanh(x)*cos(m)+sin(x)`  | `e^{-1/2} tanh(x) + sin(x)` |
//! | `constant`      | `1.5`                    | `1.5`                      |

use crate::expr::CoeffExpr;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub g: &'static str,
    /// Closed form of `ḡ` where `g` does not depend on `x`.
    pub gbar: Option<f64>,
    /// `g(x, 0)`, the limit of the implicit-OU scheme, when constant.
    pub g_at_zero: Option<f64>,
}

impl CatalogEntry {
    pub fn expr(&self) -> CoeffExpr {
        CoeffExpr::parse(self.g).expect("catalog expressions parse")
    }
}

const E_HALF: f64 = 0.606_530_659_712_633_4;

pub const COS: CatalogEntry = CatalogEntry {
    name: "cos",
    g: "cos(m)",
    gbar: Some(E_HALF),
    g_at_zero: Some(1.0),
};

pub const COS_PLUS_SQ: CatalogEntry = CatalogEntry {
    name: "cos_plus_sq",
    g: "cos(m)+m^2",
    gbar: Some(1.0 + E_HALF),
    g_at_zero: Some(1.0),
};

pub const GENERAL: CatalogEntry = CatalogEntry {
    name: "general",
    g: "tanh(x)*cos(m)+sin(x)",
    gbar: None,
    g_at_zero: None,
};

pub const CONSTANT: CatalogEntry = CatalogEntry {
    name: "constant",
    g: "1.5",
    gbar: Some(1.5),
    g_at_zero: Some(1.5),
};

pub const ALL: [CatalogEntry; 4] = [COS, COS_PLUS_SQ, GENERAL, CONSTANT];

pub fn by_name(name: &str) -> Option<CatalogEntry> {
    ALL.into_iter().find(|e| e.name == name)
}
