use std::collections::BTreeMap;

use serde::Serialize;

/// Pass/fail record of one numeric hypothesis check: a measured quantity
/// compared against a bound (`quantity <= bound`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub name: String,
    pub passed: bool,
    pub quantity: f64,
    pub bound: f64,
    pub margin: f64,
    /// Named intermediate constants, in key order.
    pub constants: BTreeMap<String, f64>,
    pub witness: Option<String>,
}

impl Certificate {
    pub fn upper_bound(name: &str, quantity: f64, bound: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: quantity <= bound,
            quantity,
            bound,
            margin: bound - quantity,
            constants: BTreeMap::new(),
            witness: None,
        }
    }

    pub fn with_constant(mut self, key: &str, value: f64) -> Self {
        self.constants.insert(key.to_string(), value);
        self
    }

    pub fn with_witness(mut self, witness: impl Into<String>) -> Self {
        self.witness = Some(witness.into());
        self
    }

    pub fn failed(mut self, witness: impl Into<String>) -> Self {
        self.passed = false;
        self.witness = Some(witness.into());
        self
    }
}

/// Certificates of one problem with the constants they were computed from.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CertificateBundle {
    pub passed: bool,
    pub certificates: Vec<Certificate>,
    pub constants: BTreeMap<String, f64>,
}

impl CertificateBundle {
    pub fn push(&mut self, cert: Certificate) {
        self.certificates.push(cert);
        self.passed = self.certificates.iter().all(|c| c.passed);
    }

    pub fn set_constant(&mut self, key: &str, value: f64) {
        self.constants.insert(key.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.name == name)
    }

    pub fn first_failure(&self) -> Option<&Certificate> {
        self.certificates.iter().find(|c| !c.passed)
    }
}
