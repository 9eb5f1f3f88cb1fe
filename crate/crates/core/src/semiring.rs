//! The binomial semiring of order `ν`.
//!
//! An element is the tuple `(D_α f)_{α ≤ ν}` of mixed partial derivatives at
//! zero of some smooth function `f`. Addition is componentwise and
//! multiplication is the generalized Leibniz rule
//!
//! ```text
//! (f ⊗ g)_α = Σ_{β ≤ α} (α choose β) f_β g_{α−β}
//! ```
//!
//! At `ν = (1,)` this is the first-order entropy semiring, at `ν = (1,1)` the
//! second-order one.

use std::collections::HashMap;
use std::sync::Arc;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::multiindex::{power, Downset, MultiIndex};

#[derive(Clone)]
pub struct BinomialTuple {
    downset: Arc<Downset>,
    coeffs: Vec<f64>,
}

impl BinomialTuple {
    pub fn zero(order: &MultiIndex) -> Self {
        Self::zero_in(&Arc::new(Downset::new(order.clone())))
    }

    pub fn one(order: &MultiIndex) -> Self {
        Self::one_in(&Arc::new(Downset::new(order.clone())))
    }

    pub fn zero_in(downset: &Arc<Downset>) -> Self {
        BinomialTuple {
            downset: Arc::clone(downset),
            coeffs: vec![0.0; downset.len()],
        }
    }

    pub fn one_in(downset: &Arc<Downset>) -> Self {
        let mut t = Self::zero_in(downset);
        t.coeffs[0] = 1.0;
        t
    }

    /// Builds a tuple from coefficients given in graded downset order.
    pub fn from_coeffs(downset: &Arc<Downset>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != downset.len() {
            return Err(Error::DimensionMismatch {
                expected: downset.len(),
                found: coeffs.len(),
            });
        }
        Ok(BinomialTuple {
            downset: Arc::clone(downset),
            coeffs,
        })
    }

    /// Image of a single rule with probability `p` and features `y`:
    /// component `α` is `p · y^α`.
    pub fn lift(p: f64, y: &[f64], order: &MultiIndex) -> Result<Self> {
        Self::lift_in(&Arc::new(Downset::new(order.clone())), p, y)
    }

    pub fn lift_in(downset: &Arc<Downset>, p: f64, y: &[f64]) -> Result<Self> {
        let coeffs = downset
            .elems()
            .iter()
            .map(|a| power(y, a).map(|v| p * v))
            .collect::<Result<Vec<_>>>()?;
        Ok(BinomialTuple {
            downset: Arc::clone(downset),
            coeffs,
        })
    }

    pub fn order(&self) -> &MultiIndex {
        self.downset.order()
    }

    pub fn downset(&self) -> &Arc<Downset> {
        &self.downset
    }

    /// Coefficients in graded downset order.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn get(&self, alpha: &MultiIndex) -> Option<f64> {
        self.downset.position(alpha).map(|p| self.coeffs[p])
    }

    pub fn set(&mut self, alpha: &MultiIndex, value: f64) -> Result<()> {
        let pos = self
            .downset
            .position(alpha)
            .ok_or_else(|| Error::NotBelow {
                lower: alpha.clone(),
                upper: self.order().clone(),
            })?;
        self.coeffs[pos] = value;
        Ok(())
    }

    /// Iterates `(α, value)` pairs in graded order.
    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.downset.elems().iter().zip(self.coeffs.iter().copied())
    }

    fn check_order(&self, other: &BinomialTuple) -> Result<()> {
        if Arc::ptr_eq(&self.downset, &other.downset) || self.order() == other.order() {
            Ok(())
        } else {
            Err(Error::OrderMismatch {
                left: self.order().clone(),
                right: other.order().clone(),
            })
        }
    }

    pub fn add(&self, other: &BinomialTuple) -> Result<BinomialTuple> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &BinomialTuple) -> Result<()> {
        self.check_order(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
        Ok(())
    }

    pub fn mul(&self, other: &BinomialTuple) -> Result<BinomialTuple> {
        self.check_order(other)?;
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for &(alpha, beta, rest, c) in self.downset.product_plan() {
            coeffs[alpha] += c * self.coeffs[beta] * other.coeffs[rest];
        }
        Ok(BinomialTuple {
            downset: Arc::clone(&self.downset),
            coeffs,
        })
    }

    /// `r`-fold product; `pow(0)` is the multiplicative identity.
    pub fn pow(&self, r: u32) -> BinomialTuple {
        let mut acc = BinomialTuple::one_in(&self.downset);
        for _ in 0..r {
            acc = acc.mul(self).expect("same downset");
        }
        acc
    }

    /// Multiplies every component by `s`.
    pub fn scale(&self, s: f64) -> BinomialTuple {
        BinomialTuple {
            downset: Arc::clone(&self.downset),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }
}

impl PartialEq for BinomialTuple {
    fn eq(&self, other: &Self) -> bool {
        self.order() == other.order() && self.coeffs == other.coeffs
    }
}

impl std::fmt::Debug for BinomialTuple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map().entries(self.iter()).finish()
    }
}

impl Serialize for BinomialTuple {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        struct Coeffs<'a>(&'a BinomialTuple);
        impl Serialize for Coeffs<'_> {
            fn serialize<S: Serializer>(
                &self,
                serializer: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                let mut map = serializer.serialize_map(Some(self.0.coeffs.len()))?;
                for (alpha, v) in self.0.iter() {
                    map.serialize_entry(&alpha.to_string(), &v)?;
                }
                map.end()
            }
        }
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("order", self.order())?;
        map.serialize_entry("coeffs", &Coeffs(self))?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for BinomialTuple {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            order: MultiIndex,
            coeffs: HashMap<String, f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let downset = Arc::new(Downset::new(raw.order));
        let mut t = BinomialTuple::zero_in(&downset);
        if raw.coeffs.len() != downset.len() {
            return Err(D::Error::custom(format!(
                "expected {} coefficients, found {}",
                downset.len(),
                raw.coeffs.len()
            )));
        }
        for (key, value) in raw.coeffs {
            let alpha: MultiIndex = key.parse().map_err(D::Error::custom)?;
            t.set(&alpha, value).map_err(D::Error::custom)?;
        }
        Ok(t)
    }
}
