//! Prime-order group abstraction used by the re-encryption scheme.
//!
//! Two backends sit behind [`GroupParams`]:
//!
//! * [`GroupParams::production()`] — secp256k1 via `k256`. Scalars are 32-byte
//!   big-endian integers below the curve order, points are 33-byte SEC1
//!   compressed encodings, and the identity point is encoded as 33 zero bytes
//!   (SEC1 has no compressed identity form).
//! * [`GroupParams::insecure_mock(q)`] — the additive group of integers mod a
//!   small prime `q`, generator 1. Everything is a 4-byte big-endian integer.
//!   This backend exists so tests can enumerate the whole group; it offers no
//!   security whatsoever, which is why the constructor says so.
//!
//! All encodings are canonical: decode rejects any byte string that is not
//! the unique encoding of a group element, so encode/decode is a bijection
//! between valid values and their images.

use k256::elliptic_curve::group::Group;
use k256::elliptic_curve::ops::Reduce;
use k256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use k256::elliptic_curve::{Field, PrimeField};
use k256::{AffinePoint, EncodedPoint, ProjectivePoint, U256};
use rand::{CryptoRng, Rng, RngCore};
use thiserror::Error;

/// Width of a serialized secp256k1 scalar.
pub const PROD_SCALAR_BYTES: usize = 32;
/// Width of a serialized secp256k1 point (SEC1 compressed).
pub const PROD_POINT_BYTES: usize = 33;
/// Width of serialized mock-group scalars and points.
pub const MOCK_BYTES: usize = 4;

const TAG_PRODUCTION: u8 = 0x01;
const TAG_MOCK: u8 = 0x02;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("mock modulus {0} is not an odd prime")]
    NotPrime(u32),
    #[error("mock modulus {0} exceeds the supported range")]
    ModulusTooLarge(u32),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
    #[error("value is not reduced mod the group order")]
    NotCanonical,
    #[error("bytes do not encode a curve point")]
    InvalidPoint,
    #[error("the identity point is not allowed here")]
    IdentityForbidden,
    #[error("unknown tag {0:#04x}")]
    BadTag(u8),
    #[error("input truncated")]
    Truncated,
}

/// A group element. Values from different [`GroupParams`] must not be mixed;
/// the arithmetic methods panic on mismatched backends since that is always a
/// programming error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupPoint {
    Prod(ProjectivePoint),
    Mock(u32),
}

/// A scalar in `[0, q)` for the group order `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scalar {
    Prod(k256::Scalar),
    Mock(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupParams {
    kind: Kind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Production,
    // Invariant: q is an odd prime that fits comfortably in u32 arithmetic.
    Mock(u32),
}

fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while (d as u64) * (d as u64) <= n as u64 {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl GroupParams {
    /// secp256k1 with the standard generator.
    pub fn production() -> Self {
        GroupParams { kind: Kind::Production }
    }

    /// Additive integers mod `q` with generator 1. INSECURE: discrete logs in
    /// this group are a division, so it must only ever back tests.
    pub fn insecure_mock(q: u32) -> Result<Self, GroupError> {
        if q > 0x7fff_ffff {
            return Err(GroupError::ModulusTooLarge(q));
        }
        if q == 2 || !is_prime(q) {
            return Err(GroupError::NotPrime(q));
        }
        Ok(GroupParams { kind: Kind::Mock(q) })
    }

    pub fn is_mock(&self) -> bool {
        matches!(self.kind, Kind::Mock(_))
    }

    /// Order of the mock group, if this is one.
    pub fn mock_order(&self) -> Option<u32> {
        match self.kind {
            Kind::Production => None,
            Kind::Mock(q) => Some(q),
        }
    }

    pub fn scalar_bytes(&self) -> usize {
        match self.kind {
            Kind::Production => PROD_SCALAR_BYTES,
            Kind::Mock(_) => MOCK_BYTES,
        }
    }

    pub fn point_bytes(&self) -> usize {
        match self.kind {
            Kind::Production => PROD_POINT_BYTES,
            Kind::Mock(_) => MOCK_BYTES,
        }
    }

    pub fn generator(&self) -> GroupPoint {
        match self.kind {
            Kind::Production => GroupPoint::Prod(ProjectivePoint::GENERATOR),
            Kind::Mock(_) => GroupPoint::Mock(1),
        }
    }

    pub fn identity(&self) -> GroupPoint {
        match self.kind {
            Kind::Production => GroupPoint::Prod(ProjectivePoint::IDENTITY),
            Kind::Mock(_) => GroupPoint::Mock(0),
        }
    }

    pub fn scalar_zero(&self) -> Scalar {
        match self.kind {
            Kind::Production => Scalar::Prod(k256::Scalar::ZERO),
            Kind::Mock(_) => Scalar::Mock(0),
        }
    }

    pub fn scalar_one(&self) -> Scalar {
        match self.kind {
            Kind::Production => Scalar::Prod(k256::Scalar::ONE),
            Kind::Mock(_) => Scalar::Mock(1),
        }
    }

    /// Uniform nonzero scalar.
    pub fn random_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        match self.kind {
            Kind::Production => loop {
                let s = k256::Scalar::random(&mut *rng);
                if !bool::from(k256::elliptic_curve::ff::Field::is_zero(&s)) {
                    return Scalar::Prod(s);
                }
            },
            Kind::Mock(q) => Scalar::Mock(rng.gen_range(1..q)),
        }
    }

    /// Reduce a small integer into the scalar field. Handy for tests and for
    /// the mock group; not part of any wire format.
    pub fn scalar_from_u64(&self, v: u64) -> Scalar {
        match self.kind {
            Kind::Production => Scalar::Prod(k256::Scalar::from(v)),
            Kind::Mock(q) => Scalar::Mock((v % q as u64) as u32),
        }
    }

    /// Interpret a 32-byte big-endian integer reduced mod the group order.
    pub fn scalar_from_wide_bytes(&self, bytes: &[u8; 32]) -> Scalar {
        match self.kind {
            Kind::Production => {
                Scalar::Prod(<k256::Scalar as Reduce<U256>>::reduce_bytes(bytes.into()))
            }
            Kind::Mock(q) => {
                let q = q as u64;
                let mut acc = 0u64;
                for &b in bytes {
                    acc = (acc * 256 + b as u64) % q;
                }
                Scalar::Mock(acc as u32)
            }
        }
    }

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (self.kind, a, b) {
            (Kind::Production, Scalar::Prod(a), Scalar::Prod(b)) => Scalar::Prod(a + b),
            (Kind::Mock(q), Scalar::Mock(a), Scalar::Mock(b)) => {
                Scalar::Mock(((*a as u64 + *b as u64) % q as u64) as u32)
            }
            _ => panic!("scalar_add: mixed group backends"),
        }
    }

    pub fn scalar_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (self.kind, a, b) {
            (Kind::Production, Scalar::Prod(a), Scalar::Prod(b)) => Scalar::Prod(a - b),
            (Kind::Mock(q), Scalar::Mock(a), Scalar::Mock(b)) => {
                let q = q as u64;
                Scalar::Mock(((*a as u64 + q - *b as u64) % q) as u32)
            }
            _ => panic!("scalar_sub: mixed group backends"),
        }
    }

    pub fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (self.kind, a, b) {
            (Kind::Production, Scalar::Prod(a), Scalar::Prod(b)) => Scalar::Prod(a * b),
            (Kind::Mock(q), Scalar::Mock(a), Scalar::Mock(b)) => {
                Scalar::Mock(((*a as u64 * *b as u64) % q as u64) as u32)
            }
            _ => panic!("scalar_mul: mixed group backends"),
        }
    }

    pub fn scalar_neg(&self, a: &Scalar) -> Scalar {
        match (self.kind, a) {
            (Kind::Production, Scalar::Prod(a)) => Scalar::Prod(-a),
            (Kind::Mock(q), Scalar::Mock(a)) => Scalar::Mock(((q - a) % q) as u32),
            _ => panic!("scalar_neg: mixed group backends"),
        }
    }

    pub fn scalar_is_zero(&self, a: &Scalar) -> bool {
        match a {
            Scalar::Prod(s) => bool::from(k256::elliptic_curve::ff::Field::is_zero(s)),
            Scalar::Mock(v) => *v == 0,
        }
    }

    pub fn point_add(&self, a: &GroupPoint, b: &GroupPoint) -> GroupPoint {
        match (self.kind, a, b) {
            (Kind::Production, GroupPoint::Prod(a), GroupPoint::Prod(b)) => {
                GroupPoint::Prod(a + b)
            }
            (Kind::Mock(q), GroupPoint::Mock(a), GroupPoint::Mock(b)) => {
                GroupPoint::Mock(((*a as u64 + *b as u64) % q as u64) as u32)
            }
            _ => panic!("point_add: mixed group backends"),
        }
    }

    pub fn point_neg(&self, a: &GroupPoint) -> GroupPoint {
        match (self.kind, a) {
            (Kind::Production, GroupPoint::Prod(a)) => GroupPoint::Prod(-a),
            (Kind::Mock(q), GroupPoint::Mock(a)) => GroupPoint::Mock(((q - a) % q) as u32),
            _ => panic!("point_neg: mixed group backends"),
        }
    }

    pub fn point_mul(&self, k: &Scalar, p: &GroupPoint) -> GroupPoint {
        match (self.kind, k, p) {
            (Kind::Production, Scalar::Prod(k), GroupPoint::Prod(p)) => GroupPoint::Prod(p * k),
            (Kind::Mock(q), Scalar::Mock(k), GroupPoint::Mock(p)) => {
                GroupPoint::Mock(((*k as u64 * *p as u64) % q as u64) as u32)
            }
            _ => panic!("point_mul: mixed group backends"),
        }
    }

    /// `k * G` for the fixed generator.
    pub fn mul_generator(&self, k: &Scalar) -> GroupPoint {
        self.point_mul(k, &self.generator())
    }

    pub fn is_identity(&self, p: &GroupPoint) -> bool {
        match p {
            GroupPoint::Prod(p) => bool::from(p.is_identity()),
            GroupPoint::Mock(v) => *v == 0,
        }
    }

    pub fn encode_scalar(&self, s: &Scalar) -> Vec<u8> {
        match s {
            Scalar::Prod(s) => s.to_bytes().to_vec(),
            Scalar::Mock(v) => v.to_be_bytes().to_vec(),
        }
    }

    pub fn decode_scalar(&self, bytes: &[u8]) -> Result<Scalar, DecodeError> {
        match self.kind {
            Kind::Production => {
                if bytes.len() != PROD_SCALAR_BYTES {
                    return Err(DecodeError::Length { expected: PROD_SCALAR_BYTES, got: bytes.len() });
                }
                let arr: [u8; PROD_SCALAR_BYTES] = bytes.try_into().unwrap();
                let s = k256::Scalar::from_repr(arr.into());
                Option::<k256::Scalar>::from(s)
                    .map(Scalar::Prod)
                    .ok_or(DecodeError::NotCanonical)
            }
            Kind::Mock(q) => {
                if bytes.len() != MOCK_BYTES {
                    return Err(DecodeError::Length { expected: MOCK_BYTES, got: bytes.len() });
                }
                let v = u32::from_be_bytes(bytes.try_into().unwrap());
                if v >= q {
                    return Err(DecodeError::NotCanonical);
                }
                Ok(Scalar::Mock(v))
            }
        }
    }

    pub fn encode_point(&self, p: &GroupPoint) -> Vec<u8> {
        match p {
            GroupPoint::Prod(p) => {
                if bool::from(p.is_identity()) {
                    vec![0u8; PROD_POINT_BYTES]
                } else {
                    p.to_affine().to_encoded_point(true).as_bytes().to_vec()
                }
            }
            GroupPoint::Mock(v) => v.to_be_bytes().to_vec(),
        }
    }

    pub fn decode_point(&self, bytes: &[u8]) -> Result<GroupPoint, DecodeError> {
        match self.kind {
            Kind::Production => {
                if bytes.len() != PROD_POINT_BYTES {
                    return Err(DecodeError::Length { expected: PROD_POINT_BYTES, got: bytes.len() });
                }
                if bytes.iter().all(|&b| b == 0) {
                    return Ok(GroupPoint::Prod(ProjectivePoint::IDENTITY));
                }
                if bytes[0] != 0x02 && bytes[0] != 0x03 {
                    return Err(DecodeError::InvalidPoint);
                }
                let enc = EncodedPoint::from_bytes(bytes).map_err(|_| DecodeError::InvalidPoint)?;
                let affine = Option::<AffinePoint>::from(AffinePoint::from_encoded_point(&enc))
                    .ok_or(DecodeError::InvalidPoint)?;
                Ok(GroupPoint::Prod(ProjectivePoint::from(affine)))
            }
            Kind::Mock(q) => {
                if bytes.len() != MOCK_BYTES {
                    return Err(DecodeError::Length { expected: MOCK_BYTES, got: bytes.len() });
                }
                let v = u32::from_be_bytes(bytes.try_into().unwrap());
                if v >= q {
                    return Err(DecodeError::NotCanonical);
                }
                Ok(GroupPoint::Mock(v))
            }
        }
    }

    /// Tagged self-description, prefixed to serialized key material so files
    /// from different groups cannot be confused.
    pub fn to_bytes(&self) -> Vec<u8> {
        match self.kind {
            Kind::Production => vec![TAG_PRODUCTION],
            Kind::Mock(q) => {
                let mut out = vec![TAG_MOCK];
                out.extend_from_slice(&q.to_be_bytes());
                out
            }
        }
    }

    /// Parse a tagged description, returning the params and bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), DecodeError> {
        match bytes.first() {
            None => Err(DecodeError::Truncated),
            Some(&TAG_PRODUCTION) => Ok((GroupParams::production(), 1)),
            Some(&TAG_MOCK) => {
                if bytes.len() < 5 {
                    return Err(DecodeError::Truncated);
                }
                let q = u32::from_be_bytes(bytes[1..5].try_into().unwrap());
                let params = GroupParams::insecure_mock(q)
                    .map_err(|_| DecodeError::NotCanonical)?;
                Ok((params, 5))
            }
            Some(&t) => Err(DecodeError::BadTag(t)),
        }
    }

    /// Stable short fingerprint of a point, for logs and debugging only.
    pub fn point_fingerprint(&self, p: &GroupPoint) -> String {
        let enc = self.encode_point(p);
        hex::encode(&enc[..enc.len().min(8)])
    }
}
