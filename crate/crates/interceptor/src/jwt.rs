use jsonwebtoken::{Algorithm, DecodingKey, Validation};
use serde::Deserialize;

#[derive(Deserialize)]
struct Subject {
    sub: Option<String>,
}

/// Reads the `sub` claim of a bearer token without checking its signature
/// or expiry; the proxy has no key and only records who submitted.
pub fn unverified_subject(header: Option<&str>) -> Option<String> {
    let token = header?.trim().strip_prefix("Bearer ")?.trim();
    let mut v = Validation::new(Algorithm::HS256);
    v.insecure_disable_signature_validation();
    v.validate_exp = false;
    v.required_spec_claims.clear();
    jsonwebtoken::decode::<Subject>(token, &DecodingKey::from_secret(b""), &v)
        .ok()?
        .claims
        .sub
}

#[cfg(test)]
mod tests {
    use super::*;
    use jsonwebtoken::{EncodingKey, Header};

    #[test]
    fn subject_without_key() {
        let claims = serde_json::json!({"sub": "alice", "exp": 1, "iss": "x"});
        let t = jsonwebtoken::encode(&Header::default(), &claims, &EncodingKey::from_secret(b"unknown")).unwrap();
        assert_eq!(unverified_subject(Some(&format!("Bearer {t}"))).as_deref(), Some("alice"));
        assert_eq!(unverified_subject(Some("Bearer junk")), None);
        assert_eq!(unverified_subject(None), None);
    }
}
