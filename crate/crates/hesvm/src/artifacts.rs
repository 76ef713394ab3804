//! Key and ciphertext files in the binary container format, plus the JSON
//! manifest describing an encrypted split.

use std::path::{Path, PathBuf};

use hesvm_core::ckks::{Ciphertext, CkksContext, KeySet, PublicKey, RelinKey, RotationKeys, SecretKey};
use hesvm_core::inference::Layout;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::f17;
use crate::model_file::{load_json, save_json};

pub const PUBLIC_KEY: &str = "public.key";
pub const SECRET_KEY: &str = "secret.key";
pub const RELIN_KEY: &str = "relin.key";
pub const ROTATION_KEY: &str = "rotation.key";
pub const KEY_INFO: &str = "params.json";
pub const MANIFEST: &str = "manifest.json";

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_bytes(path: &Path, bytes: &[u8]) -> AppResult<()> {
    std::fs::write(path, bytes).map_err(AppError::io(path.display().to_string()))
}

fn read_bytes(path: &Path, hint: &str) -> AppResult<Vec<u8>> {
    if !path.exists() {
        return Err(AppError::missing(path, hint));
    }
    std::fs::read(path).map_err(AppError::io(path.display().to_string()))
}

/// Human-readable record of the parameters the keys were made for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyInfo {
    pub ring_dim: usize,
    pub moduli: Vec<u64>,
    pub special_moduli: Vec<u64>,
    #[serde(with = "f17")]
    pub delta: f64,
    pub secret_weight: usize,
    pub security_label: String,
    pub digest: String,
    pub rotation_steps: Vec<i64>,
}

const KEYGEN_HINT: &str = "run `hesvm keygen` first";

pub fn write_keys(dir: &Path, ctx: &CkksContext, keys: &KeySet) -> AppResult<()> {
    std::fs::create_dir_all(dir).map_err(AppError::io(dir.display().to_string()))?;
    write_bytes(&dir.join(PUBLIC_KEY), &keys.public.to_bytes())?;
    write_bytes(&dir.join(SECRET_KEY), &keys.secret.to_bytes())?;
    write_bytes(&dir.join(RELIN_KEY), &keys.relin.to_bytes())?;
    write_bytes(&dir.join(ROTATION_KEY), &keys.rotation.to_bytes())?;
    let p = ctx.params();
    let info = KeyInfo {
        ring_dim: p.ring().n(),
        moduli: p.ring().moduli().to_vec(),
        special_moduli: p.ring().special_moduli().to_vec(),
        delta: p.delta(),
        secret_weight: p.secret_weight(),
        security_label: p.security_label().to_owned(),
        digest: hex(ctx.digest()),
        rotation_steps: keys.rotation.steps().collect(),
    };
    save_json(&dir.join(KEY_INFO), &info)
}

/// Checks the recorded digest first so a parameter change is reported as
/// a mismatch rather than a parse failure.
fn check_info(dir: &Path, ctx: &CkksContext) -> AppResult<()> {
    let info: KeyInfo = load_json(&dir.join(KEY_INFO), KEYGEN_HINT)?;
    if info.digest != hex(ctx.digest()) {
        return Err(AppError::Mismatch(format!(
            "keys in {} were made for parameters {} (n = {}), current parameters are {}",
            dir.display(),
            info.digest,
            info.ring_dim,
            hex(ctx.digest())
        )));
    }
    Ok(())
}

pub fn read_public(dir: &Path, ctx: &CkksContext) -> AppResult<PublicKey> {
    check_info(dir, ctx)?;
    Ok(PublicKey::from_bytes(ctx, &read_bytes(&dir.join(PUBLIC_KEY), KEYGEN_HINT)?)?)
}

pub fn read_secret(dir: &Path, ctx: &CkksContext) -> AppResult<SecretKey> {
    check_info(dir, ctx)?;
    Ok(SecretKey::from_bytes(ctx, &read_bytes(&dir.join(SECRET_KEY), KEYGEN_HINT)?)?)
}

/// Evaluation keys used by the server.
pub fn read_eval_keys(dir: &Path, ctx: &CkksContext) -> AppResult<(RelinKey, RotationKeys)> {
    check_info(dir, ctx)?;
    let rlk = RelinKey::from_bytes(ctx, &read_bytes(&dir.join(RELIN_KEY), KEYGEN_HINT)?)?;
    let rot = RotationKeys::from_bytes(ctx, &read_bytes(&dir.join(ROTATION_KEY), KEYGEN_HINT)?)?;
    Ok((rlk, rot))
}

pub fn write_ct(path: &Path, ctx: &CkksContext, ct: &Ciphertext) -> AppResult<()> {
    write_bytes(path, &ct.to_bytes(ctx))
}

pub fn read_ct(path: &Path, ctx: &CkksContext, hint: &str) -> AppResult<Ciphertext> {
    Ok(Ciphertext::from_bytes(ctx, &read_bytes(path, hint)?)?)
}

/// Describes the ciphertext files of one encrypted split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchManifest {
    pub split: String,
    pub count: usize,
    pub n_features: usize,
    pub block: usize,
    pub replicated: bool,
    pub digest: String,
    /// Client-side encryption time per sample.
    pub enc_ms: Vec<f64>,
}

impl BatchManifest {
    pub fn file(dir: &Path, i: usize) -> PathBuf {
        dir.join(format!("{i:06}.ct"))
    }

    pub fn load(dir: &Path) -> AppResult<Self> {
        load_json(&dir.join(MANIFEST), "run `hesvm encrypt` first")
    }

    pub fn save(&self, dir: &Path) -> AppResult<()> {
        save_json(&dir.join(MANIFEST), self)
    }

    pub fn check(&self, ctx: &CkksContext, layout: &Layout) -> AppResult<()> {
        if self.digest != hex(ctx.digest()) {
            return Err(AppError::Mismatch(format!(
                "ciphertexts of split {} were made under other parameters",
                self.split
            )));
        }
        if self.n_features != layout.n_features || self.block != layout.block || self.replicated != layout.replicated {
            return Err(AppError::Mismatch(format!(
                "ciphertext layout (n_f {}, block {}, replicated {}) differs from the model layout (n_f {}, block {}, replicated {})",
                self.n_features, self.block, self.replicated, layout.n_features, layout.block, layout.replicated
            )));
        }
        if self.enc_ms.len() != self.count {
            return Err(AppError::Other("manifest timing list does not match the sample count".into()));
        }
        Ok(())
    }
}
