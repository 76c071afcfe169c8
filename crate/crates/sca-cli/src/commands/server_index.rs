//! Server-side indexing: load the released codebook, validate it, and
//! report what the server can see (sizes only; the codes it holds are
//! already ambiguated).

use std::path::Path;

use sca_core::Error as CoreError;

use crate::error::Result;
use crate::format::read_codes;

pub fn cmd_server_index(codebook: &Path) -> Result<()> {
    let (code_len, codes) = read_codes(codebook)?;
    if codes.is_empty() {
        return Err(CoreError::EmptyCodebook {
            context: "server index build",
        }
        .into());
    }
    let mean_nnz = codes.iter().map(|c| c.nnz()).sum::<usize>() as f64 / codes.len() as f64;
    println!(
        "server-index: M={} L={code_len} mean_nnz={mean_nnz:.4}",
        codes.len()
    );
    Ok(())
}
