//! Command-line front end for the sparse-coding ambiguation library:
//! owner-side artifact preparation, server indexing, user queries, and the
//! CSV-producing evaluation studies. Exposed as a library so integration
//! tests can exercise config parsing and the binary file formats directly.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
