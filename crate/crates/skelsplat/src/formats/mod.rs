//! File formats. Layouts are documented in `docs/formats.md`.

pub mod binary;
pub mod history;
pub mod image;
pub mod ply;
pub mod text;
