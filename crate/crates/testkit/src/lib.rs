//! Test-only oracles and synthetic scenes.
//!
//! Everything here is deliberately independent of the rasterizer in `mvinpaint`:
//! visibility is answered by brute-force ray casting against every triangle.

pub mod oracle;
pub mod raycast;
pub mod scenes;

pub use raycast::{moller_trumbore, raycast_image, raycast_nearest, Hit};
