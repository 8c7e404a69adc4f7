//! C ABI for the tabletree pipeline. See `include/tabletree.h`.

#![allow(clippy::missing_safety_doc)]
