//! Frame proximity (in progress).
