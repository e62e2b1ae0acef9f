//! Image retrieval (in progress).
