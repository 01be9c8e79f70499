#pragma once

namespace styleid {

/// Keeps freed activation buffers in the heap instead of returning them to
/// the OS after every op; page-fault churn otherwise costs ~25% of a
/// training step. Call once at program start. No-op off glibc.
void tune_allocator();

}  // namespace styleid
