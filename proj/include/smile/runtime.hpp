#pragma once

namespace smile {

/// Process-wide tuning for the training loops: keeps large tensor buffers on
/// the heap instead of fresh mmaps (every call would otherwise page-fault its
/// buffers in again) and flushes float denormals to zero. Call once from main.
void configure_process();

}  // namespace smile
