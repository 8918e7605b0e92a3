#pragma once

namespace nlvae {

/// Keeps freed tensor buffers in the process heap instead of returning them to
/// the OS. Training allocates and frees many multi-megabyte buffers per step,
/// and re-faulting fresh pages dominates elementwise ops on some hosts.
/// Call once at program start; a no-op outside glibc.
void tune_allocator();

}  // namespace nlvae
