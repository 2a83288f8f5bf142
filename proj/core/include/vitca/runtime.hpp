#pragma once

namespace vitca {

// Keeps freed tensor buffers in the heap instead of returning them to the OS
// (glibc only; a no-op elsewhere). Training allocates and frees many
// multi-megabyte buffers per step and otherwise spends much of its time in
// page faults. Call once at program start.
void configure_allocator();

}  // namespace vitca
