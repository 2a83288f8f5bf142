#include <benchmark/benchmark.h>

// The distro's benchmark_main archive ships LTO-only objects, so the entry
// point lives here instead.
BENCHMARK_MAIN();
