#include <benchmark/benchmark.h>

// The packaged benchmark_main archive carries LTO objects from another compiler build.
BENCHMARK_MAIN();
