#pragma once

// Hot loops get an AVX2 clone next to the baseline build, picked at load
// time. FMA stays off so both clones round identically.
#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define FSDET_HOT __attribute__((target_clones("avx2", "default")))
#else
#define FSDET_HOT
#endif
