#pragma once

#include "fsdet/nn.hpp"
#include "fsdet/ran.hpp"

namespace testing {

/// RAN config used with trained_head().
fsdet::RanConfig trained_config();

/// Small head trained once per process on synthetic pairs from a broad
/// category pool (ids below 1e6); tests probe it on unseen categories.
const fsdet::MlpHead& trained_head();

}  // namespace testing
