#pragma once

// Umbrella header. io.hpp / harness.hpp additionally need vendor/ on the
// include path (nlohmann/json).
#include "sphere4/types.hpp"
#include "sphere4/rng.hpp"
#include "sphere4/fft.hpp"
#include "sphere4/parallel.hpp"
#include "sphere4/model.hpp"
#include "sphere4/objective.hpp"
#include "sphere4/cdl.hpp"
#include "sphere4/optimize.hpp"
#include "sphere4/landscape.hpp"
#include "sphere4/recovery.hpp"
