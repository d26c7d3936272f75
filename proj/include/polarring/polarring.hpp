#pragma once

// Convenience header pulling in the whole library.

#include "polarring/centerline.hpp"
#include "polarring/contour.hpp"
#include "polarring/geometry.hpp"
#include "polarring/json_util.hpp"
#include "polarring/metrics.hpp"
#include "polarring/neuralnet.hpp"
#include "polarring/phantom.hpp"
#include "polarring/pipeline.hpp"
#include "polarring/polar.hpp"
#include "polarring/rng.hpp"
#include "polarring/segmenter.hpp"
#include "polarring/volume.hpp"
