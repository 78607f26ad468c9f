#pragma once

// Region covariance descriptors, their Euclidean parameterizations, SPD
// similarity measures, and discriminative sparse coding on top of them.

#include "covparam/bench.hpp"
#include "covparam/common.hpp"
#include "covparam/descriptor.hpp"
#include "covparam/image.hpp"
#include "covparam/matrix_csv.hpp"
#include "covparam/metrics.hpp"
#include "covparam/parameterization.hpp"
#include "covparam/pipeline.hpp"
#include "covparam/rng.hpp"
#include "covparam/sparse.hpp"
