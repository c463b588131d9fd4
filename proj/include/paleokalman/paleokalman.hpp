#ifndef PALEOKALMAN_PALEOKALMAN_HPP
#define PALEOKALMAN_PALEOKALMAN_HPP

#include "paleokalman/butterworth.hpp"
#include "paleokalman/csv.hpp"
#include "paleokalman/errors.hpp"
#include "paleokalman/imputation.hpp"
#include "paleokalman/ingest.hpp"
#include "paleokalman/kalman.hpp"
#include "paleokalman/likelihood_fit.hpp"
#include "paleokalman/model_spec.hpp"
#include "paleokalman/optimize.hpp"
#include "paleokalman/simulation.hpp"
#include "paleokalman/timeseries.hpp"

namespace paleokalman {
inline constexpr const char* kVersion = "0.1.0";
}

#endif  // PALEOKALMAN_PALEOKALMAN_HPP
