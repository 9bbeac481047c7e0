#pragma once

#include "hpvcal/errors.hpp"
#include "hpvcal/strata.hpp"
#include "hpvcal/mixing.hpp"
#include "hpvcal/ode.hpp"
#include "hpvcal/distributions.hpp"
#include "hpvcal/observation.hpp"
#include "hpvcal/amcmc.hpp"
#include "hpvcal/calibration.hpp"
#include "hpvcal/vaccination.hpp"
#include "hpvcal/io.hpp"
#include "hpvcal/config.hpp"
#include "hpvcal/pipeline.hpp"

namespace hpvcal {
inline constexpr const char* kVersion = "0.1.0";
}
