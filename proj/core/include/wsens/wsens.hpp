#pragma once

#include "wsens/bootstrap.hpp"
#include "wsens/errors.hpp"
#include "wsens/estimators.hpp"
#include "wsens/sensitivity.hpp"
#include "wsens/sim_harness.hpp"
#include "wsens/weight_builders.hpp"
#include "wsens/weighted_stats.hpp"
