#pragma once

#include "wda/balancing.hpp"
#include "wda/covariance.hpp"
#include "wda/data.hpp"
#include "wda/error.hpp"
#include "wda/eval.hpp"
#include "wda/projection.hpp"
#include "wda/traceratio.hpp"
#include "wda/version.hpp"
#include "wda/wda.hpp"
