#pragma once

#include "mixopt/coerm.hpp"
#include "mixopt/core.hpp"
#include "mixopt/domains.hpp"
#include "mixopt/error.hpp"
#include "mixopt/experiments.hpp"
#include "mixopt/format.hpp"
#include "mixopt/minimax.hpp"
#include "mixopt/online.hpp"
#include "mixopt/rng.hpp"
#include "mixopt/wstar_net.hpp"
