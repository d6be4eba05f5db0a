#pragma once

// Convenience header for the whole library.

#include "balm/error.hpp"
#include "balm/linalg.hpp"
#include "balm/prox.hpp"
#include "balm/problem.hpp"
#include "balm/multiplier.hpp"
#include "balm/solvers.hpp"
#include "balm/diagnostics.hpp"
#include "balm/bench.hpp"
