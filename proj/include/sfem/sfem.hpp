#pragma once

// Umbrella header for the surrogate finite element method library.

#include "sfem/analysis.hpp"
#include "sfem/coefficients.hpp"
#include "sfem/config.hpp"
#include "sfem/core.hpp"
#include "sfem/grid_function.hpp"
#include "sfem/level.hpp"
#include "sfem/mesh.hpp"
#include "sfem/multigrid.hpp"
#include "sfem/operators.hpp"
#include "sfem/problems.hpp"
#include "sfem/quadrature.hpp"
#include "sfem/stencil.hpp"
#include "sfem/surrogate.hpp"
