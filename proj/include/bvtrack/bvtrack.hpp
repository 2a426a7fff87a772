#pragma once

#include "bvtrack/error.hpp"
#include "bvtrack/quadrature.hpp"
#include "bvtrack/mesh1d.hpp"
#include "bvtrack/tensor.hpp"
#include "bvtrack/system.hpp"
#include "bvtrack/krylov.hpp"
#include "bvtrack/fast_diag.hpp"
#include "bvtrack/multigrid.hpp"
#include "bvtrack/schur.hpp"
#include "bvtrack/ocp.hpp"
#include "bvtrack/appendix.hpp"
#include "bvtrack/table.hpp"
