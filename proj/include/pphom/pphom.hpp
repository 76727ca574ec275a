#pragma once

#include "pphom/cell_solver.hpp"
#include "pphom/coefficients.hpp"
#include "pphom/config.hpp"
#include "pphom/csv.hpp"
#include "pphom/error.hpp"
#include "pphom/grid.hpp"
#include "pphom/harness.hpp"
#include "pphom/macro_solver.hpp"
#include "pphom/matrix_exponential.hpp"
#include "pphom/micro_solver.hpp"
#include "pphom/parallel.hpp"
#include "pphom/sparse.hpp"
#include "pphom/types.hpp"
#include "pphom/verification.hpp"
