#pragma once

// Umbrella header for the BJMD toolkit: multi-source matrix decomposition
// with a shared basis, simplex-constrained per-source coefficients and
// per-source Gaussian noise, fit either by block-coordinate MAP or by
// mean-field stochastic variational inference.

#include "bjmd/advi.hpp"
#include "bjmd/csv.hpp"
#include "bjmd/datagen.hpp"
#include "bjmd/evaluation.hpp"
#include "bjmd/experiments.hpp"
#include "bjmd/manifest.hpp"
#include "bjmd/map_solver.hpp"
#include "bjmd/objective.hpp"
#include "bjmd/parallel.hpp"
#include "bjmd/rng.hpp"
#include "bjmd/simplex_qp.hpp"
#include "bjmd/transforms.hpp"
#include "bjmd/types.hpp"
