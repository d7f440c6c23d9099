#pragma once

#include "bfmm/data.hpp"
#include "bfmm/errors.hpp"
#include "bfmm/evaluation.hpp"
#include "bfmm/fit.hpp"
#include "bfmm/gibbs.hpp"
#include "bfmm/kernels.hpp"
#include "bfmm/model.hpp"
#include "bfmm/relabel.hpp"
#include "bfmm/rng.hpp"
#include "bfmm/simgen.hpp"
#include "bfmm/summary.hpp"
#include "bfmm/trace_io.hpp"
