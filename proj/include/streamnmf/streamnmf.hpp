#pragma once

// Streaming maximum-likelihood estimation for Poisson-count matrix
// factorisation: the observed count vectors y_t are driven by hidden
// nonnegative states x_t through intensities B x_t, and B (plus the state
// dynamics) is estimated by batch EM, exact online EM on enumerable state
// spaces, or particle (SMC) online EM.

#include "streamnmf/alignment.hpp"
#include "streamnmf/basis_selection.hpp"
#include "streamnmf/common.hpp"
#include "streamnmf/dataset.hpp"
#include "streamnmf/em_engine.hpp"
#include "streamnmf/estimation.hpp"
#include "streamnmf/exact_inference.hpp"
#include "streamnmf/observation_model.hpp"
#include "streamnmf/relaxed_basis.hpp"
#include "streamnmf/smc_inference.hpp"
#include "streamnmf/state_process.hpp"
#include "streamnmf/trace_io.hpp"
