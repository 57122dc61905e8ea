#pragma once

#include "qp.hpp"
#include "ode_solver.hpp"
#include "active_set.hpp"
#include "lti_model.hpp"
#include "mpc_builder.hpp"
#include "period_adaptation.hpp"
#include "closed_loop.hpp"
#include "metrics.hpp"
#include "io.hpp"
#include "benchmark.hpp"
