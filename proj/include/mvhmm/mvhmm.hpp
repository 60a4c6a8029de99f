#pragma once

#include <mvhmm/chain.hpp>
#include <mvhmm/error.hpp>
#include <mvhmm/filter.hpp>
#include <mvhmm/frontier.hpp>
#include <mvhmm/grid.hpp>
#include <mvhmm/io.hpp>
#include <mvhmm/model.hpp>
#include <mvhmm/model_io.hpp>
#include <mvhmm/policy_io.hpp>
#include <mvhmm/random.hpp>
#include <mvhmm/run_config.hpp>
#include <mvhmm/simulate.hpp>
#include <mvhmm/solver.hpp>
