#pragma once

#include "saeme/config.hpp"
#include "saeme/core.hpp"
#include "saeme/csv.hpp"
#include "saeme/errors.hpp"
#include "saeme/estimation.hpp"
#include "saeme/ingest.hpp"
#include "saeme/parallel.hpp"
#include "saeme/predictors.hpp"
#include "saeme/rng.hpp"
#include "saeme/simulation.hpp"
#include "saeme/stats.hpp"
#include "saeme/svg.hpp"
#include "saeme/uncertainty.hpp"
