#pragma once

#include "cptlaw/dataset.hpp"
#include "cptlaw/errors.hpp"
#include "cptlaw/experiment.hpp"
#include "cptlaw/fit.hpp"
#include "cptlaw/laws.hpp"
#include "cptlaw/metrics.hpp"
#include "cptlaw/optimize.hpp"
#include "cptlaw/planner.hpp"
#include "cptlaw/rng.hpp"
#include "cptlaw/serialize.hpp"
#include "cptlaw/synth.hpp"
