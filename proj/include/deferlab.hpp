#pragma once

#include "deferlab/calib.hpp"
#include "deferlab/classification.hpp"
#include "deferlab/config.hpp"
#include "deferlab/data.hpp"
#include "deferlab/defer.hpp"
#include "deferlab/driving.hpp"
#include "deferlab/gradcheck.hpp"
#include "deferlab/human_model.hpp"
#include "deferlab/model_io.hpp"
#include "deferlab/nn.hpp"
#include "deferlab/parallel.hpp"
#include "deferlab/rng.hpp"
#include "deferlab/runner.hpp"
#include "deferlab/stats.hpp"
