#pragma once

#include "taco/agent.hpp"
#include "taco/analysis.hpp"
#include "taco/augment.hpp"
#include "taco/checkpoint.hpp"
#include "taco/config.hpp"
#include "taco/dataset.hpp"
#include "taco/env.hpp"
#include "taco/envs.hpp"
#include "taco/graph.hpp"
#include "taco/grid_mdp.hpp"
#include "taco/metrics.hpp"
#include "taco/model.hpp"
#include "taco/nn.hpp"
#include "taco/objectives.hpp"
#include "taco/plot.hpp"
#include "taco/point_mass.hpp"
#include "taco/random.hpp"
#include "taco/replay.hpp"
#include "taco/sweep.hpp"
#include "taco/tensor.hpp"
#include "taco/train.hpp"
