#pragma once

#include "cip/cli.hpp"
#include "cip/encoder.hpp"
#include "cip/eval.hpp"
#include "cip/geometry.hpp"
#include "cip/kinematics.hpp"
#include "cip/labeling.hpp"
#include "cip/model.hpp"
#include "cip/nn.hpp"
#include "cip/planner.hpp"
#include "cip/scenario_gen.hpp"
#include "cip/scenario_io.hpp"
#include "cip/scene.hpp"
#include "cip/training.hpp"
#include "cip/util.hpp"
