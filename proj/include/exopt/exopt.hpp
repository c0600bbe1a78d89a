#pragma once

#include "exopt/errors.hpp"
#include "exopt/model.hpp"
#include "exopt/dynamics.hpp"
#include "exopt/path_controller.hpp"
#include "exopt/gait.hpp"
#include "exopt/torque_estimator.hpp"
#include "exopt/surrogate_optimizer.hpp"
#include "exopt/pipeline.hpp"
#include "exopt/statistics.hpp"
#include "exopt/io.hpp"
#include "exopt/config.hpp"
#include "exopt/report.hpp"
