#pragma once

#include "zoomrl/agent.hpp"
#include "zoomrl/baselines.hpp"
#include "zoomrl/environments.hpp"
#include "zoomrl/errors.hpp"
#include "zoomrl/harness.hpp"
#include "zoomrl/metric_space.hpp"
#include "zoomrl/oracle.hpp"
#include "zoomrl/partition.hpp"
