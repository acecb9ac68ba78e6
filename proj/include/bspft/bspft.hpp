#pragma once

#include "bspft/apps.hpp"
#include "bspft/checkpoint_store.hpp"
#include "bspft/config.hpp"
#include "bspft/crc32.hpp"
#include "bspft/error.hpp"
#include "bspft/fault_plan.hpp"
#include "bspft/harness.hpp"
#include "bspft/heartbeat.hpp"
#include "bspft/metrics.hpp"
#include "bspft/policy.hpp"
#include "bspft/rng.hpp"
#include "bspft/state_registry.hpp"
#include "bspft/termination.hpp"
#include "bspft/udp.hpp"
#include "bspft/worker_group.hpp"
