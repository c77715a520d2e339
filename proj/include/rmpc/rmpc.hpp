#pragma once

#include "rmpc/anytime.hpp"
#include "rmpc/checkpoint.hpp"
#include "rmpc/config.hpp"
#include "rmpc/dynamics.hpp"
#include "rmpc/eval.hpp"
#include "rmpc/experiment.hpp"
#include "rmpc/optimizer.hpp"
#include "rmpc/oracle.hpp"
#include "rmpc/oracle_cache.hpp"
#include "rmpc/policy.hpp"
#include "rmpc/report.hpp"
#include "rmpc/rollout.hpp"
#include "rmpc/sampler.hpp"
#include "rmpc/train.hpp"
#include "rmpc/utility.hpp"
