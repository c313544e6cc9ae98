#pragma once

#include "derivfair/adam.hpp"
#include "derivfair/autodiff.hpp"
#include "derivfair/checkpoint.hpp"
#include "derivfair/dataset.hpp"
#include "derivfair/errors.hpp"
#include "derivfair/eval.hpp"
#include "derivfair/experiments.hpp"
#include "derivfair/fairness.hpp"
#include "derivfair/mlp.hpp"
#include "derivfair/parallel.hpp"
#include "derivfair/rng.hpp"
#include "derivfair/scm.hpp"
#include "derivfair/train.hpp"
