#pragma once

// Umbrella header: the full implicit-feedback ranking stack.

#include "feedrank/checkpoint.hpp"
#include "feedrank/config.hpp"
#include "feedrank/context.hpp"
#include "feedrank/encoder.hpp"
#include "feedrank/errors.hpp"
#include "feedrank/feedback.hpp"
#include "feedrank/gradcheck.hpp"
#include "feedrank/model.hpp"
#include "feedrank/multitask.hpp"
#include "feedrank/rng.hpp"
#include "feedrank/serving.hpp"
#include "feedrank/simulator.hpp"
#include "feedrank/tensor.hpp"
#include "feedrank/training.hpp"
