#pragma once

// Umbrella header.

#include "chronode/autograd.hpp"
#include "chronode/checkpoint.hpp"
#include "chronode/common.hpp"
#include "chronode/data.hpp"
#include "chronode/neuralcode.hpp"
#include "chronode/nn.hpp"
#include "chronode/odesolve.hpp"
#include "chronode/recurrent.hpp"
#include "chronode/tasks.hpp"
#include "chronode/tensor.hpp"
