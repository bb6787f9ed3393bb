#pragma once

#include "preg/analysis.hpp"
#include "preg/data.hpp"
#include "preg/graph.hpp"
#include "preg/matrix.hpp"
#include "preg/nn.hpp"
#include "preg/reg.hpp"
#include "preg/rng.hpp"
#include "preg/train.hpp"
