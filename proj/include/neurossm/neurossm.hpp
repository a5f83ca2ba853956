#pragma once

#include "neurossm/bench.hpp"
#include "neurossm/block.hpp"
#include "neurossm/checkpoint.hpp"
#include "neurossm/common.hpp"
#include "neurossm/data.hpp"
#include "neurossm/metrics.hpp"
#include "neurossm/model.hpp"
#include "neurossm/report.hpp"
#include "neurossm/rng.hpp"
#include "neurossm/ssm.hpp"
#include "neurossm/tensor.hpp"
#include "neurossm/train.hpp"
