#pragma once

#include "combnet/analysis/flops.hpp"
#include "combnet/analysis/grad_check.hpp"
#include "combnet/analysis/receptive_field.hpp"
#include "combnet/analysis/sparse.hpp"
#include "combnet/checkpoint.hpp"
#include "combnet/config.hpp"
#include "combnet/error.hpp"
#include "combnet/masking.hpp"
#include "combnet/network.hpp"
#include "combnet/ops/batchnorm.hpp"
#include "combnet/ops/conv.hpp"
#include "combnet/ops/layers.hpp"
#include "combnet/tensor.hpp"
#include "combnet/training/augment.hpp"
#include "combnet/training/dataset.hpp"
#include "combnet/training/sgd.hpp"
#include "combnet/training/trainer.hpp"
#include "combnet/verify.hpp"
