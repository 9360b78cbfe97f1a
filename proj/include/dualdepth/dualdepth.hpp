#pragma once

#include "dualdepth/attention.hpp"
#include "dualdepth/checkpoint.hpp"
#include "dualdepth/config.hpp"
#include "dualdepth/core/adam.hpp"
#include "dualdepth/core/attention_op.hpp"
#include "dualdepth/core/conv.hpp"
#include "dualdepth/core/ops.hpp"
#include "dualdepth/core/resample.hpp"
#include "dualdepth/core/rng.hpp"
#include "dualdepth/core/tape.hpp"
#include "dualdepth/core/tensor.hpp"
#include "dualdepth/evalkit.hpp"
#include "dualdepth/geometry.hpp"
#include "dualdepth/io.hpp"
#include "dualdepth/losses.hpp"
#include "dualdepth/networks.hpp"
#include "dualdepth/pipeline.hpp"
#include "dualdepth/synthdata.hpp"
