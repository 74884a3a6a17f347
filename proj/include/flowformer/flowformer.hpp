#pragma once

// Umbrella header for the whole library.

#include "flowformer/config.hpp"
#include "flowformer/encoders.hpp"
#include "flowformer/error.hpp"
#include "flowformer/experiment.hpp"
#include "flowformer/heads.hpp"
#include "flowformer/ingest.hpp"
#include "flowformer/metrics.hpp"
#include "flowformer/model.hpp"
#include "flowformer/nn/adam.hpp"
#include "flowformer/nn/checkpoint.hpp"
#include "flowformer/nn/layers.hpp"
#include "flowformer/nn/ops.hpp"
#include "flowformer/nn/random.hpp"
#include "flowformer/nn/tensor.hpp"
#include "flowformer/preprocess.hpp"
#include "flowformer/schema.hpp"
#include "flowformer/synthdata.hpp"
#include "flowformer/trainer.hpp"
#include "flowformer/transformer.hpp"
