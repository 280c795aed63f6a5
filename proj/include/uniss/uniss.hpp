// Umbrella include for the whole library.
#pragma once

#include "uniss/codec.hpp"
#include "uniss/common.hpp"
#include "uniss/corpus.hpp"
#include "uniss/eval.hpp"
#include "uniss/io.hpp"
#include "uniss/metrics.hpp"
#include "uniss/model.hpp"
#include "uniss/optim.hpp"
#include "uniss/packing.hpp"
#include "uniss/pipeline.hpp"
#include "uniss/protocol.hpp"
#include "uniss/sampler.hpp"
#include "uniss/tasks.hpp"
#include "uniss/train.hpp"
#include "uniss/vocab.hpp"
